use std::path::Path;
use std::process::Command;

fn ris_sim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ris-sim"))
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("small.toml");
    std::fs::write(
        &path,
        r#"
snr_grid_db = [0.0, 20.0]
t_r = 120
spacings = ["half"]

[dims]
m = 8
n = 8
l = 8
streams = 2

[badvamp]
max_iters = 60
restarts = 2
"#,
    )
    .unwrap();
    path
}

#[test]
fn csv_is_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mut csvs = Vec::new();
    for workers in ["1", "3"] {
        let out = dir.path().join(format!("w{workers}"));
        let status = ris_sim()
            .args(["nmse-snr", "--trials", "3", "--seed", "7", "--workers", workers])
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .env("RUST_LOG", "error")
            .status()
            .unwrap();
        assert!(status.success());
        csvs.push(std::fs::read(out.join("nmse-snr.csv")).unwrap());
        let meta: String = std::fs::read_to_string(out.join("nmse-snr.json")).unwrap();
        assert!(meta.contains("\"base_seed\""), "{meta}");
    }
    assert_eq!(csvs[0], csvs[1]);
    let text = String::from_utf8(csvs[0].clone()).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("experiment,sweep_name,sweep_value,scheme,metric,mean,stderr,trials,seed")
    );
    // Two SNR points, three NMSE metrics each.
    assert_eq!(lines.count(), 6);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "no_such_field = 3\n").unwrap();
    let out = ris_sim()
        .args(["nmse-kappa", "--trials", "1"])
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_field"));
}

#[test]
fn validate_subcommand_passes() {
    let out = ris_sim().arg("validate").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("ok ")).count(), 5, "{text}");
}
