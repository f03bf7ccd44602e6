//! Dense complex linear algebra shared by the estimators.
//!
//! Everything works on `nalgebra` dynamic matrices of `Complex64`. Singular
//! values are always returned in decreasing order.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// One draw from CN(0, 1).
pub fn crandn<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Matrix with i.i.d. CN(0, variance) entries, filled column by column.
pub fn crandn_matrix<R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    variance: f64,
) -> CMat {
    let scale = variance.sqrt();
    CMat::from_fn(rows, cols, |_, _| crandn(rng) * scale)
}

#[derive(Clone, Copy)]
enum Op {
    None,
    Adjoint,
}

fn gemm(a: &CMat, opa: Op, b: &CMat, opb: Op) -> CMat {
    let conj_a;
    let conj_b;
    let (ap, m, k, rsa, csa) = match opa {
        Op::None => (a, a.nrows(), a.ncols(), 1, a.nrows() as isize),
        Op::Adjoint => {
            conj_a = a.conjugate();
            (&conj_a, a.ncols(), a.nrows(), a.nrows() as isize, 1)
        }
    };
    let (bp, kb, n, rsb, csb) = match opb {
        Op::None => (b, b.nrows(), b.ncols(), 1, b.nrows() as isize),
        Op::Adjoint => {
            conj_b = b.conjugate();
            (&conj_b, b.ncols(), b.nrows(), b.nrows() as isize, 1)
        }
    };
    assert_eq!(k, kb, "inner dimensions of a product must agree");
    let mut out = CMat::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return out;
    }
    // SAFETY: Complex64 is repr(C) with the same layout as [f64; 2], all
    // three buffers are column-major with the strides given, and `out` does
    // not alias the inputs.
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            m,
            k,
            n,
            [1.0, 0.0],
            ap.as_ptr() as *const [f64; 2],
            rsa,
            csa,
            bp.as_ptr() as *const [f64; 2],
            rsb,
            csb,
            [0.0, 0.0],
            out.as_mut_ptr() as *mut [f64; 2],
            1,
            m as isize,
        );
    }
    out
}

/// `A B` through a blocked complex kernel; much faster than the generic
/// product for the block sizes used here.
pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    gemm(a, Op::None, b, Op::None)
}

/// `A^H B`
pub fn matmul_ah(a: &CMat, b: &CMat) -> CMat {
    gemm(a, Op::Adjoint, b, Op::None)
}

/// `A B^H`
pub fn matmul_bh(a: &CMat, b: &CMat) -> CMat {
    gemm(a, Op::None, b, Op::Adjoint)
}

pub fn frob_sq(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

pub fn is_finite(a: &CMat) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Thin SVD with singular values sorted in decreasing order.
pub struct Svd {
    /// rows x k
    pub u: CMat,
    pub singular_values: Vec<f64>,
    /// cols x k (right singular vectors as columns)
    pub v: CMat,
}

pub fn svd(a: &CMat) -> Svd {
    let dec = a.clone().svd(true, true);
    let u = dec.u.expect("svd computed with u");
    let v_t = dec.v_t.expect("svd computed with v_t");
    let s: Vec<f64> = dec.singular_values.iter().copied().collect();

    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]).then(i.cmp(&j)));

    let k = s.len();
    let mut uo = CMat::zeros(a.nrows(), k);
    let mut vo = CMat::zeros(a.ncols(), k);
    let mut so = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        uo.set_column(dst, &u.column(src));
        vo.set_column(dst, &v_t.row(src).adjoint());
        so.push(s[src]);
    }
    Svd {
        u: uo,
        singular_values: so,
        v: vo,
    }
}

pub fn singular_values(a: &CMat) -> Vec<f64> {
    let mut s: Vec<f64> = a.clone().singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Number of singular values above `rel_tol * sigma_max`.
pub fn numerical_rank(a: &CMat, rel_tol: f64) -> usize {
    let s = singular_values(a);
    match s.first() {
        Some(&smax) if smax > 0.0 => s.iter().filter(|&&x| x > rel_tol * smax).count(),
        _ => 0,
    }
}

pub fn condition_number(a: &CMat) -> f64 {
    let s = singular_values(a);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues in decreasing order.
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

pub fn hermitian_eigen(a: &CMat) -> HermitianEigen {
    // Symmetrize first so roundoff in a computed Gram cannot leak an
    // anti-Hermitian part into the solver.
    let sym = (a + a.adjoint()) * c(0.5, 0.0);
    let dec = SymmetricEigen::new(sym);
    let vals: Vec<f64> = dec.eigenvalues.iter().copied().collect();
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&i, &j| vals[j].total_cmp(&vals[i]).then(i.cmp(&j)));
    let mut vectors = CMat::zeros(a.nrows(), vals.len());
    let mut values = Vec::with_capacity(vals.len());
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &dec.eigenvectors.column(src));
        values.push(vals[src]);
    }
    HermitianEigen { values, vectors }
}

/// Solves `A X = B` for Hermitian positive-definite `A`.
pub fn solve_hpd(a: &CMat, b: &CMat, context: &'static str) -> Result<CMat> {
    let sym = (a + a.adjoint()) * c(0.5, 0.0);
    if let Some(chol) = Cholesky::new(sym.clone()) {
        let x = chol.solve(b);
        if is_finite(&x) {
            return Ok(x);
        }
    }
    // Nearly semidefinite systems still admit an LU solve when invertible.
    sym.lu()
        .solve(b)
        .filter(is_finite)
        .ok_or(Error::Singular(context))
}

/// Solves `X A = B` for Hermitian positive-definite `A`.
pub fn solve_right_hpd(b: &CMat, a: &CMat, context: &'static str) -> Result<CMat> {
    // X A = B  <=>  A^H X^H = B^H and A is Hermitian.
    Ok(solve_hpd(a, &b.adjoint(), context)?.adjoint())
}

/// Random matrix with orthonormal columns (rows >= cols), via QR of a
/// Gaussian matrix with the phase of R's diagonal removed.
pub fn random_orthonormal<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    assert!(cols <= rows, "need rows >= cols for orthonormal columns");
    let g = crandn_matrix(rng, rows, cols, 1.0);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..cols {
        let d = r[(k, k)];
        let n = d.norm();
        if n > 0.0 {
            let phase = d / n;
            let mut col = q.column_mut(k);
            col *= phase;
        }
    }
    q
}

/// Normalized mean squared error `||truth - est||^2 / ||truth||^2` in dB,
/// floored at -300 dB.
pub fn nmse_db(truth: &CMat, est: &CMat) -> f64 {
    let den = frob_sq(truth);
    let num = frob_sq(&(truth - est));
    to_db_floored(num / den)
}

pub const DB_FLOOR: f64 = -300.0;

pub fn to_db_floored(ratio: f64) -> f64 {
    if ratio.is_nan() {
        return f64::NAN;
    }
    if ratio <= 0.0 {
        return DB_FLOOR;
    }
    (10.0 * ratio.log10()).max(DB_FLOOR)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_products_match_generic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = crandn_matrix(&mut rng, 7, 5, 1.0);
        let b = crandn_matrix(&mut rng, 5, 9, 1.0);
        let b2 = crandn_matrix(&mut rng, 7, 9, 1.0);
        let b3 = crandn_matrix(&mut rng, 4, 5, 1.0);
        assert!((matmul(&a, &b) - &a * &b).norm() < 1e-12);
        assert!((matmul_ah(&a, &b2) - a.adjoint() * &b2).norm() < 1e-12);
        assert!((matmul_bh(&a, &b3) - &a * b3.adjoint()).norm() < 1e-12);
        assert_eq!(matmul(&CMat::zeros(3, 0), &CMat::zeros(0, 2)), CMat::zeros(3, 2));
    }
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn svd_is_sorted_and_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = crandn_matrix(&mut rng, 6, 4, 1.0);
        let d = svd(&a);
        assert!(d.singular_values.windows(2).all(|w| w[0] >= w[1]));
        let s = CMat::from_diagonal(&CVec::from_iterator(
            4,
            d.singular_values.iter().map(|&x| c(x, 0.0)),
        ));
        let rec = &d.u * s * d.v.adjoint();
        assert!(frob_sq(&(rec - &a)) < 1e-20);
    }

    #[test]
    fn hermitian_eigen_matches_gram() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = crandn_matrix(&mut rng, 5, 8, 1.0);
        let g = &a * a.adjoint();
        let e = hermitian_eigen(&g);
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        let s = singular_values(&a);
        for (lam, sv) in e.values.iter().zip(&s) {
            assert!((lam - sv * sv).abs() < 1e-9 * s[0] * s[0]);
        }
    }

    #[test]
    fn orthonormal_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = random_orthonormal(&mut rng, 7, 3);
        let g = q.adjoint() * &q;
        assert!(frob_sq(&(g - CMat::identity(3, 3))) < 1e-24);
    }

    #[test]
    fn hpd_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = crandn_matrix(&mut rng, 4, 6, 1.0);
        let g = &a * a.adjoint() + CMat::identity(4, 4);
        let b = crandn_matrix(&mut rng, 4, 2, 1.0);
        let x = solve_hpd(&g, &b, "test").unwrap();
        assert!(frob_sq(&(&g * x - b)) < 1e-24);
        let bt = crandn_matrix(&mut rng, 3, 4, 1.0);
        let xr = solve_right_hpd(&bt, &g, "test").unwrap();
        assert!(frob_sq(&(xr * &g - bt)) < 1e-24);
    }

    #[test]
    fn singular_system_is_reported() {
        let g = CMat::zeros(3, 3);
        let b = CMat::identity(3, 1);
        assert!(matches!(solve_hpd(&g, &b, "zero"), Err(Error::Singular("zero"))));
    }
}
