//! Linear MMSE stage of the bilinear solver.

use crate::error::{check_shape, invalid, Result};
use crate::linalg::{c, hermitian_eigen, matmul, matmul_ah, matmul_bh, solve_hpd, CMat, CVec};

/// Dense per-column LMMSE with unit noise precision:
/// `C = (gamma2 I + H^H H)^-1`, `d2 = C (gamma2 r2 + H^H y)`.
pub fn lmmse_column(h: &CMat, y: &CVec, r2: &CVec, gamma2: f64) -> Result<(CMat, CVec)> {
    let l = h.ncols();
    check_shape("lmmse y", (y.len(), 1), (h.nrows(), 1))?;
    check_shape("lmmse r2", (r2.len(), 1), (l, 1))?;
    if !(gamma2.is_finite() && gamma2 > 0.0) {
        return Err(invalid("gamma2 must be positive"));
    }
    let a = CMat::identity(l, l) * c(gamma2, 0.0) + h.adjoint() * h;
    let c_t = solve_hpd(&a, &CMat::identity(l, l), "lmmse precision")?;
    let rhs = r2 * c(gamma2, 0.0) + h.adjoint() * y;
    let d2 = &c_t * rhs;
    Ok((c_t, d2))
}

/// Shared-eigenbasis LMMSE for every column of a block at once, with a
/// per-row noise precision `lambda_i` on the measurements:
/// `C_t = (gamma2_t I + H^H Λ H)^-1`.
pub struct LmmseOperator {
    /// Eigenvectors of `H^H Λ H`.
    q: CMat,
    eig: Vec<f64>,
    /// `H^H Λ`
    h_weighted: CMat,
}

/// Output of [`LmmseOperator::apply`].
pub struct LmmseBlock {
    /// L x T
    pub d2: CMat,
    /// `L / tr(C_t)` for every column.
    pub eta2: Vec<f64>,
    /// `Σ_t C_t`
    pub c_sum: CMat,
}

impl LmmseOperator {
    pub fn new(h: &CMat, row_precision: &[f64]) -> Result<Self> {
        check_shape("lmmse precision", (row_precision.len(), 1), (h.nrows(), 1))?;
        let mut h_weighted = h.adjoint();
        for (i, &lam) in row_precision.iter().enumerate() {
            let mut col = h_weighted.column_mut(i);
            col *= c(lam, 0.0);
        }
        let gram = matmul(&h_weighted, h);
        let e = hermitian_eigen(&gram);
        Ok(LmmseOperator {
            q: e.vectors,
            eig: e.values.into_iter().map(|x| x.max(0.0)).collect(),
            h_weighted,
        })
    }

    pub fn apply(&self, y: &CMat, r2: &CMat, gamma2: &[f64]) -> LmmseBlock {
        let l = self.q.nrows();
        let t = y.ncols();
        let mut b = matmul(&self.h_weighted, y);
        for (j, &g) in gamma2.iter().enumerate() {
            let mut col = b.column_mut(j);
            col.axpy(c(g, 0.0), &r2.column(j), c(1.0, 0.0));
        }
        let mut qb = matmul_ah(&self.q, &b);
        let mut inv_row_sum = vec![0.0; l];
        let mut eta2 = Vec::with_capacity(t);
        for j in 0..t {
            let mut tr = 0.0;
            for k in 0..l {
                let inv = 1.0 / (gamma2[j] + self.eig[k]);
                qb[(k, j)] *= inv;
                inv_row_sum[k] += inv;
                tr += inv;
            }
            eta2.push(l as f64 / tr);
        }
        let d2 = matmul(&self.q, &qb);
        let mut qs = self.q.clone();
        for (k, s) in inv_row_sum.iter().enumerate() {
            let mut col = qs.column_mut(k);
            col *= c(*s, 0.0);
        }
        let c_sum = matmul_bh(&qs, &self.q);
        LmmseBlock { d2, eta2, c_sum }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{crandn_matrix, frob_sq};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn col(m: &CMat, j: usize) -> CVec {
        m.column(j).into_owned()
    }

    #[test]
    fn identity_dictionary_averages() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r2 = col(&crandn_matrix(&mut rng, 3, 1, 1.0), 0);
        let y = r2.clone();
        let (_, d2) = lmmse_column(&CMat::identity(3, 3), &y, &r2, 1.0).unwrap();
        assert!((d2 - (&r2 + &y) * c(0.5, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn large_gamma_returns_prior_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = crandn_matrix(&mut rng, 6, 3, 1.0);
        let y = col(&crandn_matrix(&mut rng, 6, 1, 1.0), 0);
        let r2 = col(&crandn_matrix(&mut rng, 3, 1, 1.0), 0);
        let (_, d2) = lmmse_column(&h, &y, &r2, 1e12).unwrap();
        assert!((d2 - r2).norm() < 1e-9);
    }

    #[test]
    fn matches_least_squares_oracle() {
        // Minimizer of g |d - r2|^2 + |y - H d|^2 via the stacked system
        // [H; sqrt(g) I] d = [y; sqrt(g) r2].
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (m, l, g) = (8, 4, 0.7f64);
        let h = crandn_matrix(&mut rng, m, l, 1.0);
        let y = col(&crandn_matrix(&mut rng, m, 1, 1.0), 0);
        let r2 = col(&crandn_matrix(&mut rng, l, 1, 1.0), 0);
        let mut a = CMat::zeros(m + l, l);
        a.view_mut((0, 0), (m, l)).copy_from(&h);
        a.view_mut((m, 0), (l, l))
            .copy_from(&(CMat::identity(l, l) * c(g.sqrt(), 0.0)));
        let mut b = CVec::zeros(m + l);
        b.rows_mut(0, m).copy_from(&y);
        b.rows_mut(m, l).copy_from(&(&r2 * c(g.sqrt(), 0.0)));
        let want = a.svd(true, true).solve(&b, 1e-14).unwrap();
        let (cm, d2) = lmmse_column(&h, &y, &r2, g).unwrap();
        assert!((d2.clone() - want).norm() < 1e-10);
        // Stationarity of the normal equations.
        let res = (CMat::identity(l, l) * c(g, 0.0) + h.adjoint() * &h) * &d2
            - &r2 * c(g, 0.0)
            - h.adjoint() * &y;
        assert!(res.norm() < 1e-12 * (1.0 + y.norm()));
        assert!(frob_sq(&(&cm - cm.adjoint())) < 1e-24);
    }

    #[test]
    fn operator_agrees_with_dense_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (m, l, t) = (7, 4, 5);
        let h = crandn_matrix(&mut rng, m, l, 1.0);
        let y = crandn_matrix(&mut rng, m, t, 1.0);
        let r2 = crandn_matrix(&mut rng, l, t, 1.0);
        let gam: Vec<f64> = (0..t).map(|j| 0.1 + j as f64).collect();
        let op = LmmseOperator::new(&h, &vec![1.0; m]).unwrap();
        let blk = op.apply(&y, &r2, &gam);
        let mut c_sum = CMat::zeros(l, l);
        for j in 0..t {
            let (cm, d2) = lmmse_column(&h, &col(&y, j), &col(&r2, j), gam[j]).unwrap();
            assert!((blk.d2.column(j) - d2).norm() < 1e-11);
            let tr: f64 = cm.diagonal().iter().map(|z| z.re).sum();
            assert!((blk.eta2[j] - l as f64 / tr).abs() < 1e-9 * blk.eta2[j]);
            c_sum += cm;
        }
        assert!(frob_sq(&(c_sum - blk.c_sum)) < 1e-20);
    }

    #[test]
    fn weighted_rows_equal_scaled_dictionary() {
        // Row precision lambda_i is the same as scaling row i of H and y by sqrt(lambda_i).
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (m, l) = (6, 3);
        let h = crandn_matrix(&mut rng, m, l, 1.0);
        let y = crandn_matrix(&mut rng, m, 1, 1.0);
        let r2 = crandn_matrix(&mut rng, l, 1, 1.0);
        let lam: Vec<f64> = (0..m).map(|i| 0.5 + i as f64).collect();
        let blk = LmmseOperator::new(&h, &lam).unwrap().apply(&y, &r2, &[0.4]);
        let mut hs = h.clone();
        let mut ys = y.clone();
        for i in 0..m {
            let s = c(lam[i].sqrt(), 0.0);
            let mut row = hs.row_mut(i);
            row *= s;
            ys[(i, 0)] *= s;
        }
        let (_, d2) = lmmse_column(&hs, &col(&ys, 0), &col(&r2, 0), 0.4).unwrap();
        assert!((blk.d2.column(0) - d2).norm() < 1e-11);
    }
}
