use crate::error::{check_shape, Result};
use crate::linalg::{matmul_bh, solve_right_hpd, CMat};

/// EM update of the dictionary: `H = Y D2^H (C_sum + D2 D2^H)^-1`.
pub fn update_dictionary(y: &CMat, d2: &CMat, c_sum: &CMat) -> Result<CMat> {
    let l = d2.nrows();
    check_shape("dictionary D2", (d2.ncols(), 1), (y.ncols(), 1))?;
    check_shape("dictionary C_sum", c_sum.shape(), (l, l))?;
    let gram = c_sum + matmul_bh(d2, d2);
    solve_right_hpd(&matmul_bh(y, d2), &gram, "dictionary gram")
}
