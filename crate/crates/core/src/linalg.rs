//! Small dense helpers shared by the estimators.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative size below which an R diagonal marks a dependent column.
const RANK_TOL: f64 = 1e-10;

/// Least-squares coefficients `B` minimising `‖Y − X B‖_F`, via Householder
/// QR. Columns of `X` lying in the span of earlier columns are reported by
/// name.
pub(crate) fn least_squares(x: &DMatrix<f64>, y: &DMatrix<f64>, names: &[String]) -> Result<DMatrix<f64>> {
    let (rows, cols) = x.shape();
    if rows < cols {
        return Err(Error::InsufficientData { needed: cols, have: rows });
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let scale = (0..cols).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let dependent: Vec<String> = (0..cols)
        .filter(|&i| !(r[(i, i)].abs() > RANK_TOL * scale))
        .map(|i| names.get(i).cloned().unwrap_or_else(|| format!("column {i}")))
        .collect();
    if !dependent.is_empty() {
        return Err(Error::SingularDesign { columns: dependent });
    }
    let qty = qr.q().transpose() * y;
    r.solve_upper_triangular(&qty).ok_or(Error::SingularDesign { columns: names.to_vec() })
}
