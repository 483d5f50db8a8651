//! Residual whiteness tests.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::chi_square_sf;

/// A portmanteau statistic with its chi-square reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortmanteauTest {
    pub statistic: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Ljung–Box `Q = n(n+2) Σ_{k≤lags} ρ̂_k²/(n−k)` with `lags` degrees of
/// freedom. On residuals of a fitted model the p-value is approximate.
pub fn ljung_box(residuals: &[f64], lags: usize) -> Result<PortmanteauTest> {
    let n = residuals.len();
    if lags < 1 || n < lags + 2 {
        return Err(Error::InsufficientData { needed: lags.max(1) + 2, have: n });
    }
    let mean = residuals.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = residuals.iter().map(|v| v - mean).collect();
    let c0: f64 = c.iter().map(|v| v * v).sum();
    if !(c0 > 0.0) || !c0.is_finite() {
        return Err(Error::DegenerateSeries);
    }
    let nf = n as f64;
    let mut q = 0.0;
    for k in 1..=lags {
        let rho = c[k..].iter().zip(&c[..n - k]).map(|(a, b)| a * b).sum::<f64>() / c0;
        q += rho * rho / (nf - k as f64);
    }
    q *= nf * (nf + 2.0);
    let df = lags as f64;
    Ok(PortmanteauTest { statistic: q, df, p_value: chi_square_sf(q, df) })
}

/// Hosking's multivariate portmanteau
/// `Q* = n² Σ_{k=1..m} (n−k)⁻¹ tr(Ĉ_kᵀ Ĉ_0⁻¹ Ĉ_k Ĉ_0⁻¹)` on an `n × d`
/// residual matrix, referred to chi-square with `d²m − fitted_params`
/// degrees of freedom.
pub fn hosking_portmanteau(residuals: &DMatrix<f64>, max_lag: usize, fitted_params: usize) -> Result<PortmanteauTest> {
    let (n, d) = residuals.shape();
    if max_lag < 1 || n <= max_lag + d {
        return Err(Error::InsufficientData { needed: max_lag.max(1) + d + 1, have: n });
    }
    let df = (d * d * max_lag) as f64 - fitted_params as f64;
    if df <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "{fitted_params} fitted parameters leave no degrees of freedom at lag {max_lag}"
        )));
    }
    let mut x = residuals.clone();
    for mut col in x.column_iter_mut() {
        let m = col.mean();
        col.add_scalar_mut(-m);
    }
    let nf = n as f64;
    let cov = |k: usize| -> DMatrix<f64> {
        // Ĉ_k = n⁻¹ Σ_t x_t x_{t−k}ᵀ
        let a = x.rows(k, n - k);
        let b = x.rows(0, n - k);
        a.transpose() * b / nf
    };
    let c0 = cov(0);
    let eig = c0.clone().symmetric_eigen();
    let max_eig = eig.eigenvalues.max();
    if !(eig.eigenvalues.min() > 1e-12 * max_eig) {
        return Err(Error::SingularCovariance);
    }
    let c0_inv = c0.try_inverse().ok_or(Error::SingularCovariance)?;
    let mut q = 0.0;
    for k in 1..=max_lag {
        let ck = cov(k);
        let m = ck.transpose() * &c0_inv * &ck * &c0_inv;
        q += m.trace() / (nf - k as f64);
    }
    q *= nf * nf;
    Ok(PortmanteauTest { statistic: q, df, p_value: chi_square_sf(q, df) })
}
