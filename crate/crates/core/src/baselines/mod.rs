//! Benchmark forecasters: a Gaussian VAR in ALR space with seasonal
//! regressors (tVAR), the ALR random walk, and the seasonal naive.

pub mod diagnostics;

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fan::{Fan, ForecastFan};
use crate::hmc::stream_rng;
use crate::linalg::least_squares;
use crate::model::ModelData;
use crate::seasonal::{fourier_row, FourierSpec};
use crate::series::CompositionalSeries;
use crate::simplex::{alr_inv_into, floor_and_close};

pub use diagnostics::{hosking_portmanteau, ljung_box, PortmanteauTest};

/// Lag of the seasonal naive forecaster.
pub const SEASON: usize = 12;

/// Deterministic regressors of a VAR equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regressors {
    Intercept,
    Fourier(FourierSpec),
    /// Intercept plus 11 month-of-year dummies centred to mean zero.
    MonthlyDummies,
}

impl Regressors {
    pub fn n_terms(&self) -> usize {
        match self {
            Regressors::Intercept => 1,
            Regressors::Fourier(s) => s.n_terms(),
            Regressors::MonthlyDummies => SEASON,
        }
    }

    /// Row at global month index `t`.
    pub fn row(&self, t: i64) -> Vec<f64> {
        match self {
            Regressors::Intercept => vec![1.0],
            Regressors::Fourier(s) => fourier_row(t, s).f,
            Regressors::MonthlyDummies => {
                let phase = t.rem_euclid(SEASON as i64) as usize;
                let mut f = vec![-1.0 / SEASON as f64; SEASON];
                f[0] = 1.0;
                if phase > 0 {
                    f[phase] += 1.0;
                }
                f
            }
        }
    }

    pub fn names(&self) -> Vec<String> {
        match self {
            Regressors::Intercept => vec!["const".into()],
            Regressors::Fourier(s) => {
                let mut out = vec!["const".to_string()];
                for k in 1..=s.n_harmonics() {
                    out.push(format!("sin{k}"));
                    out.push(format!("cos{k}"));
                }
                out
            }
            Regressors::MonthlyDummies => {
                let mut out = vec!["const".to_string()];
                out.extend((1..SEASON).map(|m| format!("month{m}")));
                out
            }
        }
    }
}

/// Least-squares VAR(p) fit in ALR coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TvarFit {
    /// `F_1, …, F_p`, each `n × n`.
    pub coefs: Vec<DMatrix<f64>>,
    /// `n × q`: row `i` holds the regressor coefficients of equation `i`.
    pub delta: DMatrix<f64>,
    /// Innovation covariance with denominator `T − p − (p·n + q)`.
    pub sigma: DMatrix<f64>,
    /// `(T − p) × n`.
    pub residuals: DMatrix<f64>,
    pub regressors: Regressors,
    pub labels: Vec<String>,
}

/// JSON view of a [`TvarFit`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TvarFitRecord {
    pub order: usize,
    pub coordinates: Vec<String>,
    pub regressors: Regressors,
    pub regressor_names: Vec<String>,
    pub coefs: Vec<Vec<Vec<f64>>>,
    pub delta: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
    pub residuals: Vec<Vec<f64>>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl TvarFit {
    pub fn order(&self) -> usize {
        self.coefs.len()
    }

    pub fn n_coords(&self) -> usize {
        self.sigma.nrows()
    }

    /// AR coefficient count `p·n²` (regressor coefficients excluded).
    pub fn n_ar_params(&self) -> usize {
        self.order() * self.n_coords() * self.n_coords()
    }

    pub fn to_record(&self) -> TvarFitRecord {
        TvarFitRecord {
            order: self.order(),
            coordinates: self.labels.clone(),
            regressors: self.regressors,
            regressor_names: self.regressors.names(),
            coefs: self.coefs.iter().map(rows_of).collect(),
            delta: rows_of(&self.delta),
            sigma: rows_of(&self.sigma),
            residuals: rows_of(&self.residuals),
        }
    }
}

/// Per-equation OLS of `e_t` on `e_{t−1}, …, e_{t−p}` and the regressors.
pub fn fit_var(data: &ModelData, order: usize, regressors: Regressors) -> Result<TvarFit> {
    if order < 1 {
        return Err(Error::InvalidArgument("VAR order must be >= 1".into()));
    }
    let n = data.n_coords();
    let q = regressors.n_terms();
    let per_eq = order * n + q;
    let t_len = data.len();
    if t_len < order + per_eq + 1 {
        return Err(Error::InsufficientData { needed: order + per_eq + 1, have: t_len });
    }
    let basis = data.basis();
    let labels: Vec<String> = basis.coord_parts().map(|j| basis.labels()[j].clone()).collect();
    let mut names = Vec::with_capacity(per_eq);
    for l in 1..=order {
        names.extend(labels.iter().map(|c| format!("{c}_lag{l}")));
    }
    names.extend(regressors.names());

    let rows = t_len - order;
    let mut x = DMatrix::zeros(rows, per_eq);
    let mut y = DMatrix::zeros(rows, n);
    for r in 0..rows {
        let t = r + order;
        for l in 1..=order {
            for (k, v) in data.e(t - l).iter().enumerate() {
                x[(r, (l - 1) * n + k)] = *v;
            }
        }
        for (k, v) in regressors.row(data.series().global_index(t)).into_iter().enumerate() {
            x[(r, order * n + k)] = v;
        }
        for (k, v) in data.e(t).iter().enumerate() {
            y[(r, k)] = *v;
        }
    }
    let b = least_squares(&x, &y, &names)?;
    let residuals = &y - &x * &b;
    let sigma = residuals.transpose() * &residuals / (rows - per_eq) as f64;
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    let coefs = (0..order).map(|l| b.rows(l * n, n).transpose()).collect();
    let delta = b.rows(order * n, q).transpose();
    Ok(TvarFit { coefs, delta, sigma, residuals, regressors, labels })
}

/// VAR(2) with the model's Fourier regressors.
pub fn fit_tvar2(data: &ModelData) -> Result<TvarFit> {
    fit_var(data, 2, Regressors::Fourier(*data.spec()))
}

/// h-step point forecasts and covariances `V_h = Σ_{i<h} Ψ_i Σ Ψ_iᵀ`,
/// `h = 1..=horizon`, where `Ψ_0 = I` and `Ψ_i = Σ_l F_l Ψ_{i−l}`.
pub fn var_moments(fit: &TvarFit, data: &ModelData, horizon: usize) -> Result<Vec<(Vec<f64>, DMatrix<f64>)>> {
    let n = fit.n_coords();
    let p = fit.order();
    if data.n_coords() != n {
        return Err(Error::InvalidArgument("fit and data differ in dimension".into()));
    }
    if data.len() < p {
        return Err(Error::InsufficientData { needed: p, have: data.len() });
    }
    // Most recent first.
    let mut hist: Vec<nalgebra::DVector<f64>> =
        (0..p).map(|l| nalgebra::DVector::from_column_slice(data.e(data.len() - 1 - l))).collect();
    let last = data.series().global_index(data.len() - 1);
    let mut psi: Vec<DMatrix<f64>> = vec![DMatrix::identity(n, n)];
    let mut v = DMatrix::zeros(n, n);
    let mut out = Vec::with_capacity(horizon);
    for h in 1..=horizon {
        let f = nalgebra::DVector::from_vec(fit.regressors.row(last + h as i64));
        let mut mean = &fit.delta * f;
        for (l, fl) in fit.coefs.iter().enumerate() {
            mean += fl * &hist[l];
        }
        hist.rotate_right(1);
        hist[0] = mean.clone();

        let psi_prev = &psi[h - 1];
        v += psi_prev * &fit.sigma * psi_prev.transpose();
        let mut next = DMatrix::zeros(n, n);
        for (l, fl) in fit.coefs.iter().enumerate() {
            if h >= l + 1 {
                next += fl * &psi[h - 1 - l];
            }
        }
        psi.push(next);
        out.push((mean.iter().copied().collect(), (&v + v.transpose()) * 0.5));
    }
    Ok(out)
}

/// Lower Cholesky factor; a failed factorization is retried once with
/// `1e-10·I` added. An all-zero matrix has a zero factor.
fn cholesky_with_jitter(v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if v.iter().all(|x| *x == 0.0) {
        return Ok(v.clone());
    }
    if let Some(c) = v.clone().cholesky() {
        return Ok(c.l());
    }
    let jittered = v + DMatrix::identity(v.nrows(), v.ncols()) * 1e-10;
    jittered.cholesky().map(|c| c.l()).ok_or(Error::SingularCovariance)
}

/// Gaussian predictive fan: `M` draws from `N(ê_{T+h}, V_h)` per horizon,
/// each mapped through `alr⁻¹`.
pub fn tvar2_fan(fit: &TvarFit, data: &ModelData, horizon: usize, m: usize, seed: u64) -> Result<ForecastFan> {
    check_sizes(horizon, m)?;
    let n = fit.n_coords();
    let j = n + 1;
    let reference = data.basis().reference();
    let moments = var_moments(fit, data, horizon)?;
    let mut rng = stream_rng(seed, 0);
    let mut fans = Vec::with_capacity(horizon);
    let mut z = vec![0.0; n];
    let mut e = vec![0.0; n];
    for (mean, v) in &moments {
        let l = cholesky_with_jitter(v)?;
        let mut members = vec![0.0; m * j];
        for row in members.chunks_exact_mut(j) {
            for zi in z.iter_mut() {
                *zi = rng.sample(StandardNormal);
            }
            for i in 0..n {
                e[i] = mean[i] + (0..=i).map(|k| l[(i, k)] * z[k]).sum::<f64>();
            }
            alr_inv_into(&e, reference, row);
            floor_and_close(row);
        }
        fans.push(Fan::from_flat_unchecked(Arc::clone(data.basis()), members));
    }
    ForecastFan::new(fans)
}

/// Drift-free ALR random walk: every horizon is `M` copies of `alr⁻¹(e_T)`.
pub fn alr_rw_fan(data: &ModelData, horizon: usize, m: usize) -> Result<ForecastFan> {
    check_sizes(horizon, m)?;
    let j = data.basis().n_parts();
    let mut point = vec![0.0; j];
    alr_inv_into(data.e(data.len() - 1), data.basis().reference(), &mut point);
    floor_and_close(&mut point);
    let fan = Fan::from_flat_unchecked(Arc::clone(data.basis()), point.repeat(m));
    ForecastFan::new(vec![fan; horizon])
}

/// Seasonal naive from an origin holding `origin` observations (1-based
/// index of the last one). Horizon `h` copies `y_{origin+h−12}`; horizons
/// beyond 12 step back whole seasons.
pub fn snaive_fan(series: &CompositionalSeries, origin: usize, horizon: usize, m: usize) -> Result<ForecastFan> {
    check_sizes(horizon, m)?;
    if origin < SEASON {
        return Err(Error::InsufficientHistory { origin, needed: SEASON });
    }
    if origin > series.len() {
        return Err(Error::OutOfRange { index: origin, reason: format!("series has {} rows", series.len()) });
    }
    let fans = (1..=horizon)
        .map(|h| {
            let back = SEASON * h.div_ceil(SEASON);
            let row = origin + h - back - 1;
            Fan::from_flat_unchecked(Arc::clone(series.basis()), series.shares(row).repeat(m))
        })
        .collect();
    ForecastFan::new(fans)
}

fn check_sizes(horizon: usize, m: usize) -> Result<()> {
    if horizon < 1 || m < 1 {
        return Err(Error::InvalidArgument("horizon and fan size must be >= 1".into()));
    }
    Ok(())
}
