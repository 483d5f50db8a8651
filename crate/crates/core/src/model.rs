//! The BDARMA model: Dirichlet observations whose mean follows a seasonal
//! VAR(2) in ALR coordinates and whose precision follows a seasonal
//! log-linear curve.
//!
//! ```text
//! y_t ~ Dirichlet(φ_t μ_t),   μ_t = alr⁻¹(η_t),   φ_t = exp(f_tᵀγ)
//! η_t = X_tβ + A1(e_{t−1} − X_{t−1}β) + A2(e_{t−2} − X_{t−2}β)
//! ```
//!
//! In-sample the AR terms use the observed ALR coordinates `e`; out of
//! sample they use previously computed `η`. The likelihood covers
//! `t = 3..T`; every parameter has an independent N(0, 1) prior.
//!
//! Parameters are packed into one flat vector as A1 (row-major), A2
//! (row-major), β (one block of `1+2K` terms per coordinate), γ.

use std::io::{Read, Write};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dirichlet;
use crate::error::{Error, Result};
use crate::fan::{Fan, ForecastFan};
use crate::hmc::{self, HmcConfig, LogDensity, PosteriorDraws};
use crate::linalg::least_squares;
use crate::seasonal::{apply_block, fourier_row, DesignRow, FourierSpec};
use crate::series::CompositionalSeries;
use crate::simplex::{alr_into, alr_inv_into, AlrVector, Basis};
use crate::special::{digamma, ln_gamma};

/// Bound on `|f_tᵀγ|` before exponentiation.
pub const LOG_PRECISION_CLAMP: f64 = 500.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Sizes and offsets of the packed parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    n_coords: usize,
    n_terms: usize,
}

impl ParamLayout {
    pub fn new(n_coords: usize, n_terms: usize) -> Self {
        ParamLayout { n_coords, n_terms }
    }

    pub fn for_basis(basis: &Basis, spec: &FourierSpec) -> Self {
        ParamLayout::new(basis.n_coords(), spec.n_terms())
    }

    pub fn n_coords(&self) -> usize {
        self.n_coords
    }

    pub fn n_terms(&self) -> usize {
        self.n_terms
    }

    /// `D = 2n² + n·p + p`.
    pub fn dim(&self) -> usize {
        let (n, p) = (self.n_coords, self.n_terms);
        2 * n * n + n * p + p
    }

    pub fn a1_offset(&self) -> usize {
        0
    }

    pub fn a2_offset(&self) -> usize {
        self.n_coords * self.n_coords
    }

    pub fn beta_offset(&self) -> usize {
        2 * self.n_coords * self.n_coords
    }

    pub fn gamma_offset(&self) -> usize {
        self.beta_offset() + self.n_coords * self.n_terms
    }

    /// Column names in packing order, e.g. `a1_wind_solar`, `beta_hydro_sin2`,
    /// `gamma_const`.
    pub fn names(&self, basis: &Basis) -> Vec<String> {
        let coords: Vec<&str> = basis.coord_parts().map(|j| basis.labels()[j].as_str()).collect();
        let terms = term_names(self.n_terms);
        let mut out = Vec::with_capacity(self.dim());
        for a in ["a1", "a2"] {
            for r in &coords {
                for c in &coords {
                    out.push(format!("{a}_{r}_{c}"));
                }
            }
        }
        for r in &coords {
            for t in &terms {
                out.push(format!("beta_{r}_{t}"));
            }
        }
        for t in &terms {
            out.push(format!("gamma_{t}"));
        }
        out
    }
}

fn term_names(p: usize) -> Vec<String> {
    let mut out = vec!["const".to_string()];
    for k in 1..=(p - 1) / 2 {
        out.push(format!("sin{k}"));
        out.push(format!("cos{k}"));
    }
    out
}

/// One point in parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct BdarmaParams {
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
    /// Coordinate-major: `beta[j·p + k]`.
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl BdarmaParams {
    pub fn zeros(layout: ParamLayout) -> Self {
        let n = layout.n_coords;
        BdarmaParams {
            a1: DMatrix::zeros(n, n),
            a2: DMatrix::zeros(n, n),
            beta: vec![0.0; n * layout.n_terms],
            gamma: vec![0.0; layout.n_terms],
        }
    }

    pub fn from_flat(layout: ParamLayout, theta: &[f64]) -> Result<Self> {
        if theta.len() != layout.dim() {
            return Err(Error::InvalidArgument(format!(
                "parameter vector has length {}, layout needs {}",
                theta.len(),
                layout.dim()
            )));
        }
        if let Some(i) = theta.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { label: format!("parameter {i}"), value: theta[i] });
        }
        let n = layout.n_coords;
        Ok(BdarmaParams {
            a1: DMatrix::from_row_slice(n, n, &theta[..n * n]),
            a2: DMatrix::from_row_slice(n, n, &theta[n * n..2 * n * n]),
            beta: theta[layout.beta_offset()..layout.gamma_offset()].to_vec(),
            gamma: theta[layout.gamma_offset()..].to_vec(),
        })
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(self.a1.nrows(), self.gamma.len())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.layout().dim());
        for m in [&self.a1, &self.a2] {
            for r in m.row_iter() {
                out.extend(r.iter());
            }
        }
        out.extend_from_slice(&self.beta);
        out.extend_from_slice(&self.gamma);
        out
    }

    fn check(&self, data: &ModelData) -> Result<()> {
        let layout = self.layout();
        let n = layout.n_coords;
        if self.a2.shape() != (n, n) || self.beta.len() != n * layout.n_terms || layout != data.layout() {
            return Err(Error::InvalidArgument("parameter shapes do not match the data".into()));
        }
        Ok(())
    }
}

/// A series prepared for the model: ALR coordinates, log shares and
/// seasonal rows at global month indices.
#[derive(Debug, Clone)]
pub struct ModelData {
    series: CompositionalSeries,
    spec: FourierSpec,
    e: Vec<f64>,
    log_y: Vec<f64>,
    designs: Vec<DesignRow>,
    coord_parts: Vec<usize>,
}

impl ModelData {
    pub fn new(series: CompositionalSeries, spec: FourierSpec) -> Result<Self> {
        spec.validate()?;
        if series.is_empty() {
            return Err(Error::InsufficientData { needed: 1, have: 0 });
        }
        let basis = Arc::clone(series.basis());
        let n = basis.n_coords();
        let mut e = vec![0.0; series.len() * n];
        let mut log_y = Vec::with_capacity(series.len() * basis.n_parts());
        for (t, y) in series.rows().enumerate() {
            alr_into(y, basis.reference(), &mut e[t * n..(t + 1) * n]);
            log_y.extend(y.iter().map(|v| v.ln()));
        }
        let designs = (0..series.len()).map(|t| fourier_row(series.global_index(t), &spec)).collect();
        let coord_parts = basis.coord_parts().collect();
        Ok(ModelData { series, spec, e, log_y, designs, coord_parts })
    }

    pub fn series(&self) -> &CompositionalSeries {
        &self.series
    }

    pub fn spec(&self) -> &FourierSpec {
        &self.spec
    }

    pub fn basis(&self) -> &Arc<Basis> {
        self.series.basis()
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn n_coords(&self) -> usize {
        self.coord_parts.len()
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(self.n_coords(), self.spec.n_terms())
    }

    /// Observed ALR coordinates of row `t` (0-based).
    pub fn e(&self, t: usize) -> &[f64] {
        let n = self.n_coords();
        &self.e[t * n..(t + 1) * n]
    }

    /// Seasonal row for 0-based row `t`.
    pub fn design(&self, t: usize) -> &DesignRow {
        &self.designs[t]
    }

    /// Seasonal row `h` months past the last observation.
    pub fn future_design(&self, h: usize) -> DesignRow {
        fourier_row(self.series.global_index(self.len() - 1) + h as i64, &self.spec)
    }
}

/// `φ = exp(f·γ)` with the exponent clamped to `±LOG_PRECISION_CLAMP`.
pub fn precision_at(gamma: &[f64], f: &DesignRow) -> Result<f64> {
    if gamma.len() != f.len() {
        return Err(Error::InvalidArgument(format!("gamma has {} terms, design row {}", gamma.len(), f.len())));
    }
    Ok(f.dot(gamma).clamp(-LOG_PRECISION_CLAMP, LOG_PRECISION_CLAMP).exp())
}

/// Whether [`precision_at`] clamps at this row.
pub fn precision_clamped(gamma: &[f64], f: &DesignRow) -> bool {
    f.dot(gamma).abs() > LOG_PRECISION_CLAMP
}

/// In-sample `η_t` for 1-based `t` in `3..=T`.
pub fn mean_recursion(params: &BdarmaParams, data: &ModelData, t: usize) -> Result<AlrVector> {
    params.check(data)?;
    if t < 3 || t > data.len() {
        return Err(Error::OutOfRange { index: t, reason: format!("in-sample recursion needs 3 <= t <= {}", data.len()) });
    }
    let n = data.n_coords();
    let row = t - 1;
    let mut xb = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for (lag, buf) in xb.iter_mut().enumerate() {
        apply_block(data.design(row - lag), &params.beta, buf);
    }
    let d1 = DVector::from_iterator(n, data.e(row - 1).iter().zip(&xb[1]).map(|(a, b)| a - b));
    let d2 = DVector::from_iterator(n, data.e(row - 2).iter().zip(&xb[2]).map(|(a, b)| a - b));
    let eta = DVector::from_column_slice(&xb[0]) + &params.a1 * d1 + &params.a2 * d2;
    AlrVector::new(eta.iter().copied().collect(), Arc::clone(data.basis()))
}

/// Log-posterior and (optionally) its gradient at a packed parameter vector.
/// Returns the value (0 when `want_value` is false) and the number of
/// clamped precision evaluations.
fn evaluate(data: &ModelData, theta: &[f64], mut grad: Option<&mut [f64]>, want_value: bool) -> (f64, u64) {
    let layout = data.layout();
    let (n, p) = (layout.n_coords, layout.n_terms);
    let n_parts = n + 1;
    let reference = data.basis().reference();
    let a1 = &theta[..n * n];
    let a2 = &theta[n * n..2 * n * n];
    let beta = &theta[layout.beta_offset()..layout.gamma_offset()];
    let gamma = &theta[layout.gamma_offset()..];
    let t_len = data.len();

    let mut xb = vec![0.0; t_len * n];
    for t in 0..t_len {
        apply_block(&data.designs[t], beta, &mut xb[t * n..(t + 1) * n]);
    }
    let mut gx = if grad.is_some() { vec![0.0; t_len * n] } else { Vec::new() };
    if let Some(g) = grad.as_deref_mut() {
        g.fill(0.0);
    }

    let mut value = 0.0;
    let mut clamps = 0;
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    let mut eta = vec![0.0; n];
    let mut mu = vec![0.0; n_parts];
    let mut w = vec![0.0; n_parts];
    let mut r = vec![0.0; n];

    for t in 2..t_len {
        for k in 0..n {
            d1[k] = data.e[(t - 1) * n + k] - xb[(t - 1) * n + k];
            d2[k] = data.e[(t - 2) * n + k] - xb[(t - 2) * n + k];
        }
        for i in 0..n {
            let mut s = xb[t * n + i];
            for k in 0..n {
                s += a1[i * n + k] * d1[k] + a2[i * n + k] * d2[k];
            }
            eta[i] = s;
        }
        alr_inv_into(&eta, reference, &mut mu);
        let f = &data.designs[t];
        let s = f.dot(gamma);
        let clamped = s.abs() > LOG_PRECISION_CLAMP;
        clamps += clamped as u64;
        let phi = s.clamp(-LOG_PRECISION_CLAMP, LOG_PRECISION_CLAMP).exp();
        let ly = &data.log_y[t * n_parts..(t + 1) * n_parts];

        if want_value {
            value += ln_gamma(phi);
            for j in 0..n_parts {
                let a = phi * mu[j];
                value += (a - 1.0) * ly[j] - ln_gamma(a);
            }
        }

        if let Some(g) = grad.as_deref_mut() {
            let psi = digamma(phi);
            let mut gm = 0.0;
            for j in 0..n_parts {
                let gj = psi - digamma(phi * mu[j]) + ly[j];
                w[j] = phi * gj;
                gm += gj * mu[j];
            }
            let wbar = phi * gm;
            if !clamped {
                let go = layout.gamma_offset();
                for (k, fk) in f.f.iter().enumerate() {
                    g[go + k] += wbar * fk;
                }
            }
            for (k, &pk) in data.coord_parts.iter().enumerate() {
                r[k] = mu[pk] * (w[pk] - wbar);
            }
            let (ga1, rest) = g.split_at_mut(n * n);
            let ga2 = &mut rest[..n * n];
            for i in 0..n {
                for k in 0..n {
                    ga1[i * n + k] += r[i] * d1[k];
                    ga2[i * n + k] += r[i] * d2[k];
                }
            }
            for k in 0..n {
                gx[t * n + k] += r[k];
                let (mut s1, mut s2) = (0.0, 0.0);
                for i in 0..n {
                    s1 += a1[i * n + k] * r[i];
                    s2 += a2[i * n + k] * r[i];
                }
                gx[(t - 1) * n + k] -= s1;
                gx[(t - 2) * n + k] -= s2;
            }
        }
    }

    if let Some(g) = grad {
        let bo = layout.beta_offset();
        for s in 0..t_len {
            let f = &data.designs[s].f;
            for j in 0..n {
                let v = gx[s * n + j];
                if v != 0.0 {
                    for (k, fk) in f.iter().enumerate() {
                        g[bo + j * p + k] += v * fk;
                    }
                }
            }
        }
        for (gi, th) in g.iter_mut().zip(theta) {
            *gi -= th;
        }
    }
    if want_value {
        value -= 0.5 * theta.iter().map(|v| v * v).sum::<f64>() + HALF_LN_2PI * theta.len() as f64;
    }
    (value, clamps)
}

/// Log of the (normalized) prior plus the Dirichlet log-likelihood over
/// `t = 3..T`.
pub fn log_posterior(params: &BdarmaParams, data: &ModelData) -> Result<f64> {
    params.check(data)?;
    Ok(evaluate(data, &params.to_flat(), None, true).0)
}

/// Exact gradient of [`log_posterior`] in packing order.
pub fn grad_log_posterior(params: &BdarmaParams, data: &ModelData) -> Result<Vec<f64>> {
    params.check(data)?;
    let mut g = vec![0.0; data.layout().dim()];
    evaluate(data, &params.to_flat(), Some(&mut g), false);
    Ok(g)
}

/// The posterior as an HMC target over the packed vector.
pub struct BdarmaTarget<'a> {
    data: &'a ModelData,
    clamps: AtomicU64,
}

impl<'a> BdarmaTarget<'a> {
    pub fn new(data: &'a ModelData) -> Self {
        BdarmaTarget { data, clamps: AtomicU64::new(0) }
    }

    /// Precision evaluations that hit the clamp so far.
    pub fn clamp_count(&self) -> u64 {
        self.clamps.load(Ordering::Relaxed)
    }

    fn record(&self, c: u64) {
        if c > 0 {
            self.clamps.fetch_add(c, Ordering::Relaxed);
        }
    }
}

impl LogDensity for BdarmaTarget<'_> {
    fn dim(&self) -> usize {
        self.data.layout().dim()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let (v, c) = evaluate(self.data, x, None, true);
        self.record(c);
        v
    }

    fn log_density_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let (v, c) = evaluate(self.data, x, Some(grad), true);
        self.record(c);
        v
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        let (_, c) = evaluate(self.data, x, Some(grad), false);
        self.record(c);
    }
}

/// Coarse starting point: β from per-coordinate seasonal regressions, the
/// precision intercept from a moment match of the Dirichlet variance, all
/// other entries N(0, 0.1²).
pub fn initial_point<R: Rng + ?Sized>(data: &ModelData, rng: &mut R) -> Vec<f64> {
    let layout = data.layout();
    let (n, p, t_len) = (layout.n_coords, layout.n_terms, data.len());
    let mut theta: Vec<f64> = (0..layout.dim()).map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();

    let x = DMatrix::from_fn(t_len, p, |t, k| data.designs[t].f[k]);
    let y = DMatrix::from_fn(t_len, n, |t, j| data.e[t * n + j]);
    let names = term_names(p);
    let beta = match least_squares(&x, &y, &names) {
        Ok(b) => b,
        Err(_) => {
            let mut b = DMatrix::zeros(p, n);
            for j in 0..n {
                b[(0, j)] = y.column(j).mean();
            }
            b
        }
    };
    let bo = layout.beta_offset();
    for j in 0..n {
        for k in 0..p {
            theta[bo + j * p + k] = beta[(k, j)];
        }
    }

    // Var(y_j) = μ_j(1 − μ_j)/(φ + 1) pooled over parts and months.
    let mut spread = 0.0;
    let mut resid = 0.0;
    let mut eta = vec![0.0; n];
    let mut mu = vec![0.0; n + 1];
    for t in 0..t_len {
        apply_block(&data.designs[t], &theta[bo..bo + n * p], &mut eta);
        alr_inv_into(&eta, data.basis().reference(), &mut mu);
        for (m, y) in mu.iter().zip(data.series.shares(t)) {
            spread += m * (1.0 - m);
            resid += (y - m) * (y - m);
        }
    }
    let phi = if resid > 0.0 { (spread / resid - 1.0).max(1.0) } else { 1e6 };
    theta[layout.gamma_offset()] = phi.ln().clamp(0.0, 15.0);
    theta
}

/// Posterior draws plus model-specific counters.
#[derive(Debug, Clone)]
pub struct BdarmaFit {
    pub layout: ParamLayout,
    pub draws: PosteriorDraws,
    pub precision_clamps: u64,
}

/// Runs HMC on the posterior of `data`.
pub fn fit(data: &ModelData, config: &HmcConfig) -> Result<BdarmaFit> {
    let target = BdarmaTarget::new(data);
    let init = |_chain: usize, rng: &mut ChaCha8Rng| initial_point(data, rng);
    let draws = hmc::run_from(&target, config, &init)?;
    Ok(BdarmaFit { layout: data.layout(), draws, precision_clamps: target.clamp_count() })
}

/// Deterministic out-of-sample means `η_{T+h}` and precisions `φ_{T+h}`,
/// `h = 1..=horizon`, at one packed parameter vector.
pub fn forecast_path(theta: &[f64], data: &ModelData, horizon: usize) -> Vec<(Vec<f64>, f64)> {
    let layout = data.layout();
    let n = layout.n_coords;
    let a1 = &theta[..n * n];
    let a2 = &theta[n * n..2 * n * n];
    let beta = &theta[layout.beta_offset()..layout.gamma_offset()];
    let gamma = &theta[layout.gamma_offset()..];
    let t_len = data.len();

    // History of (state, X β) for the two most recent indices; index T is last.
    let mut xb_prev = vec![vec![0.0; n], vec![0.0; n]];
    let mut state_prev = vec![vec![0.0; n], vec![0.0; n]];
    for lag in 0..2 {
        if t_len > lag {
            let row = t_len - 1 - lag;
            apply_block(&data.designs[row], beta, &mut xb_prev[lag]);
            state_prev[lag].copy_from_slice(data.e(row));
        } else {
            // Short history: absent lags contribute nothing.
            state_prev[lag].fill(0.0);
        }
    }
    let mut out = Vec::with_capacity(horizon);
    for h in 1..=horizon {
        let f = data.future_design(h);
        let mut xb = vec![0.0; n];
        apply_block(&f, beta, &mut xb);
        let mut eta = xb.clone();
        for i in 0..n {
            for k in 0..n {
                eta[i] += a1[i * n + k] * (state_prev[0][k] - xb_prev[0][k]) + a2[i * n + k] * (state_prev[1][k] - xb_prev[1][k]);
            }
        }
        let phi = f.dot(gamma).clamp(-LOG_PRECISION_CLAMP, LOG_PRECISION_CLAMP).exp();
        state_prev.swap(0, 1);
        xb_prev.swap(0, 1);
        state_prev[0].copy_from_slice(&eta);
        xb_prev[0] = xb;
        out.push((eta, phi));
    }
    out
}

/// Predictive fan: for each posterior draw `m` the mean path is propagated
/// deterministically and one composition per horizon is drawn from
/// Dirichlet(φμ), using RNG stream `m` under `seed`.
pub fn forecast_fan(draws: &PosteriorDraws, data: &ModelData, horizon: usize, seed: u64) -> Result<ForecastFan> {
    if horizon < 1 {
        return Err(Error::InvalidArgument("horizon must be >= 1".into()));
    }
    if draws.dim() != data.layout().dim() {
        return Err(Error::InvalidArgument(format!(
            "draws have dimension {}, model needs {}",
            draws.dim(),
            data.layout().dim()
        )));
    }
    let j = data.basis().n_parts();
    let reference = data.basis().reference();
    let members: Vec<Vec<f64>> = (0..draws.len())
        .into_par_iter()
        .map(|m| {
            let mut rng = hmc::stream_rng(seed, m as u64);
            let mut out = vec![0.0; horizon * j];
            let mut mu = vec![0.0; j];
            let mut alpha = vec![0.0; j];
            for (h, (eta, phi)) in forecast_path(draws.draw(m), data, horizon).into_iter().enumerate() {
                alr_inv_into(&eta, reference, &mut mu);
                for (a, u) in alpha.iter_mut().zip(&mu) {
                    *a = (phi * u).max(f64::MIN_POSITIVE);
                }
                dirichlet::sample_into(&alpha, &mut rng, &mut out[h * j..(h + 1) * j]);
            }
            out
        })
        .collect();
    let fans = (0..horizon)
        .map(|h| {
            let flat = members.iter().flat_map(|m| m[h * j..(h + 1) * j].iter().copied()).collect();
            Fan::from_flat_unchecked(Arc::clone(data.basis()), flat)
        })
        .collect();
    ForecastFan::new(fans)
}

/// Synthetic series of length `t_len` from the model at `params`. The first
/// two months are drawn around the seasonal mean `X_tβ` (zero pre-sample
/// deviations); later months follow the recursion with observed feedback.
/// Month `t` (1-based) uses global index `t`.
pub fn simulate_series<R: Rng + ?Sized>(
    params: &BdarmaParams,
    t_len: usize,
    basis: Arc<Basis>,
    spec: &FourierSpec,
    start: crate::series::YearMonth,
    rng: &mut R,
) -> Result<CompositionalSeries> {
    if t_len < 3 {
        return Err(Error::InsufficientData { needed: 3, have: t_len });
    }
    let layout = params.layout();
    if layout != ParamLayout::for_basis(&basis, spec) || params.a2.shape() != params.a1.shape() {
        return Err(Error::InvalidArgument("parameters do not match basis and seasonal spec".into()));
    }
    let theta = params.to_flat();
    if let Some(i) = theta.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { label: format!("parameter {i}"), value: theta[i] });
    }
    let n = layout.n_coords;
    let j = basis.n_parts();
    let reference = basis.reference();
    let mut shares = vec![0.0; t_len * j];
    let mut e = vec![0.0; t_len * n];
    let mut xb = vec![0.0; t_len * n];
    let mut mu = vec![0.0; j];
    let mut alpha = vec![0.0; j];
    for t in 0..t_len {
        let f = fourier_row(t as i64 + 1, spec);
        apply_block(&f, &params.beta, &mut xb[t * n..(t + 1) * n]);
        let mut eta = xb[t * n..(t + 1) * n].to_vec();
        if t >= 2 {
            for i in 0..n {
                for k in 0..n {
                    eta[i] += params.a1[(i, k)] * (e[(t - 1) * n + k] - xb[(t - 1) * n + k])
                        + params.a2[(i, k)] * (e[(t - 2) * n + k] - xb[(t - 2) * n + k]);
                }
            }
        }
        alr_inv_into(&eta, reference, &mut mu);
        let phi = f.dot(&params.gamma).clamp(-LOG_PRECISION_CLAMP, LOG_PRECISION_CLAMP).exp();
        for (a, u) in alpha.iter_mut().zip(&mu) {
            *a = (phi * u).max(f64::MIN_POSITIVE);
        }
        let row = &mut shares[t * j..(t + 1) * j];
        dirichlet::sample_into(&alpha, rng, row);
        alr_into(row, reference, &mut e[t * n..(t + 1) * n]);
    }
    Ok(CompositionalSeries::from_flat(basis, start, 1, shares))
}

/// Writes draws as CSV: `chain_id` then one column per parameter.
pub fn write_draws_csv<W: Write>(draws: &PosteriorDraws, names: &[String], w: W) -> Result<()> {
    if names.len() != draws.dim() {
        return Err(Error::InvalidArgument(format!("{} names for {} parameters", names.len(), draws.dim())));
    }
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["chain_id".to_string()];
    header.extend(names.iter().cloned());
    wr.write_record(&header)?;
    for (m, x) in draws.draws().enumerate() {
        let mut rec = vec![draws.chain_ids()[m].to_string()];
        rec.extend(x.iter().map(|v| v.to_string()));
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads a file produced by [`write_draws_csv`]; returns parameter names and
/// draws (without diagnostics).
pub fn read_draws_csv<R: Read>(r: R) -> Result<(Vec<String>, PosteriorDraws)> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers()?.clone();
    if header.get(0) != Some("chain_id") || header.len() < 2 {
        return Err(Error::Parse { row: 1, column: "chain_id".into(), message: "first column must be chain_id".into() });
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut values = Vec::new();
    let mut chain_ids = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        let parse_err = |col: &str, msg: String| Error::Parse { row, column: col.to_string(), message: msg };
        chain_ids.push(rec.get(0).unwrap_or("").parse::<usize>().map_err(|e| parse_err("chain_id", e.to_string()))?);
        for (k, name) in names.iter().enumerate() {
            let v: f64 = rec.get(k + 1).unwrap_or("").parse().map_err(|e: std::num::ParseFloatError| parse_err(name, e.to_string()))?;
            values.push(v);
        }
    }
    let draws = PosteriorDraws::new(names.len(), values, chain_ids)?;
    Ok((names, draws))
}
