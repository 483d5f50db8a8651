//! Adaptive Hamiltonian Monte Carlo with a diagonal Euclidean metric.
//!
//! Each iteration integrates a leapfrog trajectory whose length is drawn
//! uniformly from `1..=L`, where `L = ceil(INTEGRATION_TIME / ε)` is capped by
//! [`HmcConfig::max_leapfrog`]. Warm-up runs dual-averaging step-size
//! adaptation throughout and estimates the diagonal mass in doubling windows.
//! A transition whose energy error exceeds [`DIVERGENCE_THRESHOLD`] (or turns
//! non-finite) is divergent: it is rejected and counted.

mod adapt;
pub mod diagnostics;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use adapt::{mass_window_ends, DualAveraging, Welford};
pub use diagnostics::{bulk_ess, bulk_ess_scalar, ess_scalar, split_rhat, split_rhat_scalar};

/// Energy error above which a transition counts as divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1000.0;

/// Upper end of the jittered integration time, in units of the (mass
/// preconditioned) posterior scale.
pub const INTEGRATION_TIME: f64 = std::f64::consts::PI;

/// A differentiable log-density. Implementations must be safe to evaluate
/// from several threads at once.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    fn log_density(&self, x: &[f64]) -> f64;

    /// Fills `grad` and returns the log-density.
    fn log_density_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64;

    /// Gradient only; override when the value is costly.
    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        self.log_density_and_gradient(x, grad);
    }
}

/// Sampler settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HmcConfig {
    #[serde(rename = "chains")]
    pub n_chains: usize,
    #[serde(rename = "warmup")]
    pub n_warmup: usize,
    #[serde(rename = "keep")]
    pub n_keep: usize,
    pub target_accept: f64,
    pub max_leapfrog: usize,
    pub seed: u64,
    /// Starting step size (skips the initial heuristic search).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_step_size: Option<f64>,
    /// Starting inverse mass diagonal.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_inv_mass: Option<Vec<f64>>,
}

impl Default for HmcConfig {
    fn default() -> Self {
        HmcConfig {
            n_chains: 4,
            n_warmup: 500,
            n_keep: 500,
            target_accept: 0.8,
            max_leapfrog: 256,
            seed: 0,
            initial_step_size: None,
            initial_inv_mass: None,
        }
    }
}

impl HmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_chains < 1 || self.n_warmup < 1 || self.n_keep < 1 || self.max_leapfrog < 1 {
            return Err(Error::InvalidArgument("chains, warmup, keep and max_leapfrog must all be >= 1".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::InvalidArgument(format!("target_accept {} not in (0, 1)", self.target_accept)));
        }
        if let Some(e) = self.initial_step_size {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::InvalidArgument("initial_step_size must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn total_draws(&self) -> usize {
        self.n_chains * self.n_keep
    }
}

/// Per-run sampler diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub split_rhat: Vec<f64>,
    pub bulk_ess: Vec<f64>,
    /// Divergent transitions per chain, sampling phase only.
    pub divergences: Vec<usize>,
    /// Divergent transitions per chain during warm-up.
    pub warmup_divergences: Vec<usize>,
    pub mean_accept: Vec<f64>,
    pub step_size: Vec<f64>,
    pub inv_mass: Vec<Vec<f64>>,
    pub n_leapfrog: Vec<u64>,
}

/// Compact JSON-friendly summary of [`ChainDiagnostics`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSummary {
    pub max_rhat: f64,
    pub min_rhat: f64,
    pub min_bulk_ess: f64,
    pub divergences: usize,
    pub warmup_divergences: usize,
    pub step_sizes: Vec<f64>,
    pub mean_accept: Vec<f64>,
}

impl ChainDiagnostics {
    pub fn total_divergences(&self) -> usize {
        self.divergences.iter().sum()
    }

    /// Extremes over dimensions; NaN entries (constant dimensions) are skipped.
    pub fn summary(&self) -> DiagnosticsSummary {
        let finite = |v: &[f64]| v.iter().copied().filter(|x| !x.is_nan()).collect::<Vec<_>>();
        let rh = finite(&self.split_rhat);
        let ess = finite(&self.bulk_ess);
        DiagnosticsSummary {
            max_rhat: rh.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            min_rhat: rh.iter().copied().fold(f64::INFINITY, f64::min),
            min_bulk_ess: ess.iter().copied().fold(f64::INFINITY, f64::min),
            divergences: self.total_divergences(),
            warmup_divergences: self.warmup_divergences.iter().sum(),
            step_sizes: self.step_size.clone(),
            mean_accept: self.mean_accept.clone(),
        }
    }
}

/// Retained draws of all chains, chain-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    dim: usize,
    values: Vec<f64>,
    chain_ids: Vec<usize>,
    pub diagnostics: Option<ChainDiagnostics>,
}

impl PosteriorDraws {
    pub fn new(dim: usize, values: Vec<f64>, chain_ids: Vec<usize>) -> Result<Self> {
        if dim == 0 || values.len() != dim * chain_ids.len() {
            return Err(Error::InvalidArgument(format!(
                "{} values do not form {} draws of dimension {dim}",
                values.len(),
                chain_ids.len()
            )));
        }
        Ok(PosteriorDraws { dim, values, chain_ids, diagnostics: None })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.chain_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chain_ids.is_empty()
    }

    pub fn draw(&self, m: usize) -> &[f64] {
        &self.values[m * self.dim..(m + 1) * self.dim]
    }

    pub fn draws(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks(self.dim)
    }

    pub fn chain_ids(&self) -> &[usize] {
        &self.chain_ids
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Draws of one coordinate across all chains.
    pub fn coordinate(&self, d: usize) -> Vec<f64> {
        self.draws().map(|x| x[d]).collect()
    }

    /// Flat per-chain buffers, in chain-id order.
    pub fn by_chain(&self) -> Vec<Vec<f64>> {
        let n_chains = self.chain_ids.iter().copied().max().map_or(0, |c| c + 1);
        let mut out = vec![Vec::new(); n_chains];
        for (m, c) in self.chain_ids.iter().enumerate() {
            out[*c].extend_from_slice(self.draw(m));
        }
        out
    }
}

/// Runs one leapfrog trajectory of `n_steps` steps in place. `grad` must hold
/// the gradient at `q` on entry and holds the gradient at the end point on
/// exit. Returns the log-density at the end point, or `None` if the
/// trajectory hit a non-finite value.
pub fn leapfrog<T: LogDensity + ?Sized>(
    target: &T,
    q: &mut [f64],
    p: &mut [f64],
    grad: &mut [f64],
    step_size: f64,
    inv_mass: &[f64],
    n_steps: usize,
) -> Option<f64> {
    let half = 0.5 * step_size;
    let mut logp = f64::NAN;
    for step in 0..n_steps {
        for (pi, gi) in p.iter_mut().zip(grad.iter()) {
            *pi += half * gi;
        }
        for ((qi, pi), mi) in q.iter_mut().zip(p.iter()).zip(inv_mass) {
            *qi += step_size * mi * pi;
        }
        if step + 1 == n_steps {
            logp = target.log_density_and_gradient(q, grad);
        } else {
            target.gradient(q, grad);
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return None;
        }
        for (pi, gi) in p.iter_mut().zip(grad.iter()) {
            *pi += half * gi;
        }
    }
    logp.is_finite().then_some(logp)
}

/// `½ pᵀ M⁻¹ p`.
pub fn kinetic_energy(p: &[f64], inv_mass: &[f64]) -> f64 {
    0.5 * p.iter().zip(inv_mass).map(|(pi, mi)| pi * pi * mi).sum::<f64>()
}

/// Outcome of one Metropolis-corrected trajectory.
#[derive(Debug, Clone, Copy)]
pub struct Transition {
    pub accept_prob: f64,
    pub accepted: bool,
    pub divergent: bool,
    pub n_leapfrog: usize,
}

/// A single Markov chain with fixed sampler state; the adaptation schedule
/// lives in [`run`].
pub struct Chain<'a, T: LogDensity + ?Sized> {
    target: &'a T,
    q: Vec<f64>,
    logp: f64,
    grad: Vec<f64>,
    pub step_size: f64,
    pub inv_mass: Vec<f64>,
    rng: ChaCha8Rng,
    // scratch
    q_new: Vec<f64>,
    p: Vec<f64>,
    grad_new: Vec<f64>,
}

impl<'a, T: LogDensity + ?Sized> Chain<'a, T> {
    /// Fails with [`Error::Initialization`] when the target or its gradient is
    /// not finite at `q0`.
    pub fn new(target: &'a T, q0: Vec<f64>, rng: ChaCha8Rng, chain: usize) -> Result<Self> {
        let dim = target.dim();
        if q0.len() != dim {
            return Err(Error::InvalidArgument(format!("initial point has length {}, target has {dim}", q0.len())));
        }
        let mut grad = vec![0.0; dim];
        let logp = target.log_density_and_gradient(&q0, &mut grad);
        let mut bad: Vec<usize> = (0..dim).filter(|&i| !(q0[i].is_finite() && grad[i].is_finite())).collect();
        if !logp.is_finite() && bad.is_empty() {
            bad = (0..dim).collect();
        }
        if !bad.is_empty() {
            return Err(Error::Initialization { chain, coordinates: bad });
        }
        Ok(Chain {
            target,
            q: q0,
            logp,
            grad,
            step_size: 1.0,
            inv_mass: vec![1.0; dim],
            rng,
            q_new: vec![0.0; dim],
            p: vec![0.0; dim],
            grad_new: vec![0.0; dim],
        })
    }

    pub fn position(&self) -> &[f64] {
        &self.q
    }

    pub fn log_density(&self) -> f64 {
        self.logp
    }

    fn draw_momentum(&mut self) {
        for (pi, mi) in self.p.iter_mut().zip(&self.inv_mass) {
            let z: f64 = self.rng.sample(StandardNormal);
            *pi = z / mi.sqrt();
        }
    }

    /// Number of leapfrog steps drawn uniformly from `1..=max_steps`.
    pub fn jittered_steps(&mut self, max_steps: usize) -> usize {
        self.rng.random_range(1..=max_steps.max(1))
    }

    /// One HMC transition with `n_steps` leapfrog steps.
    pub fn transition(&mut self, n_steps: usize) -> Transition {
        self.draw_momentum();
        let h0 = -self.logp + kinetic_energy(&self.p, &self.inv_mass);
        self.q_new.copy_from_slice(&self.q);
        self.grad_new.copy_from_slice(&self.grad);
        let end = leapfrog(
            self.target,
            &mut self.q_new,
            &mut self.p,
            &mut self.grad_new,
            self.step_size,
            &self.inv_mass,
            n_steps,
        );
        let energy_error = end.map(|lp| -lp + kinetic_energy(&self.p, &self.inv_mass) - h0);
        match (end, energy_error) {
            (Some(lp), Some(de)) if de.is_finite() && de <= DIVERGENCE_THRESHOLD => {
                let accept_prob = (-de).exp().min(1.0);
                let u: f64 = self.rng.random();
                let accepted = u < accept_prob;
                if accepted {
                    std::mem::swap(&mut self.q, &mut self.q_new);
                    std::mem::swap(&mut self.grad, &mut self.grad_new);
                    self.logp = lp;
                }
                Transition { accept_prob, accepted, divergent: false, n_leapfrog: n_steps }
            }
            _ => Transition { accept_prob: 0.0, accepted: false, divergent: true, n_leapfrog: n_steps },
        }
    }

    /// Doubles or halves the step size until the one-step acceptance crosses
    /// 0.8. Bounded to 100 rounds and to `[1e-10, 1e5]`.
    pub fn find_reasonable_step_size(&mut self) {
        let target = 0.8f64.ln();
        let mut direction = 0.0;
        for _ in 0..100 {
            self.draw_momentum();
            let h0 = -self.logp + kinetic_energy(&self.p, &self.inv_mass);
            self.q_new.copy_from_slice(&self.q);
            self.grad_new.copy_from_slice(&self.grad);
            let end = leapfrog(
                self.target,
                &mut self.q_new,
                &mut self.p,
                &mut self.grad_new,
                self.step_size,
                &self.inv_mass,
                1,
            );
            let delta = match end {
                Some(lp) => {
                    let h = -lp + kinetic_energy(&self.p, &self.inv_mass);
                    if h.is_finite() {
                        h0 - h
                    } else {
                        f64::NEG_INFINITY
                    }
                }
                None => f64::NEG_INFINITY,
            };
            if direction == 0.0 {
                direction = if delta > target { 1.0 } else { -1.0 };
            }
            if (direction > 0.0 && delta <= target) || (direction < 0.0 && delta > target) {
                break;
            }
            let next = if direction > 0.0 { 2.0 * self.step_size } else { 0.5 * self.step_size };
            if !(1e-10..=1e5).contains(&next) {
                break;
            }
            self.step_size = next;
        }
    }
}

fn max_steps(step_size: f64, cap: usize) -> usize {
    let l = (INTEGRATION_TIME / step_size).ceil();
    if l.is_finite() {
        (l as usize).clamp(1, cap)
    } else {
        cap
    }
}

/// Seeded stream for `stream` (e.g. a chain id) under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct ChainOutput {
    draws: Vec<f64>,
    divergences: usize,
    warmup_divergences: usize,
    mean_accept: f64,
    step_size: f64,
    inv_mass: Vec<f64>,
    n_leapfrog: u64,
}

fn run_chain<T: LogDensity + ?Sized>(
    target: &T,
    config: &HmcConfig,
    chain: usize,
    init: &(dyn Fn(usize, &mut ChaCha8Rng) -> Vec<f64> + Sync),
) -> Result<ChainOutput> {
    let dim = target.dim();
    let mut rng = stream_rng(config.seed, chain as u64);
    let q0 = init(chain, &mut rng);
    let mut ch = Chain::new(target, q0, rng, chain)?;
    if let Some(m) = &config.initial_inv_mass {
        if m.len() != dim || m.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument("initial_inv_mass must be positive with one entry per dimension".into()));
        }
        ch.inv_mass = m.clone();
    }
    match config.initial_step_size {
        Some(e) => ch.step_size = e,
        None => ch.find_reasonable_step_size(),
    }

    let windows = mass_window_ends(config.n_warmup);
    let first_window_start = (0.15 * config.n_warmup as f64) as usize;
    let last_window_end = windows.last().copied();
    let mut da = DualAveraging::new(config.target_accept, ch.step_size);
    let mut welford = Welford::new(dim);
    let mut n_leapfrog = 0u64;
    let mut warmup_divergences = 0;

    for it in 0..config.n_warmup {
        let l = max_steps(ch.step_size, config.max_leapfrog);
        let n = ch.jittered_steps(l);
        let tr = ch.transition(n);
        n_leapfrog += tr.n_leapfrog as u64;
        warmup_divergences += tr.divergent as usize;
        ch.step_size = da.update(tr.accept_prob);

        let in_mass_phase = !windows.is_empty() && it >= first_window_start && Some(it) <= last_window_end;
        if in_mass_phase {
            welford.push(&ch.q);
            if windows.contains(&it) {
                ch.inv_mass = welford.regularized_variance();
                welford.reset();
                ch.find_reasonable_step_size();
                da.restart(ch.step_size);
            }
        }
    }
    ch.step_size = da.final_step_size();
    if !(ch.step_size.is_finite() && ch.step_size > 0.0) {
        ch.step_size = 1e-3;
    }

    let l = max_steps(ch.step_size, config.max_leapfrog);
    let mut draws = Vec::with_capacity(config.n_keep * dim);
    let mut divergences = 0;
    let mut accept_sum = 0.0;
    for _ in 0..config.n_keep {
        let n = ch.jittered_steps(l);
        let tr = ch.transition(n);
        n_leapfrog += tr.n_leapfrog as u64;
        divergences += tr.divergent as usize;
        accept_sum += tr.accept_prob;
        draws.extend_from_slice(&ch.q);
    }
    Ok(ChainOutput {
        draws,
        divergences,
        warmup_divergences,
        mean_accept: accept_sum / config.n_keep as f64,
        step_size: ch.step_size,
        inv_mass: ch.inv_mass,
        n_leapfrog,
    })
}

/// Runs the sampler with every chain started uniformly in `[-2, 2]^D`.
pub fn run<T: LogDensity + ?Sized>(target: &T, config: &HmcConfig) -> Result<PosteriorDraws> {
    let init = |_chain: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..target.dim()).map(|_| rng.random_range(-2.0..2.0)).collect()
    };
    run_from(target, config, &init)
}

/// Runs `config.n_chains` independent chains (in parallel) from initial
/// points produced by `init(chain, rng)`. Results are ordered by chain id,
/// so output is identical for any thread schedule.
pub fn run_from<T: LogDensity + ?Sized>(
    target: &T,
    config: &HmcConfig,
    init: &(dyn Fn(usize, &mut ChaCha8Rng) -> Vec<f64> + Sync),
) -> Result<PosteriorDraws> {
    config.validate()?;
    let dim = target.dim();
    let outputs: Vec<ChainOutput> = (0..config.n_chains)
        .into_par_iter()
        .map(|c| run_chain(target, config, c, init))
        .collect::<Result<_>>()?;

    let per_chain: Vec<Vec<f64>> = outputs.iter().map(|o| o.draws.clone()).collect();
    let (split_rhat, bulk_ess) = if config.n_chains >= 2 && config.n_keep >= 4 {
        (split_rhat(&per_chain, dim), bulk_ess(&per_chain, dim))
    } else if config.n_keep >= 4 {
        (vec![f64::NAN; dim], bulk_ess(&per_chain, dim))
    } else {
        (vec![f64::NAN; dim], vec![f64::NAN; dim])
    };
    let diagnostics = ChainDiagnostics {
        split_rhat,
        bulk_ess,
        divergences: outputs.iter().map(|o| o.divergences).collect(),
        warmup_divergences: outputs.iter().map(|o| o.warmup_divergences).collect(),
        mean_accept: outputs.iter().map(|o| o.mean_accept).collect(),
        step_size: outputs.iter().map(|o| o.step_size).collect(),
        inv_mass: outputs.iter().map(|o| o.inv_mass.clone()).collect(),
        n_leapfrog: outputs.iter().map(|o| o.n_leapfrog).collect(),
    };
    let chain_ids = (0..config.n_chains).flat_map(|c| std::iter::repeat_n(c, config.n_keep)).collect();
    let values = per_chain.into_iter().flatten().collect();
    let mut draws = PosteriorDraws::new(dim, values, chain_ids)?;
    draws.diagnostics = Some(diagnostics);
    Ok(draws)
}
