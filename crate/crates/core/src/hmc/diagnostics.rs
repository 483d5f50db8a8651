//! Convergence diagnostics: split-R̂ and rank-normalized bulk ESS.
//!
//! Chains are passed as flat row-major `n_draws × dim` buffers, one per chain.

use crate::special::normal_quantile;

fn column(chain: &[f64], dim: usize, d: usize) -> Vec<f64> {
    chain.iter().skip(d).step_by(dim).copied().collect()
}

fn split_halves(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let half = c.len() / 2;
        out.push(c[..half].to_vec());
        // Odd lengths drop the middle draw.
        out.push(c[c.len() - half..].to_vec());
    }
    out
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Potential scale reduction of one scalar quantity over several chains,
/// each split in half. Zero within-chain variance yields `+∞`.
pub fn split_rhat_scalar(chains: &[Vec<f64>]) -> f64 {
    let halves = split_halves(chains);
    let n = halves.iter().map(Vec::len).min().unwrap_or(0);
    if halves.len() < 2 || n < 2 {
        return f64::NAN;
    }
    let means: Vec<f64> = halves.iter().map(|h| mean(&h[..n])).collect();
    let w = halves.iter().map(|h| sample_var(&h[..n])).sum::<f64>() / halves.len() as f64;
    if !(w > 0.0) {
        return f64::INFINITY;
    }
    let b_over_n = sample_var(&means);
    let nf = n as f64;
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    (var_plus / w).sqrt()
}

/// Split-R̂ for every dimension. Needs at least 2 chains of 4 draws.
pub fn split_rhat(chains: &[Vec<f64>], dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|d| {
            let cols: Vec<Vec<f64>> = chains.iter().map(|c| column(c, dim, d)).collect();
            split_rhat_scalar(&cols)
        })
        .collect()
}

fn autocovariance(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let m = mean(x);
    let c: Vec<f64> = x.iter().map(|v| v - m).collect();
    (0..n)
        .map(|k| c[..n - k].iter().zip(&c[k..]).map(|(a, b)| a * b).sum::<f64>() / n as f64)
        .collect()
}

/// Multi-chain effective sample size with Geyer's initial monotone sequence.
pub fn ess_scalar(chains: &[Vec<f64>]) -> f64 {
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    let m = chains.len();
    if m == 0 || n < 4 {
        return f64::NAN;
    }
    let acov: Vec<Vec<f64>> = chains.iter().map(|c| autocovariance(&c[..n])).collect();
    let nf = n as f64;
    let chain_means: Vec<f64> = chains.iter().map(|c| mean(&c[..n])).collect();
    let mean_var = acov.iter().map(|a| a[0] * nf / (nf - 1.0)).sum::<f64>() / m as f64;
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        var_plus += sample_var(&chain_means);
    }
    if !(var_plus > 0.0) {
        return f64::NAN;
    }
    let rho_at = |k: usize| 1.0 - (mean_var - acov.iter().map(|a| a[k]).sum::<f64>() / m as f64) / var_plus;

    let mut rho = vec![0.0; n + 2];
    rho[0] = 1.0;
    let mut rho_even = 1.0;
    let mut rho_odd = rho_at(1);
    rho[1] = rho_odd;
    let mut s = 1;
    while s < n - 4 && rho_even + rho_odd > 0.0 {
        rho_even = rho_at(s + 1);
        rho_odd = rho_at(s + 2);
        if rho_even + rho_odd >= 0.0 {
            rho[s + 1] = rho_even;
            rho[s + 2] = rho_odd;
        }
        s += 2;
    }
    let max_s = s;
    if rho_even > 0.0 {
        rho[max_s + 1] = rho_even;
    }
    let mut s = 1;
    while s + 3 <= max_s {
        if rho[s + 1] + rho[s + 2] > rho[s - 1] + rho[s] {
            rho[s + 1] = (rho[s - 1] + rho[s]) / 2.0;
            rho[s + 2] = rho[s + 1];
        }
        s += 2;
    }
    let total = (m * n) as f64;
    let tau = -1.0 + 2.0 * rho[..max_s].iter().sum::<f64>() + rho[max_s + 1];
    let tau = tau.max(1.0 / total.log10());
    total / tau
}

/// Normal scores of pooled ranks (ties share their average rank).
fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut pooled: Vec<(f64, usize, usize)> = chains
        .iter()
        .enumerate()
        .flat_map(|(c, xs)| xs.iter().enumerate().map(move |(i, v)| (*v, c, i)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let s = pooled.len() as f64;
    let mut out: Vec<Vec<f64>> = chains.iter().map(|c| vec![0.0; c.len()]).collect();
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        let z = normal_quantile((rank - 0.375) / (s + 0.25));
        for &(_, c, k) in &pooled[i..=j] {
            out[c][k] = z;
        }
        i = j + 1;
    }
    out
}

/// Bulk effective sample size of one scalar: ESS of the rank-normalized,
/// split chains.
pub fn bulk_ess_scalar(chains: &[Vec<f64>]) -> f64 {
    let z = rank_normalize(chains);
    ess_scalar(&split_halves(&z))
}

/// Bulk ESS for every dimension.
pub fn bulk_ess(chains: &[Vec<f64>], dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|d| {
            let cols: Vec<Vec<f64>> = chains.iter().map(|c| column(c, dim, d)).collect();
            if cols.iter().flatten().all(|v| *v == cols[0][0]) {
                return f64::NAN;
            }
            bulk_ess_scalar(&cols)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_chains(seed: u64, m: usize, n: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m).map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()).collect()
    }

    #[test]
    fn constant_chains_give_infinite_rhat() {
        let chains = vec![vec![1.0; 10]; 4];
        assert_eq!(split_rhat_scalar(&chains), f64::INFINITY);
    }

    #[test]
    fn iid_chains_have_rhat_near_one() {
        let r = split_rhat_scalar(&normal_chains(1, 4, 500));
        assert!((0.99..=1.02).contains(&r), "rhat = {r}");
    }

    #[test]
    fn offset_chain_inflates_rhat() {
        let mut chains = normal_chains(2, 4, 500);
        chains[0].iter_mut().for_each(|v| *v += 10.0);
        assert!(split_rhat_scalar(&chains) > 1.5);
    }

    #[test]
    fn iid_ess_is_close_to_draw_count() {
        let ess = bulk_ess_scalar(&normal_chains(3, 4, 500));
        assert!(ess > 1500.0 && ess < 2600.0, "ess = {ess}");
    }

    #[test]
    fn ar1_ess_matches_theory() {
        // AR(1) with φ = 0.9: ESS/N ≈ (1 − φ)/(1 + φ) ≈ 0.053.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let mut x = 0.0;
                (0..5000)
                    .map(|_| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        x = 0.9 * x + e * (1.0f64 - 0.81).sqrt();
                        x
                    })
                    .collect()
            })
            .collect();
        let ratio = ess_scalar(&chains) / 20_000.0;
        assert!((ratio - 0.0526).abs() < 0.015, "ratio = {ratio}");
    }

    #[test]
    fn vector_forms_follow_layout() {
        let chains = normal_chains(5, 4, 200);
        // Interleave as a two-dimensional draw matrix, second dimension constant.
        let flat: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().flat_map(|v| [*v, 3.0]).collect()).collect();
        let r = split_rhat(&flat, 2);
        assert!((r[0] - split_rhat_scalar(&chains)).abs() < 1e-15);
        assert_eq!(r[1], f64::INFINITY);
        assert!(bulk_ess(&flat, 2)[1].is_nan());
    }
}
