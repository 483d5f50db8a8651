use std::sync::Arc;

use bdarma::hmc::PosteriorDraws;
use bdarma::model::{
    forecast_fan, forecast_path, grad_log_posterior, log_posterior, mean_recursion, read_draws_csv, simulate_series,
    write_draws_csv, BdarmaParams, ModelData, ParamLayout,
};
use bdarma::seasonal::{block_design, fourier_row, FourierSpec};
use bdarma::series::{CompositionalSeries, YearMonth};
use bdarma::simplex::{alr_inv_into, Basis, Composition};
use bdarma::special::ln_gamma;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn start() -> YearMonth {
    YearMonth::new(2010, 1).unwrap()
}

fn base_params(layout: ParamLayout, gamma0: f64) -> BdarmaParams {
    let mut p = BdarmaParams::zeros(layout);
    let n = layout.n_coords();
    for i in 0..n {
        p.a1[(i, i)] = 0.5;
        p.a2[(i, i)] = 0.2;
        p.beta[i * layout.n_terms()] = 0.3 * i as f64 - 0.2;
        p.beta[i * layout.n_terms() + 1] = 0.2;
    }
    p.gamma[0] = gamma0;
    p
}

fn toy_data(j: usize, k: u32, t_len: usize, seed: u64) -> ModelData {
    let basis = Basis::anonymous(j).unwrap();
    let spec = FourierSpec::monthly(k).unwrap();
    let p = base_params(ParamLayout::for_basis(&basis, &spec), 5.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = simulate_series(&p, t_len, basis, &spec, start(), &mut rng).unwrap();
    ModelData::new(s, spec).unwrap()
}

fn random_theta(dim: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn max_fd_error(data: &ModelData, theta: &[f64]) -> f64 {
    let layout = data.layout();
    let p = BdarmaParams::from_flat(layout, theta).unwrap();
    let g = grad_log_posterior(&p, data).unwrap();
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut x = theta.to_vec();
    for d in 0..theta.len() {
        x[d] = theta[d] + h;
        let up = log_posterior(&BdarmaParams::from_flat(layout, &x).unwrap(), data).unwrap();
        x[d] = theta[d] - h;
        let down = log_posterior(&BdarmaParams::from_flat(layout, &x).unwrap(), data).unwrap();
        x[d] = theta[d];
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - g[d]).abs() / g[d].abs().max(fd.abs()).max(1.0));
    }
    worst
}

#[test]
fn gradient_matches_finite_differences_small() {
    let data = toy_data(3, 3, 24, 1);
    assert_eq!(data.layout().dim(), 29);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..20 {
        let mut theta = random_theta(29, 0.5, &mut rng);
        theta[data.layout().gamma_offset()] += 3.0;
        let err = max_fd_error(&data, &theta);
        assert!(err < 1e-5, "relative error {err}");
    }
}

#[test]
fn gradient_matches_finite_differences_full_size() {
    let data = toy_data(7, 5, 36, 2);
    assert_eq!(data.layout().dim(), 149);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let mut theta = random_theta(149, 0.3, &mut rng);
        theta[data.layout().gamma_offset()] += 4.0;
        let err = max_fd_error(&data, &theta);
        assert!(err < 1e-5, "relative error {err}");
    }
}

#[test]
fn taylor_probe_on_beta() {
    let data = toy_data(3, 2, 30, 3);
    let layout = data.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let theta = random_theta(layout.dim(), 0.3, &mut rng);
    let p = BdarmaParams::from_flat(layout, &theta).unwrap();
    let g = grad_log_posterior(&p, &data).unwrap();
    let d = layout.beta_offset() + 3;
    let base = log_posterior(&p, &data).unwrap();
    let mut prev = f64::INFINITY;
    for delta in [1e-2, 1e-3, 1e-4] {
        let mut x = theta.clone();
        x[d] += delta;
        let v = log_posterior(&BdarmaParams::from_flat(layout, &x).unwrap(), &data).unwrap();
        let remainder = (v - base - g[d] * delta).abs();
        assert!(remainder < prev);
        prev = remainder;
    }
    assert!(prev < 1e-6);
}

/// η_t computed with dense block matrices exactly as written in the model.
fn dense_eta(p: &BdarmaParams, data: &ModelData, t: usize) -> DVector<f64> {
    let n = data.n_coords();
    let beta = DVector::from_column_slice(&p.beta);
    let x = |row: usize| block_design(data.design(row), n);
    let e = |row: usize| DVector::from_column_slice(data.e(row));
    let r = t - 1;
    &x(r) * &beta + &p.a1 * (e(r - 1) - &x(r - 1) * &beta) + &p.a2 * (e(r - 2) - &x(r - 2) * &beta)
}

#[test]
fn recursion_matches_dense_oracle() {
    let data = toy_data(4, 2, 10, 4);
    let layout = data.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..5 {
        let p = BdarmaParams::from_flat(layout, &random_theta(layout.dim(), 0.7, &mut rng)).unwrap();
        for t in 3..=10 {
            let fast = mean_recursion(&p, &data, t).unwrap();
            let slow = dense_eta(&p, &data, t);
            for (a, b) in fast.coords().iter().zip(slow.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn log_posterior_matches_naive_transcription() {
    // J = 3, T = 5, reference is the last part, K = 1.
    let basis = Basis::anonymous(3).unwrap();
    let rows = [[0.2, 0.3, 0.5], [0.25, 0.25, 0.5], [0.1, 0.6, 0.3], [0.3, 0.3, 0.4], [0.15, 0.45, 0.4]];
    let comps = rows.iter().map(|r| Composition::new(r.to_vec(), Arc::clone(&basis)).unwrap()).collect();
    let series = CompositionalSeries::new(basis, start(), comps).unwrap();
    let spec = FourierSpec::monthly(1).unwrap();
    let data = ModelData::new(series, spec).unwrap();
    let layout = data.layout();
    assert_eq!(layout.dim(), 2 * 4 + 2 * 3 + 3);
    let theta = [
        0.3, -0.1, 0.05, 0.2, // A1
        0.1, 0.0, -0.2, 0.15, // A2
        -0.5, 0.1, 0.2, // β, coordinate 1
        0.4, -0.3, 0.05, // β, coordinate 2
        2.0, 0.3, -0.1, // γ
    ];
    let p = BdarmaParams::from_flat(layout, &theta).unwrap();

    let f = |t: f64| [1.0, (2.0 * std::f64::consts::PI * t / 12.0).sin(), (2.0 * std::f64::consts::PI * t / 12.0).cos()];
    let xb = |t: usize| {
        let ft = f(t as f64);
        [
            ft[0] * theta[8] + ft[1] * theta[9] + ft[2] * theta[10],
            ft[0] * theta[11] + ft[1] * theta[12] + ft[2] * theta[13],
        ]
    };
    let e = |t: usize| {
        let y = rows[t - 1];
        [(y[0] / y[2]).ln(), (y[1] / y[2]).ln()]
    };
    let mut ll = 0.0;
    for t in 3..=5 {
        let (x0, x1, x2) = (xb(t), xb(t - 1), xb(t - 2));
        let (e1, e2) = (e(t - 1), e(t - 2));
        let d1 = [e1[0] - x1[0], e1[1] - x1[1]];
        let d2 = [e2[0] - x2[0], e2[1] - x2[1]];
        let eta0 = x0[0] + theta[0] * d1[0] + theta[1] * d1[1] + theta[4] * d2[0] + theta[5] * d2[1];
        let eta1 = x0[1] + theta[2] * d1[0] + theta[3] * d1[1] + theta[6] * d2[0] + theta[7] * d2[1];
        let denom = 1.0 + eta0.exp() + eta1.exp();
        let mu = [eta0.exp() / denom, eta1.exp() / denom, 1.0 / denom];
        let ft = f(t as f64);
        let phi = (ft[0] * theta[14] + ft[1] * theta[15] + ft[2] * theta[16]).exp();
        let y = rows[t - 1];
        ll += ln_gamma(phi);
        for j in 0..3 {
            ll += (phi * mu[j] - 1.0) * y[j].ln() - ln_gamma(phi * mu[j]);
        }
    }
    let prior: f64 = theta.iter().map(|v| -0.5 * v * v - 0.5 * (2.0 * std::f64::consts::PI).ln()).sum();
    let got = log_posterior(&p, &data).unwrap();
    assert!((got - (ll + prior)).abs() < 1e-10, "{got} vs {}", ll + prior);
}

#[test]
fn permutation_equivariance() {
    let data = toy_data(3, 2, 30, 5);
    let layout = data.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let theta = random_theta(layout.dim(), 0.4, &mut rng);
    let p = BdarmaParams::from_flat(layout, &theta).unwrap();

    // Swap the two non-reference parts.
    let basis = Basis::new(["x2", "x1", "x3"], 2).unwrap();
    let rows: Vec<Composition> = data
        .series()
        .rows()
        .map(|r| Composition::new(vec![r[1], r[0], r[2]], Arc::clone(&basis)).unwrap())
        .collect();
    let swapped = ModelData::new(CompositionalSeries::new(basis, start(), rows).unwrap(), *data.spec()).unwrap();
    let perm = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let pt = layout.n_terms();
    let mut q = p.clone();
    q.a1 = &perm * &p.a1 * &perm;
    q.a2 = &perm * &p.a2 * &perm;
    q.beta = [&p.beta[pt..], &p.beta[..pt]].concat();
    let a = log_posterior(&p, &data).unwrap();
    let b = log_posterior(&q, &swapped).unwrap();
    assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
}

fn replicated(theta: &[f64], m: usize) -> PosteriorDraws {
    PosteriorDraws::new(theta.len(), theta.repeat(m), vec![0; m]).unwrap()
}

#[test]
fn fan_mean_matches_predictive_mean() {
    let data = toy_data(4, 2, 40, 6);
    let theta = base_params(data.layout(), 4.0).to_flat();
    let m = 2000;
    let fan = forecast_fan(&replicated(&theta, m), &data, 3, 77).unwrap();
    let (eta, phi) = &forecast_path(&theta, &data, 1)[0];
    let mut mu = vec![0.0; 4];
    alr_inv_into(eta, 3, &mut mu);
    let mean = fan.at(1).mean();
    for j in 0..4 {
        let se = (mu[j] * (1.0 - mu[j]) / (phi + 1.0) / m as f64).sqrt();
        assert!((mean[j] - mu[j]).abs() < 3.0 * se, "component {j}: {} vs {}", mean[j], mu[j]);
    }
    for h in 1..=3 {
        for row in fan.at(h).members() {
            assert!(row.iter().all(|v| *v > 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn fan_is_reproducible() {
    let data = toy_data(3, 2, 30, 7);
    let theta = base_params(data.layout(), 4.0).to_flat();
    let a = forecast_fan(&replicated(&theta, 50), &data, 4, 5).unwrap();
    let b = forecast_fan(&replicated(&theta, 50), &data, 4, 5).unwrap();
    assert_eq!(a, b);
    let c = forecast_fan(&replicated(&theta, 50), &data, 4, 6).unwrap();
    assert_ne!(a, c);
}

#[test]
fn fan_collapses_at_high_precision() {
    let data = toy_data(3, 2, 30, 8);
    let layout = data.layout();
    let sd_at = |gamma0: f64| {
        let mut p = base_params(layout, gamma0);
        p.a1.fill(0.0);
        p.a2.fill(0.0);
        let theta = p.to_flat();
        let fan = forecast_fan(&replicated(&theta, 4000), &data, 2, 9).unwrap();
        let mut mu = vec![0.0; 3];
        alr_inv_into(&forecast_path(&theta, &data, 2)[1].0, 2, &mut mu);
        let comp = fan.at(2).component(0);
        let mean = comp.iter().sum::<f64>() / comp.len() as f64;
        let sd = (comp.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (comp.len() - 1) as f64).sqrt();
        (mean, mu[0], sd, (mu[0] * (1.0 - mu[0])).sqrt())
    };
    let (m10, mu10, sd10, s0) = sd_at(10.0);
    let (_, _, sd12, _) = sd_at(12.0);
    assert!((m10 - mu10).abs() < 1e-3);
    assert!((sd10 / (s0 * (-5.0f64).exp()) - 1.0).abs() < 0.1);
    assert!((sd12 / sd10 / (-1.0f64).exp() - 1.0).abs() < 0.1);
}

#[test]
fn simulation_tracks_mean_at_high_precision() {
    let basis = Basis::anonymous(4).unwrap();
    let spec = FourierSpec::monthly(2).unwrap();
    let layout = ParamLayout::for_basis(&basis, &spec);
    let mut p = base_params(layout, 12.0);
    p.a1.fill(0.0);
    p.a2.fill(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let s = simulate_series(&p, 120, Arc::clone(&basis), &spec, start(), &mut rng).unwrap();
    let mut xb = vec![0.0; 3];
    let mut mu = vec![0.0; 4];
    for t in 0..120 {
        bdarma::seasonal::apply_block(&fourier_row(t as i64 + 1, &spec), &p.beta, &mut xb);
        alr_inv_into(&xb, 3, &mut mu);
        for (a, b) in s.shares(t).iter().zip(&mu) {
            assert!((a - b).abs() < 0.005);
        }
    }
}

#[test]
fn simulated_seasonality_peaks_at_lag_twelve() {
    let basis = Basis::anonymous(3).unwrap();
    let spec = FourierSpec::monthly(1).unwrap();
    let layout = ParamLayout::for_basis(&basis, &spec);
    let mut p = BdarmaParams::zeros(layout);
    p.beta = vec![0.0, 0.6, 0.0, 0.0, 0.0, 0.6];
    p.gamma[0] = 6.0;
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let s = simulate_series(&p, 240, basis, &spec, start(), &mut rng).unwrap();
    let x: Vec<f64> = s.rows().map(|r| r[0]).collect();
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let acf = |lag: usize| {
        let num: f64 = (lag..x.len()).map(|t| (x[t] - mean) * (x[t - lag] - mean)).sum();
        num / x.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
    };
    let best = (1..=12).max_by(|a, b| acf(*a).total_cmp(&acf(*b))).unwrap();
    assert_eq!(best, 12);
}

#[test]
fn simulation_is_reproducible() {
    let basis = Basis::anonymous(3).unwrap();
    let spec = FourierSpec::monthly(2).unwrap();
    let p = base_params(ParamLayout::for_basis(&basis, &spec), 5.0);
    let a = simulate_series(&p, 30, Arc::clone(&basis), &spec, start(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let b = simulate_series(&p, 30, basis, &spec, start(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn draws_csv_round_trip() {
    let data = toy_data(3, 2, 12, 9);
    let layout = data.layout();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let values = random_theta(layout.dim() * 4, 1.0, &mut rng);
    let draws = PosteriorDraws::new(layout.dim(), values, vec![0, 0, 1, 1]).unwrap();
    let names = layout.names(data.basis());
    let mut buf = Vec::new();
    write_draws_csv(&draws, &names, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("chain_id,a1_x1_x1,"));
    let (names2, back) = read_draws_csv(&buf[..]).unwrap();
    assert_eq!(names2, names);
    assert_eq!(back.values(), draws.values());
    assert_eq!(back.chain_ids(), draws.chain_ids());
}
