use bdarma::backtest::{
    cell_seed, enumerate_origins, read_fan_dump, read_quantiles_csv, run_fixed_origin, run_rolling, write_fan_dump,
    write_quantiles_csv, BacktestConfig, ModelKind, ProtocolSpec,
};
use bdarma::hmc::HmcConfig;
use bdarma::model::{simulate_series, BdarmaParams, ParamLayout};
use bdarma::seasonal::FourierSpec;
use bdarma::series::{CompositionalSeries, YearMonth};
use bdarma::simplex::Basis;
use bdarma::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ym(s: &str) -> YearMonth {
    s.parse().unwrap()
}

fn series(j: usize, k: u32, t_len: usize, seed: u64) -> CompositionalSeries {
    let basis = Basis::anonymous(j).unwrap();
    let spec = FourierSpec::monthly(k).unwrap();
    let layout = ParamLayout::for_basis(&basis, &spec);
    let mut p = BdarmaParams::zeros(layout);
    for i in 0..layout.n_coords() {
        p.a1[(i, i)] = 0.5;
        p.a2[(i, i)] = 0.2;
        p.beta[i * layout.n_terms()] = 0.2 * i as f64;
        p.beta[i * layout.n_terms() + 1] = 0.3;
    }
    p.gamma[0] = 6.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_series(&p, t_len, basis, &spec, ym("2010-01"), &mut rng).unwrap()
}

fn naive_config(first: &str, last: &str, models: Vec<ModelKind>) -> BacktestConfig {
    BacktestConfig {
        protocol: ProtocolSpec {
            first_origin: ym(first),
            last_origin: ym(last),
            fan_size: 50,
            models,
            ..Default::default()
        },
        fourier: FourierSpec::monthly(2).unwrap(),
        ..Default::default()
    }
}

fn clr(x: &[f64]) -> Vec<f64> {
    let g = x.iter().map(|v| v.ln()).sum::<f64>() / x.len() as f64;
    x.iter().map(|v| v.ln() - g).collect()
}

#[test]
fn default_protocol_has_61_monthly_origins() {
    let s = series(3, 2, 181, 1);
    let origins = enumerate_origins(&ProtocolSpec::default(), &s).unwrap();
    assert_eq!(origins.len(), 61);
    assert_eq!(origins[0].date, ym("2019-01"));
    assert_eq!(origins[0].tau, 109);
    assert_eq!(origins[60].date, ym("2024-01"));
    assert_eq!(origins[60].tau, 169);
    assert!(origins.windows(2).all(|w| w[1].tau == w[0].tau + 1));

    let budget = enumerate_origins(&ProtocolSpec::budget(), &s).unwrap();
    let dates: Vec<String> = budget.iter().map(|o| o.date.to_string()).collect();
    assert_eq!(dates, ["2019-01", "2020-01", "2021-01", "2022-01", "2023-01", "2024-01"]);
}

#[test]
fn origins_must_leave_room_for_the_horizon() {
    // 2010-01 .. 2024-12: the last origin with 12 realized months is 2023-12.
    let s = series(3, 2, 180, 2);
    let ok = ProtocolSpec { last_origin: ym("2023-12"), ..Default::default() };
    assert_eq!(enumerate_origins(&ok, &s).unwrap().len(), 60);
    match enumerate_origins(&ProtocolSpec::default(), &s) {
        Err(Error::Protocol { origin, .. }) => assert_eq!(origin, ym("2024-01")),
        other => panic!("expected a protocol error, got {other:?}"),
    }
    let early = ProtocolSpec { first_origin: ym("2009-06"), ..Default::default() };
    assert!(matches!(enumerate_origins(&early, &s), Err(Error::Protocol { .. })));
    let reversed = ProtocolSpec { first_origin: ym("2020-01"), last_origin: ym("2019-01"), ..Default::default() };
    assert!(enumerate_origins(&reversed, &s).is_err());
}

#[test]
fn naive_scores_match_direct_computation() {
    let s = series(4, 2, 60, 3);
    let cfg = naive_config("2012-06", "2013-06", vec![ModelKind::Snaive, ModelKind::AlrRw]);
    let out = run_rolling(&cfg, &s).unwrap();
    assert!(out.failures.is_empty());
    assert_eq!(out.records.len(), 13 * 2 * 12);
    for r in &out.records {
        let tau = (s.start().months_until(r.origin) + 1) as usize;
        let truth = s.shares(tau + r.h - 1);
        let point = match r.model.as_str() {
            "ALR-RW" => s.shares(tau - 1),
            "S-NAIVE" => s.shares(tau + r.h - 13),
            other => panic!("unexpected model {other}"),
        };
        let l1: f64 = point.iter().zip(truth).map(|(a, b)| (a - b).abs()).sum();
        let (ca, cb) = (clr(point), clr(truth));
        let rmse = (ca.iter().zip(&cb).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / ca.len() as f64).sqrt();
        assert!((r.crps - l1).abs() < 1e-12, "{} {} h={}", r.model, r.origin, r.h);
        assert!((r.rmse - rmse).abs() < 1e-9);
        assert!(r.covered.iter().all(|c| !c));
    }
    // Sorted by origin, then ALR-RW before S-NAIVE, then horizon.
    let first: Vec<(&str, usize)> = out.records[..13].iter().map(|r| (r.model.as_str(), r.h)).collect();
    assert_eq!(first[0], ("ALR-RW", 1));
    assert_eq!(first[11], ("ALR-RW", 12));
    assert_eq!(first[12], ("S-NAIVE", 1));
}

#[test]
fn results_do_not_depend_on_model_order_or_scheduling() {
    let s = series(3, 2, 72, 4);
    let a = naive_config("2013-01", "2014-06", vec![ModelKind::Tvar2, ModelKind::Snaive, ModelKind::AlrRw]);
    let b = BacktestConfig {
        protocol: ProtocolSpec {
            models: vec![ModelKind::AlrRw, ModelKind::Snaive, ModelKind::Tvar2, ModelKind::AlrRw],
            ..a.protocol.clone()
        },
        warm_start: true,
        ..a.clone()
    };
    let ra = run_rolling(&a, &s).unwrap();
    let rb = run_rolling(&b, &s).unwrap();
    assert_eq!(ra.records, rb.records);
    assert_eq!(run_rolling(&a, &s).unwrap().records, ra.records);

    let c = BacktestConfig { protocol: ProtocolSpec { seed: 7, ..a.protocol.clone() }, ..a.clone() };
    let rc = run_rolling(&c, &s).unwrap();
    let tvar = |rs: &[bdarma::scoring::ScoreRecord]| rs.iter().filter(|r| r.model == "tVAR2").map(|r| r.crps).collect::<Vec<_>>();
    assert_ne!(tvar(&rc.records), tvar(&ra.records));
}

#[test]
fn windows_only_grow() {
    let s = series(3, 2, 72, 5);
    let cfg = naive_config("2013-01", "2014-06", vec![ModelKind::AlrRw]);
    let origins = enumerate_origins(&cfg.protocol, &s).unwrap();
    for pair in origins.windows(2) {
        let small = s.window(pair[0].tau).unwrap();
        let big = s.window(pair[1].tau).unwrap();
        assert_eq!(big.window(pair[0].tau).unwrap().content_hash(), small.content_hash());
        assert_ne!(big.content_hash(), small.content_hash());
    }
    let out = run_rolling(&cfg, &s).unwrap();
    for (rep, o) in out.origins.iter().zip(&origins) {
        assert_eq!(rep.window_hash, s.window(o.tau).unwrap().content_hash());
        assert_eq!(rep.cells[0].seed, cell_seed(cfg.protocol.seed, o.date, ModelKind::AlrRw));
    }
}

#[test]
fn failing_cells_are_recorded_and_the_run_continues() {
    // At 2010-08 only 8 months exist, too few for a seasonal copy.
    let s = series(3, 2, 40, 6);
    let cfg = naive_config("2010-08", "2011-02", vec![ModelKind::AlrRw, ModelKind::Snaive]);
    let out = run_rolling(&cfg, &s).unwrap();
    let failed: Vec<String> = out.failures.iter().map(|f| f.origin.to_string()).collect();
    assert_eq!(failed, ["2010-08", "2010-09", "2010-10", "2010-11"]);
    assert!(out.failures.iter().all(|f| f.model == ModelKind::Snaive));
    assert_eq!(out.records.iter().filter(|r| r.model == "ALR-RW").count(), 7 * 12);
    assert_eq!(out.records.iter().filter(|r| r.model == "S-NAIVE").count(), 3 * 12);
}

#[test]
fn fan_size_must_match_posterior_draws() {
    let s = series(3, 2, 60, 7);
    let mut cfg = naive_config("2013-01", "2013-01", vec![ModelKind::Bdarma]);
    cfg.hmc = HmcConfig { n_chains: 2, n_keep: 20, ..HmcConfig::default() };
    assert!(run_rolling(&cfg, &s).is_err());
}

#[test]
fn small_bdarma_run_with_warm_start() {
    let s = series(3, 1, 60, 8);
    let mut cfg = naive_config("2013-06", "2013-07", vec![ModelKind::Bdarma, ModelKind::AlrRw]);
    cfg.fourier = FourierSpec::monthly(1).unwrap();
    cfg.protocol.fan_size = 40;
    cfg.protocol.horizon = 3;
    cfg.hmc = HmcConfig { n_chains: 2, n_warmup: 150, n_keep: 20, ..HmcConfig::default() };
    cfg.warm_start = true;
    let out = run_rolling(&cfg, &s).unwrap();
    assert!(out.failures.is_empty(), "{:?}", out.failures);
    assert_eq!(out.records.len(), 2 * 2 * 3);
    for rep in &out.origins {
        let sampler = rep.cells[0].sampler.as_ref().unwrap();
        assert_eq!(sampler.diagnostics.step_sizes.len(), 2);
        assert!(rep.cells[1].sampler.is_none());
    }
    assert!(out.records.iter().all(|r| r.crps.is_finite() && r.crps >= 0.0));
}

#[test]
fn fixed_origin_quantiles_and_fan_dump() {
    let s = series(3, 2, 48, 9);
    let mut cfg = naive_config("2010-01", "2010-01", vec![ModelKind::Tvar2, ModelKind::Snaive]);
    cfg.protocol.fan_size = 200;
    let out = run_fixed_origin(&cfg, &s).unwrap();
    assert_eq!(out.origin.tau, 48);
    assert_eq!(out.fans.len(), 2);
    assert_eq!(out.quantiles.len(), 2 * 12 * 3);
    let first = &out.quantiles[0];
    assert_eq!((first.model, first.h, first.date), (ModelKind::Tvar2, 1, ym("2014-01")));
    assert!(out.quantiles.iter().all(|q| q.q05 <= q.q50 && q.q50 <= q.q95));

    let mut buf = Vec::new();
    write_quantiles_csv(&out.quantiles, &mut buf).unwrap();
    assert_eq!(read_quantiles_csv(&buf[..]).unwrap(), out.quantiles);

    let fan = &out.fans[0].1;
    let mut bytes = Vec::new();
    write_fan_dump(fan, &mut bytes).unwrap();
    assert_eq!(bytes.len(), 24 + 8 * 12 * 200 * 3);
    let (m, h, j, values) = read_fan_dump(&bytes[..]).unwrap();
    assert_eq!((m, h, j), (200, 12, 3));
    // Horizon 4, member 17, component 2.
    assert_eq!(values[(3 * 200 + 17) * 3 + 2], fan.at(4).member(17)[2]);
}
