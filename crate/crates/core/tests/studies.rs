use heatinv::study::{fit_log_slope, run_rate_study, Config};
use heatinv::rng;
use rand::Rng as _;
use rand_distr::StandardNormal;

fn quick() -> Config {
    let mut cfg = Config::default();
    cfg.grid.n_x = 17;
    cfg.grid.n_t = 17;
    cfg.chain.n_steps = 300;
    cfg.chain.burn_in = 100;
    cfg.study.n_grid = vec![16, 32, 64];
    cfg.study.replicates = 3;
    cfg.study.bootstrap = 20;
    cfg
}

#[test]
fn noiseless_study_with_zero_truth_recovers_exactly() {
    let mut cfg = quick();
    cfg.study.sigma = 0.0;
    cfg.study.truth = vec![0.0];
    let study = run_rate_study(&cfg).unwrap();
    for r in &study.records {
        assert!(r.is_ok(), "{}", r.status);
        assert!(r.err_forward <= 1e-10, "{}", r.err_forward);
        assert!(r.err_f <= 1e-10);
        assert!(r.err_f_pf <= 1e-10);
    }
}

#[test]
fn study_is_deterministic_and_ordered() {
    let cfg = quick();
    let a = run_rate_study(&cfg).unwrap();
    let b = run_rate_study(&cfg).unwrap();
    assert_eq!(a.records, b.records);
    let cells: Vec<(usize, usize)> = a.records.iter().map(|r| (r.n, r.replicate)).collect();
    let want: Vec<(usize, usize)> = [16, 32, 64].iter().flat_map(|&n| (0..3).map(move |r| (n, r))).collect();
    assert_eq!(cells, want);
    assert!(a.records.iter().all(|r| r.err_forward >= 0.0 && r.err_f >= 0.0));
}

#[test]
fn noisy_power_law_slope_within_two_stderr() {
    let mut r = rng::stream(77, 0);
    let pairs: Vec<(f64, f64)> = (7..13)
        .map(|k| {
            let n = 2f64.powi(k);
            let e: f64 = r.sample(StandardNormal);
            (n, 2.0 * n.powf(-0.45) * (0.1 * e).exp())
        })
        .collect();
    let fit = fit_log_slope(&pairs).unwrap();
    assert!((fit.slope + 0.45).abs() <= 2.0 * fit.stderr, "{fit:?}");
}
