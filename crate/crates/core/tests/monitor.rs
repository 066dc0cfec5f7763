use privmaint_core::dp::sample_exponential;
use privmaint_core::monitor::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn chart(window: usize, points: usize, scale: f64) -> ChartConfig {
    ChartConfig::from_gamma(points as u32, window, scale, 1, 0.1)
}

/// Fraction of alarmed points for discrepancies `shift + (α − α')`.
fn alarm_rate(config: &ChartConfig, shift: f64, points: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = ChartState::new(config.clone(), vec![0]).unwrap();
    let (mut alarms, mut seen) = (0, 0);
    while seen < points {
        let a = sample_exponential(config.flow_scale, &mut rng).unwrap();
        let b = sample_exponential(config.flow_scale, &mut rng).unwrap();
        for p in state.record_iteration(&[shift + a - b]).unwrap() {
            seen += 1;
            alarms += usize::from(p.signal == Signal::Alarm);
        }
    }
    alarms as f64 / seen as f64
}

#[test]
fn in_control_alarm_rate_matches_the_normal_tail() {
    let cfg = chart(20, 4, 0.05);
    let rate = alarm_rate(&cfg, 0.0, 4_000, 3);
    assert!((rate - 0.3173).abs() < 0.03, "rate {rate}");
}

#[test]
fn shifted_mean_alarms_on_every_point() {
    let cfg = chart(20, 4, 0.05);
    let rate = alarm_rate(&cfg, 5.0 * cfg.threshold(), 2_000, 4);
    assert_eq!(rate, 1.0);
}

#[test]
fn tolerance_example() {
    let cfg = chart(10, 4, 0.015);
    assert!((cfg.tolerance(5, 24) - 12.0).abs() < 1e-12);
}

#[test]
fn sum_mode_scales_sigma_by_window() {
    let mut cfg = chart(16, 2, 0.1);
    let mean_sigma = cfg.point_sigma();
    cfg.mode = StatisticMode::Sum;
    assert!((cfg.point_sigma() / mean_sigma - 16.0).abs() < 1e-12);
}

#[test]
fn zero_discrepancies_converge_after_one_block() {
    let cfg = chart(3, 2, 0.0);
    let mut state = ChartState::new(cfg, vec![4, 9]).unwrap();
    for k in 1..=6 {
        let points = state.record_iteration(&[0.0, 0.0]).unwrap();
        assert!(points.iter().all(|p| p.signal == Signal::InControl && p.value == 0.0));
        let verdict = state.local_convergence(0.0, 0.0, 24);
        if k < 6 {
            assert_eq!(verdict, Verdict::NotDue);
        } else {
            assert_eq!(verdict, Verdict::Converged);
        }
    }
}

#[test]
fn large_residuals_block_convergence() {
    let cfg = chart(1, 1, 0.0);
    let mut state = ChartState::new(cfg, vec![0]).unwrap();
    state.record_iteration(&[0.0]).unwrap();
    let beta = state.config().tolerance(1, 24);
    assert_eq!(state.local_convergence(beta * 2.0, 0.0, 24), Verdict::NotConverged);
    assert_eq!(state.local_convergence(0.0, beta, 24), Verdict::NotConverged);
    assert_eq!(state.local_convergence(beta * 0.5, beta * 0.5, 24), Verdict::Converged);
}

#[test]
fn wrong_discrepancy_count_is_rejected() {
    let mut state = ChartState::new(chart(2, 2, 0.1), vec![1, 2]).unwrap();
    assert!(matches!(state.record_iteration(&[0.0]), Err(ChartError::Shape { expected: 2, got: 1 })));
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = chart(0, 1, 0.1);
    assert!(cfg.validate().is_err());
    cfg.window = 1;
    cfg.convergence_limit = 0.0;
    assert!(cfg.validate().is_err());
}
