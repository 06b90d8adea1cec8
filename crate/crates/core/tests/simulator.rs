use qa_core::simulator::*;
use qa_core::{DistributionSpec, QueueModel, SelectionRule};

fn exp(rate: f64) -> DistributionSpec {
    DistributionSpec::Exponential { rate }
}

fn det(value: f64) -> DistributionSpec {
    DistributionSpec::Deterministic { value }
}

fn mm(lambda: f64, mus: &[f64]) -> QueueModel {
    QueueModel::single(exp(lambda), mus.iter().map(|&m| exp(m)).collect()).unwrap()
}

#[test]
fn mm1_pmf_is_geometric() {
    let m = mm(0.5, &[1.0]);
    let est = run_stationary(&m, &StationaryConfig::new(2_000_000), 3).unwrap();
    let pmf = est.pmf();
    let total: f64 = pmf.iter().map(|p| p.0).sum();
    assert!((total - 1.0).abs() < 1e-12);
    for (n, &(p, se)) in pmf.iter().enumerate().take(6) {
        let exact = 0.5 * 0.5f64.powi(n as i32);
        assert!((p - exact).abs() < 4.0 * se + 1e-4, "n={n} p={p} exact={exact} se={se}");
    }
}

#[test]
fn mm2_tail_ratio_is_rho_above_k() {
    let m = mm(0.7, &[0.5, 0.5]);
    let est = run_stationary(&m, &StationaryConfig::new(3_000_000), 5).unwrap();
    for x in 2..6 {
        let r = est.tail(x).0 / est.tail(x - 1).0;
        assert!((r - 0.7).abs() < 0.02, "x={x} ratio={r}");
    }
}

#[test]
fn dd1_periodic_path() {
    let m = QueueModel::single(det(2.0), vec![det(1.0)]).unwrap();
    let est = run_stationary(&m, &StationaryConfig::new(10_000), 1).unwrap();
    let pmf = est.pmf();
    assert!((pmf[1].0 - 0.5).abs() < 1e-9, "{:?}", pmf);
}

#[test]
fn conservation_of_customers() {
    let m = mm(0.9, &[0.6, 0.4]);
    let est = run_stationary(&m, &StationaryConfig::new(100_000), 9).unwrap();
    assert_eq!(est.start_ell + est.arrivals - est.departures, est.end_ell);
}

#[test]
fn identical_seed_gives_identical_estimate() {
    let m = mm(0.7, &[0.5, 0.5]).with_selection(SelectionRule::UniformRandom);
    let cfg = StationaryConfig::new(200_000)
        .with_replications(3)
        .with_probes(vec![PhiProbe { v: 1.0, theta: -0.3 }]);
    let a = run_stationary(&m, &cfg, 42).unwrap();
    let b = run_stationary(&m, &cfg, 42).unwrap();
    assert_eq!(a.batches, b.batches);
    assert_eq!(a.total_time.to_bits(), b.total_time.to_bits());
}

#[test]
fn cycle_estimate_at_k_is_one() {
    let m = mm(0.7, &[0.5, 0.5]);
    let e = cycle_tail_estimate(&m, 2, 200, 1).unwrap();
    assert_eq!(e.estimate, 1.0);
}

#[test]
fn cycle_estimate_mm1_geometric() {
    let m = mm(0.5, &[1.0]);
    let e = cycle_tail_estimate(&m, 4, 200_000, 7).unwrap();
    assert!((e.estimate - 0.125).abs() < 3.0 * e.se, "{e:?}");
    assert!(e.ci.0 < 0.125 && 0.125 < e.ci.1);
}

#[test]
fn cycle_and_time_average_agree() {
    let m = mm(0.7, &[0.5, 0.5]);
    let c = cycle_tail_estimate(&m, 5, 100_000, 2).unwrap();
    let est = run_stationary(&m, &StationaryConfig::new(2_000_000), 3).unwrap();
    let (num, num_se) = est.tail(4);
    let (den, den_se) = est.tail(1);
    let ratio = num / den;
    let se = ratio * ((num_se / num).powi(2) + (den_se / den).powi(2)).sqrt();
    let joint = (c.se.powi(2) + se.powi(2)).sqrt();
    assert!((c.estimate - ratio).abs() < 3.0 * joint, "{} vs {ratio}", c.estimate);
}

#[test]
fn too_few_cycles_is_an_error() {
    let m = mm(0.5, &[1.0]);
    assert!(matches!(
        cycle_tail_estimate(&m, 1, 10, 1),
        Err(qa_core::QaError::InsufficientCycles { .. })
    ));
}

#[test]
fn unstable_model_is_rejected() {
    let m = mm(1.0, &[0.5, 0.5]);
    assert!(matches!(
        run_stationary(&m, &StationaryConfig::new(1000), 1),
        Err(qa_core::QaError::Unstable { .. })
    ));
}

#[test]
fn zero_theta_probes_are_exactly_zero() {
    let m = mm(0.7, &[0.5, 0.5]);
    let cfg = StationaryConfig::new(50_000).with_probes(vec![PhiProbe { v: 2.0, theta: 0.0 }]);
    let est = run_stationary(&m, &cfg, 1).unwrap();
    let r = validate_stationary_equation(&m, 2.0, 0.0, &est).unwrap();
    assert_eq!(r.residual, 0.0);
    assert!(r.pass);
    let t = validate_terminal_condition(&m, 10_000, 1.0, 0.0, 1).unwrap();
    assert_eq!(t.residual, 0.0);
}

#[test]
fn stationary_equation_holds_for_mm2() {
    let m = mm(0.7, &[0.5, 0.5]);
    let cfg = StationaryConfig::new(1_000_000).with_probes(vec![PhiProbe { v: 2.0, theta: -0.5 }]);
    let est = run_stationary(&m, &cfg, 8).unwrap();
    let r = validate_stationary_equation(&m, 2.0, -0.5, &est).unwrap();
    assert!(r.pass, "{r:?}");
    let phi = est.phi(2.0, -0.5).unwrap();
    assert!(phi.phi.0 > 0.0 && phi.phi.0 <= 1.0);
}

#[test]
fn terminal_condition_holds_with_deterministic_service() {
    let m = mm(0.7, &[0.5, 0.5]);
    let r = validate_terminal_condition(&m, 200_000, 1.0, 0.3, 4).unwrap();
    assert!(r.pass, "{r:?}");
    let d = QueueModel::single(det(1.0), vec![det(1.0), det(2.0)]).unwrap();
    let r = validate_terminal_condition(&d, 200_000, 1.5, -0.4, 4).unwrap();
    assert!(r.pass, "{r:?}");
}

#[test]
fn decay_fit_mm1() {
    let m = mm(0.5, &[1.0]);
    let est = run_stationary(&m, &StationaryConfig::new(2_000_000), 11).unwrap();
    let fit = empirical_decay_fit(&[1, 2, 3, 4, 5, 6], &est, Some(2f64.ln())).unwrap();
    assert!((fit.slope / 0.5f64.ln() - 1.0).abs() < 0.05, "{fit:?}");
    for (p, _) in fit.prefactor.unwrap() {
        assert!((p - 0.5).abs() < 0.05, "{p}");
    }
}

#[test]
fn decay_fit_needs_tail_mass() {
    let m = mm(0.1, &[1.0]);
    let est = run_stationary(&m, &StationaryConfig::new(10_000), 1).unwrap();
    assert!(matches!(
        empirical_decay_fit(&[1, 2, 3, 40], &est, None),
        Err(qa_core::QaError::InsufficientTailMass { level: 40 })
    ));
}
