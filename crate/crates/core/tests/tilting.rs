use qa_core::asymptotics::{gamma_eval, solve_alpha};
use qa_core::tilting::*;
use qa_core::{DistributionSpec, QaError, QueueModel};

fn exp(rate: f64) -> DistributionSpec {
    DistributionSpec::Exponential { rate }
}

fn mm(lambda: f64, mus: &[f64]) -> QueueModel {
    QueueModel::single(exp(lambda), mus.iter().map(|&m| exp(m)).collect()).unwrap()
}

#[test]
fn gamma_shift_for_mm2() {
    let m = mm(0.7, &[0.5, 0.5]);
    assert!(verify_gamma_shift(&m, 0.2, 0.1, None).unwrap() <= 1e-9);
    assert_eq!(verify_gamma_shift(&m, 0.2, 0.0, None).unwrap(), 0.0);
}

#[test]
fn tilt_at_alpha_has_positive_rate_function() {
    let m = mm(0.7, &[0.6, 0.4]);
    let alpha = solve_alpha(&m).unwrap().alpha;
    let t = build_tilted(&m, alpha, None).unwrap();
    for tt in [0.05, 0.1, 0.2] {
        let g = tilted_gamma(&t, tt).unwrap();
        assert!(g > 0.0);
        assert!((g - gamma_eval(&m, alpha + tt).unwrap()).abs() < 1e-9);
    }
    assert!(tilted_mean_drift(&t).unwrap() > 0.0);
}

#[test]
fn plateau_server_untruncated_tilt_has_infinite_mean() {
    // F̂(β*) is finite but F̂'(β*) is not, so at v = ∞ the tilted law of a
    // server in K_α has an infinite mean.
    let svc = DistributionSpec::ParetoExp { r: 1.5, delta: 1.0 };
    let m = QueueModel::single(exp(0.6), vec![svc, exp(1.0)]).unwrap();
    let alpha = solve_alpha(&m).unwrap().alpha;
    let t = build_tilted(&m, alpha, None).unwrap();
    assert_eq!(t.k_alpha, vec![0]);
    assert!(matches!(tilted_mean_drift(&t), Err(QaError::InfiniteMean { server: 0 })));
    let v = default_truncation(&m, alpha).unwrap().unwrap();
    let tv = build_tilted(&m, alpha, Some(v)).unwrap();
    assert!(tilted_mean_drift(&tv).unwrap().is_finite());
    assert!((tv.services[0].total_mass() - 1.0).abs() < 1e-9);
}

#[test]
fn out_of_range_tilt_is_rejected() {
    let svc = DistributionSpec::ParetoExp { r: 3.0, delta: 1.0 };
    let m = QueueModel::single(exp(3.0), vec![svc.clone(), exp(1.0)]).unwrap();
    assert!(build_tilted(&m, 0.0, None).unwrap().k_alpha.is_empty());
    let theta_i = qa_core::asymptotics::server_theta(&svc).to_f64();
    assert!(matches!(build_tilted(&m, -0.1, None), Err(QaError::ThetaOutOfRange { .. })));
    assert!(matches!(build_tilted(&m, theta_i + 0.5, None), Err(QaError::ThetaOutOfRange { .. })));
}

#[test]
fn is_matches_geometric_law() {
    let m = mm(1.0, &[1.0, 1.0]);
    let est = is_tail_estimate(&m, 12, 300_000, 3, None).unwrap();
    let exact = 0.5f64.powi(10);
    assert!((est.estimate - exact).abs() <= 3.0 * est.se, "{est:?}");
    assert!(est.relative_error < 0.05, "{est:?}");
}

#[test]
fn is_and_naive_agree_at_moderate_level() {
    let m = mm(0.7, &[0.5, 0.5]);
    let est = is_tail_estimate(&m, 7, 1_000_000, 9, None).unwrap();
    let naive = est.naive.as_ref().unwrap();
    let joint = (est.se.powi(2) + naive.se.powi(2)).sqrt();
    assert!((est.estimate - naive.estimate).abs() <= 3.0 * joint, "{est:?}");
}

#[test]
fn zero_tilt_reduces_to_plain_cycles() {
    let m = mm(0.5, &[1.0]);
    let est = is_tail_estimate_with(
        &m,
        2,
        &IsOptions {
            budget_events: 200_000,
            theta: Some(0.0),
            trunc: None,
            naive_baseline: false,
        },
        1,
    )
    .unwrap();
    assert!((est.estimate - 0.5).abs() <= 3.0 * est.se, "{est:?}");
}

#[test]
fn zero_decay_rate_needs_explicit_tilt() {
    let svc = DistributionSpec::ParetoExp { r: 1.5, delta: 0.0 };
    let m = QueueModel::single(exp(0.2), vec![svc]).unwrap();
    assert!(matches!(is_tail_estimate(&m, 3, 1000, 1, None), Err(QaError::RegimeUnsupported)));
}
