use ahres::flow::*;
use ahres::metric::{MetricModel, PhasePoint0};
use approx::assert_relative_eq;
use proptest::prelude::*;

fn unit_start(m: &MetricModel<f64>, x: f64, y: Vec<f64>, lambda: f64, mu_dir: &[f64]) -> PhasePoint0<f64> {
    let norm = m.dual_norm_sq(x, &y, mu_dir).unwrap().sqrt();
    let scale = (1.0 - lambda * lambda).sqrt() / norm;
    PhasePoint0::new(x, y, lambda, mu_dir.iter().map(|v| v * scale).collect())
}

#[test]
fn sech_trajectory_on_half_plane() {
    let m = MetricModel::<f64>::half_space(1);
    let traj = integrate_flow(&m, &PhasePoint0::new(1.0, vec![0.0], 0.0, vec![1.0]), 2.0, 1e-8).unwrap();
    assert!(traj.energy_drift < 1e-9);
    let closed = |t: f64| [1.0 / (2.0 * t).cosh(), (2.0 * t).tanh(), -(2.0 * t).tanh(), 1.0 / (2.0 * t).cosh()];
    for s in &traj.samples {
        let c = closed(s.t);
        for k in 0..4 {
            assert!((s.state[k] - c[k]).abs() < 1e-8, "t = {}, k = {k}", s.t);
        }
    }
    let mid = traj.state_at(0.5).unwrap();
    assert_relative_eq!(mid[0], 0.648054273663885, epsilon = 1e-8);
    assert_relative_eq!(mid[2], -0.761594155955765, epsilon = 1e-8);
}

#[test]
fn time_reversal_returns_to_start() {
    let m = MetricModel::<f64>::perturbed(2, 0.1).unwrap();
    let start = unit_start(&m, 0.9, vec![-0.3, 0.1], 0.2, &[0.7, -0.4]);
    let duration = 0.8;
    let fwd = integrate_flow(&m, &start, duration, 1e-8).unwrap();
    assert_eq!(fwd.terminal, Terminal::TimeOut);
    let back = integrate_flow(&m, &reverse(&fwd.point0(fwd.samples.len() - 1)), duration, 1e-8).unwrap();
    let end = back.point0(back.samples.len() - 1);
    let err = (end.x - start.x)
        .abs()
        .max((end.lambda + start.lambda).abs())
        .max(end.y.iter().zip(&start.y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        .max(end.mu.iter().zip(&start.mu).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max));
    assert!(err < 1e-8, "{err}");
}

#[test]
fn shift_equivariance_after_reparametrizing_by_x() {
    let m = MetricModel::<f64>::perturbed(2, 0.1).unwrap();
    let start = unit_start(&m, 0.8, vec![0.2, -0.1], -0.6, &[1.0, 0.5]);
    let zero = integrate_flow(&m, &start, 20.0, 1e-3).unwrap();
    let shifted = integrate_shifted(&m, &shift_to_standard(&start).unwrap(), 10.0).unwrap();
    for target in [0.6, 0.3, 0.1, 0.02] {
        let a = zero.state_at(zero.time_at_x(target).unwrap()).unwrap();
        let b = shifted.state_at(shifted.time_at_x(target).unwrap()).unwrap();
        let sa = shift_to_standard(&PhasePoint0::from_state(&a)).unwrap();
        let sb = ShiftedPoint::from_state(&b);
        let err = (sa.xi - sb.xi)
            .abs()
            .max(sa.y.iter().zip(&sb.y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max))
            .max(sa.eta.iter().zip(&sb.eta).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max));
        assert!(err < 1e-8, "x = {target}: {err}");
    }
}

#[test]
fn boundary_exponents() {
    let exact = integrate_flow(&MetricModel::half_space(1), &PhasePoint0::new(1.0, vec![0.0], 0.0, vec![1.0]), 30.0, 1e-8).unwrap();
    assert_eq!(exact.terminal, Terminal::HitBoundary);
    let slope = exact.boundary_fit.unwrap().lambda_exponent.slope;
    assert!((slope - 2.0).abs() < 0.2, "{slope}");
    let m = MetricModel::<f64>::perturbed(2, 0.1).unwrap();
    let pert = integrate_flow(&m, &unit_start(&m, 0.8, vec![-0.2, 0.0], 0.1, &[1.0, 0.3]), 30.0, 1e-8).unwrap();
    assert_eq!(pert.terminal, Terminal::HitBoundary);
    let fit = pert.boundary_fit.unwrap();
    assert!(fit.lambda_exponent.slope >= 1.5, "{}", fit.lambda_exponent.slope);
    assert!(pert.energy_drift < 1e-9);
}

#[test]
fn shifted_flow_reaches_boundary_transversally() {
    for m in [MetricModel::<f64>::half_space(1), MetricModel::perturbed(1, 0.1).unwrap()] {
        let start = unit_start(&m, 1.0, vec![0.0], 0.0, &[1.0]);
        let traj = integrate_shifted(&m, &shift_to_standard(&start).unwrap(), 10.0).unwrap();
        assert_eq!(traj.terminal, Terminal::HitBoundary);
        assert!(traj.last().state[0].abs() < 1e-12);
        assert!((traj.endpoint_xdot.unwrap() + 2.0).abs() < 1e-3);
    }
}

#[test]
fn distinct_bicharacteristics_have_distinct_endpoints() {
    let m = MetricModel::<f64>::half_space(1);
    let ends: Vec<ShiftedPoint<f64>> = [1.0, 0.5]
        .iter()
        .map(|&x| {
            let sp = shift_to_standard(&PhasePoint0::new(x, vec![0.0], 0.0, vec![1.0])).unwrap();
            let t = integrate_shifted(&m, &sp, 10.0).unwrap();
            t.shifted(t.samples.len() - 1)
        })
        .collect();
    // Both arrive moving in +y; the boundary fibre data separates them.
    assert!((ends[0].xi - ends[1].xi).abs() + (ends[0].eta[0] - ends[1].eta[0]).abs() > 1e-3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shift_round_trip(x in 1e-3f64..5.0, y in -2.0f64..2.0, lambda in -3.0f64..3.0, mu in -3.0f64..3.0) {
        let pt = PhasePoint0::new(x, vec![y], lambda, vec![mu]);
        let back = unshift(&shift_to_standard(&pt).unwrap());
        prop_assert!((back.lambda - lambda).abs() < 1e-13 && (back.mu[0] - mu).abs() < 1e-13);
    }

    #[test]
    fn energy_is_conserved(x in 0.3f64..2.0, y in -0.5f64..0.5, theta in 0.0f64..std::f64::consts::TAU) {
        let m = MetricModel::<f64>::perturbed(1, 0.1).unwrap();
        let start = unit_start(&m, x, vec![y], theta.cos(), &[if theta.sin() < 0.0 { -1.0 } else { 1.0 }]);
        let traj = integrate_flow(&m, &start, 1.5, 1e-6).unwrap();
        prop_assert!(traj.energy_drift < 1e-9);
    }
}

#[test]
fn single_precision_sech_trajectory() {
    let m = ahres::Metric32::half_space(1);
    let traj = integrate_flow(&m, &ahres::PhasePoint32::new(1.0, vec![0.0], 0.0, vec![1.0]), 1.0, 1e-4).unwrap();
    let mid = traj.state_at(0.5).unwrap();
    assert!((mid[0] - 0.648_054_3).abs() < 1e-4, "{}", mid[0]);
}
