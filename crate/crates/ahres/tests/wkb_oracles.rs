use std::f64::consts::PI;

use ahres::distance::Point;
use ahres::flow::flow_fixed;
use ahres::laplacian::laplace_beltrami;
use ahres::metric::{Bump, MetricModel, PhasePoint0};
use ahres::wkb::*;
use ahres::Error;
use approx::assert_relative_eq;
use num_complex::Complex64;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[test]
fn wkb_matches_exact_h3_kernel() {
    let m = MetricModel::<f64>::half_space(2);
    let zp = Point::new(0.5, vec![0.0, 0.0]);
    let opts = WkbOptions::default();
    for r in [0.1, 0.7, 2.5, 5.0] {
        let z = Point::new(0.5, vec![(r / 2.0f64).sinh(), 0.0]);
        for h in [1.0, 0.1] {
            let k = wkb_kernel(&m, &z, &zp, h, &opts).unwrap();
            let exact = Complex64::from_polar(1.0 / (4.0 * PI * r.sinh()), r / h);
            assert!((k - exact).norm() < 1e-6 * exact.norm(), "r = {r}, h = {h}");
        }
    }
}

#[test]
fn wkb_kernel_is_symmetric_on_perturbed_metric() {
    let m = MetricModel::<f64>::perturbed(2, 0.05).unwrap();
    let z = Point::new(1.2, vec![0.5, 0.1]);
    let zp = Point::new(0.7, vec![-0.5, 0.0]);
    let opts = WkbOptions::default();
    let a = wkb_kernel(&m, &z, &zp, 0.1, &opts).unwrap();
    let b = wkb_kernel(&m, &zp, &z, 0.1, &opts).unwrap();
    assert!((a - b).norm() < 1e-6 * a.norm(), "{a} vs {b}");
}

#[test]
fn wkb_rejects_near_diagonal() {
    let m = MetricModel::<f64>::half_space(2);
    let r = wkb_kernel(&m, &Point::new(0.5, vec![0.0, 0.0]), &Point::new(0.52, vec![0.0, 0.0]), 0.1, &WkbOptions::default());
    assert!(matches!(r, Err(Error::Precondition(_))));
}

#[test]
fn point_flowout_spread_is_sinh_squared() {
    let m = MetricModel::<f64>::half_space(2);
    let start = PhasePoint0::new(0.5, vec![0.0, 0.0], 0.6, vec![0.8, 0.0]);
    let times: Vec<f64> = (1..=10).map(|k| 0.25 * k as f64).collect();
    let zero = |_: &[f64]| Complex64::default();
    let tr = transport_solve(&m, &start, &Lagrangian::PointFlowout, &times, &zero, None, 1.0, Complex64::new(1.0, 0.0)).unwrap();
    for (t, j) in tr.times.iter().zip(&tr.jacobian) {
        // Distance is twice the Hamiltonian time, so the field has speed 2
        // and the spread of geodesics from a point of H³ is 2 sinh² r.
        assert_relative_eq!(j.abs(), 2.0 * (2.0 * t).sinh().powi(2), max_relative = 1e-8);
    }
}

#[test]
fn transport_conserves_weighted_amplitude() {
    let m = MetricModel::<f64>::perturbed(2, 0.05).unwrap();
    let norm = m.dual_norm_sq(0.8, &[-0.6, 0.0], &[1.0, 0.0]).unwrap().sqrt();
    let start = PhasePoint0::new(0.8, vec![-0.6, 0.0], 0.0, vec![1.0 / norm, 0.0]);
    assert!(m.symbol_p(&start).unwrap().abs() < 1e-12);
    let times: Vec<f64> = (1..=12).map(|k| 0.1 * k as f64).collect();
    let s = |st: &[f64]| Complex64::new(0.3 * st[0], 0.1 * st[1]);
    let h = 0.2;
    let tr = transport_solve(&m, &start, &Lagrangian::PointFlowout, &times, &s, None, h, Complex64::new(0.5, -0.2)).unwrap();
    assert!(tr.conservation_defect(h) < 1e-6, "{}", tr.conservation_defect(h));
    // With s = 0 and no source the spread alone carries the amplitude.
    let zero = |_: &[f64]| Complex64::default();
    let plain = transport_solve(&m, &start, &Lagrangian::PointFlowout, &times, &zero, None, h, Complex64::new(1.0, 0.0)).unwrap();
    for k in 0..times.len() {
        assert_relative_eq!(plain.a[k].re, (plain.jacobian[0] / plain.jacobian[k]).abs().sqrt(), max_relative = 1e-12);
    }
}

#[test]
fn inhomogeneous_transport_on_vertical_family() {
    // Vertical geodesics x = x₀e^{2t} with variations along y: J = 2/x².
    let m = MetricModel::<f64>::half_space(2);
    let x0 = 0.3;
    let start = PhasePoint0::new(x0, vec![0.0, 0.0], 1.0, vec![0.0, 0.0]);
    let vars = vec![vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0]];
    let times: Vec<f64> = (0..=8).map(|k| 0.1 * k as f64).collect();
    let zero = |_: &[f64]| Complex64::default();
    let src = |_t: f64, _s: &[f64]| Complex64::new(1.0, 0.0);
    let h = 0.5;
    let a0 = Complex64::new(2.0, 0.0);
    let tr = transport_solve(&m, &start, &Lagrangian::Custom(vars), &times, &zero, Some(&src), h, a0).unwrap();
    for (k, &t) in times.iter().enumerate() {
        let x = x0 * (2.0 * t).exp();
        assert_relative_eq!(tr.jacobian[k].abs(), 2.0 / (x * x), max_relative = 1e-9);
        // a = J^{−1/2}[J₀^{1/2}a₀ + (i/h)∫₀ᵗ J^{1/2} dt], J^{1/2} = √2 e^{−2t}/x₀.
        let sq = |t: f64| 2f64.sqrt() * (-2.0 * t).exp() / x0;
        let integral = 2f64.sqrt() / x0 * (1.0 - (-2.0 * t).exp()) / 2.0;
        let expected = (sq(0.0) * a0 + I / h * integral) / sq(t);
        assert!((tr.a[k] - expected).norm() < 1e-8 * expected.norm(), "t = {t}");
    }
}

#[test]
fn focusing_bump_produces_caustic() {
    let bump = Bump { center_x: 1.0, center_y: vec![0.0, 0.0], width_x: 0.5, width_y: 0.6 };
    let m = MetricModel::<f64>::perturbed_with_bump(2, 20.0, bump);
    let start = PhasePoint0::new(1.0, vec![-1.0, 0.0], 0.0, vec![1.0, 0.0]);
    let times: Vec<f64> = (1..=60).map(|k| 0.05 * k as f64).collect();
    let zero = |_: &[f64]| Complex64::default();
    let err = transport_solve(&m, &start, &Lagrangian::PointFlowout, &times, &zero, None, 1.0, Complex64::new(1.0, 0.0)).unwrap_err();
    let Error::Caustic { time } = err else { panic!("expected a caustic, got {err:?}") };
    // Independent check: the determinant of the finite-difference endpoint map
    // ∂z/∂(a, t) changes sign across the reported time.
    let det_at = |t: f64| {
        let da = 1e-6;
        let end = |a: [f64; 2]| {
            // Unit covectors near (0, 1, 0): (λ, μ) = (a₀, c, a₁)/|·|, c from p = 0.
            let (b, _, _) = Bump { center_x: 1.0, center_y: vec![0.0, 0.0], width_x: 0.5, width_y: 0.6 }.eval(1.0, &[-1.0, 0.0]);
            let conf = 1.0 + 20.0 * b;
            let mu1 = ((1.0 - a[0] * a[0] - a[1] * a[1] / conf) * conf).sqrt();
            flow_fixed(&m, &[1.0, -1.0, 0.0, a[0], mu1, a[1]], t, 2000).unwrap()
        };
        let base = end([0.0, 0.0]);
        let e0p = end([da, 0.0]);
        let e0m = end([-da, 0.0]);
        let e1p = end([0.0, da]);
        let e1m = end([0.0, -da]);
        let mut field = vec![0.0; 6];
        ahres::flow::field_0_into(&m, &base, &mut field).unwrap();
        let col = |p: &[f64], q: &[f64], i: usize| (p[i] - q[i]) / (2.0 * da);
        let mat = nalgebra::Matrix3::new(
            col(&e0p, &e0m, 0), col(&e1p, &e1m, 0), field[0],
            col(&e0p, &e0m, 1), col(&e1p, &e1m, 1), field[1],
            col(&e0p, &e0m, 2), col(&e1p, &e1m, 2), field[2],
        );
        mat.determinant()
    };
    assert!(det_at(time - 0.05) * det_at(time + 0.05) < 0.0, "no sign change around t = {time}");
}

#[test]
fn residual_of_exact_kernel_is_small() {
    let m = MetricModel::<f64>::half_space(2);
    let zp = Point::new(0.5, vec![0.0, 0.0]);
    let exact = |z: &Point| -> ahres::Result<Complex64> {
        let r = ahres::hypres::half_space_distance(z.x, &z.y, 0.5, &[0.0, 0.0]);
        Ok(Complex64::from_polar(1.0 / (4.0 * PI * r.sinh()), r / 0.2))
    };
    let grid = vec![Point::new(0.8, vec![0.3, 0.0]), Point::new(0.4, vec![0.5, -0.2])];
    let t = residual_check(&exact, &m, &grid, &zp, 0.2, 0.02).unwrap();
    assert!(t.max_relative < 1e-5, "{}", t.max_relative);
    let zero = |_: &Point| -> ahres::Result<Complex64> { Ok(Complex64::default()) };
    let t = residual_check(&zero, &m, &grid, &zp, 0.2, 0.02).unwrap();
    assert!(t.rows.iter().all(|r| r.residual == Complex64::default()));
    assert!(matches!(residual_check(&exact, &m, &grid, &zp, 0.2, 0.05), Err(Error::Usage(_))));
    let near = vec![Point::new(0.5, vec![0.1, 0.0])];
    assert!(matches!(residual_check(&exact, &m, &near, &zp, 0.2, 0.02), Err(Error::Precondition(_))));
}

#[test]
fn residual_scaling_on_perturbed_metric() {
    let m = MetricModel::<f64>::perturbed(2, 0.05).unwrap();
    let zp = Point::new(0.7, vec![-0.5, 0.0]);
    let grid = vec![Point::new(1.2, vec![0.5, 0.1]), Point::new(1.0, vec![0.6, -0.2])];
    let hs: Vec<f64> = (0..4).map(|k| 0.2 * 0.5f64.powi(k)).collect();
    let rep = wkb_residual_scaling(&m, &grid, &zp, &hs, &WkbOptions::default()).unwrap();
    assert!((rep.fitted_exponent - 2.0).abs() < 0.3, "{}", rep.to_json());
    let json: serde_json::Value = serde_json::from_str(&rep.to_json()).unwrap();
    for key in ["model", "n", "h", "residual", "fitted_exponent", "ci"] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
}

type RealFn = Box<dyn Fn(f64) -> f64>;

fn phase_pairs() -> Vec<(RealFn, RealFn, (f64, f64))> {
    vec![
        (Box::new(|x| 0.5 * x * x), Box::new(|x: f64| (-x * x).exp()), (-8.0, 8.0)),
        (Box::new(|x| -0.5 * x * x), Box::new(|x: f64| (1.0 + x) * (-x * x).exp()), (-8.0, 8.0)),
        (Box::new(|x: f64| 0.5 * x * x + x.powi(4) / 12.0), Box::new(|x: f64| (1.0 + x + 0.5 * x * x) * (-x * x).exp()), (-8.0, 8.0)),
        (Box::new(|x: f64| x.cosh().ln()), Box::new(|x: f64| (-x * x / 2.0).exp()), (-9.0, 9.0)),
        (
            Box::new(|x: f64| 0.5 * x * x + 0.1 * x.powi(3) + 0.125 * x.powi(4)),
            Box::new(|x: f64| x.cos() * (-x * x).exp()),
            (-8.0, 8.0),
        ),
    ]
}

#[test]
fn oscillatory_quad_matches_gaussian_closed_form() {
    for h in [0.1, 0.025, 0.00625] {
        let q = oscillatory_quad(|x| 0.5 * x * x, |x: f64| (-x * x).exp(), h, (-8.0, 8.0)).unwrap();
        let exact = (PI / Complex64::new(1.0, -0.5 / h)).sqrt();
        assert!((q - exact).norm() < 1e-10 * 16.0, "h = {h}");
    }
    // Non-stationary phase: the Fourier transform of a Gevrey bump of
    // half-width w decays like exp(−√(2w/h)), about 2e-11 here.
    let bump = |x: f64| if x.abs() < 3.0 { (-1.0 / (1.0 - x * x / 9.0)).exp() } else { 0.0 };
    let q = oscillatory_quad(|x| x, bump, 0.01, (-3.0, 3.0)).unwrap();
    assert!(q.norm() < 1e-8, "{}", q.norm());
}

#[test]
fn stationary_phase_truncation_orders() {
    let hs: Vec<f64> = (0..5).map(|k| 0.1 * 0.5f64.powi(k)).collect();
    for (idx, (p, a, dom)) in phase_pairs().iter().enumerate() {
        for order in 0..=1usize {
            let errs: Vec<f64> = hs
                .iter()
                .map(|&h| {
                    let q = oscillatory_quad(p, a, h, *dom).unwrap();
                    let s = stationary_phase(p, a, h, *dom, order).unwrap();
                    (s - q).norm() / q.norm()
                })
                .collect();
            let fit = ahres::fit::loglog_fit(&hs, &errs).unwrap();
            assert!((fit.slope - (order as f64 + 1.0)).abs() < 0.2, "pair {idx} order {order}: {}", fit.slope);
        }
    }
}

#[test]
fn laplacian_symbol_has_vanishing_subprincipal_part() {
    let m = MetricModel::<f64>::perturbed(2, 0.1).unwrap();
    let sym = laplacian_symbol(&m);
    let s = subprincipal(&sym);
    for (z, zeta) in [([1.1, 0.2, -0.1], [0.4, -0.3, 0.9]), ([0.6, -0.4, 0.3], [1.2, 0.5, -0.2])] {
        let s1 = subprincipal_order_one(&s, &z, &zeta, 1e-3);
        assert!(s1.norm() < 1e-12, "{s1}");
        let analytic = (sym.mixed_trace)(&z, &zeta, 0.3);
        let fd = sym.mixed_trace_fd(&z, &zeta, 0.3, 1e-4);
        assert!((analytic - fd).norm() < 1e-6, "{analytic} vs {fd}");
    }
}

#[test]
fn laplacian_symbol_quantizes_to_conjugated_laplacian() {
    // Left quantization of a symbol quadratic in ζ:
    // Op(P)u = P(z,0)u + Σ ∂_{ζk}P(z,0)(hD_k)u + ½Σ ∂²_{ζkζl}P (hD_k)(hD_l)u.
    let m = MetricModel::<f64>::perturbed(2, 0.1).unwrap();
    let sym = laplacian_symbol(&m);
    let h = 0.4;
    let (x, y) = (1.05, [0.15, -0.2]);
    let z = [x, y[0], y[1]];
    let u = |x: f64, y: &[f64]| ((x - 1.0) * 2.0).sin() + y[0] * y[1] + (y[0] * x).cos();
    let d = 1e-3;
    let pt = |dz: [f64; 3]| u(z[0] + dz[0], &[z[1] + dz[1], z[2] + dz[2]]);
    let e = |k: usize, s: f64| {
        let mut v = [0.0; 3];
        v[k] = s;
        v
    };
    let grad: Vec<f64> = (0..3).map(|k| (pt(e(k, d)) - pt(e(k, -d))) / (2.0 * d)).collect();
    let hess = |k: usize, l: usize| {
        if k == l {
            (pt(e(k, d)) - 2.0 * pt([0.0; 3]) + pt(e(k, -d))) / (d * d)
        } else {
            let mut pp = [0.0; 3];
            let mut pm = [0.0; 3];
            let mut mp = [0.0; 3];
            let mut mm = [0.0; 3];
            pp[k] = d;
            pp[l] = d;
            pm[k] = d;
            pm[l] = -d;
            mp[k] = -d;
            mp[l] = d;
            mm[k] = -d;
            mm[l] = -d;
            (pt(pp) - pt(pm) - pt(mp) + pt(mm)) / (4.0 * d * d)
        }
    };
    let dz = 1e-2;
    let p_at = |zeta: [f64; 3]| (sym.full)(&z, &zeta, h);
    let p0 = p_at([0.0; 3]);
    let mut op = p0 * u(x, &y);
    for k in 0..3 {
        let dk = (p_at(e(k, dz)) - p_at(e(k, -dz))) / (2.0 * dz);
        op += dk * (-I * h) * grad[k];
        for l in 0..3 {
            let mut pp = [0.0; 3];
            let mut pm = [0.0; 3];
            let mut mp = [0.0; 3];
            let mut mm = [0.0; 3];
            pp[k] += dz;
            pp[l] += dz;
            pm[k] += dz;
            pm[l] -= dz;
            mp[k] -= dz;
            mp[l] += dz;
            mm[k] -= dz;
            mm[l] -= dz;
            let dkl = (p_at(pp) - p_at(pm) - p_at(mp) + p_at(mm)) / (4.0 * dz * dz);
            op += 0.5 * dkl * (-h * h) * hess(k, l);
        }
    }
    // w^{1/2}(h²Δ − h²n²/4 − 1)(w^{−1/2}u), w = x^{−3}√det g₀.
    let half_w = |x: f64, y: &[f64]| (x.powi(-3) * m.eval(x, y).unwrap().det.sqrt()).sqrt();
    let v = |x: f64, y: &[f64]| Ok::<_, Error>(Complex64::new(u(x, y) / half_w(x, y), 0.0));
    let lap = laplace_beltrami(&m, &v, x, &y, 1e-3).unwrap();
    let direct = half_w(x, &y) * (h * h * lap - (h * h + 1.0) * v(x, &y).unwrap());
    assert!((op - direct).norm() < 1e-4, "{op} vs {direct}");
}

#[test]
fn q_identity_defects() {
    for model in [MetricModel::<f64>::half_space(2), MetricModel::<f64>::perturbed(2, 0.1).unwrap()] {
        for h in [1.0, 0.5, 0.25] {
            let g = TestFunction::Gaussian { center_x: 2.0, center_y: vec![0.0, 0.0], sigma: 0.3 };
            let r = q_conjugate_check(&model, &g, h).unwrap();
            assert!(r.max_defect < 1e-4, "{r:?}");
            assert!(r.max_imag_f < 1e-4, "f should be real: {r:?}");
            let gx = TestFunction::GaussianX { center_x: 1.2, sigma: 0.15 };
            assert!(q_conjugate_check(&model, &gx, h).unwrap().max_defect < 1e-4);
        }
    }
    let touching = TestFunction::GaussianX { center_x: 0.5, sigma: 0.2 };
    assert!(matches!(q_conjugate_check(&MetricModel::half_space(2), &touching, 1.0), Err(Error::Usage(_))));
}
