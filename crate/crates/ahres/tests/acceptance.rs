//! Acceptance suite: twelve quantitative criteria, each with a tolerance and
//! a runtime budget. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use ahres::charts::*;
use ahres::distance::{boundary_decomposition, eikonal_check, jacobian_dpi, Point, ShootOptions};
use ahres::fit::loglog_fit;
use ahres::flow::{integrate_flow, integrate_shifted, shift_to_standard};
use ahres::hypres::*;
use ahres::metric::{MetricModel, PhasePoint0};
use ahres::wkb::*;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = fn() -> Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn unit_start(m: &MetricModel<f64>, x: f64, y: Vec<f64>, lambda: f64, mu_dir: &[f64]) -> PhasePoint0<f64> {
    let norm = m.dual_norm_sq(x, &y, mu_dir).unwrap().sqrt();
    let scale = (1.0 - lambda * lambda).sqrt() / norm;
    PhasePoint0::new(x, y, lambda, mu_dir.iter().map(|v| v * scale).collect())
}

fn c1_kernel_representations() -> Result<String, String> {
    let mut worst = 0.0f64;
    for n in 1..=4 {
        for h in [1.0, 0.5, 0.2, 0.1] {
            let p = SpectralParam::outgoing(n, h).map_err(fail)?;
            for r in [0.5, 1.0, 2.0, 4.0] {
                let a = green(&p, r).map_err(fail)?;
                let b = green_hypergeometric(&p, r).map_err(fail)?;
                worst = worst.max((a - b).norm() / b.norm());
            }
        }
    }
    ensure(worst < 1e-6, || format!("max relative gap {worst:.3e}"))?;
    Ok(format!("max relative gap {worst:.3e} (< 1e-6)"))
}

fn c2_pde_residual() -> Result<String, String> {
    let mut worst = 0.0f64;
    for h in [1.0, 0.5] {
        let p = SpectralParam::outgoing(2, h).map_err(fail)?;
        for r in [0.5, 1.0, 1.5, 2.0, 3.0, 4.0] {
            let res = resolvent_residual(&p, (f64::exp(r), &[0.0, 0.0]), (1.0, &[0.0, 0.0]), 1e-4).map_err(fail)?;
            worst = worst.max(res);
        }
    }
    ensure(worst < 1e-5, || format!("max relative residual {worst:.3e}"))?;
    Ok(format!("max relative residual {worst:.3e} (< 1e-5)"))
}

fn c3_flow() -> Result<String, String> {
    let h2 = MetricModel::<f64>::half_space(1);
    let traj = integrate_flow(&h2, &PhasePoint0::new(1.0, vec![0.0], 0.0, vec![1.0]), 40.0, 1e-8).map_err(fail)?;
    let mut sech = 0.0f64;
    for s in &traj.samples {
        let t = 2.0 * s.t;
        let c = [1.0 / t.cosh(), t.tanh(), -t.tanh(), 1.0 / t.cosh()];
        for k in 0..4 {
            sech = sech.max((s.state[k] - c[k]).abs());
        }
    }
    let mut drift = traj.energy_drift;
    let exact = traj.boundary_fit.as_ref().ok_or("no boundary fit on the sech trajectory")?.lambda_exponent.slope;
    let mut pert_min = f64::INFINITY;
    for eps in [0.05, 0.1] {
        let m = MetricModel::<f64>::perturbed(2, eps).map_err(fail)?;
        for (x, y, lam, mu) in [(0.8, vec![-0.2, 0.0], 0.1, [1.0, 0.3]), (1.2, vec![0.3, 0.1], -0.3, [-0.5, 1.0]), (1.0, vec![0.0, 0.0], 0.0, [1.0, 0.0])] {
            let t = integrate_flow(&m, &unit_start(&m, x, y, lam, &mu), 40.0, 1e-8).map_err(fail)?;
            drift = drift.max(t.energy_drift);
            let fit = t.boundary_fit.ok_or("perturbed trajectory did not reach the boundary")?;
            pert_min = pert_min.min(fit.lambda_exponent.slope);
        }
    }
    let msg = format!("drift {drift:.2e}, sech error {sech:.2e}, exponent exact {exact:.4}, perturbed min {pert_min:.4}");
    ensure(drift < 1e-9 && sech < 1e-8 && (exact - 2.0).abs() <= 0.2 && pert_min >= 1.5, || msg.clone())?;
    Ok(msg)
}

fn random_region_point(rng: &mut ChaCha8Rng, region: Region, n: usize) -> RegionPoint<f64> {
    let positive: Vec<usize> = match region {
        Region::R4a | Region::R4b => vec![0, 1],
        Region::R5 => vec![0, 1, 2],
        _ => vec![0, n + 1],
    };
    let mut base = Vec::with_capacity(2 * n + 2);
    let mut fibre = Vec::with_capacity(2 * n + 2);
    for i in 0..2 * n + 2 {
        base.push(if positive.contains(&i) { rng.random_range(0.05..0.9) } else { rng.random_range(-0.5..0.5) });
        fibre.push(rng.random_range(-1.0..1.0));
    }
    if region == Region::R5 {
        base[2] = rng.random_range(0.2..1.0);
    }
    RegionPoint::new(region, n, base, fibre).unwrap()
}

fn c4_shifted_transversality() -> Result<String, String> {
    let mut xdot_dev = 0.0f64;
    for m in [MetricModel::<f64>::half_space(1), MetricModel::perturbed(1, 0.1).map_err(fail)?] {
        for (x, lam) in [(1.0, 0.0), (0.6, 0.5), (1.5, -0.4)] {
            let start = unit_start(&m, x, vec![0.0], lam, &[1.0]);
            let traj = integrate_shifted(&m, &shift_to_standard(&start).map_err(fail)?, 10.0).map_err(fail)?;
            xdot_dev = xdot_dev.max((traj.endpoint_xdot.ok_or("no endpoint")? + 2.0).abs());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut own, mut tangent, mut annihilation, mut probes) = (0.0f64, 0.0f64, 0.0f64, 0);
    let models = [MetricModel::<f64>::half_space(2), MetricModel::perturbed(2, 0.1).map_err(fail)?];
    for m in &models {
        for region in [Region::R2a, Region::R4a, Region::R5] {
            for side in [Side::Left, Side::Right] {
                for _ in 0..20 {
                    let mut pt = random_region_point(&mut rng, region, 2);
                    let (l, r, f) = region.defining_functions(2);
                    let (own_i, opp_i) = if side == Side::Left { (l, r) } else { (r, l) };
                    for i in [own_i, opp_i, f].into_iter().flatten() {
                        pt.base[i] = 0.0;
                    }
                    let idx = match (region, side, own_i) {
                        (Region::R2a, Side::Right, _) => 3,
                        (Region::R4a, Side::Right, _) => 1,
                        (_, _, Some(i)) => i,
                        _ => 0,
                    };
                    let Ok(pt) = solve_on_variety(m, &pt, side, idx) else { continue };
                    let rep = transversality_probe(m, &pt, side).map_err(fail)?;
                    probes += 1;
                    if let Some(c) = rep.own_component {
                        own = own.max((c + 2.0).abs());
                    }
                    for c in [rep.opposite_component, rep.front_component].into_iter().flatten() {
                        tangent = tangent.max(c.abs());
                    }
                    annihilation = annihilation.max(rep.annihilation_defect);
                }
            }
        }
    }
    let msg = format!(
        "terminal xdot dev {xdot_dev:.2e}; {probes} probes: own +2 dev {own:.2e}, tangency {tangent:.2e}, annihilation {annihilation:.2e}"
    );
    ensure(probes >= 60 && xdot_dev <= 1e-3 && own <= 1e-6 && tangent <= 1e-6 && annihilation <= 1e-6, || msg.clone())?;
    Ok(msg)
}

fn c5_leaf() -> Result<String, String> {
    let records = leaf_grid::<f64>(50, &[0.0, 0.0], &[0.6, 0.8]).map_err(fail)?;
    let worst = records.iter().map(|r| r.residual).fold(0.0, f64::max);
    ensure(records.len() == 2500 && worst < 1e-9, || format!("max residual {worst:.3e}"))?;
    Ok(format!("max residual {worst:.3e} on 50x50 (< 1e-9)"))
}

fn c6_rank_drop() -> Result<String, String> {
    let radii: Vec<f64> = (0..8).map(|k| 1e-3 * 10f64.powf(2.0 * k as f64 / 7.0)).collect();
    let mut parts = Vec::new();
    let mut ok = true;
    for n in [1usize, 2] {
        let mut dir = vec![0.6, 0.8];
        dir.resize(n + 1, 0.0);
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        dir.iter_mut().for_each(|v| *v /= norm);
        let exact = jacobian_dpi(&MetricModel::half_space(n), &Point::new(1.0, vec![0.0; n]), &dir, &radii).map_err(fail)?;
        ok &= (exact.fit.slope - n as f64).abs() <= 0.05;
        parts.push(format!("exact n={n}: {:.4}", exact.fit.slope));
        let mut y = vec![0.0; n];
        y[0] = 0.1;
        let pert = jacobian_dpi(&MetricModel::perturbed(n, 0.05).map_err(fail)?, &Point::new(0.8, y), &[0.3, 0.5, 0.2][..n + 1], &radii)
            .map_err(fail)?;
        ok &= (pert.fit.slope - n as f64).abs() <= 0.1;
        parts.push(format!("perturbed n={n}: {:.4}", pert.fit.slope));
    }
    let msg = parts.join(", ");
    ensure(ok, || msg.clone())?;
    Ok(msg)
}

fn c7_eikonal_decomposition() -> Result<String, String> {
    let opts = ShootOptions { starts: 4, ..ShootOptions::default() };
    let mut eik = 0.0f64;
    for m in [MetricModel::<f64>::half_space(2), MetricModel::perturbed(2, 0.05).map_err(fail)?] {
        for (z, zp) in [
            (Point::new(0.4, vec![0.2, 0.1]), Point::new(0.6, vec![-0.3, 0.4])),
            (Point::new(1.1, vec![0.0, -0.2]), Point::new(0.7, vec![0.5, 0.3])),
        ] {
            eik = eik.max(eikonal_check(&m, &z, &zp, &opts).map_err(fail)?.residual);
        }
    }
    let pairs: Vec<(Point, Point)> = (4..=10)
        .map(|k| {
            let x = 2f64.powi(-k);
            (Point::new(x, vec![0.0, 0.0]), Point::new(x, vec![1.0, 0.5]))
        })
        .collect();
    let exact = boundary_decomposition(&MetricModel::half_space(2), &pairs, &opts).map_err(fail)?;
    let oracle_gap = exact
        .rows
        .iter()
        .zip(&pairs)
        .map(|(row, (z, zp))| (row.psi_tilde - (half_space_distance(z.x, &z.y, zp.x, &zp.y) + z.x.ln() + zp.x.ln())).abs())
        .fold(0.0, f64::max);
    let pert = boundary_decomposition(&MetricModel::perturbed(2, 0.05).map_err(fail)?, &pairs, &opts).map_err(fail)?;
    let ratio = |d: &ahres::distance::Decomposition| d.increment_ratio.unwrap_or(f64::NAN);
    let msg = format!(
        "eikonal {eik:.2e}; exact converged {} ratio {:.3} oracle gap {oracle_gap:.2e}; perturbed converged {} ratio {:.3}",
        exact.converged,
        ratio(&exact),
        pert.converged,
        ratio(&pert)
    );
    ensure(eik < 1e-5 && exact.converged && pert.converged && oracle_gap < 1e-8 && ratio(&pert) < 1.0, || msg.clone())?;
    Ok(msg)
}

fn c8_wkb_h3() -> Result<String, String> {
    let m = MetricModel::<f64>::half_space(2);
    let zp = Point::new(0.5, vec![0.0, 0.0]);
    let opts = WkbOptions::default();
    let mut worst = 0.0f64;
    for r in [0.1, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0] {
        let z = Point::new(0.5, vec![(r / 2.0f64).sinh(), 0.0]);
        let pa = wkb_phase_amplitude(&m, &z, &zp, &opts).map_err(fail)?;
        for h in [1.0, 0.1, 0.02] {
            let exact = Complex64::from_polar(1.0 / (4.0 * PI * r.sinh()), r / h);
            worst = worst.max((pa.kernel(h) - exact).norm() / exact.norm());
        }
    }
    ensure(worst < 1e-5, || format!("max relative error {worst:.3e}"))?;
    Ok(format!("max relative error {worst:.3e} on r in [0.1, 5] (< 1e-5)"))
}

fn c9_wkb_scaling() -> Result<String, String> {
    let m = MetricModel::<f64>::perturbed(2, 0.05).map_err(fail)?;
    let zp = Point::new(0.7, vec![-0.5, 0.0]);
    let grid = vec![Point::new(1.2, vec![0.5, 0.1]), Point::new(1.0, vec![0.6, -0.2]), Point::new(1.4, vec![0.3, 0.2])];
    let hs: Vec<f64> = (0..4).map(|k| 0.2 * 0.5f64.powi(k)).collect();
    let rep = wkb_residual_scaling(&m, &grid, &zp, &hs, &WkbOptions::default()).map_err(fail)?;
    let msg = format!("fitted exponent {:.4}, residuals {:?}", rep.fitted_exponent, rep.residual.iter().map(|r| format!("{r:.3e}")).collect::<Vec<_>>());
    ensure((rep.fitted_exponent - 2.0).abs() <= 0.3, || msg.clone())?;
    Ok(msg)
}

type RealFn = Box<dyn Fn(f64) -> f64>;

fn c10_stationary_phase() -> Result<String, String> {
    let pairs: Vec<(RealFn, RealFn, (f64, f64))> = vec![
        (Box::new(|x| 0.5 * x * x), Box::new(|x: f64| (-x * x).exp()), (-8.0, 8.0)),
        (Box::new(|x| -0.5 * x * x), Box::new(|x: f64| (1.0 + x) * (-x * x).exp()), (-8.0, 8.0)),
        (Box::new(|x: f64| 0.5 * x * x + x.powi(4) / 12.0), Box::new(|x: f64| (1.0 + x + 0.5 * x * x) * (-x * x).exp()), (-8.0, 8.0)),
        (Box::new(|x: f64| x.cosh().ln()), Box::new(|x: f64| (-x * x / 2.0).exp()), (-9.0, 9.0)),
        (Box::new(|x: f64| 0.5 * x * x + 0.1 * x.powi(3) + 0.125 * x.powi(4)), Box::new(|x: f64| x.cos() * (-x * x).exp()), (-8.0, 8.0)),
    ];
    let hs: Vec<f64> = (0..5).map(|k| 0.1 * 0.5f64.powi(k)).collect();
    let mut worst = 0.0f64;
    let mut slopes = Vec::new();
    for (p, a, dom) in &pairs {
        for order in 0..=1usize {
            let errs = hs
                .iter()
                .map(|&h| {
                    let q = oscillatory_quad(p, a, h, *dom)?;
                    Ok((stationary_phase(p, a, h, *dom, order)? - q).norm() / q.norm())
                })
                .collect::<ahres::Result<Vec<_>>>()
                .map_err(fail)?;
            let slope = loglog_fit(&hs, &errs).map_err(fail)?.slope;
            worst = worst.max((slope - (order as f64 + 1.0)).abs());
            slopes.push(format!("{slope:.3}"));
        }
    }
    let msg = format!("slopes (k=0,1 per pair) {}; max deviation {worst:.3}", slopes.join(" "));
    ensure(worst <= 0.2, || msg.clone())?;
    Ok(msg)
}

fn c11_gamma_band() -> Result<String, String> {
    let mut ratios = Vec::new();
    for n in [2usize, 3] {
        let vals = (0..=60)
            .map(|k| {
                let h = 0.02 * 50f64.powf(k as f64 / 60.0);
                Ok(gamma_coeff(&SpectralParam::outgoing(n, h)?) * h.powf((n as f64 - 1.0) / 2.0))
            })
            .collect::<ahres::Result<Vec<_>>>()
            .map_err(fail)?;
        let (lo, hi) = vals.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        ratios.push(hi / lo);
    }
    let msg = format!("band ratio n=2 {:.4}, n=3 {:.4} (< 4)", ratios[0], ratios[1]);
    ensure(ratios.iter().all(|&r| r < 4.0), || msg.clone())?;
    Ok(msg)
}

fn c12_q_identity() -> Result<String, String> {
    let mut defect = 0.0f64;
    for m in [MetricModel::<f64>::half_space(2), MetricModel::perturbed(2, 0.1).map_err(fail)?] {
        for h in [1.0, 0.5, 0.25] {
            for test in [
                TestFunction::Gaussian { center_x: 2.0, center_y: vec![0.0, 0.0], sigma: 0.3 },
                TestFunction::GaussianX { center_x: 1.2, sigma: 0.15 },
            ] {
                defect = defect.max(q_conjugate_check(&m, &test, h).map_err(fail)?.max_defect);
            }
        }
    }
    let mut round = 0.0f64;
    for j in 0..8 {
        for h in [1.0, 0.3, 0.05, 0.001] {
            for e in [Complex64::new(1.0, 0.0), Complex64::new(-0.3, 2.5), Complex64::new(1e-3, -7.0)] {
                let g = indicial_solve(j, h, e).map_err(fail)?;
                round = round.max((-indicial_factor(j, h) * g - e).norm() / e.norm());
            }
        }
    }
    let msg = format!("Q_L defect {defect:.3e} (< 1e-4), indicial round trip {round:.2e} (< 4 eps)");
    ensure(defect < 1e-4 && round <= 4.0 * f64::EPSILON, || msg.clone())?;
    Ok(msg)
}

fn main() {
    let criteria: [(u32, &str, Duration, Check); 12] = [
        (1, "kernel cross-representation agreement", Duration::from_secs(30), c1_kernel_representations),
        (2, "exact-resolvent PDE residual", Duration::from_secs(30), c2_pde_residual),
        (3, "flow integrity", Duration::from_secs(20), c3_flow),
        (4, "shifted-flow transversality", Duration::from_secs(20), c4_shifted_transversality),
        (5, "leaf identity", Duration::from_secs(10), c5_leaf),
        (6, "rank-drop order", Duration::from_secs(60), c6_rank_drop),
        (7, "eikonal and boundary decomposition", Duration::from_secs(60), c7_eikonal_decomposition),
        (8, "WKB vs exact on H3", Duration::from_secs(30), c8_wkb_h3),
        (9, "WKB residual scaling", Duration::from_secs(180), c9_wkb_scaling),
        (10, "stationary phase orders", Duration::from_secs(30), c10_stationary_phase),
        (11, "gamma coefficient bound", Duration::from_secs(5), c11_gamma_band),
        (12, "Q_L identity and indicial solve", Duration::from_secs(10), c12_q_identity),
    ];
    let mut failures = 0;
    for (id, name, budget, check) in criteria {
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = t0.elapsed();
        let (pass, detail) = match outcome {
            Ok(d) if elapsed <= budget => (true, d),
            Ok(d) => (false, format!("{d}; over runtime budget {budget:?}")),
            Err(d) => (false, d),
        };
        failures += usize::from(!pass);
        println!(
            "{} criterion {id:>2} ({name}): {detail} [{:.2} s / {} s]",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failures > 0 {
        println!("{failures} of 12 criteria failed");
        std::process::exit(1);
    }
    println!("all 12 criteria passed");
}
