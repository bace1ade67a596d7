//! The invariant suite run by `check`: a fast cross-section of every module
//! with measured values and thresholds.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use ahres::charts::leaf_residual;
use ahres::distance::{distance_shoot, eikonal_check, Point, ShootOptions};
use ahres::fit::loglog_fit;
use ahres::flow::{integrate_flow, integrate_shifted, shift_to_standard, unshift};
use ahres::hypres::{green, green_hypergeometric, resolvent_residual, SpectralParam};
use ahres::metric::{MetricModel, PhasePoint0};
use ahres::wkb::{indicial_factor, indicial_solve, oscillatory_quad, q_conjugate_check, stationary_phase, wkb_kernel, TestFunction, WkbOptions};

use crate::commands::gamma_band;
use crate::config::RunConfig;

/// How a measured value is compared with its threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    /// Pass when `measured < threshold`.
    Below,
    /// Pass when `measured >= threshold`.
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub invariant: &'static str,
    pub measured: f64,
    pub threshold: f64,
    pub bound: Bound,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

type Measure = fn(&RunConfig) -> ahres::Result<f64>;

/// `(name, threshold, bound, measurement)`.
const SUITE: &[(&str, f64, Bound, Measure)] = &[
    ("kernel_representations_relative", 1e-6, Bound::Below, kernel_representations),
    ("resolvent_pde_residual", 1e-5, Bound::Below, resolvent_pde),
    ("flow_energy_drift", 1e-9, Bound::Below, flow_drift),
    ("sech_closed_form_error", 1e-8, Bound::Below, sech_error),
    ("boundary_exponent_exact_deviation", 0.2, Bound::Below, boundary_exact),
    ("boundary_exponent_perturbed", 1.5, Bound::AtLeast, boundary_perturbed),
    ("shifted_terminal_xdot_deviation", 1e-3, Bound::Below, terminal_xdot),
    ("shift_round_trip", 1e-13, Bound::Below, shift_round_trip),
    ("leaf_residual", 1e-9, Bound::Below, leaf),
    ("eikonal_residual", 1e-5, Bound::Below, eikonal),
    ("distance_symmetry", 1e-8, Bound::Below, distance_symmetry),
    ("wkb_vs_exact_h3_relative", 1e-5, Bound::Below, wkb_h3),
    ("gamma_band_ratio", 4.0, Bound::Below, gamma_ratio),
    ("q_conjugate_defect", 1e-4, Bound::Below, q_defect),
    ("indicial_round_trip", 1e-14, Bound::Below, indicial),
    ("stationary_phase_order_deviation", 0.2, Bound::Below, stationary_order),
];

pub fn run_suite(cfg: &RunConfig) -> Vec<CheckRow> {
    SUITE
        .iter()
        .map(|&(invariant, base, bound, measure)| {
            // Scaling loosens upper bounds only.
            let threshold = match bound {
                Bound::Below => base * cfg.tolerance_scale,
                Bound::AtLeast => base,
            };
            match measure(cfg) {
                Ok(measured) => {
                    let passed = match bound {
                        Bound::Below => measured < threshold,
                        Bound::AtLeast => measured >= threshold,
                    };
                    CheckRow { invariant, measured, threshold, bound, passed, error: None }
                }
                Err(e) => CheckRow {
                    invariant,
                    measured: f64::NAN,
                    threshold,
                    bound,
                    passed: false,
                    error: Some(format!("[{}] {e}", e.code())),
                },
            }
        })
        .collect()
}

fn kernel_representations(_: &RunConfig) -> ahres::Result<f64> {
    let mut worst = 0.0f64;
    for n in 1..=4 {
        for h in [1.0, 0.5, 0.2] {
            let p = SpectralParam::outgoing(n, h)?;
            for r in [0.5, 1.0, 2.0, 4.0] {
                let (a, b) = (green(&p, r)?, green_hypergeometric(&p, r)?);
                worst = worst.max((a - b).norm() / b.norm());
            }
        }
    }
    Ok(worst)
}

fn resolvent_pde(_: &RunConfig) -> ahres::Result<f64> {
    let mut worst = 0.0f64;
    for h in [1.0, 0.5] {
        let p = SpectralParam::outgoing(2, h)?;
        for r in [0.5f64, 2.0] {
            worst = worst.max(resolvent_residual(&p, (r.exp(), &[0.0, 0.0]), (1.0, &[0.0, 0.0]), 1e-4)?);
        }
    }
    Ok(worst)
}

fn sech_start() -> PhasePoint0<f64> {
    PhasePoint0::new(1.0, vec![0.0], 0.0, vec![1.0])
}

fn flow_drift(_: &RunConfig) -> ahres::Result<f64> {
    Ok(integrate_flow(&MetricModel::half_space(1), &sech_start(), 5.0, 1e-8)?.energy_drift)
}

fn sech_error(_: &RunConfig) -> ahres::Result<f64> {
    let traj = integrate_flow(&MetricModel::half_space(1), &sech_start(), 1.0, 1e-8)?;
    let s = traj.state_at(0.5).ok_or_else(|| ahres::Error::Invariant("no dense output at t = 0.5".into()))?;
    let c = [1.0 / 1f64.cosh(), 1f64.tanh(), -1f64.tanh(), 1.0 / 1f64.cosh()];
    Ok(s.iter().zip(c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

fn boundary_slope(model: &MetricModel<f64>, start: &PhasePoint0<f64>) -> ahres::Result<f64> {
    let traj = integrate_flow(model, start, 40.0, 1e-8)?;
    traj.boundary_fit
        .map(|f| f.lambda_exponent.slope)
        .ok_or_else(|| ahres::Error::FitFailure(format!("trajectory ended with {:?}", traj.terminal)))
}

fn boundary_exact(_: &RunConfig) -> ahres::Result<f64> {
    Ok((boundary_slope(&MetricModel::half_space(1), &sech_start())? - 2.0).abs())
}

fn boundary_perturbed(_: &RunConfig) -> ahres::Result<f64> {
    let m = MetricModel::<f64>::perturbed(2, 0.1)?;
    let mu = [1.0, 0.3];
    let norm = m.dual_norm_sq(0.8, &[-0.2, 0.0], &mu)?.sqrt();
    let s = (1.0 - 0.01f64).sqrt() / norm;
    boundary_slope(&m, &PhasePoint0::new(0.8, vec![-0.2, 0.0], 0.1, vec![mu[0] * s, mu[1] * s]))
}

fn terminal_xdot(_: &RunConfig) -> ahres::Result<f64> {
    let m = MetricModel::<f64>::perturbed(1, 0.1)?;
    let mu = 1.0 / m.dual_norm_sq(1.0, &[0.0], &[1.0])?.sqrt();
    let traj = integrate_shifted(&m, &shift_to_standard(&PhasePoint0::new(1.0, vec![0.0], 0.0, vec![mu]))?, 10.0)?;
    Ok((traj.endpoint_xdot.unwrap_or(f64::NAN) + 2.0).abs())
}

fn shift_round_trip(cfg: &RunConfig) -> ahres::Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let pt = PhasePoint0::new(
            rng.random_range(1e-3f64..5.0),
            vec![rng.random_range(-2.0f64..2.0), rng.random_range(-2.0f64..2.0)],
            rng.random_range(-3.0f64..3.0),
            vec![rng.random_range(-3.0f64..3.0), rng.random_range(-3.0f64..3.0)],
        );
        let back = unshift(&shift_to_standard(&pt)?);
        worst = worst.max((back.lambda - pt.lambda).abs());
        for (a, b) in back.mu.iter().zip(&pt.mu) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

fn leaf(_: &RunConfig) -> ahres::Result<f64> {
    let m = 50;
    let mut worst = 0.0f64;
    for i in 0..m {
        for j in 0..m {
            let r = std::f64::consts::PI * (i as f64 + 0.5) / m as f64;
            let rp = std::f64::consts::PI * (j as f64 + 0.5) / m as f64;
            worst = worst.max(leaf_residual(r, rp, &[0.6, 0.8])?);
        }
    }
    Ok(worst)
}

fn shoot(cfg: &RunConfig) -> ShootOptions {
    ShootOptions { starts: 4, seed: cfg.seed, ..ShootOptions::default() }
}

fn eikonal(cfg: &RunConfig) -> ahres::Result<f64> {
    let m = MetricModel::<f64>::perturbed(2, 0.05)?;
    let rep = eikonal_check(&m, &Point::new(0.4, vec![0.2, 0.1]), &Point::new(0.6, vec![-0.3, 0.4]), &shoot(cfg))?;
    Ok(rep.residual)
}

fn distance_symmetry(cfg: &RunConfig) -> ahres::Result<f64> {
    let m = MetricModel::<f64>::perturbed(2, 0.05)?;
    let (a, b) = (Point::new(0.5, vec![0.1, -0.2]), Point::new(1.3, vec![0.4, 0.3]));
    let o = shoot(cfg);
    Ok((distance_shoot(&m, &a, &b, &o)?.value - distance_shoot(&m, &b, &a, &o)?.value).abs())
}

fn wkb_h3(cfg: &RunConfig) -> ahres::Result<f64> {
    let mut opts = WkbOptions::default();
    opts.shoot.seed = cfg.seed;
    let r = 1.0f64;
    let z = Point::new(0.5, vec![(r / 2.0).sinh(), 0.0]);
    let k = wkb_kernel(&MetricModel::half_space(2), &z, &Point::new(0.5, vec![0.0, 0.0]), 0.1, &opts)?;
    let exact = Complex64::from_polar(1.0 / (4.0 * std::f64::consts::PI * r.sinh()), r / 0.1);
    Ok((k - exact).norm() / exact.norm())
}

fn gamma_ratio(_: &RunConfig) -> ahres::Result<f64> {
    let mut worst = 0.0f64;
    for n in [2, 3] {
        let (_, v) = gamma_band(n, 0.02, 1.0, 41)?;
        let (lo, hi) = v.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
        worst = worst.max(hi / lo);
    }
    Ok(worst)
}

fn q_defect(_: &RunConfig) -> ahres::Result<f64> {
    let test = TestFunction::Gaussian { center_x: 2.0, center_y: vec![0.0, 0.0], sigma: 0.3 };
    Ok(q_conjugate_check(&MetricModel::<f64>::perturbed(2, 0.1)?, &test, 0.5)?.max_defect)
}

fn indicial(_: &RunConfig) -> ahres::Result<f64> {
    let e = Complex64::new(1.0, 2.0);
    let mut worst = 0.0f64;
    for j in 0..5 {
        for h in [1.0, 0.1, 0.01] {
            let a = indicial_solve(j, h, e)?;
            worst = worst.max((-indicial_factor(j, h) * a - e).norm() / e.norm());
        }
    }
    Ok(worst)
}

fn stationary_order(_: &RunConfig) -> ahres::Result<f64> {
    let phase = |x: f64| 0.5 * x * x + x.powi(4) / 12.0;
    let amp = |x: f64| (1.0 + x + 0.5 * x * x) * (-x * x).exp();
    let hs: Vec<f64> = (0..5).map(|k| 0.1 * 0.5f64.powi(k)).collect();
    let mut worst = 0.0f64;
    for order in 0..=1usize {
        let errs = hs
            .iter()
            .map(|&h| {
                let q = oscillatory_quad(phase, amp, h, (-8.0, 8.0))?;
                Ok((stationary_phase(phase, amp, h, (-8.0, 8.0), order)? - q).norm() / q.norm())
            })
            .collect::<ahres::Result<Vec<_>>>()?;
        worst = worst.max((loglog_fit(&hs, &errs)?.slope - (order as f64 + 1.0)).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_scale_loosens_upper_bounds_only() {
        let cfg = RunConfig { tolerance_scale: 10.0, ..RunConfig::default() };
        let rows = run_suite(&cfg);
        let find = |name: &str| rows.iter().find(|r| r.invariant == name).unwrap().threshold;
        assert!((find("indicial_round_trip") - 1e-13).abs() < 1e-27);
        assert_eq!(find("boundary_exponent_perturbed"), 1.5);
    }
}
