//! One function per subcommand. Each returns the text written to the output
//! plus an optional one-line summary for stderr.

use std::fmt::Write as _;

use rayon::prelude::*;

use ahres::charts::leaf_grid;
use ahres::distance::{distance_csv, distance_shoot, Point, ShootOptions};
use ahres::flow::{integrate_flow, integrate_shifted, ShiftedPoint};
use ahres::hypres::{gamma_coeff, green, green_hypergeometric, samples_to_csv, KernelSample, Representation, SpectralParam};
use ahres::metric::{MetricModel, PhasePoint0};
use ahres::wkb::{wkb_phase_amplitude, wkb_residual_scaling, WkbOptions};

use crate::checks;
use crate::config::{PairSpec, PointSpec, RepName, RunConfig};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Flow,
    ShiftedFlow,
    Leaf,
    Distance,
    Kernel,
    Wkb,
    Residual,
    GammaBound,
    Check,
    Sweep,
}

/// Result of a command.
#[derive(Debug, Default)]
pub struct Outcome {
    pub text: String,
    pub summary: Option<String>,
    /// Set by `check` when an invariant fails.
    pub failed: bool,
}

impl Outcome {
    fn text(text: String) -> Self {
        Self { text, ..Self::default() }
    }
}

pub fn run(command: Command, cfg: &RunConfig) -> Result<Outcome, CliError> {
    match command {
        Command::Flow => flow(cfg),
        Command::ShiftedFlow => shifted_flow(cfg),
        Command::Leaf => leaf(cfg),
        Command::Distance => distance(cfg),
        Command::Kernel => kernel(cfg),
        Command::Wkb => wkb(cfg),
        Command::Residual => residual(cfg),
        Command::GammaBound => gamma_bound(cfg),
        Command::Check => check(cfg),
        Command::Sweep => sweep(cfg),
    }
}

fn vector(v: &Option<Vec<f64>>, n: usize, what: &str) -> Result<Vec<f64>, CliError> {
    let v = v.clone().ok_or_else(|| CliError::Config(format!("{what} is unset")))?;
    if v.len() != n {
        return Err(CliError::Config(format!("{what} has {} components, the model has n = {n}", v.len())));
    }
    Ok(v)
}

fn to_point(p: &PointSpec, n: usize, what: &str) -> Result<Point, CliError> {
    if p.len() != n + 1 {
        return Err(CliError::Config(format!("{what} must be [x, y1..y{n}], got {} numbers", p.len())));
    }
    Ok(Point::new(p[0], p[1..].to_vec()))
}

fn to_pairs(pairs: &Option<Vec<PairSpec>>, n: usize, what: &str) -> Result<Vec<(Point, Point)>, CliError> {
    let pairs = pairs.as_ref().ok_or_else(|| CliError::Config(format!("{what} is unset")))?;
    pairs
        .iter()
        .enumerate()
        .map(|(i, p)| Ok((to_point(&p.z, n, &format!("{what}[{i}].z"))?, to_point(&p.z_prime, n, &format!("{what}[{i}].z_prime"))?)))
        .collect()
}

fn shoot_options(cfg: &RunConfig) -> ShootOptions {
    ShootOptions {
        starts: cfg.distance.starts,
        tolerance: cfg.distance.tolerance,
        seed: cfg.seed,
        ..ShootOptions::default()
    }
}

fn wkb_options(cfg: &RunConfig) -> WkbOptions {
    let mut o = WkbOptions::default();
    o.shoot.seed = cfg.seed;
    o
}

fn flow(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let model = cfg.model.build()?;
    let n = model.n();
    let f = &cfg.flow;
    let start = PhasePoint0::new(f.x, vector(&f.y, n, "flow.y")?, f.lambda, vector(&f.mu, n, "flow.mu")?);
    let traj = integrate_flow(&model, &start, f.t_max, f.x_floor)?;
    let summary = format!("{} samples, terminal {:?}, energy drift {:e}", traj.samples.len(), traj.terminal, traj.energy_drift);
    Ok(Outcome { text: traj.to_jsonl(model.family_tag()), summary: Some(summary), failed: false })
}

fn shifted_flow(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let model = cfg.model.build()?;
    let n = model.n();
    let f = &cfg.shifted_flow;
    let start = ShiftedPoint::new(f.x, vector(&f.y, n, "shifted_flow.y")?, f.xi, vector(&f.eta, n, "shifted_flow.eta")?);
    let traj = integrate_shifted(&model, &start, f.t_max)?;
    let summary = format!(
        "{} samples, terminal {:?}, endpoint xdot {}",
        traj.samples.len(),
        traj.terminal,
        traj.endpoint_xdot.unwrap_or(f64::NAN)
    );
    Ok(Outcome { text: traj.to_jsonl(model.family_tag()), summary: Some(summary), failed: false })
}

fn leaf(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let n = cfg.model.n;
    let records = leaf_grid::<f64>(cfg.leaf.grid, &vector(&cfg.leaf.y0, n, "leaf.y0")?, &vector(&cfg.leaf.n0, n, "leaf.n0")?)?;
    let mut text = String::new();
    let mut worst = 0.0f64;
    for r in &records {
        worst = worst.max(r.residual);
        text.push_str(&serde_json::to_string(r).expect("leaf record serializes"));
        text.push('\n');
    }
    Ok(Outcome { text, summary: Some(format!("{} points, max residual {worst:e}", records.len())), failed: false })
}

fn distance(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let model = cfg.model.build()?;
    let pairs = to_pairs(&cfg.distance.pairs, model.n(), "distance.pairs")?;
    let opts = shoot_options(cfg);
    let rows = pairs
        .into_par_iter()
        .map(|(z, zp)| distance_shoot(&model, &z, &zp, &opts).map(|d| (z, zp, d)))
        .collect::<ahres::Result<Vec<_>>>()?;
    Ok(Outcome::text(distance_csv(model.family_tag(), &rows)))
}

fn kernel(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let n = cfg.model.n;
    let k = &cfg.kernel;
    let closed = if n.is_multiple_of(2) { Representation::Derivative } else { Representation::Integral };
    let mut samples = Vec::new();
    for &h in &k.h {
        let p = SpectralParam::outgoing(n, h)?;
        for &r in &k.r {
            if matches!(k.rep, RepName::Closed | RepName::All) {
                samples.push(KernelSample { n, h, r, value: green(&p, r)?, representation: closed });
            }
            if matches!(k.rep, RepName::Hypergeometric | RepName::All) {
                let value = green_hypergeometric(&p, r)?;
                samples.push(KernelSample { n, h, r, value, representation: Representation::Hypergeometric });
            }
        }
    }
    Ok(Outcome::text(samples_to_csv(&samples)))
}

fn join(v: &[f64]) -> String {
    v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";")
}

fn wkb(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let model = cfg.model.build()?;
    let pairs = to_pairs(&cfg.wkb.pairs, model.n(), "wkb.pairs")?;
    let opts = wkb_options(cfg);
    let pas = pairs
        .par_iter()
        .map(|(z, zp)| wkb_phase_amplitude(&model, z, zp, &opts))
        .collect::<ahres::Result<Vec<_>>>()?;
    let mut text = String::from("x,y,x_prime,y_prime,h,psi,amplitude,re,im\n");
    for ((z, zp), pa) in pairs.iter().zip(&pas) {
        for &h in &cfg.wkb.h {
            let k = pa.kernel(h);
            let _ = writeln!(
                text,
                "{},{},{},{},{},{:.15e},{:.15e},{:.15e},{:.15e}",
                z.x,
                join(&z.y),
                zp.x,
                join(&zp.y),
                h,
                pa.psi,
                pa.amplitude,
                k.re,
                k.im
            );
        }
    }
    Ok(Outcome::text(text))
}

fn residual(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let model = cfg.model.build()?;
    let n = model.n();
    let r = &cfg.residual;
    let zp = to_point(r.z_prime.as_ref().ok_or_else(|| CliError::Config("residual.z_prime is unset".into()))?, n, "residual.z_prime")?;
    let grid = r
        .grid
        .as_ref()
        .ok_or_else(|| CliError::Config("residual.grid is unset".into()))?
        .iter()
        .enumerate()
        .map(|(i, p)| to_point(p, n, &format!("residual.grid[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;
    let rep = wkb_residual_scaling(&model, &grid, &zp, &r.h, &wkb_options(cfg))?;
    let summary = format!("fitted exponent {:.4}", rep.fitted_exponent);
    Ok(Outcome { text: rep.to_json() + "\n", summary: Some(summary), failed: false })
}

/// `gamma_coeff(h)·h^{(n−1)/2}` on a log grid of `samples` points.
pub fn gamma_band(n: usize, h_min: f64, h_max: f64, samples: usize) -> ahres::Result<(Vec<f64>, Vec<f64>)> {
    if !(h_min > 0.0 && h_max >= h_min && samples >= 2) {
        return Err(ahres::Error::Usage("need 0 < h_min <= h_max and at least 2 samples".into()));
    }
    let hs: Vec<f64> = (0..samples).map(|k| h_min * (h_max / h_min).powf(k as f64 / (samples - 1) as f64)).collect();
    let scaled = hs
        .iter()
        .map(|&h| Ok(gamma_coeff(&SpectralParam::outgoing(n, h)?) * h.powf((n as f64 - 1.0) / 2.0)))
        .collect::<ahres::Result<Vec<_>>>()?;
    Ok((hs, scaled))
}

fn gamma_bound(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let g = &cfg.gamma_bound;
    let mut text = String::new();
    for &n in &g.n {
        let (hs, scaled) = gamma_band(n, g.h_min, g.h_max, g.samples)?;
        let (lo, hi) = scaled.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        let line = serde_json::json!({ "n": n, "h": hs, "scaled": scaled, "ratio": hi / lo });
        text.push_str(&line.to_string());
        text.push('\n');
    }
    Ok(Outcome::text(text))
}

fn check(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let rows = checks::run_suite(cfg);
    let failed = rows.iter().filter(|r| !r.passed).count();
    let mut text = String::new();
    for r in &rows {
        text.push_str(&serde_json::to_string(r).expect("check row serializes"));
        text.push('\n');
    }
    let summary = format!("{} invariants, {failed} failed", rows.len());
    Ok(Outcome { text, summary: Some(summary), failed: failed > 0 })
}

/// Pair at hyperbolic separation `r` on a horizontal through `x = 0.5`,
/// which crosses the perturbation for moderate `r`.
fn sweep_pair(n: usize, r: f64) -> (Point, Point) {
    let mut y = vec![0.0; n];
    y[0] = (r / 2.0).sinh();
    (Point::new(0.5, y), Point::new(0.5, vec![0.0; n]))
}

fn sweep(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let n = cfg.model.n;
    let s = &cfg.sweep;
    let opts = wkb_options(cfg);
    let cells: Vec<(f64, f64)> = s.epsilon.iter().flat_map(|&e| s.r.iter().map(move |&r| (e, r))).collect();
    let results = cells
        .par_iter()
        .map(|&(eps, r)| {
            let model = if eps == 0.0 { MetricModel::half_space(n) } else { MetricModel::perturbed(n, eps)? };
            let (z, zp) = sweep_pair(n, r);
            wkb_phase_amplitude(&model, &z, &zp, &opts)
        })
        .collect::<ahres::Result<Vec<_>>>()?;
    let mut text = String::from("epsilon,h,r,psi,re,im,exact_re,exact_im,relative_difference\n");
    for (&(eps, r), pa) in cells.iter().zip(&results) {
        for &h in &s.h {
            let k = pa.kernel(h);
            let exact = green(&SpectralParam::outgoing(n, h)?, r)?;
            let rel = (k - exact).norm() / exact.norm();
            let _ = writeln!(
                text,
                "{eps},{h},{r},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.6e}",
                pa.psi, k.re, k.im, exact.re, exact.im, rel
            );
        }
    }
    Ok(Outcome::text(text))
}
