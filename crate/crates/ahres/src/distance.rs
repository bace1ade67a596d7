//! Geodesic distance `Ψ(z, z′)` by shooting, the eikonal identity for its
//! differential, the boundary decomposition `Ψ = −log ρ_L − log ρ_R + Ψ̃`,
//! and the order of vanishing of the diagonal projection Jacobian.
//!
//! The unknown of the shooting problem is the initial 0-covector `w` at `z`:
//! the flow of `p` for unit Hamiltonian time from `(z, w)` travels a geodesic
//! of length `2|w|`, because the field is homogeneous of degree one in the
//! fibre. The endpoint mismatch is measured in `(log x, y)`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::{loglog_fit, LinearFit};
use crate::flow::flow_fixed;
use crate::metric::{MetricModel, PhasePoint0};

/// A point `(x, y)` of the manifold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Point {
    pub x: f64,
    pub y: Vec<f64>,
}

impl Point {
    pub fn new(x: f64, y: Vec<f64>) -> Self {
        Self { x, y }
    }
}

/// Whether shooting found one geodesic, several, or none.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Multiplicity {
    Unique,
    Multiple,
    Failed,
}

/// The convex neighbourhood `{|y − y₀|² + (x − ε/2)² ≤ 2ε²}` of a boundary
/// point `(0, y₀)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexNeighborhood {
    pub y0: Vec<f64>,
    pub epsilon: f64,
}

impl ConvexNeighborhood {
    /// Default size: 0.05 of the chart scale.
    pub fn around(y0: Vec<f64>) -> Self {
        Self { y0, epsilon: 0.05 * crate::metric::X_MAX }
    }

    pub fn contains(&self, z: &Point) -> bool {
        let dy2: f64 = z.y.iter().zip(&self.y0).map(|(a, b)| (a - b).powi(2)).sum();
        dy2 + (z.x - self.epsilon / 2.0).powi(2) <= 2.0 * self.epsilon * self.epsilon
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShootOptions {
    pub starts: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub seed: u64,
    /// When both points lie inside, several distinct solutions are an error.
    pub convex: Option<ConvexNeighborhood>,
    /// Fixed integrator step count; by default it grows with the distance.
    /// A fixed count makes `Ψ` a smooth function of the endpoints, which
    /// matters when it is differenced.
    pub steps: Option<usize>,
    /// Replaces the closed-form seed (an unnormalised initial covector
    /// whose `g`-length is half the expected distance).
    pub initial_guess: Option<Vec<f64>>,
}

impl Default for ShootOptions {
    fn default() -> Self {
        Self { starts: 8, max_iterations: 50, tolerance: 1e-11, seed: 0, convex: None, steps: None, initial_guess: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceResult {
    pub value: f64,
    /// Unit 0-covector at `z` generating the geodesic towards `z′`.
    pub initial_covector: PhasePoint0<f64>,
    /// Unit 0-covector at `z′` at the end of that geodesic.
    pub final_covector: PhasePoint0<f64>,
    pub multiplicity: Multiplicity,
    /// Distinct distances found, shortest first.
    pub solutions: Vec<f64>,
}

impl DistanceResult {
    /// `d_{z′}Ψ` in standard coordinates `(∂ₓ, ∂_y)`.
    pub fn grad_z_prime(&self) -> Vec<f64> {
        standard(&self.final_covector, 1.0)
    }

    /// `d_zΨ` in standard coordinates.
    pub fn grad_z(&self) -> Vec<f64> {
        standard(&self.initial_covector, -1.0)
    }
}

fn standard(c: &PhasePoint0<f64>, sign: f64) -> Vec<f64> {
    let mut v = vec![sign * c.lambda / c.x];
    v.extend(c.mu.iter().map(|m| sign * m / c.x));
    v
}

/// Half-space hyperbolic distance and its gradient in `z`.
fn hyperbolic_distance_grad(z: &Point, zp: &Point) -> (f64, Vec<f64>) {
    let d = crate::hypres::half_space_distance(z.x, &z.y, zp.x, &zp.y);
    let dy2: f64 = z.y.iter().zip(&zp.y).map(|(a, b)| (a - b).powi(2)).sum();
    let a = dy2 + (z.x - zp.x).powi(2);
    let sh = d.sinh().max(1e-300);
    let mut g = vec![((z.x - zp.x) / (z.x * zp.x) - a / (2.0 * z.x * z.x * zp.x)) / sh];
    g.extend(z.y.iter().zip(&zp.y).map(|(a, b)| (a - b) / (z.x * zp.x) / sh));
    (d, g)
}

fn covector_norm(model: &MetricModel<f64>, z: &Point, w: &[f64]) -> Result<f64> {
    Ok((w[0] * w[0] + model.dual_norm_sq(z.x, &z.y, &w[1..])?).sqrt())
}

struct Shooter<'a> {
    model: &'a MetricModel<f64>,
    z: &'a Point,
    zp: &'a Point,
    steps: usize,
}

impl Shooter<'_> {
    fn end_state(&self, w: &[f64]) -> Result<Vec<f64>> {
        let mut s = vec![self.z.x];
        s.extend_from_slice(&self.z.y);
        s.extend_from_slice(w);
        flow_fixed(self.model, &s, 1.0, self.steps)
    }

    fn residual(&self, w: &[f64]) -> Result<DVector<f64>> {
        let end = self.end_state(w)?;
        if !(end[0] > 0.0) {
            return Err(Error::Domain("geodesic left the chart".into()));
        }
        let n = self.z.y.len();
        let mut r = vec![end[0].ln() - self.zp.x.ln()];
        r.extend((0..n).map(|i| end[1 + i] - self.zp.y[i]));
        Ok(DVector::from_vec(r))
    }

    fn newton(&self, mut w: Vec<f64>, opts: &ShootOptions) -> Option<Vec<f64>> {
        let dim = w.len();
        let mut f = self.residual(&w).ok()?;
        let mut stalled = 0;
        for _ in 0..opts.max_iterations {
            if f.norm() < opts.tolerance {
                return Some(w);
            }
            let mut jac = DMatrix::zeros(dim, dim);
            for k in 0..dim {
                let step = 1e-7 * (1.0 + w[k].abs());
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[k] += step;
                wm[k] -= step;
                let col = (self.residual(&wp).ok()? - self.residual(&wm).ok()?) / (2.0 * step);
                jac.set_column(k, &col);
            }
            let delta = jac.lu().solve(&(-&f))?;
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let trial: Vec<f64> = w.iter().zip(delta.iter()).map(|(a, d)| a + t * d).collect();
                if let Ok(ft) = self.residual(&trial) {
                    if ft.norm() < f.norm() {
                        // A start that makes no headway is heading for a
                        // spurious local minimum of |F|; give it up early.
                        stalled = if ft.norm() > 0.9 * f.norm() { stalled + 1 } else { 0 };
                        w = trial;
                        f = ft;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if stalled >= 3 && f.norm() > 1e-6 {
                return None;
            }
            if !accepted {
                return (f.norm() < opts.tolerance * 1e3).then_some(w);
            }
        }
        (f.norm() < opts.tolerance).then_some(w)
    }
}

/// Solves the two-point problem from `z` to `z′` by Newton shooting from
/// several seeds and returns the shortest converged geodesic.
///
/// The first seed is the exact hyperbolic initial covector; the others are
/// deterministic random perturbations of it. No error is raised outside
/// the convex neighbourhood or the interior region; the multiplicity flag
/// reports what was found.
pub fn distance_shoot(model: &MetricModel<f64>, z: &Point, zp: &Point, opts: &ShootOptions) -> Result<DistanceResult> {
    let n = model.n();
    if z.y.len() != n || zp.y.len() != n {
        return Err(Error::Usage("points must have n boundary coordinates".into()));
    }
    model.check_domain(z.x, &z.y, false)?;
    model.check_domain(zp.x, &zp.y, false)?;
    if !(z.x > 0.0 && zp.x > 0.0) {
        return Err(Error::Domain("points must lie in the interior (x > 0)".into()));
    }
    if z == zp {
        let zero = PhasePoint0::new(z.x, z.y.clone(), 0.0, vec![0.0; n]);
        return Ok(DistanceResult {
            value: 0.0,
            initial_covector: zero.clone(),
            final_covector: zero,
            multiplicity: Multiplicity::Unique,
            solutions: vec![0.0],
        });
    }
    let (d0, grad) = hyperbolic_distance_grad(z, zp);
    let seed: Vec<f64> = match &opts.initial_guess {
        Some(w) if w.len() == n + 1 => w.clone(),
        Some(_) => return Err(Error::Usage("initial guess must have n + 1 components".into())),
        None => grad.iter().map(|g| -z.x * g * d0 / 2.0).collect(),
    };
    let steps = opts.steps.unwrap_or(60 + (60.0 * d0).ceil() as usize);
    let shooter = Shooter { model, z, zp, steps };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut seeds = vec![seed.clone()];
    let seed_len = seed.iter().map(|s| s * s).sum::<f64>().sqrt();
    for _ in 1..opts.starts.max(1) {
        let scale = rng.random_range(0.9..1.1);
        let jitter: Vec<f64> = seed.iter().map(|s| s * scale + rng.random_range(-0.05..0.05) * seed_len).collect();
        seeds.push(jitter);
    }
    let solved: Vec<Option<Vec<f64>>> = seeds.into_par_iter().map(|s| shooter.newton(s, opts)).collect();
    let mut found: Vec<(f64, Vec<f64>)> = Vec::new();
    for w in solved.into_iter().flatten() {
        let len = 2.0 * covector_norm(model, z, &w)?;
        if !found.iter().any(|(d, _)| (d - len).abs() < 1e-6 * (1.0 + len)) {
            found.push((len, w));
        }
    }
    found.sort_by(|a, b| a.0.total_cmp(&b.0));
    let Some((value, w)) = found.first().cloned() else {
        let zero = PhasePoint0::new(z.x, z.y.clone(), 0.0, vec![0.0; n]);
        return Ok(DistanceResult {
            value: f64::NAN,
            initial_covector: zero.clone(),
            final_covector: zero,
            multiplicity: Multiplicity::Failed,
            solutions: vec![],
        });
    };
    let multiplicity = if found.len() > 1 { Multiplicity::Multiple } else { Multiplicity::Unique };
    if let (Multiplicity::Multiple, Some(v)) = (multiplicity, &opts.convex) {
        if v.contains(z) && v.contains(zp) {
            return Err(Error::Invariant(format!("{} distinct geodesics inside the convex neighbourhood", found.len())));
        }
    }
    let unit = 2.0 / value;
    let initial_covector = PhasePoint0::new(z.x, z.y.clone(), w[0] * unit, w[1..].iter().map(|m| m * unit).collect());
    let end = shooter.end_state(&w)?;
    let final_covector = PhasePoint0::new(end[0], end[1..1 + n].to_vec(), end[1 + n] * unit, end[2 + n..].iter().map(|m| m * unit).collect());
    Ok(DistanceResult {
        value,
        initial_covector,
        final_covector,
        multiplicity,
        solutions: found.iter().map(|(d, _)| *d).collect(),
    })
}

/// Result of the eikonal check at `z`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EikonalReport {
    pub distance: f64,
    /// `| |dΨ|²_g − 1 |` with `dΨ` from central differences in `z`.
    pub residual: f64,
    /// Max componentwise gap between the finite-difference `d_zΨ` and the
    /// shooting covector.
    pub covector_mismatch: f64,
}

/// Differentiates `Ψ(·, z′)` at `z` by central differences of
/// [`distance_shoot`] and evaluates `|dΨ|²_g = x²((∂ₓΨ)² + g₀^{ij}∂ᵢΨ∂ⱼΨ)`.
pub fn eikonal_check(model: &MetricModel<f64>, z: &Point, zp: &Point, opts: &ShootOptions) -> Result<EikonalReport> {
    let base = distance_shoot(model, z, zp, opts)?;
    if base.multiplicity == Multiplicity::Failed {
        return Err(Error::Shooting("no geodesic found".into()));
    }
    if !(base.value > 0.05) {
        return Err(Error::Precondition(format!("distance {} is too close to the diagonal for differencing", base.value)));
    }
    let n = model.n();
    let step = 1e-4 * z.x;
    let mut grad = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let shift = |sgn: f64| {
            let mut q = z.clone();
            if k == 0 {
                q.x += sgn * step;
            } else {
                q.y[k - 1] += sgn * step;
            }
            q
        };
        let dp = distance_shoot(model, &shift(1.0), zp, opts)?;
        let dm = distance_shoot(model, &shift(-1.0), zp, opts)?;
        if dp.multiplicity == Multiplicity::Failed || dm.multiplicity == Multiplicity::Failed {
            return Err(Error::Shooting("differencing stencil failed".into()));
        }
        grad.push((dp.value - dm.value) / (2.0 * step));
    }
    let norm2 = z.x * z.x * (grad[0] * grad[0] + model.dual_norm_sq(z.x, &z.y, &grad[1..])?);
    let predicted = base.grad_z();
    let mismatch = grad.iter().zip(&predicted).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(EikonalReport { distance: base.value, residual: (norm2 - 1.0).abs(), covector_mismatch: mismatch })
}

/// One row of a boundary decomposition table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionRow {
    pub x: f64,
    pub x_prime: f64,
    pub psi: f64,
    /// `Ψ + log x + log x′`.
    pub psi_tilde: f64,
    /// `Ψ̃` minus its value on the previous row.
    pub increment: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decomposition {
    pub rows: Vec<DecompositionRow>,
    /// Least-squares ratio of successive increments (geometric decay < 1).
    pub increment_ratio: Option<f64>,
    pub converged: bool,
}

/// Tabulates `Ψ̃ = Ψ + log ρ_L + log ρ_R` (with `ρ_L = x`, `ρ_R = x′`) along
/// pairs approaching the boundary, and tests that the increments decay
/// geometrically.
pub fn boundary_decomposition(model: &MetricModel<f64>, pairs: &[(Point, Point)], opts: &ShootOptions) -> Result<Decomposition> {
    let mut rows: Vec<DecompositionRow> = Vec::with_capacity(pairs.len());
    for (z, zp) in pairs {
        let d = distance_shoot(model, z, zp, opts)?;
        if d.multiplicity == Multiplicity::Failed {
            return Err(Error::Shooting(format!("no geodesic for x = {}, x' = {}", z.x, zp.x)));
        }
        let psi_tilde = d.value + z.x.ln() + zp.x.ln();
        let increment = rows.last().map(|r| psi_tilde - r.psi_tilde);
        rows.push(DecompositionRow { x: z.x, x_prime: zp.x, psi: d.value, psi_tilde, increment });
    }
    let incs: Vec<f64> = rows.iter().filter_map(|r| r.increment).map(f64::abs).collect();
    let increment_ratio = if incs.len() >= 2 {
        let logs: Vec<f64> = incs.iter().map(|v| v.max(1e-300).ln()).collect();
        let idx: Vec<f64> = (0..logs.len()).map(|i| i as f64).collect();
        crate::fit::linear_fit(&idx, &logs).ok().map(|f| f.slope.exp())
    } else {
        None
    };
    let converged = increment_ratio.is_some_and(|q| q < 1.0) && incs.last().is_some_and(|&l| l <= incs[0]);
    Ok(Decomposition { rows, increment_ratio, converged })
}

/// CSV with header `model,x,y,x_prime,y_prime,psi,psi_tilde,flag`; `y`
/// components are separated by `;`.
pub fn distance_csv(model_tag: &str, rows: &[(Point, Point, DistanceResult)]) -> String {
    let mut out = String::from("model,x,y,x_prime,y_prime,psi,psi_tilde,flag\n");
    let join = |v: &[f64]| v.iter().map(|c| format!("{c}")).collect::<Vec<_>>().join(";");
    for (z, zp, d) in rows {
        let flag = match d.multiplicity {
            Multiplicity::Unique => "unique",
            Multiplicity::Multiple => "multiple",
            Multiplicity::Failed => "failed",
        };
        out.push_str(&format!(
            "{model_tag},{},{},{},{},{:.15e},{:.15e},{flag}\n",
            z.x,
            join(&z.y),
            zp.x,
            join(&zp.y),
            d.value,
            d.value + z.x.ln() + zp.x.ln()
        ));
    }
    out
}

/// Determinants of `∂z/∂(a, r)` for the exponential map at `z′` and the fitted
/// order of vanishing at `r = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DpiReport {
    pub radii: Vec<f64>,
    pub determinants: Vec<f64>,
    pub fit: LinearFit,
}

/// Fits the order of vanishing of `det dπ` for the map
/// `(z′, ζ̄′, r) ↦ (z, z′)`, `z = exp_{z′}(rζ̄′)`, near `ζ̄′ = direction`.
///
/// The `z′` block is the identity, so the determinant reduces to that of
/// `∂z/∂(a, r)`, with `a` coordinates on the unit sphere in the 0-cotangent
/// fibre (a `g`-orthonormal frame of the complement of `direction`).
/// Derivatives in `a` are central differences; `∂z/∂r` is half the flow
/// velocity.
pub fn jacobian_dpi(model: &MetricModel<f64>, zp: &Point, direction: &[f64], radii: &[f64]) -> Result<DpiReport> {
    let n = model.n();
    if direction.len() != n + 1 {
        return Err(Error::Usage("direction is a 0-covector (lambda, mu)".into()));
    }
    if radii.iter().any(|&r| !(1e-3..=1e-1).contains(&r)) || radii.len() < 3 {
        return Err(Error::Precondition("radii must lie in [1e-3, 1e-1] (at least three)".into()));
    }
    let e = model.eval(zp.x, &zp.y)?;
    let inner = |u: &[f64], v: &[f64]| u[0] * v[0] + e.inv.bilinear(&u[1..], &v[1..]);
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut cands = vec![direction.to_vec()];
    cands.extend((0..=n).map(|k| {
        let mut v = vec![0.0; n + 1];
        v[k] = 1.0;
        v
    }));
    for mut v in cands {
        for f in &frame {
            let c = inner(&v, f);
            v.iter_mut().zip(f).for_each(|(a, b)| *a -= c * b);
        }
        let nv = inner(&v, &v).sqrt();
        if nv > 1e-8 && frame.len() <= n {
            frame.push(v.iter().map(|a| a / nv).collect());
        }
    }
    let omega = frame[0].clone();
    let exp_map = |a: &[f64], r: f64| -> Result<Vec<f64>> {
        let mut c = omega.clone();
        for (k, ak) in a.iter().enumerate() {
            c.iter_mut().zip(&frame[k + 1]).for_each(|(ci, fi)| *ci += ak * fi);
        }
        let nc = inner(&c, &c).sqrt();
        let mut s = vec![zp.x];
        s.extend_from_slice(&zp.y);
        s.extend(c.iter().map(|ci| ci / nc));
        flow_fixed(model, &s, r / 2.0, 64)
    };
    let mut dets = Vec::with_capacity(radii.len());
    for &r in radii {
        let mut m = DMatrix::zeros(n + 1, n + 1);
        let da = 1e-5;
        for k in 0..n {
            let mut ap = vec![0.0; n];
            let mut am = vec![0.0; n];
            ap[k] = da;
            am[k] = -da;
            let zp_ = exp_map(&ap, r)?;
            let zm_ = exp_map(&am, r)?;
            for i in 0..=n {
                m[(i, k)] = (zp_[i] - zm_[i]) / (2.0 * da);
            }
        }
        let end = exp_map(&vec![0.0; n], r)?;
        let mut vel = vec![0.0; end.len()];
        crate::flow::field_0_into(model, &end, &mut vel)?;
        for i in 0..=n {
            m[(i, n)] = 0.5 * vel[i];
        }
        dets.push(m.determinant().abs());
    }
    let fit = loglog_fit(radii, &dets)?;
    if fit.r_squared < 0.99 {
        return Err(Error::FitFailure(format!("R^2 = {} below 0.99", fit.r_squared)));
    }
    Ok(DpiReport { radii: radii.to_vec(), determinants: dets, fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn half_space_example() {
        let m = MetricModel::<f64>::half_space(1);
        let d = distance_shoot(&m, &Point::new(1.0, vec![0.0]), &Point::new(1.0, vec![1.0]), &ShootOptions::default()).unwrap();
        assert_eq!(d.multiplicity, Multiplicity::Unique);
        assert_relative_eq!(d.value, 1.5f64.acosh(), epsilon = 1e-10);
        assert_relative_eq!(d.value, 0.96242, epsilon = 1e-5);
    }

    #[test]
    fn zero_distance() {
        let m = MetricModel::<f64>::half_space(2);
        let z = Point::new(0.7, vec![0.1, 0.2]);
        let d = distance_shoot(&m, &z, &z, &ShootOptions::default()).unwrap();
        assert_eq!(d.value, 0.0);
    }

    #[test]
    fn dpi_order_half_space() {
        let m = MetricModel::<f64>::half_space(2);
        let radii: Vec<f64> = (0..8).map(|k| 1e-3 * 10f64.powf(2.0 * k as f64 / 7.0)).collect();
        let rep = jacobian_dpi(&m, &Point::new(1.0, vec![0.0, 0.0]), &[0.3, 0.5, 0.2], &radii).unwrap();
        assert!((rep.fit.slope - 2.0).abs() < 0.05, "slope {}", rep.fit.slope);
    }
}
