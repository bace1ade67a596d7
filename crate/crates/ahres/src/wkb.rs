//! Semiclassical core: oscillatory integrals and stationary phase,
//! subprincipal symbols, the transport equation along bicharacteristics,
//! leading-order WKB kernels with finite-difference residuals, the conjugated
//! operator `Q_L` near the left boundary, and the indicial solve there.
//!
//! Everything here is `f64`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Mutex;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::distance::{distance_shoot, Multiplicity, Point, ShootOptions};
use crate::error::{Error, Result};
use crate::fd::taylor_coefficients;
use crate::fit::{loglog_fit, LinearFit};
use crate::flow::field_0_into;
use crate::laplacian::{laplace_beltrami, laplace_beltrami_richardson, partials2};
use crate::metric::{MetricModel, PhasePoint0};
use crate::ode::{dopri5, Event, OdeOptions, OdeStatus};
use crate::quad::adaptive_gk;

const I: Complex64 = Complex64::new(0.0, 1.0);

// ---------------------------------------------------------------------------
// Oscillatory integrals
// ---------------------------------------------------------------------------

/// `∫_a^b e^{iφ(x)/h} a(x) dx` by adaptive Gauss–Kronrod quadrature to
/// absolute accuracy `1e-10·(b − a)`.
///
/// The amplitude must vanish (to `1e-12` of its peak) at both ends.
pub fn oscillatory_quad<P, A>(phase: P, amplitude: A, h: f64, domain: (f64, f64)) -> Result<Complex64>
where
    P: Fn(f64) -> f64,
    A: Fn(f64) -> f64,
{
    let (a, b) = domain;
    if !(h >= 1e-3) {
        return Err(Error::Precondition(format!("h = {h} below 1e-3")));
    }
    if !(b > a) {
        return Err(Error::Usage("empty integration domain".into()));
    }
    let peak = (0..=200).map(|k| amplitude(a + (b - a) * k as f64 / 200.0).abs()).fold(0.0, f64::max);
    if amplitude(a).abs().max(amplitude(b).abs()) > 1e-12 * peak.max(f64::MIN_POSITIVE) {
        return Err(Error::Precondition("amplitude is not negligible at the domain ends".into()));
    }
    let res = adaptive_gk(|x| Complex64::from_polar(amplitude(x), phase(x) / h), a, b, 1e-10 * (b - a), 200_000)?;
    Ok(res.value)
}

/// Truncated polynomial product (coefficients in ascending degree).
fn poly_mul(p: &[f64], q: &[f64], max_deg: usize) -> Vec<f64> {
    let mut out = vec![0.0; max_deg + 1];
    for (i, &a) in p.iter().enumerate().take(max_deg + 1) {
        for (j, &b) in q.iter().enumerate().take(max_deg + 1 - i) {
            out[i + j] += a * b;
        }
    }
    out
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// The unique critical point of `φ` on `domain`, located by scanning `φ′`
/// (central differences) and refined by bisection.
fn critical_point<P: Fn(f64) -> f64>(phase: &P, domain: (f64, f64)) -> Result<f64> {
    let (a, b) = domain;
    let d = 1e-5 * (b - a);
    let dphi = |x: f64| (phase(x + d) - phase(x - d)) / (2.0 * d);
    let m = 4000;
    let xs: Vec<f64> = (0..=m).map(|k| a + (b - a) * k as f64 / m as f64).collect();
    let vals: Vec<f64> = xs.iter().map(|&x| dphi(x)).collect();
    let mut roots = Vec::new();
    for k in 0..m {
        if vals[k] == 0.0 || vals[k] * vals[k + 1] < 0.0 {
            roots.push((xs[k], xs[k + 1]));
        }
    }
    match roots.len() {
        0 => return Err(Error::Precondition("no critical point in the domain".into())),
        1 => {}
        k => return Err(Error::Precondition(format!("{k} critical points; split the domain"))),
    }
    let (mut lo, mut hi) = roots[0];
    let lo_positive = dphi(lo) > 0.0;
    if dphi(lo) == 0.0 {
        return Ok(lo);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if lo_positive == (dphi(mid) > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * (1.0 + mid.abs()) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Stationary-phase approximation of `∫ e^{iφ/h} a dx` through order
/// `h^order` (`order ≤ 2`) relative to the leading term.
///
/// The corrections are Hörmander's `L_j a` built from Taylor polynomials of
/// `a` (degree 4) and of `φ` (degree 6) at the critical point.
pub fn stationary_phase<P, A>(phase: P, amplitude: A, h: f64, domain: (f64, f64), order: usize) -> Result<Complex64>
where
    P: Fn(f64) -> f64,
    A: Fn(f64) -> f64,
{
    if order > 2 {
        return Err(Error::Usage("stationary phase supports order ≤ 2".into()));
    }
    let x0 = critical_point(&phase, domain)?;
    let step = 0.1f64.min((domain.1 - domain.0) / 40.0);
    let f = taylor_coefficients(&phase, x0, step, 8, 6);
    let av = taylor_coefficients(&amplitude, x0, step, 8, 4);
    let f2 = 2.0 * f[2];
    if f2.abs() <= 1e-6 {
        return Err(Error::Precondition(format!("degenerate critical point (φ″ = {f2:.3e})")));
    }
    // g = φ − φ(x₀) − φ″(x₀)(x − x₀)²/2.
    let mut g = vec![0.0; 7];
    g[3..7].copy_from_slice(&f[3..7]);
    let mut total = Complex64::new(av[0], 0.0);
    for j in 1..=order {
        let mut lj = Complex64::default();
        for mu in 0..=2 * j {
            let nu = j + mu;
            if 2 * nu < 3 * mu {
                continue;
            }
            let deg = 2 * nu;
            let mut w = av.clone();
            for _ in 0..mu {
                w = poly_mul(&w, &g, deg);
            }
            let coeff = w.get(deg).copied().unwrap_or(0.0);
            let deriv = coeff * factorial(deg);
            // ⟨φ″⁻¹D, D⟩^ν = (−1/φ″)^ν ∂^{2ν} in one dimension.
            let term = (-1.0 / f2).powi(nu as i32) * deriv / (2f64.powi(nu as i32) * factorial(mu) * factorial(nu));
            lj += term;
        }
        total += I.powi(-(j as i32)) * lj * h.powi(j as i32);
    }
    let sgn = f2.signum();
    let prefactor = (2.0 * PI * h / f2.abs()).sqrt() * Complex64::from_polar(1.0, sgn * PI / 4.0 + f[0] / h);
    Ok(prefactor * total)
}

// ---------------------------------------------------------------------------
// Symbols
// ---------------------------------------------------------------------------

type SymbolFn = Box<dyn Fn(&[f64], &[f64], f64) -> Complex64 + Send + Sync>;
type PrincipalFn = Box<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// A semiclassical symbol `P(z, ζ, h)` with its principal part and the
/// analytic mixed trace `Σⱼ ∂²P/∂zⱼ∂ζⱼ`.
pub struct SymbolData {
    pub dim: usize,
    pub full: SymbolFn,
    pub principal: PrincipalFn,
    pub mixed_trace: SymbolFn,
}

impl SymbolData {
    /// `Σⱼ ∂²P/∂zⱼ∂ζⱼ` by central differences (for checking `mixed_trace`).
    pub fn mixed_trace_fd(&self, z: &[f64], zeta: &[f64], h: f64, step: f64) -> Complex64 {
        let mut acc = Complex64::default();
        for j in 0..self.dim {
            let eval = |sz: f64, sk: f64| {
                let mut zz = z.to_vec();
                let mut kk = zeta.to_vec();
                zz[j] += sz;
                kk[j] += sk;
                (self.full)(&zz, &kk, h)
            };
            acc += (eval(step, step) - eval(step, -step) - eval(-step, step) + eval(-step, -step)) / (4.0 * step * step);
        }
        acc
    }
}

/// `s = P − p − (h/2i)Σⱼ ∂²P/∂zⱼ∂ζⱼ`.
pub fn subprincipal(sym: &SymbolData) -> impl Fn(&[f64], &[f64], f64) -> Complex64 + '_ {
    move |z, zeta, h| (sym.full)(z, zeta, h) - (sym.principal)(z, zeta) - h / (2.0 * I) * (sym.mixed_trace)(z, zeta, h)
}

/// Coefficient of `h` in a subprincipal symbol whose full symbol is at most
/// quadratic in `h`: `(4s(h) − s(2h))/(2h)`.
pub fn subprincipal_order_one<S: Fn(&[f64], &[f64], f64) -> Complex64>(s: &S, z: &[f64], zeta: &[f64], h: f64) -> Complex64 {
    (4.0 * s(z, zeta, h) - s(z, zeta, 2.0 * h)) / (2.0 * h)
}

/// Full symbol of `h²Δ_g − h²n²/4 − 1` acting on coordinate half-densities in
/// `(x, y)`, i.e. conjugated by `w^{1/2}` with `w = x^{−(n+1)}√det g₀`.
///
/// The conjugated operator is `(hD_k) a^{kl} (hD_l) + h²V − h²n²/4 − 1` with
/// `a = x²·diag(1, g₀⁻¹)`, whose left symbol is
/// `a^{kl}ζ_kζ_l − ih ∂_k a^{kl} ζ_l + h²(V − n²/4) − 1`. The potential
/// `V = w^{−1/2}∂_k(a^{kl}∂_l w^{1/2})` is evaluated by finite differences;
/// it only enters at order `h²`.
pub fn laplacian_symbol(model: &MetricModel<f64>) -> SymbolData {
    let n = model.n();
    let dim = n + 1;
    // a^{kl} and its divergence ∂_k a^{kl}.
    let coeffs = {
        let model = model.clone();
        move |z: &[f64]| -> (Vec<f64>, Vec<f64>) {
            let (x, y) = (z[0], &z[1..]);
            let e = model.eval(x, y).expect("symbol evaluated inside the chart");
            let mut a = vec![0.0; dim * dim];
            a[0] = x * x;
            let mut div = vec![0.0; dim];
            div[0] = 2.0 * x;
            for i in 0..n {
                for j in 0..n {
                    a[(i + 1) * dim + j + 1] = x * x * e.inv[(i, j)];
                    div[j + 1] += x * x * e.dy_inv[i][(i, j)];
                }
            }
            (a, div)
        }
    };
    let half_w = {
        let model = model.clone();
        move |z: &[f64]| -> f64 {
            let e = model.eval(z[0], &z[1..]).expect("symbol evaluated inside the chart");
            (z[0].powi(-(n as i32 + 1)) * e.det.sqrt()).sqrt()
        }
    };
    let potential = {
        let coeffs = coeffs.clone();
        move |z: &[f64]| -> f64 {
            // V = φ⁻¹ ∂_k(a^{kl} ∂_l φ), φ = w^{1/2}.
            let d = 1e-4 * z[0];
            let flux = |p: &[f64], k: usize| -> f64 {
                let (a, _) = coeffs(p);
                (0..dim)
                    .map(|l| {
                        let mut pp = p.to_vec();
                        let mut pm = p.to_vec();
                        pp[l] += d;
                        pm[l] -= d;
                        a[k * dim + l] * (half_w(&pp) - half_w(&pm)) / (2.0 * d)
                    })
                    .sum()
            };
            let mut acc = 0.0;
            for k in 0..dim {
                let mut pp = z.to_vec();
                let mut pm = z.to_vec();
                pp[k] += d;
                pm[k] -= d;
                acc += (flux(&pp, k) - flux(&pm, k)) / (2.0 * d);
            }
            acc / half_w(z)
        }
    };
    let nn = (n * n) as f64 / 4.0;
    let principal = {
        let coeffs = coeffs.clone();
        move |z: &[f64], zeta: &[f64]| -> f64 {
            let (a, _) = coeffs(z);
            let mut q = 0.0;
            for k in 0..dim {
                for l in 0..dim {
                    q += a[k * dim + l] * zeta[k] * zeta[l];
                }
            }
            q - 1.0
        }
    };
    let full = {
        let coeffs = coeffs.clone();
        let principal = principal.clone();
        move |z: &[f64], zeta: &[f64], h: f64| -> Complex64 {
            let (_, div) = coeffs(z);
            let first: f64 = div.iter().zip(zeta).map(|(d, k)| d * k).sum();
            Complex64::new(principal(z, zeta) + h * h * (potential(z) - nn), -h * first)
        }
    };
    let mixed_trace = {
        move |z: &[f64], zeta: &[f64], h: f64| -> Complex64 {
            // Σ_k ∂_k(2a^{kl}ζ_l) − ih Σ_k ∂_k ∂_l a^{kl}; the second sum by
            // central differences of the divergence.
            let (_, div) = coeffs(z);
            let principal_part: f64 = 2.0 * div.iter().zip(zeta).map(|(d, k)| d * k).sum::<f64>();
            let d = 1e-5 * z[0];
            let mut dd = 0.0;
            for l in 0..dim {
                let mut pp = z.to_vec();
                let mut pm = z.to_vec();
                pp[l] += d;
                pm[l] -= d;
                dd += (coeffs(&pp).1[l] - coeffs(&pm).1[l]) / (2.0 * d);
            }
            Complex64::new(principal_part, -h * dd)
        }
    };
    SymbolData { dim, full: Box::new(full), principal: Box::new(principal), mixed_trace: Box::new(mixed_trace) }
}

// ---------------------------------------------------------------------------
// Transport
// ---------------------------------------------------------------------------

/// Initial data of the Lagrangian carried by the flow.
#[derive(Debug, Clone, PartialEq)]
pub enum Lagrangian {
    /// Flowout of the unit cosphere at the start point (the conormal of a
    /// point). Variations are a `g`-orthonormal frame of the complement of
    /// the start covector.
    PointFlowout,
    /// Explicit tangent vectors in `(x, y, λ, μ)`, transverse to the flow.
    Custom(Vec<Vec<f64>>),
}

/// Amplitude along a bicharacteristic.
#[derive(Debug, Clone, Serialize)]
pub struct AmplitudeTrace {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Amplitude relative to the Riemannian half-density.
    pub a: Vec<Complex64>,
    /// Spread determinant `det ∂z/∂(θ, t) · √det g` (signed).
    pub jacobian: Vec<f64>,
    /// `∫₀ᵗ s dt`.
    pub s_integral: Vec<Complex64>,
}

impl AmplitudeTrace {
    /// Max relative deviation of `a·√|J|·e^{(i/h)∫s}` from its first value.
    pub fn conservation_defect(&self, h: f64) -> f64 {
        let q: Vec<Complex64> = (0..self.a.len())
            .map(|k| self.a[k] * self.jacobian[k].abs().sqrt() * (I * self.s_integral[k] / h).exp())
            .collect();
        q.iter().map(|v| (v - q[0]).norm() / q[0].norm()).fold(0.0, f64::max)
    }
}

/// `g`-orthonormal frame (in the 0-cotangent inner product at `(x, y)`) of
/// the complement of the covector `omega`.
fn complement_frame(model: &MetricModel<f64>, x: f64, y: &[f64], omega: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = model.n();
    let e = model.eval(x, y)?;
    let inner = |u: &[f64], v: &[f64]| u[0] * v[0] + e.inv.bilinear(&u[1..], &v[1..]);
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut cands = vec![omega.to_vec()];
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
    frame.remove(0);
    Ok(frame)
}

/// Directional derivative `DF(s)·v` of the 0-field by a fourth-order central
/// difference.
fn field_derivative(model: &MetricModel<f64>, s: &[f64], v: &[f64], out: &mut [f64]) -> Result<()> {
    let vmax = v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    if vmax == 0.0 {
        out.iter_mut().for_each(|o| *o = 0.0);
        return Ok(());
    }
    let eps = 1e-4 * s[0].min(1.0) / vmax;
    let dim = s.len();
    let mut buf = vec![0.0; dim];
    let mut acc = vec![0.0; dim];
    for (k, w) in [(2.0, -1.0), (1.0, 8.0), (-1.0, -8.0), (-2.0, 1.0)] {
        let p: Vec<f64> = s.iter().zip(v).map(|(a, b)| a + k * eps * b).collect();
        field_0_into(model, &p, &mut buf)?;
        acc.iter_mut().zip(&buf).for_each(|(a, b)| *a += w * b);
    }
    out.iter_mut().zip(&acc).for_each(|(o, a)| *o = a / (12.0 * eps));
    Ok(())
}

fn spread_det(model: &MetricModel<f64>, aug: &[f64], n: usize) -> Result<f64> {
    let d = 2 * (n + 1);
    let s = &aug[..d];
    let mut f = vec![0.0; d];
    field_0_into(model, s, &mut f)?;
    let mut m = nalgebra::DMatrix::zeros(n + 1, n + 1);
    for k in 0..n {
        for i in 0..=n {
            m[(i, k)] = aug[d + k * d + i];
        }
    }
    for i in 0..=n {
        m[(i, n)] = f[i];
    }
    let e = model.eval_extended(s[0], &s[1..=n])?;
    Ok(m.determinant() * s[0].powi(-(n as i32 + 1)) * e.det.sqrt())
}

/// Solves the transport equation `(h/i)ℒ_{H_p}a + s·a = source` along the
/// bicharacteristic from `start` (a unit 0-covector), sampled at `times`.
///
/// The Jacobi equations for the Lagrangian variations are integrated
/// alongside the flow, giving the spread `J(t)`. The amplitude is
/// `a(t) = J(t)^{−1/2} e^{−(i/h)∫s} [c₀ + (i/h)∫ J^{1/2} e^{(i/h)∫s} source]`
/// with `c₀` fixed by `a(times[0]) = a0`. A sign change of `J` is a
/// conjugate point and raises [`Error::Caustic`].
#[allow(clippy::too_many_arguments)]
pub fn transport_solve(
    model: &MetricModel<f64>,
    start: &PhasePoint0<f64>,
    lagrangian: &Lagrangian,
    times: &[f64],
    s: &(dyn Fn(&[f64]) -> Complex64 + Sync),
    source: Option<&(dyn Fn(f64, &[f64]) -> Complex64 + Sync)>,
    h: f64,
    a0: Complex64,
) -> Result<AmplitudeTrace> {
    let n = model.n();
    let d = 2 * (n + 1);
    if times.is_empty() || times.windows(2).any(|w| w[1] <= w[0]) || times[0] < 0.0 {
        return Err(Error::Usage("times must be non-negative and increasing".into()));
    }
    let energy = model.symbol_p(start)?;
    if energy.abs() > 1e-8 {
        return Err(Error::Precondition(format!("start covector is off the characteristic set (p = {energy:.3e})")));
    }
    let variations = match lagrangian {
        Lagrangian::PointFlowout => {
            let mut omega = vec![start.lambda];
            omega.extend_from_slice(&start.mu);
            complement_frame(model, start.x, &start.y, &omega)?
                .into_iter()
                .map(|f| {
                    let mut v = vec![0.0; n + 1];
                    v.extend(f);
                    v
                })
                .collect()
        }
        Lagrangian::Custom(v) => v.clone(),
    };
    if variations.len() != n || variations.iter().any(|v| v.len() != d) {
        return Err(Error::Usage(format!("need {n} variations of length {d}")));
    }
    // State: phase point, n variations, ∫s (re, im), ∫ J^{1/2}e^{(i/h)∫s}·source (re, im).
    let mut y0 = start.to_state();
    for v in &variations {
        y0.extend_from_slice(v);
    }
    y0.extend_from_slice(&[0.0; 4]);
    let dim = y0.len();
    let rhs = |_t: f64, y: &[f64], out: &mut [f64]| -> Result<()> {
        field_0_into(model, &y[..d], &mut out[..d])?;
        for k in 0..n {
            let (lo, hi) = (d + k * d, d + (k + 1) * d);
            let mut tmp = vec![0.0; d];
            field_derivative(model, &y[..d], &y[lo..hi], &mut tmp)?;
            out[lo..hi].copy_from_slice(&tmp);
        }
        let sv = s(&y[..d]);
        out[dim - 4] = sv.re;
        out[dim - 3] = sv.im;
        match source {
            Some(src) => {
                let j = spread_det(model, y, n)?.abs().sqrt();
                let si = Complex64::new(y[dim - 4], y[dim - 3]);
                let v = j * (I * si / h).exp() * src(_t, &y[..d]);
                out[dim - 2] = v.re;
                out[dim - 1] = v.im;
            }
            None => {
                out[dim - 2] = 0.0;
                out[dim - 1] = 0.0;
            }
        }
        Ok(())
    };
    let opts = OdeOptions { atol: 1e-12, rtol: 1e-12, h0: None, h_max: 0.05, max_steps: 200_000 };
    let events = [Event {
        g: Box::new(|_t: f64, y: &[f64]| spread_det(model, y, n).unwrap_or(f64::NAN)),
        direction: 0,
        terminal: true,
        tol: 0.0,
    }];
    let t_end = *times.last().expect("non-empty");
    let sol = if t_end > 0.0 { Some(dopri5(rhs, 0.0, &y0, t_end, &opts, &events)) } else { None };
    if let Some(sol) = &sol {
        match &sol.status {
            OdeStatus::Completed => {}
            OdeStatus::Event { .. } => return Err(Error::Caustic { time: sol.t_final() }),
            OdeStatus::RhsFailed(e) => return Err(e.clone()),
            other => return Err(Error::Integrator(format!("transport integration stopped: {other:?}"))),
        }
    }
    let mut out = AmplitudeTrace { times: times.to_vec(), states: vec![], a: vec![], jacobian: vec![], s_integral: vec![] };
    let mut integral = Vec::with_capacity(times.len());
    for &t in times {
        let y = match &sol {
            Some(sol) if t > 0.0 => sol.eval(t).ok_or_else(|| Error::Integrator("sample outside solution".into()))?,
            _ => y0.clone(),
        };
        out.jacobian.push(spread_det(model, &y, n)?);
        out.s_integral.push(Complex64::new(y[dim - 4], y[dim - 3]));
        integral.push(Complex64::new(y[dim - 2], y[dim - 1]));
        out.states.push(y[..d].to_vec());
    }
    let j0 = out.jacobian[0].abs();
    if !(j0 > 0.0) {
        return Err(Error::Precondition("spread vanishes at the first sample; start the samples after t = 0".into()));
    }
    let c0 = a0 * j0.sqrt() * (I * out.s_integral[0] / h).exp() - I / h * integral[0];
    for k in 0..times.len() {
        let c = c0 + I / h * integral[k];
        out.a.push(c * (-I * out.s_integral[k] / h).exp() / out.jacobian[k].abs().sqrt());
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// WKB kernel
// ---------------------------------------------------------------------------

/// Calibration radius for the near-diagonal amplitude.
pub const CALIBRATION_RADIUS: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WkbOptions {
    pub shoot: ShootOptions,
}

impl Default for WkbOptions {
    fn default() -> Self {
        Self { shoot: ShootOptions { tolerance: 1e-13, steps: Some(400), ..ShootOptions::default() } }
    }
}

/// `h`-independent ingredients of the WKB kernel at `(z, z′)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseAmplitude {
    pub psi: f64,
    pub amplitude: f64,
    pub jacobian: f64,
    /// Unnormalised initial covector at `z` (a warm start for neighbours).
    pub covector: Vec<f64>,
}

impl PhaseAmplitude {
    pub fn kernel(&self, h: f64) -> Complex64 {
        Complex64::from_polar(self.amplitude, self.psi / h)
    }
}

/// Distance and transport amplitude for the pair `(z, z′)`.
///
/// The amplitude is `C·J^{−1/2}` with `J` the spread of the geodesic flowout
/// from `z′`. For `n = 2`, `C` matches `1/(4πr₀)` at `r₀ =` [`CALIBRATION_RADIUS`],
/// extrapolated (Richardson, `r₀` and `r₀/2`) to remove the `O(r₀²)`
/// curvature term; other dimensions are normalised to `r^{−n/2}` instead.
pub fn wkb_phase_amplitude(model: &MetricModel<f64>, z: &Point, zp: &Point, opts: &WkbOptions) -> Result<PhaseAmplitude> {
    let n = model.n();
    let d = distance_shoot(model, z, zp, &opts.shoot)?;
    match d.multiplicity {
        Multiplicity::Failed => return Err(Error::Shooting("no geodesic joins the points".into())),
        Multiplicity::Multiple => return Err(Error::Shooting(format!("{} geodesics join the points", d.solutions.len()))),
        Multiplicity::Unique => {}
    }
    let r = d.value;
    if !(r >= 0.1 * (1.0 - 1e-9)) {
        return Err(Error::Precondition(format!("distance {r} below 0.1")));
    }
    // Flow back from z′ along the reversed arrival covector.
    let fc = &d.final_covector;
    let start = PhasePoint0::new(zp.x, zp.y.clone(), -fc.lambda, fc.mu.iter().map(|m| -m).collect());
    let r0 = CALIBRATION_RADIUS;
    let times = [r0 / 4.0, r0 / 2.0, r / 2.0];
    let zero = |_: &[f64]| Complex64::default();
    let trace = transport_solve(model, &start, &Lagrangian::PointFlowout, &times, &zero, None, 1.0, Complex64::new(1.0, 0.0))?;
    let norm = |rr: f64, j: f64| {
        if n == 2 {
            j.abs().sqrt() / (4.0 * PI * rr)
        } else {
            j.abs().sqrt() / rr.powf(n as f64 / 2.0)
        }
    };
    let c_half = norm(r0 / 2.0, trace.jacobian[0]);
    let c_full = norm(r0, trace.jacobian[1]);
    let c = (4.0 * c_half - c_full) / 3.0;
    let j = trace.jacobian[2];
    let covector = {
        let ic = &d.initial_covector;
        let mut w = vec![ic.lambda * r / 2.0];
        w.extend(ic.mu.iter().map(|m| m * r / 2.0));
        w
    };
    Ok(PhaseAmplitude { psi: r, amplitude: c / j.abs().sqrt(), jacobian: j, covector })
}

/// Leading-order WKB kernel `e^{iΨ(z,z′)/h}·a(z, z′)`.
pub fn wkb_kernel(model: &MetricModel<f64>, z: &Point, zp: &Point, h: f64, opts: &WkbOptions) -> Result<Complex64> {
    if !(h > 0.0) {
        return Err(Error::Usage("h must be positive".into()));
    }
    Ok(wkb_phase_amplitude(model, z, zp, opts)?.kernel(h))
}

// ---------------------------------------------------------------------------
// Residuals
// ---------------------------------------------------------------------------

/// One grid point of a residual table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualRow {
    pub x: f64,
    pub y: Vec<f64>,
    pub kernel: Complex64,
    pub residual: Complex64,
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualTable {
    pub h: f64,
    pub rows: Vec<ResidualRow>,
    pub max_relative: f64,
}

/// Applies `h²Δ_g − h²n²/4 − 1` to `kernel(·, z′)` at each grid point.
///
/// `delta` is the finite-difference step relative to `x` (the 0-scale) and
/// must satisfy `delta ≤ h/10`. Derivatives are second-order central
/// differences, Richardson-extrapolated over `delta` and `delta/2`. Grid
/// points closer than 0.3 to `z′` are rejected.
pub fn residual_check(
    kernel: &(dyn Fn(&Point) -> Result<Complex64> + Sync),
    model: &MetricModel<f64>,
    grid: &[Point],
    zp: &Point,
    h: f64,
    delta: f64,
) -> Result<ResidualTable> {
    if !(delta > 0.0 && delta <= h / 10.0) {
        return Err(Error::Usage(format!("step {delta} does not resolve the oscillation (need ≤ h/10 = {})", h / 10.0)));
    }
    let n = model.n();
    let near = ShootOptions { starts: 1, ..ShootOptions::default() };
    for z in grid {
        let r = distance_shoot(model, z, zp, &near)?.value;
        if !(r >= 0.3) {
            return Err(Error::Precondition(format!("grid point at distance {r} < 0.3 from the pole")));
        }
    }
    let rows: Result<Vec<ResidualRow>> = grid
        .par_iter()
        .map(|z| {
            let u = |x: f64, y: &[f64]| kernel(&Point::new(x, y.to_vec()));
            let k = u(z.x, &z.y)?;
            let lap = laplace_beltrami_richardson(model, &u, z.x, &z.y, delta * z.x)?;
            let residual = h * h * lap - (h * h * (n * n) as f64 / 4.0 + 1.0) * k;
            let relative = if k.norm() > 0.0 { residual.norm() / k.norm() } else { residual.norm() };
            Ok(ResidualRow { x: z.x, y: z.y.clone(), kernel: k, residual, relative })
        })
        .collect();
    let rows = rows?;
    let max_relative = rows.iter().map(|r| r.relative).fold(0.0, f64::max);
    Ok(ResidualTable { h, rows, max_relative })
}

/// Residual-versus-`h` report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub model: String,
    pub n: usize,
    pub h: Vec<f64>,
    pub residual: Vec<f64>,
    pub fitted_exponent: f64,
    pub ci: [f64; 2],
    #[serde(skip)]
    pub fit: LinearFit,
}

impl ScalingReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serialises")
    }
}

/// Fits the `h`-exponent of the WKB residual (max relative residual over the
/// grid). One finite-difference step, `min(h)/10` relative to `x`, serves
/// every `h`, so the phase and amplitude at each stencil point are computed
/// once and reused.
pub fn wkb_residual_scaling(model: &MetricModel<f64>, grid: &[Point], zp: &Point, hs: &[f64], opts: &WkbOptions) -> Result<ScalingReport> {
    let h_min = hs.iter().copied().fold(f64::INFINITY, f64::min);
    if grid.is_empty() || hs.len() < 2 || !(h_min > 0.0) {
        return Err(Error::Usage("need at least two positive h values".into()));
    }
    let delta = h_min / 10.0;
    // Grid points get the full multistart (uniqueness check); stencil
    // neighbours are warm-started from the nearest grid point.
    let centers: Vec<PhaseAmplitude> = grid.par_iter().map(|z| wkb_phase_amplitude(model, z, zp, opts)).collect::<Result<_>>()?;
    let cache: Mutex<HashMap<Vec<u64>, PhaseAmplitude>> = Mutex::new(HashMap::new());
    let lookup = |z: &Point| -> Result<PhaseAmplitude> {
        let mut key = vec![z.x.to_bits()];
        key.extend(z.y.iter().map(|v| v.to_bits()));
        if let Some(v) = cache.lock().expect("cache lock").get(&key) {
            return Ok(v.clone());
        }
        let nearest = grid
            .iter()
            .enumerate()
            .map(|(k, g)| {
                let d2 = (g.x - z.x).powi(2) + g.y.iter().zip(&z.y).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
                (k, d2)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(k, _)| k)
            .expect("non-empty grid");
        let warm = WkbOptions {
            shoot: ShootOptions { starts: 1, initial_guess: Some(centers[nearest].covector.clone()), ..opts.shoot.clone() },
        };
        let v = wkb_phase_amplitude(model, z, zp, &warm)?;
        cache.lock().expect("cache lock").insert(key, v.clone());
        Ok(v)
    };
    let mut residual = Vec::with_capacity(hs.len());
    for &h in hs {
        let kernel = |z: &Point| -> Result<Complex64> { Ok(lookup(z)?.kernel(h)) };
        residual.push(residual_check(&kernel, model, grid, zp, h, delta)?.max_relative);
    }
    let fit = loglog_fit(hs, &residual)?;
    Ok(ScalingReport {
        model: model.family_tag().to_string(),
        n: model.n(),
        h: hs.to_vec(),
        residual,
        fitted_exponent: fit.slope,
        ci: fit.ci95.into(),
        fit,
    })
}

// ---------------------------------------------------------------------------
// Conjugated operator and indicial solve
// ---------------------------------------------------------------------------

/// Smooth test functions for [`q_conjugate_check`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum TestFunction {
    /// `exp(−(|x − x_c|² + |y − y_c|²)/(2σ²))`.
    Gaussian { center_x: f64, center_y: Vec<f64>, sigma: f64 },
    /// `exp(−(x − x_c)²/(2σ²))`, constant in `y`.
    GaussianX { center_x: f64, sigma: f64 },
}

impl TestFunction {
    pub fn eval(&self, x: f64, y: &[f64]) -> f64 {
        match self {
            TestFunction::Gaussian { center_x, center_y, sigma } => {
                let r2 = (x - center_x).powi(2) + y.iter().zip(center_y).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
                (-r2 / (2.0 * sigma * sigma)).exp()
            }
            TestFunction::GaussianX { center_x, sigma } => (-(x - center_x).powi(2) / (2.0 * sigma * sigma)).exp(),
        }
    }

    /// Effective support in `x` (six widths).
    pub fn x_support(&self) -> (f64, f64) {
        let (c, s) = match self {
            TestFunction::Gaussian { center_x, sigma, .. } | TestFunction::GaussianX { center_x, sigma } => (*center_x, *sigma),
        };
        (c - 6.0 * s, c + 6.0 * s)
    }

    fn center(&self, n: usize) -> (f64, Vec<f64>, f64) {
        match self {
            TestFunction::Gaussian { center_x, center_y, sigma } => (*center_x, center_y.clone(), *sigma),
            TestFunction::GaussianX { center_x, sigma } => (*center_x, vec![0.0; n], *sigma),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QCheckReport {
    pub h: f64,
    pub max_defect: f64,
    /// Largest `|f|` and `|Im f|` over the sample points.
    pub max_abs_f: f64,
    pub max_imag_f: f64,
    pub points: usize,
}

/// FD step used by [`q_conjugate_check`].
pub const Q_CHECK_STEP: f64 = 1e-3;

/// Compares `x⁻¹x^{−n/2+i/h}A⁻¹P_L(x^{n/2−i/h}A u)` with
/// `(hD_x)x(hD_x)u − 2hD_xu + xΣ(hD_{yᵢ})g₀^{ij}(hD_{yⱼ})u + f·u` on a grid
/// over the test function, where `P_L = h²Δ − h²n²/4 − 1` and
/// `A = (det g₀)^{−1/4}` makes the conjugate symmetric for `dx dy`.
///
/// `f` is not known in closed form: at every sample point it is taken from
/// the left side applied to the constant function, so the defect measures
/// exactly the derivative terms.
pub fn q_conjugate_check(model: &MetricModel<f64>, test: &TestFunction, h: f64) -> Result<QCheckReport> {
    let n = model.n();
    let (lo, _) = test.x_support();
    if lo <= 0.0 {
        return Err(Error::Usage("test function support reaches x = 0".into()));
    }
    if !(h > 0.0) {
        return Err(Error::Usage("h must be positive".into()));
    }
    let nf = n as f64;
    let conj = |x: f64, y: &[f64]| -> Result<Complex64> {
        let det = model.eval(x, y)?.det;
        Ok(Complex64::new(nf / 2.0, -1.0 / h).expf(x) * det.powf(-0.25))
    };
    let p_l = |u: &dyn Fn(f64, &[f64]) -> f64, x: f64, y: &[f64]| -> Result<Complex64> {
        let v = |x: f64, y: &[f64]| -> Result<Complex64> { Ok(conj(x, y)? * u(x, y)) };
        let lap = laplace_beltrami(model, &v, x, y, Q_CHECK_STEP)?;
        let vz = v(x, y)?;
        Ok((h * h * lap - (h * h * nf * nf / 4.0 + 1.0) * vz) / (x * conj(x, y)?))
    };
    let u = |x: f64, y: &[f64]| test.eval(x, y);
    let one = |_: f64, _: &[f64]| 1.0;
    let rhs0 = |x: f64, y: &[f64]| -> Result<Complex64> {
        let w = |x: f64, y: &[f64]| Ok(Complex64::new(u(x, y), 0.0));
        let p = partials2(&w, x, y, Q_CHECK_STEP)?;
        let e = model.eval(x, y)?;
        let d = n + 1;
        let mut acc = -h * h * (p.grad[0] + x * p.hessian[0]) + 2.0 * I * h * p.grad[0];
        for i in 0..n {
            for j in 0..n {
                acc -= h * h * x * (e.dy_inv[i][(i, j)] * p.grad[j + 1] + e.inv[(i, j)] * p.hessian[(i + 1) * d + j + 1]);
            }
        }
        Ok(acc)
    };
    let (cx, cy, sigma) = test.center(n);
    let m = 9;
    let mut pts = Vec::with_capacity(m * m);
    for a in 0..m {
        for b in 0..m {
            let x = cx + sigma * 3.0 * (2.0 * a as f64 / (m - 1) as f64 - 1.0);
            let mut y = cy.clone();
            if n > 0 {
                y[0] += sigma * 3.0 * (2.0 * b as f64 / (m - 1) as f64 - 1.0);
            }
            pts.push((x, y));
        }
    }
    let results: Result<Vec<(f64, f64, f64)>> = pts
        .par_iter()
        .map(|(x, y)| {
            let f = p_l(&one, *x, y)?;
            let lhs = p_l(&u, *x, y)?;
            let rhs = rhs0(*x, y)? + f * u(*x, y);
            Ok(((lhs - rhs).norm(), f.norm(), f.im.abs()))
        })
        .collect();
    let results = results?;
    Ok(QCheckReport {
        h,
        max_defect: results.iter().map(|r| r.0).fold(0.0, f64::max),
        max_abs_f: results.iter().map(|r| r.1).fold(0.0, f64::max),
        max_imag_f: results.iter().map(|r| r.2).fold(0.0, f64::max),
        points: results.len(),
    })
}

/// The indicial factor `(1+j)² − (2i/h)(1+j)`.
pub fn indicial_factor(j: u32, h: f64) -> Complex64 {
    let k = 1.0 + j as f64;
    Complex64::new(k * k, -2.0 * k / h)
}

/// `G = −((1+j)² − (2i/h)(1+j))⁻¹ E`.
pub fn indicial_solve(j: u32, h: f64, e: Complex64) -> Result<Complex64> {
    if !(h > 0.0) {
        return Err(Error::Precondition("h must be positive".into()));
    }
    Ok(-e / indicial_factor(j, h))
}
