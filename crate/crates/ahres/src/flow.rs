//! Bicharacteristic flow in 0-cotangent coordinates, the shift
//! `λ = −1 + xξ, μ = xη`, and the shifted flow that reaches `x = 0` in
//! finite time.
//!
//! Hamiltonian time is used throughout. On `p = 0` the projected curve has
//! speed 2 in the metric `g`, so geodesic length is twice the flow time.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::{loglog_fit, LinearFit};
use crate::metric::{MetricModel, PhasePoint0};
use crate::ode::{dopri5, rk_fixed, DenseSegment, Event, OdeOptions, OdeStatus};
use crate::scalar::Real;

/// A point `(x, y, ξ, η)` of the standard cotangent bundle near the left
/// boundary, related to [`PhasePoint0`] by `λ = −1 + xξ`, `μ = xη`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftedPoint<T> {
    pub x: T,
    pub y: Vec<T>,
    pub xi: T,
    pub eta: Vec<T>,
}

impl<T: Real> ShiftedPoint<T> {
    pub fn new(x: T, y: Vec<T>, xi: T, eta: Vec<T>) -> Self {
        assert_eq!(y.len(), eta.len(), "y and eta must have the same dimension");
        Self { x, y, xi, eta }
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Packs as `[x, y…, ξ, η…]`.
    pub fn to_state(&self) -> Vec<T> {
        let mut s = Vec::with_capacity(2 * self.n() + 2);
        s.push(self.x);
        s.extend_from_slice(&self.y);
        s.push(self.xi);
        s.extend_from_slice(&self.eta);
        s
    }

    pub fn from_state(s: &[T]) -> Self {
        let n = (s.len() - 2) / 2;
        Self { x: s[0], y: s[1..1 + n].to_vec(), xi: s[1 + n], eta: s[2 + n..].to_vec() }
    }
}

/// Tangent components `(ẋ, ẏ, λ̇, μ̇)` or `(ẋ, ẏ, ξ̇, η̇)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tangent<T> {
    pub dx: T,
    pub dy: Vec<T>,
    pub dfibre: T,
    pub dfibre_y: Vec<T>,
}

impl<T: Real> Tangent<T> {
    fn from_state(s: &[T]) -> Self {
        let n = (s.len() - 2) / 2;
        Self { dx: s[0], dy: s[1..1 + n].to_vec(), dfibre: s[1 + n], dfibre_y: s[2 + n..].to_vec() }
    }
}

/// Shift to standard fibre coordinates: `ξ = (λ + 1)/x`, `η = μ/x`.
/// Requires `x > 0`; at `x = 0` use [`shift_at_boundary`].
pub fn shift_to_standard<T: Real>(pt: &PhasePoint0<T>) -> Result<ShiftedPoint<T>> {
    if pt.x > T::zero() {
        return Ok(ShiftedPoint {
            x: pt.x,
            y: pt.y.clone(),
            xi: (pt.lambda + T::one()) / pt.x,
            eta: pt.mu.iter().map(|&m| m / pt.x).collect(),
        });
    }
    if pt.x == T::zero() && pt.lambda == -T::one() && pt.mu.iter().all(|&m| m == T::zero()) {
        return Err(Error::NotShiftable(
            "at x = 0 the fibre values (xi, eta) are not determined by (lambda, mu); supply them via shift_at_boundary".into(),
        ));
    }
    Err(Error::NotShiftable(format!(
        "point with x = {} and lambda = {} is not on the shifted boundary section",
        pt.x, pt.lambda
    )))
}

/// Shift at `x = 0`, where `(λ, μ) = (−1, 0)` and `(ξ, η)` are supplied.
pub fn shift_at_boundary<T: Real>(pt: &PhasePoint0<T>, xi: T, eta: Vec<T>) -> Result<ShiftedPoint<T>> {
    if pt.x != T::zero() {
        return shift_to_standard(pt);
    }
    if pt.lambda != -T::one() || pt.mu.iter().any(|&m| m != T::zero()) {
        return Err(Error::NotShiftable(format!("x = 0 requires lambda = -1 and mu = 0, got lambda = {}", pt.lambda)));
    }
    Ok(ShiftedPoint { x: T::zero(), y: pt.y.clone(), xi, eta })
}

/// Inverse of the shift: `λ = −1 + xξ`, `μ = xη`.
pub fn unshift<T: Real>(sp: &ShiftedPoint<T>) -> PhasePoint0<T> {
    PhasePoint0 {
        x: sp.x,
        y: sp.y.clone(),
        lambda: -T::one() + sp.x * sp.xi,
        mu: sp.eta.iter().map(|&e| sp.x * e).collect(),
    }
}

/// `p̃ = (xξ)² − 2xξ + x² g₀^{ij} ηᵢ ηⱼ`.
pub fn shifted_symbol<T: Real>(model: &MetricModel<T>, sp: &ShiftedPoint<T>) -> Result<T> {
    let e = model.eval_extended(sp.x, &sp.y)?;
    let xx = sp.x * sp.xi;
    Ok(xx * xx - T::c(2.0) * xx + sp.x * sp.x * e.inv.quad(&sp.eta))
}

/// `p̃/x = xξ² − 2ξ + x g₀^{ij} ηᵢ ηⱼ`, the Hamiltonian generating the
/// shifted flow.
pub fn shifted_hamiltonian_over_x<T: Real>(model: &MetricModel<T>, sp: &ShiftedPoint<T>) -> Result<T> {
    let e = model.eval_extended(sp.x, &sp.y)?;
    Ok(sp.x * sp.xi * sp.xi - T::c(2.0) * sp.xi + sp.x * e.inv.quad(&sp.eta))
}

/// Writes the Hamilton field of `p` at the packed state `[x, y, λ, μ]`.
pub fn field_0_into<T: Real>(model: &MetricModel<T>, s: &[T], out: &mut [T]) -> Result<()> {
    let n = model.n();
    let (x, y, lambda, mu) = (s[0], &s[1..1 + n], s[1 + n], &s[2 + n..]);
    let e = model.eval(x, y)?;
    let two = T::c(2.0);
    out[0] = two * x * lambda;
    let gmu = e.inv.mul_vec(mu);
    for i in 0..n {
        out[1 + i] = two * x * gmu[i];
    }
    out[1 + n] = -(two * e.inv.quad(mu) + x * e.dx_inv.quad(mu));
    for i in 0..n {
        out[2 + n + i] = two * lambda * mu[i] - x * e.dy_inv[i].quad(mu);
    }
    Ok(())
}

/// Hamilton field of `p` in 0-cotangent coordinates:
/// `ẋ = 2xλ`, `ẏ = 2x g₀⁻¹μ`, `λ̇ = −(2g₀^{ij} + x∂ₓg₀^{ij})μᵢμⱼ`,
/// `μ̇ᵢ = 2λμᵢ − x∂_{yᵢ}g₀^{jk}μⱼμ_k`.
pub fn hamilton_field_0<T: Real>(model: &MetricModel<T>, pt: &PhasePoint0<T>) -> Result<Tangent<T>> {
    let s = pt.to_state();
    let mut out = vec![T::zero(); s.len()];
    field_0_into(model, &s, &mut out)?;
    Ok(Tangent::from_state(&out))
}

/// Writes the Hamilton field of `p̃/x` at the packed state `[x, y, ξ, η]`.
pub fn shifted_field_into<T: Real>(model: &MetricModel<T>, s: &[T], out: &mut [T]) -> Result<()> {
    let n = model.n();
    let (x, y, xi, eta) = (s[0], &s[1..1 + n], s[1 + n], &s[2 + n..]);
    let e = model.eval_extended(x, y)?;
    let two = T::c(2.0);
    out[0] = two * x * xi - two;
    let geta = e.inv.mul_vec(eta);
    for i in 0..n {
        out[1 + i] = two * x * geta[i];
    }
    out[1 + n] = -(xi * xi + e.inv.quad(eta) + x * e.dx_inv.quad(eta));
    for i in 0..n {
        out[2 + n + i] = -x * e.dy_inv[i].quad(eta);
    }
    Ok(())
}

/// Hamilton field of `p̃/x` in standard coordinates:
/// `ẋ = 2xξ − 2`, `ẏ = 2x g₀⁻¹η`, `ξ̇ = −(ξ² + g₀^{ij}ηᵢηⱼ + x∂ₓg₀^{ij}ηᵢηⱼ)`,
/// `η̇_k = −x∂_{y_k}g₀^{ij}ηᵢηⱼ`. On `p̃ = 0` this is `x⁻¹` times the field
/// of `p̃`.
pub fn shifted_field<T: Real>(model: &MetricModel<T>, sp: &ShiftedPoint<T>) -> Result<Tangent<T>> {
    let s = sp.to_state();
    let mut out = vec![T::zero(); s.len()];
    shifted_field_into(model, &s, &mut out)?;
    Ok(Tangent::from_state(&out))
}

/// Which Hamiltonian generated a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKind {
    /// `p` in 0-cotangent coordinates; samples are [`PhasePoint0`].
    Zero,
    /// `p̃/x` in shifted coordinates; samples are [`ShiftedPoint`].
    Shifted,
}

/// How a trajectory ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    HitBoundary,
    TimeOut,
    LeftChart,
}

/// One sample `(t, packed state)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub t: T,
    pub state: Vec<T>,
}

/// Exponents fitted on the last decade in `x` before the boundary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryFit {
    /// Slope of `log(λ + 1)` against `log x`.
    pub lambda_exponent: LinearFit,
    /// Slope of `log |μ|²_{g₀}` against `log x`.
    pub mu_exponent: LinearFit,
}

/// A time-sampled bicharacteristic.
#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    pub kind: FlowKind,
    pub n: usize,
    pub samples: Vec<Sample<T>>,
    pub terminal: Terminal,
    pub boundary_fit: Option<BoundaryFit>,
    /// `sup |H(sample) − H(start)|` for the generating Hamiltonian.
    pub energy_drift: T,
    /// Set when the run timed out before reaching the boundary.
    pub potential_trapping: bool,
    /// `ẋ` at the final sample (shifted flow only).
    pub endpoint_xdot: Option<T>,
    dense: Vec<DenseSegment<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn first(&self) -> &Sample<T> {
        &self.samples[0]
    }

    pub fn last(&self) -> &Sample<T> {
        self.samples.last().expect("trajectory has samples")
    }

    pub fn duration(&self) -> T {
        self.last().t - self.first().t
    }

    /// Dense-output state at time `t`.
    pub fn state_at(&self, t: T) -> Option<Vec<T>> {
        let t0 = self.first().t;
        let t1 = self.last().t;
        if t < t0 || t > t1 {
            return None;
        }
        if t == t1 {
            return Some(self.last().state.clone());
        }
        if self.dense.is_empty() {
            return Some(self.first().state.clone());
        }
        let idx = self.dense.partition_point(|s| s.t0 + s.h < t).min(self.dense.len() - 1);
        Some(self.dense[idx].eval(t))
    }

    /// First time at which `x` decreases through `x_target`, located by
    /// bisection on the dense output.
    pub fn time_at_x(&self, x_target: T) -> Option<T> {
        let w = self.samples.windows(2).find(|w| w[0].state[0] >= x_target && w[1].state[0] < x_target)?;
        let (mut lo, mut hi) = (w[0].t, w[1].t);
        for _ in 0..200 {
            let mid = (lo + hi) * T::c(0.5);
            let x = self.state_at(mid)?[0];
            if x >= x_target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= T::epsilon() * (T::one() + mid.abs()) {
                break;
            }
        }
        Some((lo + hi) * T::c(0.5))
    }

    pub fn point0(&self, i: usize) -> PhasePoint0<T> {
        debug_assert_eq!(self.kind, FlowKind::Zero);
        PhasePoint0::from_state(&self.samples[i].state)
    }

    pub fn shifted(&self, i: usize) -> ShiftedPoint<T> {
        debug_assert_eq!(self.kind, FlowKind::Shifted);
        ShiftedPoint::from_state(&self.samples[i].state)
    }

    /// JSON lines: one header record naming model and Hamiltonian, then one
    /// record per sample.
    pub fn to_jsonl(&self, model_tag: &str) -> String {
        let header = serde_json::json!({
            "record": "header",
            "model": model_tag,
            "n": self.n,
            "hamiltonian": match self.kind { FlowKind::Zero => "p", FlowKind::Shifted => "p_tilde_over_x" },
            "terminal": self.terminal,
            "energy_drift": self.energy_drift.f64(),
            "potential_trapping": self.potential_trapping,
            "boundary_fit": self.boundary_fit.as_ref().map(|b| serde_json::json!({
                "lambda_exponent": b.lambda_exponent.slope,
                "mu_exponent": b.mu_exponent.slope,
            })),
            "endpoint_xdot": self.endpoint_xdot.map(|v| v.f64()),
        });
        let mut out = header.to_string();
        out.push('\n');
        let n = self.n;
        for s in &self.samples {
            let v: Vec<f64> = s.state.iter().map(|c| c.f64()).collect();
            let rec = match self.kind {
                FlowKind::Zero => serde_json::json!({
                    "t": s.t.f64(), "x": v[0], "y": &v[1..1 + n], "lambda": v[1 + n], "mu": &v[2 + n..],
                }),
                FlowKind::Shifted => serde_json::json!({
                    "t": s.t.f64(), "x": v[0], "y": &v[1..1 + n], "xi": v[1 + n], "eta": &v[2 + n..],
                }),
            };
            out.push_str(&rec.to_string());
            out.push('\n');
        }
        out
    }
}

fn options<T: Real>() -> OdeOptions<T> {
    OdeOptions { atol: T::tol(1e-11), rtol: T::tol(1e-11), h0: None, h_max: T::c(0.25), max_steps: 500_000 }
}

/// Energy drift accepted on a trajectory: `1e-9`, or `1024ε` in reduced
/// precision where the integrator tolerance itself sits at `64ε`.
fn drift_tol<T: Real>() -> T {
    T::c(1e-9f64.max(1024.0 * T::epsilon().f64()))
}

fn check_start<T: Real>(value: T, what: &str) -> Result<()> {
    if value.abs() >= T::tol(1e-10) {
        return Err(Error::Precondition(format!("start point is off the characteristic variety: {what} = {value}")));
    }
    Ok(())
}

fn status_to_terminal<T: Real>(status: &OdeStatus, t_final: T) -> Result<Terminal> {
    match status {
        OdeStatus::Event { .. } => Ok(Terminal::HitBoundary),
        OdeStatus::Completed => Ok(Terminal::TimeOut),
        OdeStatus::RhsFailed(Error::Domain(_)) => Ok(Terminal::LeftChart),
        OdeStatus::RhsFailed(e) => Err(e.clone()),
        OdeStatus::StepLimit => Err(Error::Integrator(format!("step limit reached at t = {t_final}"))),
        OdeStatus::StepUnderflow => Err(Error::Integrator(format!("step size underflow at t = {t_final}"))),
    }
}

/// Integrates the flow of `p` forward from `start` until `x = x_floor`
/// (event-located), `t = t_max`, or the chart is left.
pub fn integrate_flow<T: Real>(model: &MetricModel<T>, start: &PhasePoint0<T>, t_max: T, x_floor: T) -> Result<Trajectory<T>> {
    if !(t_max > T::zero()) {
        return Err(Error::Precondition("t_max must be positive".into()));
    }
    if !(x_floor > T::zero() && x_floor < start.x) {
        return Err(Error::Precondition(format!("need 0 < x_floor < x, got x_floor = {x_floor}, x = {}", start.x)));
    }
    let p0 = model.symbol_p(start)?;
    check_start(p0, "p")?;
    let ev = Event { g: Box::new(move |_t, s: &[T]| s[0] - x_floor), direction: -1, terminal: true, tol: T::tol(1e-12) };
    let sol = dopri5(
        |_t: T, s: &[T], out: &mut [T]| field_0_into(model, s, out),
        T::zero(),
        &start.to_state(),
        t_max,
        &options(),
        &[ev],
    );
    let terminal = status_to_terminal(&sol.status, sol.t_final())?;
    let mut drift = T::zero();
    for s in &sol.ys {
        let p = model.symbol_p(&PhasePoint0::from_state(s))?;
        drift = drift.max((p - p0).abs());
    }
    if drift > drift_tol::<T>() {
        return Err(Error::Integrator(format!("energy drift {drift} exceeds tolerance")));
    }
    let samples = sol.ts.iter().zip(&sol.ys).map(|(&t, s)| Sample { t, state: s.clone() }).collect();
    let mut traj = Trajectory {
        kind: FlowKind::Zero,
        n: model.n(),
        samples,
        terminal,
        boundary_fit: None,
        energy_drift: drift,
        potential_trapping: terminal == Terminal::TimeOut,
        endpoint_xdot: None,
        dense: sol.segments,
    };
    if terminal == Terminal::HitBoundary {
        traj.boundary_fit = fit_boundary_exponents(model, &traj).ok();
    }
    Ok(traj)
}

/// Least-squares exponents on the last decade of `x` before the end of the
/// trajectory. `λ + 1` is evaluated as `|μ|²/(1 − λ)`, which equals it on
/// `p = 0` and avoids cancellation near `λ = −1`.
pub fn fit_boundary_exponents<T: Real>(model: &MetricModel<T>, traj: &Trajectory<T>) -> Result<BoundaryFit> {
    let n = traj.n;
    let x_end = traj.last().state[0];
    let t_end = traj.last().t;
    let t_dec = traj.time_at_x(x_end * T::c(10.0)).unwrap_or(traj.first().t);
    let count = 24;
    let mut lx = Vec::with_capacity(count);
    let mut lam = Vec::with_capacity(count);
    let mut mus = Vec::with_capacity(count);
    for k in 0..count {
        let t = t_dec + (t_end - t_dec) * T::c(k as f64 / (count - 1) as f64);
        let s = traj.state_at(t).ok_or_else(|| Error::FitFailure("dense output unavailable".into()))?;
        let (x, y, l, mu) = (s[0], &s[1..1 + n], s[1 + n], &s[2 + n..]);
        let m2 = model.dual_norm_sq(x, y, mu)?;
        lx.push(x.f64());
        lam.push((m2 / (T::one() - l)).f64());
        mus.push(m2.f64());
    }
    Ok(BoundaryFit { lambda_exponent: loglog_fit(&lx, &lam)?, mu_exponent: loglog_fit(&lx, &mus)? })
}

/// Integrates the flow of `p̃/x` from `start` until it reaches `x = 0`.
pub fn integrate_shifted<T: Real>(model: &MetricModel<T>, start: &ShiftedPoint<T>, t_max: T) -> Result<Trajectory<T>> {
    if !(t_max > T::zero()) {
        return Err(Error::Precondition("t_max must be positive".into()));
    }
    let pt = shifted_symbol(model, start)?;
    check_start(pt, "p_tilde")?;
    let h_start = shifted_hamiltonian_over_x(model, start)?;
    let ev = Event { g: Box::new(|_t, s: &[T]| s[0]), direction: -1, terminal: true, tol: T::tol(1e-12) };
    let sol = dopri5(
        |_t: T, s: &[T], out: &mut [T]| shifted_field_into(model, s, out),
        T::zero(),
        &start.to_state(),
        t_max,
        &options(),
        &[ev],
    );
    let terminal = status_to_terminal(&sol.status, sol.t_final())?;
    let mut drift = T::zero();
    for s in &sol.ys {
        let h = shifted_hamiltonian_over_x(model, &ShiftedPoint::from_state(s))?;
        drift = drift.max((h - h_start).abs());
    }
    if drift > drift_tol::<T>() {
        return Err(Error::Integrator(format!("energy drift {drift} exceeds tolerance")));
    }
    let last = sol.y_final().to_vec();
    let mut d = vec![T::zero(); last.len()];
    shifted_field_into(model, &last, &mut d)?;
    let samples = sol.ts.iter().zip(&sol.ys).map(|(&t, s)| Sample { t, state: s.clone() }).collect();
    Ok(Trajectory {
        kind: FlowKind::Shifted,
        n: model.n(),
        samples,
        terminal,
        boundary_fit: None,
        energy_drift: drift,
        potential_trapping: terminal == Terminal::TimeOut,
        endpoint_xdot: Some(d[0]),
        dense: sol.segments,
    })
}

/// Negates the covector, reversing the direction of the bicharacteristic.
pub fn reverse<T: Real>(pt: &PhasePoint0<T>) -> PhasePoint0<T> {
    PhasePoint0 { x: pt.x, y: pt.y.clone(), lambda: -pt.lambda, mu: pt.mu.iter().map(|&m| -m).collect() }
}

/// Flow of `p` for a fixed duration with a fixed number of fifth-order
/// steps. The end state depends smoothly on the start state, which the
/// shooting and residual code relies on.
pub fn flow_fixed<T: Real>(model: &MetricModel<T>, state: &[T], duration: T, steps: usize) -> Result<Vec<T>> {
    let (end, _) = rk_fixed(|_t: T, s: &[T], out: &mut [T]| field_0_into(model, s, out), T::zero(), state, duration, steps, false)?;
    Ok(end)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn field_examples() {
        let m = MetricModel::<f64>::half_space(2);
        let f = hamilton_field_0(&m, &PhasePoint0::new(1.0, vec![0.0, 0.0], -1.0, vec![0.0, 0.0])).unwrap();
        assert_eq!((f.dx, f.dfibre), (-2.0, 0.0));
        let f = hamilton_field_0(&m, &PhasePoint0::new(1.0, vec![0.0, 0.0], 0.0, vec![1.0, 0.0])).unwrap();
        assert_eq!(f.dx, 0.0);
        assert_eq!(f.dy, vec![2.0, 0.0]);
        assert_eq!(f.dfibre, -2.0);
        assert_eq!(f.dfibre_y, vec![0.0, 0.0]);
        let f = hamilton_field_0(&m, &PhasePoint0::new(0.0, vec![0.0, 0.0], 0.6, vec![0.8, 0.0])).unwrap();
        assert_eq!(f.dx, 0.0);
        assert_eq!(f.dy, vec![0.0, 0.0]);
        assert_relative_eq!(f.dfibre, -2.0 * 0.64);
        assert_relative_eq!(f.dfibre_y[0], 2.0 * 0.6 * 0.8);
    }

    #[test]
    fn shift_examples() {
        let sp = shift_to_standard(&PhasePoint0::new(1.0, vec![0.0], -1.0, vec![0.0])).unwrap();
        assert_eq!((sp.xi, sp.eta[0]), (0.0, 0.0));
        let sp = shift_to_standard(&PhasePoint0::new(0.5, vec![0.0], 0.0, vec![0.5])).unwrap();
        assert_eq!((sp.xi, sp.eta[0]), (2.0, 1.0));
        assert!(matches!(
            shift_to_standard(&PhasePoint0::new(0.0, vec![0.0], 0.3, vec![0.0])),
            Err(Error::NotShiftable(_))
        ));
        let b = shift_at_boundary(&PhasePoint0::new(0.0, vec![0.2], -1.0, vec![0.0]), 0.7, vec![1.5]).unwrap();
        assert_eq!(unshift(&b), PhasePoint0::new(0.0, vec![0.2], -1.0, vec![0.0]));
    }

    #[test]
    fn vertical_geodesic_is_exponential() {
        let m = MetricModel::<f64>::half_space(1);
        let traj = integrate_flow(&m, &PhasePoint0::new(1.0, vec![0.0], -1.0, vec![0.0]), 3.0, 1e-8).unwrap();
        assert_eq!(traj.terminal, Terminal::TimeOut);
        for s in &traj.samples {
            assert_relative_eq!(s.state[0], (-2.0 * s.t).exp(), epsilon = 1e-10);
            assert_eq!(s.state[2], -1.0);
        }
    }

    #[test]
    fn straight_shifted_line_hits_boundary_at_quarter() {
        let m = MetricModel::<f64>::half_space(1);
        let traj = integrate_shifted(&m, &ShiftedPoint::new(0.5, vec![0.0], 0.0, vec![0.0]), 1.0).unwrap();
        assert_eq!(traj.terminal, Terminal::HitBoundary);
        assert_relative_eq!(traj.last().t, 0.25, epsilon = 1e-12);
        assert!(traj.last().state[0].abs() <= 1e-12);
        assert_relative_eq!(traj.endpoint_xdot.unwrap(), -2.0, epsilon = 1e-11);
    }

    #[test]
    fn precondition_on_energy() {
        let m = MetricModel::<f64>::half_space(1);
        let r = integrate_flow(&m, &PhasePoint0::new(1.0, vec![0.0], 0.5, vec![0.0]), 1.0, 1e-8);
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn jsonl_has_header_and_rows() {
        let m = MetricModel::<f64>::half_space(1);
        let traj = integrate_flow(&m, &PhasePoint0::new(1.0, vec![0.0], 0.0, vec![1.0]), 0.5, 1e-8).unwrap();
        let text = traj.to_jsonl(m.family_tag());
        let mut lines = text.lines();
        let header: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
        assert_eq!(header["hamiltonian"], "p");
        let row: serde_json::Value = serde_json::from_str(lines.next().unwrap()).unwrap();
        assert_eq!(row["x"], 1.0);
        assert_eq!(lines.count(), traj.samples.len() - 1);
    }
}
