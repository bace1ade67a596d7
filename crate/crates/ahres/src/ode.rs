//! Explicit Runge–Kutta integrators.
//!
//! [`dopri5`] is the adaptive Dormand–Prince 5(4) pair with Hairer's
//! fourth-order dense output and event location by bisection on the
//! interpolant. [`rk_fixed`] runs the same fifth-order tableau with a fixed
//! step count, which makes the end state a smooth function of the initial
//! data; shooting and finite-difference residual checks rely on that.

use crate::error::{Error, Result};
use crate::scalar::Real;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Right-hand side `y' = f(t, y)`; an `Err` means the state left the domain
/// where the field is defined.
pub trait Rhs<T> {
    fn eval(&mut self, t: T, y: &[T], dy: &mut [T]) -> Result<()>;
}

impl<T, F> Rhs<T> for F
where
    F: FnMut(T, &[T], &mut [T]) -> Result<()>,
{
    fn eval(&mut self, t: T, y: &[T], dy: &mut [T]) -> Result<()> {
        self(t, y, dy)
    }
}

/// Tolerances and limits for [`dopri5`].
#[derive(Debug, Clone)]
pub struct OdeOptions<T> {
    pub atol: T,
    pub rtol: T,
    /// Initial step; chosen automatically when `None`.
    pub h0: Option<T>,
    pub h_max: T,
    pub max_steps: usize,
}

impl<T: Real> Default for OdeOptions<T> {
    fn default() -> Self {
        Self {
            atol: T::tol(1e-11),
            rtol: T::tol(1e-11),
            h0: None,
            h_max: T::c(0.5),
            max_steps: 200_000,
        }
    }
}

/// A scalar event function `g(t, y)`; a zero crossing stops or marks the run.
pub struct Event<'a, T> {
    pub g: Box<dyn Fn(T, &[T]) -> T + 'a>,
    /// `-1`: only falling crossings, `+1`: only rising, `0`: both.
    pub direction: i8,
    pub terminal: bool,
    /// Bisection stops once `|g| ≤ tol`.
    pub tol: T,
}

/// Why an integration run stopped.
#[derive(Debug, Clone, PartialEq)]
pub enum OdeStatus {
    Completed,
    Event { index: usize },
    RhsFailed(Error),
    StepLimit,
    StepUnderflow,
}

/// One accepted step with its continuous extension.
#[derive(Debug, Clone)]
pub struct DenseSegment<T> {
    pub t0: T,
    pub h: T,
    coeffs: Vec<T>,
}

impl<T: Real> DenseSegment<T> {
    fn eval_into(&self, t: T, out: &mut [T]) {
        let dim = out.len();
        let th = (t - self.t0) / self.h;
        let th1 = T::one() - th;
        for i in 0..dim {
            let r = &self.coeffs[5 * i..5 * i + 5];
            out[i] = r[0] + th * (r[1] + th1 * (r[2] + th * (r[3] + th1 * r[4])));
        }
    }

    pub fn eval(&self, t: T) -> Vec<T> {
        let mut out = vec![T::zero(); self.coeffs.len() / 5];
        self.eval_into(t, &mut out);
        out
    }
}

/// Result of an adaptive run: accepted step points plus dense output.
#[derive(Debug, Clone)]
pub struct OdeSolution<T> {
    pub ts: Vec<T>,
    pub ys: Vec<Vec<T>>,
    pub segments: Vec<DenseSegment<T>>,
    pub status: OdeStatus,
    /// Non-terminal event hits as `(event index, t, y)`.
    pub event_hits: Vec<(usize, T, Vec<T>)>,
}

impl<T: Real> OdeSolution<T> {
    pub fn t_final(&self) -> T {
        *self.ts.last().expect("solution has at least the initial point")
    }

    pub fn y_final(&self) -> &[T] {
        self.ys.last().expect("solution has at least the initial point")
    }

    /// Dense-output state at `t` within the integrated range.
    pub fn eval(&self, t: T) -> Option<Vec<T>> {
        let t0 = self.ts[0];
        if t < t0 || t > self.t_final() {
            return None;
        }
        if self.segments.is_empty() {
            return Some(self.ys[0].clone());
        }
        let idx = self
            .segments
            .partition_point(|s| s.t0 + s.h < t)
            .min(self.segments.len() - 1);
        Some(self.segments[idx].eval(t))
    }
}

struct Stages<T> {
    k: [Vec<T>; 7],
    tmp: Vec<T>,
    y1: Vec<T>,
}

impl<T: Real> Stages<T> {
    fn new(dim: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![T::zero(); dim]),
            tmp: vec![T::zero(); dim],
            y1: vec![T::zero(); dim],
        }
    }
}

/// Performs one Dormand–Prince step from `(t, y)` with `k[0] = f(t, y)`
/// already filled; leaves the fifth-order result in `st.y1` and
/// `k[6] = f(t + h, y1)`.
fn dp_step<T: Real, F: Rhs<T>>(f: &mut F, t: T, y: &[T], h: T, st: &mut Stages<T>) -> Result<()> {
    let dim = y.len();
    let c = T::c;
    macro_rules! stage {
        ($dst:expr, $cc:expr, [$(($a:expr, $kidx:expr)),*]) => {{
            for i in 0..dim {
                let mut acc = T::zero();
                $( acc += c($a) * st.k[$kidx][i]; )*
                st.tmp[i] = y[i] + h * acc;
            }
            let (tmp, k) = (&st.tmp, &mut st.k);
            f.eval(t + c($cc) * h, tmp, &mut k[$dst])?;
        }};
    }
    stage!(1, C2, [(A21, 0)]);
    stage!(2, C3, [(A31, 0), (A32, 1)]);
    stage!(3, C4, [(A41, 0), (A42, 1), (A43, 2)]);
    stage!(4, C5, [(A51, 0), (A52, 1), (A53, 2), (A54, 3)]);
    stage!(5, 1.0, [(A61, 0), (A62, 1), (A63, 2), (A64, 3), (A65, 4)]);
    for i in 0..dim {
        st.y1[i] = y[i]
            + h * (c(B1) * st.k[0][i]
                + c(B3) * st.k[2][i]
                + c(B4) * st.k[3][i]
                + c(B5) * st.k[4][i]
                + c(B6) * st.k[5][i]);
    }
    let (y1, k) = (&st.y1, &mut st.k);
    f.eval(t + h, y1, &mut k[6])?;
    Ok(())
}

fn initial_step<T: Real>(y: &[T], f0: &[T], opts: &OdeOptions<T>, span: T) -> T {
    let mut d0 = T::zero();
    let mut d1 = T::zero();
    for (yi, fi) in y.iter().zip(f0) {
        let sc = opts.atol + opts.rtol * yi.abs();
        d0 += (*yi / sc).powi(2);
        d1 += (*fi / sc).powi(2);
    }
    let n = T::c(y.len() as f64);
    let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
    let h = if d0 < T::c(1e-5) || d1 < T::c(1e-5) {
        T::c(1e-6)
    } else {
        T::c(0.01) * d0 / d1
    };
    h.min(opts.h_max).min(span).max(T::c(1e-10) * span.max(T::one()))
}

/// Adaptive Dormand–Prince 5(4) integration of `y' = f(t, y)` from `t0` to
/// `t_end > t0`, with optional event functions.
pub fn dopri5<T: Real, F: Rhs<T>>(
    mut f: F,
    t0: T,
    y0: &[T],
    t_end: T,
    opts: &OdeOptions<T>,
    events: &[Event<'_, T>],
) -> OdeSolution<T> {
    let dim = y0.len();
    let mut sol = OdeSolution {
        ts: vec![t0],
        ys: vec![y0.to_vec()],
        segments: Vec::new(),
        status: OdeStatus::Completed,
        event_hits: Vec::new(),
    };
    let mut st = Stages::new(dim);
    if let Err(e) = f.eval(t0, y0, &mut st.k[0]) {
        sol.status = OdeStatus::RhsFailed(e);
        return sol;
    }
    let span = t_end - t0;
    let mut h = opts.h0.unwrap_or_else(|| initial_step(y0, &st.k[0], opts, span));
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut g_prev: Vec<T> = events.iter().map(|e| (e.g)(t, &y)).collect();
    let mut steps = 0usize;
    let mut rhs_failures = 0usize;
    let mut last_rhs_error = None;
    let safety = T::c(0.9);
    let h_min = T::c(16.0) * T::epsilon() * (T::one() + t_end.abs());

    while t < t_end {
        if steps >= opts.max_steps {
            sol.status = OdeStatus::StepLimit;
            return sol;
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        if h < h_min {
            sol.status = match last_rhs_error.take() {
                Some(e) => OdeStatus::RhsFailed(e),
                None => OdeStatus::StepUnderflow,
            };
            return sol;
        }
        steps += 1;
        if let Err(e) = dp_step(&mut f, t, &y, h, &mut st) {
            // A trial stage left the domain: retry with a smaller step. The
            // counter is never reset, so a state pinned against the domain
            // edge terminates instead of creeping forward forever.
            rhs_failures += 1;
            last_rhs_error = Some(e.clone());
            if rhs_failures > 100 {
                sol.status = OdeStatus::RhsFailed(e);
                return sol;
            }
            h *= T::c(0.25);
            continue;
        }
        let mut err = T::zero();
        for i in 0..dim {
            let ei = h
                * (T::c(E1) * st.k[0][i]
                    + T::c(E3) * st.k[2][i]
                    + T::c(E4) * st.k[3][i]
                    + T::c(E5) * st.k[4][i]
                    + T::c(E6) * st.k[5][i]
                    + T::c(E7) * st.k[6][i]);
            let sc = opts.atol + opts.rtol * y[i].abs().max(st.y1[i].abs());
            err += (ei / sc).powi(2);
        }
        err = (err / T::c(dim as f64)).sqrt();
        if !err.is_finite() {
            h *= T::c(0.2);
            continue;
        }
        if err > T::one() {
            let fac = (safety * err.powf(T::c(-0.2))).max(T::c(0.2));
            h *= fac;
            continue;
        }
        last_rhs_error = None;

        let mut coeffs = vec![T::zero(); 5 * dim];
        for i in 0..dim {
            let ydiff = st.y1[i] - y[i];
            let bspl = h * st.k[0][i] - ydiff;
            coeffs[5 * i] = y[i];
            coeffs[5 * i + 1] = ydiff;
            coeffs[5 * i + 2] = bspl;
            coeffs[5 * i + 3] = ydiff - h * st.k[6][i] - bspl;
            coeffs[5 * i + 4] = h
                * (T::c(D1) * st.k[0][i]
                    + T::c(D3) * st.k[2][i]
                    + T::c(D4) * st.k[3][i]
                    + T::c(D5) * st.k[4][i]
                    + T::c(D6) * st.k[5][i]
                    + T::c(D7) * st.k[6][i]);
        }
        let seg = DenseSegment { t0: t, h, coeffs };
        let t_new = if last { t_end } else { t + h };

        // Event detection on the accepted step.
        let mut terminal_hit: Option<(usize, T, Vec<T>)> = None;
        for (idx, ev) in events.iter().enumerate() {
            let g_new = (ev.g)(t_new, &st.y1);
            let g_old = g_prev[idx];
            let crossed = (g_old > T::zero() && g_new <= T::zero() && ev.direction <= 0)
                || (g_old < T::zero() && g_new >= T::zero() && ev.direction >= 0);
            if crossed {
                let (te, ye) = locate_event(&seg, ev, t, t_new, g_old, dim);
                if ev.terminal {
                    if terminal_hit.as_ref().is_none_or(|(_, tb, _)| te < *tb) {
                        terminal_hit = Some((idx, te, ye));
                    }
                } else {
                    sol.event_hits.push((idx, te, ye));
                }
            }
            g_prev[idx] = g_new;
        }
        sol.segments.push(seg);
        if let Some((idx, te, ye)) = terminal_hit {
            sol.ts.push(te);
            sol.ys.push(ye);
            sol.status = OdeStatus::Event { index: idx };
            return sol;
        }
        t = t_new;
        y.copy_from_slice(&st.y1);
        let k6 = st.k[6].clone();
        st.k[0].copy_from_slice(&k6);
        sol.ts.push(t);
        sol.ys.push(y.clone());

        let fac = (safety * err.max(T::c(1e-10)).powf(T::c(-0.2))).min(T::c(5.0)).max(T::c(0.2));
        h = (h * fac).min(opts.h_max);
    }
    sol
}

fn locate_event<T: Real>(
    seg: &DenseSegment<T>,
    ev: &Event<'_, T>,
    ta: T,
    tb: T,
    g_a: T,
    dim: usize,
) -> (T, Vec<T>) {
    let mut lo = ta;
    let mut hi = tb;
    let mut y = vec![T::zero(); dim];
    let sign_a = g_a > T::zero();
    for _ in 0..200 {
        let mid = lo + (hi - lo) * T::c(0.5);
        seg.eval_into(mid, &mut y);
        let g = (ev.g)(mid, &y);
        if g.abs() <= ev.tol || hi - lo <= T::epsilon() * (T::one() + mid.abs()) {
            return (mid, y);
        }
        if (g > T::zero()) == sign_a {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mid = lo + (hi - lo) * T::c(0.5);
    seg.eval_into(mid, &mut y);
    (mid, y)
}

/// Fixed-step fifth-order Dormand–Prince integration over `[t0, t1]`.
/// Returns the end state and, when `record` is set, every intermediate state
/// (including the initial one).
pub fn rk_fixed<T: Real, F: Rhs<T>>(
    mut f: F,
    t0: T,
    y0: &[T],
    t1: T,
    steps: usize,
    record: bool,
) -> Result<(Vec<T>, Vec<Vec<T>>)> {
    let dim = y0.len();
    let steps = steps.max(1);
    let h = (t1 - t0) / T::c(steps as f64);
    let mut st = Stages::new(dim);
    let mut y = y0.to_vec();
    let mut path = Vec::new();
    if record {
        path.reserve(steps + 1);
        path.push(y.clone());
    }
    let mut t = t0;
    f.eval(t, &y, &mut st.k[0])?;
    for step in 0..steps {
        dp_step(&mut f, t, &y, h, &mut st)?;
        y.copy_from_slice(&st.y1);
        t = t0 + h * T::c((step + 1) as f64);
        let k6 = st.k[6].clone();
        st.k[0].copy_from_slice(&k6);
        if record {
            path.push(y.clone());
        }
    }
    Ok((y, path))
}
