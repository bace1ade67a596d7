//! Asymptotically hyperbolic metrics in normal form
//! `g = (dx² + g₀(x, y, dy)) / x²` and the principal symbol of the Laplacian.
//!
//! Three families are built in: the upper half-space model (`g₀ = Id`), the
//! Poincaré ball written in the boundary defining function
//! `ρ = (1 − |z|)/(1 + |z|)` with spherical angles as `y`, and a compactly
//! supported conformal perturbation of the half-space model. Arbitrary `g₀`
//! can be supplied as a closure.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::scalar::{norm, Real};

/// Upper limit of the chart in `x`.
pub const X_MAX: f64 = 10.0;
/// Limit of the chart in `|y|`.
pub const Y_MAX: f64 = 10.0;
/// How far below `x = 0` the smooth extension of `g₀` may be evaluated.
pub const X_EXTENSION: f64 = 0.25;
/// Relative step used for finite-difference metric partials.
pub const FD_STEP: f64 = 1e-5;

/// Compactly supported bump `b(x, y) = c(x; x_c, w_x) Πₖ c(y_k; y_c,k, w_y)`
/// with `c(u; u_c, w) = cos⁴(π(u − u_c)/(2w))` on `|u − u_c| < w`.
/// Each factor is a squared raised cosine, so `b` is `C³`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bump<T> {
    pub center_x: T,
    pub center_y: Vec<T>,
    pub width_x: T,
    pub width_y: T,
}

impl<T: Real> Bump<T> {
    /// The default bump centred at `(x, y) = (1, 0)`.
    pub fn standard(n: usize) -> Self {
        Self { center_x: T::one(), center_y: vec![T::zero(); n], width_x: T::c(0.6), width_y: T::one() }
    }

    fn factor(u: T, uc: T, w: T) -> (T, T) {
        let d = u - uc;
        if d.abs() >= w {
            return (T::zero(), T::zero());
        }
        let k = T::PI() / (T::c(2.0) * w);
        let (s, c) = (k * d).sin_cos();
        let c3 = c * c * c;
        (c3 * c, -T::c(4.0) * c3 * s * k)
    }

    /// Value of `b` and its partials `(∂ₓb, ∂_y b)`.
    pub fn eval(&self, x: T, y: &[T]) -> (T, T, Vec<T>) {
        let (fx, dfx) = Self::factor(x, self.center_x, self.width_x);
        let fy: Vec<(T, T)> = y
            .iter()
            .zip(&self.center_y)
            .map(|(&v, &c)| Self::factor(v, c, self.width_y))
            .collect();
        let prod_y = fy.iter().fold(T::one(), |a, f| a * f.0);
        let value = fx * prod_y;
        let dx = dfx * prod_y;
        let dy = (0..y.len())
            .map(|k| {
                let others = fy
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != k)
                    .fold(T::one(), |a, (_, f)| a * f.0);
                fx * fy[k].1 * others
            })
            .collect();
        (value, dx, dy)
    }
}

/// User-supplied `g₀(x, y)` returning a row-major `n × n` matrix.
#[derive(Clone)]
pub struct CustomG0<T>(pub Arc<dyn Fn(T, &[T]) -> Vec<T> + Send + Sync>);

impl<T> fmt::Debug for CustomG0<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomG0(..)")
    }
}

/// The built-in metric families.
#[derive(Debug, Clone)]
pub enum Family<T> {
    HalfSpace,
    PoincareBall,
    Perturbed { epsilon: T, bump: Bump<T> },
    Custom(CustomG0<T>),
}

/// How `∂g₀` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Partials {
    Analytic,
    /// Second-order central differences with step `1e-5 (1 + |coord|)`.
    FiniteDifference,
}

/// An AH metric in normal form. Immutable after construction.
#[derive(Debug, Clone)]
pub struct MetricModel<T> {
    n: usize,
    family: Family<T>,
    partials: Partials,
}

/// `g₀`, its inverse and first partials at one point.
#[derive(Debug, Clone)]
pub struct MetricEval<T> {
    pub g: Mat<T>,
    pub inv: Mat<T>,
    pub det: T,
    pub dx_g: Mat<T>,
    pub dy_g: Vec<Mat<T>>,
    pub dx_inv: Mat<T>,
    pub dy_inv: Vec<Mat<T>>,
}

impl<T: Real> MetricEval<T> {
    /// `∂ log det g₀` in `x` and each `y_k`.
    pub fn d_log_det(&self) -> (T, Vec<T>) {
        let tr = |d: &Mat<T>| {
            let n = d.dim();
            let mut acc = T::zero();
            for i in 0..n {
                for j in 0..n {
                    acc += self.inv[(i, j)] * d[(j, i)];
                }
            }
            acc
        };
        (tr(&self.dx_g), self.dy_g.iter().map(tr).collect())
    }
}

/// A point `(x, y, λ, μ)` of the 0-cotangent bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint0<T> {
    pub x: T,
    pub y: Vec<T>,
    pub lambda: T,
    pub mu: Vec<T>,
}

impl<T: Real> PhasePoint0<T> {
    pub fn new(x: T, y: Vec<T>, lambda: T, mu: Vec<T>) -> Self {
        assert_eq!(y.len(), mu.len(), "y and mu must have the same dimension");
        Self { x, y, lambda, mu }
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Packs as `[x, y…, λ, μ…]`.
    pub fn to_state(&self) -> Vec<T> {
        let mut s = Vec::with_capacity(2 * self.n() + 2);
        s.push(self.x);
        s.extend_from_slice(&self.y);
        s.push(self.lambda);
        s.extend_from_slice(&self.mu);
        s
    }

    pub fn from_state(s: &[T]) -> Self {
        let n = (s.len() - 2) / 2;
        Self { x: s[0], y: s[1..1 + n].to_vec(), lambda: s[1 + n], mu: s[2 + n..].to_vec() }
    }
}

impl<T: Real> MetricModel<T> {
    /// Exact hyperbolic space `ℍⁿ⁺¹` in the upper half-space model.
    pub fn half_space(n: usize) -> Self {
        assert!(n >= 1, "boundary dimension must be positive");
        Self { n, family: Family::HalfSpace, partials: Partials::Analytic }
    }

    /// The Poincaré ball with `x = ρ = (1 − |z|)/(1 + |z|)` and `y` the
    /// hyperspherical angles of `z/|z|`.
    pub fn poincare_ball(n: usize) -> Self {
        assert!(n >= 1, "boundary dimension must be positive");
        Self { n, family: Family::PoincareBall, partials: Partials::Analytic }
    }

    /// The perturbed family `g₀ = (1 + ε b) Id` with the standard bump.
    /// Restricted to `|ε| ≤ 0.1`, the range in which the family is treated
    /// as non-trapping.
    pub fn perturbed(n: usize, epsilon: T) -> Result<Self> {
        if epsilon.abs() > T::c(0.1) {
            return Err(Error::Domain(format!(
                "perturbation strength {epsilon} outside [-0.1, 0.1]; use perturbed_with_bump for experiments"
            )));
        }
        Ok(Self::perturbed_with_bump(n, epsilon, Bump::standard(n)))
    }

    /// Perturbed family with an explicit bump and no bound on `ε` (beyond
    /// `ε > −1`). Non-trapping is not implied.
    pub fn perturbed_with_bump(n: usize, epsilon: T, bump: Bump<T>) -> Self {
        assert!(n >= 1, "boundary dimension must be positive");
        assert_eq!(bump.center_y.len(), n, "bump centre has wrong dimension");
        assert!(epsilon > -T::one(), "epsilon must exceed -1 for positivity");
        Self { n, family: Family::Perturbed { epsilon, bump }, partials: Partials::Analytic }
    }

    /// Arbitrary `g₀`; partials are always finite differences.
    pub fn custom(n: usize, g0: CustomG0<T>) -> Self {
        Self { n, family: Family::Custom(g0), partials: Partials::FiniteDifference }
    }

    /// Switches to finite-difference partials.
    pub fn with_fd_partials(mut self) -> Self {
        self.partials = Partials::FiniteDifference;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn family(&self) -> &Family<T> {
        &self.family
    }

    pub fn partials_mode(&self) -> Partials {
        self.partials
    }

    pub fn epsilon(&self) -> T {
        match &self.family {
            Family::Perturbed { epsilon, .. } => *epsilon,
            _ => T::zero(),
        }
    }

    pub fn family_tag(&self) -> &'static str {
        match self.family {
            Family::HalfSpace => "half-space-hyperbolic",
            Family::PoincareBall => "poincare-ball",
            Family::Perturbed { .. } => "perturbed",
            Family::Custom(_) => "custom",
        }
    }

    /// Whether the model is exactly hyperbolic space.
    pub fn is_exact_hyperbolic(&self) -> bool {
        match &self.family {
            Family::HalfSpace | Family::PoincareBall => true,
            Family::Perturbed { epsilon, .. } => *epsilon == T::zero(),
            Family::Custom(_) => false,
        }
    }

    /// Chart check: `x ∈ [0, 10]` (or down to `−0.25` when `extended`),
    /// `|y| ≤ 10`, plus family-specific limits.
    pub fn check_domain(&self, x: T, y: &[T], extended: bool) -> Result<()> {
        if y.len() != self.n {
            return Err(Error::Usage(format!("y has dimension {}, model has n = {}", y.len(), self.n)));
        }
        let x_lo = if extended { -T::c(X_EXTENSION) } else { T::zero() };
        if !(x >= x_lo && x <= T::c(X_MAX)) {
            return Err(Error::Domain(format!("x = {x} outside chart [{x_lo}, {X_MAX}]")));
        }
        let ny = norm(y);
        if !(ny <= T::c(Y_MAX)) {
            return Err(Error::Domain(format!("|y| = {ny} outside chart (limit {Y_MAX})")));
        }
        if let Family::PoincareBall = self.family {
            if x.abs() >= T::one() {
                return Err(Error::Domain(format!("rho = {x} outside the ball chart (|rho| < 1)")));
            }
        }
        Ok(())
    }

    fn raw_g0(&self, x: T, y: &[T]) -> Mat<T> {
        match &self.family {
            Family::HalfSpace => Mat::identity(self.n),
            Family::PoincareBall => {
                let f = T::c(0.25) * (T::one() - x * x).powi(2);
                Mat::diagonal(&ball_sphere_diag(y).iter().map(|&s| f * s).collect::<Vec<_>>())
            }
            Family::Perturbed { epsilon, bump } => {
                let (b, _, _) = bump.eval(x, y);
                Mat::identity(self.n).scaled(T::one() + *epsilon * b)
            }
            Family::Custom(f) => Mat::from_row_major(self.n, (f.0)(x, y)),
        }
    }

    /// Inverse and determinant of the raw `g₀`, checking positivity.
    fn inverse_det(&self, g: &Mat<T>) -> Result<(Mat<T>, T)> {
        if g.is_diagonal() {
            let n = g.dim();
            let mut inv = Mat::zeros(n);
            let mut det = T::one();
            for i in 0..n {
                let d = g[(i, i)];
                if !(d > T::zero()) || !d.is_finite() {
                    return Err(Error::Domain(format!("g0 not positive definite (diagonal entry {d})")));
                }
                inv[(i, i)] = T::one() / d;
                det *= d;
            }
            Ok((inv, det))
        } else {
            if g.asymmetry() > T::c(1e3) * T::epsilon() * (T::one() + g.trace().abs()) {
                return Err(Error::Domain("g0 not symmetric".into()));
            }
            g.spd_inverse_det()
        }
    }

    /// `g₀(x, y)` with its positivity checked.
    pub fn g0(&self, x: T, y: &[T]) -> Result<Mat<T>> {
        self.check_domain(x, y, false)?;
        let g = self.raw_g0(x, y);
        self.inverse_det(&g)?;
        Ok(g)
    }

    /// Full evaluation: `g₀`, inverse, determinant and first partials.
    pub fn eval(&self, x: T, y: &[T]) -> Result<MetricEval<T>> {
        self.check_domain(x, y, false)?;
        self.eval_unchecked(x, y)
    }

    /// As [`MetricModel::eval`] but allows the smooth extension to `x < 0`.
    pub fn eval_extended(&self, x: T, y: &[T]) -> Result<MetricEval<T>> {
        self.check_domain(x, y, true)?;
        self.eval_unchecked(x, y)
    }

    fn eval_unchecked(&self, x: T, y: &[T]) -> Result<MetricEval<T>> {
        let g = self.raw_g0(x, y);
        let (inv, det) = self.inverse_det(&g)?;
        match (self.partials, &self.family) {
            (Partials::FiniteDifference, _) | (_, Family::Custom(_)) => self.fd_partials(x, y, g, inv, det),
            _ => Ok(self.analytic_partials(x, y, g, inv, det)),
        }
    }

    fn analytic_partials(&self, x: T, y: &[T], g: Mat<T>, inv: Mat<T>, det: T) -> MetricEval<T> {
        let n = self.n;
        let zero = || Mat::zeros(n);
        match &self.family {
            Family::HalfSpace | Family::Custom(_) => MetricEval {
                g,
                inv,
                det,
                dx_g: zero(),
                dy_g: vec![zero(); n],
                dx_inv: zero(),
                dy_inv: vec![zero(); n],
            },
            Family::PoincareBall => {
                let f = T::c(0.25) * (T::one() - x * x).powi(2);
                let df = -x * (T::one() - x * x);
                let s = ball_sphere_diag(y);
                let ds = ball_sphere_diag_partials(y);
                let diag_of = |vals: Vec<T>| Mat::diagonal(&vals);
                let dx_g = diag_of((0..n).map(|i| df * s[i]).collect());
                let dy_g: Vec<Mat<T>> = (0..n).map(|k| diag_of((0..n).map(|i| f * ds[k][i]).collect())).collect();
                let inv_d = |d: &Mat<T>| diag_of((0..n).map(|i| -d[(i, i)] / (g[(i, i)] * g[(i, i)])).collect());
                let dx_inv = inv_d(&dx_g);
                let dy_inv = dy_g.iter().map(inv_d).collect();
                MetricEval { g, inv, det, dx_g, dy_g, dx_inv, dy_inv }
            }
            Family::Perturbed { epsilon, bump } => {
                let (b, dbx, dby) = bump.eval(x, y);
                let c = T::one() + *epsilon * b;
                let id = Mat::identity(n);
                let dx_g = id.scaled(*epsilon * dbx);
                let dy_g: Vec<Mat<T>> = dby.iter().map(|&d| id.scaled(*epsilon * d)).collect();
                let dx_inv = id.scaled(-*epsilon * dbx / (c * c));
                let dy_inv = dby.iter().map(|&d| id.scaled(-*epsilon * d / (c * c))).collect();
                MetricEval { g, inv, det, dx_g, dy_g, dx_inv, dy_inv }
            }
        }
    }

    fn fd_partials(&self, x: T, y: &[T], g: Mat<T>, inv: Mat<T>, det: T) -> Result<MetricEval<T>> {
        let n = self.n;
        let step = |v: T| T::c(FD_STEP) * (T::one() + v.abs());
        let diff = |plus: Mat<T>, minus: Mat<T>, h: T| {
            let data = plus
                .as_slice()
                .iter()
                .zip(minus.as_slice())
                .map(|(&a, &b)| (a - b) / (T::c(2.0) * h))
                .collect();
            Mat::from_row_major(n, data)
        };
        let hx = step(x);
        let gp = self.raw_g0(x + hx, y);
        let gm = self.raw_g0(x - hx, y);
        let (ip, _) = self.inverse_det(&gp)?;
        let (im, _) = self.inverse_det(&gm)?;
        let dx_g = diff(gp, gm, hx);
        let dx_inv = diff(ip, im, hx);
        let mut dy_g = Vec::with_capacity(n);
        let mut dy_inv = Vec::with_capacity(n);
        for k in 0..n {
            let hk = step(y[k]);
            let mut yp = y.to_vec();
            let mut ym = y.to_vec();
            yp[k] += hk;
            ym[k] -= hk;
            let gp = self.raw_g0(x, &yp);
            let gm = self.raw_g0(x, &ym);
            let (ip, _) = self.inverse_det(&gp)?;
            let (im, _) = self.inverse_det(&gm)?;
            dy_g.push(diff(gp, gm, hk));
            dy_inv.push(diff(ip, im, hk));
        }
        Ok(MetricEval { g, inv, det, dx_g, dy_g, dx_inv, dy_inv })
    }

    /// Principal symbol `p = λ² + g₀^{ij} μᵢ μⱼ − 1`.
    pub fn symbol_p(&self, pt: &PhasePoint0<T>) -> Result<T> {
        let e = self.eval(pt.x, &pt.y)?;
        Ok(pt.lambda * pt.lambda + e.inv.quad(&pt.mu) - T::one())
    }

    /// `|μ|²` in the dual metric `g₀^{-1}` at `(x, y)`.
    pub fn dual_norm_sq(&self, x: T, y: &[T], mu: &[T]) -> Result<T> {
        Ok(self.eval_extended(x, y)?.inv.quad(mu))
    }
}

/// Diagonal of the round metric in hyperspherical angles:
/// `(1, sin²θ₁, sin²θ₁ sin²θ₂, …)`.
fn ball_sphere_diag<T: Real>(theta: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(theta.len());
    let mut acc = T::one();
    for (i, _) in theta.iter().enumerate() {
        out.push(acc);
        acc *= theta[i].sin().powi(2);
    }
    out
}

/// `∂_{θ_k}` of [`ball_sphere_diag`], indexed `[k][i]`.
fn ball_sphere_diag_partials<T: Real>(theta: &[T]) -> Vec<Vec<T>> {
    let s = ball_sphere_diag(theta);
    let n = theta.len();
    (0..n)
        .map(|k| {
            (0..n)
                .map(|i| {
                    if k < i {
                        let (sn, cs) = theta[k].sin_cos();
                        // ∂(sin²θ)/∂θ / sin²θ = 2 cot θ
                        s[i] * T::c(2.0) * cs / sn
                    } else {
                        T::zero()
                    }
                })
                .collect()
        })
        .collect()
}
