//! The exact outgoing resolvent kernel of hyperbolic space `H^{n+1}` as a
//! function of geodesic distance, in three representations, and the
//! high-energy bound on its Gamma-function coefficient.
//!
//! The spectral parameter is `ζ = n/2 − i/h` (outgoing); the kernel solves
//! `(Δ − n²/4 − h⁻²)G = δ` and behaves like `e^{ir/h} e^{−nr/2}` at infinity.

use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2};
use std::fmt;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::{linear_fit, LinearFit};
use crate::quad::GaussLegendre;
use crate::special::{ln_abs_gamma, ln_gamma};

/// Smallest distance at which the odd-dimensional integral is trusted.
pub const R_MIN_ODD: f64 = 0.05;
/// Smallest `h` for which the Euler-integral quadrature meets its target.
pub const H_MIN_HYPERGEOMETRIC: f64 = 0.05;

/// `n`, `h` and the choice of outgoing (`ζ = n/2 − i/h`) or incoming
/// (`ζ = n/2 + i/h`) resolvent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralParam {
    pub n: usize,
    pub h: f64,
    pub outgoing: bool,
}

impl SpectralParam {
    pub fn outgoing(n: usize, h: f64) -> Result<Self> {
        Self::new(n, h, true)
    }

    pub fn new(n: usize, h: f64, outgoing: bool) -> Result<Self> {
        if n == 0 {
            return Err(Error::Usage("n must be positive".into()));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Domain(format!("h = {h} must be positive")));
        }
        Ok(Self { n, h, outgoing })
    }

    /// `±1` with `e^{±ir/h}` the phase of the kernel.
    fn phase_sign(&self) -> f64 {
        if self.outgoing {
            1.0
        } else {
            -1.0
        }
    }

    pub fn zeta(&self) -> Complex64 {
        Complex64::new(self.n as f64 / 2.0, -self.phase_sign() / self.h)
    }

    /// The spectral parameter `λ = 1/h`.
    pub fn lambda(&self) -> f64 {
        1.0 / self.h
    }
}

/// Which formula produced a kernel value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Derivative,
    Integral,
    Hypergeometric,
    Wkb,
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Representation::Derivative => "derivative",
            Representation::Integral => "integral",
            Representation::Hypergeometric => "hypergeometric",
            Representation::Wkb => "wkb",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelSample {
    pub n: usize,
    pub h: f64,
    pub r: f64,
    pub value: Complex64,
    pub representation: Representation,
}

/// CSV with header `n,h,r,re,im,representation`.
pub fn samples_to_csv(samples: &[KernelSample]) -> String {
    let mut out = String::from("n,h,r,re,im,representation\n");
    for s in samples {
        out.push_str(&format!("{},{},{},{:.17e},{:.17e},{}\n", s.n, s.h, s.r, s.value.re, s.value.im, s.representation));
    }
    out
}

/// `e^{±ir/h} Σ c_{a,b} cosh^a r / sinh^b r`, closed under
/// `D = −(2π sinh r)⁻¹ ∂_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpTerms {
    omega: f64,
    coeffs: BTreeMap<(u32, u32), Complex64>,
}

impl ExpTerms {
    /// `e^{iωr}`.
    pub fn exponential(omega: f64) -> Self {
        let mut coeffs = BTreeMap::new();
        coeffs.insert((0, 0), Complex64::new(1.0, 0.0));
        Self { omega, coeffs }
    }

    /// Applies `D` once. With `f = e^{iωr} cosh^a sinh^{−b}`,
    /// `Df = −(2π)⁻¹ e^{iωr}[iω cosh^a sinh^{−b−1} + a cosh^{a−1} sinh^{−b}
    /// − b cosh^{a+1} sinh^{−b−2}]`.
    pub fn apply_d(&self) -> Self {
        let mut out: BTreeMap<(u32, u32), Complex64> = BTreeMap::new();
        let k = -1.0 / (2.0 * PI);
        let iw = Complex64::new(0.0, self.omega);
        for (&(a, b), &c) in &self.coeffs {
            *out.entry((a, b + 1)).or_default() += c * iw * k;
            if a > 0 {
                *out.entry((a - 1, b)).or_default() += c * (a as f64) * k;
            }
            if b > 0 {
                *out.entry((a + 1, b + 2)).or_default() -= c * (b as f64) * k;
            }
        }
        out.retain(|_, c| *c != Complex64::new(0.0, 0.0));
        Self { omega: self.omega, coeffs: out }
    }

    pub fn apply_d_times(&self, m: usize) -> Self {
        (0..m).fold(self.clone(), |t, _| t.apply_d())
    }

    pub fn eval(&self, r: f64) -> Complex64 {
        let (lc, ls) = (r.cosh().ln(), ln_sinh(r));
        let sum: Complex64 = self.coeffs.iter().map(|(&(a, b), &c)| c * (a as f64 * lc - b as f64 * ls).exp()).sum();
        sum * Complex64::from_polar(1.0, self.omega * r)
    }

    pub fn terms(&self) -> usize {
        self.coeffs.len()
    }
}

fn ln_sinh(r: f64) -> f64 {
    if r > 20.0 {
        r - std::f64::consts::LN_2 + (-(-2.0 * r).exp()).ln_1p()
    } else {
        r.sinh().ln()
    }
}

/// `G = −(h/2i)(−(2π sinh r)⁻¹∂_r)^{n/2} e^{ir/h}` for even `n`, evaluated
/// from the exact symbolic recursion.
pub fn green_even(p: &SpectralParam, r: f64) -> Result<Complex64> {
    if !p.n.is_multiple_of(2) {
        return Err(Error::Usage(format!("green_even needs even n, got {}", p.n)));
    }
    if !(r > 0.0) {
        return Err(Error::Domain(format!("r = {r} must be positive")));
    }
    let terms = ExpTerms::exponential(p.phase_sign() / p.h).apply_d_times(p.n / 2);
    Ok(Complex64::new(0.0, p.phase_sign() * p.h / 2.0) * terms.eval(r))
}

/// `G = −(h/(√2 i))∫_r^∞ D^{(n+1)/2}[e^{is/h}] (cosh s − cosh r)^{−1/2} sinh s ds`
/// for odd `n`.
///
/// Near the endpoint `s = r + v²` with `cosh(r + v²) − cosh r =
/// 2 sinh(r + v²/2) sinh(v²/2)`, which makes the integrand smooth in `v`;
/// the tail is integrated with composite Gauss–Legendre on panels of width
/// about `h` until the `e^{−ns/2}` decay is below `1e−13` relative.
pub fn green_odd(p: &SpectralParam, r: f64) -> Result<Complex64> {
    if p.n % 2 != 1 {
        return Err(Error::Usage(format!("green_odd needs odd n, got {}", p.n)));
    }
    if !(r >= R_MIN_ODD) {
        return Err(Error::Accuracy(format!("r = {r} below {R_MIN_ODD}")));
    }
    let terms = ExpTerms::exponential(p.phase_sign() / p.h).apply_d_times(p.n.div_ceil(2));
    let gl = GaussLegendre::new(20);
    let scale = p.h.clamp(1e-3, 1.0);
    let head = gl.composite(
        |v| {
            if v == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            let s = r + v * v;
            let denom = (2.0 * (r + 0.5 * v * v).sinh() * (0.5 * v * v).sinh()).sqrt();
            terms.eval(s) * (s.sinh() * 2.0 * v / denom)
        },
        0.0,
        1.0,
        (2.0 / scale).ceil() as usize + 2,
    );
    let tail_end = r + 1.0 + 2.0 * 30.0 / p.n as f64;
    let tail = gl.composite(
        |s| terms.eval(s) * (s.sinh() / (s.cosh() - r.cosh()).sqrt()),
        r + 1.0,
        tail_end,
        ((tail_end - r - 1.0) / scale).ceil() as usize,
    );
    Ok(Complex64::new(0.0, p.phase_sign() * p.h / SQRT_2) * (head + tail))
}

/// Dispatches to [`green_even`] or [`green_odd`].
pub fn green(p: &SpectralParam, r: f64) -> Result<Complex64> {
    if p.n.is_multiple_of(2) {
        green_even(p, r)
    } else {
        green_odd(p, r)
    }
}

/// `log` of `Γ(ζ)Γ(c) / (Γ(ζ − n/2 + 1) Γ(b)²)` times the power prefactors.
fn hypergeometric_log_prefactor(p: &SpectralParam, r: f64) -> Complex64 {
    let zeta = p.zeta();
    let nf = p.n as f64;
    let b = zeta - (nf - 1.0) / 2.0;
    let c = 2.0 * zeta - nf + 1.0;
    let ln2 = std::f64::consts::LN_2;
    (-2.0 * zeta - 1.0) * ln2 - nf / 2.0 * PI.ln() + ln_gamma(zeta) - ln_gamma(zeta - nf / 2.0 + 1.0) + ln_gamma(c)
        - 2.0 * ln_gamma(b)
        - 2.0 * zeta * (r / 2.0).cosh().ln()
}

/// `∫₀¹ t^{b−1}(1 − t)^{b−1}(1 − zt)^{−ζ} dt` with `z = cosh⁻²(r/2)`.
///
/// Each half is mapped to `w ∈ [0, 60]` by `t = e^{−w}/2` (resp.
/// `1 − t = e^{−w}/2`); then `t^{b−1}dt = t^b dw`, whose modulus decays like
/// `e^{−w/2}` and whose phase oscillates with frequency `1/h` in `w`.
fn euler_integral(p: &SpectralParam, r: f64) -> Complex64 {
    let zeta = p.zeta();
    let b = zeta - (p.n as f64 - 1.0) / 2.0;
    let z = (r / 2.0).cosh().powi(-2);
    let w_max = 60.0;
    let gl = GaussLegendre::new(16);
    let panels = (w_max / p.h.min(1.0)).ceil() as usize;
    let ln_half = -std::f64::consts::LN_2;
    // ln t = ln_half − w on one half, ln(1 − t) = ln_half − w on the other.
    let near = |w: f64, t_is_small: bool| -> Complex64 {
        let l_small = ln_half - w;
        let small = l_small.exp();
        let l_big = (-small).ln_1p();
        let (lt, l1t, t) = if t_is_small { (l_small, l_big, small) } else { (l_big, l_small, 1.0 - small) };
        let one_minus_zt = 1.0 - z * t;
        let lnf = b * (if t_is_small { lt } else { l1t }) + (b - 1.0) * (if t_is_small { l1t } else { lt })
            - zeta * one_minus_zt.ln();
        lnf.exp()
    };
    gl.composite(|w| near(w, true), 0.0, w_max, panels) + gl.composite(|w| near(w, false), 0.0, w_max, panels)
}

/// `2^{−2ζ−1}π^{−n/2}Γ(ζ)/Γ(ζ − n/2 + 1) (cosh r/2)^{−2ζ} F(ζ, ζ − (n−1)/2; 2ζ − n + 1; cosh⁻²(r/2))`
/// with `F` from its Euler integral.
pub fn green_hypergeometric(p: &SpectralParam, r: f64) -> Result<Complex64> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("r = {r} must be positive")));
    }
    if p.h < H_MIN_HYPERGEOMETRIC {
        return Err(Error::Accuracy(format!("h = {} below {H_MIN_HYPERGEOMETRIC}: oscillatory quadrature not resolved", p.h)));
    }
    Ok(hypergeometric_log_prefactor(p, r).exp() * euler_integral(p, r))
}

/// `|Γ(n/2 ± i/h)/Γ(1 ± i/h) · Γ(1 ± 2i/h)/Γ(1/2 ± i/h)²|`, bounded by
/// `C h^{−n/2+1/2}` as `h → 0`.
pub fn gamma_coeff(p: &SpectralParam) -> f64 {
    let y = p.lambda();
    let nf = p.n as f64;
    (ln_abs_gamma(Complex64::new(nf / 2.0, y)) - ln_abs_gamma(Complex64::new(1.0, y))
        + ln_abs_gamma(Complex64::new(1.0, 2.0 * y))
        - 2.0 * ln_abs_gamma(Complex64::new(0.5, y)))
    .exp()
}

/// Hyperbolic distance in the upper half-space model,
/// `cosh d = 1 + (|y − y′|² + (x − x′)²)/(2xx′)`.
pub fn half_space_distance(x: f64, y: &[f64], xp: f64, yp: &[f64]) -> f64 {
    let dy2: f64 = y.iter().zip(yp).map(|(a, b)| (a - b).powi(2)).sum();
    let arg = (dy2 + (x - xp).powi(2)) / (2.0 * x * xp);
    // acosh(1 + a) computed stably for small a.
    (arg + (arg * (arg + 2.0)).sqrt()).ln_1p()
}

/// Relative residual `|(Δ − n²/4 − h⁻²)G| / (h⁻²|G|)` of `z ↦ G(d(z, z′))` at
/// `z`, with the half-space Laplacian `Δ = −x²Σ∂² + (n − 1)x∂ₓ` applied by
/// second-order central differences of step `δ·x`.
pub fn resolvent_residual(p: &SpectralParam, z: (f64, &[f64]), z0: (f64, &[f64]), delta: f64) -> Result<f64> {
    let (x, y) = z;
    let n = p.n;
    if y.len() != n || z0.1.len() != n {
        return Err(Error::Usage("points must have n boundary coordinates".into()));
    }
    let g = |xx: f64, yy: &[f64]| green(p, half_space_distance(xx, yy, z0.0, z0.1));
    let d = delta * x;
    let g0 = g(x, y)?;
    let gxp = g(x + d, y)?;
    let gxm = g(x - d, y)?;
    let mut lap = (gxp - 2.0 * g0 + gxm) / (d * d);
    for i in 0..n {
        let mut yp = y.to_vec();
        let mut ym = y.to_vec();
        yp[i] += d;
        ym[i] -= d;
        lap += (g(x, &yp)? - 2.0 * g0 + g(x, &ym)?) / (d * d);
    }
    let dx = (gxp - gxm) / (2.0 * d);
    let nf = n as f64;
    let op = -x * x * lap + (nf - 1.0) * x * dx - (nf * nf / 4.0 + 1.0 / (p.h * p.h)) * g0;
    Ok(op.norm() / (g0.norm() / (p.h * p.h)))
}

/// Fits the unwrapped phase of `G(r)e^{nr/2}` against `r/h` on `[r0, r1]`;
/// an outgoing kernel has slope 1.
pub fn outgoing_phase_fit(p: &SpectralParam, r0: f64, r1: f64, samples: usize) -> Result<LinearFit> {
    let mut xs = Vec::with_capacity(samples);
    let mut phases: Vec<f64> = Vec::with_capacity(samples);
    for k in 0..samples {
        let r = r0 + (r1 - r0) * k as f64 / (samples - 1) as f64;
        let v = green(p, r)? * (p.n as f64 * r / 2.0).exp();
        let mut ph = v.arg();
        if let Some(&prev) = phases.last() {
            while ph - prev > PI {
                ph -= 2.0 * PI;
            }
            while ph - prev < -PI {
                ph += 2.0 * PI;
            }
        }
        xs.push(r / p.h);
        phases.push(ph);
    }
    linear_fit(&xs, &phases)
}
