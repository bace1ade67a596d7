//! Coordinate regions of the blown-up double space, fibre transforms from
//! 0-cotangent coordinates of the two factors, shifted left and right
//! Hamiltonians, transversality probes, and the model leaf at the front face.
//!
//! Every region point carries base coordinates and the *shifted* standard
//! fibre coordinates dual to them. The shift subtracts `d log ρ_L + d log ρ_R`
//! from the unshifted covector, so for example `σ ↦ σ − 1/s` in region 4a.
//!
//! Layouts (`n` is the boundary dimension):
//!
//! | region        | base                    | fibre                        |
//! |---------------|-------------------------|------------------------------|
//! | R1, R2a, R2b, R3 | `x, y, x′, y′`       | `ξ, η, ξ′, η′`               |
//! | R4a           | `s, x′, y, Y`           | `σ, ξ′, η, N`                |
//! | R4b           | `s′, x, y′, Y′`         | `σ′, ξ, η′, N′`              |
//! | R5            | `s₁, s₂, t, Z, y`       | `σ₁, σ₂, τ, ζ, η`            |
//!
//! Both Hamiltonians are written in the reduced form
//! `p̃/ρ = ρΛ̂² − 2Λ̂ + ρ g₀^{ij}(x_*, y_*) M̂ᵢM̂ⱼ` with `λ = ρΛ̂ − 1` and
//! `μ = ρM̂`, which is smooth up to every face. Hamilton fields are taken
//! from forward-mode jets of that expression.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{integrate_shifted, reverse, shift_to_standard};
use crate::jet::Jet;
use crate::metric::{MetricModel, PhasePoint0};
use crate::ode::{dopri5, Event, OdeOptions, OdeStatus};
use crate::scalar::{dot, norm, Real};

/// The coordinate regions of the blown-up double space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Region {
    R1,
    R2a,
    R2b,
    R3,
    R4a,
    R4b,
    R5,
}

impl Region {
    pub const ALL: [Region; 7] = [Region::R1, Region::R2a, Region::R2b, Region::R3, Region::R4a, Region::R4b, Region::R5];

    /// Indices into the base coordinates of `ρ_L`, `ρ_R`, `ρ_F`; `None`
    /// where the defining function is taken to be 1.
    pub fn defining_functions(self, n: usize) -> (Option<usize>, Option<usize>, Option<usize>) {
        match self {
            Region::R1 | Region::R3 => (Some(0), Some(n + 1), None),
            Region::R2a => (Some(0), None, None),
            Region::R2b => (None, Some(n + 1), None),
            Region::R4a => (Some(0), None, Some(1)),
            Region::R4b => (None, Some(0), Some(1)),
            Region::R5 => (Some(0), Some(1), Some(2)),
        }
    }

    /// The region obtained by exchanging the two factors.
    pub fn mirror(self) -> Region {
        match self {
            Region::R2a => Region::R2b,
            Region::R2b => Region::R2a,
            Region::R4a => Region::R4b,
            Region::R4b => Region::R4a,
            r => r,
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Region::R1 => "R1",
            Region::R2a => "R2a",
            Region::R2b => "R2b",
            Region::R3 => "R3",
            Region::R4a => "R4a",
            Region::R4b => "R4b",
            Region::R5 => "R5",
        };
        f.write_str(s)
    }
}

impl FromStr for Region {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Region::ALL
            .into_iter()
            .find(|r| r.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Usage(format!("unknown region '{s}'")))
    }
}

/// Which factor's Hamiltonian is meant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

/// A signed permutation of the `y` coordinates: new coordinate `a` equals
/// `signs[a]` times old coordinate `perm[a]`. Region 5 uses it to make the
/// first component of `y′ − y` dominant and positive.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YFrame<T> {
    pub perm: Vec<usize>,
    pub signs: Vec<T>,
}

impl<T: Real> YFrame<T> {
    pub fn identity(n: usize) -> Self {
        Self { perm: (0..n).collect(), signs: vec![T::one(); n] }
    }

    /// Frame in which `y′ − y` has its largest component first and positive.
    pub fn dominant(y: &[T], y_prime: &[T]) -> Result<Self> {
        let d: Vec<T> = y_prime.iter().zip(y).map(|(a, b)| *a - *b).collect();
        let k = (0..d.len())
            .max_by(|&i, &j| d[i].abs().partial_cmp(&d[j].abs()).unwrap_or(std::cmp::Ordering::Equal))
            .ok_or_else(|| Error::Usage("empty y".into()))?;
        if d[k] == T::zero() {
            return Err(Error::CornerDegenerate("y' = y: region 5 needs a nonzero boundary separation".into()));
        }
        let mut perm = vec![k];
        perm.extend((0..d.len()).filter(|&i| i != k));
        let mut signs = vec![T::one(); d.len()];
        signs[0] = d[k].signum();
        Ok(Self { perm, signs })
    }

    pub fn is_identity(&self) -> bool {
        self.perm.iter().enumerate().all(|(a, &p)| a == p) && self.signs.iter().all(|&s| s == T::one())
    }

    pub fn to_new(&self, old: &[T]) -> Vec<T> {
        self.perm.iter().zip(&self.signs).map(|(&p, &s)| s * old[p]).collect()
    }

    pub fn to_old(&self, new: &[T]) -> Vec<T> {
        let mut old = vec![T::zero(); new.len()];
        for (a, (&p, &s)) in self.perm.iter().zip(&self.signs).enumerate() {
            old[p] = s * new[a];
        }
        old
    }
}

/// A point of the cotangent bundle over one region: base coordinates and
/// shifted fibre coordinates in the layout of the module table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionPoint<T> {
    pub region: Region,
    pub n: usize,
    pub base: Vec<T>,
    pub fibre: Vec<T>,
    pub frame: YFrame<T>,
}

impl<T: Real> RegionPoint<T> {
    pub fn new(region: Region, n: usize, base: Vec<T>, fibre: Vec<T>) -> Result<Self> {
        if base.len() != 2 * n + 2 || fibre.len() != 2 * n + 2 {
            return Err(Error::Usage(format!("region point needs {} base and fibre coordinates", 2 * n + 2)));
        }
        Ok(Self { region, n, base, fibre, frame: YFrame::identity(n) })
    }

    pub fn with_frame(mut self, frame: YFrame<T>) -> Self {
        self.frame = frame;
        self
    }

    fn rho(&self, side: Side) -> Option<usize> {
        let (l, r, _) = self.region.defining_functions(self.n);
        match side {
            Side::Left => l,
            Side::Right => r,
        }
    }

    /// Unshifted fibre: adds back `d log ρ_L + d log ρ_R`. Requires the
    /// defining functions to be positive.
    pub fn unshifted_fibre(&self) -> Result<Vec<T>> {
        let mut f = self.fibre.clone();
        for side in [Side::Left, Side::Right] {
            if let Some(i) = self.rho(side) {
                if !(self.base[i] > T::zero()) {
                    return Err(Error::NotShiftable(format!("defining function {} vanishes in {}", i, self.region)));
                }
                f[i] -= T::one() / self.base[i];
            }
        }
        Ok(f)
    }

    fn validate(&self) -> Result<()> {
        let (l, r, ff) = self.region.defining_functions(self.n);
        for i in [l, r, ff].into_iter().flatten() {
            if !(self.base[i] >= T::zero()) {
                return Err(Error::Domain(format!("defining function coordinate {} = {} is negative", i, self.base[i])));
            }
        }
        Ok(())
    }
}

/// A pair of 0-cotangent points. The flowout relation pairs `(q, −q′)`, so
/// leaf points have their right covector negated relative to the
/// bicharacteristic; `right_negated` records that this convention is in
/// force.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProductPhasePoint<T> {
    pub left: PhasePoint0<T>,
    pub right: PhasePoint0<T>,
    pub right_negated: bool,
}

/// Region 4a: `λ = sσ`, `μ = s(x′η − N)`, `λ′ = x′ξ′ − sσ − N·Y`, `μ′ = N`.
/// The fibre coordinates are unshifted.
#[allow(clippy::too_many_arguments, clippy::type_complexity)]
pub fn fibre_transform_4a<T: Real>(
    s: T,
    x_prime: T,
    y_cap: &[T],
    sigma: T,
    xi_prime: T,
    eta: &[T],
    n_cap: &[T],
) -> Result<(T, Vec<T>, T, Vec<T>)> {
    if !(s > T::zero()) {
        return Err(Error::FrontFaceDegenerate(format!("s = {s}: use the leaf operations for the limit")));
    }
    let lambda = s * sigma;
    let mu = eta.iter().zip(n_cap).map(|(&e, &m)| s * (x_prime * e - m)).collect();
    let lambda_p = x_prime * xi_prime - s * sigma - dot(n_cap, y_cap);
    Ok((lambda, mu, lambda_p, n_cap.to_vec()))
}

/// Inverse of [`fibre_transform_4a`]; needs `s > 0` and `x′ > 0`.
#[allow(clippy::type_complexity)]
pub fn inverse_fibre_transform_4a<T: Real>(
    s: T,
    x_prime: T,
    y_cap: &[T],
    lambda: T,
    mu: &[T],
    lambda_p: T,
    mu_p: &[T],
) -> Result<(T, T, Vec<T>, Vec<T>)> {
    if !(s > T::zero() && x_prime > T::zero()) {
        return Err(Error::FrontFaceDegenerate(format!("inverse needs s > 0 and x' > 0, got s = {s}, x' = {x_prime}")));
    }
    let sigma = lambda / s;
    let n_cap = mu_p.to_vec();
    let eta = mu.iter().zip(&n_cap).map(|(&m, &nn)| (m / s + nn) / x_prime).collect();
    let xi_prime = (lambda_p + s * sigma + dot(&n_cap, y_cap)) / x_prime;
    Ok((sigma, xi_prime, eta, n_cap))
}

/// Region 4b, the mirror of 4a: `λ = xξ − s′σ′ − N′·Y′`, `μ = N′`,
/// `λ′ = s′σ′`, `μ′ = s′(xη′ − N′)`. Unshifted fibre coordinates.
#[allow(clippy::too_many_arguments, clippy::type_complexity)]
pub fn fibre_transform_4b<T: Real>(
    s_prime: T,
    x: T,
    y_cap_prime: &[T],
    sigma_prime: T,
    xi: T,
    eta_prime: &[T],
    n_cap_prime: &[T],
) -> Result<(T, Vec<T>, T, Vec<T>)> {
    let (lp, mp, l, m) = fibre_transform_4a(s_prime, x, y_cap_prime, sigma_prime, xi, eta_prime, n_cap_prime)?;
    Ok((l, m, lp, mp))
}

/// Inverse of [`fibre_transform_4b`], returning `(σ′, ξ, η′, N′)`.
#[allow(clippy::type_complexity)]
pub fn inverse_fibre_transform_4b<T: Real>(
    s_prime: T,
    x: T,
    y_cap_prime: &[T],
    lambda: T,
    mu: &[T],
    lambda_p: T,
    mu_p: &[T],
) -> Result<(T, T, Vec<T>, Vec<T>)> {
    inverse_fibre_transform_4a(s_prime, x, y_cap_prime, lambda_p, mu_p, lambda, mu)
}

/// Region 5 (unshifted fibre coordinates):
/// `λ = s₁σ₁`, `μ₁ = s₁(s₁σ₁ + s₂σ₂ − tτ + ζ·Z + tη₁)`, `μⱼ = s₁(tηⱼ − ζⱼ)`,
/// `λ′ = s₂σ₂`, `μ′₁ = s₂(tτ − s₁σ₁ − s₂σ₂ − ζ·Z)`, `μ′ⱼ = s₂ζⱼ`.
#[allow(clippy::too_many_arguments, clippy::type_complexity)]
pub fn fibre_transform_5<T: Real>(
    s1: T,
    s2: T,
    t: T,
    z: &[T],
    sigma1: T,
    sigma2: T,
    tau: T,
    zeta: &[T],
    eta: &[T],
) -> Result<(T, Vec<T>, T, Vec<T>)> {
    if !(s1 > T::zero()) {
        return Err(Error::CornerDegenerate(format!("s1 = {s1}")));
    }
    let zz = dot(zeta, z);
    let n = eta.len();
    let mut mu = vec![s1 * (s1 * sigma1 + s2 * sigma2 - t * tau + zz + t * eta[0])];
    let mut mu_p = vec![s2 * (t * tau - s1 * sigma1 - s2 * sigma2 - zz)];
    for j in 1..n {
        mu.push(s1 * (t * eta[j] - zeta[j - 1]));
        mu_p.push(s2 * zeta[j - 1]);
    }
    Ok((s1 * sigma1, mu, s2 * sigma2, mu_p))
}

/// Inverse of [`fibre_transform_5`], returning `(σ₁, σ₂, τ, ζ, η)`; needs
/// `s₁, s₂, t > 0`.
#[allow(clippy::type_complexity)]
pub fn inverse_fibre_transform_5<T: Real>(
    s1: T,
    s2: T,
    t: T,
    z: &[T],
    lambda: T,
    mu: &[T],
    lambda_p: T,
    mu_p: &[T],
) -> Result<(T, T, T, Vec<T>, Vec<T>)> {
    if !(s1 > T::zero() && s2 > T::zero() && t > T::zero()) {
        return Err(Error::CornerDegenerate(format!("inverse needs s1, s2, t > 0, got ({s1}, {s2}, {t})")));
    }
    let sigma1 = lambda / s1;
    let sigma2 = lambda_p / s2;
    let zeta: Vec<T> = mu_p[1..].iter().map(|&m| m / s2).collect();
    let eta: Vec<T> = mu.iter().zip(mu_p).map(|(&m, &mp)| (m / s1 + mp / s2) / t).collect();
    let tau = (lambda + lambda_p + (mu_p[0] + dot(&mu_p[1..], z)) / s2) / t;
    Ok((sigma1, sigma2, tau, zeta, eta))
}

/// Region base coordinates from product coordinates `(x, y, x′, y′)`.
/// Region 5 works in `frame`.
pub fn base_from_product<T: Real>(region: Region, x: T, y: &[T], x_p: T, y_p: &[T], frame: &YFrame<T>) -> Result<Vec<T>> {
    let mut b = Vec::with_capacity(2 * y.len() + 2);
    match region {
        Region::R1 | Region::R2a | Region::R2b | Region::R3 => {
            b.push(x);
            b.extend_from_slice(y);
            b.push(x_p);
            b.extend_from_slice(y_p);
        }
        Region::R4a => {
            if !(x_p > T::zero()) {
                return Err(Error::FrontFaceDegenerate(format!("x' = {x_p}")));
            }
            b.push(x / x_p);
            b.push(x_p);
            b.extend_from_slice(y);
            b.extend(y_p.iter().zip(y).map(|(a, c)| (*a - *c) / x_p));
        }
        Region::R4b => {
            if !(x > T::zero()) {
                return Err(Error::FrontFaceDegenerate(format!("x = {x}")));
            }
            b.push(x_p / x);
            b.push(x);
            b.extend_from_slice(y_p);
            b.extend(y.iter().zip(y_p).map(|(a, c)| (*a - *c) / x));
        }
        Region::R5 => {
            let yn = frame.to_new(y);
            let ypn = frame.to_new(y_p);
            let t = ypn[0] - yn[0];
            if !(t > T::zero()) {
                return Err(Error::CornerDegenerate(format!("t = {t}: choose a frame with positive dominant separation")));
            }
            b.push(x / t);
            b.push(x_p / t);
            b.push(t);
            b.extend((1..yn.len()).map(|j| (ypn[j] - yn[j]) / t));
            b.extend_from_slice(&yn);
        }
    }
    Ok(b)
}

/// Product coordinates `(x, y, x′, y′)` in the original `y` frame.
#[allow(clippy::type_complexity)]
pub fn base_to_product<T: Real>(region: Region, n: usize, base: &[T], frame: &YFrame<T>) -> (T, Vec<T>, T, Vec<T>) {
    match region {
        Region::R1 | Region::R2a | Region::R2b | Region::R3 => {
            (base[0], base[1..1 + n].to_vec(), base[1 + n], base[2 + n..].to_vec())
        }
        Region::R4a => {
            let (s, xp) = (base[0], base[1]);
            let y = base[2..2 + n].to_vec();
            let yp = y.iter().zip(&base[2 + n..]).map(|(a, c)| *a + xp * *c).collect();
            (s * xp, y, xp, yp)
        }
        Region::R4b => {
            let (sp, x) = (base[0], base[1]);
            let yp = base[2..2 + n].to_vec();
            let y = yp.iter().zip(&base[2 + n..]).map(|(a, c)| *a + x * *c).collect();
            (x, y, sp * x, yp)
        }
        Region::R5 => {
            let (s1, s2, t) = (base[0], base[1], base[2]);
            let z = &base[3..2 + n];
            let yn = base[2 + n..].to_vec();
            let mut ypn = yn.clone();
            ypn[0] += t;
            for j in 1..n {
                ypn[j] += t * z[j - 1];
            }
            (s1 * t, frame.to_old(&yn), s2 * t, frame.to_old(&ypn))
        }
    }
}

/// Converts a region point to the pair of 0-cotangent points it represents
/// (independent of the reduced forms used for the Hamiltonians).
pub fn to_product<T: Real>(pt: &RegionPoint<T>) -> Result<ProductPhasePoint<T>> {
    pt.validate()?;
    let n = pt.n;
    let f = pt.unshifted_fibre()?;
    let b = &pt.base;
    let (x, y, xp, yp) = base_to_product(pt.region, n, b, &pt.frame);
    let (lambda, mu, lambda_p, mu_p) = match pt.region {
        Region::R1 | Region::R2a | Region::R2b | Region::R3 => (
            x * f[0],
            f[1..1 + n].iter().map(|&e| x * e).collect(),
            xp * f[1 + n],
            f[2 + n..].iter().map(|&e| xp * e).collect(),
        ),
        Region::R4a => fibre_transform_4a(b[0], b[1], &b[2 + n..], f[0], f[1], &f[2..2 + n], &f[2 + n..])?,
        Region::R4b => fibre_transform_4b(b[0], b[1], &b[2 + n..], f[0], f[1], &f[2..2 + n], &f[2 + n..])?,
        Region::R5 => {
            let (l, m, lp, mp) = fibre_transform_5(b[0], b[1], b[2], &b[3..2 + n], f[0], f[1], f[2], &f[3..2 + n], &f[2 + n..])?;
            (l, pt.frame.to_old(&m), lp, pt.frame.to_old(&mp))
        }
    };
    Ok(ProductPhasePoint {
        left: PhasePoint0 { x, y, lambda, mu },
        right: PhasePoint0 { x: xp, y: yp, lambda: lambda_p, mu: mu_p },
        right_negated: false,
    })
}

/// Inverse of [`to_product`]. Region 5 picks the dominant frame. Needs the
/// relevant defining functions to be positive.
pub fn from_product<T: Real>(region: Region, pp: &ProductPhasePoint<T>) -> Result<RegionPoint<T>> {
    let (l, r) = (&pp.left, &pp.right);
    let n = l.n();
    let frame = if region == Region::R5 { YFrame::dominant(&l.y, &r.y)? } else { YFrame::identity(n) };
    let base = base_from_product(region, l.x, &l.y, r.x, &r.y, &frame)?;
    let b = &base;
    let mut f: Vec<T> = match region {
        Region::R1 | Region::R2a | Region::R2b | Region::R3 => {
            if !(l.x > T::zero() && r.x > T::zero()) {
                return Err(Error::NotShiftable("product regions need x, x' > 0".into()));
            }
            let mut f = vec![l.lambda / l.x];
            f.extend(l.mu.iter().map(|&m| m / l.x));
            f.push(r.lambda / r.x);
            f.extend(r.mu.iter().map(|&m| m / r.x));
            f
        }
        Region::R4a => {
            let (sigma, xi_p, eta, nn) = inverse_fibre_transform_4a(b[0], b[1], &b[2 + n..], l.lambda, &l.mu, r.lambda, &r.mu)?;
            let mut f = vec![sigma, xi_p];
            f.extend(eta);
            f.extend(nn);
            f
        }
        Region::R4b => {
            let (sigma_p, xi, eta_p, nn) = inverse_fibre_transform_4b(b[0], b[1], &b[2 + n..], l.lambda, &l.mu, r.lambda, &r.mu)?;
            let mut f = vec![sigma_p, xi];
            f.extend(eta_p);
            f.extend(nn);
            f
        }
        Region::R5 => {
            let mu = frame.to_new(&l.mu);
            let mu_p = frame.to_new(&r.mu);
            let (s1, s2, tau, zeta, eta) = inverse_fibre_transform_5(b[0], b[1], b[2], &b[3..2 + n], l.lambda, &mu, r.lambda, &mu_p)?;
            let mut f = vec![s1, s2, tau];
            f.extend(zeta);
            f.extend(eta);
            f
        }
    };
    let (li, ri, _) = region.defining_functions(n);
    for i in [li, ri].into_iter().flatten() {
        f[i] += T::one() / b[i];
    }
    Ok(RegionPoint { region, n, base, fibre: f, frame })
}

/// Jets of the reduced-form ingredients for one side.
struct Reduced<T> {
    rho: Jet<T>,
    lam: Jet<T>,
    m: Vec<Jet<T>>,
    x_at: Jet<T>,
    y_at: Vec<Jet<T>>,
}

fn reduced_parts<T: Real>(pt: &RegionPoint<T>, side: Side, v: &[Jet<T>]) -> Reduced<T> {
    let n = pt.n;
    let nv = v.len();
    let bb = 2 * n + 2;
    let one = Jet::constant(T::one(), nv);
    let two = T::c(2.0);
    let base = &v[..bb];
    let fib = &v[bb..];
    let range = |sl: &[Jet<T>], a: usize, len: usize| sl[a..a + len].to_vec();
    match (pt.region, side) {
        (Region::R1 | Region::R2a | Region::R3, Side::Left) => Reduced {
            rho: base[0].clone(),
            lam: fib[0].clone(),
            m: range(fib, 1, n),
            x_at: base[0].clone(),
            y_at: range(base, 1, n),
        },
        (Region::R2b, Side::Left) => Reduced {
            rho: one,
            lam: (base[0].clone() * fib[0].clone()).add_const(T::one()),
            m: fib[1..1 + n].iter().map(|e| base[0].clone() * e.clone()).collect(),
            x_at: base[0].clone(),
            y_at: range(base, 1, n),
        },
        (Region::R1 | Region::R2b | Region::R3, Side::Right) => Reduced {
            rho: base[n + 1].clone(),
            lam: fib[n + 1].clone(),
            m: range(fib, n + 2, n),
            x_at: base[n + 1].clone(),
            y_at: range(base, n + 2, n),
        },
        (Region::R2a, Side::Right) => Reduced {
            rho: one,
            lam: (base[n + 1].clone() * fib[n + 1].clone()).add_const(T::one()),
            m: fib[n + 2..].iter().map(|e| base[n + 1].clone() * e.clone()).collect(),
            x_at: base[n + 1].clone(),
            y_at: range(base, n + 2, n),
        },
        // (s, x′, y, Y; σ, ξ′, η, N) and its mirror (s′, x, y′, Y′; σ′, ξ, η′, N′).
        (Region::R4a, Side::Left) | (Region::R4b, Side::Right) => {
            let (s, xp) = (&base[0], &base[1]);
            Reduced {
                rho: s.clone(),
                lam: fib[0].clone(),
                m: (0..n).map(|i| xp.clone() * fib[2 + i].clone() - fib[2 + n + i].clone()).collect(),
                x_at: s.clone() * xp.clone(),
                y_at: range(base, 2, n),
            }
        }
        (Region::R4a, Side::Right) | (Region::R4b, Side::Left) => {
            // λ′ + 1 = x′ξ′ − sσ̃ + 2 − N·Y, with σ̃ the shifted fibre variable.
            let (s, xp) = (&base[0], &base[1]);
            let mut lam = xp.clone() * fib[1].clone() - s.clone() * fib[0].clone();
            for i in 0..n {
                lam = lam - fib[2 + n + i].clone() * base[2 + n + i].clone();
            }
            Reduced {
                rho: one,
                lam: lam.add_const(two),
                m: range(fib, 2 + n, n),
                x_at: xp.clone(),
                y_at: (0..n).map(|i| base[2 + i].clone() + xp.clone() * base[2 + n + i].clone()).collect(),
            }
        }
        (Region::R5, _) => {
            let (s1, s2, t) = (&base[0], &base[1], &base[2]);
            let z = &base[3..2 + n];
            let y = &base[2 + n..];
            let (sg1, sg2, tau) = (&fib[0], &fib[1], &fib[2]);
            let zeta = &fib[3..2 + n];
            let eta = &fib[2 + n..];
            let mut zz = Jet::constant(T::zero(), nv);
            for j in 0..n - 1 {
                zz = zz + zeta[j].clone() * z[j].clone();
            }
            // s₁σ̃₁ + s₂σ̃₂ − 2 − tτ + ζ·Z: the shifted combination common to both sides.
            let comb = (s1.clone() * sg1.clone() + s2.clone() * sg2.clone() - t.clone() * tau.clone() + zz).add_const(-two);
            match side {
                Side::Left => {
                    let mut m = vec![comb + t.clone() * eta[0].clone()];
                    m.extend((1..n).map(|j| t.clone() * eta[j].clone() - zeta[j - 1].clone()));
                    Reduced { rho: s1.clone(), lam: sg1.clone(), m, x_at: s1.clone() * t.clone(), y_at: y.to_vec() }
                }
                Side::Right => {
                    let mut m = vec![-comb];
                    m.extend(zeta.iter().cloned());
                    let mut y_at = vec![y[0].clone() + t.clone()];
                    y_at.extend((1..n).map(|j| y[j].clone() + t.clone() * z[j - 1].clone()));
                    Reduced { rho: s2.clone(), lam: sg2.clone(), m, x_at: s2.clone() * t.clone(), y_at }
                }
            }
        }
    }
}

/// `g₀^{ab} M̂_a M̂_b` as a jet, with the metric evaluated through the frame.
fn quad_jet<T: Real>(model: &MetricModel<T>, frame: &YFrame<T>, x: &Jet<T>, y: &[Jet<T>], m: &[Jet<T>]) -> Result<Jet<T>> {
    let n = y.len();
    let yv: Vec<T> = y.iter().map(|j| j.v).collect();
    let e = model.eval(x.v, &frame.to_old(&yv))?;
    let mut args: Vec<&Jet<T>> = vec![x];
    args.extend(y.iter());
    let mut q = Jet::constant(T::zero(), x.nvars());
    for a in 0..n {
        for b in 0..n {
            let (pa, pb) = (frame.perm[a], frame.perm[b]);
            let sab = frame.signs[a] * frame.signs[b];
            let mut partials = vec![sab * e.dx_inv[(pa, pb)]];
            for c in 0..n {
                partials.push(sab * frame.signs[c] * e.dy_inv[frame.perm[c]][(pa, pb)]);
            }
            let gab = Jet::compose(sab * e.inv[(pa, pb)], &partials, &args);
            q = q + gab * m[a].clone() * m[b].clone();
        }
    }
    Ok(q)
}

fn reduced_jet<T: Real>(model: &MetricModel<T>, pt: &RegionPoint<T>, side: Side, v: &[Jet<T>]) -> Result<(Jet<T>, Jet<T>)> {
    let r = reduced_parts(pt, side, v);
    let q = quad_jet(model, &pt.frame, &r.x_at, &r.y_at, &r.m)?;
    let two = T::c(2.0);
    let h = r.rho.clone() * r.lam.square() - r.lam.scale(two) + r.rho.clone() * q;
    Ok((h, r.rho))
}

fn all_vars<T: Real>(pt: &RegionPoint<T>) -> Vec<Jet<T>> {
    let mut vals = pt.base.clone();
    vals.extend_from_slice(&pt.fibre);
    Jet::vars(&vals)
}

/// The shifted Hamiltonian `p̃` of one side and `p̃/ρ` (equal to `p̃` where
/// the defining function is 1).
pub fn shifted_hamiltonian<T: Real>(model: &MetricModel<T>, pt: &RegionPoint<T>, side: Side) -> Result<(T, T)> {
    pt.validate()?;
    let (h, rho) = reduced_jet(model, pt, side, &all_vars(pt))?;
    Ok((rho.v * h.v, h.v))
}

/// Hamilton field of `p̃/ρ` on one side.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionField<T> {
    pub base_dot: Vec<T>,
    pub fibre_dot: Vec<T>,
}

/// The Hamilton vector field of `p̃/ρ`, which equals `ρ⁻¹ H_{p̃}` on
/// `p̃ = 0`.
pub fn shifted_field<T: Real>(model: &MetricModel<T>, pt: &RegionPoint<T>, side: Side) -> Result<RegionField<T>> {
    pt.validate()?;
    let (h, _) = reduced_jet(model, pt, side, &all_vars(pt))?;
    let bb = 2 * pt.n + 2;
    Ok(RegionField { base_dot: h.g[bb..].to_vec(), fibre_dot: h.g[..bb].iter().map(|&d| -d).collect() })
}

/// Moves the fibre coordinate `index` by 1-D Newton until `p̃ = 0` on `side`.
pub fn solve_on_variety<T: Real>(model: &MetricModel<T>, pt: &RegionPoint<T>, side: Side, index: usize) -> Result<RegionPoint<T>> {
    let bb = 2 * pt.n + 2;
    let mut q = pt.clone();
    for _ in 0..60 {
        let (h, rho) = reduced_jet(model, &q, side, &all_vars(&q))?;
        let val = rho.v * h.v;
        let deriv = rho.v * h.g[bb + index];
        if val.abs() <= T::tol(1e-14) {
            return Ok(q);
        }
        if deriv == T::zero() {
            break;
        }
        q.fibre[index] -= val / deriv;
    }
    let (p, _) = shifted_hamiltonian(model, &q, side)?;
    if p.abs() < T::tol(1e-12) {
        Ok(q)
    } else {
        Err(Error::Precondition(format!("could not place the point on p_tilde = 0 (residual {p})")))
    }
}

/// Outcome of a transversality probe.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeReport<T> {
    pub region: Region,
    pub side: Side,
    pub field: RegionField<T>,
    /// Component along the side's own defining function (`≈ −2` on its face).
    pub own_component: Option<T>,
    /// Component along the opposite side's defining function.
    pub opposite_component: Option<T>,
    /// Component along `ρ_F`.
    pub front_component: Option<T>,
    /// Finite-difference derivative of `p̃/ρ` along the field, per unit
    /// field speed where the speed exceeds 1.
    pub annihilation_defect: T,
}

/// Evaluates the shifted field of `side` divided by its defining function
/// at a point of `p̃ = 0`, reporting the components normal to each face.
pub fn transversality_probe<T: Real>(model: &MetricModel<T>, pt: &RegionPoint<T>, side: Side) -> Result<ProbeReport<T>> {
    let (p, _) = shifted_hamiltonian(model, pt, side)?;
    if p.abs() >= T::tol(1e-10) {
        return Err(Error::Precondition(format!("point is off the shifted characteristic variety (p_tilde = {p})")));
    }
    let field = shifted_field(model, pt, side)?;
    let (l, r, ff) = pt.region.defining_functions(pt.n);
    let (own, opp) = match side {
        Side::Left => (l, r),
        Side::Right => (r, l),
    };
    let comp = |i: Option<usize>| i.map(|i| field.base_dot[i]);
    // One-sided second-order difference, stepping into the region where a
    // face coordinate sits at zero.
    let faces: Vec<usize> = [l, r, ff].into_iter().flatten().filter(|&i| pt.base[i] == T::zero()).collect();
    let sgn = if faces.iter().any(|&i| field.base_dot[i] < T::zero()) { -T::one() } else { T::one() };
    let speed = field.base_dot.iter().chain(&field.fibre_dot).fold(T::zero(), |a, &v| a + v * v).sqrt();
    let delta = T::c(1e-5) / speed.max(T::one());
    let h_at = |k: T| -> Result<T> {
        let mut q = pt.clone();
        for (b, d) in q.base.iter_mut().zip(&field.base_dot) {
            *b += sgn * k * delta * *d;
        }
        for (f, d) in q.fibre.iter_mut().zip(&field.fibre_dot) {
            *f += sgn * k * delta * *d;
        }
        for &i in &faces {
            q.base[i] = q.base[i].max(T::zero());
        }
        Ok(shifted_hamiltonian(model, &q, side)?.1)
    };
    let d = (-T::c(3.0) * h_at(T::zero())? + T::c(4.0) * h_at(T::one())? - h_at(T::c(2.0))?) / (T::c(2.0) * delta);
    let annihilation_defect = d.abs() * delta / T::c(1e-5);
    Ok(ProbeReport {
        region: pt.region,
        side,
        own_component: comp(own),
        opposite_component: comp(opp),
        front_component: comp(ff),
        field,
        annihilation_defect,
    })
}

/// A point of the model leaf at the front face (`x′ = 0`, region 4a, with
/// `g₀(0, y₀) = δ`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeafPoint<T> {
    pub r: T,
    pub r_prime: T,
    pub s: T,
    #[serde(rename = "Y")]
    pub y_cap: Vec<T>,
    pub y0: Vec<T>,
    pub lambda: T,
    pub mu: Vec<T>,
    pub lambda_prime: T,
    pub mu_prime: Vec<T>,
}

fn check_leaf_args<T: Real>(r: T, r_prime: T, n0: &[T]) -> Result<()> {
    let pi = T::PI();
    for (name, v) in [("r", r), ("r'", r_prime)] {
        if !(v > T::zero() && v < pi) {
            return Err(Error::CornerDegenerate(format!("{name} = {v} must lie in (0, pi)")));
        }
    }
    if (norm(n0) - T::one()).abs() > T::tol(1e-12) {
        return Err(Error::Precondition("N0 must be a unit vector".into()));
    }
    Ok(())
}

/// The model leaf map: `s = sin r / sin r′`, `Y = ((cos r − cos r′)/sin r′)N₀`,
/// `λ = cos r`, `μ = sin r N₀`, `λ′ = −cos r′`, `μ′ = −sin r′ N₀`.
pub fn leaf_model<T: Real>(r: T, r_prime: T, y0: &[T], n0: &[T]) -> Result<LeafPoint<T>> {
    check_leaf_args(r, r_prime, n0)?;
    let (sr, cr) = r.sin_cos();
    let (sp, cp) = r_prime.sin_cos();
    Ok(LeafPoint {
        r,
        r_prime,
        s: sr / sp,
        y_cap: n0.iter().map(|&v| (cr - cp) / sp * v).collect(),
        y0: y0.to_vec(),
        lambda: cr,
        mu: n0.iter().map(|&v| sr * v).collect(),
        lambda_prime: -cp,
        mu_prime: n0.iter().map(|&v| -sp * v).collect(),
    })
}

/// Packs `(s, Y, λ, μ, λ′, μ′)`.
fn leaf_state<T: Real>(p: &LeafPoint<T>) -> Vec<T> {
    let mut v = vec![p.s];
    v.extend_from_slice(&p.y_cap);
    v.push(p.lambda);
    v.extend_from_slice(&p.mu);
    v.push(p.lambda_prime);
    v.extend_from_slice(&p.mu_prime);
    v
}

/// Left and right Hamilton fields at the front face with `g₀ = δ`, in the
/// packing of [`leaf_state`].
fn front_face_fields<T: Real>(p: &LeafPoint<T>) -> (Vec<T>, Vec<T>) {
    let two = T::c(2.0);
    let (s, l, lp) = (p.s, p.lambda, p.lambda_prime);
    let m2 = dot(&p.mu, &p.mu);
    let mp2 = dot(&p.mu_prime, &p.mu_prime);
    let zero = vec![T::zero(); p.mu.len()];
    let mut hl = vec![two * l * s];
    hl.extend(p.mu.iter().map(|&m| -two * s * m));
    hl.push(-two * m2);
    hl.extend(p.mu.iter().map(|&m| two * l * m));
    hl.push(T::zero());
    hl.extend_from_slice(&zero);
    let mut hr = vec![-two * s * lp];
    hr.extend(p.mu_prime.iter().zip(&p.y_cap).map(|(&m, &yc)| two * m - two * yc * lp));
    hr.push(T::zero());
    hr.extend_from_slice(&zero);
    hr.push(-two * mp2);
    hr.extend(p.mu_prime.iter().map(|&m| two * lp * m));
    (hl, hr)
}

/// Max defect of `(2 sin r ∂_r) leaf = H^L` and `(−2 sin r′ ∂_{r′}) leaf = H^R`
/// at `(r, r′)`; derivatives of the map come from jets in `(r, r′)`.
pub fn leaf_residual<T: Real>(r: T, r_prime: T, n0: &[T]) -> Result<T> {
    check_leaf_args(r, r_prime, n0)?;
    let p = leaf_model(r, r_prime, &vec![T::zero(); n0.len()], n0)?;
    let rv = Jet::var(r, 0, 2);
    let rp = Jet::var(r_prime, 1, 2);
    let (sr, cr) = r.sin_cos();
    let (sp, cp) = r_prime.sin_cos();
    let sin_r = rv.chain(sr, cr);
    let cos_r = rv.chain(cr, -sr);
    let sin_p = rp.chain(sp, cp);
    let cos_p = rp.chain(cp, -sp);
    let inv_sp = sin_p.recip();
    let mut jets = vec![sin_r.clone() * inv_sp.clone()];
    for &v in n0 {
        jets.push(((cos_r.clone() - cos_p.clone()) * inv_sp.clone()).scale(v));
    }
    jets.push(cos_r.clone());
    jets.extend(n0.iter().map(|&v| sin_r.scale(v)));
    jets.push(-cos_p.clone());
    jets.extend(n0.iter().map(|&v| -sin_p.scale(v)));
    let (hl, hr) = front_face_fields(&p);
    let two = T::c(2.0);
    let mut defect = T::zero();
    for (k, j) in jets.iter().enumerate() {
        defect = defect.max((two * sr * j.g[0] - hl[k]).abs());
        defect = defect.max((-two * sp * j.g[1] - hr[k]).abs());
    }
    // The packed state must agree with the closed-form map.
    let state = leaf_state(&p);
    for (j, s) in jets.iter().zip(&state) {
        defect = defect.max((j.v - *s).abs());
    }
    Ok(defect)
}

/// One record of an exported leaf grid.
#[derive(Debug, Clone, Serialize)]
pub struct LeafRecord {
    pub r: f64,
    pub r_prime: f64,
    pub s: f64,
    #[serde(rename = "Y")]
    pub y_cap: Vec<f64>,
    pub lambda: f64,
    pub mu: Vec<f64>,
    pub lambda_prime: f64,
    pub mu_prime: Vec<f64>,
    pub residual: f64,
}

/// Evaluates the leaf on an `m × m` grid of cell midpoints in `(0, π)²`.
pub fn leaf_grid<T: Real>(m: usize, y0: &[T], n0: &[T]) -> Result<Vec<LeafRecord>> {
    let pi = T::PI();
    let mut out = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            let r = pi * T::c((i as f64 + 0.5) / m as f64);
            let rp = pi * T::c((j as f64 + 0.5) / m as f64);
            let p = leaf_model(r, rp, y0, n0)?;
            let residual = leaf_residual(r, rp, n0)?;
            let f = |v: &[T]| v.iter().map(|c| c.f64()).collect::<Vec<_>>();
            out.push(LeafRecord {
                r: r.f64(),
                r_prime: rp.f64(),
                s: p.s.f64(),
                y_cap: f(&p.y_cap),
                lambda: p.lambda.f64(),
                mu: f(&p.mu),
                lambda_prime: p.lambda_prime.f64(),
                mu_prime: f(&p.mu_prime),
                residual: residual.f64(),
            });
        }
    }
    Ok(out)
}

/// Samples of the front-face flow and the drift of its conserved quantity.
#[derive(Debug, Clone)]
pub struct FrontFaceFlow<T> {
    pub ts: Vec<T>,
    /// Packed `(s, Y, σ, N)`.
    pub states: Vec<Vec<T>>,
    pub max_drift: T,
}

/// `s²(σ² + |N|²) − 1`, the hyperbolic Hamiltonian on the front face.
pub fn front_face_hamiltonian<T: Real>(state: &[T]) -> T {
    let n = (state.len() - 2) / 2;
    let (s, sigma, nn) = (state[0], state[1 + n], &state[2 + n..]);
    s * s * (sigma * sigma + dot(nn, nn)) - T::one()
}

/// Integrates the restriction of the left flow to `x′ = 0` in region 4a
/// with `g₀ = δ`: `ṡ = 2s²σ`, `Ẏ = 2s²N`, `σ̇ = −2s(σ² + |N|²)`, `Ṅ = 0`.
pub fn front_face_flow<T: Real>(start: &[T], t_max: T) -> Result<FrontFaceFlow<T>> {
    if start.len() < 4 || !start.len().is_multiple_of(2) || !(start[0] > T::zero()) {
        return Err(Error::Precondition("front-face state is (s > 0, Y, sigma, N)".into()));
    }
    let n = (start.len() - 2) / 2;
    let rhs = move |_t: T, s: &[T], out: &mut [T]| -> Result<()> {
        let two = T::c(2.0);
        let (sv, sigma, nn) = (s[0], s[1 + n], &s[2 + n..]);
        out[0] = two * sv * sv * sigma;
        for i in 0..n {
            out[1 + i] = two * sv * sv * nn[i];
            out[2 + n + i] = T::zero();
        }
        out[1 + n] = -two * sv * (sigma * sigma + dot(nn, nn));
        Ok(())
    };
    let opts = OdeOptions { atol: T::tol(1e-12), rtol: T::tol(1e-12), h0: None, h_max: T::c(0.1), max_steps: 200_000 };
    let no_events: [Event<T>; 0] = [];
    let sol = dopri5(rhs, T::zero(), start, t_max, &opts, &no_events);
    if !matches!(sol.status, OdeStatus::Completed) {
        return Err(Error::Integrator(format!("front-face flow stopped: {:?}", sol.status)));
    }
    let h0 = front_face_hamiltonian(start);
    let max_drift = sol.ys.iter().map(|s| (front_face_hamiltonian(s) - h0).abs()).fold(T::zero(), T::max);
    Ok(FrontFaceFlow { ts: sol.ts, states: sol.ys, max_drift })
}

/// Cut parameters separating the near-diagonal part of the flowout from the
/// part treated on the product of the two 0-cotangent bundles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct LeafClassifier {
    pub epsilon: f64,
    pub epsilon_prime: f64,
}

impl Default for LeafClassifier {
    fn default() -> Self {
        Self { epsilon: 0.1, epsilon_prime: 0.05 }
    }
}

/// Which part of the flowout a leaf point belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafPart {
    NearDiagonal,
    Star,
}

impl LeafClassifier {
    /// `max_x` is the largest `x` along the underlying geodesic; leaves of
    /// geodesics staying in `x < ε` are entirely near-diagonal.
    pub fn classify(&self, x: f64, x_prime: f64, r_minus_r_prime: f64, max_x: f64) -> LeafPart {
        let half = 0.5 * self.epsilon;
        if max_x >= self.epsilon && x >= half && x_prime >= half && r_minus_r_prime >= self.epsilon_prime {
            LeafPart::Star
        } else {
            LeafPart::NearDiagonal
        }
    }
}

/// Boundary endpoints of a geodesic and whether they (nearly) coincide.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AntidiagonalReport<T> {
    pub y_forward: Vec<T>,
    pub y_backward: Vec<T>,
    pub separation: T,
    pub is_antidiagonal: bool,
}

/// Follows the geodesic through `pt` (with `p(pt) = 0`, `x > 0`) to the
/// boundary in both directions using the shifted flow, and flags endpoint
/// coincidence below `threshold`. Detection only: such leaves are reported,
/// not resolved.
pub fn detect_antidiagonal<T: Real>(model: &MetricModel<T>, pt: &PhasePoint0<T>, t_max: T, threshold: T) -> Result<AntidiagonalReport<T>> {
    let endpoint = |q: &PhasePoint0<T>| -> Result<Vec<T>> {
        let traj = integrate_shifted(model, &shift_to_standard(q)?, t_max)?;
        if traj.terminal != crate::flow::Terminal::HitBoundary {
            return Err(Error::Precondition(format!("geodesic did not reach the boundary ({:?})", traj.terminal)));
        }
        Ok(traj.last().state[1..1 + model.n()].to_vec())
    };
    let y_forward = endpoint(pt)?;
    let y_backward = endpoint(&reverse(pt))?;
    let d: Vec<T> = y_forward.iter().zip(&y_backward).map(|(a, b)| *a - *b).collect();
    let separation = norm(&d);
    Ok(AntidiagonalReport { is_antidiagonal: separation < threshold, y_forward, y_backward, separation })
}
