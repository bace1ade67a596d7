//! Finite-difference Laplace–Beltrami operator of `g = (dx² + g₀)/x²`.
//!
//! In coordinates `(x, y)` with `D = √det g₀` and `gᵢⱼ := g₀^{ij}`,
//!
//! `Δu = −x²uₓₓ + (n−1)x uₓ − x²(∂ₓ log D)uₓ − x²gᵢⱼ∂ᵢ∂ⱼu − x²(∂ᵢgᵢⱼ + gᵢⱼ∂ᵢ log D)∂ⱼu`
//!
//! (positive Laplacian). Metric coefficients and their first partials come
//! from [`MetricModel::eval`]; only `u` is differenced.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::metric::MetricModel;

/// First and second partials of `u` at one point from central differences.
#[derive(Debug, Clone)]
pub struct Partials2 {
    pub value: Complex64,
    /// `∂ₓu, ∂_{y₁}u, …`
    pub grad: Vec<Complex64>,
    /// Row-major `(n+1) × (n+1)` Hessian in `(x, y)`, without `x`–`y`
    /// cross entries.
    pub hessian: Vec<Complex64>,
}

/// Second-order central differences with absolute step `step` in every
/// coordinate; mixed `y` partials use the four-point cross stencil. The
/// metric has no `dx dy` cross terms, so the `x`–`y` entries are left zero.
pub fn partials2<F>(u: &F, x: f64, y: &[f64], step: f64) -> Result<Partials2>
where
    F: Fn(f64, &[f64]) -> Result<Complex64> + ?Sized,
{
    let d = y.len() + 1;
    let at = |offsets: &[(usize, f64)]| -> Result<Complex64> {
        let mut p = vec![x];
        p.extend_from_slice(y);
        for &(k, o) in offsets {
            p[k] += o;
        }
        u(p[0], &p[1..])
    };
    let value = at(&[])?;
    let mut grad = vec![Complex64::default(); d];
    let mut hessian = vec![Complex64::default(); d * d];
    for k in 0..d {
        let p = at(&[(k, step)])?;
        let m = at(&[(k, -step)])?;
        grad[k] = (p - m) / (2.0 * step);
        hessian[k * d + k] = (p - 2.0 * value + m) / (step * step);
    }
    for k in 1..d {
        for l in k + 1..d {
            let pp = at(&[(k, step), (l, step)])?;
            let pm = at(&[(k, step), (l, -step)])?;
            let mp = at(&[(k, -step), (l, step)])?;
            let mm = at(&[(k, -step), (l, -step)])?;
            let v = (pp - pm - mp + mm) / (4.0 * step * step);
            hessian[k * d + l] = v;
            hessian[l * d + k] = v;
        }
    }
    Ok(Partials2 { value, grad, hessian })
}

/// `Δ_g u` at `(x, y)` from the partials of `u`.
pub fn laplace_from_partials(model: &MetricModel<f64>, x: f64, y: &[f64], p: &Partials2) -> Result<Complex64> {
    let n = model.n();
    let d = n + 1;
    let e = model.eval(x, y)?;
    let (dlx, dly) = e.d_log_det();
    let x2 = x * x;
    let mut acc = -x2 * p.hessian[0] + ((n as f64 - 1.0) * x - 0.5 * x2 * dlx) * p.grad[0];
    for j in 0..n {
        let mut coef = 0.0;
        for i in 0..n {
            acc -= x2 * e.inv[(i, j)] * p.hessian[(i + 1) * d + j + 1];
            coef += e.dy_inv[i][(i, j)] + 0.5 * e.inv[(i, j)] * dly[i];
        }
        acc -= x2 * coef * p.grad[j + 1];
    }
    Ok(acc)
}

/// `Δ_g u` with second-order central differences of step `step`.
pub fn laplace_beltrami<F>(model: &MetricModel<f64>, u: &F, x: f64, y: &[f64], step: f64) -> Result<Complex64>
where
    F: Fn(f64, &[f64]) -> Result<Complex64> + ?Sized,
{
    if !(step > 0.0 && step < x) {
        return Err(Error::Usage(format!("finite-difference step {step} must lie in (0, x)")));
    }
    let p = partials2(u, x, y, step)?;
    laplace_from_partials(model, x, y, &p)
}

/// Richardson-extrapolated `(4Δ_{step/2} − Δ_{step})/3`, fourth order in
/// `step`.
pub fn laplace_beltrami_richardson<F>(model: &MetricModel<f64>, u: &F, x: f64, y: &[f64], step: f64) -> Result<Complex64>
where
    F: Fn(f64, &[f64]) -> Result<Complex64> + ?Sized,
{
    let coarse = laplace_beltrami(model, u, x, y, step)?;
    let fine = laplace_beltrami(model, u, x, y, 0.5 * step)?;
    Ok((4.0 * fine - coarse) / 3.0)
}
