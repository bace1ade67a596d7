//! Quadrature rules: Gauss–Legendre (fixed and composite) and adaptive
//! Gauss–Kronrod 7/15 for complex integrands.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Gauss–Legendre nodes and weights on `[-1, 1]`, by Newton iteration on the
/// three-term recurrence.
pub fn gauss_legendre<T: Real>(order: usize) -> (Vec<T>, Vec<T>) {
    assert!(order >= 1, "quadrature order must be positive");
    let mut nodes = vec![T::zero(); order];
    let mut weights = vec![T::zero(); order];
    let n = order as f64;
    let m = order.div_ceil(2);
    for i in 0..m {
        // Tricomi's initial guess, refined in f64 then converted.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(order, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(order, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = T::c(-x);
        nodes[order - 1 - i] = T::c(x);
        weights[i] = T::c(w);
        weights[order - 1 - i] = T::c(w);
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// A Gauss–Legendre rule that can be reused over many panels.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        let (nodes, weights) = gauss_legendre(order);
        Self { nodes, weights }
    }

    /// Integral of `f` over `[a, b]` split into `panels` equal panels.
    pub fn composite<F: FnMut(f64) -> Complex64>(&self, mut f: F, a: f64, b: f64, panels: usize) -> Complex64 {
        let panels = panels.max(1);
        let width = (b - a) / panels as f64;
        let mut total = Complex64::new(0.0, 0.0);
        for p in 0..panels {
            let lo = a + width * p as f64;
            let mid = lo + 0.5 * width;
            let half = 0.5 * width;
            let mut acc = Complex64::new(0.0, 0.0);
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                acc += f(mid + half * x) * *w;
            }
            total += acc * half;
        }
        total
    }

    /// Real-valued variant of [`GaussLegendre::composite`].
    pub fn composite_real<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64, panels: usize) -> f64 {
        self.composite(|x| Complex64::new(f(x), 0.0), a, b, panels).re
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> Complex64>(f: &mut F, a: f64, b: f64) -> (Complex64, f64) {
    let c = 0.5 * (a + b);
    let hw = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = hw * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += s * WGK[j];
        if j % 2 == 1 {
            gauss += s * WG[j / 2];
        }
    }
    ((kron * hw), ((kron - gauss) * hw).norm())
}

/// Outcome of [`adaptive_gk`].
#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: Complex64,
    pub error_estimate: f64,
    pub evaluations: usize,
}

/// Globally adaptive Gauss–Kronrod 7/15 quadrature of a complex integrand.
/// Subdivides the interval with the largest error estimate until the total
/// estimate falls below `abs_tol`.
pub fn adaptive_gk<F: FnMut(f64) -> Complex64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    max_intervals: usize,
) -> Result<QuadResult> {
    let (v, e) = gk15(&mut f, a, b);
    let mut intervals = vec![(a, b, v, e)];
    let mut evaluations = 15;
    loop {
        let total_err: f64 = intervals.iter().map(|iv| iv.3).sum();
        if total_err <= abs_tol {
            break;
        }
        if intervals.len() >= max_intervals {
            return Err(Error::Accuracy(format!(
                "adaptive quadrature did not converge: error estimate {total_err:.3e} > {abs_tol:.3e}"
            )));
        }
        let (idx, _) = intervals
            .iter()
            .enumerate()
            .max_by(|p, q| p.1 .3.total_cmp(&q.1 .3))
            .expect("non-empty interval list");
        let (lo, hi, _, _) = intervals.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        evaluations += 30;
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
    // Sum in left-to-right order so the result does not depend on the
    // subdivision history.
    intervals.sort_by(|p, q| p.0.total_cmp(&q.0));
    let value = intervals.iter().map(|iv| iv.2).sum();
    let error_estimate = intervals.iter().map(|iv| iv.3).sum();
    Ok(QuadResult { value, error_estimate, evaluations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn legendre_rule_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre::<f64>(10);
        let sum_w: f64 = w.iter().sum();
        assert_relative_eq!(sum_w, 2.0, epsilon = 1e-14);
        let int_x18: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(18)).sum();
        assert_relative_eq!(int_x18, 2.0 / 19.0, epsilon = 1e-14);
    }

    #[test]
    fn legendre_rule_single_precision() {
        let (x, w) = gauss_legendre::<f32>(6);
        let v: f32 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
        assert!((v - 2.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn composite_rule_on_oscillatory_integrand() {
        let gl = GaussLegendre::new(20);
        let v = gl.composite(|x| Complex64::new(0.0, 50.0 * x).exp(), 0.0, 1.0, 20);
        let exact = (Complex64::new(0.0, 50.0).exp() - 1.0) / Complex64::new(0.0, 50.0);
        assert!((v - exact).norm() < 1e-13);
    }

    #[test]
    fn adaptive_gk_gaussian() {
        let r = adaptive_gk(|x| Complex64::new((-x * x).exp(), 0.0), -10.0, 10.0, 1e-13, 500).unwrap();
        assert_relative_eq!(r.value.re, std::f64::consts::PI.sqrt(), epsilon = 1e-13);
    }

    #[test]
    fn adaptive_gk_reports_nonconvergence() {
        let r = adaptive_gk(|x| Complex64::new(1.0 / x.abs().sqrt(), 0.0), -1.0, 1.0, 1e-15, 4);
        assert!(matches!(r, Err(Error::Accuracy(_))));
    }
}
