//! First-order forward-mode jets: a value together with its gradient with
//! respect to a fixed set of independent variables. Used to obtain exact
//! Hamilton vector fields from scalar Hamiltonians written once.

use std::ops::{Add, Mul, Neg, Sub};

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Jet<T> {
    pub v: T,
    pub g: Vec<T>,
}

impl<T: Real> Jet<T> {
    pub fn constant(v: T, nvars: usize) -> Self {
        Self { v, g: vec![T::zero(); nvars] }
    }

    /// The `idx`-th independent variable with value `v`.
    pub fn var(v: T, idx: usize, nvars: usize) -> Self {
        let mut g = vec![T::zero(); nvars];
        g[idx] = T::one();
        Self { v, g }
    }

    /// Jets for all variables of a point.
    pub fn vars(values: &[T]) -> Vec<Self> {
        let n = values.len();
        values.iter().enumerate().map(|(i, &v)| Self::var(v, i, n)).collect()
    }

    pub fn nvars(&self) -> usize {
        self.g.len()
    }

    pub fn scale(&self, s: T) -> Self {
        Self { v: self.v * s, g: self.g.iter().map(|&d| d * s).collect() }
    }

    pub fn add_const(&self, c: T) -> Self {
        Self { v: self.v + c, g: self.g.clone() }
    }

    pub fn square(&self) -> Self {
        self.clone() * self.clone()
    }

    pub fn recip(&self) -> Self {
        let inv = T::one() / self.v;
        let d = -inv * inv;
        Self { v: inv, g: self.g.iter().map(|&x| x * d).collect() }
    }

    /// Applies a scalar function with known value and derivative.
    pub fn chain(&self, value: T, derivative: T) -> Self {
        Self { v: value, g: self.g.iter().map(|&x| x * derivative).collect() }
    }

    /// Builds the jet of `f(u₁, …, u_k)` from the value of `f`, its partials
    /// `∂f/∂uᵢ`, and the jets of the arguments.
    pub fn compose(value: T, partials: &[T], args: &[&Jet<T>]) -> Self {
        let nvars = args.first().map_or(0, |a| a.nvars());
        let mut g = vec![T::zero(); nvars];
        for (p, a) in partials.iter().zip(args) {
            for (gi, ai) in g.iter_mut().zip(&a.g) {
                *gi += *p * *ai;
            }
        }
        Self { v: value, g }
    }
}

impl<T: Real> Add for Jet<T> {
    type Output = Jet<T>;
    fn add(self, rhs: Jet<T>) -> Jet<T> {
        Jet { v: self.v + rhs.v, g: self.g.iter().zip(&rhs.g).map(|(a, b)| *a + *b).collect() }
    }
}

impl<T: Real> Sub for Jet<T> {
    type Output = Jet<T>;
    fn sub(self, rhs: Jet<T>) -> Jet<T> {
        Jet { v: self.v - rhs.v, g: self.g.iter().zip(&rhs.g).map(|(a, b)| *a - *b).collect() }
    }
}

impl<T: Real> Mul for Jet<T> {
    type Output = Jet<T>;
    fn mul(self, rhs: Jet<T>) -> Jet<T> {
        Jet {
            v: self.v * rhs.v,
            g: self.g.iter().zip(&rhs.g).map(|(a, b)| *a * rhs.v + self.v * *b).collect(),
        }
    }
}

impl<T: Real> Neg for Jet<T> {
    type Output = Jet<T>;
    fn neg(self) -> Jet<T> {
        Jet { v: -self.v, g: self.g.iter().map(|&a| -a).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn product_rule_and_recip() {
        let v = Jet::vars(&[2.0_f64, 3.0]);
        // f = x² y − 1/y
        let f = v[0].square() * v[1].clone() - v[1].recip();
        assert_relative_eq!(f.v, 12.0 - 1.0 / 3.0);
        assert_relative_eq!(f.g[0], 12.0);
        assert_relative_eq!(f.g[1], 4.0 + 1.0 / 9.0);
    }

    #[test]
    fn compose_applies_chain_rule() {
        let v = Jet::vars(&[0.5_f64]);
        let u = v[0].scale(2.0);
        let s = Jet::compose(u.v.sin(), &[u.v.cos()], &[&u]);
        assert_relative_eq!(s.g[0], 2.0 * 1.0f64.cos());
    }
}
