//! Numerical toolkit for the high-energy resolvent on asymptotically
//! hyperbolic manifolds.

// Input guards are written `!(x > 0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod charts;
pub mod distance;
pub mod error;
pub mod fd;
pub mod fit;
pub mod hypres;
pub mod flow;
pub mod jet;
pub mod laplacian;
pub mod linalg;
pub mod metric;
pub mod ode;
pub mod quad;
pub mod scalar;
pub mod special;
pub mod wkb;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision instances of the generic core.
pub type Metric64 = metric::MetricModel<f64>;
pub type PhasePoint64 = metric::PhasePoint0<f64>;
pub type ShiftedPoint64 = flow::ShiftedPoint<f64>;
pub type Trajectory64 = flow::Trajectory<f64>;
pub type RegionPoint64 = charts::RegionPoint<f64>;

/// Single-precision instances of the generic core.
pub type Metric32 = metric::MetricModel<f32>;
pub type PhasePoint32 = metric::PhasePoint0<f32>;
pub type ShiftedPoint32 = flow::ShiftedPoint<f32>;
pub type Trajectory32 = flow::Trajectory<f32>;
pub type RegionPoint32 = charts::RegionPoint<f32>;
