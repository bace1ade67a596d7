//! Run configuration: a TOML file with one section per command.
//!
//! Every field has a default, so an empty file is a valid configuration.
//! Vector-valued fields that depend on the dimension may be omitted and are
//! filled in by [`RunConfig::resolve`]; `--print-config` shows the resolved
//! values.

use serde::{Deserialize, Serialize};

use ahres::metric::MetricModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seed for multistart shooting.
    pub seed: u64,
    /// Worker threads for parallel commands; 0 uses every core.
    pub workers: usize,
    /// Multiplies every threshold of the `check` suite.
    pub tolerance_scale: f64,
    pub model: ModelConfig,
    pub flow: FlowConfig,
    pub shifted_flow: ShiftedFlowConfig,
    pub leaf: LeafConfig,
    pub distance: DistanceConfig,
    pub kernel: KernelConfig,
    pub wkb: WkbConfig,
    pub residual: ResidualConfig,
    pub gamma_bound: GammaBoundConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 0,
            tolerance_scale: 1.0,
            model: ModelConfig::default(),
            flow: FlowConfig::default(),
            shifted_flow: ShiftedFlowConfig::default(),
            leaf: LeafConfig::default(),
            distance: DistanceConfig::default(),
            kernel: KernelConfig::default(),
            wkb: WkbConfig::default(),
            residual: ResidualConfig::default(),
            gamma_bound: GammaBoundConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyName {
    HalfSpace,
    PoincareBall,
    Perturbed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub family: FamilyName,
    /// Boundary dimension.
    pub n: usize,
    /// Perturbation strength (perturbed family only).
    pub epsilon: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { family: FamilyName::HalfSpace, n: 2, epsilon: 0.05 }
    }
}

impl ModelConfig {
    pub fn build(&self) -> ahres::Result<MetricModel<f64>> {
        if self.n == 0 {
            return Err(ahres::Error::Usage("model dimension n must be at least 1".into()));
        }
        match self.family {
            FamilyName::HalfSpace => Ok(MetricModel::half_space(self.n)),
            FamilyName::PoincareBall => Ok(MetricModel::poincare_ball(self.n)),
            FamilyName::Perturbed => MetricModel::perturbed(self.n, self.epsilon),
        }
    }
}

/// A base point written as `[x, y₁, …, yₙ]`.
pub type PointSpec = Vec<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSpec {
    pub z: PointSpec,
    pub z_prime: PointSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub x: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<f64>>,
    pub lambda: f64,
    /// Defaults to `e₁`, which with `λ = 0` and `x = 1` gives the sech
    /// trajectory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    pub t_max: f64,
    pub x_floor: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self { x: 1.0, y: None, lambda: 0.0, mu: None, t_max: 10.0, x_floor: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShiftedFlowConfig {
    pub x: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<f64>>,
    pub xi: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<Vec<f64>>,
    pub t_max: f64,
}

impl Default for ShiftedFlowConfig {
    fn default() -> Self {
        Self { x: 1.0, y: None, xi: 1.0, eta: None, t_max: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LeafConfig {
    /// Grid size per axis on `(0, π)²`.
    pub grid: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y0: Option<Vec<f64>>,
    /// Unit direction of the geodesic at the front face.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n0: Option<Vec<f64>>,
}

impl Default for LeafConfig {
    fn default() -> Self {
        Self { grid: 50, y0: None, n0: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistanceConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<PairSpec>>,
    pub starts: usize,
    pub tolerance: f64,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        Self { pairs: None, starts: 8, tolerance: 1e-11 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum RepName {
    /// Derivative form for even `n`, integral form for odd `n`.
    Closed,
    Hypergeometric,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub h: Vec<f64>,
    pub r: Vec<f64>,
    pub rep: RepName,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { h: vec![1.0, 0.5, 0.2, 0.1], r: vec![0.5, 1.0, 2.0, 4.0], rep: RepName::All }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WkbConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<PairSpec>>,
    pub h: Vec<f64>,
}

impl Default for WkbConfig {
    fn default() -> Self {
        Self { pairs: None, h: vec![0.1] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResidualConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_prime: Option<PointSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<PointSpec>>,
    pub h: Vec<f64>,
}

impl Default for ResidualConfig {
    fn default() -> Self {
        Self { z_prime: None, grid: None, h: (0..4).map(|k| 0.2 * 0.5f64.powi(k)).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GammaBoundConfig {
    pub n: Vec<usize>,
    pub h_min: f64,
    pub h_max: f64,
    /// Log-spaced samples between `h_min` and `h_max`.
    pub samples: usize,
}

impl Default for GammaBoundConfig {
    fn default() -> Self {
        Self { n: vec![2, 3], h_min: 0.02, h_max: 1.0, samples: 41 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Strengths of the perturbed family; 0 is the exact model.
    pub epsilon: Vec<f64>,
    pub h: Vec<f64>,
    /// Hyperbolic separations of the sampled pairs.
    pub r: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { epsilon: vec![0.0, 0.05], h: vec![0.5, 0.1], r: vec![0.5, 1.0, 2.0] }
    }
}

fn zeros(n: usize) -> Vec<f64> {
    vec![0.0; n]
}

fn e1(n: usize) -> Vec<f64> {
    let mut v = zeros(n);
    v[0] = 1.0;
    v
}

fn point(x: f64, y_first: &[f64], n: usize) -> PointSpec {
    let mut p = vec![x];
    p.extend((0..n).map(|k| y_first.get(k).copied().unwrap_or(0.0)));
    p
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Fills every dimension-dependent default for the model's `n`.
    pub fn resolve(mut self) -> Self {
        let n = self.model.n.max(1);
        self.flow.y.get_or_insert_with(|| zeros(n));
        self.flow.mu.get_or_insert_with(|| e1(n));
        self.shifted_flow.y.get_or_insert_with(|| zeros(n));
        self.shifted_flow.eta.get_or_insert_with(|| e1(n));
        self.leaf.y0.get_or_insert_with(|| zeros(n));
        self.leaf.n0.get_or_insert_with(|| e1(n));
        self.distance.pairs.get_or_insert_with(|| {
            vec![
                PairSpec { z: point(0.5, &[0.1, -0.2], n), z_prime: point(1.3, &[0.4, 0.3], n) },
                PairSpec { z: point(0.2, &[0.0], n), z_prime: point(0.3, &[0.5, 0.1], n) },
            ]
        });
        self.wkb.pairs.get_or_insert_with(|| {
            vec![
                PairSpec { z: point(1.2, &[0.5, 0.1], n), z_prime: point(0.7, &[-0.5], n) },
                PairSpec { z: point(0.5, &[1.0], n), z_prime: point(0.5, &[0.0], n) },
            ]
        });
        self.residual.z_prime.get_or_insert_with(|| point(0.7, &[-0.5], n));
        self.residual.grid.get_or_insert_with(|| {
            vec![point(1.2, &[0.5, 0.1], n), point(1.0, &[0.6, -0.2], n), point(1.4, &[0.3, 0.2], n)]
        });
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = RunConfig::default().resolve();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("[model]\nfamly = \"half-space\"").is_err());
    }

    #[test]
    fn resolve_uses_dimension() {
        let mut c = RunConfig::default();
        c.model.n = 3;
        let c = c.resolve();
        assert_eq!(c.flow.mu.unwrap(), vec![1.0, 0.0, 0.0]);
        assert_eq!(c.distance.pairs.unwrap()[0].z.len(), 4);
    }
}
