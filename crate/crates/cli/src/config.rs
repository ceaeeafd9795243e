//! JSON run configuration for the CLI.

use serde::{Deserialize, Serialize};

use nrmi_mix::gibbs::{GibbsConfig, ModelConfig};
use nrmi_mix::mixture::BaseMeasure;
use nrmi_mix::{KernelSpec, NggParams};

/// Mixing-process specification; the named special cases fix the remaining
/// NGG parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProcessSpec {
    Dirichlet { a: f64 },
    Nig { kappa: f64 },
    Nstable { gamma: f64 },
    Ngg { a: f64, kappa: f64, gamma: f64 },
}

impl ProcessSpec {
    pub fn params(self) -> nrmi_mix::Result<NggParams> {
        match self {
            ProcessSpec::Dirichlet { a } => NggParams::dirichlet(a),
            ProcessSpec::Nig { kappa } => NggParams::nig(kappa),
            ProcessSpec::Nstable { gamma } => NggParams::nstable(gamma),
            ProcessSpec::Ngg { a, kappa, gamma } => NggParams::new(a, kappa, gamma),
        }
    }
}

/// Evaluation grid: either explicit points or an equally spaced range.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum GridSpec {
    Range { min: f64, max: f64, points: usize },
    Points(Vec<f64>),
}

impl GridSpec {
    pub fn points(&self) -> Vec<f64> {
        match self {
            GridSpec::Points(p) => p.clone(),
            GridSpec::Range { min, max, points } => {
                let n = (*points).max(2);
                let step = (max - min) / (n as f64 - 1.0);
                (0..n).map(|j| min + step * j as f64).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub iterations: usize,
    pub burn_in: usize,
    #[serde(default = "default_thinning")]
    pub thinning: usize,
    #[serde(default = "default_delta")]
    pub delta_u: f64,
    #[serde(default = "default_delta")]
    pub delta_theta: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub seed: u64,
    pub grid: GridSpec,
}

fn default_thinning() -> usize {
    1
}
fn default_delta() -> f64 {
    4.0
}
fn default_eta() -> f64 {
    2.0
}
fn default_epsilon() -> f64 {
    1e-4
}

/// Top-level fit configuration file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub process: ProcessSpec,
    pub kernel: KernelSpec,
    pub base: BaseMeasure,
    pub chain: ChainSpec,
}

impl RunConfig {
    pub fn model(&self) -> nrmi_mix::Result<ModelConfig> {
        Ok(ModelConfig { ngg: self.process.params()?, kernel: self.kernel, base: self.base })
    }

    pub fn gibbs(&self, seed_override: Option<u64>) -> GibbsConfig {
        let c = &self.chain;
        GibbsConfig {
            iterations: c.iterations,
            burn_in: c.burn_in,
            thinning: c.thinning,
            delta_u: c.delta_u,
            delta_theta: c.delta_theta,
            eta: c.eta,
            epsilon: c.epsilon,
            seed: seed_override.unwrap_or(c.seed),
            grid: c.grid.points(),
            freeze_u: None,
        }
    }
}
