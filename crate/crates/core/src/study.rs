//! Simulation-study harness: Gaussian mixture truths, kernel density
//! baseline, and integrated squared-error scoring of density estimates.

use rand::distributions::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::map_indexed;
use crate::gibbs::{run_chain, GibbsConfig, ModelConfig};

/// Finite Gaussian mixture used as a simulation truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl GaussianMixture {
    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty()
            || self.weights.len() != self.means.len()
            || self.weights.len() != self.sds.len()
        {
            return Err(Error::InvalidParameters("mixture component lists must be equal-length and nonempty".into()));
        }
        if self.weights.iter().any(|&w| w < 0.0) || self.sds.iter().any(|&s| s <= 0.0) {
            return Err(Error::InvalidParameters("mixture weights must be >= 0 and sds > 0".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameters(format!("mixture weights sum to {total}, expected 1")));
        }
        Ok(())
    }

    pub fn density(&self, x: f64) -> f64 {
        let c = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.sds)
            .map(|((&w, &m), &s)| w * c / s * (-0.5 * ((x - m) / s).powi(2)).exp())
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(&self.means).map(|(&w, &m)| w * m).sum()
    }

    pub fn sd(&self) -> f64 {
        let mu = self.mean();
        let second: f64 = self
            .weights
            .iter()
            .zip(&self.means)
            .zip(&self.sds)
            .map(|((&w, &m), &s)| w * (s * s + m * m))
            .sum();
        (second - mu * mu).sqrt()
    }

    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        let comp = rand_distr::WeightedIndex::new(&self.weights).expect("validated weights");
        (0..n)
            .map(|_| {
                let j = comp.sample(rng);
                let z =
                    rand_distr::Normal::new(self.means[j], self.sds[j]).unwrap().sample(rng);
                z
            })
            .collect()
    }

    /// Evaluation grid: truth mean +/- 6 truth sd, `points` equally spaced.
    pub fn default_grid(&self, points: usize) -> Vec<f64> {
        let (m, s) = (self.mean(), self.sd());
        let (lo, hi) = (m - 6.0 * s, m + 6.0 * s);
        let step = (hi - lo) / (points as f64 - 1.0);
        (0..points).map(|j| lo + step * j as f64).collect()
    }
}

/// Gaussian kernel density estimate with Silverman's rule-of-thumb bandwidth
/// h = 1.06 s n^{-1/5}.
pub fn silverman_kde(data: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    let n = data.len();
    if n < 2 {
        return Err(Error::InvalidParameters("kde needs at least 2 observations".into()));
    }
    let mean = data.iter().sum::<f64>() / n as f64;
    let var = data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    if var <= 0.0 {
        return Err(Error::DegenerateBandwidth);
    }
    let h = 1.06 * var.sqrt() * (n as f64).powf(-0.2);
    let c = 1.0 / (n as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    Ok(grid
        .iter()
        .map(|&g| c * data.iter().map(|&x| (-0.5 * ((g - x) / h).powi(2)).exp()).sum::<f64>())
        .collect())
}

/// Trapezoid-rule integrated squared error between an estimate and the truth
/// on a shared grid.
pub fn ise(grid: &[f64], estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if grid.len() != estimate.len() || grid.len() != truth.len() {
        return Err(Error::GridMismatch { expected: grid.len(), got: estimate.len().min(truth.len()) });
    }
    if grid.len() < 2 {
        return Err(Error::InvalidParameters("ise needs a grid of length >= 2".into()));
    }
    let sq: Vec<f64> = estimate.iter().zip(truth).map(|(&e, &t)| (e - t).powi(2)).collect();
    let mut total = 0.0;
    for j in 1..grid.len() {
        total += 0.5 * (grid[j] - grid[j - 1]) * (sq[j] + sq[j - 1]);
    }
    Ok(total)
}

/// One simulation-study cell: a truth, a sample size, a model, and the chain
/// settings shared by every replicate.
#[derive(Debug, Clone)]
pub struct StudySpec {
    pub truth: GaussianMixture,
    pub sample_size: usize,
    pub model: ModelConfig,
    pub chain: GibbsConfig,
    pub replicates: usize,
    pub grid_points: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudyResult {
    /// mean ISE of the model's posterior-mean density across clean replicates
    pub mise_model: f64,
    /// kde-relative score: MISE(model) / MISE(kde)
    pub rmise: f64,
    pub mise_kde: f64,
    pub replicates_done: usize,
    pub replicate_errors: Vec<(usize, String)>,
}

/// Run a study cell; replicate failures are recorded and skipped rather than
/// aborting the whole cell.
pub fn run_study(spec: &StudySpec) -> Result<StudyResult> {
    spec.truth.validate()?;
    if spec.replicates == 0 {
        return Err(Error::InvalidParameters("study needs >= 1 replicate".into()));
    }
    let grid = spec.truth.default_grid(spec.grid_points);
    let truth_density: Vec<f64> = grid.iter().map(|&x| spec.truth.density(x)).collect();

    let per_replicate = |i: usize| -> std::result::Result<(f64, f64), String> {
        let mut rng = ChaCha12Rng::seed_from_u64(
            spec.seed ^ (0xa076_1d64_78bd_642fu64.wrapping_mul(i as u64 + 1)),
        );
        let data = spec.truth.sample(spec.sample_size, &mut rng);
        let mut cfg = spec.chain.clone();
        cfg.grid = grid.clone();
        cfg.seed = rng.gen();
        let fit = run_chain(&data, &spec.model, &cfg).map_err(|e| e.to_string())?;
        let est = crate::diagnostics::density_estimate(&fit.path_matrix, 0.95)
            .map_err(|e| e.to_string())?;
        let ise_model = ise(&grid, &est.mean, &truth_density).map_err(|e| e.to_string())?;
        let kde = silverman_kde(&data, &grid).map_err(|e| e.to_string())?;
        let ise_kde = ise(&grid, &kde, &truth_density).map_err(|e| e.to_string())?;
        Ok((ise_model, ise_kde))
    };

    let results = map_indexed(spec.replicates, per_replicate);
    let mut model_sum = 0.0;
    let mut kde_sum = 0.0;
    let mut done = 0usize;
    let mut errors = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok((m, k)) => {
                model_sum += m;
                kde_sum += k;
                done += 1;
            }
            Err(msg) => errors.push((i, msg)),
        }
    }
    if done == 0 {
        return Err(Error::Numerical { iteration: 0, message: "every study replicate failed".into() });
    }
    let mise_model = model_sum / done as f64;
    let mise_kde = kde_sum / done as f64;
    Ok(StudyResult {
        mise_model,
        rmise: mise_model / mise_kde,
        mise_kde,
        replicates_done: done,
        replicate_errors: errors,
    })
}
