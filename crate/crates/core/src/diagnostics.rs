//! Posterior summaries and fit assessment: CPO statistics, cluster-count
//! posterior, density estimate with credible bands, effective sample size.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Persisted chain summaries from one Gibbs run.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub grid: Vec<f64>,
    /// kept-iteration x grid density values
    pub path_matrix: Vec<Vec<f64>>,
    pub rn_trace: Vec<usize>,
    pub cpo: Vec<f64>,
    pub cpo_zero_warnings: usize,
    pub total_jump_trace: Vec<f64>,
    pub u_acceptance: f64,
    pub theta_acceptance: f64,
    pub allocation_underflow_warnings: usize,
    pub seed: u64,
    pub n: usize,
}

impl FitResult {
    pub fn kept(&self) -> usize {
        self.rn_trace.len()
    }
}

/// Harmonic-mean CPO from per-observation kernel evaluations over kept
/// iterations: CPO_i = [ (1/T) sum_t 1/k_i^{[t]} ]^{-1}.
///
/// `evals[i]` holds observation i's kernel values; zeros yield CPO_i = 0.
pub fn cpo(evals: &[Vec<f64>]) -> Vec<f64> {
    evals
        .iter()
        .map(|ks| {
            debug_assert!(!ks.is_empty());
            if ks.iter().any(|&k| k == 0.0) {
                return 0.0;
            }
            // log-space harmonic mean
            let neg_logs: Vec<f64> = ks.iter().map(|k| -k.ln()).collect();
            let lse = crate::special::log_sum_exp(&neg_logs);
            ((ks.len() as f64).ln() - lse).exp()
        })
        .collect()
}

/// (ALCPO, MLCPO): mean and median of the log CPO values; (-inf, -inf) when a
/// zero CPO is present.
pub fn cpo_summaries(cpo: &[f64]) -> (f64, f64) {
    if cpo.iter().any(|&c| c <= 0.0) {
        return (f64::NEG_INFINITY, f64::NEG_INFINITY);
    }
    let mut logs: Vec<f64> = cpo.iter().map(|c| c.ln()).collect();
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    logs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = logs.len();
    let median = if n % 2 == 1 { logs[n / 2] } else { 0.5 * (logs[n / 2 - 1] + logs[n / 2]) };
    (mean, median)
}

/// Empirical posterior of the cluster count with smallest-r tie-breaking for
/// the mode.
pub fn rn_posterior(rn_trace: &[usize]) -> (Vec<(usize, f64)>, usize) {
    assert!(!rn_trace.is_empty());
    let max_r = *rn_trace.iter().max().unwrap();
    let mut counts = vec![0usize; max_r + 1];
    for &r in rn_trace {
        counts[r] += 1;
    }
    let total = rn_trace.len() as f64;
    let mode = counts
        .iter()
        .enumerate()
        .max_by(|(i, a), (j, b)| a.cmp(b).then(j.cmp(i)))
        .map(|(i, _)| i)
        .unwrap();
    let dist = counts
        .into_iter()
        .enumerate()
        .filter(|(_, c)| *c > 0)
        .map(|(r, c)| (r, c as f64 / total))
        .collect();
    (dist, mode)
}

/// Weibull-plotting-position empirical quantile (linear interpolation of order
/// statistics at h = p (n+1), clamped to the extremes).
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    debug_assert!(n > 0);
    let h = p * (n as f64 + 1.0);
    if h <= 1.0 {
        return sorted[0];
    }
    if h >= n as f64 {
        return sorted[n - 1];
    }
    let k = h.floor() as usize;
    let frac = h - k as f64;
    sorted[k - 1] + frac * (sorted[k] - sorted[k - 1])
}

/// Pointwise mean with empirical credible bands at the given level.
pub struct DensityEstimate {
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

pub fn density_estimate(path_matrix: &[Vec<f64>], level: f64) -> Result<DensityEstimate> {
    if path_matrix.len() < 2 {
        return Err(Error::InvalidParameters("density_estimate needs at least 2 kept paths".into()));
    }
    let g = path_matrix[0].len();
    if path_matrix.iter().any(|p| p.len() != g) {
        return Err(Error::GridMismatch { expected: g, got: 0 });
    }
    let t = path_matrix.len() as f64;
    let p_lo = (1.0 - level) / 2.0;
    let p_hi = 1.0 - p_lo;
    let mut mean = vec![0.0; g];
    let mut lower = vec![0.0; g];
    let mut upper = vec![0.0; g];
    let mut column = vec![0.0; path_matrix.len()];
    for j in 0..g {
        for (i, p) in path_matrix.iter().enumerate() {
            column[i] = p[j];
        }
        mean[j] = column.iter().sum::<f64>() / t;
        column.sort_by(|a, b| a.partial_cmp(b).unwrap());
        lower[j] = empirical_quantile(&column, p_lo);
        upper[j] = empirical_quantile(&column, p_hi);
    }
    Ok(DensityEstimate { mean, lower, upper })
}

pub struct EssResult {
    pub ess: f64,
    pub degenerate: bool,
}

/// Effective sample size with Geyer's initial-positive-sequence truncation of
/// the autocorrelation sum.
pub fn ess(trace: &[f64]) -> Result<EssResult> {
    let t = trace.len();
    if t < 10 {
        return Err(Error::InvalidParameters("ess requires a trace of length >= 10".into()));
    }
    let mean = trace.iter().sum::<f64>() / t as f64;
    let autocov = |k: usize| -> f64 {
        (0..t - k).map(|i| (trace[i] - mean) * (trace[i + k] - mean)).sum::<f64>() / t as f64
    };
    let g0 = autocov(0);
    if g0 <= 0.0 {
        return Ok(EssResult { ess: t as f64, degenerate: true });
    }
    // sigma^2 = -g0 + 2 sum_m (g_{2m} + g_{2m+1}) while the pair sums stay positive
    let mut sigma2 = -g0;
    let mut m = 0usize;
    loop {
        let k = 2 * m;
        if k >= t {
            break;
        }
        let pair = autocov(k) + if k + 1 < t { autocov(k + 1) } else { 0.0 };
        if pair <= 0.0 {
            break;
        }
        sigma2 += 2.0 * pair;
        m += 1;
    }
    if sigma2 <= 0.0 {
        return Ok(EssResult { ess: t as f64, degenerate: true });
    }
    Ok(EssResult { ess: (t as f64 * g0 / sigma2).min(t as f64), degenerate: false })
}

/// Machine-readable fit summary written to fit.json.
#[derive(Debug, Serialize)]
pub struct FitSummary {
    pub n: usize,
    pub kept_iterations: usize,
    pub alcpo: f64,
    pub mlcpo: f64,
    pub rn_mode: usize,
    pub rn_distribution: Vec<(usize, f64)>,
    pub ess_total_jump: f64,
    pub ess_degenerate: bool,
    pub u_acceptance: f64,
    pub theta_acceptance: f64,
    pub cpo_zero_warnings: usize,
    pub allocation_underflow_warnings: usize,
    pub seed: u64,
}

pub fn summarize(fit: &FitResult) -> Result<FitSummary> {
    let (alcpo, mlcpo) = cpo_summaries(&fit.cpo);
    let (rn_distribution, rn_mode) = rn_posterior(&fit.rn_trace);
    let e = ess(&fit.total_jump_trace)?;
    Ok(FitSummary {
        n: fit.n,
        kept_iterations: fit.kept(),
        alcpo,
        mlcpo,
        rn_mode,
        rn_distribution,
        ess_total_jump: e.ess,
        ess_degenerate: e.degenerate,
        u_acceptance: fit.u_acceptance,
        theta_acceptance: fit.theta_acceptance,
        cpo_zero_warnings: fit.cpo_zero_warnings,
        allocation_underflow_warnings: fit.allocation_underflow_warnings,
        seed: fit.seed,
    })
}

/// 17-significant-digit decimal serialization used by every CSV artifact.
pub fn fmt_g17(x: f64) -> String {
    format!("{:.16e}", x)
}

fn write_csv(path: &Path, header: &str, rows: impl Iterator<Item = String>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{header}")?;
    for row in rows {
        writeln!(f, "{row}")?;
    }
    Ok(())
}

pub fn write_density_csv(path: &Path, fit: &FitResult, est: &DensityEstimate) -> Result<()> {
    write_csv(
        path,
        "grid,mean,lower,upper",
        fit.grid.iter().enumerate().map(|(j, &x)| {
            format!("{},{},{},{}", fmt_g17(x), fmt_g17(est.mean[j]), fmt_g17(est.lower[j]), fmt_g17(est.upper[j]))
        }),
    )
}

pub fn write_rn_csv(path: &Path, fit: &FitResult) -> Result<()> {
    let (dist, _) = rn_posterior(&fit.rn_trace);
    write_csv(path, "r,probability", dist.into_iter().map(|(r, p)| format!("{r},{}", fmt_g17(p))))
}

pub fn write_cpo_csv(path: &Path, fit: &FitResult) -> Result<()> {
    write_csv(
        path,
        "observation,cpo",
        fit.cpo.iter().enumerate().map(|(i, &c)| format!("{i},{}", fmt_g17(c))),
    )
}

/// Kept-iteration traces (r and total jump mass), one row per kept iteration.
pub fn write_trace_csv(path: &Path, fit: &FitResult) -> Result<()> {
    write_csv(
        path,
        "r,total_jump",
        fit.rn_trace
            .iter()
            .zip(&fit.total_jump_trace)
            .map(|(&r, &j)| format!("{r},{}", fmt_g17(j))),
    )
}

/// Full path matrix, one kept iteration per row, grid values as columns.
pub fn write_paths_csv(path: &Path, fit: &FitResult) -> Result<()> {
    let header: Vec<String> = (0..fit.grid.len()).map(|j| format!("g{j}")).collect();
    write_csv(
        path,
        &header.join(","),
        fit.path_matrix
            .iter()
            .map(|row| row.iter().map(|&v| fmt_g17(v)).collect::<Vec<_>>().join(",")),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cpo_examples() {
        let one = cpo(&[vec![0.37]]);
        assert!((one[0] - 0.37).abs() < 1e-15);
        let constant = cpo(&[vec![0.25; 8]]);
        assert!((constant[0] - 0.25).abs() < 1e-14);
        let mixed = cpo(&[vec![1.0, 1.0 / 3.0]]);
        assert!((mixed[0] - 0.5).abs() < 1e-14);
        let zero = cpo(&[vec![1.0, 0.0]]);
        assert_eq!(zero[0], 0.0);
    }

    #[test]
    fn cpo_summary_examples() {
        let e = std::f64::consts::E;
        let (a, m) = cpo_summaries(&[e, e, e]);
        assert!((a - 1.0).abs() < 1e-14 && (m - 1.0).abs() < 1e-14);
        let (a, m) = cpo_summaries(&[1.0, e * e]);
        assert!((a - 1.0).abs() < 1e-14 && (m - 1.0).abs() < 1e-14);
        let (a, m) = cpo_summaries(&[1.0, 0.0]);
        assert_eq!(a, f64::NEG_INFINITY);
        assert_eq!(m, f64::NEG_INFINITY);
    }

    #[test]
    fn cpo_permutation_invariant_summaries() {
        let v = [0.3, 1.2, 0.7, 0.9, 2.0];
        let mut w = v;
        w.reverse();
        assert_eq!(cpo_summaries(&v), cpo_summaries(&w));
    }

    #[test]
    fn rn_posterior_examples() {
        let (dist, mode) = rn_posterior(&[5, 5, 5]);
        assert_eq!(mode, 5);
        assert_eq!(dist, vec![(5, 1.0)]);
        let (dist, mode) = rn_posterior(&[3, 3, 4]);
        assert_eq!(mode, 3);
        assert!((dist[0].1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((dist[1].1 - 1.0 / 3.0).abs() < 1e-15);
        // tie broken toward the smaller r
        let (_, mode) = rn_posterior(&[4, 2, 2, 4]);
        assert_eq!(mode, 2);
        let (dist, _) = rn_posterior(&[1, 2, 3, 4]);
        let total: f64 = dist.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn density_estimate_examples() {
        let paths = vec![vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]];
        let est = density_estimate(&paths, 0.95).unwrap();
        assert_eq!(est.mean, vec![1.0, 2.0]);
        assert_eq!(est.lower, est.mean);
        assert_eq!(est.upper, est.mean);

        // two paths at level 0.95: bands are the pointwise min and max
        let paths = vec![vec![1.0, 5.0], vec![3.0, 1.0]];
        let est = density_estimate(&paths, 0.95).unwrap();
        assert_eq!(est.mean, vec![2.0, 3.0]);
        assert_eq!(est.lower, vec![1.0, 1.0]);
        assert_eq!(est.upper, vec![3.0, 5.0]);

        for j in 0..est.mean.len() {
            assert!(est.lower[j] <= est.mean[j] && est.mean[j] <= est.upper[j]);
        }
    }

    #[test]
    fn ess_iid_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(1);
        let trace: Vec<f64> = (0..4500)
            .map(|_| {
                let (u1, u2): (f64, f64) = (rng.gen(), rng.gen());
                (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            })
            .collect();
        let e = ess(&trace).unwrap();
        assert!(!e.degenerate);
        assert!((e.ess - 4500.0).abs() / 4500.0 < 0.10, "iid ess {}", e.ess);
    }

    #[test]
    fn ess_ar1_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(2);
        let phi = 0.5f64;
        let t = 200_000usize;
        let mut x = 0.0;
        let trace: Vec<f64> = (0..t)
            .map(|_| {
                let (u1, u2): (f64, f64) = (rng.gen(), rng.gen());
                let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                x = phi * x + z;
                x
            })
            .collect();
        let e = ess(&trace).unwrap();
        let expect = t as f64 * (1.0 - phi) / (1.0 + phi);
        assert!((e.ess - expect).abs() / expect < 0.15, "ar1 ess {} vs {}", e.ess, expect);
    }

    #[test]
    fn ess_constant_trace_degenerate() {
        let e = ess(&vec![1.0; 100]).unwrap();
        assert!(e.degenerate);
        assert_eq!(e.ess, 100.0);
    }

    #[test]
    fn fmt_g17_round_trips() {
        for &x in &[0.1, std::f64::consts::PI, 1e-300, 12345.6789] {
            let s = fmt_g17(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
    }
}
