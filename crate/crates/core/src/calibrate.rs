//! Prior calibration: choose one free NGG parameter so the prior expected
//! number of clusters among n observations hits a target.

use rand::distributions::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::crm::{jumps_from_arrival_times, NggParams, TiltedTail};
use crate::error::{Error, Result};
use crate::exec::map_indexed;

/// Which NGG parameter the calibration search moves; the other two stay at the
/// values given in the template parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FreeParameter {
    TotalMass,
    Kappa,
    Gamma,
}

/// Dirichlet-process expected cluster count, exactly: sum_i a / (a + i - 1).
pub fn dirichlet_expected_clusters(a: f64, n: usize) -> f64 {
    (1..=n).map(|i| a / (a + (i - 1) as f64)).sum()
}

const MC_EPSILON: f64 = 1e-6;
const MC_SERIES_CAP: usize = 2_000_000;

fn simulate_clusters(params: NggParams, n: usize, rng: &mut ChaCha12Rng) -> Result<usize> {
    let tt = TiltedTail { params, tilt: 0.0 };
    let exp1 = rand_distr::Exp::new(1.0).unwrap();
    let mut arrival = 0.0;
    let (jumps, _) = jumps_from_arrival_times(
        &tt,
        &mut || {
            arrival += exp1.sample(rng);
            arrival
        },
        MC_EPSILON,
        MC_SERIES_CAP,
    )?;
    let total: f64 = jumps.iter().sum();
    // allocate n draws proportionally to the jumps, count distinct labels
    let mut seen = vec![false; jumps.len()];
    let mut distinct = 0usize;
    for _ in 0..n {
        let mut v = rng.gen::<f64>() * total;
        let mut idx = jumps.len() - 1;
        for (j, &w) in jumps.iter().enumerate() {
            if v < w {
                idx = j;
                break;
            }
            v -= w;
        }
        if !seen[idx] {
            seen[idx] = true;
            distinct += 1;
        }
    }
    Ok(distinct)
}

/// Monte Carlo estimate of the prior E[R_n] for a general NGG process,
/// with its standard error. Deterministic in `seed`; replicates run through
/// [`map_indexed`], so parallel and sequential builds agree bit-for-bit.
pub fn mc_expected_clusters(
    params: NggParams,
    n: usize,
    replicates: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if replicates < 2 {
        return Err(Error::InvalidParameters("mc_expected_clusters needs >= 2 replicates".into()));
    }
    let results = map_indexed(replicates, |i| {
        let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(i as u64 + 1)));
        simulate_clusters(params, n, &mut rng)
    });
    let mut vals = Vec::with_capacity(replicates);
    for r in results {
        vals.push(r? as f64);
    }
    let m = vals.iter().sum::<f64>() / vals.len() as f64;
    let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (vals.len() as f64 - 1.0);
    Ok((m, (var / vals.len() as f64).sqrt()))
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationResult {
    pub params: NggParams,
    pub expected_clusters: f64,
    pub standard_error: f64,
    pub target: f64,
    /// true when the target sits so close to 1 or n that the search hit a
    /// parameter-range boundary
    pub boundary: bool,
    pub replicates: usize,
}

use serde::Serialize;

fn with_free(template: NggParams, free: FreeParameter, value: f64) -> Result<NggParams> {
    match free {
        FreeParameter::TotalMass => NggParams::new(value, template.kappa, template.gamma),
        FreeParameter::Kappa => NggParams::new(template.a, value, template.gamma),
        FreeParameter::Gamma => NggParams::new(template.a, template.kappa, value),
    }
}

fn search_bounds(free: FreeParameter) -> (f64, f64) {
    match free {
        FreeParameter::TotalMass => (1e-8, 1e8),
        FreeParameter::Kappa => (1e-8, 1e4),
        // gamma close to 1 makes the series truncation explode; 0.85 already
        // reaches expected cluster counts near n for moderate n
        FreeParameter::Gamma => (1e-6, 0.85),
    }
}

/// Expected clusters as a function of the free parameter. Exact for the
/// Dirichlet special case with TotalMass free; Monte Carlo otherwise.
fn objective(
    template: NggParams,
    free: FreeParameter,
    value: f64,
    n: usize,
    replicates: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let params = with_free(template, free, value)?;
    if free == FreeParameter::TotalMass && params.gamma == 0.0 && params.kappa == 1.0 {
        Ok((dirichlet_expected_clusters(params.a, n), 0.0))
    } else {
        mc_expected_clusters(params, n, replicates, seed)
    }
}

/// Find the free-parameter value whose prior E[R_n] matches `target` by
/// bisection on a bracketing interval. E[R_n] is increasing in each of the
/// three parameters, so a sign change over the search bounds is a valid
/// bracket. Stops when |E - target| < max(0.1, 2 SE).
pub fn calibrate(
    template: NggParams,
    free: FreeParameter,
    target: f64,
    n: usize,
    replicates: usize,
    seed: u64,
) -> Result<CalibrationResult> {
    if !(1.0 <= target && target <= n as f64) {
        return Err(Error::CalibrationRange { target, lo: 1.0, hi: n as f64 });
    }
    let (mut lo, mut hi) = search_bounds(free);
    let (e_lo, se_lo) = objective(template, free, lo, n, replicates, seed)?;
    let (e_hi, se_hi) = objective(template, free, hi, n, replicates, seed)?;
    let tol = |se: f64| f64::max(0.1, 2.0 * se);
    if (e_lo - target).abs() < tol(se_lo) {
        let params = with_free(template, free, lo)?;
        return Ok(CalibrationResult { params, expected_clusters: e_lo, standard_error: se_lo, target, boundary: true, replicates });
    }
    if (e_hi - target).abs() < tol(se_hi) {
        let params = with_free(template, free, hi)?;
        return Ok(CalibrationResult { params, expected_clusters: e_hi, standard_error: se_hi, target, boundary: true, replicates });
    }
    if e_lo > target || e_hi < target {
        return Err(Error::CalibrationRange { target, lo: e_lo, hi: e_hi });
    }
    // bisect on the log scale: every free parameter is positive and E[R_n]
    // varies over orders of magnitude in it
    let (mut llo, mut lhi) = (lo.ln(), hi.ln());
    for _ in 0..200 {
        let mid = ((llo + lhi) / 2.0).exp();
        let (e, se) = objective(template, free, mid, n, replicates, seed)?;
        if (e - target).abs() < tol(se) {
            let params = with_free(template, free, mid)?;
            return Ok(CalibrationResult { params, expected_clusters: e, standard_error: se, target, boundary: false, replicates });
        }
        if e < target {
            llo = mid.ln();
        } else {
            lhi = mid.ln();
        }
        lo = llo.exp();
        hi = lhi.exp();
        let _ = (lo, hi);
    }
    Err(Error::Numerical { iteration: 200, message: "calibration bisection failed to converge".into() })
}
