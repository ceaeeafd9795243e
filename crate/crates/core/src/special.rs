//! Scalar special functions and quadrature used by the CRM machinery.

pub use statrs::function::gamma::ln_gamma;
use statrs::function::gamma::{gamma, gamma_ur};

const EULER_MASCHERONI: f64 = 0.577_215_664_901_532_9;

/// Exponential integral E1(x) for x > 0.
///
/// Power series below the crossover, Lentz continued fraction above it.
pub fn exp_integral_e1(x: f64) -> f64 {
    assert!(x > 0.0, "E1 requires x > 0, got {x}");
    if x <= 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..200 {
            let kf = k as f64;
            term *= -x / kf;
            let delta = -term / kf;
            sum += delta;
            if delta.abs() < 1e-18 * (sum.abs() + 1e-300) {
                break;
            }
        }
        -EULER_MASCHERONI - x.ln() + sum
    } else {
        // E1(x) = e^{-x} * 1/(x+1- 1/(x+3- 4/(x+5- ...)))
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..300 {
            let a = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (a * d + b);
            c = b + a / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-15 {
                break;
            }
        }
        h * (-x).exp()
    }
}

/// Upper incomplete gamma function Gamma(s, z) for s in (-1, 1], z > 0.
///
/// Uses the recurrence Gamma(s, z) = (z^s e^{-z} - Gamma(s+1, z)) / s for small z
/// and the Lentz continued fraction directly for large z, where the recurrence
/// cancels catastrophically.
pub fn upper_incomplete_gamma(s: f64, z: f64) -> f64 {
    assert!(z > 0.0);
    assert!(s > -1.0 && s <= 1.0);
    if s > 0.0 {
        return gamma_ur(s, z) * gamma(s);
    }
    if s == 0.0 {
        return exp_integral_e1(z);
    }
    if z < 3.0 {
        // Gamma(s+1, z) = s Gamma(s, z) + z^s e^{-z}
        let sp1 = s + 1.0;
        (gamma_ur(sp1, z) * gamma(sp1) - z.powf(s) * (-z).exp()) / s
    } else {
        upper_gamma_cf(s, z)
    }
}

// Continued fraction Gamma(s,z) = e^{-z} z^s / (z+1-s- 1*(1-s)/(z+3-s- 2*(2-s)/(...)))
fn upper_gamma_cf(s: f64, z: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = z + 1.0 - s;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let fi = i as f64;
        let a = -fi * (fi - s);
        b += 2.0;
        d = a * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-15 {
            break;
        }
    }
    (-z + s * z.ln()).exp() * h
}

/// Adaptive Simpson quadrature with relative tolerance.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rtol: f64) -> f64 {
    // Refine from a 64-panel composite rather than from (a, b) directly: a
    // single wide interval can both misjudge the tolerance scale and converge
    // spuriously when its few sample points all miss the integrand's mass.
    let panels = 64;
    let h = (b - a) / panels as f64;
    let mut scale = 0.0;
    for j in 0..panels {
        let (x0, x1) = (a + h * j as f64, a + h * (j + 1) as f64);
        scale += (x1 - x0) / 6.0 * (f(x0).abs() + 4.0 * f(0.5 * (x0 + x1)).abs() + f(x1).abs());
    }
    let atol = rtol * scale.max(f64::MIN_POSITIVE) / panels as f64;

    let mut total = 0.0;
    for j in 0..panels {
        let (x0, x1) = (a + h * j as f64, a + h * (j + 1) as f64);
        let (f0, f1) = (f(x0), f(x1));
        let m = 0.5 * (x0 + x1);
        let fm = f(m);
        let whole = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
        total += simpson_rec(f, x0, x1, f0, f1, fm, whole, atol, 40);
    }
    total
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    fm: f64,
    whole: f64,
    atol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * atol {
        left + right + delta / 15.0
    } else {
        simpson_rec(f, a, m, fa, fm, flm, left, atol / 2.0, depth - 1)
            + simpson_rec(f, m, b, fm, fb, frm, right, atol / 2.0, depth - 1)
    }
}

/// log(sum(exp(x))) over a slice, robust to -inf entries.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = values.iter().map(|v| (v - m).exp()).sum();
    m + s.ln()
}
