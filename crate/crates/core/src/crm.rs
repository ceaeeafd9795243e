//! Generalized-gamma CRM machinery: Laplace exponents, jump-moment integrals,
//! the jump-intensity tail mass, its numerical inversion and Ferguson-Klass
//! series simulation with exponential tilting.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::special::{adaptive_simpson, exp_integral_e1, ln_gamma, upper_incomplete_gamma};

/// Parameters (a, kappa, gamma) of a generalized-gamma CRM.
///
/// `gamma = 0` is the gamma-CRM (Dirichlet) case and is special-cased in every
/// formula below; the (a/gamma) expressions are never evaluated at gamma = 0.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NggParams {
    pub a: f64,
    pub kappa: f64,
    pub gamma: f64,
}

impl NggParams {
    pub fn new(a: f64, kappa: f64, gamma: f64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::InvalidParameters(format!("total mass a must be positive, got {a}")));
        }
        if !(kappa >= 0.0) {
            return Err(Error::InvalidParameters(format!("kappa must be nonnegative, got {kappa}")));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidParameters(format!("gamma must lie in [0, 1), got {gamma}")));
        }
        if kappa == 0.0 && gamma == 0.0 {
            return Err(Error::InvalidParameters(
                "at least one of kappa, gamma must be strictly positive".into(),
            ));
        }
        Ok(Self { a, kappa, gamma })
    }

    /// Dirichlet process NGG(a, 1, 0).
    pub fn dirichlet(a: f64) -> Result<Self> {
        Self::new(a, 1.0, 0.0)
    }

    /// Normalized inverse-Gaussian process NGG(1, kappa, 1/2).
    pub fn nig(kappa: f64) -> Result<Self> {
        Self::new(1.0, kappa, 0.5)
    }

    /// Normalized stable process NGG(1, 0, gamma).
    pub fn nstable(gamma: f64) -> Result<Self> {
        if gamma <= 0.0 {
            return Err(Error::InvalidParameters(format!(
                "N-stable requires gamma in (0, 1), got {gamma}"
            )));
        }
        Self::new(1.0, 0.0, gamma)
    }
}

/// An NGG intensity with an extra exponential tilt u, so the effective
/// exponential rate is b = kappa + tilt.
#[derive(Debug, Clone, Copy)]
pub struct TiltedTail {
    pub params: NggParams,
    pub tilt: f64,
}

impl TiltedTail {
    pub fn new(params: NggParams, tilt: f64) -> Result<Self> {
        if !(tilt >= 0.0) {
            return Err(Error::InvalidParameters(format!("tilt must be nonnegative, got {tilt}")));
        }
        if params.gamma == 0.0 && params.kappa + tilt == 0.0 {
            return Err(Error::InvalidParameters(
                "gamma = 0 requires a strictly positive rate kappa + tilt".into(),
            ));
        }
        Ok(Self { params, tilt })
    }

    /// Effective exponential rate b = kappa + tilt.
    pub fn rate(&self) -> f64 {
        self.params.kappa + self.tilt
    }
}

/// Ferguson-Klass series truncated at relative jump size `truncation_epsilon`.
///
/// Jumps are strictly decreasing by construction; `discarded_head` is the first
/// jump dropped by the truncation rule.
#[derive(Debug, Clone)]
pub struct AtomSeries<L> {
    pub jumps: Vec<f64>,
    pub locations: Vec<L>,
    pub truncation_epsilon: f64,
    pub discarded_head: f64,
}

impl<L> AtomSeries<L> {
    pub fn len(&self) -> usize {
        self.jumps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jumps.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.jumps.iter().sum()
    }
}

/// Default hard cap on the series length.
pub const SERIES_HARD_CAP: usize = 100_000;

/// Laplace exponent psi(u) of the tilted intensity.
///
/// psi(u) = (a/gamma) ((b+u)^gamma - b^gamma) for gamma > 0 and
/// a log(1 + u/b) for gamma = 0, where b = kappa + tilt.
pub fn laplace_exponent(tt: &TiltedTail, u: f64) -> f64 {
    debug_assert!(u >= 0.0);
    let NggParams { a, gamma, .. } = tt.params;
    let b = tt.rate();
    if gamma == 0.0 {
        a * (u / b).ln_1p()
    } else {
        a / gamma * ((b + u).powf(gamma) - b.powf(gamma))
    }
}

/// n-th jump moment tau_n(u) = int v^n e^{-uv} rho(dv) for the untilted NGG
/// kernel rho, excluding the base-measure mass a:
/// tau_n(u) = Gamma(n - gamma) / Gamma(1 - gamma) * (kappa + u)^(gamma - n).
pub fn tau_moment(params: &NggParams, n: u64, u: f64) -> f64 {
    debug_assert!(n >= 1);
    let b = params.kappa + u;
    debug_assert!(b > 0.0);
    let nf = n as f64;
    (ln_gamma(nf - params.gamma) - ln_gamma(1.0 - params.gamma)
        + (params.gamma - nf) * b.ln())
    .exp()
}

/// Tail mass N(v) = a / Gamma(1-gamma) * int_v^inf e^{-bx} x^{-(1+gamma)} dx.
///
/// gamma = 0 routes through E1, b = 0 through the stable power law; the
/// general case is an upper incomplete gamma of negative shape.
pub fn tail_mass(tt: &TiltedTail, v: f64) -> Result<f64> {
    debug_assert!(v > 0.0);
    let NggParams { a, gamma, .. } = tt.params;
    let b = tt.rate();
    if b == 0.0 {
        if gamma == 0.0 {
            return Err(Error::DivergentTail);
        }
        return Ok(a * v.powf(-gamma) / (gamma * (ln_gamma(1.0 - gamma)).exp()));
    }
    if gamma == 0.0 {
        return Ok(a * exp_integral_e1(b * v));
    }
    // substitute x = t/b: integral = b^gamma * Gamma(-gamma, b v)
    Ok(a / ln_gamma(1.0 - gamma).exp() * b.powf(gamma) * upper_incomplete_gamma(-gamma, b * v))
}

/// Tail mass evaluated by adaptive quadrature on (v, V) with an analytic bound
/// closing the remainder beyond V. Verification route for [`tail_mass`].
pub fn tail_mass_quadrature(tt: &TiltedTail, v: f64) -> Result<f64> {
    debug_assert!(v > 0.0);
    let NggParams { a, gamma, .. } = tt.params;
    let b = tt.rate();
    if b == 0.0 {
        if gamma == 0.0 {
            return Err(Error::DivergentTail);
        }
        // integral has the exact power-law form; quadrature on an infinite
        // pure power tail is pointless
        return Ok(a * v.powf(-gamma) / (gamma * ln_gamma(1.0 - gamma).exp()));
    }
    let integrand = |x: f64| (-b * x).exp() * x.powf(-(1.0 + gamma));
    // choose V so that the analytic remainder bound e^{-bV} V^{-(1+gamma)} / b
    // is below 1e-12 of the partial integral
    let mut upper = v + 10.0 / b;
    let mut partial = adaptive_simpson(&integrand, v, upper, 1e-12);
    loop {
        let remainder_bound = (-b * upper).exp() * upper.powf(-(1.0 + gamma)) / b;
        if remainder_bound <= 1e-12 * partial {
            break;
        }
        let next = upper + 10.0 / b;
        partial += adaptive_simpson(&integrand, upper, next, 1e-12);
        upper = next;
    }
    Ok(a / ln_gamma(1.0 - gamma).exp() * partial)
}

/// Derivative N'(v) = -a / Gamma(1-gamma) e^{-bv} v^{-(1+gamma)}.
fn tail_mass_derivative(tt: &TiltedTail, v: f64) -> f64 {
    let NggParams { a, gamma, .. } = tt.params;
    let b = tt.rate();
    -a / ln_gamma(1.0 - gamma).exp() * (-b * v).exp() * v.powf(-(1.0 + gamma))
}

const INVERSION_RTOL: f64 = 1e-9;

/// Solve N(J) = xi for J, to relative tolerance 1e-9 on N.
///
/// `warm_start` is the previous jump of the series when inverting along a
/// Ferguson-Klass sequence (the solution is below it).
pub fn invert_tail_mass(tt: &TiltedTail, xi: f64, warm_start: Option<f64>) -> Result<f64> {
    debug_assert!(xi > 0.0);
    let NggParams { a, gamma, .. } = tt.params;
    let b = tt.rate();
    if b == 0.0 {
        if gamma == 0.0 {
            return Err(Error::DivergentTail);
        }
        // closed-form stable inversion
        return Ok((xi * gamma * ln_gamma(1.0 - gamma).exp() / a).powf(-1.0 / gamma));
    }
    let fail = || Error::NumericalInversion { xi, a, gamma, rate: b };

    // bracket [lo, hi] with N(lo) >= xi >= N(hi), by geometric expansion
    let mut hi = warm_start.unwrap_or(1.0 / b);
    let mut n_hi = tail_mass(tt, hi)?;
    let mut expansions = 0;
    while n_hi > xi {
        hi *= 4.0;
        n_hi = tail_mass(tt, hi)?;
        expansions += 1;
        if expansions > 600 {
            return Err(fail());
        }
    }
    let mut lo = hi / 4.0;
    let mut n_lo = tail_mass(tt, lo)?;
    while n_lo < xi {
        hi = lo;
        lo /= 4.0;
        // for gamma = 0 the solution is v ~ e^{-xi/a}/b, which leaves f64
        // range for large xi; report that instead of evaluating at v = 0
        if lo < f64::MIN_POSITIVE {
            return Err(fail());
        }
        n_lo = tail_mass(tt, lo)?;
        expansions += 1;
        if expansions > 600 {
            return Err(fail());
        }
    }

    // bisection with Newton polish on t = log v
    let mut t_lo = lo.ln();
    let mut t_hi = hi.ln();
    let mut t = 0.5 * (t_lo + t_hi);
    for _ in 0..200 {
        let v = t.exp();
        let n_v = tail_mass(tt, v)?;
        if (n_v - xi).abs() <= INVERSION_RTOL * xi {
            return Ok(v);
        }
        if n_v > xi {
            t_lo = t;
        } else {
            t_hi = t;
        }
        // d/dt N(e^t) = N'(v) v
        let slope = tail_mass_derivative(tt, v) * v;
        let t_newton = t - (n_v - xi) / slope;
        t = if t_newton > t_lo && t_newton < t_hi {
            t_newton
        } else {
            0.5 * (t_lo + t_hi)
        };
    }
    Err(fail())
}

/// Jump sequence J_j = N^{-1}(xi_j) from given Poisson arrival times, truncated
/// at the first index l with J_{l+1} / sum_{j<=l} J_j < epsilon. Returns the
/// retained jumps and the discarded head J_{l+1}.
pub fn jumps_from_arrival_times(
    tt: &TiltedTail,
    mut next_arrival: impl FnMut() -> f64,
    epsilon: f64,
    cap: usize,
) -> Result<(Vec<f64>, f64)> {
    debug_assert!(epsilon > 0.0);
    let mut jumps: Vec<f64> = Vec::new();
    let mut total = 0.0;
    loop {
        let xi = next_arrival();
        let j = invert_tail_mass(tt, xi, jumps.last().copied())?;
        if !jumps.is_empty() && j / total < epsilon {
            return Ok((jumps, j));
        }
        total += j;
        jumps.push(j);
        if jumps.len() > cap {
            return Err(Error::TruncationCap { cap, epsilon });
        }
    }
}

/// Ferguson-Klass simulation of the tilted CRM: jumps from a unit-rate Poisson
/// process through N^{-1}, locations i.i.d. from the base sampler.
pub fn sample_atom_series<L, R: Rng + ?Sized>(
    tt: &TiltedTail,
    mut base_sampler: impl FnMut(&mut R) -> L,
    epsilon: f64,
    cap: usize,
    rng: &mut R,
) -> Result<AtomSeries<L>> {
    let mut arrival = 0.0f64;
    let (jumps, discarded_head) = jumps_from_arrival_times(
        tt,
        || {
            let e: f64 = Exp1.sample(rng_hack(rng));
            arrival += e;
            arrival
        },
        epsilon,
        cap,
    )?;
    let locations = (0..jumps.len()).map(|_| base_sampler(rng)).collect();
    Ok(AtomSeries { jumps, locations, truncation_epsilon: epsilon, discarded_head })
}

// Reborrow helper so the arrival closure and the location sampler can share
// the single &mut R sequentially.
fn rng_hack<R: Rng + ?Sized>(rng: &mut R) -> &mut R {
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn stable_half() -> TiltedTail {
        TiltedTail::new(NggParams::new(1.0, 0.0, 0.5).unwrap(), 0.0).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(NggParams::new(1.0, 0.0, 0.0).is_err());
        assert!(NggParams::new(0.0, 1.0, 0.0).is_err());
        assert!(NggParams::new(1.0, 1.0, 1.0).is_err());
        assert!(NggParams::new(1.0, 1.0, 0.0).is_ok());
        assert!(TiltedTail::new(NggParams::dirichlet(1.0).unwrap(), 0.0).is_ok());
    }

    #[test]
    fn laplace_exponent_values() {
        let tt = TiltedTail::new(NggParams::new(1.0, 1.0, 0.5).unwrap(), 0.0).unwrap();
        assert_eq!(laplace_exponent(&tt, 0.0), 0.0);
        let expect = 2.0 * (2.0f64.sqrt() - 1.0);
        assert!((laplace_exponent(&tt, 1.0) - expect).abs() < 1e-12);
        let d = TiltedTail::new(NggParams::new(1.0, 1.0, 0.0).unwrap(), 0.0).unwrap();
        assert!((laplace_exponent(&d, 1.0) - 2.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn laplace_exponent_gamma_to_zero_limit() {
        let d = TiltedTail::new(NggParams::new(1.3, 0.7, 0.0).unwrap(), 0.0).unwrap();
        let near = TiltedTail::new(NggParams::new(1.3, 0.7, 1e-8).unwrap(), 0.0).unwrap();
        for &u in &[0.2, 1.0, 5.0] {
            let exact = laplace_exponent(&d, u);
            let lim = laplace_exponent(&near, u);
            assert!((exact - lim).abs() / exact < 1e-5, "u={u}");
        }
    }

    #[test]
    fn tau_moment_values() {
        let p = NggParams::new(1.0, 0.0, 0.5).unwrap();
        assert!((tau_moment(&p, 1, 1.0) - 1.0).abs() < 1e-12);
        let p = NggParams::new(1.0, 1.0, 0.5).unwrap();
        // Gamma(1.5)/Gamma(0.5) * 2^{-1.5} = 0.5 * 2^{-1.5}
        assert!((tau_moment(&p, 2, 1.0) - 0.5 * 2.0f64.powf(-1.5)).abs() < 1e-12);
        let p = NggParams::new(1.0, 1.0, 0.0).unwrap();
        // Gamma(3) * 2^{-3} = 0.25
        assert!((tau_moment(&p, 3, 1.0) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn tau_moment_quadrature_oracle() {
        let p = NggParams::new(1.0, 1.0, 0.0).unwrap();
        let q = adaptive_simpson(&|v: f64| v.powi(3) * (-v).exp() * (-v).exp() / v, 1e-12, 80.0, 1e-12);
        assert!((tau_moment(&p, 3, 1.0) - q).abs() < 1e-9);
    }

    #[test]
    fn tau_moment_gamma_to_zero_limit() {
        let d = NggParams::new(1.0, 0.9, 0.0).unwrap();
        let near = NggParams::new(1.0, 0.9, 1e-8).unwrap();
        for n in [1u64, 2, 5] {
            for &u in &[0.3, 2.0] {
                let exact = tau_moment(&d, n, u);
                let lim = tau_moment(&near, n, u);
                assert!((exact - lim).abs() / exact < 1e-5);
            }
        }
    }

    #[test]
    fn tail_mass_stable_closed_form() {
        let tt = stable_half();
        let v = 4.0 / std::f64::consts::PI;
        assert!((tail_mass(&tt, v).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tail_mass_dirichlet_e1() {
        let tt = TiltedTail::new(NggParams::new(2.0, 1.0, 0.0).unwrap(), 0.0).unwrap();
        let got = tail_mass(&tt, 1.0).unwrap();
        assert!((got - 0.438_767_868_791_040_6).abs() < 1e-9);
        let oracle = tail_mass_quadrature(&tt, 1.0).unwrap();
        assert!((got - oracle).abs() / oracle < 1e-8);
    }

    #[test]
    fn tail_mass_vanishes_at_infinity() {
        let tt = TiltedTail::new(NggParams::new(1.0, 0.5, 0.4).unwrap(), 0.0).unwrap();
        assert!(tail_mass(&tt, 1e6).unwrap() < 1e-100);
    }

    #[test]
    fn tail_mass_divergent_error() {
        let p = NggParams::new(1.0, 0.0, 0.5).unwrap();
        // force gamma to 0 with zero rate via the raw struct
        let bad = TiltedTail { params: NggParams { gamma: 0.0, ..p }, tilt: 0.0 };
        assert!(matches!(tail_mass(&bad, 1.0), Err(Error::DivergentTail)));
    }

    #[test]
    fn tail_mass_matches_quadrature_across_params() {
        for &(a, kappa, gamma, tilt) in &[
            (1.0, 1.0, 0.0, 0.0),
            (2.0, 0.3, 0.0, 1.2),
            (1.0, 1.0, 0.5, 0.0),
            (1.0, 0.015, 0.5, 2.0),
            (0.7, 0.0, 0.25, 1.0),
            (1.5, 2.0, 0.75, 0.5),
        ] {
            let tt = TiltedTail::new(NggParams::new(a, kappa, gamma).unwrap(), tilt).unwrap();
            for &v in &[0.01, 0.1, 1.0, 5.0] {
                let fast = tail_mass(&tt, v).unwrap();
                let quad = tail_mass_quadrature(&tt, v).unwrap();
                assert!(
                    (fast - quad).abs() / quad < 1e-8,
                    "a={a} k={kappa} g={gamma} u={tilt} v={v}: {fast} vs {quad}"
                );
            }
        }
    }

    #[test]
    fn inversion_stable_closed_form() {
        let tt = stable_half();
        let j1 = invert_tail_mass(&tt, 1.0, None).unwrap();
        assert!((j1 - 4.0 / std::f64::consts::PI).abs() < 1e-7);
        let j2 = invert_tail_mass(&tt, 2.0, None).unwrap();
        assert!((j2 - 1.0 / std::f64::consts::PI).abs() < 1e-7);
    }

    #[test]
    fn inversion_round_trip_six_decades() {
        for &(a, kappa, gamma, tilt) in
            &[(1.0, 1.0, 0.0, 0.0), (1.0, 0.015, 0.5, 1.0), (3.6, 1.0, 0.0, 2.0), (1.0, 0.0, 0.396, 0.5)]
        {
            let tt = TiltedTail::new(NggParams::new(a, kappa, gamma).unwrap(), tilt).unwrap();
            // for gamma = 0 the jump solves E1(b v) = xi/a, i.e. v ~
            // e^{-xi/a}/b, which leaves f64 range well before xi = 1e3
            let xi_max = if gamma == 0.0 { 1e2 } else { 1e3 };
            let mut xi = 1e-3;
            while xi <= xi_max {
                let j = invert_tail_mass(&tt, xi, None).unwrap();
                let back = tail_mass(&tt, j).unwrap();
                assert!((back - xi).abs() / xi <= 1e-9, "xi={xi}: N(J)={back}");
                xi *= 10.0;
            }
        }
    }

    #[test]
    fn series_from_injected_arrivals() {
        let tt = stable_half();
        let mut k = 0.0;
        // stable-half jumps decay as l^{-2}, so the 1e-4 ratio rule stops the
        // series after ~100 terms, inside the 1000-atom cap
        let (jumps, _) = jumps_from_arrival_times(
            &tt,
            || {
                k += 1.0;
                k
            },
            1e-4,
            1000,
        )
        .unwrap();
        let pi = std::f64::consts::PI;
        assert!((jumps[0] - 4.0 / pi).abs() < 1e-7);
        assert!((jumps[1] - 1.0 / pi).abs() < 1e-7);
        assert!((jumps[2] - 4.0 / (9.0 * pi)).abs() < 1e-7);
    }

    #[test]
    fn series_truncation_decision() {
        // xi = (1, 2): J2/J1 = 0.25 < 0.5 so only J1 is retained
        let tt = stable_half();
        let mut k = 0.0;
        let (jumps, discarded) = jumps_from_arrival_times(
            &tt,
            || {
                k += 1.0;
                k
            },
            0.5,
            1000,
        )
        .unwrap();
        assert_eq!(jumps.len(), 1);
        assert!((jumps[0] - 4.0 / std::f64::consts::PI).abs() < 1e-7);
        assert!((discarded - 1.0 / std::f64::consts::PI).abs() < 1e-7);
    }

    #[test]
    fn sampled_series_invariants() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let tt = TiltedTail::new(NggParams::new(1.0, 0.015, 0.5).unwrap(), 2.0).unwrap();
        for _ in 0..50 {
            let s: AtomSeries<f64> =
                sample_atom_series(&tt, |r: &mut ChaCha12Rng| r.gen::<f64>(), 1e-4, SERIES_HARD_CAP, &mut rng)
                    .unwrap();
            assert!(!s.is_empty());
            for w in s.jumps.windows(2) {
                assert!(w[0] > w[1], "jumps must strictly decrease");
            }
            assert!(s.discarded_head / s.total_mass() < 1e-4);
            assert_eq!(s.jumps.len(), s.locations.len());
        }
    }

    #[test]
    fn series_length_grows_as_epsilon_shrinks() {
        let p = NggParams::new(1.0, 0.0, 0.5).unwrap();
        let mean_len = |epsilon: f64| {
            // same seed for both tolerances: identical arrival sequences,
            // only the stopping rule differs
            let mut rng = ChaCha12Rng::seed_from_u64(1);
            let tt = TiltedTail::new(p, 1.0).unwrap();
            let mut total = 0usize;
            for _ in 0..100 {
                let s: AtomSeries<()> =
                    sample_atom_series(&tt, |_: &mut ChaCha12Rng| (), epsilon, SERIES_HARD_CAP, &mut rng)
                        .unwrap();
                total += s.len();
            }
            total as f64 / 100.0
        };
        assert!(mean_len(1e-5) > mean_len(1e-3));
    }

    #[test]
    fn series_cap_error() {
        let tt = stable_half();
        let mut k = 0.0;
        let res = jumps_from_arrival_times(
            &tt,
            || {
                k += 1e-9;
                k
            },
            1e-12,
            50,
        );
        assert!(matches!(res, Err(Error::TruncationCap { .. })));
    }

    proptest! {
        #[test]
        fn tail_mass_monotone(v1 in 1e-3f64..10.0, dv in 1e-3f64..10.0,
                              gamma in 0.0f64..0.9, tilt in 0.0f64..3.0) {
            let params = NggParams::new(1.0, 0.5, gamma).unwrap();
            let tt = TiltedTail::new(params, tilt).unwrap();
            let n1 = tail_mass(&tt, v1).unwrap();
            let n2 = tail_mass(&tt, v1 + dv).unwrap();
            prop_assert!(n1 > n2);
        }

        #[test]
        fn laplace_exponent_nondecreasing(u1 in 0.0f64..10.0, du in 0.0f64..10.0,
                                          gamma in 0.0f64..0.9) {
            let params = NggParams::new(1.0, 0.5, gamma).unwrap();
            let tt = TiltedTail::new(params, 0.0).unwrap();
            prop_assert!(laplace_exponent(&tt, u1 + du) >= laplace_exponent(&tt, u1));
        }
    }
}
