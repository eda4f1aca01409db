//! The error functional `E`, the improvement condition `N`, the feasibility
//! and improvement intervals, and the critical budgets `nu_c`, `nu_T`, `nu*`.

use std::io::Write;

use serde::Serialize;

use crate::cubic::{invariant_interval_at, Interval};
use crate::dynamics::level_coefficients;
use crate::error::{Error, Result};
use crate::params::{strictly_positive, DerivedConstants, TheoryParams};
use crate::root::{bisect, search_from_zero, Root, BISECTION_TOL};

/// Required distance of the weighted geometric ratio from 1.
pub const GEOMETRIC_GUARD: f64 = 1e-10;

/// Largest budget parameter probed by the bracket expansion.
const NU_CAP: f64 = 16.0;

/// Largest initialization probed by the threshold search.
const X_CAP: f64 = 1e15;

/// Arguments `(beta', beta, nu, x0)` of `E` and `N`. An infinite `x0` gives
/// the `x0 -> infinity` limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorFunctionalInputs {
    pub beta_lo: f64,
    pub beta_hi: f64,
    pub nu: f64,
    pub x0: f64,
}

impl ErrorFunctionalInputs {
    pub fn new(beta_lo: f64, beta_hi: f64, nu: f64, x0: f64) -> Self {
        ErrorFunctionalInputs { beta_lo, beta_hi, nu, x0 }
    }
}

/// The pieces of `E = T1 - a_L (T3 + T2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorTerms {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    /// Ratio of the finite geometric sum in `T1`.
    pub q: f64,
    /// Ratio of the infinite series in `T3`, before the `e^{-beta/L}` weight.
    pub rho: f64,
    pub a0: f64,
    pub a_l: f64,
}

impl ErrorTerms {
    pub fn e(&self) -> f64 {
        self.t1 - self.a_l * (self.t3 + self.t2)
    }
}

fn q_ratio(nu: f64, p: &TheoryParams, d: &DerivedConstants) -> Result<f64> {
    let rad = 1.0 - p.gamma - d.c_delta_prime * nu;
    if !strictly_positive(rad) {
        return Err(Error::domain("1 - gamma - c_delta' nu <= 0"));
    }
    Ok(d.c_delta * nu / (2.0 * p.c * rad.powf(1.5)))
}

/// `T1(nu) = c_delta nu / (c sqrt(1 - gamma - c_delta' nu)) * sum_{j<L-1} q^j`.
pub fn t1(nu: f64, p: &TheoryParams, d: &DerivedConstants) -> Result<f64> {
    let q = q_ratio(nu, p, d)?;
    let lead = d.c_delta * nu / (p.c * (1.0 - p.gamma - d.c_delta_prime * nu).sqrt());
    Ok(lead * geometric_partial_sum(q, p.levels - 1))
}

/// `sum_{j=0}^{k-1} q^j`.
pub fn geometric_partial_sum(q: f64, k: usize) -> f64 {
    let mut term = 1.0;
    let mut sum = 0.0;
    for _ in 0..k {
        sum += term;
        term *= q;
    }
    sum
}

/// `r(nu, x0) = c_delta nu / (c sqrt(a0 x0 - c_delta' nu))`, zero at `x0 = inf`.
fn r_term(a0: f64, nu: f64, x0: f64, p: &TheoryParams, d: &DerivedConstants) -> Result<f64> {
    if x0.is_infinite() {
        return Ok(0.0);
    }
    let rad = a0 * x0 - d.c_delta_prime * nu;
    if !strictly_positive(rad) {
        return Err(Error::domain("a0 x0 - c_delta' nu <= 0"));
    }
    Ok(d.c_delta * nu / (p.c * rad.sqrt()))
}

/// `(rho, rho e^{-beta/L})` for the series in `T3`.
fn rho_terms(inp: &ErrorFunctionalInputs, a0: f64, p: &TheoryParams, d: &DerivedConstants) -> Result<(f64, f64, f64)> {
    let r = r_term(a0, inp.nu, inp.x0, p, d)?;
    let inner = 2f64.powf(-inp.beta_hi) * (1.0 - p.gamma - r) - d.c_delta_prime * inp.nu;
    if !strictly_positive(inner) {
        return Err(Error::domain("2^-beta (1 - gamma - r) - c_delta' nu <= 0"));
    }
    let rho = d.c_delta * inp.nu / (2.0 * p.c * inner.powf(1.5));
    Ok((r, rho, rho * (-inp.beta_hi / p.levels as f64).exp()))
}

/// The `e^{-beta/L}`-weighted ratio of the series in `T3`, or `None` when one
/// of its radicands is not positive.
pub fn weighted_ratio(
    beta_lo: f64,
    beta_hi: f64,
    nu: f64,
    x0: f64,
    p: &TheoryParams,
    d: &DerivedConstants,
) -> Option<f64> {
    let (a0, _) = level_coefficients(beta_lo, p.levels);
    let inp = ErrorFunctionalInputs::new(beta_lo, beta_hi, nu, x0);
    rho_terms(&inp, a0, p, d).ok().map(|(_, _, w)| w)
}

pub fn error_terms(inp: &ErrorFunctionalInputs, p: &TheoryParams, d: &DerivedConstants) -> Result<ErrorTerms> {
    let nu = inp.nu;
    let (a0, a_l) = level_coefficients(inp.beta_lo, p.levels);
    if !strictly_positive(1.0 - p.gamma - d.c_delta_prime * nu) {
        return Err(Error::domain("1 - gamma - c_delta' nu <= 0"));
    }
    let rad2 = 2f64.powf(-inp.beta_hi) * (1.0 - p.gamma) - d.c_delta_prime * nu;
    if !strictly_positive(rad2) {
        return Err(Error::domain("2^-beta (1 - gamma) - c_delta' nu <= 0"));
    }
    let (r, rho, weighted) = rho_terms(inp, a0, p, d)?;
    if weighted >= 1.0 - GEOMETRIC_GUARD {
        return Err(Error::domain(format!("weighted geometric ratio {weighted} too close to 1")));
    }
    let q = q_ratio(nu, p, d)?;
    if q >= 1.0 {
        return Err(Error::domain(format!("geometric ratio q = {q} >= 1")));
    }
    let t1 = t1(nu, p, d)?;
    let t3 = d.c_delta * nu / (p.c * rad2.sqrt()) / (1.0 - weighted);
    let t2 = rho.powi(p.levels as i32 - 1) * (p.levels as f64).powf(-inp.beta_hi) * r;
    Ok(ErrorTerms { t1, t2, t3, q, rho, a0, a_l })
}

pub fn error_functional_e(inp: &ErrorFunctionalInputs, p: &TheoryParams, d: &DerivedConstants) -> Result<f64> {
    error_terms(inp, p, d).map(|t| t.e())
}

/// `N = -E - (a_L - 1)(1 - gamma) / 2`; negative iff the curriculum's final
/// lower bound beats the baseline's.
pub fn improvement_condition_n(inp: &ErrorFunctionalInputs, p: &TheoryParams, d: &DerivedConstants) -> Result<f64> {
    let terms = error_terms(inp, p, d)?;
    Ok(-terms.e() - 0.5 * (terms.a_l - 1.0) * (1.0 - p.gamma))
}

fn improves(inp: ErrorFunctionalInputs, p: &TheoryParams, d: &DerivedConstants) -> bool {
    matches!(improvement_condition_n(&inp, p, d), Ok(v) if v < 0.0)
}

/// `I_M = (x_-(2^-beta, nu), (2^-beta / a0) x_+(2^-beta, nu))` at the
/// parameters stored in `p` and `d`.
pub fn feasibility_interval(p: &TheoryParams, d: &DerivedConstants) -> Interval {
    feasibility_interval_at(p.beta_lo, p.beta_hi, d.nu, p, d)
}

pub fn feasibility_interval_at(
    beta_lo: f64,
    beta_hi: f64,
    nu: f64,
    p: &TheoryParams,
    d: &DerivedConstants,
) -> Interval {
    let scale = 2f64.powf(-beta_hi);
    let inner = invariant_interval_at(scale, nu, p, d);
    if !inner.valid {
        return inner;
    }
    let (a0, _) = level_coefficients(beta_lo, p.levels);
    Interval::new(inner.lo, scale / a0 * inner.hi)
}

/// Two-sided bound on `|I_M(beta', beta, 0)| - |I_M(beta', beta, nu)|`.
pub fn feasibility_shrinkage_bounds(beta_hi: f64, nu: f64, p: &TheoryParams, d: &DerivedConstants) -> (f64, f64) {
    let lower = 2f64.powf(beta_hi) * d.c_delta_prime * nu;
    let rad = 2f64.powf(-beta_hi) * (1.0 - p.gamma) - d.c_delta_prime * nu;
    let upper = lower + 1.5 * 3f64.sqrt() * d.c_delta * nu / (p.c * rad.sqrt());
    (lower, upper)
}

/// Location of the improvement threshold `x(nu)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Threshold {
    pub x: f64,
    /// The boundary is a domain breakdown of `N` rather than a sign change.
    pub domain_limited: bool,
}

/// The unique `x0` with `N(beta', beta, nu, x0) = 0`.
///
/// The search runs over `(0, inf)`: a threshold at or above `1 - gamma`
/// means `I_N` is empty.
pub fn improvement_threshold(
    beta_lo: f64,
    beta_hi: f64,
    nu: f64,
    p: &TheoryParams,
    d: &DerivedConstants,
) -> Result<Threshold> {
    if !(nu >= 0.0) {
        return Err(Error::invalid("nu", format!("must be >= 0, got {nu}")));
    }
    if nu == 0.0 {
        return Ok(Threshold { x: 0.0, domain_limited: false });
    }
    let at = |x: f64| ErrorFunctionalInputs::new(beta_lo, beta_hi, nu, x);
    if !improves(at(f64::INFINITY), p, d) {
        return Err(Error::NoRoot(format!("nu = {nu} is at or beyond nu_c: N_inf(nu) >= 0")));
    }
    let mut hi = 1.0 - p.gamma;
    while !improves(at(hi), p, d) {
        hi *= 2.0;
        if hi > X_CAP {
            return Err(Error::NoRoot(format!("no sign change of N below x0 = {X_CAP:e}")));
        }
    }
    let (lo, hi) = bisect(0.0, hi, BISECTION_TOL, |x| improves(at(x), p, d));
    let domain_limited = lo > 0.0 && improvement_condition_n(&at(lo), p, d).is_err();
    Ok(Threshold { x: 0.5 * (lo + hi), domain_limited })
}

pub fn improvement_threshold_x(
    beta_lo: f64,
    beta_hi: f64,
    nu: f64,
    p: &TheoryParams,
    d: &DerivedConstants,
) -> Result<f64> {
    improvement_threshold(beta_lo, beta_hi, nu, p, d).map(|t| t.x)
}

/// `I_N = (x(nu), 1 - gamma)`; invalid when `nu >= nu_c` or empty.
pub fn improvement_interval(
    beta_lo: f64,
    beta_hi: f64,
    nu: f64,
    p: &TheoryParams,
    d: &DerivedConstants,
) -> Interval {
    match improvement_threshold_x(beta_lo, beta_hi, nu, p, d) {
        Ok(x) => Interval::new(x, 1.0 - p.gamma),
        Err(e) => Interval::invalid(e.to_string()),
    }
}

/// Root of `N_inf(nu) = lim_{x0 -> inf} N`.
pub fn critical_nu_c(beta_lo: f64, beta_hi: f64, p: &TheoryParams, d: &DerivedConstants) -> Result<Root> {
    let at = |nu: f64| ErrorFunctionalInputs::new(beta_lo, beta_hi, nu, f64::INFINITY);
    let (lo, hi) = search_from_zero(NU_CAP, BISECTION_TOL, |nu| !improves(at(nu), p, d))
        .ok_or_else(|| Error::NoRoot("N_inf stays negative over the probed range".into()))?;
    let domain_limited = improvement_condition_n(&at(hi), p, d).is_err();
    Ok(Root { value: 0.5 * (lo + hi), domain_limited })
}

/// Solution of `T1(nu) = (1 - gamma) / 2`.
pub fn critical_nu_t(p: &TheoryParams, d: &DerivedConstants) -> Result<f64> {
    let target = 0.5 * (1.0 - p.gamma);
    let past = |nu: f64| t1(nu, p, d).map_or(true, |v| v >= target);
    let (lo, hi) = search_from_zero(NU_CAP, BISECTION_TOL, past)
        .ok_or_else(|| Error::NoRoot("T1 stays below (1 - gamma)/2".into()))?;
    if t1(hi, p, d).is_err() {
        return Err(Error::NoRoot(format!(
            "T1 breaks down at nu = {hi} before reaching (1 - gamma)/2"
        )));
    }
    Ok(0.5 * (lo + hi))
}

fn check_x0(x0: f64, p: &TheoryParams) -> Result<()> {
    if x0 > 0.0 && x0 < 1.0 - p.gamma {
        Ok(())
    } else {
        Err(Error::invalid("x0", format!("must lie in (0, 1 - gamma), got {x0}")))
    }
}

/// `nu* = sup { nu > 0 : N(beta', beta, nu, x0) < 0 }`.
///
/// `domain_limited` is set when the supremum is a domain breakdown of `N`
/// rather than a sign change.
pub fn nu_star(beta_lo: f64, beta_hi: f64, x0: f64, p: &TheoryParams, d: &DerivedConstants) -> Result<Root> {
    check_x0(x0, p)?;
    let at = |nu: f64| ErrorFunctionalInputs::new(beta_lo, beta_hi, nu, x0);
    let (lo, hi) = search_from_zero(NU_CAP, BISECTION_TOL, |nu| !improves(at(nu), p, d))
        .ok_or_else(|| Error::NoRoot("N stays negative over the probed range".into()))?;
    let domain_limited = improvement_condition_n(&at(hi), p, d).is_err();
    Ok(Root { value: 0.5 * (lo + hi), domain_limited })
}

/// `nu*` computed through the threshold curve: the `nu` with `x(nu) = x0`.
pub fn nu_star_nested(beta_lo: f64, beta_hi: f64, x0: f64, p: &TheoryParams, d: &DerivedConstants) -> Result<f64> {
    check_x0(x0, p)?;
    let nu_c = critical_nu_c(beta_lo, beta_hi, p, d)?.value;
    let past = |nu: f64| improvement_threshold_x(beta_lo, beta_hi, nu, p, d).map_or(true, |x| x >= x0);
    let (lo, hi) = bisect(0.0, nu_c, BISECTION_TOL, past);
    Ok(0.5 * (lo + hi))
}

/// Leading small-`beta'` slope of `nu*(beta', beta' + Delta)`.
pub fn small_beta_coefficient(delta_gap: f64, p: &TheoryParams, d: &DerivedConstants) -> f64 {
    let l = p.levels as f64;
    let log_factor = l.ln() - (1..=p.levels).map(|i| (i as f64).ln()).sum::<f64>() / l;
    p.c * (1.0 - p.gamma).powf(1.5) * log_factor / (2.0 * d.c_delta * (2f64.powf(delta_gap / 2.0) - 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfilePoint {
    pub beta_lo: f64,
    pub nu_star: f64,
    pub domain_limited: bool,
}

/// `nu*(beta', beta' + Delta)` along a grid of `beta'`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NuStarProfile {
    pub delta_gap: f64,
    pub points: Vec<ProfilePoint>,
    pub argmax: usize,
    /// Number of strict interior local maxima.
    pub local_maxima: usize,
    /// Least-squares slope of `ln nu*` against `beta'` over the upper third
    /// of the grid.
    pub tail_slope: f64,
}

pub fn nu_star_profile(
    delta_gap: f64,
    beta_grid: &[f64],
    x0: f64,
    p: &TheoryParams,
    d: &DerivedConstants,
) -> Result<NuStarProfile> {
    if !(delta_gap > 0.0) {
        return Err(Error::invalid("delta_gap", format!("must be > 0, got {delta_gap}")));
    }
    if beta_grid.len() < 3 || beta_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("beta_grid", "needs >= 3 strictly increasing points"));
    }
    let points = beta_grid
        .iter()
        .map(|&b| {
            nu_star(b, b + delta_gap, x0, p, d).map(|r| ProfilePoint {
                beta_lo: b,
                nu_star: r.value,
                domain_limited: r.domain_limited,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = points.iter().map(|pt| pt.nu_star).collect();
    let argmax = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let local_maxima = values.windows(3).filter(|w| w[1] > w[0] && w[1] > w[2]).count();
    let tail = &points[points.len() - points.len() / 3..];
    let tail_slope = least_squares_slope(
        &tail.iter().map(|pt| pt.beta_lo).collect::<Vec<_>>(),
        &tail.iter().map(|pt| pt.nu_star.ln()).collect::<Vec<_>>(),
    );
    Ok(NuStarProfile { delta_gap, points, argmax, local_maxima, tail_slope })
}

pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Weighted moments of `X = log(L / i)`, `P(i) ~ i^{-beta'}`.
fn log_support(levels: usize, beta_lo: f64) -> Vec<(f64, f64)> {
    let l = levels as f64;
    let raw: Vec<f64> = (1..=levels).map(|i| (i as f64).powf(-beta_lo)).collect();
    let total: f64 = raw.iter().sum();
    (1..=levels).map(|i| ((l / i as f64).ln(), raw[i - 1] / total)).collect()
}

/// `h(beta') = a_L (a_L - 1) / a_L'`, with `a_L' = a_L E[X]`.
pub fn al_ratio_h(beta_lo: f64, levels: usize) -> f64 {
    let l = levels as f64;
    // a_L - 1 = (1/L) sum_i expm1(beta' log(L/i))
    let al_minus_one =
        (1..=levels).map(|i| (beta_lo * (l / i as f64).ln()).exp_m1()).sum::<f64>() / l;
    let mean: f64 = log_support(levels, beta_lo).iter().map(|(x, w)| x * w).sum();
    al_minus_one / mean
}

/// `(E[X - t | X > t], E[X | X > 0])` by exact summation.
pub fn conditional_mean_check(levels: usize, beta_lo: f64, t: f64) -> Result<(f64, f64)> {
    let support = log_support(levels, beta_lo);
    let cond = |thr: f64, shift: f64| -> Result<f64> {
        let (num, den) = support
            .iter()
            .filter(|(x, _)| *x > thr)
            .fold((0.0, 0.0), |(n, d), (x, w)| (n + (x - shift) * w, d + w));
        if den == 0.0 {
            Err(Error::EmptyConditioning(format!("no support point exceeds {thr}")))
        } else {
            Ok(num / den)
        }
    };
    Ok((cond(t, t)?, cond(0.0, 0.0)?))
}

/// A sampled threshold curve.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdCurve {
    pub samples: Vec<(f64, Result<Threshold>)>,
    pub nu_c: Root,
}

pub fn threshold_curve(
    beta_lo: f64,
    beta_hi: f64,
    nus: &[f64],
    p: &TheoryParams,
    d: &DerivedConstants,
) -> Result<ThresholdCurve> {
    let nu_c = critical_nu_c(beta_lo, beta_hi, p, d)?;
    let samples = nus
        .iter()
        .map(|&nu| (nu, improvement_threshold(beta_lo, beta_hi, nu, p, d)))
        .collect();
    Ok(ThresholdCurve { samples, nu_c })
}

impl ThresholdCurve {
    /// CSV with columns `nu, x_threshold, domain_flag`; points without a
    /// threshold are written as `NaN` with the flag set.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["nu", "x_threshold", "domain_flag"])?;
        for (nu, t) in &self.samples {
            let (x, flag) = match t {
                Ok(t) => (t.x, t.domain_limited),
                Err(_) => (f64::NAN, true),
            };
            w.write_record([nu.to_string(), x.to_string(), flag.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl NuStarProfile {
    /// CSV with columns `beta_lo, nu_star, is_argmax`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["beta_lo", "nu_star", "is_argmax"])?;
        for (i, pt) in self.points.iter().enumerate() {
            w.write_record([pt.beta_lo.to_string(), pt.nu_star.to_string(), (i == self.argmax).to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::derive_constants;
    use proptest::prelude::*;

    fn defaults() -> (TheoryParams, DerivedConstants) {
        let p = TheoryParams::default();
        (p, derive_constants(&p).unwrap())
    }

    #[test]
    fn feasibility_shrinkage_within_bounds() {
        let (p, d) = defaults();
        for bh in [0.2, 0.4, 1.0] {
            let full = feasibility_interval_at(0.1, bh, 0.0, &p, &d);
            for nu in [1e-4, 1e-3, 5e-3] {
                let iv = feasibility_interval_at(0.1, bh, nu, &p, &d);
                assert!(iv.valid);
                let shrink = full.len() - iv.len();
                let (lo, hi) = feasibility_shrinkage_bounds(bh, nu, &p, &d);
                assert!(lo <= shrink && shrink <= hi, "beta {bh}, nu {nu}: {lo} <= {shrink} <= {hi}");
            }
        }
    }

    #[test]
    fn zero_budget_values() {
        let (p, d) = defaults();
        for (bl, bh, x0) in [(0.1, 0.4, 0.3), (0.5, 2.0, 0.9), (1.0, 1.1, 1e-3)] {
            let inp = ErrorFunctionalInputs::new(bl, bh, 0.0, x0);
            assert_eq!(error_functional_e(&inp, &p, &d).unwrap(), 0.0);
            let (_, a_l) = level_coefficients(bl, p.levels);
            let n = improvement_condition_n(&inp, &p, &d).unwrap();
            assert_eq!(n, -0.5 * (a_l - 1.0) * (1.0 - p.gamma));
            assert!(n < 0.0);
        }
        let inp = ErrorFunctionalInputs::new(0.0, 0.4, 0.0, 0.5);
        assert_eq!(improvement_condition_n(&inp, &p, &d).unwrap(), 0.0);
    }

    #[test]
    fn geometric_closed_form_matches_sum() {
        for q in [0.0f64, 1e-6, 0.1, 0.5, 0.93] {
            for k in 1..12 {
                let closed = if q == 0.0 { 1.0 } else { (1.0 - q.powi(k as i32)) / (1.0 - q) };
                let sum = geometric_partial_sum(q, k);
                assert!((closed / sum - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn domain_errors_name_the_condition() {
        let (p, d) = defaults();
        let e = error_functional_e(&ErrorFunctionalInputs::new(0.1, 0.4, 0.02, 1e-4), &p, &d);
        assert!(matches!(e, Err(Error::Domain(ref m)) if m.contains("a0 x0")));
        let e = error_functional_e(&ErrorFunctionalInputs::new(0.1, 8.0, 0.02, 0.5), &p, &d);
        assert!(matches!(e, Err(Error::Domain(ref m)) if m.contains("2^-beta (1 - gamma)")));
    }

    #[test]
    fn zero_budget_feasibility_interval() {
        let (p, d) = defaults();
        let i = feasibility_interval_at(0.1, 0.4, 0.0, &p, &d);
        let (a0, _) = level_coefficients(0.1, p.levels);
        assert_eq!(i.lo, 0.0);
        assert!((i.hi - 2f64.powf(-0.4) * (1.0 - p.gamma) / a0).abs() < 1e-15);
    }

    #[test]
    fn feasibility_length_decreases_in_nu() {
        let (p, d) = defaults();
        let lens: Vec<f64> = (0..30)
            .map(|k| feasibility_interval_at(0.1, 0.4, k as f64 * 1e-3, &p, &d).len())
            .collect();
        assert!(lens.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn nu_c_bracket_behaviour() {
        let (p, d) = defaults();
        let at_inf = |nu| ErrorFunctionalInputs::new(0.1, 0.4, nu, f64::INFINITY);
        assert!(improvement_condition_n(&at_inf(0.0), &p, &d).unwrap() < 0.0);
        let nu_c = critical_nu_c(0.1, 0.4, &p, &d).unwrap();
        assert!(!nu_c.domain_limited);
        assert!((nu_c.value - 0.023_275).abs() < 1e-5);
        assert!(improvement_condition_n(&at_inf(nu_c.value * 1.0001), &p, &d).unwrap() > 0.0);
        let nc2 = critical_nu_c(0.1, 0.8, &p, &d).unwrap();
        assert!(nc2.value < nu_c.value);
    }

    #[test]
    fn threshold_beyond_nu_c_is_no_root() {
        let (p, d) = defaults();
        let nu_c = critical_nu_c(0.1, 0.4, &p, &d).unwrap().value;
        assert!(matches!(improvement_threshold_x(0.1, 0.4, nu_c * 1.01, &p, &d), Err(Error::NoRoot(_))));
        assert!(!improvement_interval(0.1, 0.4, nu_c * 1.01, &p, &d).valid);
    }

    #[test]
    fn threshold_splits_improvement() {
        let (p, d) = defaults();
        for nu in [1e-4, 5e-3, 0.015] {
            let x = improvement_threshold_x(0.1, 0.4, nu, &p, &d).unwrap();
            let n = |x0| improvement_condition_n(&ErrorFunctionalInputs::new(0.1, 0.4, nu, x0), &p, &d);
            assert!(n(x * (1.0 + 1e-6)).unwrap() < 0.0);
            assert!(n(x * (1.0 - 1e-6)).map_or(true, |v| v >= 0.0));
        }
    }

    #[test]
    fn nu_t_exists_and_bounds_nu_star() {
        let (p, d) = defaults();
        let nu_t = critical_nu_t(&p, &d).unwrap();
        assert!((t1(nu_t, &p, &d).unwrap() - 0.49).abs() < 1e-9);
        assert_eq!(t1(0.0, &p, &d).unwrap(), 0.0);
        let ns = nu_star(0.3, 0.5, 0.49, &p, &d).unwrap();
        assert!(ns.value < nu_t);
    }

    #[test]
    fn nu_star_routes_agree() {
        let (p, d) = defaults();
        for (bl, bh) in [(0.1, 0.4), (0.5, 0.6), (2.0, 2.1)] {
            let direct = nu_star(bl, bh, 0.49, &p, &d).unwrap().value;
            let nested = nu_star_nested(bl, bh, 0.49, &p, &d).unwrap();
            assert!((direct - nested).abs() < 1e-9, "{direct} vs {nested}");
        }
        assert!(matches!(nu_star(0.1, 0.4, 0.0, &p, &d), Err(Error::InvalidParameter { name: "x0", .. })));
    }

    #[test]
    fn small_beta_log_factor() {
        let p = TheoryParams::default();
        let l = 5f64;
        let log_factor = (l / 120f64.powf(0.2)).ln();
        assert!((log_factor - 0.651_94).abs() < 1e-5);
        let d = derive_constants(&p).unwrap();
        let expected = p.c * 0.98f64.powf(1.5) * log_factor / (2.0 * d.c_delta * (2f64.powf(0.05) - 1.0));
        assert!((small_beta_coefficient(0.1, &p, &d) / expected - 1.0).abs() < 1e-12);
    }

    #[test]
    fn h_limits_and_monotonicity() {
        for levels in [2usize, 3, 5, 10] {
            assert!(al_ratio_h(1e-6, levels) < 1e-5);
            assert!(al_ratio_h(60.0, levels) > 1e10);
            let grid: Vec<f64> = (0..400).map(|k| 0.01 + k as f64 * 0.05).collect();
            let hs: Vec<f64> = grid.iter().map(|&b| al_ratio_h(b, levels)).collect();
            assert!(hs.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn h_uses_exact_derivative() {
        let (b, levels, eps) = (0.7, 5, 1e-6);
        let al = |b: f64| level_coefficients(b, levels).1;
        let deriv = (al(b + eps) - al(b - eps)) / (2.0 * eps);
        let numeric = al(b) * (al(b) - 1.0) / deriv;
        assert!((al_ratio_h(b, levels) / numeric - 1.0).abs() < 1e-7);
    }

    #[test]
    fn conditional_mean_cases() {
        let (lhs, rhs) = conditional_mean_check(6, 0.7, 0.0).unwrap();
        assert!((lhs - rhs).abs() < 1e-15);
        for t in [0.1, 0.3, 0.6] {
            let (lhs, rhs) = conditional_mean_check(2, 1.3, t).unwrap();
            assert!((lhs - (2f64.ln() - t)).abs() < 1e-15);
            assert!((rhs - 2f64.ln()).abs() < 1e-15);
        }
        assert!(matches!(conditional_mean_check(4, 1.0, 4f64.ln() + 1e-9), Err(Error::EmptyConditioning(_))));
    }

    #[test]
    fn csv_exports_have_headers() {
        let (p, d) = defaults();
        let curve = threshold_curve(0.1, 0.4, &[0.001, 0.01, 0.03], &p, &d).unwrap();
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("nu,x_threshold,domain_flag\n"));
        assert!(text.trim_end().ends_with("NaN,true"));
        let grid: Vec<f64> = (0..10).map(|k| 0.1 + 0.2 * k as f64).collect();
        let prof = nu_star_profile(0.1, &grid, 0.49, &p, &d).unwrap();
        let mut buf = Vec::new();
        prof.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("beta_lo,nu_star,is_argmax\n"));
        assert_eq!(text.matches(",true").count(), 1);
    }

    fn admissible() -> impl Strategy<Value = (f64, f64, f64, f64)> {
        (0.01f64..2.0, 0.01f64..1.0, 1e-4f64..0.02, 0.2f64..0.98)
            .prop_map(|(bl, gap, nu, x0)| (bl, bl + gap, nu, x0))
    }

    proptest! {
        #[test]
        fn e_sign_structure((bl, bh, nu, x0) in admissible()) {
            let (p, d) = defaults();
            let e = |bl, bh, nu, x0| error_functional_e(&ErrorFunctionalInputs::new(bl, bh, nu, x0), &p, &d);
            let h = 1e-6;
            if let (Ok(base), Ok(dnu), Ok(dx), Ok(dbeta)) =
                (e(bl, bh, nu, x0), e(bl, bh, nu + h, x0), e(bl, bh, nu, x0 + h), e(bl, bh + h, nu, x0))
            {
                prop_assert!(dnu < base);
                prop_assert!(dx > base);
                prop_assert!(dbeta < base);
            }
        }

        #[test]
        fn t3_dominates_t1((bl, bh, nu, x0) in admissible()) {
            let (p, d) = defaults();
            if let Ok(t) = error_terms(&ErrorFunctionalInputs::new(bl, bh, nu, x0), &p, &d) {
                prop_assert!(t.t3 > t.t1);
            }
        }

        #[test]
        fn n_increasing_in_nu((bl, bh, nu, x0) in admissible()) {
            let (p, d) = defaults();
            let n = |nu| improvement_condition_n(&ErrorFunctionalInputs::new(bl, bh, nu, x0), &p, &d);
            if let (Ok(a), Ok(b)) = (n(nu), n(nu + 1e-6)) {
                prop_assert!(b > a);
            }
        }

        #[test]
        fn threshold_characterizes_improvement(nu in 1e-4f64..0.02, x0 in 0.01f64..0.98) {
            let (p, d) = defaults();
            if let Ok(x) = improvement_threshold_x(0.1, 0.4, nu, &p, &d) {
                let improves = matches!(
                    improvement_condition_n(&ErrorFunctionalInputs::new(0.1, 0.4, nu, x0), &p, &d),
                    Ok(v) if v < 0.0
                );
                if (x0 - x).abs() > 1e-9 {
                    prop_assert_eq!(improves, x0 > x);
                    prop_assert_eq!(improves, improvement_interval(0.1, 0.4, nu, &p, &d).contains(x0));
                }
            }
        }

        #[test]
        fn conditional_mean_inequality(levels in 2usize..13, bl in 0.01f64..5.0, frac in 0.0f64..0.999) {
            let t = frac * (levels as f64).ln();
            let (lhs, rhs) = conditional_mean_check(levels, bl, t).unwrap();
            prop_assert!(lhs <= rhs + 1e-12);
        }
    }
}
