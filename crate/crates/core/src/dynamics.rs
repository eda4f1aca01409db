//! Lower-bound maps `F`, `H_t`, `G` and trajectory generation.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::{strictly_positive, DerivedConstants, TheoryParams};

/// Steps whose absolute change is below this are flagged as plateaus.
pub const PLATEAU_TOL: f64 = 1e-14;

/// Default iteration count for fixed-point studies.
pub const DEFAULT_STEPS: usize = 100;

/// The map `x -> 1 - gamma - c_delta nu / (c sqrt(a x - c_delta' nu))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MapSpec {
    pub a: f64,
    pub nu: f64,
    pub c: f64,
    pub gamma: f64,
    pub c_delta: f64,
    pub c_delta_prime: f64,
}

impl MapSpec {
    pub fn new(a: f64, nu: f64, p: &TheoryParams, d: &DerivedConstants) -> Self {
        MapSpec {
            a,
            nu,
            c: p.c,
            gamma: p.gamma,
            c_delta: d.c_delta,
            c_delta_prime: d.c_delta_prime,
        }
    }

    /// The baseline map `F` (`a = 1`) at the budget stored in `d`.
    pub fn baseline(p: &TheoryParams, d: &DerivedConstants) -> Self {
        Self::new(1.0, d.nu, p, d)
    }

    /// Left end of the natural domain.
    pub fn domain_lower(&self) -> f64 {
        self.c_delta_prime * self.nu / self.a
    }
}

pub fn eval_map(spec: &MapSpec, x: f64) -> Result<f64> {
    let radicand = spec.a * x - spec.c_delta_prime * spec.nu;
    if !strictly_positive(radicand) || !x.is_finite() {
        return Err(Error::domain(format!(
            "x = {x} outside the natural domain x > {}",
            spec.domain_lower()
        )));
    }
    Ok(1.0 - spec.gamma - spec.c_delta * spec.nu / (spec.c * radicand.sqrt()))
}

/// Change-of-measure coefficients of the curriculum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurriculumCoefficients {
    pub a0: f64,
    pub a_l: f64,
    /// `a_mid[t - 1] = (1 + 1/t)^{-beta}` for `t = 1..L-1`.
    pub a_mid: Vec<f64>,
}

impl CurriculumCoefficients {
    /// Coefficient of `H_t`, `t = 0..L-1`.
    pub fn a_t(&self, t: usize) -> f64 {
        if t == 0 {
            self.a0
        } else {
            self.a_mid[t - 1]
        }
    }
}

/// `(a0, a_L)` for a given `beta'`; `beta' = 0` gives `(1, 1)`.
pub fn level_coefficients(beta_lo: f64, levels: usize) -> (f64, f64) {
    let l = levels as f64;
    let s: f64 = (1..=levels).map(|i| (i as f64).powf(-beta_lo)).sum();
    (l / s, s / l.powf(1.0 - beta_lo))
}

pub fn mid_coefficients(beta_hi: f64, levels: usize) -> Vec<f64> {
    (1..levels).map(|t| (1.0 + 1.0 / t as f64).powf(-beta_hi)).collect()
}

pub fn curriculum_coefficients(p: &TheoryParams) -> Result<CurriculumCoefficients> {
    p.validate()?;
    Ok(coefficients_at(p.beta_lo, p.beta_hi, p.levels))
}

pub fn coefficients_at(beta_lo: f64, beta_hi: f64, levels: usize) -> CurriculumCoefficients {
    let (a0, a_l) = level_coefficients(beta_lo, levels);
    CurriculumCoefficients { a0, a_l, a_mid: mid_coefficients(beta_hi, levels) }
}

/// A sequence of lower-bound values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub values: Vec<f64>,
    /// Number of leading strict increases, counted from `monotone_from`.
    pub monotone_prefix: usize,
    /// Index of the first value that takes part in the monotonicity check.
    pub monotone_from: usize,
    pub stayed_in_domain: bool,
    /// Some checked step changed by less than [`PLATEAU_TOL`].
    pub plateau: bool,
    /// A final rescale pushed the value above 1.
    pub exceeds_one: bool,
}

impl Trajectory {
    fn from_values(values: Vec<f64>, monotone_from: usize, stayed_in_domain: bool, check_upto: usize) -> Self {
        let checked = &values[monotone_from.min(values.len())..check_upto.min(values.len())];
        let monotone_prefix = checked.windows(2).take_while(|w| w[1] > w[0]).count();
        let plateau = checked.windows(2).any(|w| (w[1] - w[0]).abs() < PLATEAU_TOL);
        Trajectory {
            values,
            monotone_prefix,
            monotone_from,
            stayed_in_domain,
            plateau,
            exceeds_one: false,
        }
    }

    pub fn last(&self) -> f64 {
        *self.values.last().expect("trajectory holds at least x0")
    }

    /// Every checked step is an increase or a plateau, and no evaluation left
    /// the domain.
    pub fn nondecreasing_with_plateaus(&self, checked_steps: usize) -> bool {
        if !self.stayed_in_domain {
            return false;
        }
        let end = (self.monotone_from + checked_steps + 1).min(self.values.len());
        self.values[self.monotone_from..end]
            .windows(2)
            .all(|w| w[1] > w[0] || (w[1] - w[0]).abs() < PLATEAU_TOL)
    }

    /// CSV with columns `step, value, monotone_so_far, in_domain`. A truncated
    /// trajectory ends with a `NaN` row marked out of domain.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "value", "monotone_so_far", "in_domain"])?;
        let mut monotone = true;
        for (k, v) in self.values.iter().enumerate() {
            if k > self.monotone_from {
                monotone &= *v > self.values[k - 1];
            }
            w.write_record([k.to_string(), v.to_string(), monotone.to_string(), "true".into()])?;
        }
        if !self.stayed_in_domain {
            w.write_record([
                self.values.len().to_string(),
                "NaN".into(),
                "false".into(),
                "false".into(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn iterate(x0: f64, specs: impl Iterator<Item = MapSpec>) -> (Vec<f64>, bool) {
    let mut values = vec![x0];
    let mut x = x0;
    for spec in specs {
        match eval_map(&spec, x) {
            Ok(y) => {
                values.push(y);
                x = y;
            }
            Err(_) => return (values, false),
        }
    }
    (values, true)
}

/// `[x0, F(x0), ..., F^T(x0)]`, truncated at the first domain violation.
pub fn iterate_baseline(p: &TheoryParams, d: &DerivedConstants, x0: f64, steps: usize) -> Trajectory {
    let spec = MapSpec::baseline(p, d);
    let (values, ok) = iterate(x0, std::iter::repeat_n(spec, steps));
    let n = values.len();
    Trajectory::from_values(values, 0, ok, n)
}

/// `[x0, H_0(x0), ..., H_{L-1}(...)]`, optionally followed by `G`. The
/// monotonicity flags cover the `H` outputs only.
pub fn iterate_curriculum(p: &TheoryParams, d: &DerivedConstants, x0: f64, with_final_g: bool) -> Trajectory {
    let coef = coefficients_at(p.beta_lo, p.beta_hi, p.levels);
    iterate_curriculum_with(&coef, p, d, x0, with_final_g)
}

/// As [`iterate_curriculum`] with precomputed coefficients.
pub fn iterate_curriculum_with(
    coef: &CurriculumCoefficients,
    p: &TheoryParams,
    d: &DerivedConstants,
    x0: f64,
    with_final_g: bool,
) -> Trajectory {
    let specs = (0..p.levels).map(|t| MapSpec::new(coef.a_t(t), d.nu, p, d));
    let (mut values, ok) = iterate(x0, specs);
    let h_end = values.len();
    let mut exceeds_one = false;
    if ok && with_final_g {
        let g = coef.a_l * values[h_end - 1];
        exceeds_one = g > 1.0;
        values.push(g);
    }
    let mut traj = Trajectory::from_values(values, 1, ok, h_end);
    traj.exceeds_one = exceeds_one;
    traj
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cubic::invariant_interval;
    use crate::params::derive_constants;
    use proptest::prelude::*;

    fn defaults() -> (TheoryParams, DerivedConstants) {
        let p = TheoryParams::default();
        (p, derive_constants(&p).unwrap())
    }

    #[test]
    fn coefficients_at_reference_values() {
        let c = coefficients_at(0.1, 0.4, 5);
        let s: f64 = 4.550_88;
        assert!((c.a0 - 5.0 / s).abs() < 1e-4);
        assert!((c.a0 - 1.0987).abs() < 1e-4);
        assert!((c.a_l - 1.0691).abs() < 1e-4);
        assert!((c.a_mid[0] - 0.7579).abs() < 1e-4);
        let flat = coefficients_at(0.0, 0.4, 7);
        assert_eq!((flat.a0, flat.a_l), (1.0, 1.0));
    }

    #[test]
    fn mid_coefficients_telescope() {
        for levels in [2usize, 5, 9, 30] {
            for beta in [0.05, 0.4, 2.5] {
                let prod: f64 = mid_coefficients(beta, levels).iter().product();
                let expected = (levels as f64).powf(-beta);
                assert!((prod / expected - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_budget_maps_are_constant() {
        let (p, _) = defaults();
        let d = derive_constants(&p.with_nu(0.0)).unwrap();
        assert_eq!(eval_map(&MapSpec::baseline(&p, &d), 0.3).unwrap(), 1.0 - p.gamma);
        let t = iterate_curriculum(&p, &d, 0.3, true);
        let coef = curriculum_coefficients(&p).unwrap();
        assert!(t.values[1..=p.levels].iter().all(|&v| v == 1.0 - p.gamma));
        assert_eq!(t.last(), coef.a_l * (1.0 - p.gamma));
        let flat = iterate_curriculum(&p.with_betas(1e-300, 0.4), &d, 0.3, true);
        assert!((flat.last() - (1.0 - p.gamma)).abs() < 1e-12);
    }

    #[test]
    fn map_diverges_at_domain_edge() {
        let (p, d) = defaults();
        let spec = MapSpec::baseline(&p, &d);
        let edge = spec.domain_lower();
        let mut prev = f64::INFINITY;
        for k in 2..10 {
            let v = eval_map(&spec, edge + 10f64.powi(-k)).unwrap();
            assert!(v < prev);
            prev = v;
        }
        assert!(prev < -10.0);
        assert!(eval_map(&spec, edge).is_err());
    }

    #[test]
    fn baseline_inside_interval_is_monotone() {
        let (p, d) = defaults();
        let i = invariant_interval(1.0, &p, &d);
        let t = iterate_baseline(&p, &d, i.midpoint(), DEFAULT_STEPS);
        assert!(t.stayed_in_domain);
        assert_eq!(t.values.len(), DEFAULT_STEPS + 1);
        assert!(t.values.iter().all(|&v| i.lo < v && v < i.hi + 1e-12));
        // Increases strictly until the float plateau at the attracting end.
        assert!(t.nondecreasing_with_plateaus(DEFAULT_STEPS));
        assert!(t.monotone_prefix > 10);
    }

    #[test]
    fn lower_fixed_point_is_stationary() {
        let (p, d) = defaults();
        let i = invariant_interval(1.0, &p, &d);
        let t = iterate_baseline(&p, &d, i.lo, 5);
        assert!(t.values.iter().all(|&v| (v - i.lo).abs() < 1e-10));
    }

    #[test]
    fn below_lower_fixed_point_decreases() {
        let (p, d) = defaults();
        let i = invariant_interval(1.0, &p, &d);
        let t = iterate_baseline(&p, &d, i.lo - 1e-3, DEFAULT_STEPS);
        assert_eq!(t.monotone_prefix, 0);
        assert!(!t.stayed_in_domain);
        assert!(t.values.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn truncated_csv_ends_with_nan() {
        let (p, d) = defaults();
        let t = iterate_baseline(&p, &d, 0.01, 10);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,value,monotone_so_far,in_domain\n"));
        assert!(text.trim_end().ends_with("NaN,false,false"));
    }

    #[test]
    fn final_rescale_above_one_is_flagged() {
        let p = TheoryParams { gamma: 0.0, beta_lo: 2.0, beta_hi: 3.0, ..Default::default() };
        let d = derive_constants(&p.with_nu(0.0)).unwrap();
        let t = iterate_curriculum(&p, &d, 0.5, true);
        assert!(t.exceeds_one);
    }

    proptest! {
        #[test]
        fn map_monotone_in_x_nu_and_a(a in 0.3f64..1.5, nu in 1e-4f64..0.05, frac in 0.01f64..1.0) {
            let (p, d) = defaults();
            let spec = MapSpec::new(a, nu, &p, &d);
            let x = spec.domain_lower() + frac;
            let h = 1e-6;
            let base = eval_map(&spec, x).unwrap();
            prop_assert!(eval_map(&spec, x + h).unwrap() > base);
            prop_assert!(eval_map(&MapSpec::new(a, nu + h, &p, &d), x).unwrap() < base);
            prop_assert!(eval_map(&MapSpec::new(a + h, nu, &p, &d), x).unwrap() > base);
            prop_assert!(base < 1.0 - p.gamma);
        }

        #[test]
        fn trajectories_are_reproducible(x0 in 0.05f64..0.95) {
            let (p, d) = defaults();
            let a = iterate_curriculum(&p, &d, x0, true);
            let b = iterate_curriculum(&p, &d, x0, true);
            prop_assert_eq!(a.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                            b.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }

        #[test]
        fn recorded_values_follow_the_map(x0 in 0.05f64..0.95) {
            let (p, d) = defaults();
            let t = iterate_baseline(&p, &d, x0, 20);
            let spec = MapSpec::baseline(&p, &d);
            for w in t.values.windows(2) {
                prop_assert_eq!(eval_map(&spec, w[0]).unwrap(), w[1]);
            }
        }

        #[test]
        fn coefficients_increase_in_beta_lo(b in 0.01f64..5.0, db in 1e-4f64..1.0, levels in 2usize..12) {
            let (a0, al) = level_coefficients(b, levels);
            let (a0b, alb) = level_coefficients(b + db, levels);
            prop_assert!(a0 > 1.0 && al > 1.0);
            prop_assert!(a0b > a0 && alb > al);
        }
    }
}
