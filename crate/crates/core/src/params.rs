//! Theory constants, their validation and the derived quantities every
//! other module consumes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cubic;
use crate::error::{Error, Result};
use crate::regions;

/// Absolute tolerance for comparisons against domain boundaries.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Upper limit of the cubic parameter for which two distinct fixed points exist.
pub fn sigma_max() -> f64 {
    (4.0f64 / 27.0).sqrt()
}

pub(crate) fn strictly_positive(v: f64) -> bool {
    v > BOUNDARY_TOL
}

/// All scalar constants of the theory.
///
/// Field names double as config-file keys; `L` is spelled exactly as in the
/// config format.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryParams {
    /// Acceptance/reward coupling constant.
    pub c: f64,
    /// Mass of questions exempt from the coupling.
    pub gamma: f64,
    /// Confidence parameter of the likelihood step.
    pub delta: f64,
    /// Confidence parameter of the acceptance count.
    pub delta_prime: f64,
    /// Cardinality of the model class.
    pub pi_size: u64,
    /// Reward threshold.
    pub tau: f64,
    /// Per-iteration question budget.
    pub n: u64,
    /// Per-question answer budget.
    pub m: u32,
    /// Number of difficulty levels (and curriculum iterations).
    #[serde(rename = "L")]
    pub levels: usize,
    /// Lower power-law exponent of adjacent difficulty ratios.
    pub beta_lo: f64,
    /// Upper power-law exponent of adjacent difficulty ratios.
    pub beta_hi: f64,
    /// Direct override of the budget parameter `sqrt(1/n)`.
    pub nu: Option<f64>,
}

impl Default for TheoryParams {
    fn default() -> Self {
        TheoryParams {
            c: 0.9,
            gamma: 0.02,
            delta: 0.05,
            delta_prime: 0.05,
            pi_size: 1000,
            tau: 1.0,
            n: 2500,
            m: 4,
            levels: 5,
            beta_lo: 0.1,
            beta_hi: 0.4,
            nu: None,
        }
    }
}

impl TheoryParams {
    /// Check every field invariant, naming the first one violated.
    pub fn validate(&self) -> Result<()> {
        fn open_unit(name: &'static str, v: f64) -> Result<()> {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("must lie in (0,1), got {v}")))
            }
        }
        open_unit("c", self.c)?;
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return Err(Error::invalid("gamma", format!("must lie in [0,1), got {}", self.gamma)));
        }
        open_unit("delta", self.delta)?;
        // delta_prime = 1 is admitted as the boundary case c_delta_prime = 0.
        if !(self.delta_prime > 0.0 && self.delta_prime <= 1.0) {
            return Err(Error::invalid(
                "delta_prime",
                format!("must lie in (0,1], got {}", self.delta_prime),
            ));
        }
        if self.pi_size < 2 {
            return Err(Error::invalid("pi_size", format!("must be >= 2, got {}", self.pi_size)));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::invalid("tau", format!("must lie in (0,1], got {}", self.tau)));
        }
        if self.n < 1 {
            return Err(Error::invalid("n", "must be >= 1"));
        }
        if self.m < 1 {
            return Err(Error::invalid("m", "must be >= 1"));
        }
        if self.levels < 2 {
            return Err(Error::invalid("L", format!("must be >= 2, got {}", self.levels)));
        }
        if !(self.beta_lo > 0.0 && self.beta_lo.is_finite()) {
            return Err(Error::invalid("beta_lo", format!("must be > 0, got {}", self.beta_lo)));
        }
        if !(self.beta_hi > self.beta_lo && self.beta_hi.is_finite()) {
            return Err(Error::invalid(
                "beta_hi",
                format!("must exceed beta_lo = {}, got {}", self.beta_lo, self.beta_hi),
            ));
        }
        if let Some(nu) = self.nu {
            if !(nu >= 0.0 && nu.is_finite()) {
                return Err(Error::invalid("nu", format!("must be finite and >= 0, got {nu}")));
            }
        }
        Ok(())
    }

    /// Copy with the exponent pair replaced.
    pub fn with_betas(&self, beta_lo: f64, beta_hi: f64) -> Self {
        TheoryParams { beta_lo, beta_hi, ..*self }
    }

    /// Copy with the budget parameter overridden.
    pub fn with_nu(&self, nu: f64) -> Self {
        TheoryParams { nu: Some(nu), ..*self }
    }

    /// Load a JSON config. Missing keys keep their defaults, unknown keys are
    /// rejected. Returns the parameters and any warnings raised while
    /// resolving them.
    pub fn from_json_str(text: &str) -> Result<(Self, Vec<String>)> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut warnings = Vec::new();
        if let Some(obj) = value.as_object() {
            if obj.contains_key("n") && obj.get("nu").is_some_and(|v| !v.is_null()) {
                warnings.push("both `n` and `nu` given; `nu` takes precedence".to_string());
            }
        }
        let params: TheoryParams =
            serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
        params.validate()?;
        Ok((params, warnings))
    }

    pub fn from_json_file(path: &Path) -> Result<(Self, Vec<String>)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }
}

/// Constants derived from [`TheoryParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedConstants {
    /// `sqrt(2 log(|Pi| / delta))`
    pub c_delta: f64,
    /// `sqrt(log(1 / delta') / 2)`
    pub c_delta_prime: f64,
    /// `sqrt(1/n)`, unless overridden.
    pub nu: f64,
    pub nu_overridden: bool,
}

impl DerivedConstants {
    /// Copy with a different budget parameter.
    pub fn with_nu(&self, nu: f64) -> Self {
        DerivedConstants { nu, nu_overridden: true, ..*self }
    }
}

pub fn derive_constants(p: &TheoryParams) -> Result<DerivedConstants> {
    p.validate()?;
    let c_delta = (2.0 * (p.pi_size as f64 / p.delta).ln()).sqrt();
    let c_delta_prime = ((1.0 / p.delta_prime).ln() / 2.0).sqrt();
    let (nu, nu_overridden) = match p.nu {
        Some(nu) => (nu, true),
        None => ((1.0 / p.n as f64).sqrt(), false),
    };
    Ok(DerivedConstants { c_delta, c_delta_prime, nu, nu_overridden })
}

/// Well-definedness of one downstream computation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub valid: bool,
    pub violated: Option<String>,
}

impl Check {
    fn from_conditions(conditions: &[(bool, String)]) -> Self {
        match conditions.iter().find(|(ok, _)| !ok) {
            Some((_, name)) => Check { valid: false, violated: Some(name.clone()) },
            None => Check { valid: true, violated: None },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidityReport {
    /// Invariant interval of the baseline map, `I(1, nu)`.
    pub baseline_interval: Check,
    /// Invariant interval at scale `2^-beta`.
    pub curriculum_interval: Check,
    /// The `x0`-independent conditions of the error functional.
    pub error_functional: Check,
    /// The improvement condition (same regime as the functional).
    pub improvement_condition: Check,
    /// Set when `nu = 0`, where every budget term vanishes.
    pub sigma_degenerate: bool,
}

impl ValidityReport {
    pub fn all_valid(&self) -> bool {
        self.baseline_interval.valid
            && self.curriculum_interval.valid
            && self.error_functional.valid
            && self.improvement_condition.valid
    }

    pub fn first_violation(&self) -> Option<&str> {
        [
            &self.baseline_interval,
            &self.curriculum_interval,
            &self.error_functional,
            &self.improvement_condition,
        ]
        .into_iter()
        .find_map(|c| c.violated.as_deref())
    }
}

/// Aggregate the well-definedness regimes of the interval, functional and
/// improvement computations. Never fails.
pub fn validate_domain(p: &TheoryParams, d: &DerivedConstants) -> ValidityReport {
    let nu = d.nu;
    let one_minus_gamma = 1.0 - p.gamma;
    let scale = 2f64.powf(-p.beta_hi);

    let interval_check = |a: f64, label: &str| {
        let radicand = a * one_minus_gamma - d.c_delta_prime * nu;
        let radicand_ok = strictly_positive(radicand);
        let sigma_ok = radicand_ok
            && cubic::sigma_value(a, nu, p, d).is_ok_and(|s| s < sigma_max() - BOUNDARY_TOL);
        Check::from_conditions(&[
            (radicand_ok, format!("{label}: a(1-gamma) - c_delta' nu > 0")),
            (sigma_ok, format!("{label}: sigma < sqrt(4/27)")),
        ])
    };

    let functional = {
        let base = one_minus_gamma - d.c_delta_prime * nu;
        let curr = scale * one_minus_gamma - d.c_delta_prime * nu;
        let weighted_ok = strictly_positive(curr)
            && regions::weighted_ratio(p.beta_lo, p.beta_hi, nu, f64::INFINITY, p, d)
                .is_some_and(|w| w < 1.0 - regions::GEOMETRIC_GUARD);
        Check::from_conditions(&[
            (strictly_positive(base) || nu == 0.0, "1 - gamma - c_delta' nu > 0".to_string()),
            (
                strictly_positive(curr) || nu == 0.0,
                "2^-beta (1 - gamma) - c_delta' nu > 0".to_string(),
            ),
            (weighted_ok || nu == 0.0, "weighted geometric denominator > 0".to_string()),
        ])
    };

    ValidityReport {
        baseline_interval: interval_check(1.0, "I(1,nu)"),
        curriculum_interval: interval_check(scale, "I(2^-beta,nu)"),
        improvement_condition: functional.clone(),
        error_functional: functional,
        sigma_degenerate: nu == 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c_delta_matches_closed_form() {
        let p = TheoryParams { pi_size: 1000, delta: 0.05, ..Default::default() };
        let d = derive_constants(&p).unwrap();
        // sqrt(2 ln 20000), evaluated independently
        assert!((d.c_delta - 4.450_502_792_390_12).abs() < 1e-10);
    }

    #[test]
    fn unit_delta_prime_gives_zero_constant() {
        let p = TheoryParams { delta_prime: 1.0, ..Default::default() };
        assert_eq!(derive_constants(&p).unwrap().c_delta_prime, 0.0);
    }

    #[test]
    fn single_question_budget() {
        let p = TheoryParams { n: 1, ..Default::default() };
        assert_eq!(derive_constants(&p).unwrap().nu, 1.0);
    }

    #[test]
    fn nu_is_inverse_root_budget() {
        for n in [1u64, 7, 100, 2500, 1_000_003] {
            let d = derive_constants(&TheoryParams { n, ..Default::default() }).unwrap();
            assert!((d.nu * d.nu * n as f64 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_parameters_are_named() {
        let bad = TheoryParams { beta_hi: 0.05, ..Default::default() };
        match derive_constants(&bad) {
            Err(Error::InvalidParameter { name, .. }) => assert_eq!(name, "beta_hi"),
            other => panic!("unexpected {other:?}"),
        }
        let bad = TheoryParams { levels: 1, ..Default::default() };
        assert!(matches!(bad.validate(), Err(Error::InvalidParameter { name: "L", .. })));
        let bad = TheoryParams { c: 1.0, ..Default::default() };
        assert!(matches!(bad.validate(), Err(Error::InvalidParameter { name: "c", .. })));
    }

    #[test]
    fn zero_budget_is_fully_valid_and_degenerate() {
        let p = TheoryParams::default().with_nu(0.0);
        let d = derive_constants(&p).unwrap();
        let report = validate_domain(&p, &d);
        assert!(report.all_valid(), "{report:?}");
        assert!(report.sigma_degenerate);
    }

    #[test]
    fn large_sigma_invalidates_baseline_interval() {
        let p = TheoryParams::default().with_nu(0.2);
        let d = derive_constants(&p).unwrap();
        let s = cubic::sigma_value(1.0, d.nu, &p, &d).unwrap();
        assert!(s >= sigma_max());
        let report = validate_domain(&p, &d);
        assert!(!report.baseline_interval.valid);
        assert!(report.baseline_interval.violated.as_deref().unwrap().contains("sigma"));
    }

    #[test]
    fn curriculum_radicand_violation_is_reported() {
        // 2^-beta (1 - gamma) <= c_delta' nu
        let p = TheoryParams { beta_hi: 6.0, ..Default::default() }.with_nu(0.02);
        let d = derive_constants(&p).unwrap();
        assert!(2f64.powf(-6.0) * 0.98 <= d.c_delta_prime * 0.02);
        let report = validate_domain(&p, &d);
        assert!(!report.curriculum_interval.valid);
        assert!(!report.error_functional.valid);
        assert!(report.first_violation().is_some());
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(TheoryParams::from_json_str(r#"{"c": 0.8, "bogus": 1}"#).is_err());
        let (p, warnings) = TheoryParams::from_json_str(r#"{"c": 0.8, "L": 7}"#).unwrap();
        assert_eq!(p.c, 0.8);
        assert_eq!(p.levels, 7);
        assert!(warnings.is_empty());
    }

    #[test]
    fn nu_wins_over_n_with_warning() {
        let (p, warnings) = TheoryParams::from_json_str(r#"{"n": 100, "nu": 0.01}"#).unwrap();
        assert_eq!(warnings.len(), 1);
        let d = derive_constants(&p).unwrap();
        assert_eq!(d.nu, 0.01);
        assert!(d.nu_overridden);
    }

    #[test]
    fn constants_are_monotone() {
        let base = TheoryParams::default();
        let d0 = derive_constants(&base).unwrap();
        let bigger_class = derive_constants(&TheoryParams { pi_size: 5000, ..base }).unwrap();
        let smaller_delta = derive_constants(&TheoryParams { delta: 0.01, ..base }).unwrap();
        let larger_n = derive_constants(&TheoryParams { n: 10_000, ..base }).unwrap();
        assert!(bigger_class.c_delta > d0.c_delta);
        assert!(smaller_delta.c_delta > d0.c_delta);
        assert!(larger_n.nu < d0.nu);
    }
}
