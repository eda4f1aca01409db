//! Invariant intervals via the conjugacy `x = off + (1 - gamma - off) y`,
//! `off = c_delta' nu / a`, which turns each lower-bound map into
//! `g(y) = 1 - sigma / sqrt(y)`. The fixed points of `g` are the two roots
//! in `(0, 1)` of `y (1 - y)^2 = sigma^2`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::{sigma_max, strictly_positive, DerivedConstants, TheoryParams, BOUNDARY_TOL};

/// Distance from `sqrt(4/27)` inside which the roots are treated as a
/// double root.
pub const NEAR_DEGENERATE: f64 = 1e-8;

/// Parameter of the conjugated map `g(y) = 1 - sigma / sqrt(y)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct SigmaParam {
    pub sigma: f64,
}

/// Open interval with a validity flag.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub valid: bool,
    /// Why the interval is invalid, if it is.
    pub issue: Option<String>,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        if lo < hi {
            Interval { lo, hi, valid: true, issue: None }
        } else {
            Interval { lo, hi, valid: false, issue: Some("empty".into()) }
        }
    }

    pub fn invalid(issue: impl Into<String>) -> Self {
        Interval { lo: f64::NAN, hi: f64::NAN, valid: false, issue: Some(issue.into()) }
    }

    /// Length, or zero when invalid.
    pub fn len(&self) -> f64 {
        if self.valid {
            self.hi - self.lo
        } else {
            0.0
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() <= 0.0
    }

    pub fn contains(&self, x: f64) -> bool {
        self.valid && self.lo < x && x < self.hi
    }

    /// `self` is a subset of `other` (closed inclusion).
    pub fn is_subset_of(&self, other: &Interval) -> bool {
        self.valid && other.valid && other.lo <= self.lo && self.hi <= other.hi
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// `a c_delta nu / (c (a (1 - gamma) - c_delta' nu)^{3/2})` at an explicit `nu`.
pub fn sigma_value(a: f64, nu: f64, p: &TheoryParams, d: &DerivedConstants) -> Result<f64> {
    let radicand = a * (1.0 - p.gamma) - d.c_delta_prime * nu;
    if !strictly_positive(radicand) {
        return Err(Error::domain(format!(
            "a(1-gamma) - c_delta' nu = {radicand:e} is not positive (a = {a}, nu = {nu})"
        )));
    }
    Ok(a * d.c_delta * nu / (p.c * radicand.powf(1.5)))
}

pub fn sigma(a: f64, p: &TheoryParams, d: &DerivedConstants) -> Result<SigmaParam> {
    sigma_value(a, d.nu, p, d).map(|sigma| SigmaParam { sigma })
}

fn check_open(s: SigmaParam) -> Result<()> {
    if s.sigma > 0.0 && s.sigma < sigma_max() {
        Ok(())
    } else {
        Err(Error::domain(format!("sigma = {} outside (0, sqrt(4/27))", s.sigma)))
    }
}

/// The angle `u = arccos(-1 + 27 sigma^2 / 2) / 3`.
///
/// Evaluated as `(pi - 2 asin(3 sqrt(3) sigma / 2)) / 3`, the same quantity
/// without the cancellation of `arccos` near `-1`; the `asin` argument is
/// clamped to `[0, 1]`.
pub fn cubic_angle(s: SigmaParam) -> f64 {
    let arg = (1.5 * 3f64.sqrt() * s.sigma).clamp(0.0, 1.0);
    (PI - 2.0 * arg.asin()) / 3.0
}

/// The two roots of `y (1 - y)^2 = sigma^2` in `(0, 1)`, as `(y_minus, y_plus)`.
pub fn cubic_roots(s: SigmaParam) -> Result<(f64, f64)> {
    check_open(s)?;
    Ok(roots_unchecked(s))
}

fn roots_unchecked(s: SigmaParam) -> (f64, f64) {
    let u = cubic_angle(s);
    let y_plus = 2.0 / 3.0 + (2.0 / 3.0) * (u - 2.0 * PI / 3.0).cos();
    // Third root (> 1); the small root follows from the product of roots
    // being sigma^2, which avoids cancellation as sigma -> 0.
    let y_big = 2.0 / 3.0 + (2.0 / 3.0) * u.cos();
    let y_minus = s.sigma * s.sigma / (y_plus * y_big);
    (y_minus, y_plus)
}

/// `1 - (3 sqrt(3) / 2) sigma`.
pub fn gap_lower_bound(s: SigmaParam) -> Result<f64> {
    if !(s.sigma >= 0.0 && s.sigma <= sigma_max() + BOUNDARY_TOL) {
        return Err(Error::domain(format!("sigma = {} outside [0, sqrt(4/27)]", s.sigma)));
    }
    Ok(1.0 - 1.5 * 3f64.sqrt() * s.sigma)
}

/// `y_plus - y_minus = (2 / sqrt(3)) sin(u)`.
pub fn exact_gap(s: SigmaParam) -> Result<f64> {
    if !(s.sigma >= 0.0 && s.sigma <= sigma_max() + BOUNDARY_TOL) {
        return Err(Error::domain(format!("sigma = {} outside [0, sqrt(4/27)]", s.sigma)));
    }
    Ok(2.0 / 3f64.sqrt() * cubic_angle(s).sin())
}

/// Derivative of the conjugated map at one of its fixed points.
pub fn fixed_point_slope(y: f64) -> f64 {
    (1.0 - y) / (2.0 * y)
}

/// Offset and scale of the affine conjugacy for coefficient `a`.
pub fn conjugacy(a: f64, nu: f64, p: &TheoryParams, d: &DerivedConstants) -> (f64, f64) {
    let off = d.c_delta_prime * nu / a;
    (off, 1.0 - p.gamma - off)
}

/// `I(a, nu)` at the budget stored in `d`.
pub fn invariant_interval(a: f64, p: &TheoryParams, d: &DerivedConstants) -> Interval {
    invariant_interval_at(a, d.nu, p, d)
}

/// `I(a, nu)`: the open interval between the two fixed points of
/// `x -> 1 - gamma - c_delta nu / (c sqrt(a x - c_delta' nu))`.
pub fn invariant_interval_at(a: f64, nu: f64, p: &TheoryParams, d: &DerivedConstants) -> Interval {
    if !(a > 0.0) {
        return Interval::invalid(format!("a = {a} must be positive"));
    }
    if nu == 0.0 {
        return Interval::new(0.0, 1.0 - p.gamma);
    }
    let s = match sigma_value(a, nu, p, d) {
        Ok(s) => SigmaParam { sigma: s },
        Err(_) => return Interval::invalid("radicand a(1-gamma) - c_delta' nu not positive"),
    };
    if s.sigma >= sigma_max() {
        return Interval::invalid("sigma >= sqrt(4/27)");
    }
    if sigma_max() - s.sigma < NEAR_DEGENERATE {
        return Interval::invalid("near-degenerate: sigma within 1e-8 of sqrt(4/27)");
    }
    let (ym, yp) = roots_unchecked(s);
    let (off, scale) = conjugacy(a, nu, p, d);
    Interval::new(off + scale * ym, off + scale * yp)
}

/// Lower bound on `|I(a, nu)|`.
pub fn interval_length_lower_bound(a: f64, nu: f64, p: &TheoryParams, d: &DerivedConstants) -> f64 {
    let (_, scale) = conjugacy(a, nu, p, d);
    let radicand = a * (1.0 - p.gamma) - d.c_delta_prime * nu;
    scale - 1.5 * 3f64.sqrt() * d.c_delta * nu / (p.c * radicand.sqrt())
}
