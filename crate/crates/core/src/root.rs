//! Bracketed bisection on monotone predicates.
//!
//! Every target function in this crate is strictly monotone in its search
//! variable, so the searches are phrased as predicates that are `false`
//! below the root and `true` above it. Domain failures count as `true`
//! ("past the root").

/// Default absolute width at which bisection stops.
pub const BISECTION_TOL: f64 = 1e-12;

/// Start of the geometric bracket expansion.
pub const BRACKET_START: f64 = 1e-9;

/// Result of a bracketed search.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Root {
    pub value: f64,
    /// The search ended on a domain breakdown rather than a sign change.
    pub domain_limited: bool,
}

/// Shrink `[lo, hi]` (with `pred(lo) == false`, `pred(hi) == true`) until it
/// is narrower than `tol` or the midpoint stops moving. Returns the final
/// bracket.
pub fn bisect(mut lo: f64, mut hi: f64, tol: f64, pred: impl Fn(f64) -> bool) -> (f64, f64) {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (lo, hi)
}

/// First point of the sequence `start, 2 start, 4 start, ...` (not beyond
/// `cap`) at which `pred` holds.
pub fn expand_upper(start: f64, cap: f64, pred: impl Fn(f64) -> bool) -> Option<f64> {
    let mut hi = start;
    while hi <= cap {
        if pred(hi) {
            return Some(hi);
        }
        hi *= 2.0;
    }
    None
}

/// Locate the root of a predicate on `(0, cap]` by expansion from
/// [`BRACKET_START`] followed by bisection.
pub fn search_from_zero(cap: f64, tol: f64, pred: impl Fn(f64) -> bool) -> Option<(f64, f64)> {
    let hi = expand_upper(BRACKET_START, cap, &pred)?;
    let lo = if hi > BRACKET_START { hi / 2.0 } else { 0.0 };
    Some(bisect(lo, hi, tol, pred))
}
