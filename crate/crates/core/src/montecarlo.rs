//! Grid scans of the initializations for which the bound sequences are
//! monotone (feasibility) and for which the curriculum beats the baseline
//! (improvement), compared against the analytic intervals.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cubic::Interval;
use crate::dynamics::{coefficients_at, iterate_baseline, iterate_curriculum_with};
use crate::error::{Error, Result};
use crate::params::{DerivedConstants, TheoryParams};
use crate::regions::{feasibility_interval_at, improvement_interval};

pub const DEFAULT_X0_GRID: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKind {
    Feasibility,
    Improvement,
}

/// The non-budget axis of a panel; the budget `nu` is always the second axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PanelAxis {
    /// Vary `beta` with `beta'` fixed.
    BetaHi { beta_lo: f64 },
    /// Vary `beta'` with `beta` fixed.
    BetaLo { beta_hi: f64 },
    /// Vary `beta'` with `beta = beta' + gap`.
    BetaLoFixedGap { gap: f64 },
}

impl PanelAxis {
    /// `(beta', beta)` at an axis value.
    pub fn betas(&self, v: f64) -> (f64, f64) {
        match *self {
            PanelAxis::BetaHi { beta_lo } => (beta_lo, v),
            PanelAxis::BetaLo { beta_hi } => (v, beta_hi),
            PanelAxis::BetaLoFixedGap { gap } => (v, v + gap),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub name: String,
    pub kind: RegionKind,
    pub axis: PanelAxis,
    pub axis_values: Vec<f64>,
    pub nu_values: Vec<f64>,
    /// Number of initializations on `(0, 1 - gamma)`.
    pub x0_grid: usize,
    /// Steps per trajectory; `None` means `L`.
    pub steps: Option<usize>,
}

impl ScanConfig {
    pub fn validate(&self, p: &TheoryParams) -> Result<()> {
        let increasing = |v: &[f64]| !v.is_empty() && v.windows(2).all(|w| w[1] > w[0]);
        if !increasing(&self.axis_values) {
            return Err(Error::invalid("axis_values", "must be non-empty and strictly increasing"));
        }
        if !increasing(&self.nu_values) || self.nu_values[0] < 0.0 {
            return Err(Error::invalid("nu_values", "must be non-empty, >= 0 and strictly increasing"));
        }
        if self.x0_grid < 2 {
            return Err(Error::invalid("x0_grid", "must be >= 2"));
        }
        for &v in &self.axis_values {
            let (bl, bh) = self.axis.betas(v);
            p.with_betas(bl, bh).validate()?;
        }
        Ok(())
    }

    fn cell_width(&self, p: &TheoryParams) -> f64 {
        (1.0 - p.gamma) / self.x0_grid as f64
    }
}

/// Built-in panels `a`..`e`. `fast` shrinks the grids.
pub fn default_panel(name: &str, fast: bool) -> Option<ScanConfig> {
    let nu_values: Vec<f64> = if fast {
        vec![0.0, 0.005, 0.01, 0.015, 0.02]
    } else {
        (0..=12).map(|k| k as f64 * 0.0025).collect()
    };
    let x0_grid = if fast { 400 } else { DEFAULT_X0_GRID };
    let pick = |full: Vec<f64>| if fast { full.into_iter().step_by(2).collect() } else { full };
    let (kind, axis, axis_values) = match name {
        "a" => (RegionKind::Feasibility, PanelAxis::BetaHi { beta_lo: 0.1 }, pick(vec![0.2, 0.3, 0.4, 0.6, 0.8, 1.0])),
        "b" => (RegionKind::Feasibility, PanelAxis::BetaLo { beta_hi: 0.4 }, pick(vec![0.05, 0.1, 0.15, 0.2, 0.3, 0.35])),
        "c" => (RegionKind::Improvement, PanelAxis::BetaHi { beta_lo: 0.1 }, pick(vec![0.2, 0.3, 0.4, 0.6, 0.8, 1.0])),
        "d" => (RegionKind::Improvement, PanelAxis::BetaLo { beta_hi: 0.4 }, pick(vec![0.05, 0.1, 0.15, 0.2, 0.3, 0.35])),
        "e" => (
            RegionKind::Improvement,
            PanelAxis::BetaLoFixedGap { gap: 0.1 },
            pick(vec![0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 4.0]),
        ),
        _ => return None,
    };
    Some(ScanConfig { name: name.to_string(), kind, axis, axis_values, nu_values, x0_grid, steps: None })
}

pub const PANELS: [&str; 5] = ["a", "b", "c", "d", "e"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub axis1: f64,
    pub nu: f64,
    pub beta_lo: f64,
    pub beta_hi: f64,
    pub measured: Interval,
    pub analytic: Interval,
    pub measured_len: f64,
    pub analytic_len: f64,
    /// Both endpoints within one grid cell of the analytic ones (or both empty).
    pub agree: bool,
    /// Measured interval covers the analytic one up to one grid cell.
    pub covers_analytic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanResult {
    pub name: String,
    pub kind: RegionKind,
    pub cell_width: f64,
    pub cells: Vec<CellResult>,
}

/// Cell centers `(i + 1/2)(1 - gamma)/G`.
pub fn x0_grid(p: &TheoryParams, points: usize) -> Vec<f64> {
    let h = (1.0 - p.gamma) / points as f64;
    (0..points).map(|i| (i as f64 + 0.5) * h).collect()
}

/// Maximal runs of `true` as inclusive index ranges.
pub fn runs(flags: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &f) in flags.iter().enumerate() {
        match (f, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, flags.len() - 1));
    }
    out
}

/// Run containing the analytic midpoint, else the longest run, reported by
/// its outer cell edges.
pub fn measured_interval(flags: &[bool], h: f64, analytic: &Interval) -> Interval {
    let rs = runs(flags);
    let edges = |(s, e): (usize, usize)| (s as f64 * h, (e + 1) as f64 * h);
    let containing = analytic.valid.then(|| analytic.midpoint()).and_then(|m| {
        rs.iter().copied().find(|&r| {
            let (lo, hi) = edges(r);
            lo <= m && m <= hi
        })
    });
    let chosen = containing.or_else(|| rs.iter().copied().max_by_key(|&(s, e)| (e - s, usize::MAX - s)));
    match chosen {
        Some(r) => {
            let (lo, hi) = edges(r);
            Interval::new(lo, hi)
        }
        None => Interval { lo: f64::NAN, hi: f64::NAN, valid: false, issue: Some("no feasible point".into()) },
    }
}

/// Both bound sequences increase (plateaus allowed) and stay in the domain
/// for `steps` baseline steps and all curriculum `H` steps.
pub fn classify_feasible(
    p: &TheoryParams,
    d: &DerivedConstants,
    coef: &crate::dynamics::CurriculumCoefficients,
    x0: f64,
    steps: usize,
) -> bool {
    let base = iterate_baseline(p, d, x0, steps);
    if !base.nondecreasing_with_plateaus(steps) {
        return false;
    }
    let curr = iterate_curriculum_with(coef, p, d, x0, false);
    curr.nondecreasing_with_plateaus(p.levels - 1)
}

/// The curriculum's final bound (after `G`) strictly exceeds the baseline's.
pub fn classify_improving(
    p: &TheoryParams,
    d: &DerivedConstants,
    coef: &crate::dynamics::CurriculumCoefficients,
    x0: f64,
    steps: usize,
) -> bool {
    let base = iterate_baseline(p, d, x0, steps);
    let curr = iterate_curriculum_with(coef, p, d, x0, true);
    base.stayed_in_domain && curr.stayed_in_domain && curr.last() > base.last()
}

fn endpoints_close(a: &Interval, b: &Interval, tol: f64) -> bool {
    match (a.valid, b.valid) {
        (true, true) => (a.lo - b.lo).abs() <= tol && (a.hi - b.hi).abs() <= tol,
        (false, false) => true,
        _ => false,
    }
}

fn covers(measured: &Interval, analytic: &Interval, tol: f64) -> bool {
    if !analytic.valid || analytic.is_empty() {
        return true;
    }
    measured.valid && measured.lo <= analytic.lo + tol && measured.hi >= analytic.hi - tol
}

/// Measure one `(beta', beta, nu)` cell.
#[allow(clippy::too_many_arguments)]
pub fn scan_cell(
    kind: RegionKind,
    beta_lo: f64,
    beta_hi: f64,
    nu: f64,
    grid: usize,
    steps: Option<usize>,
    p: &TheoryParams,
    d: &DerivedConstants,
) -> (Interval, Interval) {
    let pc = p.with_betas(beta_lo, beta_hi);
    let dc = d.with_nu(nu);
    let coef = coefficients_at(beta_lo, beta_hi, p.levels);
    let steps = steps.unwrap_or(p.levels);
    let h = (1.0 - p.gamma) / grid as f64;
    let xs = x0_grid(p, grid);
    let (flags, analytic): (Vec<bool>, Interval) = match kind {
        RegionKind::Feasibility => (
            xs.iter().map(|&x| classify_feasible(&pc, &dc, &coef, x, steps)).collect(),
            feasibility_interval_at(beta_lo, beta_hi, nu, p, d),
        ),
        RegionKind::Improvement => (
            xs.iter().map(|&x| classify_improving(&pc, &dc, &coef, x, steps)).collect(),
            improvement_interval(beta_lo, beta_hi, nu, p, d),
        ),
    };
    (measured_interval(&flags, h, &analytic), analytic)
}

fn scan(cfg: &ScanConfig, kind: RegionKind, p: &TheoryParams, d: &DerivedConstants) -> Result<ScanResult> {
    cfg.validate(p)?;
    let h = cfg.cell_width(p);
    let tasks: Vec<(f64, f64)> = cfg
        .axis_values
        .iter()
        .flat_map(|&a| cfg.nu_values.iter().map(move |&nu| (a, nu)))
        .collect();
    let cells = tasks
        .par_iter()
        .map(|&(a, nu)| {
            let (beta_lo, beta_hi) = cfg.axis.betas(a);
            let (measured, analytic) = scan_cell(kind, beta_lo, beta_hi, nu, cfg.x0_grid, cfg.steps, p, d);
            CellResult {
                axis1: a,
                nu,
                beta_lo,
                beta_hi,
                measured_len: measured.len(),
                analytic_len: analytic.len(),
                agree: endpoints_close(&measured, &analytic, h),
                covers_analytic: covers(&measured, &analytic, h),
                measured,
                analytic,
            }
        })
        .collect();
    Ok(ScanResult { name: cfg.name.clone(), kind, cell_width: h, cells })
}

/// Feasible-region scan; cells are classified with `kind` forced to
/// feasibility.
pub fn scan_feasible_region(cfg: &ScanConfig, p: &TheoryParams, d: &DerivedConstants) -> Result<ScanResult> {
    scan(cfg, RegionKind::Feasibility, p, d)
}

pub fn scan_improvement_region(cfg: &ScanConfig, p: &TheoryParams, d: &DerivedConstants) -> Result<ScanResult> {
    scan(cfg, RegionKind::Improvement, p, d)
}

/// Dispatch on the panel's own kind.
pub fn run_panel(cfg: &ScanConfig, p: &TheoryParams, d: &DerivedConstants) -> Result<ScanResult> {
    scan(cfg, cfg.kind, p, d)
}

impl ScanResult {
    /// Measured lengths are non-increasing in `nu` along every row.
    pub fn measured_monotone_in_nu(&self) -> bool {
        let mut rows: Vec<(f64, Vec<(f64, f64)>)> = Vec::new();
        for c in &self.cells {
            match rows.last_mut() {
                Some((a, row)) if *a == c.axis1 => row.push((c.nu, c.measured_len)),
                _ => rows.push((c.axis1, vec![(c.nu, c.measured_len)])),
            }
        }
        rows.iter().all(|(_, row)| row.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-12))
    }

    /// CSV with columns `axis1, axis2, measured_len, analytic_len, agree`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["axis1", "axis2", "measured_len", "analytic_len", "agree"])?;
        for c in &self.cells {
            w.write_record([
                c.axis1.to_string(),
                c.nu.to_string(),
                c.measured_len.to_string(),
                c.analytic_len.to_string(),
                c.agree.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
