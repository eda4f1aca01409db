//! Command-line front end. Machine output goes to files under `--out`, each
//! run also writes `<subcommand>_manifest.json`; stdout carries summaries.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::cubic::{invariant_interval_at, Interval};
use crate::error::{Error, Result};
use crate::montecarlo::{self, PANELS};
use crate::params::{derive_constants, validate_domain, DerivedConstants, TheoryParams};
use crate::regions;
use crate::sim;
use crate::verify;

/// Exit code for a failed property.
pub const EXIT_PROPERTY: i32 = 1;
/// Exit code for usage and parameter errors.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "selfimprove", version, about = "Self-improvement dynamics toolkit")]
pub struct Cli {
    /// JSON file of theory constants.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

/// Overrides of individual theory constants.
#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct ParamFlags {
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub delta_prime: Option<f64>,
    #[arg(long)]
    pub pi_size: Option<u64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub m: Option<u32>,
    /// Number of difficulty levels.
    #[arg(long = "levels", short = 'L')]
    pub levels: Option<usize>,
    #[arg(long)]
    pub beta_lo: Option<f64>,
    #[arg(long, alias = "beta")]
    pub beta_hi: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Invariant, feasibility and improvement intervals.
    Intervals {
        #[command(flatten)]
        params: ParamFlags,
        /// Scale coefficients of the invariant intervals.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        a: Vec<f64>,
    },
    /// Critical budgets, improvement threshold and the nu* profile.
    Thresholds {
        #[command(flatten)]
        params: ParamFlags,
        /// Initialization for nu*.
        #[arg(long)]
        x0: Option<f64>,
        /// Only the critical budget nu_c.
        #[arg(long)]
        nu_c: bool,
        /// Only the budget nu_T.
        #[arg(long)]
        nu_t: bool,
        /// Also write the nu* profile over beta'.
        #[arg(long)]
        profile: bool,
        #[arg(long, default_value_t = 0.1)]
        delta_gap: f64,
        #[arg(long, default_value_t = 0.01)]
        profile_min: f64,
        #[arg(long, default_value_t = 12.0)]
        profile_max: f64,
        #[arg(long, default_value_t = 400)]
        profile_points: usize,
    },
    /// Threshold curve x(nu) and the analytic intervals over a nu grid.
    Regions {
        #[command(flatten)]
        params: ParamFlags,
        #[arg(long, default_value_t = 100)]
        nu_points: usize,
    },
    /// Grid scans of the measured feasibility and improvement regions.
    Scan {
        #[command(flatten)]
        params: ParamFlags,
        /// Panels a..e or `all` (default).
        #[arg(long, value_delimiter = ',')]
        panel: Vec<String>,
        #[arg(long)]
        fast: bool,
        /// Override the number of initializations.
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Stochastic simulation of the self-improvement loop.
    Simulate {
        #[command(flatten)]
        params: ParamFlags,
        #[arg(long = "questions", default_value_t = 10_000)]
        questions: usize,
        #[arg(long, default_value_t = 0.5)]
        v_target: f64,
        #[arg(long, default_value_t = 5)]
        rounds: u64,
        #[arg(long, default_value_t = 1)]
        replications: u64,
    },
    /// Run the property suite.
    Verify {
        #[command(flatten)]
        params: ParamFlags,
        #[arg(long)]
        fast: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Intervals { .. } => "intervals",
            Command::Thresholds { .. } => "thresholds",
            Command::Regions { .. } => "regions",
            Command::Scan { .. } => "scan",
            Command::Simulate { .. } => "simulate",
            Command::Verify { .. } => "verify",
        }
    }

    fn params(&self) -> &ParamFlags {
        match self {
            Command::Intervals { params, .. }
            | Command::Thresholds { params, .. }
            | Command::Regions { params, .. }
            | Command::Scan { params, .. }
            | Command::Simulate { params, .. }
            | Command::Verify { params, .. } => params,
        }
    }
}

/// Flags over config file over defaults.
pub fn resolve_params(config: Option<&Path>, flags: &ParamFlags) -> Result<(TheoryParams, Vec<String>)> {
    let (mut p, mut warnings) = match config {
        Some(path) => TheoryParams::from_json_file(path)?,
        None => (TheoryParams::default(), Vec::new()),
    };
    macro_rules! apply {
        ($($f:ident),*) => { $( if let Some(v) = flags.$f { p.$f = v; } )* };
    }
    apply!(c, gamma, delta, delta_prime, pi_size, tau, n, m, levels, beta_lo, beta_hi);
    if let Some(nu) = flags.nu {
        p.nu = Some(nu);
    }
    if p.nu.is_some() && flags.n.is_some() {
        warnings.push("both `n` and `nu` given; `nu` takes precedence".into());
    }
    warnings.dedup();
    p.validate()?;
    Ok((p, warnings))
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    subcommand: &'a str,
    argv: Vec<String>,
    params: TheoryParams,
    derived: DerivedConstants,
    seed: u64,
    outputs: Vec<String>,
    version: &'a str,
    duration_secs: f64,
    warnings: Vec<String>,
}

struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        std::fs::create_dir_all(&self.dir)?;
        self.written.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }
}

/// Parse `argv`, run, and return the process exit code.
pub fn main_with_args(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli, &argv) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

fn run(cli: &Cli, argv: &[String]) -> Result<i32> {
    if let Some(threads) = cli.threads {
        // Ignore the error raised when a pool already exists (repeated in-process runs).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let started = Instant::now();
    let (p, warnings) = resolve_params(cli.config.as_deref(), cli.command.params())?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let d = derive_constants(&p)?;
    let mut out = Outputs { dir: cli.out.clone(), written: Vec::new() };
    let code = match &cli.command {
        Command::Intervals { a, .. } => cmd_intervals(&p, &d, a, &mut out)?,
        Command::Thresholds { x0, nu_c, nu_t, profile, delta_gap, profile_min, profile_max, profile_points, .. } => {
            let opts = ThresholdOpts {
                x0: *x0,
                only_nu_c: *nu_c,
                only_nu_t: *nu_t,
                profile: *profile,
                delta_gap: *delta_gap,
                range: (*profile_min, *profile_max),
                points: *profile_points,
            };
            cmd_thresholds(&p, &d, &opts, &mut out)?
        }
        Command::Regions { nu_points, .. } => cmd_regions(&p, &d, *nu_points, &mut out)?,
        Command::Scan { panel, fast, grid, .. } => cmd_scan(&p, &d, panel, *fast, *grid, &mut out)?,
        Command::Simulate { questions, v_target, rounds, replications, .. } => {
            cmd_simulate(&p, &d, *questions, *v_target, *rounds, *replications, cli.seed, &mut out)?
        }
        Command::Verify { fast, .. } => cmd_verify(&p, *fast, cli.seed, &mut out)?,
    };
    let manifest = Manifest {
        subcommand: cli.command.name(),
        argv: argv.to_vec(),
        params: p,
        derived: d,
        seed: cli.seed,
        outputs: out.written.clone(),
        version: env!("CARGO_PKG_VERSION"),
        duration_secs: started.elapsed().as_secs_f64(),
        warnings,
    };
    let name = format!("{}_manifest.json", cli.command.name());
    std::fs::create_dir_all(&out.dir)?;
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(out.dir.join(name), text + "\n")?;
    Ok(code)
}

fn interval_row(w: &mut csv::Writer<impl std::io::Write>, kind: &str, key: f64, nu: f64, i: &Interval) -> Result<()> {
    w.write_record([kind.to_string(), key.to_string(), nu.to_string(), i.lo.to_string(), i.hi.to_string(), i.valid.to_string()])?;
    Ok(())
}

fn cmd_intervals(p: &TheoryParams, d: &DerivedConstants, scales: &[f64], out: &mut Outputs) -> Result<i32> {
    if let Some(a) = scales.iter().find(|a| !(**a > 0.0)) {
        return Err(Error::invalid("a", format!("must be positive, got {a}")));
    }
    let mut w = csv::Writer::from_writer(out.create("intervals.csv")?);
    w.write_record(["kind", "a_or_beta", "nu", "lo", "hi", "valid"])?;
    for &a in scales {
        let i = invariant_interval_at(a, d.nu, p, d);
        println!("I(a={a}, nu={}) = ({}, {}) valid={}", d.nu, i.lo, i.hi, i.valid);
        interval_row(&mut w, "I", a, d.nu, &i)?;
    }
    let im = regions::feasibility_interval(p, d);
    let i_n = regions::improvement_interval(p.beta_lo, p.beta_hi, d.nu, p, d);
    println!("I_M = ({}, {}) valid={}", im.lo, im.hi, im.valid);
    println!("I_N = ({}, {}) valid={}", i_n.lo, i_n.hi, i_n.valid);
    interval_row(&mut w, "I_M", p.beta_hi, d.nu, &im)?;
    interval_row(&mut w, "I_N", p.beta_hi, d.nu, &i_n)?;
    w.flush()?;
    let report = validate_domain(p, d);
    if let Some(v) = report.first_violation() {
        println!("domain: {v}");
    }
    Ok(0)
}

struct ThresholdOpts {
    x0: Option<f64>,
    only_nu_c: bool,
    only_nu_t: bool,
    profile: bool,
    delta_gap: f64,
    range: (f64, f64),
    points: usize,
}

fn cmd_thresholds(p: &TheoryParams, d: &DerivedConstants, o: &ThresholdOpts, out: &mut Outputs) -> Result<i32> {
    if let Some(x0) = o.x0 {
        if !(x0 > 0.0 && x0 < 1.0 - p.gamma) {
            return Err(Error::invalid("x0", format!("must lie in (0, 1 - gamma), got {x0}")));
        }
    }
    if o.profile && (o.points < 3 || !(o.range.1 > o.range.0) || !(o.range.0 > 0.0)) {
        return Err(Error::invalid("profile", "needs >= 3 points on a positive increasing range"));
    }
    let (bl, bh) = (p.beta_lo, p.beta_hi);
    // quantity, beta_lo, beta_hi, nu, x0, value, flag
    let mut rows: Vec<[String; 7]> = Vec::new();
    let row = |q: &str, nu: f64, x0: f64, v: f64, flag: bool| {
        [q.to_string(), bl.to_string(), bh.to_string(), nu.to_string(), x0.to_string(), v.to_string(), flag.to_string()]
    };
    let selective = o.only_nu_c || o.only_nu_t;
    if o.only_nu_c || !selective {
        let r = regions::critical_nu_c(bl, bh, p, d)?;
        println!("nu_c = {} (domain_limited = {})", r.value, r.domain_limited);
        rows.push(row("nu_c", f64::NAN, f64::NAN, r.value, r.domain_limited));
    }
    if o.only_nu_t || !selective {
        let v = regions::critical_nu_t(p, d)?;
        println!("nu_T = {v}");
        rows.push(row("nu_T", f64::NAN, f64::NAN, v, false));
    }
    if !selective {
        match regions::improvement_threshold(bl, bh, d.nu, p, d) {
            Ok(t) => {
                println!("x(nu = {}) = {}", d.nu, t.x);
                rows.push(row("x_threshold", d.nu, f64::NAN, t.x, t.domain_limited));
            }
            Err(e) => {
                println!("x(nu = {}) undefined: {e}", d.nu);
                rows.push(row("x_threshold", d.nu, f64::NAN, f64::NAN, true));
            }
        }
        if let Some(x0) = o.x0 {
            let r = regions::nu_star(bl, bh, x0, p, d)?;
            println!("nu*(x0 = {x0}) = {}", r.value);
            rows.push(row("nu_star", f64::NAN, x0, r.value, r.domain_limited));
        }
    }
    let mut w = csv::Writer::from_writer(out.create("thresholds.csv")?);
    w.write_record(["quantity", "beta_lo", "beta_hi", "nu", "x0", "value", "flag"])?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    if o.profile {
        let x0 = o.x0.unwrap_or(0.5 * (1.0 - p.gamma));
        let (lo, hi) = o.range;
        let grid: Vec<f64> = (0..o.points).map(|k| lo + (hi - lo) * k as f64 / (o.points - 1) as f64).collect();
        let prof = regions::nu_star_profile(o.delta_gap, &grid, x0, p, d)?;
        let best = prof.points[prof.argmax];
        println!(
            "profile: argmax beta' = {}, nu* = {}, local maxima = {}, tail slope = {}",
            best.beta_lo, best.nu_star, prof.local_maxima, prof.tail_slope
        );
        prof.write_csv(out.create("profile.csv")?)?;
    }
    Ok(0)
}

fn cmd_regions(p: &TheoryParams, d: &DerivedConstants, points: usize, out: &mut Outputs) -> Result<i32> {
    if points < 2 {
        return Err(Error::invalid("nu_points", "must be >= 2"));
    }
    let (bl, bh) = (p.beta_lo, p.beta_hi);
    let nu_c = regions::critical_nu_c(bl, bh, p, d)?;
    let nus: Vec<f64> = (0..points).map(|k| nu_c.value * k as f64 / points as f64).collect();
    let curve = regions::threshold_curve(bl, bh, &nus, p, d)?;
    curve.write_csv(out.create("threshold_curve.csv")?)?;
    let mut w = csv::Writer::from_writer(out.create("regions.csv")?);
    w.write_record(["nu", "im_lo", "im_hi", "im_valid", "in_lo", "in_hi", "in_valid"])?;
    for &nu in &nus {
        let im = regions::feasibility_interval_at(bl, bh, nu, p, d);
        let i_n = regions::improvement_interval(bl, bh, nu, p, d);
        w.write_record([
            nu.to_string(),
            im.lo.to_string(),
            im.hi.to_string(),
            im.valid.to_string(),
            i_n.lo.to_string(),
            i_n.hi.to_string(),
            i_n.valid.to_string(),
        ])?;
    }
    w.flush()?;
    println!("nu_c = {} over {points} budget points", nu_c.value);
    Ok(0)
}

fn cmd_scan(
    p: &TheoryParams,
    d: &DerivedConstants,
    panels: &[String],
    fast: bool,
    grid: Option<usize>,
    out: &mut Outputs,
) -> Result<i32> {
    let names: Vec<String> = if panels.is_empty() || panels.iter().any(|s| s == "all") {
        PANELS.iter().map(|s| s.to_string()).collect()
    } else {
        panels.to_vec()
    };
    let mut configs = Vec::new();
    for name in &names {
        let mut cfg = montecarlo::default_panel(name, fast)
            .ok_or_else(|| Error::invalid("panel", format!("unknown panel `{name}` (expected a..e)")))?;
        if let Some(g) = grid {
            cfg.x0_grid = g;
        }
        cfg.validate(p)?;
        configs.push(cfg);
    }
    for cfg in configs {
        let res = montecarlo::run_panel(&cfg, p, d)?;
        let agree = res.cells.iter().filter(|c| c.agree).count();
        println!(
            "panel {}: {} cells, {} agree within one cell, measured monotone in nu: {}",
            cfg.name,
            res.cells.len(),
            agree,
            res.measured_monotone_in_nu()
        );
        res.write_csv(out.create(&format!("panel_{}.csv", cfg.name))?)?;
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    p: &TheoryParams,
    d: &DerivedConstants,
    questions: usize,
    v_target: f64,
    rounds: u64,
    replications: u64,
    seed: u64,
    out: &mut Outputs,
) -> Result<i32> {
    if replications < 1 {
        return Err(Error::invalid("replications", "must be >= 1"));
    }
    if rounds < 1 {
        return Err(Error::invalid("rounds", "must be >= 1"));
    }
    let world = sim::build_world(questions, v_target, p, seed)?;
    let records = sim::run_replications(&world, p, d, rounds, replications, seed)?;
    sim::write_records_csv(&records, out.create("simulation.csv")?)?;
    println!(
        "{} rounds over {replications} replications, bound coverage {:.4}",
        records.len(),
        sim::coverage(&records)
    );
    Ok(0)
}

fn cmd_verify(p: &TheoryParams, fast: bool, seed: u64, out: &mut Outputs) -> Result<i32> {
    let outcomes = verify::run_all(p, fast, seed);
    let width = outcomes.iter().map(|o| o.name.len()).max().unwrap_or(0);
    for o in &outcomes {
        println!("{} {:width$}  {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
    }
    let text = serde_json::to_string_pretty(&outcomes).map_err(|e| Error::Io(e.to_string()))?;
    use std::io::Write;
    out.create("verify.json")?.write_all((text + "\n").as_bytes())?;
    match outcomes.iter().find(|o| !o.passed) {
        Some(first) => {
            eprintln!("first failing property: {}", first.name);
            Ok(EXIT_PROPERTY)
        }
        None => Ok(0),
    }
}
