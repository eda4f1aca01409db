//! Property suite behind the `verify` subcommand: every stated invariant of
//! the toolkit, checked on random or gridded admissible inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cubic::{self, conjugacy, cubic_roots, exact_gap, fixed_point_slope, invariant_interval_at, SigmaParam};
use crate::dynamics::{self, eval_map, iterate_baseline, iterate_curriculum, level_coefficients, MapSpec};
use crate::montecarlo::{self, RegionKind};
use crate::params::{derive_constants, sigma_max, validate_domain, DerivedConstants, TheoryParams};
use crate::regions::{self, ErrorFunctionalInputs};
use crate::sim;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type CheckResult = std::result::Result<String, String>;

struct Ctx {
    p: TheoryParams,
    d: DerivedConstants,
    fast: bool,
    seed: u64,
}

impl Ctx {
    fn count(&self, full: usize) -> usize {
        if self.fast {
            (full / 5).max(10)
        } else {
            full
        }
    }

    fn rng(&self, salt: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(salt);
        rng
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn constants_monotone(cx: &Ctx) -> CheckResult {
    let base = cx.p;
    let d0 = derive_constants(&base).map_err(|e| e.to_string())?;
    ensure(derive_constants(&base).unwrap() == d0, || "not deterministic".into())?;
    let bigger = derive_constants(&TheoryParams { pi_size: base.pi_size * 10, ..base }).unwrap();
    let smaller_delta = derive_constants(&TheoryParams { delta: base.delta / 2.0, ..base }).unwrap();
    let larger_n = derive_constants(&TheoryParams { n: base.n * 4, nu: None, ..base }).unwrap();
    ensure(bigger.c_delta > d0.c_delta && smaller_delta.c_delta > d0.c_delta, || "c_delta not monotone".into())?;
    ensure(
        larger_n.nu < derive_constants(&TheoryParams { nu: None, ..base }).unwrap().nu,
        || "nu not decreasing in n".into(),
    )?;
    Ok("c_delta up in |Pi| and 1/delta, nu down in n".into())
}

fn zero_budget_valid(cx: &Ctx) -> CheckResult {
    let mut rng = cx.rng(2);
    for _ in 0..cx.count(200) {
        let bl = rng.random_range(0.01..3.0);
        let p = TheoryParams {
            c: rng.random_range(0.05..0.99),
            gamma: rng.random_range(0.0..0.5),
            beta_lo: bl,
            beta_hi: bl + rng.random_range(0.01..3.0),
            ..cx.p
        }
        .with_nu(0.0);
        let d = derive_constants(&p).unwrap();
        let r = validate_domain(&p, &d);
        ensure(r.all_valid() && r.sigma_degenerate, || format!("{p:?} reported {r:?}"))?;
    }
    Ok("all nu = 0 reports fully valid".into())
}

fn map_monotonicity(cx: &Ctx) -> CheckResult {
    let mut rng = cx.rng(3);
    let n = cx.count(2000);
    for _ in 0..n {
        let a = rng.random_range(0.2..1.5);
        let nu = rng.random_range(1e-4..0.05);
        let spec = MapSpec::new(a, nu, &cx.p, &cx.d);
        let x = spec.domain_lower() + rng.random_range(0.01..1.0);
        let h = 1e-6;
        let v = eval_map(&spec, x).unwrap();
        ensure(eval_map(&spec, x + h).unwrap() > v, || format!("not increasing in x at {spec:?}, {x}"))?;
        ensure(
            eval_map(&MapSpec::new(a, nu + h, &cx.p, &cx.d), x).unwrap() < v,
            || format!("not decreasing in nu at {spec:?}, {x}"),
        )?;
        ensure(
            eval_map(&MapSpec::new(a + h, nu, &cx.p, &cx.d), x).unwrap() > v,
            || format!("not increasing in a at {spec:?}, {x}"),
        )?;
    }
    Ok(format!("{n} points"))
}

fn trajectory_reproducible(cx: &Ctx) -> CheckResult {
    let mut rng = cx.rng(4);
    for _ in 0..cx.count(100) {
        let x0 = rng.random_range(0.01..0.97);
        let a = iterate_curriculum(&cx.p, &cx.d, x0, true);
        let b = iterate_curriculum(&cx.p, &cx.d, x0, true);
        let c = iterate_baseline(&cx.p, &cx.d, x0, 50);
        let e = iterate_baseline(&cx.p, &cx.d, x0, 50);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        ensure(bits(&a.values) == bits(&b.values) && bits(&c.values) == bits(&e.values), || {
            format!("x0 = {x0} not reproducible")
        })?;
    }
    Ok("bit-identical reruns".into())
}

fn telescoping(_: &Ctx) -> CheckResult {
    for levels in 2..40 {
        for beta in [0.01, 0.4, 1.0, 3.7] {
            let prod: f64 = dynamics::mid_coefficients(beta, levels).iter().product();
            let target = (levels as f64).powf(-beta);
            ensure((prod / target - 1.0).abs() < 1e-12, || format!("L = {levels}, beta = {beta}"))?;
        }
    }
    Ok("prod a_mid = L^-beta".into())
}

fn bisect_cubic(lo: f64, hi: f64, target: f64, increasing: bool) -> f64 {
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (mid * (1.0 - mid) * (1.0 - mid) < target) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn cubic_oracle(cx: &Ctx) -> CheckResult {
    let mut rng = cx.rng(5);
    let n = cx.count(1000);
    let mut worst = 0.0f64;
    for _ in 0..n {
        let sigma = rng.random_range(1e-4..sigma_max() - 1e-4);
        let (ym, yp) = cubic_roots(SigmaParam { sigma }).unwrap();
        let t = sigma * sigma;
        let err = (ym - bisect_cubic(0.0, 1.0 / 3.0, t, true))
            .abs()
            .max((yp - bisect_cubic(1.0 / 3.0, 1.0, t, false)).abs());
        worst = worst.max(err);
    }
    ensure(worst < 1e-10, || format!("worst error {worst:e}"))?;
    Ok(format!("{n} sigmas, worst {worst:.1e}"))
}

fn random_interval_args(rng: &mut ChaCha8Rng) -> (f64, f64) {
    (rng.random_range(0.3..1.5), rng.random_range(1e-4..0.03))
}

fn inclusion(cx: &Ctx) -> CheckResult {
    let mut rng = cx.rng(6);
    let n = cx.count(500);
    for _ in 0..n {
        let (a1, nu) = random_interval_args(&mut rng);
        let a2 = a1 + rng.random_range(1e-3..1.0);
        let (i1, i2) = (invariant_interval_at(a1, nu, &cx.p, &cx.d), invariant_interval_at(a2, nu, &cx.p, &cx.d));
        if i1.valid {
            ensure(i1.is_subset_of(&i2), || format!("a: {a1} vs {a2} at nu = {nu}"))?;
        }
        let (a, nu1) = random_interval_args(&mut rng);
        let nu2 = nu1 + rng.random_range(1e-5..0.01);
        let (j1, j2) = (invariant_interval_at(a, nu1, &cx.p, &cx.d), invariant_interval_at(a, nu2, &cx.p, &cx.d));
        if j2.valid {
            ensure(j2.is_subset_of(&j1), || format!("nu: {nu1} vs {nu2} at a = {a}"))?;
        }
    }
    Ok(format!("{n} pairs each in a and nu"))
}

fn baseline_interval_in_nu(cx: &Ctx) -> CheckResult {
    let nus: Vec<f64> = (0..200).map(|k| k as f64 * 1.5e-4).collect();
    let ivs: Vec<_> = nus.iter().map(|&nu| invariant_interval_at(1.0, nu, &cx.p, &cx.d)).collect();
    for w in ivs.windows(2) {
        if w[1].valid {
            ensure(w[1].lo > w[0].lo && w[1].hi < w[0].hi && w[1].len() < w[0].len(), || {
                format!("{:?} -> {:?}", w[0], w[1])
            })?;
        }
    }
    Ok("x- up, x+ down, length down".into())
}

fn gap_identity(cx: &Ctx) -> CheckResult {
    let mut rng = cx.rng(7);
    for _ in 0..cx.count(1000) {
        let (a, nu) = random_interval_args(&mut rng);
        let i = invariant_interval_at(a, nu, &cx.p, &cx.d);
        if !i.valid {
            continue;
        }
        let s = SigmaParam { sigma: cubic::sigma_value(a, nu, &cx.p, &cx.d).unwrap() };
        let (_, scale) = conjugacy(a, nu, &cx.p, &cx.d);
        let expected = scale * exact_gap(s).unwrap();
        ensure((i.len() - expected).abs() <= 1e-12 * expected, || format!("a = {a}, nu = {nu}"))?;
    }
    Ok("|I| = scale (2/sqrt 3) sin u".into())
}

fn fixed_point_slopes(cx: &Ctx) -> CheckResult {
    let mut rng = cx.rng(8);
    for _ in 0..cx.count(1000) {
        let sigma = rng.random_range(1e-4..sigma_max() - 1e-4);
        let (ym, yp) = cubic_roots(SigmaParam { sigma }).unwrap();
        ensure(fixed_point_slope(ym) > 1.0 && fixed_point_slope(yp) < 1.0, || format!("sigma = {sigma}"))?;
    }
    Ok("repelling lower, attracting upper".into())
}

fn random_tuple(rng: &mut ChaCha8Rng) -> (f64, f64, f64, f64) {
    let bl = rng.random_range(0.01..2.0);
    (bl, bl + rng.random_range(0.01..1.0), rng.random_range(1e-4..0.02), rng.random_range(0.05..0.98))
}

fn e_monotonicity(cx: &Ctx) -> CheckResult {
    let mut rng = cx.rng(9);
    let (mut tested, h) = (0usize, 1e-6);
    let e = |bl, bh, nu, x0| regions::error_functional_e(&ErrorFunctionalInputs::new(bl, bh, nu, x0), &cx.p, &cx.d);
    for _ in 0..cx.count(2000) {
        let (bl, bh, nu, x0) = random_tuple(&mut rng);
        if let (Ok(v), Ok(vn), Ok(vx), Ok(vb)) = (e(bl, bh, nu, x0), e(bl, bh, nu + h, x0), e(bl, bh, nu, x0 + h), e(bl, bh + h, nu, x0)) {
            tested += 1;
            ensure(vx > v, || format!("dE/dx0 <= 0 at {:?}", (bl, bh, nu, x0)))?;
            ensure(vn < v, || format!("dE/dnu >= 0 at {:?}", (bl, bh, nu, x0)))?;
            ensure(vb < v, || format!("dE/dbeta >= 0 at {:?}", (bl, bh, nu, x0)))?;
        }
    }
    Ok(format!("{tested} admissible tuples"))
}

fn improvement_equivalence(cx: &Ctx) -> CheckResult {
    let mut rng = cx.rng(10);
    let mut tested = 0;
    for _ in 0..cx.count(300) {
        let (bl, bh, nu, x0) = random_tuple(&mut rng);
        let Ok(x) = regions::improvement_threshold_x(bl, bh, nu, &cx.p, &cx.d) else { continue };
        if (x0 - x).abs() < 1e-9 {
            continue;
        }
        tested += 1;
        let n_neg = matches!(
            regions::improvement_condition_n(&ErrorFunctionalInputs::new(bl, bh, nu, x0), &cx.p, &cx.d),
            Ok(v) if v < 0.0
        );
        let in_interval = regions::improvement_interval(bl, bh, nu, &cx.p, &cx.d).contains(x0);
        ensure(n_neg == (x0 > x) && (x0 > x) == in_interval, || format!("{:?}", (bl, bh, nu, x0, x)))?;
    }
    Ok(format!("{tested} tuples"))
}

fn nu_star_below_nu_t(cx: &Ctx) -> CheckResult {
    let nu_t = regions::critical_nu_t(&cx.p, &cx.d).map_err(|e| e.to_string())?;
    let x0 = 0.5 * (1.0 - cx.p.gamma);
    let k = if cx.fast { 5 } else { 20 };
    for i in 0..k {
        for j in 0..k {
            let bl = 0.05 + 0.1 * i as f64;
            let bh = bl + 0.05 + 0.1 * j as f64;
            let ns = regions::nu_star(bl, bh, x0, &cx.p, &cx.d).map_err(|e| e.to_string())?;
            ensure(ns.value < nu_t, || format!("nu* = {} >= nu_T = {nu_t} at ({bl}, {bh})", ns.value))?;
        }
    }
    Ok(format!("nu_T = {nu_t:.6}"))
}

fn t3_above_t1(cx: &Ctx) -> CheckResult {
    let mut rng = cx.rng(11);
    for _ in 0..cx.count(1000) {
        let (bl, bh, nu, x0) = random_tuple(&mut rng);
        if let Ok(t) = regions::error_terms(&ErrorFunctionalInputs::new(bl, bh, nu, x0), &cx.p, &cx.d) {
            ensure(t.t3 > t.t1, || format!("{:?}", (bl, bh, nu, x0)))?;
        }
    }
    Ok("T3 > T1".into())
}

fn coefficients_in_beta(cx: &Ctx) -> CheckResult {
    let grid: Vec<f64> = (1..=400).map(|k| k as f64 * 0.025).collect();
    let c: Vec<_> = grid.iter().map(|&b| level_coefficients(b, cx.p.levels)).collect();
    ensure(c.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 > w[0].1), || "not increasing".into())?;
    Ok("a0, a_L increasing in beta'".into())
}

fn geometric_identity(_: &Ctx) -> CheckResult {
    for k in 1..20 {
        for q in [1e-8, 0.01, 0.3, 0.77, 0.99] {
            let closed: f64 = (1.0 - f64::powi(q, k as i32)) / (1.0 - q);
            let s = regions::geometric_partial_sum(q, k);
            ensure((closed / s - 1.0).abs() < 1e-12, || format!("q = {q}, k = {k}"))?;
        }
    }
    Ok("closed form equals sum".into())
}

fn scan_determinism(cx: &Ctx) -> CheckResult {
    let mut cfg = montecarlo::default_panel("c", true).unwrap();
    cfg.x0_grid = 200;
    let a = montecarlo::run_panel(&cfg, &cx.p, &cx.d).map_err(|e| e.to_string())?;
    let b = montecarlo::run_panel(&cfg, &cx.p, &cx.d).map_err(|e| e.to_string())?;
    let same = serde_json::to_string(&a).ok() == serde_json::to_string(&b).ok();
    ensure(same, || "scan results differ".into())?;
    Ok(format!("{} cells", a.cells.len()))
}

fn scan_consistency(cx: &Ctx) -> CheckResult {
    let grid = if cx.fast { 400 } else { montecarlo::DEFAULT_X0_GRID };
    let h = (1.0 - cx.p.gamma) / grid as f64;
    let nu_c = regions::critical_nu_c(0.1, 0.4, &cx.p, &cx.d).map_err(|e| e.to_string())?.value;
    let mut checked = 0;
    for frac in [0.05, 0.3, 0.6, 0.9] {
        let nu = frac * nu_c;
        let (measured, _) = montecarlo::scan_cell(RegionKind::Improvement, 0.1, 0.4, nu, grid, None, &cx.p, &cx.d);
        let i_n = regions::improvement_interval(0.1, 0.4, nu, &cx.p, &cx.d);
        let i_m = regions::feasibility_interval_at(0.1, 0.4, nu, &cx.p, &cx.d);
        if !(i_n.valid && i_m.valid) {
            continue;
        }
        let (lo, hi) = (i_n.lo.max(i_m.lo), i_n.hi.min(i_m.hi));
        if lo >= hi {
            continue;
        }
        checked += 1;
        ensure(measured.valid && measured.lo <= lo + h && measured.hi >= hi - h, || {
            format!("nu = {nu}: measured {measured:?} misses ({lo}, {hi})")
        })?;
    }
    Ok(format!("{checked} cells cover I_N and I_M"))
}

fn grid_refinement(cx: &Ctx) -> CheckResult {
    let grids: &[usize] = if cx.fast { &[250, 500, 1000] } else { &[500, 1000, 2000, 4000] };
    for &g in grids {
        let (m, a) = montecarlo::scan_cell(RegionKind::Feasibility, 0.1, 0.4, 0.005, g, None, &cx.p, &cx.d);
        let h = (1.0 - cx.p.gamma) / g as f64;
        ensure((m.hi - a.hi).abs() <= h, || format!("grid {g}: |{} - {}| > {h}", m.hi, a.hi))?;
    }
    Ok("upper feasibility endpoint within one cell at every grid".into())
}

fn sim_acceptance_mean(cx: &Ctx) -> CheckResult {
    let p = TheoryParams { n: 400, m: 3, ..cx.p };
    let d = derive_constants(&p).unwrap();
    let world = sim::build_world(1000, 0.4, &p, cx.seed).map_err(|e| e.to_string())?;
    let (z, _) = sim::acceptance_rates(&world, p.m);
    let reps = cx.count(400) as u64;
    let recs = sim::run_replications(&world, &p, &d, 1, reps, cx.seed).map_err(|e| e.to_string())?;
    let counts: Vec<f64> = recs.iter().map(|r| r.n_accept as f64).collect();
    let mean = counts.iter().sum::<f64>() / counts.len() as f64;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (counts.len() - 1) as f64;
    let se = (var / counts.len() as f64).sqrt();
    ensure((mean - p.n as f64 * z).abs() < 3.0 * se, || format!("mean {mean} vs {}", p.n as f64 * z))?;
    Ok(format!("mean {mean:.2} vs n Z = {:.2}", p.n as f64 * z))
}

fn sim_ratio_and_update(cx: &Ctx) -> CheckResult {
    let p = TheoryParams { n: 300, ..cx.p };
    let d = derive_constants(&p).unwrap();
    for s in 0..cx.count(50) as u64 {
        let mut world = sim::build_world(500, 0.3 + 0.01 * (s % 40) as f64, &p, s).map_err(|e| e.to_string())?;
        ensure(sim::ratio_zm_over_alpham(&world, p.m).unwrap() >= 1.0, || "ratio < 1".into())?;
        let recs = sim::run_selfimprove_replication(&mut world, &p, &d, 3, s, 0).map_err(|e| e.to_string())?;
        ensure(world.alpha.iter().all(|&a| a > 0.0 && a <= 1.0), || "alpha left (0, 1]".into())?;
        ensure(recs.last().unwrap().v_realized == world.expected_reward(), || "V mismatch".into())?;
        let again = sim::run_selfimprove(&sim::build_world(500, 0.3 + 0.01 * (s % 40) as f64, &p, s).unwrap(), &p, &d, 3, s)
            .unwrap();
        ensure(again == recs, || "not reproducible".into())?;
    }
    Ok("ratio >= 1, alpha in (0,1], V consistent, reproducible".into())
}

/// Run every property. `fast` shrinks sample counts and grids.
pub fn run_all(p: &TheoryParams, fast: bool, seed: u64) -> Vec<CheckOutcome> {
    let d = match derive_constants(p) {
        Ok(d) => d,
        Err(e) => {
            return vec![CheckOutcome { name: "parameters", passed: false, detail: e.to_string() }];
        }
    };
    let cx = Ctx { p: *p, d, fast, seed };
    let checks: [(&'static str, fn(&Ctx) -> CheckResult); 24] = [
        ("constants deterministic and monotone", constants_monotone),
        ("zero budget fully valid", zero_budget_valid),
        ("map monotone in x, nu, a", map_monotonicity),
        ("trajectories reproducible", trajectory_reproducible),
        ("a_mid telescoping", telescoping),
        ("cubic roots match bisection", cubic_oracle),
        ("interval inclusion in a and nu", inclusion),
        ("baseline interval shrinks in nu", baseline_interval_in_nu),
        ("interval gap identity", gap_identity),
        ("fixed-point slope classification", fixed_point_slopes),
        ("E monotone in x0, nu, beta", e_monotonicity),
        ("N < 0 iff x0 in I_N", improvement_equivalence),
        ("nu* < nu_T", nu_star_below_nu_t),
        ("T3 > T1", t3_above_t1),
        ("a0, a_L increasing", coefficients_in_beta),
        ("geometric sum identity", geometric_identity),
        ("scan determinism", scan_determinism),
        ("measured improvement covers analytic", scan_consistency),
        ("grid refinement", grid_refinement),
        ("h(beta') increasing", h_increasing),
        ("conditional mean inequality", conditional_mean),
        ("ratio Z/alpha non-increasing in m", ratio_in_m),
        ("acceptance count mean", sim_acceptance_mean),
        ("simulator ratio, update, reproducibility", sim_ratio_and_update),
    ];
    checks
        .iter()
        .map(|(name, f)| {
            let (passed, detail) = match f(&cx) {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            CheckOutcome { name, passed, detail }
        })
        .collect()
}

fn h_increasing(_: &Ctx) -> CheckResult {
    for levels in [2usize, 3, 5, 10] {
        let hs: Vec<f64> = (0..=1999).map(|k| regions::al_ratio_h(0.01 + k as f64 * 0.01, levels)).collect();
        ensure(hs.windows(2).all(|w| w[1] > w[0]), || format!("L = {levels}"))?;
    }
    Ok("strictly increasing on [0.01, 20]".into())
}

fn conditional_mean(cx: &Ctx) -> CheckResult {
    let betas = if cx.fast { 5 } else { 20 };
    for levels in 2..=12usize {
        for b in 0..betas {
            let bl = 0.05 + 0.25 * b as f64;
            for k in 0..50 {
                let t = k as f64 / 50.0 * (levels as f64).ln();
                let (lhs, rhs) = regions::conditional_mean_check(levels, bl, t).map_err(|e| e.to_string())?;
                ensure(lhs <= rhs + 1e-12, || format!("L = {levels}, beta' = {bl}, t = {t}"))?;
            }
        }
    }
    Ok("E[X - t | X > t] <= E[X | X > 0]".into())
}

fn ratio_in_m(cx: &Ctx) -> CheckResult {
    for s in 0..cx.count(200) as u64 {
        let world = sim::build_world(300, 0.2 + 0.003 * (s % 200) as f64, &cx.p, s).map_err(|e| e.to_string())?;
        let rs: Vec<f64> = (1..=64).map(|m| sim::ratio_zm_over_alpham(&world, m).unwrap()).collect();
        ensure(rs.windows(2).all(|w| w[1] <= w[0] + 1e-12), || format!("world seed {s}"))?;
    }
    Ok("non-increasing over m = 1..64".into())
}
