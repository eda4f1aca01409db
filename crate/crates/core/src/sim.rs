//! Stochastic simulation of the generate, filter, update loop on a synthetic
//! question universe with binary reward.

use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::{DerivedConstants, TheoryParams};

/// Smallest acceptance probability the update may produce.
pub const ALPHA_FLOOR: f64 = 1e-4;

/// Tolerance of the realized-versus-bound comparison.
pub const BOUND_TOL: f64 = 1e-12;

/// Synthetic question universe.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimWorld {
    pub weights: Vec<f64>,
    pub alpha: Vec<f64>,
    pub c: f64,
    pub gamma: f64,
}

impl SimWorld {
    /// Wrap explicit vectors, checking every invariant.
    pub fn from_parts(weights: Vec<f64>, alpha: Vec<f64>, c: f64, gamma: f64) -> Result<Self> {
        let world = SimWorld { weights, alpha, c, gamma };
        world.check()?;
        Ok(world)
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    /// Population expected reward `sum_q w_q alpha_q`.
    pub fn expected_reward(&self) -> f64 {
        self.weights.iter().zip(&self.alpha).map(|(w, a)| w * a).sum()
    }

    /// Weight of the questions with `alpha_q < c V`.
    pub fn low_mass(&self) -> f64 {
        let thr = self.c * self.expected_reward();
        self.weights.iter().zip(&self.alpha).filter(|(_, &a)| a < thr).map(|(w, _)| w).sum()
    }

    pub fn check(&self) -> Result<()> {
        if self.weights.len() != self.alpha.len() || self.weights.is_empty() {
            return Err(Error::InfeasibleWorld("weights and alpha must be non-empty and equally long".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 || self.weights.iter().any(|&w| w < 0.0) {
            return Err(Error::InfeasibleWorld(format!("weights sum to {total}")));
        }
        if self.alpha.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
            return Err(Error::InfeasibleWorld("alpha outside (0, 1]".into()));
        }
        let low = self.low_mass();
        if low > self.gamma + 1e-12 {
            return Err(Error::InfeasibleWorld(format!(
                "mass {low} below c V exceeds gamma = {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Uniform-weight world with expected reward `v_target` satisfying the
/// coupling with the configured `(c, gamma)`.
pub fn build_world(q: usize, v_target: f64, p: &TheoryParams, seed: u64) -> Result<SimWorld> {
    build_world_coupled(q, v_target, p.c, p.gamma, seed)
}

/// As [`build_world`] with explicit coupling constants; `c = 0` is allowed.
///
/// A `floor(gamma Q)` group gets acceptance rates in `[0.2, 0.9] c V`; the
/// rest are spread symmetrically around the mean that makes the population
/// reward exactly `V`, inside `[c V, 1]`.
pub fn build_world_coupled(q: usize, v_target: f64, c: f64, gamma: f64, seed: u64) -> Result<SimWorld> {
    if q == 0 {
        return Err(Error::invalid("Q", "must be >= 1"));
    }
    if !(v_target > 0.0 && v_target < 1.0) {
        return Err(Error::invalid("V_target", format!("must lie in (0,1), got {v_target}")));
    }
    if !(0.0..=1.0).contains(&c) || !(0.0..1.0).contains(&gamma) {
        return Err(Error::InfeasibleWorld(format!("coupling (c, gamma) = ({c}, {gamma}) out of range")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let thr = c * v_target;
    let low_count = ((gamma * q as f64).floor() as usize).min(q - 1);
    let mut alpha: Vec<f64> = (0..low_count).map(|_| thr * rng.random_range(0.2..0.9)).collect();
    let high_count = q - low_count;
    let high_mean = (q as f64 * v_target - alpha.iter().sum::<f64>()) / high_count as f64;
    if !(high_mean >= thr && high_mean <= 1.0) || (low_count > 0 && thr <= 0.0) {
        return Err(Error::InfeasibleWorld(format!(
            "no valid vector: the majority group would need mean {high_mean} within [{thr}, 1]"
        )));
    }
    let spread = 0.9 * (high_mean - thr).min(1.0 - high_mean);
    let mut u: Vec<f64> = (0..high_count).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let mean_u = u.iter().sum::<f64>() / high_count as f64;
    u.iter_mut().for_each(|x| *x -= mean_u);
    let max_abs = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let scale = if max_abs > 0.0 { spread / max_abs } else { 0.0 };
    alpha.extend(u.iter().map(|x| high_mean + scale * x));
    let weights = vec![1.0 / q as f64; q];
    let world = SimWorld::from_parts(weights, alpha, c, gamma)?;
    if (world.expected_reward() - v_target).abs() > 1e-3 {
        return Err(Error::InfeasibleWorld("expected reward missed its target".into()));
    }
    Ok(world)
}

/// `1 - (1 - a)^m`.
pub fn multi_accept(a: f64, m: u32) -> f64 {
    -(m as f64 * (-a).ln_1p()).exp_m1()
}

/// `(Z^(m), alpha^(m))` of a world.
pub fn acceptance_rates(world: &SimWorld, m: u32) -> (f64, f64) {
    let mut z = 0.0;
    let mut min = f64::INFINITY;
    for (w, &a) in world.weights.iter().zip(&world.alpha) {
        let acc = multi_accept(a, m);
        z += w * acc;
        if *w > 0.0 {
            min = min.min(acc);
        }
    }
    (z, min)
}

/// Population ratio `Z^(m) / alpha^(m)`.
pub fn ratio_zm_over_alpham(world: &SimWorld, m: u32) -> Result<f64> {
    if m < 1 {
        return Err(Error::invalid("m", "must be >= 1"));
    }
    let (z, min) = acceptance_rates(world, m);
    if !(min > 0.0) {
        return Err(Error::domain("degenerate world: minimum acceptance rate is 0"));
    }
    Ok(z / min)
}

/// `h_m(y) = (1 - y^{m+1}) / (1 - y^m)`.
pub fn hm_ratio(y: f64, m: u32) -> Result<f64> {
    if !(0.0..1.0).contains(&y) {
        return Err(Error::domain(format!("y = {y} outside [0, 1)")));
    }
    if m < 1 {
        return Err(Error::invalid("m", "must be >= 1"));
    }
    if y == 0.0 {
        return Ok(1.0);
    }
    let ym = (m as f64 * y.ln()).exp();
    // 1 + y^m (1 - y) / (1 - y^m), avoiding cancellation as y -> 1
    Ok(1.0 + ym * (1.0 - y) / -(m as f64 * y.ln()).exp_m1())
}

/// One simulated round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub replication: u64,
    pub round: u64,
    pub n_accept: u64,
    /// No candidate was accepted; the update was skipped.
    pub collapsed: bool,
    pub z_m: f64,
    pub alpha_m_min: f64,
    pub v_before: f64,
    pub v_realized: f64,
    pub bound: f64,
    pub bound_satisfied: bool,
}

/// Generator for one `(replication, round)` pair.
pub fn substream(seed: u64, replication: u64, round: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((replication << 32) | (round & 0xffff_ffff));
    rng
}

/// Run `rounds` rounds on `world` (mutated in place) for one replication.
///
/// Each round samples `n` questions from the weights, accepts each with
/// probability `1 - (1 - alpha_q)^m`, then spreads the error budget
/// `eps = c_delta / sqrt(n_accept)` over the filtered marginal
/// `pf_q = w_q acc_q / Z` as `delta_q = eps pf_q / sum pf^2`, so that the
/// error measured under the filtered marginal is exactly `eps`, and sets
/// `alpha_q = max(floor, 1 - delta_q)` on every question of the support.
pub fn run_selfimprove_replication(
    world: &mut SimWorld,
    p: &TheoryParams,
    d: &DerivedConstants,
    rounds: u64,
    seed: u64,
    replication: u64,
) -> Result<Vec<RoundRecord>> {
    if rounds < 1 {
        return Err(Error::invalid("rounds", "must be >= 1"));
    }
    let sampler = WeightedIndex::new(&world.weights).map_err(|e| Error::InfeasibleWorld(e.to_string()))?;
    let mut records = Vec::with_capacity(rounds as usize);
    for round in 0..rounds {
        let mut rng = substream(seed, replication, round);
        let (z_m, alpha_m_min) = acceptance_rates(world, p.m);
        let v_before = world.expected_reward();
        let mut n_accept = 0u64;
        for _ in 0..p.n {
            let q = sampler.sample(&mut rng);
            if rng.random::<f64>() < multi_accept(world.alpha[q], p.m) {
                n_accept += 1;
            }
        }
        if n_accept == 0 {
            records.push(RoundRecord {
                replication,
                round,
                n_accept,
                collapsed: true,
                z_m,
                alpha_m_min,
                v_before,
                v_realized: v_before,
                bound: f64::NAN,
                bound_satisfied: false,
            });
            continue;
        }
        let eps = d.c_delta / (n_accept as f64).sqrt();
        let bound = p.tau * (1.0 - z_m / alpha_m_min * eps);
        let filtered: Vec<f64> = world
            .weights
            .iter()
            .zip(&world.alpha)
            .map(|(w, &a)| w * multi_accept(a, p.m) / z_m)
            .collect();
        let sum_sq: f64 = filtered.iter().map(|f| f * f).sum();
        for (a, f) in world.alpha.iter_mut().zip(&filtered) {
            *a = (1.0 - eps * f / sum_sq).max(ALPHA_FLOOR);
        }
        let v_realized = world.expected_reward();
        records.push(RoundRecord {
            replication,
            round,
            n_accept,
            collapsed: false,
            z_m,
            alpha_m_min,
            v_before,
            v_realized,
            bound,
            bound_satisfied: v_realized >= bound - BOUND_TOL,
        });
    }
    Ok(records)
}

/// Single replication on a copy of `world`.
pub fn run_selfimprove(
    world: &SimWorld,
    p: &TheoryParams,
    d: &DerivedConstants,
    rounds: u64,
    seed: u64,
) -> Result<Vec<RoundRecord>> {
    let mut w = world.clone();
    run_selfimprove_replication(&mut w, p, d, rounds, seed, 0)
}

/// Independent replications in parallel, returned in replication order.
pub fn run_replications(
    world: &SimWorld,
    p: &TheoryParams,
    d: &DerivedConstants,
    rounds: u64,
    replications: u64,
    seed: u64,
) -> Result<Vec<RoundRecord>> {
    let per_rep = (0..replications)
        .into_par_iter()
        .map(|r| {
            let mut w = world.clone();
            run_selfimprove_replication(&mut w, p, d, rounds, seed, r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_rep.into_iter().flatten().collect())
}

/// Fraction of non-collapsed rounds whose realized reward meets the bound.
pub fn coverage(records: &[RoundRecord]) -> f64 {
    let live: Vec<_> = records.iter().filter(|r| !r.collapsed).collect();
    if live.is_empty() {
        return 0.0;
    }
    live.iter().filter(|r| r.bound_satisfied).count() as f64 / live.len() as f64
}

/// CSV with columns `replication, round, n_accept, Z_m, alpha_m_min,
/// V_realized, bound, bound_satisfied`.
pub fn write_records_csv<W: Write>(records: &[RoundRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "replication",
        "round",
        "n_accept",
        "Z_m",
        "alpha_m_min",
        "V_realized",
        "bound",
        "bound_satisfied",
    ])?;
    for r in records {
        w.write_record([
            r.replication.to_string(),
            r.round.to_string(),
            r.n_accept.to_string(),
            r.z_m.to_string(),
            r.alpha_m_min.to_string(),
            r.v_realized.to_string(),
            r.bound.to_string(),
            r.bound_satisfied.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::derive_constants;
    use proptest::prelude::*;

    fn sim_params(n: u64, m: u32) -> (TheoryParams, DerivedConstants) {
        let p = TheoryParams { n, m, ..Default::default() };
        (p, derive_constants(&p).unwrap())
    }

    #[test]
    fn constant_world_is_coupled_for_any_c() {
        let w = SimWorld::from_parts(vec![0.25; 4], vec![0.4; 4], 1.0, 0.0).unwrap();
        assert_eq!(w.low_mass(), 0.0);
        for m in [1, 4, 64] {
            assert!((ratio_zm_over_alpham(&w, m).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_coupling_accepts_anything() {
        let w = SimWorld::from_parts(vec![0.5, 0.5], vec![0.01, 0.99], 0.0, 0.0).unwrap();
        assert_eq!(w.low_mass(), 0.0);
        assert!(build_world_coupled(100, 0.3, 0.0, 0.0, 1).is_ok());
    }

    #[test]
    fn default_world_passes_invariants() {
        let p = TheoryParams::default();
        let w = build_world(10_000, 0.5, &p, 3).unwrap();
        assert!((w.expected_reward() - 0.5).abs() < 1e-3);
        assert!(w.low_mass() <= p.gamma);
        assert!(w.low_mass() > 0.0);
        assert_eq!(build_world(10_000, 0.5, &p, 3).unwrap(), w);
    }

    #[test]
    fn infeasible_targets_are_rejected() {
        // Nearly all mass must sit above c V = 0.99 * 0.999 with mean 0.999: fine;
        // but a huge low group cannot be compensated.
        assert!(matches!(build_world_coupled(100, 0.995, 0.999, 0.9, 1), Err(Error::InfeasibleWorld(_))));
        assert!(build_world_coupled(100, 1.5, 0.9, 0.02, 1).is_err());
    }

    #[test]
    fn hm_identities() {
        for y in [0.0, 0.2, 0.7, 0.999] {
            assert!((hm_ratio(y, 1).unwrap() - (1.0 + y)).abs() < 1e-12);
        }
        for m in 1..10 {
            assert_eq!(hm_ratio(0.0, m).unwrap(), 1.0);
        }
        assert!(hm_ratio(1.0, 3).is_err());
    }

    #[test]
    fn ratio_tends_to_one() {
        let p = TheoryParams::default();
        let w = build_world(2000, 0.5, &p, 11).unwrap();
        let min = w.alpha.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min >= 0.05);
        assert!((ratio_zm_over_alpham(&w, 1024).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_alpha_is_degenerate() {
        let w = SimWorld { weights: vec![0.5, 0.5], alpha: vec![0.0, 1.0], c: 0.0, gamma: 0.0 };
        assert!(ratio_zm_over_alpham(&w, 2).is_err());
    }

    #[test]
    fn records_are_reproducible_and_consistent() {
        let (p, d) = sim_params(500, 4);
        let world = build_world(1000, 0.5, &p, 5).unwrap();
        let a = run_replications(&world, &p, &d, 4, 3, 9).unwrap();
        let b = run_replications(&world, &p, &d, 4, 3, 9).unwrap();
        assert_eq!(a, b);
        for r in &a {
            assert!(r.n_accept <= p.n);
        }
        let mut w = world.clone();
        let recs = run_selfimprove_replication(&mut w, &p, &d, 3, 9, 0).unwrap();
        assert_eq!(recs.last().unwrap().v_realized, w.expected_reward());
        assert!(w.alpha.iter().all(|&a| a > 0.0 && a <= 1.0));
        assert_eq!(&recs[..], &a[..3]);
    }

    #[test]
    fn acceptance_count_mean_matches() {
        let (p, d) = sim_params(400, 2);
        let world = build_world(1000, 0.4, &p, 2).unwrap();
        let (z, _) = acceptance_rates(&world, p.m);
        let recs = run_replications(&world, &p, &d, 1, 400, 1).unwrap();
        let counts: Vec<f64> = recs.iter().map(|r| r.n_accept as f64).collect();
        let mean = counts.iter().sum::<f64>() / counts.len() as f64;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (counts.len() - 1) as f64;
        let se = (var / counts.len() as f64).sqrt();
        assert!((mean - p.n as f64 * z).abs() < 3.0 * se, "{mean} vs {}", p.n as f64 * z);
    }

    #[test]
    fn collapse_keeps_alpha() {
        let (p, d) = sim_params(1, 1);
        let world = SimWorld::from_parts(vec![1.0], vec![1e-9], 0.0, 0.0).unwrap();
        let recs = run_selfimprove(&world, &p, &d, 2, 0).unwrap();
        assert!(recs.iter().all(|r| r.collapsed && r.v_realized == 1e-9));
    }

    #[test]
    fn csv_header() {
        let (p, d) = sim_params(50, 4);
        let world = build_world(100, 0.5, &p, 1).unwrap();
        let recs = run_selfimprove(&world, &p, &d, 2, 1).unwrap();
        let mut buf = Vec::new();
        write_records_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("replication,round,n_accept,Z_m,alpha_m_min,V_realized,bound,bound_satisfied\n"));
        assert_eq!(text.lines().count(), 3);
    }

    proptest! {
        #[test]
        fn ratio_non_increasing_in_m(seed in 0u64..1000, v in 0.2f64..0.8) {
            let p = TheoryParams::default();
            let w = build_world(200, v, &p, seed).unwrap();
            let rs: Vec<f64> = (1..=64).map(|m| ratio_zm_over_alpham(&w, m).unwrap()).collect();
            prop_assert!(rs.iter().all(|&r| r >= 1.0 - 1e-12));
            prop_assert!(rs.windows(2).all(|x| x[1] <= x[0] + 1e-12));
        }

        #[test]
        fn hm_increasing(y in 0.0f64..0.998, m in 1u32..50) {
            let (lo, hi) = (hm_ratio(y, m).unwrap(), hm_ratio(y + 1e-3, m).unwrap());
            prop_assert!(hi >= lo);
            if y.powi(m as i32) > 1e-12 {
                prop_assert!(hi > lo);
            }
        }
    }
}
