//! Profile of nu*(beta', beta' + 0.1) with its small-beta' slope.
use selfimprove::regions::{nu_star_profile, small_beta_coefficient};
use selfimprove::{derive_constants, TheoryParams};

fn main() -> selfimprove::Result<()> {
    let p = TheoryParams::default();
    let d = derive_constants(&p)?;
    let gap = 0.1;
    let grid: Vec<f64> = (0..240).map(|k| 0.01 + 0.05 * k as f64).collect();
    let prof = nu_star_profile(gap, &grid, 0.5 * (1.0 - p.gamma), &p, &d)?;
    let best = prof.points[prof.argmax];
    println!("argmax beta' = {:.3}, nu* = {:.6}", best.beta_lo, best.nu_star);
    println!("local maxima = {}, tail slope of ln nu* = {:.4}", prof.local_maxima, prof.tail_slope);
    println!("small-beta' slope = {:.5}", small_beta_coefficient(gap, &p, &d));
    for pt in prof.points.iter().step_by(40) {
        println!("  beta' = {:>6.2}: nu* = {:.6}", pt.beta_lo, pt.nu_star);
    }
    Ok(())
}
