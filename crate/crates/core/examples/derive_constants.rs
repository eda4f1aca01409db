//! Confidence constants and the validity report at the default parameters
//! and at a tighter budget.
use selfimprove::{derive_constants, validate_domain, TheoryParams};

fn main() -> selfimprove::Result<()> {
    for p in [TheoryParams::default(), TheoryParams { n: 40_000, ..Default::default() }] {
        let d = derive_constants(&p)?;
        println!("n = {:>6}: c_delta = {:.8}, c_delta' = {:.8}, nu = {:.5}", p.n, d.c_delta, d.c_delta_prime, d.nu);
        let report = validate_domain(&p, &d);
        match report.first_violation() {
            None => println!("  all domain conditions hold"),
            Some(v) => println!("  violated: {v}"),
        }
    }
    // an explicit budget overrides n
    let p = TheoryParams::default().with_nu(0.03);
    println!("nu override: {:?}", derive_constants(&p)?);
    Ok(())
}
