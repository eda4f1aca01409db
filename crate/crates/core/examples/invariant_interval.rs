//! The invariant interval of the baseline map: closed-form endpoints from the
//! cubic, shrinking as the budget parameter grows.
use selfimprove::cubic::{cubic_roots, invariant_interval_at, sigma_value, SigmaParam};
use selfimprove::{derive_constants, TheoryParams};

fn main() -> selfimprove::Result<()> {
    let p = TheoryParams::default();
    let d = derive_constants(&p)?;
    println!("{:>8} {:>10} {:>10} {:>10} {:>10}", "nu", "sigma", "x_-", "x_+", "length");
    for k in 0..=8 {
        let nu = 0.01 * k as f64;
        let i = invariant_interval_at(1.0, nu, &p, &d);
        let s = sigma_value(1.0, nu, &p, &d)?;
        if i.valid {
            println!("{nu:>8.3} {s:>10.5} {:>10.6} {:>10.6} {:>10.6}", i.lo, i.hi, i.len());
        } else {
            println!("{nu:>8.3} {s:>10.5} no interval ({})", i.issue.unwrap_or_default());
        }
    }
    let (ym, yp) = cubic_roots(SigmaParam { sigma: 0.2 })?;
    println!("roots of y(1-y)^2 = 0.04: {ym:.10}, {yp:.10}");
    Ok(())
}
