//! Improvement threshold x(nu) and the critical budgets nu_c, nu_T and nu*.
use selfimprove::regions::{critical_nu_c, critical_nu_t, improvement_threshold, nu_star};
use selfimprove::{derive_constants, TheoryParams};

fn main() -> selfimprove::Result<()> {
    let p = TheoryParams::default();
    let d = derive_constants(&p)?;
    let (bl, bh) = (p.beta_lo, p.beta_hi);
    let nu_c = critical_nu_c(bl, bh, &p, &d)?.value;
    println!("nu_c = {nu_c:.8}, nu_T = {:.8}", critical_nu_t(&p, &d)?);
    for frac in [0.1, 0.5, 0.9, 0.99] {
        let t = improvement_threshold(bl, bh, frac * nu_c, &p, &d)?;
        println!("x({frac} nu_c) = {:.6}", t.x);
    }
    for x0 in [0.2, 0.49, 0.8] {
        println!("nu*(x0 = {x0}) = {:.6}", nu_star(bl, bh, x0, &p, &d)?.value);
    }
    Ok(())
}
