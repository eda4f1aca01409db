//! Easy-to-hard curriculum against the flat baseline: final bounds after L
//! rounds for a few initializations.
use selfimprove::dynamics::{curriculum_coefficients, iterate_baseline, iterate_curriculum};
use selfimprove::regions::{feasibility_interval, improvement_interval};
use selfimprove::{derive_constants, TheoryParams};

fn main() -> selfimprove::Result<()> {
    let p = TheoryParams::default();
    let d = derive_constants(&p)?;
    let coef = curriculum_coefficients(&p)?;
    println!("a0 = {:.4}, a_L = {:.4}, a_t = {:?}", coef.a0, coef.a_l, coef.a_mid);
    let im = feasibility_interval(&p, &d);
    let i_n = improvement_interval(p.beta_lo, p.beta_hi, d.nu, &p, &d);
    println!("I_M = ({:.4}, {:.4}), I_N = ({:.4}, {:.4})", im.lo, im.hi, i_n.lo, i_n.hi);
    for x0 in [0.1, 0.3, 0.5, 0.7] {
        let base = iterate_baseline(&p, &d, x0, p.levels);
        let curr = iterate_curriculum(&p, &d, x0, true);
        println!(
            "x0 = {x0}: baseline {:.5}, curriculum {:.5}, gain {:+.5}",
            base.last(),
            curr.last(),
            curr.last() - base.last()
        );
    }
    Ok(())
}
