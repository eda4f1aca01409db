//! Iterate the baseline lower-bound map from inside and outside the
//! invariant interval and write one trajectory as CSV.
use selfimprove::cubic::invariant_interval;
use selfimprove::dynamics::iterate_baseline;
use selfimprove::{derive_constants, TheoryParams};

fn main() -> selfimprove::Result<()> {
    let p = TheoryParams::default();
    let d = derive_constants(&p)?;
    let i = invariant_interval(1.0, &p, &d);
    println!("I = ({:.6}, {:.6})", i.lo, i.hi);
    for x0 in [0.5 * i.lo, i.midpoint(), 0.5 * (i.hi + 0.98)] {
        let t = iterate_baseline(&p, &d, x0, 30);
        println!(
            "x0 = {x0:.4}: last = {:.6}, strict increases = {}, in domain = {}",
            t.last(),
            t.monotone_prefix,
            t.stayed_in_domain
        );
    }
    let path = std::env::temp_dir().join("baseline_trajectory.csv");
    iterate_baseline(&p, &d, 0.2, 30).write_csv(std::fs::File::create(&path)?)?;
    println!("wrote {}", path.display());
    Ok(())
}
