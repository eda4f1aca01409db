//! Seeded simulation of the generate, filter, update loop with the
//! per-round lower bound.
use selfimprove::sim::{build_world, coverage, run_replications};
use selfimprove::{derive_constants, TheoryParams};

fn main() -> selfimprove::Result<()> {
    let p = TheoryParams { n: 2000, ..Default::default() };
    let d = derive_constants(&p)?;
    let world = build_world(10_000, 0.5, &p, 1)?;
    println!("V_0 = {:.4}", world.expected_reward());
    let records = run_replications(&world, &p, &d, 4, 20, 1)?;
    for r in records.iter().filter(|r| r.replication == 0) {
        println!(
            "round {}: accepted {}, V {:.4} -> {:.4}, bound {:.4}",
            r.round, r.n_accept, r.v_before, r.v_realized, r.bound
        );
    }
    println!("coverage over 20 replications: {:.3}", coverage(&records));
    Ok(())
}
