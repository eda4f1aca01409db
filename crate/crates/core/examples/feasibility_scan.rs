//! Fast grid scan of one feasibility and one improvement panel.
use selfimprove::montecarlo::{default_panel, run_panel};
use selfimprove::{derive_constants, TheoryParams};

fn main() -> selfimprove::Result<()> {
    let p = TheoryParams::default();
    let d = derive_constants(&p)?;
    for name in ["a", "c"] {
        let cfg = default_panel(name, true).expect("known panel");
        let res = run_panel(&cfg, &p, &d)?;
        println!("panel {name} ({:?}), cell width {:.2e}", res.kind, res.cell_width);
        for c in res.cells.iter().filter(|c| c.nu == 0.01) {
            println!(
                "  beta' = {:.2}, beta = {:.2}: measured ({:.4}, {:.4}), analytic ({:.4}, {:.4})",
                c.beta_lo, c.beta_hi, c.measured.lo, c.measured.hi, c.analytic.lo, c.analytic.hi
            );
        }
    }
    Ok(())
}
