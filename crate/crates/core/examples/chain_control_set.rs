//! Box approximation of the chain control set containing 0 for `x' = -x - 0.5 x(t - 1) + u`,
//! `u in [-1, 1]`. The set of equilibria is `[-2/3, 2/3]`.

use delaylab::chain::boxes::{approximate_chain_control_set, BoxOptions, Reduction, Region};
use delaylab::cli::chainset_controls;
use delaylab::DelaySystem;

fn main() -> delaylab::Result<()> {
    let sys = DelaySystem::scalar(&[-1.0, -0.5], &[1.0, 0.0], &[1.0], (-1.0, 1.0))?;
    let controls = chainset_controls(&sys, 17, 4, 1.0, 0)?;
    for depth in [4, 5, 6] {
        let w = 2.0 / (1u64 << depth) as f64;
        let region = Region::new(vec![-1.0 - w / 2.0], vec![1.0 - w / 2.0])?;
        let cover = approximate_chain_control_set(
            &sys,
            Reduction::HeadConstantHistory,
            &region,
            depth,
            &controls,
            &BoxOptions::default(),
        )?;
        println!(
            "depth {depth}: {} boxes of width {w}, head projection {:?}, roundtrip error {:.1e}",
            cover.boxes.len(),
            cover.projection(0),
            cover.roundtrip_error
        );
    }

    // two reduced coordinates: head and the first Legendre coefficient of the history
    let region = Region::new(vec![-1.0 - 1.0 / 32.0; 2], vec![1.0 - 1.0 / 32.0; 2])?;
    let cover = approximate_chain_control_set(
        &sys,
        Reduction::HeadLegendre { k: 1 },
        &region,
        4,
        &controls,
        &BoxOptions::default(),
    )?;
    println!("legendre:1 depth 4: {} of {} boxes, volume {:.4}", cover.boxes.len(), cover.graph.len(), cover.volume());
    Ok(())
}
