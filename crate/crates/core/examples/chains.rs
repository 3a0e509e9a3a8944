//! Controlled (eps, tau)-chains from an equilibrium to 0 and back, their verification and
//! the lift to the control flow.

use delaylab::chain::{build_chain_from_zero, build_chain_to_zero, lift_chain, seed_loop, verify_chain, verify_lifted};
use delaylab::{ControlSignal, DelaySystem, M2State, MetricBasis};

fn main() -> delaylab::Result<()> {
    let sys = DelaySystem::scalar(&[-1.0, -0.5], &[1.0, 0.0], &[1.0], (-1.0, 1.0))?;
    let y = M2State::constant(&sys, &[2.0 / 3.0]);
    let u = ControlSignal::constant(&[1.0], -sys.h(), sys.default_step())?;
    let eps = 0.05;
    let seed = seed_loop(&sys, &y, &u, 1.0, 0.5 * eps, 4)?;

    let mut to = build_chain_to_zero(&sys, &y, eps, 1.0, &seed)?;
    let rep = verify_chain(&sys, &mut to.chain);
    println!("to 0:   {} legs, alpha {:.4}, worst jump {:.2e} <= {eps}: {}", to.chain.q(), to.alpha, rep.worst_jump, rep.valid);

    let mut from = build_chain_from_zero(&sys, &y, eps, 1.0, &seed)?;
    let rep = verify_chain(&sys, &mut from.chain);
    println!(
        "from 0: {} legs, {} ladder steps, worst jump {:.2e} <= {:.4}: {}",
        from.chain.q(),
        from.steps,
        rep.worst_jump,
        from.chain.epsilon,
        rep.valid
    );

    let zero = ControlSignal::zero(1, sys.default_step());
    let mut lifted = lift_chain(&sys, &to.chain, &zero, &zero)?;
    let rep = verify_lifted(&sys, &mut lifted, &zero, &zero, &MetricBasis::new(1, MetricBasis::DEFAULT_TERMS))?;
    println!("lifted: worst product-metric jump {:.2e}, valid {}", rep.worst, rep.valid);

    println!("{}", serde_json::to_string(&to.chain.to_json()).map(|s| format!("chain file: {} bytes", s.len()))?);
    Ok(())
}
