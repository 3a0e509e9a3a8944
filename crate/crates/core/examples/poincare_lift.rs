//! Projective lift: distance to the equator along a growing ray, and the embedded graph of
//! bounded entire solutions staying away from it.

use delaylab::hyperbolic::{control_family, EntireSolver};
use delaylab::poincare::{embed_h1, equator_distance, hyperbolic_subbundle_sample, lifted_flow, projective_distance, LiftedState, ProjectivePoint};
use delaylab::spectral::{compute_spectrum, hyperbolic_split};
use delaylab::{ControlSignal, DelaySystem, M2State};

fn main() -> delaylab::Result<()> {
    let sys = DelaySystem::scalar(&[-1.0, -0.5], &[1.0, 0.0], &[1.0], (-1.0, 1.0))?;
    let u = ControlSignal::zero(1, sys.default_step());
    let y0 = M2State::from_fn(&sys, vec![1.0], |s| vec![1.0 + s]);
    let y0 = y0.scaled(1.0 / y0.norm());
    for t in [1.0, 10.0, 100.0, 1e3, 1e4] {
        println!("t = {t:>7}: equator distance {:.3e}", equator_distance(&embed_h1(&u, &y0.scaled(t)).1));
    }

    let a = embed_h1(&u, &y0).1;
    let b = embed_h1(&u, &y0.scaled(1.01)).1;
    println!("d_P between y and 1.01 y: {:.3e}", projective_distance(&a, &b)?);

    let moved = lifted_flow(&sys, &LiftedState::new(y0.clone(), 1.0), &ControlSignal::constant(&[1.0], 0.0, sys.default_step())?, 2.0)?;
    println!("lifted flow for 2 time units: equator distance {:.4}", equator_distance(&ProjectivePoint::new(&moved)?));

    let split = hyperbolic_split(&sys, &compute_spectrum(&sys, -2.0, 48)?)?;
    let solver = EntireSolver::new(&sys, &split, 1e-8)?;
    let controls = control_family(&sys, &solver, 6, 7)?;
    let sample = hyperbolic_subbundle_sample(&solver, &controls)?;
    println!("subbundle: {} points, min equator distance {:.4}", sample.points.len(), sample.min_equator_distance);
    Ok(())
}
