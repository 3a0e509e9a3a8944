//! Simulates `x' = -x(t) - 0.5 x(t - 1) + u(t)` under a bang-bang control and checks the
//! step integrator against the variation-of-parameters formula.
//!
//! ```text
//! cargo run --example simulate > trajectory.csv
//! ```

use delaylab::integrator::{fundamental_matrix, solve, solve_vdp};
use delaylab::{ControlSignal, DelaySystem, M2State};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> delaylab::Result<()> {
    let sys = DelaySystem::scalar(&[-1.0, -0.5], &[1.0, 0.0], &[1.0], (-1.0, 1.0))?;
    let dt = sys.default_step();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let u = ControlSignal::random_bang_bang(&mut rng, sys.omega(), 0.0, 5.0, dt, 0.5)?;
    let y0 = M2State::from_fn(&sys, vec![1.0], |s| vec![(3.0 * s).cos()]);

    let direct = solve(&sys, &y0, &u, 5.0, dt)?;
    let vdp = solve_vdp(&sys, &y0, &u, 5.0, dt)?;
    let gap = (0..=direct.steps())
        .map(|k| (direct.node(k)[0] - vdp.node(k)[0]).abs())
        .fold(0.0, f64::max);
    eprintln!("steps: {}  sup |x - x_vdp| = {gap:.2e}", direct.steps());
    eprintln!("X(2.5) = {:.12}", fundamental_matrix(&sys, 2.5)?[(0, 0)]);

    print!("{}", direct.to_csv());
    Ok(())
}
