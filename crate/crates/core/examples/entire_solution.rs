//! Bounded entire solutions `e(u, t)` and the conjugacy `H` for a system with an unstable
//! direction.

use delaylab::hyperbolic::{control_family, EntireSolver};
use delaylab::integrator::{homogeneous_step, solve};
use delaylab::spectral::{compute_spectrum, hyperbolic_split};
use delaylab::state::m2_distance;
use delaylab::{DelaySystem, M2State};

fn main() -> delaylab::Result<()> {
    let sys = DelaySystem::scalar(&[1.0, -0.1], &[1.0, 0.0], &[1.0], (-1.0, 1.0))?;
    let split = hyperbolic_split(&sys, &compute_spectrum(&sys, -3.0, 48)?)?;
    let solver = EntireSolver::new(&sys, &split, 1e-8)?;
    println!("truncation: past {:.1}, future {:.1}", solver.t_past, solver.t_fut);

    let controls = control_family(&sys, &solver, 3, 42)?;
    for u in &controls {
        let e = solver.entire(u, 0.0)?;
        println!("e(u, 0): head {:+.6}  |e+| {:.4}  |e-| {:.4}", e.head()[0], solver.e_plus(u, 0.0)?.norm(), solver.e_minus(u, 0.0)?.norm());
    }

    // H(theta_t u, phi(t, y, u)) = T(t) H(u, y)
    let u = controls.last().unwrap();
    let y = M2State::from_fn(&sys, vec![0.3], |s| vec![0.3 * (1.0 + s)]);
    let t = 1.0;
    let moved = solve(&sys, &y, u, t, solver.step())?.final_state();
    let lhs = solver.conjugacy(&u.shift(t)?, &moved)?;
    let rhs = homogeneous_step(&sys, u, &solver.conjugacy(u, &y)?, t)?.1;
    println!("conjugacy residual at t = {t}: {:.2e}", m2_distance(&lhs, &rhs)?);
    Ok(())
}
