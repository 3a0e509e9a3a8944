//! Characteristic roots of `x' = -x(t - 1)` and of the critical `x' = -(pi/2) x(t - 1)`.

use delaylab::spectral::{check_hyperbolic, compute_spectrum, delta_eval, C64, DEFAULT_AXIS_MARGIN};
use delaylab::DelaySystem;

fn main() -> delaylab::Result<()> {
    let sys = DelaySystem::scalar(&[0.0, -1.0], &[1.0, 0.0], &[1.0], (-1.0, 1.0))?;
    for nodes in [16, 32, 48] {
        let sp = compute_spectrum(&sys, -3.0, nodes)?;
        let r = sp.rightmost().expect("roots in the strip");
        println!("N = {nodes:2}: {} roots, rightmost {:.12}", sp.roots.len(), r.mu);
    }
    let sp = compute_spectrum(&sys, -3.0, 48)?;
    for r in &sp.roots {
        println!("  mu = {:+.10} {:+.10}i  m = {}  |Delta| = {:.1e}", r.mu.re, r.mu.im, r.multiplicity, r.residual);
    }
    for d in &sp.diagnostics {
        println!("  note: {d}");
    }

    let critical = DelaySystem::scalar(&[0.0, -std::f64::consts::FRAC_PI_2], &[1.0, 0.0], &[1.0], (-1.0, 1.0))?;
    let at = C64::new(0.0, std::f64::consts::FRAC_PI_2);
    let sp = compute_spectrum(&critical, -2.0, 48)?;
    println!(
        "critical: |Delta(i pi/2)| = {:.1e}, verdict {:?}",
        delta_eval(&critical, at).norm(),
        check_hyperbolic(&sp, DEFAULT_AXIS_MARGIN)
    );
    Ok(())
}
