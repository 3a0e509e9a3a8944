//! Hyperbolic splitting, Selgrade levels and the exponential-separation check for a system
//! with one unstable real root.

use delaylab::spectral::{check_exponential_separation, compute_spectrum, hyperbolic_split, selgrade_grouping};
use delaylab::{DelaySystem, M2State};

fn main() -> delaylab::Result<()> {
    let sys = DelaySystem::scalar(&[1.0, -0.1], &[1.0, 0.0], &[1.0], (-1.0, 1.0))?;
    let sp = compute_spectrum(&sys, -4.0, 48)?;
    let split = hyperbolic_split(&sys, &sp)?;
    println!("dim V+ = {}, alpha = {:.4}, K = {:.3}", split.dim_plus, split.alpha_hat, split.k_hat);

    let y = M2State::from_fn(&sys, vec![1.0], |s| vec![1.0 + s]);
    let (plus, minus) = (split.project_plus(&y), split.project_minus(&y));
    println!("|y| = {:.4}  |pi+ y| = {:.4}  |pi- y| = {:.4}", y.norm(), plus.norm(), minus.norm());
    println!("V+ coordinates of y: {:?}", split.coordinates(&y));

    let groups = selgrade_grouping(&sys, &sp, 1e-6)?;
    for level in &groups.levels {
        println!("level lambda = {:+.4}: dim {} (cumulative {})", level.lambda, level.dim(), level.cumulative.len());
    }

    let sep = check_exponential_separation(&sys, &split, 4.0, 4)?;
    println!("exponential separation: gamma = {:.3}, pass = {}", sep.gamma_hat, sep.pass);
    Ok(())
}
