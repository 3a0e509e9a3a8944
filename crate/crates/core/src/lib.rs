//! Numerical laboratory for linear control systems with delays in the states
//! and in the controls,
//!
//! ```text
//! x'(t) = A0 x(t) + sum_i Ai x(t - hi) + B0 u(t) + sum_i Bi u(t - hi),   u(t) in Omega,
//! ```
//!
//! posed on the state space `M2 = R^n x L2([-h, 0], R^n)`.
//!
//! The crate is organised by capability:
//!
//! * [`system`], [`state`], [`control`]: problem data, states, admissible controls and metrics.
//! * [`integrator`]: method-of-steps trajectories, the fundamental matrix, the control semiflow.
//! * [`spectral`]: characteristic roots, hyperbolicity, spectral projections, level grouping.
//! * [`hyperbolic`]: bounded entire solutions and the conjugacy to the homogeneous flow.
//! * [`chain`]: controlled chains, the scaling constructions and a box approximation of the
//!   chain control set.
//! * [`poincare`]: the bilinear lift, projective points and the equator test.
//! * [`cli`]: the command-line front end used by the `delaylab` binary.

pub mod chain;
pub mod cli;
pub mod control;
pub mod error;
pub mod hyperbolic;
pub mod integrator;
pub mod poincare;
pub mod spectral;
pub mod state;
pub mod system;

pub use control::{ControlSignal, MetricBasis};
pub use error::{Error, Result};
pub use integrator::Trajectory;
pub use state::M2State;
pub use system::DelaySystem;

/// Library version embedded in every artifact written by the CLI.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
