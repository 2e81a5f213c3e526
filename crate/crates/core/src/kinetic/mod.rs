//! Kinetic solver for the two-species fluctuation system
//!
//! ```text
//! d_t f + (1/e) v.grad f + (1/e^2) L f  = E.v h - (E + (1/e) v x B).grad_v h + (1/e) Gamma(f, f)
//! d_t h + (1/e) v.grad h - (1/e) E.v + (1/e^2) Ls h
//!                                       = E.v f - (E + (1/e) v x B).grad_v f + (1/e) Gamma(h, f)
//! e d_t E = curl B - j,   j = (1/e) <h, v>
//! d_t B = -curl E
//! ```
//!
//! in a Hermite (velocity) times Fourier (space) representation.

mod diagnostics;
mod solver;
mod state;

pub use diagnostics::{Conserved, DiagnosticsRecord};
pub use solver::{Integrator, KineticSolver, RhsSplit, RunOutput, SolverOptions, StepInfo, Tendency};
pub use state::{init_state, InitKind, KineticState};
