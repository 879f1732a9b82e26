//! Unconstrained smooth minimization: an L-BFGS solver with strong Wolfe line
//! search, the smoothed matching energy in the joint variable
//! `z = (free control points, δρ)`, and the continuation loop that sweeps the
//! Huber smoothing parameter upward with warm starts.

mod energy;
mod lbfgs;
mod sfista;

pub use energy::{DiscreteProblem, SmoothedBreakdown};
pub use lbfgs::{lbfgs_minimize, IterationRecord, LbfgsConfig, LbfgsOutcome, Termination};
pub use sfista::{sfista_minimize, SfistaOutcome, SfistaSchedule, StageTrace};
