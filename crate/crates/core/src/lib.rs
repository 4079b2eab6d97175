//! Influence of individual training trajectories on the plug-in stochastic
//! LQR cost of a controller identified from data.
//!
//! The pipeline fits `[A B]` by ridge least squares, solves the DARE at the
//! estimate, and scores every trajectory by a first-order prediction of how
//! `Tr(P(θ̂)Ŵ)` moves when that trajectory is left out. Exact leave-one-out
//! refits are available as the reference.

pub mod error;
pub mod experiment;
pub mod influence;
pub mod linalg;
pub mod lqr;
pub mod metrics;
pub mod sysid;
pub mod systems;

pub use error::{Error, Result};
pub use linalg::Matrix;
