//! Sparse transmit array design.
//!
//! Selects `P` active transmitters out of `N` uniformly spaced candidate
//! positions and designs the transmit waveform correlation matrix
//! `R = Σ_l R_l` so that power concentrates on the target directions while
//! undesired directions and cross-target correlations are suppressed. The
//! design relaxes the rank-one per-target problem to an SDP with a
//! reweighted group-sparsity penalty, bisects the penalty weight until the
//! support has `P` sensors, and re-solves on that support.

pub mod conic;
pub mod config;
pub mod error;
pub mod eval;
pub mod hermitian;
pub mod model;
pub mod oracle;
pub mod sdr;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use model::{restrict, steering_vector, Angle, ArrayGrid, Direction, Scenario, SelectionMask};
