//! Density evolution, BP thresholds and potential functions for nonbinary
//! (GF(2^m)) LDPC and spatially-coupled LDPC ensembles on the binary erasure
//! channel.

pub mod cli;
pub mod coupled;
pub mod de;
pub mod error;
pub mod linalg;
pub mod poly;
pub mod potential;
pub mod quadrature;
pub mod report;
pub mod subspace;
pub mod table;

pub use coupled::{CoupledState, CouplingMatrix};
pub use de::{boxdot, boxtimes, channel_pmf, Ccdf, DeConfig, DeOutcome, Ensemble, EnsembleParams, Pmf};
pub use error::{Error, Result};
pub use potential::{DMatrix, Potential};
pub use subspace::{CoeffKind, CoeffTensors};
