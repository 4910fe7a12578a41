//! Extremes of transient nearest-neighbour random walks in random sceneries.
//!
//! The crate simulates the composed sequence `ξ(S_n)`, estimates extremal
//! indices and cluster-size laws of its exceedances, computes the exact limit
//! objects (compound Poisson laws with explicit cluster distributions), and
//! checks the structural mixing and clustering conditions empirically.
//!
//! Modules, bottom-up:
//! - [`stochastic`]: counter-based streams and continuous marginals
//! - [`walk`]: the biased walk and the exact law of visit counts
//! - [`scenery`]: i.i.d. and moving-maximum fields, conditional sampling
//! - [`evt`]: thresholds, exceedances, cluster statistics, extremal index
//! - [`limits`]: exact cluster laws and compound Poisson objects
//! - [`diagnostics`]: clustering and mixing conditions, concentration event

pub mod diagnostics;
pub mod error;
pub mod evt;
pub mod limits;
pub mod parallel;
pub mod scenery;
pub mod stats;
pub mod stochastic;
pub mod walk;

pub use error::{Error, Result};
