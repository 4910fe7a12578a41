//! Deterministic random streams and the catalog of continuous marginals.

mod marginal;
mod rng;

pub use marginal::{Marginal, MaxMarginal};
pub use rng::{mix64, open01, site_counter, RngStream, StreamRng, StreamTable};
