//! Structure-based scoring and ranking of single-point protein variants.
//!
//! - [`structio`]: structure parsing and atomic radius graphs
//! - [`scorer`]: the equivariant residue-identity network and its training
//! - [`variants`]: score matrices, candidate mutations and rankings
//! - [`fitness`]: score-augmented ridge regression and learning curves
//! - [`metrics`]: rank correlations, top-10 metrics, confusion matrices
//! - [`ingest`]: DMS assays, structure fetching, RES datasets

pub mod fitness;
pub mod ingest;
pub mod metrics;
pub mod scorer;
pub mod structio;
pub mod variants;
