//! Dataset storage, the HTTP service and helpers shared with the
//! `clipquery` binary. Querying and simulation live in `clipquery-core`.

use std::path::Path;

use clipquery_core::highway::{HighwayAbstractor, HighwayState, PredicateParams};

pub mod generator;
pub mod service;
pub mod store;
pub mod tracefile;

pub use generator::GenerateSpec;
pub use store::{Manifest, StoreError, Stored};

/// Loads a highway dataset, sizing the abstractor from the stored lane group.
pub fn load_highway(dir: &Path) -> Result<Stored<HighwayState>, StoreError> {
    let manifest = store::read_manifest(dir)?;
    let lanes = manifest.vocabulary.members("lanes").count();
    let lanes = u8::try_from(lanes).unwrap_or(0).max(2);
    store::load(dir, &HighwayAbstractor::new(lanes, PredicateParams::default()))
}
