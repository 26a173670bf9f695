//! Multiple testing of partial conjunction hypotheses with (weighted) false
//! discovery rate control, the generalized replicability-analysis procedure for
//! meta-analysis, and a Monte Carlo harness for checking the error bounds.
//!
//! Indices are 0-based throughout the library. A partial conjunction null
//! `H^{u/n}` states that fewer than `u` of the `n` elementary nulls in a group
//! are false.

pub mod cli;
pub mod combine;
mod error;
pub mod numerics;
pub mod partial_conjunction;
pub mod pc_testing;
pub mod procedures;
pub mod replicability;
pub mod simulation;

pub use combine::CombiningMethod;
pub use error::{Error, Result};
pub use partial_conjunction::PartialConjunctionQuery;
pub use pc_testing::{GroupLayout, WeightScheme};
pub use procedures::{RejectionSet, ShapeFunction, ThresholdCollection};
pub use replicability::{PValueMatrix, ReplicabilityReport, SelectionRule};
pub use simulation::{Dependence, McEstimate, SimulationScenario};




