//! Point-feature label placement with stability-preserving re-optimization.
//!
//! Features are projected to screen pixels, each gets a small set of label
//! candidates, and conflicts between candidates form a weighted graph whose
//! independent sets are the valid labelings. Solvers range from a plain greedy
//! pass to an exact branch and bound; after user edits the current labeling is
//! re-optimized with a bonus for labels that were already shown.

pub mod candgen;
pub mod edits;
pub mod error;
pub mod io;
pub mod model;
pub mod service;
pub mod sim;
pub mod solvers;
pub mod update;

pub use error::{Error, Result};
