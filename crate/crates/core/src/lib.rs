//! Numerical evaluation of missing-data handling strategies.
//!
//! The library covers the full loop: take a complete dataset (loaded or
//! synthesized), ampute it under an MCAR or MAR mechanism, run multiple
//! imputation (chained equations, random-forest, or joint-Gaussian) or a
//! complete-case IPW baseline, pool per-imputation estimates with Rubin's
//! rules, and score every strategy against gold-standard estimates with a
//! bias / error / coverage metric suite plus pairwise Wilcoxon win-tie-loss
//! grids.

pub mod amputation;
pub mod design;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod evaluation;
pub mod experiment;
pub mod frame;
pub mod imputers;
pub mod ipw;
pub mod linalg;
pub mod pooling;
pub mod rng;
pub mod stats;
pub mod synth;
pub mod tabular;

pub use error::{Error, Result};
pub use tabular::{ColumnKind, ColumnSpec, Dataset, PatternTable, Role};
