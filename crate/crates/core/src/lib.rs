//! Adaptive exact completion of low-rank matrices whose rows may be replaced
//! by non-degenerate noise on an unknown sparse set.
//!
//! The observed matrix is `N = M + Δ`, where `M` has rank `r` and `Δ` is
//! nonzero only on a small set of rows `Γ`. Entries of `N` are revealed one
//! query at a time through a [`QueryOracle`]. [`completion::run`] finds an
//! invertible certificate block, flags the rows of `Γ` by a rank-drop test and
//! reconstructs every entry of `M` outside the flagged rows.
//!
//! ```
//! use noisyrow::{completion, instances, CompletionParams, QueryOracle};
//!
//! let inst = instances::generate(&instances::GeneratorConfig::gaussian(12, 10, 2, 1, 7)).unwrap();
//! let mut oracle = QueryOracle::for_instance(&inst, 1).unwrap();
//! let result = completion::run(&mut oracle, &CompletionParams::default()).unwrap();
//! assert_eq!(result.noisy_rows_hat, inst.noisy_rows());
//! ```

pub mod completion;
pub mod error;
pub mod instances;
pub mod linalg;
pub mod oracle;
pub mod par;
pub mod report;
pub mod verify;

pub use completion::{CompletionParams, CompletionResult, CompletionStatus, DiscoveryState};
pub use error::{Error, Result};
pub use instances::{GeneratorConfig, GeneratorMode, GroundTruthInstance};
pub use linalg::{DenseMatrix, RankTolerance, SubspaceBasis};
pub use oracle::QueryOracle;
pub use par::Execution;
