//! Multi-query pattern classification by sparse subspace decomposition.
//!
//! Training samples of each class span a class subspace; a set of queries is
//! decomposed over the concatenated dictionary with a block-sparse greedy
//! solver ([`solver::ssd_romp`]), and classes are scored by how well their
//! block alone reconstructs the queries.
//!
//! ```
//! use nalgebra::DMatrix;
//! use ssm::classify::{ssm_classify, Labels, SsmConfig};
//!
//! let class_a = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
//! let class_b = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 0.0]);
//! let query = DMatrix::from_column_slice(3, 1, &[0.0, 2.0, 0.0]);
//! let report = ssm_classify(&query, &[class_a, class_b], &SsmConfig::default()).unwrap();
//! assert_eq!(report.labels, Labels::Single(1));
//! ```

pub mod blocksparse;
pub mod classify;
pub mod dictionary;
pub mod error;
pub mod harness;
pub mod projection;
pub mod rng;
pub mod solver;
pub mod synth;

pub use dictionary::{BlockLayout, QueryMatrix, TrainingDictionary};
pub use error::{Result, SsmError};
