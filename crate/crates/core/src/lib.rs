//! Clustering mixtures of random utility models from partially observed
//! pairwise comparisons.
//!
//! Rankings are embedded as `±1/2` pairwise-comparison vectors, stacked
//! into a matrix with missing comparisons set to zero, denoised by hard
//! singular value thresholding and grouped by single-linkage clustering.
//! The crate also ships the samplers, exact oracles and diagnostics used to
//! study when that procedure succeeds.

pub mod clustering;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod experiments;
pub mod generators;
pub mod io;
pub mod matrix;
pub mod pipeline;
pub mod rankings;
pub mod rng;

pub use clustering::{single_linkage, ClusteringResult, GapRule};
pub use error::{Error, Result};
pub use evaluation::{misclassification_rate, EvaluationReport};
pub use generators::{ComponentSpec, Family, LabeledSample, MixtureSpec};
pub use matrix::{hsvt, HsvtEstimate, ObservationMatrix, SvdResult};
pub use pipeline::{run_pipeline, PipelineOptions, PipelineOutcome};
pub use rankings::{embed, kendall_tau, EmbeddedObservation, PairIndexer, Permutation};
