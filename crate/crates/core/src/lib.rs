//! ActiveLab: batch active learning with multiple annotators.
//!
//! The library scores every example (labeled or not) by how much another
//! annotation would help, using CROWDLAB consensus and trust estimates, and
//! provides a simulation harness for comparing scorers.

pub mod annotations;
pub mod calibration;
pub mod classifiers;
pub mod commands;
pub mod config;
pub mod consensus;
pub mod error;
pub mod harness;
pub mod io;
pub mod matrix;
pub mod par;
pub mod report;
pub mod scoring;
pub mod seed;
pub mod simulation;

pub use annotations::{Annotation, AnnotationTable, ClassLabel};
pub use error::{Error, Result};
pub use matrix::{FeatureMatrix, ProbabilityMatrix};
pub use scoring::{score_examples, select_batch, Batch, ScorerKind, ScoringOptions};
