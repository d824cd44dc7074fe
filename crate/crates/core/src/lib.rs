//! Non-neural machinery for multi-label atomic activity recognition at road
//! intersections: the 64-class activity taxonomy, flip augmentation with
//! label remapping, frame sampling plans, score ensembling, branch merging,
//! mAP evaluation, and a seeded simulator for end-to-end testing.

pub mod augmentation;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod matrix;
pub mod rng;
pub mod sampling;
pub mod simulation;
pub mod taxonomy;

pub use error::{Error, Result};
pub use matrix::{LabelMatrix, ScoreMatrix, SourceTag};
pub use taxonomy::{Agent, AtomicActivity, ClassIndex, ClassList, Region};
