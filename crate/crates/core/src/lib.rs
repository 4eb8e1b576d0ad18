//! Action recognition from skeleton and depth sequences.
//!
//! The crate is organized along the recognition flow:
//!
//! * [`data`]: skeleton/depth containers, file formats, synthetic actions and
//!   rotation-based view augmentation.
//! * [`segmentation`]: joint-motion histograms, entropy curves and key-frame
//!   extraction that split a sample into segments.
//! * [`hod`]: Histogram of Oriented Displacements per segment.
//! * [`igmm`]: PCA plus an infinite Gaussian mixture (collapsed Gibbs) that
//!   turns segment descriptors into discrete symbols.
//! * [`dmm`]: depth motion maps, rainbow pseudo-coloring and the three-view
//!   segment classifier.
//! * [`temporal`]: per-action discrete HMMs and the one-vs-rest linear SVM over
//!   their likelihoods.
//! * [`pipeline`]: configuration, training/prediction orchestration, model
//!   archives and evaluation reports.

pub mod data;
pub mod dmm;
pub mod error;
pub mod hod;
pub mod igmm;
pub mod pipeline;
pub mod segmentation;
pub mod temporal;

mod math;

pub use error::{Error, ModelError, Result};
