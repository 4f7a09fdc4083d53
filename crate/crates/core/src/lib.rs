//! Pothole surface-area measurement from calibrated pavement images.
//!
//! The crate is split along the measurement workflow:
//!
//! - [`imgcore`]: raster decoding plus the segmentation primitives (grayscale,
//!   thresholding, morphological opening, connected components).
//! - [`sizing`]: reference-page calibration to mm² per pixel and the
//!   Normal/Small/Large classification against tire contact area.
//! - [`dataset`]: CSV manifests, validation, auto-labelling and stratified splits.
//! - [`classifier`]: a small from-scratch convolutional baseline trained by SGD,
//!   and import of predictions produced by external models.
//! - [`eval`]: confusion matrices, one-vs-rest reduction and the
//!   accuracy/precision/recall/F1 report.

pub mod classifier;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod imgcore;
pub mod rng;
pub mod sizing;

pub use error::{Error, Result};
