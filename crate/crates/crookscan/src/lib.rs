//! Detection of a proximal "crook" morphology from 3D vessel centerlines,
//! with strategies for uncertain labels, percentile-based abstention, and
//! AUC bounds over unknown labels.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`]: centerline type, normalization, rotations.
//! * [`synthdata`]: seeded generator of labeled synthetic centerlines.
//! * [`nn`]: the dilated convolutional classifier and its training.
//! * [`uncertainty`]: turning unsure annotations into training targets.
//! * [`abstention`]: percentile-based rejection intervals.
//! * [`eval`]: AUC, best/worst bounds, cross-validation, t-tests, reports.
//! * [`io`]: file formats.
//! * [`experiment`]: the repeated cross-validation protocol end to end.

pub mod abstention;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod geometry;
pub mod io;
pub mod nn;
pub mod seed;
pub mod synthdata;
pub mod uncertainty;

pub use error::{Error, Result};
