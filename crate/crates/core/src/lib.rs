//! Landing-point prediction for a flying ball from a single camera.
//!
//! The crate bundles the whole pipeline: court-corner extraction from a
//! grayscale frame ([`vision`]), a cascaded pair of transformers that first
//! classifies a trajectory as in/out and then regresses its landing point
//! ([`model`]), a synthetic trajectory and court generator ([`synth`]), and
//! the evaluation harness ([`eval`]). Everything is built on the small
//! autodiff engine in [`numcore`].

pub mod error;
pub mod eval;
pub mod geom;
pub mod model;
pub mod numcore;
pub mod synth;
pub mod vision;

pub use error::{Error, Result};
