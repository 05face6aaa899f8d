//! Deep-learning laboratory for attenuating seismic multiples.
//!
//! The crate generates paired synthetic gathers (with and without
//! multiples), trains configurable U-nets on them with its own autodiff
//! engine, evaluates them with MSE/SNR/SSIM/PCORR, and compares them with
//! a parabolic Radon-transform demultiple baseline.

pub mod error;
pub mod gather;
pub mod harness;
pub mod introspect;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod radon;
pub mod synthgen;
pub mod tensor;
pub mod unet;

pub use error::{Error, Result};
pub use gather::{Gather, GatherGeometry};
pub use tensor::{Graph, Tensor, Var};
