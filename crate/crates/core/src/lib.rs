//! Class-conditional von Mises–Fisher models of classifier penultimate
//! activations, built from nothing but the final layer's weights, and the
//! class-wise knowledge distillation they enable.
//!
//! * [`directional`]: vMF densities, normalizers, samplers and sphere quadrature.
//! * [`nn`]: dense classifiers with exact backpropagation.
//! * [`activation_model`]: per-class vMF components derived from `W`, the
//!   induced posterior, and Monte Carlo class-relation estimates.
//! * [`distill`]: KD / CKD objectives, input shifts and the experiment protocol.
//! * [`data`]: MNIST IDX ingestion, synthetic sets, CSV/SVG exports.

pub mod activation_model;
pub mod data;
pub mod directional;
pub mod distill;

mod error;
pub mod nn;

pub use error::{Error, Result};

/// Generator used for every random draw in the crate.
pub type SeededRng = rand_chacha::ChaCha8Rng;
