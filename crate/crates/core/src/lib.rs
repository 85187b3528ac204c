//! Entropy-coding-free latent compression with residual vector quantization.
//!
//! A latent grid is split into four quadtree phase groups. Each group is
//! standardized by an affine transform predicted from the groups decoded
//! before it (plus coarse side information), quantized with a residual
//! vector quantizer, and transmitted as fixed-length indices. Two reference
//! schemes are provided for comparison: independent quantization of every
//! group, and scalar quantization with a Gaussian context model and rANS.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the crate root fix the element type to `f64`, which is what the
//! analysis and command-line tooling use.

pub mod analysis;
pub mod bitstream;
pub mod codec;
pub mod decorrelation;
pub mod entropy;
pub mod error;
pub mod latent;
pub mod quantizer;
pub mod rng;
pub mod scalar;
pub mod source;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type LatentGrid = latent::LatentGrid<f64>;
pub type LatentGridF32 = latent::LatentGrid<f32>;
pub type GroupedLatent = latent::GroupedLatent<f64>;
pub type HyperContext = latent::HyperContext<f64>;
pub type Codebook = quantizer::Codebook<f64>;
pub type CodebookF32 = quantizer::Codebook<f32>;
pub type ResidualVQ = quantizer::ResidualVQ<f64>;
pub type ResidualVQF32 = quantizer::ResidualVQ<f32>;
pub type QuantizerSet = quantizer::QuantizerSet<f64>;
pub type ContextPredictor = decorrelation::ContextPredictor;
pub type CodedLatent = decorrelation::CodedLatent<f64>;
