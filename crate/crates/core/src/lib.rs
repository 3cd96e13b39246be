//! Differentiable multichannel speech recognition: neural beamforming
//! (filter estimation and mask-based MVDR with attention-driven reference
//! selection) feeding an attention encoder-decoder recognizer, trained
//! jointly from multichannel STFTs to character sequences.

pub mod autodiff;
pub mod beamformer;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod params;
pub mod recognizer;
pub mod signal;
pub mod tensor;
pub mod train;

pub use autodiff::complex::{CVar, ComplexTensor};
pub use autodiff::{Graph, Var};
pub use error::{Error, Result};
pub use params::{AdaDelta, ParameterStore};
pub use tensor::Tensor;
