//! Auxiliary-classifier GANs used as image classifiers.
//!
//! The discriminator of an AC-GAN shares its feature extractor and class head
//! with a plain CNN and adds a real/fake source head. This crate trains the
//! five variants of that comparison (plain CNN, AC-GAN, Wasserstein AC-GAN with
//! gradient penalty, and each GAN with truncated latent sampling on the
//! discriminator's class term) and evaluates them.
//!
//! All numeric code is generic over [`Scalar`]; the aliases below fix the
//! element type used for training.

pub mod autograd;
pub mod checkpoint;
pub mod config;
pub mod datapipe;
pub mod error;
pub mod evalbench;
pub mod latent;
pub mod layers;
pub mod netspec;
pub mod objectives;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use rng::SeedStream;
pub use scalar::Scalar;
pub use tensor::Tensor;

/// Element type used for training runs.
pub type Real = f32;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Network32 = netspec::Network<f32>;
pub type Network64 = netspec::Network<f64>;
pub type Graph32 = autograd::Graph<f32>;
pub type Graph64 = autograd::Graph<f64>;
pub type LatentBatch32 = latent::LatentBatch<f32>;
pub type LabeledImageBatch32 = datapipe::LabeledImageBatch<f32>;
