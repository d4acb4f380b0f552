//! Topic modeling with Gaussian topics over word embeddings.
//!
//! Every numerical routine is generic over [`Real`] (`f32` or `f64`). The
//! aliases at the bottom fix the scalar to `f64`.

pub mod corpus;
pub mod gmm;
pub mod metrics;
pub mod model;
pub mod numkernel;
pub mod scalar;
pub mod tensorio;
pub mod train;

pub use scalar::{Dtype, Real};

pub type TntmModel64 = model::TntmModel<f64>;
pub type TopicParams64 = model::TopicParams<f64>;
pub type GmmFit64 = gmm::GmmFit<f64>;
