pub mod error;
pub mod explain;
pub mod extract;
pub mod kg;
pub mod mm;
pub mod model;
pub mod nn;
pub mod scalar;
pub mod synth;
pub mod train;

pub use error::{Error, ErrorKind, Result};
pub use scalar::Scalar;

pub type Tensor32 = nn::Tensor<f32>;
pub type Tensor64 = nn::Tensor<f64>;
pub type ParamStore32 = nn::ParamStore<f32>;
pub type ParamStore64 = nn::ParamStore<f64>;
pub type Model32 = model::Model<f32>;
pub type Model64 = model::Model<f64>;
pub type Trainer32<'a> = train::Trainer<'a, f32>;
pub type Trainer64<'a> = train::Trainer<'a, f64>;
