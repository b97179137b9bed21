//! Dense tensors, reverse-mode autodiff, a GRU cell and Adam.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod gru;
pub mod init;
pub mod params;
pub mod tape;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gru::GruCell;
pub use params::{Gradients, ParamId, ParamStore};
pub use tape::{sigmoid, Tape, Var};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use tensor::Tensor;
