//! Dense tensors, reverse-mode differentiation, Adam, and the checkpoint
//! archive format.

mod adam;
mod checkpoint;
pub mod gradcheck;
mod graph;
mod tensor;

pub use adam::AdamState;
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC};
pub use graph::{sigmoid, softmax_in_place, Graph, Var, BCE_CLAMP};
pub use tensor::Tensor;

