//! Minimal CNN engine: tensors, layer kernels with hand-written backward
//! passes, a layer graph with skip connections, and weight files.

mod graph;
pub mod ops;
mod tensor;
mod weights;

pub use graph::{Gradients, Layer, LayerKind, ModelGraph, Node, Tape};
pub use ops::ParamGrad;
pub use tensor::Tensor;
pub use weights::{
    load_weights, read_weights, save_weights, weights_file_size, weights_to_bytes, write_weights,
    WEIGHTS_ENTRY_OVERHEAD, WEIGHTS_HEADER_LEN, WEIGHTS_MAGIC,
};
