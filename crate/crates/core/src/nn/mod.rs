//! Layer graph, composite blocks and the trainable [`Network`].

mod blocks;
mod layer;
mod network;

pub use blocks::{InceptionBlock, InceptionResnetBlock, InceptionWidths, ParallelBranches};
pub use layer::{Conv3d, Dense, Layer, LayerKind, MaxPool3d, Param, ParamRole};
pub use network::{init_parameters, Network};

pub(crate) use layer::{output_shape_seq, sigmoid};
