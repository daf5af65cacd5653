//! The ASIM network, its configuration and checkpoint format.

pub mod checkpoint;
pub mod config;
pub mod net;

pub use checkpoint::{file_hash, Checkpoint, TOOL_VERSION};
pub use config::{AsimConfig, Variant};
pub use net::{
    argmax, fuse, inter_attention, mask_of, Asim, AttentionNodes, Dropout, ForwardNodes, ForwardTrace, Fusion, Mode,
};
