//! Spiking networks of current-based LIF neurons.

pub mod checkpoint;
pub mod layer;
pub mod model;
pub mod neuron;
pub mod ops;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
};
pub use layer::{Layer, LayerSpec, Shape};
pub use model::{
    assemble, build_conv, build_conv_snn, build_dense, build_dense_snn, predict, ForwardOutput,
    LayerCounts, ModelConfig, SnnModel, Source, SpikeStats, Trace, CLASSES,
};
pub use neuron::{cuba_step, CubaParams, NeuronConfig, NeuronState, SpikeMode};
pub use ops::{conv_forward, dense_forward, recurrent_forward, sumpool_forward, ConvGeometry};
