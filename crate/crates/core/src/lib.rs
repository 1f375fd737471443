//! Synthetic saccade/fixation event-camera data and spiking classifiers.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod eval;
pub mod event_sim;
pub mod kinematics;
pub mod pipeline;
pub mod render;
pub mod rng;
pub mod snn;
pub mod spike_codec;
pub mod train;

pub use error::{Error, Result};
