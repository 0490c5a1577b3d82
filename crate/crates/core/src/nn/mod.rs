//! Temporal convolutional sequence labeler: model, loss, optimizer,
//! training loop and checkpoints.

mod adam;
pub mod checkpoint;
mod config;
mod loss;
mod tcn;
pub mod train;

pub use adam::Adam;
pub use checkpoint::SegmentationModel;
pub use config::{param_count, Head, TcnConfig};
pub use loss::{loss, loss_and_grad};
pub use tcn::{softmax_columns, Conv1d, ForwardCache, Tcn, TcnLayer};
pub use train::{predict, train, window_starts, Batch, BatchSampler, EpochLog, Recording, TrainConfig, TrainReport};

use ndarray::NdFloat;

/// Float types the network runs in.
pub trait Real: NdFloat + num_traits::Float + std::iter::Sum {}

impl Real for f32 {}
impl Real for f64 {}
