use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::Task;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// Per-frame softmax over classes.
    ClassPosterior,
    /// Identity output, used for regression.
    Linear,
}

/// Hyperparameters of the temporal convolutional network.
///
/// Each layer is a dilated convolution (dilation `2^i` inside a block),
/// per-channel normalization over time, ReLU and a pointwise convolution.
/// A residual connection is added around every block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TcnConfig {
    pub input_dim: usize,
    #[serde(default = "default_bottleneck")]
    pub bottleneck_dim: usize,
    #[serde(default = "default_hidden")]
    pub hidden_dim: usize,
    #[serde(default = "default_kernel")]
    pub kernel_size: usize,
    #[serde(default = "default_blocks")]
    pub num_blocks: usize,
    #[serde(default = "default_layers")]
    pub layers_per_block: usize,
    pub output_dim: usize,
    pub head: Head,
}

fn default_bottleneck() -> usize {
    64
}
fn default_hidden() -> usize {
    64
}
fn default_kernel() -> usize {
    3
}
fn default_blocks() -> usize {
    3
}
fn default_layers() -> usize {
    5
}

impl TcnConfig {
    /// Default architecture for a task: two-class softmax for VAD/OSD,
    /// a single linear output for SCD.
    pub fn for_task(input_dim: usize, task: Task) -> Self {
        let (output_dim, head) = if task.is_classification() {
            (2, Head::ClassPosterior)
        } else {
            (1, Head::Linear)
        };
        Self {
            input_dim,
            bottleneck_dim: default_bottleneck(),
            hidden_dim: default_hidden(),
            kernel_size: default_kernel(),
            num_blocks: default_blocks(),
            layers_per_block: default_layers(),
            output_dim,
            head,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.input_dim,
            self.bottleneck_dim,
            self.hidden_dim,
            self.kernel_size,
            self.num_blocks,
            self.layers_per_block,
            self.output_dim,
        ];
        if dims.contains(&0) {
            return Err(Error::Config(format!("all TCN dimensions must be positive: {self:?}")));
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(Error::Config("kernel_size must be odd for same padding".into()));
        }
        if self.head == Head::ClassPosterior && self.output_dim < 2 {
            return Err(Error::Config("class posterior head needs output_dim >= 2".into()));
        }
        Ok(())
    }

    pub fn dilation(&self, layer: usize) -> usize {
        1 << layer
    }

    /// Frames of context seen by one output frame.
    pub fn receptive_field(&self) -> usize {
        let per_block: usize = (0..self.layers_per_block)
            .map(|l| (self.kernel_size - 1) * self.dilation(l))
            .sum();
        1 + self.num_blocks * per_block
    }

    /// Input and output channels of layer `layer` within a block.
    pub fn layer_dims(&self, layer: usize) -> (usize, usize) {
        let cin = if layer == 0 {
            self.bottleneck_dim
        } else {
            self.hidden_dim
        };
        let cout = if layer + 1 == self.layers_per_block {
            self.bottleneck_dim
        } else {
            self.hidden_dim
        };
        (cin, cout)
    }

    /// Exact number of trainable parameters.
    pub fn param_count(&self) -> usize {
        let conv = |cin: usize, cout: usize, k: usize| cin * cout * k + cout;
        let bottleneck = conv(self.input_dim, self.bottleneck_dim, 1);
        let per_block: usize = (0..self.layers_per_block)
            .map(|l| {
                let (cin, cout) = self.layer_dims(l);
                conv(cin, self.hidden_dim, self.kernel_size) + 2 * self.hidden_dim + conv(self.hidden_dim, cout, 1)
            })
            .sum();
        let head = conv(self.bottleneck_dim, self.output_dim, 1);
        bottleneck + self.num_blocks * per_block + head
    }
}

pub fn param_count(config: &TcnConfig) -> usize {
    config.param_count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn receptive_field_arithmetic() {
        let c = TcnConfig::for_task(59, Task::Vad);
        let one_block = TcnConfig {
            num_blocks: 1,
            ..c.clone()
        };
        assert_eq!(one_block.receptive_field(), 63);
        assert_eq!(c.receptive_field(), 187);
    }

    #[test]
    fn parameter_counts_track_input_dim() {
        let base = TcnConfig::for_task(59, Task::Vad).param_count();
        let wider = TcnConfig::for_task(59 + 2056, Task::Vad).param_count();
        assert_eq!(wider - base, 2056 * 64);
        let scd = TcnConfig::for_task(59, Task::Scd).param_count();
        assert_eq!(base - scd, 64 + 1);
    }

    #[test]
    fn validation() {
        let mut c = TcnConfig::for_task(10, Task::Osd);
        c.validate().unwrap();
        c.kernel_size = 4;
        assert!(c.validate().is_err());
        c.kernel_size = 3;
        c.hidden_dim = 0;
        assert!(c.validate().is_err());
    }
}
