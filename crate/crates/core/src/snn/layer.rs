use rand::distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::neuron::CubaParams;
use super::ops::{pool_out_hw, ConvGeometry};
use crate::error::{shape, Result};
use crate::rng::Rng;

/// Channel-major feature-map shape. Dense activations are `(n, 1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Shape {
            channels,
            height,
            width,
        }
    }

    pub fn flat(n: usize) -> Self {
        Shape::new(n, 1, 1)
    }

    pub fn size(&self) -> usize {
        self.channels * self.height * self.width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Recurrent {
        inputs: usize,
        outputs: usize,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        padding: usize,
        height: usize,
        width: usize,
    },
    SumPool {
        channels: usize,
        height: usize,
        width: usize,
        stride: usize,
    },
    Flatten {
        channels: usize,
        height: usize,
        width: usize,
    },
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Recurrent { .. } => "recurrent",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::SumPool { .. } => "sumpool",
            LayerSpec::Flatten { .. } => "flatten",
        }
    }

    pub fn input_shape(&self) -> Shape {
        match *self {
            LayerSpec::Dense { inputs, .. } | LayerSpec::Recurrent { inputs, .. } => {
                Shape::flat(inputs)
            }
            LayerSpec::Conv2d {
                in_channels,
                height,
                width,
                ..
            } => Shape::new(in_channels, height, width),
            LayerSpec::SumPool {
                channels,
                height,
                width,
                ..
            }
            | LayerSpec::Flatten {
                channels,
                height,
                width,
            } => Shape::new(channels, height, width),
        }
    }

    pub fn output_shape(&self) -> Shape {
        match *self {
            LayerSpec::Dense { outputs, .. } | LayerSpec::Recurrent { outputs, .. } => {
                Shape::flat(outputs)
            }
            LayerSpec::Conv2d { .. } => {
                let g = self.conv_geometry().expect("conv");
                let (h, w) = g.out_hw();
                Shape::new(g.out_channels, h, w)
            }
            LayerSpec::SumPool {
                channels,
                height,
                width,
                stride,
            } => {
                let (h, w) = pool_out_hw(height, width, stride);
                Shape::new(channels, h, w)
            }
            LayerSpec::Flatten {
                channels,
                height,
                width,
            } => Shape::flat(channels * height * width),
        }
    }

    pub fn conv_geometry(&self) -> Option<ConvGeometry> {
        match *self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                padding,
                height,
                width,
            } => Some(ConvGeometry {
                in_channels,
                out_channels,
                kernel,
                padding,
                height,
                width,
            }),
            _ => None,
        }
    }

    pub fn has_neurons(&self) -> bool {
        !matches!(self, LayerSpec::Flatten { .. })
    }

    pub fn weight_len(&self) -> usize {
        match *self {
            LayerSpec::Dense { inputs, outputs } | LayerSpec::Recurrent { inputs, outputs } => {
                inputs * outputs
            }
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => in_channels * out_channels * kernel * kernel,
            LayerSpec::SumPool { .. } | LayerSpec::Flatten { .. } => 0,
        }
    }

    pub fn recurrent_len(&self) -> usize {
        match *self {
            LayerSpec::Recurrent { outputs, .. } => outputs * outputs,
            _ => 0,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight_len() + self.recurrent_len()
    }

    /// Inputs feeding each neuron through the feed-forward weights.
    pub fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Dense { inputs, .. } | LayerSpec::Recurrent { inputs, .. } => inputs,
            LayerSpec::Conv2d {
                in_channels,
                kernel,
                ..
            } => in_channels * kernel * kernel,
            LayerSpec::SumPool { stride, .. } => stride * stride,
            LayerSpec::Flatten { .. } => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LayerSpec::Conv2d {
                kernel,
                padding,
                height,
                width,
                in_channels,
                out_channels,
            } => {
                if kernel == 0 || in_channels == 0 || out_channels == 0 {
                    return shape("conv layer with zero-sized kernel or channels");
                }
                if height + 2 * padding < kernel || width + 2 * padding < kernel {
                    return shape(format!(
                        "conv input {height}x{width} smaller than kernel {kernel}"
                    ));
                }
            }
            LayerSpec::SumPool {
                stride,
                height,
                width,
                ..
            } => {
                if stride == 0 || height < stride || width < stride {
                    return shape(format!(
                        "pool input {height}x{width} smaller than stride {stride}"
                    ));
                }
            }
            LayerSpec::Dense { inputs, outputs } | LayerSpec::Recurrent { inputs, outputs } => {
                if inputs == 0 || outputs == 0 {
                    return shape("dense layer with zero width");
                }
            }
            LayerSpec::Flatten { .. } => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub neuron: Option<CubaParams>,
    pub weights: Vec<f64>,
    pub recurrent: Vec<f64>,
    /// Per-synapse integer delays in timesteps (dense layers only).
    pub delays: Option<Vec<u8>>,
}

/// Rounds to the nearest `f32` so checkpoints reproduce weights exactly.
#[inline]
pub fn to_f32_grid(v: f64) -> f64 {
    v as f32 as f64
}

impl Layer {
    /// Weights uniform in `±gain/√fan_in`, rounded to f32.
    pub fn init(
        spec: LayerSpec,
        neuron: Option<CubaParams>,
        gain: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        spec.validate()?;
        let mut draw = |n: usize, fan_in: usize| -> Vec<f64> {
            // Drawn as f32: the weights live on that grid anyway.
            let bound = (gain / (fan_in as f64).sqrt()) as f32;
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            (0..n).map(|_| dist.sample(rng) as f64).collect()
        };
        let weights = draw(spec.weight_len(), spec.fan_in());
        let recurrent = match spec {
            LayerSpec::Recurrent { outputs, .. } => draw(spec.recurrent_len(), outputs),
            _ => Vec::new(),
        };
        Ok(Layer {
            spec,
            neuron: if spec.has_neurons() { neuron } else { None },
            weights,
            recurrent,
            delays: None,
        })
    }

    pub fn max_delay(&self) -> usize {
        self.delays
            .as_ref()
            .and_then(|d| d.iter().max())
            .map_or(0, |&d| d as usize)
    }

    /// Number of outgoing targets per input spike, used for synaptic-op accounting.
    pub fn fan_out(&self) -> usize {
        match self.spec {
            LayerSpec::Dense { outputs, .. } | LayerSpec::Recurrent { outputs, .. } => outputs,
            LayerSpec::Conv2d {
                out_channels,
                kernel,
                ..
            } => out_channels * kernel * kernel,
            LayerSpec::SumPool { .. } | LayerSpec::Flatten { .. } => 1,
        }
    }

    /// Rescales each neuron's incoming weight vector to `norm`.
    pub fn normalize_incoming(&mut self, norm: f64) {
        match self.spec {
            LayerSpec::Dense { inputs, outputs } | LayerSpec::Recurrent { inputs, outputs } => {
                for i in 0..outputs {
                    let sq: f64 = (0..inputs)
                        .map(|j| self.weights[j * outputs + i].powi(2))
                        .sum();
                    if sq > 0.0 {
                        let scale = norm / sq.sqrt();
                        for j in 0..inputs {
                            let w = &mut self.weights[j * outputs + i];
                            *w = to_f32_grid(*w * scale);
                        }
                    }
                }
            }
            LayerSpec::Conv2d { .. } => {
                let per_out = self.spec.fan_in();
                for chunk in self.weights.chunks_mut(per_out) {
                    let sq: f64 = chunk.iter().map(|w| w * w).sum();
                    if sq > 0.0 {
                        let scale = norm / sq.sqrt();
                        chunk.iter_mut().for_each(|w| *w = to_f32_grid(*w * scale));
                    }
                }
            }
            LayerSpec::SumPool { .. } | LayerSpec::Flatten { .. } => {}
        }
    }
}
