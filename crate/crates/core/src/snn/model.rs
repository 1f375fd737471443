use serde::{Deserialize, Serialize};

use super::layer::{Layer, LayerSpec, Shape};
use super::neuron::{CubaParams, NeuronConfig, NeuronState, SpikeMode};
use super::ops::{conv_accumulate, dense_accumulate, dense_accumulate_sparse, sumpool_accumulate};
use crate::error::{param, shape, Result};
use crate::rng::{self, stream};
use crate::spike_codec::SpikeTensor;

pub const CLASSES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub neuron: NeuronConfig,
    /// Scale on the `±1/√fan_in` initialization bound. The membrane sees only
    /// `(1-β)` of the synaptic current, so a unit bound leaves every layer
    /// below threshold and without surrogate gradient.
    pub init_gain: f64,
    /// Largest per-synapse delay for dense layers; 0 disables delays.
    pub max_delay: u8,
    pub timesteps: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            neuron: NeuronConfig::default(),
            init_gain: 50.0,
            max_delay: 0,
            timesteps: 33,
        }
    }
}

/// Spike totals for one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCounts {
    /// Feed-forward input spikes summed over time, per layer.
    pub input_events: Vec<f64>,
    pub output_spikes: Vec<f64>,
    pub timesteps: usize,
}

/// Spike totals accumulated over many forward passes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpikeStats {
    pub input_events: Vec<f64>,
    pub output_spikes: Vec<f64>,
    pub timesteps: u64,
    pub samples: u64,
}

impl SpikeStats {
    pub fn record(&mut self, counts: &LayerCounts) {
        if self.input_events.is_empty() {
            self.input_events = vec![0.0; counts.input_events.len()];
            self.output_spikes = vec![0.0; counts.output_spikes.len()];
        }
        for (a, b) in self.input_events.iter_mut().zip(&counts.input_events) {
            *a += b;
        }
        for (a, b) in self.output_spikes.iter_mut().zip(&counts.output_spikes) {
            *a += b;
        }
        self.timesteps += counts.timesteps as u64;
        self.samples += 1;
    }

    pub fn is_empty(&self) -> bool {
        self.samples == 0
    }

    /// Mean feed-forward input spikes per timestep, per layer.
    pub fn mean_input_events(&self) -> Vec<f64> {
        let t = self.timesteps.max(1) as f64;
        self.input_events.iter().map(|v| v / t).collect()
    }

    pub fn mean_output_spikes(&self) -> Vec<f64> {
        let t = self.timesteps.max(1) as f64;
        self.output_spikes.iter().map(|v| v / t).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// `C × T` output spike trains.
    pub output: Vec<Vec<f64>>,
    pub counts: LayerCounts,
}

/// Per-timestep internals kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    pub timesteps: usize,
    /// `spikes[l][t]`, empty for layers without neurons.
    pub spikes: Vec<Vec<Vec<f64>>>,
    pub voltages: Vec<Vec<Vec<f64>>>,
}

/// Where a layer's input comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Tensor,
    Layer(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnnModel {
    pub architecture: String,
    pub input: Shape,
    pub classes: usize,
    pub timesteps: usize,
    pub init_gain: f64,
    pub layers: Vec<Layer>,
    pub stats: SpikeStats,
}

/// `flatten(2·H·W) → 512 → 512 → 2` with default neurons.
pub fn build_dense_snn(height: usize, width: usize) -> Result<SnnModel> {
    build_dense(height, width, &[512, 512], &ModelConfig::default(), 0)
}

pub fn build_dense(
    height: usize,
    width: usize,
    hidden: &[usize],
    cfg: &ModelConfig,
    seed: u64,
) -> Result<SnnModel> {
    let input = Shape::new(SpikeTensor::CHANNELS, height, width);
    let mut specs = vec![LayerSpec::Flatten {
        channels: input.channels,
        height,
        width,
    }];
    let mut fan_in = input.size();
    for &h in hidden.iter().chain(std::iter::once(&CLASSES)) {
        specs.push(LayerSpec::Dense {
            inputs: fan_in,
            outputs: h,
        });
        fan_in = h;
    }
    let name = format!(
        "dense[{}]",
        hidden
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(",")
    );
    assemble(name, input, specs, cfg, seed)
}

/// Sum-pool/conv stack with a recurrent head; shapes derived from `(H, W)`.
pub fn build_conv_snn(height: usize, width: usize) -> Result<SnnModel> {
    build_conv(height, width, &ModelConfig::default(), 0)
}

pub fn build_conv(height: usize, width: usize, cfg: &ModelConfig, seed: u64) -> Result<SnnModel> {
    let input = Shape::new(SpikeTensor::CHANNELS, height, width);
    let mut specs = Vec::new();
    let mut cur = input;
    let pool = |s: Shape| LayerSpec::SumPool {
        channels: s.channels,
        height: s.height,
        width: s.width,
        stride: 2,
    };
    let conv = |s: Shape, out: usize| LayerSpec::Conv2d {
        in_channels: s.channels,
        out_channels: out,
        kernel: 5,
        padding: 2,
        height: s.height,
        width: s.width,
    };
    for out_channels in [8, 8, 2] {
        let p = pool(cur);
        p.validate()?;
        cur = p.output_shape();
        specs.push(p);
        let c = conv(cur, out_channels);
        c.validate()?;
        cur = c.output_shape();
        specs.push(c);
    }
    specs.push(LayerSpec::Flatten {
        channels: cur.channels,
        height: cur.height,
        width: cur.width,
    });
    let flat = cur.size();
    specs.push(LayerSpec::Dense {
        inputs: flat,
        outputs: 512,
    });
    specs.push(LayerSpec::Recurrent {
        inputs: 512,
        outputs: 256,
    });
    specs.push(LayerSpec::Dense {
        inputs: 256,
        outputs: CLASSES,
    });
    assemble("conv".into(), input, specs, cfg, seed)
}

/// Builds a model from explicit layer specs (used for small test networks).
pub fn assemble(
    architecture: String,
    input: Shape,
    specs: Vec<LayerSpec>,
    cfg: &ModelConfig,
    seed: u64,
) -> Result<SnnModel> {
    let neuron = cfg.neuron.params()?;
    if !(cfg.init_gain > 0.0) {
        return param("init_gain must be positive");
    }
    let mut rng = rng::seeded(seed, stream::INIT);
    let mut layers = specs
        .into_iter()
        .map(|s| Layer::init(s, Some(neuron), cfg.init_gain, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    if cfg.max_delay > 0 {
        use rand::Rng as _;
        for layer in &mut layers {
            if matches!(layer.spec, LayerSpec::Dense { .. }) {
                layer.delays = Some(
                    (0..layer.weights.len())
                        .map(|_| rng.random_range(0..=cfg.max_delay))
                        .collect(),
                );
            }
        }
    }
    let model = SnnModel {
        architecture,
        input,
        classes: CLASSES,
        timesteps: cfg.timesteps,
        init_gain: cfg.init_gain,
        layers,
        stats: SpikeStats::default(),
    };
    model.validate()?;
    Ok(model)
}

enum Input<'a> {
    Sparse(&'a [u32]),
    Dense(&'a [f64]),
}

impl Input<'_> {
    fn events(&self) -> f64 {
        match self {
            Input::Sparse(a) => a.len() as f64,
            Input::Dense(d) => d.iter().sum(),
        }
    }
}

impl SnnModel {
    pub fn validate(&self) -> Result<()> {
        let mut cur = self.input;
        for (l, layer) in self.layers.iter().enumerate() {
            let spec = &layer.spec;
            spec.validate()?;
            let want = spec.input_shape();
            let composes = match spec {
                LayerSpec::Dense { .. } | LayerSpec::Recurrent { .. } => want.size() == cur.size(),
                _ => want == cur,
            };
            if !composes {
                return shape(format!(
                    "layer {l} ({}) expects {want:?}, receives {cur:?}",
                    spec.name()
                ));
            }
            if layer.weights.len() != spec.weight_len()
                || layer.recurrent.len() != spec.recurrent_len()
            {
                return shape(format!("layer {l} weight count does not match its shape"));
            }
            if let Some(d) = &layer.delays {
                if !matches!(spec, LayerSpec::Dense { .. }) || d.len() != layer.weights.len() {
                    return shape(format!("layer {l} has malformed delays"));
                }
            }
            if spec.has_neurons() != layer.neuron.is_some() {
                return shape(format!(
                    "layer {l} neuron parameters inconsistent with kind"
                ));
            }
            if let Some(p) = &layer.neuron {
                p.validate()?;
            }
            cur = spec.output_shape();
        }
        match self.layers.last() {
            Some(last) if last.spec.has_neurons() && cur.size() == self.classes => Ok(()),
            _ => shape(format!(
                "output layer must be a neuron layer with {} units",
                self.classes
            )),
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.spec.param_count()).sum()
    }

    pub fn sources(&self) -> Vec<Source> {
        let mut last = Source::Tensor;
        self.layers
            .iter()
            .enumerate()
            .map(|(l, layer)| {
                let src = last;
                if layer.spec.has_neurons() {
                    last = Source::Layer(l);
                }
                src
            })
            .collect()
    }

    fn check_input(&self, tensor: &SpikeTensor) -> Result<()> {
        if tensor.height != self.input.height || tensor.width != self.input.width {
            return shape(format!(
                "tensor is 2x{}x{}, model expects {}x{}x{}",
                tensor.height,
                tensor.width,
                self.input.channels,
                self.input.height,
                self.input.width
            ));
        }
        if tensor.bins() == 0 {
            return shape("tensor has no time bins");
        }
        Ok(())
    }

    pub fn forward(&self, tensor: &SpikeTensor) -> Result<ForwardOutput> {
        Ok(self.run(tensor, SpikeMode::Heaviside, false)?.0)
    }

    /// Forward pass that also keeps the per-step state needed by BPTT.
    pub fn forward_traced(
        &self,
        tensor: &SpikeTensor,
        mode: SpikeMode,
    ) -> Result<(ForwardOutput, Trace)> {
        let (out, trace) = self.run(tensor, mode, true)?;
        Ok((out, trace.expect("recorded")))
    }

    fn run(
        &self,
        tensor: &SpikeTensor,
        mode: SpikeMode,
        record: bool,
    ) -> Result<(ForwardOutput, Option<Trace>)> {
        self.check_input(tensor)?;
        let steps = tensor.bins();
        let n_layers = self.layers.len();
        let sources = self.sources();

        let mut states: Vec<NeuronState> = self
            .layers
            .iter()
            .map(|l| {
                NeuronState::zeros(if l.spec.has_neurons() {
                    l.spec.output_shape().size()
                } else {
                    0
                })
            })
            .collect();
        let mut currents: Vec<Vec<f64>> = states.iter().map(|s| vec![0.0; s.len()]).collect();
        // Ring buffers of future currents for layers with delays.
        let mut pending: Vec<Vec<Vec<f64>>> = self
            .layers
            .iter()
            .zip(&states)
            .map(|(l, s)| match l.delays {
                Some(_) => vec![vec![0.0; s.len()]; l.max_delay() + 1],
                None => Vec::new(),
            })
            .collect();
        let mut dense_input = Vec::new();
        let mut input_events = vec![0.0; n_layers];
        let mut output_spikes = vec![0.0; n_layers];
        let mut trace = record.then(|| Trace {
            timesteps: steps,
            spikes: vec![Vec::with_capacity(steps); n_layers],
            voltages: vec![Vec::with_capacity(steps); n_layers],
        });
        let mut output = vec![vec![0.0; steps]; self.classes];

        for t in 0..steps {
            for l in 0..n_layers {
                let layer = &self.layers[l];
                let (below, rest) = states.split_at_mut(l);
                let state = &mut rest[0];
                let input = match sources[l] {
                    Source::Tensor => Input::Sparse(tensor.active(t)),
                    Source::Layer(s) => Input::Dense(&below[s].s_prev),
                };
                let events = input.events();
                input_events[l] += events;
                let Some(params) = layer.neuron.as_ref() else {
                    output_spikes[l] += events;
                    continue;
                };

                let x = &mut currents[l];
                x.iter_mut().for_each(|v| *v = 0.0);
                let needs_dense = matches!(
                    layer.spec,
                    LayerSpec::Conv2d { .. } | LayerSpec::SumPool { .. }
                );
                let input = match input {
                    Input::Sparse(active) if needs_dense => {
                        dense_input.clear();
                        dense_input.resize(layer.spec.input_shape().size(), 0.0);
                        for &i in active {
                            dense_input[i as usize] = 1.0;
                        }
                        Input::Dense(&dense_input)
                    }
                    other => other,
                };
                match layer.spec {
                    LayerSpec::Dense { outputs, .. } => match &layer.delays {
                        None => match input {
                            Input::Sparse(a) => {
                                dense_accumulate_sparse(&layer.weights, outputs, a, x)
                            }
                            Input::Dense(d) => dense_accumulate(&layer.weights, outputs, d, x),
                        },
                        Some(delays) => {
                            let ring = &mut pending[l];
                            let slots = ring.len();
                            let mut push = |j: usize, s: f64| {
                                for i in 0..outputs {
                                    let k = j * outputs + i;
                                    ring[(t + delays[k] as usize) % slots][i] +=
                                        layer.weights[k] * s;
                                }
                            };
                            match input {
                                Input::Sparse(a) => a.iter().for_each(|&j| push(j as usize, 1.0)),
                                Input::Dense(d) => d
                                    .iter()
                                    .enumerate()
                                    .filter(|(_, &s)| s != 0.0)
                                    .for_each(|(j, &s)| push(j, s)),
                            }
                            let slot = &mut ring[t % slots];
                            x.copy_from_slice(slot);
                            slot.iter_mut().for_each(|v| *v = 0.0);
                        }
                    },
                    LayerSpec::Recurrent { outputs, .. } => {
                        match input {
                            Input::Sparse(a) => {
                                dense_accumulate_sparse(&layer.weights, outputs, a, x)
                            }
                            Input::Dense(d) => dense_accumulate(&layer.weights, outputs, d, x),
                        }
                        dense_accumulate(&layer.recurrent, outputs, &state.s_prev, x);
                    }
                    LayerSpec::Conv2d { .. } => {
                        let Input::Dense(d) = input else {
                            unreachable!("densified above")
                        };
                        conv_accumulate(
                            &layer.weights,
                            &layer.spec.conv_geometry().expect("conv"),
                            d,
                            x,
                        );
                    }
                    LayerSpec::SumPool {
                        channels,
                        height,
                        width,
                        stride,
                    } => {
                        let Input::Dense(d) = input else {
                            unreachable!("densified above")
                        };
                        sumpool_accumulate(d, channels, height, width, stride, x);
                    }
                    LayerSpec::Flatten { .. } => unreachable!("no neurons"),
                }

                let spikes = state.step(x, params, mode);
                output_spikes[l] += spikes.iter().sum::<f64>();
                if let Some(tr) = trace.as_mut() {
                    tr.spikes[l].push(spikes.to_vec());
                    tr.voltages[l].push(state.y.clone());
                }
            }
            let last = &states[n_layers - 1].s_prev;
            for (c, train) in output.iter_mut().enumerate() {
                train[t] = last[c];
            }
        }

        let out = ForwardOutput {
            output,
            counts: LayerCounts {
                input_events,
                output_spikes,
                timesteps: steps,
            },
        };
        Ok((out, trace))
    }

    /// Adds one pass's counts to the model's running statistics.
    pub fn record(&mut self, counts: &LayerCounts) {
        self.stats.record(counts);
    }

    /// Indices of layers that carry weights.
    pub fn weighted_layers(&self) -> Vec<usize> {
        (0..self.layers.len())
            .filter(|&l| self.layers[l].spec.param_count() > 0)
            .collect()
    }

    /// Per-neuron weight normalization to the expected norm of a fresh initialization.
    pub fn normalize_weights(&mut self) {
        let norm = self.init_gain / 3f64.sqrt();
        for layer in &mut self.layers {
            layer.normalize_incoming(norm);
        }
    }

    pub fn neuron_params(&self) -> Option<CubaParams> {
        self.layers.iter().find_map(|l| l.neuron)
    }
}

/// Class with the most output spikes; ties go to the lower index.
pub fn predict(output_trains: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_count = f64::NEG_INFINITY;
    for (c, train) in output_trains.iter().enumerate() {
        let count: f64 = train.iter().sum();
        if count > best_count {
            best = c;
            best_count = count;
        }
    }
    best
}
