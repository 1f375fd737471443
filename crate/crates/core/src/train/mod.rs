//! Surrogate-gradient BPTT with the spike-rate loss.

pub mod surrogate;

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, shape, Error, Result};
use crate::kinematics::EyeClass;
use crate::rng::{self, stream};
use crate::snn::layer::{to_f32_grid, LayerSpec};
use crate::snn::model::{predict, ForwardOutput, SnnModel, Source, Trace};
use crate::snn::neuron::SpikeMode;
use crate::snn::ops::{
    conv_adjoint, conv_weight_grad, dense_adjoint, dense_weight_grad, dense_weight_grad_sparse,
    sumpool_adjoint,
};
use crate::spike_codec::SpikeTensor;

pub use surrogate::{relaxed_spike, surrogate_grad};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Target spikes per timestep for the true class.
    pub r_true: f64,
    pub r_false: f64,
    pub seed: u64,
    pub weight_norm: bool,
    /// Stop gradients through the `-ϑ·s[t-1]` reset term.
    pub detach_reset: bool,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Write `epoch_%04d.snn` every this many epochs; 0 disables.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 8,
            learning_rate: 0.01,
            weight_decay: 1e-4,
            r_true: 0.5,
            r_false: 0.02,
            seed: 0,
            weight_norm: false,
            detach_reset: false,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.r_false && self.r_false < self.r_true && self.r_true <= 1.0) {
            return param(format!(
                "need 0 <= r_false < r_true <= 1, got r_false={} r_true={}",
                self.r_false, self.r_true
            ));
        }
        if self.batch_size == 0 {
            return param("batch_size must be at least 1");
        }
        if !(self.learning_rate >= 0.0) || !(self.weight_decay >= 0.0) {
            return param("learning_rate and weight_decay must be non-negative");
        }
        if !(0.0..1.0).contains(&self.adam_beta1)
            || !(0.0..1.0).contains(&self.adam_beta2)
            || !(self.adam_eps > 0.0)
        {
            return param("adam betas must lie in [0, 1) and eps must be positive");
        }
        Ok(())
    }
}

/// `½ Σ_c (rate_c − target_c)²` with rates in spikes per timestep.
pub fn spike_rate_loss(output_trains: &[Vec<f64>], label: usize, r_true: f64, r_false: f64) -> f64 {
    output_trains
        .iter()
        .enumerate()
        .map(|(c, train)| {
            let rate = train.iter().sum::<f64>() / train.len() as f64;
            let target = if c == label { r_true } else { r_false };
            0.5 * (rate - target).powi(2)
        })
        .sum()
}

/// `dL/ds_c[t]`, constant over time for each class.
fn spike_rate_loss_grad(
    output_trains: &[Vec<f64>],
    label: usize,
    r_true: f64,
    r_false: f64,
) -> Vec<Vec<f64>> {
    output_trains
        .iter()
        .enumerate()
        .map(|(c, train)| {
            let steps = train.len() as f64;
            let target = if c == label { r_true } else { r_false };
            let g = (train.iter().sum::<f64>() / steps - target) / steps;
            vec![g; train.len()]
        })
        .collect()
}

/// Parameter gradients, laid out like the model's weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub recurrent: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros(model: &SnnModel) -> Self {
        Gradients {
            weights: model
                .layers
                .iter()
                .map(|l| vec![0.0; l.weights.len()])
                .collect(),
            recurrent: model
                .layers
                .iter()
                .map(|l| vec![0.0; l.recurrent.len()])
                .collect(),
        }
    }

    fn add(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.recurrent.iter_mut().zip(&other.recurrent) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    fn scale(&mut self, k: f64) {
        for v in self.weights.iter_mut().chain(self.recurrent.iter_mut()) {
            v.iter_mut().for_each(|x| *x *= k);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(&self.recurrent)
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

fn label_of(tensor: &SpikeTensor) -> Result<usize> {
    tensor
        .label
        .map(EyeClass::index)
        .ok_or_else(|| Error::Data("training sample has no label".into()))
}

/// Backpropagates `dL/d(output spikes)` through a recorded forward pass.
pub fn backward(
    model: &SnnModel,
    tensor: &SpikeTensor,
    trace: &Trace,
    output_grad: &[Vec<f64>],
    mode: SpikeMode,
    detach_reset: bool,
) -> Gradients {
    let (mut grads, deferred) =
        backward_parts(model, tensor, trace, output_grad, mode, detach_reset, false);
    if let Some(d) = deferred {
        d.accumulate(tensor, &mut grads);
    }
    grads
}

/// Weight gradient of the layer fed directly by the sparse input tensor,
/// kept as `dL/dx[t]` until it is folded into a batch buffer.
struct DeferredInputGrad {
    layer: usize,
    gx: Vec<Vec<f64>>,
}

impl DeferredInputGrad {
    fn accumulate(&self, tensor: &SpikeTensor, grads: &mut Gradients) {
        let grad_w = &mut grads.weights[self.layer];
        for (t, g) in self.gx.iter().enumerate() {
            dense_weight_grad_sparse(tensor.active(t), g, grad_w);
        }
    }
}

/// The input layer's weight gradient is the largest buffer by far and mostly
/// zero; with `defer` it is returned as per-step currents instead.
fn backward_parts(
    model: &SnnModel,
    tensor: &SpikeTensor,
    trace: &Trace,
    output_grad: &[Vec<f64>],
    mode: SpikeMode,
    detach_reset: bool,
    defer: bool,
) -> (Gradients, Option<DeferredInputGrad>) {
    let steps = trace.timesteps;
    let n_layers = model.layers.len();
    let sources = model.sources();
    let deferred_layer = (0..n_layers).find(|&l| {
        defer
            && sources[l] == Source::Tensor
            && match model.layers[l].spec {
                LayerSpec::Dense { .. } => model.layers[l].delays.is_none(),
                LayerSpec::Recurrent { .. } => true,
                _ => false,
            }
    });
    let mut grads = Gradients::zeros(model);
    let mut deferred = None;
    if let Some(l) = deferred_layer {
        grads.weights[l] = Vec::new();
    }

    // ext[l][t]: gradient arriving at layer l's spikes from the layers above.
    let mut ext: Vec<Vec<Vec<f64>>> = model
        .layers
        .iter()
        .map(|l| {
            if l.spec.has_neurons() {
                vec![vec![0.0; l.spec.output_shape().size()]; steps]
            } else {
                Vec::new()
            }
        })
        .collect();
    let last = n_layers - 1;
    for (t, row) in ext[last].iter_mut().enumerate() {
        for (c, g) in row.iter_mut().enumerate() {
            *g = output_grad[c][t];
        }
    }

    let mut dense_in: Vec<f64>;
    for l in (0..n_layers).rev() {
        let layer = &model.layers[l];
        let Some(p) = layer.neuron.as_ref() else {
            continue;
        };
        let n = layer.spec.output_shape().size();
        let ext_l = std::mem::take(&mut ext[l]);

        // Gradient with respect to x[t] for every step, computed in reverse.
        let mut gx = vec![vec![0.0; n]; steps];
        let mut gy_next = vec![0.0; n];
        let mut gi_next = vec![0.0; n];
        let mut gs = vec![0.0; n];
        for t in (0..steps).rev() {
            gs.copy_from_slice(&ext_l[t]);
            if t + 1 < steps {
                if !detach_reset {
                    gs.iter_mut()
                        .zip(&gy_next)
                        .for_each(|(g, &gy)| *g -= p.theta * gy);
                }
                if let LayerSpec::Recurrent { outputs, .. } = layer.spec {
                    dense_adjoint(&layer.recurrent, outputs, &gx[t + 1], &mut gs);
                }
            }
            let y = &trace.voltages[l][t];
            let gx_t = &mut gx[t];
            for k in 0..n {
                let gy = gs[k] * mode.derivative(y[k], p) + p.beta * gy_next[k];
                let gi = (1.0 - p.beta) * gy + p.alpha * gi_next[k];
                gy_next[k] = gy;
                gi_next[k] = gi;
                gx_t[k] = gi;
            }
        }

        // Weight gradients and the gradient passed to the source layer.
        let src = sources[l];
        let needs_input_grad = matches!(src, Source::Layer(_));
        let mut ext_src = match src {
            Source::Layer(s) => std::mem::take(&mut ext[s]),
            Source::Tensor => Vec::new(),
        };
        let grad_w = &mut grads.weights[l];
        for t in 0..steps {
            let g = &gx[t];
            match layer.spec {
                LayerSpec::Dense { outputs, .. } => match &layer.delays {
                    None => {
                        match src {
                            Source::Tensor if deferred_layer == Some(l) => {}
                            Source::Tensor => dense_weight_grad_sparse(tensor.active(t), g, grad_w),
                            Source::Layer(s) => dense_weight_grad(&trace.spikes[s][t], g, grad_w),
                        }
                        if needs_input_grad {
                            dense_adjoint(&layer.weights, outputs, g, &mut ext_src[t]);
                        }
                    }
                    Some(delays) => {
                        // x[t][i] = Σ_j W_ji · s_j[t - d_ji]
                        let inputs = layer.spec.input_shape().size();
                        for j in 0..inputs {
                            for i in 0..outputs {
                                let k = j * outputs + i;
                                let d = delays[k] as usize;
                                if d > t {
                                    continue;
                                }
                                let s_in = match src {
                                    Source::Tensor => {
                                        if tensor.active(t - d).binary_search(&(j as u32)).is_ok() {
                                            1.0
                                        } else {
                                            0.0
                                        }
                                    }
                                    Source::Layer(s) => trace.spikes[s][t - d][j],
                                };
                                grad_w[k] += s_in * g[i];
                                if needs_input_grad {
                                    ext_src[t - d][j] += layer.weights[k] * g[i];
                                }
                            }
                        }
                    }
                },
                LayerSpec::Recurrent { outputs, .. } => {
                    match src {
                        Source::Tensor if deferred_layer == Some(l) => {}
                        Source::Tensor => dense_weight_grad_sparse(tensor.active(t), g, grad_w),
                        Source::Layer(s) => dense_weight_grad(&trace.spikes[s][t], g, grad_w),
                    }
                    if t > 0 {
                        dense_weight_grad(&trace.spikes[l][t - 1], g, &mut grads.recurrent[l]);
                    }
                    if needs_input_grad {
                        dense_adjoint(&layer.weights, outputs, g, &mut ext_src[t]);
                    }
                }
                LayerSpec::Conv2d { .. } => {
                    let geom = layer.spec.conv_geometry().expect("conv");
                    let input: &[f64] = match src {
                        Source::Tensor => {
                            dense_in = tensor.dense_bin(t);
                            &dense_in
                        }
                        Source::Layer(s) => &trace.spikes[s][t],
                    };
                    conv_weight_grad(&geom, input, g, grad_w);
                    if needs_input_grad {
                        conv_adjoint(&layer.weights, &geom, g, &mut ext_src[t]);
                    }
                }
                LayerSpec::SumPool {
                    channels,
                    height,
                    width,
                    stride,
                } => {
                    if needs_input_grad {
                        sumpool_adjoint(g, channels, height, width, stride, &mut ext_src[t]);
                    }
                }
                LayerSpec::Flatten { .. } => unreachable!("no neurons"),
            }
        }
        if let Source::Layer(s) = src {
            ext[s] = ext_src;
        }
        if deferred_layer == Some(l) {
            deferred = Some(DeferredInputGrad { layer: l, gx });
        }
    }
    (grads, deferred)
}

/// Loss and parameter gradients for one labelled sample.
pub fn loss_and_gradients(
    model: &SnnModel,
    tensor: &SpikeTensor,
    label: usize,
    cfg: &TrainConfig,
    mode: SpikeMode,
) -> Result<(f64, ForwardOutput, Gradients)> {
    let (out, trace) = model.forward_traced(tensor, mode)?;
    let loss = spike_rate_loss(&out.output, label, cfg.r_true, cfg.r_false);
    let dl = spike_rate_loss_grad(&out.output, label, cfg.r_true, cfg.r_false);
    let grads = backward(model, tensor, &trace, &dl, mode, cfg.detach_reset);
    Ok((loss, out, grads))
}

/// Adam moments for every parameter.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Gradients,
    v: Gradients,
    step: u64,
}

impl Adam {
    pub fn new(model: &SnnModel) -> Self {
        Adam {
            m: Gradients::zeros(model),
            v: Gradients::zeros(model),
            step: 0,
        }
    }

    /// One AdamW step; weight decay is applied to the weights directly.
    pub fn update(&mut self, model: &mut SnnModel, grads: &Gradients, cfg: &TrainConfig) {
        self.step += 1;
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let lr = cfg.learning_rate;
        let decay = lr * cfg.weight_decay;
        for (l, layer) in model.layers.iter_mut().enumerate() {
            let params = [
                (
                    &mut layer.weights,
                    &grads.weights[l],
                    &mut self.m.weights[l],
                    &mut self.v.weights[l],
                ),
                (
                    &mut layer.recurrent,
                    &grads.recurrent[l],
                    &mut self.m.recurrent[l],
                    &mut self.v.recurrent[l],
                ),
            ];
            for (w, g, m, v) in params {
                for k in 0..w.len() {
                    m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                    v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                    let step = lr * (m[k] / c1) / ((v[k] / c2).sqrt() + cfg.adam_eps);
                    w[k] = to_f32_grid(w[k] - step - decay * w[k]);
                }
            }
        }
        if cfg.weight_norm {
            model.normalize_weights();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    /// `None` when no evaluation set was given.
    pub eval_acc: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    /// Epoch with the highest eval accuracy (train accuracy without an eval
    /// set); the earliest wins ties.
    pub fn best(&self) -> Option<&EpochRecord> {
        let score = |r: &EpochRecord| r.eval_acc.unwrap_or(r.train_acc);
        self.epochs
            .iter()
            .fold(None, |best: Option<&EpochRecord>, r| match best {
                Some(b) if score(b) >= score(r) => Some(b),
                _ => Some(r),
            })
    }
}

/// Wall-clock seconds are left out so reruns write identical files; they go to the log.
pub const HISTORY_HEADER: &str = "epoch,loss,train_acc,eval_acc";

pub fn write_history_csv(path: &Path, history: &TrainHistory) -> Result<()> {
    let mut text = String::from(HISTORY_HEADER);
    text.push('\n');
    for r in &history.epochs {
        let eval = r.eval_acc.map(|a| a.to_string()).unwrap_or_default();
        text.push_str(&format!(
            "{},{},{},{}\n",
            r.epoch, r.loss, r.train_acc, eval
        ));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Fraction of samples whose predicted class matches the label.
pub fn accuracy(model: &SnnModel, set: &[SpikeTensor]) -> Result<f64> {
    if set.is_empty() {
        return param("accuracy over an empty set");
    }
    let hits: Vec<bool> = set
        .par_iter()
        .map(|s| Ok(predict(&model.forward(s)?.output) == label_of(s)?))
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / set.len() as f64)
}

fn check_set(model: &SnnModel, set: &[SpikeTensor], what: &str) -> Result<()> {
    for s in set {
        if s.height != model.input.height || s.width != model.input.width {
            return shape(format!(
                "{what} sample is {}x{}, model expects {}x{}",
                s.height, s.width, model.input.height, model.input.width
            ));
        }
        label_of(s)?;
    }
    Ok(())
}

/// Trains in place. `on_epoch` runs after each epoch with the updated model.
pub fn bptt_train_with(
    model: &mut SnnModel,
    train_set: &[SpikeTensor],
    eval_set: &[SpikeTensor],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord, &SnnModel) -> Result<()>,
) -> Result<TrainHistory> {
    cfg.validate()?;
    if train_set.is_empty() {
        return param("training set is empty");
    }
    check_set(model, train_set, "training")?;
    check_set(model, eval_set, "evaluation")?;

    let mut rng = rng::seeded(cfg.seed, stream::SHUFFLE);
    let mut adam = Adam::new(model);
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut hits = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<_> = batch
                .par_iter()
                .map(|&i| {
                    let sample = &train_set[i];
                    let label = label_of(sample)?;
                    let (out, trace) = model.forward_traced(sample, SpikeMode::Heaviside)?;
                    let loss = spike_rate_loss(&out.output, label, cfg.r_true, cfg.r_false);
                    let dl = spike_rate_loss_grad(&out.output, label, cfg.r_true, cfg.r_false);
                    let parts = backward_parts(
                        model,
                        sample,
                        &trace,
                        &dl,
                        SpikeMode::Heaviside,
                        cfg.detach_reset,
                        true,
                    );
                    Ok((loss, predict(&out.output) == label, parts))
                })
                .collect::<Result<_>>()?;
            // Reduced in sample order so the sum is the same on any thread count.
            let mut total = Gradients::zeros(model);
            for (&i, (loss, hit, (grads, deferred))) in batch.iter().zip(&results) {
                if !loss.is_finite() {
                    return Err(Error::Divergence(format!(
                        "non-finite loss {loss} in epoch {epoch}"
                    )));
                }
                loss_sum += loss;
                hits += *hit as usize;
                total.add(grads);
                if let Some(d) = deferred {
                    d.accumulate(&train_set[i], &mut total);
                }
            }
            total.scale(1.0 / batch.len() as f64);
            if !total.is_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite gradient in epoch {epoch}"
                )));
            }
            adam.update(model, &total, cfg);
            // A NaN current never crosses threshold, so bad weights can hide behind a finite loss.
            if model
                .layers
                .iter()
                .any(|l| l.weights.iter().chain(&l.recurrent).any(|w| !w.is_finite()))
            {
                return Err(Error::Divergence(format!(
                    "non-finite weight after an update in epoch {epoch}"
                )));
            }
        }
        let eval_acc = if eval_set.is_empty() {
            None
        } else {
            Some(accuracy(model, eval_set)?)
        };
        let record = EpochRecord {
            epoch,
            loss: loss_sum / train_set.len() as f64,
            train_acc: hits as f64 / train_set.len() as f64,
            eval_acc,
            seconds: start.elapsed().as_secs_f64(),
        };
        if !record.loss.is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite mean loss in epoch {epoch}"
            )));
        }
        log::info!(
            "epoch {epoch}: loss {:.5} train_acc {:.4} eval_acc {} ({:.2} s)",
            record.loss,
            record.train_acc,
            eval_acc.map_or("-".into(), |a| format!("{a:.4}")),
            record.seconds
        );
        on_epoch(&record, model)?;
        history.epochs.push(record);
    }
    Ok(history)
}

pub fn bptt_train(
    mut model: SnnModel,
    train_set: &[SpikeTensor],
    eval_set: &[SpikeTensor],
    cfg: &TrainConfig,
) -> Result<(SnnModel, TrainHistory)> {
    let history = bptt_train_with(&mut model, train_set, eval_set, cfg, |_, _| Ok(()))?;
    Ok((model, history))
}

/// Stratified, seeded subset of `⌈fraction · N⌉` indices, in ascending order.
///
/// Per-class quotas are `⌊fraction · n_c⌋` topped up by largest remainder, so
/// each class count is within one sample of its proportional share.
pub fn stratified_subset(labels: &[EyeClass], fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return param(format!("fraction must lie in (0, 1], got {fraction}"));
    }
    let total = (fraction * labels.len() as f64 - 1e-9).ceil() as usize;
    if total == 0 {
        return Err(Error::Data(format!(
            "fraction {fraction} of {} samples selects nothing",
            labels.len()
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); EyeClass::ALL.len()];
    for (i, l) in labels.iter().enumerate() {
        by_class[l.index()].push(i);
    }
    let shares: Vec<f64> = by_class.iter().map(|c| fraction * c.len() as f64).collect();
    let mut quota: Vec<usize> = shares.iter().map(|s| (s + 1e-9).floor() as usize).collect();
    let mut by_remainder: Vec<usize> = (0..quota.len()).collect();
    by_remainder.sort_by(|&a, &b| {
        let ra = shares[a] - quota[a] as f64;
        let rb = shares[b] - quota[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut missing = total - quota.iter().sum::<usize>();
    for &c in by_remainder.iter().cycle().take(by_remainder.len() * 2) {
        if missing == 0 {
            break;
        }
        if quota[c] < by_class[c].len() {
            quota[c] += 1;
            missing -= 1;
        }
    }
    let mut rng = rng::seeded(seed, stream::SUBSET);
    let mut chosen = Vec::with_capacity(total);
    for (members, &q) in by_class.iter_mut().zip(&quota) {
        members.shuffle(&mut rng);
        chosen.extend_from_slice(&members[..q]);
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// Continues training on a stratified fraction of `real_train`; evaluation
/// always uses `eval_set`. Returns the indices that were trained on.
pub fn finetune(
    model: SnnModel,
    fraction: f64,
    real_train: &[SpikeTensor],
    eval_set: &[SpikeTensor],
    cfg: &TrainConfig,
) -> Result<(SnnModel, TrainHistory, Vec<usize>)> {
    let labels = real_train
        .iter()
        .map(|s| {
            s.label
                .ok_or_else(|| Error::Data("unlabelled sample".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    let subset = stratified_subset(&labels, fraction, cfg.seed)?;
    let picked: Vec<SpikeTensor> = subset.iter().map(|&i| real_train[i].clone()).collect();
    let (model, history) = bptt_train(model, &picked, eval_set, cfg)?;
    Ok((model, history, subset))
}
