//! Classification metrics and synaptic-operation accounting.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::kinematics::EyeClass;
use crate::snn::layer::LayerSpec;
use crate::snn::model::{predict, SnnModel, SpikeStats};
use crate::spike_codec::SpikeTensor;
use crate::train::spike_rate_loss;

/// Binary confusion counts with saccade as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn record(&mut self, predicted: EyeClass, actual: EyeClass) {
        match (predicted, actual) {
            (EyeClass::Saccade, EyeClass::Saccade) => self.tp += 1,
            (EyeClass::Fixation, EyeClass::Fixation) => self.tn += 1,
            (EyeClass::Saccade, EyeClass::Fixation) => self.fp += 1,
            (EyeClass::Fixation, EyeClass::Saccade) => self.fn_ += 1,
        }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (EyeClass, EyeClass)>) -> Self {
        let mut c = Confusion::default();
        for (p, a) in pairs {
            c.record(p, a);
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when a ratio had a zero denominator and was reported as 0.
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
    /// Unweighted means over both classes taken in turn as positive.
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

fn prf(tp: u64, fp: u64, fn_: u64) -> (f64, f64, f64, [bool; 3]) {
    let (p, pu) = ratio(tp, tp + fp);
    let (r, ru) = ratio(tp, tp + fn_);
    let (f, fu) = if p + r == 0.0 {
        (0.0, true)
    } else {
        (2.0 * p * r / (p + r), false)
    };
    (p, r, f, [pu, ru, fu])
}

pub fn metrics(conf: &Confusion) -> Result<Metrics> {
    let total = conf.total();
    if total == 0 {
        return param("metrics of an empty confusion matrix");
    }
    let accuracy = (conf.tp + conf.tn) as f64 / total as f64;
    let (precision, recall, f1, [pu, ru, fu]) = prf(conf.tp, conf.fp, conf.fn_);
    // Fixation as positive: its true positives are our true negatives.
    let (p0, r0, f0, _) = prf(conf.tn, conf.fn_, conf.fp);
    Ok(Metrics {
        accuracy,
        precision,
        recall,
        f1,
        precision_undefined: pu,
        recall_undefined: ru,
        f1_undefined: fu,
        macro_precision: (precision + p0) / 2.0,
        macro_recall: (recall + r0) / 2.0,
        macro_f1: (f1 + f0) / 2.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerOps {
    pub layer: usize,
    pub kind: String,
    pub fan_in: usize,
    pub fan_out: usize,
    pub mean_events_per_timestep: f64,
    pub synaptic_ops_per_timestep: f64,
    pub ann_activations: u64,
    pub ann_macs: u64,
    /// True for conv and recurrent rows, which go beyond a dense-only table.
    pub extension: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpsReport {
    pub layers: Vec<LayerOps>,
    pub total_events: f64,
    pub total_synaptic_ops: f64,
    pub total_ann_activations: u64,
    pub total_ann_macs: u64,
}

impl OpsReport {
    fn from_rows(layers: Vec<LayerOps>) -> Self {
        OpsReport {
            total_events: layers.iter().map(|l| l.mean_events_per_timestep).sum(),
            total_synaptic_ops: layers.iter().map(|l| l.synaptic_ops_per_timestep).sum(),
            total_ann_activations: layers.iter().map(|l| l.ann_activations).sum(),
            total_ann_macs: layers.iter().map(|l| l.ann_macs).sum(),
            layers,
        }
    }

    /// Markdown table with Layer / Events / Synapses / Activations / MACs columns.
    pub fn to_markdown(&self) -> String {
        let mut s = String::from(
            "| Layer | Events | Synapses | Activations (ACs) | MACs |\n|---|---:|---:|---:|---:|\n",
        );
        for (k, row) in self.layers.iter().enumerate() {
            let mark = if row.extension { " *" } else { "" };
            let _ = writeln!(
                s,
                "| layer-{k} ({}{mark}) | {:.2} | {:.2} | {} | {} |",
                row.kind,
                row.mean_events_per_timestep,
                row.synaptic_ops_per_timestep,
                row.ann_activations,
                row.ann_macs
            );
        }
        let _ = writeln!(
            s,
            "| **Total** | **{:.2}** | **{:.0}** | **{}** | **{}** |",
            self.total_events,
            self.total_synaptic_ops,
            self.total_ann_activations,
            self.total_ann_macs
        );
        if self.layers.iter().any(|l| l.extension) {
            s.push_str("\n\\* conv and recurrent rows extend the dense-layer accounting.\n");
        }
        s
    }
}

/// Per-layer activity fed to the op counter, one entry per weighted layer.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LayerActivity {
    pub input_events: f64,
    /// Mean own spikes per timestep; only used by recurrent layers.
    pub self_events: f64,
}

fn ops_row(model: &SnnModel, l: usize, activity: LayerActivity) -> LayerOps {
    let layer = &model.layers[l];
    let spec = layer.spec;
    let fan_out = layer.fan_out();
    let (fan_in, activations, macs, ops, extension) = match spec {
        LayerSpec::Dense { inputs, outputs } => (
            inputs,
            outputs as u64,
            (inputs * outputs) as u64,
            activity.input_events * outputs as f64,
            false,
        ),
        LayerSpec::Recurrent { inputs, outputs } => (
            inputs + outputs,
            outputs as u64,
            ((inputs + outputs) * outputs) as u64,
            (activity.input_events + activity.self_events) * outputs as f64,
            true,
        ),
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel,
            ..
        } => {
            let out = spec.output_shape();
            (
                in_channels * kernel * kernel,
                out.size() as u64,
                (in_channels * out_channels * kernel * kernel * out.height * out.width) as u64,
                activity.input_events * fan_out as f64,
                true,
            )
        }
        LayerSpec::SumPool { .. } | LayerSpec::Flatten { .. } => {
            unreachable!("only weighted layers")
        }
    };
    LayerOps {
        layer: l,
        kind: spec.name().to_string(),
        fan_in,
        fan_out,
        mean_events_per_timestep: activity.input_events,
        synaptic_ops_per_timestep: ops,
        ann_activations: activations,
        ann_macs: macs,
        extension,
    }
}

/// Op counts from explicit per-layer activity (one entry per weighted layer).
pub fn count_ops_with(model: &SnnModel, activity: &[LayerActivity]) -> Result<OpsReport> {
    let weighted = model.weighted_layers();
    if activity.len() != weighted.len() {
        return param(format!(
            "{} activity entries for {} weighted layers",
            activity.len(),
            weighted.len()
        ));
    }
    Ok(OpsReport::from_rows(
        weighted
            .iter()
            .zip(activity)
            .map(|(&l, &a)| ops_row(model, l, a))
            .collect(),
    ))
}

/// Op counts from mean input events per timestep, one per weighted layer.
pub fn count_ops_with_means(model: &SnnModel, mean_events: &[f64]) -> Result<OpsReport> {
    let activity: Vec<LayerActivity> = mean_events
        .iter()
        .map(|&e| LayerActivity {
            input_events: e,
            self_events: 0.0,
        })
        .collect();
    count_ops_with(model, &activity)
}

pub fn count_ops_from_stats(model: &SnnModel, stats: &SpikeStats) -> Result<OpsReport> {
    if stats.is_empty() {
        return Err(Error::Data(
            "no recorded spike statistics; run a forward pass first".into(),
        ));
    }
    let ins = stats.mean_input_events();
    let outs = stats.mean_output_spikes();
    let activity: Vec<LayerActivity> = model
        .weighted_layers()
        .into_iter()
        .map(|l| LayerActivity {
            input_events: ins[l],
            self_events: if matches!(model.layers[l].spec, LayerSpec::Recurrent { .. }) {
                outs[l]
            } else {
                0.0
            },
        })
        .collect();
    count_ops_with(model, &activity)
}

/// Op counts from the statistics recorded on the model.
pub fn count_ops(model: &SnnModel) -> Result<OpsReport> {
    count_ops_from_stats(model, &model.stats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: usize,
    pub confusion: Confusion,
    pub metrics: Metrics,
    pub mean_loss: f64,
    pub ops: OpsReport,
    pub predictions: Vec<EyeClass>,
    #[serde(skip)]
    pub stats: SpikeStats,
}

/// Predicts every sample and accumulates confusion and spike statistics.
/// `r_true`/`r_false` only affect the reported loss.
pub fn evaluate_with_targets(
    model: &SnnModel,
    test_set: &[SpikeTensor],
    r_true: f64,
    r_false: f64,
) -> Result<EvalReport> {
    if test_set.is_empty() {
        return param("evaluation set is empty");
    }
    let outputs: Vec<_> = test_set
        .par_iter()
        .map(|s| {
            let label = s
                .label
                .ok_or_else(|| Error::Data("evaluation sample has no label".into()))?;
            let out = model.forward(s)?;
            Ok((label, out))
        })
        .collect::<Result<_>>()?;
    let mut confusion = Confusion::default();
    let mut stats = SpikeStats::default();
    let mut loss = 0.0;
    let mut predictions = Vec::with_capacity(outputs.len());
    for (label, out) in &outputs {
        let predicted = EyeClass::from_index(predict(&out.output)).expect("two output classes");
        confusion.record(predicted, *label);
        stats.record(&out.counts);
        loss += spike_rate_loss(&out.output, label.index(), r_true, r_false);
        predictions.push(predicted);
    }
    Ok(EvalReport {
        samples: test_set.len(),
        confusion,
        metrics: metrics(&confusion)?,
        mean_loss: loss / test_set.len() as f64,
        ops: count_ops_from_stats(model, &stats)?,
        predictions,
        stats,
    })
}

pub fn evaluate(model: &SnnModel, test_set: &[SpikeTensor]) -> Result<EvalReport> {
    let t = crate::train::TrainConfig::default();
    evaluate_with_targets(model, test_set, t.r_true, t.r_false)
}

/// Writes `report.json` and `report.md` into `dir`.
pub fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    let json_path = dir.join("report.json");
    let json = serde_json::to_string_pretty(report)?;
    fs::write(&json_path, json + "\n").map_err(|e| Error::io(&json_path, e))?;

    let m = &report.metrics;
    let c = &report.confusion;
    let mut md = String::from("# Evaluation\n\n");
    let _ = writeln!(md, "Samples: {}\n", report.samples);
    let _ = writeln!(
        md,
        "| | predicted saccade | predicted fixation |\n|---|---:|---:|"
    );
    let _ = writeln!(md, "| saccade | {} | {} |", c.tp, c.fn_);
    let _ = writeln!(md, "| fixation | {} | {} |\n", c.fp, c.tn);
    let _ = writeln!(
        md,
        "| Metric | Positive = saccade | Macro |\n|---|---:|---:|"
    );
    let _ = writeln!(md, "| Accuracy | {:.4} | {:.4} |", m.accuracy, m.accuracy);
    let _ = writeln!(md, "| Loss | {:.4} | |", report.mean_loss);
    let _ = writeln!(
        md,
        "| Precision | {:.4} | {:.4} |",
        m.precision, m.macro_precision
    );
    let _ = writeln!(md, "| Recall | {:.4} | {:.4} |", m.recall, m.macro_recall);
    let _ = writeln!(md, "| F1 | {:.4} | {:.4} |\n", m.f1, m.macro_f1);
    md.push_str("## Operations per timestep\n\n");
    md.push_str(&report.ops.to_markdown());
    let md_path = dir.join("report.md");
    fs::write(&md_path, md).map_err(|e| Error::io(&md_path, e))
}
