//! One function per subcommand. Each writes its outputs, including the
//! resolved `config.json`, into `cfg.out` and returns a summary.

use std::fs;
use std::path::{Path, PathBuf};

use synsacc_core::eval::{
    count_ops_from_stats, count_ops_with_means, evaluate_with_targets, write_report, EvalReport,
    OpsReport,
};
use synsacc_core::event_sim::{read_evb1, write_csv, write_evb1, EventSimulator, EventStream};
use synsacc_core::kinematics::{EyeClass, LabelTrack};
use synsacc_core::pipeline::{labelled_windows, record, Recording};
use synsacc_core::render::read_pgm;
use synsacc_core::snn::{build_conv, build_dense, load_checkpoint, save_checkpoint, SnnModel};
use synsacc_core::spike_codec::{
    balance_classes, cap_per_class, read_manifest, stratified_split, window_bounds, write_manifest,
    ClassCounts, DatasetManifest, ManifestEntry, SpikeTensor, Split, Splits, WindowCache,
    WindowSpec,
};
use synsacc_core::train::{
    bptt_train, bptt_train_with, stratified_subset, write_history_csv, TrainHistory,
};
use synsacc_core::Error;

use crate::config::{Architecture, EventFormat, RunConfig};
use crate::CliError;

pub const EVENTS_FILE: &str = "events.evb1";
pub const LABELS_FILE: &str = "labels.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const FINAL_CHECKPOINT: &str = "final.snn";
pub const BEST_CHECKPOINT: &str = "best.snn";

fn prepare_out(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    fs::create_dir_all(&cfg.out).map_err(|e| Error::Io {
        path: cfg.out.clone(),
        source: e,
    })?;
    cfg.emit(&cfg.out)?;
    Ok(cfg.out.clone())
}

fn required<'a>(value: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, CliError> {
    value.as_deref().ok_or_else(|| {
        CliError::Config(format!(
            "{what} is required (set it in the config or on the command line)"
        ))
    })
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)? + "\n";
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct GenSummary {
    pub dir: PathBuf,
    pub events: usize,
    pub counts: ClassCounts,
    pub train: usize,
    pub test: usize,
}

/// Schedule → frames → events, then windows, balancing and the split.
pub fn cmd_gen(cfg: &RunConfig) -> Result<GenSummary, CliError> {
    let out = prepare_out(cfg)?;
    let rec = record(&cfg.recording(), cfg.seed)?;
    write_evb1(&out.join(EVENTS_FILE), &rec.events)?;
    rec.labels.write_json(&out.join(LABELS_FILE))?;

    let spec = cfg.codec.window;
    let bounds: Vec<_> = window_bounds(&rec.labels, spec.window_ms)
        .into_iter()
        .filter(|&(_, end, _)| end <= rec.events.duration_us)
        .collect();
    let labels: Vec<EyeClass> = bounds.iter().map(|b| b.2).collect();
    let keep: Vec<usize> = if cfg.codec.balance {
        balance_classes(&labels, cfg.seed)
    } else {
        (0..bounds.len()).collect()
    };
    let entries: Vec<ManifestEntry> = keep
        .iter()
        .map(|&i| ManifestEntry {
            event_file: EVENTS_FILE.to_string(),
            label: bounds[i].2,
            t_start_us: bounds[i].0,
            t_end_us: bounds[i].1,
        })
        .collect();
    let kept_labels: Vec<EyeClass> = entries.iter().map(|e| e.label).collect();
    let splits = stratified_split(&kept_labels, cfg.codec.test_fraction, cfg.seed);
    let manifest = DatasetManifest::new(
        rec.events.width,
        rec.events.height,
        spec,
        cfg.seed,
        entries,
        splits,
    );
    write_manifest(&out.join(MANIFEST_FILE), &manifest)?;
    let summary = GenSummary {
        dir: out,
        events: rec.events.len(),
        counts: manifest.class_counts,
        train: manifest.splits.train.len(),
        test: manifest.splits.test.len(),
    };
    println!(
        "{} events; windows: fixation {} saccade {} (train {}, test {})",
        summary.events,
        summary.counts.fixation,
        summary.counts.saccade,
        summary.train,
        summary.test
    );
    Ok(summary)
}

/// Converts a directory of PGM frames (sorted by file name) into one event file.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<EventStream, CliError> {
    let frames_dir = required(&cfg.simulate.frames_dir, "simulate.frames_dir")?.to_path_buf();
    let mut paths: Vec<PathBuf> = fs::read_dir(&frames_dir)
        .map_err(|e| Error::Io {
            path: frames_dir.clone(),
            source: e,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
        .collect();
    paths.sort();
    let first = paths
        .first()
        .ok_or_else(|| Error::Data(format!("no .pgm frames in {}", frames_dir.display())))?;
    let frame = read_pgm(first)?;
    let mut sim = EventSimulator::new(frame.width, frame.height, cfg.simulate.fps, 0, &cfg.sim)?;
    sim.push_frame(&frame)?;
    for p in &paths[1..] {
        sim.push_frame(&read_pgm(p)?)?;
    }
    let stream = sim.finish()?;
    let out = prepare_out(cfg)?;
    match cfg.simulate.format {
        EventFormat::Evb1 => write_evb1(&out.join(EVENTS_FILE), &stream)?,
        EventFormat::Csv => write_csv(&out.join("events.csv"), &stream)?,
    }
    println!("{} frames -> {} events", paths.len(), stream.len());
    Ok(stream)
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
    pub train: Vec<SpikeTensor>,
    pub test: Vec<SpikeTensor>,
}

impl Dataset {
    /// Tensor geometry `(H, W)`.
    pub fn geometry(&self) -> (usize, usize) {
        self.manifest
            .window
            .geometry(self.manifest.sensor_width, self.manifest.sensor_height)
    }
}

pub fn load_dataset(dir: &Path) -> Result<Dataset, CliError> {
    let path = dir.join(MANIFEST_FILE);
    let manifest = read_manifest(&path)?;
    let mut cache = WindowCache::new(&path);
    let train = cache.split(&manifest, Split::Train)?;
    let test = cache.split(&manifest, Split::Test)?;
    Ok(Dataset {
        dir: dir.to_path_buf(),
        manifest,
        train,
        test,
    })
}

/// Fresh model for a `height × width` input from the model section.
pub fn build_model(
    cfg: &RunConfig,
    height: usize,
    width: usize,
    window: &WindowSpec,
) -> Result<SnnModel, CliError> {
    let mc = cfg.model_config(window);
    Ok(match cfg.model.architecture {
        Architecture::Dense => build_dense(height, width, &cfg.model.hidden, &mc, cfg.seed)?,
        Architecture::Conv => build_conv(height, width, &mc, cfg.seed)?,
    })
}

fn run_training(
    cfg: &RunConfig,
    mut model: SnnModel,
    train: &[SpikeTensor],
    test: &[SpikeTensor],
    out: &Path,
) -> Result<(SnnModel, TrainHistory), CliError> {
    let every = cfg.train.checkpoint_every;
    let history_path = out.join(HISTORY_FILE);
    let mut so_far = TrainHistory::default();
    let mut best = f64::NEG_INFINITY;
    let history = bptt_train_with(&mut model, train, test, &cfg.train, |rec, m| {
        if every > 0 && rec.epoch % every == 0 {
            save_checkpoint(m, &out.join(format!("epoch_{:04}.snn", rec.epoch)))?;
        }
        let score = rec.eval_acc.unwrap_or(rec.train_acc);
        if score > best {
            best = score;
            save_checkpoint(m, &out.join(BEST_CHECKPOINT))?;
        }
        so_far.epochs.push(rec.clone());
        write_history_csv(&history_path, &so_far)
    })?;
    write_history_csv(&history_path, &history)?;
    save_checkpoint(&model, &out.join(FINAL_CHECKPOINT))?;
    Ok((model, history))
}

fn evaluate_cfg(
    cfg: &RunConfig,
    model: &SnnModel,
    set: &[SpikeTensor],
) -> Result<EvalReport, CliError> {
    Ok(evaluate_with_targets(
        model,
        set,
        cfg.train.r_true,
        cfg.train.r_false,
    )?)
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub dir: PathBuf,
    pub model: SnnModel,
    pub history: TrainHistory,
    pub report: EvalReport,
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary, CliError> {
    let data = load_dataset(required(&cfg.dataset, "dataset")?)?;
    let out = prepare_out(cfg)?;
    let (h, w) = data.geometry();
    let model = build_model(cfg, h, w, &data.manifest.window)?;
    let (model, history) = run_training(cfg, model, &data.train, &data.test, &out)?;
    let report = evaluate_cfg(cfg, &model, &data.test)?;
    write_report(&out, &report)?;
    println!(
        "trained {} epochs; test accuracy {:.4} over {} windows",
        history.len(),
        report.metrics.accuracy,
        report.samples
    );
    Ok(TrainSummary {
        dir: out,
        model,
        history,
        report,
    })
}

/// Evaluates a checkpoint on the dataset's test split.
pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalReport, CliError> {
    let model = load_checkpoint(required(&cfg.checkpoint, "checkpoint")?)?;
    let data = load_dataset(required(&cfg.dataset, "dataset")?)?;
    let out = prepare_out(cfg)?;
    let report = evaluate_cfg(cfg, &model, &data.test)?;
    write_report(&out, &report)?;
    println!(
        "accuracy {:.4} precision {:.4} recall {:.4} f1 {:.4} over {} windows",
        report.metrics.accuracy,
        report.metrics.precision,
        report.metrics.recall,
        report.metrics.f1,
        report.samples
    );
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct FinetuneSummary {
    pub dir: PathBuf,
    pub zero_shot: EvalReport,
    pub report: EvalReport,
    pub history: TrainHistory,
    /// Manifest indices of the training windows used.
    pub consumed: Vec<usize>,
}

/// Zero-shot evaluation of a checkpoint, then training on a stratified
/// fraction of the dataset's train split; both evaluated on its test split.
pub fn cmd_finetune(cfg: &RunConfig) -> Result<FinetuneSummary, CliError> {
    let model = load_checkpoint(required(&cfg.checkpoint, "checkpoint")?)?;
    let data = load_dataset(required(&cfg.dataset, "dataset")?)?;
    let out = prepare_out(cfg)?;
    let zero_shot = evaluate_cfg(cfg, &model, &data.test)?;
    write_json(&out.join("zero_shot.json"), &zero_shot)?;

    let labels: Vec<EyeClass> = data
        .train
        .iter()
        .map(|s| s.label.expect("manifest windows are labelled"))
        .collect();
    let subset = stratified_subset(&labels, cfg.finetune.fraction, cfg.seed)?;
    let picked: Vec<SpikeTensor> = subset.iter().map(|&i| data.train[i].clone()).collect();
    let consumed: Vec<usize> = subset
        .iter()
        .map(|&i| data.manifest.splits.train[i])
        .collect();

    let mut manifest = data.manifest.clone();
    let base = fs::canonicalize(&data.dir).map_err(|e| Error::Io {
        path: data.dir.clone(),
        source: e,
    })?;
    for e in &mut manifest.entries {
        e.event_file = base.join(&e.event_file).to_string_lossy().into_owned();
    }
    manifest.splits = Splits {
        train: consumed.clone(),
        test: data.manifest.splits.test.clone(),
    };
    write_manifest(&out.join(MANIFEST_FILE), &manifest)?;

    let (model, history) = run_training(cfg, model, &picked, &data.test, &out)?;
    let report = evaluate_cfg(cfg, &model, &data.test)?;
    write_report(&out, &report)?;
    println!(
        "fraction {} ({} of {} windows): zero-shot {:.4} -> finetuned {:.4}",
        cfg.finetune.fraction,
        consumed.len(),
        data.train.len(),
        zero_shot.metrics.accuracy,
        report.metrics.accuracy
    );
    Ok(FinetuneSummary {
        dir: out,
        zero_shot,
        report,
        history,
        consumed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub ts_ms: f64,
    pub accuracy: f64,
    pub loss: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub const SWEEP_HEADER: &str = "ts_ms,accuracy,loss,precision,recall,f1";

/// Loads a generated dataset's recording and labels.
pub fn load_recording(dir: &Path) -> Result<Recording, CliError> {
    let labels = LabelTrack::read_json(&dir.join(LABELS_FILE))?;
    let mut events = read_evb1(&dir.join(EVENTS_FILE))?;
    events.duration_us = events.duration_us.max(labels.duration_us());
    Ok(Recording { events, labels })
}

/// Re-slices the recording at each window length, trains and evaluates.
/// Precision, recall and F1 are macro averages.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>, CliError> {
    let rec = load_recording(required(&cfg.dataset, "dataset")?)?;
    let out = prepare_out(cfg)?;
    let mut rows = Vec::new();
    for &ts in &cfg.sweep.ts_list {
        let spec = WindowSpec {
            window_ms: ts,
            ..cfg.codec.window
        };
        let mut windows = labelled_windows(&rec, &spec, Some(cfg.seed))?;
        let labels: Vec<EyeClass> = windows.iter().map(|w| w.label.expect("labelled")).collect();
        if let Some(cap) = cfg.sweep.samples_per_class {
            let keep = cap_per_class(&labels, cap, cfg.seed);
            windows = keep.iter().map(|&i| windows[i].clone()).collect();
        }
        let labels: Vec<EyeClass> = windows.iter().map(|w| w.label.expect("labelled")).collect();
        let counts = ClassCounts::of(&labels);
        if counts.fixation == 0 || counts.saccade == 0 {
            return Err(Error::Data(format!(
                "{ts} ms windows: fixation {} saccade {}; both classes are needed",
                counts.fixation, counts.saccade
            ))
            .into());
        }
        let split = stratified_split(&labels, cfg.codec.test_fraction, cfg.seed);
        let train: Vec<SpikeTensor> = split.train.iter().map(|&i| windows[i].clone()).collect();
        let test: Vec<SpikeTensor> = split.test.iter().map(|&i| windows[i].clone()).collect();
        let (h, w) = spec.geometry(rec.events.width, rec.events.height);
        let model = build_model(cfg, h, w, &spec)?;
        let (model, _) = bptt_train(model, &train, &test, &cfg.train)?;
        let report = evaluate_cfg(cfg, &model, &test)?;
        let m = report.metrics;
        let row = SweepRow {
            ts_ms: ts,
            accuracy: m.accuracy,
            loss: report.mean_loss,
            precision: m.macro_precision,
            recall: m.macro_recall,
            f1: m.macro_f1,
        };
        println!(
            "ts {ts} ms: {} train / {} test windows, accuracy {:.4}",
            train.len(),
            test.len(),
            row.accuracy
        );
        rows.push(row);
    }
    let mut text = String::from(SWEEP_HEADER);
    text.push('\n');
    for r in &rows {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.ts_ms, r.accuracy, r.loss, r.precision, r.recall, r.f1
        ));
    }
    let path = out.join("sweep.csv");
    fs::write(&path, text).map_err(|e| Error::Io { path, source: e })?;
    Ok(rows)
}

/// Ops table for a checkpoint (or a fresh model from the config) using spike
/// statistics gathered on the dataset's test split.
pub fn cmd_ops(cfg: &RunConfig) -> Result<OpsReport, CliError> {
    let data = cfg.dataset.as_deref().map(load_dataset).transpose()?;
    let model = match &cfg.checkpoint {
        Some(p) => load_checkpoint(p)?,
        None => {
            let window = data
                .as_ref()
                .map_or(cfg.codec.window, |d| d.manifest.window);
            let (h, w) = match &data {
                Some(d) => d.geometry(),
                None => window.geometry(cfg.render.width as u16, cfg.render.height as u16),
            };
            build_model(cfg, h, w, &window)?
        }
    };
    let report = match &data {
        Some(d) => {
            let eval = evaluate_cfg(cfg, &model, &d.test)?;
            count_ops_from_stats(&model, &eval.stats)?
        }
        None => {
            log::warn!("no dataset given; event and synaptic-op columns are zero");
            count_ops_with_means(&model, &vec![0.0; model.weighted_layers().len()])?
        }
    };
    let out = prepare_out(cfg)?;
    write_json(&out.join("ops.json"), &report)?;
    let path = out.join("ops.md");
    fs::write(&path, report.to_markdown()).map_err(|e| Error::Io { path, source: e })?;
    print!("{}", report.to_markdown());
    Ok(report)
}
