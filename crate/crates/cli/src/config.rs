//! Run configuration: one JSON document with a section per pipeline stage.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use synsacc_core::event_sim::SimConfig;
use synsacc_core::kinematics::ScheduleConfig;
use synsacc_core::pipeline::RecordingConfig;
use synsacc_core::render::EyeAppearance;
use synsacc_core::rng::RNG_ALGORITHM;
use synsacc_core::snn::{ModelConfig, NeuronConfig};
use synsacc_core::spike_codec::WindowSpec;
use synsacc_core::train::TrainConfig;

use crate::CliError;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KinematicsSection {
    pub duration_ms: f64,
    /// Largest gaze angle per axis, degrees.
    pub max_angle_deg: f64,
    pub fix_range_ms: [f64; 2],
    pub sac_range_ms: [f64; 2],
}

impl Default for KinematicsSection {
    fn default() -> Self {
        let s = ScheduleConfig::new(60_000.0, 10.0);
        KinematicsSection {
            duration_ms: s.duration_ms,
            max_angle_deg: s.max_angle_deg,
            fix_range_ms: s.fix_range_ms,
            sac_range_ms: s.sac_range_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderSection {
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    pub appearance: EyeAppearance,
}

impl Default for RenderSection {
    fn default() -> Self {
        RenderSection {
            width: 64,
            height: 48,
            fps: 250.0,
            appearance: EyeAppearance::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodecSection {
    pub window: WindowSpec,
    /// Down-sample the majority class to the minority count.
    pub balance: bool,
    pub test_fraction: f64,
}

impl Default for CodecSection {
    fn default() -> Self {
        CodecSection {
            window: WindowSpec::default(),
            balance: true,
            test_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Dense,
    Conv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub architecture: Architecture,
    /// Hidden widths of the dense stack; ignored by `conv`.
    pub hidden: Vec<usize>,
    pub neuron: NeuronConfig,
    pub init_gain: f64,
    pub max_delay: u8,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            architecture: Architecture::Dense,
            hidden: vec![128, 128],
            neuron: NeuronConfig::default(),
            init_gain: ModelConfig::default().init_gain,
            max_delay: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneSection {
    pub fraction: f64,
}

impl Default for FinetuneSection {
    fn default() -> Self {
        FinetuneSection { fraction: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub ts_list: Vec<f64>,
    /// Balanced windows kept per class at every window length, so each row
    /// trains and tests on the same amount of data. `None` keeps all.
    pub samples_per_class: Option<usize>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            ts_list: vec![200.0, 150.0, 100.0, 80.0, 50.0, 33.0, 20.0, 10.0, 8.0],
            samples_per_class: Some(100),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventFormat {
    Evb1,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub frames_dir: Option<PathBuf>,
    pub fps: f64,
    pub format: EventFormat,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            frames_dir: None,
            fps: 250.0,
            format: EventFormat::Evb1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub tool_version: String,
    pub rng: String,
    pub seed: u64,
    pub out: PathBuf,
    pub threads: Option<usize>,
    /// Dataset directory (holding `manifest.json`) read by train/eval/finetune/sweep/ops.
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub kinematics: KinematicsSection,
    pub render: RenderSection,
    pub sim: SimConfig,
    pub codec: CodecSection,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub finetune: FinetuneSection,
    pub sweep: SweepSection,
    pub simulate: SimulateSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            tool_version: TOOL_VERSION.to_string(),
            rng: RNG_ALGORITHM.to_string(),
            seed: 0,
            out: PathBuf::from("run"),
            threads: None,
            dataset: None,
            checkpoint: None,
            kinematics: KinematicsSection::default(),
            render: RenderSection::default(),
            sim: SimConfig::default(),
            codec: CodecSection::default(),
            model: ModelSection::default(),
            train: TrainConfig::default(),
            finetune: FinetuneSection::default(),
            sweep: SweepSection::default(),
            simulate: SimulateSection::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub fraction: Option<f64>,
    pub frames_dir: Option<PathBuf>,
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    /// Parses a config document. Section seeds may only repeat the global seed.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let value: Value = serde_json::from_str(text).map_err(|e| config_error(e.to_string()))?;
        let cfg: RunConfig =
            serde_json::from_value(value.clone()).map_err(|e| config_error(e.to_string()))?;
        for section in ["sim", "train"] {
            if let Some(s) = value.get(section).and_then(|v| v.get("seed")) {
                if s.as_u64() != Some(cfg.seed) {
                    return Err(config_error(format!(
                        "{section}.seed differs from the global seed; set the top-level `seed` instead"
                    )));
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Applies overrides, propagates the global seed and checks every section.
    pub fn resolve(mut self, o: &Overrides) -> Result<Self, CliError> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(p) = &o.out {
            self.out = p.clone();
        }
        if o.threads.is_some() {
            self.threads = o.threads;
        }
        if let Some(p) = &o.dataset {
            self.dataset = Some(p.clone());
        }
        if let Some(p) = &o.checkpoint {
            self.checkpoint = Some(p.clone());
        }
        if let Some(f) = o.fraction {
            self.finetune.fraction = f;
        }
        if let Some(p) = &o.frames_dir {
            self.simulate.frames_dir = Some(p.clone());
        }
        if self.tool_version != TOOL_VERSION {
            log::warn!(
                "config written by version {}, running {TOOL_VERSION}",
                self.tool_version
            );
            self.tool_version = TOOL_VERSION.to_string();
        }
        self.rng = RNG_ALGORITHM.to_string();
        self.sim.seed = self.seed;
        self.train.seed = self.seed;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let wrap = |e: synsacc_core::Error| config_error(e.to_string());
        self.recording().validate().map_err(wrap)?;
        self.codec.window.validate().map_err(wrap)?;
        self.train.validate().map_err(wrap)?;
        self.model.neuron.params().map_err(wrap)?;
        let k = &self.kinematics;
        if !(k.duration_ms > 0.0 && k.max_angle_deg >= 0.0) {
            return Err(config_error(
                "kinematics.duration_ms must be positive, max_angle_deg non-negative",
            ));
        }
        if !(self.codec.test_fraction > 0.0 && self.codec.test_fraction < 1.0) {
            return Err(config_error("codec.test_fraction must lie in (0, 1)"));
        }
        if !(self.model.init_gain > 0.0) {
            return Err(config_error("model.init_gain must be positive"));
        }
        if self.model.architecture == Architecture::Dense && self.model.hidden.contains(&0) {
            return Err(config_error("model.hidden widths must be positive"));
        }
        if self.sweep.ts_list.iter().any(|&t| !(t > 0.0)) {
            return Err(config_error("sweep.ts_list entries must be positive"));
        }
        if !(self.simulate.fps > 0.0) {
            return Err(config_error("simulate.fps must be positive"));
        }
        if self.threads == Some(0) {
            return Err(config_error("threads must be at least 1"));
        }
        Ok(())
    }

    pub fn schedule(&self) -> ScheduleConfig {
        let k = &self.kinematics;
        ScheduleConfig {
            duration_ms: k.duration_ms,
            max_angle_deg: k.max_angle_deg,
            fix_range_ms: k.fix_range_ms,
            sac_range_ms: k.sac_range_ms,
        }
    }

    pub fn recording(&self) -> RecordingConfig {
        RecordingConfig {
            schedule: self.schedule(),
            appearance: self.render.appearance,
            width: self.render.width,
            height: self.render.height,
            fps: self.render.fps,
            sim: self.sim,
        }
    }

    pub fn model_config(&self, window: &WindowSpec) -> ModelConfig {
        ModelConfig {
            neuron: self.model.neuron,
            init_gain: self.model.init_gain,
            max_delay: self.model.max_delay,
            timesteps: window.bins(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// Writes the resolved config as `config.json` in `dir`.
    pub fn emit(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join("config.json");
        fs::write(&path, self.to_json())
            .map_err(|e| CliError::Core(synsacc_core::Error::Io { path, source: e }))
    }
}
