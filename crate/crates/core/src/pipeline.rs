//! End-to-end recording: gaze schedule → rendered frames → events → labelled windows.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::event_sim::{EventSimulator, EventStream, SimConfig};
use crate::kinematics::{generate_labeled_schedule, EyeClass, LabelTrack, ScheduleConfig};
use crate::render::{EyeAppearance, SequenceRenderer};
use crate::spike_codec::{balance_classes, slice_windows, SpikeTensor, WindowSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordingConfig {
    pub schedule: ScheduleConfig,
    pub appearance: EyeAppearance,
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    pub sim: SimConfig,
}

impl RecordingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0
            || self.height == 0
            || self.width > u16::MAX as usize
            || self.height > u16::MAX as usize
        {
            return param(format!(
                "sensor size {}x{} out of range",
                self.width, self.height
            ));
        }
        self.appearance.validate()?;
        self.sim.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub events: EventStream,
    pub labels: LabelTrack,
}

/// Generates one labelled recording. `seed` drives the gaze schedule; the
/// sensor noise uses `cfg.sim.seed`.
pub fn record(cfg: &RecordingConfig, seed: u64) -> Result<Recording> {
    cfg.validate()?;
    let (samples, labels) = generate_labeled_schedule(&cfg.schedule, seed)?;
    let renderer =
        SequenceRenderer::new(&samples, &cfg.appearance, cfg.width, cfg.height, cfg.fps)?;
    let mut sim = EventSimulator::new(cfg.width, cfg.height, cfg.fps, renderer.t0_us(), &cfg.sim)?;
    for frame in renderer {
        sim.push_frame(&frame)?;
    }
    Ok(Recording {
        events: sim.finish()?,
        labels,
    })
}

/// Labelled windows of a recording, optionally down-sampled to equal class counts.
pub fn labelled_windows(
    rec: &Recording,
    spec: &WindowSpec,
    balance_seed: Option<u64>,
) -> Result<Vec<SpikeTensor>> {
    let windows = slice_windows(&rec.events, &rec.labels, spec)?;
    Ok(match balance_seed {
        None => windows,
        Some(seed) => {
            let labels: Vec<EyeClass> = windows
                .iter()
                .map(|w| w.label.expect("sliced windows are labelled"))
                .collect();
            let keep = balance_classes(&labels, seed);
            let mut windows: Vec<Option<SpikeTensor>> = windows.into_iter().map(Some).collect();
            keep.into_iter()
                .map(|i| windows[i].take().expect("unique index"))
                .collect()
        }
    })
}
