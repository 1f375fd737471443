//! Eye-rotation schedules.
//!
//! Two generators live here. [`generate_saccades`] draws one random Euler
//! rotation per keyframe (the unlabeled keyframe routine), and
//! [`generate_labeled_schedule`] alternates fixations and saccades with sampled
//! durations so that ground truth comes for free.
//!
//! Euler convention: `x` is vertical gaze, `z` is horizontal gaze and `y` is
//! torsion. Mirroring negates `y`, so mirrored tracks render identically.

use std::fs;
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::rng::{self, stream};

/// Minimum fixation length; shorter trailing fixations merge into the previous segment.
pub const MIN_FIXATION_US: u64 = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationKey {
    pub frame_index: u64,
    /// Euler angles (x, y, z) in degrees.
    pub rotation: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationTrack {
    pub keys: Vec<RotationKey>,
    pub frame_start: u64,
    pub frame_end: u64,
    pub frame_step: u64,
    pub fps: f64,
}

impl RotationTrack {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    fn key_time_s(&self, key: &RotationKey) -> f64 {
        key.frame_index as f64 / self.fps
    }
}

/// Frame range and bounds for keyframe generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyframeSpec {
    pub frame_start: u64,
    pub frame_end: u64,
    pub frame_step: u64,
    pub max_angle_deg: f64,
    pub fps: f64,
}

/// One random rotation per sampled frame, each component uniform in `±max_angle_deg`.
pub fn generate_saccades(spec: &KeyframeSpec, seed: u64) -> Result<RotationTrack> {
    if spec.frame_end < spec.frame_start {
        return param(format!(
            "frame_end {} precedes frame_start {}",
            spec.frame_end, spec.frame_start
        ));
    }
    if spec.frame_step == 0 {
        return param("frame_step must be at least 1");
    }
    if !(spec.max_angle_deg > 0.0) || !spec.max_angle_deg.is_finite() {
        return param(format!(
            "max_angle_deg must be positive, got {}",
            spec.max_angle_deg
        ));
    }
    if !(spec.fps > 0.0) {
        return param(format!("fps must be positive, got {}", spec.fps));
    }

    let limit = spec.max_angle_deg;
    let mut rng = rng::seeded(seed, stream::KEYFRAMES);
    let keys = (spec.frame_start..=spec.frame_end)
        .step_by(spec.frame_step as usize)
        .map(|frame_index| {
            let rotation = [
                rng.random_range(-limit..=limit),
                rng.random_range(-limit..=limit),
                rng.random_range(-limit..=limit),
            ];
            RotationKey {
                frame_index,
                rotation,
            }
        })
        .collect();

    Ok(RotationTrack {
        keys,
        frame_start: spec.frame_start,
        frame_end: spec.frame_end,
        frame_step: spec.frame_step,
        fps: spec.fps,
    })
}

/// Contralateral eye: `(x, y, z) -> (x, -y, z)` at the same frames.
pub fn mirror_track(track: &RotationTrack) -> RotationTrack {
    let keys = track
        .keys
        .iter()
        .map(|k| RotationKey {
            frame_index: k.frame_index,
            rotation: [k.rotation[0], -k.rotation[1], k.rotation[2]],
        })
        .collect();
    RotationTrack {
        keys,
        ..track.clone()
    }
}

/// Both eyes for one keyframe schedule; the right eye is always the mirror of the left.
pub fn generate_binocular(
    spec: &KeyframeSpec,
    seed: u64,
) -> Result<(RotationTrack, RotationTrack)> {
    let left = generate_saccades(spec, seed)?;
    let right = mirror_track(&left);
    Ok((left, right))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    pub t_us: u64,
    /// (horizontal, vertical) in degrees.
    pub angle: [f64; 2],
    pub segment_id: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EyeClass {
    Fixation,
    Saccade,
}

impl EyeClass {
    pub const ALL: [EyeClass; 2] = [EyeClass::Fixation, EyeClass::Saccade];

    pub fn index(self) -> usize {
        match self {
            EyeClass::Fixation => 0,
            EyeClass::Saccade => 1,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        match index {
            0 => Some(EyeClass::Fixation),
            1 => Some(EyeClass::Saccade),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSegment {
    pub start_us: u64,
    pub end_us: u64,
    pub class: EyeClass,
}

impl LabelSegment {
    pub fn duration_us(&self) -> u64 {
        self.end_us - self.start_us
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelTrack {
    pub segments: Vec<LabelSegment>,
}

impl LabelTrack {
    /// Checks contiguity from zero and strict ordering.
    pub fn validate(&self) -> Result<()> {
        let mut cursor = 0;
        for (i, seg) in self.segments.iter().enumerate() {
            if seg.start_us != cursor {
                return Err(Error::Data(format!(
                    "label segment {i} starts at {} but previous ended at {cursor}",
                    seg.start_us
                )));
            }
            if seg.end_us <= seg.start_us {
                return Err(Error::Data(format!(
                    "label segment {i} is empty or reversed"
                )));
            }
            cursor = seg.end_us;
        }
        Ok(())
    }

    pub fn duration_us(&self) -> u64 {
        self.segments.last().map_or(0, |s| s.end_us)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let track: LabelTrack =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        track.validate()?;
        Ok(track)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub duration_ms: f64,
    pub max_angle_deg: f64,
    pub fix_range_ms: [f64; 2],
    pub sac_range_ms: [f64; 2],
}

impl ScheduleConfig {
    pub fn new(duration_ms: f64, max_angle_deg: f64) -> Self {
        ScheduleConfig {
            duration_ms,
            max_angle_deg,
            fix_range_ms: [50.0, 600.0],
            sac_range_ms: [20.0, 300.0],
        }
    }
}

fn ms_to_us(ms: f64) -> u64 {
    (ms * 1000.0).round() as u64
}

/// Alternating fixation/saccade schedule covering `[0, duration]`.
///
/// Gaze is held during fixations and moves along a straight line between the
/// two bounding fixation targets during saccades. The returned samples are the
/// breakpoints of that piecewise-linear trajectory, one per segment boundary.
pub fn generate_labeled_schedule(
    cfg: &ScheduleConfig,
    seed: u64,
) -> Result<(Vec<GazeSample>, LabelTrack)> {
    if !(cfg.duration_ms > 0.0) {
        return param(format!(
            "duration_ms must be positive, got {}",
            cfg.duration_ms
        ));
    }
    if !(cfg.max_angle_deg > 0.0) {
        return param(format!(
            "max_angle_deg must be positive, got {}",
            cfg.max_angle_deg
        ));
    }
    for (name, range) in [
        ("fix_range_ms", cfg.fix_range_ms),
        ("sac_range_ms", cfg.sac_range_ms),
    ] {
        if !(range[0] >= 1.0) || range[1] < range[0] {
            return param(format!(
                "{name} must satisfy 1 <= min <= max, got {range:?}"
            ));
        }
    }

    let duration = ms_to_us(cfg.duration_ms);
    let fix = [ms_to_us(cfg.fix_range_ms[0]), ms_to_us(cfg.fix_range_ms[1])];
    let sac = [ms_to_us(cfg.sac_range_ms[0]), ms_to_us(cfg.sac_range_ms[1])];
    let limit = cfg.max_angle_deg;
    let mut rng = rng::seeded(seed, stream::SCHEDULE);
    let mut target = || -> [f64; 2] {
        [
            rng.random_range(-limit..=limit),
            rng.random_range(-limit..=limit),
        ]
    };
    let mut durations = rng::seeded(seed ^ 0x5ac_cade, stream::SCHEDULE);

    // (start, end, class, gaze at start, gaze at end)
    type Seg = (u64, u64, EyeClass, [f64; 2], [f64; 2]);
    let mut segs: Vec<Seg> = Vec::new();
    let mut t = 0u64;
    let mut gaze = target();

    if duration < fix[0] {
        segs.push((0, duration, EyeClass::Fixation, gaze, gaze));
    } else {
        let mut class = EyeClass::Fixation;
        while t < duration {
            match class {
                EyeClass::Fixation => {
                    let d = durations.random_range(fix[0]..=fix[1]);
                    let end = (t + d).min(duration);
                    if end - t < MIN_FIXATION_US && !segs.is_empty() {
                        // Too short to be a fixation; fold it into the saccade before it.
                        let last = segs.last_mut().expect("non-empty");
                        last.1 = end;
                    } else {
                        segs.push((t, end, class, gaze, gaze));
                    }
                    t = end;
                    class = EyeClass::Saccade;
                }
                EyeClass::Saccade => {
                    let d = durations.random_range(sac[0]..=sac[1]);
                    let next = target();
                    let end = (t + d).min(duration);
                    let frac = (end - t) as f64 / d as f64;
                    let reached = [
                        gaze[0] + (next[0] - gaze[0]) * frac,
                        gaze[1] + (next[1] - gaze[1]) * frac,
                    ];
                    segs.push((t, end, class, gaze, reached));
                    gaze = reached;
                    t = end;
                    class = EyeClass::Fixation;
                }
            }
        }
    }

    let mut samples = Vec::with_capacity(segs.len() + 1);
    for (id, &(start, _, _, g0, _)) in segs.iter().enumerate() {
        samples.push(GazeSample {
            t_us: start,
            angle: g0,
            segment_id: id,
        });
    }
    let (_, last_end, _, _, last_gaze) = *segs.last().expect("at least one segment");
    samples.push(GazeSample {
        t_us: last_end,
        angle: last_gaze,
        segment_id: segs.len() - 1,
    });

    let labels = LabelTrack {
        segments: segs
            .iter()
            .map(|&(start_us, end_us, class, _, _)| LabelSegment {
                start_us,
                end_us,
                class,
            })
            .collect(),
    };
    Ok((samples, labels))
}

/// Uniformly sampled gaze from keyframes: horizontal from Euler `z`, vertical
/// from Euler `x`, linearly interpolated between consecutive keys.
pub fn sample_trajectory(track: &RotationTrack, sample_rate_hz: f64) -> Result<Vec<GazeSample>> {
    if !(sample_rate_hz > 0.0) {
        return param(format!(
            "sample_rate_hz must be positive, got {sample_rate_hz}"
        ));
    }
    let (first, last) = match (track.keys.first(), track.keys.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::Data("cannot sample an empty rotation track".into())),
    };
    let gaze_of = |k: &RotationKey| [k.rotation[2], k.rotation[0]];

    let t0 = track.key_time_s(first);
    let span = track.key_time_s(last) - t0;
    let count = (span * sample_rate_hz + 1e-9).floor() as usize + 1;

    let mut samples = Vec::with_capacity(count);
    let mut seg = 0usize;
    for n in 0..count {
        let t = t0 + n as f64 / sample_rate_hz;
        while seg + 2 < track.keys.len() && track.key_time_s(&track.keys[seg + 1]) <= t {
            seg += 1;
        }
        let angle = if track.keys.len() == 1 {
            gaze_of(first)
        } else {
            let a = &track.keys[seg];
            let b = &track.keys[seg + 1];
            let ta = track.key_time_s(a);
            let tb = track.key_time_s(b);
            let w = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
            let (ga, gb) = (gaze_of(a), gaze_of(b));
            [ga[0] + (gb[0] - ga[0]) * w, ga[1] + (gb[1] - ga[1]) * w]
        };
        samples.push(GazeSample {
            t_us: (t * 1e6).round() as u64,
            angle,
            segment_id: seg,
        });
    }
    Ok(samples)
}

/// Piecewise-linear gaze at `t_us`, clamped to the sampled span.
pub fn gaze_at(samples: &[GazeSample], t_us: u64) -> Option<[f64; 2]> {
    let first = samples.first()?;
    let last = samples.last()?;
    if t_us <= first.t_us {
        return Some(first.angle);
    }
    if t_us >= last.t_us {
        return Some(last.angle);
    }
    let idx = samples.partition_point(|s| s.t_us <= t_us);
    let (a, b) = (&samples[idx - 1], &samples[idx]);
    if a.t_us == t_us {
        return Some(a.angle);
    }
    let w = (t_us - a.t_us) as f64 / (b.t_us - a.t_us) as f64;
    Some([
        a.angle[0] + (b.angle[0] - a.angle[0]) * w,
        a.angle[1] + (b.angle[1] - a.angle[1]) * w,
    ])
}
