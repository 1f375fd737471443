//! Frame-to-event conversion.
//!
//! Pipeline: `ln(I + 1e-3)` → linear upsampling in log space → first-order
//! photoreceptor low-pass → per-pixel reference-level threshold crossing →
//! Poisson leak/shot noise. [`upsample_log`], [`lowpass`], [`generate_events`]
//! and [`inject_noise`] are the batch forms; [`EventSimulator`] runs the same
//! arithmetic one input frame at a time and produces bit-identical streams.

mod format;

use rand::Rng as _;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{param, shape, Error, Result};
use crate::render::{Frame, IntensityFrameSequence};
use crate::rng::{self, stream};

pub use format::{
    decode_evb1, encode_evb1, read_csv, read_evb1, read_events, write_csv, write_evb1, EVB1_MAGIC,
};

/// Guard added before taking the log so black pixels stay finite.
pub const LOG_EPS: f64 = 1e-3;
/// Effective thresholds never drop below this after jitter.
pub const MIN_THRESHOLD: f64 = 0.01;
// Absorbs rounding in Δ/θ so that exact multiples of θ fire.
const RATIO_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarity {
    Off,
    On,
}

impl Polarity {
    pub fn sign(self) -> i8 {
        match self {
            Polarity::On => 1,
            Polarity::Off => -1,
        }
    }

    /// Channel index in spike tensors: OFF = 0, ON = 1.
    pub fn channel(self) -> usize {
        match self {
            Polarity::Off => 0,
            Polarity::On => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Event {
    pub t_us: u64,
    pub x: u16,
    pub y: u16,
    pub polarity: Polarity,
}

impl Event {
    fn sort_key(&self) -> (u64, u16, u16, Polarity) {
        (self.t_us, self.y, self.x, self.polarity)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    pub events: Vec<Event>,
    pub width: u16,
    pub height: u16,
    pub duration_us: u64,
}

impl EventStream {
    pub fn empty(width: u16, height: u16, duration_us: u64) -> Self {
        EventStream {
            events: Vec::new(),
            width,
            height,
            duration_us,
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Puts events in canonical order: time, then row, column, polarity.
    pub fn sort(&mut self) {
        self.events.sort_unstable_by_key(Event::sort_key);
    }

    pub fn validate(&self) -> Result<()> {
        for (i, e) in self.events.iter().enumerate() {
            if e.x >= self.width || e.y >= self.height {
                return Err(Error::Data(format!(
                    "event {i} at ({}, {}) outside {}x{} sensor",
                    e.x, e.y, self.width, self.height
                )));
            }
        }
        if self.events.windows(2).any(|w| w[0].t_us > w[1].t_us) {
            return Err(Error::Data("event timestamps decrease".into()));
        }
        Ok(())
    }

    /// Indices `[lo, hi)` of events with `t_start <= t < t_end`.
    pub fn range(&self, t_start: u64, t_end: u64) -> std::ops::Range<usize> {
        let lo = self.events.partition_point(|e| e.t_us < t_start);
        let hi = self.events.partition_point(|e| e.t_us < t_end);
        lo..hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub theta_on: f64,
    pub theta_off: f64,
    pub sigma_theta: f64,
    /// Photoreceptor corner frequency; `None` bypasses the filter.
    pub cutoff_hz: Option<f64>,
    pub leak_rate_hz: f64,
    pub shot_rate_hz: f64,
    pub upsample_factor: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            theta_on: 0.2,
            theta_off: 0.2,
            sigma_theta: 0.05,
            cutoff_hz: Some(30.0),
            leak_rate_hz: 0.1,
            shot_rate_hz: 5.0,
            upsample_factor: 8,
            seed: 0,
        }
    }
}

impl SimConfig {
    /// Noise-free, mismatch-free, unfiltered settings for oracle checks.
    pub fn ideal(theta: f64) -> Self {
        SimConfig {
            theta_on: theta,
            theta_off: theta,
            sigma_theta: 0.0,
            cutoff_hz: None,
            leak_rate_hz: 0.0,
            shot_rate_hz: 0.0,
            upsample_factor: 1,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta_on > 0.0 && self.theta_off > 0.0) {
            return param("contrast thresholds must be positive");
        }
        if !(self.sigma_theta >= 0.0) {
            return param("sigma_theta must be non-negative");
        }
        if let Some(c) = self.cutoff_hz {
            if !(c > 0.0) {
                return param("cutoff_hz must be positive (use null to bypass the filter)");
            }
        }
        if !(self.leak_rate_hz >= 0.0 && self.shot_rate_hz >= 0.0) {
            return param("noise rates must be non-negative");
        }
        if self.upsample_factor == 0 {
            return param("upsample_factor must be at least 1");
        }
        Ok(())
    }
}

/// Log-intensity frames, row-major per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LogFrameSequence {
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    pub t0_us: u64,
    pub frames: Vec<Vec<f64>>,
}

impl LogFrameSequence {
    pub fn frame_time_us(&self, index: usize) -> u64 {
        frame_time(self.t0_us, self.fps, index)
    }
}

fn frame_time(t0_us: u64, fps: f64, index: usize) -> u64 {
    t0_us + (index as f64 * 1e6 / fps).round() as u64
}

#[inline]
pub fn log_intensity(v: f64) -> f64 {
    (v + LOG_EPS).ln()
}

#[inline]
fn lerp_log(a: f64, b: f64, step: usize, factor: usize) -> f64 {
    a + (b - a) * (step as f64 / factor as f64)
}

/// Log transform followed by `factor - 1` interpolated frames per gap.
pub fn upsample_log(frames: &IntensityFrameSequence, factor: usize) -> Result<LogFrameSequence> {
    if factor == 0 {
        return param("upsample factor must be at least 1");
    }
    frames.validate()?;
    if factor > 1 && frames.frames.len() < 2 {
        return param("upsampling needs at least two frames");
    }
    let logs: Vec<Vec<f64>> = frames
        .frames
        .iter()
        .map(|f| f.data.iter().map(|&v| log_intensity(v)).collect())
        .collect();

    let mut out = Vec::with_capacity(logs.len().saturating_sub(1) * factor + 1);
    if let Some(first) = logs.first() {
        out.push(first.clone());
    }
    for pair in logs.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        for step in 1..=factor {
            out.push(
                a.iter()
                    .zip(b)
                    .map(|(&x, &y)| lerp_log(x, y, step, factor))
                    .collect(),
            );
        }
    }
    Ok(LogFrameSequence {
        width: frames.width,
        height: frames.height,
        fps: frames.fps * factor as f64,
        t0_us: frames.t0_us,
        frames: out,
    })
}

/// Filter coefficient `min(1, 2π·cutoff/fps)`.
pub fn lowpass_coefficient(cutoff_hz: f64, fps: f64) -> f64 {
    (2.0 * std::f64::consts::PI * cutoff_hz / fps).min(1.0)
}

/// Per-pixel first-order IIR, started at the first sample.
pub fn lowpass(
    log_frames: &LogFrameSequence,
    cutoff_hz: f64,
    fps: f64,
) -> Result<LogFrameSequence> {
    if !(fps > 0.0) {
        return param("fps must be positive");
    }
    let a = lowpass_coefficient(cutoff_hz, fps);
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(log_frames.frames.len());
    for frame in &log_frames.frames {
        let next = match out.last() {
            None => frame.clone(),
            Some(prev) => prev
                .iter()
                .zip(frame)
                .map(|(&y, &x)| (1.0 - a) * y + a * x)
                .collect(),
        };
        out.push(next);
    }
    Ok(LogFrameSequence {
        frames: out,
        ..log_frames.clone()
    })
}

/// Frozen per-pixel threshold mismatch, drawn once per stream.
#[derive(Debug, Clone)]
pub struct PixelThresholds {
    pub on: Vec<f64>,
    pub off: Vec<f64>,
}

impl PixelThresholds {
    pub fn draw(pixels: usize, cfg: &SimConfig) -> Self {
        if cfg.sigma_theta == 0.0 {
            return PixelThresholds {
                on: vec![cfg.theta_on.max(MIN_THRESHOLD); pixels],
                off: vec![cfg.theta_off.max(MIN_THRESHOLD); pixels],
            };
        }
        let mut rng = rng::seeded(cfg.seed, stream::THRESHOLDS);
        let on_dist = Normal::new(cfg.theta_on, cfg.sigma_theta).expect("validated sigma");
        let off_dist = Normal::new(cfg.theta_off, cfg.sigma_theta).expect("validated sigma");
        let mut on = Vec::with_capacity(pixels);
        let mut off = Vec::with_capacity(pixels);
        for _ in 0..pixels {
            on.push(on_dist.sample(&mut rng).max(MIN_THRESHOLD));
            off.push(off_dist.sample(&mut rng).max(MIN_THRESHOLD));
        }
        PixelThresholds { on, off }
    }
}

/// Reference-level crossing detector shared by the batch and streaming paths.
struct Crossings {
    width: usize,
    reference: Vec<f64>,
    thresholds: PixelThresholds,
}

impl Crossings {
    fn new(width: usize, first: &[f64], cfg: &SimConfig) -> Self {
        Crossings {
            width,
            reference: first.to_vec(),
            thresholds: PixelThresholds::draw(first.len(), cfg),
        }
    }

    fn transition(&mut self, frame: &[f64], t_prev: u64, t_cur: u64, out: &mut Vec<Event>) {
        let dt = t_cur - t_prev;
        for (idx, &level) in frame.iter().enumerate() {
            let delta = level - self.reference[idx];
            let (theta, polarity) = if delta >= 0.0 {
                (self.thresholds.on[idx], Polarity::On)
            } else {
                (self.thresholds.off[idx], Polarity::Off)
            };
            let n = (delta.abs() / theta + RATIO_SLACK).floor() as u64;
            if n == 0 {
                continue;
            }
            self.reference[idx] += f64::from(polarity.sign()) * n as f64 * theta;
            let (x, y) = ((idx % self.width) as u16, (idx / self.width) as u16);
            for j in 1..=n {
                out.push(Event {
                    t_us: t_prev + j * dt / (n + 1),
                    x,
                    y,
                    polarity,
                });
            }
        }
    }
}

/// Threshold crossings over a log-frame sequence, without noise.
pub fn generate_events(log_frames: &LogFrameSequence, cfg: &SimConfig) -> Result<EventStream> {
    cfg.validate()?;
    let frames = &log_frames.frames;
    if frames.len() < 2 {
        return param("event generation needs at least two frames");
    }
    let pixels = log_frames.width * log_frames.height;
    if let Some(bad) = frames.iter().position(|f| f.len() != pixels) {
        return shape(format!(
            "log frame {bad} has {} pixels, expected {pixels}",
            frames[bad].len()
        ));
    }
    let mut crossings = Crossings::new(log_frames.width, &frames[0], cfg);
    let mut events = Vec::new();
    for k in 1..frames.len() {
        crossings.transition(
            &frames[k],
            log_frames.frame_time_us(k - 1),
            log_frames.frame_time_us(k),
            &mut events,
        );
    }
    let duration_us = span_us(log_frames.t0_us, log_frames.fps, frames.len());
    let mut stream = EventStream {
        events,
        width: log_frames.width as u16,
        height: log_frames.height as u16,
        duration_us,
    };
    stream.sort();
    Ok(stream)
}

// Covers every frame tick including the last one's interval.
fn span_us(t0_us: u64, fps: f64, count: usize) -> u64 {
    frame_time(t0_us, fps, count)
}

/// Adds per-pixel Poisson leak (ON) and shot (balanced) events over `[0, duration_us)`.
pub fn inject_noise(stream: &EventStream, cfg: &SimConfig) -> Result<EventStream> {
    cfg.validate()?;
    let mut out = stream.clone();
    if cfg.leak_rate_hz == 0.0 && cfg.shot_rate_hz == 0.0 {
        return Ok(out);
    }
    if stream.duration_us == 0 {
        return Ok(out);
    }
    let seconds = stream.duration_us as f64 / 1e6;
    let leak = poisson(cfg.leak_rate_hz * seconds);
    let shot = poisson(cfg.shot_rate_hz * seconds);
    let mut rng = rng::seeded(cfg.seed, stream::NOISE);

    for y in 0..stream.height {
        for x in 0..stream.width {
            if let Some(dist) = &leak {
                let n = dist.sample(&mut rng) as u64;
                for _ in 0..n {
                    out.events.push(Event {
                        t_us: rng.random_range(0..stream.duration_us),
                        x,
                        y,
                        polarity: Polarity::On,
                    });
                }
            }
            if let Some(dist) = &shot {
                let n = dist.sample(&mut rng) as u64;
                for _ in 0..n {
                    let polarity = if rng.random_bool(0.5) {
                        Polarity::On
                    } else {
                        Polarity::Off
                    };
                    out.events.push(Event {
                        t_us: rng.random_range(0..stream.duration_us),
                        x,
                        y,
                        polarity,
                    });
                }
            }
        }
    }
    out.sort();
    Ok(out)
}

fn poisson(mean: f64) -> Option<Poisson<f64>> {
    (mean > 0.0).then(|| Poisson::new(mean).expect("positive finite mean"))
}

/// Full batch pipeline from intensity frames.
pub fn simulate(frames: &IntensityFrameSequence, cfg: &SimConfig) -> Result<EventStream> {
    cfg.validate()?;
    let logs = upsample_log(frames, cfg.upsample_factor)?;
    let filtered = match cfg.cutoff_hz {
        Some(c) => lowpass(&logs, c, logs.fps)?,
        None => logs,
    };
    let mut stream = generate_events(&filtered, cfg)?;
    stream.duration_us = span_us(frames.t0_us, frames.fps, frames.frames.len());
    inject_noise(&stream, cfg)
}

/// Streaming version of [`simulate`]: push frames in order, then [`finish`](Self::finish).
pub struct EventSimulator {
    cfg: SimConfig,
    width: usize,
    height: usize,
    fps: f64,
    t0_us: u64,
    alpha: Option<f64>,
    pushed: usize,
    prev_log: Vec<f64>,
    filtered: Vec<f64>,
    crossings: Option<Crossings>,
    events: Vec<Event>,
    scratch: Vec<f64>,
}

impl EventSimulator {
    pub fn new(width: usize, height: usize, fps: f64, t0_us: u64, cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        if !(fps > 0.0) {
            return param("fps must be positive");
        }
        let up_fps = fps * cfg.upsample_factor as f64;
        Ok(EventSimulator {
            cfg: *cfg,
            width,
            height,
            fps,
            t0_us,
            alpha: cfg.cutoff_hz.map(|c| lowpass_coefficient(c, up_fps)),
            pushed: 0,
            prev_log: Vec::new(),
            filtered: Vec::new(),
            crossings: None,
            events: Vec::new(),
            scratch: vec![0.0; width * height],
        })
    }

    pub fn push_frame(&mut self, frame: &Frame) -> Result<()> {
        if frame.width != self.width || frame.height != self.height {
            return shape(format!(
                "frame is {}x{}, simulator expects {}x{}",
                frame.width, frame.height, self.width, self.height
            ));
        }
        let log: Vec<f64> = frame.data.iter().map(|&v| log_intensity(v)).collect();
        if self.pushed == 0 {
            self.filtered = log.clone();
            self.crossings = Some(Crossings::new(self.width, &log, &self.cfg));
            self.prev_log = log;
            self.pushed = 1;
            return Ok(());
        }

        let factor = self.cfg.upsample_factor;
        let up_fps = self.fps * factor as f64;
        let base = (self.pushed - 1) * factor;
        let crossings = self.crossings.as_mut().expect("initialized on first frame");
        for step in 1..=factor {
            for (s, (&a, &b)) in self.scratch.iter_mut().zip(self.prev_log.iter().zip(&log)) {
                *s = lerp_log(a, b, step, factor);
            }
            let input: &[f64] = match self.alpha {
                Some(alpha) => {
                    for (y, &x) in self.filtered.iter_mut().zip(&self.scratch) {
                        *y = (1.0 - alpha) * *y + alpha * x;
                    }
                    &self.filtered
                }
                None => &self.scratch,
            };
            let k = base + step;
            crossings.transition(
                input,
                frame_time(self.t0_us, up_fps, k - 1),
                frame_time(self.t0_us, up_fps, k),
                &mut self.events,
            );
        }
        self.prev_log = log;
        self.pushed += 1;
        Ok(())
    }

    /// Sorts signal events, sets the stream duration and adds noise.
    pub fn finish(self) -> Result<EventStream> {
        if self.pushed < 2 {
            return param("event generation needs at least two frames");
        }
        let mut stream = EventStream {
            events: self.events,
            width: self.width as u16,
            height: self.height as u16,
            duration_us: span_us(self.t0_us, self.fps, self.pushed),
        };
        stream.sort();
        inject_noise(&stream, &self.cfg)
    }
}
