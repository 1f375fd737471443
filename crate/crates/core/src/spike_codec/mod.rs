//! Event streams to binary spike tensors.
//!
//! A [`SpikeTensor`] stores, per time bin, the sorted flat indices of its
//! non-zero cells (`p·H·W + y·W + x`, OFF = channel 0, ON = channel 1). Windows
//! are sparse, and the first network layer only touches active inputs.

mod manifest;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::event_sim::EventStream;
use crate::kinematics::{EyeClass, LabelTrack};

pub use manifest::{
    balance_classes, cap_per_class, read_manifest, stratified_split, write_manifest, ClassCounts,
    DatasetManifest, ManifestEntry, Split, Splits, WindowCache, MANIFEST_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowSpec {
    pub window_ms: f64,
    pub bin_ms: f64,
    /// Integer spatial OR-pooling factor; 1 keeps full resolution.
    pub downscale: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            window_ms: 33.0,
            bin_ms: 1.0,
            downscale: 1,
        }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.window_ms > 0.0) || !(self.bin_ms > 0.0) {
            return param("window_ms and bin_ms must be positive");
        }
        if self.downscale == 0 {
            return param("downscale must be at least 1");
        }
        Ok(())
    }

    pub fn window_us(&self) -> u64 {
        (self.window_ms * 1000.0).round() as u64
    }

    pub fn bins(&self) -> usize {
        (self.window_ms / self.bin_ms - 1e-9).ceil().max(1.0) as usize
    }

    /// Tensor geometry for a sensor of the given size.
    pub fn geometry(&self, width: u16, height: u16) -> (usize, usize) {
        (
            (height as usize).div_ceil(self.downscale),
            (width as usize).div_ceil(self.downscale),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpikeTensor {
    pub height: usize,
    pub width: usize,
    pub bin_ms: f64,
    pub window_ms: f64,
    pub label: Option<EyeClass>,
    active: Vec<Vec<u32>>,
}

impl SpikeTensor {
    pub const CHANNELS: usize = 2;

    pub fn zeros(height: usize, width: usize, bins: usize, bin_ms: f64, window_ms: f64) -> Self {
        SpikeTensor {
            height,
            width,
            bin_ms,
            window_ms,
            label: None,
            active: vec![Vec::new(); bins],
        }
    }

    /// Builds a tensor from per-bin lists of flat indices (deduplicated and sorted here).
    pub fn from_active(
        height: usize,
        width: usize,
        bin_ms: f64,
        mut active: Vec<Vec<u32>>,
    ) -> Result<Self> {
        let size = (Self::CHANNELS * height * width) as u32;
        for bin in &mut active {
            bin.sort_unstable();
            bin.dedup();
            if bin.last().is_some_and(|&i| i >= size) {
                return Err(Error::Shape(format!(
                    "flat index out of range for 2x{height}x{width}"
                )));
            }
        }
        let window_ms = active.len() as f64 * bin_ms;
        Ok(SpikeTensor {
            height,
            width,
            bin_ms,
            window_ms,
            label: None,
            active,
        })
    }

    pub fn with_label(mut self, label: EyeClass) -> Self {
        self.label = Some(label);
        self
    }

    pub fn bins(&self) -> usize {
        self.active.len()
    }

    /// Flattened input size `2·H·W`.
    pub fn input_size(&self) -> usize {
        Self::CHANNELS * self.height * self.width
    }

    pub fn flat_index(&self, p: usize, y: usize, x: usize) -> usize {
        (p * self.height + y) * self.width + x
    }

    pub fn get(&self, p: usize, y: usize, x: usize, k: usize) -> u8 {
        let idx = self.flat_index(p, y, x) as u32;
        u8::from(self.active[k].binary_search(&idx).is_ok())
    }

    /// Active flat indices in bin `k`.
    pub fn active(&self, k: usize) -> &[u32] {
        &self.active[k]
    }

    pub fn nnz(&self) -> usize {
        self.active.iter().map(Vec::len).sum()
    }

    /// Spike train of one cell over all bins.
    pub fn train(&self, p: usize, y: usize, x: usize) -> Vec<u8> {
        (0..self.bins()).map(|k| self.get(p, y, x, k)).collect()
    }

    /// Dense `(2, H, W)` frame for bin `k` as 0/1 values.
    pub fn dense_bin(&self, k: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.input_size()];
        for &i in &self.active[k] {
            out[i as usize] = 1.0;
        }
        out
    }

    /// Same tensor with every spike removed.
    pub fn silenced(&self) -> Self {
        SpikeTensor {
            active: vec![Vec::new(); self.bins()],
            ..self.clone()
        }
    }
}

/// Binary tensor over `[t_start, t_start + window)`.
pub fn bin_events(
    stream: &EventStream,
    t_start_us: u64,
    window_ms: f64,
    bin_ms: f64,
) -> Result<SpikeTensor> {
    let spec = WindowSpec {
        window_ms,
        bin_ms,
        downscale: 1,
    };
    bin_events_with(stream, t_start_us, &spec)
}

/// [`bin_events`] with optional spatial OR-pooling.
pub fn bin_events_with(
    stream: &EventStream,
    t_start_us: u64,
    spec: &WindowSpec,
) -> Result<SpikeTensor> {
    spec.validate()?;
    let t_end = t_start_us + spec.window_us();
    if t_end > stream.duration_us {
        return Err(Error::Data(format!(
            "window [{t_start_us}, {t_end}) us exceeds stream duration {} us",
            stream.duration_us
        )));
    }
    let (height, width) = spec.geometry(stream.width, stream.height);
    let bins = spec.bins();
    let bin_us = spec.bin_ms * 1000.0;
    let plane = height * width;
    let mut active = vec![Vec::new(); bins];
    for e in &stream.events[stream.range(t_start_us, t_end)] {
        let k = (((e.t_us - t_start_us) as f64) / bin_us).floor() as usize;
        let (x, y) = (e.x as usize / spec.downscale, e.y as usize / spec.downscale);
        active[k.min(bins - 1)].push((e.polarity.channel() * plane + y * width + x) as u32);
    }
    let mut tensor = SpikeTensor::from_active(height, width, spec.bin_ms, active)?;
    tensor.window_ms = spec.window_ms;
    Ok(tensor)
}

/// Spikes per second for a binary train of `T` bins.
pub fn firing_rate(train: &[u8], bin_ms: f64) -> f64 {
    let spikes: u64 = train.iter().map(|&s| u64::from(s)).sum();
    spikes as f64 / (train.len() as f64 * bin_ms / 1000.0)
}

/// Start/end/class of each non-overlapping window tiled inside a label segment.
pub fn window_bounds(labels: &LabelTrack, window_ms: f64) -> Vec<(u64, u64, EyeClass)> {
    let w = (window_ms * 1000.0).round() as u64;
    if w == 0 {
        return Vec::new();
    }
    labels
        .segments
        .iter()
        .flat_map(|seg| {
            let n = seg.duration_us() / w;
            (0..n).map(move |i| {
                let start = seg.start_us + i * w;
                (start, start + w, seg.class)
            })
        })
        .collect()
}

/// Labeled tensors for every window that lies wholly inside one label segment
/// and inside the stream.
pub fn slice_windows(
    stream: &EventStream,
    labels: &LabelTrack,
    spec: &WindowSpec,
) -> Result<Vec<SpikeTensor>> {
    spec.validate()?;
    window_bounds(labels, spec.window_ms)
        .into_iter()
        .filter(|&(_, end, _)| end <= stream.duration_us)
        .map(|(start, _, class)| Ok(bin_events_with(stream, start, spec)?.with_label(class)))
        .collect()
}
