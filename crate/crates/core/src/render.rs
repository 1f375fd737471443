//! Procedural near-eye frames.
//!
//! The eye is a pair of concentric disks (iris, pupil) over a sclera-filled
//! elliptical opening. Disk edges get a one-pixel linear falloff so sub-pixel
//! motion changes intensity smoothly.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::kinematics::{gaze_at, GazeSample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EyeAppearance {
    pub sclera_level: f64,
    pub iris_level: f64,
    pub pupil_level: f64,
    pub iris_radius_px: f64,
    pub pupil_radius_px: f64,
    pub gain_px_per_deg: f64,
    pub background_level: f64,
}

impl Default for EyeAppearance {
    fn default() -> Self {
        EyeAppearance {
            sclera_level: 200.0,
            iris_level: 80.0,
            pupil_level: 20.0,
            iris_radius_px: 9.0,
            pupil_radius_px: 4.0,
            gain_px_per_deg: 1.5,
            background_level: 150.0,
        }
    }
}

impl EyeAppearance {
    pub fn validate(&self) -> Result<()> {
        let levels = [
            self.sclera_level,
            self.iris_level,
            self.pupil_level,
            self.background_level,
        ];
        if levels.iter().any(|l| !(0.0..=255.0).contains(l)) {
            return param("appearance levels must lie in [0, 255]");
        }
        if !(self.pupil_radius_px > 0.0 && self.pupil_radius_px < self.iris_radius_px) {
            return param("need 0 < pupil_radius_px < iris_radius_px");
        }
        if !(self.pupil_level < self.iris_level && self.iris_level < self.sclera_level) {
            return param("need pupil_level < iris_level < sclera_level");
        }
        if !(self.gain_px_per_deg > 0.0) {
            return param("gain_px_per_deg must be positive");
        }
        Ok(())
    }

    /// Pixel position of the disk center for a gaze in degrees.
    pub fn center(&self, gaze: [f64; 2], width: usize, height: usize) -> (f64, f64) {
        (
            width as f64 / 2.0 + self.gain_px_per_deg * gaze[0],
            height as f64 / 2.0 + self.gain_px_per_deg * gaze[1],
        )
    }
}

/// One grayscale frame, row-major, values in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Frame {
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Frame {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntensityFrameSequence {
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    pub t0_us: u64,
    pub frames: Vec<Frame>,
}

impl IntensityFrameSequence {
    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0) {
            return param("frame sequence fps must be positive");
        }
        if let Some(bad) = self
            .frames
            .iter()
            .position(|f| f.width != self.width || f.height != self.height)
        {
            return Err(Error::Shape(format!(
                "frame {bad} does not match sequence geometry {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn frame_time_us(&self, index: usize) -> u64 {
        self.t0_us + (index as f64 * 1e6 / self.fps).round() as u64
    }
}

#[inline]
fn coverage(dist: f64, radius: f64) -> f64 {
    (radius + 0.5 - dist).clamp(0.0, 1.0)
}

pub fn render_frame(
    gaze: [f64; 2],
    appearance: &EyeAppearance,
    width: usize,
    height: usize,
) -> Frame {
    let (cx, cy) = appearance.center(gaze, width, height);
    let (ox, oy) = (width as f64 / 2.0, height as f64 / 2.0);
    let mut data = Vec::with_capacity(width * height);
    for y in 0..height {
        let py = y as f64 + 0.5;
        for x in 0..width {
            let px = x as f64 + 0.5;
            let ex = (px - ox) / ox;
            let ey = (py - oy) / oy;
            let mut v = if ex * ex + ey * ey <= 1.0 {
                appearance.sclera_level
            } else {
                appearance.background_level
            };
            let d = ((px - cx).powi(2) + (py - cy).powi(2)).sqrt();
            let ci = coverage(d, appearance.iris_radius_px);
            v += (appearance.iris_level - v) * ci;
            let cp = coverage(d, appearance.pupil_radius_px);
            v += (appearance.pupil_level - v) * cp;
            data.push(v.clamp(0.0, 255.0));
        }
    }
    Frame {
        width,
        height,
        data,
    }
}

/// Number of frames covering `span_us` at `fps`, one per tick starting at zero.
pub fn frame_count(span_us: u64, fps: f64) -> usize {
    ((span_us as f64 * fps / 1e6) + 1e-9).floor().max(1.0) as usize
}

/// Lazily renders frames one tick at a time so long recordings need not sit in memory.
pub struct SequenceRenderer<'a> {
    samples: &'a [GazeSample],
    appearance: EyeAppearance,
    width: usize,
    height: usize,
    fps: f64,
    t0_us: u64,
    count: usize,
    next: usize,
}

impl<'a> SequenceRenderer<'a> {
    pub fn new(
        samples: &'a [GazeSample],
        appearance: &EyeAppearance,
        width: usize,
        height: usize,
        fps: f64,
    ) -> Result<Self> {
        let (first, last) = match (samples.first(), samples.last()) {
            (Some(f), Some(l)) => (f, l),
            _ => return Err(Error::Data("cannot render an empty gaze trajectory".into())),
        };
        if width == 0 || height == 0 {
            return param("frame dimensions must be positive");
        }
        if !(fps > 0.0) {
            return param(format!("fps must be positive, got {fps}"));
        }
        Ok(SequenceRenderer {
            samples,
            appearance: *appearance,
            width,
            height,
            fps,
            t0_us: first.t_us,
            count: frame_count(last.t_us - first.t_us, fps),
            next: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn t0_us(&self) -> u64 {
        self.t0_us
    }

    pub fn time_of(&self, index: usize) -> u64 {
        self.t0_us + (index as f64 * 1e6 / self.fps).round() as u64
    }

    pub fn render(&self, index: usize) -> Frame {
        let gaze = gaze_at(self.samples, self.time_of(index)).expect("non-empty samples");
        render_frame(gaze, &self.appearance, self.width, self.height)
    }
}

impl Iterator for SequenceRenderer<'_> {
    type Item = Frame;

    fn next(&mut self) -> Option<Frame> {
        if self.next >= self.count {
            return None;
        }
        let frame = self.render(self.next);
        self.next += 1;
        Some(frame)
    }
}

/// One frame per `1/fps` tick, gaze linearly interpolated to each tick.
pub fn render_sequence(
    samples: &[GazeSample],
    appearance: &EyeAppearance,
    width: usize,
    height: usize,
    fps: f64,
) -> Result<IntensityFrameSequence> {
    let renderer = SequenceRenderer::new(samples, appearance, width, height, fps)?;
    let frames = (0..renderer.len())
        .into_par_iter()
        .map(|i| renderer.render(i))
        .collect();
    Ok(IntensityFrameSequence {
        width,
        height,
        fps,
        t0_us: renderer.t0_us(),
        frames,
    })
}

/// Writes an 8-bit binary PGM (P5).
pub fn write_pgm(path: &Path, frame: &Frame) -> Result<()> {
    let mut buf = format!("P5\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    buf.extend(frame.data.iter().map(|v| v.round().clamp(0.0, 255.0) as u8));
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<Frame> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |why: &str| Error::format(path, why.to_string());

    // Header: magic, width, height, maxval separated by whitespace, comments allowed.
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" {
        return Err(bad("not a binary PGM (P5)"));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (width, height, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(bad("only 8-bit PGM is supported"));
    }
    let pixels = bytes
        .get(pos..pos + width * height)
        .ok_or_else(|| bad("truncated pixel data"))?;
    let scale = 255.0 / maxval as f64;
    Ok(Frame {
        width,
        height,
        data: pixels.iter().map(|&p| p as f64 * scale).collect(),
    })
}

pub fn pgm_name(index: usize) -> String {
    format!("frame_{index:06}.pgm")
}
