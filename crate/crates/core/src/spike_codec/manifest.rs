//! Dataset manifests: labeled windows over EVB1 files plus a train/test split.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{bin_events_with, SpikeTensor, WindowSpec};
use crate::error::{Error, Result};
use crate::event_sim::{read_events, EventStream};
use crate::kinematics::EyeClass;
use crate::rng::{self, stream};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    /// Relative to the manifest's directory.
    pub event_file: String,
    pub label: EyeClass,
    pub t_start_us: u64,
    pub t_end_us: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub fixation: usize,
    pub saccade: usize,
}

impl ClassCounts {
    pub fn of<'a>(labels: impl IntoIterator<Item = &'a EyeClass>) -> Self {
        let mut c = ClassCounts::default();
        for l in labels {
            match l {
                EyeClass::Fixation => c.fixation += 1,
                EyeClass::Saccade => c.saccade += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.fixation + self.saccade
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Splits {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub sensor_width: u16,
    pub sensor_height: u16,
    pub window: WindowSpec,
    pub seed: u64,
    pub class_counts: ClassCounts,
    pub entries: Vec<ManifestEntry>,
    pub splits: Splits,
}

impl DatasetManifest {
    pub fn new(
        sensor_width: u16,
        sensor_height: u16,
        window: WindowSpec,
        seed: u64,
        entries: Vec<ManifestEntry>,
        splits: Splits,
    ) -> Self {
        let class_counts = ClassCounts::of(entries.iter().map(|e| &e.label));
        DatasetManifest {
            version: MANIFEST_VERSION,
            sensor_width,
            sensor_height,
            window,
            seed,
            class_counts,
            entries,
            splits,
        }
    }

    /// Structural checks that need no filesystem access.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Data(m));
        if self.version != MANIFEST_VERSION {
            return bad(format!("unsupported manifest version {}", self.version));
        }
        self.window.validate()?;
        let w = self.window.window_us();
        for (i, e) in self.entries.iter().enumerate() {
            if e.t_end_us.checked_sub(e.t_start_us) != Some(w) {
                return bad(format!(
                    "entry {i} spans {}..{}, expected {w} us windows",
                    e.t_start_us, e.t_end_us
                ));
            }
        }
        if ClassCounts::of(self.entries.iter().map(|e| &e.label)) != self.class_counts {
            return bad("class_counts disagree with entries".into());
        }
        let n = self.entries.len();
        let mut seen = HashSet::new();
        for (name, split) in [("train", &self.splits.train), ("test", &self.splits.test)] {
            for &i in split {
                if i >= n {
                    return bad(format!("{name} split references entry {i} of {n}"));
                }
                if !seen.insert(i) {
                    return bad(format!("entry {i} appears twice across splits"));
                }
            }
        }
        // The same window listed twice under different indices still leaks.
        let key = |i: usize| {
            let e = &self.entries[i];
            (e.event_file.as_str(), e.t_start_us, e.t_end_us)
        };
        let train: HashSet<_> = self.splits.train.iter().map(|&i| key(i)).collect();
        if let Some(&i) = self.splits.test.iter().find(|&&i| train.contains(&key(i))) {
            return bad(format!("test entry {i} duplicates a training window"));
        }
        Ok(())
    }

    pub fn indices(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.splits.train,
            Split::Test => &self.splits.test,
        }
    }
}

pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new(""));
    let mut out = manifest.clone();
    for e in &mut out.entries {
        let p = Path::new(&e.event_file);
        if p.is_absolute() {
            if let Ok(rel) = p.strip_prefix(base) {
                e.event_file = rel.to_string_lossy().into_owned();
            }
        }
    }
    out.validate()?;
    let text = serde_json::to_string_pretty(&out)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parses and validates a manifest, including that every event file exists.
pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    manifest.validate()?;
    let base = path.parent().unwrap_or(Path::new(""));
    for e in &manifest.entries {
        let p = base.join(&e.event_file);
        if !p.is_file() {
            return Err(Error::MissingFile(p));
        }
    }
    Ok(manifest)
}

/// Loads event files once and materializes windows on demand.
pub struct WindowCache {
    base: PathBuf,
    streams: BTreeMap<String, EventStream>,
}

impl WindowCache {
    pub fn new(manifest_path: &Path) -> Self {
        WindowCache {
            base: manifest_path
                .parent()
                .unwrap_or(Path::new(""))
                .to_path_buf(),
            streams: BTreeMap::new(),
        }
    }

    pub fn stream(&mut self, event_file: &str, manifest: &DatasetManifest) -> Result<&EventStream> {
        if !self.streams.contains_key(event_file) {
            let mut s = read_events(
                &self.base.join(event_file),
                Some((manifest.sensor_width, manifest.sensor_height)),
            )?;
            // EVB1 carries no duration; trust the manifest's windows instead.
            let needed = manifest
                .entries
                .iter()
                .filter(|e| e.event_file == event_file)
                .map(|e| e.t_end_us)
                .max()
                .unwrap_or(0);
            s.duration_us = s.duration_us.max(needed);
            self.streams.insert(event_file.to_string(), s);
        }
        Ok(&self.streams[event_file])
    }

    pub fn tensor(&mut self, manifest: &DatasetManifest, index: usize) -> Result<SpikeTensor> {
        let entry = &manifest.entries[index];
        let window = manifest.window;
        let s = self.stream(&entry.event_file, manifest)?;
        Ok(bin_events_with(s, entry.t_start_us, &window)?.with_label(entry.label))
    }

    /// Tensors for one split, in split order, optionally re-windowed.
    pub fn split(&mut self, manifest: &DatasetManifest, split: Split) -> Result<Vec<SpikeTensor>> {
        manifest
            .indices(split)
            .iter()
            .map(|&i| self.tensor(manifest, i))
            .collect()
    }
}

/// Subsamples the majority class down to the minority count; returns kept
/// indices in ascending order.
pub fn balance_classes(labels: &[EyeClass], seed: u64) -> Vec<usize> {
    let mut fix: Vec<usize> = Vec::new();
    let mut sac: Vec<usize> = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        match l {
            EyeClass::Fixation => fix.push(i),
            EyeClass::Saccade => sac.push(i),
        }
    }
    let keep = fix.len().min(sac.len());
    let mut rng = rng::seeded(seed, stream::BALANCE);
    fix.shuffle(&mut rng);
    sac.shuffle(&mut rng);
    let mut out: Vec<usize> = fix[..keep].iter().chain(&sac[..keep]).copied().collect();
    out.sort_unstable();
    out
}

/// Keeps at most `cap` seeded-random items of each class; returns kept
/// indices in ascending order.
pub fn cap_per_class(labels: &[EyeClass], cap: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng::seeded(seed, stream::SUBSET);
    let mut out = Vec::new();
    for class in EyeClass::ALL {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        members.truncate(cap);
        out.extend(members);
    }
    out.sort_unstable();
    out
}

/// Per-class shuffled split; each class contributes `round(n_c · test_fraction)` test items.
pub fn stratified_split(labels: &[EyeClass], test_fraction: f64, seed: u64) -> Splits {
    let mut rng = rng::seeded(seed, stream::SPLIT);
    let mut splits = Splits::default();
    for class in [EyeClass::Fixation, EyeClass::Saccade] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let n_test = (idx.len() as f64 * test_fraction).round() as usize;
        splits.test.extend_from_slice(&idx[..n_test]);
        splits.train.extend_from_slice(&idx[n_test..]);
    }
    splits.train.sort_unstable();
    splits.test.sort_unstable();
    splits
}
