//! Normalization, stride decimation, fixed-window segmentation and
//! balanced undersampling.

use rand::seq::{index, SliceRandom};

use super::{Dataset, Record};
use crate::error::{Error, Result};
use crate::numkernel::SeededRng;

/// `(x − mean) / std` with the population standard deviation. Channels
/// whose std is below `1e-12` come back as all zeros.
pub fn zscore(series: &[f64]) -> Vec<f64> {
    if series.is_empty() {
        return Vec::new();
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd < 1e-12 {
        return vec![0.0; series.len()];
    }
    series.iter().map(|v| (v - mean) / sd).collect()
}

/// Keep samples `0, factor, 2·factor, …`; output length is `ceil(T / factor)`.
pub fn decimate(series: &[f64], factor: usize) -> Result<Vec<f64>> {
    if factor < 1 {
        return Err(Error::Config("decimation factor must be >= 1".into()));
    }
    Ok(series.iter().step_by(factor).copied().collect())
}

impl Record {
    /// Z-score every channel component independently.
    pub fn zscore(&self) -> Record {
        self.map_series(|s| Ok(zscore(s)))
            .expect("zscore is infallible")
    }

    pub fn decimate(&self, factor: usize) -> Result<Record> {
        self.map_series(|s| decimate(s, factor))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub start: usize,
    pub label: usize,
    pub record: Record,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SegmentStatus {
    Ok,
    /// The window is longer than the record; nothing was produced.
    WindowExceedsLength,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Segmentation {
    pub segments: Vec<Segment>,
    pub status: SegmentStatus,
    /// Windows dropped because the label changed inside them.
    pub dropped_mixed: usize,
}

/// Cut `record` into non-overlapping windows of `window_len` steps. The
/// trailing partial window is dropped, and so is any window whose per-step
/// labels are not uniform.
pub fn segment(record: &Record, window_len: usize, labels: &[usize]) -> Result<Segmentation> {
    if window_len == 0 {
        return Err(Error::Config("window length must be >= 1".into()));
    }
    if labels.len() != record.steps() {
        return Err(Error::shape(format!(
            "{} labels for a record of {} steps",
            labels.len(),
            record.steps()
        )));
    }
    if window_len > record.steps() {
        return Ok(Segmentation {
            segments: Vec::new(),
            status: SegmentStatus::WindowExceedsLength,
            dropped_mixed: 0,
        });
    }
    let mut segments = Vec::new();
    let mut dropped_mixed = 0;
    for w in 0..record.steps() / window_len {
        let start = w * window_len;
        let span = &labels[start..start + window_len];
        if span.iter().any(|&l| l != span[0]) {
            dropped_mixed += 1;
            continue;
        }
        segments.push(Segment {
            start,
            label: span[0],
            record: record.window(start, window_len),
        });
    }
    Ok(Segmentation {
        segments,
        status: SegmentStatus::Ok,
        dropped_mixed,
    })
}

/// Reduce every class to the minority count by seeded sampling without
/// replacement, then shuffle the result with the same generator.
pub fn balance_undersample(dataset: &Dataset, seed: u64) -> Result<Dataset> {
    let counts = dataset.class_counts();
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Config(format!("class {empty} has no samples")));
    }
    let keep = *counts.iter().min().expect("at least one class");
    let mut rng = SeededRng::new(seed);
    let mut chosen = Vec::with_capacity(keep * counts.len());
    for class in 0..dataset.classes() {
        let members: Vec<usize> = dataset
            .samples()
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label() == class)
            .map(|(i, _)| i)
            .collect();
        let mut picked: Vec<usize> = index::sample(&mut rng, members.len(), keep)
            .into_iter()
            .map(|i| members[i])
            .collect();
        picked.sort_unstable();
        chosen.extend(picked);
    }
    chosen.shuffle(&mut rng);
    Ok(dataset.subset(&chosen))
}
