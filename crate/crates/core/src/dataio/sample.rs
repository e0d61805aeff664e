//! Grid samples, datasets and their on-disk formats.
//!
//! A GTSD file holds one sample:
//!
//! | bytes | content                                   |
//! |-------|-------------------------------------------|
//! | 4     | magic `GTSD`                              |
//! | 4     | format version (`u32` LE, currently 1)    |
//! | 24    | `J, K, m, T, c, label` as `u32` LE        |
//! | 8·JKTm| values as `f64` LE in `(j, k, t, m)` order |
//!
//! A dataset directory holds the sample files plus `index.tsv`: `#`-prefixed
//! `key=value` metadata lines followed by one `split<TAB>file` line per
//! sample, in dataset order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fsio::{put_u32, read_bytes, write_atomic, Reader};

pub const GTSD_MAGIC: &[u8; 4] = b"GTSD";
pub const GTSD_VERSION: u32 = 1;
pub const INDEX_FILE: &str = "index.tsv";
const INDEX_HEADER: &str = "# gtsd-index v1";

/// One labeled instance: a `J × K` grid of `m`-dimensional series of
/// length `T`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSample {
    rows: usize,
    cols: usize,
    input_dim: usize,
    steps: usize,
    values: Vec<f64>,
    label: usize,
}

impl GridSample {
    pub fn new(
        rows: usize,
        cols: usize,
        input_dim: usize,
        steps: usize,
        values: Vec<f64>,
        label: usize,
    ) -> Result<Self> {
        let want = rows * cols * steps * input_dim;
        if values.len() != want {
            return Err(Error::shape(format!(
                "{rows}x{cols} grid with T={steps}, m={input_dim} needs {want} values, got {}",
                values.len()
            )));
        }
        Ok(GridSample {
            rows,
            cols,
            input_dim,
            steps,
            values,
            label,
        })
    }

    pub fn zeros(rows: usize, cols: usize, input_dim: usize, steps: usize, label: usize) -> Self {
        GridSample {
            rows,
            cols,
            input_dim,
            steps,
            values: vec![0.0; rows * cols * steps * input_dim],
            label,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn set_label(&mut self, label: usize) {
        self.label = label;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn offset(&self, j: usize, k: usize, t: usize) -> usize {
        debug_assert!(j < self.rows && k < self.cols && t < self.steps);
        ((j * self.cols + k) * self.steps + t) * self.input_dim
    }

    /// Input vector of cell `(j, k)` at time `t`.
    pub fn x(&self, j: usize, k: usize, t: usize) -> &[f64] {
        let o = self.offset(j, k, t);
        &self.values[o..o + self.input_dim]
    }

    pub fn x_mut(&mut self, j: usize, k: usize, t: usize) -> &mut [f64] {
        let o = self.offset(j, k, t);
        &mut self.values[o..o + self.input_dim]
    }

    /// The whole `T × m` series of cell `(j, k)`, time-major.
    pub fn cell_series(&self, j: usize, k: usize) -> &[f64] {
        let o = self.offset(j, k, 0);
        &self.values[o..o + self.steps * self.input_dim]
    }

    pub fn cell_series_mut(&mut self, j: usize, k: usize) -> &mut [f64] {
        let o = self.offset(j, k, 0);
        let n = self.steps * self.input_dim;
        &mut self.values[o..o + n]
    }

    pub fn to_gtsd(&self, classes: usize) -> Result<Vec<u8>> {
        if self.label >= classes {
            return Err(Error::Index(format!(
                "label {} out of range for {classes} classes",
                self.label
            )));
        }
        let mut out = Vec::with_capacity(32 + 8 * self.values.len());
        out.extend_from_slice(GTSD_MAGIC);
        out.extend_from_slice(&GTSD_VERSION.to_le_bytes());
        for v in [
            self.rows,
            self.cols,
            self.input_dim,
            self.steps,
            classes,
            self.label,
        ] {
            put_u32(&mut out, v);
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    /// Parse a GTSD buffer into the sample and its declared class count.
    pub fn from_gtsd(buf: &[u8]) -> Result<(Self, usize)> {
        let mut r = Reader::new(buf, "GTSD");
        if r.take(4)? != GTSD_MAGIC {
            return Err(r.error("bad magic"));
        }
        let version = r.u32()?;
        if version != GTSD_VERSION {
            return Err(r.error(format!("unsupported version {version}")));
        }
        let mut h = [0usize; 6];
        for v in &mut h {
            *v = r.u32()? as usize;
        }
        let [rows, cols, m, steps, classes, label] = h;
        if label >= classes {
            return Err(r.error(format!("label {label} >= class count {classes}")));
        }
        let n = rows
            .checked_mul(cols)
            .and_then(|v| v.checked_mul(m))
            .and_then(|v| v.checked_mul(steps))
            .ok_or_else(|| r.error("dimensions overflow"))?;
        if buf.len() != 32 + 8 * n {
            return Err(r.error(format!(
                "expected {} value bytes, found {}",
                8 * n,
                buf.len().saturating_sub(32)
            )));
        }
        let values = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        r.finish()?;
        Ok((
            GridSample::new(rows, cols, m, steps, values, label)?,
            classes,
        ))
    }
}

/// How a dataset was produced.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Provenance {
    pub normalized: bool,
    pub decimation: usize,
    pub seed: Option<u64>,
    pub source: String,
}

/// Homogeneous collection of labeled samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    samples: Vec<GridSample>,
    classes: usize,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(samples: Vec<GridSample>, classes: usize, provenance: Provenance) -> Result<Self> {
        if let Some(first) = samples.first() {
            let dims = |s: &GridSample| (s.rows, s.cols, s.input_dim, s.steps);
            if let Some(bad) = samples.iter().position(|s| dims(s) != dims(first)) {
                return Err(Error::shape(format!(
                    "sample {bad} has dims {:?}, expected {:?}",
                    dims(&samples[bad]),
                    dims(first)
                )));
            }
        }
        if let Some(bad) = samples.iter().position(|s| s.label >= classes) {
            return Err(Error::Index(format!(
                "sample {bad} has label {} but the dataset has {classes} classes",
                samples[bad].label
            )));
        }
        Ok(Dataset {
            samples,
            classes,
            provenance,
        })
    }

    pub fn samples(&self) -> &[GridSample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<GridSample> {
        self.samples
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// A dataset over a subset of indices, same classes and provenance.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            classes: self.classes,
            provenance: self.provenance.clone(),
        }
    }

    /// Write every sample plus `index.tsv` into `dir`. `splits` names the
    /// split of each sample; `None` puts everything in `train`.
    pub fn save(&self, dir: &Path, splits: Option<&[String]>) -> Result<()> {
        if let Some(s) = splits {
            if s.len() != self.samples.len() {
                return Err(Error::shape("one split name per sample required"));
            }
        }
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut index = format!(
            "{INDEX_HEADER}\n# classes={}\n# normalized={}\n# decimation={}\n",
            self.classes, self.provenance.normalized, self.provenance.decimation
        );
        if let Some(seed) = self.provenance.seed {
            index.push_str(&format!("# seed={seed}\n"));
        }
        if !self.provenance.source.is_empty() {
            index.push_str(&format!("# source={}\n", self.provenance.source));
        }
        for (i, s) in self.samples.iter().enumerate() {
            let name = format!("sample_{i:05}.gtsd");
            write_atomic(&dir.join(&name), &s.to_gtsd(self.classes)?)?;
            let split = splits.map_or("train", |v| v[i].as_str());
            index.push_str(&format!("{split}\t{name}\n"));
        }
        write_atomic(&dir.join(INDEX_FILE), index.as_bytes())
    }

    /// Load the samples of `split` (all splits when `None`) from `dir`.
    pub fn load(dir: &Path, split: Option<&str>) -> Result<Self> {
        let index_path = dir.join(INDEX_FILE);
        let text = String::from_utf8(read_bytes(&index_path)?).map_err(|_| Error::Format {
            kind: "dataset index",
            reason: "not UTF-8".into(),
        })?;
        let bad = |reason: String| Error::Format {
            kind: "dataset index",
            reason,
        };
        let mut lines = text.lines();
        if lines.next() != Some(INDEX_HEADER) {
            return Err(bad("missing header line".into()));
        }
        let mut classes = None;
        let mut provenance = Provenance::default();
        let mut samples = Vec::new();
        for (n, line) in lines.enumerate() {
            if let Some(meta) = line.strip_prefix('#') {
                let (key, value) = meta
                    .trim()
                    .split_once('=')
                    .ok_or_else(|| bad(format!("line {}: malformed metadata", n + 2)))?;
                let parse_err = |_| bad(format!("line {}: bad value for {key}", n + 2));
                match key {
                    "classes" => classes = Some(value.parse::<usize>().map_err(parse_err)?),
                    "normalized" => {
                        provenance.normalized = value
                            .parse::<bool>()
                            .map_err(|_| bad(format!("line {}: bad value for {key}", n + 2)))?
                    }
                    "decimation" => provenance.decimation = value.parse().map_err(parse_err)?,
                    "seed" => {
                        provenance.seed = Some(
                            value
                                .parse()
                                .map_err(|_| bad(format!("line {}: bad value for {key}", n + 2)))?,
                        )
                    }
                    "source" => provenance.source = value.to_string(),
                    _ => {}
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let (s, file) = line
                .split_once('\t')
                .ok_or_else(|| bad(format!("line {}: expected split<TAB>file", n + 2)))?;
            if split.is_some_and(|want| want != s) {
                continue;
            }
            let (sample, c) = GridSample::from_gtsd(&read_bytes(&dir.join(file))?)?;
            if classes.is_some_and(|want| want != c) {
                return Err(bad(format!("{file} declares {c} classes")));
            }
            classes.get_or_insert(c);
            samples.push(sample);
        }
        let classes = classes.ok_or_else(|| bad("no class count".into()))?;
        Dataset::new(samples, classes, provenance)
    }
}
