//! Named multichannel records and their placement onto the cell grid.
//!
//! A mapping file is TOML:
//!
//! ```toml
//! rows = 4
//! cols = 5
//! unassigned = "zero"
//!
//! [channels]
//! "FP1-F7" = [0, 0]
//! "F7-T7" = [1, 0]
//! ```

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::GridSample;
use crate::error::{Error, Result};

/// Named channels, each a time-major `T × m` series.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    steps: usize,
    dims: usize,
    channels: Vec<(String, Vec<f64>)>,
}

impl Record {
    pub fn new(steps: usize, dims: usize, channels: Vec<(String, Vec<f64>)>) -> Result<Self> {
        for (name, values) in &channels {
            if values.len() != steps * dims {
                return Err(Error::shape(format!(
                    "channel `{name}` has {} values, expected {}",
                    values.len(),
                    steps * dims
                )));
            }
        }
        Ok(Record {
            steps,
            dims,
            channels,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn channels(&self) -> &[(String, Vec<f64>)] {
        &self.channels
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channels
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| &v[..])
    }

    /// Apply `f` to every one-dimensional component series.
    pub fn map_series(&self, mut f: impl FnMut(&[f64]) -> Result<Vec<f64>>) -> Result<Record> {
        let mut steps = None;
        let mut channels = Vec::with_capacity(self.channels.len());
        for (name, values) in &self.channels {
            let comps: Vec<Vec<f64>> = (0..self.dims)
                .map(|d| {
                    let series: Vec<f64> =
                        (0..self.steps).map(|t| values[t * self.dims + d]).collect();
                    f(&series)
                })
                .collect::<Result<_>>()?;
            let t_out = comps.first().map_or(0, |c| c.len());
            steps = Some(t_out);
            let mut out = vec![0.0; t_out * self.dims];
            for (d, comp) in comps.iter().enumerate() {
                for (t, v) in comp.iter().enumerate() {
                    out[t * self.dims + d] = *v;
                }
            }
            channels.push((name.clone(), out));
        }
        Record::new(steps.unwrap_or(self.steps), self.dims, channels)
    }

    /// Time window `[start, start + len)` of every channel.
    pub fn window(&self, start: usize, len: usize) -> Record {
        let d = self.dims;
        Record {
            steps: len,
            dims: d,
            channels: self
                .channels
                .iter()
                .map(|(n, v)| (n.clone(), v[start * d..(start + len) * d].to_vec()))
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnassignedPolicy {
    /// Cells with no channel receive an all-zero series.
    #[default]
    Zero,
}

#[derive(Serialize, Deserialize)]
struct MappingFile {
    rows: usize,
    cols: usize,
    #[serde(default)]
    unassigned: UnassignedPolicy,
    channels: BTreeMap<String, [usize; 2]>,
}

/// Channel name to grid coordinate assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct GridMapping {
    rows: usize,
    cols: usize,
    unassigned: UnassignedPolicy,
    /// Sorted by name.
    channels: Vec<(String, (usize, usize))>,
}

impl GridMapping {
    pub fn new(
        rows: usize,
        cols: usize,
        channels: impl IntoIterator<Item = (String, (usize, usize))>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Mapping(format!(
                "grid must be at least 1x1, got {rows}x{cols}"
            )));
        }
        let mut seen: HashMap<(usize, usize), String> = HashMap::new();
        let mut by_name = BTreeMap::new();
        for (name, (j, k)) in channels {
            if j >= rows || k >= cols {
                return Err(Error::Mapping(format!(
                    "`{name}` -> ({j},{k}) outside {rows}x{cols} grid"
                )));
            }
            if let Some(other) = seen.insert((j, k), name.clone()) {
                return Err(Error::Mapping(format!(
                    "`{other}` and `{name}` both map to ({j},{k})"
                )));
            }
            if by_name.insert(name.clone(), (j, k)).is_some() {
                return Err(Error::Mapping(format!("`{name}` assigned twice")));
            }
        }
        Ok(GridMapping {
            rows,
            cols,
            unassigned: UnassignedPolicy::Zero,
            channels: by_name.into_iter().collect(),
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let f: MappingFile = toml::from_str(text).map_err(|e| Error::Format {
            kind: "grid mapping",
            reason: e.to_string(),
        })?;
        let mut m = GridMapping::new(
            f.rows,
            f.cols,
            f.channels.into_iter().map(|(n, [j, k])| (n, (j, k))),
        )?;
        m.unassigned = f.unassigned;
        Ok(m)
    }

    pub fn to_toml(&self) -> String {
        let f = MappingFile {
            rows: self.rows,
            cols: self.cols,
            unassigned: self.unassigned,
            channels: self
                .channels
                .iter()
                .map(|(n, (j, k))| (n.clone(), [*j, *k]))
                .collect(),
        };
        toml::to_string(&f).expect("mapping always serializes")
    }

    /// 18 bipolar scalp-EEG channels on a 4x5 grid. Columns run left
    /// temporal, left parasagittal, midline, right parasagittal, right
    /// temporal; rows run front to back. Two midline cells stay empty.
    pub fn eeg_4x5() -> Self {
        Self::from_toml(include_str!("../../mappings/eeg_4x5.toml")).expect("bundled mapping")
    }

    /// Eight cavities by five waveforms on a 5x8 grid: row = waveform,
    /// column = cavity.
    pub fn fault_5x8() -> Self {
        Self::from_toml(include_str!("../../mappings/fault_5x8.toml")).expect("bundled mapping")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn channels(&self) -> &[(String, (usize, usize))] {
        &self.channels
    }

    pub fn coordinate(&self, name: &str) -> Option<(usize, usize)> {
        self.channels
            .binary_search_by(|(n, _)| n.as_str().cmp(name))
            .ok()
            .map(|i| self.channels[i].1)
    }

    pub fn unassigned_cells(&self) -> Vec<(usize, usize)> {
        let used: Vec<(usize, usize)> = self.channels.iter().map(|(_, c)| *c).collect();
        (0..self.rows)
            .flat_map(|j| (0..self.cols).map(move |k| (j, k)))
            .filter(|c| !used.contains(c))
            .collect()
    }
}

/// Place every mapped channel of `record` at its cell; unmapped cells are
/// zero-filled.
pub fn apply_mapping(record: &Record, mapping: &GridMapping, label: usize) -> Result<GridSample> {
    let mut sample =
        GridSample::zeros(mapping.rows, mapping.cols, record.dims, record.steps, label);
    for (name, (j, k)) in &mapping.channels {
        let series = record
            .channel(name)
            .ok_or_else(|| Error::MissingChannel(name.clone()))?;
        sample.cell_series_mut(*j, *k).copy_from_slice(series);
    }
    Ok(sample)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(names: &[String], steps: usize, dims: usize) -> Record {
        let channels = names
            .iter()
            .enumerate()
            .map(|(c, n)| {
                (
                    n.clone(),
                    (0..steps * dims).map(|i| (c * 1000 + i) as f64).collect(),
                )
            })
            .collect();
        Record::new(steps, dims, channels).unwrap()
    }

    #[test]
    fn eeg_mapping_leaves_two_cells_empty() {
        let m = GridMapping::eeg_4x5();
        assert_eq!((m.rows(), m.cols()), (4, 5));
        assert_eq!(m.channels().len(), 18);
        assert_eq!(m.unassigned_cells().len(), 2);
        let names: Vec<String> = m.channels().iter().map(|(n, _)| n.clone()).collect();
        let s = apply_mapping(&record(&names, 6, 1), &m, 1).unwrap();
        for (j, k) in m.unassigned_cells() {
            assert!(s.cell_series(j, k).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn fault_mapping_rows_are_waveforms_cols_are_cavities() {
        let m = GridMapping::fault_5x8();
        assert_eq!((m.rows(), m.cols()), (5, 8));
        assert_eq!(m.channels().len(), 40);
        for cav in 1..=8 {
            for wf in 1..=5 {
                assert_eq!(
                    m.coordinate(&format!("cav{cav}_wf{wf}")),
                    Some((wf - 1, cav - 1))
                );
            }
        }
    }

    #[test]
    fn identity_mapping_is_lossless_and_reads_back() {
        let names: Vec<String> = (0..6).map(|i| format!("ch{i}")).collect();
        let m = GridMapping::new(
            2,
            3,
            names
                .iter()
                .enumerate()
                .map(|(i, n)| (n.clone(), (i / 3, i % 3))),
        )
        .unwrap();
        let rec = record(&names, 5, 2);
        let s = apply_mapping(&rec, &m, 0).unwrap();
        for (name, (j, k)) in m.channels() {
            assert_eq!(s.cell_series(*j, *k), rec.channel(name).unwrap());
        }
        assert!(m.unassigned_cells().is_empty());
    }

    #[test]
    fn mapping_errors() {
        let dup = GridMapping::new(2, 2, [("a".into(), (0, 0)), ("b".into(), (0, 0))]);
        assert!(matches!(dup, Err(Error::Mapping(_))));
        let out = GridMapping::new(2, 2, [("a".into(), (2, 0))]);
        assert!(matches!(out, Err(Error::Mapping(_))));
        let m = GridMapping::new(1, 2, [("a".into(), (0, 0)), ("b".into(), (0, 1))]).unwrap();
        let rec = record(&["a".to_string()], 3, 1);
        match apply_mapping(&rec, &m, 0) {
            Err(Error::MissingChannel(n)) => assert_eq!(n, "b"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mapping_toml_round_trip() {
        let m = GridMapping::fault_5x8();
        assert_eq!(GridMapping::from_toml(&m.to_toml()).unwrap(), m);
    }
}
