//! Seeded synthetic spatio-temporal classification data.
//!
//! Class `r` owns a small cell neighborhood and a frequency. Each sample of
//! class `r` carries a sinusoidal burst (random phase, random onset, lasting
//! through the final step) on that neighborhood, and Gaussian noise on every
//! cell.

use std::f64::consts::TAU;

use rand::Rng;

use super::{Dataset, GridSample, Provenance};
use crate::error::{Error, Result};
use crate::numkernel::SeededRng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthSpec {
    pub rows: usize,
    pub cols: usize,
    pub input_dim: usize,
    pub steps: usize,
    pub classes: usize,
    pub per_class: usize,
    pub seed: u64,
    pub noise_sd: f64,
    pub amplitude: f64,
    /// Shortest burst as a fraction of `steps`; onsets are drawn so every
    /// burst lasts at least this long and runs to the final step.
    pub burst_fraction: f64,
}

impl Default for SynthSpec {
    /// 4x5 grid, T = 64, 4 classes, 100 samples per class, seed 42.
    fn default() -> Self {
        SynthSpec {
            rows: 4,
            cols: 5,
            input_dim: 1,
            steps: 64,
            classes: 4,
            per_class: 100,
            seed: 42,
            noise_sd: 0.3,
            amplitude: 1.0,
            burst_fraction: 0.5,
        }
    }
}

impl SynthSpec {
    /// Burst frequency of class `r` in cycles per step.
    pub fn class_frequency(&self, class: usize) -> f64 {
        let span = self.classes.saturating_sub(1).max(1) as f64;
        0.05 + 0.35 * class as f64 / span
    }

    pub fn burst_len(&self) -> usize {
        ((self.steps as f64 * self.burst_fraction).round() as usize).clamp(1, self.steps.max(1))
    }

    /// Neighborhood centers: greedy farthest-point picks starting at (0,0).
    /// Ties go to the larger summed distance, then to row-major order.
    pub fn class_centers(&self) -> Vec<(usize, usize)> {
        let cells: Vec<(usize, usize)> = (0..self.rows)
            .flat_map(|j| (0..self.cols).map(move |k| (j, k)))
            .collect();
        let dist = |a: (usize, usize), b: (usize, usize)| {
            let dj = a.0 as i64 - b.0 as i64;
            let dk = a.1 as i64 - b.1 as i64;
            dj * dj + dk * dk
        };
        let mut centers = vec![(0, 0)];
        while centers.len() < self.classes {
            let best = cells
                .iter()
                .filter(|c| !centers.contains(c))
                .max_by_key(|&&c| {
                    let d = centers.iter().map(|&z| dist(c, z));
                    (
                        d.clone().min().unwrap(),
                        d.sum::<i64>(),
                        std::cmp::Reverse(c),
                    )
                })
                .copied()
                .expect("classes <= cells");
            centers.push(best);
        }
        centers
    }

    /// Center plus its in-grid 4-neighbors.
    pub fn class_cells(&self, class: usize) -> Vec<(usize, usize)> {
        let (j, k) = self.class_centers()[class];
        let mut out = vec![(j, k)];
        if j > 0 {
            out.push((j - 1, k));
        }
        if j + 1 < self.rows {
            out.push((j + 1, k));
        }
        if k > 0 {
            out.push((j, k - 1));
        }
        if k + 1 < self.cols {
            out.push((j, k + 1));
        }
        out
    }
}

/// Generate the dataset. Sample `i` has label `i % classes`.
pub fn synth_dataset(spec: &SynthSpec) -> Result<Dataset> {
    if spec.rows == 0 || spec.cols == 0 || spec.steps == 0 || spec.input_dim == 0 {
        return Err(Error::Config(
            "grid, steps and input_dim must be >= 1".into(),
        ));
    }
    if spec.classes < 2 {
        return Err(Error::Config("need at least 2 classes".into()));
    }
    if spec.classes > spec.rows * spec.cols {
        return Err(Error::Config(format!(
            "{} classes exceed the {} cells of a {}x{} grid",
            spec.classes,
            spec.rows * spec.cols,
            spec.rows,
            spec.cols
        )));
    }
    let regions: Vec<Vec<(usize, usize)>> =
        (0..spec.classes).map(|c| spec.class_cells(c)).collect();
    let mut rng = SeededRng::new(spec.seed);
    let burst = spec.burst_len();
    let total = spec.classes * spec.per_class;
    let mut samples = Vec::with_capacity(total);
    for i in 0..total {
        let label = i % spec.classes;
        let mut s = GridSample::zeros(spec.rows, spec.cols, spec.input_dim, spec.steps, label);
        let phase = rng.uniform(0.0, TAU);
        let onset = rng.random_range(0..=spec.steps - burst);
        let freq = spec.class_frequency(label);
        for &(j, k) in &regions[label] {
            for t in onset..spec.steps {
                let v = spec.amplitude * (TAU * freq * (t - onset) as f64 + phase).sin();
                for x in s.x_mut(j, k, t) {
                    *x = v;
                }
            }
        }
        if spec.noise_sd > 0.0 {
            for j in 0..spec.rows {
                for k in 0..spec.cols {
                    for x in s.cell_series_mut(j, k) {
                        *x += spec.noise_sd * rng.normal();
                    }
                }
            }
        }
        samples.push(s);
    }
    Dataset::new(
        samples,
        spec.classes,
        Provenance {
            normalized: false,
            decimation: 1,
            seed: Some(spec.seed),
            source: format!(
                "synthetic {}x{} T={} m={} noise={}",
                spec.rows, spec.cols, spec.steps, spec.input_dim, spec.noise_sd
            ),
        },
    )
}
