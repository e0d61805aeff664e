//! Dense numeric primitives shared by every other module.
//!
//! Everything is `f64` and every reduction accumulates in ascending index
//! order, so two runs over the same inputs are bit-identical.

use std::ops::{Deref, DerefMut};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest `f64` strictly below one.
const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

/// Mirror of [`BELOW_ONE`] about one half, so the logistic clamp is symmetric.
const ABOVE_ZERO: f64 = f64::EPSILON / 2.0;

/// Magnitudes below this are treated as zero in recurrent state and
/// gradient buffers. A product of three surviving values stays normal.
pub const FLUSH_THRESHOLD: f64 = 1e-100;

/// `x`, or zero when `|x| < FLUSH_THRESHOLD`.
#[inline]
pub fn flush_tiny(x: f64) -> f64 {
    if x.abs() < FLUSH_THRESHOLD {
        0.0
    } else {
        x
    }
}

/// [`flush_tiny`] over a slice.
pub fn flush_tiny_slice(v: &mut [f64]) {
    for x in v {
        *x = flush_tiny(*x);
    }
}

/// Owned vector of `f64`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    pub fn zeros(len: usize) -> Self {
        DenseVector(vec![0.0; len])
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        DenseVector(data)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// `self += other`, elementwise.
    pub fn add_assign(&mut self, other: &[f64]) {
        debug_assert_eq!(self.0.len(), other.len());
        for (a, b) in self.0.iter_mut().zip(other) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.0 {
            *v *= factor;
        }
    }
}

impl Deref for DenseVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for DenseVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for DenseVector {
    fn from(v: Vec<f64>) -> Self {
        DenseVector(v)
    }
}

impl FromIterator<f64> for DenseVector {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        DenseVector(iter.into_iter().collect())
    }
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn same_shape(&self, other: &DenseMatrix) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    /// `out += self · v` without shape checks beyond debug assertions.
    pub(crate) fn matvec_acc(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(self.cols, v.len());
        debug_assert_eq!(self.rows, out.len());
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let mut acc = 0.0;
            for (w, x) in row.iter().zip(v) {
                acc += w * x;
            }
            *o += acc;
        }
    }

    /// `out += selfᵀ · v`.
    pub(crate) fn matvec_transpose_acc(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(self.rows, v.len());
        debug_assert_eq!(self.cols, out.len());
        for (r, &vr) in v.iter().enumerate() {
            if vr == 0.0 {
                continue;
            }
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * vr;
            }
        }
    }

    /// `self += a ⊗ b`.
    pub(crate) fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        debug_assert_eq!(self.rows, a.len());
        debug_assert_eq!(self.cols, b.len());
        for (r, &ar) in a.iter().enumerate() {
            if ar == 0.0 {
                continue;
            }
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (w, bc) in row.iter_mut().zip(b) {
                *w += ar * bc;
            }
        }
    }
}

/// Numerically safe logistic function, clamped to stay inside `(0, 1)`.
pub fn sigmoid_scalar(x: f64) -> f64 {
    let y = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    y.clamp(ABOVE_ZERO, BELOW_ONE)
}

/// Hyperbolic tangent, clamped to stay inside `(-1, 1)`.
pub fn tanh_scalar(x: f64) -> f64 {
    x.tanh().clamp(-BELOW_ONE, BELOW_ONE)
}

fn map_finite(v: &[f64], what: &'static str, f: fn(f64) -> f64) -> Result<DenseVector> {
    v.iter()
        .map(|&x| {
            if x.is_finite() {
                Ok(f(x))
            } else {
                Err(Error::NumericDomain(what))
            }
        })
        .collect::<Result<Vec<_>>>()
        .map(DenseVector)
}

pub fn sigmoid(v: &[f64]) -> Result<DenseVector> {
    map_finite(v, "sigmoid input", sigmoid_scalar)
}

pub fn tanh_vec(v: &[f64]) -> Result<DenseVector> {
    map_finite(v, "tanh input", tanh_scalar)
}

/// Softmax with max-subtraction.
pub fn softmax(z: &[f64]) -> Result<DenseVector> {
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericDomain("softmax input"));
    }
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

pub fn matvec(m: &DenseMatrix, v: &[f64]) -> Result<DenseVector> {
    if m.cols != v.len() {
        return Err(Error::shape(format!(
            "matvec: {}x{} matrix against vector of length {}",
            m.rows,
            m.cols,
            v.len()
        )));
    }
    let mut out = DenseVector::zeros(m.rows);
    m.matvec_acc(v, &mut out);
    Ok(out)
}

/// Range used for random weight initialization.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleMode {
    /// Uniform in `±sqrt(6 / (rows + cols))`.
    #[default]
    FanBalanced,
    /// Uniform in `±0.1`.
    Fixed,
}

impl ScaleMode {
    pub fn bound(self, rows: usize, cols: usize) -> f64 {
        match self {
            ScaleMode::FanBalanced => (6.0 / (rows + cols) as f64).sqrt(),
            ScaleMode::Fixed => 0.1,
        }
    }
}

/// Seeded, platform-independent random source (ChaCha8).
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent generator for a numbered sub-stream of this seed.
    pub fn fork(&self, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(stream.wrapping_add(1));
        SeededRng {
            seed: self.seed,
            inner,
        }
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.inner.random::<f64>()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

pub fn init_matrix(
    rows: usize,
    cols: usize,
    rng: &mut SeededRng,
    mode: ScaleMode,
) -> Result<DenseMatrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::shape(format!(
            "cannot initialize a {rows}x{cols} matrix"
        )));
    }
    let bound = mode.bound(rows, cols);
    let data = (0..rows * cols)
        .map(|_| rng.uniform(-bound, bound))
        .collect();
    Ok(DenseMatrix { rows, cols, data })
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sigmoid_of_zero_is_half() {
        assert_eq!(sigmoid(&[0.0]).unwrap()[0], 0.5);
    }

    #[test]
    fn sigmoid_saturates_inside_open_interval() {
        let y = sigmoid(&[800.0, -800.0, 40.0, -40.0]).unwrap();
        for &v in y.iter() {
            assert!(v > 0.0 && v < 1.0, "{v}");
        }
        assert_eq!(y[0] + y[1], 1.0);
        assert_eq!(y[2] + y[3], 1.0);
        assert!(y[1] < 1e-15);
    }

    #[test]
    fn flush_zeroes_only_tiny_magnitudes() {
        let mut v = [1e-101, -1e-200, 1e-99, 0.5, f64::MIN_POSITIVE / 4.0];
        flush_tiny_slice(&mut v);
        assert_eq!(v, [0.0, 0.0, 1e-99, 0.5, 0.0]);
    }

    #[test]
    fn sigmoid_matches_scalar_formula() {
        let y = sigmoid(&[0.3, -1.2]).unwrap();
        let want = [1.0 / (1.0 + (-0.3f64).exp()), 1.0 / (1.0 + 1.2f64.exp())];
        for (a, b) in y.iter().zip(want) {
            assert!((a - b).abs() < 1e-16);
        }
    }

    #[test]
    fn non_finite_input_rejected() {
        assert!(matches!(sigmoid(&[f64::NAN]), Err(Error::NumericDomain(_))));
        assert!(matches!(
            tanh_vec(&[f64::INFINITY]),
            Err(Error::NumericDomain(_))
        ));
    }

    #[test]
    fn tanh_zero_odd_and_scalar() {
        assert_eq!(tanh_vec(&[0.0]).unwrap()[0], 0.0);
        let y = tanh_vec(&[0.7, -0.7]).unwrap();
        assert_eq!(y[0], -y[1]);
        let x = 0.5f64;
        let want = (x.exp() - (-x).exp()) / (x.exp() + (-x).exp());
        assert!((tanh_vec(&[x]).unwrap()[0] - want).abs() < 1e-15);
        let sat = tanh_vec(&[50.0, -50.0]).unwrap();
        assert!(sat[0] < 1.0 && sat[1] > -1.0);
    }

    #[test]
    fn matvec_identity_and_zero() {
        let v = [1.0, 2.0, 3.0];
        assert_eq!(matvec(&DenseMatrix::identity(3), &v).unwrap().as_ref(), &v);
        let z = matvec(&DenseMatrix::zeros(2, 3), &v).unwrap();
        assert_eq!(z.as_ref(), &[0.0, 0.0]);
    }

    #[test]
    fn matvec_matches_double_loop() {
        let mut rng = SeededRng::new(3);
        let m = init_matrix(4, 3, &mut rng, ScaleMode::FanBalanced).unwrap();
        let v: Vec<f64> = (0..3).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let got = matvec(&m, &v).unwrap();
        for r in 0..4 {
            let mut acc = 0.0;
            for c in 0..3 {
                acc += m.as_slice()[r * 3 + c] * v[c];
            }
            assert_eq!(got[r], acc);
        }
    }

    #[test]
    fn matvec_shape_error() {
        assert!(matches!(
            matvec(&DenseMatrix::zeros(2, 3), &[1.0]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn transpose_and_outer_agree_with_explicit_loops() {
        let mut rng = SeededRng::new(5);
        let m = init_matrix(3, 4, &mut rng, ScaleMode::Fixed).unwrap();
        let v = [0.5, -1.0, 2.0];
        let mut out = vec![0.0; 4];
        m.matvec_transpose_acc(&v, &mut out);
        for c in 0..4 {
            let want: f64 = (0..3).map(|r| m.get(r, c) * v[r]).sum();
            assert!((out[c] - want).abs() < 1e-15);
        }
        let mut g = DenseMatrix::zeros(3, 4);
        g.add_outer(&v, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(g.get(2, 3), 8.0);
        assert_eq!(g.get(1, 0), -1.0);
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = init_matrix(5, 6, &mut SeededRng::new(7), ScaleMode::FanBalanced).unwrap();
        let b = init_matrix(5, 6, &mut SeededRng::new(7), ScaleMode::FanBalanced).unwrap();
        assert_eq!(a, b);
        let m = init_matrix(10, 10, &mut SeededRng::new(1), ScaleMode::FanBalanced).unwrap();
        let bound = (6.0f64 / 20.0).sqrt();
        assert!(m.as_slice().iter().all(|v| v.abs() <= bound));
        let f = init_matrix(10, 10, &mut SeededRng::new(1), ScaleMode::Fixed).unwrap();
        assert!(f.as_slice().iter().all(|v| v.abs() <= 0.1));
        assert!(init_matrix(0, 3, &mut SeededRng::new(1), ScaleMode::Fixed).is_err());
    }

    #[test]
    fn init_sample_mean_near_zero() {
        let m = init_matrix(1000, 1, &mut SeededRng::new(11), ScaleMode::FanBalanced).unwrap();
        let bound = (6.0f64 / 1001.0).sqrt();
        let mean = m.as_slice().iter().sum::<f64>() / 1000.0;
        // uniform on [-b, b] has standard deviation b / sqrt(3)
        let se = bound / 3f64.sqrt() / 1000f64.sqrt();
        assert!(mean.abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn softmax_sums_to_one() {
        let y = softmax(&[1000.0, 999.0, -5.0]).unwrap();
        assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn forked_streams_differ_but_repeat() {
        let base = SeededRng::new(9);
        let mut a = base.fork(1);
        let mut b = base.fork(1);
        let mut c = base.fork(2);
        let (x, y, z) = (a.next_u64(), b.next_u64(), c.next_u64());
        assert_eq!(x, y);
        assert_ne!(x, z);
    }

    proptest! {
        #[test]
        fn activations_stay_in_codomain(x in -1e6f64..1e6) {
            let s = sigmoid_scalar(x);
            prop_assert!(s > 0.0 && s < 1.0);
            let t = tanh_scalar(x);
            prop_assert!(t > -1.0 && t < 1.0);
        }

        #[test]
        fn matvec_is_linear(
            seed in 0u64..1000,
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let mut rng = SeededRng::new(seed);
            let m = init_matrix(4, 5, &mut rng, ScaleMode::FanBalanced).unwrap();
            let u: Vec<f64> = (0..5).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let w: Vec<f64> = (0..5).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let mix: Vec<f64> = u.iter().zip(&w).map(|(x, y)| a * x + b * y).collect();
            let lhs = matvec(&m, &mix).unwrap();
            let mu = matvec(&m, &u).unwrap();
            let mw = matvec(&m, &w).unwrap();
            for r in 0..4 {
                prop_assert!((lhs[r] - (a * mu[r] + b * mw[r])).abs() < 1e-12);
            }
        }

        #[test]
        fn kernels_are_pure(seed in 0u64..1000) {
            let mut rng = SeededRng::new(seed);
            let m = init_matrix(3, 3, &mut rng, ScaleMode::FanBalanced).unwrap();
            let v: Vec<f64> = (0..3).map(|_| rng.uniform(-5.0, 5.0)).collect();
            let a = matvec(&m, &v).unwrap();
            let b = matvec(&m, &v).unwrap();
            prop_assert_eq!(a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                            b.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        }
    }
}
