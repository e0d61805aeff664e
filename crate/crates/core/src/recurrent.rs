//! The shared LSTM cell core: plain and neighbor-augmented steps, their
//! analytic backward passes, and single-sequence (bi)directional rollouts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{
    flush_tiny, flush_tiny_slice, init_matrix, sigmoid_scalar, tanh_scalar, DenseMatrix,
    DenseVector, ScaleMode, SeededRng,
};
use crate::params::ParamSet;

/// Gate order used for every per-gate array.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Output = 2,
    /// The tanh memory candidate.
    Candidate = 3,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Output, Gate::Candidate];

    pub fn name(self) -> &'static str {
        match self {
            Gate::Input => "input_gate",
            Gate::Forget => "forget_gate",
            Gate::Output => "output_gate",
            Gate::Candidate => "candidate",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoreDims {
    /// Signal dimensionality per source per time step.
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// Hidden elements each cell exposes to every neighbor (the last `q`).
    pub neighbor_outputs: usize,
    pub use_bias: bool,
}

impl CoreDims {
    pub fn neighbor_dim(&self) -> usize {
        4 * self.neighbor_outputs
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config(format!(
                "cell core needs input_dim and hidden_dim >= 1 (got {} and {})",
                self.input_dim, self.hidden_dim
            )));
        }
        if self.neighbor_outputs == 0 || self.neighbor_outputs > self.hidden_dim {
            return Err(Error::Config(format!(
                "neighbor_outputs must be in 1..={} (got {})",
                self.hidden_dim, self.neighbor_outputs
            )));
        }
        Ok(())
    }
}

/// One shared set of LSTM weights. Every cell of a grid reads the same
/// instance. The same layout is reused as the gradient accumulator.
#[derive(Clone, Debug, PartialEq)]
pub struct CellCoreParams {
    dims: CoreDims,
    input: [DenseMatrix; 4],
    recurrent: [DenseMatrix; 4],
    neighbor: [DenseMatrix; 4],
    bias: Option<[DenseVector; 4]>,
}

/// Gradients with respect to a [`CellCoreParams`], accumulated over steps.
pub type CoreGradients = CellCoreParams;

impl CellCoreParams {
    pub fn zeros(dims: CoreDims) -> Result<Self> {
        dims.validate()?;
        let g = dims.hidden_dim;
        let mk = |cols| std::array::from_fn(|_| DenseMatrix::zeros(g, cols));
        Ok(CellCoreParams {
            dims,
            input: mk(dims.input_dim),
            recurrent: mk(g),
            neighbor: mk(dims.neighbor_dim()),
            bias: dims
                .use_bias
                .then(|| std::array::from_fn(|_| DenseVector::zeros(g))),
        })
    }

    /// Random weights, zero biases. Draw order follows the block order.
    pub fn random(dims: CoreDims, rng: &mut SeededRng, mode: ScaleMode) -> Result<Self> {
        let mut p = Self::zeros(dims)?;
        let g = dims.hidden_dim;
        for group in [&mut p.input, &mut p.recurrent, &mut p.neighbor] {
            for m in group.iter_mut() {
                *m = init_matrix(g, m.cols(), rng, mode)?;
            }
        }
        Ok(p)
    }

    pub fn dims(&self) -> CoreDims {
        self.dims
    }

    pub fn input(&self, gate: Gate) -> &DenseMatrix {
        &self.input[gate as usize]
    }

    pub fn recurrent(&self, gate: Gate) -> &DenseMatrix {
        &self.recurrent[gate as usize]
    }

    pub fn neighbor(&self, gate: Gate) -> &DenseMatrix {
        &self.neighbor[gate as usize]
    }

    pub fn bias(&self, gate: Gate) -> Option<&DenseVector> {
        self.bias.as_ref().map(|b| &b[gate as usize])
    }

    pub fn input_mut(&mut self, gate: Gate) -> &mut [f64] {
        self.input[gate as usize].as_mut_slice()
    }

    pub fn recurrent_mut(&mut self, gate: Gate) -> &mut [f64] {
        self.recurrent[gate as usize].as_mut_slice()
    }

    pub fn neighbor_mut(&mut self, gate: Gate) -> &mut [f64] {
        self.neighbor[gate as usize].as_mut_slice()
    }

    pub fn bias_mut(&mut self, gate: Gate) -> Option<&mut [f64]> {
        self.bias.as_mut().map(|b| &mut b[gate as usize][..])
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.dims).expect("dims already validated")
    }
}

impl ParamSet for CellCoreParams {
    fn blocks(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::with_capacity(16);
        for (group, mats) in [
            ("input", &self.input),
            ("recurrent", &self.recurrent),
            ("neighbor", &self.neighbor),
        ] {
            for (gate, m) in Gate::ALL.iter().zip(mats.iter()) {
                out.push((format!("{group}.{}", gate.name()), m.as_slice()));
            }
        }
        if let Some(bias) = &self.bias {
            for (gate, b) in Gate::ALL.iter().zip(bias.iter()) {
                out.push((format!("bias.{}", gate.name()), &b[..]));
            }
        }
        out
    }

    fn blocks_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = Vec::with_capacity(16);
        for (group, mats) in [
            ("input", &mut self.input),
            ("recurrent", &mut self.recurrent),
            ("neighbor", &mut self.neighbor),
        ] {
            for (gate, m) in Gate::ALL.iter().zip(mats.iter_mut()) {
                out.push((format!("{group}.{}", gate.name()), m.as_mut_slice()));
            }
        }
        if let Some(bias) = &mut self.bias {
            for (gate, b) in Gate::ALL.iter().zip(bias.iter_mut()) {
                out.push((format!("bias.{}", gate.name()), &mut b[..]));
            }
        }
        out
    }
}

/// Hidden output and memory of one cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellState {
    pub h: DenseVector,
    pub s: DenseVector,
}

impl CellState {
    pub fn zeros(hidden_dim: usize) -> Self {
        CellState {
            h: DenseVector::zeros(hidden_dim),
            s: DenseVector::zeros(hidden_dim),
        }
    }
}

/// Everything one forward step produced, so the backward step never
/// recomputes anything. Stored as one flat buffer:
/// `x | h_prev | s_prev | N | pre (4G) | act (4G) | s | tanh_s | h`.
#[derive(Clone, Debug)]
pub struct StepTape {
    input_dim: usize,
    hidden_dim: usize,
    neighbor_dim: Option<usize>,
    data: Vec<f64>,
}

impl StepTape {
    fn layout(&self) -> [usize; 4] {
        let n = self.neighbor_dim.unwrap_or(0);
        let h_prev = self.input_dim;
        let neighbors = h_prev + 2 * self.hidden_dim;
        let pre = neighbors + n;
        [h_prev, neighbors, pre, pre + 8 * self.hidden_dim]
    }

    fn span(&self, start: usize, len: usize) -> &[f64] {
        &self.data[start..start + len]
    }

    pub fn x(&self) -> &[f64] {
        &self.data[..self.input_dim]
    }

    pub fn h_prev(&self) -> &[f64] {
        self.span(self.layout()[0], self.hidden_dim)
    }

    pub fn s_prev(&self) -> &[f64] {
        self.span(self.layout()[0] + self.hidden_dim, self.hidden_dim)
    }

    /// `None` for the plain (neighbor-free) step.
    pub fn neighbors(&self) -> Option<&[f64]> {
        self.neighbor_dim.map(|n| self.span(self.layout()[1], n))
    }

    /// Gate pre-activation.
    pub fn pre(&self, gate: Gate) -> &[f64] {
        self.span(
            self.layout()[2] + gate as usize * self.hidden_dim,
            self.hidden_dim,
        )
    }

    /// Gate activation: sigmoid for i, f, o and tanh for the candidate.
    pub fn gate(&self, gate: Gate) -> &[f64] {
        let act = self.layout()[2] + 4 * self.hidden_dim;
        self.span(act + gate as usize * self.hidden_dim, self.hidden_dim)
    }

    pub fn s(&self) -> &[f64] {
        self.span(self.layout()[3], self.hidden_dim)
    }

    pub fn tanh_s(&self) -> &[f64] {
        self.span(self.layout()[3] + self.hidden_dim, self.hidden_dim)
    }

    pub fn h(&self) -> &[f64] {
        self.span(self.layout()[3] + 2 * self.hidden_dim, self.hidden_dim)
    }
}

/// Gradients returned by [`step_backward`] for the step's inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct StepGradients {
    pub x: DenseVector,
    pub h_prev: DenseVector,
    pub s_prev: DenseVector,
    /// Length `4q`; all zero for a plain step.
    pub neighbors: DenseVector,
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::shape(format!(
            "{what}: expected length {want}, got {got}"
        )));
    }
    Ok(())
}

fn step_impl(
    params: &CellCoreParams,
    x: &[f64],
    neighbors: Option<&[f64]>,
    prev: &CellState,
) -> Result<(CellState, StepTape)> {
    let d = params.dims;
    let g = d.hidden_dim;
    check_len("step input x", x.len(), d.input_dim)?;
    check_len("previous hidden", prev.h.len(), g)?;
    check_len("previous memory", prev.s.len(), g)?;
    if let Some(n) = neighbors {
        check_len("neighbor signal", n.len(), d.neighbor_dim())?;
    }

    let m = d.input_dim;
    let nlen = neighbors.map_or(0, |n| n.len());
    let mut data = vec![0.0; m + 2 * g + nlen + 11 * g];
    data[..m].copy_from_slice(x);
    data[m..m + g].copy_from_slice(&prev.h);
    data[m + g..m + 2 * g].copy_from_slice(&prev.s);
    if let Some(n) = neighbors {
        data[m + 2 * g..m + 2 * g + nlen].copy_from_slice(n);
    }
    let base = m + 2 * g + nlen;
    {
        let (pre, rest) = data[base..].split_at_mut(4 * g);
        for k in 0..4 {
            let z = &mut pre[k * g..(k + 1) * g];
            params.input[k].matvec_acc(x, z);
            if let Some(n) = neighbors {
                params.neighbor[k].matvec_acc(n, z);
            }
            params.recurrent[k].matvec_acc(&prev.h, z);
            if let Some(b) = &params.bias {
                for (v, bv) in z.iter_mut().zip(b[k].iter()) {
                    *v += bv;
                }
            }
        }
        if pre.iter().any(|z| !z.is_finite()) {
            return Err(Error::NumericDomain("gate pre-activation"));
        }
        flush_tiny_slice(pre);
        let (act, tail) = rest.split_at_mut(4 * g);
        for (k, (a, z)) in act.iter_mut().zip(pre.iter()).enumerate() {
            *a = if k / g == Gate::Candidate as usize {
                tanh_scalar(*z)
            } else {
                sigmoid_scalar(*z)
            };
        }
        let (i, f, o, c) = (&act[..g], &act[g..2 * g], &act[2 * g..3 * g], &act[3 * g..]);
        let (s, tail) = tail.split_at_mut(g);
        let (tanh_s, h) = tail.split_at_mut(g);
        for r in 0..g {
            s[r] = flush_tiny(f[r] * prev.s[r] + i[r] * c[r]);
            tanh_s[r] = tanh_scalar(s[r]);
            h[r] = flush_tiny(o[r] * tanh_s[r]);
        }
    }
    let tape = StepTape {
        input_dim: m,
        hidden_dim: g,
        neighbor_dim: neighbors.map(|n| n.len()),
        data,
    };
    let state = CellState {
        h: tape.h().to_vec().into(),
        s: tape.s().to_vec().into(),
    };
    Ok((state, tape))
}

/// Plain LSTM step without the neighbor path.
pub fn lstm_step(
    params: &CellCoreParams,
    x: &[f64],
    prev: &CellState,
) -> Result<(CellState, StepTape)> {
    step_impl(params, x, None, prev)
}

/// LSTM step with the neighbor signal `N` added to every gate.
pub fn cellular_lstm_step(
    params: &CellCoreParams,
    x: &[f64],
    neighbors: &[f64],
    prev: &CellState,
) -> Result<(CellState, StepTape)> {
    step_impl(params, x, Some(neighbors), prev)
}

/// Backward pass through one step.
///
/// `grad_h` and `grad_s` are the loss gradients arriving at this step's
/// `h_t` and `s_t`. Parameter gradients are added into `acc`.
pub fn step_backward(
    params: &CellCoreParams,
    tape: &StepTape,
    grad_h: &[f64],
    grad_s: &[f64],
    acc: &mut CoreGradients,
) -> Result<StepGradients> {
    let mut out = StepGradients::zeros(params.dims);
    let mut scratch = Vec::new();
    step_backward_into(params, tape, grad_h, grad_s, acc, &mut out, &mut scratch)?;
    Ok(out)
}

impl StepGradients {
    pub fn zeros(dims: CoreDims) -> Self {
        StepGradients {
            x: DenseVector::zeros(dims.input_dim),
            h_prev: DenseVector::zeros(dims.hidden_dim),
            s_prev: DenseVector::zeros(dims.hidden_dim),
            neighbors: DenseVector::zeros(dims.neighbor_dim()),
        }
    }
}

/// [`step_backward`] writing into caller-owned buffers; `out` is
/// overwritten and `scratch` is resized as needed.
pub(crate) fn step_backward_into(
    params: &CellCoreParams,
    tape: &StepTape,
    grad_h: &[f64],
    grad_s: &[f64],
    acc: &mut CoreGradients,
    out: &mut StepGradients,
    scratch: &mut Vec<f64>,
) -> Result<()> {
    let d = params.dims;
    let g = d.hidden_dim;
    if acc.dims != d {
        return Err(Error::shape(
            "gradient accumulator does not match cell core",
        ));
    }
    check_len("grad_h", grad_h.len(), g)?;
    check_len("grad_s", grad_s.len(), g)?;
    if tape.input_dim != d.input_dim || tape.hidden_dim != g {
        return Err(Error::shape("step tape does not match cell core"));
    }
    if let Some(n) = tape.neighbor_dim {
        check_len("tape neighbor signal", n, d.neighbor_dim())?;
    }

    let (i, f, o, c) = (
        tape.gate(Gate::Input),
        tape.gate(Gate::Forget),
        tape.gate(Gate::Output),
        tape.gate(Gate::Candidate),
    );
    let (tanh_s, s_prev_in) = (tape.tanh_s(), tape.s_prev());
    if out.x.len() != d.input_dim
        || out.h_prev.len() != g
        || out.s_prev.len() != g
        || out.neighbors.len() != d.neighbor_dim()
    {
        return Err(Error::shape("step gradient buffers do not match cell core"));
    }
    scratch.clear();
    scratch.resize(4 * g, 0.0);
    let da = &mut scratch[..];
    let s_prev = &mut out.s_prev;
    for r in 0..g {
        let th = tanh_s[r];
        let ds = grad_s[r] + grad_h[r] * o[r] * (1.0 - th * th);
        let di = ds * c[r];
        let df = ds * s_prev_in[r];
        let dc = ds * i[r];
        let d_o = grad_h[r] * th;
        da[Gate::Input as usize * g + r] = di * i[r] * (1.0 - i[r]);
        da[Gate::Forget as usize * g + r] = df * f[r] * (1.0 - f[r]);
        da[Gate::Output as usize * g + r] = d_o * o[r] * (1.0 - o[r]);
        da[Gate::Candidate as usize * g + r] = dc * (1.0 - c[r] * c[r]);
        s_prev[r] = flush_tiny(ds * f[r]);
    }
    flush_tiny_slice(da);

    let gx = &mut out.x;
    let gh = &mut out.h_prev;
    let gn = &mut out.neighbors;
    gx.fill(0.0);
    gh.fill(0.0);
    gn.fill(0.0);
    let (x, h_prev, n) = (tape.x(), tape.h_prev(), tape.neighbors());
    for k in 0..4 {
        let dz = &da[k * g..(k + 1) * g];
        acc.input[k].add_outer(dz, x);
        acc.recurrent[k].add_outer(dz, h_prev);
        params.input[k].matvec_transpose_acc(dz, gx);
        params.recurrent[k].matvec_transpose_acc(dz, gh);
        if let Some(n) = n {
            acc.neighbor[k].add_outer(dz, n);
            params.neighbor[k].matvec_transpose_acc(dz, gn);
        }
        if let Some(b) = &mut acc.bias {
            b[k].add_assign(dz);
        }
    }
    flush_tiny_slice(gx);
    flush_tiny_slice(gh);
    flush_tiny_slice(gn);
    Ok(())
}

/// Roll one core over a sequence starting from the zero state.
///
/// `neighbors`, when given, is indexed by processing step.
pub fn rollout(
    params: &CellCoreParams,
    xs: &[DenseVector],
    neighbors: Option<&[DenseVector]>,
) -> Result<(CellState, Vec<StepTape>)> {
    if xs.is_empty() {
        return Err(Error::EmptyInput("sequence has no time steps"));
    }
    if let Some(n) = neighbors {
        check_len("neighbor sequence", n.len(), xs.len())?;
    }
    let mut state = CellState::zeros(params.dims.hidden_dim);
    let mut tapes = Vec::with_capacity(xs.len());
    for (t, x) in xs.iter().enumerate() {
        let (next, tape) = step_impl(params, x, neighbors.map(|n| &n[t][..]), &state)?;
        state = next;
        tapes.push(tape);
    }
    Ok((state, tapes))
}

/// BPTT through a tape from [`rollout`], given gradients on the final
/// hidden output and memory. Returns per-step input gradients in
/// processing order.
pub fn rollout_backward(
    params: &CellCoreParams,
    tapes: &[StepTape],
    grad_h_final: &[f64],
    grad_s_final: &[f64],
    acc: &mut CoreGradients,
) -> Result<Vec<StepGradients>> {
    let mut gh = grad_h_final.to_vec();
    let mut gs = grad_s_final.to_vec();
    let mut out = Vec::with_capacity(tapes.len());
    for tape in tapes.iter().rev() {
        let sg = step_backward(params, tape, &gh, &gs, acc)?;
        gh.copy_from_slice(&sg.h_prev);
        gs.copy_from_slice(&sg.s_prev);
        out.push(sg);
    }
    out.reverse();
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct BidirectionalRollout {
    pub forward_final: CellState,
    pub backward_final: CellState,
    pub forward_tapes: Vec<StepTape>,
    /// In processing order, i.e. the first tape saw `x[T-1]`.
    pub backward_tapes: Vec<StepTape>,
}

/// Forward core over `t = 0..T`, backward core over `t = T-1..=0`. The two
/// directions never share state. Each neighbor sequence is indexed by its
/// own direction's processing step.
pub fn bidirectional_rollout(
    fwd: &CellCoreParams,
    bwd: &CellCoreParams,
    xs: &[DenseVector],
    fwd_neighbors: Option<&[DenseVector]>,
    bwd_neighbors: Option<&[DenseVector]>,
) -> Result<BidirectionalRollout> {
    if fwd.dims != bwd.dims {
        return Err(Error::shape(
            "forward and backward cores differ in dimensions",
        ));
    }
    if xs.is_empty() {
        return Err(Error::EmptyInput("sequence has no time steps"));
    }
    let (forward_final, forward_tapes) = rollout(fwd, xs, fwd_neighbors)?;
    let reversed: Vec<DenseVector> = xs.iter().rev().cloned().collect();
    let (backward_final, backward_tapes) = rollout(bwd, &reversed, bwd_neighbors)?;
    Ok(BidirectionalRollout {
        forward_final,
        backward_final,
        forward_tapes,
        backward_tapes,
    })
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;

    fn dims(m: usize, g: usize, q: usize, bias: bool) -> CoreDims {
        CoreDims {
            input_dim: m,
            hidden_dim: g,
            neighbor_outputs: q,
            use_bias: bias,
        }
    }

    fn rand_vec(rng: &mut SeededRng, n: usize, scale: f64) -> DenseVector {
        (0..n).map(|_| rng.uniform(-scale, scale)).collect()
    }

    fn random_params(d: CoreDims, rng: &mut SeededRng) -> CellCoreParams {
        let mut p = CellCoreParams::random(d, rng, ScaleMode::FanBalanced).unwrap();
        for (_, b) in p.blocks_mut() {
            for v in b.iter_mut() {
                *v *= 1.5;
            }
        }
        if let Some(b) = &mut p.bias {
            for v in b.iter_mut().flat_map(|v| v.iter_mut()) {
                *v = rng.uniform(-0.5, 0.5);
            }
        }
        p
    }

    fn scalar_params(w: [f64; 4], u: [f64; 4], wn: [[f64; 4]; 4]) -> CellCoreParams {
        let mut p = CellCoreParams::zeros(dims(1, 1, 1, false)).unwrap();
        for gate in Gate::ALL {
            p.input_mut(gate)[0] = w[gate as usize];
            p.recurrent_mut(gate)[0] = u[gate as usize];
            p.neighbor_mut(gate).copy_from_slice(&wn[gate as usize]);
        }
        p
    }

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn zero_weights_fixed_point() {
        let p = CellCoreParams::zeros(dims(3, 4, 1, false)).unwrap();
        let (st, tape) = lstm_step(&p, &[1.0, -2.0, 0.5], &CellState::zeros(4)).unwrap();
        assert!(st.h.iter().all(|&v| v == 0.0));
        assert!(st.s.iter().all(|&v| v == 0.0));
        assert!(tape.gate(Gate::Forget).iter().all(|&v| v == 0.5));
    }

    #[test]
    fn scalar_lstm_step_oracle() {
        let w = [0.3, -0.2, 0.5, 0.7];
        let u = [0.1, 0.4, -0.3, 0.2];
        let p = scalar_params(w, u, [[0.0; 4]; 4]);
        let prev = CellState {
            h: vec![0.2].into(),
            s: vec![-0.4].into(),
        };
        let x = 0.5;
        let (st, _) = lstm_step(&p, &[x], &prev).unwrap();
        let i = sig(w[0] * x + u[0] * 0.2);
        let f = sig(w[1] * x + u[1] * 0.2);
        let o = sig(w[2] * x + u[2] * 0.2);
        let c = (w[3] * x + u[3] * 0.2).tanh();
        let s = f * -0.4 + i * c;
        let h = o * s.tanh();
        assert!((st.s[0] - s).abs() < 1e-15);
        assert!((st.h[0] - h).abs() < 1e-15);
    }

    #[test]
    fn hidden_bounded_under_huge_memory() {
        let mut p = CellCoreParams::zeros(dims(1, 2, 1, true)).unwrap();
        p.bias_mut(Gate::Output).unwrap().fill(50.0);
        let prev = CellState {
            h: DenseVector::zeros(2),
            s: vec![1e9, -1e9].into(),
        };
        let (st, _) = lstm_step(&p, &[0.0], &prev).unwrap();
        assert!(st.h.iter().all(|&v| v > -1.0 && v < 1.0));
    }

    #[test]
    fn scalar_cellular_step_oracle() {
        let w = [0.3, -0.2, 0.5, 0.7];
        let u = [0.1, 0.4, -0.3, 0.2];
        let wn = [
            [0.5, -0.1, 0.2, 0.3],
            [-0.4, 0.2, 0.1, 0.6],
            [0.25, 0.15, -0.35, 0.05],
            [0.9, -0.8, 0.7, -0.6],
        ];
        let p = scalar_params(w, u, wn);
        let n = [0.2, -0.1, 0.0, 0.3];
        let x = 0.5;
        let (st, _) = cellular_lstm_step(&p, &[x], &n, &CellState::zeros(1)).unwrap();
        let dot = |row: &[f64; 4]| row.iter().zip(&n).map(|(a, b)| a * b).sum::<f64>();
        let i = sig(w[0] * x + dot(&wn[0]));
        let f = sig(w[1] * x + dot(&wn[1]));
        let o = sig(w[2] * x + dot(&wn[2]));
        let c = (w[3] * x + dot(&wn[3])).tanh();
        let s = f * 0.0 + i * c;
        let h = o * s.tanh();
        assert!((st.h[0] - h).abs() < 1e-15);
        assert!((st.s[0] - s).abs() < 1e-15);
    }

    #[test]
    fn zero_neighbors_or_zero_neighbor_weights_reduce_to_plain_step() {
        let mut rng = SeededRng::new(21);
        for trial in 0..100 {
            let d = dims(1 + trial % 3, 1 + trial % 5, 1, trial % 2 == 0);
            let d = CoreDims {
                neighbor_outputs: 1 + trial % d.hidden_dim,
                ..d
            };
            let p = random_params(d, &mut rng);
            let x = rand_vec(&mut rng, d.input_dim, 1.0);
            let prev = CellState {
                h: rand_vec(&mut rng, d.hidden_dim, 0.9),
                s: rand_vec(&mut rng, d.hidden_dim, 2.0),
            };
            let (plain, _) = lstm_step(&p, &x, &prev).unwrap();
            let zero_n = DenseVector::zeros(d.neighbor_dim());
            let (cell, _) = cellular_lstm_step(&p, &x, &zero_n, &prev).unwrap();
            assert_eq!(plain, cell);

            let mut decoupled = p.clone();
            for gate in Gate::ALL {
                decoupled.neighbor_mut(gate).fill(0.0);
            }
            let n = rand_vec(&mut rng, d.neighbor_dim(), 1.0);
            let (cell, _) = cellular_lstm_step(&decoupled, &x, &n, &prev).unwrap();
            assert_eq!(plain, cell);
        }
    }

    #[test]
    fn step_shape_errors() {
        let p = CellCoreParams::zeros(dims(2, 3, 1, false)).unwrap();
        let z = CellState::zeros(3);
        assert!(matches!(lstm_step(&p, &[1.0], &z), Err(Error::Shape(_))));
        assert!(matches!(
            cellular_lstm_step(&p, &[1.0, 2.0], &[0.0; 3], &z),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            lstm_step(&p, &[1.0, 2.0], &CellState::zeros(2)),
            Err(Error::Shape(_))
        ));
        let (_, tape) = lstm_step(&p, &[1.0, 2.0], &z).unwrap();
        let mut acc = p.zeros_like();
        assert!(step_backward(&p, &tape, &[0.0; 2], &[0.0; 3], &mut acc).is_err());
        let mut wrong = CellCoreParams::zeros(dims(2, 3, 2, false)).unwrap();
        assert!(step_backward(&p, &tape, &[0.0; 3], &[0.0; 3], &mut wrong).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = SeededRng::new(4);
        let d = dims(2, 3, 1, true);
        let p = random_params(d, &mut rng);
        let x = rand_vec(&mut rng, 2, 1.0);
        let n = rand_vec(&mut rng, 4, 1.0);
        let prev = CellState {
            h: rand_vec(&mut rng, 3, 0.5),
            s: rand_vec(&mut rng, 3, 0.5),
        };
        let (_, tape) = cellular_lstm_step(&p, &x, &n, &prev).unwrap();
        let mut acc = p.zeros_like();
        let sg = step_backward(&p, &tape, &[0.0; 3], &[0.0; 3], &mut acc).unwrap();
        assert!(acc
            .blocks()
            .iter()
            .all(|(_, b)| b.iter().all(|&v| v == 0.0)));
        for v in [&sg.x, &sg.h_prev, &sg.s_prev, &sg.neighbors] {
            assert!(v.iter().all(|&e| e == 0.0));
        }
    }

    #[test]
    fn candidate_weight_gradient_closed_form_at_zero_weights() {
        // With all weights zero and zero state: i = f = o = 1/2, c = 0,
        // s = 0, tanh(s) = 0, so dh/dc = o·(1 - tanh²s)·i = 1/4 and
        // dE/dW_s[r][col] = grad_h[r] · 1/4 · x[col] (tanh'(0) = 1).
        let d = dims(2, 2, 1, false);
        let p = CellCoreParams::zeros(d).unwrap();
        let x = [0.8, -0.3];
        let (_, tape) = lstm_step(&p, &x, &CellState::zeros(2)).unwrap();
        let gh = [1.5, -0.5];
        let mut acc = p.zeros_like();
        step_backward(&p, &tape, &gh, &[0.0, 0.0], &mut acc).unwrap();
        let m = acc.input(Gate::Candidate);
        for r in 0..2 {
            for c in 0..2 {
                assert!((m.get(r, c) - 0.5 * gh[r] * 0.5 * x[c]).abs() < 1e-16);
            }
        }
        // output and forget gates see tanh(s) = 0 and s_prev = 0
        assert!(acc.input(Gate::Output).as_slice().iter().all(|&v| v == 0.0));
        assert!(acc.input(Gate::Forget).as_slice().iter().all(|&v| v == 0.0));
    }

    /// Scalar loss on a single-sequence rollout used by the FD oracle.
    fn seq_loss(
        p: &CellCoreParams,
        xs: &[DenseVector],
        ns: Option<&[DenseVector]>,
        wh: &[f64],
        ws: &[f64],
    ) -> f64 {
        let (st, _) = rollout(p, xs, ns).unwrap();
        st.h.iter().zip(wh).map(|(a, b)| a * b).sum::<f64>()
            + st.s.iter().zip(ws).map(|(a, b)| a * b).sum::<f64>()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    /// Richardson-extrapolated central difference of `f` at 0.
    fn derivative(f: impl Fn(f64) -> f64) -> f64 {
        let central = |h: f64| (f(h) - f(-h)) / (2.0 * h);
        let h = 1e-2;
        (4.0 * central(h / 2.0) - central(h)) / 3.0
    }

    fn fd_check(d: CoreDims, steps: usize, seed: u64, tol: f64) {
        let mut rng = SeededRng::new(seed);
        let p = random_params(d, &mut rng);
        let xs: Vec<DenseVector> = (0..steps)
            .map(|_| rand_vec(&mut rng, d.input_dim, 1.0))
            .collect();
        let ns: Vec<DenseVector> = (0..steps)
            .map(|_| rand_vec(&mut rng, d.neighbor_dim(), 0.9))
            .collect();
        let wh = rand_vec(&mut rng, d.hidden_dim, 1.0);
        let ws = rand_vec(&mut rng, d.hidden_dim, 1.0);

        let (_, tapes) = rollout(&p, &xs, Some(&ns)).unwrap();
        let mut acc = p.zeros_like();
        let input_grads = rollout_backward(&p, &tapes, &wh, &ws, &mut acc).unwrap();

        let mut worst = 0.0f64;
        let names: Vec<String> = p.blocks().into_iter().map(|(n, _)| n).collect();
        let analytic: Vec<Vec<f64>> = acc.blocks().into_iter().map(|(_, b)| b.to_vec()).collect();
        for (bi, _) in names.iter().enumerate() {
            for e in 0..analytic[bi].len() {
                let num = derivative(|h| {
                    let mut q = p.clone();
                    q.blocks_mut()[bi].1[e] += h;
                    seq_loss(&q, &xs, Some(&ns), &wh, &ws)
                });
                let err = rel_err(analytic[bi][e], num);
                assert!(
                    err < tol,
                    "{} [{e}]: analytic {} numeric {num}",
                    names[bi],
                    analytic[bi][e]
                );
                worst = worst.max(err);
            }
        }
        // inputs and neighbor signals
        for t in 0..steps {
            for e in 0..d.input_dim {
                let num = derivative(|h| {
                    let mut xp = xs.clone();
                    xp[t][e] += h;
                    seq_loss(&p, &xp, Some(&ns), &wh, &ws)
                });
                assert!(rel_err(input_grads[t].x[e], num) < tol, "x[{t}][{e}]");
            }
            for e in 0..d.neighbor_dim() {
                let num = derivative(|h| {
                    let mut np = ns.clone();
                    np[t][e] += h;
                    seq_loss(&p, &xs, Some(&np), &wh, &ws)
                });
                assert!(
                    rel_err(input_grads[t].neighbors[e], num) < tol,
                    "N[{t}][{e}]"
                );
            }
        }
        assert!(worst < tol);
    }

    #[test]
    fn single_step_gradients_match_finite_differences() {
        fd_check(dims(2, 3, 1, false), 1, 17, 1e-6);
    }

    #[test]
    fn sequence_gradients_match_finite_differences() {
        for seed in 0..12u64 {
            let m = 1 + (seed as usize % 4);
            let g = 1 + (seed as usize % 5);
            let q = 1 + (seed as usize / 3) % g;
            let steps = 1 + (seed as usize % 6);
            fd_check(dims(m, g, q, seed % 2 == 1), steps, 100 + seed, 1e-5);
        }
    }

    #[test]
    fn accumulation_order_is_stable() {
        let mut rng = SeededRng::new(8);
        let d = dims(2, 3, 1, false);
        let p = random_params(d, &mut rng);
        let xs: Vec<DenseVector> = (0..5).map(|_| rand_vec(&mut rng, 2, 1.0)).collect();
        let (_, tapes) = rollout(&p, &xs, None).unwrap();
        let gh = [0.3, -0.2, 0.9];
        let mut fwd = p.zeros_like();
        let mut rev = p.zeros_like();
        let mut parts = Vec::new();
        for tape in &tapes {
            let mut one = p.zeros_like();
            step_backward(&p, tape, &gh, &gh, &mut one).unwrap();
            parts.push(one);
        }
        for part in &parts {
            fwd.add_scaled(part, 1.0);
        }
        for part in parts.iter().rev() {
            rev.add_scaled(part, 1.0);
        }
        for ((_, a), (_, b)) in fwd.blocks().iter().zip(rev.blocks()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gates_and_hidden_stay_in_range() {
        let mut rng = SeededRng::new(99);
        let d = dims(3, 4, 2, true);
        let p = random_params(d, &mut rng);
        let xs: Vec<DenseVector> = (0..20).map(|_| rand_vec(&mut rng, 3, 5.0)).collect();
        let (_, tapes) = rollout(&p, &xs, None).unwrap();
        for t in &tapes {
            for gate in [Gate::Input, Gate::Forget, Gate::Output] {
                assert!(t.gate(gate).iter().all(|&v| v > 0.0 && v < 1.0));
            }
            assert!(t.h().iter().all(|&v| v > -1.0 && v < 1.0));
        }
    }

    #[test]
    fn bidirectional_single_step_symmetry() {
        let mut rng = SeededRng::new(5);
        let d = dims(2, 3, 1, false);
        let p = random_params(d, &mut rng);
        let xs = vec![rand_vec(&mut rng, 2, 1.0)];
        let r = bidirectional_rollout(&p, &p, &xs, None, None).unwrap();
        assert_eq!(r.forward_final, r.backward_final);
    }

    #[test]
    fn bidirectional_palindrome_symmetry() {
        let mut rng = SeededRng::new(6);
        let d = dims(2, 3, 1, false);
        let p = random_params(d, &mut rng);
        let a = rand_vec(&mut rng, 2, 1.0);
        let b = rand_vec(&mut rng, 2, 1.0);
        let c = rand_vec(&mut rng, 2, 1.0);
        let xs = vec![a.clone(), b.clone(), c, b, a];
        let zeros = vec![DenseVector::zeros(4); 5];
        let r = bidirectional_rollout(&p, &p, &xs, Some(&zeros), Some(&zeros)).unwrap();
        assert_eq!(r.forward_final.h, r.backward_final.h);
    }

    #[test]
    fn backward_direction_equals_forward_core_on_reversed_sequence() {
        let mut rng = SeededRng::new(7);
        let d = dims(3, 4, 1, false);
        let fwd = random_params(d, &mut rng);
        let bwd = random_params(d, &mut rng);
        let xs: Vec<DenseVector> = (0..5).map(|_| rand_vec(&mut rng, 3, 1.0)).collect();
        let r = bidirectional_rollout(&fwd, &bwd, &xs, None, None).unwrap();
        let reversed: Vec<DenseVector> = xs.iter().rev().cloned().collect();
        let (oracle, _) = rollout(&bwd, &reversed, None).unwrap();
        assert_eq!(r.backward_final, oracle);
        assert!(matches!(
            bidirectional_rollout(&fwd, &bwd, &[], None, None),
            Err(Error::EmptyInput(_))
        ));
    }
}
