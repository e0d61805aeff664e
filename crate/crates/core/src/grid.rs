//! The full cellular network: neighbor routing, synchronous grid rollout,
//! feed-forward head, loss, BPTT over the whole grid, and parameter census.

use serde::{Deserialize, Serialize};

use crate::dataio::GridSample;
use crate::error::{Error, Result};
use crate::numkernel::{
    flush_tiny, flush_tiny_slice, init_matrix, sigmoid_scalar, softmax, DenseMatrix, DenseVector,
    ScaleMode, SeededRng,
};
use crate::params::ParamSet;
use crate::recurrent::{
    cellular_lstm_step, step_backward_into, CellCoreParams, CellState, CoreDims, StepGradients,
    StepTape,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    #[default]
    #[serde(alias = "uni")]
    Unidirectional,
    #[serde(alias = "bi")]
    Bidirectional,
}

impl Direction {
    pub fn count(self) -> usize {
        match self {
            Direction::Unidirectional => 1,
            Direction::Bidirectional => 2,
        }
    }
}

/// What each cell contributes to the head's feature vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// The whole final hidden vector (`G` values per direction).
    #[default]
    FullHidden,
    /// Only the last hidden element (one value per direction).
    #[serde(alias = "last-unit")]
    LastUnitOnly,
}

fn one() -> usize {
    1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridConfig {
    pub rows: usize,
    pub cols: usize,
    #[serde(default = "one")]
    pub input_dim: usize,
    pub hidden_dim: usize,
    #[serde(default = "one")]
    pub neighbor_outputs: usize,
    #[serde(default)]
    pub direction: Direction,
    #[serde(default)]
    pub aggregation: Aggregation,
    #[serde(default)]
    pub use_bias: bool,
}

impl GridConfig {
    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn core_dims(&self) -> CoreDims {
        CoreDims {
            input_dim: self.input_dim,
            hidden_dim: self.hidden_dim,
            neighbor_outputs: self.neighbor_outputs,
            use_bias: self.use_bias,
        }
    }

    /// Values each cell contributes to `H`, over all directions.
    pub fn features_per_cell(&self) -> usize {
        let per_dir = match self.aggregation {
            Aggregation::FullHidden => self.hidden_dim,
            Aggregation::LastUnitOnly => 1,
        };
        per_dir * self.direction.count()
    }

    pub fn head_input_len(&self) -> usize {
        self.cells() * self.features_per_cell()
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Config(format!(
                "grid must be at least 1x1 (got {}x{})",
                self.rows, self.cols
            )));
        }
        self.core_dims().validate()
    }
}

/// Architecture description: grid plus head sizes plus init mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub grid: GridConfig,
    pub ff_neurons: usize,
    pub classes: usize,
    #[serde(default)]
    pub init: ScaleMode,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.ff_neurons == 0 {
            return Err(Error::Config("ff_neurons must be >= 1".into()));
        }
        if self.classes < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes (got {})",
                self.classes
            )));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ModelSpec = toml::from_str(text).map_err(|e| Error::Format {
            kind: "model config",
            reason: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("model spec always serializes")
    }

    /// 4x5 grid, bidirectional 5+5 units, 50-neuron head, 2 classes.
    pub fn eeg() -> Self {
        ModelSpec {
            grid: GridConfig {
                rows: 4,
                cols: 5,
                input_dim: 1,
                hidden_dim: 5,
                neighbor_outputs: 1,
                direction: Direction::Bidirectional,
                aggregation: Aggregation::FullHidden,
                use_bias: false,
            },
            ff_neurons: 50,
            classes: 2,
            init: ScaleMode::FanBalanced,
        }
    }

    /// 5x8 grid, unidirectional 5 units, 100-neuron head, 5 classes.
    pub fn fault() -> Self {
        ModelSpec {
            grid: GridConfig {
                rows: 5,
                cols: 8,
                input_dim: 1,
                hidden_dim: 5,
                neighbor_outputs: 1,
                direction: Direction::Unidirectional,
                aggregation: Aggregation::FullHidden,
                use_bias: false,
            },
            ff_neurons: 100,
            classes: 5,
            init: ScaleMode::FanBalanced,
        }
    }

    pub fn check_sample(&self, sample: &GridSample) -> Result<()> {
        let g = &self.grid;
        for (name, got, want) in [
            ("rows", sample.rows(), g.rows),
            ("cols", sample.cols(), g.cols),
            ("input_dim", sample.input_dim(), g.input_dim),
        ] {
            if got != want {
                return Err(Error::shape(format!(
                    "sample {name} is {got} but the model expects {want}"
                )));
            }
        }
        if sample.steps() == 0 {
            return Err(Error::EmptyInput("sample has no time steps"));
        }
        Ok(())
    }
}

/// Feed-forward sigmoid layer followed by the softmax classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams {
    pub(crate) ff_weight: DenseMatrix,
    pub(crate) ff_bias: DenseVector,
    pub(crate) out_weight: DenseMatrix,
    pub(crate) out_bias: DenseVector,
}

impl HeadParams {
    pub fn zeros(input_len: usize, ff_neurons: usize, classes: usize) -> Self {
        HeadParams {
            ff_weight: DenseMatrix::zeros(ff_neurons, input_len),
            ff_bias: DenseVector::zeros(ff_neurons),
            out_weight: DenseMatrix::zeros(classes, ff_neurons),
            out_bias: DenseVector::zeros(classes),
        }
    }

    pub fn ff_weight(&self) -> &DenseMatrix {
        &self.ff_weight
    }

    pub fn ff_bias(&self) -> &DenseVector {
        &self.ff_bias
    }

    pub fn out_weight(&self) -> &DenseMatrix {
        &self.out_weight
    }

    pub fn out_bias(&self) -> &DenseVector {
        &self.out_bias
    }

    pub fn ff_neurons(&self) -> usize {
        self.ff_bias.len()
    }

    pub fn classes(&self) -> usize {
        self.out_bias.len()
    }

    /// Returns `(FF, ŷ)` for feature vector `H`.
    pub fn forward(&self, features: &[f64]) -> Result<(DenseVector, DenseVector)> {
        if features.len() != self.ff_weight.cols() {
            return Err(Error::shape(format!(
                "head expects {} features, got {}",
                self.ff_weight.cols(),
                features.len()
            )));
        }
        let mut z = DenseVector::zeros(self.ff_neurons());
        self.ff_weight.matvec_acc(features, &mut z);
        z.add_assign(&self.ff_bias);
        if !z.is_finite() {
            return Err(Error::NumericDomain("feed-forward pre-activation"));
        }
        let ff: DenseVector = z.iter().map(|&v| sigmoid_scalar(v)).collect();
        let mut logits = DenseVector::zeros(self.classes());
        self.out_weight.matvec_acc(&ff, &mut logits);
        logits.add_assign(&self.out_bias);
        let y = softmax(&logits)?;
        Ok((ff, y))
    }
}

impl ParamSet for HeadParams {
    fn blocks(&self) -> Vec<(String, &[f64])> {
        vec![
            ("head.ff_weight".into(), self.ff_weight.as_slice()),
            ("head.ff_bias".into(), &self.ff_bias[..]),
            ("head.out_weight".into(), self.out_weight.as_slice()),
            ("head.out_bias".into(), &self.out_bias[..]),
        ]
    }

    fn blocks_mut(&mut self) -> Vec<(String, &mut [f64])> {
        vec![
            ("head.ff_weight".into(), self.ff_weight.as_mut_slice()),
            ("head.ff_bias".into(), &mut self.ff_bias[..]),
            ("head.out_weight".into(), self.out_weight.as_mut_slice()),
            ("head.out_bias".into(), &mut self.out_bias[..]),
        ]
    }
}

/// Complete network. One shared core per direction, whatever the grid size.
#[derive(Clone, Debug, PartialEq)]
pub struct DcrnnModel {
    spec: ModelSpec,
    cores: Vec<CellCoreParams>,
    head: HeadParams,
}

/// Gradients of a [`DcrnnModel`] share its layout.
pub type ModelGradients = DcrnnModel;

const DIRECTION_PREFIX: [&str; 2] = ["fwd", "bwd"];

impl DcrnnModel {
    pub fn zeros(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let cores = (0..spec.grid.direction.count())
            .map(|_| CellCoreParams::zeros(spec.grid.core_dims()))
            .collect::<Result<_>>()?;
        Ok(DcrnnModel {
            spec,
            cores,
            head: HeadParams::zeros(spec.grid.head_input_len(), spec.ff_neurons, spec.classes),
        })
    }

    /// Random weights under `spec.init`, zero biases.
    pub fn random(spec: ModelSpec, rng: &mut SeededRng) -> Result<Self> {
        spec.validate()?;
        let cores = (0..spec.grid.direction.count())
            .map(|_| CellCoreParams::random(spec.grid.core_dims(), rng, spec.init))
            .collect::<Result<_>>()?;
        let mut head = HeadParams::zeros(spec.grid.head_input_len(), spec.ff_neurons, spec.classes);
        head.ff_weight = init_matrix(spec.ff_neurons, spec.grid.head_input_len(), rng, spec.init)?;
        head.out_weight = init_matrix(spec.classes, spec.ff_neurons, rng, spec.init)?;
        Ok(DcrnnModel { spec, cores, head })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn grid(&self) -> &GridConfig {
        &self.spec.grid
    }

    pub fn cores(&self) -> &[CellCoreParams] {
        &self.cores
    }

    pub fn core_mut(&mut self, direction: usize) -> &mut CellCoreParams {
        &mut self.cores[direction]
    }

    pub fn head(&self) -> &HeadParams {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut HeadParams {
        &mut self.head
    }

    pub fn zeros_like(&self) -> Self {
        DcrnnModel::zeros(self.spec).expect("spec already validated")
    }
}

impl ParamSet for DcrnnModel {
    fn blocks(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (d, core) in self.cores.iter().enumerate() {
            out.extend(
                core.blocks()
                    .into_iter()
                    .map(|(n, b)| (format!("{}.{n}", DIRECTION_PREFIX[d]), b)),
            );
        }
        out.extend(self.head.blocks());
        out
    }

    fn blocks_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = Vec::new();
        for (d, core) in self.cores.iter_mut().enumerate() {
            out.extend(
                core.blocks_mut()
                    .into_iter()
                    .map(|(n, b)| (format!("{}.{n}", DIRECTION_PREFIX[d]), b)),
            );
        }
        out.extend(self.head.blocks_mut());
        out
    }
}

/// Neighbor signal for cell `(j, k)`: the last `q` hidden elements of the
/// up, down, left and right neighbors, zeros where a neighbor is off-grid.
///
/// `prev_hidden` holds one hidden vector per cell in row-major order.
pub fn gather_neighbors(
    grid: &GridConfig,
    prev_hidden: &[DenseVector],
    j: usize,
    k: usize,
) -> Result<DenseVector> {
    if j >= grid.rows || k >= grid.cols {
        return Err(Error::Index(format!(
            "cell ({j},{k}) outside {}x{} grid",
            grid.rows, grid.cols
        )));
    }
    if prev_hidden.len() != grid.cells() {
        return Err(Error::shape(format!(
            "expected {} hidden vectors, got {}",
            grid.cells(),
            prev_hidden.len()
        )));
    }
    if prev_hidden.iter().any(|h| h.len() != grid.hidden_dim) {
        return Err(Error::shape("hidden vector length differs from hidden_dim"));
    }
    let mut out = DenseVector::zeros(4 * grid.neighbor_outputs);
    gather_into(grid, |idx| &prev_hidden[idx], j, k, &mut out);
    Ok(out)
}

fn gather_into<'a>(
    grid: &GridConfig,
    hidden: impl Fn(usize) -> &'a [f64],
    j: usize,
    k: usize,
    out: &mut [f64],
) {
    let q = grid.neighbor_outputs;
    for (slot, nb) in neighbor_cells(grid, j, k).into_iter().enumerate() {
        let dst = &mut out[slot * q..(slot + 1) * q];
        match nb {
            Some(idx) => {
                let h = hidden(idx);
                dst.copy_from_slice(&h[h.len() - q..]);
            }
            None => dst.fill(0.0),
        }
    }
}

/// Row-major indices of the up, down, left, right neighbors.
fn neighbor_cells(grid: &GridConfig, j: usize, k: usize) -> [Option<usize>; 4] {
    let at = |r: usize, c: usize| r * grid.cols + c;
    [
        (j > 0).then(|| at(j - 1, k)),
        (j + 1 < grid.rows).then(|| at(j + 1, k)),
        (k > 0).then(|| at(j, k - 1)),
        (k + 1 < grid.cols).then(|| at(j, k + 1)),
    ]
}

/// Everything [`backward`] needs from a forward pass.
#[derive(Clone, Debug)]
pub struct RolloutTape {
    steps: usize,
    /// `[direction][cell][processing step]`
    cells: Vec<Vec<Vec<StepTape>>>,
    pub features: DenseVector,
    pub ff: DenseVector,
    pub output: DenseVector,
}

impl RolloutTape {
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Step tape of a cell at a processing step. For the backward
    /// direction, processing step `τ` consumed time index `T-1-τ`.
    pub fn step(&self, direction: usize, cell: usize, step: usize) -> &StepTape {
        &self.cells[direction][cell][step]
    }

    /// Hidden output of `cell` after each processing step.
    pub fn hidden_history(&self, direction: usize, cell: usize) -> Vec<&[f64]> {
        self.cells[direction][cell].iter().map(|t| t.h()).collect()
    }
}

fn roll_direction(
    model: &DcrnnModel,
    sample: &GridSample,
    direction: usize,
) -> Result<Vec<Vec<StepTape>>> {
    let grid = model.grid();
    let core = &model.cores[direction];
    let steps = sample.steps();
    let cells = grid.cells();
    let mut state = vec![CellState::zeros(grid.hidden_dim); cells];
    let mut next = state.clone();
    let mut n = vec![0.0; 4 * grid.neighbor_outputs];
    let mut tapes: Vec<Vec<StepTape>> = (0..cells).map(|_| Vec::with_capacity(steps)).collect();
    for tau in 0..steps {
        let t = if direction == 0 { tau } else { steps - 1 - tau };
        for j in 0..grid.rows {
            for k in 0..grid.cols {
                let idx = j * grid.cols + k;
                gather_into(grid, |i| &state[i].h, j, k, &mut n);
                let (st, tape) = cellular_lstm_step(core, sample.x(j, k, t), &n, &state[idx])?;
                next[idx] = st;
                tapes[idx].push(tape);
            }
        }
        std::mem::swap(&mut state, &mut next);
    }
    Ok(tapes)
}

/// Full forward pass. All cells advance synchronously; each reads its
/// neighbors' hidden outputs from the previous step only.
pub fn forward(model: &DcrnnModel, sample: &GridSample) -> Result<(DenseVector, RolloutTape)> {
    model.spec.check_sample(sample)?;
    let grid = model.grid();
    let dirs = grid.direction.count();
    let cells: Vec<Vec<Vec<StepTape>>> = (0..dirs)
        .map(|d| roll_direction(model, sample, d))
        .collect::<Result<_>>()?;

    let g = grid.hidden_dim;
    let mut features = Vec::with_capacity(grid.head_input_len());
    for cell in 0..grid.cells() {
        for per_dir in &cells {
            let h = per_dir[cell].last().expect("steps >= 1").h();
            match grid.aggregation {
                Aggregation::FullHidden => features.extend_from_slice(h),
                Aggregation::LastUnitOnly => features.push(h[g - 1]),
            }
        }
    }
    let features = DenseVector::from_vec(features);
    let (ff, output) = model.head.forward(&features)?;
    let tape = RolloutTape {
        steps: sample.steps(),
        cells,
        features,
        ff,
        output: output.clone(),
    };
    Ok((output, tape))
}

/// Squared-error loss `½‖y − ŷ‖²`.
pub fn loss(predicted: &[f64], target: &[f64]) -> Result<f64> {
    if predicted.len() != target.len() {
        return Err(Error::shape(format!(
            "loss: prediction has {} entries, target {}",
            predicted.len(),
            target.len()
        )));
    }
    Ok(0.5
        * predicted
            .iter()
            .zip(target)
            .map(|(p, t)| (t - p) * (t - p))
            .sum::<f64>())
}

pub fn one_hot(label: usize, classes: usize) -> Result<DenseVector> {
    if label >= classes {
        return Err(Error::Index(format!(
            "label {label} out of range for {classes} classes"
        )));
    }
    let mut v = DenseVector::zeros(classes);
    v[label] = 1.0;
    Ok(v)
}

/// Exact gradients of the loss with respect to every parameter.
pub fn backward(model: &DcrnnModel, tape: &RolloutTape, target: &[f64]) -> Result<ModelGradients> {
    let grid = model.grid();
    let head = &model.head;
    let classes = head.classes();
    if target.len() != classes || tape.output.len() != classes {
        return Err(Error::shape("target length does not match class count"));
    }
    if tape.features.len() != grid.head_input_len()
        || tape.cells.len() != grid.direction.count()
        || tape.cells.iter().any(|d| d.len() != grid.cells())
    {
        return Err(Error::shape("rollout tape does not match model"));
    }
    let mut grads = model.zeros_like();

    // Softmax Jacobian applied to dE/dŷ = ŷ − y.
    let y = &tape.output;
    let dy: Vec<f64> = y.iter().zip(target).map(|(p, t)| p - t).collect();
    let dot: f64 = y.iter().zip(&dy).map(|(a, b)| a * b).sum();
    let dlogits: Vec<f64> = y
        .iter()
        .zip(&dy)
        .map(|(p, d)| flush_tiny(p * (d - dot)))
        .collect();

    grads.head.out_weight.add_outer(&dlogits, &tape.ff);
    grads.head.out_bias.add_assign(&dlogits);
    let mut dff = vec![0.0; head.ff_neurons()];
    head.out_weight.matvec_transpose_acc(&dlogits, &mut dff);
    let dzff: Vec<f64> = dff
        .iter()
        .zip(tape.ff.iter())
        .map(|(d, f)| flush_tiny(d * f * (1.0 - f)))
        .collect();
    grads.head.ff_weight.add_outer(&dzff, &tape.features);
    grads.head.ff_bias.add_assign(&dzff);
    let mut dfeatures = vec![0.0; tape.features.len()];
    head.ff_weight.matvec_transpose_acc(&dzff, &mut dfeatures);
    flush_tiny_slice(&mut dfeatures);

    let g = grid.hidden_dim;
    let q = grid.neighbor_outputs;
    let per_cell = grid.features_per_cell();
    let per_dir = per_cell / grid.direction.count();
    for d in 0..grid.direction.count() {
        let core = &model.cores[d];
        let acc = &mut grads.cores[d];
        let mut gh: Vec<Vec<f64>> = (0..grid.cells())
            .map(|cell| {
                let off = cell * per_cell + d * per_dir;
                let mut v = vec![0.0; g];
                match grid.aggregation {
                    Aggregation::FullHidden => v.copy_from_slice(&dfeatures[off..off + g]),
                    Aggregation::LastUnitOnly => v[g - 1] = dfeatures[off],
                }
                v
            })
            .collect();
        let mut gs: Vec<Vec<f64>> = vec![vec![0.0; g]; grid.cells()];
        let mut next_gh = gs.clone();
        let mut next_gs = gs.clone();
        let mut sg = StepGradients::zeros(core.dims());
        let mut scratch = Vec::new();
        for tau in (0..tape.steps).rev() {
            next_gh.iter_mut().for_each(|v| v.fill(0.0));
            for j in (0..grid.rows).rev() {
                for k in (0..grid.cols).rev() {
                    let idx = j * grid.cols + k;
                    let st = &tape.cells[d][idx][tau];
                    step_backward_into(core, st, &gh[idx], &gs[idx], acc, &mut sg, &mut scratch)?;
                    for (a, b) in next_gh[idx].iter_mut().zip(sg.h_prev.iter()) {
                        *a += b;
                    }
                    next_gs[idx].copy_from_slice(&sg.s_prev);
                    for (slot, nb) in neighbor_cells(grid, j, k).into_iter().enumerate() {
                        if let Some(nb) = nb {
                            let src = &sg.neighbors[slot * q..(slot + 1) * q];
                            for (a, b) in next_gh[nb][g - q..].iter_mut().zip(src) {
                                *a += b;
                            }
                        }
                    }
                }
            }
            std::mem::swap(&mut gh, &mut next_gh);
            std::mem::swap(&mut gs, &mut next_gs);
        }
    }
    Ok(grads)
}

/// Forward and backward on one labeled sample.
pub fn loss_and_gradients(
    model: &DcrnnModel,
    sample: &GridSample,
) -> Result<(f64, ModelGradients)> {
    let target = one_hot(sample.label(), model.head.classes())?;
    let (y, tape) = forward(model, sample)?;
    let e = loss(&y, &target)?;
    let grads = backward(model, &tape, &target)?;
    Ok((e, grads))
}

/// Exact parameter census next to the order-of-magnitude formulas.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamReport {
    pub exact_cell_params: usize,
    pub exact_head_params: usize,
    pub exact_total: usize,
    /// `n_cell_units·m + J·K·n_ff + c·n_ff`, with `n_cell_units = G` per direction.
    pub formula_dcrnn: usize,
    /// `n_lstm·m·J·K + n_lstm·n_ff + c·n_ff`.
    pub formula_dlstm: usize,
    pub comparison_units: usize,
    /// Gate weights of one monolithic LSTM (same directionality) reading all
    /// `J·K·m` inputs with `comparison_units` units.
    pub dlstm_exact_recurrent: usize,
    /// `dlstm_exact_recurrent` plus a head of the same shape as this model's.
    pub dlstm_exact_equivalent: usize,
    /// `dlstm_exact_recurrent / exact_cell_params`.
    pub recurrent_ratio: f64,
}

pub fn count_params(model: &DcrnnModel, comparison_units: usize) -> ParamReport {
    let spec = model.spec();
    let g = &spec.grid;
    let dirs = g.direction.count();
    let exact_cell_params: usize = model.cores.iter().map(|c| c.num_params()).sum();
    let exact_head_params = model.head.num_params();
    let inputs = g.cells() * g.input_dim;
    let n = comparison_units;
    let (n_ff, c) = (spec.ff_neurons, spec.classes);

    let per_gate = n * inputs + n * n + if g.use_bias { n } else { 0 };
    let dlstm_exact_recurrent = dirs * 4 * per_gate;
    let dlstm_head = n_ff * (n * dirs) + n_ff + c * n_ff + c;
    ParamReport {
        exact_cell_params,
        exact_head_params,
        exact_total: exact_cell_params + exact_head_params,
        formula_dcrnn: g.hidden_dim * dirs * g.input_dim + g.cells() * n_ff + c * n_ff,
        formula_dlstm: n * inputs + n * n_ff + c * n_ff,
        comparison_units: n,
        dlstm_exact_recurrent,
        dlstm_exact_equivalent: dlstm_exact_recurrent + dlstm_head,
        recurrent_ratio: dlstm_exact_recurrent as f64 / exact_cell_params as f64,
    }
}

/// First forward-direction time step at which `target`'s hidden state
/// reacts to a perturbation of `source`'s input at `t = 0`, or `None` if it
/// never does within the sample.
pub fn receptive_field_probe(
    model: &DcrnnModel,
    sample: &GridSample,
    source: (usize, usize),
    target: (usize, usize),
) -> Result<Option<usize>> {
    let grid = model.grid();
    for (j, k) in [source, target] {
        if j >= grid.rows || k >= grid.cols {
            return Err(Error::Index(format!(
                "cell ({j},{k}) outside {}x{} grid",
                grid.rows, grid.cols
            )));
        }
    }
    let mut perturbed = sample.clone();
    for v in perturbed.x_mut(source.0, source.1, 0) {
        *v += 0.5;
    }
    let (_, base) = forward(model, sample)?;
    let (_, moved) = forward(model, &perturbed)?;
    let cell = target.0 * grid.cols + target.1;
    let a = base.hidden_history(0, cell);
    let b = moved.hidden_history(0, cell);
    Ok(a.iter()
        .zip(&b)
        .position(|(x, y)| x.iter().zip(y.iter()).any(|(p, q)| (p - q).abs() > 1e-12)))
}
