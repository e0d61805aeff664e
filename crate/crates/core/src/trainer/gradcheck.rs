//! Finite-difference verification of the analytic gradients.

use serde::Serialize;

use crate::dataio::GridSample;
use crate::error::{Error, Result};
use crate::grid::{
    backward, forward, loss, one_hot, Aggregation, DcrnnModel, Direction, GridConfig,
    ModelGradients, ModelSpec,
};
use crate::numkernel::{ScaleMode, SeededRng};
use crate::params::ParamSet;

/// Finite-difference scheme.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "scheme", content = "step")]
pub enum FdScheme {
    /// `(E(w+ε) − E(w−ε)) / 2ε`.
    Central(f64),
    /// Two central differences at `h` and `h/2` combined to cancel the
    /// leading truncation term.
    Richardson(f64),
}

impl Default for FdScheme {
    fn default() -> Self {
        FdScheme::Richardson(1e-2)
    }
}

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockCheck {
    pub name: String,
    pub entries: usize,
    pub max_rel_error: f64,
    /// Index of the worst entry inside the block.
    pub worst_index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockCheck>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    /// Blocks whose worst entry exceeds the tolerance.
    pub fn failing_blocks(&self) -> Vec<&str> {
        self.blocks
            .iter()
            .filter(|b| b.max_rel_error > self.tolerance || b.max_rel_error.is_nan())
            .map(|b| b.name.as_str())
            .collect()
    }
}

fn sample_loss(model: &DcrnnModel, sample: &GridSample, target: &[f64]) -> Result<f64> {
    let (y, _) = forward(model, sample)?;
    loss(&y, target)
}

/// Compare analytic gradients with finite differences over every parameter.
pub fn check_gradients(
    model: &DcrnnModel,
    sample: &GridSample,
    scheme: FdScheme,
    tolerance: f64,
) -> Result<GradCheckReport> {
    check_gradients_with(model, sample, scheme, tolerance, |m, s| {
        let target = one_hot(s.label(), m.spec().classes)?;
        let (_, tape) = forward(m, s)?;
        backward(m, &tape, &target)
    })
}

/// As [`check_gradients`], with the analytic gradient supplied by `grad_fn`.
pub fn check_gradients_with(
    model: &DcrnnModel,
    sample: &GridSample,
    scheme: FdScheme,
    tolerance: f64,
    grad_fn: impl Fn(&DcrnnModel, &GridSample) -> Result<ModelGradients>,
) -> Result<GradCheckReport> {
    let step = match scheme {
        FdScheme::Central(e) | FdScheme::Richardson(e) => e,
    };
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Config(format!(
            "finite-difference step must be positive (got {step})"
        )));
    }
    let target = one_hot(sample.label(), model.spec().classes)?;
    let analytic = grad_fn(model, sample)?;
    let analytic_blocks = analytic.blocks();
    let mut probe = model.clone();
    let mut blocks = Vec::new();
    let mut block_idx = 0;
    while let Some(len) = probe.blocks().get(block_idx).map(|(_, b)| b.len()) {
        let (name, ref_block) = &analytic_blocks[block_idx];
        let mut check = BlockCheck {
            name: name.clone(),
            entries: len,
            max_rel_error: 0.0,
            worst_index: 0,
        };
        for i in 0..len {
            let mut central = |h: f64| -> Result<f64> {
                let orig = probe.blocks_mut()[block_idx].1[i];
                probe.blocks_mut()[block_idx].1[i] = orig + h;
                let plus = sample_loss(&probe, sample, &target)?;
                probe.blocks_mut()[block_idx].1[i] = orig - h;
                let minus = sample_loss(&probe, sample, &target)?;
                probe.blocks_mut()[block_idx].1[i] = orig;
                Ok((plus - minus) / (2.0 * h))
            };
            let numeric = match scheme {
                FdScheme::Central(e) => central(e)?,
                FdScheme::Richardson(h) => {
                    let coarse = central(h)?;
                    let fine = central(h / 2.0)?;
                    (4.0 * fine - coarse) / 3.0
                }
            };
            let err = relative_error(ref_block[i], numeric);
            if err > check.max_rel_error || err.is_nan() {
                check.max_rel_error = err;
                check.worst_index = i;
            }
        }
        blocks.push(check);
        block_idx += 1;
    }
    let max_rel_error = blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max);
    let passed = blocks.iter().all(|b| b.max_rel_error <= tolerance);
    Ok(GradCheckReport {
        blocks,
        max_rel_error,
        tolerance,
        passed,
    })
}

/// One small configuration for the gradient-check sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialConfig {
    pub trial: usize,
    pub seed: u64,
    pub spec: ModelSpec,
    pub steps: usize,
}

/// Sweep of small configurations that cycles through every combination
/// of direction, aggregation and grid size in {1x1, 2x2, 3x4}.
pub fn trial_configs(trials: usize, base_seed: u64) -> Vec<TrialConfig> {
    const GRIDS: [(usize, usize); 3] = [(1, 1), (2, 2), (3, 4)];
    (0..trials)
        .map(|trial| {
            let combo = trial % 12;
            let direction = if combo % 2 == 0 {
                Direction::Unidirectional
            } else {
                Direction::Bidirectional
            };
            let aggregation = if (combo / 2) % 2 == 0 {
                Aggregation::FullHidden
            } else {
                Aggregation::LastUnitOnly
            };
            let (rows, cols) = GRIDS[combo / 4];
            let round = trial / 12;
            let hidden_dim = 2 + (trial % 2);
            let spec = ModelSpec {
                grid: GridConfig {
                    rows,
                    cols,
                    input_dim: 2,
                    hidden_dim,
                    neighbor_outputs: 1 + (round % hidden_dim),
                    direction,
                    aggregation,
                    use_bias: round % 2 == 1,
                },
                ff_neurons: 4,
                classes: 3,
                init: ScaleMode::FanBalanced,
            };
            TrialConfig {
                trial,
                seed: base_seed.wrapping_add(trial as u64),
                spec,
                steps: 4,
            }
        })
        .collect()
}

/// Random model and random labeled input for one trial.
pub fn trial_instance(cfg: &TrialConfig) -> Result<(DcrnnModel, GridSample)> {
    let mut rng = SeededRng::new(cfg.seed);
    let mut model = DcrnnModel::random(cfg.spec, &mut rng)?;
    // random biases
    let mut brng = rng.fork(1);
    for (name, block) in model.blocks_mut() {
        if name.contains("bias") {
            for v in block.iter_mut() {
                *v = brng.uniform(-0.5, 0.5);
            }
        }
    }
    let g = &cfg.spec.grid;
    let n = g.cells() * cfg.steps * g.input_dim;
    let values = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let label = (cfg.seed % cfg.spec.classes as u64) as usize;
    let sample = GridSample::new(g.rows, g.cols, g.input_dim, cfg.steps, values, label)?;
    Ok((model, sample))
}
