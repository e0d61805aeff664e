use rand::seq::SliceRandom;
use serde::Serialize;

use super::train::{evaluate, train, Evaluation, TrainConfig};
use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::grid::{DcrnnModel, ModelSpec};
use crate::numkernel::SeededRng;

/// Fold index for each of `n` samples: a seeded shuffle cut into contiguous
/// chunks, the first `n % folds` chunks one sample larger.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::Config(format!(
            "need at least 2 folds (got {folds})"
        )));
    }
    if folds > n {
        return Err(Error::Config(format!(
            "{folds} folds requested for {n} samples"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut SeededRng::new(seed).fork(0xf01d));
    let mut assignment = vec![0; n];
    let (base, extra) = (n / folds, n % folds);
    let mut pos = 0;
    for fold in 0..folds {
        let size = base + usize::from(fold < extra);
        for &i in &order[pos..pos + size] {
            assignment[i] = fold;
        }
        pos += size;
    }
    Ok(assignment)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub final_train_loss: f64,
    pub evaluation: Evaluation,
}

/// Mean and population standard deviation over folds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(MeanStd {
            mean,
            std: var.sqrt(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
    pub accuracy: Option<MeanStd>,
    pub macro_sensitivity: Option<MeanStd>,
    pub macro_specificity: Option<MeanStd>,
}

/// K-fold cross-validation; every fold trains a fresh model seeded from
/// `cfg.seed` and the fold index.
pub fn kfold(
    spec: &ModelSpec,
    data: &Dataset,
    cfg: &TrainConfig,
    mut on_fold: impl FnMut(&FoldResult),
) -> Result<CvReport> {
    let assignment = fold_assignment(data.len(), cfg.folds, cfg.seed)?;
    let mut folds = Vec::with_capacity(cfg.folds);
    for fold in 0..cfg.folds {
        let (test_idx, train_idx): (Vec<usize>, Vec<usize>) =
            (0..data.len()).partition(|&i| assignment[i] == fold);
        let train_set = data.subset(&train_idx);
        let test_set = data.subset(&test_idx);
        let mut rng = SeededRng::new(cfg.seed).fork(fold as u64 + 1);
        let mut model = DcrnnModel::random(*spec, &mut rng)?;
        let fold_cfg = TrainConfig {
            seed: cfg.seed.wrapping_add(fold as u64),
            ..*cfg
        };
        let report = train(&mut model, &train_set, &fold_cfg, None, |_| {})?;
        let result = FoldResult {
            fold,
            train_size: train_set.len(),
            test_size: test_set.len(),
            final_train_loss: report.loss_history.last().copied().unwrap_or(f64::NAN),
            evaluation: evaluate(&model, &test_set)?,
        };
        on_fold(&result);
        folds.push(result);
    }
    let collect = |f: &dyn Fn(&FoldResult) -> Option<f64>| {
        MeanStd::of(&folds.iter().filter_map(f).collect::<Vec<_>>())
    };
    Ok(CvReport {
        accuracy: collect(&|r| r.evaluation.metrics.accuracy),
        macro_sensitivity: collect(&|r| r.evaluation.metrics.macro_avg.sensitivity),
        macro_specificity: collect(&|r| r.evaluation.metrics.macro_avg.specificity),
        folds,
    })
}
