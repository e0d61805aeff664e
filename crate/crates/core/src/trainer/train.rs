use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{metrics, roc_auc_per_class, ConfusionCounts, MetricsSummary};
use crate::dataio::{Dataset, GridSample};
use crate::error::{Error, Result};
use crate::grid::{forward, loss_and_gradients, DcrnnModel, ModelGradients};
use crate::numkernel::SeededRng;
use crate::params::ParamSet;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub shuffle: bool,
    pub folds: usize,
    /// Evaluate the validation set every this many epochs (0 = never).
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            epochs: 30,
            batch_size: 1,
            seed: 0,
            shuffle: true,
            folds: 5,
            log_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be finite and non-negative (got {})",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub val_accuracy: Option<f64>,
}

impl EpochLog {
    pub const TSV_HEADER: &'static str = "epoch\tmean_loss\tval_accuracy";

    pub fn to_tsv(&self) -> String {
        let val = self
            .val_accuracy
            .map_or_else(|| "-".to_string(), |a| format!("{a:.6}"));
        format!("{}\t{:.12e}\t{val}", self.epoch, self.mean_loss)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrainReport {
    /// Mean of the per-batch mean loss, per epoch.
    pub loss_history: Vec<f64>,
    pub log: Vec<EpochLog>,
}

fn check_dims(model: &DcrnnModel, data: &Dataset) -> Result<()> {
    if data.classes() != model.spec().classes {
        return Err(Error::Config(format!(
            "dataset has {} classes but the model has {}",
            data.classes(),
            model.spec().classes
        )));
    }
    if let Some(s) = data.samples().first() {
        model.spec().check_sample(s).map_err(|e| match e {
            Error::Shape(msg) => Error::Config(msg),
            other => other,
        })?;
    }
    Ok(())
}

/// Mean loss and mean gradient over `batch`. Samples run in parallel; the
/// reduction runs in batch order so the result is reproducible.
pub fn batch_gradients(model: &DcrnnModel, batch: &[&GridSample]) -> Result<(f64, ModelGradients)> {
    let parts: Vec<(f64, ModelGradients)> = batch
        .par_iter()
        .map(|s| loss_and_gradients(model, s))
        .collect::<Result<_>>()?;
    let mut total = model.zeros_like();
    let mut loss = 0.0;
    for (e, g) in &parts {
        loss += e;
        total.add_scaled(g, 1.0);
    }
    let n = batch.len() as f64;
    total.scale(1.0 / n);
    Ok((loss / n, total))
}

fn divergence(epoch: usize, batch: usize, e: Error) -> Error {
    match e {
        Error::NumericDomain(_) => Error::Divergence {
            epoch,
            batch,
            loss: f64::NAN,
        },
        other => other,
    }
}

/// Mini-batch SGD with exact BPTT: `W ← W − α·mean(∇E)` on every block.
///
/// `validation`, if given, is scored every `cfg.log_every` epochs;
/// `on_epoch` sees each log line as soon as it is produced.
pub fn train(
    model: &mut DcrnnModel,
    data: &Dataset,
    cfg: &TrainConfig,
    validation: Option<&Dataset>,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput("training set is empty"));
    }
    check_dims(model, data)?;
    if let Some(v) = validation {
        check_dims(model, v)?;
    }
    let mut rng = SeededRng::new(cfg.seed).fork(0x5eed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut report = TrainReport::default();
    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut batch_losses = Vec::new();
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&GridSample> = chunk.iter().map(|&i| &data.samples()[i]).collect();
            let (loss, grads) =
                batch_gradients(model, &batch).map_err(|e| divergence(epoch, b, e))?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: b,
                    loss,
                });
            }
            model.add_scaled(&grads, -cfg.learning_rate);
            batch_losses.push(loss);
        }
        let mean_loss = batch_losses.iter().sum::<f64>() / batch_losses.len() as f64;
        let val_accuracy = match validation {
            Some(v) if cfg.log_every > 0 && (epoch + 1) % cfg.log_every == 0 => {
                evaluate(model, v)?.metrics.accuracy
            }
            _ => None,
        };
        let line = EpochLog {
            epoch,
            mean_loss,
            val_accuracy,
        };
        on_epoch(&line);
        report.loss_history.push(mean_loss);
        report.log.push(line);
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Prediction {
    pub label: usize,
    pub predicted: usize,
    pub scores: Vec<f64>,
}

pub fn predict(model: &DcrnnModel, data: &Dataset) -> Result<Vec<Prediction>> {
    check_dims(model, data)?;
    data.samples()
        .par_iter()
        .map(|s| {
            let (y, _) = forward(model, s)?;
            let predicted = y
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i)
                .expect("at least two classes");
            Ok(Prediction {
                label: s.label(),
                predicted,
                scores: y.into_vec(),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    pub counts: ConfusionCounts,
    pub metrics: MetricsSummary,
    /// One-vs-rest AUC per class; `None` where undefined.
    pub auc: Vec<Option<f64>>,
    pub mean_loss: f64,
}

pub fn evaluate(model: &DcrnnModel, data: &Dataset) -> Result<Evaluation> {
    let preds = predict(model, data)?;
    let labels: Vec<usize> = preds.iter().map(|p| p.label).collect();
    let predicted: Vec<usize> = preds.iter().map(|p| p.predicted).collect();
    let scores: Vec<Vec<f64>> = preds.iter().map(|p| p.scores.clone()).collect();
    let classes = data.classes();
    let counts = ConfusionCounts::from_predictions(&labels, &predicted, classes)?;
    let mean_loss = if preds.is_empty() {
        f64::NAN
    } else {
        preds
            .iter()
            .map(|p| {
                p.scores
                    .iter()
                    .enumerate()
                    .map(|(c, s)| {
                        let t = if c == p.label { 1.0 } else { 0.0 };
                        0.5 * (t - s) * (t - s)
                    })
                    .sum::<f64>()
            })
            .sum::<f64>()
            / preds.len() as f64
    };
    Ok(Evaluation {
        metrics: metrics(&counts),
        counts,
        auc: roc_auc_per_class(&scores, &labels, classes),
        mean_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{synth_dataset, SynthSpec};
    use crate::grid::{Direction, GridConfig, ModelSpec};
    use crate::numkernel::ScaleMode;

    fn tiny_spec() -> ModelSpec {
        ModelSpec {
            grid: GridConfig {
                rows: 2,
                cols: 2,
                input_dim: 1,
                hidden_dim: 2,
                neighbor_outputs: 1,
                direction: Direction::Unidirectional,
                aggregation: Default::default(),
                use_bias: false,
            },
            ff_neurons: 4,
            classes: 2,
            init: ScaleMode::FanBalanced,
        }
    }

    fn tiny_data(n: usize) -> Dataset {
        synth_dataset(&SynthSpec {
            rows: 2,
            cols: 2,
            steps: 8,
            classes: 2,
            per_class: n,
            ..SynthSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let spec = tiny_spec();
        let init = DcrnnModel::random(spec, &mut SeededRng::new(1)).unwrap();
        let mut m = init.clone();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            batch_size: 3,
            ..TrainConfig::default()
        };
        train(&mut m, &tiny_data(4), &cfg, None, |_| {}).unwrap();
        assert!(m.bit_eq(&init));
    }

    #[test]
    fn single_sample_loss_decreases() {
        let spec = tiny_spec();
        let mut m = DcrnnModel::random(spec, &mut SeededRng::new(2)).unwrap();
        let data = tiny_data(1).subset(&[0]);
        let cfg = TrainConfig {
            learning_rate: 0.5,
            epochs: 10,
            batch_size: 1,
            ..TrainConfig::default()
        };
        let r = train(&mut m, &data, &cfg, None, |_| {}).unwrap();
        for w in r.loss_history.windows(2) {
            assert!(w[1] < w[0], "{:?}", r.loss_history);
        }
    }

    #[test]
    fn repeated_sample_batch_matches_single() {
        let spec = tiny_spec();
        let m = DcrnnModel::random(spec, &mut SeededRng::new(3)).unwrap();
        let data = tiny_data(1);
        let s = &data.samples()[0];
        let (l1, g1) = batch_gradients(&m, &[s]).unwrap();
        let (l4, g4) = batch_gradients(&m, &[s, s, s, s]).unwrap();
        assert!((l1 - l4).abs() < 1e-15);
        for ((_, a), (_, b)) in g1.blocks().iter().zip(g4.blocks()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= 1e-15 * x.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn training_is_deterministic() {
        let spec = tiny_spec();
        let data = tiny_data(6);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 4,
            seed: 9,
            ..TrainConfig::default()
        };
        let run = || {
            let mut m = DcrnnModel::random(spec, &mut SeededRng::new(5)).unwrap();
            let r = train(&mut m, &data, &cfg, Some(&data), |_| {}).unwrap();
            (m, r)
        };
        let (a, ra) = run();
        let (b, rb) = run();
        assert!(a.bit_eq(&b));
        assert_eq!(ra, rb);
        assert!(ra.log[0].val_accuracy.is_some());
    }

    #[test]
    fn divergence_is_reported() {
        let spec = tiny_spec();
        let mut m = DcrnnModel::random(spec, &mut SeededRng::new(6)).unwrap();
        m.head_mut().out_bias[0] = f64::INFINITY;
        let cfg = TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        };
        match train(&mut m, &tiny_data(2), &cfg, None, |_| {}) {
            Err(Error::Divergence {
                epoch: 0, batch: 0, ..
            }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn class_mismatch_is_a_config_error() {
        let mut spec = tiny_spec();
        spec.classes = 3;
        let mut m = DcrnnModel::random(spec, &mut SeededRng::new(6)).unwrap();
        let err = train(&mut m, &tiny_data(2), &TrainConfig::default(), None, |_| {}).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn log_line_format() {
        let l = EpochLog {
            epoch: 3,
            mean_loss: 0.25,
            val_accuracy: None,
        };
        assert_eq!(l.to_tsv(), "3\t2.500000000000e-1\t-");
    }
}
