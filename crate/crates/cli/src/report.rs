use std::fmt::Write as _;

use anyhow::{Context, Result};
use serde::Serialize;

use dcrnn_core::grid::ParamReport;
use dcrnn_core::trainer::{CvReport, Evaluation, MeanStd};

pub fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.4}"))
}

pub fn to_toml<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string(value).context("serializing report")
}

pub fn param_audit(r: &ParamReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "parameter census");
    let _ = writeln!(
        s,
        "  cell core (shared by every cell): {}",
        r.exact_cell_params
    );
    let _ = writeln!(
        s,
        "  feed-forward + output head:       {}",
        r.exact_head_params
    );
    let _ = writeln!(s, "  total:                            {}", r.exact_total);
    let _ = writeln!(s, "  formula, cellular network:        {}", r.formula_dcrnn);
    let _ = writeln!(
        s,
        "  formula, monolithic LSTM ({} units): {}",
        r.comparison_units, r.formula_dlstm
    );
    let _ = writeln!(
        s,
        "  monolithic LSTM recurrent params: {} (with same head: {})",
        r.dlstm_exact_recurrent, r.dlstm_exact_equivalent
    );
    let _ = write!(
        s,
        "  recurrent ratio (LSTM / cell core): {:.1}x",
        r.recurrent_ratio
    );
    s
}

pub fn metrics_text(e: &Evaluation) -> String {
    let m = &e.metrics;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "samples {}  accuracy {}  mean loss {:.6}",
        e.counts.samples,
        opt(m.accuracy),
        e.mean_loss
    );
    let _ = writeln!(s, "class\tsensitivity\tspecificity\tf1\tauc");
    for (c, cm) in m.per_class.iter().enumerate() {
        let _ = writeln!(
            s,
            "{c}\t{}\t{}\t{}\t{}",
            opt(cm.sensitivity),
            opt(cm.specificity),
            opt(cm.f1),
            opt(e.auc[c])
        );
    }
    let _ = writeln!(
        s,
        "macro\t{}\t{}\t{}\t-",
        opt(m.macro_avg.sensitivity),
        opt(m.macro_avg.specificity),
        opt(m.macro_avg.f1)
    );
    s
}

/// Per-class row; undefined metrics are omitted from the file.
#[derive(Serialize)]
pub struct ClassReport {
    pub class: usize,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub f1: Option<f64>,
    pub auc: Option<f64>,
}

#[derive(Serialize)]
pub struct MacroReport {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Serialize)]
pub struct MetricsReport {
    pub samples: u64,
    pub accuracy: Option<f64>,
    pub mean_loss: f64,
    #[serde(rename = "macro")]
    pub macro_avg: MacroReport,
    pub class: Vec<ClassReport>,
}

impl MetricsReport {
    pub fn new(e: &Evaluation) -> Self {
        let m = &e.metrics;
        MetricsReport {
            samples: e.counts.samples,
            accuracy: m.accuracy,
            mean_loss: e.mean_loss,
            macro_avg: MacroReport {
                sensitivity: m.macro_avg.sensitivity,
                specificity: m.macro_avg.specificity,
                f1: m.macro_avg.f1,
            },
            class: m
                .per_class
                .iter()
                .zip(&e.counts.per_class)
                .enumerate()
                .map(|(c, (cm, k))| ClassReport {
                    class: c,
                    tp: k.tp,
                    fp: k.fp,
                    tn: k.tn,
                    fn_: k.fn_,
                    accuracy: cm.accuracy,
                    sensitivity: cm.sensitivity,
                    specificity: cm.specificity,
                    f1: cm.f1,
                    auc: e.auc[c],
                })
                .collect(),
        }
    }
}

#[derive(Serialize)]
pub struct FoldRow {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub final_train_loss: f64,
    pub metrics: MetricsReport,
}

#[derive(Serialize)]
pub struct CvSummary {
    pub accuracy: Option<MeanStd>,
    pub macro_sensitivity: Option<MeanStd>,
    pub macro_specificity: Option<MeanStd>,
    pub fold: Vec<FoldRow>,
}

impl CvSummary {
    pub fn new(cv: &CvReport) -> Self {
        CvSummary {
            accuracy: cv.accuracy,
            macro_sensitivity: cv.macro_sensitivity,
            macro_specificity: cv.macro_specificity,
            fold: cv
                .folds
                .iter()
                .map(|f| FoldRow {
                    fold: f.fold,
                    train_size: f.train_size,
                    test_size: f.test_size,
                    final_train_loss: f.final_train_loss,
                    metrics: MetricsReport::new(&f.evaluation),
                })
                .collect(),
        }
    }
}
