use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use dcrnn_core::dataio::{synth_dataset, SynthSpec};
use dcrnn_core::fsio::write_atomic;
use dcrnn_core::grid::{count_params, Aggregation, Direction};
use dcrnn_core::trainer::{
    check_gradients, evaluate, kfold, train, trial_configs, trial_instance, EpochLog, FdScheme,
    TrainConfig,
};
use dcrnn_core::{modelfile, Dataset, DcrnnModel, ModelSpec, SeededRng};

mod report;

#[derive(Parser)]
#[command(
    name = "dcrnn",
    version,
    about = "Deep cellular recurrent networks for grid time series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic dataset.
    Synth(SynthArgs),
    /// Train a model and write it with its loss log.
    Train(TrainArgs),
    /// Score a trained model on a dataset.
    Eval(EvalArgs),
    /// K-fold cross-validation.
    Kfold(KfoldArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Parameter census and comparison with a monolithic LSTM.
    Params(ParamsArgs),
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected ROWSxCOLS, got `{s}`"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
    Ok((parse(r)?, parse(c)?))
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_parser = parse_grid, default_value = "4x5")]
    grid: (usize, usize),
    #[arg(long, default_value_t = 64)]
    time: usize,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 100)]
    per_class: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    input_dim: usize,
    #[arg(long, default_value_t = 0.3)]
    noise: f64,
    /// Put this fraction of every class into a `val` split.
    #[arg(long, default_value_t = 0.0)]
    val_fraction: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum DirectionArg {
    Uni,
    Bi,
}

#[derive(Clone, Copy, ValueEnum)]
enum AggregationArg {
    Full,
    LastUnit,
}

/// Architecture from a config file, optionally overridden by flags.
#[derive(Args)]
struct ModelArgs {
    /// Model config (TOML).
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_parser = parse_grid)]
    grid: Option<(usize, usize)>,
    #[arg(long)]
    input_dim: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    /// Hidden elements each cell exposes to its neighbors.
    #[arg(long)]
    neighbor_outputs: Option<usize>,
    #[arg(long)]
    ff: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long, value_enum)]
    direction: Option<DirectionArg>,
    #[arg(long, value_enum)]
    aggregation: Option<AggregationArg>,
    #[arg(long)]
    bias: Option<bool>,
}

impl ModelArgs {
    fn resolve(&self) -> Result<ModelSpec> {
        let mut spec = match &self.model {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                ModelSpec::from_toml(&text)?
            }
            None => ModelSpec::fault(),
        };
        let g = &mut spec.grid;
        if let Some((r, c)) = self.grid {
            g.rows = r;
            g.cols = c;
        }
        if let Some(v) = self.input_dim {
            g.input_dim = v;
        }
        if let Some(v) = self.hidden {
            g.hidden_dim = v;
        }
        if let Some(v) = self.neighbor_outputs {
            g.neighbor_outputs = v;
        }
        if let Some(v) = self.direction {
            g.direction = match v {
                DirectionArg::Uni => Direction::Unidirectional,
                DirectionArg::Bi => Direction::Bidirectional,
            };
        }
        if let Some(v) = self.aggregation {
            g.aggregation = match v {
                AggregationArg::Full => Aggregation::FullHidden,
                AggregationArg::LastUnit => Aggregation::LastUnitOnly,
            };
        }
        if let Some(v) = self.bias {
            g.use_bias = v;
        }
        if let Some(v) = self.ff {
            spec.ff_neurons = v;
        }
        if let Some(v) = self.classes {
            spec.classes = v;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args)]
struct TrainingArgs {
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 1)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    no_shuffle: bool,
}

impl TrainingArgs {
    fn config(&self, folds: usize) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            shuffle: !self.no_shuffle,
            folds,
            log_every: 1,
        }
    }
}

#[derive(Args)]
struct DataArgs {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Only use this split of the dataset.
    #[arg(long)]
    split: Option<String>,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        Ok(Dataset::load(&self.data, self.split.as_deref())?)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    data: DataArgs,
    /// Validation split name inside the dataset directory.
    #[arg(long)]
    val_split: Option<String>,
    #[command(flatten)]
    training: TrainingArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Trained model file.
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Write the metrics report (TOML) here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct KfoldArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    training: TrainingArgs,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    /// Two central differences combined by Richardson extrapolation.
    Richardson,
    /// A single central difference.
    Central,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "richardson")]
    scheme: SchemeArg,
    /// Finite-difference step; defaults to 1e-2 for richardson, 1e-6 for central.
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args)]
struct ParamsArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Units of the monolithic LSTM to compare against.
    #[arg(long, default_value_t = 256)]
    compare_units: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e
                .chain()
                .find_map(|c| c.downcast_ref::<dcrnn_core::Error>())
                .map_or("cli", |c| c.kind());
            eprintln!("error[{kind}]: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Kfold(a) => cmd_kfold(&a),
        Command::Gradcheck(a) => cmd_gradcheck(&a),
        Command::Params(a) => cmd_params(&a),
    }
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    if !(0.0..1.0).contains(&a.val_fraction) {
        bail!(dcrnn_core::Error::Config(format!(
            "--val-fraction must be in [0, 1) (got {})",
            a.val_fraction
        )));
    }
    let spec = SynthSpec {
        rows: a.grid.0,
        cols: a.grid.1,
        input_dim: a.input_dim,
        steps: a.time,
        classes: a.classes,
        per_class: a.per_class,
        seed: a.seed,
        noise_sd: a.noise,
        ..SynthSpec::default()
    };
    let data = synth_dataset(&spec)?;
    let val_per_class = (a.per_class as f64 * a.val_fraction).round() as usize;
    let splits: Vec<String> = (0..data.len())
        .map(|i| {
            let rank = i / a.classes;
            if rank >= a.per_class - val_per_class {
                "val".to_string()
            } else {
                "train".to_string()
            }
        })
        .collect();
    data.save(&a.out, Some(&splits))?;
    println!(
        "wrote {} samples ({} classes, {}x{} grid, T={}) to {}",
        data.len(),
        a.classes,
        a.grid.0,
        a.grid.1,
        a.time,
        a.out.display()
    );
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let spec = a.model.resolve()?;
    let train_split = a
        .data
        .split
        .as_deref()
        .or(a.val_split.as_ref().map(|_| "train"));
    let data = Dataset::load(&a.data.data, train_split)?;
    let val = match &a.val_split {
        Some(split) => Some(Dataset::load(&a.data.data, Some(split))?),
        None => None,
    };
    let cfg = a.training.config(2);
    create_dir(&a.out)?;
    let mut model = DcrnnModel::random(spec, &mut SeededRng::new(a.training.seed))?;
    println!("{}", report::param_audit(&count_params(&model, 256)));
    let mut log = format!("{}\n", EpochLog::TSV_HEADER);
    println!("{}", EpochLog::TSV_HEADER);
    let result = train(&mut model, &data, &cfg, val.as_ref(), |line| {
        println!("{}", line.to_tsv());
        writeln!(log, "{}", line.to_tsv()).expect("write to string");
    });
    write_atomic(&a.out.join("train_log.tsv"), log.as_bytes())?;
    result?;
    modelfile::save(&model, &a.out.join("model.dcrn"))?;
    write_atomic(&a.out.join("model.toml"), spec.to_toml().as_bytes())?;
    write_atomic(
        &a.out.join("params.toml"),
        report::to_toml(&count_params(&model, 256))?.as_bytes(),
    )?;
    if let Some(v) = &val {
        let eval = evaluate(&model, v)?;
        print!("{}", report::metrics_text(&eval));
        write_atomic(
            &a.out.join("metrics.toml"),
            report::to_toml(&report::MetricsReport::new(&eval))?.as_bytes(),
        )?;
    }
    println!("model written to {}", a.out.join("model.dcrn").display());
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let model = modelfile::load(&a.model)?;
    let data = a.data.load()?;
    let eval = evaluate(&model, &data)?;
    print!("{}", report::metrics_text(&eval));
    if let Some(path) = &a.report {
        write_atomic(
            path,
            report::to_toml(&report::MetricsReport::new(&eval))?.as_bytes(),
        )?;
    }
    Ok(())
}

fn cmd_kfold(a: &KfoldArgs) -> Result<()> {
    let spec = a.model.resolve()?;
    let data = a.data.load()?;
    let cfg = a.training.config(a.folds);
    println!("fold\ttrain\ttest\taccuracy\tmacro_sensitivity\tmacro_specificity");
    let cv = kfold(&spec, &data, &cfg, |f| {
        let m = &f.evaluation.metrics;
        println!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            f.fold,
            f.train_size,
            f.test_size,
            report::opt(m.accuracy),
            report::opt(m.macro_avg.sensitivity),
            report::opt(m.macro_avg.specificity)
        );
    })?;
    let ms = |v: Option<dcrnn_core::trainer::MeanStd>| {
        v.map_or("undefined".to_string(), |m| {
            format!("{:.4} ± {:.4}", m.mean, m.std)
        })
    };
    println!(
        "mean ± std: accuracy {}, macro sensitivity {}, macro specificity {}",
        ms(cv.accuracy),
        ms(cv.macro_sensitivity),
        ms(cv.macro_specificity)
    );
    if let Some(path) = &a.report {
        write_atomic(
            path,
            report::to_toml(&report::CvSummary::new(&cv))?.as_bytes(),
        )?;
    }
    Ok(())
}

fn cmd_gradcheck(a: &GradcheckArgs) -> Result<()> {
    let scheme = match a.scheme {
        SchemeArg::Richardson => FdScheme::Richardson(a.epsilon.unwrap_or(1e-2)),
        SchemeArg::Central => FdScheme::Central(a.epsilon.unwrap_or(1e-6)),
    };
    let mut worst = 0.0f64;
    let mut failed = Vec::new();
    for cfg in trial_configs(a.trials, a.seed) {
        let (model, sample) = trial_instance(&cfg)?;
        let r = check_gradients(&model, &sample, scheme, a.tolerance)?;
        let g = cfg.spec.grid;
        println!(
            "trial {:>3}  {}x{} {:?} {:?} G={} q={} bias={}  max_rel_error={:.3e}",
            cfg.trial,
            g.rows,
            g.cols,
            g.direction,
            g.aggregation,
            g.hidden_dim,
            g.neighbor_outputs,
            g.use_bias,
            r.max_rel_error
        );
        for name in r.failing_blocks() {
            println!("    failing block: {name}");
        }
        if !r.passed {
            failed.push(cfg.trial);
        }
        worst = worst.max(r.max_rel_error);
    }
    if failed.is_empty() {
        println!(
            "PASS {} trials, max relative error {worst:.3e} < {:e}",
            a.trials, a.tolerance
        );
        Ok(())
    } else {
        println!("FAIL trials {failed:?}, max relative error {worst:.3e}");
        bail!(
            "gradient check failed on {} of {} trials",
            failed.len(),
            a.trials
        )
    }
}

fn cmd_params(a: &ParamsArgs) -> Result<()> {
    let spec = a.model.resolve()?;
    let model = DcrnnModel::zeros(spec)?;
    println!(
        "{}",
        report::param_audit(&count_params(&model, a.compare_units))
    );
    Ok(())
}
