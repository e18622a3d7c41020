//! Command-line interface.
//!
//! Settings resolve as flag, then `--config` TOML file, then the task
//! defaults. The resolved configuration is echoed to stderr before any work
//! starts. Exit codes: 0 success, 2 usage, 3 data, 4 divergence,
//! 5 verification failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::data::{load_csv, load_features, load_split_tags, CsvOptions, Split, SplitSpec, Task};
use crate::ensemble::{elcn_train_with_sink, ElcnConfig};
use crate::error::LcnError;
use crate::head::HiddenActivation;
use crate::io::{
    load_model, load_tree, save_model, save_tree, EnsembleWriter, ModelFile, ModelMeta, Predictor, TreeFile,
};
use crate::metrics::{auc, rmse};
use crate::network::{par_map_rows, Architecture, LcnParameters, Variant};
use crate::training::{train, write_log_csv, Anneal, Checkpoint, TrainConfig};
use crate::tree::{export_dot, lcn_to_tree_with_cap, tree_to_canonical_lcn, DotOptions, LeafLabel};
use crate::verification::{check_equivalence, run_suite, OracleReport, SUITES};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_DIVERGENCE: i32 = 4;
pub const EXIT_VERIFY: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "lcn", version, about = "Train locally constant networks and convert them to oblique decision trees")]
struct Cli {
    /// Worker threads for read-only evaluation.
    #[arg(long, global = true, env = "LCN_THREADS", default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a single network.
    Train(TrainArgs),
    /// Train an additive ensemble stage by stage.
    TrainEnsemble(TrainArgs),
    /// Write predictions of a model, tree or ensemble for every CSV row.
    Predict(PredictArgs),
    /// Report AUC (classification) or RMSE (regression) per label.
    Eval(EvalArgs),
    /// Convert an LCN model file into an explicit oblique tree.
    Convert(ConvertArgs),
    /// Build the equivalent table-head network from a tree file.
    TreeToLcn(TreeToLcnArgs),
    /// Render a tree (or a convertible model) as Graphviz DOT.
    ExportDot(ExportDotArgs),
    /// Run the oracle suites; optionally check a model against its tree.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum TaskArg {
    Classification,
    Regression,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum HiddenArg {
    Relu,
    Identity,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Training CSV with a header row.
    #[arg(long, required = true)]
    data: Option<PathBuf>,
    /// Comma-separated label column names.
    #[arg(long, value_delimiter = ',', required = true)]
    labels: Vec<String>,
    /// Column of train/val/test tags. Without it rows are split by --split.
    #[arg(long)]
    split_column: Option<String>,
    /// Train,validation,test ratios for a seeded random split.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.8, 0.1, 0.1])]
    split: Vec<f64>,
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    /// Network depth M (2..=20). Defaults to 6, or 12 for ensembles.
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..=20))]
    depth: Option<u64>,
    /// lcn, alcn or lln.
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    dropconnect: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Hidden layer widths of the output head, e.g. `256,256`; `none` for a
    /// linear head.
    #[arg(long)]
    head_hidden: Option<String>,
    #[arg(long, value_enum)]
    hidden_activation: Option<HiddenArg>,
    /// Train with λ fixed at 1 instead of annealing.
    #[arg(long)]
    no_anneal: bool,
    /// Z-score features using training-split statistics.
    #[arg(long)]
    standardize: bool,
    #[arg(long)]
    ensemble_size: Option<usize>,
    /// TOML file with any of the settings above.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model JSON (train) or output directory (train-ensemble).
    #[arg(long, required = true)]
    out: Option<PathBuf>,
    /// Epoch log CSV; defaults next to the output.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// Model, tree or ensemble manifest JSON.
    #[arg(long, required = true)]
    model: Option<PathBuf>,
    #[arg(long, required = true)]
    data: Option<PathBuf>,
    /// Prediction CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long, required = true)]
    model: Option<PathBuf>,
    #[arg(long, required = true)]
    data: Option<PathBuf>,
    /// Label columns; defaults to those the model was trained on.
    #[arg(long, value_delimiter = ',')]
    labels: Vec<String>,
    #[arg(long)]
    split_column: Option<String>,
    /// Restrict to rows tagged train, val or test (needs --split-column).
    #[arg(long)]
    subset: Option<String>,
}

#[derive(Debug, Args)]
struct ConvertArgs {
    #[arg(long, required = true)]
    model: Option<PathBuf>,
    #[arg(long, required = true)]
    out: Option<PathBuf>,
    /// Largest depth to expand.
    #[arg(long, default_value_t = crate::tree::DEFAULT_DEPTH_CAP)]
    cap: usize,
}

#[derive(Debug, Args)]
struct TreeToLcnArgs {
    #[arg(long, required = true)]
    tree: Option<PathBuf>,
    #[arg(long, required = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LeafArg {
    Values,
    Rank,
}

#[derive(Debug, Args)]
struct ExportDotArgs {
    /// Tree JSON.
    #[arg(long, required_unless_present = "model", conflicts_with = "model")]
    tree: Option<PathBuf>,
    /// LCN model JSON, converted on the fly.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Weight coordinates shown per node.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    top_k: u64,
    /// Leaf labels; ranks by default for classification.
    #[arg(long, value_enum)]
    leaf_label: Option<LeafArg>,
    /// DOT file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Suites to run (repeatable). Default: all.
    #[arg(long = "suite", value_parser = clap::builder::PossibleValuesParser::new(SUITES))]
    suites: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Multiplier on the number of random cases per suite.
    #[arg(long, default_value_t = 1)]
    scale: usize,
    /// LCN model to check against its tree on the rows of --data.
    #[arg(long, requires = "data")]
    model: Option<PathBuf>,
    /// Tree file to compare with --model instead of a fresh conversion.
    #[arg(long, requires = "model")]
    tree: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Settings accepted in a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    depth: Option<usize>,
    variant: Option<String>,
    dropconnect: Option<f64>,
    epochs: Option<usize>,
    lr: Option<f64>,
    batch_size: Option<usize>,
    seed: Option<u64>,
    head_hidden: Option<Vec<usize>>,
    hidden_activation: Option<HiddenActivation>,
    lr_decay_every: Option<usize>,
    lr_decay_factor: Option<f64>,
    anneal: Option<bool>,
    checkpoint: Option<Checkpoint>,
    standardize: Option<bool>,
    ensemble_size: Option<usize>,
}

/// Everything a training command will use, echoed before training.
#[derive(Debug, Serialize)]
struct Resolved {
    command: &'static str,
    data: String,
    labels: Vec<String>,
    task: Task,
    variant: Variant,
    depth: usize,
    head_hidden: Vec<usize>,
    hidden_activation: HiddenActivation,
    standardize: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    ensemble_size: Option<usize>,
    threads: usize,
    train: TrainConfig,
}

enum Failure {
    Usage(String),
    Lcn(LcnError),
    Verify(String),
}

impl From<LcnError> for Failure {
    fn from(e: LcnError) -> Self {
        Failure::Lcn(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn exit_code(f: &Failure) -> i32 {
    match f {
        Failure::Usage(_) => EXIT_USAGE,
        Failure::Verify(_) => EXIT_VERIFY,
        Failure::Lcn(e) => match e {
            LcnError::InvalidConfig(_)
            | LcnError::UnsupportedVariant { .. }
            | LcnError::DepthOverCap { .. }
            | LcnError::TableNeedsHardActivation(_) => EXIT_USAGE,
            LcnError::Divergence { .. } => EXIT_DIVERGENCE,
            _ => EXIT_DATA,
        },
    }
}

/// Entry point for the binary: real arguments and standard streams.
pub fn run() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with_io(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

/// Runs one command with explicit argument list and output streams.
pub fn run_with_io<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    let threads = cli.threads.max(1);
    let result = match cli.command {
        Command::Train(a) => cmd_train(a, false, threads, out, err),
        Command::TrainEnsemble(a) => cmd_train(a, true, threads, out, err),
        Command::Predict(a) => cmd_predict(a, threads, out),
        Command::Eval(a) => cmd_eval(a, threads, out),
        Command::Convert(a) => cmd_convert(a, out),
        Command::TreeToLcn(a) => cmd_tree_to_lcn(a, out),
        Command::ExportDot(a) => cmd_export_dot(a, out),
        Command::Verify(a) => cmd_verify(a, threads, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let msg = match &f {
                Failure::Usage(m) | Failure::Verify(m) => m.clone(),
                Failure::Lcn(e) => e.to_string(),
            };
            let _ = writeln!(err, "error: {msg}");
            exit_code(&f)
        }
    }
}

fn required<'a>(v: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    v.as_deref()
        .ok_or_else(|| Failure::Usage(format!("missing required flag {flag}")))
}

fn parse_hidden(text: &str) -> CliResult<Vec<usize>> {
    let t = text.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("none") {
        return Ok(Vec::new());
    }
    t.split(',')
        .map(|w| {
            w.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| Failure::Usage(format!("--head-hidden: `{w}` is not a positive width")))
        })
        .collect()
}

fn read_file_config(path: &Path) -> CliResult<FileConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| LcnError::io(path, e))?;
    toml::from_str(&text).map_err(|e| Failure::Usage(format!("--config {}: {e}", path.display())))
}

/// Checks that `path`'s parent directory exists before any work is done.
fn check_writable_parent(path: &Path, flag: &str) -> CliResult<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() && !p.is_dir() => Err(Failure::Usage(format!(
            "{flag}: directory {} does not exist",
            p.display()
        ))),
        _ => Ok(()),
    }
}

fn cmd_train(a: TrainArgs, ensemble: bool, threads: usize, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let data_path = required(&a.data, "--data")?.to_path_buf();
    let out_path = required(&a.out, "--out")?.to_path_buf();
    let file = match &a.config {
        Some(p) => read_file_config(p)?,
        None => FileConfig::default(),
    };
    if !ensemble && (a.ensemble_size.is_some() || file.ensemble_size.is_some()) {
        return Err(Failure::Usage("--ensemble-size applies to train-ensemble only".into()));
    }
    let split = match &a.split_column {
        Some(c) => SplitSpec::Column(c.clone()),
        None => SplitSpec::Ratios {
            train: a.split[0],
            validation: a.split[1],
            test: a.split[2],
            seed: a.seed.or(file.seed).unwrap_or(0),
        },
    };
    let options = CsvOptions {
        label_columns: a.labels.clone(),
        split,
        task: a.task.map(|t| match t {
            TaskArg::Classification => Task::Classification,
            TaskArg::Regression => Task::Regression,
        }),
    };
    let mut data = load_csv(&data_path, &options)?;

    // Task defaults, then the file, then flags.
    let (mut cfg, mut arch) = if ensemble {
        let base = match data.task {
            Task::Classification => ElcnConfig::classification(),
            Task::Regression => ElcnConfig::regression(),
        };
        (base.train, base.architecture)
    } else {
        let base = match data.task {
            Task::Classification => TrainConfig::classification(),
            Task::Regression => TrainConfig::regression(),
        };
        (base, Architecture::new(6, Variant::Lcn))
    };
    let mut ensemble_size = ensemble.then_some(ElcnConfig::classification().ensemble_size);
    let mut standardize = false;

    if let Some(v) = file.depth {
        arch.depth = v;
    }
    if let Some(v) = &file.variant {
        arch.variant = v.parse()?;
    }
    if let Some(v) = file.dropconnect {
        cfg.dropconnect_prob = v;
    }
    if let Some(v) = file.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = file.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = file.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = file.seed {
        cfg.seed = v;
    }
    if let Some(v) = &file.head_hidden {
        arch.head_hidden = v.clone();
    }
    if let Some(v) = file.hidden_activation {
        arch.hidden_activation = v;
    }
    if let Some(v) = file.lr_decay_every {
        cfg.lr_decay_every = v;
    }
    if let Some(v) = file.lr_decay_factor {
        cfg.lr_decay_factor = v;
    }
    if file.anneal == Some(false) {
        cfg.anneal = Anneal::Constant { lambda: 1.0 };
    }
    if let Some(v) = file.checkpoint {
        cfg.checkpoint = v;
    }
    if let Some(v) = file.standardize {
        standardize = v;
    }
    if let Some(v) = file.ensemble_size {
        ensemble_size = Some(v);
    }

    if let Some(v) = a.depth {
        arch.depth = v as usize;
    }
    if let Some(v) = a.variant {
        arch.variant = v;
    }
    if let Some(v) = a.dropconnect {
        cfg.dropconnect_prob = v;
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = &a.head_hidden {
        arch.head_hidden = parse_hidden(v)?;
    }
    if let Some(v) = a.hidden_activation {
        arch.hidden_activation = match v {
            HiddenArg::Relu => HiddenActivation::Relu,
            HiddenArg::Identity => HiddenActivation::Identity,
        };
    }
    if a.no_anneal {
        cfg.anneal = Anneal::Constant { lambda: 1.0 };
    }
    if a.standardize {
        standardize = true;
    }
    if let Some(v) = a.ensemble_size {
        ensemble_size = Some(v);
    }

    if !(2..=20).contains(&arch.depth) {
        return Err(Failure::Usage(format!("--depth must lie in 2..=20, got {}", arch.depth)));
    }
    cfg.validate()?;
    let elcn = ensemble_size.map(|e| ElcnConfig {
        architecture: arch.clone(),
        train: cfg.clone(),
        ensemble_size: e,
    });
    if let Some(e) = &elcn {
        e.validate()?;
    }
    if !ensemble {
        check_writable_parent(&out_path, "--out")?;
    }
    let metrics_path = a.metrics.clone().unwrap_or_else(|| {
        if ensemble {
            out_path.join("metrics.csv")
        } else {
            out_path.with_extension("metrics.csv")
        }
    });
    if a.metrics.is_some() {
        check_writable_parent(&metrics_path, "--metrics")?;
    }

    let resolved = Resolved {
        command: if ensemble { "train-ensemble" } else { "train" },
        data: data_path.display().to_string(),
        labels: a.labels.clone(),
        task: data.task,
        variant: arch.variant,
        depth: arch.depth,
        head_hidden: arch.head_hidden.clone(),
        hidden_activation: arch.hidden_activation,
        standardize,
        ensemble_size,
        threads,
        train: cfg.clone(),
    };
    let echo = toml::to_string(&resolved).map_err(|e| Failure::Usage(e.to_string()))?;
    let _ = writeln!(err, "# resolved configuration\n{echo}");

    let standardizer = standardize.then(|| data.fit_standardizer());
    if let Some(s) = &standardizer {
        s.apply_all(&mut data.features);
    }
    let meta = ModelMeta {
        task: data.task,
        feature_names: data.feature_names.clone(),
        label_names: data.label_names.clone(),
        standardizer,
    };
    let train_set = data.samples(Split::Train, None);
    let val_set = data.samples(Split::Validation, None);
    let validation = (!val_set.is_empty()).then_some(&val_set);

    if let Some(ecfg) = elcn {
        let mut writer = EnsembleWriter::create(&out_path, meta, ecfg.clone())?;
        let reports = elcn_train_with_sink(&train_set, validation, &ecfg, |s, p| writer.write_component(s, p))?;
        let manifest = writer.finish()?;
        let mut w = csv::Writer::from_path(&metrics_path).map_err(|e| LcnError::data(Some(&metrics_path), e.to_string()))?;
        let csv_err = |e: csv::Error| LcnError::data(Some(&metrics_path), e.to_string());
        w.write_record(["stage", "epoch", "lambda", "lr", "train_loss", "val_metric"]).map_err(csv_err)?;
        for r in &reports {
            for e in &r.log {
                w.write_record([
                    r.stage.to_string(),
                    e.epoch.to_string(),
                    e.lambda.to_string(),
                    e.lr.to_string(),
                    e.train_loss.to_string(),
                    e.val_metric.map(|v| v.to_string()).unwrap_or_default(),
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush().map_err(|e| LcnError::io(&metrics_path, e))?;
        for r in &reports {
            let _ = writeln!(
                out,
                "stage {}: train loss {:.6} -> {:.6} (epoch {})",
                r.stage, r.initial_train_loss, r.final_train_loss, r.selected_epoch
            );
        }
        let _ = writeln!(out, "wrote {}", manifest.display());
    } else {
        let params = LcnParameters::init_seeded(&arch, data.input_dim(), data.label_names.len(), cfg.seed)?;
        let outcome = train(params, &train_set, validation, &cfg)?;
        let file = ModelFile::new(meta, Some(cfg.clone()), outcome.params);
        save_model(&out_path, &file)?;
        let f = std::fs::File::create(&metrics_path).map_err(|e| LcnError::io(&metrics_path, e))?;
        write_log_csv(&outcome.log, f).map_err(|e| LcnError::io(&metrics_path, e))?;
        let _ = writeln!(
            out,
            "train loss {:.6} -> {:.6}",
            outcome.initial_train_loss, outcome.final_train_loss
        );
        if let Some(v) = outcome.log.last().and_then(|r| r.val_metric) {
            let name = if data.task == Task::Classification { "AUC" } else { "RMSE" };
            let _ = writeln!(out, "validation {name} {v:.6}");
        }
        let _ = writeln!(out, "wrote {}", out_path.display());
    }
    Ok(())
}

fn predictions(model: &Predictor, rows: &[Vec<f64>], threads: usize) -> CliResult<Vec<Vec<f64>>> {
    Ok(par_map_rows(rows, threads, |x| model.predict(x))?)
}

fn cmd_predict(a: PredictArgs, threads: usize, out: &mut dyn Write) -> CliResult<()> {
    let model_path = required(&a.model, "--model")?;
    let data_path = required(&a.data, "--data")?;
    if let Some(p) = &a.out {
        check_writable_parent(p, "--out")?;
    }
    let model = Predictor::load(model_path)?;
    let rows = load_features(data_path, &model.meta().feature_names)?;
    let preds = predictions(&model, &rows, threads)?;
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let csv_err = |e: csv::Error| LcnError::data(None, e.to_string());
        w.write_record(&model.meta().label_names).map_err(csv_err)?;
        for p in &preds {
            w.write_record(p.iter().map(|v| v.to_string())).map_err(csv_err)?;
        }
        w.flush().map_err(|e| LcnError::data(None, e.to_string()))?;
    }
    match &a.out {
        Some(p) => std::fs::write(p, &buf).map_err(|e| LcnError::io(p, e))?,
        None => {
            let _ = out.write_all(&buf);
        }
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs, threads: usize, out: &mut dyn Write) -> CliResult<()> {
    let model_path = required(&a.model, "--model")?;
    let data_path = required(&a.data, "--data")?;
    let model = Predictor::load(model_path)?;
    let meta = model.meta().clone();
    let labels = if a.labels.is_empty() {
        meta.label_names.clone()
    } else {
        a.labels.clone()
    };
    if labels.len() != meta.label_names.len() {
        return Err(Failure::Usage(format!(
            "--labels: model has {} outputs, {} labels given",
            meta.label_names.len(),
            labels.len()
        )));
    }
    let keep: Option<Vec<bool>> = match (&a.subset, &a.split_column) {
        (Some(s), Some(c)) => {
            let want = Split::parse(s).ok_or_else(|| Failure::Usage(format!("--subset: unknown split `{s}`")))?;
            Some(load_split_tags(data_path, c)?.into_iter().map(|t| t == want).collect())
        }
        (Some(_), None) => return Err(Failure::Usage("--subset needs --split-column".into())),
        _ => None,
    };
    let mut rows = load_features(data_path, &meta.feature_names)?;
    let mut targets = load_features(data_path, &labels)?;
    if let Some(k) = &keep {
        let mut it = k.iter();
        rows.retain(|_| *it.next().expect("same length"));
        let mut it = k.iter();
        targets.retain(|_| *it.next().expect("same length"));
    }
    if rows.is_empty() {
        return Err(LcnError::data(Some(data_path), "no rows to evaluate").into());
    }
    let preds = predictions(&model, &rows, threads)?;
    let metric = if meta.task == Task::Classification { "auc" } else { "rmse" };
    let _ = writeln!(out, "label,metric,value");
    let mut values = Vec::new();
    for (l, name) in labels.iter().enumerate() {
        let s: Vec<f64> = preds.iter().map(|p| p[l]).collect();
        let y: Vec<f64> = targets.iter().map(|t| t[l]).collect();
        let v = match meta.task {
            Task::Classification => match auc(&s, &y) {
                Ok(v) => Some(v),
                Err(LcnError::UndefinedMetric(_)) => None,
                Err(e) => return Err(LcnError::data(Some(data_path), format!("label `{name}`: {e}")).into()),
            },
            Task::Regression => Some(rmse(&s, &y)),
        };
        match v {
            Some(v) => {
                values.push(v);
                let _ = writeln!(out, "{name},{metric},{v}");
            }
            None => {
                let _ = writeln!(out, "{name},{metric},undefined");
            }
        }
    }
    if values.len() > 1 {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let _ = writeln!(out, "mean,{metric},{mean}");
    }
    Ok(())
}

fn cmd_convert(a: ConvertArgs, out: &mut dyn Write) -> CliResult<()> {
    let model_path = required(&a.model, "--model")?;
    let out_path = required(&a.out, "--out")?;
    check_writable_parent(out_path, "--out")?;
    let m = load_model(model_path)?;
    let tree = lcn_to_tree_with_cap(&m.params, a.cap)?;
    let _ = writeln!(
        out,
        "tree depth {}, {} internal nodes, {} leaves",
        tree.depth(),
        tree.nodes().len(),
        1usize << tree.depth()
    );
    save_tree(out_path, &TreeFile::new(m.meta, tree))?;
    Ok(())
}

fn cmd_tree_to_lcn(a: TreeToLcnArgs, out: &mut dyn Write) -> CliResult<()> {
    let tree_path = required(&a.tree, "--tree")?;
    let out_path = required(&a.out, "--out")?;
    check_writable_parent(out_path, "--out")?;
    let t = load_tree(tree_path)?;
    let params = tree_to_canonical_lcn(&t.tree)?;
    let _ = writeln!(out, "network depth {} with independent neurons", params.depth());
    save_model(out_path, &ModelFile::new(t.meta, None, params))?;
    Ok(())
}

fn cmd_export_dot(a: ExportDotArgs, out: &mut dyn Write) -> CliResult<()> {
    if let Some(p) = &a.out {
        check_writable_parent(p, "--out")?;
    }
    let (meta, tree) = match (&a.tree, &a.model) {
        (Some(t), _) => {
            let f = load_tree(t)?;
            (f.meta, f.tree)
        }
        (None, Some(m)) => {
            let f = load_model(m)?;
            let tree = lcn_to_tree_with_cap(&f.params, crate::tree::DEFAULT_DEPTH_CAP)?;
            (f.meta, tree)
        }
        (None, None) => return Err(Failure::Usage("one of --tree or --model is required".into())),
    };
    let leaf_label = match a.leaf_label {
        Some(LeafArg::Values) => LeafLabel::Values,
        Some(LeafArg::Rank) => LeafLabel::Rank,
        None if meta.task == Task::Classification => LeafLabel::Rank,
        None => LeafLabel::Values,
    };
    let opts = DotOptions {
        feature_names: Some(meta.feature_names.clone()),
        leaf_label,
    };
    let dot = export_dot(&tree, a.top_k as usize, &opts);
    match &a.out {
        Some(p) => std::fs::write(p, dot).map_err(|e| LcnError::io(p, e))?,
        None => {
            let _ = out.write_all(dot.as_bytes());
        }
    }
    Ok(())
}

fn cmd_verify(a: VerifyArgs, threads: usize, out: &mut dyn Write) -> CliResult<()> {
    if let Some(p) = &a.out {
        check_writable_parent(p, "--out")?;
    }
    let names: Vec<String> = if a.suites.is_empty() {
        SUITES.iter().map(|s| s.to_string()).collect()
    } else {
        a.suites.clone()
    };
    let mut reports: Vec<OracleReport> = Vec::new();
    for n in &names {
        reports.push(run_suite(n, a.seed, a.scale)?);
    }
    if let Some(model_path) = &a.model {
        let data_path = a.data.as_deref().expect("clap enforces --data");
        let m = load_model(model_path)?;
        let raw = load_features(data_path, &m.meta.feature_names)?;
        let rows: Vec<Vec<f64>> = raw.iter().map(|x| m.meta.prepare(x)).collect();
        let report = match &a.tree {
            None => check_equivalence(&m.params, &rows, a.seed)?,
            Some(tp) => {
                let t = load_tree(tp)?;
                let net = Predictor::Network(m.clone());
                let tree = Predictor::Tree(t);
                let a_preds = predictions(&net, &raw, threads)?;
                let b_preds = predictions(&tree, &raw, threads)?;
                let mut r = OracleReport::new("model_vs_tree_file", 1e-8);
                for (n, (p, q)) in a_preds.iter().zip(&b_preds).enumerate() {
                    let gap = p.iter().zip(q).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
                    r.record(a.seed, gap, || format!("row {}", n + 1));
                }
                r
            }
        };
        reports.push(report);
    }
    for r in &reports {
        let _ = writeln!(
            out,
            "{} {} cases={} skipped={} max_deviation={:e} tolerance={:e}",
            if r.passed() { "PASS" } else { "FAIL" },
            r.suite,
            r.cases,
            r.skipped,
            r.max_deviation,
            r.tolerance
        );
        for f in &r.failures {
            let _ = writeln!(out, "  seed {}: {}", f.seed, f.message);
        }
    }
    if let Some(p) = &a.out {
        crate::io::write_json(p, &reports)?;
    }
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed()).map(|r| r.suite.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verify(format!("verification failed: {}", failed.join(", "))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let argv = std::iter::once("lcn").chain(args.iter().copied());
        let code = run_with_io(argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn missing_data_is_a_usage_error() {
        let (code, _, err) = run(&["train", "--labels", "y", "--out", "m.json"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("--data"), "{err}");
    }

    #[test]
    fn depth_range_is_enforced() {
        let (code, _, err) = run(&["train", "--data", "x.csv", "--labels", "y", "--out", "m.json", "--depth", "21"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("--depth"), "{err}");
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = run(&["--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("train-ensemble") && out.contains("export-dot"));
    }

    #[test]
    fn hidden_widths_parse() {
        assert_eq!(parse_hidden("none").ok(), Some(vec![]));
        assert_eq!(parse_hidden("256, 256").ok(), Some(vec![256, 256]));
        assert!(parse_hidden("0").is_err());
    }

    #[test]
    fn single_suite_runs() {
        let (code, out, _) = run(&["verify", "--suite", "auc", "--seed", "3"]);
        assert_eq!(code, EXIT_OK, "{out}");
        assert!(out.starts_with("PASS auc"));
    }
}
