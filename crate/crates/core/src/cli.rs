//! Command-line front end.
//!
//! Exit status: 0 on success, 1 for usage errors (bad flags, missing input
//! paths), 2 for errors raised while reading or modelling data.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::curvedata::{
    load_cmapss, load_long_csv, minmax_normalize, piecewise_rul_label, read_curves_csv, sparsify,
    write_err, write_labels_csv, write_long_csv, CmapssOptions, FunctionalDataset, SparseCurve, Task,
};
use crate::error::{Error, Result};
use crate::eval::{crossvalidate, write_cv_csv, CvMode, CvPlan};
use crate::fpca::{fit_fpca, fit_mfpca, ComponentSelection, FpcaOptions, ScoreMatrix};
use crate::funcnet::{count_params, Architecture, ModelKind, TrainConfig};
use crate::grid::TimeGrid;
use crate::interp::{gp_interp, interp_rmse, pace_interp, spline_interp, GpConfig};
use crate::persist::{self, write_atomic};
use crate::pipeline::{Pipeline, PipelineConfig, ScoreMode, Scorer};
use crate::rng::sha256_hex;
use crate::simgen::{generate, write_scores_csv, write_truth_csv, KlConfig};

#[derive(Parser, Debug)]
#[command(name = "funcnet", version, about = "Sparse functional MLPs on irregularly sampled curves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate Karhunen–Loève synthetic curves.
    Simulate(SimulateArgs),
    /// Fit FPCA (or MFPCA) models and export mean, eigenfunctions and scores.
    Fpca(FpcaArgs),
    /// Score curves with a fitted FPCA model.
    Scores(ScoresArgs),
    /// Fit the full pipeline and save it.
    Train(TrainArgs),
    /// Predict with a saved pipeline.
    Predict(PredictArgs),
    /// Cross-validate the pipeline.
    Evaluate(EvaluateArgs),
    /// Spline, GP and PACE reconstructions on the grid.
    Interpolate(InterpolateArgs),
    /// Randomly thin every curve.
    Sparsify(SparsifyArgs),
    /// Unknown-parameter counts of recurrent nets and functional MLPs.
    CountParams(CountParamsArgs),
    /// Piecewise RUL labels, for one value or a whole C-MAPSS file.
    LabelRul(LabelRulArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
struct GridArgs {
    #[arg(long, default_value_t = 0.0)]
    t0: f64,
    #[arg(long, default_value_t = 1.0)]
    t1: f64,
    /// Number of grid points.
    #[arg(long = "grid-points", default_value_t = 101)]
    grid_points: usize,
}

impl GridArgs {
    fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.t0, self.t1, self.grid_points)
    }
}

#[derive(Args, Debug, Clone, Serialize)]
struct FpcaFlags {
    /// Fraction-of-variance cutoff for the number of components.
    #[arg(long, default_value_t = 0.80)]
    fve: f64,
    /// Fixed number of components per feature (overrides --fve).
    #[arg(long)]
    components: Option<usize>,
    /// Feed joint MFPCA scores to the network instead of per-feature scores.
    #[arg(long, value_enum, default_value_t = ScoreModeArg::Univariate)]
    score_mode: ScoreModeArg,
    /// Fraction-of-variance cutoff for the joint components.
    #[arg(long, default_value_t = 0.80)]
    joint_fve: f64,
}

impl FpcaFlags {
    fn options(&self) -> FpcaOptions {
        FpcaOptions {
            selection: match self.components {
                Some(p) => ComponentSelection::Fixed(p),
                None => ComponentSelection::Fve(self.fve),
            },
            ..FpcaOptions::default()
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
enum ScoreModeArg {
    Univariate,
    Mfpca,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
enum TaskArg {
    Regression,
    Classification,
}

#[derive(Args, Debug, Clone, Serialize)]
struct NetFlags {
    /// Functional neurons in the first layer.
    #[arg(long, default_value_t = 4)]
    neurons: usize,
    /// Hidden dense layer sizes, comma separated; empty for none.
    #[arg(long, value_delimiter = ',', default_value = "2")]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 2000)]
    epochs: usize,
    #[arg(long = "lr", default_value_t = 0.5)]
    learning_rate: f64,
    /// Mini-batch size; full batch when omitted.
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep regression responses on their original scale during training.
    #[arg(long)]
    raw_response: bool,
}

#[derive(Args, Debug, Clone, Serialize)]
struct DataFlags {
    /// Long-format observations (subject,feature,time,value), or a directory
    /// holding `data.csv` and `labels.csv`.
    #[arg(long)]
    data: PathBuf,
    /// Labels (subject,label); defaults to `labels.csv` beside the data.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Override the task inferred from the labels.
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    /// Two groups with means ±sin(4πt), λ = (0.1, 0.045, 0.01, 0.001), σ = 0.3, N = 300, M = 10.
    #[arg(long = "paper-5-2-1", visible_alias = "two-group")]
    preset: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    n_per_group: Option<usize>,
    #[arg(long)]
    m_per_curve: Option<usize>,
    #[arg(long)]
    noise_sd: Option<f64>,
    /// Eigenvalues, comma separated.
    #[arg(long, value_delimiter = ',')]
    eigenvalues: Option<Vec<f64>>,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct FpcaArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    fpca: FpcaFlags,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct ScoresArgs {
    /// Model from `fpca` (models.json) or a trained pipeline.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    #[command(flatten)]
    data: DataFlags,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    fpca: FpcaFlags,
    #[command(flatten)]
    net: NetFlags,
    /// Output model file.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct EvaluateArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    /// C-MAPSS training file instead of long CSV input.
    #[arg(long, conflicts_with_all = ["data", "labels"])]
    cmapss: Option<PathBuf>,
    #[arg(long, default_value_t = 31)]
    window: usize,
    #[arg(long, default_value_t = 130.0)]
    cap: f64,
    /// Held-out fraction.
    #[arg(long, group = "cv")]
    holdout: Option<f64>,
    #[arg(long, group = "cv")]
    kfold: Option<usize>,
    #[arg(long, group = "cv")]
    loo: bool,
    /// Seed of the subject split.
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    /// Fit FPCA once on all subjects instead of per training fold.
    #[arg(long)]
    no_refit: bool,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    fpca: FpcaFlags,
    #[command(flatten)]
    net: NetFlags,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct InterpolateArgs {
    #[arg(long)]
    data: PathBuf,
    /// True curves on the grid (subject,time,value) for RMSE.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[command(flatten)]
    grid: GridArgs,
    /// Fixed GP hyperparameters `length,signal,noise`; searched per curve when omitted.
    #[arg(long, value_delimiter = ',')]
    gp: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.80)]
    fve: f64,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct SparsifyArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Fraction of observations kept per curve.
    #[arg(long)]
    keep: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Always keep each curve's last observation.
    #[arg(long)]
    keep_last: bool,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
enum KindArg {
    Rnn,
    Lstm,
    Gru,
    Fmlp,
}

#[derive(Args, Debug, Serialize)]
struct CountParamsArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Hidden units (recurrent) or functional neurons (FMLP).
    #[arg(long)]
    hidden: usize,
    #[arg(long)]
    features: usize,
    /// Basis coefficients per neuron and feature (FMLP).
    #[arg(long, default_value_t = 2)]
    q: usize,
}

#[derive(Args, Debug, Serialize)]
struct LabelRulArgs {
    /// Linear RUL to cap.
    #[arg(long, required_unless_present = "cmapss")]
    rul: Option<f64>,
    #[arg(long, default_value_t = 130.0)]
    cap: f64,
    /// Window a C-MAPSS training file and write long CSV + labels.
    #[arg(long)]
    cmapss: Option<PathBuf>,
    #[arg(long, default_value_t = 31)]
    window: usize,
    /// Output directory (with --cmapss).
    #[arg(short, long, requires = "cmapss")]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type CliResult = std::result::Result<(), Failure>;

/// Parse `argv` (including the program name) and run; returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    configure_threads();
    let args: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match dispatch(cli.command, &args) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn configure_threads() {
    if let Ok(v) = std::env::var("FUNCNET_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(n) => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            Err(_) => log::warn!("ignoring FUNCNET_THREADS={v}: not a number"),
        }
    }
}

fn require_file(path: &Path) -> CliResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("input file {} does not exist", path.display())))
    }
}

fn ensure_dir(path: &Path) -> CliResult {
    fs::create_dir_all(path).map_err(|e| Failure::Data(Error::io(path, e)))
}

fn ensure_parent(path: &Path) -> CliResult {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => ensure_dir(p),
        _ => Ok(()),
    }
}

/// Render CSV into memory, then write it atomically.
fn write_csv_atomic(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    write_atomic(path, &buf)
}

fn write_rows(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    write_csv_atomic(path, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        let err = write_err(path);
        w.write_record(header).map_err(&err)?;
        for r in rows {
            w.write_record(&r).map_err(&err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    })
}

fn write_manifest(path: &Path, args: &[String], seed: Option<u64>, config: &impl Serialize, outputs: &[&Path]) -> Result<()> {
    let config_json = serde_json::to_string(config)?;
    let manifest = json!({
        "tool": "funcnet",
        "version": env!("CARGO_PKG_VERSION"),
        "format_version": persist::FORMAT_VERSION,
        "argv": args,
        "seed": seed,
        "config": serde_json::from_str::<serde_json::Value>(&config_json)?,
        "config_sha256": sha256_hex(config_json.as_bytes()),
        "outputs": outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    });
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn manifest_beside(file: &Path) -> PathBuf {
    let mut name = file.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    file.with_file_name(name)
}

fn task_of(t: Option<TaskArg>) -> Option<Task> {
    t.map(|t| match t {
        TaskArg::Regression => Task::Regression,
        TaskArg::Classification => Task::BinaryClassification,
    })
}

fn pipeline_config(fpca: &FpcaFlags, net: &NetFlags) -> PipelineConfig {
    PipelineConfig {
        fpca: fpca.options(),
        score_mode: match fpca.score_mode {
            ScoreModeArg::Univariate => ScoreMode::Univariate,
            ScoreModeArg::Mfpca => ScoreMode::Mfpca,
        },
        joint_selection: ComponentSelection::Fve(fpca.joint_fve),
        arch: Architecture {
            functional_neurons: net.neurons,
            hidden: net.hidden.clone(),
        },
        train: TrainConfig {
            learning_rate: net.learning_rate,
            epochs: net.epochs,
            batch_size: net.batch_size,
            seed: net.seed,
            ..TrainConfig::default()
        },
        standardize_response: !net.raw_response,
    }
}

/// Data and label paths, accepting a `simulate`-style output directory.
fn resolve_inputs(data: &Path, labels: Option<&Path>) -> (PathBuf, PathBuf) {
    let (data, dir) = if data.is_dir() {
        (data.join("data.csv"), data.to_path_buf())
    } else {
        let dir = data.parent().map(Path::to_path_buf).unwrap_or_default();
        (data.to_path_buf(), dir)
    };
    let labels = labels.map_or_else(|| dir.join("labels.csv"), Path::to_path_buf);
    (data, labels)
}

fn load_dataset(d: &DataFlags, grid: &GridArgs) -> std::result::Result<FunctionalDataset, Failure> {
    let (data, labels) = resolve_inputs(&d.data, d.labels.as_deref());
    require_file(&data)?;
    require_file(&labels)?;
    Ok(load_long_csv(&data, &labels, grid.grid()?, task_of(d.task))?)
}

fn dispatch(cmd: Command, args: &[String]) -> CliResult {
    match cmd {
        Command::Simulate(a) => simulate(a, args),
        Command::Fpca(a) => fpca(a, args),
        Command::Scores(a) => scores(a, args),
        Command::Train(a) => train_cmd(a, args),
        Command::Predict(a) => predict(a, args),
        Command::Evaluate(a) => evaluate(a, args),
        Command::Interpolate(a) => interpolate(a, args),
        Command::Sparsify(a) => sparsify_cmd(a, args),
        Command::CountParams(a) => count(a),
        Command::LabelRul(a) => label_rul(a, args),
    }
}

fn simulate(a: SimulateArgs, args: &[String]) -> CliResult {
    let mut cfg = KlConfig::two_group(a.seed);
    if !a.preset {
        log::info!("no preset given; starting from the two-group defaults");
    }
    if let Some(n) = a.n_per_group {
        cfg.n_per_group = n;
    }
    if let Some(m) = a.m_per_curve {
        cfg.m_per_curve = m;
    }
    if let Some(s) = a.noise_sd {
        cfg.noise_sd = s;
    }
    if let Some(l) = a.eigenvalues.clone() {
        cfg.eigenvalues = l;
    }
    cfg.validate()?;
    ensure_dir(&a.out)?;
    let sim = generate(&cfg)?;
    let data = a.out.join("data.csv");
    let labels = a.out.join("labels.csv");
    let truth = a.out.join("truth.csv");
    let truth_scores = a.out.join("truth_scores.csv");
    write_csv_atomic(&data, |b| write_long_csv(&sim.dataset, b, &data))?;
    write_csv_atomic(&labels, |b| write_labels_csv(&sim.dataset, b, &labels))?;
    write_csv_atomic(&truth, |b| write_truth_csv(&sim, b, &truth))?;
    write_csv_atomic(&truth_scores, |b| write_scores_csv(&sim, b, &truth_scores))?;
    write_manifest(
        &a.out.join("manifest.json"),
        args,
        Some(a.seed),
        &cfg,
        &[&data, &labels, &truth, &truth_scores],
    )?;
    println!(
        "wrote {} subjects ({} observations) to {}",
        sim.dataset.n_subjects(),
        sim.dataset.total_observations(),
        a.out.display()
    );
    Ok(())
}

fn score_rows(ids: &[String], inputs: &[Vec<f64>]) -> (Vec<String>, Vec<Vec<String>>) {
    let p = inputs.first().map_or(0, Vec::len);
    let mut header = vec!["subject".to_string()];
    header.extend((1..=p).map(|k| format!("score{k}")));
    let rows = ids
        .iter()
        .zip(inputs)
        .map(|(id, x)| std::iter::once(id.clone()).chain(x.iter().map(f64::to_string)).collect())
        .collect();
    (header, rows)
}

fn fpca(a: FpcaArgs, args: &[String]) -> CliResult {
    require_file(&a.data)?;
    let grid = a.grid.grid()?;
    let table = read_curves_csv(&a.data, &grid)?;
    if table.rejected_rows > 0 {
        log::warn!("{} rows outside [{}, {}] were dropped", table.rejected_rows, grid.t0(), grid.t1());
    }
    let ids: Vec<String> = table.subjects.iter().map(|(id, _)| id.clone()).collect();
    let opts = a.fpca.options();
    let mut models = Vec::new();
    let mut matrices: Vec<ScoreMatrix> = Vec::new();
    for (r, name) in table.feature_names.iter().enumerate() {
        let curves: Vec<&SparseCurve> = table.subjects.iter().map(|(_, c)| &c[r]).collect();
        let (m, s, report) = fit_fpca(name, &curves, &ids, &grid, &opts)?;
        for w in report.warnings {
            log::warn!("{name}: {w}");
        }
        models.push(m);
        matrices.push(s);
    }
    let scorer = match a.fpca.score_mode {
        ScoreModeArg::Univariate => Scorer::Univariate { models },
        ScoreModeArg::Mfpca => Scorer::Mfpca {
            model: fit_mfpca(models, &matrices, ComponentSelection::Fve(a.fpca.joint_fve))?,
        },
    };
    ensure_dir(&a.out)?;
    let model_path = a.out.join("models.json");
    scorer.save(&model_path)?;

    let inputs = table
        .subjects
        .iter()
        .map(|(_, c)| scorer.inputs(c))
        .collect::<Result<Vec<_>>>()?;
    let scores_path = a.out.join("scores.csv");
    let (h, rows) = score_rows(&ids, &inputs);
    write_rows(&scores_path, &h, rows)?;

    let mean_path = a.out.join("mean.csv");
    let eig_path = a.out.join("eigenfunctions.csv");
    let val_path = a.out.join("eigenvalues.csv");
    let ms = scorer.feature_models();
    write_rows(
        &mean_path,
        &["feature", "time", "value"].map(String::from),
        ms.iter().flat_map(|m| {
            m.grid
                .points()
                .iter()
                .zip(&m.mean)
                .map(|(t, v)| vec![m.feature.clone(), t.to_string(), v.to_string()])
                .collect::<Vec<_>>()
        }),
    )?;
    write_rows(
        &eig_path,
        &["feature", "component", "time", "value"].map(String::from),
        ms.iter().flat_map(|m| {
            m.basis()
                .iter()
                .enumerate()
                .flat_map(|(p, phi)| {
                    m.grid
                        .points()
                        .iter()
                        .zip(phi)
                        .map(move |(t, v)| vec![m.feature.clone(), (p + 1).to_string(), t.to_string(), v.to_string()])
                })
                .collect::<Vec<_>>()
        }),
    )?;
    write_rows(
        &val_path,
        &["feature", "component", "eigenvalue", "retained"].map(String::from),
        ms.iter().flat_map(|m| {
            m.eig
                .eigenvalues
                .iter()
                .enumerate()
                .map(|(p, l)| {
                    vec![
                        m.feature.clone(),
                        (p + 1).to_string(),
                        l.to_string(),
                        (p < m.n_components).to_string(),
                    ]
                })
                .collect::<Vec<_>>()
        }),
    )?;
    write_manifest(
        &a.out.join("manifest.json"),
        args,
        None,
        &json!({ "grid": &a.grid, "fpca": &a.fpca }),
        &[&model_path, &scores_path, &mean_path, &eig_path, &val_path],
    )?;
    for m in ms {
        println!(
            "{}: {} components, noise variance {:.4e}",
            m.feature, m.n_components, m.noise_var
        );
    }
    Ok(())
}

fn scores(a: ScoresArgs, args: &[String]) -> CliResult {
    require_file(&a.model)?;
    require_file(&a.data)?;
    let scorer = Scorer::load(&a.model)?;
    let grid = scorer.feature_models()[0].grid.clone();
    let table = read_curves_csv(&a.data, &grid)?;
    let names: Vec<String> = scorer.feature_models().iter().map(|m| m.feature.clone()).collect();
    if table.feature_names != names {
        return Err(Failure::Data(Error::invalid(format!(
            "data features {:?} do not match the model's {:?}",
            table.feature_names, names
        ))));
    }
    let ids: Vec<String> = table.subjects.iter().map(|(id, _)| id.clone()).collect();
    let inputs = table
        .subjects
        .iter()
        .map(|(_, c)| scorer.inputs(c))
        .collect::<Result<Vec<_>>>()?;
    ensure_parent(&a.out)?;
    let (h, rows) = score_rows(&ids, &inputs);
    write_rows(&a.out, &h, rows)?;
    write_manifest(&manifest_beside(&a.out), args, None, &json!({ "model": &a.model }), &[&a.out])?;
    Ok(())
}

fn train_cmd(a: TrainArgs, args: &[String]) -> CliResult {
    let ds = load_dataset(&a.data, &a.grid)?;
    let cfg = pipeline_config(&a.fpca, &a.net);
    let p = Pipeline::fit(&ds, &cfg)?;
    ensure_parent(&a.out)?;
    p.save(&a.out)?;
    write_manifest(&manifest_beside(&a.out), args, Some(cfg.train.seed), &cfg, &[&a.out])?;
    println!(
        "trained on {} subjects; final training loss {:.6}",
        ds.n_subjects(),
        p.loss_history.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn predict(a: PredictArgs, args: &[String]) -> CliResult {
    require_file(&a.model)?;
    require_file(&a.data)?;
    let p = Pipeline::load(&a.model)?;
    let grid = p.scorer.feature_models()[0].grid.clone();
    let table = read_curves_csv(&a.data, &grid)?;
    if table.feature_names != p.feature_names {
        return Err(Failure::Data(Error::invalid(format!(
            "data features {:?} do not match the model's {:?}",
            table.feature_names, p.feature_names
        ))));
    }
    let mut rows = Vec::new();
    for (id, curves) in &table.subjects {
        let pred = p.predict_curves(curves)?;
        rows.push(vec![
            id.clone(),
            pred.value.to_string(),
            pred.label.map(|l| l.to_string()).unwrap_or_default(),
        ]);
    }
    ensure_parent(&a.out)?;
    write_rows(&a.out, &["subject", "prediction", "label"].map(String::from), rows)?;
    write_manifest(&manifest_beside(&a.out), args, None, &json!({ "model": &a.model }), &[&a.out])?;
    Ok(())
}

fn evaluate(a: EvaluateArgs, args: &[String]) -> CliResult {
    let mode = match (a.holdout, a.kfold, a.loo) {
        (Some(f), None, false) => CvMode::Holdout {
            fraction: f,
            seed: a.split_seed,
        },
        (None, Some(k), false) => CvMode::KFold { k, seed: a.split_seed },
        (None, None, true) => CvMode::LeaveOneOut,
        (None, None, false) => CvMode::Holdout {
            fraction: 0.2,
            seed: a.split_seed,
        },
        _ => return Err(Failure::Usage("choose one of --holdout, --kfold, --loo".into())),
    };
    let ds = if let Some(path) = &a.cmapss {
        require_file(path)?;
        let opts = CmapssOptions {
            window_len: a.window,
            cap: a.cap,
            grid_points: a.grid.grid_points,
            ..CmapssOptions::default()
        };
        let (ds, skipped) = load_cmapss(path, &opts)?;
        if skipped > 0 {
            log::warn!("{skipped} units shorter than the window were skipped");
        }
        minmax_normalize(&ds)?.0
    } else {
        let Some(data) = a.data.clone() else {
            return Err(Failure::Usage("evaluate needs --data or --cmapss".into()));
        };
        let labels = a.labels.clone();
        load_dataset(
            &DataFlags {
                data,
                labels,
                task: a.task,
            },
            &a.grid,
        )?
    };
    let cfg = pipeline_config(&a.fpca, &a.net);
    let plan = CvPlan {
        mode,
        refit_fpca_per_fold: !a.no_refit,
    };
    let report = crossvalidate(&ds, &cfg, plan)?;
    ensure_dir(&a.out)?;
    let csv_path = a.out.join("cv.csv");
    let summary_path = a.out.join("summary.json");
    write_csv_atomic(&csv_path, |b| write_cv_csv(&report, b, &csv_path))?;
    let agg = &report.aggregate;
    let headline = format!("{}: {:.4} ± {:.4} over {} folds", agg.metric, agg.mean, agg.sd, agg.n_folds);
    let summary = json!({
        "summary": headline,
        "metric": agg.metric,
        "mean": agg.mean,
        "sd": agg.sd,
        "n_folds": agg.n_folds,
        "report": &report,
    });
    let mut text = serde_json::to_string_pretty(&summary).map_err(Error::from)?;
    text.push('\n');
    write_atomic(&summary_path, text.as_bytes())?;
    write_manifest(
        &a.out.join("manifest.json"),
        args,
        Some(cfg.train.seed),
        &json!({ "pipeline": &cfg, "plan": &plan }),
        &[&csv_path, &summary_path],
    )?;
    println!("{headline}");
    if let Some(m) = report.pooled {
        if let Some(c) = m.confusion {
            println!(
                "pooled: accuracy {:.4} (tp {}, fp {}, fn {}, tn {})",
                m.primary(),
                c.tp,
                c.fp,
                c.fn_,
                c.tn
            );
        } else {
            println!("pooled: rmse {:.4}", m.primary());
        }
    }
    Ok(())
}

fn read_truth(path: &Path, ids: &[String], grid: &TimeGrid) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    let mut map: std::collections::HashMap<String, Vec<(f64, f64)>> = std::collections::HashMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line + 2,
            message: e.to_string(),
        })?;
        let parse = |i: usize| {
            rec.get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    line: line + 2,
                    message: "expected subject,time,value".into(),
                })
        };
        let id = rec.get(0).unwrap_or_default().to_string();
        map.entry(id).or_default().push((parse(1)?, parse(2)?));
    }
    ids.iter()
        .map(|id| {
            let pts = map
                .get(id)
                .ok_or_else(|| Error::invalid(format!("no true curve for subject `{id}`")))?;
            grid.points()
                .iter()
                .map(|&t| {
                    pts.iter()
                        .find(|(s, _)| (s - t).abs() <= 1e-9 * grid.width())
                        .map(|&(_, v)| v)
                        .ok_or_else(|| Error::invalid(format!("true curve of `{id}` misses grid time {t}")))
                })
                .collect()
        })
        .collect()
}

fn interpolate(a: InterpolateArgs, args: &[String]) -> CliResult {
    require_file(&a.data)?;
    if let Some(t) = &a.truth {
        require_file(t)?;
    }
    let grid = a.grid.grid()?;
    let table = read_curves_csv(&a.data, &grid)?;
    let gp_cfg = match a.gp.as_deref() {
        Some(&[l, s, n]) => GpConfig::fixed(l, s, n),
        Some(_) => return Err(Failure::Usage("--gp takes three values: length,signal,noise".into())),
        None => GpConfig::default(),
    };
    let ids: Vec<String> = table.subjects.iter().map(|(id, _)| id.clone()).collect();
    let opts = FpcaOptions {
        selection: ComponentSelection::Fve(a.fve),
        ..FpcaOptions::default()
    };
    let methods = ["spline", "gp", "pace"];
    // estimates[feature][method][subject]
    let mut estimates: Vec<[Vec<Vec<f64>>; 3]> = Vec::new();
    for (r, name) in table.feature_names.iter().enumerate() {
        let curves: Vec<&SparseCurve> = table.subjects.iter().map(|(_, c)| &c[r]).collect();
        let (model, _, _) = fit_fpca(name, &curves, &ids, &grid, &opts)?;
        let spline = curves.iter().map(|c| spline_interp(c, &grid)).collect::<Result<Vec<_>>>()?;
        let gp = curves.iter().map(|c| gp_interp(c, &grid, &gp_cfg)).collect::<Result<Vec<_>>>()?;
        let pace = curves.iter().map(|c| pace_interp(c, &model)).collect::<Result<Vec<_>>>()?;
        estimates.push([spline, gp, pace]);
    }
    ensure_dir(&a.out)?;
    let curves_path = a.out.join("interpolations.csv");
    let mut rows = Vec::new();
    for (r, name) in table.feature_names.iter().enumerate() {
        for (mi, method) in methods.iter().enumerate() {
            for (id, est) in ids.iter().zip(&estimates[r][mi]) {
                for (t, v) in grid.points().iter().zip(est) {
                    rows.push(vec![id.clone(), name.clone(), method.to_string(), t.to_string(), v.to_string()]);
                }
            }
        }
    }
    write_rows(&curves_path, &["subject", "feature", "method", "time", "value"].map(String::from), rows)?;
    let mut outputs = vec![curves_path.clone()];
    if let Some(tp) = &a.truth {
        if table.feature_names.len() != 1 {
            return Err(Failure::Usage("--truth needs single-feature data".into()));
        }
        let truth = read_truth(tp, &ids, &grid)?;
        let rmse_path = a.out.join("rmse.csv");
        let mut rows = Vec::new();
        for (mi, method) in methods.iter().enumerate() {
            let r = interp_rmse(&estimates[0][mi], &truth)?;
            println!("{method}: average RMSE {r:.4}");
            rows.push(vec![method.to_string(), r.to_string()]);
        }
        write_rows(&rmse_path, &["method", "rmse"].map(String::from), rows)?;
        outputs.push(rmse_path);
    }
    let outs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    write_manifest(
        &a.out.join("manifest.json"),
        args,
        None,
        &json!({ "grid": &a.grid, "gp": &gp_cfg, "fve": a.fve }),
        &outs,
    )?;
    Ok(())
}

fn sparsify_cmd(a: SparsifyArgs, args: &[String]) -> CliResult {
    let ds = load_dataset(
        &DataFlags {
            data: a.data.clone(),
            labels: a.labels.clone(),
            task: None,
        },
        &a.grid,
    )?;
    let out = sparsify(&ds, a.keep, a.seed, a.keep_last)?;
    ensure_dir(&a.out)?;
    let data = a.out.join("data.csv");
    let labels = a.out.join("labels.csv");
    write_csv_atomic(&data, |b| write_long_csv(&out, b, &data))?;
    write_csv_atomic(&labels, |b| write_labels_csv(&out, b, &labels))?;
    write_manifest(
        &a.out.join("manifest.json"),
        args,
        Some(a.seed),
        &json!({ "keep": a.keep, "keep_last": a.keep_last, "grid": &a.grid }),
        &[&data, &labels],
    )?;
    println!(
        "kept {} of {} observations",
        out.total_observations(),
        ds.total_observations()
    );
    Ok(())
}

fn count(a: CountParamsArgs) -> CliResult {
    let kind = match a.kind {
        KindArg::Rnn => ModelKind::Rnn,
        KindArg::Lstm => ModelKind::Lstm,
        KindArg::Gru => ModelKind::Gru,
        KindArg::Fmlp => ModelKind::Fmlp,
    };
    let q = vec![vec![a.q; a.features]; a.hidden];
    let n = count_params(kind, a.hidden, a.features, &q).map_err(|e| Failure::Usage(e.to_string()))?;
    println!("{n}");
    Ok(())
}

fn label_rul(a: LabelRulArgs, args: &[String]) -> CliResult {
    if !(a.cap > 0.0) {
        return Err(Failure::Usage("--cap must be positive".into()));
    }
    let Some(path) = &a.cmapss else {
        let rul = a.rul.expect("clap enforces --rul without --cmapss");
        if !(rul >= 0.0) {
            return Err(Failure::Usage("--rul must be non-negative".into()));
        }
        println!("{}", piecewise_rul_label(rul, a.cap));
        return Ok(());
    };
    require_file(path)?;
    let out = a
        .out
        .clone()
        .ok_or_else(|| Failure::Usage("--cmapss needs --out".into()))?;
    let opts = CmapssOptions {
        window_len: a.window,
        cap: a.cap,
        ..CmapssOptions::default()
    };
    let (ds, skipped) = load_cmapss(path, &opts)?;
    ensure_dir(&out)?;
    let data = out.join("data.csv");
    let labels = out.join("labels.csv");
    write_csv_atomic(&data, |b| write_long_csv(&ds, b, &data))?;
    write_csv_atomic(&labels, |b| write_labels_csv(&ds, b, &labels))?;
    write_manifest(
        &out.join("manifest.json"),
        args,
        None,
        &json!({ "window": opts.window_len, "cap": opts.cap }),
        &[&data, &labels],
    )?;
    println!("{} windows written; {skipped} units skipped", ds.n_subjects());
    Ok(())
}

/// Flush stdout, ignoring broken pipes.
pub fn flush_stdout() {
    let _ = std::io::stdout().flush();
}
