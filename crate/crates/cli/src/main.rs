//! `deepgen` command-line driver.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use deepgen::datasets::{build_cmnist, gen_tea, split, SoftDataset, Split, SplitSpec};
use deepgen::harness::{
    compare_fronts, csv_writer, deepness_check, draw_hyperparams, epochs_for, pareto_front,
    read_records_csv, record_points, run_trials, train_model, ExperimentRecord,
    FrontComparison, HyperParams, ModelKind, RunManifest, TrialConfig, Versions,
    FRONT_GRID_POINTS,
};
use deepgen::model_io::ModelFile;
use deepgen::numerics::{RngState, DEFAULT_ENUM_LIMIT};

/// Exit status for malformed invocations, matching clap's own usage errors.
const USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "deepgen", version, about = "Train and compare two-layer generative models on binary images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a benchmark dataset as CSV plus a JSON sidecar.
    GenData(GenDataArgs),
    /// Train one model and write it as JSON.
    Train(TrainArgs),
    /// Print likelihood and bounds of a model file as JSON.
    Eval(EvalArgs),
    /// Random hyper-parameter search for one model family.
    Search(SearchArgs),
    /// Compare single RBMs against stacked RBMs on a dataset.
    Deepness(DeepnessArgs),
    /// Pareto fronts of one or more search result files.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DatasetName {
    Tea,
    Cmnist,
}

#[derive(Args)]
struct GenDataArgs {
    dataset: DatasetName,
    /// MNIST training images in IDX format (file, or directory holding
    /// `train-images-idx3-ubyte`). Required for cmnist.
    #[arg(long)]
    mnist: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

/// Data file plus how it is split and evaluated.
#[derive(Args)]
struct DataArgs {
    /// Dataset CSV, one sample per row.
    #[arg(long)]
    data: PathBuf,
    /// Seed of the shuffle that splits the data into three equal parts.
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    /// Largest latent layer evaluated by enumeration.
    #[arg(long, default_value_t = DEFAULT_ENUM_LIMIT)]
    enum_limit: usize,
    /// Codes per data point for the sampled bound on wider latent layers.
    #[arg(long, default_value_t = 1)]
    k_sampled: usize,
}

impl DataArgs {
    fn load(&self) -> anyhow::Result<Split> {
        let ds = SoftDataset::load(&self.data).with_context(|| format!("reading {}", self.data.display()))?;
        Ok(split(&ds, SplitSpec::thirds(ds.len(), self.split_seed))?)
    }

    fn trial_config(&self, compute_blm: bool) -> TrialConfig {
        TrialConfig {
            enum_limit: self.enum_limit,
            k_sampled: self.k_sampled,
            compute_blm,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// One of rbm, srbm, vanilla_ae, aeri.
    #[arg(long, value_parser = kind_parser)]
    kind: ModelKind,
    /// Seed for the hyper-parameter draw and for training.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    rbm_hidden: Option<usize>,
    #[arg(long)]
    h1: Option<usize>,
    #[arg(long)]
    h2: Option<usize>,
    #[arg(long)]
    inference_hidden: Option<usize>,
    #[arg(long)]
    cd_lr: Option<f64>,
    #[arg(long)]
    bp_lr: Option<f64>,
    /// Overrides both CD and backpropagation epochs.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    init_sigma: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    data: DataArgs,
    /// One of rbm, srbm, vanilla_ae, aeri.
    #[arg(long, value_parser = kind_parser)]
    kind: ModelKind,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override the epoch count drawn from the search space.
    #[arg(long)]
    epochs: Option<usize>,
    /// Skip the upper bounds.
    #[arg(long)]
    no_blm: bool,
    /// Output directory for `<kind>.csv` and `<kind>-manifest.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DeepnessArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Models per family.
    #[arg(long, default_value_t = 50)]
    models: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also compute the upper bounds of every model.
    #[arg(long)]
    blm: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Search result CSV files.
    #[arg(required = true)]
    results: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn kind_parser(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: deepgen::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a).map(|_| ExitCode::SUCCESS),
        Command::Eval(a) => eval(a).map(|_| ExitCode::SUCCESS),
        Command::Search(a) => search(a).map(|_| ExitCode::SUCCESS),
        Command::Deepness(a) => deepness(a).map(|_| ExitCode::SUCCESS),
        Command::Report(a) => report(a).map(|_| ExitCode::SUCCESS),
    }
}

fn gen_data(a: GenDataArgs) -> anyhow::Result<ExitCode> {
    let ds = match a.dataset {
        DatasetName::Tea => gen_tea(),
        DatasetName::Cmnist => {
            let Some(path) = a.mnist else {
                eprintln!("error: `gen-data cmnist` needs --mnist <PATH> pointing at the MNIST training images");
                return Ok(ExitCode::from(USAGE));
            };
            let file = if path.is_dir() {
                path.join("train-images-idx3-ubyte")
            } else {
                path
            };
            let bytes = fs::read(&file).with_context(|| format!("reading {}", file.display()))?;
            build_cmnist(&bytes)?
        }
    };
    ds.save(&a.out, None)?;
    Ok(ExitCode::SUCCESS)
}

fn hyperparams(a: &TrainArgs, n_train: usize) -> anyhow::Result<HyperParams> {
    let mut hp = draw_hyperparams(a.kind, n_train, 1, a.seed)?[0];
    let or = |v: Option<usize>, d: usize| v.unwrap_or(d);
    hp.rbm_hidden = or(a.rbm_hidden, hp.rbm_hidden);
    hp.deep_h1 = or(a.h1, hp.deep_h1);
    hp.deep_h2 = or(a.h2, hp.deep_h2);
    hp.inference_hidden = or(a.inference_hidden, hp.inference_hidden);
    hp.cd_lr = a.cd_lr.unwrap_or(hp.cd_lr);
    hp.bp_lr = a.bp_lr.unwrap_or(hp.bp_lr);
    hp.init_sigma = a.init_sigma.unwrap_or(hp.init_sigma);
    let epochs = a.epochs.unwrap_or(epochs_for(n_train));
    hp.cd_epochs = epochs;
    hp.bp_epochs = epochs;
    if [hp.rbm_hidden, hp.deep_h1, hp.deep_h2, hp.inference_hidden].contains(&0) {
        bail!("layer sizes must be at least 1");
    }
    Ok(hp)
}

fn train(a: TrainArgs) -> anyhow::Result<()> {
    let parts = a.data.load()?;
    let hp = hyperparams(&a, parts.train.len())?;
    let model = train_model(&hp, &parts.train)?;
    ModelFile::from(model).save(&a.out)?;
    eprintln!("{}", serde_json::to_string(&hp)?);
    Ok(())
}

#[derive(Serialize)]
struct EvalOutput {
    ll: f64,
    ll_train: f64,
    blm_train: f64,
    blm_valid: f64,
    blm_mode: deepgen::harness::BlmMode,
    param_count: usize,
}

fn eval(a: EvalArgs) -> anyhow::Result<()> {
    let parts = a.data.load()?;
    let model = ModelFile::load(&a.model)?.into_trained()?;
    let limit = a.data.enum_limit;
    let (blm_train, blm_valid, blm_mode) = deepgen::harness::bounds(
        &model,
        &parts.train,
        &parts.valid,
        &a.data.trial_config(true),
        RngState::new(0),
    )?;
    let out = EvalOutput {
        ll: model.exact_ll(&parts.valid, limit)?,
        ll_train: model.exact_ll(&parts.train, limit)?,
        blm_train,
        blm_valid,
        blm_mode,
        param_count: model.param_count(),
    };
    println!("{}", serde_json::to_string(&out)?);
    Ok(())
}

fn search(a: SearchArgs) -> anyhow::Result<()> {
    let parts = a.data.load()?;
    fs::create_dir_all(&a.out)?;
    let mut hps = draw_hyperparams(a.kind, parts.train.len(), a.trials, a.seed)?;
    if let Some(e) = a.epochs {
        for hp in &mut hps {
            hp.cd_epochs = e;
            hp.bp_epochs = e;
        }
    }
    let manifest = RunManifest {
        dataset: a.data.data.display().to_string(),
        split_seed: a.data.split_seed,
        trials: a.trials,
        master_seed: a.seed,
        kind: a.kind,
        versions: Versions::default(),
    };
    write_json(&a.out.join(format!("{}-manifest.json", a.kind)), &manifest)?;
    let mut w = csv_writer(BufWriter::new(File::create(a.out.join(format!("{}.csv", a.kind)))?));
    run_trials(&hps, &parts.train, &parts.valid, &a.data.trial_config(!a.no_blm), |r| {
        w.serialize(r)?;
        w.flush()?;
        Ok(())
    })?;
    Ok(())
}

fn deepness(a: DeepnessArgs) -> anyhow::Result<()> {
    let parts = a.data.load()?;
    let report = deepness_check(&parts.train, &parts.valid, a.models, a.seed, &a.data.trial_config(a.blm))?;
    write_json(&a.out, &report)?;
    println!(
        "{}",
        serde_json::json!({
            "verdict": report.verdict,
            "stacked_front_wins": report.comparison.a_beats,
            "best_stacked_valid": report.best_srbm_valid,
        })
    );
    Ok(())
}

#[derive(Serialize)]
struct FrontTable {
    kind: ModelKind,
    trials: usize,
    front: Vec<ExperimentRecord>,
}

#[derive(Serialize)]
struct PairComparison {
    a: ModelKind,
    b: ModelKind,
    #[serde(flatten)]
    comparison: FrontComparison,
}

#[derive(Serialize)]
struct Report {
    fronts: Vec<FrontTable>,
    comparisons: Vec<PairComparison>,
}

fn report(a: ReportArgs) -> anyhow::Result<()> {
    let mut by_kind: Vec<(ModelKind, Vec<ExperimentRecord>)> = Vec::new();
    for path in &a.results {
        let recs = read_records_csv(File::open(path).with_context(|| format!("reading {}", path.display()))?)?;
        for r in recs {
            match by_kind.iter_mut().find(|(k, _)| *k == r.hp.kind) {
                Some((_, v)) => v.push(r),
                None => by_kind.push((r.hp.kind, vec![r])),
            }
        }
    }
    let fronts = by_kind
        .iter()
        .map(|(k, recs)| FrontTable {
            kind: *k,
            trials: recs.len(),
            front: pareto_front(recs),
        })
        .collect();
    let mut comparisons = Vec::new();
    for (ka, ra) in &by_kind {
        for (kb, rb) in &by_kind {
            if ka != kb {
                comparisons.push(PairComparison {
                    a: *ka,
                    b: *kb,
                    comparison: compare_fronts(&record_points(ra), &record_points(rb), FRONT_GRID_POINTS),
                });
            }
        }
    }
    write_json(&a.out, &Report { fronts, comparisons })?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}
