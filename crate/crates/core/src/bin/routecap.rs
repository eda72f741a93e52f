//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 numerical failure.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use routecap::checkpoint::{load_checkpoint, save_checkpoint};
use routecap::data::{gen_synthetic, load_dataset, manifest_path_for, save_dataset, DatasetManifest, Plant, Sample, SyntheticSpec};
use routecap::encoders::FeatureMask;
use routecap::interpret::{local_contributions, render_csv, render_text, GroupBy, Quantity};
use routecap::metrics::F1Average;
use routecap::model::Mode;
use routecap::train::{evaluate, render_log_csv, train, Checkpoint, EvalOptions, TrainConfig};
use routecap::Error;

#[derive(Parser)]
#[command(name = "routecap", version, about = "Interpretable multimodal classification by routing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset with a planted dependency.
    GenData(GenData),
    /// Train a model and write a checkpoint.
    Train(Train),
    /// Evaluate a checkpoint on a dataset.
    Eval(Eval),
    /// Per-sample contribution records as JSON lines.
    InterpretLocal(InterpretLocal),
    /// Dataset-level confidence intervals for routing quantities.
    InterpretGlobal(InterpretGlobal),
}

#[derive(Args)]
struct DataArgs {
    /// JSONL dataset.
    #[arg(long)]
    data: PathBuf,
    /// Manifest; defaults to `<data stem>.manifest.json` next to the data.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct GenData {
    /// unimodal:<a|v|t>, bimodal:<two modalities> or trimodal.
    #[arg(long)]
    plant: Plant,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, env = "ROUTECAP_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
    sigma: f64,
    #[arg(long, default_value_t = 6)]
    seq_len: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Train {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "routing")]
    mode: Mode,
    /// Routing iterations; routing-star always runs exactly one.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, env = "ROUTECAP_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    dropout: f64,
    #[arg(long = "d-f", default_value_t = 64)]
    d_f: usize,
    #[arg(long = "d-c", default_value_t = 64)]
    d_c: usize,
    /// Which explanatory features are computed: all or unimodal.
    #[arg(long, default_value = "all")]
    features: FeatureMask,
    #[arg(long)]
    ckpt_out: PathBuf,
    /// Per-epoch `epoch,loss,train_acc` CSV.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct Eval {
    #[arg(long)]
    ckpt: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "weighted")]
    f1_average: F1Average,
}

#[derive(Args)]
struct InterpretLocal {
    #[arg(long)]
    ckpt: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated sample ids; every sample when absent.
    #[arg(long, value_delimiter = ',')]
    ids: Option<Vec<String>>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Check that each logit equals the sum of its contribution column.
    #[arg(long)]
    verify: bool,
}

#[derive(Args)]
struct InterpretGlobal {
    #[arg(long)]
    ckpt: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "r")]
    quantity: Quantity,
    /// none, true-label or predicted-label.
    #[arg(long, default_value = "none")]
    group_by: GroupBy,
    #[arg(long, default_value = "csv", value_parser = ["csv", "text"])]
    format: String,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Lib(e.into())
    }
}

type CliResult = Result<(), Failure>;

fn load_data(args: &DataArgs) -> Result<(Vec<Sample>, DatasetManifest), Failure> {
    let manifest_path = args.manifest.clone().unwrap_or_else(|| manifest_path_for(&args.data));
    let manifest = DatasetManifest::load(&manifest_path)?;
    manifest.validate()?;
    let samples = load_dataset(&args.data, &manifest)?;
    Ok((samples, manifest))
}

fn emit(out: Option<&Path>, text: &str) -> io::Result<()> {
    match out {
        Some(p) => fs::write(p, text),
        None => io::stdout().lock().write_all(text.as_bytes()),
    }
}

fn gen_data(a: GenData) -> CliResult {
    if !(a.sigma >= 0.0 && a.sigma.is_finite()) {
        return Err(Failure::Usage(format!("--sigma must be a finite non-negative number, got {}", a.sigma)));
    }
    if a.n == 0 || a.seq_len == 0 {
        return Err(Failure::Usage("--n and --seq-len must be positive".into()));
    }
    let spec = SyntheticSpec { seq_len: a.seq_len, ..SyntheticSpec::new(a.plant, a.n, a.sigma, a.seed) };
    eprintln!("plant={} n={} seed={} sigma={} seq_len={} out={}", a.plant, a.n, a.seed, a.sigma, a.seq_len, a.out.display());
    let (samples, manifest, truth) = gen_synthetic(&spec)?;
    save_dataset(&a.out, &samples)?;
    manifest.save(manifest_path_for(&a.out))?;
    eprintln!("wrote {} samples, {} positive", samples.len(), truth.positives);
    Ok(())
}

fn run_train(a: Train) -> CliResult {
    let iterations = match (a.mode, a.iters) {
        (Mode::RoutingStar, Some(t)) if t != 1 => {
            return Err(Failure::Usage(format!("--mode routing-star runs exactly one iteration; drop --iters {t}")))
        }
        (Mode::RoutingStar, _) => 1,
        (_, Some(0)) => return Err(Failure::Usage("--iters must be at least 1".into())),
        (_, t) => t.unwrap_or(2),
    };
    let (samples, manifest) = load_data(&a.data)?;
    let config = TrainConfig {
        mode: a.mode,
        iterations,
        d_f: a.d_f,
        d_c: a.d_c,
        lr: a.lr,
        batch_size: a.batch,
        epochs: a.epochs,
        dropout: a.dropout,
        seed: a.seed,
        features: a.features,
        ..TrainConfig::for_manifest(&manifest)
    };
    if let Err(e) = config.validate() {
        return Err(Failure::Usage(e.to_string()));
    }
    eprintln!("{}", config.resolved());
    let (ck, log) = train(&config, &samples, &manifest)?;
    for e in &log {
        eprintln!("epoch {} loss {:.6} train_acc {:.4}", e.epoch, e.loss, e.train_acc);
    }
    save_checkpoint(&a.ckpt_out, &ck)?;
    if let Some(p) = &a.log {
        fs::write(p, render_log_csv(&log)?)?;
    }
    Ok(())
}

fn load(ckpt: &Path) -> Result<Checkpoint, Failure> {
    let ck = load_checkpoint(ckpt)?;
    eprintln!("{} epoch={}", ck.config.resolved(), ck.epoch);
    Ok(ck)
}

fn run_eval(a: Eval) -> CliResult {
    let ck = load(&a.ckpt)?;
    let (samples, manifest) = load_data(&a.data)?;
    let opts = EvalOptions { f1_average: a.f1_average, stats: None };
    let (result, _) = evaluate(&ck.model, &samples, &manifest, opts)?;
    let mut text = serde_json::to_string_pretty(&result).map_err(Error::from)?;
    text.push('\n');
    emit(None, &text)?;
    Ok(())
}

fn run_local(a: InterpretLocal) -> CliResult {
    let ck = load(&a.ckpt)?;
    let (samples, manifest) = load_data(&a.data)?;
    let chosen: Vec<&Sample> = match &a.ids {
        None => samples.iter().collect(),
        Some(ids) => {
            let missing: Vec<&str> =
                ids.iter().filter(|id| !samples.iter().any(|s| &s.id == *id)).map(String::as_str).collect();
            if !missing.is_empty() {
                return Err(Error::Validation(format!("unknown sample ids: {}", missing.join(", "))).into());
            }
            ids.iter().map(|id| samples.iter().find(|s| &s.id == id).unwrap()).collect()
        }
    };
    // fail on incompatible shapes before writing anything
    evaluate(&ck.model, &samples[..samples.len().min(1)], &manifest, EvalOptions::default())?;
    let mut out = String::new();
    let mut worst = 0.0f64;
    for s in chosen {
        let fw = ck.model.forward(s)?;
        let rec = local_contributions(&s.id, &fw, &ck.model.readout, Some(s.target(&manifest)?))?;
        worst = worst.max(rec.decomposition_gap());
        out.push_str(&serde_json::to_string(&rec).map_err(Error::from)?);
        out.push('\n');
    }
    if a.verify {
        if worst >= 1e-6 {
            return Err(Error::Numerical(format!("contribution columns miss their logits by up to {worst:e}")).into());
        }
        eprintln!("verified: largest decomposition gap {worst:e}");
    }
    emit(a.out.as_deref(), &out)?;
    Ok(())
}

fn run_global(a: InterpretGlobal) -> CliResult {
    if !(a.level > 0.0 && a.level < 1.0) {
        return Err(Failure::Usage(format!("--level must lie in (0, 1), got {}", a.level)));
    }
    let ck = load(&a.ckpt)?;
    let (samples, manifest) = load_data(&a.data)?;
    eprintln!("quantity={} group_by={:?} level={} format={}", a.quantity, a.group_by, a.level, a.format);
    let opts = EvalOptions { stats: Some(a.group_by), ..EvalOptions::default() };
    let (_, stats) = evaluate(&ck.model, &samples, &manifest, opts)?;
    let report = stats.expect("statistics were requested").report(a.quantity, &manifest.label_names(), a.level)?;
    let text = if a.format == "text" { render_text(&report) } else { render_csv(&report.records)? };
    emit(a.out.as_deref(), &text)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => run_train(a),
        Command::Eval(a) => run_eval(a),
        Command::InterpretLocal(a) => run_local(a),
        Command::InterpretGlobal(a) => run_global(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run with --help for usage");
            ExitCode::from(1)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, Error::Numerical(_)) { 3 } else { 2 })
        }
    }
}
