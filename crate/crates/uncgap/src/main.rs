use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use uncgap::config::{preset, ConfigError, ExperimentConfig};
use uncgap::data::{load_csv, save_csv, GridSpec};
use uncgap::dirichlet::all_measures;
use uncgap::eval::{build_report, evaluate_grid, EvalError};
use uncgap::network::{Checkpoint, NetworkError};
use uncgap::pipeline::{generate_test, generate_train, records_csv, train_model};

/// Dirichlet prior network toolkit on the synthetic three-Gaussian benchmark.
#[derive(Parser)]
#[command(name = "uncgap", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

// exit code contract: 0 success, 2 config/input validation,
// 3 numerical failure, 4 evaluation-group failure
#[derive(Subcommand)]
enum Command {
    /// Generate train/test CSV datasets from a config or preset
    GenData {
        #[command(flatten)]
        source: ConfigSource,
        /// Output directory for train.csv / test.csv
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write a JSON checkpoint plus a training-record CSV
    Train {
        #[command(flatten)]
        source: ConfigSource,
        /// Training dataset CSV (from gen-data)
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint output path
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint: detection, calibration and representation gap
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Held-out dataset CSV
        #[arg(long)]
        data: PathBuf,
        /// Report JSON output path
        #[arg(long)]
        out: PathBuf,
        /// Equal-count calibration bins
        #[arg(long, default_value_t = 15)]
        n_bins: usize,
    },
    /// Export per-point uncertainty measures over a lattice as CSV
    Grid {
        #[arg(long)]
        checkpoint: PathBuf,
        /// x range as lo:hi
        #[arg(long, default_value = "-15:15", allow_hyphen_values = true)]
        x: String,
        /// y range as lo:hi
        #[arg(long, default_value = "-13:17", allow_hyphen_values = true)]
        y: String,
        /// Points per axis
        #[arg(long, default_value_t = 100)]
        res: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print all uncertainty measures for one concentration vector
    Measures {
        /// Comma-separated concentration parameters, e.g. 10,10,10
        #[arg(long)]
        alpha: String,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ConfigSource {
    /// Experiment config JSON
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named preset (baseline, oe, dpn-plus, dpn-minus, dpn-rev, dpn-fwd,
    /// dpn-rev-frac, dpn-0-minus, dpn-half-0)
    #[arg(long)]
    preset: Option<String>,
}

impl ConfigSource {
    fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        match (&self.config, &self.preset) {
            (Some(path), None) => Ok(ExperimentConfig::load(path)?),
            (None, Some(name)) => Ok(preset(name)?),
            _ => unreachable!("clap group enforces exactly one"),
        }
    }
}

enum CliError {
    Validation(String),
    Numerical(String),
    EvalGroup(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::EvalGroup(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Numerical(m) | CliError::EvalGroup(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<uncgap::data::DataError> for CliError {
    fn from(e: uncgap::data::DataError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<NetworkError> for CliError {
    fn from(e: NetworkError) -> Self {
        match e {
            NetworkError::NanObjective { .. } => CliError::Numerical(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::GroupTooSmall(_) | EvalError::EmptyPopulation(_) => {
                CliError::EvalGroup(e.to_string())
            }
            EvalError::SingularCovariance => CliError::Numerical(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Validation(format!("cannot write {}: {e}", path.display())))
}

fn parse_range(s: &str, flag: &str) -> Result<[f64; 2], CliError> {
    let err = || CliError::Validation(format!("--{flag} expects lo:hi, got '{s}'"));
    let (lo, hi) = s.split_once(':').ok_or_else(err)?;
    let lo: f64 = lo.trim().parse().map_err(|_| err())?;
    let hi: f64 = hi.trim().parse().map_err(|_| err())?;
    if lo >= hi {
        return Err(CliError::Validation(format!(
            "--{flag}: lo must be < hi, got {lo}:{hi}"
        )));
    }
    Ok([lo, hi])
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("cannot parse {}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenData { source, out } => {
            let cfg = source.resolve()?;
            std::fs::create_dir_all(&out)
                .map_err(|e| CliError::Validation(format!("cannot create {}: {e}", out.display())))?;
            let train = generate_train(&cfg)?;
            let test = generate_test(&cfg)?;
            save_csv(&train, &out.join("train.csv"))?;
            save_csv(&test, &out.join("test.csv"))?;
            println!(
                "wrote {} train rows and {} test rows to {}",
                train.len(),
                test.len(),
                out.display()
            );
        }
        Command::Train { source, data, out } => {
            let cfg = source.resolve()?;
            let dataset = load_csv(&data)?;
            let (model, records) = train_model(&cfg, &dataset)?;
            let ckpt = Checkpoint::from_model(
                &model,
                cfg.loss.clone(),
                cfg.optimizer.clone(),
                cfg.training.seed,
                cfg.training.epochs,
            );
            let json = serde_json::to_string(&ckpt).expect("checkpoint serializes");
            write_file(&out, &json)?;
            let records_path = out.with_extension("records.csv");
            write_file(&records_path, &records_csv(&records))?;
            let final_acc = records.last().map(|r| r.train_accuracy).unwrap_or(0.0);
            println!(
                "trained {} epochs, final train accuracy {:.3}; checkpoint at {}",
                cfg.training.epochs,
                final_acc,
                out.display()
            );
        }
        Command::Eval {
            checkpoint,
            data,
            out,
            n_bins,
        } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let model = ckpt.to_model();
            let dataset = load_csv(&data)?;
            if dataset.num_classes() != model.num_classes() {
                return Err(CliError::Validation(format!(
                    "checkpoint has {} classes but dataset labels span {}",
                    model.num_classes(),
                    dataset.num_classes()
                )));
            }
            let (in_x, in_y) = dataset.in_domain();
            let ood_x = dataset.ood();
            let report = build_report(&model, &in_x, &in_y, &ood_x, n_bins)?;
            let json = serde_json::to_string_pretty(&report).expect("report serializes");
            write_file(&out, &json)?;
            println!("report written to {}", out.display());
            // partial results are on disk; missing groups still fail the run
            if report.misclassification_detection.is_none() || report.gap_kl_miss.is_none() {
                return Err(CliError::EvalGroup(
                    "an evaluation group (correct / misclassified) is empty; report contains nulls"
                        .into(),
                ));
            }
        }
        Command::Grid {
            checkpoint,
            x,
            y,
            res,
            out,
        } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let spec = GridSpec {
                x_range: parse_range(&x, "x")?,
                y_range: parse_range(&y, "y")?,
                resolution: res,
            };
            spec.validate()?;
            let csv = evaluate_grid(&ckpt.to_model(), &spec)?;
            write_file(&out, &csv)?;
            println!("{} grid rows written to {}", res * res, out.display());
        }
        Command::Measures { alpha } => {
            let parsed: Result<Vec<f64>, _> =
                alpha.split(',').map(|s| s.trim().parse::<f64>()).collect();
            let alpha = parsed
                .map_err(|_| CliError::Validation(format!("--alpha: cannot parse '{alpha}'")))?;
            if alpha.len() < 2 || alpha.iter().any(|&a| !(a > 0.0)) {
                return Err(CliError::Validation(
                    "--alpha needs >= 2 positive values".into(),
                ));
            }
            let logits: Vec<f64> = alpha.iter().map(|a| a.ln()).collect();
            let m = all_measures(&logits).map_err(|e| CliError::Validation(e.to_string()))?;
            println!("max_p     = {:.6}", m.max_p);
            println!("entropy   = {:.6}", m.entropy);
            println!("mi        = {:.6}", m.mutual_information);
            println!("dent      = {:.6}", m.differential_entropy);
            println!("precision = {:.6}", m.precision);
            println!("epkl      = {:.6}", m.epkl);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("UNCGAP_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
