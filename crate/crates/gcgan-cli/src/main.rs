//! Command-line front end: synthesize data, train, generate scenarios,
//! evaluate, and summarize reports.
//!
//! Exit codes: 1 usage, 2 configuration, 3 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use gcgan_core::model::ModelVariant;

use gcgan_cli::config::{load_config, write_effective_config, AppConfig, ConfigError};
use gcgan_cli::data::{load_csv, synthesize, write_dataset, write_values_csv, DataError, Dataset};
use gcgan_cli::eval::{evaluate, generate_scenarios, write_eval_outputs, EvalError, EvalReport};
use gcgan_cli::train::{train_with_progress, write_history_csv, Checkpoint, TrainError};

#[derive(Parser)]
#[command(name = "gcgan", version, about = "Multi-site wind power scenario generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON config file; missing fields fall back to defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config field, e.g. `--set train.epochs=200`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a surrogate multi-farm record (data.csv + meta.json).
    SynthData {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Override synth.seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the adversarial pair on a record directory.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Directory holding data.csv and meta.json.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override train.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Temporal filter parameterization.
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
        /// Print per-epoch progress.
        #[arg(long)]
        verbose: bool,
    },
    /// Sample per-unit scenarios from a checkpoint into CSV files.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        scenarios: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Score a checkpoint against a reference record.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override eval.n_scenarios.
        #[arg(long)]
        scenarios: Option<usize>,
        /// Override eval.seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print a human-readable summary of an evaluation directory.
    Report {
        /// Directory containing report.json.
        #[arg(long)]
        eval: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum VariantArg {
    Conv1d,
    Full,
}

impl From<VariantArg> for ModelVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Conv1d => ModelVariant::Conv1d,
            VariantArg::Full => ModelVariant::FullMatrix,
        }
    }
}

enum AppError {
    Config(String),
    Runtime(String),
}

impl AppError {
    fn code(&self) -> u8 {
        match self {
            AppError::Config(_) => 2,
            AppError::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            AppError::Config(m) | AppError::Runtime(m) => m,
        }
    }
}

impl From<ConfigError> for AppError {
    fn from(e: ConfigError) -> Self {
        AppError::Config(e.to_string())
    }
}

impl From<DataError> for AppError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Invalid(_) | DataError::Meta(_) | DataError::NotPositiveSemidefinite => {
                AppError::Config(e.to_string())
            }
            other => AppError::Runtime(other.to_string()),
        }
    }
}

impl From<TrainError> for AppError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => AppError::Config(e.to_string()),
            other => AppError::Runtime(other.to_string()),
        }
    }
}

impl From<EvalError> for AppError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Config(_) => AppError::Config(e.to_string()),
            other => AppError::Runtime(other.to_string()),
        }
    }
}

fn runtime_io(path: &Path, e: std::io::Error) -> AppError {
    AppError::Runtime(format!("io error on {}: {e}", path.display()))
}

fn ensure_dir(dir: &Path) -> Result<(), AppError> {
    std::fs::create_dir_all(dir).map_err(|e| runtime_io(dir, e))
}

fn load_app_config(cfg: &ConfigArgs) -> Result<AppConfig, AppError> {
    Ok(load_config(cfg.config.as_deref(), &cfg.sets)?)
}

fn load_dataset(dir: &Path) -> Result<Dataset, AppError> {
    Ok(load_csv(&dir.join("data.csv"), &dir.join("meta.json"))?)
}

fn run(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::SynthData { cfg, out, seed } => {
            let mut app = load_app_config(&cfg)?;
            if let Some(s) = seed {
                app.synth.seed = s;
            }
            let dataset = synthesize(&app.synth)?;
            ensure_dir(&out)?;
            write_dataset(&out, &dataset)?;
            write_effective_config(&out, &app)?;
            println!(
                "wrote {} farms x {} steps to {}",
                dataset.n_farms(),
                dataset.t_total(),
                out.display()
            );
            Ok(())
        }
        Command::Train {
            cfg,
            data,
            out,
            seed,
            variant,
            verbose,
        } => {
            let mut app = load_app_config(&cfg)?;
            if let Some(s) = seed {
                app.train.seed = s;
            }
            if let Some(v) = variant {
                app.model.variant = v.into();
            }
            let dataset = load_dataset(&data)?;
            ensure_dir(&out)?;
            write_effective_config(&out, &app)?;
            let result = train_with_progress(&dataset, &app.model, &app.train, |r| {
                if verbose {
                    println!(
                        "epoch {:>5}  d_loss {:>9.5}  g_loss {:>9.5}  d_acc {:.2}/{:.2}",
                        r.epoch, r.d_loss, r.g_loss, r.d_acc_real, r.d_acc_fake
                    );
                }
            })?;
            result.checkpoint.save(&out.join("checkpoint.json"))?;
            write_history_csv(&out.join("training_log.csv"), &result.history)?;
            println!(
                "trained {} epochs, checkpoint at {}",
                result.checkpoint.epochs_completed,
                out.join("checkpoint.json").display()
            );
            Ok(())
        }
        Command::Generate {
            checkpoint,
            out,
            scenarios,
            seed,
        } => {
            if scenarios == 0 {
                return Err(AppError::Config("scenarios must be at least 1".into()));
            }
            let ckpt = Checkpoint::load(&checkpoint)?;
            let drawn = generate_scenarios(
                &ckpt.generator,
                scenarios,
                ckpt.train.noise,
                seed,
            )?;
            ensure_dir(&out)?;
            for (idx, scen) in drawn.iter().enumerate() {
                let path = out.join(format!("scenario_{:04}.csv", idx + 1));
                write_values_csv(&path, &ckpt.farm_ids, ckpt.interval_minutes, scen)?;
            }
            println!("wrote {} scenarios to {}", drawn.len(), out.display());
            Ok(())
        }
        Command::Evaluate {
            cfg,
            checkpoint,
            data,
            out,
            scenarios,
            seed,
        } => {
            let mut app = load_app_config(&cfg)?;
            if let Some(n) = scenarios {
                app.eval.n_scenarios = n;
            }
            if let Some(s) = seed {
                app.eval.seed = s;
            }
            let ckpt = Checkpoint::load(&checkpoint)?;
            let dataset = load_dataset(&data)?;
            ensure_dir(&out)?;
            write_effective_config(&out, &app)?;
            let (report, artifacts) = evaluate(&ckpt.generator, &dataset, &app.eval)?;
            write_eval_outputs(&out, &report, &artifacts)?;
            println!(
                "correlation mae {:.4}, capacity factor {:.4} vs {:.4}",
                report.correlation.mae,
                report.capacity_factor.generated,
                report.capacity_factor.reference
            );
            Ok(())
        }
        Command::Report { eval } => {
            let path = eval.join("report.json");
            let text = std::fs::read_to_string(&path).map_err(|e| runtime_io(&path, e))?;
            let report: EvalReport = serde_json::from_str(&text)
                .map_err(|e| AppError::Runtime(format!("cannot parse {}: {e}", path.display())))?;
            print_report(&report);
            Ok(())
        }
    }
}

fn print_report(r: &EvalReport) {
    println!("scenarios: {} x {} steps", r.n_scenarios, r.horizon);
    println!(
        "correlation error: mae {:.4}, max {:.4}",
        r.correlation.mae, r.correlation.max
    );
    println!(
        "capacity factor: generated {:.4}, reference {:.4} (diff {:.4})",
        r.capacity_factor.generated, r.capacity_factor.reference, r.capacity_factor.abs_diff
    );
    for v in &r.variability {
        let fmt = |o: &gcgan_cli::eval::MetricOutcome<gcgan_cli::eval::LaplaceSummary>| match (
            &o.value, &o.error,
        ) {
            (Some(s), _) => format!("variance {:.3e}, peak {:.3}", s.variance, s.peak),
            (None, Some(e)) => format!("unavailable ({e})"),
            _ => "unavailable".into(),
        };
        println!(
            "variability {:>4} min: generated {} | reference {}",
            v.minutes,
            fmt(&v.generated),
            fmt(&v.reference)
        );
    }
    for (label, side) in [
        ("generated", &r.weibull_generated),
        ("reference", &r.weibull_reference),
    ] {
        match (&side.fit.value, &side.fit.error) {
            (Some(w), _) => println!(
                "weibull {label}: scale {:.4}, shape {:.3} (zero fraction {:.4})",
                w.scale, w.shape, side.zero_fraction
            ),
            (None, Some(e)) => println!("weibull {label}: unavailable ({e})"),
            _ => println!("weibull {label}: unavailable"),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            eprintln!("usage error: {}", e.render().to_string().lines().next().unwrap_or(""));
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
