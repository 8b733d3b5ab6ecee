//! `glucast`: synthetic cohort generation, patient identification,
//! LOSOCV forecasting with optional fine-tuning, and the data-fraction
//! ablation — all reproducible bitwise from (args, input files, seed).

mod commands;
mod config;
mod run_dir;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use glucast::protocols::Preset;

/// Argument/input problems exit with code 2; runtime failures with 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(name = "glucast", version, about = "Personalized glucose forecasting toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for fold-level parallelism (default: all cores).
    /// Results are identical for any thread count.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Key-value file overriding preset parameters (see README).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PresetArg {
    /// Laptop-scale widths and budget.
    Desk,
    /// Full-scale configuration (batch 1024, 3200 epochs).
    Full,
    /// Minimal wiring-test configuration.
    Smoke,
}

impl PresetArg {
    fn build(self) -> Preset {
        match self {
            PresetArg::Desk => Preset::desk(),
            PresetArg::Full => Preset::full(),
            PresetArg::Smoke => Preset::smoke(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum OnOff {
    On,
    Off,
}

impl From<OnOff> for bool {
    fn from(v: OnOff) -> bool {
        v == OnOff::On
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic T1D cohort as subject CSV files.
    Synth {
        #[arg(long)]
        subjects: usize,
        #[arg(long)]
        days: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Parameter spread of the cohort.
        #[arg(long, value_enum, default_value = "well-separated")]
        separation: SeparationArg,
    },
    /// Train the subject-identification classifier and report test metrics.
    Identify {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "desk")]
        preset: PresetArg,
        /// Use all four channels (on) or CGM only (off).
        #[arg(long, value_enum, default_value = "on")]
        multimodal: OnOff,
    },
    /// LOSOCV forecasting, optionally fine-tuned per subject.
    Forecast {
        #[arg(long)]
        data: PathBuf,
        /// Prediction horizon in minutes (30 or 60).
        #[arg(long)]
        ph: u32,
        #[arg(long, value_enum, default_value = "on")]
        multimodal: OnOff,
        #[arg(long, value_enum, default_value = "off")]
        personalize: OnOff,
        /// Fraction of each subject's training windows used when
        /// personalizing (1.0, 0.75, 0.5 or 0.25).
        #[arg(long, default_value_t = 1.0)]
        fraction: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "desk")]
        preset: PresetArg,
        /// Write fold model checkpoints next to the reports.
        #[arg(long)]
        save_models: bool,
    },
    /// Fine-tune at every training-data fraction and tabulate the results.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ph: u32,
        #[arg(long, value_enum, default_value = "on")]
        multimodal: OnOff,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "desk")]
        preset: PresetArg,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SeparationArg {
    WellSeparated,
    Overlapping,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("glucast: cannot configure {jobs} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("glucast: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn load_preset(arg: PresetArg, config: Option<&PathBuf>) -> anyhow::Result<Preset> {
    let mut preset = arg.build();
    if let Some(path) = config {
        config::apply_config_file(&mut preset, path)?;
    }
    Ok(preset)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth {
            subjects,
            days,
            seed,
            out,
            separation,
        } => commands::synth(subjects, days, seed, &out, separation),
        Command::Identify {
            data,
            seed,
            out,
            preset,
            multimodal,
        } => {
            let preset = load_preset(preset, cli.config.as_ref())?;
            commands::identify(&data, seed, &out, &preset, multimodal.into())
        }
        Command::Forecast {
            data,
            ph,
            multimodal,
            personalize,
            fraction,
            seed,
            out,
            preset,
            save_models,
        } => {
            let preset = load_preset(preset, cli.config.as_ref())?;
            commands::forecast(commands::ForecastArgs {
                data,
                ph,
                multimodal: multimodal.into(),
                personalize: personalize.into(),
                fraction,
                seed,
                out,
                preset,
                save_models,
            })
        }
        Command::Ablate {
            data,
            ph,
            multimodal,
            seed,
            out,
            preset,
        } => {
            let preset = load_preset(preset, cli.config.as_ref())?;
            commands::ablate(&data, ph, multimodal.into(), seed, &out, &preset)
        }
    }
}
