//! `phonation`: feature extraction, group statistics and model evaluation
//! for sustained-vowel recordings.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use phonation::dataset::{FeatureSet, Target};

#[derive(Debug, Parser)]
#[command(name = "phonation", version, about)]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract phonatory features and modulation power spectra.
    Extract(ExtractArgs),
    /// Group comparisons on extracted features.
    Stats(StatsArgs),
    /// Repeated learning-testing of the group classifier.
    Classify(ModelArgs),
    /// Repeated learning-testing of clinical-score regression.
    Regress(RegressArgs),
    /// Generate a synthetic cohort.
    Synth(SynthArgs),
    /// Configuration helpers.
    #[command(subcommand)]
    Config(ConfigCommand),
}

#[derive(Debug, Args)]
struct ExtractArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Skip the modulation power spectrum.
    #[arg(long)]
    no_mps: bool,
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// Directory written by `extract`.
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Directory written by `extract`.
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Feature sets to evaluate (repeatable); defaults to the config list.
    #[arg(long = "feature-set", value_enum)]
    feature_sets: Vec<FeatureSetArg>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    test_frac: Option<f64>,
}

#[derive(Debug, Args)]
struct RegressArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum)]
    target: TargetArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SynthPreset {
    /// 24 controls, 16 premanifest, 45 manifest carriers.
    Study,
    /// Same group sizes, no group differences.
    Null,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Cohort specification (TOML or JSON); overrides --preset.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "study")]
    preset: SynthPreset,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum ConfigCommand {
    /// Write the full default configuration.
    Init {
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a configuration file.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FeatureSetArg {
    Phonatory,
    Mps,
    Combined,
}

impl From<FeatureSetArg> for FeatureSet {
    fn from(v: FeatureSetArg) -> Self {
        match v {
            FeatureSetArg::Phonatory => FeatureSet::Phonatory,
            FeatureSetArg::Mps => FeatureSet::Mps,
            FeatureSetArg::Combined => FeatureSet::Combined,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TargetArg {
    Cuhdrs,
    Tfc,
    Tms,
}

impl From<TargetArg> for Target {
    fn from(v: TargetArg) -> Self {
        match v {
            TargetArg::Cuhdrs => Target::Cuhdrs,
            TargetArg::Tfc => Target::Tfc,
            TargetArg::Tms => Target::Tms,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Extract(a) => commands::extract(&a.manifest, a.config.as_deref(), &a.out, !a.no_mps),
        Command::Stats(a) => commands::stats(&a.features, a.config.as_deref(), &a.out, a.seed),
        Command::Classify(a) => commands::model(&a.into(), None),
        Command::Regress(a) => commands::model(&a.model.into(), Some(a.target.into())),
        Command::Synth(a) => {
            let preset = match a.preset {
                SynthPreset::Study => commands::Preset::Study,
                SynthPreset::Null => commands::Preset::Null,
            };
            commands::synth(a.spec.as_deref(), preset, &a.out, a.seed)
        }
        Command::Config(ConfigCommand::Init { out }) => commands::config_init(out.as_deref()),
        Command::Config(ConfigCommand::Check { config }) => commands::config_check(&config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("phonation: {e}");
            e.exit_code()
        }
    }
}

impl From<ModelArgs> for commands::ModelRun {
    fn from(a: ModelArgs) -> Self {
        commands::ModelRun {
            features: a.features,
            config: a.config,
            out: a.out,
            seed: a.seed,
            feature_sets: a.feature_sets.into_iter().map(Into::into).collect(),
            repeats: a.repeats,
            test_frac: a.test_frac,
        }
    }
}
