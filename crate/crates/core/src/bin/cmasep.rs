use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cmasep::experiment::{
    betamin_csv, detect_csv, histograms_csv, run_betamin, run_detect, run_experiment, run_trial, separate_csv, separate_taps_csv,
    summary_csv, trials_csv, ExperimentConfig,
};
use cmasep::Error;

#[derive(Parser)]
#[command(name = "cmasep", version, about = "Blind CMA source separation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Separate one trial and write the stream scores and filter taps.
    Separate {
        #[command(flatten)]
        common: Common,
        /// Trial index to draw.
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Monte-Carlo comparison of the configured methods.
    Experiment {
        #[command(flatten)]
        common: Common,
    },
    /// Variational infima over the configured excess-bandwidth grid.
    Betamin {
        #[command(flatten)]
        common: Common,
    },
    /// Detection of the significant non-conjugate cyclic frequencies.
    DetectFreqs {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

impl Common {
    fn load(&self) -> cmasep::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write(dir: &Path, name: &str, text: &str) -> cmasep::Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> cmasep::Result<()> {
    match cli.command {
        Command::Separate { common, trial } => {
            let cfg = common.load()?;
            let result = run_trial(&cfg, trial)?;
            write(&common.out, "separate.csv", &separate_csv(&cfg, &result))?;
            write(&common.out, "taps.csv", &separate_taps_csv(&cfg, &result))
        }
        Command::Experiment { common } => {
            let cfg = common.load()?;
            let results = run_experiment(&cfg)?;
            write(&common.out, "experiment.csv", &trials_csv(&cfg, &results))?;
            write(&common.out, "summary.csv", &summary_csv(&cfg, &results))?;
            write(&common.out, "histograms.csv", &histograms_csv(&cfg, &results))
        }
        Command::Betamin { common } => {
            let cfg = common.load()?;
            let rows = run_betamin(&cfg.betamin, cfg.seed)?;
            write(&common.out, "betamin.csv", &betamin_csv(&cfg, &rows))
        }
        Command::DetectFreqs { common } => {
            let cfg = common.load()?;
            let rows = run_detect(&cfg)?;
            write(&common.out, "detect.csv", &detect_csv(&cfg, &rows))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cmasep: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
