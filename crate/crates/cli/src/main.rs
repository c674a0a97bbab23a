use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hegnn::plain::TrainConfig;
use hegnn_cli::config::{ExperimentConfig, ParamPreset};
use hegnn_cli::report::ablation_table;
use hegnn_cli::runner::{
    cmd_ablation, cmd_inspect, cmd_keygen, cmd_run, cmd_sweep, cmd_train, format_logits,
    resolve_params,
};
use hegnn_cli::Result;

#[derive(Parser)]
#[command(name = "hegnn", version, about = "Encrypted GCN inference experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (.json or .toml).
    config: PathBuf,
    /// Train a model when the config has no weights_path.
    #[arg(long)]
    train: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment cell.
    Run(Common),
    /// Run BFG, PO, AAO and FF on identical inputs.
    Ablation(Common),
    /// Sweep pruning ratios and/or polynomial presets.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Cells evaluated in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Train a model on the config's graph and save its weights.
    Train {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a CKKS key set.
    Keygen {
        #[arg(long, value_parser = clap::value_parser!(ParamPreset))]
        preset: Option<ParamPreset>,
        #[arg(long, default_value_t = 17)]
        levels: usize,
        /// HE parameters as JSON; overrides --preset and --levels.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decrypt and print the logits a report points at.
    Inspect {
        report: PathBuf,
        /// Key set from keygen; defaults to keys derived from the report seed.
        #[arg(long)]
        keys: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::read(&common.config)?;
    if common.train && cfg.weights_path.is_none() && cfg.train.is_none() {
        cfg.train = Some(TrainConfig::default());
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(d) = &common.output_dir {
        cfg.output_dir = std::env::current_dir()
            .map(|c| c.join(d))
            .unwrap_or_else(|_| d.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(common) => {
            let r = cmd_run(&load(&common)?)?;
            println!("{}", r.to_json());
        }
        Command::Ablation(common) => {
            let reports = cmd_ablation(&load(&common)?)?;
            print!("{}", ablation_table(&reports));
        }
        Command::Sweep { common, jobs } => {
            let reports = cmd_sweep(&load(&common)?, jobs)?;
            for r in &reports {
                println!(
                    "{}\tmult_ct={}\tactivation_mult_ct={}\tpruned={}",
                    r.experiment_id, r.profile.mult_ct, r.activation.mult_ct, r.pruned_nodes
                );
            }
        }
        Command::Train { config, out } => {
            let cfg = ExperimentConfig::read(&config)?;
            let report = cmd_train(&cfg, &out)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Keygen {
            preset,
            levels,
            params,
            seed,
            out,
        } => {
            let p = resolve_params(preset, levels, params.as_deref())?;
            cmd_keygen(p, seed, &out)?;
            println!("wrote {}", out.display());
        }
        Command::Inspect { report, keys } => {
            let logits = cmd_inspect(&report, keys.as_deref())?;
            print!("{}", format_logits(&logits));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
