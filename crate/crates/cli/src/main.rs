use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hkg_cli::commands;
use hkg_cli::{CliResult, RunConfig};
use hkg_core::model::HeadKind;

#[derive(Parser)]
#[command(
    name = "hkg",
    version,
    about = "Hierarchy-guided fault intensity diagnosis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic valve-acoustics dataset.
    GenData {
        /// Generator settings JSON; built-in defaults when absent.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Build the correlation matrices and check their invariants.
    BuildMatrices {
        #[command(flatten)]
        common: Common,
    },
    /// Train a model, or sweep one config key with --ablate.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        head: Option<HeadKind>,
        /// Continue from this checkpoint.
        #[arg(long, conflicts_with = "ablate")]
        resume: Option<PathBuf>,
        /// Sweep `key=v1,v2,...`; one train+eval sub-run per value and seed.
        #[arg(long)]
        ablate: Option<String>,
        /// Seeds for each sweep value (defaults to the run seed).
        #[arg(long, value_delimiter = ',', requires = "ablate")]
        seeds: Vec<u64>,
        /// Write pooled CNN features of every split under `<out>/features`.
        #[arg(long)]
        export_features: bool,
    },
    /// Evaluate a checkpoint: thresholds from validation, metrics on test.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Run config JSON; defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        for o in &self.overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| {
                hkg_core::HkgError::Config(format!("override {o:?} must be key=value"))
            })?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenData { spec, out, seed } => {
            let manifest = commands::gen_data(spec.as_deref(), &out, seed)?;
            for (leaf, n) in manifest.counts(hkg_core::datagen::Split::Train) {
                println!("{leaf}: {n} training streams");
            }
            println!("dataset written to {}", out.display());
        }
        Command::BuildMatrices { common } => {
            let cfg = common.resolve()?;
            let out = cfg.out_dir.clone();
            let result = commands::build_matrices(&cfg, &out);
            if let Ok(checks) = &result {
                print!("{}", commands::invariant_summary(checks));
                println!("matrices written to {}", out.display());
            }
            result?;
        }
        Command::Train {
            common,
            epochs,
            batch,
            head,
            resume,
            ablate,
            seeds,
            export_features,
        } => {
            let mut cfg = common.resolve()?;
            if let Some(e) = epochs {
                cfg.set("epochs", &e.to_string())?;
            }
            if let Some(b) = batch {
                cfg.set("batch_size", &b.to_string())?;
            }
            if let Some(h) = head {
                cfg.set("head", &h.to_string())?;
            }
            match ablate {
                Some(sweep) => {
                    let (key, values) = commands::parse_sweep(&sweep)?;
                    let seeds = if seeds.is_empty() {
                        vec![cfg.seed]
                    } else {
                        seeds
                    };
                    let rows = commands::ablate(&cfg, &key, &values, &seeds)?;
                    print!("{}", commands::ablation_table(&rows));
                }
                None => {
                    let report = commands::train_run(&cfg, resume.as_deref(), export_features)?;
                    if let Some(last) = report.history.last() {
                        println!(
                            "epoch {}: train loss {:.5}, val loss {:.5}, val leaf accuracy {:.4}",
                            last.epoch,
                            last.train_loss,
                            last.val_loss,
                            last.val_metrics.leaf_accuracy
                        );
                    }
                    if let Some(ckpt) = report.last_checkpoint {
                        println!("last checkpoint {}", ckpt.display());
                    }
                }
            }
        }
        Command::Eval { common, checkpoint } => {
            let cfg = common.resolve()?;
            let out = match &common.out {
                Some(o) => o.clone(),
                None => cfg.out_dir.join(commands::EVAL_DIR),
            };
            let report = commands::eval_run(&cfg, &checkpoint, &out)?;
            print!("{}", report.to_text_table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
