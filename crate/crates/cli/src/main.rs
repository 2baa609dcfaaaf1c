use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use playroom::exp::{
    self, cmd_baselines, cmd_eval, cmd_export_embeddings, cmd_generate, cmd_sweep, cmd_train,
    ExperimentConfig, SweepAxis,
};

/// Ego-centric play sessions, caregiver speech, and contrastive learning
/// in one self-contained workbench.
#[derive(Parser)]
#[command(name = "playroom", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment configuration file (`key = value` lines); defaults apply
    /// for every key left unset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the training seed from the config.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> playroom::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => exp::parse_config(&fs::read_to_string(path)?)?,
            None => ExperimentConfig::default().finalize()?,
        };
        if let Some(seed) = self.seed {
            cfg.train.seed = seed;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render the dataset and write manifest, vocabulary, and utterances.
    Generate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Also write the raw frame archives (frames.bin, test_frames.bin).
        #[arg(long)]
        cache_images: bool,
        /// Write this many PPM preview frames.
        #[arg(long, default_value_t = 0)]
        previews: usize,
    },
    /// Train one model and write checkpoint.bin plus loss_trace.csv.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint: linear probes and text block structure.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train/evaluate across one speech statistic.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Which statistic to vary: sparsity or correctness.
        #[arg(long)]
        axis: SweepAxisArg,
        /// Grid values, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f32>,
        /// Number of replicate seeds.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// The four caregiver regimes (none/plausible/ideal/oracle) side by side.
    Baselines {
        #[command(flatten)]
        config: ConfigArgs,
        /// Number of replicate seeds.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump frozen test-scene embeddings for a checkpoint as CSV.
    ExportEmbeddings {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy)]
struct SweepAxisArg(SweepAxis);

impl std::str::FromStr for SweepAxisArg {
    type Err = playroom::Error;
    fn from_str(s: &str) -> playroom::Result<Self> {
        s.parse().map(SweepAxisArg)
    }
}

fn run(cli: Cli) -> playroom::Result<()> {
    match cli.command {
        Command::Generate { config, out, cache_images, previews } => {
            let cfg = config.load()?;
            let summary = cmd_generate(&cfg, &out, cache_images, previews)?;
            println!("{}", summary);
            println!("wrote {}", out.display());
        }
        Command::Train { config, out } => {
            let cfg = config.load()?;
            log::info!("run {} (config {})", cfg.run_id(), cfg.hash());
            let summary = cmd_train(&cfg, &out)?;
            match summary.final_loss {
                Some(loss) => println!("{}: final loss {:.4}", summary.run_id, loss),
                None => println!("{}: no epochs run", summary.run_id),
            }
            if let Some(acc) = summary.oracle_accuracy {
                println!("oracle train accuracy {:.3}", acc);
            }
            println!("wrote {}", summary.checkpoint.display());
        }
        Command::Eval { config, checkpoint, out } => {
            let cfg = config.load()?;
            let rows = cmd_eval(&cfg, &checkpoint, &out)?;
            println!("{}", exp::RESULTS_HEADER);
            for row in &rows {
                println!("{}", row);
            }
            println!("wrote {}", out.join("results.csv").display());
        }
        Command::Sweep { config, axis, values, seeds, out } => {
            let cfg = config.load()?;
            let summary = cmd_sweep(&cfg, axis.0, &values, seeds, &out)?;
            report_batch(&summary);
        }
        Command::Baselines { config, seeds, out } => {
            let cfg = config.load()?;
            let summary = cmd_baselines(&cfg, seeds, &out)?;
            report_batch(&summary);
        }
        Command::ExportEmbeddings { config, checkpoint, out } => {
            let cfg = config.load()?;
            let rows = cmd_export_embeddings(&cfg, &checkpoint, &out)?;
            println!("wrote {} embeddings to {}", rows, out.display());
        }
    }
    Ok(())
}

fn report_batch(summary: &exp::BatchSummary) {
    for id in &summary.completed {
        println!("done {}", id);
    }
    for (id, err) in &summary.failed {
        println!("FAILED {}: {}", id, err);
    }
    println!("wrote {}", summary.results.display());
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp_secs()
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::FAILURE
        }
    }
}
