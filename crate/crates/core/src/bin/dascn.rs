use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dascn_core::commands;
use dascn_core::config::Overrides;
use dascn_core::data::ClassId;
use dascn_core::trainer::Variant;

#[derive(Parser)]
#[command(name = "dascn", version, about = "Dual adversarial feature generation for generalized zero-shot learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    #[arg(long)]
    n_per_class: Option<usize>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            out: self.out.clone(),
            seed: self.seed,
            variant: self.variant,
            n_per_class: self.n_per_class,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train all networks and write a checkpoint and step log.
    Train(Common),
    /// Synthesize, fit the final classifier and report ts / tr / H.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train and evaluate each ablation variant.
    Ablate(Common),
    /// Train once and sweep synthesized samples per class.
    Sweep(Common),
    /// Write the Gaussian-cluster oracle dataset.
    SynthData {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export real and synthesized features for 2-D projection.
    ExportViz {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated class ids; defaults to all unseen classes.
        #[arg(long, value_delimiter = ',')]
        classes: Option<Vec<ClassId>>,
        #[command(flatten)]
        common: Common,
    },
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: dascn_core::Error| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(c) => commands::cmd_train(&c.config, &c.overrides()),
        Command::Evaluate { checkpoint, common } => {
            commands::cmd_evaluate(checkpoint, &common.config, &common.overrides())
        }
        Command::Ablate(c) => commands::cmd_ablate(&c.config, &c.overrides()),
        Command::Sweep(c) => commands::cmd_sweep(&c.config, &c.overrides()),
        Command::SynthData { spec, out } => commands::cmd_synth_data(spec, out),
        Command::ExportViz {
            checkpoint,
            classes,
            common,
        } => commands::cmd_export_viz(checkpoint, &common.config, classes.clone(), &common.overrides()),
    };
    match result {
        Ok(path) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
