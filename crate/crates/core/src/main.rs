use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pcdnet::cli::commands::{self, Context, InferArgs, Overrides, TrainArgs};

#[derive(Parser)]
#[command(name = "pcdnet", version, about = "Single-image point cloud reconstruction")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment config (TOML); defaults are used when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Overrides io.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Single-threaded kernels for bit-exact reruns.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Overrides io.run_dir.
    #[arg(long, global = true)]
    run_dir: Option<PathBuf>,
    /// Overrides io.dataset_dir.
    #[arg(long, global = true)]
    dataset_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic dataset into io.dataset_dir.
    GenData,
    /// Train a model and evaluate it on the test split.
    Train {
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        max_steps: Option<u64>,
        /// Continue from a checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Reconstruct one image and write a PLY file.
    Infer {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// PCDT image tensor.
        #[arg(long, conflicts_with = "sample", required_unless_present = "sample")]
        image: Option<PathBuf>,
        /// Dataset sample id, e.g. torus-0003.
        #[arg(long)]
        sample: Option<String>,
        /// Total points; a multiple of the model's output size.
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decode a grid of bilinearly mixed latent codes.
    Interpolate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Four corner sample ids: top-left, top-right, bottom-left, bottom-right.
        #[arg(long, value_delimiter = ',', num_args = 4)]
        samples: Vec<String>,
        #[arg(long, default_value_t = 8)]
        grid: usize,
    },
    /// Export mixing matrices with row statistics and singular values.
    InspectMixing {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Index among the learned mixing layers; all when omitted.
        #[arg(long)]
        layer: Option<usize>,
    },
    /// Analytic parameter and multiply-accumulate counts.
    CountMacs,
    /// Train and compare the three feature compositions.
    Ablate,
    /// Finite-difference check of every differentiable op.
    Gradcheck,
}

fn run(cli: Cli) -> pcdnet::Result<String> {
    let g = cli.global;
    let overrides = Overrides {
        seed: g.seed,
        deterministic: g.deterministic,
        run_dir: g.run_dir,
        dataset_dir: g.dataset_dir,
    };
    let mut ctx = Context::load(g.config.as_deref(), &overrides)?;
    match cli.command {
        Command::GenData => commands::gen_data(&ctx),
        Command::Train {
            epochs,
            max_steps,
            resume,
        } => commands::train(
            &mut ctx,
            &TrainArgs {
                epochs,
                max_steps,
                resume,
            },
        ),
        Command::Eval { checkpoint } => commands::eval(&ctx, checkpoint.as_deref()),
        Command::Infer {
            checkpoint,
            image,
            sample,
            points,
            out,
        } => commands::infer(
            &ctx,
            &InferArgs {
                checkpoint,
                image,
                sample,
                points,
                out,
            },
        ),
        Command::Interpolate {
            checkpoint,
            samples,
            grid,
        } => commands::interpolate(&ctx, checkpoint.as_deref(), &samples, grid),
        Command::InspectMixing { checkpoint, layer } => {
            commands::inspect_mixing_cmd(&ctx, checkpoint.as_deref(), layer)
        }
        Command::CountMacs => commands::count_macs(&ctx),
        Command::Ablate => commands::ablate(&ctx),
        Command::Gradcheck => commands::gradcheck_cmd(&ctx),
    }
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors.
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
