use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ctcl::cli::{self, AccountArgs};
use ctcl::corpus::Provenance;

#[derive(Parser)]
#[command(
    name = "ctcl",
    version,
    about = "Differentially private topic-conditioned text synthesis"
)]
struct Cli {
    /// Worker threads for parallel stages; never changes any output byte.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Stage {
    /// JSON run config.
    #[arg(long, short)]
    config: PathBuf,
    /// Override a config value, e.g. `--set finetune.steps=300`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Top-level seed; wins over the config file and CTCL_SEED.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Origin {
    Public,
    Private,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a toy corpus from a topic-pool spec.
    GenToy {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "private")]
        provenance: Origin,
        /// Also split off a held-out test corpus into this file.
        #[arg(long)]
        test_out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
    },
    /// Fit the topic model on the public corpus.
    BuildTopics(Stage),
    /// Pretrain the generator on public (condition, document) pairs.
    Pretrain(Stage),
    /// Release the noisy topic histogram and DP-finetune the generator.
    Fit {
        #[command(flatten)]
        stage: Stage,
        /// Start from a fresh model instead of the pretrain checkpoint.
        #[arg(long)]
        from_scratch: bool,
    },
    /// Generate the synthetic corpus from the DP-released artifacts.
    Synth(Stage),
    /// Train the downstream model and score it on the test corpus.
    Eval {
        #[command(flatten)]
        stage: Stage,
        /// Train on this corpus instead of the synthetic one.
        #[arg(long)]
        train: Option<PathBuf>,
    },
    /// Privacy accounting calculator.
    Account {
        /// Private dataset size; sets delta = 1 / (N ln N).
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        delta: Option<f64>,
        /// DP-Adam noise multiplier to account for.
        #[arg(long)]
        sigma: Option<f64>,
        /// Sampling rate B / N.
        #[arg(long)]
        q: Option<f64>,
        #[arg(long)]
        steps: Option<u64>,
        /// Histogram noise (default 10).
        #[arg(long)]
        hist_sigma: Option<f64>,
        /// Solve for the noise multiplier reaching this composed epsilon.
        #[arg(long)]
        target_eps: Option<f64>,
    },
}

fn load(stage: &Stage) -> ctcl::Result<cli::Loaded> {
    cli::load_config(&stage.config, &stage.overrides, stage.seed)
}

fn run(command: Command) -> ctcl::Result<()> {
    match command {
        Command::GenToy {
            spec,
            out,
            provenance,
            test_out,
            test_fraction,
        } => {
            let p = match provenance {
                Origin::Public => Provenance::Public,
                Origin::Private => Provenance::Private,
            };
            cli::cmd_gen_toy(&spec, &out, p, test_out.as_deref(), test_fraction)
        }
        Command::BuildTopics(s) => cli::cmd_build_topics(&load(&s)?).map(drop),
        Command::Pretrain(s) => cli::cmd_pretrain(&load(&s)?).map(drop),
        Command::Fit {
            stage,
            from_scratch,
        } => cli::cmd_fit(&load(&stage)?, from_scratch).map(drop),
        Command::Synth(s) => cli::cmd_synth(&load(&s)?).map(drop),
        Command::Eval { stage, train } => cli::cmd_eval(&load(&stage)?, train.as_deref()).map(drop),
        Command::Account {
            n,
            delta,
            sigma,
            q,
            steps,
            hist_sigma,
            target_eps,
        } => cli::cmd_account(&AccountArgs {
            n,
            delta,
            sigma,
            q,
            steps,
            hist_sigma,
            target_eps,
        })
        .map(drop),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Cli::parse();
    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(args.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
