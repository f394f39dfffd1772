mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::Profile;

#[derive(Parser, Debug)]
#[command(name = "lsx", version, about = "Unpaired point-cloud shape translation")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Hyperparameter block; overrides the config file's.
    #[arg(long, global = true, value_enum)]
    profile: Option<Profile>,
    /// Root seed; overrides the config file's.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Config override such as `train.alpha=0`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate two synthetic shape families as an unpaired dataset.
    GenData(commands::GenDataArgs),
    /// Sample point clouds from glyph masks under <masks>/x and <masks>/y.
    Ingest(commands::IngestArgs),
    /// Tag a fraction of each domain as test.
    Split(commands::SplitArgs),
    /// Train one phase.
    Train(commands::TrainArgs),
    /// Translate the test inputs of one domain.
    Translate(commands::TranslateArgs),
    /// Score translated outputs.
    Evaluate(commands::EvaluateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Phase {
    Ae,
    Translator,
    Upsampler,
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("LSX_THREADS") {
        let n: usize = v.parse().map_err(|_| commands::usage(format!("LSX_THREADS={v:?} is not a count")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let res = init_threads().and_then(|_| match cli.cmd {
        Cmd::GenData(a) => commands::gen_data(&cli.common, &a),
        Cmd::Ingest(a) => commands::ingest(&cli.common, &a),
        Cmd::Split(a) => commands::split(&cli.common, &a),
        Cmd::Train(a) => commands::train(&cli.common, &a),
        Cmd::Translate(a) => commands::translate(&cli.common, &a),
        Cmd::Evaluate(a) => commands::evaluate(&cli.common, &a),
    });
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
