use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use exposure_core::pipeline::stages::{embedding_texts, write_texts_csv};
use exposure_core::pipeline::{Pipeline, RunConfig, Stage};
use exposure_core::synth::{generate, SynthOptions};
use exposure_core::{Error, Result};

#[derive(Parser)]
#[command(name = "exposure-lab", version, about = "AI exposure indices, new work and fixed-effects IV estimates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load posts and tags and select AI posts per country group.
    Ingest(RunArgs),
    /// Decay-smoothed yearly tag scores.
    Scores(RunArgs),
    /// Embedding similarities and filtered transition matrices.
    Matrices(RunArgs),
    /// Automation and augmentation exposure plus lagged instruments.
    Exposure(RunArgs),
    /// New-work detection from alternate-title revisions.
    Newwork(RunArgs),
    /// Assemble the occupation × industry × year estimation panel.
    Panel(RunArgs),
    /// OLS and 2SLS results tables.
    Estimate(RunArgs),
    /// Every stage.
    All(RunArgs),
    /// Write the synthetic fixture and its configs.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Posts in the first corpus year.
        #[arg(long)]
        posts: Option<f64>,
    },
    /// Export every text the pipeline embeds as `id,text` CSV.
    Texts {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Seed of the built-in test embedder (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
}

fn run_stage(stage: Option<Stage>, args: &RunArgs) -> Result<()> {
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(Error::validation("--threads", "must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::validation("--threads", e.to_string()))?;
    }
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.embeddings.seed = seed;
    }
    let mut pipeline = Pipeline::new(cfg);
    if let Some(out) = &args.out {
        pipeline = pipeline.with_output(out);
    }
    for o in pipeline.run(stage)? {
        let status = if o.cached { "cached" } else { "ran" };
        println!("{:<9}{status}", o.stage.name());
    }
    println!("outputs in {}", pipeline.output_dir().display());
    Ok(())
}

fn write_texts(config: &Path, out: &Path) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let texts = embedding_texts(&cfg)?;
    let mut buf = Vec::new();
    write_texts_csv(&texts, &mut buf).map_err(|e| Error::io(out, e))?;
    std::fs::write(out, buf).map_err(|e| Error::io(out, e))?;
    println!("{} texts written to {}", texts.len(), out.display());
    Ok(())
}

fn dispatch(cmd: Command) -> Result<()> {
    let (stage, args) = match cmd {
        Command::Synth { out, seed, posts } => {
            let mut opts = SynthOptions::default();
            if let Some(s) = seed {
                opts.seed = s;
            }
            if let Some(p) = posts {
                opts.posts_2010 = p;
            }
            let files = generate(&opts)?.write(&out)?;
            println!("{} files written to {}", files.len(), out.display());
            return Ok(());
        }
        Command::Texts { config, out } => return write_texts(&config, &out),
        Command::Ingest(a) => (Some(Stage::Ingest), a),
        Command::Scores(a) => (Some(Stage::Scores), a),
        Command::Matrices(a) => (Some(Stage::Matrices), a),
        Command::Exposure(a) => (Some(Stage::Exposure), a),
        Command::Newwork(a) => (Some(Stage::Newwork), a),
        Command::Panel(a) => (Some(Stage::Panel), a),
        Command::Estimate(a) => (Some(Stage::Estimate), a),
        Command::All(a) => (None, a),
    };
    run_stage(stage, &args)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
