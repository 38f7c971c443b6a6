use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use invrat::attributes::EnvironmentKind;
use invrat::cli::{self, DumpFormat, TrainArgs};
use invrat::error::{Error, Result};
use invrat::game::{TrainConfig, TrainMode};

#[derive(Parser)]
#[command(name = "invrat", version, about = "Invariant-rationalization debiasing for toxic-language detection")]
struct Cli {
    /// Master seed (synth spec seed / training config seed).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Training config JSON (full field set; see `train --print-config`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (synth, train) or file (eval).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,

    /// Use the published hyperparameter preset.
    #[arg(long, global = true)]
    paper_hparams: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic biased corpus (TSV splits + JSON sidecar).
    Synth {
        /// Synthesis spec JSON; defaults to the built-in spec.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Tag a corpus with attributes, dialects and environment ids.
    Tag {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        lexicons: PathBuf,
        #[arg(long, value_enum)]
        kind: EnvironmentKind,
        /// Keep pre-assigned environment ids (synthetic corpora).
        #[arg(long)]
        preserve_env: bool,
    },
    /// Train one run directory per seed.
    Train {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Lexicon directory (required for lexical-removal mode).
        #[arg(long)]
        lexicons: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<TrainMode>,
        /// Comma-separated seed list; defaults to the config seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Print the resolved config JSON and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Select checkpoints, evaluate runs on a test file, print the table.
    Eval {
        /// Comma-separated run directories.
        #[arg(long, value_delimiter = ',', required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        test: PathBuf,
        /// Lexicon directory for tagging an untagged test file.
        #[arg(long)]
        lexicons: Option<PathBuf>,
    },
    /// Dump deterministic rationales from a trained run.
    Rationales {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 10)]
        limit: usize,
        #[arg(long, value_enum, default_value = "text")]
        format: DumpFormat,
    },
    /// Render a combined table from saved eval JSON files.
    Report {
        /// Eval JSON files produced by `invrat eval --out`.
        inputs: Vec<PathBuf>,
    },
}

fn resolve_config(cli: &Cli, mode: Option<TrainMode>) -> Result<TrainConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::io(path.display().to_string(), e))?;
            serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?
        }
        None => TrainConfig::default(),
    };
    if cli.paper_hparams {
        cfg = cfg.apply_paper_hparams();
    }
    if let Some(m) = mode {
        cfg.mode = m;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn require_out(cli: &Cli) -> Result<&PathBuf> {
    cli.out
        .as_ref()
        .ok_or_else(|| Error::Cli("--out is required for this command".into()))
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth { spec } => {
            let out = require_out(cli)?;
            cli::run_synth(spec.as_deref(), out, cli.seed, cli.force)
        }
        Command::Tag {
            corpus,
            lexicons,
            kind,
            preserve_env,
        } => cli::run_tag(corpus, lexicons, *kind, cli.out.as_deref(), *preserve_env),
        Command::Train {
            corpus,
            lexicons,
            mode,
            seeds,
            print_config,
        } => {
            let config = resolve_config(cli, *mode)?;
            if *print_config {
                let text = serde_json::to_string_pretty(&config)
                    .map_err(|e| Error::json("config", e))?;
                println!("{text}");
                return Ok(());
            }
            let corpus = corpus
                .as_ref()
                .ok_or_else(|| Error::Cli("--corpus is required to train".into()))?;
            let out = require_out(cli)?;
            let seeds = if seeds.is_empty() {
                vec![config.seed]
            } else {
                seeds.clone()
            };
            cli::run_train(TrainArgs {
                corpus,
                out,
                config,
                seeds,
                lexicons: lexicons.as_deref(),
                force: cli.force,
            })
        }
        Command::Eval {
            runs,
            test,
            lexicons,
        } => cli::run_eval(runs, test, lexicons.as_deref(), cli.out.as_deref()),
        Command::Rationales {
            run,
            input,
            limit,
            format,
        } => cli::run_rationales(run, input, *limit, *format),
        Command::Report { inputs } => cli::run_report(inputs),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
