// SPDX-License-Identifier: MIT OR Apache-2.0

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;
use error::CliError;

/// Activation patching for term-frequency behavior in bi-encoder rankers.
#[derive(Debug, Parser)]
#[command(name = "axir", version, about)]
struct Cli {
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true, env = "AXIR_THREADS")]
    threads: Option<usize>,
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build toy models.
    #[command(subcommand)]
    Toy(ToyCommand),
    /// Select high-impact queries and write TFC1 triples as JSONL.
    Curate(CurateArgs),
    /// Generate a synthetic corpus, queries and run file.
    Synth(SynthArgs),
    /// Score the baseline and perturbed document of every triple.
    Score(ScoreArgs),
    /// Patch donor activations into recipient runs.
    Patch(PatchArgs),
    /// Zero- or mean-ablate heads in the donor run.
    Ablate(AblateArgs),
    /// Attention mass from one token type to every other type.
    Attn(AttnArgs),
    /// Score documents with a term injected at normalized positions.
    SweepPosition(SweepPositionArgs),
    /// Render result matrices under a directory.
    Report(ReportArgs),
}

#[derive(Debug, Subcommand)]
enum ToyCommand {
    /// Write a toy model directory (config.json, model.axir, vocab.txt).
    Build(ToyBuildArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default results/<experiment>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Experiment name (default: the subcommand).
    #[arg(long)]
    experiment: Option<String>,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("variant").required(true).args(["wired", "random"]))]
struct ToyBuildArgs {
    /// Hand-wired duplicate-token-head model.
    #[arg(long)]
    wired: bool,
    /// Seeded Gaussian model.
    #[arg(long)]
    random: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Layers of the random model.
    #[arg(long, default_value_t = 2)]
    layers: usize,
    /// Heads per layer of the random model.
    #[arg(long, default_value_t = 2)]
    heads: usize,
    /// Width of the random model.
    #[arg(long, default_value_t = 32)]
    d_model: usize,
    /// MLP width of the random model.
    #[arg(long, default_value_t = 64)]
    d_ff: usize,
    /// Output model directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CurateArgs {
    #[command(flatten)]
    common: Common,
    /// Model directory.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Corpus TSV (docid<TAB>text).
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Queries TSV (qid<TAB>text).
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Candidate run file (TREC format).
    #[arg(long)]
    run: Option<PathBuf>,
    /// tfc1-i, tfc1-r or tfc1-a.
    #[arg(long)]
    kind: Option<String>,
    /// end, begin, random or a normalized position in [0,1].
    #[arg(long)]
    location: Option<String>,
    /// Candidates perturbed per query.
    #[arg(long)]
    k_docs: Option<usize>,
    /// Queries kept.
    #[arg(long)]
    n_queries: Option<usize>,
    /// Term copies injected per triple.
    #[arg(long)]
    injections: Option<usize>,
    /// Filler word.
    #[arg(long)]
    filler: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    /// Model directory whose vocab.txt supplies words.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Vocabulary file (overrides the model's).
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_queries: Option<usize>,
    #[arg(long)]
    docs_per_query: Option<usize>,
    /// Smallest occurrence count of a query word in a document.
    #[arg(long)]
    tf_min: Option<usize>,
    /// Largest occurrence count of a query word in a document.
    #[arg(long)]
    tf_max: Option<usize>,
    /// Distinct non-query words per document.
    #[arg(long)]
    background_words: Option<usize>,
    /// Word never used in generated text.
    #[arg(long)]
    filler: Option<String>,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Dataset JSONL.
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PatchArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// resid-pre, resid-mid, resid-post, attn-out, mlp-out, heads or attn-pattern.
    #[arg(long)]
    sites: Option<String>,
    /// Aggregate per position by token type.
    #[arg(long, conflicts_with = "by_position")]
    by_token_type: bool,
    /// Aggregate per position index.
    #[arg(long)]
    by_position: bool,
    /// Patch each recipient with its own activations (must give ndiff 0).
    #[arg(long)]
    self_patch: bool,
    /// Keep triples whose scores contradict the expected order.
    #[arg(long)]
    keep_contradictions: bool,
    /// Also run on the top and bottom fraction of documents per query.
    #[arg(long)]
    relevance_split: Option<f64>,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Heads as L.H,L.H or `all`.
    #[arg(long)]
    heads: Option<String>,
    /// zero, mean or both.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    keep_contradictions: bool,
}

#[derive(Debug, Args)]
struct AttnArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Heads as L.H,L.H or `all`.
    #[arg(long)]
    heads: Option<String>,
    /// Source token type (cls, inj, qterm_plus, qterm_minus, other, sep).
    #[arg(long)]
    from_type: Option<String>,
    /// Split documents by whether they already contained the term.
    #[arg(long)]
    cohort_split: bool,
    /// Average per destination token instead of total mass per type.
    #[arg(long)]
    per_token: bool,
}

#[derive(Debug, Args)]
struct SweepPositionArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Queries TSV.
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Corpus TSV.
    #[arg(long)]
    docs: Option<PathBuf>,
    /// Run file mapping queries to documents.
    #[arg(long)]
    run: Option<PathBuf>,
    /// Documents per query taken from the run.
    #[arg(long)]
    k_docs: Option<usize>,
    /// Comma-separated positions in [0,1].
    #[arg(long)]
    grid: Option<String>,
    /// Term to inject (default: a seeded pick per query).
    #[arg(long)]
    term: Option<String>,
    #[arg(long)]
    filler: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Results directory to render.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// csv, json, svg or ascii.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn some(flag: bool) -> Option<bool> {
    flag.then_some(true)
}

impl Common {
    fn flags(&self, threads: Option<usize>) -> ExperimentConfig {
        ExperimentConfig {
            out: self.out.clone(),
            experiment: self.experiment.clone(),
            threads,
            ..Default::default()
        }
    }
}

fn resolve(config: &Option<PathBuf>, flags: ExperimentConfig) -> Result<ExperimentConfig, CliError> {
    let base = match config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    Ok(base.overlay(&flags))
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let t = cli.threads;
    match cli.command {
        Command::Toy(ToyCommand::Build(a)) => commands::toy_build(&commands::ToyBuild {
            wired: a.wired,
            seed: a.seed,
            layers: a.layers,
            heads: a.heads,
            d_model: a.d_model,
            d_ff: a.d_ff,
            out: a.out,
        }),
        Command::Curate(a) => {
            let flags = ExperimentConfig {
                model: a.model,
                corpus: a.corpus,
                queries: a.queries,
                run: a.run,
                kind: a.kind,
                location: a.location,
                k_docs: a.k_docs,
                n_queries: a.n_queries,
                injections: a.injections,
                filler: a.filler,
                seed: a.seed,
                ..a.common.flags(t)
            };
            commands::curate(&resolve(&a.common.config, flags)?)
        }
        Command::Synth(a) => {
            let flags = ExperimentConfig {
                model: a.model,
                vocab: a.vocab,
                seed: a.seed,
                n_queries: a.n_queries,
                docs_per_query: a.docs_per_query,
                tf_min: a.tf_min,
                tf_max: a.tf_max,
                background_words: a.background_words,
                filler: a.filler,
                ..a.common.flags(t)
            };
            commands::synth(&resolve(&a.common.config, flags)?)
        }
        Command::Score(a) => {
            let flags = ExperimentConfig {
                model: a.model,
                dataset: a.dataset,
                ..a.common.flags(t)
            };
            commands::score(&resolve(&a.common.config, flags)?)
        }
        Command::Patch(a) => {
            let granularity = if a.by_position {
                Some("position".to_string())
            } else if a.by_token_type {
                Some("type".to_string())
            } else {
                None
            };
            let flags = ExperimentConfig {
                model: a.model,
                dataset: a.dataset,
                sites: a.sites,
                granularity,
                self_patch: some(a.self_patch),
                keep_contradictions: some(a.keep_contradictions),
                relevance_split: a.relevance_split,
                ..a.common.flags(t)
            };
            commands::patch(&resolve(&a.common.config, flags)?)
        }
        Command::Ablate(a) => {
            let flags = ExperimentConfig {
                model: a.model,
                dataset: a.dataset,
                heads: a.heads,
                ablation_mode: a.mode,
                keep_contradictions: some(a.keep_contradictions),
                ..a.common.flags(t)
            };
            commands::ablate(&resolve(&a.common.config, flags)?)
        }
        Command::Attn(a) => {
            let flags = ExperimentConfig {
                model: a.model,
                dataset: a.dataset,
                heads: a.heads,
                from_type: a.from_type,
                cohort_split: some(a.cohort_split),
                per_token_attention: some(a.per_token),
                ..a.common.flags(t)
            };
            commands::attn(&resolve(&a.common.config, flags)?)
        }
        Command::SweepPosition(a) => {
            let flags = ExperimentConfig {
                model: a.model,
                queries: a.queries,
                corpus: a.docs,
                run: a.run,
                k_docs: a.k_docs,
                grid: a.grid,
                term: a.term,
                filler: a.filler,
                seed: a.seed,
                ..a.common.flags(t)
            };
            commands::sweep_position(&resolve(&a.common.config, flags)?)
        }
        Command::Report(a) => {
            let flags = ExperimentConfig {
                input: a.input,
                format: a.format,
                ..Default::default()
            };
            commands::report(&resolve(&a.config, flags)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
