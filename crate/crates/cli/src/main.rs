//! `qdr`: compressed dense retrieval from the command line.

mod commands;
mod error;
mod loader;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "qdr", version, about = "Compressed dense retrieval toolkit")]
struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a clustered synthetic corpus with embeddings, queries, and qrels.
    Synth(SynthArgs),
    /// Fit PCA on embeddings; optionally write the projected corpus.
    FitPca(FitPcaArgs),
    /// Fit a product-quantization codebook.
    FitPq(FitPqArgs),
    /// Encode embeddings with a codebook into a PQ index.
    PqIndex(PqIndexArgs),
    /// Store embeddings as fp16 or 8-bit scalar codes.
    Quantize(QuantizeArgs),
    /// Sign-hash embeddings into packed binary codes.
    HashIndex(HashIndexArgs),
    /// Search an index with query embeddings and write a TREC run.
    Search(SearchArgs),
    /// Train a query head (and PQ centroids) with a ranking loss.
    Train(TrainArgs),
    /// Mine hard negatives from one or more indexes.
    MineNegatives(MineArgs),
    /// Build generated-query training pairs.
    BuildGenq(BuildGenqArgs),
    /// Label mined negatives with cross-encoder margins.
    BuildGpl(BuildGplArgs),
    /// Score a run against qrels.
    Eval(EvalArgs),
    /// Report index sizes and query latency.
    Bench(BenchArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub docs: usize,
    #[arg(long, default_value_t = 100)]
    pub queries: usize,
    #[arg(long, default_value_t = 20)]
    pub clusters: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct FitPcaArgs {
    /// Training embeddings.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 128)]
    pub target_dim: usize,
    /// Scale components to unit variance.
    #[arg(long)]
    pub whiten: bool,
    /// Model output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the projected, normalized corpus (an index for `search --mode pca`).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, requires = "corpus")]
    pub index_out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct FitPqArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Subspaces.
    #[arg(long, default_value_t = qdr::compress::pq::DEFAULT_M_SUBSPACES)]
    pub m: usize,
    /// Centroids per subspace (at most 256).
    #[arg(long, default_value_t = qdr::compress::pq::DEFAULT_K_CENTROIDS)]
    pub k: usize,
    /// Lloyd iterations.
    #[arg(long, default_value_t = qdr::compress::kmeans::DEFAULT_KMEANS_ITERS)]
    pub iters: usize,
    /// Codebook output path (a PQ file with no codes).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct PqIndexArgs {
    #[arg(long)]
    pub codebook: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuantMode {
    Fp16,
    Fp8,
}

#[derive(Args, Debug, Serialize)]
pub struct QuantizeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub mode: QuantMode,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct HashIndexArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMode {
    Flat,
    Pca,
    Pq,
    Binary,
}

#[derive(Args, Debug, Serialize)]
pub struct SearchArgs {
    #[arg(long, value_enum)]
    pub mode: SearchMode,
    #[arg(long)]
    pub index: PathBuf,
    /// PCA model, for `--mode pca`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Query embeddings.
    #[arg(long)]
    pub queries: PathBuf,
    /// Trained query head applied to queries first.
    #[arg(long)]
    pub head: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Hamming candidates reranked in binary mode.
    #[arg(long, default_value_t = qdr::binhash::DEFAULT_K1)]
    pub k1: usize,
    /// TREC run output path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = qdr::data::run::DEFAULT_RUN_TAG)]
    pub tag: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossArg {
    Bpr,
    Jpq,
    MarginMse,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub loss: LossArg,
    /// Training query embeddings.
    #[arg(long)]
    pub queries: PathBuf,
    /// Float passage embeddings, hashed by sign (bpr, margin-mse).
    #[arg(long)]
    pub passages: Option<PathBuf>,
    /// PQ index whose centroids are trained (jpq, margin-mse).
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Positives for per-step hard-negative mining (jpq without --negatives).
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    /// Mined negatives (JSON lines from `mine-negatives`).
    #[arg(long)]
    pub negatives: Option<PathBuf>,
    /// Margin-labelled triplets (JSON lines from `build-gpl`).
    #[arg(long)]
    pub triplets: Option<PathBuf>,
    /// Ranking margin of the hinge loss.
    #[arg(long, default_value_t = qdr::train::trainer::DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Constant relaxation sharpness; the default schedule is sqrt(step + 1).
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    /// Hard-negative retrieval depth for per-step mining.
    #[arg(long, default_value_t = 200)]
    pub depth: usize,
    /// Negatives sampled per query from the mined depth.
    #[arg(long, default_value_t = 8)]
    pub samples: usize,
    /// Trained head output path.
    #[arg(long)]
    pub head_out: PathBuf,
    /// PQ index with the trained centroids.
    #[arg(long)]
    pub index_out: Option<PathBuf>,
    /// Per-step loss trace (CSV).
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct MineArgs {
    /// Index to mine from; repeat to union candidate pools.
    #[arg(long = "index", required = true)]
    pub indexes: Vec<PathBuf>,
    /// PCA model for a projected-corpus index.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub queries: PathBuf,
    /// Judgments naming each query's positive; all judged-relevant docs are excluded.
    #[arg(long)]
    pub qrels: PathBuf,
    #[arg(long, default_value_t = qdr::adapt::DEFAULT_DEPTH)]
    pub depth: usize,
    #[arg(long, default_value_t = 1)]
    pub samples: usize,
    #[arg(long, default_value_t = qdr::binhash::DEFAULT_K1)]
    pub k1: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct BuildGenqArgs {
    /// Corpus (JSON lines with `_id`, `title`, `text`).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Generated queries (JSON lines with `passage_id`, `queries`); when
    /// absent, a seeded keyword-sampling stub generates them.
    #[arg(long)]
    pub generated: Option<PathBuf>,
    #[arg(long, default_value_t = qdr::adapt::DEFAULT_Q_PER_PASSAGE)]
    pub q_per_passage: usize,
    /// Pairs output (JSON lines).
    #[arg(long)]
    pub out: PathBuf,
    /// Qrels linking each generated query to its passage.
    #[arg(long)]
    pub qrels_out: Option<PathBuf>,
    /// Queries as corpus-style JSON lines, for embedding.
    #[arg(long)]
    pub queries_out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct BuildGplArgs {
    #[arg(long)]
    pub negatives: PathBuf,
    /// TSV of query id, doc id, score.
    #[arg(long)]
    pub ce_scores: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Ndcg,
    Recall,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Tsv,
    Json,
}

#[derive(Args, Debug, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,
    /// Repeat for several metrics.
    #[arg(long = "metric", value_enum, default_values_t = [Metric::Ndcg])]
    pub metrics: Vec<Metric>,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = Format::Tsv)]
    pub format: Format,
    /// Output path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct BenchArgs {
    /// Index to measure; repeat for one row each.
    #[arg(long = "index", required = true)]
    pub indexes: Vec<PathBuf>,
    /// PCA model for a projected-corpus index.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Query embeddings; latency is skipped without them.
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = qdr::binhash::DEFAULT_K1)]
    pub k1: usize,
    #[arg(long, default_value_t = 1)]
    pub warmup: usize,
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    /// JSON report path.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

fn run(argv: Vec<String>) -> Result<(), CliError> {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                print!("{e}");
                return Ok(());
            }
            let msg = e.to_string();
            let summary: Vec<&str> = msg
                .lines()
                .map(str::trim)
                .take_while(|l| !l.starts_with("Usage:"))
                .filter(|l| !l.is_empty())
                .collect();
            return Err(CliError::Usage(summary.join(" ").trim_start_matches("error: ").to_string()));
        }
    };
    let seed = cli.seed;
    match &cli.command {
        Command::Synth(a) => commands::synth(a, seed),
        Command::FitPca(a) => commands::fit_pca(a, seed),
        Command::FitPq(a) => commands::fit_pq(a, seed),
        Command::PqIndex(a) => commands::pq_index(a, seed),
        Command::Quantize(a) => commands::quantize(a, seed),
        Command::HashIndex(a) => commands::hash_index(a, seed),
        Command::Search(a) => commands::search(a, seed),
        Command::Train(a) => commands::train(a, seed),
        Command::MineNegatives(a) => commands::mine_negatives(a, seed),
        Command::BuildGenq(a) => commands::build_genq(a, seed),
        Command::BuildGpl(a) => commands::build_gpl(a, seed),
        Command::Eval(a) => commands::eval(a, seed),
        Command::Bench(a) => commands::bench(a, seed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(std::env::args().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
