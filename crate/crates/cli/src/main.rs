use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use polyset::dataset::{SplitUnit, Target};
use polyset::encode::EmbeddingKind;
use polyset::ensemble::SamplingMode;
use polyset::mwd::Family;
use serde::Serialize;

mod commands;
mod svg;

#[derive(Parser, Debug)]
#[command(name = "polyset", version, about = "Molar-mass-distribution ensembles, embeddings and tail-moment regression")]
pub struct Cli {
    /// Master seed for generation, splitting and training.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON file with `dataset`, `encoder`, `train` and `split` sections.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "polyset-out")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate the synthetic corpus and its coverage tables.
    GenDataset(GenArgs),
    /// Analytic and ensemble moments of one distribution.
    Moments(MomentsArgs),
    /// Write embeddings for every record of a corpus.
    Embed(EmbedArgs),
    /// Train a regressor on one representation and evaluate it.
    TrainEval(TrainArgs),
    /// PCA of embeddings within an iso-(Mn, Đ) subset.
    Pca(PcaArgs),
    /// Per-group spread of the tail moments.
    DegeneracyReport(CorpusArg),
}

/// Accepts plain integers and integral scientific notation such as `1e4`.
fn count(s: &str) -> Result<usize, String> {
    if let Ok(n) = s.parse::<usize>() {
        return Ok(n);
    }
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v <= 9_007_199_254_740_992.0 {
        Ok(v as usize)
    } else {
        Err(format!("`{s}` is not a non-negative integer"))
    }
}

#[derive(Args, Debug, Serialize)]
pub struct GenArgs {
    /// Total records; must be a multiple of the variants per group.
    #[arg(long, value_parser = count)]
    pub records: Option<usize>,
    #[arg(long, value_parser = count)]
    pub groups: Option<usize>,
    #[arg(long, value_parser = count)]
    pub variants: Option<usize>,
    /// Chains per ensemble.
    #[arg(long, value_parser = count)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub mn_min: Option<f64>,
    #[arg(long)]
    pub mn_max: Option<f64>,
    #[arg(long)]
    pub disp_min: Option<f64>,
    #[arg(long)]
    pub disp_max: Option<f64>,
    #[arg(long)]
    pub m0: Option<f64>,
    #[arg(long)]
    pub mode: Option<SamplingMode>,
    /// Make every variant a full-span lognormal.
    #[arg(long)]
    pub no_family_cycling: bool,
    /// Store both embeddings in each record.
    #[arg(long)]
    pub embed: bool,
    /// Corpus path; defaults to `<out-dir>/corpus.jsonl`.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct MomentsArgs {
    #[arg(long, default_value = "lognormal")]
    pub family: Family,
    #[arg(long)]
    pub mn: f64,
    #[arg(long)]
    pub disp: f64,
    #[arg(long, default_value_t = 100.0)]
    pub m0: f64,
    #[arg(long, value_parser = count, default_value = "2048")]
    pub chains: usize,
    #[arg(long, default_value_t = polyset::ensemble::DEFAULT_SPAN_SIGMAS)]
    pub span: f64,
    #[arg(long, default_value = "grid")]
    pub mode: SamplingMode,
}

#[derive(Args, Debug, Serialize, Default)]
pub struct EncoderArgs {
    #[arg(long, value_parser = count)]
    pub n_rbf: Option<usize>,
    #[arg(long)]
    pub center_lo: Option<f64>,
    #[arg(long)]
    pub center_hi: Option<f64>,
    #[arg(long)]
    pub bandwidth: Option<f64>,
    #[arg(long)]
    pub no_raw_logmass: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct EmbedArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long = "repr", default_value = "polyset")]
    pub representation: EmbeddingKind,
    #[command(flatten)]
    pub encoder: EncoderArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Existing split file; created from the split seed when absent.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub split_seed: Option<u64>,
    #[arg(long)]
    pub split_unit: Option<SplitUnit>,
    #[arg(long = "repr", default_value = "polyset")]
    pub representation: EmbeddingKind,
    #[arg(long)]
    pub target: Option<Target>,
    #[arg(long, value_parser = count)]
    pub epochs: Option<usize>,
    #[arg(long, value_parser = count)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, value_parser = count)]
    pub batch_size: Option<usize>,
    /// Hidden widths, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = count)]
    pub hidden: Option<Vec<usize>>,
    /// Feed PolySet embeddings to the network unscaled.
    #[arg(long)]
    pub raw_embeddings: bool,
    #[command(flatten)]
    pub encoder: EncoderArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct PcaArgs {
    /// Corpus to select from. Without it an iso-(Mn, Đ) subset is
    /// generated from `--mn`, `--disp` and `--records`.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub group: Option<u64>,
    #[arg(long)]
    pub mn: Option<f64>,
    #[arg(long)]
    pub disp: Option<f64>,
    /// Relative tolerance when matching nominal Mn and Đ in a corpus.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Size of a generated subset.
    #[arg(long, value_parser = count, default_value = "40")]
    pub records: usize,
    #[arg(long = "repr", default_value = "polyset")]
    pub representation: EmbeddingKind,
    #[command(flatten)]
    pub encoder: EncoderArgs,
}

#[derive(Args, Debug, Serialize)]
pub struct CorpusArg {
    #[arg(long)]
    pub corpus: PathBuf,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = commands::run(&cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
