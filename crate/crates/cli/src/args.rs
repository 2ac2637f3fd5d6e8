//! Subcommand argument structs. They derive both the CLI parser and serde,
//! so a parsed command (defaults materialized) is exactly what the manifest
//! records.

use std::path::PathBuf;

use clap::{Args, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Subcommand, Serialize, Deserialize, Debug, Clone)]
pub enum Command {
    /// Generate a synthetic word-image repository.
    Gen(GenArgs),
    /// Split a repository into train/validate/test index sets.
    Split(SplitArgs),
    /// Apply salt-and-pepper and speckle noise to every image.
    Noise(NoiseArgs),
    /// Train a model and write checkpoints plus an epoch report.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Recognize a single image.
    Recognize(RecognizeArgs),
    /// Dump per-layer activations and per-step logits for one image.
    Inspect(InspectArgs),
    /// Summarize evaluation CSVs into one table and a bar chart.
    Report(ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Gen(_) => "gen",
            Command::Split(_) => "split",
            Command::Noise(_) => "noise",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Recognize(_) => "recognize",
            Command::Inspect(_) => "inspect",
            Command::Report(_) => "report",
        }
    }

    /// Master seed of the run, when the subcommand consumes randomness.
    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::Gen(a) => Some(a.seed),
            Command::Split(a) => Some(a.seed),
            Command::Noise(a) => Some(a.seed),
            Command::Train(a) => Some(a.seed),
            _ => None,
        }
    }
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
pub struct GenArgs {
    /// Word list, one word per line (UTF-8).
    #[arg(long, conflicts_with = "random_words")]
    pub words: Option<PathBuf>,
    /// Draw this many distinct random words from the vocabulary instead.
    #[arg(long)]
    pub random_words: Option<usize>,
    /// Word length range for --random-words.
    #[arg(long, default_value_t = 7)]
    pub min_len: usize,
    #[arg(long, default_value_t = 10)]
    pub max_len: usize,
    /// Number of synthetic fonts (ids 0..n).
    #[arg(long, default_value_t = 18)]
    pub fonts: u32,
    /// Vocabulary file, one symbol per line; built-in 38 symbols if absent.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (labels.tsv, images.bin, manifest.json).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
pub struct SplitArgs {
    /// Dataset directory containing labels.tsv and images.bin.
    #[arg(long)]
    pub data: PathBuf,
    /// Train,validate,test fractions; must sum to 1.
    #[arg(long, default_value = "0.8,0.1,0.1")]
    pub ratios: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (split.tsv, manifest.json).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
pub struct NoiseArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Salt-and-pepper density in [0,1]; 0 disables.
    #[arg(long, default_value_t = 0.05)]
    pub sp_density: f64,
    /// Speckle variance; 0 disables.
    #[arg(long, default_value_t = 0.04)]
    pub speckle_var: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for the noised repository.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(ValueEnum, Serialize, Deserialize, Debug, Clone, Copy)]
#[serde(rename_all = "lowercase")]
pub enum ConfigName {
    /// Full-size network.
    Paper,
    /// Thin network for fast runs.
    Toy,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = ConfigName::Paper)]
    pub config: ConfigName,
    /// Reuse an existing split file instead of splitting internally.
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Ratios for the internal split when --split is absent.
    #[arg(long, default_value = "0.8,0.1,0.1")]
    pub ratios: String,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 1000)]
    pub iters: u64,
    /// Output directory (last.qocr, best.qocr, epochs.csv, split.tsv).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Which records to evaluate: train, validate, test or all.
    #[arg(long, default_value = "all")]
    pub split: String,
    /// Split file (defaults to split.tsv next to the checkpoint).
    #[arg(long)]
    pub split_file: Option<PathBuf>,
    /// Dataset label in the report row; defaults to the split name.
    #[arg(long)]
    pub label: Option<String>,
    /// Also write per-sample transcripts (samples.csv).
    #[arg(long, default_value_t = false)]
    pub per_sample: bool,
    /// Optional output directory (eval.csv, manifest.json).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
pub struct RecognizeArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Grayscale PGM (P5) image to recognize.
    #[arg(long, conflicts_with_all = ["data", "index"])]
    pub image: Option<PathBuf>,
    /// Repository directory plus record index, as the image source.
    #[arg(long, requires = "index")]
    pub data: Option<PathBuf>,
    #[arg(long, requires = "data")]
    pub index: Option<usize>,
    /// Optional output directory (recognized.txt, manifest.json).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
pub struct InspectArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, conflicts_with_all = ["data", "index"])]
    pub image: Option<PathBuf>,
    #[arg(long, requires = "index")]
    pub data: Option<PathBuf>,
    #[arg(long, requires = "data")]
    pub index: Option<usize>,
    /// Output directory (conv<k>.txt, sequence.txt, logits.csv, argmax.csv).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Serialize, Deserialize, Debug, Clone)]
pub struct ReportArgs {
    /// Evaluation CSVs produced by `eval`.
    #[arg(long, required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    /// Output directory (summary.csv, chart.svg, manifest.json).
    #[arg(long)]
    pub out: PathBuf,
}
