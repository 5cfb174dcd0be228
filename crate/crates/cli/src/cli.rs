use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "memsig",
    version,
    about = "Train character language models, probe their recurrent states and build memory signatures"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize or generate a corpus and write its train/dev/eval split
    CorpusPrepare(CorpusPrepareArgs),
    /// Train a character language model
    LmTrain(LmTrainArgs),
    /// Continue training a checkpoint on a fraction of another corpus
    LmRetrain(LmRetrainArgs),
    /// Report the perplexity of a checkpoint
    LmEval(LmEvalArgs),
    /// Count a smoothed n-gram model
    NgramTrain(NgramTrainArgs),
    /// Train back-prediction decoders on frozen model states
    Probe(ProbeArgs),
    /// Compile one layer's probe evaluations into a signature CSV
    SignatureBuild(SignatureBuildArgs),
    /// Cell-wise difference A - B of two signature CSVs
    SignatureDiff(SignatureDiffArgs),
    /// Render a signature or diff CSV as an SVG heatmap
    Render(RenderArgs),
    /// Re-run the command recorded in a run manifest
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::CorpusPrepare(_) => "corpus-prepare",
            Command::LmTrain(_) => "lm-train",
            Command::LmRetrain(_) => "lm-retrain",
            Command::LmEval(_) => "lm-eval",
            Command::NgramTrain(_) => "ngram-train",
            Command::Probe(_) => "probe",
            Command::SignatureBuild(_) => "signature-build",
            Command::SignatureDiff(_) => "signature-diff",
            Command::Render(_) => "render",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generate {
    /// Lines cycling through --pattern
    Periodic,
    /// Independent uniform symbols
    Iid,
    /// First domain of a disjoint-bigram Markov pair
    MarkovA,
    /// Second domain of a disjoint-bigram Markov pair
    MarkovB,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CorpusPrepareArgs {
    /// Text file to normalize, one segment per line
    #[arg(long, required_unless_present = "generate", conflicts_with = "generate")]
    pub input: Option<PathBuf>,
    /// Generate a synthetic corpus instead of reading --input
    #[arg(long, value_enum)]
    pub generate: Option<Generate>,
    /// Period pattern for --generate periodic
    #[arg(long, default_value = "abcdefgh")]
    pub pattern: String,
    /// Number of generated lines
    #[arg(long, default_value_t = 1000)]
    pub lines: usize,
    /// Shortest generated line
    #[arg(long, default_value_t = 40)]
    pub min_len: usize,
    /// Longest generated line
    #[arg(long, default_value_t = 120)]
    pub max_len: usize,
    /// Successors per symbol in the Markov domains
    #[arg(long, default_value_t = 3)]
    pub fanout: usize,
    /// Seed of the Markov pair; both domains must share it
    #[arg(long, default_value_t = 7)]
    pub chain_seed: u64,
    /// Symbol set file, one symbol per line (default: a-z, space, . , # ')
    #[arg(long)]
    pub symbols: Option<PathBuf>,
    /// Seed for generation and for the split
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Fraction of segments for training
    #[arg(long, default_value_t = 0.8)]
    pub train_ratio: f64,
    /// Fraction of segments for early stopping
    #[arg(long, default_value_t = 0.1)]
    pub dev_ratio: f64,
    /// Output directory for train.txt, dev.txt, eval.txt and symbols.txt
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CorpusArgs {
    /// Text file, or a directory holding train.txt, dev.txt and eval.txt
    #[arg(long)]
    pub corpus: PathBuf,
    /// Seed of the 80/10/10 split applied to a single-file corpus
    #[arg(long, default_value_t = 1)]
    pub split_seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    /// Maximum training epochs
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    /// Epochs without dev improvement before stopping
    #[arg(long, default_value_t = 2)]
    pub patience: usize,
    /// Windows per batch
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    /// Truncated-BPTT window length
    #[arg(long, default_value_t = 64)]
    pub window: usize,
    /// Adam learning rate
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Dropout keep probability between layers
    #[arg(long, default_value_t = 1.0)]
    pub keep_prob: f64,
    /// Global gradient-norm clip
    #[arg(long, default_value_t = 5.0)]
    pub clip_norm: f64,
    /// Batch rows per parallel gradient shard
    #[arg(long, default_value_t = 8)]
    pub shard_rows: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Lstm,
    Gru,
    /// LSTM with a bigram-weighted rank-one basis kernel
    Factorized,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LmTrainArgs {
    /// Recurrent cell
    #[arg(long, value_enum, default_value_t = Arch::Lstm)]
    pub arch: Arch,
    /// Number of recurrent layers
    #[arg(long, default_value_t = 1, conflicts_with = "shape")]
    pub layers: usize,
    /// State size per layer
    #[arg(long, default_value_t = 160, conflicts_with = "shape")]
    pub state: usize,
    /// LAYERS,STATE shorthand, e.g. 4,320
    #[arg(long)]
    pub shape: Option<String>,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Symbol set file, one symbol per line (default: a-z, space, . , # ')
    #[arg(long)]
    pub symbols: Option<PathBuf>,
    /// Seed for initialization, batching and dropout
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Checkpoint to write
    #[arg(long, default_value = "model.ckpt")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LmRetrainArgs {
    /// Checkpoint to continue from
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Fraction of the training segments to use
    #[arg(long, default_value_t = 1.0)]
    pub fraction: f64,
    /// Seed for sampling, batching and dropout
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Checkpoint to write
    #[arg(long, default_value = "retrained.ckpt")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Eval,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LmEvalArgs {
    /// Checkpoint to evaluate
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Partition to score
    #[arg(long, value_enum, default_value_t = Split::Eval)]
    pub split: Split,
    /// Also write the report as JSON
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct NgramTrainArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Symbol set file, one symbol per line (default: a-z, space, . , # ')
    #[arg(long)]
    pub symbols: Option<PathBuf>,
    /// Model order n
    #[arg(long, default_value_t = 5)]
    pub order: usize,
    /// Additive smoothing constant
    #[arg(long, default_value_t = 0.01)]
    pub add_k: f64,
    /// Model file to write
    #[arg(long, default_value = "model.ngram.json")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StateArg {
    /// LSTM cell state c
    Cell,
    /// Output state h
    Output,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ProbeArgs {
    /// Probe job file (key = value lines) replacing the model, corpus and sweep flags
    #[arg(
        long,
        conflicts_with_all = ["checkpoint", "ngram", "corpus", "max_delta", "layers", "state_choice", "depth", "grid", "seed"]
    )]
    pub manifest: Option<PathBuf>,
    /// Language-model checkpoint to probe
    #[arg(long, conflicts_with = "ngram", required_unless_present_any = ["ngram", "manifest"])]
    pub checkpoint: Option<PathBuf>,
    /// n-gram model to probe
    #[arg(long)]
    pub ngram: Option<PathBuf>,
    /// Text file, or a directory holding train.txt, dev.txt and eval.txt
    #[arg(long, required_unless_present = "manifest")]
    pub corpus: Option<PathBuf>,
    /// Seed of the 80/10/10 split applied to a single-file corpus
    #[arg(long, default_value_t = 1)]
    pub split_seed: u64,
    /// Largest look-back distance
    #[arg(long, default_value_t = 8)]
    pub max_delta: usize,
    /// "all" or a comma-separated list of layers numbered from 1
    #[arg(long, default_value = "all")]
    pub layers: String,
    /// Recorded state (default: cell for LSTMs, output for GRUs)
    #[arg(long, value_enum)]
    pub state_choice: Option<StateArg>,
    /// Factorized models only: "base" zeroes λ, an index keeps that single
    /// basis (previous symbol × |V| + next symbol) at weight 1
    #[arg(long, conflicts_with = "ngram")]
    pub basis: Option<String>,
    /// Hidden layers per decoder
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    /// Dropout keep probabilities swept per decoder
    #[arg(long, default_value = "0.5,0.6,0.7,0.8,0.9,1.0")]
    pub grid: String,
    /// Decoder training seed
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads for decoder jobs (0: one per core)
    #[arg(long, env = "MEMSIG_JOBS", default_value_t = 0)]
    pub jobs: usize,
    /// Decoder parameter floor (default: the probed layer's kernel size, 0 for n-grams)
    #[arg(long)]
    pub floor: Option<usize>,
    /// Smallest decoder hidden width
    #[arg(long, default_value_t = 32)]
    pub min_width: usize,
    /// Maximum decoder epochs
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    /// Decoder epochs without eval improvement before stopping
    #[arg(long, default_value_t = 3)]
    pub patience: usize,
    /// Decoder minibatch size
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    /// Decoder Adam learning rate
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Training pairs kept per (delta, layer)
    #[arg(long, default_value_t = 20000)]
    pub max_train_pairs: usize,
    /// Evaluation pairs kept per (delta, layer)
    #[arg(long, default_value_t = 10000)]
    pub max_eval_pairs: usize,
    /// Output directory, one evaluation file per (delta, layer)
    #[arg(long, default_value = "probe")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SignatureBuildArgs {
    /// Directory written by `probe`
    #[arg(long)]
    pub probe_dir: PathBuf,
    /// Layer to compile, numbered from 1
    #[arg(long, default_value_t = 1)]
    pub layer: usize,
    /// Pooling of per-symbol recall into the printed marginals
    #[arg(long, value_enum, default_value_t = MarginalArg::Weighted)]
    pub marginal: MarginalArg,
    /// Signature CSV to write
    #[arg(long, default_value = "signature.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SignatureDiffArgs {
    /// Minuend signature CSV
    pub a: PathBuf,
    /// Subtrahend signature CSV
    pub b: PathBuf,
    /// Symbol set file when the CSVs have no manifest
    #[arg(long)]
    pub symbols: Option<PathBuf>,
    /// Diff CSV to write
    #[arg(long, default_value = "diff.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MarginalArg {
    /// Support-weighted, equal to the pooled decoder accuracy
    Weighted,
    /// Plain mean over symbols present at each delta
    Unweighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PaletteArg {
    /// White to dark purple over [0, 1]
    Purple,
    /// Dark to light green over [0, 1]
    Green,
    /// Blue, white, red over [-1, 1]
    Diverging,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RenderArgs {
    /// Signature or diff CSV
    pub input: PathBuf,
    /// Color map (default: purple for signatures, diverging for diffs)
    #[arg(long, value_enum)]
    pub palette: Option<PaletteArg>,
    /// Heading text (default: taken from the CSV manifest)
    #[arg(long)]
    pub title: Option<String>,
    /// Symbol set file when the CSV has no manifest
    #[arg(long)]
    pub symbols: Option<PathBuf>,
    /// SVG to write (default: the input path with an .svg extension)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReplayArgs {
    /// Run manifest written next to an earlier output
    pub manifest: PathBuf,
}
