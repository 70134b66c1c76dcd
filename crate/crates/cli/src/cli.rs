use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Genomic language-model toolkit: tokenization, corpus building, Markov
/// reference models, sequence recovery, variant effect prediction,
/// regulatory sequence design and embedding analysis.
///
/// Option values may also come from a key=value file given with --config
/// (keys are long option names); flags on the command line take precedence.
#[derive(Parser, Debug)]
#[command(name = "genolm", version, propagate_version = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug)]
pub struct Global {
    /// Seed for every random choice in the run
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads [default: $GENOLM_THREADS, else all cores]
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// key=value configuration file
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Write JSON instead of TSV
    #[arg(long, global = true)]
    pub json: bool,
    /// Output path [default: stdout]; tables also get a <out>.meta.json sidecar
    #[arg(long, short, global = true, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Encode sequences to token ids, or decode ids back
    Tokenize(TokenizeArgs),
    /// Train a BPE tokenizer on FASTA sequences
    BpeTrain(BpeTrainArgs),
    /// Build gene-centric corpora and benchmark datasets
    #[command(subcommand)]
    Ingest(IngestCmd),
    /// Train an interpolated Markov language model
    TrainMarkov(TrainMarkovArgs),
    /// Sample sequences from a model, optionally under an activity prefix
    Generate(GenerateArgs),
    /// Sequence recovery benchmark
    #[command(subcommand)]
    Recover(RecoverCmd),
    /// Variant effect prediction by log-likelihood ratio
    #[command(subcommand)]
    Vep(VepCmd),
    /// Regulatory element design utilities
    #[command(subcommand)]
    Design(DesignCmd),
    /// Sequence embedding projection and cluster quality
    #[command(subcommand)]
    Embed(EmbedCmd),
    /// Translate nucleotide sequences with the standard genetic code
    Translate(TranslateArgs),
}

#[derive(Args, Debug)]
pub struct TokenizerArgs {
    /// k-mer size (1-8)
    #[arg(long)]
    pub k: Option<usize>,
    /// Tokenizer JSON written by bpe-train
    #[arg(long, value_name = "FILE")]
    pub tokenizer: Option<String>,
}

#[derive(Args, Debug)]
pub struct ModelArgs {
    /// Model: a .glm file, `uniform`, `bridge:cmd:<command>` or `bridge:tcp:<host:port>`
    #[arg(long)]
    pub model: Option<String>,
    #[command(flatten)]
    pub tokenizer: TokenizerArgs,
    /// Bridge reply timeout in seconds
    #[arg(long)]
    pub timeout: Option<f64>,
}

#[derive(Args, Debug)]
pub struct GenomeArgs {
    /// GenBank flat file (repeatable)
    #[arg(long, value_name = "FILE")]
    pub genbank: Vec<String>,
    /// Genome FASTA, used with --annotations
    #[arg(long, value_name = "FILE")]
    pub fasta: Option<String>,
    /// BED-like table: seq_id, start, end, strand, feature_type[, taxon_group]
    #[arg(long, value_name = "FILE")]
    pub annotations: Option<String>,
    /// Drop region pieces shorter than this [default: 8]
    #[arg(long)]
    pub k_min: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SamplingArgs {
    /// Softmax temperature [default: 1]
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Nucleus mass [default: 1]
    #[arg(long)]
    pub top_p: Option<f64>,
    /// Context budget in tokens [default: the model's own limit]
    #[arg(long)]
    pub max_context: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TokenizeArgs {
    /// Sequences (or, with --decode, space-separated id lists)
    pub items: Vec<String>,
    /// FASTA or one-item-per-line file [default: stdin]
    #[arg(long, value_name = "FILE")]
    pub input: Option<String>,
    #[command(flatten)]
    pub tokenizer: TokenizerArgs,
    /// Phase offset for k-mer encoding [default: 0]
    #[arg(long)]
    pub offset: Option<usize>,
    /// Draw a seeded offset per sequence instead of --offset
    #[arg(long)]
    pub random_offset: bool,
    /// Decode id lists instead of encoding
    #[arg(long)]
    pub decode: bool,
}

#[derive(Args, Debug)]
pub struct BpeTrainArgs {
    /// Training FASTA (repeatable)
    #[arg(long, value_name = "FILE")]
    pub input: Vec<String>,
    /// Final vocabulary size including the 32 special slots
    #[arg(long)]
    pub vocab_size: Option<usize>,
    /// Subsample corpora larger than this many nucleotides [default: 50000000]
    #[arg(long)]
    pub max_training_nt: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum IngestCmd {
    /// Extract annotated regions into a corpus FASTA
    Extract(ExtractArgs),
    /// Gene and nucleotide counts per taxonomic group and feature type
    Stats(StatsArgs),
    /// Build gene-type and taxonomic classification datasets
    GenerTasks(GenerArgs),
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub genome: GenomeArgs,
    /// Also write the genome sequences as FASTA
    #[arg(long, value_name = "FILE")]
    pub genome_out: Option<String>,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    /// Corpus FASTA written by `ingest extract`
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<String>,
    #[command(flatten)]
    pub genome: GenomeArgs,
}

#[derive(Args, Debug)]
pub struct GenerArgs {
    #[command(flatten)]
    pub genome: GenomeArgs,
    /// Sequences per gene class and group [default: 100]
    #[arg(long)]
    pub per_class: Option<usize>,
    /// Comma-separated gene classes [default: CDS,pseudo,tRNA,rRNA,ncRNA,miscRNA]
    #[arg(long)]
    pub gene_types: Option<String>,
    /// Skip intergenic control sequences
    #[arg(long)]
    pub no_control: bool,
    /// Minimum gene-task sequence length [default: 100]
    #[arg(long)]
    pub min_len: Option<usize>,
    /// Longer sequences are cut to a random window of this length [default: 5000]
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Minimum distance of control windows from annotations [default: 1000]
    #[arg(long)]
    pub margin: Option<usize>,
    /// Taxonomic windows per group [default: 0]
    #[arg(long)]
    pub taxonomic_per_group: Option<usize>,
    /// Taxonomic window length [default: 96000]
    #[arg(long)]
    pub window_len: Option<usize>,
    /// Comma-separated taxonomic groups [default: all present]
    #[arg(long)]
    pub groups: Option<String>,
    /// Gene classification dataset TSV
    #[arg(long, value_name = "FILE")]
    pub gene_out: Option<String>,
    /// Taxonomic classification dataset TSV
    #[arg(long, value_name = "FILE")]
    pub taxonomic_out: Option<String>,
}

#[derive(Args, Debug)]
pub struct TrainMarkovArgs {
    /// Plain corpus FASTA (repeatable)
    #[arg(long, value_name = "FILE")]
    pub corpus: Vec<String>,
    /// Labeled TSV (sequence first, band last) trained as [BOS, <band>, tokens, EOS] (repeatable)
    #[arg(long, value_name = "FILE")]
    pub prefixed: Vec<String>,
    #[command(flatten)]
    pub tokenizer: TokenizerArgs,
    /// History length in tokens [default: 5]
    #[arg(long)]
    pub order: Option<usize>,
    /// Add-alpha smoothing, one value or order+1 comma-separated values [default: 0.1]
    #[arg(long)]
    pub alpha: Option<String>,
    /// Interpolation weights for orders 0..=order [default: equal]
    #[arg(long)]
    pub lambdas: Option<String>,
    /// Phase offset for k-mer encoding [default: 0]
    #[arg(long)]
    pub offset: Option<usize>,
    /// Draw a seeded offset per sequence
    #[arg(long)]
    pub random_offset: bool,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Activity prefix: high, mid or low
    #[arg(long)]
    pub prefix: Option<String>,
    /// Nucleotides the generation continues from
    #[arg(long)]
    pub seed_context: Option<String>,
    /// Number of sequences [default: 1]
    #[arg(long)]
    pub n: Option<usize>,
    /// Tokens per sequence [default: 256]
    #[arg(long)]
    pub max_new_tokens: Option<usize>,
    /// Take the most probable token instead of sampling
    #[arg(long)]
    pub greedy: bool,
    #[command(flatten)]
    pub sampling: SamplingArgs,
    /// Generation attempts before giving up on unique outputs [default: 10*n]
    #[arg(long)]
    pub max_attempts: Option<usize>,
    /// FASTA of sequences that outputs must differ from (repeatable)
    #[arg(long, value_name = "FILE")]
    pub dedup_against: Vec<String>,
}

#[derive(Subcommand, Debug)]
pub enum RecoverCmd {
    /// Sample prompt/reference pairs from annotated genomes
    Build(RecoverBuildArgs),
    /// Score a model on a recovery dataset
    Run(RecoverRunArgs),
}

#[derive(Args, Debug)]
pub struct RecoverBuildArgs {
    #[command(flatten)]
    pub genome: GenomeArgs,
    /// Prompt length in nucleotides [default: 6144]
    #[arg(long)]
    pub prompt_len: Option<usize>,
    /// Reference length in nucleotides [default: 30]
    #[arg(long)]
    pub predict_len: Option<usize>,
    /// Items per taxonomic group [default: 100]
    #[arg(long)]
    pub per_group: Option<usize>,
    /// Reference start: region-start or uniform [default: region-start]
    #[arg(long)]
    pub anchor: Option<String>,
    /// Comma-separated groups (`unassigned` for none) [default: all present]
    #[arg(long)]
    pub groups: Option<String>,
}

#[derive(Args, Debug)]
pub struct RecoverRunArgs {
    /// Dataset TSV written by `recover build`
    #[arg(long, value_name = "FILE")]
    pub dataset: Option<String>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma-separated prediction lengths [default: 30]
    #[arg(long)]
    pub predict_lens: Option<String>,
    /// Sample instead of greedy decoding
    #[arg(long)]
    pub sample: bool,
    #[command(flatten)]
    pub sampling: SamplingArgs,
    /// Per-item results TSV
    #[arg(long, value_name = "FILE")]
    pub items_out: Option<String>,
}

#[derive(Subcommand, Debug)]
pub enum VepCmd {
    /// Score single-nucleotide variants
    Score(VepScoreArgs),
    /// AUROC and AUPRC of labeled scores
    Eval(VepEvalArgs),
}

#[derive(Args, Debug)]
pub struct VepScoreArgs {
    /// Genome FASTA
    #[arg(long, value_name = "FILE")]
    pub genome: Option<String>,
    /// Variant TSV: seq_id, pos (1-based), ref, alt[, label]
    #[arg(long, value_name = "FILE")]
    pub variants: Option<String>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Variant offset within the scored token: token-end, average or an integer [default: token-end]
    #[arg(long)]
    pub phase: Option<String>,
    /// Context window in nucleotides [default: 1024]
    #[arg(long)]
    pub window: Option<usize>,
    /// Masked reading: variant token masked with context on both sides
    #[arg(long)]
    pub masked: bool,
}

#[derive(Args, Debug)]
pub struct VepEvalArgs {
    /// Score TSV written by `vep score`
    #[arg(long, value_name = "FILE")]
    pub scores: Option<String>,
}

#[derive(Subcommand, Debug)]
pub enum DesignCmd {
    /// Assign activity bands by quartile
    Label(DesignLabelArgs),
    /// Fit the k-mer ridge activity predictor
    Fit(DesignFitArgs),
    /// Rank candidates with a predictor and select an oligo pool
    Rank(DesignRankArgs),
    /// Per-base contribution scores
    Contrib(DesignContribArgs),
}

#[derive(Args, Debug)]
pub struct ActivityInput {
    /// Activity TSV: sequence, dev_activity, hk_activity[, split]
    #[arg(long, value_name = "FILE")]
    pub input: Option<String>,
    /// Activity readout: dev or hk
    #[arg(long)]
    pub class: Option<String>,
    /// Use only rows with this split value
    #[arg(long)]
    pub split: Option<String>,
}

#[derive(Args, Debug)]
pub struct DesignLabelArgs {
    #[command(flatten)]
    pub activity: ActivityInput,
}

#[derive(Args, Debug)]
pub struct DesignFitArgs {
    #[command(flatten)]
    pub activity: ActivityInput,
    /// k-mer size of the features [default: 5]
    #[arg(long)]
    pub kmer: Option<usize>,
    /// Ridge strength [default: 1.0]
    #[arg(long)]
    pub mu: Option<f64>,
}

#[derive(Args, Debug)]
pub struct DesignRankArgs {
    /// Predictor JSON written by `design fit`
    #[arg(long, value_name = "FILE")]
    pub predictor: Option<String>,
    /// Candidate pool as GROUP=FASTA (repeatable)
    #[arg(long, value_name = "GROUP=FILE")]
    pub pool: Vec<String>,
    /// Highest-scoring picks [default: 0]
    #[arg(long)]
    pub top: Option<usize>,
    /// Group the top picks come from [default: high]
    #[arg(long)]
    pub top_group: Option<String>,
    /// Lowest-scoring picks [default: 0]
    #[arg(long)]
    pub bottom: Option<usize>,
    /// Group the bottom picks come from [default: low]
    #[arg(long)]
    pub bottom_group: Option<String>,
    /// Random picks [default: 0]
    #[arg(long)]
    pub random: Option<usize>,
    /// Group the random picks come from [default: mid]
    #[arg(long)]
    pub random_group: Option<String>,
}

#[derive(Args, Debug)]
pub struct DesignContribArgs {
    /// Predictor JSON written by `design fit`
    #[arg(long, value_name = "FILE")]
    pub predictor: Option<String>,
    /// Sequences to profile
    pub sequences: Vec<String>,
    /// FASTA or one-sequence-per-line file [default: stdin]
    #[arg(long, value_name = "FILE")]
    pub input: Option<String>,
}

#[derive(Subcommand, Debug)]
pub enum EmbedCmd {
    /// Principal-component projection of sequence embeddings
    Project(EmbedProjectArgs),
    /// Silhouette score of labeled points
    Silhouette(EmbedSilhouetteArgs),
}

#[derive(Args, Debug)]
pub struct EmbedProjectArgs {
    /// FASTA whose headers end in |label; embedded as k-mer profiles
    #[arg(long, value_name = "FILE")]
    pub input: Option<String>,
    /// Precomputed embedding TSV: id, label, values...
    #[arg(long, value_name = "FILE")]
    pub embeddings: Option<String>,
    /// k-mer size for profile embeddings [default: 4]
    #[arg(long)]
    pub kmer: Option<usize>,
    /// Output dimensions [default: 2]
    #[arg(long)]
    pub dims: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EmbedSilhouetteArgs {
    /// Point TSV: id, label, coordinates...
    #[arg(long, value_name = "FILE")]
    pub input: Option<String>,
    /// euclidean or cosine [default: euclidean]
    #[arg(long)]
    pub metric: Option<String>,
}

#[derive(Args, Debug)]
pub struct TranslateArgs {
    /// Sequences
    pub sequences: Vec<String>,
    /// FASTA or one-sequence-per-line file [default: stdin]
    #[arg(long, value_name = "FILE")]
    pub input: Option<String>,
    /// Reading frame 0-2 [default: 0]
    #[arg(long)]
    pub frame: Option<usize>,
}
