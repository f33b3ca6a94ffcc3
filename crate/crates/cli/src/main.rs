use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod stages;

use stages::Failure;

#[derive(Debug, Parser)]
#[command(name = "cpfm", version, about = "Coupled flow matching at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset (labeled Gaussian mixture or fingerprints).
    Synth(SynthArgs),
    /// Compute a kernel Gram matrix.
    Kernel(KernelArgs),
    /// Low-rank factor of a Gram matrix.
    Factor(FactorArgs),
    /// Solve for the coupling between data and embeddings.
    Gwot(GwotArgs),
    /// Train the drift network on a solved coupling.
    Train(TrainArgs),
    /// Sample embeddings for data points (x to y).
    Embed(EmbedArgs),
    /// Sample data points for embeddings (y to x).
    Reconstruct(ReconstructArgs),
    /// Decode a regular grid of 2-D embeddings.
    Grid(GridArgs),
    /// Evaluate generated embeddings over independent runs.
    Eval(EvalArgs),
    /// Brute-force consistency checks.
    Oracle(OracleArgs),
    /// kernel, factor, gwot, train and eval in sequence.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    Mixture,
    Fingerprints,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value_t = SynthKind::Mixture)]
    pub kind: SynthKind,
    #[arg(long, default_value_t = 512)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub d_x: usize,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    /// Center separation in units of sigma.
    #[arg(long, default_value_t = 6.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 128)]
    pub bits: usize,
    #[arg(long, default_value_t = 0.1)]
    pub density: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// image, rbf, molecule, neg_sqdist or sqdist.
    #[arg(long, default_value = "image")]
    pub kernel: String,
    /// Bandwidth for image/rbf; the mean pairwise distance when absent.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FactorMethod {
    /// Pivoted Cholesky, falling back to `eigen` on an indefinite matrix.
    Auto,
    /// Pivoted Cholesky (PSD kernels).
    Pivoted,
    /// Eigendecomposition with negative eigenvalues clipped.
    Eigen,
}

#[derive(Debug, Args)]
pub struct FactorArgs {
    #[arg(long)]
    pub gram: PathBuf,
    #[arg(long, default_value_t = 0.95)]
    pub eta: f64,
    #[arg(long, value_enum, default_value_t = FactorMethod::Auto)]
    pub method: FactorMethod,
    /// Output directory (phi.csv, weights.csv, factor.json).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    Gaussian,
    UniformSquare,
    Circle,
}

#[derive(Debug, Args)]
pub struct GwotArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config kernel.
    #[arg(long)]
    pub kernel: Option<String>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Reuse a saved factor instead of computing one from the data.
    #[arg(long)]
    pub factor: Option<PathBuf>,
    /// Draw embeddings from this distribution (overrides the config).
    #[arg(long, value_enum, conflicts_with = "embeddings")]
    pub target: Option<TargetArg>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Explicit embedding CSV instead of a drawn target.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Solve at this ε only, skipping the adaptive schedule.
    #[arg(long)]
    pub fixed_epsilon: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Directory written by `gwot`.
    #[arg(long)]
    pub gwot: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// Training log CSV; next to the checkpoint when absent.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Euler steps.
    #[arg(long, default_value_t = cpfm::sampler::DEFAULT_STEPS)]
    pub steps: usize,
    /// Row i uses seed + i.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long, default_value_t = cpfm::sampler::DEFAULT_STEPS)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = -1.5, allow_hyphen_values = true)]
    pub lo: f64,
    #[arg(long, default_value_t = 1.5, allow_hyphen_values = true)]
    pub hi: f64,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = cpfm::sampler::DEFAULT_STEPS)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    /// Entropic OT objective against a standard-normal reference.
    WassersteinGaussian,
    /// Generalized GWOT objective of the pairing x_i with its generated y_i.
    Gwot,
    Fid,
    Lpips,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_enum, default_value_t = MetricArg::WassersteinGaussian)]
    pub metric: MetricArg,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of independent runs (the config's eval_runs when absent).
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(subcommand)]
    pub command: OracleCommand,
}

#[derive(Debug, Subcommand)]
pub enum OracleCommand {
    /// Run every oracle and print a pass/fail table.
    RunAll {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Stage {
    Kernel,
    Factor,
    Gwot,
    Train,
    Eval,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Rerun from this stage, reusing earlier outputs in `--out`.
    #[arg(long, value_enum, default_value_t = Stage::Kernel)]
    pub from: Stage,
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("CPFM_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|t| *t > 0)
        .ok_or_else(|| Failure::Invalid(format!("CPFM_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Invalid(format!("cannot configure thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), Failure> {
    configure_threads()?;
    match cli.command {
        Command::Synth(a) => stages::synth(&a),
        Command::Kernel(a) => stages::kernel(&a),
        Command::Factor(a) => stages::factor(&a),
        Command::Gwot(a) => stages::gwot(&a),
        Command::Train(a) => stages::train(&a),
        Command::Embed(a) => stages::embed(&a),
        Command::Reconstruct(a) => stages::reconstruct(&a),
        Command::Grid(a) => stages::grid(&a),
        Command::Eval(a) => stages::eval(&a),
        Command::Oracle(a) => match a.command {
            OracleCommand::RunAll { seed } => stages::oracle(seed),
        },
        Command::Pipeline(a) => stages::pipeline(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}
