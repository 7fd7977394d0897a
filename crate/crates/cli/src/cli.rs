use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "ecga", version, about = "eCGA runs, population sizing sweeps and predictors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Execute one run and print it as JSON.
    Run(RunArgs),
    /// Bisect the smallest population reaching the target success rate.
    Bisect(BisectArgs),
    /// Inheritance probability sweep.
    #[command(name = "sweep-pi")]
    SweepPi(SweepPiArgs),
    /// Mutation scaling sweep over the number of trap blocks.
    #[command(name = "sweep-m")]
    SweepM(SweepMArgs),
    /// Print a closed-form predictor as CSV.
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat key=value file; keys are long flag names. Flags given on the
    /// command line win over the file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Per-generation log lines on stderr.
    #[arg(long)]
    pub verbose: bool,
    /// Worker threads for replicate batches [default: 1].
    #[arg(long)]
    pub workers: Option<usize>,
    /// Base seed [default: 1].
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct AlgorithmArgs {
    /// onemax:<len> or trap:<m>x<k>[:d] [default: onemax:100].
    #[arg(long)]
    pub problem: Option<String>,
    /// ecga, ecga-inheritance or selectomutative [default: ecga].
    #[arg(long)]
    pub algo: Option<String>,
    /// Tournament size [default: 8].
    #[arg(long)]
    pub s: Option<usize>,
    /// Inheritance probability [default: 0].
    #[arg(long = "p-i")]
    pub p_i: Option<f64>,
    /// bernoulli or quota [default: bernoulli].
    #[arg(long)]
    pub sampling: Option<String>,
    /// Generation cap [default: 5 * genome length].
    #[arg(long = "max-gens")]
    pub max_gens: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BisectionArgs {
    /// Target failure rate [default: 1/m].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Runs per probed population size [default: 30].
    #[arg(long = "probe-runs")]
    pub probe_runs: Option<usize>,
    /// Initial lower bracket [default: 16].
    #[arg(long = "n-low")]
    pub n_low: Option<usize>,
    /// Initial upper bracket [default: 256].
    #[arg(long = "n-high")]
    pub n_high: Option<usize>,
    /// Relative bracket width at which bisection stops [default: 0.1].
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Largest population the bracket may grow to [default: 1048576].
    #[arg(long)]
    pub cap: Option<usize>,
    /// Re-check the returned size on fresh seeds [default: true].
    #[arg(long)]
    pub validate: Option<bool>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub algorithm: AlgorithmArgs,
    /// Population size [default: 1000].
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BisectArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub algorithm: AlgorithmArgs,
    #[command(flatten)]
    pub bisection: BisectionArgs,
    /// Output CSV path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepPiArgs {
    #[command(flatten)]
    pub common: Common,
    /// [default: onemax:100].
    #[arg(long)]
    pub problem: Option<String>,
    /// Inheritance probabilities, start:stop:step or a comma list
    /// [default: 0:0.9:0.1].
    #[arg(long)]
    pub grid: Option<String>,
    /// Measurement runs per cell [default: 100].
    #[arg(long)]
    pub runs: Option<usize>,
    /// Tournament size [default: 8].
    #[arg(long)]
    pub s: Option<usize>,
    #[command(flatten)]
    pub bisection: BisectionArgs,
    /// Output CSV path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepMArgs {
    #[command(flatten)]
    pub common: Common,
    /// Trap block size [default: 4].
    #[arg(long)]
    pub k: Option<usize>,
    /// Block counts, comma list or start:stop:step [default: 5,10,20,40].
    #[arg(long = "m-grid")]
    pub m_grid: Option<String>,
    /// Trap deception gap [default: 1].
    #[arg(long)]
    pub d: Option<f64>,
    /// Measurement runs per cell [default: 100].
    #[arg(long)]
    pub runs: Option<usize>,
    /// Tournament size [default: 8].
    #[arg(long)]
    pub s: Option<usize>,
    #[command(flatten)]
    pub bisection: BisectionArgs,
    /// Output CSV path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fit summary CSV path [default: <out stem>_fit.csv next to --out].
    #[arg(long = "fit-out")]
    pub fit_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Config file, as for the other subcommands.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Predictor: 16|ratio, 17|speedup, 13|n-inheritance, 15|nfe-inheritance,
    /// 14|convergence, 3|n-ecga, 8|bounds, 9|nfe-mut, 10|eta-mut.
    #[arg(long)]
    pub eq: Option<String>,
    /// Grid over p_i or m, start:stop:step or a comma list
    /// [default: 0:0.9:0.1 for p_i, 5,10,20,40 for m].
    #[arg(long)]
    pub grid: Option<String>,
    /// Block size [default: 4].
    #[arg(long)]
    pub k: Option<usize>,
    /// Block count [default: 10].
    #[arg(long)]
    pub m: Option<usize>,
    /// Proportionality constant [default: 1].
    #[arg(long)]
    pub c: Option<f64>,
    /// sigma_BB / d [default: 1].
    #[arg(long = "noise-to-signal")]
    pub noise_to_signal: Option<f64>,
    /// Failure probability [default: 1/m].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Fitness variance [default: 1].
    #[arg(long = "sigma-f2")]
    pub sigma_f2: Option<f64>,
    /// Inheritance noise variance [default: 0].
    #[arg(long = "sigma-n2")]
    pub sigma_n2: Option<f64>,
    /// Population size for the evaluation-count predictor [default: 1000].
    #[arg(long)]
    pub n: Option<f64>,
    /// Convergence time for the evaluation-count predictor [default: 10].
    #[arg(long = "t-c")]
    pub t_c: Option<f64>,
}
