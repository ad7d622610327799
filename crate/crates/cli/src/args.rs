use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand};

pub const DEFAULT_B_SWEEP: [f64; 3] = [0.005, 0.02, 0.05];
pub const DEFAULT_C_SWEEP: [f64; 3] = [1.0, 2.0, 5.0];

#[derive(Parser, Debug, Clone)]
#[command(name = "npiv", version, about = "Envelope estimation for NPIV models with imperfect instruments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Increase log verbosity (-v info, -vv debug). RUST_LOG takes precedence.
    #[arg(short, long, action = ArgAction::Count, global = true)]
    pub verbose: u8,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Estimate lower/upper envelopes over a (b, c) sweep.
    Estimate(EstimateArgs),
    /// Fit the reduced form only and emit g_hat with a +/- b band.
    ReducedForm(ReducedFormArgs),
    /// Draw a synthetic sample and write it as CSV.
    Simulate(SimulateArgs),
    /// Exact envelopes for a discrete population model.
    Oracle(OracleArgs),
    /// Worst-case bias of a linear functional in a discrete model.
    Bias(BiasArgs),
}

#[derive(Args, Debug, Clone)]
pub struct SeriesArgs {
    /// Dimension of the structural (regressor) spline basis.
    #[arg(long, default_value_t = 10)]
    pub k_dim: usize,
    /// Dimension of the instrument spline basis.
    #[arg(long, default_value_t = 6)]
    pub l_dim: usize,
    /// Spline order (4 = cubic).
    #[arg(long, default_value_t = 4)]
    pub order: usize,
    #[arg(long, default_value_t = 100)]
    pub x_grid: usize,
    #[arg(long, default_value_t = 100)]
    pub z_grid: usize,
    /// The instrument grid spans the trim and 1 - trim sample quantiles of z.
    #[arg(long, default_value_t = 0.005)]
    pub trim: f64,
}

#[derive(Args, Debug, Clone)]
pub struct EstimateArgs {
    /// CSV with columns y, x, z.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub series: SeriesArgs,
    /// Single value of the instrument-invalidity bound b.
    #[arg(long, conflicts_with = "b_sweep")]
    pub b: Option<f64>,
    /// Comma-separated list of b values [default: 0.005,0.02,0.05].
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub b_sweep: Option<Vec<f64>>,
    /// Single curvature bound c for the default shape (0 <= h <= 1, |h''| <= c).
    #[arg(long, conflicts_with_all = ["c_sweep", "shape"])]
    pub c: Option<f64>,
    /// Comma-separated list of c values [default: 1,2,5].
    #[arg(long, value_delimiter = ',', num_args = 1.., conflicts_with = "shape")]
    pub c_sweep: Option<Vec<f64>>,
    /// JSON file with custom shape rows; replaces the c sweep.
    #[arg(long)]
    pub shape: Option<PathBuf>,
    /// Output JSON path (stdout when omitted).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ReducedFormArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub series: SeriesArgs,
    #[arg(long, default_value_t = 0.005)]
    pub b: f64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SimulateArgs {
    /// Structural function: logistic, sine or constant:<value>.
    #[arg(long, default_value = "logistic")]
    pub h0: String,
    /// Instrument shift: zero, constant:<v> or sine:<amplitude>:<frequency>.
    #[arg(long, default_value = "zero")]
    pub u0: String,
    #[arg(long, default_value_t = 0.0)]
    pub z_lo: f64,
    #[arg(long, default_value_t = 1.0)]
    pub z_hi: f64,
    /// Weight of z in x = rho z + (1 - rho) v.
    #[arg(long, default_value_t = 0.6)]
    pub rho: f64,
    /// Loading of the outcome error on v, in [0, 1].
    #[arg(long, default_value_t = 0.5)]
    pub endogeneity: f64,
    #[arg(long, default_value_t = 0.1)]
    pub noise_sd: f64,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct OracleArgs {
    /// JSON file {x_support, z_support, joint_pmf, g0}.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub b: f64,
    #[arg(long, default_value_t = 0.0)]
    pub lo: f64,
    #[arg(long, default_value_t = 1.0)]
    pub hi: f64,
    /// Bound on |h''| via second differences (evenly spaced support only).
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct BiasArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Comma-separated weights, one per x support point.
    #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true, required = true)]
    pub w: Vec<f64>,
    #[arg(long)]
    pub b: f64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}
