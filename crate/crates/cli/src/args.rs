use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "clickstat",
    version,
    about = "Click statistics of multi-pixel photon detectors"
)]
pub struct Cli {
    /// File of `key = value` lines supplying any long flag; flags given on
    /// the command line take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Worker threads for simulation and resampling (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analytic click distribution with Q parameters.
    Model(ModelArgs),
    /// Monte Carlo click histogram, optionally with pulse areas.
    Simulate(SimulateArgs),
    /// Decompose a pulse-area sample into click statistics.
    Fit(FitArgs),
    /// Crosstalk probability from low-intensity clicks or a Q value.
    CalibrateCrosstalk(CalibrateArgs),
    /// Q_B and Q_M of coherent or thermal light over an intensity grid.
    Qscan(QscanArgs),
    /// Naive click-to-photon inversion.
    Invert(InvertArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum State {
    Coherent,
    Thermal,
    Fock,
}

#[derive(Debug, Clone, Args)]
pub struct DetectorArgs {
    /// Number of pixels N.
    #[arg(long)]
    pub pixels: usize,
    /// Detection efficiency.
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,
    /// Mean dark counts per measurement window.
    #[arg(long, default_value_t = 0.0)]
    pub nu: f64,
    /// Crosstalk probability per pixel pair.
    #[arg(long, default_value_t = 0.0)]
    pub chi: f64,
    /// Probability that a pixel is dead when the pulse arrives.
    #[arg(long, default_value_t = 0.0)]
    pub preclick: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SourceArgs {
    #[arg(long, value_enum)]
    pub state: State,
    /// Mean photon number of coherent or thermal light.
    #[arg(long)]
    pub mean_photons: Option<f64>,
    /// Photon number of a Fock state.
    #[arg(long)]
    pub n: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Directory receiving the output files (created if missing).
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
#[command(args_override_self = true, allow_negative_numbers = true)]
pub struct ModelArgs {
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
#[command(args_override_self = true, allow_negative_numbers = true)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long)]
    pub trials: u64,
    #[arg(long, env = "CLICKSTAT_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Also write one pulse area per trial.
    #[arg(long)]
    pub areas: bool,
    #[command(flatten)]
    pub peaks: PeakArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PeakArgs {
    /// Area of one click.
    #[arg(long, default_value_t = 100.0)]
    pub delta_x: f64,
    /// Area of zero clicks.
    #[arg(long, default_value_t = 0.0)]
    pub x0: f64,
    /// Electronic-noise width relative to delta_x.
    #[arg(long, default_value_t = 0.18)]
    pub sigma0_ratio: f64,
    /// Per-click gain spread relative to delta_x.
    #[arg(long, default_value_t = 0.0037)]
    pub sigma1_ratio: f64,
}

#[derive(Debug, Args)]
#[command(args_override_self = true, allow_negative_numbers = true)]
pub struct FitArgs {
    /// CSV with one pulse area per line; a header line is optional.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub pixels: usize,
    /// Histogram bins (default: Freedman-Diaconis).
    #[arg(long)]
    pub bins: Option<usize>,
    /// Known single-click area; skips the spacing search.
    #[arg(long)]
    pub delta_x: Option<f64>,
    /// The zero-click area is taken as the peak position nearest this value.
    #[arg(long, default_value_t = 0.0)]
    pub x0_hint: f64,
    #[arg(long, default_value_t = 0.0037)]
    pub sigma1_ratio: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = clickstat::estimators::DEFAULT_RESAMPLES)]
    pub resamples: usize,
    #[arg(long, env = "CLICKSTAT_SEED", default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
#[command(args_override_self = true, allow_negative_numbers = true)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub pixels: usize,
    /// Low-intensity Q_B, used instead of a sample.
    #[arg(long, conflicts_with_all = ["clicks", "histogram"])]
    pub q: Option<f64>,
    /// CSV with one click number per line.
    #[arg(long, conflicts_with = "histogram")]
    pub clicks: Option<PathBuf>,
    /// CSV of `k,count` rows as written by `simulate`.
    #[arg(long)]
    pub histogram: Option<PathBuf>,
    #[arg(long, default_value_t = clickstat::estimators::DEFAULT_RESAMPLES)]
    pub resamples: usize,
    #[arg(long, env = "CLICKSTAT_SEED", default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClassicalState {
    Coherent,
    Thermal,
}

#[derive(Debug, Args)]
#[command(args_override_self = true, allow_negative_numbers = true)]
pub struct QscanArgs {
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[arg(long, value_enum, default_value_t = ClassicalState::Coherent)]
    pub state: ClassicalState,
    /// Smallest mean photon number per pixel.
    #[arg(long, default_value_t = 1e-3)]
    pub mu_min: f64,
    /// Largest mean photon number per pixel.
    #[arg(long, default_value_t = 1.5)]
    pub mu_max: f64,
    #[arg(long, default_value_t = 60)]
    pub points: usize,
    /// Space grid points linearly instead of logarithmically.
    #[arg(long)]
    pub linear: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
#[command(args_override_self = true, allow_negative_numbers = true)]
pub struct InvertArgs {
    #[arg(long)]
    pub pixels: usize,
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,
    /// Largest photon number solved for (default: N).
    #[arg(long)]
    pub n_max: Option<usize>,
    /// CSV with one click number per line.
    #[arg(long, conflicts_with = "histogram")]
    pub clicks: Option<PathBuf>,
    /// CSV of `k,count` rows as written by `simulate`.
    #[arg(long)]
    pub histogram: Option<PathBuf>,
    /// Invert the analytic distribution of this state instead of data.
    #[arg(long, value_enum, conflicts_with_all = ["clicks", "histogram"])]
    pub state: Option<State>,
    #[arg(long)]
    pub mean_photons: Option<f64>,
    #[arg(long)]
    pub n: Option<u64>,
    #[command(flatten)]
    pub output: OutputArgs,
}
