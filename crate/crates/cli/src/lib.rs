//! Command implementations behind the `nlpca` binary.
//!
//! Every command validates its configuration and loads its inputs before
//! touching the output directory, and writes only inside that directory.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use nlpca::data::Pooling;
use nlpca::gibbs::{HyperParams, LatentPrior};
use nlpca::pca::Dataset;

mod commands;
mod output;

pub use commands::{
    cmd_digits_demo, cmd_fit, cmd_sphere_demo, cmd_vmf_diag, DigitsSummary, FitSummary,
    MethodMetrics, SphereSummary, VmfDiagReport,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

pub const DEFAULT_SEED: u64 = 2024;

#[derive(Debug, Parser)]
#[command(
    name = "nlpca",
    version,
    about = "Nonlinear PCA with MRF-smoothed local orthonormal frames"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Noisy points on the unit sphere, model against rank-d PCA.
    Sphere(SphereArgs),
    /// 150 handwritten digits of classes 1, 2, 3 embedded in two dimensions.
    Digits(DigitsArgs),
    /// Fit a numeric CSV matrix, one observation per row.
    Fit(FitArgs),
    /// Sampler health and moment checks for a single matrix vMF.
    VmfDiag(VmfDiagArgs),
}

/// How the latent prior variance is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum A2Mode {
    /// Average covariate variance of the data.
    Auto,
    /// Flat latent prior.
    Infinite,
    Value(f64),
}

impl FromStr for A2Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "auto" => Ok(A2Mode::Auto),
            "inf" | "infinite" | "flat" => Ok(A2Mode::Infinite),
            other => match other.parse::<f64>() {
                Ok(v) if v > 0.0 && v.is_finite() => Ok(A2Mode::Value(v)),
                Ok(v) if v == f64::INFINITY => Ok(A2Mode::Infinite),
                _ => Err(format!(
                    "expected `auto`, `inf`, or a positive number, got {s:?}"
                )),
            },
        }
    }
}

fn parse_pool(s: &str) -> Result<Pooling, String> {
    match s {
        "stride" => Ok(Pooling::Stride),
        "mean" => Ok(Pooling::Mean),
        _ => Err(format!("expected `stride` or `mean`, got {s:?}")),
    }
}

/// Chain and prior settings shared by the fitting commands.
#[derive(Debug, Clone, Default, Args)]
pub struct ChainArgs {
    /// Latent dimension d [default: 2].
    #[arg(long = "dim")]
    pub dim: Option<usize>,
    /// Total Gibbs sweeps [default: 2000].
    #[arg(long)]
    pub sweeps: Option<usize>,
    /// Sweeps discarded before averaging [default: half of --sweeps].
    #[arg(long = "burn-in")]
    pub burn_in: Option<usize>,
    /// Keep every thin-th sweep after burn-in [default: 5].
    #[arg(long)]
    pub thin: Option<usize>,
    /// Latent prior variance: `auto`, `inf`, or a positive value [default: auto].
    #[arg(long)]
    pub a2: Option<A2Mode>,
    /// MRF strength c [default: 100/n].
    #[arg(long)]
    pub c: Option<f64>,
    /// MRF bandwidth w [default: mean pairwise PCA-latent distance].
    #[arg(long)]
    pub w: Option<f64>,
}

impl ChainArgs {
    pub const DEFAULT_DIM: usize = 2;
    pub const DEFAULT_SWEEPS: usize = 2000;
    pub const DEFAULT_THIN: usize = 5;

    pub fn dim(&self) -> usize {
        self.dim.unwrap_or(Self::DEFAULT_DIM)
    }

    /// Data-driven defaults with the command-line overrides applied.
    pub fn hyper_params(&self, data: &Dataset) -> Result<HyperParams, CliError> {
        let mut hp = HyperParams::from_data(data, self.dim())?;
        match self.a2.unwrap_or(A2Mode::Auto) {
            A2Mode::Auto => {}
            A2Mode::Infinite => hp.latent_prior = LatentPrior::Flat,
            A2Mode::Value(a2) => hp.latent_prior = LatentPrior::Gaussian { a2 },
        }
        if let Some(c) = self.c {
            hp.c_strength = c;
        }
        if let Some(w) = self.w {
            hp.bandwidth = w;
        }
        hp.n_sweeps = self.sweeps.unwrap_or(Self::DEFAULT_SWEEPS);
        hp.burn_in = self.burn_in.unwrap_or(hp.n_sweeps / 2);
        hp.thin = self.thin.unwrap_or(Self::DEFAULT_THIN);
        hp.validate()?;
        Ok(hp)
    }

    /// Flags that would change a stored chain's model or schedule.
    fn model_flags(&self) -> Vec<&'static str> {
        let mut set = Vec::new();
        if self.dim.is_some() {
            set.push("--dim");
        }
        if self.burn_in.is_some() {
            set.push("--burn-in");
        }
        if self.thin.is_some() {
            set.push("--thin");
        }
        if self.a2.is_some() {
            set.push("--a2");
        }
        if self.c.is_some() {
            set.push("--c");
        }
        if self.w.is_some() {
            set.push("--w");
        }
        set
    }
}

#[derive(Debug, Clone, Args)]
pub struct SphereArgs {
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Standard deviation of the isotropic noise.
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[arg(long, env = "NLPCA_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value = "out/sphere")]
    pub out: PathBuf,
    /// Bins per histogram.
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
}

impl Default for SphereArgs {
    fn default() -> Self {
        SphereArgs {
            n: 100,
            noise: 0.05,
            chain: ChainArgs::default(),
            seed: DEFAULT_SEED,
            out: PathBuf::from("out/sphere"),
            bins: 20,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DigitsArgs {
    #[arg(long, default_value = "data/digits123-images-idx3-ubyte")]
    pub images: PathBuf,
    #[arg(long, default_value = "data/digits123-labels-idx1-ubyte")]
    pub labels: PathBuf,
    /// Downsampling: `stride` keeps every factor-th pixel, `mean` averages blocks.
    #[arg(long, default_value = "stride", value_parser = parse_pool)]
    pub pool: Pooling,
    #[arg(long, default_value_t = 2)]
    pub factor: usize,
    /// Digit classes to draw from.
    #[arg(long, value_delimiter = ',', default_values_t = [1u8, 2, 3])]
    pub classes: Vec<u8>,
    #[arg(long = "per-class", default_value_t = 50)]
    pub per_class: usize,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[arg(long, env = "NLPCA_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value = "out/digits")]
    pub out: PathBuf,
}

impl DigitsArgs {
    /// Defaults with the data files looked up under `data_dir`.
    pub fn with_data_dir(data_dir: &Path) -> Self {
        DigitsArgs {
            images: data_dir.join("digits123-images-idx3-ubyte"),
            labels: data_dir.join("digits123-labels-idx1-ubyte"),
            pool: Pooling::Stride,
            factor: 2,
            classes: vec![1, 2, 3],
            per_class: 50,
            chain: ChainArgs::default(),
            seed: DEFAULT_SEED,
            out: PathBuf::from("out/digits"),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Numeric CSV, one observation per row; an optional header and a
    /// trailing `label` column are recognized.
    #[arg(long)]
    pub input: PathBuf,
    /// Continue the chain stored in this checkpoint. `--sweeps` then sets
    /// the new total; prior and schedule flags are rejected.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub chain: ChainArgs,
    #[arg(long, env = "NLPCA_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value = "out/fit")]
    pub out: PathBuf,
}

impl FitArgs {
    pub fn new(input: PathBuf, out: PathBuf) -> Self {
        FitArgs {
            input,
            resume: None,
            chain: ChainArgs::default(),
            seed: DEFAULT_SEED,
            out,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct VmfDiagArgs {
    /// Concentration κ; the parameter is κ times the first d columns of I_p.
    #[arg(long, default_value_t = 2.0)]
    pub kappa: f64,
    #[arg(long, default_value_t = 2)]
    pub p: usize,
    #[arg(long = "d-frame", default_value_t = 1)]
    pub d_frame: usize,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, env = "NLPCA_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Also write the report as JSON into this directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Default for VmfDiagArgs {
    fn default() -> Self {
        VmfDiagArgs {
            kappa: 2.0,
            p: 2,
            d_frame: 1,
            samples: 10_000,
            seed: DEFAULT_SEED,
            out: None,
        }
    }
}

/// Failures classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or a configuration the model rejects.
    Usage(String),
    /// Missing, unreadable, or malformed files.
    Io(nlpca::Error),
    /// The numerics broke down.
    Numerical(nlpca::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<nlpca::Error> for CliError {
    fn from(e: nlpca::Error) -> Self {
        use nlpca::Error as E;
        match e {
            e if e.is_numerical() => CliError::Numerical(e),
            e @ (E::Io { .. } | E::Idx(_) | E::Parse { .. } | E::Csv(_) | E::Json(_)) => {
                CliError::Io(e)
            }
            e => CliError::Usage(e.to_string()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "invalid configuration: {m}"),
            CliError::Io(e) => write!(f, "input/output failure: {e}"),
            CliError::Numerical(e) => write!(f, "numerical failure: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

/// Runs one parsed command, printing a short report to stdout.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Sphere(args) => {
            let s = cmd_sphere_demo(&args)?;
            println!("wrote {}", args.out.display());
            println!(
                "mean reconstruction error: model {:.6}, pca {:.6}",
                s.model.mean_reconstruction_error, s.pca.mean_reconstruction_error
            );
            println!(
                "mean distance to sphere: model {:.6}, pca {:.6}, data {:.6}",
                s.model.mean_sphere_distance,
                s.pca.mean_sphere_distance,
                s.data_mean_sphere_distance
            );
        }
        Command::Digits(args) => {
            let s = cmd_digits_demo(&args)?;
            println!("wrote {}", args.out.display());
            println!(
                "nearest-neighbor mismatches: model {}, pca {} (published: model {}, pca {})",
                s.model_mismatch,
                s.pca_mismatch,
                s.published_model_mismatch,
                s.published_pca_mismatch
            );
        }
        Command::Fit(args) => {
            let s = cmd_fit(&args)?;
            println!("wrote {}", args.out.display());
            println!(
                "sweeps {} (kept {}), mean reconstruction error {:.6}",
                s.sweeps_done, s.diagnostics.kept_sweeps, s.mean_reconstruction_error
            );
        }
        Command::VmfDiag(args) => {
            let r = cmd_vmf_diag(&args)?;
            print!("{r}");
        }
    }
    Ok(())
}
