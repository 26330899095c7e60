mod jobs;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "omit", version, about = "Probe transmission, stability and bandwidth jobs")]
struct Cli {
    #[command(subcommand)]
    job: Job,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Parameter file (JSON). A run manifest is accepted as well.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file; the manifest is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads for grid evaluation.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Override one config key, e.g. `--set mu_mag_over_gamma_span=0.2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

/// Probe offset grid in units of the mechanical frequency.
#[derive(Args, Debug, Clone, Default)]
pub struct OmegaGrid {
    #[arg(long)]
    pub omega_min: Option<f64>,
    #[arg(long)]
    pub omega_max: Option<f64>,
    #[arg(long)]
    pub omega_points: Option<usize>,
}

/// Intermechanical coupling grid in units of `γ1 − γ2`.
#[derive(Args, Debug, Clone, Default)]
pub struct MuGrid {
    #[arg(long)]
    pub mu_min: Option<f64>,
    #[arg(long)]
    pub mu_max: Option<f64>,
    #[arg(long)]
    pub mu_points: Option<usize>,
}

/// Second optomechanical coupling magnitude in units of `|g1|`.
#[derive(Args, Debug, Clone, Default)]
pub struct G2Grid {
    #[arg(long)]
    pub g2mag_min: Option<f64>,
    #[arg(long)]
    pub g2mag_max: Option<f64>,
    #[arg(long)]
    pub g2mag_points: Option<usize>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeArg {
    Split,
    Single,
    Auto,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyArg {
    Fixed,
    LocusMinimum,
}

#[derive(Subcommand, Debug)]
enum Job {
    /// Probe transmission, phase and group delay over a detuning grid.
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        omega: OmegaGrid,
    },
    /// Stability over (|g2|, phi2) at the configured |mu|.
    StabilityMap {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        g2: G2Grid,
        #[arg(long)]
        phi2_points: Option<usize>,
    },
    /// Mechanical eigenvalue tracks over phi2 in [0, 2pi].
    RootLoci {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        phi2_points: Option<usize>,
    },
    /// |t_p| over (|mu|, omega) at the configured phi2.
    Map2d {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        omega: OmegaGrid,
        #[command(flatten)]
        mu: MuGrid,
    },
    /// Gain-bandwidth table over phi2 in [0, 2pi).
    GainBw {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        omega: OmegaGrid,
        #[arg(long)]
        phi2_points: Option<usize>,
        #[arg(long, value_enum)]
        band_mode: Option<ModeArg>,
    },
    /// Delay-bandwidth table over phi2 in [0, 2pi). Pump defaults to 10 uW.
    DelayBw {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        omega: OmegaGrid,
        #[arg(long)]
        phi2_points: Option<usize>,
        #[arg(long, value_enum)]
        band_mode: Option<ModeArg>,
    },
    /// Locate the exceptional point of the mechanical pair.
    Ep {
        #[command(flatten)]
        common: Common,
        /// Search interval for |mu| in units of gamma1 - gamma2.
        #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
        bracket: Option<Vec<f64>>,
        #[arg(long, value_enum)]
        policy: Option<PolicyArg>,
    },
    /// Compare the closed-form anti-Stokes amplitude with time integration.
    OracleCheck {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        omega: OmegaGrid,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.job {
        Job::Spectrum { common, omega } => jobs::spectrum(&common, &omega),
        Job::StabilityMap { common, g2, phi2_points } => jobs::stability_map(&common, &g2, phi2_points),
        Job::RootLoci { common, phi2_points } => jobs::root_loci(&common, phi2_points),
        Job::Map2d { common, omega, mu } => jobs::map2d(&common, &omega, &mu),
        Job::GainBw {
            common,
            omega,
            phi2_points,
            band_mode,
        } => jobs::bandwidth(&common, &omega, phi2_points, band_mode, false),
        Job::DelayBw {
            common,
            omega,
            phi2_points,
            band_mode,
        } => jobs::bandwidth(&common, &omega, phi2_points, band_mode, true),
        Job::Ep { common, bracket, policy } => jobs::ep(&common, bracket, policy),
        Job::OracleCheck { common, omega } => jobs::oracle_check(&common, &omega),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
