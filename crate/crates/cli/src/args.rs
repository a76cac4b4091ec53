use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "mmagls", version, about = "Low-order spherical-harmonics HRTF preprocessing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate an HRIR set (HRZ container or CSV manifest) and write it as HRZ.
    Convert(Overrides),
    /// Write rigid-sphere HRIRs on a Lebedev grid as HRZ.
    Synth {
        #[command(flatten)]
        common: Overrides,
        /// Lebedev grid size.
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        sample_rate: Option<f64>,
        /// Circular delay applied to every impulse response, in samples.
        #[arg(long)]
        delay: Option<usize>,
    },
    /// Compute the notch mask and export one plane of it.
    Mask(Overrides),
    /// Fit SH coefficients with LS or MagLS.
    Solve(Overrides),
    /// Refine coefficients against the masked objective.
    Optimize {
        #[command(flatten)]
        common: Overrides,
        /// Initial coefficients (SHC). MagLS is computed when omitted.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Mask container. Computed from the input when omitted.
        #[arg(long)]
        mask: Option<PathBuf>,
    },
    /// Compare coefficient sets against the reference HRTFs.
    Eval {
        #[command(flatten)]
        common: Overrides,
        /// Candidate as `name=path` or `path`; repeatable.
        #[arg(long = "candidate", required = true)]
        candidates: Vec<String>,
        /// Mask container used for the masked-bin column.
        #[arg(long)]
        mask: Option<PathBuf>,
    },
    /// Export plane spectra of the reference, reconstructions and masks.
    Export {
        #[command(flatten)]
        common: Overrides,
        /// Candidate as `name=path` or `path`; repeatable.
        #[arg(long = "candidate")]
        candidates: Vec<String>,
        #[arg(long)]
        mask: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Ls,
    Magls,
    Mmagls,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlaneArg {
    Median,
    Horizontal,
}

/// Flags shared by every command. Each one overrides the matching value of `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    pub print_config: bool,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Head radius in meters.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Cutoff frequency in Hz, replacing the one derived from order and radius.
    #[arg(long)]
    pub cutoff: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub clip: Option<f64>,
    #[arg(long)]
    pub f_lo: Option<f64>,
    #[arg(long)]
    pub f_hi: Option<f64>,
    /// Contralateral exclusion radius in degrees.
    #[arg(long)]
    pub contra_angle: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub nfft: Option<usize>,
    #[arg(long, value_enum)]
    pub plane: Option<PlaneArg>,
}
