use std::fs;
use std::path::{Path, PathBuf};

use mmagls::hrtf::Plane;
use mmagls::{MaskConfig, OptConfig, SolverConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::args::{MethodArg, Overrides, PlaneArg};
use crate::report::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ls,
    Magls,
    Mmagls,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ls => "ls",
            Method::Magls => "magls",
            Method::Mmagls => "mmagls",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub grid_points: usize,
    pub sample_rate: f64,
    pub delay_taps: usize,
    pub speed_of_sound: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            grid_points: 2702,
            sample_rate: 48000.0,
            delay_taps: 0,
            speed_of_sound: 343.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub band_lo: f64,
    pub band_hi: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            band_lo: 6000.0,
            band_hi: 20000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub n_fft: usize,
    pub method: Method,
    pub rng_seed: u64,
    pub plane: Plane,
    pub solver: SolverConfig,
    pub mask: MaskConfig,
    /// `cutoff_hz` and `rng_seed` are taken from `solver` and the top level.
    pub optimizer: OptConfig,
    pub synth: SynthConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            out: None,
            n_fft: 512,
            method: Method::Magls,
            rng_seed: 0,
            plane: Plane::Median,
            solver: SolverConfig::default(),
            mask: MaskConfig::default(),
            optimizer: OptConfig::default(),
            synth: SynthConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    /// Defaults, then the `--config` file, then individual flags.
    pub fn resolve(o: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match &o.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::usage("usage.invalid_config", format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($flag:expr, $field:expr) => {
                if let Some(v) = $flag.clone() {
                    $field = v;
                }
            };
        }
        if o.input.is_some() {
            cfg.input = o.input.clone();
        }
        if o.out.is_some() {
            cfg.out = o.out.clone();
        }
        set!(o.nfft, cfg.n_fft);
        set!(o.seed, cfg.rng_seed);
        set!(o.order, cfg.solver.order);
        set!(o.radius, cfg.solver.head_radius);
        if o.cutoff.is_some() {
            cfg.solver.cutoff_override = o.cutoff;
        }
        set!(o.k, cfg.mask.k);
        set!(o.clip, cfg.mask.clip);
        set!(o.f_lo, cfg.mask.f_lo);
        set!(o.f_hi, cfg.mask.f_hi);
        if let Some(deg) = o.contra_angle {
            cfg.mask.contra_angle = deg.to_radians();
        }
        set!(o.epochs, cfg.optimizer.epochs);
        set!(o.lr, cfg.optimizer.learning_rate);
        if let Some(m) = o.method {
            cfg.method = match m {
                MethodArg::Ls => Method::Ls,
                MethodArg::Magls => Method::Magls,
                MethodArg::Mmagls => Method::Mmagls,
            };
        }
        if let Some(p) = o.plane {
            cfg.plane = match p {
                PlaneArg::Median => Plane::Median,
                PlaneArg::Horizontal => Plane::Horizontal,
            };
        }
        cfg.optimizer.cutoff_hz = cfg.solver.cutoff_hz();
        cfg.optimizer.rng_seed = cfg.rng_seed;
        cfg.solver.validate()?;
        cfg.optimizer.validate()?;
        if cfg.n_fft < 2 || cfg.n_fft % 2 != 0 {
            return Err(CliError::usage("usage.fft_size", format!("n_fft {} must be even and >= 2", cfg.n_fft)));
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form, ignoring the output location.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("out");
        }
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }

    pub fn input(&self) -> Result<&Path, CliError> {
        let path = self
            .input
            .as_deref()
            .ok_or_else(|| CliError::usage("usage.missing_argument", "--input is required"))?;
        require_file(path)?;
        Ok(path)
    }

    pub fn out(&self) -> Result<&Path, CliError> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::usage("usage.missing_argument", "--out is required"))
    }
}

pub fn require_file(path: &Path) -> Result<(), CliError> {
    match fs::metadata(path) {
        Ok(m) if m.is_file() => Ok(()),
        Ok(_) => Err(CliError::new("io.not_a_file", format!("{} is not a file", path.display()))),
        Err(e) => Err(CliError::io(path, e)),
    }
}

/// Recorded in every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub rng_seed: u64,
}

impl Provenance {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").replace("-cli", ""),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_hash: cfg.hash(),
            rng_seed: cfg.rng_seed,
        }
    }

    /// One-line form used as the comment header of CSV files.
    pub fn line(&self) -> String {
        format!(
            "{} {} command={} config_sha256={} seed={}",
            self.tool, self.version, self.command, self.config_hash, self.rng_seed
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_reference_setup() {
        let cfg = RunConfig::resolve(&Overrides::default()).unwrap();
        assert_eq!(cfg.solver.order, 1);
        assert!((cfg.solver.cutoff_hz() - 679.8).abs() < 0.1);
        assert_eq!(cfg.optimizer.epochs, 150);
        assert_eq!(cfg.optimizer.learning_rate, 5e-4);
        assert_eq!((cfg.mask.k, cfg.mask.clip), (4, 4.0));
        assert_eq!(cfg.optimizer.cutoff_hz, cfg.solver.cutoff_hz());
    }

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"n_fft": 256, "mask": {"k": 2}, "optimizer": {"epochs": 3}}"#).unwrap();
        let o = Overrides {
            config: Some(path),
            epochs: Some(7),
            contra_angle: Some(90.0),
            ..Overrides::default()
        };
        let cfg = RunConfig::resolve(&o).unwrap();
        assert_eq!((cfg.n_fft, cfg.mask.k, cfg.optimizer.epochs), (256, 2, 7));
        assert!((cfg.mask.contra_angle - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        let back: RunConfig = serde_json::from_str(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"mask": {"kk": 2}}"#).unwrap();
        let err = RunConfig::resolve(&Overrides {
            config: Some(path),
            ..Overrides::default()
        })
        .unwrap_err();
        assert_eq!(err.kind, "usage.invalid_config");
    }

    #[test]
    fn hash_ignores_output_location_only() {
        let a = RunConfig::default();
        let b = RunConfig {
            out: Some("elsewhere".into()),
            ..a.clone()
        };
        let c = RunConfig { rng_seed: 1, ..a.clone() };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
