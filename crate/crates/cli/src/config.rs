use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tcqsim_core::analysis::linspace;
use tcqsim_core::experiments::geomspace;
use tcqsim_core::TcqParams;

use crate::CliError;

/// Either an explicit list or an evenly spaced range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Values(Vec<f64>),
    Range(RangeSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeSpec {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    #[serde(default)]
    pub spacing: Spacing,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

impl Grid {
    pub fn values(&self, field: &str) -> Result<Vec<f64>, CliError> {
        let values = match self {
            Grid::Values(v) => v.clone(),
            Grid::Range(r) => {
                if r.points == 0 {
                    return Err(CliError::config(format!("{field}.points must be > 0")));
                }
                match r.spacing {
                    Spacing::Linear => linspace(r.start, r.stop, r.points),
                    Spacing::Log => {
                        if !(r.start > 0.0 && r.stop > 0.0) {
                            return Err(CliError::config(format!("{field}: log spacing needs positive bounds")));
                        }
                        geomspace(r.start, r.stop, r.points)
                    }
                }
            }
        };
        if values.is_empty() {
            return Err(CliError::config(format!("{field} is empty")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CliError::config(format!("{field} contains non-finite values")));
        }
        Ok(values)
    }

    pub fn increasing(&self, field: &str) -> Result<Vec<f64>, CliError> {
        let values = self.values(field)?;
        if values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(CliError::config(format!("{field} must be strictly increasing")));
        }
        Ok(values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device: Option<TcqParams>,
    /// Device JSON, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device_path: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Output directory, relative to the config file; `--out` takes precedence.
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi_sweep: Option<ChiSweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_phi: Option<GammaPhiConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectroscopy: Option<SpectroscopyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rabi: Option<RabiConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t1: Option<DecayConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub echo: Option<DecayConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_sweep: Option<NoiseSweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixtures: Option<FixturesConfig>,
}

impl RunConfig {
    pub fn for_device(device: TcqParams) -> Self {
        Self {
            device: Some(device),
            device_path: None,
            seed: 0,
            out: None,
            chi_sweep: None,
            gamma_phi: None,
            spectroscopy: None,
            rabi: None,
            t1: None,
            echo: None,
            noise_sweep: None,
            fit: None,
            fixtures: None,
        }
    }
}

fn default_numeric_dims() -> Vec<usize> {
    vec![4, 4, 4]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChiSweepConfig {
    pub g_minus: Grid,
    #[serde(default = "default_numeric_dims")]
    pub numeric_dims: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaPhiConfig {
    /// Dispersive shifts in MHz, one output file each.
    pub chi: Vec<f64>,
    pub n_th: Grid,
    pub t1_us: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_extra_per_us: Option<f64>,
    /// Alternative to `gamma_extra_per_us`: the zero-noise T₂.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t2_zero_us: Option<f64>,
}

fn default_nbar() -> f64 {
    2.3
}
fn default_spec_drive() -> f64 {
    0.3
}
fn default_spec_cavity_dim() -> usize {
    12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectroscopyConfig {
    /// Absolute spectroscopy frequencies, MHz; defaults to f₋ ± 4 MHz in 0.25 MHz steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec_freqs: Option<Grid>,
    #[serde(default = "default_nbar")]
    pub nbar: f64,
    /// Qubit drive Ω in rad/μs.
    #[serde(default = "default_spec_drive")]
    pub spec_drive: f64,
    #[serde(default = "default_spec_cavity_dim")]
    pub cavity_dim: usize,
}

fn default_sigma() -> f64 {
    tcqsim_core::experiments::DEFAULT_SIGMA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RabiConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta1: Option<Grid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta2: Option<Grid>,
    #[serde(default = "default_sigma")]
    pub sigma_us: f64,
}

fn default_cavity_dim() -> usize {
    tcqsim_core::experiments::DEFAULT_CAVITY_DIM
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayConfig {
    #[serde(default)]
    pub n_th: f64,
    /// Defaults to 41 log-spaced delays up to three expected decay times.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delays_us: Option<Grid>,
    #[serde(default = "default_cavity_dim")]
    pub cavity_dim: usize,
}

fn default_delay_points() -> usize {
    tcqsim_core::experiments::DEFAULT_DELAY_POINTS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSweepConfig {
    pub n_th: Grid,
    #[serde(default = "default_delay_points")]
    pub delay_points: usize,
    #[serde(default = "default_cavity_dim")]
    pub cavity_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_calibration: Option<NoiseCalibrationFitConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi: Option<ChiFitConfig>,
}

/// CSV with columns `power,t2_us`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseCalibrationFitConfig {
    pub data: PathBuf,
    /// MHz; defaults to the device χ₋.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi: Option<f64>,
    pub t1_us: f64,
    #[serde(default)]
    pub gamma_extra_per_us: f64,
}

/// CSV with columns `n_th,t2_us`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChiFitConfig {
    pub data: PathBuf,
    pub t1_us: f64,
    #[serde(default)]
    pub gamma_extra_per_us: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixturesConfig {
    #[serde(default)]
    pub chi: ChiFixture,
    #[serde(default)]
    pub noise_calibration: BetaFixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChiFixture {
    pub chi: f64,
    pub t1_us: f64,
    pub gamma_extra_per_us: f64,
    pub n_th: Grid,
    pub relative_noise: f64,
}

impl Default for ChiFixture {
    fn default() -> Self {
        Self {
            chi: 0.022,
            t1_us: 11.0,
            gamma_extra_per_us: 0.0,
            n_th: Grid::Range(RangeSpec {
                start: 0.0,
                stop: 0.13,
                points: 400,
                spacing: Spacing::Linear,
            }),
            relative_noise: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BetaFixture {
    pub beta: f64,
    pub chi: f64,
    pub t1_us: f64,
    pub t2_zero_us: f64,
    pub powers: Grid,
    pub relative_noise: f64,
}

impl Default for BetaFixture {
    fn default() -> Self {
        Self {
            beta: 0.01,
            chi: 1.9,
            t1_us: 9.5,
            t2_zero_us: 16.0,
            powers: Grid::Range(RangeSpec {
                start: 0.0,
                stop: 13.0,
                points: 14,
                spacing: Spacing::Linear,
            }),
            relative_noise: 0.05,
        }
    }
}

/// A parsed config together with its directory and resolved device.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub base_dir: PathBuf,
    pub device: TcqParams,
}

impl Loaded {
    /// Config as embedded in summaries: device inlined, `--seed` applied.
    pub fn resolved(&self) -> RunConfig {
        let mut config = self.config.clone();
        config.device = Some(self.device.clone());
        config.device_path = None;
        config
    }

    pub fn resolve_path(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, origin: &Path) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|err| {
        let path = err.path().to_string();
        let inner = err.into_inner();
        if path == "." || path.is_empty() {
            CliError::config(format!("{}: {inner}", origin.display()))
        } else {
            CliError::config(format!("{}: field `{path}`: {inner}", origin.display()))
        }
    })
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))
}

pub fn load(path: &Path, seed: Option<u64>) -> Result<Loaded, CliError> {
    let mut config: RunConfig = parse_json(&read(path)?, path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let device = match (&config.device, &config.device_path) {
        (Some(_), Some(_)) => {
            return Err(CliError::config("set only one of `device` and `device_path`"));
        }
        (Some(device), None) => device.clone(),
        (None, Some(rel)) => {
            let full = if rel.is_absolute() {
                rel.clone()
            } else {
                base_dir.join(rel)
            };
            parse_json(&read(&full)?, &full)?
        }
        (None, None) => return Err(CliError::config("missing `device` or `device_path`")),
    };
    device
        .validate()
        .map_err(|e| CliError::config(format!("device: {e}")))?;
    Ok(Loaded {
        config,
        base_dir,
        device,
    })
}

pub fn require<'a, T>(block: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    block
        .as_ref()
        .ok_or_else(|| CliError::config(format!("config has no `{name}` block")))
}
