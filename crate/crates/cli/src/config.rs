use std::path::PathBuf;

use serde::Deserialize;

use frontlab_core::conv::ConvolutionMethod;
use frontlab_core::kernels::KernelFamily;
use frontlab_core::reactions::{BaseProfile, IgnitionNonlinearity, Modulation};
use frontlab_core::stability::{InitialData, Shape};

use crate::error::CliError;

pub const EXPERIMENTS: [&str; 9] = [
    "validate",
    "wave",
    "front",
    "steepness",
    "tails",
    "stability",
    "asymptotic",
    "comparison",
    "sweep",
];

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Default experiment when the command line names none.
    pub experiment: Option<String>,
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub method: ConvolutionMethod,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub nonlinearity: NonlinearityConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub validate: ValidateConfig,
    #[serde(default)]
    pub wave: WaveConfig,
    #[serde(default)]
    pub front: FrontConfig,
    #[serde(default)]
    pub steepness: SteepnessConfig,
    #[serde(default)]
    pub tails: TailsConfig,
    #[serde(default)]
    pub stability: StabilityConfig,
    #[serde(default)]
    pub asymptotic: AsymptoticConfig,
    #[serde(default)]
    pub comparison: ComparisonConfig,
    pub sweep: Option<SweepConfig>,
    /// The parsed tree, kept for sweep overrides.
    #[serde(skip)]
    pub raw: toml::Table,
}

// `deny_unknown_fields` does not combine with a flattened family.
#[derive(Debug, Clone, Deserialize)]
pub struct KernelConfig {
    #[serde(flatten)]
    pub family: KernelFamily,
    #[serde(default = "default_tail_tol")]
    pub tail_tol: f64,
}

fn default_tail_tol() -> f64 {
    1e-12
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            family: KernelFamily::Gaussian { sigma: 1.0 },
            tail_tol: default_tail_tol(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NonlinearityConfig {
    pub theta: f64,
    pub theta_tilde: f64,
    /// Polynomial in `u - theta`; the cubic ignition profile when absent.
    pub coefficients: Option<Vec<f64>>,
    pub modulation: Modulation,
    /// Declared envelope overrides; the modulation range when absent.
    pub a_lo: Option<f64>,
    pub a_hi: Option<f64>,
}

impl Default for NonlinearityConfig {
    fn default() -> Self {
        NonlinearityConfig {
            theta: 0.3,
            theta_tilde: 0.9,
            coefficients: None,
            modulation: Modulation::Sinusoid {
                mean: 1.5,
                amplitude: 0.5,
                frequency: 1.0,
                phase: 0.0,
            },
            a_lo: None,
            a_hi: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            x_min: -100.0,
            x_max: 100.0,
            n: 4001,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    pub s: f64,
    pub t_end: f64,
    pub dt: f64,
    pub cadence: f64,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig {
            s: -30.0,
            t_end: 60.0,
            dt: 0.0625,
            cadence: 0.5,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateConfig {
    pub n_t: usize,
    pub n_u: usize,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        ValidateConfig { n_t: 64, n_u: 2001 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveConfig {
    pub half_width: f64,
    pub tol: f64,
}

impl Default for WaveConfig {
    fn default() -> Self {
        WaveConfig {
            half_width: 80.0,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrontConfig {
    pub levels: Vec<f64>,
    pub width_eps: f64,
    /// Snapshots before `s + transient` are excluded from the checks.
    pub transient: f64,
}

impl Default for FrontConfig {
    fn default() -> Self {
        FrontConfig {
            levels: vec![0.1, 0.3, 0.5, 0.9],
            width_eps: 0.05,
            transient: 20.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SteepnessConfig {
    /// Half-width `M` of the interval around the interface.
    pub m: f64,
    pub dts: Vec<f64>,
    pub offsets: Vec<f64>,
    pub h_int: f64,
}

impl Default for SteepnessConfig {
    fn default() -> Self {
        SteepnessConfig {
            m: 5.0,
            dts: vec![0.5, 1.0, 2.0],
            offsets: (-6..=6).map(|k| 0.5 * k as f64).collect(),
            h_int: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TailsConfig {
    /// Distance from the interface where the tail fits start.
    pub offset: f64,
}

impl Default for TailsConfig {
    fn default() -> Self {
        TailsConfig { offset: 5.0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityConfig {
    /// Candidate rates tried in order; the halving ladder from 0.4 when absent.
    pub alphas: Option<Vec<f64>>,
    /// Perturbation size as a multiple of `eps0`.
    pub epsilon_fraction: f64,
    pub shape: Shape,
    /// Run length; `5 / omega` when absent.
    pub duration: Option<f64>,
    pub sample_every: f64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            alphas: None,
            epsilon_fraction: 1.0,
            shape: Shape::Constant { value: 1.0 },
            duration: None,
            sample_every: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AsymptoticConfig {
    pub initial: InitialData,
    pub beta0: f64,
    pub duration: f64,
    pub fit_band: (f64, f64),
    pub sample_every: f64,
    pub min_r2: f64,
}

impl Default for AsymptoticConfig {
    fn default() -> Self {
        AsymptoticConfig {
            initial: InitialData::MollifiedStep { width: 0.5 },
            beta0: 0.1,
            duration: 2000.0,
            fit_band: (1e-8, 1e-2),
            sample_every: 1.0,
            min_r2: 0.98,
        }
    }
}

/// Explicit initial data for the comparison experiment.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    /// `high` left of `at`, `low` right of it.
    Step {
        at: f64,
        high: f64,
        low: f64,
    },
    /// `0.5 (1 - tanh((x - at) / width))`.
    Tanh {
        at: f64,
        width: f64,
    },
    Constant {
        value: f64,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComparisonConfig {
    /// Randomized ordered pairs drawn around a front; ignored when `lower`
    /// and `upper` are given.
    pub pairs: usize,
    pub duration: f64,
    pub lower: Option<Profile>,
    pub upper: Option<Profile>,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        ComparisonConfig {
            pairs: 100,
            duration: 20.0,
            lower: None,
            upper: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub experiment: String,
    /// Dotted path into this configuration, e.g. `nonlinearity.theta`.
    pub parameter: String,
    pub values: Vec<toml::Value>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let raw: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        let mut cfg: ExperimentConfig = raw
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.raw = raw;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), CliError> {
        if let Some(name) = &self.experiment {
            check_experiment(name)?;
        }
        let g = &self.grid;
        if g.n < 3 || !(g.x_max > g.x_min) {
            return Err(CliError::Config(
                "grid needs n >= 3 and x_max > x_min".into(),
            ));
        }
        if (g.x_min + g.x_max).abs() > 1e-9 * g.x_max.abs() {
            return Err(CliError::Config("grid must be symmetric about 0".into()));
        }
        let t = &self.time;
        if !(t.dt > 0.0 && t.cadence > 0.0 && t.t_end > t.s) {
            return Err(CliError::Config(
                "time needs dt > 0, cadence > 0, t_end > s".into(),
            ));
        }
        if let Some(sweep) = &self.sweep {
            check_experiment(&sweep.experiment)?;
            if sweep.experiment == "sweep" {
                return Err(CliError::Config("sweeps cannot nest".into()));
            }
            if sweep.values.is_empty() {
                return Err(CliError::Config("sweep.values is empty".into()));
            }
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        (self.grid.x_max - self.grid.x_min) / (self.grid.n - 1) as f64
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.grid.x_max - self.grid.x_min)
    }

    pub fn nonlinearity(&self) -> Result<IgnitionNonlinearity, CliError> {
        let c = &self.nonlinearity;
        let base = match &c.coefficients {
            Some(k) => BaseProfile {
                theta: c.theta,
                coefficients: k.clone(),
            },
            None => BaseProfile::cubic_ignition(c.theta),
        };
        let mut f = IgnitionNonlinearity::new(c.theta_tilde, base, c.modulation)
            .map_err(CliError::config)?;
        if let Some(lo) = c.a_lo {
            f.a_lo = lo;
        }
        if let Some(hi) = c.a_hi {
            f.a_hi = hi;
        }
        if !(f.a_lo > 0.0 && f.a_hi >= f.a_lo) {
            return Err(CliError::Config(
                "nonlinearity envelope needs 0 < a_lo <= a_hi".into(),
            ));
        }
        if self.time.dt > f.dt_max() {
            return Err(CliError::Config(format!(
                "time.dt = {} exceeds dt_max = {:.4}",
                self.time.dt,
                f.dt_max()
            )));
        }
        Ok(f)
    }
}

pub fn check_experiment(name: &str) -> Result<(), CliError> {
    if EXPERIMENTS.contains(&name) {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "unknown experiment {name:?}; expected one of {}",
            EXPERIMENTS.join(", ")
        )))
    }
}

/// Replace the value at a dotted path of a parsed configuration tree.
pub fn override_path(
    root: &mut toml::Table,
    path: &str,
    value: toml::Value,
) -> Result<(), CliError> {
    let mut table = root;
    let mut keys = path.split('.').peekable();
    while let Some(key) = keys.next() {
        if keys.peek().is_none() {
            table.insert(key.to_string(), value);
            return Ok(());
        }
        table = table
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()))
            .as_table_mut()
            .ok_or_else(|| {
                CliError::Config(format!("sweep path {path:?} crosses a non-table value"))
            })?;
    }
    Err(CliError::Config("sweep.parameter is empty".into()))
}
