//! JSON configuration files for the command-line tool. Unknown fields are
//! rejected and every file must declare `schema_version = 1`.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::AtomicYoungMeasure;
use crate::mvs_verifier::{QuadraturePolicy, TestFunction, DEFAULT_HORIZON};
use crate::report::SCHEMA_VERSION;
use crate::riemann_shock::{FanSolution, RiemannData};
use crate::rigidity_lab::{DichotomyConfig, Profile, DEFAULT_DIRECTIONS, DEFAULT_GRID, DEFAULT_R};

/// Reads a config file. Syntax errors carry line and column.
pub fn load<T: DeserializeOwned + Versioned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
    parse(&text, &path.display().to_string())
}

pub fn parse<T: DeserializeOwned + Versioned>(text: &str, origin: &str) -> Result<T> {
    let cfg: T = serde_json::from_str(text).map_err(|e| {
        let kind = if e.is_syntax() || e.is_eof() { "malformed JSON" } else { "invalid config" };
        Error::InvalidConfig(format!("{kind} in {origin} at line {}, column {}: {e}", e.line(), e.column()))
    })?;
    if cfg.schema_version() != SCHEMA_VERSION {
        return Err(Error::InvalidConfig(format!(
            "{origin}: schema_version must be {SCHEMA_VERSION}, got {}",
            cfg.schema_version()
        )));
    }
    Ok(cfg)
}

pub trait Versioned {
    fn schema_version(&self) -> u32;
}

macro_rules! versioned {
    ($($t:ty),*) => {$(
        impl Versioned for $t {
            fn schema_version(&self) -> u32 {
                self.schema_version
            }
        }
    )*};
}

fn schema() -> u32 {
    SCHEMA_VERSION
}

fn default_base() -> RiemannData {
    RiemannData { rho_minus: 1.0, p_minus: 1.0, p_plus: 2.0 }
}

fn default_delta_p() -> f64 {
    0.01
}

fn default_gamma() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiemannConfig {
    pub schema_version: u32,
    pub rho_minus: f64,
    pub p_minus: f64,
    pub p_plus: f64,
}

impl Default for RiemannConfig {
    fn default() -> Self {
        let b = default_base();
        Self { schema_version: schema(), rho_minus: b.rho_minus, p_minus: b.p_minus, p_plus: b.p_plus }
    }
}

/// Either the two constant states `(1, 1, 0, 3/2)` and `(γ, 1, 0, 3/(2γ))`,
/// or an explicit pair of conservative states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveconeConfig {
    pub schema_version: u32,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// `[[ρ, m₁, m₂, E], [ρ, m₁, m₂, E]]`.
    #[serde(default)]
    pub states: Option<[[f64; 4]; 2]>,
    #[serde(default)]
    pub kappa: Option<f64>,
}

impl Default for WaveconeConfig {
    fn default() -> Self {
        Self { schema_version: schema(), gamma: default_gamma(), states: None, kappa: None }
    }
}

/// Riemann data, `δ_p` and optional overrides of the free skeleton parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstructConfig {
    pub schema_version: u32,
    #[serde(default = "default_base")]
    pub base: RiemannData,
    #[serde(default = "default_delta_p")]
    pub delta_p: f64,
    #[serde(default)]
    pub rho1: Option<f64>,
    #[serde(default)]
    pub rho2: Option<f64>,
    #[serde(default)]
    pub slopes: Option<[f64; 4]>,
    #[serde(default)]
    pub omega2_angle: Option<f64>,
}

impl Default for ConstructConfig {
    fn default() -> Self {
        Self {
            schema_version: schema(),
            base: default_base(),
            delta_p: default_delta_p(),
            rho1: None,
            rho2: None,
            slopes: None,
            omega2_angle: None,
        }
    }
}

/// Explicit test functions, or the grid generated around the measure's interfaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionarySpec {
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_scales")]
    pub scales: Vec<f64>,
    #[serde(default = "default_true")]
    pub initial_layer: bool,
    #[serde(default)]
    pub functions: Option<Vec<TestFunction>>,
}

fn default_horizon() -> f64 {
    DEFAULT_HORIZON
}

fn default_scales() -> Vec<f64> {
    vec![0.1, 0.3, 1.0]
}

fn default_true() -> bool {
    true
}

impl Default for DictionarySpec {
    fn default() -> Self {
        Self { horizon: default_horizon(), scales: default_scales(), initial_layer: true, functions: None }
    }
}

/// The measure under test comes from exactly one of `measure`, `fan` or
/// `shock`; with none given, the Dirac at the default 1-shock is tested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub measure: Option<AtomicYoungMeasure>,
    #[serde(default)]
    pub fan: Option<FanSolution>,
    #[serde(default)]
    pub shock: Option<RiemannData>,
    #[serde(default)]
    pub dictionary: DictionarySpec,
    #[serde(default)]
    pub quadrature: QuadraturePolicy,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            schema_version: schema(),
            measure: None,
            fan: None,
            shock: None,
            dictionary: DictionarySpec::default(),
            quadrature: QuadraturePolicy::default(),
        }
    }
}

/// Plane-wave experiment between `(1, 1, 0, 3/2)` and `(γ, 1, 0, 3/(2γ))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigidityConfig {
    pub schema_version: u32,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_n_list")]
    pub n_list: Vec<u32>,
    #[serde(default)]
    pub profile: Profile,
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default = "default_directions")]
    pub directions: usize,
}

fn default_n_list() -> Vec<u32> {
    DichotomyConfig::default().n_list
}

fn default_r() -> f64 {
    DEFAULT_R
}

fn default_grid() -> usize {
    DEFAULT_GRID
}

fn default_directions() -> usize {
    DEFAULT_DIRECTIONS
}

impl Default for RigidityConfig {
    fn default() -> Self {
        Self {
            schema_version: schema(),
            gamma: default_gamma(),
            n_list: default_n_list(),
            profile: Profile::default(),
            r: default_r(),
            grid: default_grid(),
            directions: default_directions(),
        }
    }
}

impl RigidityConfig {
    pub fn dichotomy(&self) -> DichotomyConfig {
        DichotomyConfig {
            n_list: self.n_list.clone(),
            profile: self.profile,
            r: self.r,
            grid: self.grid,
            directions: self.directions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MainTheoremConfig {
    pub schema_version: u32,
    #[serde(default = "default_base")]
    pub base: RiemannData,
    #[serde(default = "default_delta_p")]
    pub delta_p: f64,
    /// Run the two-constant-state scenario instead of the Riemann one.
    #[serde(default)]
    pub constant_states: bool,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Random tuples for the determinant cross-validation.
    #[serde(default = "default_samples")]
    pub cross_check_samples: usize,
    #[serde(default)]
    pub rigidity: Option<DichotomyConfig>,
}

fn default_samples() -> usize {
    100
}

impl Default for MainTheoremConfig {
    fn default() -> Self {
        Self {
            schema_version: schema(),
            base: default_base(),
            delta_p: default_delta_p(),
            constant_states: false,
            gamma: default_gamma(),
            cross_check_samples: default_samples(),
            rigidity: None,
        }
    }
}

versioned!(RiemannConfig, WaveconeConfig, ConstructConfig, VerifyConfig, RigidityConfig, MainTheoremConfig);
