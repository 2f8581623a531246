//! Run configuration: a single versioned JSON document validated before any
//! computation. Unknown keys are rejected (serde reports the offending key
//! with its line and column).

use serde::{Deserialize, Serialize};
use srqm_core::coupling::CavityGeometry;
use srqm_core::dynamics::{IntegratorConfig, Method, PhysicalParameters, Representation};
use srqm_core::estimation::SweepConstraint;

use crate::AppError;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometrySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationSection>,
    #[serde(default = "default_representation")]
    pub representation: RepresentationChoice,
    #[serde(default = "default_n_max")]
    pub n_max: u32,
    #[serde(default)]
    pub collective_gamma: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<InitialState>,
    /// Initial cavity state; only "vacuum" is supported and the default is
    /// explicit rather than implied.
    #[serde(default = "default_cavity_state")]
    pub cavity_state: String,
    #[serde(default = "default_observables")]
    pub observables: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<IntegratorSection>,
    #[serde(default = "default_regime_threshold")]
    pub regime_threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<EstimateSection>,
    #[serde(default = "default_basename")]
    pub output_basename: String,
}

fn default_representation() -> RepresentationChoice {
    RepresentationChoice::Dicke
}
fn default_n_max() -> u32 {
    8
}
fn default_cavity_state() -> String {
    "vacuum".to_string()
}
fn default_observables() -> Vec<String> {
    vec!["photon_number".to_string(), "jplus_jminus".to_string()]
}
fn default_regime_threshold() -> f64 {
    srqm_core::superradiance::DEFAULT_REGIME_THRESHOLD
}
fn default_basename() -> String {
    "run".to_string()
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RepresentationChoice {
    Dicke,
    Full,
}

impl From<RepresentationChoice> for Representation {
    fn from(c: RepresentationChoice) -> Self {
        match c {
            RepresentationChoice::Dicke => Representation::Dicke,
            RepresentationChoice::Full => Representation::Full,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub g: f64,
    pub kappa: f64,
    #[serde(default)]
    pub gamma: f64,
    pub n_atoms: u32,
}

impl From<ModelSection> for PhysicalParameters {
    fn from(m: ModelSection) -> Self {
        PhysicalParameters { g: m.g, kappa: m.kappa, gamma: m.gamma, n_atoms: m.n_atoms }
    }
}

/// SI cavity geometry keys; constants default to their SI values.
#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub length_m: f64,
    pub atom_position_m: f64,
    pub mode_index: u32,
    pub transverse_area_m2: f64,
    pub dipole_projection_cm: f64,
}

impl From<GeometrySection> for CavityGeometry {
    fn from(g: GeometrySection) -> Self {
        CavityGeometry::si(
            g.length_m,
            g.atom_position_m,
            g.mode_index,
            g.transverse_area_m2,
            g.dipole_projection_cm,
        )
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSection {
    #[serde(default)]
    pub x: f64,
    #[serde(default)]
    pub z_comoving: bool,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(untagged)]
pub enum InitialState {
    Named(NamedState),
    Ladder { two_j: u32, two_m: i64 },
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NamedState {
    Excited,
    Ground,
    Dark,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    #[serde(default = "default_method")]
    pub method: MethodChoice,
    pub t_final: f64,
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_step: Option<f64>,
    #[serde(default = "default_record_points")]
    pub record_points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_grid: Option<Vec<f64>>,
}

fn default_method() -> MethodChoice {
    MethodChoice::Adaptive
}
fn default_abs_tol() -> f64 {
    1e-10
}
fn default_rel_tol() -> f64 {
    1e-8
}
fn default_record_points() -> usize {
    401
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodChoice {
    Rk4,
    Adaptive,
    Exact,
}

impl From<MethodChoice> for Method {
    fn from(c: MethodChoice) -> Self {
        match c {
            MethodChoice::Rk4 => Method::Rk4,
            MethodChoice::Adaptive => Method::Adaptive,
            MethodChoice::Exact => Method::Exact,
        }
    }
}

impl IntegratorSection {
    pub fn to_core(&self) -> IntegratorConfig {
        let mut config = IntegratorConfig::uniform(self.t_final, self.record_points)
            .with_method(self.method.into())
            .with_tolerances(self.abs_tol, self.rel_tol);
        if let Some(h) = self.max_step {
            config = config.with_max_step(h);
        }
        if let Some(grid) = &self.record_grid {
            config.record_grid = grid.clone();
        }
        config
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub n_list: Vec<u32>,
    pub constraint: ConstraintSection,
    pub kappa: f64,
    pub t: f64,
    #[serde(default = "default_repetitions")]
    pub repetitions: u64,
    #[serde(default)]
    pub simulate: bool,
    #[serde(default = "default_max_simulated_n")]
    pub max_simulated_n: u32,
}

fn default_repetitions() -> u64 {
    1
}
fn default_max_simulated_n() -> u32 {
    16
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintSection {
    FixedG { g: f64 },
    FixedMargin { c: f64 },
}

impl From<ConstraintSection> for SweepConstraint {
    fn from(c: ConstraintSection) -> Self {
        match c {
            ConstraintSection::FixedG { g } => SweepConstraint::FixedG { g },
            ConstraintSection::FixedMargin { c } => SweepConstraint::FixedMargin { c },
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSection {
    pub binding: BindingSection,
    pub x0: f64,
    #[serde(default = "default_repetitions")]
    pub repetitions: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fd_step: Option<f64>,
    #[serde(default = "default_richardson")]
    pub richardson_levels: u32,
}

fn default_richardson() -> u32 {
    1
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BindingSection {
    /// Analytic self-test family `<A> = x^2`, var = 1.
    Quadratic,
    /// Same family with seeded multiplicative noise (uses --seed).
    QuadraticNoisy { noise: f64 },
    /// x = g t at fixed measurement time, counting observable.
    CouplingTime { t_ref: f64 },
    /// x = dL/L through the cavity geometry, counting observable.
    CavityLength { t_ref: f64 },
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, AppError> {
        let config: RunConfig = serde_json::from_str(text)
            .map_err(|e| AppError::validation(format!("config: {e}")))?;
        if config.version != CONFIG_SCHEMA_VERSION {
            return Err(AppError::validation(format!(
                "config: unsupported version {} (expected {CONFIG_SCHEMA_VERSION})",
                config.version
            )));
        }
        if config.cavity_state != "vacuum" {
            return Err(AppError::validation(format!(
                "config: cavity_state '{}' unsupported (only \"vacuum\")",
                config.cavity_state
            )));
        }
        Ok(config)
    }

    pub fn require_model(&self) -> Result<PhysicalParameters, AppError> {
        self.model
            .map(Into::into)
            .ok_or_else(|| AppError::validation("config: missing required key 'model'"))
    }

    pub fn require_integrator(&self) -> Result<&IntegratorSection, AppError> {
        self.integrator
            .as_ref()
            .ok_or_else(|| AppError::validation("config: missing required key 'integrator'"))
    }

    pub fn require_initial_state(&self) -> Result<InitialState, AppError> {
        self.initial_state
            .ok_or_else(|| AppError::validation("config: missing required key 'initial_state'"))
    }

    pub fn require_geometry(&self) -> Result<CavityGeometry, AppError> {
        self.geometry
            .map(Into::into)
            .ok_or_else(|| AppError::validation("config: missing required key 'geometry'"))
    }

    pub fn require_sweep(&self) -> Result<&SweepSection, AppError> {
        self.sweep
            .as_ref()
            .ok_or_else(|| AppError::validation("config: missing required key 'sweep'"))
    }

    pub fn require_estimate(&self) -> Result<&EstimateSection, AppError> {
        self.estimate
            .as_ref()
            .ok_or_else(|| AppError::validation("config: missing required key 'estimate'"))
    }
}
