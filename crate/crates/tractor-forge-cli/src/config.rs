//! Run configuration: JSON in, resolved library objects out.
//!
//! The schema is versioned with `"schema": "tractor-forge/1"`. Charts are
//! either catalog names (`flat(3)`, `sphere(3,1)`, `hyperbolic(3)`,
//! `perturbed(3,0.3)`) or inline `{"n","domain","g"}` objects; families are
//! `"schouten"`, `"identity"`, or an inline gamma matrix in `(r, x)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use tractor_forge::ambient::{AdmissibleFamily, FamilySpec};
use tractor_forge::catalog;
use tractor_forge::chart::{ChartSpec, MetricChart, ScalarField};
use tractor_forge::tractor::{CurvePath, PathSpec, SectionSpec, TractorSection, TractorVector};

pub const SCHEMA: &str = "tractor-forge/1";

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_GRID: usize = 5;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChartConfig {
    Name(String),
    Inline(ChartSpec),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PathConfig {
    One(PathSpec),
    Segments(Vec<PathSpec>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TolConfig {
    Global(f64),
    PerCheck(BTreeMap<String, f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitialVector {
    pub w_top: Vec<f64>,
    pub w1: f64,
    pub w2: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<String>,
    pub chart: ChartConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<TolConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<f64>>>,
    /// Tractor sub-action: `residual`, `transport`, `holonomy`, `einstein`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub section: Option<SectionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialVector>,
    /// `"violated"` marks a check that is expected to exceed its tolerance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<bool>,
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub grid: Option<usize>,
}

/// A config with resolved objects and defaults applied.
pub struct Resolved {
    pub chart: MetricChart,
    pub family: Option<AdmissibleFamily>,
    pub scale: ScalarField,
    pub seed: u64,
    pub grid: usize,
    pub tol_global: Option<f64>,
    pub tol_per_check: BTreeMap<String, f64>,
    pub expect_violated: bool,
    pub config: RunConfig,
}

#[derive(Debug)]
pub enum ConfigError {
    /// Malformed input: bad JSON, unknown names, invalid values. Exit 2.
    Invalid(String),
    /// Unsupported dimension (Schouten machinery with n = 2). Exit 3.
    Dimension(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Invalid(m) => write!(f, "invalid config: {m}"),
            ConfigError::Dimension(m) => write!(f, "unsupported dimension: {m}"),
        }
    }
}

fn lift_error(err: tractor_forge::Error) -> ConfigError {
    match err {
        tractor_forge::Error::SchoutenUndefined { n } => ConfigError::Dimension(format!(
            "the Schouten normalization requires n >= 3, got n = {n}"
        )),
        other => ConfigError::Invalid(other.to_string()),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| ConfigError::Invalid(format!("config JSON: {e}")))?;
        if let Some(schema) = &cfg.schema {
            if schema != SCHEMA {
                return Err(ConfigError::Invalid(format!(
                    "unsupported schema `{schema}` (expected `{SCHEMA}`)"
                )));
            }
        }
        Ok(cfg)
    }

    /// Resolve names, apply overrides, build library objects. The family is
    /// only constructed when the config names one (or `need_family` forces the
    /// schouten default).
    pub fn resolve(
        self,
        overrides: &Overrides,
        need_family: bool,
    ) -> Result<Resolved, ConfigError> {
        let chart = match &self.chart {
            ChartConfig::Name(name) => catalog::by_name(name).map_err(lift_error)?,
            ChartConfig::Inline(spec) => {
                MetricChart::from_spec(spec.clone()).map_err(lift_error)?
            }
        };
        let family_spec = match (&self.family, need_family) {
            (Some(spec), _) => Some(spec.clone()),
            (None, true) => Some(FamilySpec::Named("schouten".into())),
            (None, false) => None,
        };
        let family = match family_spec {
            Some(spec) => Some(spec.resolve(&chart).map_err(lift_error)?),
            None => None,
        };
        let scale = match &self.scale {
            Some(text) => ScalarField::parse(text, chart.dim()).map_err(lift_error)?,
            None => ScalarField::zero(chart.dim()),
        };
        if let Some(points) = &self.points {
            for p in points {
                if !chart.contains(p) {
                    return Err(ConfigError::Invalid(format!(
                        "configured point {p:?} is outside the chart domain"
                    )));
                }
            }
        }
        let (mut tol_global, mut tol_per_check) = (None, BTreeMap::new());
        match &self.tol {
            Some(TolConfig::Global(t)) => tol_global = Some(*t),
            Some(TolConfig::PerCheck(map)) => tol_per_check = map.clone(),
            None => {}
        }
        if let Some(t) = overrides.tol {
            tol_global = Some(t);
        }
        for (name, t) in tol_per_check.iter().chain(tol_global.iter().map(|t| {
            // Single pass validation below covers the global value too.
            (&GLOBAL_KEY, t)
        })) {
            if !(*t > 0.0) {
                return Err(ConfigError::Invalid(format!(
                    "tolerance `{name}` must be positive, got {t}"
                )));
            }
        }
        let grid = overrides.grid.or(self.grid).unwrap_or(DEFAULT_GRID);
        if !(2..=12).contains(&grid) {
            return Err(ConfigError::Invalid(format!(
                "grid density must be in 2..=12, got {grid}"
            )));
        }
        let expect_violated = match self.expect.as_deref() {
            None => false,
            Some("violated") => true,
            Some(other) => {
                return Err(ConfigError::Invalid(format!(
                    "unknown expectation `{other}` (only \"violated\" is supported)"
                )))
            }
        };
        Ok(Resolved {
            chart,
            family,
            scale,
            seed: overrides.seed.or(self.seed).unwrap_or(DEFAULT_SEED),
            grid,
            tol_global,
            tol_per_check,
            expect_violated,
            config: self,
        })
    }
}

static GLOBAL_KEY: String = String::new();

impl Resolved {
    /// Tolerance for a check: per-check override, then global override, then
    /// the pinned default.
    pub fn tol(&self, check_id: &str, default: f64) -> f64 {
        if let Some(t) = self.tol_per_check.get(check_id) {
            return *t;
        }
        self.tol_global.unwrap_or(default)
    }

    pub fn family(&self) -> Result<&AdmissibleFamily, ConfigError> {
        self.family
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("this command needs a family".into()))
    }

    /// Sample points: configured points if any, otherwise `count` seeded
    /// pseudorandom interior points.
    pub fn sample_points(&self, count: usize) -> Vec<Vec<f64>> {
        match &self.config.points {
            Some(points) if !points.is_empty() => points.clone(),
            _ => tractor_forge::grid::random_points(self.chart.domain(), count, self.seed),
        }
    }

    pub fn section(&self) -> Result<TractorSection, ConfigError> {
        let spec = self
            .config
            .section
            .clone()
            .ok_or_else(|| ConfigError::Invalid("this action needs a \"section\"".into()))?;
        TractorSection::from_spec(spec, self.chart.dim()).map_err(lift_error)
    }

    pub fn path_segments(&self) -> Result<Vec<CurvePath>, ConfigError> {
        let cfg = self
            .config
            .path
            .clone()
            .ok_or_else(|| ConfigError::Invalid("this action needs a \"path\"".into()))?;
        let specs = match cfg {
            PathConfig::One(p) => vec![p],
            PathConfig::Segments(ps) => ps,
        };
        if specs.is_empty() {
            return Err(ConfigError::Invalid("path segment list is empty".into()));
        }
        specs
            .into_iter()
            .map(|p| CurvePath::from_spec(p).map_err(lift_error))
            .collect()
    }

    pub fn initial_vector(&self) -> Result<TractorVector, ConfigError> {
        let init =
            self.config.initial.clone().ok_or_else(|| {
                ConfigError::Invalid("transport needs an \"initial\" vector".into())
            })?;
        if init.w_top.len() != self.chart.dim() {
            return Err(ConfigError::Invalid(format!(
                "initial w_top has {} components for an n = {} chart",
                init.w_top.len(),
                self.chart.dim()
            )));
        }
        Ok(TractorVector::new(
            nalgebra::DVector::from_vec(init.w_top),
            init.w1,
            init.w2,
        ))
    }
}
