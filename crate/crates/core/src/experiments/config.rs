//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Density, TorusGrid};
use crate::master::MasterOptions;
use crate::mfg_discounted::DELTA_MAX;
use crate::mfg_ergodic::{solve_ergodic, ErgodicOptions};
use crate::mfg_finite::{PicardOptions, MAX_DT_FACTOR};
use crate::model::{preset_by_name, ModelSpec, ModelSpecData};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n: 128 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    /// `dt = dt_factor * h`
    pub dt_factor: f64,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self { dt_factor: MAX_DT_FACTOR }
    }
}

/// A preset name or a full model on the configured grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelChoice {
    Preset(String),
    Full(ModelSpecData),
}

impl Default for ModelChoice {
    fn default() -> Self {
        ModelChoice::Preset("standard".into())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedDensity {
    Uniform,
    /// The ergodic density of the configured model.
    MBar,
}

/// Initial density: a name, or `1 + sum_k cos_k cos(2 pi k x) + sin_k sin(2 pi k x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialDensity {
    Named(NamedDensity),
    Modes {
        #[serde(default)]
        cos: Vec<f64>,
        #[serde(default)]
        sin: Vec<f64>,
    },
}

impl Default for InitialDensity {
    fn default() -> Self {
        InitialDensity::Modes {
            cos: vec![0.4],
            sin: vec![0.2],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowRule {
    /// `[lo * T, hi * T]`
    Fixed,
    /// The fixed rule applied to the part of the curve above the
    /// round-off plateau.
    FloorAware,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub lo: f64,
    pub hi: f64,
    pub rule: WindowRule,
    /// Values within this factor of the plateau are treated as floor.
    pub floor_factor: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lo: 0.15,
            hi: 0.5,
            rule: WindowRule::FloorAware,
            floor_factor: 100.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrectorConfig {
    pub tol_chi: f64,
    pub t_start: f64,
    pub t_growth: f64,
    pub t_cap: f64,
    pub delta_start: f64,
    pub delta_floor: f64,
}

impl Default for CorrectorConfig {
    fn default() -> Self {
        let m = MasterOptions::default();
        Self {
            tol_chi: m.tol_chi,
            t_start: m.t_start,
            t_growth: m.t_growth,
            t_cap: m.t_cap,
            delta_start: m.delta_start,
            delta_floor: m.delta_floor,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub model: ModelChoice,
    pub solver: PicardOptions,
    pub ergodic: ErgodicOptions,
    pub t_list: Vec<f64>,
    pub delta_list: Vec<f64>,
    pub m0: InitialDensity,
    pub fit: FitConfig,
    pub corrector: CorrectorConfig,
    /// Truncated horizon of discounted solves; absent means `max(20, 5/delta)`.
    pub t_trunc: Option<f64>,
    pub check_tail: bool,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig::default(),
            time: TimeConfig::default(),
            model: ModelChoice::default(),
            solver: PicardOptions::default(),
            ergodic: ErgodicOptions::default(),
            t_list: vec![10.0, 15.0],
            delta_list: vec![0.2, 0.1, 0.05, 0.025],
            m0: InitialDensity::default(),
            fit: FitConfig::default(),
            corrector: CorrectorConfig::default(),
            t_trunc: None,
            check_tail: false,
            output_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

fn config_err(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        message: message.into(),
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        TorusGrid::new(self.grid.n).map_err(|e| config_err("grid.n", e.to_string()))?;
        let f = self.time.dt_factor;
        if !(f > 0.0 && f <= MAX_DT_FACTOR) {
            return Err(config_err("time.dt_factor", format!("must lie in (0, {MAX_DT_FACTOR}], got {f}")));
        }
        if let ModelChoice::Full(d) = &self.model {
            if d.n != self.grid.n {
                return Err(config_err("model.n", format!("model has n = {} but grid.n = {}", d.n, self.grid.n)));
            }
        }
        for (i, d) in self.delta_list.iter().enumerate() {
            if !(*d > 0.0 && *d <= DELTA_MAX) {
                return Err(config_err(&format!("delta_list[{i}]"), format!("delta out of range (0, {DELTA_MAX}]: {d}")));
            }
        }
        for (i, t) in self.t_list.iter().enumerate() {
            if !(*t >= 1.0) || !t.is_finite() {
                return Err(config_err(&format!("t_list[{i}]"), format!("horizon must be >= 1, got {t}")));
            }
        }
        if !(0.0 <= self.fit.lo && self.fit.lo < self.fit.hi && self.fit.hi <= 1.0) {
            return Err(config_err("fit", "need 0 <= lo < hi <= 1"));
        }
        if !(self.fit.floor_factor >= 1.0) {
            return Err(config_err("fit.floor_factor", "must be >= 1"));
        }
        self.solver.validate().map_err(|e| config_err("solver", e.to_string()))?;
        let c = &self.corrector;
        if !(c.tol_chi > 0.0 && c.t_start > 0.0 && c.t_growth > 1.0 && c.t_cap >= c.t_start) {
            return Err(config_err("corrector", "need tol_chi > 0, t_start > 0, t_growth > 1, t_cap >= t_start"));
        }
        if !(c.delta_floor > 0.0 && c.delta_floor <= c.delta_start && c.delta_start <= DELTA_MAX) {
            return Err(config_err("corrector", format!("delta out of range: need 0 < delta_floor <= delta_start <= {DELTA_MAX}")));
        }
        if let Some(t) = self.t_trunc {
            if !(t > 0.0 && t.is_finite()) {
                return Err(config_err("t_trunc", "must be positive"));
            }
        }
        self.model_spec()?;
        Ok(())
    }

    pub fn grid(&self) -> TorusGrid {
        TorusGrid::new(self.grid.n).expect("validated")
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let g = TorusGrid::new(self.grid.n).map_err(|e| config_err("grid.n", e.to_string()))?;
        match &self.model {
            ModelChoice::Preset(name) => preset_by_name(name, g).map_err(|e| config_err("model", e.to_string())),
            ModelChoice::Full(d) => ModelSpec::try_from(d.clone()).map_err(|e| config_err("model", e.to_string())),
        }
    }

    pub fn master_options(&self) -> MasterOptions {
        let c = &self.corrector;
        MasterOptions {
            picard: self.solver,
            ergodic: self.ergodic,
            dt_factor: self.time.dt_factor,
            tol_chi: c.tol_chi,
            t_start: c.t_start,
            t_growth: c.t_growth,
            t_cap: c.t_cap,
            delta_start: c.delta_start,
            delta_floor: c.delta_floor,
            discount_horizon: self.t_trunc,
        }
    }

    /// Resolves `m0`; `m_bar` costs an ergodic solve.
    pub fn initial_density(&self, spec: &ModelSpec) -> Result<Density> {
        match &self.m0 {
            InitialDensity::Named(NamedDensity::Uniform) => Ok(Density::uniform(spec.grid())),
            InitialDensity::Named(NamedDensity::MBar) => Ok(solve_ergodic(spec, &self.ergodic)?.m_bar),
            InitialDensity::Modes { cos, sin } => {
                Density::from_modes(spec.grid(), cos, sin).map_err(|e| config_err("m0", e.to_string()))
            }
        }
    }
}

/// Parses and validates a config, filling defaults.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        config_err(&path, e.into_inner().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config_str(r#"{"model": "standard"}"#).unwrap();
        assert_eq!(c.grid.n, 128);
        assert_eq!(c.solver.damping, 0.5);
        assert_eq!(c.solver.tol, 1e-8);
        assert_eq!(c, ExperimentConfig::default());
    }

    #[test]
    fn alpha_alias() {
        let c = parse_config_str(r#"{"solver": {"alpha": 0.3}}"#).unwrap();
        assert_eq!(c.solver.damping, 0.3);
    }

    #[test]
    fn delta_out_of_range() {
        let e = parse_config_str(r#"{"delta_list": [0.1, 0.9]}"#).unwrap_err();
        assert!(e.to_string().contains("delta out of range"), "{e}");
        assert!(e.to_string().contains("delta_list[1]"), "{e}");
    }

    #[test]
    fn short_horizon_rejected() {
        assert!(parse_config_str(r#"{"t_list": [0.5]}"#).is_err());
    }

    #[test]
    fn schema_errors_carry_the_path() {
        let e = parse_config_str(r#"{"grid": {"n": "big"}}"#).unwrap_err();
        assert!(e.to_string().contains("grid.n"), "{e}");
        let e = parse_config_str(r#"{"solver": {"tolerance": 1}}"#).unwrap_err();
        assert!(e.to_string().contains("solver"), "{e}");
        assert!(parse_config_str(r#"{"model": "nope"}"#).is_err());
    }

    #[test]
    fn round_trip() {
        let mut c = ExperimentConfig::default();
        c.m0 = InitialDensity::Named(NamedDensity::MBar);
        c.t_trunc = Some(20.0);
        c.grid.n = 32;
        let back = parse_config_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        let spec = c.model_spec().unwrap();
        let mut full = c.clone();
        full.model = ModelChoice::Full(ModelSpecData::from(&spec));
        let back = parse_config_str(&serde_json::to_string_pretty(&full).unwrap()).unwrap();
        assert_eq!(back, full);
    }
}
