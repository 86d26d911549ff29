//! Simulation configuration, loaded from TOML.
//!
//! Every section is optional and every field has a default, so an empty file
//! is a valid configuration. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapper::{MapperKind, RlSettings};
use crate::pvgrid::PvParams;
use crate::reliability::{AgingParams, TcParams, ThermalCycle};
use crate::thermal::{celsius_to_kelvin, ThermalConfig};
use crate::workload::TaskRanges;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub grid: GridConfig,
    pub pv: PvParams,
    pub thermal: ThermalSection,
    pub reliability: ReliabilitySection,
    pub clustering: ClusteringSection,
    pub rl: RlSettings,
    pub workload: WorkloadSection,
    pub experiment: ExperimentSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub rows: usize,
    pub cols: usize,
    /// Optional PV map to load instead of generating one.
    pub pv_file: Option<PathBuf>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { rows: 4, cols: 4, pv_file: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThermalSection {
    /// Ambient temperature, degrees Celsius.
    pub ambient_c: f64,
    pub r_vertical: f64,
    pub g_lateral: f64,
    pub capacitance: f64,
    pub dt: f64,
    /// Temperature sampling period for rainflow counting, seconds. Must be a
    /// whole number of steps.
    pub sample_period: f64,
    /// Leakage power of an idle core, W.
    pub idle_power: f64,
}

impl Default for ThermalSection {
    fn default() -> Self {
        let t = ThermalConfig::default();
        ThermalSection {
            ambient_c: 45.0,
            r_vertical: t.r_vertical,
            g_lateral: t.g_lateral,
            capacitance: t.capacitance,
            dt: t.dt,
            sample_period: 1.0,
            idle_power: 0.3,
        }
    }
}

impl ThermalSection {
    pub fn model_config(&self) -> ThermalConfig {
        ThermalConfig {
            ambient: celsius_to_kelvin(self.ambient_c),
            r_vertical: self.r_vertical,
            g_lateral: self.g_lateral,
            capacitance: self.capacitance,
            dt: self.dt,
        }
    }

    pub fn steps_per_sample(&self) -> Result<u64> {
        let ratio = self.sample_period / self.dt;
        let n = ratio.round();
        if !(n >= 1.0) || (ratio - n).abs() > 1e-9 * ratio {
            return Err(Error::Config {
                field: "thermal.sample_period".into(),
                msg: format!("must be a positive multiple of dt = {} s, got {}", self.dt, self.sample_period),
            });
        }
        Ok(n as u64)
    }
}

/// Reference thermal cycle used to calibrate the Coffin-Manson scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TcReference {
    pub amplitude: f64,
    pub t_max: f64,
    pub duration: f64,
}

impl Default for TcReference {
    fn default() -> Self {
        TcReference { amplitude: 10.0, t_max: 335.0, duration: 60.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReliabilitySection {
    pub tc: TcParams,
    pub aging: AgingParams,
    /// Recompute `tc.a_tc` and the NBTI/HCI/EM scales from the references below.
    pub calibrate: bool,
    pub tc_reference: TcReference,
    /// Temperature at which NBTI, HCI and EM yield `nominal_years`, kelvin.
    pub reference_temp: f64,
    pub nominal_years: f64,
    /// Substrate and EM currents of an idle core, A.
    pub idle_i_sub: f64,
    pub idle_i_em: f64,
}

impl Default for ReliabilitySection {
    fn default() -> Self {
        ReliabilitySection {
            tc: TcParams::tabulated(),
            aging: AgingParams::default(),
            calibrate: true,
            tc_reference: TcReference::default(),
            reference_temp: 318.0,
            nominal_years: 7.0,
            idle_i_sub: 0.5,
            idle_i_em: 0.5,
        }
    }
}

impl ReliabilitySection {
    /// Model parameters with calibration applied.
    pub fn resolved(&self) -> Result<(TcParams, AgingParams)> {
        let field = |name: &'static str| move |e: Error| config_error(name, e);
        self.tc.validate().map_err(field("reliability.tc"))?;
        self.aging.validate().map_err(field("reliability.aging"))?;
        for (name, v) in [("reliability.idle_i_sub", self.idle_i_sub), ("reliability.idle_i_em", self.idle_i_em)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config { field: name.into(), msg: format!("must be positive, got {v}") });
            }
        }
        if !self.calibrate {
            return Ok((self.tc, self.aging));
        }
        for (name, v) in [("reliability.reference_temp", self.reference_temp), ("reliability.nominal_years", self.nominal_years)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config { field: name.into(), msg: format!("must be positive, got {v}") });
            }
        }
        let r = self.tc_reference;
        if !(r.duration > 0.0 && r.t_max > 0.0) {
            return Err(Error::Config { field: "reliability.tc_reference".into(), msg: "duration and t_max must be positive".into() });
        }
        let cycle = ThermalCycle { amplitude: r.amplitude, t_max: r.t_max, duration: r.duration, weight: 1.0 };
        let tc = self.tc.calibrated(&cycle, self.nominal_years).map_err(field("reliability.tc_reference"))?;
        let aging = self.aging.calibrated(self.reference_temp, self.nominal_years).map_err(field("reliability.aging"))?;
        Ok((tc, aging))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusteringSection {
    pub epsilon: f64,
    pub min_pts: usize,
    pub repack: Repack,
}

impl Default for ClusteringSection {
    fn default() -> Self {
        ClusteringSection { epsilon: 0.7, min_pts: 1, repack: Repack::Arrival }
    }
}

/// When the bins are rebuilt from current temperatures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Repack {
    /// At every step in which at least one task arrives.
    #[default]
    Arrival,
    /// Before every dispatch.
    Task,
    /// Once, from the initial temperatures.
    Once,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkloadSource {
    /// Benchmark-named profiles cycled to `n_tasks` arrivals.
    Preset,
    /// Uniform draws from `ranges`.
    Synthetic,
    /// CSV trace at `path`.
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadSection {
    pub source: WorkloadSource,
    pub n_tasks: usize,
    /// Poisson arrival rate, tasks per second.
    pub arrival_rate: f64,
    pub path: Option<PathBuf>,
    pub ranges: TaskRanges,
}

impl Default for WorkloadSection {
    fn default() -> Self {
        WorkloadSection { source: WorkloadSource::Preset, n_tasks: 150, arrival_rate: 0.3, path: None, ranges: TaskRanges::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    /// Master seed for single runs.
    pub seed: u64,
    /// Master seeds for comparisons.
    pub seeds: Vec<u64>,
    /// Training episodes for the RL mapper.
    pub episodes: usize,
    pub mapper: MapperKind,
    pub mappers: Vec<MapperKind>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            seed: 1,
            seeds: (1..=10).collect(),
            episodes: 200,
            mapper: MapperKind::Rl,
            mappers: vec![MapperKind::Rl, MapperKind::Random, MapperKind::TcGreedy],
        }
    }
}

fn config_error(field: &str, e: Error) -> Error {
    match e {
        Error::InvalidArgument(msg) | Error::ModelDomain(msg) => Error::Config { field: field.into(), msg },
        other => other,
    }
}

impl SimConfig {
    pub fn from_toml_str(text: &str, path: &Path) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start].matches('\n').count() + 1).unwrap_or(0);
            Error::Parse { path: path.to_path_buf(), line, msg: e.message().to_string() }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    pub fn cores(&self) -> usize {
        self.grid.rows * self.grid.cols
    }

    /// Checks every section, naming the first offending field.
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |field: &str, msg: String| Err(Error::Config { field: field.into(), msg });
        if self.grid.rows == 0 || self.grid.cols == 0 {
            return cfg_err("grid.rows", format!("grid must be non-empty, got {}x{}", self.grid.rows, self.grid.cols));
        }
        let pv = &self.pv;
        if !(pv.p_min > 0.0 && pv.p_min < 1.0) {
            return cfg_err("pv.p_min", format!("must lie in (0, 1), got {}", pv.p_min));
        }
        if !(pv.correlation_length >= 0.0 && pv.correlation_length.is_finite()) {
            return cfg_err("pv.correlation_length", format!("must be >= 0, got {}", pv.correlation_length));
        }
        if pv.cells_per_core == 0 {
            return cfg_err("pv.cells_per_core", "must be >= 1".into());
        }
        for (name, v) in [("pv.kappa1", pv.kappa1), ("pv.kappa2", pv.kappa2), ("pv.gamma_res", pv.gamma_res), ("pv.beta_f", pv.beta_f)] {
            if !(v > 0.0 && v.is_finite()) {
                return cfg_err(name, format!("must be positive, got {v}"));
            }
        }
        self.thermal.model_config().validate().map_err(|e| config_error("thermal", e))?;
        self.thermal.steps_per_sample()?;
        if !(self.thermal.idle_power >= 0.0 && self.thermal.idle_power.is_finite()) {
            return cfg_err("thermal.idle_power", format!("must be >= 0, got {}", self.thermal.idle_power));
        }
        self.reliability.resolved()?;
        if !(self.clustering.epsilon > 0.0 && self.clustering.epsilon.is_finite()) {
            return cfg_err("clustering.epsilon", format!("must be positive, got {}", self.clustering.epsilon));
        }
        if self.clustering.min_pts == 0 {
            return cfg_err("clustering.min_pts", "must be >= 1".into());
        }
        self.rl.validate().map_err(|e| config_error("rl", e))?;
        let w = &self.workload;
        if !(w.arrival_rate > 0.0 && w.arrival_rate.is_finite()) {
            return cfg_err("workload.arrival_rate", format!("must be positive, got {}", w.arrival_rate));
        }
        w.ranges.validate().map_err(|e| config_error("workload.ranges", e))?;
        if w.source == WorkloadSource::File && w.path.is_none() {
            return cfg_err("workload.path", "required when source = \"file\"".into());
        }
        if self.experiment.mappers.is_empty() {
            return cfg_err("experiment.mappers", "must list at least one mapper".into());
        }
        Ok(())
    }

    /// Sets one value by dotted key, e.g. `rl.learning_rate`, parsing `value`
    /// as a TOML literal (bare words are taken as strings).
    pub fn with_override(&self, key: &str, value: &str) -> Result<Self> {
        let mut root = toml::Value::try_from(self).expect("config is serializable");
        let parsed: toml::Value = toml::from_str::<toml::Table>(&format!("v = {value}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        let mut node = &mut root;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let table = node.as_table_mut().ok_or_else(|| Error::Config { field: key.into(), msg: "not a table".into() })?;
            if i + 1 == parts.len() {
                table.insert(part.to_string(), parsed.clone());
                break;
            }
            node = table.get_mut(*part).ok_or_else(|| Error::Config { field: key.into(), msg: format!("unknown section `{part}`") })?;
        }
        let cfg: SimConfig =
            root.try_into().map_err(|e: toml::de::Error| Error::Config { field: key.into(), msg: e.message().to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = SimConfig::from_toml_str("", Path::new("x.toml")).unwrap();
        assert_eq!(cfg, SimConfig::default());
        assert_eq!(cfg.cores(), 16);
        assert_eq!(cfg.reliability.tc.b, 2.35);
        assert_eq!(cfg.reliability.tc.ea_tc, 0.42);
        assert_eq!(cfg.clustering.epsilon, 0.7);
        assert_eq!(cfg.rl.learning_rate, 0.72);
        assert_eq!(cfg.rl.discount, 0.28);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = SimConfig::default();
        let back = SimConfig::from_toml_str(&cfg.to_toml(), Path::new("x.toml")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_sections_override() {
        let text = "[grid]\nrows = 2\ncols = 3\n[rl]\nreward_variant = \"inverted\"\n[rl.epsilon]\nstart = 0.5\n";
        let cfg = SimConfig::from_toml_str(text, Path::new("x.toml")).unwrap();
        assert_eq!(cfg.cores(), 6);
        assert_eq!(cfg.rl.epsilon.start, 0.5);
        assert_eq!(cfg.rl.epsilon.floor, 0.05);
        assert_eq!(cfg.rl.reward_variant, crate::mapper::RewardVariant::Inverted);
    }

    #[test]
    fn unknown_key_is_a_parse_error_with_line() {
        let err = SimConfig::from_toml_str("[grid]\nrows = 2\nbogus = 1\n", Path::new("c.toml")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_values_name_the_field() {
        let check = |text: &str, field: &str| match SimConfig::from_toml_str(text, Path::new("c.toml")).unwrap_err() {
            Error::Config { field: f, .. } => assert!(f.starts_with(field), "{f} vs {field}"),
            other => panic!("unexpected {other:?}"),
        };
        check("[grid]\nrows = 0\n", "grid.rows");
        check("[pv]\np_min = 1.5\n", "pv.p_min");
        check("[thermal]\ndt = 5.0\nsample_period = 5.0\n", "thermal");
        check("[thermal]\nsample_period = 0.25\n", "thermal.sample_period");
        check("[clustering]\nepsilon = -1.0\n", "clustering.epsilon");
        check("[rl]\nlearning_rate = 2.0\n", "rl");
        check("[reliability.aging.em]\nn_em = 3.0\n", "reliability.aging");
        check("[workload]\nsource = \"file\"\n", "workload.path");
    }

    #[test]
    fn dotted_overrides() {
        let cfg = SimConfig::default();
        let c = cfg.with_override("rl.learning_rate", "0.5").unwrap();
        assert_eq!(c.rl.learning_rate, 0.5);
        let c = cfg.with_override("experiment.mapper", "random").unwrap();
        assert_eq!(c.experiment.mapper, MapperKind::Random);
        assert!(cfg.with_override("nope.x", "1").is_err());
        assert!(cfg.with_override("clustering.epsilon", "-1").is_err());
    }
}
