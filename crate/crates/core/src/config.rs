//! Run configuration: a JSON document whose keys override the built-in
//! defaults. Absent keys keep their defaults, unknown keys are rejected.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::experiments::{default_cooling_costs, CriticalMode, ExperimentConfig};
use crate::keyrate::{Regime, DEFAULT_ERROR_CORRECTION_EFFICIENCY, DEFAULT_MISALIGNMENT_FLOOR};
use crate::milp::SolverOptions;
use crate::topology::TopologyParams;
use crate::{DetectorProfile, FibreParams, LinkModelParams, SourceParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown key `{path}`")]
    UnknownKey { path: String },
    #[error("invalid value at `{path}`: {message}")]
    Invalid { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandConfig {
    /// Key traffic each trusted node originates, bit/s.
    pub per_node_traffic_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub node_counts: Vec<usize>,
    pub instances: usize,
    pub compare_node_counts: Vec<usize>,
    pub compare_instances: usize,
    pub base_seed: u64,
    pub cooling_costs: Vec<f64>,
    pub attempt_budget: u32,
    pub critical_mode: CriticalMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub source: SourceParams,
    pub fibre: FibreParams,
    pub detector_warm: DetectorProfile,
    pub detector_cold: DetectorProfile,
    pub error_correction_efficiency: f64,
    pub misalignment_floor: f64,
    pub topology: TopologyParams,
    pub demand: DemandConfig,
    pub solver: SolverOptions,
    pub experiment: ExperimentSection,
    pub output_dir: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        Self {
            source: SourceParams::table_defaults(),
            fibre: FibreParams::table_defaults(),
            detector_warm: DetectorProfile::table_defaults(Regime::Warm),
            detector_cold: DetectorProfile::table_defaults(Regime::Cold),
            error_correction_efficiency: DEFAULT_ERROR_CORRECTION_EFFICIENCY,
            misalignment_floor: DEFAULT_MISALIGNMENT_FLOOR,
            topology: TopologyParams::default(),
            demand: DemandConfig {
                per_node_traffic_bps: e.per_node_traffic_bps,
            },
            solver: SolverOptions::default(),
            experiment: ExperimentSection {
                node_counts: e.node_counts,
                instances: e.instances,
                compare_node_counts: e.compare_node_counts,
                compare_instances: e.compare_instances,
                base_seed: e.base_seed,
                cooling_costs: default_cooling_costs(),
                attempt_budget: e.attempt_budget,
                critical_mode: e.critical_mode,
            },
            output_dir: None,
        }
    }
}

impl RunConfig {
    pub fn link_params(&self, regime: Regime) -> LinkModelParams {
        LinkModelParams {
            source: self.source,
            fibre: self.fibre,
            detector: match regime {
                Regime::Warm => self.detector_warm,
                Regime::Cold => self.detector_cold,
            },
            error_correction_efficiency: self.error_correction_efficiency,
            misalignment_floor: self.misalignment_floor,
        }
    }

    pub fn experiment_config(&self) -> ExperimentConfig {
        let e = &self.experiment;
        ExperimentConfig {
            node_counts: e.node_counts.clone(),
            instances: e.instances,
            compare_node_counts: e.compare_node_counts.clone(),
            compare_instances: e.compare_instances,
            base_seed: e.base_seed,
            per_node_traffic_bps: self.demand.per_node_traffic_bps,
            topology: self.topology,
            cooling_costs: e.cooling_costs.clone(),
            attempt_budget: e.attempt_budget,
            critical_mode: e.critical_mode,
            warm: self.link_params(Regime::Warm),
            cold: self.link_params(Regime::Cold),
            solver: self.solver,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |path: &str, message: String| ConfigError::Invalid {
            path: path.to_string(),
            message,
        };
        self.source.validate().map_err(|e| invalid("source", e.to_string()))?;
        self.fibre.validate().map_err(|e| invalid("fibre", e.to_string()))?;
        for (path, d, regime) in [
            ("detector_warm", &self.detector_warm, Regime::Warm),
            ("detector_cold", &self.detector_cold, Regime::Cold),
        ] {
            d.validate().map_err(|e| invalid(path, e.to_string()))?;
            if d.regime != regime {
                return Err(invalid(
                    &format!("{path}.regime"),
                    format!("must be {}", regime.as_str()),
                ));
            }
        }
        if !(self.error_correction_efficiency >= 1.0 && self.error_correction_efficiency.is_finite()) {
            return Err(invalid(
                "error_correction_efficiency",
                format!("must be >= 1, got {}", self.error_correction_efficiency),
            ));
        }
        if !(self.misalignment_floor >= 0.0 && self.misalignment_floor < 0.5) {
            return Err(invalid(
                "misalignment_floor",
                format!("must lie in [0, 0.5), got {}", self.misalignment_floor),
            ));
        }
        let t = &self.topology;
        if !(t.box_km > 0.0 && t.box_km.is_finite()) {
            return Err(invalid(
                "topology.box_km",
                format!("must be positive, got {}", t.box_km),
            ));
        }
        if !(t.target_degree > 0.0 && t.target_degree.is_finite()) {
            return Err(invalid(
                "topology.target_degree",
                format!("must be positive, got {}", t.target_degree),
            ));
        }
        if !(t.min_rate_bps > 0.0 && t.min_rate_bps.is_finite()) {
            return Err(invalid(
                "topology.min_rate_bps",
                format!("must be positive, got {}", t.min_rate_bps),
            ));
        }
        let s = &self.solver;
        if s.node_limit == 0 {
            return Err(invalid("solver.node_limit", "must be at least 1".into()));
        }
        for (path, v) in [
            ("solver.integrality_tolerance", s.integrality_tolerance),
            ("solver.objective_tolerance", s.objective_tolerance),
        ] {
            if !(v > 0.0 && v < 0.5) {
                return Err(invalid(path, format!("must lie in (0, 0.5), got {v}")));
            }
        }
        self.experiment_config()
            .validate()
            .map_err(|e| invalid("experiment", e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

fn merge(base: &mut Value, over: Value, path: &str) -> Result<(), ConfigError> {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => merge_objects(b, o, path),
        (slot, over) => {
            *slot = over;
            Ok(())
        }
    }
}

fn merge_objects(base: &mut Map<String, Value>, over: Map<String, Value>, path: &str) -> Result<(), ConfigError> {
    for (key, value) in over {
        let here = if path.is_empty() {
            key.clone()
        } else {
            format!("{path}.{key}")
        };
        match base.get_mut(&key) {
            Some(slot) => merge(slot, value, &here)?,
            None => return Err(ConfigError::UnknownKey { path: here }),
        }
    }
    Ok(())
}

/// Parses a config document. Whitespace alone means all defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut merged = serde_json::to_value(RunConfig::default()).expect("defaults serialize");
    if !text.trim().is_empty() {
        let over: Value = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        if !over.is_object() {
            return Err(ConfigError::Invalid {
                path: String::new(),
                message: "the document must be a JSON object".into(),
            });
        }
        merge(&mut merged, over, "")?;
    }
    let config: RunConfig = serde_path_to_error::deserialize(merged).map_err(|e| ConfigError::Invalid {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &std::path::Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(parse_config("").unwrap(), RunConfig::default());
        assert_eq!(parse_config(" {} ").unwrap(), RunConfig::default());
        let c = RunConfig::default();
        assert_eq!(c.detector_cold.efficiency, 0.85);
        assert_eq!(c.detector_warm.dark_count_rate, 6e3);
        assert_eq!(c.experiment.instances, 100);
        assert_eq!(c.demand.per_node_traffic_bps, 8000.0);
    }

    #[test]
    fn partial_override_keeps_siblings() {
        let c = parse_config(r#"{"detector_cold": {"dark_count_rate": 50}, "experiment": {"instances": 3}}"#).unwrap();
        assert_eq!(c.detector_cold.dark_count_rate, 50.0);
        assert_eq!(c.detector_cold.efficiency, 0.85);
        assert_eq!(c.experiment.instances, 3);
        assert_eq!(c.experiment.node_counts, vec![5, 6, 7, 8, 9, 10]);
    }

    #[test]
    fn out_of_range_efficiency_is_rejected() {
        let err = parse_config(r#"{"detector_cold": {"efficiency": 1.5}}"#).unwrap_err();
        match err {
            ConfigError::Invalid { path, message } => {
                assert_eq!(path, "detector_cold");
                assert!(message.contains("efficiency"), "{message}");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn unknown_and_mistyped_keys_name_their_path() {
        match parse_config(r#"{"solver": {"node_limt": 5}}"#).unwrap_err() {
            ConfigError::UnknownKey { path } => assert_eq!(path, "solver.node_limt"),
            other => panic!("unexpected {other}"),
        }
        match parse_config(r#"{"topology": {"box_km": "wide"}}"#).unwrap_err() {
            ConfigError::Invalid { path, .. } => assert_eq!(path, "topology.box_km"),
            other => panic!("unexpected {other}"),
        }
        assert!(matches!(parse_config("{"), Err(ConfigError::Parse { .. })));
        assert!(matches!(parse_config("[]"), Err(ConfigError::Invalid { .. })));
    }

    #[test]
    fn serialization_round_trips() {
        let c = parse_config(r#"{"fibre": {"alpha": 0.25}, "output_dir": "out"}"#).unwrap();
        let again = parse_config(&c.to_json()).unwrap();
        assert_eq!(c, again);
        assert_eq!(again.to_json(), c.to_json());
    }
}
