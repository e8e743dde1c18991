//! Scenario configuration: schema, TOML parsing, validation, and the
//! shipped default scenario.
//!
//! Every knob is data. A config file only needs the `[[paths]]` section;
//! all other fields have defaults matching the shipped scenario, and the
//! resolved config is embedded in the run's metrics output so results
//! stay self-describing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    ConflictLocation, ConflictPoint, GeometryError, IntersectionGeometry, PathGeometry, PathKind,
};
use crate::safety::SafetyParams;
use crate::trajectory::VehicleLimits;
use crate::{ConflictId, PathId};

/// The scenario shipped with the crate: a four-legged intersection with
/// four straights, two turns, and eight conflict points.
pub const DEFAULT_SCENARIO_TOML: &str = include_str!("../../assets/default_scenario.toml");

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("config failed to parse: {0}")]
    Parse(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// One path entry of the scenario document.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathEntry {
    pub id: u32,
    pub kind: PathKind,
    pub length_m: f64,
    /// Demand on this path, vehicles per hour.
    pub volume_veh_per_hour: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocationEntry {
    pub path_id: u32,
    pub distance_m: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConflictEntry {
    pub id: u32,
    pub locations: Vec<LocationEntry>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalModel {
    #[default]
    Poisson,
    /// Deterministic arrivals every 3600/volume seconds, the first one
    /// a full headway after time zero.
    UniformHeadway,
}

/// When replanning rounds run: on every control-zone entry, on a fixed
/// timer, or both.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Replanning {
    #[default]
    OnArrival,
    Periodic {
        period_s: f64,
    },
    Both {
        period_s: f64,
    },
}

impl Replanning {
    pub fn on_arrival(&self) -> bool {
        matches!(self, Replanning::OnArrival | Replanning::Both { .. })
    }

    pub fn period(&self) -> Option<f64> {
        match self {
            Replanning::OnArrival => None,
            Replanning::Periodic { period_s } | Replanning::Both { period_s } => Some(*period_s),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequencingPolicy {
    Fcfs,
    Priority,
    /// Run both orderings on the same seed and keep whichever yields the
    /// lower average travel time (FCFS on ties).
    BestOfBoth,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    #[default]
    InverseWindow,
    Uniform,
}

/// Whether a job's processing time is the earliest feasible exit time
/// itself or the residual from the replanning instant to it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessingTimeMode {
    #[default]
    Absolute,
    Residual,
}

/// What a replanning round does when no safe exit time exists for a CAV:
/// keep its previously committed plan (logged), or abort the run with a
/// diagnostic dump.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfeasiblePolicy {
    #[default]
    KeepPrevious,
    Abort,
}

/// Stop criterion for the arrival process; in-zone CAVs always drain to
/// their exits afterwards.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Horizon {
    Seconds { seconds: f64 },
    MaxCavs { max_cavs: u32 },
}

/// Entry speeds are drawn uniformly from this closed range, m/s.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntrySpeed {
    pub low_mps: f64,
    pub high_mps: f64,
}

/// Zero-centered uniform half-ranges of the deviation applied to each
/// observed state at replanning instants.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub position_m: f64,
    pub speed_mps: f64,
}

impl NoiseConfig {
    pub fn is_zero(&self) -> bool {
        self.position_m == 0.0 && self.speed_mps == 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_horizon")]
    pub horizon: Horizon,
    #[serde(default = "default_policy")]
    pub policy: SequencingPolicy,
    #[serde(default)]
    pub arrival_model: ArrivalModel,
    #[serde(default)]
    pub replanning: Replanning,
    #[serde(default)]
    pub weight_mode: WeightMode,
    #[serde(default)]
    pub processing_time: ProcessingTimeMode,
    #[serde(default)]
    pub on_infeasible: InfeasiblePolicy,
    #[serde(default = "default_grid_step")]
    pub planner_grid_step_s: f64,
    #[serde(default = "default_sample_step")]
    pub sample_step_s: f64,
    #[serde(default = "default_limits")]
    pub limits: VehicleLimits,
    #[serde(default = "default_safety")]
    pub safety: SafetyParams,
    #[serde(default = "default_entry_speed")]
    pub entry_speed: EntrySpeed,
    #[serde(default)]
    pub noise: NoiseConfig,
    pub paths: Vec<PathEntry>,
    #[serde(default)]
    pub conflicts: Vec<ConflictEntry>,
}

fn default_horizon() -> Horizon {
    Horizon::Seconds { seconds: 300.0 }
}

fn default_policy() -> SequencingPolicy {
    SequencingPolicy::Priority
}

fn default_grid_step() -> f64 {
    0.1
}

fn default_sample_step() -> f64 {
    0.1
}

fn default_limits() -> VehicleLimits {
    VehicleLimits {
        u_min: -3.0,
        u_max: 3.0,
        v_min: 1.0,
        v_max: 20.0,
    }
}

fn default_safety() -> SafetyParams {
    SafetyParams {
        gamma: 2.0,
        phi: 0.6,
    }
}

fn default_entry_speed() -> EntrySpeed {
    EntrySpeed {
        low_mps: 12.0,
        high_mps: 17.0,
    }
}

impl ScenarioConfig {
    /// Parses and validates a scenario document.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: ScenarioConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// The shipped default scenario.
    pub fn default_scenario() -> Self {
        Self::from_toml(DEFAULT_SCENARIO_TOML).expect("the shipped scenario is valid")
    }

    /// Builds the validated intersection geometry.
    pub fn geometry(&self) -> Result<IntersectionGeometry, GeometryError> {
        let paths = self
            .paths
            .iter()
            .map(|p| PathGeometry {
                id: PathId(p.id),
                kind: p.kind,
                length: p.length_m,
            })
            .collect();
        let conflicts = self
            .conflicts
            .iter()
            .map(|c| ConflictPoint {
                id: ConflictId(c.id),
                locations: c
                    .locations
                    .iter()
                    .map(|l| ConflictLocation {
                        path: PathId(l.path_id),
                        distance: l.distance_m,
                    })
                    .collect(),
            })
            .collect();
        IntersectionGeometry::new(paths, conflicts)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        self.geometry()?;
        for p in &self.paths {
            if !(p.volume_veh_per_hour > 0.0) || !p.volume_veh_per_hour.is_finite() {
                return invalid(format!(
                    "path {} volume_veh_per_hour must be positive, got {}",
                    p.id, p.volume_veh_per_hour
                ));
            }
        }
        let l = &self.limits;
        if !(l.u_min < 0.0) || !(l.u_max > 0.0) || !l.u_min.is_finite() || !l.u_max.is_finite() {
            return invalid(format!(
                "limits must satisfy u_min < 0 < u_max, got [{}, {}]",
                l.u_min, l.u_max
            ));
        }
        if !(l.v_min > 0.0) || !(l.v_max >= l.v_min) || !l.v_max.is_finite() {
            return invalid(format!(
                "limits must satisfy 0 < v_min <= v_max, got [{}, {}]",
                l.v_min, l.v_max
            ));
        }
        if !(self.safety.gamma > 0.0) || !self.safety.gamma.is_finite() {
            return invalid(format!("safety.gamma must be positive, got {}", self.safety.gamma));
        }
        if !(self.safety.phi > 0.0) || !self.safety.phi.is_finite() {
            return invalid(format!("safety.phi must be positive, got {}", self.safety.phi));
        }
        let s = &self.entry_speed;
        if !(l.v_min <= s.low_mps && s.low_mps <= s.high_mps && s.high_mps <= l.v_max) {
            return invalid(format!(
                "entry_speed [{}, {}] must lie within the speed limits [{}, {}]",
                s.low_mps, s.high_mps, l.v_min, l.v_max
            ));
        }
        if !(self.noise.position_m >= 0.0) || !self.noise.position_m.is_finite() {
            return invalid(format!(
                "noise.position_m must be nonnegative, got {}",
                self.noise.position_m
            ));
        }
        if !(self.noise.speed_mps >= 0.0) || !self.noise.speed_mps.is_finite() {
            return invalid(format!(
                "noise.speed_mps must be nonnegative, got {}",
                self.noise.speed_mps
            ));
        }
        match self.horizon {
            Horizon::Seconds { seconds } => {
                if !(seconds > 0.0) || !seconds.is_finite() {
                    return invalid(format!("horizon.seconds must be positive, got {seconds}"));
                }
            }
            Horizon::MaxCavs { max_cavs } => {
                if max_cavs == 0 {
                    return invalid("horizon.max_cavs must be at least 1".to_string());
                }
            }
        }
        if !(self.planner_grid_step_s > 0.0) || !self.planner_grid_step_s.is_finite() {
            return invalid(format!(
                "planner_grid_step_s must be positive, got {}",
                self.planner_grid_step_s
            ));
        }
        if !(self.sample_step_s > 0.0) || !self.sample_step_s.is_finite() {
            return invalid(format!(
                "sample_step_s must be positive, got {}",
                self.sample_step_s
            ));
        }
        if let Some(period) = self.replanning.period() {
            if !(period > 0.0) || !period.is_finite() {
                return invalid(format!("replanning period_s must be positive, got {period}"));
            }
        }
        Ok(())
    }

    /// Copy with a different seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seed = seed;
        c
    }

    /// Copy with a different sequencing policy.
    pub fn with_policy(&self, policy: SequencingPolicy) -> Self {
        let mut c = self.clone();
        c.policy = policy;
        c
    }

    /// Copy with every path's demand set to the same volume (veh/h).
    pub fn with_uniform_volume(&self, volume: f64) -> Self {
        let mut c = self.clone();
        for p in &mut c.paths {
            p.volume_veh_per_hour = volume;
        }
        c
    }

    pub fn path_length(&self, path: PathId) -> Option<f64> {
        self.paths.iter().find(|p| p.id == path.0).map(|p| p.length_m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_scenario_is_valid_and_complete() {
        let cfg = ScenarioConfig::default_scenario();
        assert_eq!(cfg.paths.len(), 6);
        assert_eq!(cfg.conflicts.len(), 8);
        let g = cfg.geometry().unwrap();
        assert_eq!(g.path_count(), 6);
        assert_eq!(g.conflict_count(), 8);
        assert_eq!(cfg.policy, SequencingPolicy::Priority);
        assert!(cfg.noise.is_zero());
        assert_eq!(cfg.horizon, Horizon::Seconds { seconds: 300.0 });
    }

    #[test]
    fn minimal_document_fills_defaults() {
        let cfg = ScenarioConfig::from_toml(
            r#"
            [[paths]]
            id = 1
            kind = "straight"
            length_m = 212.0
            volume_veh_per_hour = 600.0
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.planner_grid_step_s, 0.1);
        assert_eq!(cfg.limits.v_max, 20.0);
        assert_eq!(cfg.safety.gamma, 2.0);
        assert_eq!(cfg.entry_speed.low_mps, 12.0);
        assert_eq!(cfg.replanning, Replanning::OnArrival);
        assert_eq!(cfg.processing_time, ProcessingTimeMode::Absolute);
        assert_eq!(cfg.on_infeasible, InfeasiblePolicy::KeepPrevious);
    }

    #[test]
    fn parse_errors_are_reported() {
        assert!(matches!(
            ScenarioConfig::from_toml("not toml ["),
            Err(ConfigError::Parse(_))
        ));
        // unknown keys are config bugs, not silently ignored
        assert!(matches!(
            ScenarioConfig::from_toml(
                r#"
                sede = 3
                [[paths]]
                id = 1
                kind = "straight"
                length_m = 212.0
                volume_veh_per_hour = 600.0
                "#
            ),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn validation_rejects_bad_fields() {
        let base = ScenarioConfig::default_scenario();

        let mut c = base.clone();
        c.paths[0].volume_veh_per_hour = 0.0;
        assert!(matches!(c.validate(), Err(ConfigError::Invalid(_))));

        let mut c = base.clone();
        c.limits.u_min = 1.0;
        assert!(matches!(c.validate(), Err(ConfigError::Invalid(_))));

        let mut c = base.clone();
        c.entry_speed.high_mps = 25.0; // above v_max
        assert!(matches!(c.validate(), Err(ConfigError::Invalid(_))));

        let mut c = base.clone();
        c.noise.position_m = -1.0;
        assert!(matches!(c.validate(), Err(ConfigError::Invalid(_))));

        let mut c = base.clone();
        c.horizon = Horizon::Seconds { seconds: 0.0 };
        assert!(matches!(c.validate(), Err(ConfigError::Invalid(_))));

        let mut c = base.clone();
        c.replanning = Replanning::Periodic { period_s: 0.0 };
        assert!(matches!(c.validate(), Err(ConfigError::Invalid(_))));

        let mut c = base;
        c.conflicts[0].locations[0].distance_m = 500.0;
        assert!(matches!(c.validate(), Err(ConfigError::Geometry(_))));
    }

    #[test]
    fn horizon_variants_parse() {
        let doc = |h: &str| {
            format!(
                r#"
                horizon = {h}
                [[paths]]
                id = 1
                kind = "straight"
                length_m = 212.0
                volume_veh_per_hour = 600.0
                "#
            )
        };
        let cfg = ScenarioConfig::from_toml(&doc("{ seconds = 120.0 }")).unwrap();
        assert_eq!(cfg.horizon, Horizon::Seconds { seconds: 120.0 });
        let cfg = ScenarioConfig::from_toml(&doc("{ max_cavs = 7 }")).unwrap();
        assert_eq!(cfg.horizon, Horizon::MaxCavs { max_cavs: 7 });
    }

    #[test]
    fn overrides_produce_modified_copies() {
        let cfg = ScenarioConfig::default_scenario();
        assert_eq!(cfg.with_seed(9).seed, 9);
        assert_eq!(
            cfg.with_policy(SequencingPolicy::Fcfs).policy,
            SequencingPolicy::Fcfs
        );
        let uniform = cfg.with_uniform_volume(2400.0);
        assert!(uniform
            .paths
            .iter()
            .all(|p| p.volume_veh_per_hour == 2400.0));
    }
}
