use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::hybrid::{EscalationPolicy, RunMode};
use crate::identify::DetectorConfig;
use crate::metrics::FruinBands;
use crate::movement::MovementParams;
use crate::qualify::{LabelParams, QualifyConfig, TrainParams};
use crate::quantify::{ContactForceParams, ReportConfig};
use crate::scenario::Scenario;

pub const CONFIG_SCHEMA: u32 = 1;

/// Everything that determines a run besides the scenario. Echoed into the
/// run archive; re-running from the echo reproduces the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    /// s
    pub dt: f64,
    /// Locale edge length, m.
    pub cell_size: f64,
    /// Trajectory rows are written every this many ticks.
    pub log_interval: u64,
    pub mode: RunMode,
    pub seed: u64,
    /// Runs still going at this time stop as incomplete, s.
    pub max_time: f64,
    /// Radius of the neighbourhood density feature, m.
    pub neighbourhood_radius: f64,
    /// Classifier used at L2 and above.
    pub model: Option<PathBuf>,
    pub movement: MovementParams,
    pub detector: DetectorConfig,
    pub qualify: QualifyConfig,
    pub labels: LabelParams,
    pub training: TrainParams,
    pub contact: ContactForceParams,
    pub policy: EscalationPolicy,
    pub report: ReportConfig,
    pub fruin: FruinBands,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema: CONFIG_SCHEMA,
            dt: 0.05,
            cell_size: 2.0,
            log_interval: 1,
            mode: RunMode::Hybrid,
            seed: 1,
            max_time: 300.0,
            neighbourhood_radius: 1.0,
            model: None,
            movement: MovementParams::default(),
            detector: DetectorConfig::default(),
            qualify: QualifyConfig::default(),
            labels: LabelParams::default(),
            training: TrainParams::default(),
            contact: ContactForceParams::default(),
            policy: EscalationPolicy::default(),
            report: ReportConfig::default(),
            fruin: FruinBands::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        if let Some(v) = table.get("schema") {
            let v = v
                .as_integer()
                .ok_or_else(|| ConfigError::Parse("`schema` must be an integer".into()))?;
            if v != CONFIG_SCHEMA as i64 {
                return Err(ConfigError::Parse(format!(
                    "unsupported config schema version {v} (expected {CONFIG_SCHEMA})"
                )));
            }
        }
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serialises")
    }

    /// Parameter checks that need the scenario: positivity, the classifier
    /// window, and the no-tunnelling bound `speed_cap·dt < min(r, cell)/2`.
    pub fn validate(&self, scenario: &Scenario) -> Result<(), ConfigError> {
        let pop = &scenario.population;
        let r_min = pop.radius[0].min(pop.radius[1]);
        let r_max = pop.radius[0].max(pop.radius[1]);
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(ConfigError::Invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.cell_size.is_finite() && self.cell_size > 0.0) {
            return Err(ConfigError::Invalid(format!("cell_size must be positive, got {}", self.cell_size)));
        }
        if !(self.max_time > 0.0) || self.log_interval == 0 || !(self.neighbourhood_radius > 0.0) {
            return Err(ConfigError::Invalid(
                "max_time, log_interval and neighbourhood_radius must be positive".into(),
            ));
        }
        self.movement.validate(r_max)?;
        let step = self.movement.speed_cap * self.dt;
        let bound = r_min.min(self.cell_size) / 2.0;
        if step >= bound {
            return Err(ConfigError::Invalid(format!(
                "dt too large: speed_cap·dt = {step} m must stay below min(radius, cell_size)/2 = {bound} m"
            )));
        }
        if self.cell_size < 2.0 * r_max {
            return Err(ConfigError::Invalid(format!(
                "cell_size {} must be at least one agent diameter ({})",
                self.cell_size,
                2.0 * r_max
            )));
        }
        let d = &self.detector;
        if d.window < 2 || d.bins < 2 || d.subset_size == 0 || !(d.v_eps >= 0.0) {
            return Err(ConfigError::Invalid(
                "detector needs window ≥ 2, bins ≥ 2, subset_size ≥ 1 and v_eps ≥ 0".into(),
            ));
        }
        if self.labels.window == 0 || self.labels.stride == 0 || !(self.labels.sustain > 0.0) {
            return Err(ConfigError::Invalid("label window, stride and sustain must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.qualify.p_crit) || !(0.0..=1.0).contains(&self.qualify.quorum) {
            return Err(ConfigError::Invalid("p_crit and quorum must lie in [0, 1]".into()));
        }
        if self.contact.body_stiffness <= 0.0 || self.contact.friction_coefficient < 0.0 {
            return Err(ConfigError::Invalid("contact stiffness must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_scenario, ExitDoc, ScenarioDoc};

    fn room() -> Scenario {
        build_scenario(&ScenarioDoc::room("r", 10.0, 10.0, vec![ExitDoc::new([10.0, 4.0], [10.0, 6.0], 1.0)])).unwrap()
    }

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let c = RunConfig::default();
        c.validate(&room()).unwrap();
        let back = RunConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_document_fills_defaults() {
        let c = RunConfig::from_toml_str("mode = \"full-force\"\nseed = 9\n[movement]\nspeed_cap = 2.0\n").unwrap();
        assert_eq!(c.mode, RunMode::FullForce);
        assert_eq!(c.movement.speed_cap, 2.0);
        assert_eq!(c.movement.relaxation_time, 0.5);
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(matches!(RunConfig::from_toml_str("schema = 2"), Err(ConfigError::Parse(_))));
        assert!(matches!(RunConfig::from_toml_str("bogus = 1"), Err(ConfigError::Parse(_))));
        assert!(matches!(RunConfig::from_toml_str("dt = "), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn tunnelling_bound() {
        let s = room();
        let c = RunConfig { dt: 0.06, ..Default::default() };
        assert!(matches!(c.validate(&s), Err(ConfigError::Invalid(_))));
        let mut c = RunConfig::default();
        c.movement.speed_cap = 3.0;
        assert!(c.validate(&s).is_err());
        c.dt = 0.04;
        assert!(c.validate(&s).is_ok());
    }
}
