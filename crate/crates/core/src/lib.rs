//! Hybrid crowd-crush simulation: social-force movement, locale-level
//! disorder detection, a learned crush classifier and penalty-contact force
//! measurement, escalated per locale only where needed.

// `!(x > 0.0)` style checks reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod archive;
pub mod config;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod hybrid;
pub mod identify;
pub mod metrics;
pub mod movement;
pub mod qualify;
pub mod quantify;
pub mod rng;
pub mod scenario;
pub mod scenarios;
pub mod sim;
pub mod vicsek;

pub use agent::AgentState;
pub use config::RunConfig;
pub use error::{
    AnalysisError, ArchiveError, ConfigError, MetricsError, ModelError, NumericError, ProtocolError, ScenarioError,
    SimError,
};
pub use geometry::Vec2;
pub use grid::{CellId, LocaleGrid};
pub use hybrid::{CostCounters, Level, RunMode, Trigger};
pub use identify::{DetectorConfig, TransitionState};
pub use metrics::{FruinLevel, MetricsReport, SafetyVerdict};
pub use movement::MovementParams;
pub use qualify::{Classifier, CrushVerdict};
pub use quantify::{Contact, ContactForceParams, InjuryReport};
pub use scenario::{build_scenario, Scenario, ScenarioDoc};
pub use sim::{RunOutcome, RunStatus, Simulation};
