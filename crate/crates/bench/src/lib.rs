//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use crushsim_core::hybrid::RunMode;
use crushsim_core::qualify::{Classifier, FEATURE_COUNT};
use crushsim_core::{scenarios, RunConfig, Simulation};

/// Untrained classifier that scores windows on the neighbourhood density
/// of their last row. Drives the controller through every level.
pub fn density_gate() -> Arc<Classifier> {
    let window = RunConfig::default().labels.window;
    let mut m = Classifier::zeros(window, FEATURE_COUNT, 1);
    m.w1[(window - 1) * FEATURE_COUNT + FEATURE_COUNT - 1] = 10.0;
    m.b1[0] = -8.0;
    m.w2[0] = 20.0;
    m.b2 = -10.0;
    Arc::new(m)
}

/// Bottleneck simulation advanced `warm` ticks, so the crowd has reached
/// the exit.
pub fn bottleneck_at(mode: RunMode, warm: u64) -> Simulation {
    let cfg = RunConfig {
        mode,
        seed: 1,
        ..Default::default()
    };
    let model = (mode == RunMode::Hybrid).then(density_gate);
    let mut sim = Simulation::from_scenario(scenarios::bottleneck(), cfg, model).expect("built-in scenario runs");
    for _ in 0..warm {
        sim.step().expect("warm-up step");
    }
    sim
}
