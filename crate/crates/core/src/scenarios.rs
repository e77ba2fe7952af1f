//! Built-in reference scenarios.

use crate::scenario::{build_scenario, BoundsDoc, ExitDoc, PlacementPolicy, Scenario, ScenarioDoc};

/// 10 m × 10 m room, 20 calm agents, 2 m exit in the east wall.
pub fn empty_room_doc() -> ScenarioDoc {
    let mut doc = ScenarioDoc::room("empty-room", 10.0, 10.0, vec![ExitDoc::new([10.0, 4.0], [10.0, 6.0], 1.0)]);
    doc.population.count = 20;
    doc.population.placement = PlacementPolicy::UniformRandomNonoverlapping;
    doc.population.region = Some(BoundsDoc {
        min: [0.0, 0.0],
        max: [7.0, 10.0],
    });
    doc.population.mass = [60.0, 100.0];
    doc.population.desired_speed = [1.2, 1.5];
    doc.aset = Some(120.0);
    doc
}

/// 20 m × 2 m corridor open along its whole east end; a sparse, calm
/// population that walks out in step.
pub fn corridor_doc() -> ScenarioDoc {
    let mut doc = ScenarioDoc::room("corridor", 20.0, 2.0, vec![ExitDoc::new([20.0, 0.0], [20.0, 2.0], 1.0)]);
    doc.population.count = 30;
    doc.population.region = Some(BoundsDoc {
        min: [0.0, 0.0],
        max: [16.0, 2.0],
    });
    doc.population.mass = [60.0, 100.0];
    doc.population.desired_speed = [1.3, 1.4];
    doc.aset = Some(60.0);
    doc
}

/// 10 m × 10 m room, 150 agents under high threat with competitive
/// egress, one 0.8 m exit centred in the east wall.
pub fn bottleneck_doc() -> ScenarioDoc {
    let mut doc = ScenarioDoc::room("bottleneck", 10.0, 10.0, vec![ExitDoc::new([10.0, 4.6], [10.0, 5.4], 1.0)]);
    doc.population.count = 150;
    doc.population.placement = PlacementPolicy::UniformRandomNonoverlapping;
    doc.population.mass = [60.0, 100.0];
    doc.population.radius = [0.25, 0.27];
    doc.population.desired_speed = [1.2, 1.6];
    doc.population.threat = [0.5, 1.0];
    doc.population.competitiveness = [0.5, 1.0];
    doc.aset = Some(120.0);
    doc
}

pub fn empty_room() -> Scenario {
    build_scenario(&empty_room_doc()).expect("built-in scenario is valid")
}

pub fn corridor() -> Scenario {
    build_scenario(&corridor_doc()).expect("built-in scenario is valid")
}

pub fn bottleneck() -> Scenario {
    build_scenario(&bottleneck_doc()).expect("built-in scenario is valid")
}

/// Looks a built-in scenario up by name.
pub fn by_name(name: &str) -> Option<ScenarioDoc> {
    match name {
        "empty-room" => Some(empty_room_doc()),
        "corridor" => Some(corridor_doc()),
        "bottleneck" => Some(bottleneck_doc()),
        _ => None,
    }
}

pub const NAMES: [&str; 3] = ["empty-room", "corridor", "bottleneck"];
