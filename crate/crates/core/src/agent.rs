use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::PlacementError;
use crate::geometry::{Rect, Vec2};
use crate::movement::choose_exit;
use crate::rng::{self, purpose};
use crate::scenario::{PlacementPolicy, PopulationDoc, Range, Scenario};

/// Per-attempt budget for rejection sampling of one agent.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: usize,
    pub position: Vec2,
    pub velocity: Vec2,
    /// kg
    pub mass: f64,
    /// m
    pub radius: f64,
    /// m/s
    pub desired_speed: f64,
    pub perceived_threat: f64,
    pub competitiveness: f64,
    pub target_exit: usize,
    pub evacuated_at: Option<f64>,
    /// Set when sustained critical exposure turns the agent into a static
    /// obstacle.
    #[serde(default)]
    pub immobile: bool,
}

impl AgentState {
    pub fn is_active(&self) -> bool {
        self.evacuated_at.is_none()
    }

    /// Desired speed scaled by the competitiveness/threat coupling.
    pub fn effective_desired_speed(&self, speed_cap: f64) -> f64 {
        (self.desired_speed * (1.0 + self.competitiveness * self.perceived_threat)).min(speed_cap)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Placement {
    UniformRandom { region: Rect },
    Grid { region: Rect },
    Explicit(Vec<Vec2>),
}

impl Placement {
    pub fn from_population(pop: &PopulationDoc, scenario: &Scenario) -> Self {
        let region = pop
            .region
            .map(|r| Rect::new(Vec2::new(r.min[0], r.min[1]), Vec2::new(r.max[0], r.max[1])))
            .unwrap_or(scenario.bounds);
        match pop.placement {
            PlacementPolicy::UniformRandomNonoverlapping => Placement::UniformRandom { region },
            PlacementPolicy::Grid => Placement::Grid { region },
            PlacementPolicy::ExplicitList => Placement::Explicit(
                pop.positions.iter().map(|p| Vec2::new(p[0], p[1])).collect(),
            ),
        }
    }
}

fn draw(rng: &mut impl Rng, range: Range) -> f64 {
    let (lo, hi) = (range[0].min(range[1]), range[0].max(range[1]));
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

fn fits(scenario: &Scenario, placed: &[AgentState], p: Vec2, r: f64) -> bool {
    scenario.bounds.contains(p, 0.0)
        && p.x - r >= scenario.bounds.min.x
        && p.x + r <= scenario.bounds.max.x
        && p.y - r >= scenario.bounds.min.y
        && p.y + r <= scenario.bounds.max.y
        && !scenario.in_obstacle(p)
        && scenario.wall_set().iter().all(|w| w.distance_to(p) >= r)
        && placed
            .iter()
            .all(|a| a.position.distance(p) >= a.radius + r)
}

/// Seeds `n` pairwise non-overlapping agents. Attributes come from the
/// scenario's population ranges; the result depends only on `seed`.
pub fn seed_agents(
    scenario: &Scenario,
    n: usize,
    placement: &Placement,
    seed: u64,
) -> Result<Vec<AgentState>, PlacementError> {
    let profile = &scenario.population;
    let mut agents: Vec<AgentState> = Vec::with_capacity(n);

    let template = |id: usize| {
        let mut r = rng::stream(seed, &[purpose::PROFILE, id as u64]);
        AgentState {
            id,
            position: Vec2::ZERO,
            velocity: Vec2::ZERO,
            mass: draw(&mut r, profile.mass),
            radius: draw(&mut r, profile.radius),
            desired_speed: draw(&mut r, profile.desired_speed),
            perceived_threat: draw(&mut r, profile.threat).clamp(0.0, 1.0),
            competitiveness: draw(&mut r, profile.competitiveness).clamp(0.0, 1.0),
            target_exit: 0,
            evacuated_at: None,
            immobile: false,
        }
    };

    match placement {
        Placement::UniformRandom { region } => {
            let mut r = rng::stream(seed, &[purpose::PLACEMENT]);
            for id in 0..n {
                let mut agent = template(id);
                let rad = agent.radius;
                let mut placed = false;
                for _ in 0..MAX_PLACEMENT_ATTEMPTS {
                    let lo = Vec2::new(region.min.x + rad, region.min.y + rad);
                    let hi = Vec2::new(region.max.x - rad, region.max.y - rad);
                    if hi.x < lo.x || hi.y < lo.y {
                        break;
                    }
                    let p = Vec2::new(
                        r.random_range(lo.x..=hi.x),
                        r.random_range(lo.y..=hi.y),
                    );
                    if fits(scenario, &agents, p, rad) {
                        agent.position = p;
                        placed = true;
                        break;
                    }
                }
                if !placed {
                    return Err(PlacementError::NoRoom {
                        placed: id,
                        requested: n,
                        attempts: MAX_PLACEMENT_ATTEMPTS,
                    });
                }
                agents.push(agent);
            }
        }
        Placement::Grid { region } => {
            let people: Vec<AgentState> = (0..n).map(template).collect();
            let r_max = people.iter().map(|a| a.radius).fold(0.0, f64::max);
            let spacing = 2.0 * r_max + 0.05;
            let mut candidates = Vec::new();
            let mut y = region.min.y + r_max + 0.025;
            while y + r_max <= region.max.y {
                let mut x = region.min.x + r_max + 0.025;
                while x + r_max <= region.max.x {
                    candidates.push(Vec2::new(x, y));
                    x += spacing;
                }
                y += spacing;
            }
            let mut slots = candidates.into_iter();
            for mut agent in people {
                let slot = slots
                    .by_ref()
                    .find(|&p| fits(scenario, &agents, p, agent.radius));
                match slot {
                    Some(p) => {
                        agent.position = p;
                        agents.push(agent);
                    }
                    None => {
                        return Err(PlacementError::NoRoom {
                            placed: agents.len(),
                            requested: n,
                            attempts: agents.len(),
                        })
                    }
                }
            }
        }
        Placement::Explicit(positions) => {
            if positions.len() != n {
                return Err(PlacementError::ExplicitCount {
                    given: positions.len(),
                    requested: n,
                });
            }
            for (id, &p) in positions.iter().enumerate() {
                let mut agent = template(id);
                if !fits(scenario, &agents, p, agent.radius) {
                    return Err(PlacementError::ExplicitOverlap { index: id, x: p.x, y: p.y });
                }
                agent.position = p;
                agents.push(agent);
            }
        }
    }

    for a in &mut agents {
        a.target_exit = choose_exit(a, scenario);
    }
    Ok(agents)
}

/// Seeds the population described by the scenario document itself.
pub fn seed_population(scenario: &Scenario, seed: u64) -> Result<Vec<AgentState>, PlacementError> {
    let placement = Placement::from_population(&scenario.population, scenario);
    seed_agents(scenario, scenario.population.count, &placement, seed)
}
