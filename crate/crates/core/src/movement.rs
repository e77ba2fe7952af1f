//! Social-force movement: driving term toward the chosen exit plus
//! exponential psychological repulsion from neighbours and walls. Contact
//! (body and sliding friction) forces live in [`crate::quantify`].

use serde::{Deserialize, Serialize};

use crate::agent::AgentState;
use crate::error::{ConfigError, DegenerateError, NumericError};
use crate::geometry::{Segment, Vec2};
use crate::rng::{self, purpose};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MovementParams {
    /// τ, seconds.
    pub relaxation_time: f64,
    /// A, newtons.
    pub repulsion_strength: f64,
    /// B, metres.
    pub repulsion_range: f64,
    pub wall_repulsion_strength: f64,
    pub wall_repulsion_range: f64,
    /// Neighbours beyond this centre distance are ignored, metres.
    pub neighbor_cutoff: f64,
    /// m/s
    pub speed_cap: f64,
    /// Relaxation time of perceived threat toward the neighbourhood maximum.
    pub threat_relaxation_time: f64,
    /// Movement integration substeps per tick.
    pub substeps: u32,
}

impl Default for MovementParams {
    fn default() -> Self {
        MovementParams {
            relaxation_time: 0.5,
            repulsion_strength: 2000.0,
            repulsion_range: 0.08,
            wall_repulsion_strength: 2000.0,
            wall_repulsion_range: 0.08,
            neighbor_cutoff: 2.0,
            speed_cap: 2.4,
            threat_relaxation_time: 2.0,
            substeps: 5,
        }
    }
}

impl MovementParams {
    pub fn validate(&self, max_radius: f64) -> Result<(), ConfigError> {
        let all_positive = [
            self.relaxation_time,
            self.repulsion_strength,
            self.repulsion_range,
            self.wall_repulsion_strength,
            self.wall_repulsion_range,
            self.neighbor_cutoff,
            self.speed_cap,
            self.threat_relaxation_time,
        ]
        .iter()
        .all(|v| v.is_finite() && *v > 0.0);
        if !all_positive {
            return Err(ConfigError::Invalid("movement parameters must be strictly positive".into()));
        }
        if self.substeps == 0 {
            return Err(ConfigError::Invalid("movement substeps must be at least 1".into()));
        }
        if self.neighbor_cutoff < 2.0 * max_radius {
            return Err(ConfigError::Invalid(format!(
                "neighbor_cutoff {} is below twice the largest radius {}",
                self.neighbor_cutoff, max_radius
            )));
        }
        Ok(())
    }
}

/// Exit with the highest `familiarity / (1 + distance)`; lowest index wins ties.
pub fn choose_exit(agent: &AgentState, scenario: &Scenario) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (k, exit) in scenario.exits.iter().enumerate() {
        let d = exit.segment.distance_to(agent.position);
        let score = exit.familiarity / (1.0 + d);
        if score > best_score {
            best = k;
            best_score = score;
        }
    }
    best
}

/// Segment an agent actually aims at: the exit inset by the agent's radius
/// so the aim point is never a door jamb.
pub fn aim_segment(agent: &AgentState, scenario: &Scenario) -> Segment {
    scenario.exits[agent.target_exit].segment.inset(agent.radius)
}

/// Unit vector toward the nearest point of the target exit. Straight line,
/// no path finding.
pub fn desired_direction(agent: &AgentState, scenario: &Scenario) -> Result<Vec2, DegenerateError> {
    let target = aim_segment(agent, scenario).closest_point(agent.position);
    (target - agent.position)
        .try_normalize()
        .filter(|_| agent.position.distance(target) > 1e-12)
        .ok_or(DegenerateError {
            previous: agent.velocity.try_normalize().unwrap_or(Vec2::ZERO),
        })
}

/// Driving term `m (v0_eff e − v) / τ`. Immobile agents exert none.
pub fn driving_force(agent: &AgentState, direction: Vec2, params: &MovementParams) -> Vec2 {
    if agent.immobile {
        return Vec2::ZERO;
    }
    let v0 = agent.effective_desired_speed(params.speed_cap);
    (direction * v0 - agent.velocity) * (agent.mass / params.relaxation_time)
}

/// Context for the seeded separation direction of coincident agents.
#[derive(Debug, Clone, Copy)]
pub struct SeparationNoise {
    pub seed: u64,
    pub tick: u64,
}

/// Psychological repulsion on `agent` from `other`:
/// `A exp((r_ij − d_ij) / B) n_ij`, with `n_ij` pointing from `other` to `agent`.
pub fn pair_repulsion(
    agent: &AgentState,
    other: &AgentState,
    params: &MovementParams,
    noise: SeparationNoise,
) -> Vec2 {
    let diff = agent.position - other.position;
    let d = diff.length();
    if d == 0.0 {
        // Coincident centres: fixed-magnitude push along a direction hashed
        // from the unordered pair, antisymmetric by construction.
        let (lo, hi) = (agent.id.min(other.id), agent.id.max(other.id));
        let theta = std::f64::consts::TAU
            * rng::unit_f64(noise.seed, &[purpose::SEPARATION, noise.tick, lo as u64, hi as u64]);
        let u = Vec2::from_angle(theta) * params.repulsion_strength;
        return if agent.id == lo { u } else { -u };
    }
    let r = agent.radius + other.radius;
    (diff / d) * (params.repulsion_strength * ((r - d) / params.repulsion_range).exp())
}

pub fn wall_repulsion(agent: &AgentState, wall: &Segment, params: &MovementParams) -> Vec2 {
    let closest = wall.closest_point(agent.position);
    let diff = agent.position - closest;
    let d = diff.length();
    let n = diff.try_normalize().unwrap_or_else(|| (wall.b - wall.a).perp().try_normalize().unwrap_or(Vec2::ZERO));
    n * (params.wall_repulsion_strength * ((agent.radius - d) / params.wall_repulsion_range).exp())
}

/// Net movement force: driving term plus repulsion from every neighbour
/// and wall within the cutoff.
pub fn social_force<'a>(
    agent: &AgentState,
    direction: Vec2,
    neighbors: impl IntoIterator<Item = &'a AgentState>,
    walls: &[Segment],
    params: &MovementParams,
    noise: SeparationNoise,
) -> Vec2 {
    let mut f = driving_force(agent, direction, params);
    for other in neighbors {
        if other.id == agent.id || !other.is_active() {
            continue;
        }
        if agent.position.distance(other.position) <= params.neighbor_cutoff {
            f += pair_repulsion(agent, other, params, noise);
        }
    }
    for w in walls {
        if w.distance_to(agent.position) <= params.neighbor_cutoff {
            f += wall_repulsion(agent, w, params);
        }
    }
    f
}

/// Semi-implicit Euler: `v' = clamp(v + F/m dt, cap)`, `x' = x + v' dt`.
pub fn integrate(
    agent: &AgentState,
    net_force: Vec2,
    dt: f64,
    speed_cap: f64,
) -> Result<AgentState, NumericError> {
    if !net_force.is_finite() {
        return Err(NumericError {
            tick: 0,
            agent: Some(agent.id),
            what: "force",
        });
    }
    let mut next = agent.clone();
    if agent.immobile {
        next.velocity = Vec2::ZERO;
        return Ok(next);
    }
    let mut v = agent.velocity + net_force * (dt / agent.mass);
    let speed = v.length();
    if speed > speed_cap {
        v = v * (speed_cap / speed);
    }
    next.velocity = v;
    next.position = agent.position + v * dt;
    Ok(next)
}

/// One relaxation step of perceived threat toward the highest threat among
/// the agent and its neighbours.
pub fn relax_threat<'a>(
    agent: &AgentState,
    neighbors: impl IntoIterator<Item = &'a AgentState>,
    dt: f64,
    params: &MovementParams,
) -> f64 {
    let target = neighbors
        .into_iter()
        .filter(|o| o.is_active() && agent.position.distance(o.position) <= params.neighbor_cutoff)
        .map(|o| o.perceived_threat)
        .fold(agent.perceived_threat, f64::max);
    let rate = (dt / params.threat_relaxation_time).min(1.0);
    (agent.perceived_threat + (target - agent.perceived_threat) * rate).clamp(0.0, 1.0)
}
