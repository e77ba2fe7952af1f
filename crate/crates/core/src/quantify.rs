//! Level-3 analysis: disc contact detection, penalty normal force plus
//! sliding friction, exposure accumulation and the injury report.
//!
//! Agents are non-rotating discs. For an agent-agent contact the normal
//! points from the lower id toward the higher id; for a wall contact it
//! points from the wall toward the agent. Forces are accumulated in
//! `(kind, a, b)` order so results never depend on how contacts were found.

use serde::{Deserialize, Serialize};

use crate::agent::AgentState;
use crate::error::NumericError;
use crate::geometry::{Segment, Vec2};
use crate::grid::SpatialHash;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ContactKind {
    AgentAgent,
    AgentWall,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    pub kind: ContactKind,
    /// Lower agent id (agent-agent) or the agent (agent-wall).
    pub a: usize,
    /// Higher agent id, or the wall index.
    pub b: usize,
    /// metres, > 0
    pub penetration: f64,
    pub normal: Vec2,
    /// Normal rotated +90°.
    pub tangent: Vec2,
    /// Tangential velocity of `b` relative to `a` (for walls: of the agent), m/s.
    pub tangential_velocity: f64,
}

impl Contact {
    pub fn sort_key(&self) -> (ContactKind, usize, usize) {
        (self.kind, self.a, self.b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactForceParams {
    /// k, N/m
    pub body_stiffness: f64,
    /// κ, kg/(m·s)
    pub friction_coefficient: f64,
}

impl Default for ContactForceParams {
    fn default() -> Self {
        ContactForceParams {
            body_stiffness: 1.2e5,
            friction_coefficient: 2.4e5,
        }
    }
}

pub fn agent_contact(p: &AgentState, q: &AgentState) -> Option<Contact> {
    let (lo, hi) = if p.id < q.id { (p, q) } else { (q, p) };
    let diff = hi.position - lo.position;
    let d = diff.length();
    let reach = lo.radius + hi.radius;
    if !(d < reach) {
        return None;
    }
    // Coincident centres get an arbitrary but fixed normal.
    let normal = diff.try_normalize().unwrap_or(Vec2::new(1.0, 0.0));
    let tangent = normal.perp();
    Some(Contact {
        kind: ContactKind::AgentAgent,
        a: lo.id,
        b: hi.id,
        penetration: reach - d,
        normal,
        tangent,
        tangential_velocity: (hi.velocity - lo.velocity).dot(tangent),
    })
}

pub fn wall_contact(agent: &AgentState, wall_index: usize, wall: &Segment) -> Option<Contact> {
    let closest = wall.closest_point(agent.position);
    let diff = agent.position - closest;
    let d = diff.length();
    if !(d < agent.radius) {
        return None;
    }
    let normal = diff
        .try_normalize()
        .or_else(|| (wall.b - wall.a).perp().try_normalize())
        .unwrap_or(Vec2::new(1.0, 0.0));
    let tangent = normal.perp();
    Some(Contact {
        kind: ContactKind::AgentWall,
        a: agent.id,
        b: wall_index,
        penetration: agent.radius - d,
        normal,
        tangent,
        tangential_velocity: agent.velocity.dot(tangent),
    })
}

/// All overlapping disc pairs among `ids` (all-pairs) plus every disc-wall
/// overlap, sorted canonically.
pub fn contact_pairs(agents: &[AgentState], ids: &[usize], walls: &[Segment]) -> Vec<Contact> {
    let mut out = Vec::new();
    for (x, &i) in ids.iter().enumerate() {
        for &j in &ids[x + 1..] {
            if let Some(c) = agent_contact(&agents[i], &agents[j]) {
                out.push(c);
            }
        }
        for (w, wall) in walls.iter().enumerate() {
            if let Some(c) = wall_contact(&agents[i], w, wall) {
                out.push(c);
            }
        }
    }
    out.sort_by_key(Contact::sort_key);
    out
}

/// Contacts touching the `members` of one locale, found through a
/// broadphase whose buckets are at least one contact diameter wide.
/// `in_quantified(j)` says whether `j` is itself a member of some locale
/// being quantified this tick; such pairs are only tested from the lower id
/// so no pair is found twice. Returns the contacts and the number of pair
/// tests performed.
pub fn locale_contacts(
    agents: &[AgentState],
    members: &[usize],
    broadphase: &SpatialHash,
    in_quantified: impl Fn(usize) -> bool,
    walls: &[Segment],
) -> (Vec<Contact>, u64) {
    let mut out = Vec::new();
    let mut tests = 0u64;
    for &i in members {
        let ai = &agents[i];
        for j in broadphase.candidates(ai.position) {
            if j == i || (j < i && in_quantified(j)) {
                continue;
            }
            tests += 1;
            if let Some(c) = agent_contact(ai, &agents[j]) {
                out.push(c);
            }
        }
        for (w, wall) in walls.iter().enumerate() {
            tests += 1;
            if let Some(c) = wall_contact(ai, w, wall) {
                out.push(c);
            }
        }
    }
    (out, tests)
}

/// Pair tests [`locale_contacts`] will perform, without doing them.
pub fn count_locale_tests(
    agents: &[AgentState],
    members: &[usize],
    broadphase: &SpatialHash,
    in_quantified: impl Fn(usize) -> bool,
    n_walls: usize,
) -> u64 {
    members
        .iter()
        .map(|&i| {
            broadphase
                .candidates(agents[i].position)
                .into_iter()
                .filter(|&j| !(j == i || (j < i && in_quantified(j))))
                .count() as u64
                + n_walls as u64
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContactResolution {
    /// Net contact force per agent id (zero for uninvolved agents).
    pub forces: Vec<Vec2>,
    /// Sum of normal-force magnitudes over each agent's contacts, newtons.
    pub normal_totals: Vec<f64>,
    /// Normal-force magnitude per contact, in canonical contact order.
    pub normal_magnitudes: Vec<f64>,
    /// Reaction taken by each wall (index, force on the wall).
    pub wall_reactions: Vec<(usize, Vec2)>,
}

/// Normal force `k·δ` along the normal and friction `κ·δ·Δv_t` against the
/// tangent, applied equal and opposite. Walls do not move.
pub fn resolve_forces(
    contacts: &[Contact],
    agents: &[AgentState],
    params: &ContactForceParams,
) -> Result<ContactResolution, NumericError> {
    let mut sorted = contacts.to_vec();
    sorted.sort_by_key(Contact::sort_key);
    let n = agents.len();
    let mut res = ContactResolution {
        forces: vec![Vec2::ZERO; n],
        normal_totals: vec![0.0; n],
        normal_magnitudes: Vec::with_capacity(sorted.len()),
        wall_reactions: Vec::new(),
    };
    for c in &sorted {
        let normal_mag = params.body_stiffness * c.penetration;
        let friction = params.friction_coefficient * c.penetration * c.tangential_velocity;
        // Force on party `b` (agent-agent) or on the agent (wall).
        let f = c.normal * normal_mag - c.tangent * friction;
        if !f.is_finite() {
            return Err(NumericError {
                tick: 0,
                agent: Some(c.a),
                what: "contact force",
            });
        }
        res.normal_magnitudes.push(normal_mag);
        match c.kind {
            ContactKind::AgentAgent => {
                res.forces[c.b] += f;
                res.forces[c.a] -= f;
                res.normal_totals[c.a] += normal_mag;
                res.normal_totals[c.b] += normal_mag;
            }
            ContactKind::AgentWall => {
                res.forces[c.a] += f;
                res.normal_totals[c.a] += normal_mag;
                res.wall_reactions.push((c.b, -f));
            }
        }
    }
    Ok(res)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxOptions {
    /// s
    pub dt: f64,
    /// Viscous damping on absolute velocity, N·s/m.
    pub damping: f64,
    pub max_steps: usize,
    /// Stop once every speed is below this, m/s.
    pub rest_speed: f64,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        RelaxOptions {
            dt: 1e-3,
            damping: 4000.0,
            max_steps: 200_000,
            rest_speed: 1e-9,
        }
    }
}

/// Integrates contact forces plus fixed external loads (no social forces)
/// until the system comes to rest. Returns the number of steps taken.
pub fn relax(
    agents: &mut [AgentState],
    walls: &[Segment],
    external: &[Vec2],
    params: &ContactForceParams,
    opts: &RelaxOptions,
) -> Result<usize, NumericError> {
    let ids: Vec<usize> = agents.iter().filter(|a| a.is_active()).map(|a| a.id).collect();
    for step in 0..opts.max_steps {
        let contacts = contact_pairs(agents, &ids, walls);
        let res = resolve_forces(&contacts, agents, params)?;
        let mut fastest = 0.0f64;
        for &i in &ids {
            let a = &mut agents[i];
            let f = res.forces[i] + external[i] - a.velocity * opts.damping;
            a.velocity += f * (opts.dt / a.mass);
            a.position += a.velocity * opts.dt;
            fastest = fastest.max(a.velocity.length());
        }
        if step > 0 && fastest < opts.rest_speed {
            return Ok(step + 1);
        }
    }
    Ok(opts.max_steps)
}

/// Per-agent normal-force history and its running statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureRecord {
    pub agent_id: usize,
    /// (tick, total normal force in newtons) for each tick the agent was quantified.
    pub history: Vec<(u64, f64)>,
    /// newtons
    pub peak: f64,
    /// N·s above each tier.
    pub tier_integrals: Vec<f64>,
}

impl ExposureRecord {
    pub fn new(agent_id: usize, n_tiers: usize) -> Self {
        ExposureRecord {
            agent_id,
            history: Vec::new(),
            peak: 0.0,
            tier_integrals: vec![0.0; n_tiers],
        }
    }

    /// Consecutive ticks ending at `tick` with force ≥ `threshold`; stops
    /// at the first gap in the history.
    pub fn streak_ending_at(&self, tick: u64, threshold: f64) -> usize {
        let mut expect = tick;
        let mut n = 0;
        for &(t, f) in self.history.iter().rev() {
            if t > expect {
                continue;
            }
            if t != expect || f < threshold {
                break;
            }
            n += 1;
            if expect == 0 {
                break;
            }
            expect -= 1;
        }
        n
    }

    /// Longest run of consecutive ticks with force ≥ `threshold`.
    pub fn longest_streak(&self, threshold: f64) -> usize {
        let mut best = 0;
        let mut run = 0;
        let mut prev: Option<u64> = None;
        for &(t, f) in &self.history {
            let contiguous = prev.is_some_and(|p| p + 1 == t);
            if f >= threshold {
                run = if contiguous { run + 1 } else { 1 };
            } else {
                run = 0;
            }
            best = best.max(run);
            prev = Some(t);
        }
        best
    }
}

/// Appends one tick of force; updates peak and every tier integral the
/// force reaches.
pub fn accumulate_exposure(record: &mut ExposureRecord, tick: u64, force: f64, dt: f64, tiers: &[f64]) {
    debug_assert!(force >= 0.0);
    record.history.push((tick, force));
    record.peak = record.peak.max(force);
    if record.tier_integrals.len() < tiers.len() {
        record.tier_integrals.resize(tiers.len(), 0.0);
    }
    for (integral, &tier) in record.tier_integrals.iter_mut().zip(tiers) {
        if force >= tier {
            *integral += (force - tier) * dt;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SustainedForce {
    /// newtons
    pub force: f64,
    /// seconds
    pub sustain: f64,
}

impl SustainedForce {
    pub fn ticks(&self, dt: f64) -> usize {
        ((self.sustain / dt) - 1e-9).ceil().max(1.0) as usize
    }
}

/// Injury cutoffs. These are configuration placeholders; no force-to-injury
/// mapping is medically validated here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub at_risk: SustainedForce,
    pub critical: SustainedForce,
    /// Tier thresholds for the exposure integrals, newtons.
    pub tiers: Vec<f64>,
    /// Freeze an agent in place once it sustains critical force.
    pub immobilize_on_critical: bool,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            at_risk: SustainedForce {
                force: 250.0,
                sustain: 1.0,
            },
            critical: SustainedForce {
                force: 1500.0,
                sustain: 10.0,
            },
            tiers: vec![250.0, 1500.0],
            immobilize_on_critical: false,
        }
    }
}

pub const INJURY_REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjuryEntry {
    pub agent_id: usize,
    pub peak: f64,
    pub tier_integrals: Vec<f64>,
    pub longest_at_risk_s: f64,
    pub longest_critical_s: f64,
    pub at_risk: bool,
    pub critical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjuryReport {
    pub schema: u32,
    pub thresholds: ReportConfig,
    pub note: String,
    pub entries: Vec<InjuryEntry>,
    pub at_risk: Vec<usize>,
    pub critical: Vec<usize>,
}

pub fn injury_report(records: &[ExposureRecord], cfg: &ReportConfig, dt: f64) -> InjuryReport {
    let at_risk_ticks = cfg.at_risk.ticks(dt);
    let critical_ticks = cfg.critical.ticks(dt);
    let mut entries: Vec<InjuryEntry> = records
        .iter()
        .map(|r| {
            let ar = r.longest_streak(cfg.at_risk.force);
            let cr = r.longest_streak(cfg.critical.force);
            let critical = cr >= critical_ticks;
            InjuryEntry {
                agent_id: r.agent_id,
                peak: r.peak,
                tier_integrals: r.tier_integrals.clone(),
                longest_at_risk_s: ar as f64 * dt,
                longest_critical_s: cr as f64 * dt,
                at_risk: critical || ar >= at_risk_ticks,
                critical,
            }
        })
        .collect();
    entries.sort_by(|x, y| y.peak.total_cmp(&x.peak).then(x.agent_id.cmp(&y.agent_id)));
    let at_risk = entries.iter().filter(|e| e.at_risk).map(|e| e.agent_id).collect();
    let critical = entries.iter().filter(|e| e.critical).map(|e| e.agent_id).collect();
    InjuryReport {
        schema: INJURY_REPORT_SCHEMA,
        thresholds: cfg.clone(),
        note: "injury cutoffs are configurable assumptions; they are not sourced from injury data \
               and are not medically validated"
            .into(),
        entries,
        at_risk,
        critical,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn disc(id: usize, x: f64, y: f64) -> AgentState {
        AgentState {
            id,
            position: Vec2::new(x, y),
            velocity: Vec2::ZERO,
            mass: 80.0,
            radius: 0.25,
            desired_speed: 1.34,
            perceived_threat: 0.0,
            competitiveness: 0.0,
            target_exit: 0,
            evacuated_at: None,
            immobile: false,
        }
    }

    #[test]
    fn separated_discs_no_contact() {
        assert!(agent_contact(&disc(0, 0.0, 0.0), &disc(1, 0.6, 0.0)).is_none());
    }

    #[test]
    fn overlapping_discs_canonical_normal() {
        let c = agent_contact(&disc(4, 0.4, 0.0), &disc(2, 0.0, 0.0)).unwrap();
        assert_eq!((c.a, c.b), (2, 4));
        assert!((c.penetration - 0.1).abs() < 1e-12);
        assert_eq!(c.normal, Vec2::new(1.0, 0.0));
        assert_eq!(c.tangent, Vec2::new(0.0, 1.0));
    }

    #[test]
    fn disc_against_wall() {
        let wall = Segment::new(Vec2::new(-100.0, 0.0), Vec2::new(100.0, 0.0));
        let c = wall_contact(&disc(0, 0.0, 0.2), 3, &wall).unwrap();
        assert!((c.penetration - 0.05).abs() < 1e-12);
        assert_eq!(c.normal, Vec2::new(0.0, 1.0));
        assert_eq!(c.b, 3);
    }

    #[test]
    fn single_pair_forces() {
        let agents = vec![disc(0, 0.0, 0.0), disc(1, 0.4, 0.0)];
        let contacts = contact_pairs(&agents, &[0, 1], &[]);
        let res = resolve_forces(&contacts, &agents, &ContactForceParams::default()).unwrap();
        assert!((res.normal_magnitudes[0] - 1.2e4).abs() < 1e-6);
        assert!((res.forces[1] - Vec2::new(1.2e4, 0.0)).length() < 1e-6);
        assert_eq!(res.forces[0], -res.forces[1]);
        assert!((res.normal_totals[0] - 1.2e4).abs() < 1e-6);
    }

    #[test]
    fn friction_opposes_sliding() {
        let mut b = disc(1, 0.4, 0.0);
        b.velocity = Vec2::new(0.0, 1.0);
        let agents = vec![disc(0, 0.0, 0.0), b];
        let contacts = contact_pairs(&agents, &[0, 1], &[]);
        let res = resolve_forces(&contacts, &agents, &ContactForceParams::default()).unwrap();
        // κ·δ·Δv_t = 2.4e5 · 0.1 · 1
        assert!((res.forces[1].y + 2.4e4).abs() < 1e-6);
        assert!((res.forces[0].y - 2.4e4).abs() < 1e-6);
    }

    #[test]
    fn overlapping_discs_separate_monotonically() {
        let mut agents = vec![disc(0, 0.0, 0.0), disc(1, 0.4, 0.0)];
        let params = ContactForceParams::default();
        let mut last = 0.4;
        for _ in 0..2000 {
            let contacts = contact_pairs(&agents, &[0, 1], &[]);
            let res = resolve_forces(&contacts, &agents, &params).unwrap();
            for i in 0..2 {
                let a = &mut agents[i];
                a.velocity += res.forces[i] * (1e-4 / a.mass);
                a.position += a.velocity * 1e-4;
            }
            let d = agents[0].position.distance(agents[1].position);
            assert!(d >= last);
            last = d;
        }
        assert!(last >= 0.5);
    }

    #[test]
    fn exposure_rectangle() {
        let mut r = ExposureRecord::new(0, 1);
        for t in 0..200 {
            accumulate_exposure(&mut r, t, 500.0, 0.05, &[250.0]);
        }
        assert!((r.tier_integrals[0] - 2500.0).abs() < 1e-9);
        assert_eq!(r.peak, 500.0);
    }

    #[test]
    fn zero_force_only_appends() {
        let mut r = ExposureRecord::new(0, 2);
        accumulate_exposure(&mut r, 0, 0.0, 0.05, &[250.0, 1500.0]);
        assert_eq!(r.history, vec![(0, 0.0)]);
        assert_eq!(r.peak, 0.0);
        assert_eq!(r.tier_integrals, vec![0.0, 0.0]);
    }

    #[test]
    fn exposure_triangular_ramp() {
        let dt = 1e-3;
        let n = 10_000;
        let force = |k: u64| 1000.0 * (k as f64 * dt) / 10.0;
        let mut r = ExposureRecord::new(0, 1);
        for k in 0..n {
            accumulate_exposure(&mut r, k, force(k), dt, &[500.0]);
        }
        // Trapezoidal oracle over the same samples.
        let excess = |k: u64| (force(k) - 500.0).max(0.0);
        let trap: f64 = (0..n - 1).map(|k| 0.5 * (excess(k) + excess(k + 1)) * dt).sum();
        assert!((trap - 1250.0).abs() < 1.0);
        assert!((r.tier_integrals[0] - trap).abs() < 1.0);
    }

    #[test]
    fn streaks() {
        let mut r = ExposureRecord::new(0, 0);
        for (t, f) in [(0, 300.0), (1, 300.0), (2, 100.0), (3, 300.0), (4, 300.0), (5, 300.0), (7, 300.0)] {
            accumulate_exposure(&mut r, t, f, 0.05, &[]);
        }
        assert_eq!(r.longest_streak(250.0), 3);
        assert_eq!(r.streak_ending_at(5, 250.0), 3);
        assert_eq!(r.streak_ending_at(7, 250.0), 1);
        assert_eq!(r.streak_ending_at(6, 250.0), 0);
    }

    fn constant_record(id: usize, force: f64, ticks: u64) -> ExposureRecord {
        let mut r = ExposureRecord::new(id, 2);
        for t in 0..ticks {
            accumulate_exposure(&mut r, t, force, 0.05, &[250.0, 1500.0]);
        }
        r
    }

    #[test]
    fn report_without_contacts() {
        let rep = injury_report(&[constant_record(0, 0.0, 100)], &ReportConfig::default(), 0.05);
        assert!(rep.at_risk.is_empty());
    }

    #[test]
    fn report_ranks_and_flags() {
        let records = vec![
            constant_record(0, 300.0, 100),
            constant_record(1, 15_000.0, 300),
            constant_record(2, 300.0, 100),
        ];
        let rep = injury_report(&records, &ReportConfig::default(), 0.05);
        assert_eq!(rep.entries[0].agent_id, 1);
        assert!(rep.entries[0].critical);
        assert_eq!(rep.critical, vec![1]);
        // Equal peaks tie-break by id.
        assert_eq!(rep.entries[1].agent_id, 0);
        assert_eq!(rep.entries[2].agent_id, 2);
        assert_eq!(rep.at_risk, vec![1, 0, 2]);
    }

    proptest! {
        #[test]
        fn third_law(pts in proptest::collection::vec((0.0f64..3.0, 0.0f64..3.0, -1.0f64..1.0, -1.0f64..1.0), 2..30)) {
            let agents: Vec<AgentState> = pts.iter().enumerate().map(|(i, &(x, y, vx, vy))| {
                let mut a = disc(i, x, y);
                a.velocity = Vec2::new(vx, vy);
                a
            }).collect();
            let ids: Vec<usize> = (0..agents.len()).collect();
            let contacts = contact_pairs(&agents, &ids, &[]);
            let res = resolve_forces(&contacts, &agents, &ContactForceParams::default()).unwrap();
            let sum = res.forces.iter().fold(Vec2::ZERO, |acc, &f| acc + f);
            prop_assert!(sum.length() < 1e-6);
        }

        #[test]
        fn tier_integrals_never_decrease(forces in proptest::collection::vec(0.0f64..3000.0, 1..100)) {
            let mut r = ExposureRecord::new(0, 2);
            let mut prev = vec![0.0, 0.0];
            for (t, f) in forces.into_iter().enumerate() {
                accumulate_exposure(&mut r, t as u64, f, 0.05, &[250.0, 1500.0]);
                for k in 0..2 {
                    prop_assert!(r.tier_integrals[k] >= prev[k]);
                }
                prop_assert!(r.peak >= f);
                prev = r.tier_integrals.clone();
            }
        }
    }
}
