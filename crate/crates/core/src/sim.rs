//! The per-tick loop. Movement runs identically at every analysis level;
//! the controller only decides which analyses run where, so a locale's
//! contact forces do not depend on the levels of other locales.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::agent::{seed_population, AgentState};
use crate::config::RunConfig;
use crate::error::{ConfigError, ModelError, NumericError, SimError};
use crate::geometry::{Segment, Vec2};
use crate::grid::{partition_locales, CellId, LocaleGrid, SpatialHash};
use crate::hybrid::{
    plan_tick, Controller, CostCounters, Level, LocaleInputs, LocaleWork, PlanContext, QuantifySummary, RunMode,
    WorkPlan,
};
use crate::identify::{order_parameter, pi_features, OrderSignal, TransitionVerdict};
use crate::metrics::{egress_times, metrics_report, DensityHistory, EgressTimes, MetricsReport};
use crate::movement::{desired_direction, integrate, relax_threat, social_force, SeparationNoise};
use crate::qualify::{feature_row, quorum_verdict, Classifier, FeatureRow, FeatureTrack, QualifyOutcome, RunLog, FEATURE_COUNT};
use crate::quantify::{
    accumulate_exposure, injury_report, locale_contacts, resolve_forces, Contact, ExposureRecord, InjuryReport,
};
use crate::rng::mix64;
use crate::scenario::Scenario;

pub const TRAJECTORY_HEADER: [&str; 10] = [
    "tick",
    "time",
    "agent_id",
    "x",
    "y",
    "vx",
    "vy",
    "locale_i",
    "locale_j",
    "analysis_level",
];

/// Run totals, the planner's estimate of the same, and per-locale splits.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CostSummary {
    pub total: CostCounters,
    pub estimated: CostCounters,
    pub per_locale: BTreeMap<CellId, CostCounters>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationState {
    /// s; always `tick × dt`.
    pub time: f64,
    pub tick: u64,
    /// Indexed by agent id.
    pub agents: Vec<AgentState>,
    pub rng_seed: u64,
    pub locales: LocaleGrid,
    pub controller: Controller,
    pub costs: CostSummary,
}

impl SimulationState {
    pub fn active(&self) -> usize {
        self.agents.iter().filter(|a| a.is_active()).count()
    }

    pub fn evacuated(&self) -> usize {
        self.agents.len() - self.active()
    }
}

/// One locale's analysis record for a tick.
#[derive(Debug, Clone, PartialEq)]
pub struct VerdictRow {
    pub tick: u64,
    pub locale: CellId,
    pub level: Level,
    pub verdict: Option<TransitionVerdict>,
    pub qualify: Option<QualifyOutcome>,
    pub quantify: Option<QuantifySummary>,
}

/// Contact load on one quantified agent for one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactSample {
    pub tick: u64,
    pub agent: usize,
    pub locale: CellId,
    /// Sum of normal-force magnitudes, N.
    pub normal: f64,
    /// Net contact force, N.
    pub force: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitEvent {
    pub agent: usize,
    pub tick: u64,
    pub time: f64,
    pub exit: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    TimedOut,
}

pub struct Simulation {
    pub scenario: Scenario,
    pub config: RunConfig,
    model: Option<Arc<Classifier>>,
    pub state: SimulationState,
    signals: BTreeMap<CellId, OrderSignal>,
    rings: Vec<VecDeque<FeatureRow>>,
    ring_len: usize,
    record_tracks: bool,
    pub tracks: Vec<FeatureTrack>,
    pub exposure: Vec<ExposureRecord>,
    pub verdicts: Vec<VerdictRow>,
    pub contact_log: Vec<ContactSample>,
    pub exits: Vec<ExitEvent>,
    pub density: DensityHistory,
    /// Position digest after each step (index `tick − 1`).
    pub digests: Vec<u64>,
    /// Magnitude of the summed contact forces (walls included) per step.
    pub third_law_residuals: Vec<f64>,
    /// Work plan executed by the latest step.
    pub last_plan: WorkPlan,
    /// Contacts resolved by the latest step, sorted.
    pub last_contacts: Vec<Contact>,
    directions: Vec<Vec2>,
    mean_mass: f64,
    contact_cell: f64,
    trajectory: Option<csv::Writer<Box<dyn Write + Send>>>,
    status: Option<RunStatus>,
}

/// Everything a finished run reports.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub egress: EgressTimes,
    pub metrics: MetricsReport,
    pub injury: InjuryReport,
}

struct LocaleResult {
    verdict: Option<TransitionVerdict>,
    qualify: Option<QualifyOutcome>,
    costs: CostCounters,
}

impl Simulation {
    pub fn new(
        scenario: Scenario,
        config: RunConfig,
        agents: Vec<AgentState>,
        model: Option<Arc<Classifier>>,
    ) -> Result<Self, SimError> {
        config.validate(&scenario)?;
        if let Some(m) = &model {
            if m.features != FEATURE_COUNT {
                return Err(ModelError::Shape {
                    expected: FEATURE_COUNT,
                    got: m.features,
                }
                .into());
            }
        }
        if agents.iter().enumerate().any(|(i, a)| a.id != i) {
            return Err(ConfigError::Invalid("agent ids must equal their index".into()).into());
        }
        let r_max = agents.iter().map(|a| a.radius).fold(0.0, f64::max);
        if 2.0 * r_max > config.cell_size || 2.0 * r_max > config.movement.neighbor_cutoff {
            return Err(ConfigError::Invalid(format!(
                "largest agent diameter {} exceeds cell_size or neighbor_cutoff",
                2.0 * r_max
            ))
            .into());
        }
        let n = agents.len();
        let mean_mass = if n == 0 {
            1.0
        } else {
            agents.iter().map(|a| a.mass).sum::<f64>() / n as f64
        };
        let ring_len = model
            .as_ref()
            .map_or(config.labels.window, |m| m.window.max(config.labels.window));
        let locales = partition_locales(&agents, config.cell_size, 0);
        let mut controller = Controller::new(config.mode, config.policy);
        controller.observe(&locales);
        let n_tiers = config.report.tiers.len();
        Ok(Simulation {
            record_tracks: config.mode == RunMode::FullForce,
            density: DensityHistory::new(config.cell_size, config.dt),
            state: SimulationState {
                time: 0.0,
                tick: 0,
                rng_seed: config.seed,
                locales,
                controller,
                costs: CostSummary::default(),
                agents,
            },
            signals: BTreeMap::new(),
            rings: vec![VecDeque::with_capacity(ring_len); n],
            ring_len,
            tracks: vec![FeatureTrack::default(); n],
            exposure: (0..n).map(|i| ExposureRecord::new(i, n_tiers)).collect(),
            verdicts: Vec::new(),
            contact_log: Vec::new(),
            exits: Vec::new(),
            digests: Vec::new(),
            third_law_residuals: Vec::new(),
            last_plan: WorkPlan::default(),
            last_contacts: Vec::new(),
            directions: vec![Vec2::ZERO; n],
            mean_mass,
            contact_cell: (2.0 * r_max).max(1e-6),
            trajectory: None,
            status: None,
            scenario,
            config,
            model,
        })
    }

    /// Seeds the scenario's population from `config.seed`.
    pub fn from_scenario(
        scenario: Scenario,
        config: RunConfig,
        model: Option<Arc<Classifier>>,
    ) -> Result<Self, SimError> {
        let agents = seed_population(&scenario, config.seed)?;
        Self::new(scenario, config, agents, model)
    }

    pub fn model(&self) -> Option<&Classifier> {
        self.model.as_deref()
    }

    /// Streams the trajectory CSV to `sink`, starting with the tick-0 rows.
    pub fn set_trajectory_sink(&mut self, sink: Box<dyn Write + Send>) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(TRAJECTORY_HEADER)?;
        self.trajectory = Some(w);
        let levels = self.current_levels();
        self.log_trajectory(&levels)
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        if let Some(w) = self.trajectory.as_mut() {
            w.flush()?;
        }
        Ok(())
    }

    fn current_levels(&self) -> BTreeMap<CellId, Level> {
        self.state
            .locales
            .cells
            .keys()
            .map(|&c| (c, self.state.controller.level_of(c)))
            .collect()
    }

    fn log_trajectory(&mut self, levels: &BTreeMap<CellId, Level>) -> std::io::Result<()> {
        let Some(w) = self.trajectory.as_mut() else {
            return Ok(());
        };
        let tick = self.state.tick;
        if tick % self.config.log_interval != 0 {
            return Ok(());
        }
        let cell_size = self.config.cell_size;
        for a in self.state.agents.iter().filter(|a| a.is_active()) {
            let c = CellId::of(a.position, cell_size);
            let level = levels.get(&c).copied().unwrap_or(Level::L1);
            w.write_record([
                tick.to_string(),
                self.state.time.to_string(),
                a.id.to_string(),
                a.position.x.to_string(),
                a.position.y.to_string(),
                a.velocity.x.to_string(),
                a.velocity.y.to_string(),
                c.i.to_string(),
                c.j.to_string(),
                level.as_str().to_string(),
            ])?;
        }
        Ok(())
    }

    pub fn is_finished(&self) -> bool {
        self.state.agents.iter().all(|a| !a.is_active())
    }

    /// Advances one tick.
    pub fn step(&mut self) -> Result<(), SimError> {
        let dt = self.config.dt;
        let tick = self.state.tick;
        let walls = self.scenario.wall_set().to_vec();

        self.move_agents(tick, &walls)?;
        self.state.tick += 1;
        let tick = self.state.tick;
        self.state.time = tick as f64 * dt;

        let grid = partition_locales(&self.state.agents, self.config.cell_size, tick);
        assert!(grid.covers(&self.state.agents), "locale grid lost an agent at tick {tick}");
        self.state.locales = grid;

        let rows = self.compute_features();
        for (i, row) in rows.iter().enumerate() {
            let Some(row) = row else { continue };
            let ring = &mut self.rings[i];
            if ring.len() == self.ring_len {
                ring.pop_front();
            }
            ring.push_back(*row);
            if self.record_tracks {
                let t = &mut self.tracks[i];
                if t.rows.is_empty() {
                    t.first_tick = tick;
                }
                t.rows.push(*row);
            }
        }

        self.state.controller.observe(&self.state.locales);
        let run_detector = self.config.mode != RunMode::Implicit;
        let broadphase = SpatialHash::build(&self.state.agents, self.contact_cell);
        let plan = {
            let rings = &self.rings;
            let ring_len = self.ring_len;
            let window = self.model.as_ref().map_or(ring_len, |m| m.window);
            let window_ready = move |id: usize| rings[id].len() >= window;
            let warmup = self.config.detector.warmup();
            let signals = &self.signals;
            let detector_ready = move |cell: CellId| {
                let len = signals.get(&cell).map_or(0, |s| (s.window.len() + 1).min(s.capacity()));
                len >= warmup
            };
            plan_tick(
                &self.state.controller,
                &self.state.locales,
                &PlanContext {
                    agents: &self.state.agents,
                    broadphase: &broadphase,
                    n_walls: walls.len(),
                    run_detector,
                    has_model: self.model.is_some(),
                    window_ready: &window_ready,
                    detector_ready: &detector_ready,
                },
            )
        };

        let results = self.analyse_locales(&plan.locales, &rows);

        // Contact search per L3 locale, merged in locale order.
        let l3: Vec<&LocaleWork> = plan.locales.iter().filter(|w| w.level == Level::L3).collect();
        let found: Vec<(Vec<Contact>, u64)> = l3
            .par_iter()
            .map(|w| {
                locale_contacts(
                    &self.state.agents,
                    &w.members,
                    &broadphase,
                    |j| plan.quantified.contains(&j),
                    &walls,
                )
            })
            .collect();
        let mut contacts = Vec::new();
        let mut pair_tests: BTreeMap<CellId, (u64, u64)> = BTreeMap::new();
        for (w, (c, tests)) in l3.iter().zip(found) {
            pair_tests.insert(w.cell, (tests, c.len() as u64));
            contacts.extend(c);
        }
        let mut summaries: BTreeMap<CellId, QuantifySummary> = BTreeMap::new();
        if !l3.is_empty() {
            let res = resolve_forces(&contacts, &self.state.agents, &self.config.contact)
                .map_err(|e| NumericError { tick, ..e })?;
            let net = res
                .forces
                .iter()
                .chain(res.wall_reactions.iter().map(|(_, f)| f))
                .fold(Vec2::ZERO, |acc, &f| acc + f);
            self.third_law_residuals.push(net.length());
            let critical_ticks = self.config.report.critical.ticks(dt);
            for w in &l3 {
                let mut peak = 0.0f64;
                for &i in &w.members {
                    let normal = res.normal_totals[i];
                    peak = peak.max(normal);
                    accumulate_exposure(&mut self.exposure[i], tick, normal, dt, &self.config.report.tiers);
                    self.contact_log.push(ContactSample {
                        tick,
                        agent: i,
                        locale: w.cell,
                        normal,
                        force: res.forces[i],
                    });
                    if self.config.report.immobilize_on_critical
                        && self.exposure[i].streak_ending_at(tick, self.config.report.critical.force) >= critical_ticks
                    {
                        self.state.agents[i].immobile = true;
                    }
                }
                summaries.insert(
                    w.cell,
                    QuantifySummary {
                        peak_force: peak,
                        contacts: contacts.iter().filter(|c| w.members.binary_search(&c.a).is_ok()).count(),
                    },
                );
            }
        } else {
            self.third_law_residuals.push(0.0);
        }

        let mut inputs: BTreeMap<CellId, LocaleInputs> = BTreeMap::new();
        let mut executed = CostCounters::default();
        for (w, r) in plan.locales.iter().zip(&results) {
            let quantify = summaries.get(&w.cell).copied();
            let mut c = r.costs;
            c.locale_ticks[w.level.index()] += 1;
            if let Some(&(tests, found)) = pair_tests.get(&w.cell) {
                c.force_pair_evaluations += tests;
                c.contacts_resolved += found;
            }
            executed.add(&c);
            self.state.costs.per_locale.entry(w.cell).or_default().add(&c);
            inputs.insert(
                w.cell,
                LocaleInputs {
                    verdict: r.verdict,
                    qualify: r.qualify,
                    quantify,
                },
            );
            if r.verdict.is_some() || r.qualify.is_some() || quantify.is_some() {
                self.verdicts.push(VerdictRow {
                    tick,
                    locale: w.cell,
                    level: w.level,
                    verdict: r.verdict,
                    qualify: r.qualify,
                    quantify,
                });
            }
        }
        self.state.costs.total.add(&executed);
        self.state.costs.estimated.add(&plan.estimate);
        self.state.controller.advance_all(tick, &inputs)?;

        self.density.record(&self.state.locales);
        self.digests.push(position_digest(&self.state.agents));
        let levels: BTreeMap<CellId, Level> = plan.locales.iter().map(|w| (w.cell, w.level)).collect();
        contacts.sort_by_key(Contact::sort_key);
        self.last_contacts = contacts;
        self.last_plan = plan;
        self.log_trajectory(&levels)
            .map_err(|e| crate::error::ArchiveError::Io {
                path: "trajectory.csv".into(),
                source: e,
            })?;
        Ok(())
    }

    /// Integrates movement over one tick in `movement.substeps` equal
    /// substeps. Exits crossed in any substep are stamped at the tick end.
    fn move_agents(&mut self, tick: u64, walls: &[Segment]) -> Result<(), SimError> {
        let substeps = self.config.movement.substeps.max(1);
        let h = self.config.dt / substeps as f64;
        let exit_time = (tick + 1) as f64 * self.config.dt;
        let first_new_exit = self.exits.len();
        for sub in 0..substeps {
            let cfg = &self.config;
            let snapshot = &self.state.agents;
            let hash = SpatialHash::build(snapshot, cfg.movement.neighbor_cutoff);
            let noise = SeparationNoise {
                seed: self.state.rng_seed,
                tick: tick * substeps as u64 + sub as u64,
            };
            let scenario = &self.scenario;
            let previous = &self.directions;
            let moved: Vec<Result<(AgentState, Vec2), NumericError>> = snapshot
                .par_iter()
                .map(|a| {
                    if !a.is_active() {
                        return Ok((a.clone(), previous[a.id]));
                    }
                    let dir = desired_direction(a, scenario).unwrap_or_else(|e| {
                        if e.previous == Vec2::ZERO {
                            previous[a.id]
                        } else {
                            e.previous
                        }
                    });
                    let near = hash.candidates(a.position);
                    let f = social_force(a, dir, near.iter().map(|&j| &snapshot[j]), walls, &cfg.movement, noise);
                    let mut next = integrate(a, f, h, cfg.movement.speed_cap).map_err(|e| NumericError { tick, ..e })?;
                    if !next.position.is_finite() || !next.velocity.is_finite() {
                        return Err(NumericError {
                            tick,
                            agent: Some(a.id),
                            what: "state",
                        });
                    }
                    next.perceived_threat = relax_threat(a, near.iter().map(|&j| &snapshot[j]), h, &cfg.movement);
                    Ok((next, dir))
                })
                .collect();
            let mut next_agents = Vec::with_capacity(moved.len());
            for (i, r) in moved.into_iter().enumerate() {
                let (mut next, dir) = r?;
                let prev = &snapshot[i];
                if prev.is_active() {
                    let path = Segment::new(prev.position, next.position);
                    if let Some(k) = scenario.exits.iter().position(|e| e.segment.intersects(&path)) {
                        next.evacuated_at = Some(exit_time);
                        next.velocity = Vec2::ZERO;
                        self.exits.push(ExitEvent {
                            agent: i,
                            tick: tick + 1,
                            time: exit_time,
                            exit: k,
                        });
                    }
                }
                self.directions[i] = dir;
                next_agents.push(next);
            }
            self.state.agents = next_agents;
        }
        self.exits[first_new_exit..].sort_by_key(|e| e.agent);
        Ok(())
    }

    fn compute_features(&self) -> Vec<Option<FeatureRow>> {
        let agents = &self.state.agents;
        let grid = &self.state.locales;
        let area = grid.cell_size * grid.cell_size;
        let radius = self.config.neighbourhood_radius;
        let hash = SpatialHash::build(agents, radius);
        let disc_area = std::f64::consts::PI * radius * radius;
        let directions = &self.directions;
        let mean_mass = self.mean_mass;
        agents
            .par_iter()
            .map(|a| {
                if !a.is_active() {
                    return None;
                }
                let locale_density = grid.members(grid.cell_of(a.position)).len() as f64 / area;
                let pi = pi_features(a, directions[a.id], locale_density, mean_mass);
                let near = hash
                    .candidates(a.position)
                    .into_iter()
                    .filter(|&j| agents[j].position.distance(a.position) <= radius)
                    .count();
                let diameter = 2.0 * a.radius;
                Some(feature_row(&pi, near as f64 / disc_area * diameter * diameter))
            })
            .collect()
    }

    fn analyse_locales(&mut self, work: &[LocaleWork], rows: &[Option<FeatureRow>]) -> Vec<LocaleResult> {
        let cfg = self.config.detector;
        let seed = self.state.rng_seed;
        let window = self.model.as_ref().map_or(0, |m| m.window);
        for w in work {
            self.signals
                .entry(w.cell)
                .or_insert_with(|| OrderSignal::new(w.cell, cfg.window));
        }
        let cells: BTreeSet<CellId> = work.iter().map(|w| w.cell).collect();
        let mut slots: Vec<&mut OrderSignal> = self
            .signals
            .iter_mut()
            .filter(|(c, _)| cells.contains(c))
            .map(|(_, s)| s)
            .collect();
        let agents = &self.state.agents;
        let rings = &self.rings;
        let model = self.model.as_deref();
        let qcfg = self.config.qualify;
        slots
            .par_iter_mut()
            .zip(work.par_iter())
            .map(|(signal, w)| {
                let mut costs = CostCounters::default();
                let mut verdict = None;
                if w.run_detector {
                    signal.refresh_subset(&w.members, &cfg, seed);
                    let sample = order_parameter(signal.subset_ids.iter().map(|&i| agents[i].velocity), cfg.v_eps);
                    let obs = signal
                        .subset_ids
                        .iter()
                        .filter_map(|&i| rows[i].map(|r| (r[0], r[1])))
                        .collect();
                    signal.push(sample, obs);
                    if signal.window.len() >= cfg.warmup() {
                        verdict = signal.update(&cfg).ok();
                        costs.mi_evaluations += 1;
                    }
                }
                let mut qualify = None;
                if let (Some(model), false) = (model, w.classify.is_empty()) {
                    let probs: Vec<f64> = w
                        .classify
                        .iter()
                        .map(|&i| {
                            let ring = &rings[i];
                            let flat: Vec<f64> = ring.range(ring.len() - window..).flatten().copied().collect();
                            model.forward(&flat).expect("window length matches model")
                        })
                        .collect();
                    costs.classifier_forward_passes += probs.len() as u64;
                    qualify = quorum_verdict(&probs, &qcfg).ok();
                }
                LocaleResult { verdict, qualify, costs }
            })
            .collect()
    }

    /// Steps until everyone has left or `max_time` is reached.
    pub fn run(&mut self) -> Result<RunStatus, SimError> {
        let status = loop {
            if self.is_finished() {
                break RunStatus::Completed;
            }
            if self.state.time >= self.config.max_time - 1e-9 {
                break RunStatus::TimedOut;
            }
            self.step()?;
        };
        self.density.complete = status == RunStatus::Completed;
        self.status = Some(status);
        self.flush().map_err(|e| crate::error::ArchiveError::Io {
            path: "trajectory.csv".into(),
            source: e,
        })?;
        Ok(status)
    }

    pub fn exit_times(&self) -> Vec<Option<f64>> {
        self.state.agents.iter().map(|a| a.evacuated_at).collect()
    }

    pub fn outcome(&self) -> RunOutcome {
        let egress = egress_times(&self.exit_times(), self.scenario.aset);
        let metrics = metrics_report(&self.density, &egress, &self.config.fruin);
        let touched: Vec<ExposureRecord> = self
            .exposure
            .iter()
            .filter(|r| !r.history.is_empty())
            .cloned()
            .collect();
        RunOutcome {
            status: self.status.unwrap_or(RunStatus::TimedOut),
            injury: injury_report(&touched, &self.config.report, self.config.dt),
            egress,
            metrics,
        }
    }

    /// Training view of the run.
    pub fn run_log(&self, run_id: &str) -> RunLog {
        RunLog {
            run_id: run_id.to_string(),
            mode: self.config.mode,
            dt: self.config.dt,
            tracks: self.tracks.clone(),
            exposure: self.exposure.clone(),
        }
    }
}

/// Order-sensitive hash of every agent's position bits.
pub fn position_digest(agents: &[AgentState]) -> u64 {
    agents.iter().fold(0u64, |acc, a| {
        mix64(mix64(acc ^ a.position.x.to_bits()) ^ a.position.y.to_bits())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_scenario, ExitDoc, ScenarioDoc};

    fn room(count: usize) -> Scenario {
        let mut doc = ScenarioDoc::room("r", 10.0, 10.0, vec![ExitDoc::new([10.0, 4.0], [10.0, 6.0], 1.0)]);
        doc.population.count = count;
        build_scenario(&doc).unwrap()
    }

    #[test]
    fn zero_agents_advance_time_only() {
        let mut s = Simulation::from_scenario(room(0), RunConfig::default(), None).unwrap();
        s.step().unwrap();
        s.step().unwrap();
        assert_eq!(s.state.tick, 2);
        assert_eq!(s.state.time, 2.0 * 0.05);
        assert!(s.state.agents.is_empty());
        assert_eq!(s.run().unwrap(), RunStatus::Completed);
    }

    #[test]
    fn lone_agent_relaxes_to_desired_speed() {
        let mut doc = ScenarioDoc::room("big", 60.0, 10.0, vec![ExitDoc::new([60.0, 4.0], [60.0, 6.0], 1.0)]);
        doc.population.count = 1;
        doc.population.placement = crate::scenario::PlacementPolicy::ExplicitList;
        doc.population.positions = vec![[2.0, 5.0]];
        doc.population.desired_speed = [1.0, 1.0];
        let mut s = Simulation::from_scenario(build_scenario(&doc).unwrap(), RunConfig::default(), None).unwrap();
        for _ in 0..100 {
            s.step().unwrap();
        }
        let v = s.state.agents[0].velocity.length();
        // v(5 s) = 1 − e^(−10) in continuous time.
        assert!((v - 1.0).abs() < 0.01, "speed {v}");
    }

    #[test]
    fn population_is_conserved() {
        let mut s = Simulation::from_scenario(room(40), RunConfig { max_time: 20.0, ..Default::default() }, None).unwrap();
        while s.state.time < 20.0 && !s.is_finished() {
            s.step().unwrap();
            assert_eq!(s.state.active() + s.state.evacuated(), 40);
            assert_eq!(s.exits.len(), s.state.evacuated());
        }
    }
}
