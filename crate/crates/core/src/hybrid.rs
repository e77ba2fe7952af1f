//! Per-locale escalation controller. Each grid cell carries an analysis
//! level; levels move one step at a time, up on evidence and down after a
//! cooldown of clear signals.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::agent::AgentState;
use crate::error::ProtocolError;
use crate::grid::{CellId, LocaleGrid, SpatialHash};
use crate::identify::{TransitionState, TransitionVerdict};
use crate::qualify::{CrushVerdict, QualifyOutcome};
use crate::quantify::count_locale_tests;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Level {
    L1,
    L2,
    L3,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::L1 => "L1",
            Level::L2 => "L2",
            Level::L3 => "L3",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    /// Every locale pinned at L1; density metrics only.
    Implicit,
    /// Every locale pinned at L3.
    FullForce,
    #[default]
    Hybrid,
}

impl RunMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RunMode::Implicit => "implicit",
            RunMode::FullForce => "full-force",
            RunMode::Hybrid => "hybrid",
        }
    }

    pub fn pinned_level(self) -> Option<Level> {
        match self {
            RunMode::Implicit => Some(Level::L1),
            RunMode::FullForce => Some(Level::L3),
            RunMode::Hybrid => None,
        }
    }
}

impl std::str::FromStr for RunMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "implicit" => Ok(RunMode::Implicit),
            "full-force" => Ok(RunMode::FullForce),
            "hybrid" => Ok(RunMode::Hybrid),
            other => Err(format!("unknown mode `{other}` (implicit, full-force, hybrid)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EscalationPolicy {
    /// Consecutive clear ticks before stepping down a level.
    pub cooldown: u64,
    /// L3 steps down once the locale's peak normal force stays below this, newtons.
    pub exit_force: f64,
}

impl Default for EscalationPolicy {
    fn default() -> Self {
        EscalationPolicy {
            cooldown: 80,
            exit_force: 250.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QuantifySummary {
    /// Largest per-agent total normal force among the locale's members, newtons.
    pub peak_force: f64,
    pub contacts: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trigger {
    Disordered,
    Confirmed,
    OrderedCooldown,
    ForceCooldown,
}

impl Trigger {
    pub fn as_str(self) -> &'static str {
        match self {
            Trigger::Disordered => "disordered",
            Trigger::Confirmed => "confirmed",
            Trigger::OrderedCooldown => "ordered-cooldown",
            Trigger::ForceCooldown => "force-cooldown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocaleAnalysis {
    pub locale: CellId,
    pub level: Level,
    /// Ticks at the current level.
    pub dwell: u64,
    pub last_verdict: Option<TransitionVerdict>,
    pub last_qualify: Option<QualifyOutcome>,
    /// Clear ticks still needed before de-escalation.
    pub cooldown: u64,
}

impl LocaleAnalysis {
    pub fn new(locale: CellId, level: Level, policy: &EscalationPolicy) -> Self {
        LocaleAnalysis {
            locale,
            level,
            dwell: 0,
            last_verdict: None,
            last_qualify: None,
            cooldown: policy.cooldown,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub tick: u64,
    pub locale: CellId,
    pub from: Level,
    pub to: Level,
    pub trigger: Trigger,
}

fn enter(prev: &LocaleAnalysis, to: Level, policy: &EscalationPolicy) -> LocaleAnalysis {
    LocaleAnalysis {
        level: to,
        dwell: 0,
        cooldown: policy.cooldown,
        ..prev.clone()
    }
}

/// One controller step for one locale. A missing verdict (detector warm-up)
/// neither escalates nor counts toward a cooldown.
pub fn advance(
    analysis: &LocaleAnalysis,
    verdict: Option<&TransitionVerdict>,
    qualify: Option<&QualifyOutcome>,
    quantify: Option<&QuantifySummary>,
    policy: &EscalationPolicy,
) -> Result<(LocaleAnalysis, Option<Trigger>), ProtocolError> {
    let cell = analysis.locale;
    if analysis.level < Level::L2 && qualify.is_some() {
        return Err(ProtocolError(format!(
            "qualify outcome supplied to locale ({}, {}) at {}",
            cell.i,
            cell.j,
            analysis.level.as_str()
        )));
    }
    if analysis.level < Level::L3 && quantify.is_some() {
        return Err(ProtocolError(format!(
            "quantify summary supplied to locale ({}, {}) at {}",
            cell.i,
            cell.j,
            analysis.level.as_str()
        )));
    }
    let mut next = analysis.clone();
    if verdict.is_some() {
        next.last_verdict = verdict.copied();
    }
    if qualify.is_some() {
        next.last_qualify = qualify.copied();
    }
    let state = verdict.map(|v| v.state);
    let step = match analysis.level {
        Level::L1 => {
            if state == Some(TransitionState::Disordered) {
                Some((Level::L2, Trigger::Disordered))
            } else {
                None
            }
        }
        Level::L2 => {
            if qualify.is_some_and(|q| q.verdict == CrushVerdict::Confirmed) {
                Some((Level::L3, Trigger::Confirmed))
            } else {
                match state {
                    Some(TransitionState::Ordered) => next.cooldown = next.cooldown.saturating_sub(1),
                    Some(TransitionState::Disordered) => next.cooldown = policy.cooldown,
                    None => {}
                }
                (next.cooldown == 0).then_some((Level::L1, Trigger::OrderedCooldown))
            }
        }
        Level::L3 => {
            let peak = quantify.map_or(0.0, |q| q.peak_force);
            if peak < policy.exit_force {
                next.cooldown = next.cooldown.saturating_sub(1);
            } else {
                next.cooldown = policy.cooldown;
            }
            (next.cooldown == 0).then_some((Level::L2, Trigger::ForceCooldown))
        }
    };
    match step {
        Some((to, trigger)) => Ok((enter(&next, to, policy), Some(trigger))),
        None => {
            next.dwell += 1;
            Ok((next, None))
        }
    }
}

/// Inputs gathered for one locale during a tick.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LocaleInputs {
    pub verdict: Option<TransitionVerdict>,
    pub qualify: Option<QualifyOutcome>,
    pub quantify: Option<QuantifySummary>,
}

/// Level bookkeeping for every locale that has ever held an agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    pub mode: RunMode,
    pub policy: EscalationPolicy,
    pub analyses: BTreeMap<CellId, LocaleAnalysis>,
    pub log: Vec<TransitionRecord>,
}

impl Controller {
    pub fn new(mode: RunMode, policy: EscalationPolicy) -> Self {
        Controller {
            mode,
            policy,
            analyses: BTreeMap::new(),
            log: Vec::new(),
        }
    }

    fn initial_level(&self) -> Level {
        self.mode.pinned_level().unwrap_or(Level::L1)
    }

    pub fn level_of(&self, cell: CellId) -> Level {
        self.analyses
            .get(&cell)
            .map_or(self.initial_level(), |a| a.level)
    }

    /// Registers cells that appeared in the grid this tick.
    pub fn observe(&mut self, grid: &LocaleGrid) {
        let level = self.initial_level();
        for &cell in grid.cells.keys() {
            self.analyses
                .entry(cell)
                .or_insert_with(|| LocaleAnalysis::new(cell, level, &self.policy));
        }
    }

    /// Advances every known locale. Cells without inputs this tick (empty
    /// cells) advance as quiet: no verdict, no force. Pinned modes record
    /// verdicts but never change level.
    pub fn advance_all(&mut self, tick: u64, inputs: &BTreeMap<CellId, LocaleInputs>) -> Result<(), ProtocolError> {
        let quiet = LocaleInputs::default();
        for (cell, analysis) in self.analyses.iter_mut() {
            let inp = inputs.get(cell).unwrap_or(&quiet);
            if self.mode.pinned_level().is_some() {
                if inp.verdict.is_some() {
                    analysis.last_verdict = inp.verdict;
                }
                if inp.qualify.is_some() {
                    analysis.last_qualify = inp.qualify;
                }
                analysis.dwell += 1;
                continue;
            }
            let (next, trigger) = advance(
                analysis,
                inp.verdict.as_ref(),
                inp.qualify.as_ref(),
                inp.quantify.as_ref(),
                &self.policy,
            )?;
            if let Some(trigger) = trigger {
                self.log.push(TransitionRecord {
                    tick,
                    locale: *cell,
                    from: analysis.level,
                    to: next.level,
                    trigger,
                });
            }
            *analysis = next;
        }
        Ok(())
    }
}

/// Work counters, accumulated over a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CostCounters {
    /// Detector evaluations past warm-up, each one windowed MI estimate.
    pub mi_evaluations: u64,
    pub classifier_forward_passes: u64,
    /// Disc-disc and disc-wall overlap tests.
    pub force_pair_evaluations: u64,
    pub contacts_resolved: u64,
    /// Locale-ticks spent at L1, L2, L3.
    pub locale_ticks: [u64; 3],
}

impl CostCounters {
    pub fn add(&mut self, o: &CostCounters) {
        self.mi_evaluations += o.mi_evaluations;
        self.classifier_forward_passes += o.classifier_forward_passes;
        self.force_pair_evaluations += o.force_pair_evaluations;
        self.contacts_resolved += o.contacts_resolved;
        for k in 0..3 {
            self.locale_ticks[k] += o.locale_ticks[k];
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocaleWork {
    pub cell: CellId,
    pub level: Level,
    pub members: Vec<usize>,
    pub run_detector: bool,
    /// Members to score with the classifier.
    pub classify: Vec<usize>,
    /// Agents in the eight surrounding cells; set only at L3.
    pub halo: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WorkPlan {
    /// Non-empty locales in cell order.
    pub locales: Vec<LocaleWork>,
    /// Members of L3 locales.
    pub quantified: BTreeSet<usize>,
    /// Members of L3 locales plus their halos.
    pub contact_scope: BTreeSet<usize>,
    pub estimate: CostCounters,
}

/// What the planner needs to know about the tick.
pub struct PlanContext<'a> {
    pub agents: &'a [AgentState],
    pub broadphase: &'a SpatialHash,
    pub n_walls: usize,
    pub run_detector: bool,
    pub has_model: bool,
    /// Whether an agent has a complete feature window.
    pub window_ready: &'a dyn Fn(usize) -> bool,
    /// Whether a locale's detector will be past warm-up after this tick's sample.
    pub detector_ready: &'a dyn Fn(CellId) -> bool,
}

/// Per-locale work for the tick and its cost estimate. The estimate uses
/// the same pair-test enumeration as the contact search, so executed
/// counters reconcile exactly.
pub fn plan_tick(controller: &Controller, grid: &LocaleGrid, ctx: &PlanContext) -> WorkPlan {
    let mut plan = WorkPlan::default();
    for (&cell, members) in &grid.cells {
        let level = controller.level_of(cell);
        plan.estimate.locale_ticks[level.index()] += 1;
        let classify: Vec<usize> = if level >= Level::L2 && ctx.has_model {
            members.iter().copied().filter(|&id| (ctx.window_ready)(id)).collect()
        } else {
            Vec::new()
        };
        let halo = if level == Level::L3 { grid.halo(cell) } else { Vec::new() };
        if level == Level::L3 {
            plan.quantified.extend(members.iter().copied());
            plan.contact_scope.extend(members.iter().copied());
            plan.contact_scope.extend(halo.iter().copied());
        }
        if ctx.run_detector && (ctx.detector_ready)(cell) {
            plan.estimate.mi_evaluations += 1;
        }
        plan.estimate.classifier_forward_passes += classify.len() as u64;
        plan.locales.push(LocaleWork {
            cell,
            level,
            members: members.clone(),
            run_detector: ctx.run_detector,
            classify,
            halo,
        });
    }
    for work in plan.locales.iter().filter(|w| w.level == Level::L3) {
        plan.estimate.force_pair_evaluations += count_locale_tests(
            ctx.agents,
            &work.members,
            ctx.broadphase,
            |j| plan.quantified.contains(&j),
            ctx.n_walls,
        );
    }
    plan
}
