use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Args;
use crushsim_core::hybrid::{CostCounters, RunMode};
use crushsim_core::qualify::Classifier;
use crushsim_core::{build_scenario, RunConfig, ScenarioDoc, Simulation};
use serde::Serialize;
use serde_json::Value;

use crate::inputs::SetupArgs;

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub setup: SetupArgs,
    /// Comparison JSON to write; stdout when omitted.
    #[arg(long, env = "CRUSH_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct ModeRun {
    status: String,
    ticks: u64,
    wall_time_s: f64,
    costs: CostCounters,
}

#[derive(Debug, Serialize)]
struct ForceAgreement {
    /// Agent-ticks quantified in both runs.
    compared: usize,
    /// Of those, how many differ in any bit.
    mismatched: usize,
    /// newtons
    max_abs_difference: f64,
}

#[derive(Debug, Serialize)]
struct Comparison {
    schema: u32,
    scenario: String,
    seed: u64,
    full_force: ModeRun,
    hybrid: ModeRun,
    /// hybrid / full-force per counter; null where full-force did none.
    ratios: BTreeMap<String, Option<f64>>,
    escalated_force_agreement: ForceAgreement,
    /// First tick whose positions differ between the runs; null when the
    /// trajectories agree throughout.
    first_divergence_tick: Option<u64>,
}

struct Finished {
    sim: Simulation,
    summary: ModeRun,
}

fn execute(doc: &ScenarioDoc, cfg: RunConfig, model: Option<Arc<Classifier>>) -> Result<Finished> {
    let scenario = build_scenario(doc)?;
    let mode = cfg.mode;
    let mut sim = Simulation::from_scenario(scenario, cfg, model)?;
    let start = Instant::now();
    let status = sim.run().with_context(|| format!("{} run", mode.as_str()))?;
    let summary = ModeRun {
        status: format!("{status:?}").to_lowercase(),
        ticks: sim.state.tick,
        wall_time_s: start.elapsed().as_secs_f64(),
        costs: sim.state.costs.total,
    };
    Ok(Finished { sim, summary })
}

fn ratios(hybrid: &CostCounters, full: &CostCounters) -> Result<BTreeMap<String, Option<f64>>> {
    let (Value::Object(h), Value::Object(f)) = (serde_json::to_value(hybrid)?, serde_json::to_value(full)?) else {
        unreachable!("cost counters serialise as objects");
    };
    Ok(h.iter()
        .filter_map(|(k, hv)| {
            let (hv, fv) = (hv.as_f64()?, f.get(k)?.as_f64()?);
            Some((k.clone(), (fv > 0.0).then(|| hv / fv)))
        })
        .collect())
}

pub fn benchmark(args: BenchmarkArgs) -> Result<u8> {
    let doc = crate::inputs::load_scenario(&args.setup.scenario)?;
    let base = args.setup.config()?;
    let hybrid_cfg = RunConfig {
        mode: RunMode::Hybrid,
        ..base.clone()
    };
    let model = args.setup.model(&hybrid_cfg)?;
    let full = execute(
        &doc,
        RunConfig {
            mode: RunMode::FullForce,
            ..base.clone()
        },
        None,
    )?;
    let hybrid = execute(&doc, hybrid_cfg, model)?;

    let reference: BTreeMap<(u64, usize), _> =
        full.sim.contact_log.iter().map(|s| ((s.tick, s.agent), s)).collect();
    let mut agreement = ForceAgreement {
        compared: 0,
        mismatched: 0,
        max_abs_difference: 0.0,
    };
    for s in &hybrid.sim.contact_log {
        let Some(r) = reference.get(&(s.tick, s.agent)) else {
            continue;
        };
        agreement.compared += 1;
        if r.normal != s.normal || r.force != s.force {
            agreement.mismatched += 1;
        }
        let d = (r.force - s.force).length().max((r.normal - s.normal).abs());
        agreement.max_abs_difference = agreement.max_abs_difference.max(d);
    }
    let first_divergence_tick = full
        .sim
        .digests
        .iter()
        .zip(&hybrid.sim.digests)
        .position(|(a, b)| a != b)
        .map(|i| i as u64 + 1)
        .or_else(|| (full.sim.digests.len() != hybrid.sim.digests.len()).then(|| full.sim.digests.len().min(hybrid.sim.digests.len()) as u64 + 1));

    let report = Comparison {
        schema: 1,
        scenario: doc.name.clone(),
        seed: base.seed,
        ratios: ratios(&hybrid.summary.costs, &full.summary.costs)?,
        full_force: full.summary,
        hybrid: hybrid.summary,
        escalated_force_agreement: agreement,
        first_divergence_tick,
    };
    let text = serde_json::to_string_pretty(&report)? + "\n";
    match &args.out {
        Some(p) => {
            std::fs::write(p, &text).with_context(|| format!("writing {}", p.display()))?;
            let pairs = report.ratios.get("force_pair_evaluations").copied().flatten();
            match pairs {
                Some(r) => println!("force-pair ratio hybrid/full-force {r:.3}"),
                None => println!("full-force ran no force-pair tests"),
            }
        }
        None => print!("{text}"),
    }
    Ok(0)
}
