//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line;
//! run with `--nocapture` to see them all.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use crushsim_core::archive::{run_to_archive, TRAJECTORY_FILE};
use crushsim_core::geometry::Vec2;
use crushsim_core::grid::CellId;
use crushsim_core::hybrid::{CostCounters, Level, RunMode, TransitionRecord};
use crushsim_core::identify::{binned_mutual_information, DetectorConfig};
use crushsim_core::metrics::{fruin_level, fruin_level_for_space, imo_check, DensityHistory, FruinBands};
use crushsim_core::qualify::{evaluate, extract_dataset, train, Classifier, Dataset, Example, TrainParams};
use crushsim_core::quantify::ContactForceParams;
use crushsim_core::vicsek::{flagged_transition, order_crossing, sweep, SweepConfig, VicsekParams};
use crushsim_core::{scenarios, FruinLevel, RunConfig, ScenarioDoc, Simulation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TRAIN_SEED: u64 = 1;
const EVAL_SEED: u64 = 2;

fn check(id: &str, name: &str, pass: bool, detail: String) {
    println!("{} [{id}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "[{id}] {name}: {detail}");
}

fn config(mode: RunMode, seed: u64) -> RunConfig {
    RunConfig {
        mode,
        seed,
        ..Default::default()
    }
}

type ForceKey = (u64, usize);

/// What the acceptance checks need from one finished run.
struct RunDigest {
    contacts: BTreeMap<ForceKey, (f64, Vec2)>,
    /// (tick, agent) at which each sustained-force streak reaches the label span.
    crossings: Vec<ForceKey>,
    transitions: Vec<TransitionRecord>,
    costs: CostCounters,
    max_residual: f64,
    trajectory: Vec<u8>,
    elapsed: Duration,
}

fn digest(sim: &Simulation, elapsed: Duration, trajectory: Vec<u8>) -> RunDigest {
    let labels = sim.config.labels;
    let span = (labels.sustain / sim.config.dt).round() as usize;
    let mut crossings = Vec::new();
    for (id, record) in sim.exposure.iter().enumerate() {
        for &(t, _) in &record.history {
            if record.streak_ending_at(t, labels.force_threshold) == span {
                crossings.push((t, id));
            }
        }
    }
    RunDigest {
        contacts: sim.contact_log.iter().map(|s| ((s.tick, s.agent), (s.normal, s.force))).collect(),
        crossings,
        transitions: sim.state.controller.log.clone(),
        costs: sim.state.costs.total,
        max_residual: sim.third_law_residuals.iter().copied().fold(0.0, f64::max),
        trajectory,
        elapsed,
    }
}

fn run_digest(doc: &ScenarioDoc, cfg: RunConfig, model: Option<Arc<Classifier>>) -> RunDigest {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let (sim, _) = run_to_archive(doc, &cfg, model, dir.path()).unwrap();
    let elapsed = start.elapsed();
    let trajectory = std::fs::read(dir.path().join(TRAJECTORY_FILE)).unwrap();
    digest(&sim, elapsed, trajectory)
}

fn bottleneck_dataset(seed: u64) -> Dataset {
    let mut sim = Simulation::from_scenario(scenarios::bottleneck(), config(RunMode::FullForce, seed), None).unwrap();
    sim.run().unwrap();
    extract_dataset(&sim.run_log(&format!("bottleneck-{seed}")), &sim.config.labels).unwrap()
}

fn trained_model() -> &'static Arc<Classifier> {
    static MODEL: OnceLock<Arc<Classifier>> = OnceLock::new();
    MODEL.get_or_init(|| Arc::new(train(&bottleneck_dataset(TRAIN_SEED).samples, &TrainParams::default()).unwrap()))
}

fn full_force() -> &'static RunDigest {
    static RUN: OnceLock<RunDigest> = OnceLock::new();
    RUN.get_or_init(|| run_digest(&scenarios::bottleneck_doc(), config(RunMode::FullForce, EVAL_SEED), None))
}

fn hybrid() -> &'static RunDigest {
    static RUN: OnceLock<RunDigest> = OnceLock::new();
    RUN.get_or_init(|| {
        run_digest(
            &scenarios::bottleneck_doc(),
            config(RunMode::Hybrid, EVAL_SEED),
            Some(trained_model().clone()),
        )
    })
}

#[test]
fn c1_mutual_information_estimator() {
    let start = Instant::now();
    let xs: Vec<f64> = (0..10_000).map(|i| (i % 2) as f64).collect();
    let self_mi = binned_mutual_information(&xs, &xs, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let bins = DetectorConfig::default().bins;
    let mut shuffled = 0.0;
    for _ in 0..100 {
        let a: Vec<f64> = (0..xs.len()).map(|_| rng.random::<f64>()).collect();
        let mut b = a.clone();
        rand::seq::SliceRandom::shuffle(b.as_mut_slice(), &mut rng);
        shuffled += binned_mutual_information(&a, &b, bins).unwrap();
    }
    shuffled /= 100.0;
    let elapsed = start.elapsed();
    let err = (self_mi - std::f64::consts::LN_2).abs();
    check(
        "1",
        "MI estimator",
        err < 1e-3 && shuffled < 0.05 && elapsed < Duration::from_secs(1),
        format!("|MI(X,X) - ln 2| = {err:.2e}, mean shuffled MI = {shuffled:.4} nats, {elapsed:.2?}"),
    );
}

#[test]
fn c2_vicsek_validation() {
    let start = Instant::now();
    let etas: Vec<f64> = (0..=20).map(|k| k as f64 * 0.25).collect();
    let points = sweep(
        VicsekParams::default(),
        &etas,
        &SweepConfig::default(),
        &DetectorConfig::default(),
        42,
    );
    let elapsed = start.elapsed();
    let crossing = order_crossing(&points, 0.5);
    let flagged_subset = flagged_transition(&points, |p| p.subset);
    let flagged_full = flagged_transition(&points, |p| p.full);
    let gap = |f: Option<f64>| match (crossing, f) {
        (Some(c), Some(f)) => (f - c).abs(),
        _ => f64::INFINITY,
    };
    let agree = points.iter().filter(|p| p.subset == p.full).count() as f64 / points.len() as f64;
    check(
        "2",
        "Vicsek sweep",
        gap(flagged_subset) <= 0.5 && gap(flagged_full) <= 0.5 && agree >= 0.9 && elapsed < Duration::from_secs(120),
        format!(
            "crossing {crossing:?}, flagged subset {flagged_subset:?} full {flagged_full:?}, agreement {:.0}%, {elapsed:.2?}",
            agree * 100.0
        ),
    );
}

#[test]
fn c3_force_engine_oracles() {
    let run = full_force();
    let params = ContactForceParams::default();
    let load = 1000.0;
    let got = common::relaxed_chain_normals(5, load, &params);
    let want = common::chain_oracle(5, load, params.body_stiffness);
    let worst = got.iter().zip(&want).map(|(g, w)| (g - w).abs() / w).fold(0.0, f64::max);
    check(
        "3",
        "force engine oracles",
        run.max_residual < 1e-6 && got.len() == 5 && worst < 0.02 && run.elapsed < Duration::from_secs(60),
        format!(
            "max third-law residual {:.2e} N, chain worst relative error {worst:.2e}, full-force run {:.2?}",
            run.max_residual, run.elapsed
        ),
    );
}

#[test]
fn c4_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let window = rng.random_range(1..4);
        let features = rng.random_range(1..5);
        let hidden = rng.random_range(1..6);
        let mut model = Classifier::zeros(window, features, hidden);
        let p: Vec<f64> = (0..model.parameters().len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        model.set_parameters(&p);
        let xs: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..window * features).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let examples: Vec<Example> = xs
            .iter()
            .map(|x| Example {
                x,
                y: if rng.random::<bool>() { 1.0 } else { 0.0 },
                weight: rng.random_range(0.5..2.0),
            })
            .collect();
        let analytic = model.loss_and_gradient(&examples).1.flatten();
        let h = 1e-6;
        for k in 0..p.len() {
            let mut q = p.clone();
            q[k] += h;
            model.set_parameters(&q);
            let up = model.loss_and_gradient(&examples).0;
            q[k] = p[k] - h;
            model.set_parameters(&q);
            let down = model.loss_and_gradient(&examples).0;
            let numeric = (up - down) / (2.0 * h);
            let rel = (analytic[k] - numeric).abs() / analytic[k].abs().max(numeric.abs()).max(1e-4);
            worst = worst.max(rel);
        }
    }
    check("4", "gradient check", worst < 1e-5, format!("worst relative error {worst:.2e} over 20 networks"));
}

#[test]
fn c5_classifier_skill() {
    let model = trained_model();
    let held_out = bottleneck_dataset(EVAL_SEED);
    let m = evaluate(model, &held_out.samples, 0.5).unwrap();
    check(
        "5",
        "held-out classifier AUC",
        m.auc >= 0.8,
        format!(
            "AUC {:.3} on {} windows ({} positive), trained on seed {TRAIN_SEED}, evaluated on seed {EVAL_SEED}",
            m.auc, m.samples, m.positives
        ),
    );
}

#[test]
fn c6a_co_escalated_forces_match() {
    let (h, f) = (hybrid(), full_force());
    let mismatched = h.contacts.iter().filter(|(k, v)| f.contacts.get(k) != Some(v)).count();
    check(
        "6a",
        "co-escalated forces bit-equal",
        !h.contacts.is_empty() && mismatched == 0,
        format!("{} co-escalated agent-ticks, {mismatched} mismatched", h.contacts.len()),
    );
}

#[test]
fn c6b_force_pair_savings() {
    let (h, f) = (hybrid(), full_force());
    let ratio = h.costs.force_pair_evaluations as f64 / f.costs.force_pair_evaluations as f64;
    let both = h.elapsed + f.elapsed;
    check(
        "6b",
        "force-pair savings",
        ratio < 0.5 && both < Duration::from_secs(300),
        format!(
            "hybrid/full force_pair_evaluations = {}/{} = {ratio:.3}, both runs {both:.2?}",
            h.costs.force_pair_evaluations, f.costs.force_pair_evaluations
        ),
    );
}

#[test]
fn c6c_escalation_soundness() {
    let (h, f) = (hybrid(), full_force());
    let hits = f.crossings.iter().filter(|k| h.contacts.contains_key(k)).count();
    let rate = hits as f64 / f.crossings.len().max(1) as f64;
    check(
        "6c",
        "escalation soundness",
        !f.crossings.is_empty() && rate >= 0.95,
        format!("{hits}/{} threshold crossings inside L3, hit rate {rate:.3}", f.crossings.len()),
    );
}

#[test]
fn c7_ordered_and_disordered_discrimination() {
    let corridor = run_digest(
        &scenarios::corridor_doc(),
        config(RunMode::Hybrid, EVAL_SEED),
        Some(trained_model().clone()),
    );
    let h = hybrid();
    let cell_size = RunConfig::default().cell_size;
    let exit_cell = CellId::of(Vec2::new(9.99, 5.0), cell_size);
    let near = |t: &&TransitionRecord| t.locale.is_adjacent_or_same(exit_cell);
    let up_l2 = h.transitions.iter().filter(near).filter(|t| t.from == Level::L1 && t.to == Level::L2).count();
    let up_l3 = h.transitions.iter().filter(near).filter(|t| t.from == Level::L2 && t.to == Level::L3).count();
    check(
        "7",
        "ordered/disordered discrimination",
        corridor.transitions.is_empty() && up_l2 >= 1 && up_l3 >= 1,
        format!(
            "corridor transitions {}, bottleneck near exit: L1->L2 {up_l2}, L2->L3 {up_l3}",
            corridor.transitions.len()
        ),
    );
}

fn constructed(series: Vec<(CellId, Vec<f64>)>) -> DensityHistory {
    DensityHistory {
        cell_area: 4.0,
        dt: 0.05,
        ticks: series[0].1.len(),
        series: series.into_iter().collect(),
        complete: true,
    }
}

#[test]
fn c8_safety_metrics() {
    let bands = FruinBands::default();
    let fruin_ok = fruin_level_for_space(0.40, &bands) == FruinLevel::F
        && fruin_level(2.5, &bands).0 == FruinLevel::F
        && fruin_level_for_space(0.46, &bands) == FruinLevel::E;

    let calm = imo_check(&constructed(vec![(CellId::new(0, 0), vec![3.9; 100])])).unwrap();
    let mut s = vec![1.0; 100];
    s[..15].fill(4.0);
    let crowded = imo_check(&constructed(vec![(CellId::new(0, 0), vec![0.0; 100]), (CellId::new(2, 1), s.clone())])).unwrap();
    s[10..15].fill(1.0);
    let boundary = imo_check(&constructed(vec![(CellId::new(0, 0), s)])).unwrap();
    let imo_ok = calm.pass
        && !crowded.pass
        && crowded.violating_fraction == 0.15
        && crowded.worst_locale == Some(CellId::new(2, 1))
        && !boundary.pass
        && boundary.violating_fraction == 0.1;

    let mut sim = Simulation::from_scenario(scenarios::empty_room(), RunConfig::default(), None).unwrap();
    sim.run().unwrap();
    let outcome = sim.outcome();
    let last_exit = sim.exits.iter().map(|e| e.time).fold(f64::NEG_INFINITY, f64::max);
    let ids: BTreeSet<usize> = sim.exits.iter().map(|e| e.agent).collect();
    let rset_ok = ids.len() == sim.state.agents.len()
        && outcome.metrics.rset == Some(last_exit)
        && sim.exits.last().map(|e| e.time) == Some(last_exit);
    check(
        "8",
        "safety metrics",
        fruin_ok && imo_ok && rset_ok,
        format!(
            "fruin boundary {fruin_ok}, IMO cases {imo_ok} (fractions {} / {}), RSET {:?} vs last exit {last_exit}",
            crowded.violating_fraction, boundary.violating_fraction, outcome.metrics.rset
        ),
    );
}

#[test]
fn c9_determinism() {
    let first = hybrid();
    let threads = 4;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let again = pool.install(|| {
        run_digest(
            &scenarios::bottleneck_doc(),
            config(RunMode::Hybrid, EVAL_SEED),
            Some(trained_model().clone()),
        )
    });
    check(
        "9",
        "byte-identical hybrid trajectories",
        !first.trajectory.is_empty() && first.trajectory == again.trajectory,
        format!(
            "{} bytes each, reference run on {} worker threads, rerun on {threads}",
            first.trajectory.len(),
            rayon::current_num_threads()
        ),
    );
}
