use crushsim_core::agent::seed_population;
use crushsim_core::hybrid::RunMode;
use crushsim_core::qualify::{extract_dataset, LabelParams};
use crushsim_core::quantify::ExposureRecord;
use crushsim_core::{scenarios, RunConfig, Simulation};

fn full_force(seed: u64) -> RunConfig {
    RunConfig {
        mode: RunMode::FullForce,
        seed,
        ..Default::default()
    }
}

/// Doubles every mass-carrying quantity: masses, repulsion strengths,
/// contact stiffness and friction, and every force threshold.
fn doubled(mut cfg: RunConfig) -> RunConfig {
    cfg.movement.repulsion_strength *= 2.0;
    cfg.movement.wall_repulsion_strength *= 2.0;
    cfg.contact.body_stiffness *= 2.0;
    cfg.contact.friction_coefficient *= 2.0;
    cfg.labels.force_threshold *= 2.0;
    cfg.policy.exit_force *= 2.0;
    cfg.report.at_risk.force *= 2.0;
    cfg.report.critical.force *= 2.0;
    for t in &mut cfg.report.tiers {
        *t *= 2.0;
    }
    cfg
}

#[test]
fn features_are_invariant_under_mass_scaling() {
    let scenario = scenarios::bottleneck();
    let cfg = full_force(1);
    let agents = seed_population(&scenario, cfg.seed).unwrap();
    let heavy: Vec<_> = agents
        .iter()
        .map(|a| {
            let mut a = a.clone();
            a.mass *= 2.0;
            a
        })
        .collect();
    let mut base = Simulation::new(scenario.clone(), cfg.clone(), agents, None).unwrap();
    let mut scaled = Simulation::new(scenario, doubled(cfg), heavy, None).unwrap();
    for _ in 0..400 {
        base.step().unwrap();
        scaled.step().unwrap();
    }
    assert_eq!(base.digests, scaled.digests);
    assert_eq!(base.tracks, scaled.tracks);
    let forces = |e: &[ExposureRecord]| -> Vec<Vec<(u64, f64)>> { e.iter().map(|r| r.history.clone()).collect() };
    let twice: Vec<Vec<(u64, f64)>> = forces(&base.exposure)
        .into_iter()
        .map(|h| h.into_iter().map(|(t, f)| (t, 2.0 * f)).collect())
        .collect();
    assert_eq!(twice, forces(&scaled.exposure));

    let params = base.config.labels;
    let a = extract_dataset(&base.run_log("base"), &params).unwrap();
    let b = extract_dataset(&scaled.run_log("scaled"), &scaled.config.labels).unwrap();
    let labels = |d: &crushsim_core::qualify::Dataset| -> Vec<bool> { d.samples.iter().map(|s| s.label).collect() };
    assert_eq!(labels(&a), labels(&b));
    assert!(a.positives() > 0);
}

/// Every positive window has the threshold met on each tick of the
/// sustain span; every negative one has a tick in that span below it.
#[test]
fn labels_match_an_independent_scan() {
    let mut sim = Simulation::from_scenario(scenarios::bottleneck(), full_force(2), None).unwrap();
    for _ in 0..600 {
        sim.step().unwrap();
    }
    let params = LabelParams::default();
    let log = sim.run_log("scan");
    let data = extract_dataset(&log, &params).unwrap();
    assert!(data.positives() > 0);
    let span = (params.sustain / log.dt).round() as u64;
    for s in &data.samples {
        let hist = &log.exposure[s.window.agent_id].history;
        let force_at = |t: u64| hist.iter().find(|&&(u, _)| u == t).map(|&(_, f)| f);
        let sustained = (s.tick + 1 - span..=s.tick).all(|t| force_at(t).is_some_and(|f| f >= params.force_threshold));
        assert_eq!(s.label, sustained, "agent {} tick {}", s.window.agent_id, s.tick);
    }
}

#[test]
fn bottleneck_training_run_has_a_usable_class_balance() {
    let mut sim = Simulation::from_scenario(scenarios::bottleneck(), full_force(1), None).unwrap();
    sim.run().unwrap();
    let data = extract_dataset(&sim.run_log("bottleneck-1"), &sim.config.labels).unwrap();
    let f = data.positive_fraction();
    assert!(
        (0.05..=0.5).contains(&f),
        "positive fraction {f:.4} ({} of {})",
        data.positives(),
        data.samples.len()
    );
}
