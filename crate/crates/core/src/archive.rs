//! On-disk run archive. Every file except `metadata.json` is a pure
//! function of the scenario, the config and the model, so re-running from
//! the echoed documents reproduces them byte for byte.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{ArchiveError, SimError};
use crate::grid::CellId;
use crate::hybrid::{CostCounters, RunMode};
use crate::metrics::MetricsReport;
use crate::qualify::{model_from_str, model_to_string, Classifier, FeatureTrack, RunLog, FEATURE_COUNT, FEATURE_NAMES};
use crate::quantify::{accumulate_exposure, ExposureRecord, InjuryReport};
use crate::scenario::{build_scenario, ScenarioDoc};
use crate::sim::{RunOutcome, RunStatus, Simulation};

pub const ARCHIVE_SCHEMA: u32 = 1;

pub const CONFIG_FILE: &str = "config.toml";
pub const SCENARIO_FILE: &str = "scenario.toml";
pub const MODEL_FILE: &str = "model.crushnet";
pub const METADATA_FILE: &str = "metadata.json";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const VERDICTS_FILE: &str = "verdicts.csv";
pub const TRANSITIONS_FILE: &str = "transitions.csv";
pub const EXPOSURE_FILE: &str = "exposure.csv";
pub const FEATURES_FILE: &str = "features.csv";
pub const EXITS_FILE: &str = "exits.csv";
pub const COST_FILE: &str = "cost_summary.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const INJURY_FILE: &str = "injury_report.json";

/// Files every archive has; `features.csv` is added for full-force runs.
pub const REQUIRED_FILES: [&str; 11] = [
    CONFIG_FILE,
    SCENARIO_FILE,
    METADATA_FILE,
    TRAJECTORY_FILE,
    VERDICTS_FILE,
    TRANSITIONS_FILE,
    EXPOSURE_FILE,
    EXITS_FILE,
    COST_FILE,
    METRICS_FILE,
    INJURY_FILE,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub schema: u32,
    pub generator: String,
    pub created_unix: u64,
    pub mode: RunMode,
    pub seed: u64,
    pub status: String,
    pub ticks: u64,
    pub agents: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocaleCost {
    pub i: i32,
    pub j: i32,
    #[serde(flatten)]
    pub counters: CostCounters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub schema: u32,
    pub mode: RunMode,
    pub ticks: u64,
    pub total: CostCounters,
    pub estimated: CostCounters,
    pub per_locale: Vec<LocaleCost>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ArchiveError + '_ {
    move |source| ArchiveError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> ArchiveError + '_ {
    move |e| ArchiveError::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), ArchiveError> {
    fs::write(path, text).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ArchiveError> {
    let mut text = serde_json::to_string_pretty(value).expect("archive documents serialise");
    text.push('\n');
    write_text(path, &text)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Runs a scenario and writes the complete archive to `out`. A model is
/// copied into the archive and the echoed config points at the copy.
pub fn run_to_archive(
    doc: &ScenarioDoc,
    config: &RunConfig,
    model: Option<Arc<Classifier>>,
    out: &Path,
) -> Result<(Simulation, RunOutcome), SimError> {
    let scenario = build_scenario(doc)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut config = config.clone();
    if let Some(m) = &model {
        let p = out.join(MODEL_FILE);
        write_text(&p, &model_to_string(m))?;
        config.model = Some(PathBuf::from(MODEL_FILE));
    } else {
        config.model = None;
    }
    write_text(&out.join(CONFIG_FILE), &config.to_toml_string())?;
    write_text(&out.join(SCENARIO_FILE), &doc.to_toml_string())?;

    let mut sim = Simulation::from_scenario(scenario, config, model)?;
    let traj = out.join(TRAJECTORY_FILE);
    let file = fs::File::create(&traj).map_err(io_err(&traj))?;
    sim.set_trajectory_sink(Box::new(BufWriter::new(file))).map_err(io_err(&traj))?;
    let status = sim.run()?;
    let outcome = sim.outcome();
    write_outputs(&sim, &outcome, out)?;
    write_json(
        &out.join(METADATA_FILE),
        &Metadata {
            schema: ARCHIVE_SCHEMA,
            generator: format!("crushsim {}", env!("CARGO_PKG_VERSION")),
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            mode: sim.config.mode,
            seed: sim.config.seed,
            status: match status {
                RunStatus::Completed => "completed".into(),
                RunStatus::TimedOut => "timed-out".into(),
            },
            ticks: sim.state.tick,
            agents: sim.state.agents.len(),
        },
    )?;
    Ok((sim, outcome))
}

fn write_outputs(sim: &Simulation, outcome: &RunOutcome, out: &Path) -> Result<(), ArchiveError> {
    let p = out.join(VERDICTS_FILE);
    let mut w = csv::Writer::from_path(&p).map_err(csv_err(&p))?;
    w.write_record([
        "tick",
        "locale_i",
        "locale_j",
        "level",
        "state",
        "confidence",
        "mi",
        "phi_mean",
        "stagnant",
        "p_mean",
        "p_fraction",
        "peak_force",
    ])
    .map_err(csv_err(&p))?;
    for r in &sim.verdicts {
        w.write_record([
            r.tick.to_string(),
            r.locale.i.to_string(),
            r.locale.j.to_string(),
            r.level.as_str().to_string(),
            r.verdict.map(|v| v.state.as_str().to_string()).unwrap_or_default(),
            opt(r.verdict.map(|v| v.confidence)),
            opt(r.verdict.map(|v| v.mi_value)),
            opt(r.verdict.map(|v| v.phi_mean)),
            r.verdict.map(|v| v.stagnant.to_string()).unwrap_or_default(),
            opt(r.qualify.map(|q| q.mean_probability)),
            opt(r.qualify.map(|q| q.fraction)),
            opt(r.quantify.map(|q| q.peak_force)),
        ])
        .map_err(csv_err(&p))?;
    }
    w.flush().map_err(io_err(&p))?;

    let p = out.join(TRANSITIONS_FILE);
    let mut w = csv::Writer::from_path(&p).map_err(csv_err(&p))?;
    w.write_record(["tick", "locale_i", "locale_j", "from_level", "to_level", "trigger"])
        .map_err(csv_err(&p))?;
    for t in &sim.state.controller.log {
        w.write_record([
            t.tick.to_string(),
            t.locale.i.to_string(),
            t.locale.j.to_string(),
            t.from.as_str().to_string(),
            t.to.as_str().to_string(),
            t.trigger.as_str().to_string(),
        ])
        .map_err(csv_err(&p))?;
    }
    w.flush().map_err(io_err(&p))?;

    let p = out.join(EXPOSURE_FILE);
    let mut w = csv::Writer::from_path(&p).map_err(csv_err(&p))?;
    w.write_record(["tick", "agent_id", "locale_i", "locale_j", "normal_force", "fx", "fy"])
        .map_err(csv_err(&p))?;
    for s in &sim.contact_log {
        w.write_record([
            s.tick.to_string(),
            s.agent.to_string(),
            s.locale.i.to_string(),
            s.locale.j.to_string(),
            s.normal.to_string(),
            s.force.x.to_string(),
            s.force.y.to_string(),
        ])
        .map_err(csv_err(&p))?;
    }
    w.flush().map_err(io_err(&p))?;

    if sim.config.mode == RunMode::FullForce {
        let p = out.join(FEATURES_FILE);
        let mut w = csv::Writer::from_path(&p).map_err(csv_err(&p))?;
        let mut header = vec!["tick".to_string(), "agent_id".to_string()];
        header.extend(FEATURE_NAMES.iter().map(|s| s.to_string()));
        w.write_record(&header).map_err(csv_err(&p))?;
        for (id, track) in sim.tracks.iter().enumerate() {
            for (k, row) in track.rows.iter().enumerate() {
                let mut rec = vec![(track.first_tick + k as u64).to_string(), id.to_string()];
                rec.extend(row.iter().map(f64::to_string));
                w.write_record(&rec).map_err(csv_err(&p))?;
            }
        }
        w.flush().map_err(io_err(&p))?;
    }

    let p = out.join(EXITS_FILE);
    let mut w = csv::Writer::from_path(&p).map_err(csv_err(&p))?;
    w.write_record(["agent_id", "tick", "time", "exit"]).map_err(csv_err(&p))?;
    for e in &sim.exits {
        w.write_record([e.agent.to_string(), e.tick.to_string(), e.time.to_string(), e.exit.to_string()])
            .map_err(csv_err(&p))?;
    }
    w.flush().map_err(io_err(&p))?;

    write_json(&out.join(COST_FILE), &cost_report(sim))?;
    write_json(&out.join(METRICS_FILE), &outcome.metrics)?;
    write_json(&out.join(INJURY_FILE), &outcome.injury)?;
    Ok(())
}

pub fn cost_report(sim: &Simulation) -> CostReport {
    let costs = &sim.state.costs;
    CostReport {
        schema: ARCHIVE_SCHEMA,
        mode: sim.config.mode,
        ticks: sim.state.tick,
        total: costs.total,
        estimated: costs.estimated,
        per_locale: costs
            .per_locale
            .iter()
            .map(|(c, k)| LocaleCost {
                i: c.i,
                j: c.j,
                counters: *k,
            })
            .collect(),
    }
}

/// Parsed contents of an archive directory.
#[derive(Debug, Clone)]
pub struct Archive {
    pub dir: PathBuf,
    pub config: RunConfig,
    pub scenario: ScenarioDoc,
    pub metadata: Metadata,
    pub costs: CostReport,
    pub metrics: MetricsReport,
    pub injury: InjuryReport,
    pub transitions: usize,
}

fn read_text(path: &Path) -> Result<String, ArchiveError> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ArchiveError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| ArchiveError::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

fn check_schema(path: &Path, found: u32, expected: u32) -> Result<(), ArchiveError> {
    if found != expected {
        return Err(ArchiveError::Format {
            path: path.to_path_buf(),
            msg: format!("unsupported schema version {found} (expected {expected})"),
        });
    }
    Ok(())
}

pub fn read_archive(dir: &Path) -> Result<Archive, ArchiveError> {
    for f in REQUIRED_FILES {
        let p = dir.join(f);
        if !p.is_file() {
            return Err(ArchiveError::Incomplete(p));
        }
    }
    let p = dir.join(CONFIG_FILE);
    let config = RunConfig::from_toml_str(&read_text(&p)?).map_err(|e| ArchiveError::Format {
        path: p.clone(),
        msg: e.to_string(),
    })?;
    if config.mode == RunMode::FullForce && !dir.join(FEATURES_FILE).is_file() {
        return Err(ArchiveError::Incomplete(dir.join(FEATURES_FILE)));
    }
    let p = dir.join(SCENARIO_FILE);
    let scenario = ScenarioDoc::from_toml_str(&read_text(&p)?).map_err(|e| ArchiveError::Format {
        path: p.clone(),
        msg: e.to_string(),
    })?;
    let p = dir.join(METADATA_FILE);
    let metadata: Metadata = read_json(&p)?;
    check_schema(&p, metadata.schema, ARCHIVE_SCHEMA)?;
    let p = dir.join(COST_FILE);
    let costs: CostReport = read_json(&p)?;
    check_schema(&p, costs.schema, ARCHIVE_SCHEMA)?;
    let p = dir.join(METRICS_FILE);
    let metrics: MetricsReport = read_json(&p)?;
    check_schema(&p, metrics.schema, crate::metrics::METRICS_SCHEMA)?;
    let p = dir.join(INJURY_FILE);
    let injury: InjuryReport = read_json(&p)?;
    check_schema(&p, injury.schema, crate::quantify::INJURY_REPORT_SCHEMA)?;
    let p = dir.join(TRANSITIONS_FILE);
    let transitions = csv::Reader::from_path(&p).map_err(csv_err(&p))?.records().count();
    Ok(Archive {
        dir: dir.to_path_buf(),
        config,
        scenario,
        metadata,
        costs,
        metrics,
        injury,
        transitions,
    })
}

fn field<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, k: usize) -> Result<T, ArchiveError> {
    rec.get(k)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| ArchiveError::Format {
            path: path.to_path_buf(),
            msg: format!("bad value in column {k} of record {:?}", rec.position().map(|p| p.line())),
        })
}

/// Rebuilds the training view (features and exposure) of a full-force archive.
pub fn read_run_log(archive: &Archive, run_id: &str) -> Result<RunLog, ArchiveError> {
    let n = archive.metadata.agents;
    let mut tracks = vec![FeatureTrack::default(); n];
    let p = archive.dir.join(FEATURES_FILE);
    if p.is_file() {
        let mut r = csv::Reader::from_path(&p).map_err(csv_err(&p))?;
        for rec in r.records() {
            let rec = rec.map_err(csv_err(&p))?;
            let tick: u64 = field(&p, &rec, 0)?;
            let id: usize = field(&p, &rec, 1)?;
            let mut row = [0.0; FEATURE_COUNT];
            for (k, v) in row.iter_mut().enumerate() {
                *v = field(&p, &rec, 2 + k)?;
            }
            let t = tracks.get_mut(id).ok_or_else(|| ArchiveError::Format {
                path: p.clone(),
                msg: format!("agent id {id} out of range"),
            })?;
            if t.rows.is_empty() {
                t.first_tick = tick;
            }
            t.rows.push(row);
        }
    }
    let tiers = &archive.config.report.tiers;
    let mut exposure: Vec<ExposureRecord> = (0..n).map(|i| ExposureRecord::new(i, tiers.len())).collect();
    let p = archive.dir.join(EXPOSURE_FILE);
    let mut r = csv::Reader::from_path(&p).map_err(csv_err(&p))?;
    for rec in r.records() {
        let rec = rec.map_err(csv_err(&p))?;
        let tick: u64 = field(&p, &rec, 0)?;
        let id: usize = field(&p, &rec, 1)?;
        let normal: f64 = field(&p, &rec, 4)?;
        let e = exposure.get_mut(id).ok_or_else(|| ArchiveError::Format {
            path: p.clone(),
            msg: format!("agent id {id} out of range"),
        })?;
        accumulate_exposure(e, tick, normal, archive.config.dt, tiers);
    }
    Ok(RunLog {
        run_id: run_id.to_string(),
        mode: archive.config.mode,
        dt: archive.config.dt,
        tracks,
        exposure,
    })
}

/// Reads a model, resolving a relative path against `base`.
pub fn load_model(path: &Path, base: Option<&Path>) -> Result<Classifier, SimError> {
    let full = match base {
        Some(b) if path.is_relative() => b.join(path),
        _ => path.to_path_buf(),
    };
    let text = read_text(&full)?;
    Ok(model_from_str(&text)?)
}

/// Locale id columns as a cell.
pub fn cell(i: i32, j: i32) -> CellId {
    CellId::new(i, j)
}
