//! Scenario, config and model resolution shared by the verbs.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::Args;
use crushsim_core::agent::seed_population;
use crushsim_core::archive::load_model;
use crushsim_core::hybrid::RunMode;
use crushsim_core::qualify::Classifier;
use crushsim_core::{build_scenario, scenarios, RunConfig, ScenarioDoc};

/// Flags that pick the scenario and the run config.
#[derive(Debug, Clone, Args)]
pub struct SetupArgs {
    /// Scenario TOML file, or a built-in name (empty-room, corridor, bottleneck).
    #[arg(long, env = "CRUSH_SCENARIO")]
    pub scenario: String,
    /// Run config TOML file; defaults apply when omitted.
    #[arg(long, env = "CRUSH_CONFIG")]
    pub config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long, env = "CRUSH_SEED")]
    pub seed: Option<u64>,
    /// Overrides the config's mode: implicit, full-force or hybrid.
    #[arg(long, env = "CRUSH_MODE")]
    pub mode: Option<RunMode>,
    /// Overrides the config's max_time, seconds.
    #[arg(long, env = "CRUSH_MAX_TIME")]
    pub max_time: Option<f64>,
    /// Classifier model file; overrides the config's model path.
    #[arg(long, env = "CRUSH_MODEL")]
    pub model: Option<PathBuf>,
}

pub fn load_scenario(arg: &str) -> Result<ScenarioDoc> {
    let path = Path::new(arg);
    if !path.exists() {
        if let Some(doc) = scenarios::by_name(arg) {
            return Ok(doc);
        }
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("reading scenario {}", path.display()))?;
    ScenarioDoc::from_toml_str(&text).with_context(|| format!("parsing scenario {}", path.display()))
}

pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    RunConfig::from_toml_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

impl SetupArgs {
    pub fn config(&self) -> Result<RunConfig> {
        let mut cfg = load_config(self.config.as_deref())?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(mode) = self.mode {
            cfg.mode = mode;
        }
        if let Some(t) = self.max_time {
            cfg.max_time = t;
        }
        if let Some(m) = &self.model {
            cfg.model = Some(m.clone());
        }
        Ok(cfg)
    }

    /// Loads the model named by `--model` or by the config, resolving a
    /// config-relative path against the config file's directory. Hybrid
    /// mode cannot confirm a crush without one.
    pub fn model(&self, cfg: &RunConfig) -> Result<Option<Arc<Classifier>>> {
        let Some(path) = &cfg.model else {
            if cfg.mode == RunMode::Hybrid {
                bail!("hybrid mode needs a classifier model (--model or `model` in the config)");
            }
            return Ok(None);
        };
        let base = if self.model.is_some() {
            None
        } else {
            self.config.as_deref().and_then(Path::parent)
        };
        let model = load_model(path, base).with_context(|| format!("loading model {}", path.display()))?;
        Ok(Some(Arc::new(model)))
    }
}

#[derive(Debug, Args)]
pub struct DumpArgs {
    /// Run config TOML to start from.
    #[arg(long, env = "CRUSH_CONFIG")]
    pub config: Option<PathBuf>,
    /// Print this scenario (file or built-in name) instead of the config.
    #[arg(long, env = "CRUSH_SCENARIO")]
    pub scenario: Option<String>,
    #[arg(long, env = "CRUSH_SEED")]
    pub seed: Option<u64>,
    #[arg(long, env = "CRUSH_MODE")]
    pub mode: Option<RunMode>,
}

pub fn dump(args: DumpArgs) -> Result<u8> {
    if let Some(s) = &args.scenario {
        print!("{}", load_scenario(s)?.to_toml_string());
        return Ok(0);
    }
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = args.mode {
        cfg.mode = mode;
    }
    print!("{}", cfg.to_toml_string());
    Ok(0)
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Scenario TOML file or built-in name.
    #[arg(long, env = "CRUSH_SCENARIO")]
    pub scenario: String,
    /// Run config TOML to check against the scenario.
    #[arg(long, env = "CRUSH_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, env = "CRUSH_SEED")]
    pub seed: Option<u64>,
}

pub fn validate(args: ValidateArgs) -> Result<u8> {
    let doc = load_scenario(&args.scenario)?;
    let scenario = build_scenario(&doc).with_context(|| format!("scenario {}", args.scenario))?;
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate(&scenario).context("config does not fit the scenario")?;
    let agents = seed_population(&scenario, cfg.seed).context("placing the population")?;
    println!(
        "ok: {}: {} agents placed, exits {}, walls {}",
        doc.name,
        agents.len(),
        scenario.exits.len(),
        scenario.wall_set().len()
    );
    Ok(0)
}
