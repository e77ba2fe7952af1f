use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use crushsim_core::archive::run_to_archive;
use crushsim_core::RunStatus;

use crate::inputs::SetupArgs;
use crate::EXIT_INCOMPLETE;

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub setup: SetupArgs,
    /// Archive directory to write.
    #[arg(long, env = "CRUSH_OUT")]
    pub out: PathBuf,
}

pub fn run(args: RunArgs) -> Result<u8> {
    let doc = crate::inputs::load_scenario(&args.setup.scenario)?;
    let cfg = args.setup.config()?;
    let model = args.setup.model(&cfg)?;
    let (sim, outcome) =
        run_to_archive(&doc, &cfg, model, &args.out).with_context(|| format!("running {}", doc.name))?;
    let m = &outcome.metrics;
    println!(
        "{}: {} mode, seed {}, {} ticks, {}/{} evacuated",
        doc.name,
        cfg.mode.as_str(),
        cfg.seed,
        sim.state.tick,
        m.evacuated,
        m.population
    );
    match m.rset {
        Some(r) => println!("rset {r:.2} s, verdict {:?}", m.verdict),
        None => println!("rset incomplete, verdict {:?}", m.verdict),
    }
    println!(
        "{} level transitions, archive written to {}",
        sim.state.controller.log.len(),
        args.out.display()
    );
    Ok(match outcome.status {
        RunStatus::Completed => 0,
        RunStatus::TimedOut => {
            eprintln!("run timed out after {} s", cfg.max_time);
            EXIT_INCOMPLETE
        }
    })
}
