use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use crushsim_core::archive::{read_archive, METRICS_FILE};
use crushsim_core::quantify::InjuryEntry;

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run archive directory.
    #[arg(long, env = "CRUSH_ARCHIVE")]
    pub archive: PathBuf,
    /// Also print the archive's metrics JSON after the summary.
    #[arg(long, env = "CRUSH_JSON")]
    pub json: bool,
}

pub const TOP_EXPOSURE: usize = 10;

/// Agents with recorded contact force, highest peak first.
pub fn top_exposure(entries: &[InjuryEntry], n: usize) -> Vec<&InjuryEntry> {
    let mut v: Vec<&InjuryEntry> = entries.iter().filter(|e| e.peak > 0.0).collect();
    v.sort_by(|a, b| b.peak.total_cmp(&a.peak).then(a.agent_id.cmp(&b.agent_id)));
    v.truncate(n);
    v
}

pub fn report(args: ReportArgs) -> Result<u8> {
    let a = read_archive(&args.archive).with_context(|| format!("reading archive {}", args.archive.display()))?;
    let m = &a.metrics;
    println!(
        "{}: {} mode, seed {}, {} after {} ticks",
        a.scenario.name,
        a.metadata.mode.as_str(),
        a.metadata.seed,
        a.metadata.status,
        a.metadata.ticks
    );
    println!("evacuated {}/{}", m.evacuated, m.population);
    let aset = m.aset.map_or("not configured".to_string(), |t| format!("{t:.2} s"));
    match m.rset {
        Some(r) => println!("rset {r:.2} s, aset {aset}, verdict {:?}", m.verdict),
        None => println!("rset incomplete, aset {aset}, verdict {:?}", m.verdict),
    }
    println!("worst Fruin level {:?}", m.worst_fruin);
    match &m.imo {
        Some(imo) => println!(
            "IMO {} (largest locale fraction at >= 4 p/m2: {:.3}{})",
            if imo.pass { "pass" } else { "fail" },
            imo.violating_fraction,
            imo.worst_locale.map_or(String::new(), |c| format!(", locale ({}, {})", c.i, c.j))
        ),
        None => println!("IMO not evaluated (run incomplete)"),
    }
    println!("level transitions {}", a.transitions);

    let top = top_exposure(&a.injury.entries, TOP_EXPOSURE);
    if top.is_empty() {
        println!("exposure: no force data collected");
    } else {
        println!("exposure, top {} by peak force:", top.len());
        println!("  {:>6} {:>10} {:>12} {:>8} {:>8}", "agent", "peak_N", "at_risk_s", "at_risk", "critical");
        for e in top {
            println!(
                "  {:>6} {:>10.1} {:>12.2} {:>8} {:>8}",
                e.agent_id, e.peak, e.longest_at_risk_s, e.at_risk, e.critical
            );
        }
    }
    if args.json {
        let p = a.dir.join(METRICS_FILE);
        print!("{}", std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?);
    }
    Ok(0)
}
