//! Crowd-safety metrics: Fruin level of service, the IMO density rule and
//! RSET/ASET bookkeeping. Pure post-processing over run logs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::MetricsError;
use crate::grid::{CellId, LocaleGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FruinLevel {
    A,
    B,
    C,
    D,
    E,
    F,
}

/// Lower bounds on space per person (m²) for levels A to E; anything below
/// `e` is F. Only the E/F boundary is normative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FruinBands {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
}

impl Default for FruinBands {
    fn default() -> Self {
        FruinBands {
            a: 3.24,
            b: 2.32,
            c: 1.39,
            d: 0.93,
            e: 0.46,
        }
    }
}

pub fn fruin_level_for_space(space: f64, bands: &FruinBands) -> FruinLevel {
    if space >= bands.a {
        FruinLevel::A
    } else if space >= bands.b {
        FruinLevel::B
    } else if space >= bands.c {
        FruinLevel::C
    } else if space >= bands.d {
        FruinLevel::D
    } else if space >= bands.e {
        FruinLevel::E
    } else {
        FruinLevel::F
    }
}

/// Level and space per person (m², infinite at zero density).
pub fn fruin_level(density: f64, bands: &FruinBands) -> (FruinLevel, f64) {
    debug_assert!(density >= 0.0);
    let space = if density > 0.0 { 1.0 / density } else { f64::INFINITY };
    (fruin_level_for_space(space, bands), space)
}

/// IMO rule threshold, persons/m².
pub const IMO_DENSITY: f64 = 4.0;
/// IMO rule time fraction.
pub const IMO_FRACTION: f64 = 0.10;

/// Per-locale density series (persons/m²), one sample per tick. Locales
/// that were empty on a tick hold 0 for it.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DensityHistory {
    /// m²
    pub cell_area: f64,
    /// s
    pub dt: f64,
    pub ticks: usize,
    pub series: BTreeMap<CellId, Vec<f64>>,
    /// False while the run is still going or if it timed out.
    pub complete: bool,
}

impl DensityHistory {
    pub fn new(cell_size: f64, dt: f64) -> Self {
        DensityHistory {
            cell_area: cell_size * cell_size,
            dt,
            ..Default::default()
        }
    }

    pub fn record(&mut self, grid: &LocaleGrid) {
        let ticks = self.ticks;
        for (&cell, members) in &grid.cells {
            self.series
                .entry(cell)
                .or_insert_with(|| vec![0.0; ticks])
                .push(members.len() as f64 / self.cell_area);
        }
        self.ticks += 1;
        for s in self.series.values_mut() {
            s.resize(self.ticks, 0.0);
        }
    }

    pub fn duration(&self) -> f64 {
        self.ticks as f64 * self.dt
    }

    /// Highest density across locales on each tick.
    pub fn peak_series(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.ticks];
        for s in self.series.values() {
            for (o, &d) in out.iter_mut().zip(s) {
                *o = f64::max(*o, d);
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImoResult {
    pub pass: bool,
    /// Largest per-locale fraction of ticks at or above the density limit.
    pub violating_fraction: f64,
    pub worst_locale: Option<CellId>,
}

/// Fails iff some locale spent at least 10% of the run at 4 persons/m² or
/// more (both comparisons inclusive).
pub fn imo_check(history: &DensityHistory) -> Result<ImoResult, MetricsError> {
    if !history.complete {
        return Err(MetricsError::IncompleteRun("density history is not closed".into()));
    }
    if history.ticks == 0 {
        return Err(MetricsError::IncompleteRun("no ticks recorded".into()));
    }
    let mut worst: Option<(CellId, f64)> = None;
    for (&cell, s) in &history.series {
        let hits = s.iter().filter(|&&d| d >= IMO_DENSITY).count();
        let fraction = hits as f64 / history.ticks as f64;
        if worst.is_none_or(|(_, f)| fraction > f) {
            worst = Some((cell, fraction));
        }
    }
    let violating_fraction = worst.map_or(0.0, |(_, f)| f);
    Ok(ImoResult {
        pass: violating_fraction < IMO_FRACTION,
        violating_fraction,
        worst_locale: worst.filter(|(_, f)| *f > 0.0).map(|(c, _)| c),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SafetyVerdict {
    Safe,
    Unsafe,
    NotEvaluated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgressTimes {
    /// s; `None` when some agent never left.
    pub rset: Option<f64>,
    pub aset: Option<f64>,
    /// Indexed by agent id.
    pub exit_times: Vec<Option<f64>>,
    pub verdict: SafetyVerdict,
}

/// RSET is the last exit time once everyone is out; safe iff ASET > RSET.
/// An empty population has no exit to time, so RSET stays unset.
pub fn egress_times(exit_times: &[Option<f64>], aset: Option<f64>) -> EgressTimes {
    let rset = if exit_times.is_empty() {
        None
    } else {
        exit_times.iter().try_fold(0.0f64, |acc, t| t.map(|t| acc.max(t)))
    };
    let verdict = match (rset, aset) {
        (Some(r), Some(a)) if a > r => SafetyVerdict::Safe,
        (Some(_), Some(_)) => SafetyVerdict::Unsafe,
        _ => SafetyVerdict::NotEvaluated,
    };
    EgressTimes {
        rset,
        aset,
        exit_times: exit_times.to_vec(),
        verdict,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FruinChange {
    /// s
    pub time: f64,
    pub level: FruinLevel,
}

pub const METRICS_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema: u32,
    pub rset: Option<f64>,
    pub aset: Option<f64>,
    pub verdict: SafetyVerdict,
    pub evacuated: usize,
    pub population: usize,
    /// Worst level across locales, recorded at each change.
    pub fruin_timeline: Vec<FruinChange>,
    pub worst_fruin: FruinLevel,
    /// `None` for runs that did not finish.
    pub imo: Option<ImoResult>,
}

pub fn fruin_timeline(history: &DensityHistory, bands: &FruinBands) -> Vec<FruinChange> {
    let mut out: Vec<FruinChange> = Vec::new();
    for (k, d) in history.peak_series().into_iter().enumerate() {
        let level = fruin_level(d, bands).0;
        if out.last().is_none_or(|c| c.level != level) {
            out.push(FruinChange {
                time: k as f64 * history.dt,
                level,
            });
        }
    }
    out
}

pub fn metrics_report(history: &DensityHistory, egress: &EgressTimes, bands: &FruinBands) -> MetricsReport {
    let timeline = fruin_timeline(history, bands);
    MetricsReport {
        schema: METRICS_SCHEMA,
        rset: egress.rset,
        aset: egress.aset,
        verdict: egress.verdict,
        evacuated: egress.exit_times.iter().filter(|t| t.is_some()).count(),
        population: egress.exit_times.len(),
        worst_fruin: timeline.iter().map(|c| c.level).max().unwrap_or(FruinLevel::A),
        fruin_timeline: timeline,
        imo: imo_check(history).ok(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fruin_cases() {
        let b = FruinBands::default();
        assert_eq!(fruin_level(2.5, &b).0, FruinLevel::F);
        assert!((fruin_level(2.5, &b).1 - 0.4).abs() < 1e-12);
        let (lvl, space) = fruin_level(0.0, &b);
        assert_eq!(lvl, FruinLevel::A);
        assert!(space.is_infinite());
        assert_eq!(fruin_level_for_space(0.46, &b), FruinLevel::E);
        assert_eq!(fruin_level_for_space(0.459_999, &b), FruinLevel::F);
    }

    fn history(series: Vec<(CellId, Vec<f64>)>) -> DensityHistory {
        let ticks = series[0].1.len();
        DensityHistory {
            cell_area: 4.0,
            dt: 0.05,
            ticks,
            series: series.into_iter().collect(),
            complete: true,
        }
    }

    #[test]
    fn imo_cases() {
        let h = history(vec![(CellId::new(0, 0), vec![3.9; 100])]);
        assert!(imo_check(&h).unwrap().pass);

        let mut s = vec![1.0; 100];
        s[..15].fill(4.0);
        let h = history(vec![(CellId::new(0, 0), vec![0.0; 100]), (CellId::new(2, 1), s.clone())]);
        let r = imo_check(&h).unwrap();
        assert!(!r.pass);
        assert!((r.violating_fraction - 0.15).abs() < 1e-12);
        assert_eq!(r.worst_locale, Some(CellId::new(2, 1)));

        s[10..15].fill(1.0);
        let r = imo_check(&history(vec![(CellId::new(0, 0), s)])).unwrap();
        assert_eq!(r.violating_fraction, 0.1);
        assert!(!r.pass);

        let mut open = h.clone();
        open.complete = false;
        assert!(matches!(imo_check(&open), Err(MetricsError::IncompleteRun(_))));
    }

    #[test]
    fn history_backfills_late_cells() {
        use crate::agent::AgentState;
        use crate::geometry::Vec2;
        use crate::grid::partition_locales;
        let mk = |x: f64| AgentState {
            id: 0,
            position: Vec2::new(x, 0.5),
            velocity: Vec2::ZERO,
            mass: 80.0,
            radius: 0.25,
            desired_speed: 1.0,
            perceived_threat: 0.0,
            competitiveness: 0.0,
            target_exit: 0,
            evacuated_at: None,
            immobile: false,
        };
        let mut h = DensityHistory::new(2.0, 0.05);
        h.record(&partition_locales(&[mk(0.5)], 2.0, 0));
        h.record(&partition_locales(&[mk(2.5)], 2.0, 1));
        assert_eq!(h.series[&CellId::new(0, 0)], vec![0.25, 0.0]);
        assert_eq!(h.series[&CellId::new(1, 0)], vec![0.0, 0.25]);
    }

    #[test]
    fn egress_cases() {
        let e = egress_times(&[Some(10.0), Some(12.0), Some(15.0)], Some(20.0));
        assert_eq!(e.rset, Some(15.0));
        assert_eq!(e.verdict, SafetyVerdict::Safe);
        assert_eq!(egress_times(&[Some(10.0), Some(15.0)], Some(15.0)).verdict, SafetyVerdict::Unsafe);
        let e = egress_times(&[Some(10.0), None], Some(20.0));
        assert_eq!((e.rset, e.verdict), (None, SafetyVerdict::NotEvaluated));
        assert_eq!(egress_times(&[Some(3.0)], None).verdict, SafetyVerdict::NotEvaluated);
    }

    proptest! {
        #[test]
        fn fruin_is_monotone(a in 0.0f64..10.0, b in 0.0f64..10.0) {
            let bands = FruinBands::default();
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assert!(fruin_level(lo, &bands).0 <= fruin_level(hi, &bands).0);
        }

        #[test]
        fn imo_fraction_stable_under_refinement(peak in 0.0f64..8.0, rise in 0.1f64..1.0, t_end in 5.0f64..60.0) {
            // Monotone ramp then plateau: at most one threshold crossing.
            let density = |t: f64| peak * (t / (rise * t_end)).min(1.0);
            let sample = |dt: f64| {
                let n = (t_end / dt).round() as usize;
                let mut h = history(vec![(CellId::new(0, 0), (0..n).map(|k| density(k as f64 * dt)).collect())]);
                h.dt = dt;
                (imo_check(&h).unwrap().violating_fraction, n)
            };
            let (coarse, n) = sample(0.05);
            let (fine, _) = sample(0.025);
            prop_assert!((coarse - fine).abs() < 1.0 / n as f64);
        }
    }
}
