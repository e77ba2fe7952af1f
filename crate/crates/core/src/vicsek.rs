//! Vicsek self-propelled particle model, the reference system for
//! validating the order/disorder detector against a known phase transition.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::Vec2;
use crate::grid::CellId;
use crate::identify::{order_parameter, sample_subset, Coupling, DetectorConfig, OrderSignal, TransitionState};
use crate::rng::{self, purpose};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VicsekParams {
    pub n: usize,
    /// Edge of the periodic square box.
    pub box_size: f64,
    pub speed: f64,
    /// Interaction radius.
    pub radius: f64,
    /// Angular noise amplitude; headings receive `η·ξ`, `ξ ~ U(−½, ½)`.
    pub eta: f64,
}

impl Default for VicsekParams {
    fn default() -> Self {
        VicsekParams {
            n: 200,
            box_size: 7.0,
            speed: 0.1,
            radius: 1.0,
            eta: 0.0,
        }
    }
}

pub struct Vicsek {
    pub params: VicsekParams,
    pub positions: Vec<Vec2>,
    pub headings: Vec<f64>,
    rng: ChaCha8Rng,
}

impl Vicsek {
    /// Uniform positions and headings.
    pub fn new(params: VicsekParams, seed: u64) -> Self {
        let mut rng = rng::stream(seed, &[purpose::VICSEK]);
        let l = params.box_size;
        let positions = (0..params.n)
            .map(|_| Vec2::new(rng.random_range(0.0..l), rng.random_range(0.0..l)))
            .collect();
        let headings = (0..params.n)
            .map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
            .collect();
        Vicsek {
            params,
            positions,
            headings,
            rng,
        }
    }

    fn periodic_delta(&self, a: Vec2, b: Vec2) -> Vec2 {
        let l = self.params.box_size;
        let wrap = |d: f64| d - l * (d / l).round();
        Vec2::new(wrap(b.x - a.x), wrap(b.y - a.y))
    }

    /// One synchronous update: align with neighbours (self included), add
    /// noise, move.
    pub fn step(&mut self) {
        let p = self.params;
        let r2 = p.radius * p.radius;
        let mut next = Vec::with_capacity(p.n);
        for i in 0..p.n {
            let mut s = Vec2::ZERO;
            for j in 0..p.n {
                if self.periodic_delta(self.positions[i], self.positions[j]).length_squared() <= r2 {
                    s += Vec2::from_angle(self.headings[j]);
                }
            }
            let xi: f64 = self.rng.random_range(-0.5..0.5);
            next.push(s.y.atan2(s.x) + p.eta * xi);
        }
        self.headings = next;
        let l = p.box_size;
        for (x, &th) in self.positions.iter_mut().zip(&self.headings) {
            let moved = *x + Vec2::from_angle(th) * p.speed;
            // rem_euclid can round up to `l` for tiny negative inputs.
            let wrap = |v: f64| {
                let w = v.rem_euclid(l);
                if w >= l {
                    0.0
                } else {
                    w
                }
            };
            *x = Vec2::new(wrap(moved.x), wrap(moved.y));
        }
    }

    pub fn velocities(&self) -> impl Iterator<Item = Vec2> + '_ {
        self.headings.iter().map(move |&th| Vec2::from_angle(th) * self.params.speed)
    }

    /// Order parameter of the whole population.
    pub fn order(&self) -> f64 {
        order_parameter(self.velocities(), 0.0).phi
    }
}

/// One noise level of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub eta: f64,
    /// Time-averaged population order parameter.
    pub phi: f64,
    pub full: TransitionState,
    pub subset: TransitionState,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    /// Steps discarded before measuring.
    pub transient: usize,
    /// Steps averaged for the reference order parameter; the detector sees
    /// the first `detector.window` of them.
    pub measure: usize,
    pub subset_size: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            transient: 400,
            measure: 200,
            subset_size: 10,
        }
    }
}

/// Runs one independent simulation per noise level and records the
/// reference order parameter next to the detector verdicts of the whole
/// population and of a `subset_size` sample. The detector runs uncoupled:
/// Vicsek particles have constant speed, so there is no slowdown signal.
pub fn sweep(
    base: VicsekParams,
    etas: &[f64],
    cfg: &SweepConfig,
    detector: &DetectorConfig,
    seed: u64,
) -> Vec<SweepPoint> {
    let det = DetectorConfig {
        coupling: Coupling::Off,
        v_eps: 0.0,
        ..*detector
    };
    etas.iter()
        .enumerate()
        .map(|(k, &eta)| {
            let run_seed = rng::derive(seed, &[k as u64]);
            let mut model = Vicsek::new(VicsekParams { eta, ..base }, run_seed);
            for _ in 0..cfg.transient {
                model.step();
            }
            let ids: Vec<usize> = (0..base.n).collect();
            let subset = sample_subset(&ids, cfg.subset_size.max(1), run_seed);
            let mut full_signal = OrderSignal::new(CellId::new(0, 0), det.window);
            let mut sub_signal = OrderSignal::new(CellId::new(0, 0), det.window);
            let mut phi_sum = 0.0;
            for t in 0..cfg.measure {
                model.step();
                let phi = model.order();
                phi_sum += phi;
                if t < det.window {
                    full_signal.push(order_parameter(model.velocities(), 0.0), Vec::new());
                    let v: Vec<Vec2> = model.velocities().collect();
                    sub_signal.push(order_parameter(subset.iter().map(|&i| v[i]), 0.0), Vec::new());
                }
            }
            let full = full_signal.update(&det).map_or(TransitionState::Ordered, |v| v.state);
            let subset = sub_signal.update(&det).map_or(TransitionState::Ordered, |v| v.state);
            SweepPoint {
                eta,
                phi: phi_sum / cfg.measure.max(1) as f64,
                full,
                subset,
            }
        })
        .collect()
}

/// First noise level where `phi` falls through `level`, linearly
/// interpolated between sweep points.
pub fn order_crossing(points: &[SweepPoint], level: f64) -> Option<f64> {
    points.windows(2).find_map(|w| {
        let (a, b) = (w[0], w[1]);
        (a.phi >= level && b.phi < level).then(|| a.eta + (a.phi - level) / (a.phi - b.phi) * (b.eta - a.eta))
    })
}

/// First noise level the given verdicts flag as disordered.
pub fn flagged_transition(points: &[SweepPoint], pick: impl Fn(&SweepPoint) -> TransitionState) -> Option<f64> {
    points.iter().find(|p| pick(p) == TransitionState::Disordered).map(|p| p.eta)
}
