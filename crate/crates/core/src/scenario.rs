//! Static world description: walls, obstacles, exits and the population to
//! seed. Scenarios are read from a versioned TOML document (`schema = 1`).

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::ScenarioError;
use crate::geometry::{Polygon, Rect, Segment, Vec2};

pub const SCHEMA_VERSION: u32 = 1;

/// Occupancy-grid resolution used by the reachability check, in metres.
pub const FLOOD_FILL_RESOLUTION: f64 = 0.1;

const MIN_SEGMENT_LENGTH: f64 = 1e-9;

type Point = [f64; 2];

fn pt(p: Point) -> Vec2 {
    Vec2::new(p[0], p[1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub schema: u32,
    #[serde(default)]
    pub name: String,
    /// Available safe egress time, seconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aset: Option<f64>,
    pub bounds: BoundsDoc,
    #[serde(default)]
    pub walls: Vec<SegmentDoc>,
    #[serde(default)]
    pub obstacles: Vec<ObstacleDoc>,
    #[serde(default)]
    pub exits: Vec<ExitDoc>,
    #[serde(default)]
    pub population: PopulationDoc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsDoc {
    pub min: Point,
    pub max: Point,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentDoc {
    pub a: Point,
    pub b: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleDoc {
    pub vertices: Vec<Point>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExitDoc {
    pub a: Point,
    pub b: Point,
    #[serde(default = "one")]
    pub familiarity: f64,
    /// Usable width in metres; defaults to the segment length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlacementPolicy {
    #[default]
    UniformRandomNonoverlapping,
    Grid,
    ExplicitList,
}

/// Closed interval `[lo, hi]` a per-agent attribute is drawn from.
pub type Range = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationDoc {
    #[serde(default)]
    pub count: usize,
    #[serde(default)]
    pub placement: PlacementPolicy,
    /// Spawn region; defaults to the scenario bounds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<BoundsDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub positions: Vec<Point>,
    #[serde(default = "default_mass")]
    pub mass: Range,
    #[serde(default = "default_radius")]
    pub radius: Range,
    #[serde(default = "default_desired_speed")]
    pub desired_speed: Range,
    #[serde(default = "default_unit_low")]
    pub threat: Range,
    #[serde(default = "default_unit_low")]
    pub competitiveness: Range,
}

fn default_mass() -> Range {
    [80.0, 80.0]
}
fn default_radius() -> Range {
    [0.25, 0.25]
}
fn default_desired_speed() -> Range {
    [1.34, 1.34]
}
fn default_unit_low() -> Range {
    [0.0, 0.0]
}

impl Default for PopulationDoc {
    fn default() -> Self {
        PopulationDoc {
            count: 0,
            placement: PlacementPolicy::default(),
            region: None,
            positions: Vec::new(),
            mass: default_mass(),
            radius: default_radius(),
            desired_speed: default_desired_speed(),
            threat: default_unit_low(),
            competitiveness: default_unit_low(),
        }
    }
}

impl ScenarioDoc {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        // Check the schema before strict field validation so a future
        // version reports as such rather than as an unknown field.
        let raw: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| ScenarioError::Parse(e.to_string()))?;
        match raw.get("schema").and_then(|v| v.as_integer()) {
            Some(v) if v == SCHEMA_VERSION as i64 => {}
            Some(v) => return Err(ScenarioError::Schema(v.max(0) as u32)),
            None => return Err(ScenarioError::Parse("missing `schema` field".into())),
        }
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario document serialises")
    }

    /// Rectangular room `[0,w]×[0,h]` whose perimeter walls leave gaps for
    /// the given exits. Exits must lie on the perimeter.
    pub fn room(name: &str, width: f64, height: f64, exits: Vec<ExitDoc>) -> Self {
        let corners = [
            Vec2::new(0.0, 0.0),
            Vec2::new(width, 0.0),
            Vec2::new(width, height),
            Vec2::new(0.0, height),
        ];
        let mut walls = Vec::new();
        for k in 0..4 {
            let side = Segment::new(corners[k], corners[(k + 1) % 4]);
            let len = side.length();
            let dir = (side.b - side.a) / len;
            // Parameter intervals along this side covered by exits.
            let mut gaps: Vec<(f64, f64)> = exits
                .iter()
                .filter_map(|e| {
                    let (ea, eb) = (pt(e.a), pt(e.b));
                    let on = |p: Vec2| side.distance_to(p) < 1e-9;
                    if on(ea) && on(eb) {
                        let ta = (ea - side.a).dot(dir);
                        let tb = (eb - side.a).dot(dir);
                        Some((ta.min(tb), ta.max(tb)))
                    } else {
                        None
                    }
                })
                .collect();
            gaps.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut t = 0.0;
            for (g0, g1) in gaps {
                if g0 - t > MIN_SEGMENT_LENGTH {
                    walls.push(SegmentDoc::from(Segment::new(side.a + dir * t, side.a + dir * g0)));
                }
                t = t.max(g1);
            }
            if len - t > MIN_SEGMENT_LENGTH {
                walls.push(SegmentDoc::from(Segment::new(side.a + dir * t, side.b)));
            }
        }
        ScenarioDoc {
            schema: SCHEMA_VERSION,
            name: name.to_string(),
            aset: None,
            bounds: BoundsDoc {
                min: [0.0, 0.0],
                max: [width, height],
            },
            walls,
            obstacles: Vec::new(),
            exits,
            population: PopulationDoc::default(),
        }
    }
}

impl From<Segment> for SegmentDoc {
    fn from(s: Segment) -> Self {
        SegmentDoc {
            a: [s.a.x, s.a.y],
            b: [s.b.x, s.b.y],
        }
    }
}

impl ExitDoc {
    pub fn new(a: Point, b: Point, familiarity: f64) -> Self {
        ExitDoc {
            a,
            b,
            familiarity,
            width: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exit {
    pub segment: Segment,
    pub familiarity: f64,
    pub width: f64,
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub name: String,
    pub walls: Vec<Segment>,
    pub obstacles: Vec<Polygon>,
    pub exits: Vec<Exit>,
    pub bounds: Rect,
    pub aset: Option<f64>,
    pub population: PopulationDoc,
    /// Walls plus obstacle edges; everything agents are repelled by.
    wall_set: Vec<Segment>,
}

impl Scenario {
    pub fn wall_set(&self) -> &[Segment] {
        &self.wall_set
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        build_scenario(&ScenarioDoc::from_toml_str(text)?)
    }

    /// True when `p` is inside an obstacle.
    pub fn in_obstacle(&self, p: Vec2) -> bool {
        self.obstacles.iter().any(|o| o.contains(p))
    }
}

/// Validates a scenario document.
pub fn build_scenario(doc: &ScenarioDoc) -> Result<Scenario, ScenarioError> {
    if doc.schema != SCHEMA_VERSION {
        return Err(ScenarioError::Schema(doc.schema));
    }
    let geo = |msg: String| ScenarioError::Geometry(msg);

    let bounds = Rect::new(pt(doc.bounds.min), pt(doc.bounds.max));
    if !(bounds.width() > 0.0 && bounds.height() > 0.0) || !bounds.min.is_finite() || !bounds.max.is_finite() {
        return Err(geo("bounds must be a non-empty finite rectangle".into()));
    }

    let mut walls = Vec::with_capacity(doc.walls.len());
    for (i, w) in doc.walls.iter().enumerate() {
        let s = Segment::new(pt(w.a), pt(w.b));
        if !s.a.is_finite() || !s.b.is_finite() || s.length() < MIN_SEGMENT_LENGTH {
            return Err(geo(format!("wall {i} is a degenerate segment")));
        }
        walls.push(s);
    }

    let mut obstacles = Vec::with_capacity(doc.obstacles.len());
    for (i, o) in doc.obstacles.iter().enumerate() {
        let poly = Polygon {
            vertices: o.vertices.iter().copied().map(pt).collect(),
        };
        if !poly.is_convex() {
            return Err(geo(format!("obstacle {i} is not a convex polygon")));
        }
        if poly.edges().any(|e| e.length() < MIN_SEGMENT_LENGTH) {
            return Err(geo(format!("obstacle {i} has a degenerate edge")));
        }
        obstacles.push(poly);
    }

    if doc.exits.is_empty() {
        return Err(geo("scenario has no exit".into()));
    }
    let mut exits = Vec::with_capacity(doc.exits.len());
    for (i, e) in doc.exits.iter().enumerate() {
        let s = Segment::new(pt(e.a), pt(e.b));
        if !s.a.is_finite() || !s.b.is_finite() || s.length() < MIN_SEGMENT_LENGTH {
            return Err(geo(format!("exit {i} is a degenerate segment")));
        }
        if !bounds.contains(s.a, 1e-9) || !bounds.contains(s.b, 1e-9) {
            return Err(geo(format!("exit {i} lies outside the bounds")));
        }
        if !(e.familiarity >= 0.0) || !e.familiarity.is_finite() {
            return Err(geo(format!("exit {i} has a negative familiarity weight")));
        }
        let width = e.width.unwrap_or_else(|| s.length());
        if !(width > 0.0) {
            return Err(geo(format!("exit {i} has non-positive width")));
        }
        exits.push(Exit {
            segment: s,
            familiarity: e.familiarity,
            width,
        });
    }
    if exits.iter().all(|e| e.familiarity == 0.0) {
        return Err(geo("all exit familiarity weights are zero".into()));
    }

    let mut wall_set = walls.clone();
    for o in &obstacles {
        wall_set.extend(o.edges());
    }

    let scenario = Scenario {
        name: doc.name.clone(),
        walls,
        obstacles,
        exits,
        bounds,
        aset: doc.aset,
        population: doc.population.clone(),
        wall_set,
    };

    let occupancy = OccupancyGrid::rasterize(&scenario, FLOOD_FILL_RESOLUTION);
    for (i, exit) in scenario.exits.iter().enumerate() {
        if !occupancy.exit_reachable(&exit.segment) {
            return Err(geo(format!(
                "exit {i} is enclosed by walls or obstacles and cannot be reached"
            )));
        }
    }
    Ok(scenario)
}

/// Free/blocked raster of the walkable bounds plus its largest connected
/// free region.
pub struct OccupancyGrid {
    origin: Vec2,
    res: f64,
    nx: usize,
    ny: usize,
    blocked: Vec<bool>,
    main_region: Vec<bool>,
}

impl OccupancyGrid {
    pub fn rasterize(scenario: &Scenario, res: f64) -> Self {
        let b = scenario.bounds;
        let nx = (b.width() / res).ceil().max(1.0) as usize;
        let ny = (b.height() / res).ceil().max(1.0) as usize;
        let half = res * 0.5 + 1e-9;
        let mut blocked = vec![false; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let c = Vec2::new(
                    b.min.x + (i as f64 + 0.5) * res,
                    b.min.y + (j as f64 + 0.5) * res,
                );
                blocked[j * nx + i] = scenario.in_obstacle(c)
                    || scenario.wall_set.iter().any(|w| w.distance_to(c) <= half);
            }
        }

        // Label 4-connected free components, keep the largest.
        let mut label = vec![usize::MAX; nx * ny];
        let mut sizes = Vec::new();
        let mut queue = VecDeque::new();
        for start in 0..nx * ny {
            if blocked[start] || label[start] != usize::MAX {
                continue;
            }
            let id = sizes.len();
            let mut size = 0usize;
            label[start] = id;
            queue.push_back(start);
            while let Some(k) = queue.pop_front() {
                size += 1;
                let (i, j) = (k % nx, k / nx);
                let mut visit = |n: usize| {
                    if !blocked[n] && label[n] == usize::MAX {
                        label[n] = id;
                        queue.push_back(n);
                    }
                };
                if i > 0 {
                    visit(k - 1);
                }
                if i + 1 < nx {
                    visit(k + 1);
                }
                if j > 0 {
                    visit(k - nx);
                }
                if j + 1 < ny {
                    visit(k + nx);
                }
            }
            sizes.push(size);
        }
        let main = sizes
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(id, _)| id);
        let main_region = label.iter().map(|&l| Some(l) == main).collect();
        OccupancyGrid {
            origin: b.min,
            res,
            nx,
            ny,
            blocked,
            main_region,
        }
    }

    pub fn is_blocked(&self, i: usize, j: usize) -> bool {
        self.blocked[j * self.nx + i]
    }

    /// True when some free cell of the main region lies within 1.5 cells of
    /// the exit segment.
    pub fn exit_reachable(&self, exit: &Segment) -> bool {
        let reach = 1.5 * self.res;
        let steps = (exit.length() / (self.res * 0.5)).ceil().max(1.0) as usize;
        for s in 0..=steps {
            let p = exit.a + (exit.b - exit.a) * (s as f64 / steps as f64);
            let ci = ((p.x - self.origin.x) / self.res).floor() as i64;
            let cj = ((p.y - self.origin.y) / self.res).floor() as i64;
            for dj in -2..=2i64 {
                for di in -2..=2i64 {
                    let (i, j) = (ci + di, cj + dj);
                    if i < 0 || j < 0 || i >= self.nx as i64 || j >= self.ny as i64 {
                        continue;
                    }
                    let k = j as usize * self.nx + i as usize;
                    let c = Vec2::new(
                        self.origin.x + (i as f64 + 0.5) * self.res,
                        self.origin.y + (j as f64 + 0.5) * self.res,
                    );
                    if self.main_region[k] && exit.distance_to(c) <= reach {
                        return true;
                    }
                }
            }
        }
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn room_doc() -> ScenarioDoc {
        ScenarioDoc::room(
            "room",
            10.0,
            10.0,
            vec![ExitDoc::new([10.0, 4.5], [10.0, 5.5], 1.0)],
        )
    }

    #[test]
    fn room_helper_splits_exit_wall() {
        let s = build_scenario(&room_doc()).unwrap();
        assert_eq!(s.exits.len(), 1);
        assert_eq!(s.walls.len(), 5);
        assert_eq!(s.exits[0].width, 1.0);
    }

    #[test]
    fn explicit_four_wall_room_from_toml() {
        let text = r#"
schema = 1
name = "minimal"
[bounds]
min = [0.0, 0.0]
max = [10.0, 10.0]
[[walls]]
a = [0.0, 0.0]
b = [10.0, 0.0]
[[walls]]
a = [10.0, 0.0]
b = [10.0, 9.0]
[[walls]]
a = [10.0, 10.0]
b = [0.0, 10.0]
[[walls]]
a = [0.0, 10.0]
b = [0.0, 0.0]
[[exits]]
a = [10.0, 9.0]
b = [10.0, 10.0]
"#;
        let s = Scenario::from_toml_str(text).unwrap();
        assert_eq!(s.exits.len(), 1);
        assert_eq!(s.walls.len(), 4);
        assert_eq!(s.exits[0].familiarity, 1.0);
    }

    #[test]
    fn zero_exits_is_geometry_error() {
        let mut doc = room_doc();
        doc.exits.clear();
        assert!(matches!(build_scenario(&doc), Err(ScenarioError::Geometry(_))));
    }

    #[test]
    fn zero_familiarity_everywhere_rejected() {
        let mut doc = room_doc();
        doc.exits[0].familiarity = 0.0;
        assert!(matches!(build_scenario(&doc), Err(ScenarioError::Geometry(_))));
    }

    #[test]
    fn degenerate_wall_rejected() {
        let mut doc = room_doc();
        doc.walls.push(SegmentDoc {
            a: [3.0, 3.0],
            b: [3.0, 3.0],
        });
        assert!(matches!(build_scenario(&doc), Err(ScenarioError::Geometry(_))));
    }

    #[test]
    fn enclosed_exit_rejected() {
        let mut doc = room_doc();
        // Box the exit in with a square obstacle that straddles it.
        doc.walls.push(SegmentDoc { a: [9.0, 4.0], b: [9.0, 6.0] });
        doc.walls.push(SegmentDoc { a: [9.0, 4.0], b: [10.0, 4.0] });
        doc.walls.push(SegmentDoc { a: [9.0, 6.0], b: [10.0, 6.0] });
        assert!(matches!(build_scenario(&doc), Err(ScenarioError::Geometry(_))));
    }

    #[test]
    fn malformed_document_is_parse_error() {
        assert!(matches!(
            ScenarioDoc::from_toml_str("schema = 1\nbounds = 3"),
            Err(ScenarioError::Parse(_))
        ));
        assert!(matches!(
            ScenarioDoc::from_toml_str("schema = 2\n"),
            Err(ScenarioError::Schema(2))
        ));
    }

    #[test]
    fn toml_round_trip() {
        let doc = room_doc();
        let back = ScenarioDoc::from_toml_str(&doc.to_toml_string()).unwrap();
        assert_eq!(doc, back);
    }
}
