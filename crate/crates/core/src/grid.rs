use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::agent::AgentState;
use crate::geometry::Vec2;

/// Integer cell coordinates `(floor(x / size), floor(y / size))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellId {
    pub i: i32,
    pub j: i32,
}

impl CellId {
    pub const fn new(i: i32, j: i32) -> Self {
        CellId { i, j }
    }

    pub fn of(p: Vec2, cell_size: f64) -> Self {
        CellId {
            i: (p.x / cell_size).floor() as i32,
            j: (p.y / cell_size).floor() as i32,
        }
    }

    /// The 3×3 block centred on this cell, in row-major order.
    pub fn block(self) -> impl Iterator<Item = CellId> {
        (-1..=1).flat_map(move |dj| (-1..=1).map(move |di| CellId::new(self.i + di, self.j + dj)))
    }

    pub fn is_adjacent_or_same(self, o: CellId) -> bool {
        (self.i - o.i).abs() <= 1 && (self.j - o.j).abs() <= 1
    }
}

/// Dynamic spatial partition of active agents into locales.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LocaleGrid {
    pub cell_size: f64,
    /// Non-empty cells only; member ids ascending.
    pub cells: BTreeMap<CellId, Vec<usize>>,
    pub generation: u64,
}

impl LocaleGrid {
    pub fn cell_of(&self, p: Vec2) -> CellId {
        CellId::of(p, self.cell_size)
    }

    pub fn members(&self, cell: CellId) -> &[usize] {
        self.cells.get(&cell).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Agents in the eight cells around `cell` (not the cell itself),
    /// ascending by id.
    pub fn halo(&self, cell: CellId) -> Vec<usize> {
        let mut ids: Vec<usize> = cell
            .block()
            .filter(|&c| c != cell)
            .flat_map(|c| self.members(c).iter().copied())
            .collect();
        ids.sort_unstable();
        ids
    }

    pub fn population(&self) -> usize {
        self.cells.values().map(Vec::len).sum()
    }

    /// Agent id → cell lookup for the current partition.
    pub fn assignment(&self, n_agents: usize) -> Vec<Option<CellId>> {
        let mut out = vec![None; n_agents];
        for (&c, ids) in &self.cells {
            for &id in ids {
                out[id] = Some(c);
            }
        }
        out
    }

    /// Every active agent is in exactly one cell, and in the right one.
    pub fn covers(&self, agents: &[AgentState]) -> bool {
        let assignment = self.assignment(agents.len());
        agents.iter().all(|a| match (a.is_active(), assignment[a.id]) {
            (true, Some(c)) => c == self.cell_of(a.position),
            (false, None) => true,
            _ => false,
        }) && self.population() == agents.iter().filter(|a| a.is_active()).count()
    }
}

/// Assigns each active agent to the cell containing its position.
/// Points on a boundary go to the higher cell (floor convention).
pub fn partition_locales(agents: &[AgentState], cell_size: f64, generation: u64) -> LocaleGrid {
    assert!(cell_size > 0.0, "cell_size must be positive");
    let mut cells: BTreeMap<CellId, Vec<usize>> = BTreeMap::new();
    for a in agents.iter().filter(|a| a.is_active()) {
        cells.entry(CellId::of(a.position, cell_size)).or_default().push(a.id);
    }
    LocaleGrid {
        cell_size,
        cells,
        generation,
    }
}

/// Uniform hash grid for radius queries; buckets keep insertion order so
/// queries are deterministic.
#[derive(Debug, Clone)]
pub struct SpatialHash {
    cell: f64,
    buckets: HashMap<CellId, Vec<usize>>,
}

impl SpatialHash {
    pub fn build(agents: &[AgentState], cell: f64) -> Self {
        let mut buckets: HashMap<CellId, Vec<usize>> = HashMap::new();
        for a in agents.iter().filter(|a| a.is_active()) {
            buckets.entry(CellId::of(a.position, cell)).or_default().push(a.id);
        }
        SpatialHash { cell, buckets }
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    /// Ids in the 3×3 block of buckets around `p`, ascending.
    pub fn candidates(&self, p: Vec2) -> Vec<usize> {
        let mut out: Vec<usize> = CellId::of(p, self.cell)
            .block()
            .filter_map(|c| self.buckets.get(&c))
            .flatten()
            .copied()
            .collect();
        out.sort_unstable();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agent_at(id: usize, x: f64, y: f64) -> AgentState {
        AgentState {
            id,
            position: Vec2::new(x, y),
            velocity: Vec2::ZERO,
            mass: 80.0,
            radius: 0.25,
            desired_speed: 1.34,
            perceived_threat: 0.0,
            competitiveness: 0.0,
            target_exit: 0,
            evacuated_at: None,
            immobile: false,
        }
    }

    #[test]
    fn single_agent_cell() {
        let g = partition_locales(&[agent_at(0, 0.5, 0.5)], 1.0, 0);
        assert_eq!(g.members(CellId::new(0, 0)), &[0]);
        assert_eq!(g.cells.len(), 1);
    }

    #[test]
    fn boundary_goes_to_higher_cell() {
        let g = partition_locales(&[agent_at(0, 1.0, 0.3)], 1.0, 0);
        assert_eq!(g.members(CellId::new(1, 0)), &[0]);
    }

    #[test]
    fn evacuated_agents_are_excluded() {
        let mut a = agent_at(0, 0.5, 0.5);
        a.evacuated_at = Some(1.0);
        let agents = vec![a, agent_at(1, 3.5, 0.5)];
        let g = partition_locales(&agents, 1.0, 0);
        assert_eq!(g.population(), 1);
        assert!(g.covers(&agents));
    }

    #[test]
    fn halo_excludes_centre() {
        let agents = vec![agent_at(0, 0.5, 0.5), agent_at(1, 1.5, 1.5), agent_at(2, 2.5, 2.5)];
        let g = partition_locales(&agents, 1.0, 0);
        assert_eq!(g.halo(CellId::new(1, 1)), vec![0, 2]);
        assert_eq!(g.halo(CellId::new(0, 0)), vec![1]);
    }

    #[test]
    fn hash_candidates_sorted() {
        let agents = vec![agent_at(0, 0.1, 0.1), agent_at(1, 0.9, 0.1), agent_at(2, 5.0, 5.0)];
        let h = SpatialHash::build(&agents, 1.0);
        assert_eq!(h.candidates(Vec2::new(0.5, 0.5)), vec![0, 1]);
    }
}
