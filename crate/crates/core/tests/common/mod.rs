#![allow(dead_code)]

use crushsim_core::agent::AgentState;
use crushsim_core::geometry::{Segment, Vec2};
use crushsim_core::quantify::{contact_pairs, relax, resolve_forces, ContactForceParams, ContactKind, RelaxOptions};

pub const CHAIN_RADIUS: f64 = 0.25;

pub fn disc(id: usize, x: f64) -> AgentState {
    AgentState {
        id,
        position: Vec2::new(x, 0.0),
        velocity: Vec2::ZERO,
        mass: 80.0,
        radius: CHAIN_RADIUS,
        desired_speed: 1.0,
        perceived_threat: 0.0,
        competitiveness: 0.0,
        target_exit: 0,
        evacuated_at: None,
        immobile: false,
    }
}

pub fn chain_wall() -> Segment {
    Segment::new(Vec2::new(0.0, -5.0), Vec2::new(0.0, 5.0))
}

/// Relaxes `n` touching discs against the wall at `x = 0` under an end
/// load `load` on the last disc and returns the contact normals ordered
/// from the wall outward.
pub fn relaxed_chain_normals(n: usize, load: f64, params: &ContactForceParams) -> Vec<f64> {
    let mut agents: Vec<AgentState> = (0..n).map(|i| disc(i, CHAIN_RADIUS * (1.0 + 2.0 * i as f64))).collect();
    let mut external = vec![Vec2::ZERO; n];
    external[n - 1] = Vec2::new(-load, 0.0);
    let walls = [chain_wall()];
    relax(&mut agents, &walls, &external, params, &RelaxOptions::default()).unwrap();
    let ids: Vec<usize> = (0..n).collect();
    let contacts = contact_pairs(&agents, &ids, &walls);
    let res = resolve_forces(&contacts, &agents, params).unwrap();
    let mut wall = Vec::new();
    let mut pairs = Vec::new();
    for (c, f) in contacts.iter().zip(&res.normal_magnitudes) {
        match c.kind {
            ContactKind::AgentWall => wall.push(*f),
            ContactKind::AgentAgent => pairs.push((c.a, *f)),
        }
    }
    pairs.sort_by_key(|p| p.0);
    wall.into_iter().chain(pairs.into_iter().map(|p| p.1)).collect()
}

/// Static equilibrium of the 1D chain as a linear system in the disc
/// centres, solved by Gaussian elimination. Returns the contact normals
/// ordered from the wall outward.
pub fn chain_oracle(n: usize, load: f64, k: f64) -> Vec<f64> {
    let r = CHAIN_RADIUS;
    // Row i: k·δ(i−1,i) − k·δ(i,i+1) − load·[i = n−1] = 0 with
    // δ(wall,0) = r − x0 and δ(i,i+1) = 2r − (x(i+1) − x(i)).
    let mut a = vec![vec![0.0; n + 1]; n];
    for (i, row) in a.iter_mut().enumerate() {
        if i == 0 {
            row[0] -= k;
            row[n] -= k * r;
        } else {
            row[i - 1] += k;
            row[i] -= k;
            row[n] -= k * 2.0 * r;
        }
        if i + 1 < n {
            row[i] -= k;
            row[i + 1] += k;
            row[n] += k * 2.0 * r;
        } else {
            row[n] += load;
        }
    }
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
        a.swap(col, pivot);
        for row in 0..n {
            if row != col {
                let f = a[row][col] / a[col][col];
                for c in col..=n {
                    a[row][c] -= f * a[col][c];
                }
            }
        }
    }
    let x: Vec<f64> = (0..n).map(|i| a[i][n] / a[i][i]).collect();
    let mut normals = vec![k * (r - x[0])];
    for i in 0..n - 1 {
        normals.push(k * (2.0 * r - (x[i + 1] - x[i])));
    }
    normals
}
