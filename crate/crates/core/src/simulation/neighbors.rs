//! Neighbour search: detection gate on physical distance, then the
//! avoidance gate on filtered distance.

use std::collections::HashMap;

use crate::controller::NeighborObs;
use crate::math::Vec2;

/// Above this many visible UAVs, [`NeighborMode::Auto`] switches to the grid.
pub const GRID_THRESHOLD: usize = 64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NeighborMode {
    #[default]
    Auto,
    Brute,
    Grid,
}

/// A UAV as seen by the others during one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnapEntry {
    /// Index into the world's UAV list.
    pub index: usize,
    pub p: Vec2,
    pub v: Vec2,
    pub xi: Vec2,
}

impl SnapEntry {
    pub fn obs(&self) -> NeighborObs {
        NeighborObs {
            p: self.p,
            v: self.v,
            xi: self.xi,
        }
    }
}

#[inline]
fn gated(a: &SnapEntry, b: &SnapEntry, r_d: f64, r_sa: f64) -> bool {
    a.p.distance(b.p) <= r_d && a.xi.distance(b.xi) <= r_sa
}

/// Brute-force neighbours of `snap[k]`, as snapshot positions in ascending
/// order. `r_sa = r_s + r_a`.
pub fn neighbors_brute(snap: &[SnapEntry], k: usize, r_d: f64, r_sa: f64) -> Vec<usize> {
    let me = &snap[k];
    (0..snap.len())
        .filter(|&j| j != k && gated(me, &snap[j], r_d, r_sa))
        .collect()
}

/// Observations of all neighbours of `snap[k]`.
pub fn detect_neighbors(snap: &[SnapEntry], k: usize, r_d: f64, r_sa: f64) -> Vec<NeighborObs> {
    neighbors_brute(snap, k, r_d, r_sa)
        .into_iter()
        .map(|j| snap[j].obs())
        .collect()
}

/// Uniform hash grid over physical positions with cell size `r_d`.
#[derive(Clone, Debug)]
pub struct Grid {
    cell: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl Grid {
    fn key(&self, p: Vec2) -> (i64, i64) {
        ((p.x / self.cell).floor() as i64, (p.y / self.cell).floor() as i64)
    }

    pub fn build(snap: &[SnapEntry], cell: f64) -> Self {
        let mut g = Grid {
            cell,
            cells: HashMap::new(),
        };
        for (k, e) in snap.iter().enumerate() {
            let key = g.key(e.p);
            g.cells.entry(key).or_default().push(k);
        }
        g
    }

    pub fn neighbors(&self, snap: &[SnapEntry], k: usize, r_d: f64, r_sa: f64) -> Vec<usize> {
        let me = &snap[k];
        let (cx, cy) = self.key(me.p);
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(list) = self.cells.get(&(cx + dx, cy + dy)) {
                    out.extend(
                        list.iter()
                            .copied()
                            .filter(|&j| j != k && gated(me, &snap[j], r_d, r_sa)),
                    );
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Neighbour lookup for one step.
#[derive(Clone, Debug)]
pub enum NeighborIndex {
    Brute,
    Grid(Grid),
}

impl NeighborIndex {
    pub fn build(snap: &[SnapEntry], r_d: f64, mode: NeighborMode) -> Self {
        let grid = match mode {
            NeighborMode::Brute => false,
            NeighborMode::Grid => true,
            NeighborMode::Auto => snap.len() > GRID_THRESHOLD,
        };
        if grid {
            NeighborIndex::Grid(Grid::build(snap, r_d))
        } else {
            NeighborIndex::Brute
        }
    }

    pub fn indices(&self, snap: &[SnapEntry], k: usize, r_d: f64, r_sa: f64) -> Vec<usize> {
        match self {
            NeighborIndex::Brute => neighbors_brute(snap, k, r_d, r_sa),
            NeighborIndex::Grid(g) => g.neighbors(snap, k, r_d, r_sa),
        }
    }

    pub fn observations(&self, snap: &[SnapEntry], k: usize, r_d: f64, r_sa: f64) -> Vec<NeighborObs> {
        self.indices(snap, k, r_d, r_sa)
            .into_iter()
            .map(|j| snap[j].obs())
            .collect()
    }
}
