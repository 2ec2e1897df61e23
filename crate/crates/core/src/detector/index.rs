//! Uniform-grid spatial index with exact radius and k-NN queries.

use std::collections::{HashMap, HashSet};

use crate::quadric::Point3;

type Cell = (i64, i64, i64);

/// Spatial hash over point positions plus the set of already used bases.
///
/// Queries return exactly the brute-force neighbor sets, ordered by index
/// (radius) or by distance then index (k-NN).
#[derive(Debug, Clone)]
pub struct SceneIndex {
    positions: Vec<Point3>,
    cell: f64,
    grid: HashMap<Cell, Vec<usize>>,
    lo: Cell,
    hi: Cell,
    /// Keys of bases already handed out.
    pub seen: HashSet<u64>,
}

impl SceneIndex {
    pub fn new(positions: Vec<Point3>, cell_size: f64) -> Self {
        let cell = if cell_size > 0.0 && cell_size.is_finite() { cell_size } else { 1.0 };
        let mut grid: HashMap<Cell, Vec<usize>> = HashMap::new();
        let (mut lo, mut hi) = ((i64::MAX, i64::MAX, i64::MAX), (i64::MIN, i64::MIN, i64::MIN));
        for (i, p) in positions.iter().enumerate() {
            let k = key(p, cell);
            lo = (lo.0.min(k.0), lo.1.min(k.1), lo.2.min(k.2));
            hi = (hi.0.max(k.0), hi.1.max(k.1), hi.2.max(k.2));
            grid.entry(k).or_default().push(i);
        }
        SceneIndex {
            positions,
            cell,
            grid,
            lo,
            hi,
            seen: HashSet::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, i: usize) -> &Point3 {
        &self.positions[i]
    }

    pub fn positions(&self) -> &[Point3] {
        &self.positions
    }

    /// Indices of all points with `|p - x| <= r`, ascending.
    pub fn radius(&self, x: &Point3, r: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if r < 0.0 || self.positions.is_empty() {
            return out;
        }
        let reach = (r / self.cell).ceil().min(i32::MAX as f64) as i64;
        let (cx, cy, cz) = key(x, self.cell);
        let r2 = r * r;
        let span = |c: i64, lo: i64, hi: i64| c.saturating_sub(reach).max(lo)..=c.saturating_add(reach).min(hi);
        for gx in span(cx, self.lo.0, self.hi.0) {
            for gy in span(cy, self.lo.1, self.hi.1) {
                for gz in span(cz, self.lo.2, self.hi.2) {
                    if let Some(bucket) = self.grid.get(&(gx, gy, gz)) {
                        for &i in bucket {
                            if (self.positions[i] - x).norm_squared() <= r2 {
                                out.push(i);
                            }
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// The `k` nearest points to `x` (including `x` itself if indexed),
    /// sorted by distance with ties broken by index.
    pub fn knn(&self, x: &Point3, k: usize) -> Vec<usize> {
        let k = k.min(self.positions.len());
        if k == 0 {
            return Vec::new();
        }
        let (cx, cy, cz) = key(x, self.cell);
        let mut ring = 0i64;
        let mut found: Vec<(f64, usize)> = Vec::new();
        loop {
            // Cells on the surface of the current Chebyshev shell.
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    for dz in -ring..=ring {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                            continue;
                        }
                        if let Some(bucket) = self.grid.get(&(cx + dx, cy + dy, cz + dz)) {
                            for &i in bucket {
                                found.push(((self.positions[i] - x).norm_squared(), i));
                            }
                        }
                    }
                }
            }
            // Everything within ring * cell of x has been visited.
            let covered = ring as f64 * self.cell;
            if found.len() >= k {
                found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                if found[k - 1].0.sqrt() <= covered || found.len() == self.positions.len() {
                    return found[..k].iter().map(|&(_, i)| i).collect();
                }
            }
            ring += 1;
        }
    }
}

fn key(p: &Point3, cell: f64) -> Cell {
    (
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    )
}
