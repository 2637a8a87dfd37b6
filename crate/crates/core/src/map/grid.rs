use std::collections::HashMap;

use nalgebra::Vector3;

/// Exact uniform-grid spatial hash over 3D points.
///
/// Radius queries return exactly the brute-force result set.
#[derive(Clone, Debug)]
pub struct NeighborGrid {
    cell: f64,
    cells: HashMap<(i64, i64, i64), Vec<u32>>,
    points: Vec<Vector3<f64>>,
}

impl NeighborGrid {
    pub fn new(cell: f64) -> Self {
        assert!(cell > 0.0);
        Self {
            cell,
            cells: HashMap::new(),
            points: Vec::new(),
        }
    }

    pub fn from_points<'a>(cell: f64, points: impl IntoIterator<Item = &'a Vector3<f64>>) -> Self {
        let mut grid = Self::new(cell);
        for p in points {
            grid.insert(*p);
        }
        grid
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    fn key(&self, p: &Vector3<f64>) -> (i64, i64, i64) {
        (
            (p.x / self.cell).floor() as i64,
            (p.y / self.cell).floor() as i64,
            (p.z / self.cell).floor() as i64,
        )
    }

    pub fn insert(&mut self, p: Vector3<f64>) -> u32 {
        let idx = self.points.len() as u32;
        self.cells.entry(self.key(&p)).or_default().push(idx);
        self.points.push(p);
        idx
    }

    /// Indices of all points within `radius` (inclusive) of `p`.
    pub fn within_radius(&self, p: &Vector3<f64>, radius: f64) -> Vec<u32> {
        let mut out = Vec::new();
        let reach = (radius / self.cell).ceil() as i64;
        let (cx, cy, cz) = self.key(p);
        let r2 = radius * radius;
        for dz in -reach..=reach {
            for dy in -reach..=reach {
                for dx in -reach..=reach {
                    if let Some(bucket) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) {
                        for &i in bucket {
                            if (self.points[i as usize] - p).norm_squared() <= r2 {
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

    pub fn has_neighbor_within(&self, p: &Vector3<f64>, radius: f64) -> bool {
        let reach = (radius / self.cell).ceil() as i64;
        let (cx, cy, cz) = self.key(p);
        let r2 = radius * radius;
        for dz in -reach..=reach {
            for dy in -reach..=reach {
                for dx in -reach..=reach {
                    if let Some(bucket) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) {
                        for &i in bucket {
                            if (self.points[i as usize] - p).norm_squared() <= r2 {
                                return true;
                            }
                        }
                    }
                }
            }
        }
        false
    }

    /// Distance to the nearest stored point other than `exclude`, searching
    /// outward shell by shell up to `max_radius`.
    pub fn nearest_distance(
        &self,
        p: &Vector3<f64>,
        exclude: Option<u32>,
        max_radius: f64,
    ) -> Option<f64> {
        let (cx, cy, cz) = self.key(p);
        let max_shell = (max_radius / self.cell).ceil() as i64 + 1;
        let mut best: Option<f64> = None;
        for shell in 0..=max_shell {
            for dz in -shell..=shell {
                for dy in -shell..=shell {
                    for dx in -shell..=shell {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != shell {
                            continue;
                        }
                        if let Some(bucket) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) {
                            for &i in bucket {
                                if Some(i) == exclude {
                                    continue;
                                }
                                let d = (self.points[i as usize] - p).norm();
                                if best.map_or(true, |b| d < b) {
                                    best = Some(d);
                                }
                            }
                        }
                    }
                }
            }
            // points beyond shell k are at least (k)*cell away
            if let Some(b) = best {
                if b <= shell as f64 * self.cell {
                    break;
                }
            }
        }
        best.filter(|&d| d <= max_radius)
    }
}
