//! Uniform bucket grid over a point set, with ring-ordered search.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::ControlFlow;

use crate::math::{floor, sqrt, Vec2};

/// Buckets of a square lattice covering the bounding box of the points.
///
/// Ring `k` around a query location consists of the buckets at Chebyshev
/// index distance `k` from the query's bucket. Every point in ring `k` lies at
/// least `ring_lower_bound(k)` away from the query, which lets nearest-type
/// searches stop early.
#[derive(Debug, Clone)]
pub struct SpatialGrid {
    origin: Vec2,
    cell: f64,
    nx: i64,
    ny: i64,
    starts: Vec<u32>,
    items: Vec<u32>,
}

impl SpatialGrid {
    /// Builds the grid with roughly `per_bucket` points per bucket.
    pub fn new(positions: &[Vec2], per_bucket: f64) -> Self {
        if positions.is_empty() {
            return SpatialGrid {
                origin: Vec2::ZERO,
                cell: 1.0,
                nx: 1,
                ny: 1,
                starts: vec![0, 0],
                items: Vec::new(),
            };
        }
        let mut lo = positions[0];
        let mut hi = positions[0];
        for p in positions {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        let w = (hi.x - lo.x).max(1e-9);
        let h = (hi.y - lo.y).max(1e-9);
        let n = positions.len() as f64;
        let mut cell = sqrt(w * h * per_bucket / n);
        if !(cell > 0.0) || !cell.is_finite() {
            cell = w.max(h);
        }
        // keep the bucket count bounded for very elongated or clustered sets
        let max_side = 4096.0;
        cell = cell.max(w / max_side).max(h / max_side);
        let nx = (floor(w / cell) as i64 + 1).max(1);
        let ny = (floor(h / cell) as i64 + 1).max(1);

        let mut counts = vec![0u32; (nx * ny) as usize + 1];
        let bucket_of = |p: &Vec2| -> usize {
            let i = (floor((p.x - lo.x) / cell) as i64).clamp(0, nx - 1);
            let j = (floor((p.y - lo.y) / cell) as i64).clamp(0, ny - 1);
            (j * nx + i) as usize
        };
        for p in positions {
            counts[bucket_of(p) + 1] += 1;
        }
        for k in 1..counts.len() {
            counts[k] += counts[k - 1];
        }
        let starts = counts.clone();
        let mut fill = counts;
        let mut items = vec![0u32; positions.len()];
        for (idx, p) in positions.iter().enumerate() {
            let b = bucket_of(p);
            items[fill[b] as usize] = idx as u32;
            fill[b] += 1;
        }
        SpatialGrid {
            origin: lo,
            cell,
            nx,
            ny,
            starts,
            items,
        }
    }

    pub fn bucket_size(&self) -> f64 {
        self.cell
    }

    #[inline]
    fn bucket(&self, i: i64, j: i64) -> &[u32] {
        let b = (j * self.nx + i) as usize;
        &self.items[self.starts[b] as usize..self.starts[b + 1] as usize]
    }

    /// Visits the buckets ring by ring outward from `center`. The callback
    /// receives a lower bound on the distance from `center` to any point of
    /// the current ring, and the point indices of one bucket. Iteration ends
    /// when the callback breaks or the grid is exhausted.
    pub fn for_each_ring<F>(&self, center: Vec2, mut f: F)
    where
        F: FnMut(f64, &[u32]) -> ControlFlow<()>,
    {
        let ci = floor((center.x - self.origin.x) / self.cell) as i64;
        let cj = floor((center.y - self.origin.y) / self.cell) as i64;
        // rings closer than the grid contain no buckets
        let mut k = 0i64
            .max(ci.saturating_neg())
            .max(ci - (self.nx - 1))
            .max(cj.saturating_neg())
            .max(cj - (self.ny - 1));
        loop {
            let lb = self.ring_lower_bound(center, ci, cj, k);
            if let ControlFlow::Break(()) = self.visit_ring(ci, cj, k, lb, &mut f) {
                return;
            }
            let covered =
                ci - k <= 0 && cj - k <= 0 && ci + k >= self.nx - 1 && cj + k >= self.ny - 1;
            if covered {
                return;
            }
            k += 1;
        }
    }

    fn visit_ring<F>(&self, ci: i64, cj: i64, k: i64, lb: f64, f: &mut F) -> ControlFlow<()>
    where
        F: FnMut(f64, &[u32]) -> ControlFlow<()>,
    {
        let in_x = |i: i64| i >= 0 && i < self.nx;
        let in_y = |j: i64| j >= 0 && j < self.ny;
        if k == 0 {
            if in_x(ci) && in_y(cj) {
                return f(lb, self.bucket(ci, cj));
            }
            return ControlFlow::Continue(());
        }
        // top and bottom rows
        for j in [cj - k, cj + k] {
            if !in_y(j) {
                continue;
            }
            let lo = (ci - k).max(0);
            let hi = (ci + k).min(self.nx - 1);
            for i in lo..=hi {
                f(lb, self.bucket(i, j))?;
            }
        }
        // left and right columns without the corners
        for i in [ci - k, ci + k] {
            if !in_x(i) {
                continue;
            }
            let lo = (cj - k + 1).max(0);
            let hi = (cj + k - 1).min(self.ny - 1);
            for j in lo..=hi {
                f(lb, self.bucket(i, j))?;
            }
        }
        ControlFlow::Continue(())
    }

    /// Distance from `center` to the outside of the block of rings `0..k`.
    fn ring_lower_bound(&self, center: Vec2, ci: i64, cj: i64, k: i64) -> f64 {
        if k == 0 {
            return 0.0;
        }
        let x_lo = self.origin.x + (ci - k + 1) as f64 * self.cell;
        let x_hi = self.origin.x + (ci + k) as f64 * self.cell;
        let y_lo = self.origin.y + (cj - k + 1) as f64 * self.cell;
        let y_hi = self.origin.y + (cj + k) as f64 * self.cell;
        let d = (center.x - x_lo)
            .min(x_hi - center.x)
            .min(center.y - y_lo)
            .min(y_hi - center.y);
        d.max(0.0)
    }

    /// Indices of points within distance `r` (inclusive) of `center`, with
    /// their distances, sorted by distance then index.
    pub fn within(&self, positions: &[Vec2], center: Vec2, r: f64) -> Vec<(f64, u32)> {
        let mut out = Vec::new();
        self.within_annulus(positions, center, -1.0, r, &mut out);
        out
    }

    /// Appends points with `r_lo < dist <= r_hi`, sorted by (distance, index).
    pub fn within_annulus(
        &self,
        positions: &[Vec2],
        center: Vec2,
        r_lo: f64,
        r_hi: f64,
        out: &mut Vec<(f64, u32)>,
    ) {
        let start = out.len();
        let r_hi2 = r_hi * r_hi;
        let lo = center - Vec2::new(r_hi, r_hi);
        let hi = center + Vec2::new(r_hi, r_hi);
        let i0 = (floor((lo.x - self.origin.x) / self.cell) as i64).max(0);
        let j0 = (floor((lo.y - self.origin.y) / self.cell) as i64).max(0);
        let i1 = (floor((hi.x - self.origin.x) / self.cell) as i64).min(self.nx - 1);
        let j1 = (floor((hi.y - self.origin.y) / self.cell) as i64).min(self.ny - 1);
        if i0 > i1 || j0 > j1 {
            return;
        }
        for j in j0..=j1 {
            for i in i0..=i1 {
                for &idx in self.bucket(i, j) {
                    let d2 = positions[idx as usize].dist2(center);
                    if d2 <= r_hi2 {
                        let d = sqrt(d2);
                        if d > r_lo {
                            out.push((d, idx));
                        }
                    }
                }
            }
        }
        out[start..].sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    }

    /// Distance from `center` to the closest point, if any.
    pub fn nearest_distance(&self, positions: &[Vec2], center: Vec2) -> Option<f64> {
        let mut best = f64::INFINITY;
        self.for_each_ring(center, |lb, ids| {
            if lb > best {
                return ControlFlow::Break(());
            }
            for &i in ids {
                best = best.min(positions[i as usize].dist(center));
            }
            ControlFlow::Continue(())
        });
        best.is_finite().then_some(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn cloud(n: usize, seed: u64) -> Vec<Vec2> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Vec2::new(rng.random_range(-5.0..5.0), rng.random_range(-3.0..7.0)))
            .collect()
    }

    #[test]
    fn within_matches_brute_force() {
        let pts = cloud(500, 1);
        let grid = SpatialGrid::new(&pts, 1.0);
        for q in [Vec2::new(0.0, 0.0), Vec2::new(-6.0, 9.0), Vec2::new(4.9, -2.9)] {
            for r in [0.3, 1.0, 2.5, 20.0] {
                let got: Vec<u32> = grid.within(&pts, q, r).into_iter().map(|x| x.1).collect();
                let mut want: Vec<(f64, u32)> = pts
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| p.dist(q) <= r)
                    .map(|(i, p)| (p.dist(q), i as u32))
                    .collect();
                want.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let want: Vec<u32> = want.into_iter().map(|x| x.1).collect();
                assert_eq!(got, want);
            }
        }
    }

    #[test]
    fn nearest_matches_brute_force() {
        let pts = cloud(300, 2);
        let grid = SpatialGrid::new(&pts, 1.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let q = Vec2::new(rng.random_range(-9.0..9.0), rng.random_range(-9.0..11.0));
            let want = pts.iter().map(|p| p.dist(q)).fold(f64::INFINITY, f64::min);
            assert_eq!(grid.nearest_distance(&pts, q), Some(want));
        }
    }

    #[test]
    fn empty_grid() {
        let grid = SpatialGrid::new(&[], 1.0);
        assert_eq!(grid.nearest_distance(&[], Vec2::ZERO), None);
        assert!(grid.within(&[], Vec2::ZERO, 10.0).is_empty());
    }
}
