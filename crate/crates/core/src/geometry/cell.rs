use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use super::polygon::ConvexPolygon;
use super::raster::{GridSpec, RasterCell};
use super::{local_halfplane, Kernel, WeightModel};
use crate::error::{Error, Result};
use crate::index::SpatialGrid;
use crate::math::{sqrt, Vec2};
use crate::pointproc::{AxisBox, MarkedConfiguration, MarkedPoint};

/// Axis-aligned extent of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lower: Vec2,
    pub upper: Vec2,
}

impl BoundingBox {
    pub fn extent(&self) -> Vec2 {
        self.upper - self.lower
    }

    pub fn inside(&self, window: &AxisBox) -> bool {
        window.contains(self.lower) && window.contains(self.upper)
    }
}

/// Geometry of a cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellShape {
    Polygon(ConvexPolygon),
    Raster(RasterCell),
    /// No location is closer (in the weight) to this generator than to all others.
    Empty,
    /// The cell reaches the clip boundary, so its extent is not certified.
    Unbounded,
}

/// The cell of `generator`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub generator: MarkedPoint,
    pub shape: CellShape,
}

impl Cell {
    pub fn is_bounded(&self) -> bool {
        match &self.shape {
            CellShape::Polygon(_) => true,
            CellShape::Raster(r) => !r.clipped,
            CellShape::Empty => true,
            CellShape::Unbounded => false,
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self.shape, CellShape::Empty)
    }

    /// Polygon vertices' extent, or the extent of the pixel centres.
    pub fn bounding_box(&self) -> Option<BoundingBox> {
        match &self.shape {
            CellShape::Polygon(p) => p
                .bounding_box()
                .map(|(lower, upper)| BoundingBox { lower, upper }),
            CellShape::Raster(r) => r.bounding_box(),
            _ => None,
        }
    }

    /// Containment in a window. For convex polygons vertex containment is
    /// exact; raster cells are represented by their pixel centres.
    pub fn contained_in(&self, window: &AxisBox) -> bool {
        match &self.shape {
            CellShape::Polygon(p) => p.vertices().iter().all(|v| window.contains(*v)),
            CellShape::Raster(r) => !r.clipped && r.bounding_box().is_some_and(|b| b.inside(window)),
            CellShape::Empty => true,
            CellShape::Unbounded => false,
        }
    }

    /// Largest distance from the generator to a point of the cell.
    pub fn reach_from_generator(&self) -> Option<f64> {
        let c = self.generator.position;
        match &self.shape {
            CellShape::Polygon(p) => Some(p.max_distance_from(c)),
            CellShape::Raster(r) => Some(r.max_distance_from(c)),
            CellShape::Empty => Some(0.0),
            CellShape::Unbounded => None,
        }
    }

    /// Radius of a ball about the generator outside of which no generator
    /// with mark at most `mu` can change this cell. `None` when unbounded.
    pub fn certifying_radius(&self, model: WeightModel, mu: f64) -> Option<f64> {
        if !self.is_bounded() {
            return None;
        }
        let r = self.reach_from_generator()?;
        Some(cut_reach(model, r, self.generator.mark, mu.max(self.generator.mark)))
    }

    /// Same variant and geometry: polygons vertex-wise within `tol` (up to a
    /// cyclic shift), rasters pixel-identical.
    pub fn same_geometry(&self, other: &Cell, tol: f64) -> bool {
        match (&self.shape, &other.shape) {
            (CellShape::Polygon(a), CellShape::Polygon(b)) => {
                let (va, vb) = (a.vertices(), b.vertices());
                if va.len() != vb.len() {
                    return false;
                }
                let n = va.len();
                (0..n).any(|shift| (0..n).all(|i| va[i].dist(vb[(i + shift) % n]) <= tol))
            }
            (CellShape::Raster(a), CellShape::Raster(b)) => a.same_pixels(b),
            (CellShape::Empty, CellShape::Empty) => true,
            (CellShape::Unbounded, CellShape::Unbounded) => true,
            _ => false,
        }
    }
}

/// A configuration with a spatial index, shared by every cell query on it.
#[derive(Debug, Clone)]
pub struct Neighborhood<'a> {
    config: &'a MarkedConfiguration,
    positions: Vec<Vec2>,
    index: SpatialGrid,
    max_mark: f64,
}

impl<'a> Neighborhood<'a> {
    pub fn new(config: &'a MarkedConfiguration) -> Self {
        let positions: Vec<Vec2> = config.points().iter().map(|p| p.position).collect();
        let index = SpatialGrid::new(&positions, 1.0);
        Neighborhood {
            config,
            positions,
            index,
            max_mark: config.max_mark(),
        }
    }

    pub fn config(&self) -> &'a MarkedConfiguration {
        self.config
    }

    pub fn index(&self) -> &SpatialGrid {
        &self.index
    }

    pub fn positions(&self) -> &[Vec2] {
        &self.positions
    }

    pub fn max_mark(&self) -> f64 {
        self.max_mark
    }

    pub(crate) fn point(&self, idx: u32) -> &MarkedPoint {
        &self.config.points()[idx as usize]
    }

    /// Distance from `y` to the nearest generator.
    pub fn nearest_distance(&self, y: Vec2) -> Option<f64> {
        self.index.nearest_distance(&self.positions, y)
    }

    /// Neighbours of `x` within `r` sorted by distance, excluding `x` itself.
    pub(crate) fn neighbours(
        &self,
        x: &MarkedPoint,
        r: f64,
    ) -> Result<Vec<(f64, MarkedPoint)>> {
        let mut buf = Vec::new();
        self.index
            .within_annulus(&self.positions, x.position, -1.0, r, &mut buf);
        let mut out = Vec::with_capacity(buf.len());
        for (d, idx) in buf {
            let z = *self.point(idx);
            if d == 0.0 {
                if z == *x {
                    continue;
                }
                return Err(coincident(x));
            }
            out.push((d, z));
        }
        Ok(out)
    }

    /// Exact cell by clipping `clip` with the half-planes of all other
    /// generators, nearest first, until no farther generator can cut it.
    pub fn cell_exact(&self, x: &MarkedPoint, model: WeightModel, clip: &AxisBox) -> Result<Cell> {
        if !model.has_linear_bisectors() {
            return Err(Error::invalid(
                "exact cells need linear bisectors (voronoi or laguerre)",
            ));
        }
        if !clip.contains_box(self.config.carrier()) {
            return Err(Error::invalid("clip box must contain the carrier"));
        }
        let origin = x.position;
        let mu = self.max_mark.max(x.mark);
        let mut poly = ConvexPolygon::from_box(&clip.translated(-origin));
        let mut scratch = Vec::with_capacity(16);
        let mut buf: Vec<(f64, u32)> = Vec::new();
        let r_init = 2.0 * self.index.bucket_size();
        let farthest = farthest_point_distance(&self.positions, origin);
        let mut r_done = -1.0;
        loop {
            let r_vert = poly.max_distance_from(Vec2::ZERO);
            let need = cut_reach(model, r_vert, x.mark, mu) * (1.0 + 1e-9) + 1e-12;
            if need <= r_done {
                break;
            }
            let r_next = need.min((2.0 * r_done).max(r_init));
            buf.clear();
            self.index
                .within_annulus(&self.positions, origin, r_done, r_next, &mut buf);
            for &(d, idx) in &buf {
                let z = self.point(idx);
                if d == 0.0 {
                    if z == x {
                        continue;
                    }
                    return Err(coincident(x));
                }
                let hs = local_halfplane(z.position - origin, x.mark, z.mark, model);
                poly.clip(&hs, &mut scratch);
                if poly.is_empty() {
                    return Ok(Cell {
                        generator: *x,
                        shape: CellShape::Empty,
                    });
                }
            }
            r_done = r_next;
            if r_done >= farthest {
                break;
            }
        }
        poly.simplify();
        if poly.is_empty() {
            return Ok(Cell {
                generator: *x,
                shape: CellShape::Empty,
            });
        }
        let poly = poly.translated(origin);
        let eps = 1e-9 * (1.0 + clip.lower.x.abs().max(clip.upper.x.abs()).max(clip.lower.y.abs()).max(clip.upper.y.abs()));
        let touches = poly.vertices().iter().any(|v| {
            v.x <= clip.lower.x + eps
                || v.x >= clip.upper.x - eps
                || v.y <= clip.lower.y + eps
                || v.y >= clip.upper.y - eps
        });
        let shape = if touches {
            CellShape::Unbounded
        } else {
            CellShape::Polygon(poly)
        };
        Ok(Cell {
            generator: *x,
            shape,
        })
    }

    /// Cell of `x` with the chosen kernel, clipped to the carrier.
    pub fn cell(&self, x: &MarkedPoint, model: WeightModel, kernel: &KernelGrid) -> Result<Cell> {
        let clip = *self.config.carrier();
        match kernel {
            KernelGrid::Exact => self.cell_exact(x, model, &clip),
            KernelGrid::Raster(grid) => self.cell_raster(x, model, grid, &clip),
        }
    }

    /// Whether `cell`, computed from the carrier, equals the cell of its
    /// generator under any extension of the configuration beyond the carrier
    /// with marks at most `mu`: either the cone bound certifies it, or the
    /// cell is too small to be cut by anything outside the carrier. Empty
    /// cells stay empty and are always certified.
    pub fn is_certified(&self, cell: &Cell, model: WeightModel, mu: f64) -> bool {
        if cell.is_empty() {
            return true;
        }
        if !cell.is_bounded() {
            return false;
        }
        let carrier = self.config.carrier();
        let x = &cell.generator;
        if cell
            .certifying_radius(model, mu)
            .is_some_and(|r| carrier.contains_ball(x.position, r))
        {
            return true;
        }
        match self.diameter_bound(x, mu) {
            Some(d) => carrier.contains_ball(x.position, 2.0 * d + mu),
            None => false,
        }
    }

    /// Owner index of every pixel centre in `[i0, i1] x [j0, j1]`, row-major
    /// from `j0`. Ties go to the generator with the smaller (position, mark).
    pub fn label_pixels(
        &self,
        model: WeightModel,
        grid: &GridSpec,
        (i0, i1): (i64, i64),
        (j0, j1): (i64, i64),
    ) -> Vec<u32> {
        let mu = self.max_mark;
        let pts = self.config.points();
        let mut labels = Vec::with_capacity(((i1 - i0 + 1) * (j1 - j0 + 1)).max(0) as usize);
        for j in j0..=j1 {
            for i in i0..=i1 {
                let y = grid.center(i, j);
                let mut best_r = f64::INFINITY;
                let mut best = u32::MAX;
                self.index.for_each_ring(y, |lb, ids| {
                    if model.rank_lower_bound(lb, mu) > best_r {
                        return ControlFlow::Break(());
                    }
                    for &id in ids {
                        let z = &pts[id as usize];
                        let r = model.rank(y.dist2(z.position), z.mark);
                        if r < best_r
                            || (r == best_r
                                && best != u32::MAX
                                && z.key_cmp(&pts[best as usize]) == Ordering::Less)
                        {
                            best_r = r;
                            best = id;
                        }
                    }
                    ControlFlow::Continue(())
                });
                labels.push(best);
            }
        }
        labels
    }
}

/// A kernel with its grid resolved (anchor included), as used per cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelGrid {
    Exact,
    Raster(GridSpec),
}

impl KernelGrid {
    /// Raster grids are anchored at `anchor`.
    pub fn from_kernel(kernel: &Kernel, anchor: Vec2) -> Self {
        match kernel {
            Kernel::Exact => KernelGrid::Exact,
            Kernel::Raster { grid_h } => KernelGrid::Raster(GridSpec {
                h: *grid_h,
                anchor,
            }),
        }
    }
}

/// Distance beyond which no generator with mark at most `mu` can cut a cell
/// lying within distance `r` of its generator.
pub(crate) fn cut_reach(model: WeightModel, r: f64, own_mark: f64, mu: f64) -> f64 {
    match model {
        WeightModel::Voronoi => 2.0 * r,
        WeightModel::Laguerre => r + sqrt((r * r - own_mark * own_mark + mu * mu).max(0.0)),
        WeightModel::JohnsonMehl => 2.0 * r + mu,
    }
}

fn farthest_point_distance(positions: &[Vec2], c: Vec2) -> f64 {
    sqrt(positions.iter().map(|p| p.dist2(c)).fold(0.0, f64::max))
}

fn coincident(x: &MarkedPoint) -> Error {
    Error::DegenerateInput(format!(
        "another generator shares position ({}, {})",
        x.position.x, x.position.y
    ))
}

/// Exact cell of `x` among `config` (plus `x` itself), clipped to `clip`.
pub fn cell_exact(
    x: &MarkedPoint,
    config: &MarkedConfiguration,
    model: WeightModel,
    clip: &AxisBox,
) -> Result<Cell> {
    Neighborhood::new(config).cell_exact(x, model, clip)
}

/// One cell per generator of the carrier. Exact cells are clipped to the
/// carrier; raster cells are the labelled pixels of a grid aligned with
/// `window`, which they partition exactly.
pub fn tessellate(
    config: &MarkedConfiguration,
    window: &AxisBox,
    model: WeightModel,
    kernel: Kernel,
) -> Result<Vec<Cell>> {
    kernel.validate(model)?;
    let nb = Neighborhood::new(config);
    match kernel {
        Kernel::Exact => config
            .points()
            .iter()
            .map(|p| nb.cell_exact(p, model, config.carrier()))
            .collect(),
        Kernel::Raster { grid_h } => {
            let (grid, nx, ny) = GridSpec::aligned_to(window, grid_h)?;
            let labels = nb.label_pixels(model, &grid, (0, nx - 1), (0, ny - 1));
            let mut per: Vec<Vec<(i64, i64)>> = alloc::vec![Vec::new(); config.len()];
            for (k, &l) in labels.iter().enumerate() {
                if l != u32::MAX {
                    let k = k as i64;
                    per[l as usize].push((k % nx, k / nx));
                }
            }
            Ok(config
                .points()
                .iter()
                .zip(per)
                .map(|(p, pix)| {
                    let shape = if pix.is_empty() {
                        CellShape::Empty
                    } else {
                        let clipped = pix
                            .iter()
                            .any(|&(i, j)| i == 0 || j == 0 || i == nx - 1 || j == ny - 1);
                        CellShape::Raster(RasterCell::from_pixels(grid, &pix, clipped))
                    };
                    Cell {
                        generator: *p,
                        shape,
                    }
                })
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointproc::lattice_fixture;
    use alloc::vec;

    fn square(l: f64) -> AxisBox {
        AxisBox::new(Vec2::new(-l, -l), Vec2::new(l, l)).unwrap()
    }

    #[test]
    fn lone_point_is_unbounded() {
        let c = MarkedConfiguration::new(vec![MarkedPoint::new(0.0, 0.0, 0.0)], square(5.0)).unwrap();
        let cell = cell_exact(&c.points()[0], &c, WeightModel::Voronoi, &square(5.0)).unwrap();
        assert_eq!(cell.shape, CellShape::Unbounded);
    }

    #[test]
    fn lattice_interior_cell_is_unit_square() {
        let c = lattice_fixture(&square(4.0), 1.0, 0.0).unwrap();
        let x = MarkedPoint::new(1.0, -1.0, 0.0);
        let cell = cell_exact(&x, &c, WeightModel::Voronoi, &square(4.0)).unwrap();
        let CellShape::Polygon(p) = &cell.shape else {
            panic!("expected polygon, got {:?}", cell.shape)
        };
        assert_eq!(p.vertices().len(), 4);
        assert!((p.area() - 1.0).abs() <= 1e-12);
        let (lo, hi) = p.bounding_box().unwrap();
        assert!(lo.dist(Vec2::new(0.5, -1.5)) < 1e-12 && hi.dist(Vec2::new(1.5, -0.5)) < 1e-12);
    }

    #[test]
    fn clip_must_contain_carrier() {
        let c = lattice_fixture(&square(4.0), 1.0, 0.0).unwrap();
        assert!(matches!(
            cell_exact(&c.points()[0], &c, WeightModel::Voronoi, &square(3.0)),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn laguerre_cell_swallowed_by_heavy_neighbours() {
        let pts = vec![
            MarkedPoint::new(1.0, 0.0, 0.99),
            MarkedPoint::new(-1.0, 0.0, 0.99),
            MarkedPoint::new(0.0, 1.0, 0.99),
            MarkedPoint::new(0.0, -1.0, 0.99),
        ];
        let c = MarkedConfiguration::new(pts, square(5.0)).unwrap();
        let x = MarkedPoint::new(0.0, 0.0, 0.0);
        let cell = cell_exact(&x, &c, WeightModel::Laguerre, &square(5.0)).unwrap();
        // half-planes 2 x1 <= 1 - 0.99^2 etc.: a square of half-side 0.00995
        let CellShape::Polygon(p) = &cell.shape else {
            panic!("expected a tiny polygon")
        };
        let half = (1.0 - 0.99f64 * 0.99) / 2.0;
        assert!((p.area() - 4.0 * half * half).abs() < 1e-12);
    }

    #[test]
    fn laguerre_empty_cell() {
        let pts = vec![
            MarkedPoint::new(1.0, 0.0, 1.2),
            MarkedPoint::new(-1.0, 0.0, 1.2),
            MarkedPoint::new(0.0, 1.0, 1.2),
            MarkedPoint::new(0.0, -1.0, 1.2),
        ];
        let c = MarkedConfiguration::new(pts, square(5.0)).unwrap();
        let x = MarkedPoint::new(0.0, 0.0, 0.0);
        let cell = cell_exact(&x, &c, WeightModel::Laguerre, &square(5.0)).unwrap();
        assert_eq!(cell.shape, CellShape::Empty);
    }

    #[test]
    fn coincident_generator_rejected() {
        let c = MarkedConfiguration::new(vec![MarkedPoint::new(0.0, 0.0, 0.3)], square(2.0)).unwrap();
        let x = MarkedPoint::new(0.0, 0.0, 0.1);
        assert!(matches!(
            cell_exact(&x, &c, WeightModel::Laguerre, &square(2.0)),
            Err(Error::DegenerateInput(_))
        ));
    }
}
