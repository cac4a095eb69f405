//! Tessellation kernel: weights, bisectors, exact polygon cells for the
//! Voronoi and Laguerre weights, raster cells for every weight, and the cone
//! bound on cell diameters.

mod bound;
mod cell;
mod polygon;
mod raster;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{sqrt, Vec2};
use crate::pointproc::MarkedPoint;

pub use bound::{
    cone_sector, diameter_bound, stabilization_radius_empirical, CONE_COUNT, CONE_HALF_ANGLE,
};
pub use cell::{cell_exact, tessellate, BoundingBox, Cell, CellShape, KernelGrid, Neighborhood};
pub use polygon::ConvexPolygon;
pub use raster::{cell_raster, jm_radial_extent, GridSpec, RasterCell};

/// Which weight defines the cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightModel {
    /// `|x - y|`
    Voronoi,
    /// `|x - y|^2 - m^2`
    Laguerre,
    /// `|x - y| - m`
    JohnsonMehl,
}

impl WeightModel {
    pub fn name(&self) -> &'static str {
        match self {
            WeightModel::Voronoi => "voronoi",
            WeightModel::Laguerre => "laguerre",
            WeightModel::JohnsonMehl => "johnson_mehl",
        }
    }

    /// Whether cells are convex polygons computable by half-plane clipping.
    pub fn has_linear_bisectors(&self) -> bool {
        !matches!(self, WeightModel::JohnsonMehl)
    }

    /// A strictly increasing transform of `power`, cheaper to evaluate. Both
    /// induce the same cells and the same argmin.
    #[inline]
    pub(crate) fn rank(&self, dist2: f64, mark: f64) -> f64 {
        match self {
            WeightModel::Voronoi => dist2,
            WeightModel::Laguerre => dist2 - mark * mark,
            WeightModel::JohnsonMehl => sqrt(dist2) - mark,
        }
    }

    /// Lower bound on `rank` for any generator at distance at least `delta`
    /// with mark at most `mu`.
    #[inline]
    pub(crate) fn rank_lower_bound(&self, delta: f64, mu: f64) -> f64 {
        let d = delta.max(0.0);
        match self {
            WeightModel::Voronoi => d * d,
            WeightModel::Laguerre => d * d - mu * mu,
            WeightModel::JohnsonMehl => d - mu,
        }
    }
}

/// How cells are computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// Exact convex polygons; Voronoi and Laguerre only.
    Exact,
    /// Pixel-centre membership on a square grid of the given spacing.
    Raster { grid_h: f64 },
}

impl Kernel {
    pub fn validate(&self, model: WeightModel) -> Result<()> {
        match self {
            Kernel::Exact if !model.has_linear_bisectors() => Err(Error::invalid(
                "the exact kernel supports only voronoi and laguerre weights",
            )),
            Kernel::Raster { grid_h } if !(*grid_h > 0.0 && grid_h.is_finite()) => {
                Err(Error::invalid("grid_h must be positive"))
            }
            _ => Ok(()),
        }
    }
}

/// The weight of location `y` with respect to generator `p`.
pub fn power(y: Vec2, p: &MarkedPoint, model: WeightModel) -> f64 {
    let d = y.dist(p.position);
    match model {
        WeightModel::Voronoi => d,
        WeightModel::Laguerre => d * d - p.mark * p.mark,
        WeightModel::JohnsonMehl => d - p.mark,
    }
}

/// Closed half-plane `{y : <normal, y> <= offset}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfSpace2 {
    pub normal: Vec2,
    pub offset: f64,
}

impl HalfSpace2 {
    pub fn contains(&self, y: Vec2) -> bool {
        self.normal.dot(y) <= self.offset
    }

    /// Signed value `<normal, y> - offset`; nonpositive inside.
    pub fn eval(&self, y: Vec2) -> f64 {
        self.normal.dot(y) - self.offset
    }

    pub fn complement_boundary(&self) -> HalfSpace2 {
        HalfSpace2 {
            normal: -self.normal,
            offset: -self.offset,
        }
    }
}

/// `{y : power(y, a) <= power(y, b)}` for the Voronoi or Laguerre weight.
pub fn bisector(a: &MarkedPoint, b: &MarkedPoint, model: WeightModel) -> Result<HalfSpace2> {
    if !model.has_linear_bisectors() {
        return Err(Error::invalid(
            "johnson-mehl bisectors are hyperbolic, not half-planes",
        ));
    }
    if a.position == b.position {
        return Err(Error::DegenerateInput(alloc::format!(
            "coincident generators at ({}, {})",
            a.position.x,
            a.position.y
        )));
    }
    let (ma2, mb2) = match model {
        WeightModel::Voronoi => (0.0, 0.0),
        _ => (a.mark * a.mark, b.mark * b.mark),
    };
    Ok(HalfSpace2 {
        normal: (b.position - a.position) * 2.0,
        offset: b.position.norm2() - a.position.norm2() + ma2 - mb2,
    })
}

/// Half-plane of `bisector` in coordinates centred at `a`, for `w = b - a`.
#[inline]
pub(crate) fn local_halfplane(w: Vec2, ma: f64, mb: f64, model: WeightModel) -> HalfSpace2 {
    let marks = match model {
        WeightModel::Voronoi => 0.0,
        _ => ma * ma - mb * mb,
    };
    HalfSpace2 {
        normal: w * 2.0,
        offset: w.norm2() + marks,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_examples() {
        let p = MarkedPoint::new(3.0, 4.0, 2.0);
        assert_eq!(power(Vec2::ZERO, &p, WeightModel::Laguerre), 21.0);
        assert_eq!(power(Vec2::ZERO, &p, WeightModel::JohnsonMehl), 3.0);
        assert_eq!(power(Vec2::ZERO, &p, WeightModel::Voronoi), 5.0);
        assert_eq!(power(p.position, &p, WeightModel::Voronoi), 0.0);
    }

    #[test]
    fn bisector_examples() {
        let a = MarkedPoint::new(0.0, 0.0, 0.0);
        let b = MarkedPoint::new(2.0, 0.0, 0.0);
        let h = bisector(&a, &b, WeightModel::Voronoi).unwrap();
        // boundary x1 = 1
        assert_eq!(h.offset / h.normal.x, 1.0);
        assert_eq!(h.normal.y, 0.0);

        let b1 = MarkedPoint::new(2.0, 0.0, 1.0);
        let h = bisector(&a, &b1, WeightModel::Laguerre).unwrap();
        assert_eq!(h.offset / h.normal.x, 0.75);

        let swapped = bisector(&b1, &a, WeightModel::Laguerre).unwrap();
        assert_eq!(swapped, h.complement_boundary());
    }

    #[test]
    fn bisector_matches_power_comparison() {
        let a = MarkedPoint::new(0.3, -1.2, 0.4);
        let b = MarkedPoint::new(1.7, 0.5, 0.9);
        for model in [WeightModel::Voronoi, WeightModel::Laguerre] {
            let h = bisector(&a, &b, model).unwrap();
            for i in -20..20 {
                for j in -20..20 {
                    let y = Vec2::new(i as f64 * 0.173, j as f64 * 0.219);
                    let lhs = power(y, &a, model);
                    let rhs = power(y, &b, model);
                    if (lhs - rhs).abs() > 1e-9 {
                        assert_eq!(h.contains(y), lhs <= rhs);
                    }
                }
            }
        }
    }

    #[test]
    fn coincident_bisector_is_degenerate() {
        let a = MarkedPoint::new(1.0, 1.0, 0.0);
        let b = MarkedPoint::new(1.0, 1.0, 0.5);
        assert!(matches!(
            bisector(&a, &b, WeightModel::Laguerre),
            Err(Error::DegenerateInput(_))
        ));
        assert!(bisector(&a, &b, WeightModel::JohnsonMehl).is_err());
    }
}
