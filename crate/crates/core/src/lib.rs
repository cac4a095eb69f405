//! Generalized weighted Voronoi tessellations (Voronoi, Laguerre, Johnson–Mehl)
//! of marked Poisson samples in the plane, and minus-sampling estimators of
//! typical-cell characteristics.
//!
//! The crate is `no_std` and only needs `alloc`. Everything here is a pure
//! function of its inputs (and of an explicit seed where randomness is
//! involved), so it can be driven from parallel experiment harnesses without
//! coordination.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod error;
pub mod estimators;
pub mod geometry;
pub mod index;
pub mod math;
pub mod pointproc;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use estimators::{
    erosion_volume, estimate, estimate_distribution_function,
    estimate_distribution_function_with_mark_bound, estimate_many_with_mark_bound, estimate_with_mark_bound, evaluate, score_xi, Characteristic,
    Contribution, EstimateResult, EstimatorKind, Exclusion, Measure,
};
pub use geometry::{
    bisector, cell_exact, cell_raster, diameter_bound, power, stabilization_radius_empirical,
    tessellate, BoundingBox, Cell, CellShape, ConvexPolygon, GridSpec, HalfSpace2, Kernel, RasterCell,
    WeightModel,
};
pub use math::Vec2;
pub use pointproc::{
    lattice_fixture, sample_guarded, sample_poisson, translate, AxisBox, MarkDistribution,
    MarkedConfiguration, MarkedPoint,
};
