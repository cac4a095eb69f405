use rand::Rng;
use tesslab_core::geometry::{KernelGrid, Neighborhood};
use tesslab_core::pointproc::{extend_carrier, sample_poisson_with};
use tesslab_core::rng::{self, purpose, TessRng};
use tesslab_core::{
    AxisBox, Cell, CellShape, Error, GridSpec, Kernel, MarkedPoint, Result, Vec2,
};

use super::CellModel;

/// Starting half-side of the sampled square, in units of the process scale.
pub const TYPICAL_HALF_SIDE: f64 = 8.0;
/// Largest half-side reached by doubling before a draw is rejected.
pub const TYPICAL_MAX_HALF_SIDE: f64 = 128.0;
/// Experiments abort above this frequency of rejected draws.
pub const MAX_REJECTION_RATE: f64 = 1e-3;

/// Cell of a point inserted at the origin into a Poisson sample.
#[derive(Debug, Clone)]
pub struct TypicalCell {
    /// `Unbounded` when no sampled square up to the cap certified the cell.
    pub cell: Cell,
    pub half_side: f64,
    pub extensions: u32,
}

impl TypicalCell {
    pub fn rejected(&self) -> bool {
        !self.cell.is_bounded()
    }
}

pub(crate) fn square(half: f64) -> AxisBox {
    AxisBox {
        lower: Vec2::new(-half, -half),
        upper: Vec2::new(half, half),
    }
}

/// Kernel with a uniformly random grid offset, so that the inserted point
/// sits at a uniform position relative to the pixels.
pub(crate) fn random_grid(kernel: &Kernel, rng: &mut TessRng) -> KernelGrid {
    match kernel {
        Kernel::Exact => KernelGrid::Exact,
        Kernel::Raster { grid_h } => {
            let u = Vec2::new(rng.random::<f64>() * grid_h, rng.random::<f64>() * grid_h);
            KernelGrid::Raster(GridSpec {
                h: *grid_h,
                anchor: u,
            })
        }
    }
}

/// Draws a typical cell from `rng`. The square starts at `half_side` and
/// doubles until the cell is certified against everything outside it.
/// Raster grids use `cm.kernel`'s spacing as given.
pub fn sample_typical_cell_with(cm: &CellModel, half_side: f64, rng: &mut TessRng) -> Result<TypicalCell> {
    cm.validate()?;
    if !(half_side > 0.0 && half_side.is_finite()) {
        return Err(Error::InvalidParameter("half_side must be positive".into()));
    }
    let mu = cm.mu();
    let x = MarkedPoint::new(0.0, 0.0, cm.marks.sample(rng));
    let kg = random_grid(&cm.kernel, rng);
    let max_half = TYPICAL_MAX_HALF_SIDE * cm.scale();
    let mut g = half_side;
    let mut config = sample_poisson_with(&square(g), cm.intensity, &cm.marks, rng)?;
    let mut extensions = 0;
    loop {
        let with = config.with_point(x)?;
        let nb = Neighborhood::new(&with);
        let cell = nb.cell(&x, cm.model, &kg)?;
        if nb.is_certified(&cell, cm.model, mu) {
            return Ok(TypicalCell {
                cell,
                half_side: g,
                extensions,
            });
        }
        if 2.0 * g > max_half {
            return Ok(TypicalCell {
                cell: Cell {
                    generator: x,
                    shape: CellShape::Unbounded,
                },
                half_side: g,
                extensions,
            });
        }
        g *= 2.0;
        extensions += 1;
        config = extend_carrier(&config, &square(g), cm.intensity, &cm.marks, rng)?;
    }
}

/// Typical cell at unit intensity from the seed's own stream, starting from
/// the square of half-side `guard`. A draw not certified within the largest
/// square is an error.
pub fn sample_typical_cell(cm: &CellModel, guard: f64, seed: u64) -> Result<Cell> {
    let mut rng = rng::stream(seed, purpose::ORACLE, 0);
    let t = sample_typical_cell_with(cm, guard, &mut rng)?;
    if t.rejected() {
        return Err(Error::NotStabilized(format!(
            "typical cell not certified within half-side {}",
            t.half_side
        )));
    }
    Ok(t.cell)
}
