//! Cell characteristics, the score, erosion volumes and the minus-sampling
//! estimators of typical-cell means.

use alloc::vec::Vec;
use alloc::{format, vec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    BoundingBox, Cell, CellShape, GridSpec, Kernel, KernelGrid, Neighborhood, RasterCell,
    WeightModel,
};
use crate::math::{sqrt, Vec2};
use crate::pointproc::{AxisBox, MarkedConfiguration, MarkedPoint};

/// A real-valued geometric functional of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Volume,
    BoundaryMeasure,
    Diameter,
    Circumradius,
    Inradius,
}

/// What is measured on each cell: a measure, or the indicator that a measure
/// is at most `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Characteristic {
    Volume,
    BoundaryMeasure,
    Diameter,
    Circumradius,
    Inradius,
    IndicatorVolumeLeq { t: f64 },
    IndicatorCharacteristicLeq { base: Measure, t: f64 },
}

impl Characteristic {
    pub fn of(m: Measure) -> Self {
        match m {
            Measure::Volume => Characteristic::Volume,
            Measure::BoundaryMeasure => Characteristic::BoundaryMeasure,
            Measure::Diameter => Characteristic::Diameter,
            Measure::Circumradius => Characteristic::Circumradius,
            Measure::Inradius => Characteristic::Inradius,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Characteristic::IndicatorVolumeLeq { t }
            | Characteristic::IndicatorCharacteristicLeq { t, .. }
                if !(*t > 0.0 && t.is_finite()) =>
            {
                Err(Error::invalid(format!("indicator threshold must be positive, got {t}")))
            }
            _ => Ok(()),
        }
    }

    /// The measure evaluated on the cell and the threshold, if an indicator.
    pub fn parts(&self) -> (Measure, Option<f64>) {
        match *self {
            Characteristic::Volume => (Measure::Volume, None),
            Characteristic::BoundaryMeasure => (Measure::BoundaryMeasure, None),
            Characteristic::Diameter => (Measure::Diameter, None),
            Characteristic::Circumradius => (Measure::Circumradius, None),
            Characteristic::Inradius => (Measure::Inradius, None),
            Characteristic::IndicatorVolumeLeq { t } => (Measure::Volume, Some(t)),
            Characteristic::IndicatorCharacteristicLeq { base, t } => (base, Some(t)),
        }
    }

    pub fn label(&self) -> alloc::string::String {
        match self {
            Characteristic::Volume => "volume".into(),
            Characteristic::BoundaryMeasure => "boundary_measure".into(),
            Characteristic::Diameter => "diameter".into(),
            Characteristic::Circumradius => "circumradius".into(),
            Characteristic::Inradius => "inradius".into(),
            Characteristic::IndicatorVolumeLeq { t } => format!("indicator_volume_leq({t})"),
            Characteristic::IndicatorCharacteristicLeq { base, t } => {
                format!("indicator_{}_leq({t})", Characteristic::of(*base).label())
            }
        }
    }
}

fn measure_polygon(m: Measure, p: &crate::geometry::ConvexPolygon) -> f64 {
    match m {
        Measure::Volume => p.area(),
        Measure::BoundaryMeasure => p.perimeter(),
        Measure::Diameter => p.diameter(),
        Measure::Circumradius => p.circumradius(),
        Measure::Inradius => p.inradius(),
    }
}

fn measure_raster(m: Measure, r: &RasterCell) -> f64 {
    match m {
        Measure::Volume => r.area(),
        Measure::BoundaryMeasure => r.boundary_length(),
        Measure::Diameter => r.diameter(),
        Measure::Circumradius => r.circumradius(),
        Measure::Inradius => r.inradius(),
    }
}

/// `h(C)` for bounded nonempty cells; `0` for empty and unbounded cells.
pub fn evaluate(h: &Characteristic, cell: &Cell) -> f64 {
    let (m, t) = h.parts();
    let v = match &cell.shape {
        CellShape::Polygon(p) => measure_polygon(m, p),
        CellShape::Raster(r) if !r.clipped => measure_raster(m, r),
        _ => return 0.0,
    };
    match t {
        Some(t) => (v <= t) as u8 as f64,
        None => v,
    }
}

/// Score of `x` in `config`: `h` of its cell, `0` unless bounded. Cells are
/// clipped to the carrier; raster grids are anchored at its lower corner.
pub fn score_xi(
    h: &Characteristic,
    x: &MarkedPoint,
    config: &MarkedConfiguration,
    model: WeightModel,
    kernel: Kernel,
) -> Result<f64> {
    kernel.validate(model)?;
    h.validate()?;
    let kg = KernelGrid::from_kernel(&kernel, config.carrier().lower);
    let cell = Neighborhood::new(config).cell(x, model, &kg)?;
    Ok(evaluate(h, &cell))
}

/// Volume of `window ⊖ C` for a cell with axis extents given by `bbox`.
pub fn erosion_volume(window: &AxisBox, bbox: &BoundingBox) -> f64 {
    let e = bbox.extent();
    (window.side(0) - e.x).max(0.0) * (window.side(1) - e.y).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Generators in the window, cells inside the window.
    WindowSample,
    /// All generators, cells inside the window.
    FullSample,
    /// `WindowSample` restricted to cells with eroded window volume at least half the window.
    TruncatedWindowSample,
    /// `FullSample` restricted likewise.
    TruncatedFullSample,
    /// Mean score per unit area of the generators in the window.
    Naive,
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::WindowSample => "window_sample",
            EstimatorKind::FullSample => "full_sample",
            EstimatorKind::TruncatedWindowSample => "truncated_window_sample",
            EstimatorKind::TruncatedFullSample => "truncated_full_sample",
            EstimatorKind::Naive => "naive",
        }
    }

    pub fn full_scope(&self) -> bool {
        matches!(self, EstimatorKind::FullSample | EstimatorKind::TruncatedFullSample)
    }

    pub fn truncated(&self) -> bool {
        matches!(
            self,
            EstimatorKind::TruncatedWindowSample | EstimatorKind::TruncatedFullSample
        )
    }
}

/// Why a generator contributes nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exclusion {
    /// Too far from the window for its cell to meet it.
    OutOfReach,
    EmptyCell,
    /// The cell is not inside the window.
    NotContained,
    /// The eroded window volume is below half the window volume.
    BelowHalfWindow,
}

impl Exclusion {
    pub fn name(&self) -> &'static str {
        match self {
            Exclusion::OutOfReach => "out_of_reach",
            Exclusion::EmptyCell => "empty_cell",
            Exclusion::NotContained => "not_contained",
            Exclusion::BelowHalfWindow => "below_half_window",
        }
    }
}

/// One ledger row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub generator: MarkedPoint,
    /// `h` of the cell, when the cell was computed.
    pub h: Option<f64>,
    /// Eroded window volume (the window volume for `Naive`).
    pub erosion: Option<f64>,
    pub included: bool,
    pub reason: Option<Exclusion>,
}

impl Contribution {
    /// Summand of the estimate.
    pub fn term(&self) -> f64 {
        match (self.included, self.h, self.erosion) {
            (true, Some(h), Some(e)) => h / e,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub value: f64,
    /// Sorted by generator (position, then mark).
    pub contributions: Vec<Contribution>,
    pub lambda: f64,
    pub kind: EstimatorKind,
}

impl EstimateResult {
    /// Sum of the ledger terms in ledger order.
    pub fn ledger_sum(&self) -> f64 {
        self.contributions.iter().map(Contribution::term).sum()
    }

    pub fn n_included(&self) -> usize {
        self.contributions.iter().filter(|c| c.included).count()
    }

    pub fn n_excluded(&self, reason: Exclusion) -> usize {
        self.contributions
            .iter()
            .filter(|c| c.reason == Some(reason))
            .count()
    }
}

/// Cells of the candidate generators together with everything needed for
/// the ledger, computed once per configuration and window.
struct Survey {
    lambda: f64,
    /// Generator, its cell if computed.
    rows: Vec<(MarkedPoint, Option<Cell>)>,
}

/// Largest distance from a point of `window` to its nearest generator, or
/// infinity without generators.
fn empty_space_reach(nb: &Neighborhood, window: &AxisBox) -> f64 {
    if nb.positions().is_empty() {
        return f64::INFINITY;
    }
    let step = (0.5 * nb.index().bucket_size()).max(1e-3 * window.side(0).max(window.side(1)));
    let nx = (window.side(0) / step) as i64 + 1;
    let ny = (window.side(1) / step) as i64 + 1;
    let (sx, sy) = (window.side(0) / nx as f64, window.side(1) / ny as f64);
    let mut e = 0.0f64;
    for j in 0..=ny {
        for i in 0..=nx {
            let y = Vec2::new(window.lower.x + i as f64 * sx, window.lower.y + j as f64 * sy);
            e = e.max(nb.nearest_distance(y).unwrap_or(f64::INFINITY));
        }
    }
    e + 0.5 * sqrt(sx * sx + sy * sy)
}

fn reach(model: WeightModel, e: f64, mu: f64) -> f64 {
    match model {
        WeightModel::Voronoi => e,
        WeightModel::Laguerre => sqrt(e * e + mu * mu),
        WeightModel::JohnsonMehl => e + mu,
    }
}

fn guard_error(x: &MarkedPoint) -> Error {
    Error::GuardTooSmall {
        x: x.position.x,
        y: x.position.y,
    }
}

fn certified_cell(
    nb: &Neighborhood,
    x: &MarkedPoint,
    model: WeightModel,
    kernel: &KernelGrid,
    mu: f64,
) -> Result<Cell> {
    let cell = nb.cell(x, model, kernel)?;
    if cell.is_empty() {
        return Ok(cell);
    }
    if !nb.is_certified(&cell, model, mu) {
        return Err(guard_error(x));
    }
    Ok(cell)
}

fn survey_exact(
    nb: &Neighborhood,
    window: &AxisBox,
    model: WeightModel,
    kind: EstimatorKind,
    mu: f64,
) -> Result<Vec<(MarkedPoint, Option<Cell>)>> {
    let pts = nb.config().points();
    let r = reach(model, empty_space_reach(nb, window), mu);
    let mut rows = Vec::new();
    for p in pts {
        let in_window = window.contains(p.position);
        if !kind.full_scope() && !in_window {
            continue;
        }
        if !in_window && window.distance_to(p.position) > r {
            rows.push((*p, None));
            continue;
        }
        let cell = certified_cell(nb, p, model, &KernelGrid::Exact, mu)?;
        rows.push((*p, Some(cell)));
    }
    Ok(rows)
}

fn survey_raster(
    nb: &Neighborhood,
    window: &AxisBox,
    model: WeightModel,
    grid_h: f64,
    kind: EstimatorKind,
    mu: f64,
) -> Result<Vec<(MarkedPoint, Option<Cell>)>> {
    let pts = nb.config().points();
    let (grid, nx, ny) = GridSpec::aligned_to(window, grid_h)?;
    // window pixels plus a one-pixel shell
    let (wx, wy) = ((nx + 2) as usize, (ny + 2) as usize);
    let labels = nb.label_pixels(model, &grid, (-1, nx), (-1, ny));
    let mut inner: Vec<Vec<(i64, i64)>> = vec![Vec::new(); pts.len()];
    let mut in_shell = vec![false; pts.len()];
    for (k, &l) in labels.iter().enumerate() {
        if l == u32::MAX {
            continue;
        }
        let (i, j) = ((k % wx) as i64 - 1, (k / wx) as i64 - 1);
        if i < 0 || j < 0 || i >= nx || j >= ny {
            in_shell[l as usize] = true;
        } else {
            inner[l as usize].push((i, j));
        }
    }
    debug_assert_eq!(labels.len(), wx * wy);
    // pixel centres of the labelled block span this box
    let labelled = AxisBox {
        lower: grid.center(-1, -1),
        upper: grid.center(nx, ny),
    };
    let kg = KernelGrid::Raster(grid);
    let mut rows = Vec::new();
    for (idx, p) in pts.iter().enumerate() {
        let in_window = window.contains(p.position);
        let in_scope = kind.full_scope() || in_window;
        if !in_scope {
            continue;
        }
        let naive = kind == EstimatorKind::Naive;
        if inner[idx].is_empty() && !naive {
            rows.push((*p, None));
            continue;
        }
        let known = !in_shell[idx]
            && !inner[idx].is_empty()
            && nb
                .diameter_bound(p, nb.max_mark().max(p.mark))
                .is_some_and(|d| labelled.contains_ball(p.position, d));
        let cell = if known {
            let cell = Cell {
                generator: *p,
                shape: CellShape::Raster(RasterCell::from_pixels(grid, &inner[idx], false)),
            };
            if !nb.is_certified(&cell, model, mu) {
                return Err(guard_error(p));
            }
            cell
        } else {
            certified_cell(nb, p, model, &kg, mu)?
        };
        rows.push((*p, Some(cell)));
    }
    Ok(rows)
}

fn survey(
    config: &MarkedConfiguration,
    window: &AxisBox,
    model: WeightModel,
    kind: EstimatorKind,
    kernel: Kernel,
    mu: f64,
) -> Result<Survey> {
    if !(mu >= config.max_mark() && mu.is_finite()) {
        return Err(Error::invalid("the mark bound must dominate every mark"));
    }
    kernel.validate(model)?;
    if !config.carrier().contains_box(window) {
        return Err(Error::GuardTooSmall {
            x: window.center().x,
            y: window.center().y,
        });
    }
    let lambda = window.volume();
    let nb = Neighborhood::new(config);
    let mut rows = match kernel {
        Kernel::Exact => survey_exact(&nb, window, model, kind, mu)?,
        Kernel::Raster { grid_h } => survey_raster(&nb, window, model, grid_h, kind, mu)?,
    };
    rows.sort_by(|a, b| a.0.key_cmp(&b.0));
    Ok(Survey { lambda, rows })
}

fn ledger(s: &Survey, window: &AxisBox, h: &Characteristic, kind: EstimatorKind) -> EstimateResult {
    let lambda = s.lambda;
    let contributions: Vec<Contribution> = s
        .rows
        .iter()
        .map(|(p, cell)| {
            let Some(cell) = cell else {
                return Contribution {
                    generator: *p,
                    h: None,
                    erosion: None,
                    included: false,
                    reason: Some(Exclusion::OutOfReach),
                };
            };
            let hv = evaluate(h, cell);
            if cell.is_empty() {
                return Contribution {
                    generator: *p,
                    h: Some(hv),
                    erosion: None,
                    included: false,
                    reason: Some(Exclusion::EmptyCell),
                };
            }
            if kind == EstimatorKind::Naive {
                return Contribution {
                    generator: *p,
                    h: Some(hv),
                    erosion: Some(lambda),
                    included: true,
                    reason: None,
                };
            }
            let erosion = cell.bounding_box().map(|b| erosion_volume(window, &b));
            let (included, reason) = if !cell.contained_in(window) || erosion.is_none_or(|e| e <= 0.0) {
                (false, Some(Exclusion::NotContained))
            } else if kind.truncated() && erosion.is_some_and(|e| e < lambda / 2.0) {
                (false, Some(Exclusion::BelowHalfWindow))
            } else {
                (true, None)
            };
            Contribution {
                generator: *p,
                h: Some(hv),
                erosion,
                included,
                reason,
            }
        })
        .collect();
    let mut r = EstimateResult {
        value: 0.0,
        contributions,
        lambda,
        kind,
    };
    r.value = r.ledger_sum();
    r
}

/// Minus-sampling (or naive) estimate of the typical-cell mean of `h` from
/// the cells of `config` observed in `window`, taking the largest mark of
/// `config` as the mark bound. See [`estimate_with_mark_bound`].
pub fn estimate(
    config: &MarkedConfiguration,
    window: &AxisBox,
    model: WeightModel,
    h: &Characteristic,
    kind: EstimatorKind,
    kernel: Kernel,
) -> Result<EstimateResult> {
    estimate_with_mark_bound(config, window, model, h, kind, kernel, config.max_mark())
}

/// Minus-sampling (or naive) estimate of the typical-cell mean of `h`.
///
/// Every cell that can enter the estimate must be certified by the carrier
/// against points beyond it with marks at most `mu`: either its cone bound
/// `D` is finite with `B_{2D+mu}(x)` inside the carrier, or no such point
/// can reach the computed cell. Otherwise `Error::GuardTooSmall` is
/// returned. Raster grids are aligned with the window.
pub fn estimate_with_mark_bound(
    config: &MarkedConfiguration,
    window: &AxisBox,
    model: WeightModel,
    h: &Characteristic,
    kind: EstimatorKind,
    kernel: Kernel,
    mu: f64,
) -> Result<EstimateResult> {
    h.validate()?;
    let s = survey(config, window, model, kind, kernel, mu)?;
    Ok(ledger(&s, window, h, kind))
}

/// Estimates for several characteristics from one tessellation pass, in
/// the order of `hs`.
pub fn estimate_many_with_mark_bound(
    config: &MarkedConfiguration,
    window: &AxisBox,
    model: WeightModel,
    hs: &[Characteristic],
    kind: EstimatorKind,
    kernel: Kernel,
    mu: f64,
) -> Result<Vec<EstimateResult>> {
    for h in hs {
        h.validate()?;
    }
    let s = survey(config, window, model, kind, kernel, mu)?;
    Ok(hs.iter().map(|h| ledger(&s, window, h, kind)).collect())
}

/// Estimates of `P(Vol(K_0) <= t)` for every `t` in `t_grid`, from one
/// tessellation pass.
pub fn estimate_distribution_function(
    config: &MarkedConfiguration,
    window: &AxisBox,
    model: WeightModel,
    t_grid: &[f64],
    kind: EstimatorKind,
    kernel: Kernel,
) -> Result<Vec<(f64, f64)>> {
    estimate_distribution_function_with_mark_bound(
        config,
        window,
        model,
        t_grid,
        kind,
        kernel,
        config.max_mark(),
    )
}

pub fn estimate_distribution_function_with_mark_bound(
    config: &MarkedConfiguration,
    window: &AxisBox,
    model: WeightModel,
    t_grid: &[f64],
    kind: EstimatorKind,
    kernel: Kernel,
    mu: f64,
) -> Result<Vec<(f64, f64)>> {
    for &t in t_grid {
        Characteristic::IndicatorVolumeLeq { t }.validate()?;
    }
    let s = survey(config, window, model, kind, kernel, mu)?;
    Ok(t_grid
        .iter()
        .map(|&t| {
            let r = ledger(&s, window, &Characteristic::IndicatorVolumeLeq { t }, kind);
            (t, r.value)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ConvexPolygon;
    use crate::pointproc::lattice_fixture;

    fn square(l: f64) -> AxisBox {
        AxisBox::new(Vec2::new(-l, -l), Vec2::new(l, l)).unwrap()
    }

    fn unit_square_cell() -> Cell {
        let b = AxisBox::new(Vec2::ZERO, Vec2::new(1.0, 1.0)).unwrap();
        Cell {
            generator: MarkedPoint::new(0.5, 0.5, 0.0),
            shape: CellShape::Polygon(ConvexPolygon::from_box(&b)),
        }
    }

    #[test]
    fn unit_square_characteristics() {
        let c = unit_square_cell();
        let close = |h: Characteristic, v: f64| assert!((evaluate(&h, &c) - v).abs() < 1e-9, "{h:?}");
        close(Characteristic::Volume, 1.0);
        close(Characteristic::BoundaryMeasure, 4.0);
        close(Characteristic::Diameter, 2f64.sqrt());
        close(Characteristic::Inradius, 0.5);
        close(Characteristic::Circumradius, 2f64.sqrt() / 2.0);
        close(Characteristic::IndicatorVolumeLeq { t: 1.5 }, 1.0);
        close(Characteristic::IndicatorVolumeLeq { t: 0.5 }, 0.0);
        close(
            Characteristic::IndicatorCharacteristicLeq {
                base: Measure::Diameter,
                t: 1.0,
            },
            0.0,
        );
    }

    #[test]
    fn unbounded_and_empty_score_zero() {
        for shape in [CellShape::Unbounded, CellShape::Empty] {
            let c = Cell {
                generator: MarkedPoint::new(0.0, 0.0, 0.0),
                shape,
            };
            assert_eq!(evaluate(&Characteristic::Volume, &c), 0.0);
            assert_eq!(evaluate(&Characteristic::IndicatorVolumeLeq { t: 2.0 }, &c), 0.0);
        }
    }

    #[test]
    fn erosion_examples() {
        let w = AxisBox::new(Vec2::ZERO, Vec2::new(10.0, 10.0)).unwrap();
        let bb = |x: f64, y: f64| BoundingBox {
            lower: Vec2::new(1.0, 1.0),
            upper: Vec2::new(1.0 + x, 1.0 + y),
        };
        assert_eq!(erosion_volume(&w, &bb(2.0, 3.0)), 56.0);
        assert_eq!(erosion_volume(&w, &bb(0.0, 0.0)), 100.0);
        assert_eq!(erosion_volume(&w, &bb(10.0, 3.0)), 0.0);
        assert_eq!(erosion_volume(&w, &bb(12.0, 3.0)), 0.0);
    }

    #[test]
    fn indicator_threshold_must_be_positive() {
        let h = Characteristic::IndicatorVolumeLeq { t: 0.0 };
        let c = lattice_fixture(&square(3.0), 1.0, 0.0).unwrap();
        assert!(estimate(&c, &square(1.0), WeightModel::Voronoi, &h, EstimatorKind::FullSample, Kernel::Exact).is_err());
    }

    #[test]
    fn empty_configuration_gives_zero() {
        let c = MarkedConfiguration::empty(square(10.0));
        let r = estimate(
            &c,
            &square(5.0),
            WeightModel::Voronoi,
            &Characteristic::Volume,
            EstimatorKind::FullSample,
            Kernel::Exact,
        )
        .unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.contributions.is_empty());
    }

    #[test]
    fn lattice_full_sample_is_exactly_one() {
        let c = lattice_fixture(&square(16.0), 1.0, 0.0).unwrap();
        for kind in [EstimatorKind::FullSample, EstimatorKind::TruncatedFullSample] {
            let r = estimate(&c, &square(5.0), WeightModel::Voronoi, &Characteristic::Volume, kind, Kernel::Exact)
                .unwrap();
            assert_eq!(r.n_included(), 81);
            assert!((r.value - 1.0).abs() <= 1e-12);
            for c in r.contributions.iter().filter(|c| c.included) {
                assert!((c.erosion.unwrap() - 81.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn uncertified_carrier_is_an_error() {
        let c = lattice_fixture(&square(6.0), 1.0, 0.0).unwrap();
        let r = estimate(
            &c,
            &square(5.0),
            WeightModel::Voronoi,
            &Characteristic::Volume,
            EstimatorKind::FullSample,
            Kernel::Exact,
        );
        assert!(matches!(r, Err(Error::GuardTooSmall { .. })));
    }
}
