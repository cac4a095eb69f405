use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tesslab_core::geometry::{KernelGrid, Neighborhood};
use tesslab_core::pointproc::{extend_carrier, sample_poisson_with};
use tesslab_core::rng::{self, purpose, TessRng};
use tesslab_core::{
    evaluate, Characteristic, Error, Kernel, MarkedConfiguration, MarkedPoint, Result, Vec2, WeightModel,
};

use super::typical::{random_grid, square, TYPICAL_HALF_SIDE, TYPICAL_MAX_HALF_SIDE};
use super::{collect_ordered, CellModel};

/// Outcome of one stabilization check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilizationCheck {
    pub d_bound: f64,
    pub radius: f64,
    /// Cell from the points in `B_R(x)` equals the full-carrier cell.
    pub restricted_equal: bool,
    /// Same after the random insertions outside `B_R(x)`.
    pub inserted_equal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilizationReport {
    pub n: usize,
    pub passed: usize,
    pub insertions: usize,
    pub checks: Vec<StabilizationCheck>,
}

/// Vertex tolerance when comparing polygons.
pub const GEOMETRY_TOL: f64 = 1e-9;

fn check_one(cm: &CellModel, insertions: usize, rng: &mut TessRng) -> Result<StabilizationCheck> {
    let mu = cm.mu();
    let x = MarkedPoint::new(0.0, 0.0, cm.marks.sample(rng));
    let kg = random_grid(&cm.kernel, rng);
    let mut g = TYPICAL_HALF_SIDE * cm.scale();
    let max_half = TYPICAL_MAX_HALF_SIDE * cm.scale();
    let mut config = sample_poisson_with(&square(g), cm.intensity, &cm.marks, rng)?;
    let (full_conf, d) = loop {
        let with = config.with_point(x)?;
        // room for the insertions between the ball and the square
        let d = Neighborhood::new(&with).diameter_bound(&x, mu);
        if let Some(d) = d {
            if with.carrier().contains_ball(x.position, 2.0 * d + mu + 1.0) {
                break (with, d);
            }
        }
        if 2.0 * g > max_half {
            return Err(Error::NotStabilized("no certified ball within the largest square".into()));
        }
        g *= 2.0;
        config = extend_carrier(&config, &square(g), cm.intensity, &cm.marks, rng)?;
    };
    let radius = 2.0 * d + mu;
    let full = Neighborhood::new(&full_conf).cell(&x, cm.model, &kg)?;
    let restricted = full_conf.restrict_to_ball(x.position, radius);
    let r_cell = Neighborhood::new(&restricted).cell(&x, cm.model, &kg)?;
    let mut pts = restricted.points().to_vec();
    let carrier = *full_conf.carrier();
    while pts.len() < restricted.len() + insertions {
        let p = Vec2::new(
            carrier.lower.x + carrier.side(0) * rng.random::<f64>(),
            carrier.lower.y + carrier.side(1) * rng.random::<f64>(),
        );
        if p.dist(x.position) > radius {
            pts.push(MarkedPoint {
                position: p,
                mark: mu * rng.random::<f64>(),
            });
        }
    }
    let inserted = MarkedConfiguration::new(pts, carrier)?;
    let i_cell = Neighborhood::new(&inserted).cell(&x, cm.model, &kg)?;
    Ok(StabilizationCheck {
        d_bound: d,
        radius,
        restricted_equal: full.is_bounded() && r_cell.same_geometry(&full, GEOMETRY_TOL),
        inserted_equal: full.is_bounded() && i_cell.same_geometry(&full, GEOMETRY_TOL),
    })
}

/// For `n` typical cells, compares the cell computed from all points with
/// the cell from the points within `R = 2 D + mu`, before and after
/// `insertions` (at most 7) random points outside `B_R` with marks in
/// `[0, mu]`.
pub fn stabilization_experiment(cm: &CellModel, n: usize, insertions: usize, seed: u64) -> Result<StabilizationReport> {
    cm.validate()?;
    if insertions > 7 {
        return Err(Error::InvalidParameter("at most 7 insertions".into()));
    }
    let checks = collect_ordered(
        (0..n)
            .into_par_iter()
            .map(|i| check_one(cm, insertions, &mut rng::stream(seed, purpose::STABILIZATION, i as u64)))
            .collect(),
    )?;
    Ok(StabilizationReport {
        n,
        passed: checks.iter().filter(|c| c.restricted_equal && c.inserted_equal).count(),
        insertions,
        checks,
    })
}

/// Change of the total score when `(0, mark)` joins
/// `(config within B_S(0)) + extra`, every cell computed within that union
/// on `config`'s carrier. Raster grids are anchored at the carrier's lower
/// corner.
#[allow(clippy::too_many_arguments)]
pub fn add_one_cost(
    config: &MarkedConfiguration,
    ball_radius: f64,
    extra: &[MarkedPoint],
    mark: f64,
    model: WeightModel,
    h: &Characteristic,
    kernel: Kernel,
) -> Result<f64> {
    kernel.validate(model)?;
    h.validate()?;
    if extra.iter().any(|p| p.position.norm() <= ball_radius) {
        return Err(Error::InvalidParameter("extra points must lie outside B_S(0)".into()));
    }
    let carrier = *config.carrier();
    let mut base = config.restrict_to_ball(Vec2::ZERO, ball_radius).points().to_vec();
    base.extend_from_slice(extra);
    let without = MarkedConfiguration::new(base.clone(), carrier)?;
    base.push(MarkedPoint::new(0.0, 0.0, mark));
    let with = MarkedConfiguration::new(base, carrier)?;
    let kg = KernelGrid::from_kernel(&kernel, carrier.lower);
    let total = |c: &MarkedConfiguration| -> Result<f64> {
        let nb = Neighborhood::new(c);
        let mut s = 0.0;
        for p in c.points() {
            s += evaluate(h, &nb.cell(p, model, &kg)?);
        }
        Ok(s)
    };
    Ok(total(&with)? - total(&without)?)
}
