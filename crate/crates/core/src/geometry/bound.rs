use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::ControlFlow;

use rand::Rng;

use super::cell::{Cell, KernelGrid, Neighborhood};
use super::{Kernel, WeightModel};
use crate::error::{Error, Result};
use crate::math::{atan2, floor, Vec2};
use crate::pointproc::{MarkedConfiguration, MarkedPoint};
use crate::rng::{self, purpose};

/// Number of equal angular sectors around a generator.
pub const CONE_COUNT: usize = 9;
/// Half the opening angle of each sector (20 degrees). Any two directions in
/// one sector make an angle of at most 40 degrees, so `<u, v> >= 3/4 |u||v|`.
pub const CONE_HALF_ANGLE: f64 = PI / CONE_COUNT as f64;

/// Sector index of direction `v`, counting counter-clockwise from the
/// positive first axis.
pub fn cone_sector(v: Vec2) -> usize {
    let mut a = atan2(v.y, v.x);
    if a < 0.0 {
        a += 2.0 * PI;
    }
    (floor(a / (2.0 * CONE_HALF_ANGLE)) as usize).min(CONE_COUNT - 1)
}

impl Neighborhood<'_> {
    /// Twice the largest, over sectors, distance from `x` to the nearest
    /// generator of that sector outside `B_{2 mu}(x)`; `None` if a sector has
    /// no such generator.
    pub fn diameter_bound(&self, x: &MarkedPoint, mu: f64) -> Option<f64> {
        let mut best = [f64::INFINITY; CONE_COUNT];
        let two_mu = 2.0 * mu;
        let pos = self.positions();
        self.index().for_each_ring(x.position, |lb, ids| {
            let worst = best.iter().cloned().fold(0.0, f64::max);
            if lb > worst {
                return ControlFlow::Break(());
            }
            for &id in ids {
                let w = pos[id as usize] - x.position;
                let d = w.norm();
                if d <= two_mu || d == 0.0 {
                    continue;
                }
                let s = cone_sector(w);
                if d < best[s] {
                    best[s] = d;
                }
            }
            ControlFlow::Continue(())
        });
        let worst = best.iter().cloned().fold(0.0, f64::max);
        worst.is_finite().then_some(2.0 * worst)
    }
}

/// Cone bound on the distance from `x` to any point of its cell, for marks of
/// all generators at most `mu`.
pub fn diameter_bound(x: &MarkedPoint, config: &MarkedConfiguration, mu: f64) -> Option<f64> {
    Neighborhood::new(config).diameter_bound(x, mu)
}

fn cell_of(x: &MarkedPoint, config: &MarkedConfiguration, model: WeightModel, kernel: &KernelGrid) -> Result<Cell> {
    Neighborhood::new(config).cell(x, model, kernel)
}

/// Smallest radius of a doubling sequence `r_0, 2 r_0, ...` (capped at the
/// certified radius `2 D + mu`) such that the cell of `x` computed from the
/// points in `B_r(x)` equals the cell computed from all points, and stays
/// equal under `trials` random insertions of `1..=insert_budget` points in
/// the carrier outside `B_r(x)`. Raster grids are anchored at the carrier's
/// lower corner.
#[allow(clippy::too_many_arguments)]
pub fn stabilization_radius_empirical(
    x: &MarkedPoint,
    config: &MarkedConfiguration,
    model: WeightModel,
    kernel: Kernel,
    insert_budget: usize,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    kernel.validate(model)?;
    if insert_budget > 7 {
        return Err(Error::invalid("insert_budget must be at most 7"));
    }
    let carrier = *config.carrier();
    let kg = KernelGrid::from_kernel(&kernel, carrier.lower);
    let nb = Neighborhood::new(config);
    let mu = nb.max_mark().max(x.mark);
    let full = nb.cell(x, model, &kg)?;
    if !full.is_bounded() {
        return Err(Error::NotStabilized("the cell is not bounded within the carrier".into()));
    }
    let d = nb
        .diameter_bound(x, mu)
        .ok_or_else(|| Error::NotStabilized("no finite diameter bound".into()))?;
    let certified = 2.0 * d + mu;
    if !carrier.contains_ball(x.position, certified) {
        return Err(Error::NotStabilized(format!(
            "carrier does not contain the certified ball of radius {certified}"
        )));
    }
    let mut rng = rng::stream(seed, purpose::STABILIZATION, 0);
    let mut r = nb
        .nearest_distance(x.position)
        .filter(|r| *r > 0.0)
        .unwrap_or(certified)
        .min(certified);
    loop {
        if stable_at(x, config, model, &kg, &full, r, mu, insert_budget, trials, &mut rng)? {
            return Ok(r);
        }
        if r >= certified {
            return Err(Error::NotStabilized(format!(
                "cell changed within the certified radius {certified}"
            )));
        }
        r = (2.0 * r).min(certified);
    }
}

#[allow(clippy::too_many_arguments)]
fn stable_at<R: Rng>(
    x: &MarkedPoint,
    config: &MarkedConfiguration,
    model: WeightModel,
    kernel: &KernelGrid,
    full: &Cell,
    r: f64,
    mu: f64,
    insert_budget: usize,
    trials: usize,
    rng: &mut R,
) -> Result<bool> {
    const TOL: f64 = 1e-9;
    let inner = config.restrict_to_ball(x.position, r);
    if !cell_of(x, &inner, model, kernel)?.same_geometry(full, TOL) {
        return Ok(false);
    }
    let carrier = *config.carrier();
    for _ in 0..trials {
        let k = if insert_budget == 0 {
            0
        } else {
            rng.random_range(1..=insert_budget)
        };
        let mut pts: Vec<MarkedPoint> = inner.points().to_vec();
        while pts.len() < inner.len() + k {
            let y = Vec2::new(
                rng.random_range(carrier.lower.x..carrier.upper.x),
                rng.random_range(carrier.lower.y..carrier.upper.y),
            );
            if y.dist(x.position) <= r || pts.iter().any(|p| p.position == y) {
                continue;
            }
            let m = if mu > 0.0 { rng.random_range(0.0..=mu) } else { 0.0 };
            pts.push(MarkedPoint { position: y, mark: m });
        }
        let perturbed = MarkedConfiguration::new(pts, carrier)?;
        if !cell_of(x, &perturbed, model, kernel)?.same_geometry(full, TOL) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointproc::{lattice_fixture, AxisBox};
    use alloc::vec;

    fn square(l: f64) -> AxisBox {
        AxisBox::new(Vec2::new(-l, -l), Vec2::new(l, l)).unwrap()
    }

    #[test]
    fn sectors_cover_the_circle() {
        assert_eq!(cone_sector(Vec2::new(1.0, 0.0)), 0);
        assert_eq!(cone_sector(Vec2::new(0.0, 1.0)), 2);
        assert_eq!(cone_sector(Vec2::new(-1.0, 0.0)), 4);
        assert_eq!(cone_sector(Vec2::new(1.0, -1e-12)), 8);
    }

    #[test]
    fn empty_configuration_is_unbounded() {
        let c = MarkedConfiguration::empty(square(3.0));
        assert_eq!(diameter_bound(&MarkedPoint::new(0.0, 0.0, 0.0), &c, 0.0), None);
    }

    #[test]
    fn two_points_do_not_stabilize() {
        let c = MarkedConfiguration::new(
            vec![MarkedPoint::new(0.0, 0.0, 0.0), MarkedPoint::new(1.0, 0.0, 0.0)],
            square(5.0),
        )
        .unwrap();
        let r = stabilization_radius_empirical(
            &c.points()[0],
            &c,
            WeightModel::Voronoi,
            Kernel::Exact,
            3,
            5,
            1,
        );
        assert!(matches!(r, Err(Error::NotStabilized(_))));
    }

    #[test]
    fn lattice_radius_within_certified_bound() {
        let c = lattice_fixture(&square(12.0), 1.0, 0.0).unwrap();
        let x = MarkedPoint::new(0.0, 0.0, 0.0);
        let d = diameter_bound(&x, &c, 0.0).unwrap();
        let r = stabilization_radius_empirical(&x, &c, WeightModel::Voronoi, Kernel::Exact, 7, 20, 3)
            .unwrap();
        assert!(r <= 2.0 * d);
        assert!(r >= 1.0);
    }
}
