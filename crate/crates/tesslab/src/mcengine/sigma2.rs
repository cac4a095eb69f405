use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tesslab_core::geometry::{KernelGrid, Neighborhood};
use tesslab_core::pointproc::{extend_carrier, sample_poisson_with};
use tesslab_core::rng::{self, purpose, TessRng};
use tesslab_core::stats::{mean, quantile_sorted, variance};
use tesslab_core::{
    evaluate, AxisBox, Characteristic, Error, MarkedConfiguration, MarkedPoint, Result, Vec2,
};

use super::tails::{check_rejections, d_bound_samples};
use super::typical::{random_grid, sample_typical_cell_with, TYPICAL_MAX_HALF_SIDE};
use super::{collect_ordered, CellModel};

/// Width of the annuli stratifying the pair integral, in units of the
/// process scale.
pub const SIGMA2_ANNULUS_WIDTH: f64 = 0.25;
pub const SIGMA2_MAX_ANNULI: usize = 400;
/// Share of the pairs spread evenly over the annuli before the rest is
/// allocated in proportion to each annulus' area times its spread.
pub const SIGMA2_PILOT_SHARE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnulusTerm {
    pub r_lo: f64,
    pub r_hi: f64,
    pub n: usize,
    pub integral: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sigma2Estimate {
    pub sigma2: f64,
    pub stderr: f64,
    /// `E xi(0, eta)^2`.
    pub term1: f64,
    pub term1_stderr: f64,
    /// Covariance integral over `B_{r_max}(0)`.
    pub term2: f64,
    pub term2_stderr: f64,
    /// `E xi(0, eta)` from the single draws.
    pub mean_score: f64,
    pub r_max: f64,
    pub n_singles: usize,
    pub n_pairs: usize,
    pub rejected: usize,
    /// Per-annulus contributions; the outer ones show the decay of the
    /// covariance that justifies the truncation.
    pub annuli: Vec<AnnulusTerm>,
}

/// Twice the 0.999 quantile of `2 D + mu` over a pilot of typical cells.
pub fn default_r_max(cm: &CellModel, pilot: usize, seed: u64) -> Result<f64> {
    let mut d = d_bound_samples(cm, pilot, seed)?;
    d.sort_by(f64::total_cmp);
    Ok(2.0 * (2.0 * quantile_sorted(&d, 0.999) + cm.mu()))
}

fn score(
    nb: &Neighborhood,
    p: &MarkedPoint,
    cm: &CellModel,
    kg: &KernelGrid,
    h: &Characteristic,
) -> Result<Option<f64>> {
    let cell = nb.cell(p, cm.model, kg)?;
    Ok(nb.is_certified(&cell, cm.model, cm.mu()).then(|| evaluate(h, &cell)))
}

fn pair_box(x: Vec2, g: f64) -> AxisBox {
    AxisBox {
        lower: Vec2::new(x.x.min(0.0) - g, x.y.min(0.0) - g),
        upper: Vec2::new(x.x.max(0.0) + g, x.y.max(0.0) + g),
    }
}

/// `xi(0, eta + {0, x}) xi(x, eta + {0, x}) - U V` for `x` uniform on the
/// annulus, where `U` and `V` are the scores of `0` and `x` in two
/// independent Poisson samples assembled from `eta` and an independent copy
/// by swapping their halves across the bisector of `0` and `x`.
fn pair_term(
    cm: &CellModel,
    h: &Characteristic,
    guard: f64,
    r_lo: f64,
    r_hi: f64,
    rng: &mut TessRng,
) -> Result<Option<f64>> {
    let r = (r_lo * r_lo + rng.random::<f64>() * (r_hi * r_hi - r_lo * r_lo)).sqrt();
    let theta = 2.0 * PI * rng.random::<f64>();
    let xp = Vec2::new(r * theta.cos(), r * theta.sin());
    let o = MarkedPoint::new(0.0, 0.0, cm.marks.sample(rng));
    let x = MarkedPoint {
        position: xp,
        mark: cm.marks.sample(rng),
    };
    let kg = random_grid(&cm.kernel, rng);
    let near_origin = |p: &MarkedPoint| p.position.dot(xp) <= 0.5 * xp.norm2();
    let max_half = TYPICAL_MAX_HALF_SIDE * cm.scale();
    let mut g = guard;
    let mut eta = sample_poisson_with(&pair_box(xp, g), cm.intensity, &cm.marks, rng)?;
    let mut copy = sample_poisson_with(&pair_box(xp, g), cm.intensity, &cm.marks, rng)?;
    loop {
        let carrier = *eta.carrier();
        let mut both = eta.points().to_vec();
        both.extend([o, x]);
        let mut u_pts: Vec<MarkedPoint> = eta.points().iter().filter(|p| near_origin(p)).copied().collect();
        u_pts.extend(copy.points().iter().filter(|p| !near_origin(p)));
        u_pts.push(o);
        let mut v_pts: Vec<MarkedPoint> = copy.points().iter().filter(|p| near_origin(p)).copied().collect();
        v_pts.extend(eta.points().iter().filter(|p| !near_origin(p)));
        v_pts.push(x);
        let both = MarkedConfiguration::new(both, carrier)?;
        let u_conf = MarkedConfiguration::new(u_pts, carrier)?;
        let v_conf = MarkedConfiguration::new(v_pts, carrier)?;
        let nb = Neighborhood::new(&both);
        let terms = (
            score(&nb, &o, cm, &kg, h)?,
            score(&nb, &x, cm, &kg, h)?,
            score(&Neighborhood::new(&u_conf), &o, cm, &kg, h)?,
            score(&Neighborhood::new(&v_conf), &x, cm, &kg, h)?,
        );
        if let (Some(a), Some(b), Some(u), Some(v)) = terms {
            return Ok(Some(a * b - u * v));
        }
        if 2.0 * g > max_half {
            return Ok(None);
        }
        g *= 2.0;
        eta = extend_carrier(&eta, &pair_box(xp, g), cm.intensity, &cm.marks, rng)?;
        copy = extend_carrier(&copy, &pair_box(xp, g), cm.intensity, &cm.marks, rng)?;
    }
}

/// Splits `total` in proportion to `weights`, largest remainders first.
fn allocate(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let k = weights.len();
    if !(sum > 0.0) {
        return (0..k).map(|i| total / k + usize::from(i < total % k)).collect();
    }
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut n: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| (exact[b] - n[b] as f64).total_cmp(&(exact[a] - n[a] as f64)).then(a.cmp(&b)));
    let short = total - n.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        n[i] += 1;
    }
    n
}

fn run_pairs(
    cm: &CellModel,
    h: &Characteristic,
    guard: f64,
    edges: &[f64],
    plan: &[(usize, u64)],
    seed: u64,
) -> Result<Vec<(usize, Option<f64>)>> {
    collect_ordered(
        plan.par_iter()
            .map(|&(k, index)| {
                let mut rng = rng::stream(seed, purpose::SIGMA2_PAIR, index);
                Ok((k, pair_term(cm, h, guard, edges[k], edges[k + 1], &mut rng)?))
            })
            .collect(),
    )
}

/// Estimate of `sigma^2 = E xi(0)^2 + int (E xi(0) xi(x) - (E xi)^2) dx`
/// with the integral truncated to `B_{r_max}(0)`. Samples start as squares
/// of half-side `guard` around the inserted points and grow until every
/// score is certified.
pub fn estimate_sigma2(
    cm: &CellModel,
    h: &Characteristic,
    guard: f64,
    r_max: f64,
    n_singles: usize,
    n_pairs: usize,
    seed: u64,
) -> Result<Sigma2Estimate> {
    cm.validate()?;
    h.validate()?;
    if !(r_max > 0.0 && r_max.is_finite()) {
        return Err(Error::InvalidParameter(format!("r_max must be positive, got {r_max}")));
    }
    if !(guard > 0.0 && guard.is_finite()) {
        return Err(Error::InvalidParameter(format!("guard must be positive, got {guard}")));
    }
    if n_singles < 100 || n_pairs < 100 {
        return Err(Error::InvalidParameter("n_singles and n_pairs must be at least 100".into()));
    }
    let singles: Vec<Option<f64>> = collect_ordered(
        (0..n_singles)
            .into_par_iter()
            .map(|i| {
                let mut rng = rng::stream(seed, purpose::SIGMA2_SINGLE, i as u64);
                let t = sample_typical_cell_with(cm, guard, &mut rng)?;
                Ok((!t.rejected()).then(|| evaluate(h, &t.cell)))
            })
            .collect(),
    )?;
    let mut rejected = singles.iter().filter(|s| s.is_none()).count();
    check_rejections(rejected, n_singles)?;
    let xi: Vec<f64> = singles.into_iter().flatten().collect();
    let sq: Vec<f64> = xi.iter().map(|v| v * v).collect();
    let term1 = mean(&sq);
    let term1_stderr = (variance(&sq) / sq.len() as f64).sqrt();

    let k = ((r_max / (SIGMA2_ANNULUS_WIDTH * cm.scale())).ceil() as usize).clamp(4, SIGMA2_MAX_ANNULI);
    let edges: Vec<f64> = (0..=k).map(|i| r_max * i as f64 / k as f64).collect();
    let area: Vec<f64> = (0..k).map(|i| PI * (edges[i + 1].powi(2) - edges[i].powi(2))).collect();
    let n_pilot = ((n_pairs as f64 * SIGMA2_PILOT_SHARE) as usize).max(2 * k).min(n_pairs);
    let pilot_plan: Vec<(usize, u64)> = (0..n_pilot).map(|i| (i % k, i as u64)).collect();
    let mut draws = run_pairs(cm, h, guard, &edges, &pilot_plan, seed)?;
    let spread: Vec<f64> = (0..k)
        .map(|a| {
            let v: Vec<f64> = draws.iter().filter(|d| d.0 == a).filter_map(|d| d.1).collect();
            if v.len() >= 2 { area[a] * variance(&v).sqrt() } else { area[a] }
        })
        .collect();
    let extra = allocate(n_pairs - n_pilot, &spread);
    let mut plan = Vec::with_capacity(n_pairs - n_pilot);
    let mut index = n_pilot as u64;
    for (a, &m) in extra.iter().enumerate() {
        for _ in 0..m {
            plan.push((a, index));
            index += 1;
        }
    }
    draws.extend(run_pairs(cm, h, guard, &edges, &plan, seed)?);
    let pair_rejected = draws.iter().filter(|d| d.1.is_none()).count();
    check_rejections(pair_rejected, n_pairs)?;
    rejected += pair_rejected;

    let mut annuli = Vec::with_capacity(k);
    for a in 0..k {
        let v: Vec<f64> = draws.iter().filter(|d| d.0 == a).filter_map(|d| d.1).collect();
        let (m, se) = match v.len() {
            0 => (0.0, 0.0),
            1 => (v[0], 0.0),
            n => (mean(&v), (variance(&v) / n as f64).sqrt()),
        };
        annuli.push(AnnulusTerm {
            r_lo: edges[a],
            r_hi: edges[a + 1],
            n: v.len(),
            integral: area[a] * m,
            stderr: area[a] * se,
        });
    }
    let term2: f64 = annuli.iter().map(|a| a.integral).sum();
    let term2_stderr = annuli.iter().map(|a| a.stderr * a.stderr).sum::<f64>().sqrt();
    Ok(Sigma2Estimate {
        sigma2: term1 + term2,
        stderr: term1_stderr.hypot(term2_stderr),
        term1,
        term1_stderr,
        term2,
        term2_stderr,
        mean_score: mean(&xi),
        r_max,
        n_singles,
        n_pairs,
        rejected,
        annuli,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tesslab_core::{Kernel, MarkDistribution, WeightModel};

    #[test]
    fn allocation_sums_to_total() {
        assert_eq!(allocate(10, &[1.0, 1.0, 2.0]), vec![3, 2, 5]);
        assert_eq!(allocate(5, &[0.0, 0.0]), vec![3, 2]);
        assert_eq!(allocate(7, &[0.0, 3.0]).iter().sum::<usize>(), 7);
    }

    #[test]
    fn zero_score_gives_zero() {
        let cm = CellModel::new(WeightModel::Voronoi, MarkDistribution::PointMass(0.0), Kernel::Exact);
        // no bounded nonempty cell has volume below 1e-300
        let h = Characteristic::IndicatorVolumeLeq { t: 1e-300 };
        let s = estimate_sigma2(&cm, &h, 6.0, 6.0, 100, 200, 1).unwrap();
        assert_eq!(s.sigma2, 0.0);
        assert_eq!(s.stderr, 0.0);
    }

    #[test]
    fn far_pairs_cancel_exactly() {
        let cm = CellModel::new(WeightModel::Laguerre, MarkDistribution::Uniform { a: 0.0, b: 0.5 }, Kernel::Exact);
        for i in 0..20 {
            let mut rng = rng::stream(5, purpose::SIGMA2_PAIR, i);
            let a = pair_term(&cm, &Characteristic::Volume, 8.0, 30.0, 31.0, &mut rng).unwrap().unwrap();
            assert!(a.abs() < 1e-9, "{a}");
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let cm = CellModel::new(WeightModel::Voronoi, MarkDistribution::PointMass(0.0), Kernel::Exact);
        assert!(estimate_sigma2(&cm, &Characteristic::Volume, 6.0, 0.0, 100, 100, 1).is_err());
        assert!(estimate_sigma2(&cm, &Characteristic::Volume, 6.0, 5.0, 10, 100, 1).is_err());
    }
}
