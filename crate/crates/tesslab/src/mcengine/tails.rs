use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tesslab_core::geometry::Neighborhood;
use tesslab_core::pointproc::{extend_carrier, sample_poisson_with};
use tesslab_core::rng::{self, purpose, TessRng};
use tesslab_core::stats::{linear_fit, quantile_sorted};
use tesslab_core::{CellShape, Error, MarkedPoint, Result, WeightModel};

use super::typical::{square, TYPICAL_HALF_SIDE, TYPICAL_MAX_HALF_SIDE};
use super::{collect_ordered, CellModel};

/// Rays used to trace Johnson–Mehl boundaries.
pub const JM_RAYS: usize = 720;

/// One typical cell's cone bound and realized circumradius about its
/// generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailSample {
    pub d_bound: f64,
    pub circumradius: f64,
}

/// Fit of `log P(D >= t)` on the upper quantile range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub thresholds: Vec<f64>,
    pub log_survival: Vec<f64>,
    /// Minus the slope of `log P(D >= t)` against `t^2`.
    pub fitted_rate: f64,
    pub intercept: f64,
    /// Coefficient of determination of the `t^2` fit.
    pub r_squared: f64,
    /// Slope of `log(-log P(D >= t))` against `log t`.
    pub fitted_exponent_alpha: f64,
    pub free_r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub fit: TailFit,
    pub samples: Vec<TailSample>,
    /// Samples whose circumradius exceeds the cone bound.
    pub containment_violations: usize,
    pub rejected: usize,
}

pub const TAIL_QUANTILE_LO: f64 = 0.9;
pub const TAIL_QUANTILE_HI: f64 = 0.999;
const TAIL_POINTS: usize = 25;

/// Draws the generators around an origin point until the cone bound is
/// exact (its sector witnesses lie in the sampled square) and `accept`
/// holds. Returns `None` when the square cap is reached.
fn grow_until<T>(
    cm: &CellModel,
    rng: &mut TessRng,
    mut accept: impl FnMut(&Neighborhood, &MarkedPoint, f64, f64) -> Result<Option<T>>,
) -> Result<Option<T>> {
    let mu = cm.mu();
    let x = MarkedPoint::new(0.0, 0.0, cm.marks.sample(rng));
    let mut g = TYPICAL_HALF_SIDE * cm.scale();
    let max_half = TYPICAL_MAX_HALF_SIDE * cm.scale();
    let mut config = sample_poisson_with(&square(g), cm.intensity, &cm.marks, rng)?;
    loop {
        let with = config.with_point(x)?;
        let nb = Neighborhood::new(&with);
        if let Some(d) = nb.diameter_bound(&x, mu) {
            if d / 2.0 <= g {
                if let Some(t) = accept(&nb, &x, d, g)? {
                    return Ok(Some(t));
                }
            }
        }
        if 2.0 * g > max_half {
            return Ok(None);
        }
        g *= 2.0;
        config = extend_carrier(&config, &square(g), cm.intensity, &cm.marks, rng)?;
    }
}

/// Cone bound of a typical cell.
pub(crate) fn sample_d_bound(cm: &CellModel, rng: &mut TessRng) -> Result<Option<f64>> {
    grow_until(cm, rng, |_, _, d, _| Ok(Some(d)))
}

fn sample_tail(cm: &CellModel, rng: &mut TessRng) -> Result<Option<TailSample>> {
    let mu = cm.mu();
    grow_until(cm, rng, |nb, x, d, _| {
        let carrier = nb.config().carrier();
        let (reach, certified) = match cm.model {
            WeightModel::JohnsonMehl => {
                let Some(bound) = nb.jm_reach_bound(x, JM_RAYS)? else {
                    return Ok(Some(TailSample {
                        d_bound: d,
                        circumradius: 0.0,
                    }));
                };
                let traced = nb
                    .jm_boundary(x, JM_RAYS)?
                    .map(|b| b.iter().map(|p| p.dist(x.position)).fold(0.0, f64::max))
                    .unwrap_or(0.0);
                let by_reach = carrier.contains_ball(x.position, 2.0 * bound + mu);
                (traced, by_reach || carrier.contains_ball(x.position, 2.0 * d + mu))
            }
            _ => {
                let cell = nb.cell_exact(x, cm.model, carrier)?;
                let certified = nb.is_certified(&cell, cm.model, mu);
                let reach = match cell.shape {
                    CellShape::Empty => 0.0,
                    _ => cell.reach_from_generator().unwrap_or(f64::INFINITY),
                };
                (reach, certified)
            }
        };
        Ok(certified.then_some(TailSample {
            d_bound: d,
            circumradius: reach,
        }))
    })
}

/// Least squares fits of the empirical survival function of `d` over the
/// quantile range `[0.9, 0.999]`.
pub fn fit_tail(d: &[f64]) -> Result<TailFit> {
    let mut sorted: Vec<f64> = d.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let (s_hi, s_lo) = (1.0 - TAIL_QUANTILE_LO, 1.0 - TAIL_QUANTILE_HI);
    let mut thresholds = Vec::new();
    let mut log_survival = Vec::new();
    for k in 0..TAIL_POINTS {
        // survival levels spaced evenly on a log scale
        let s = s_hi * (s_lo / s_hi).powf(k as f64 / (TAIL_POINTS - 1) as f64);
        let t = quantile_sorted(&sorted, 1.0 - s);
        let above = sorted.len() - sorted.partition_point(|v| *v < t);
        if above == 0 || thresholds.last().is_some_and(|l| *l >= t) {
            continue;
        }
        thresholds.push(t);
        log_survival.push((above as f64 / n).ln());
    }
    if thresholds.len() < 3 {
        return Err(Error::DegenerateSample("too few distinct tail thresholds".into()));
    }
    let t2: Vec<f64> = thresholds.iter().map(|t| t * t).collect();
    let fixed = linear_fit(&t2, &log_survival)?;
    let lt: Vec<f64> = thresholds.iter().map(|t| t.ln()).collect();
    let llog: Vec<f64> = log_survival.iter().map(|l| (-l).ln()).collect();
    let free = linear_fit(&lt, &llog)?;
    Ok(TailFit {
        thresholds,
        log_survival,
        fitted_rate: -fixed.slope,
        intercept: fixed.intercept,
        r_squared: fixed.r_squared,
        fitted_exponent_alpha: free.slope,
        free_r_squared: free.r_squared,
    })
}

/// Samples `n` typical cells, recording the cone bound `D` and the realized
/// circumradius about the generator, and fits the tail of `D`.
/// Johnson–Mehl circumradii are traced along `JM_RAYS` rays.
pub fn diameter_tail_experiment(cm: &CellModel, n: usize, seed: u64) -> Result<TailReport> {
    cm.validate()?;
    if n < 1000 {
        return Err(Error::InvalidParameter(format!("tail experiments need n >= 1000, got {n}")));
    }
    let draws: Vec<Option<TailSample>> = collect_ordered(
        (0..n)
            .into_par_iter()
            .map(|i| sample_tail(cm, &mut rng::stream(seed, purpose::TAIL, i as u64)))
            .collect(),
    )?;
    let rejected = draws.iter().filter(|d| d.is_none()).count();
    check_rejections(rejected, n)?;
    let samples: Vec<TailSample> = draws.into_iter().flatten().collect();
    let containment_violations = samples.iter().filter(|s| s.circumradius > s.d_bound).count();
    let d: Vec<f64> = samples.iter().map(|s| s.d_bound).collect();
    Ok(TailReport {
        fit: fit_tail(&d)?,
        samples,
        containment_violations,
        rejected,
    })
}

/// Cone bounds of `n` typical cells (the pilot behind the automatic guard).
pub fn d_bound_samples(cm: &CellModel, n: usize, seed: u64) -> Result<Vec<f64>> {
    cm.validate()?;
    let draws: Vec<Option<f64>> = collect_ordered(
        (0..n)
            .into_par_iter()
            .map(|i| sample_d_bound(cm, &mut rng::stream(seed, purpose::PILOT, i as u64)))
            .collect(),
    )?;
    let rejected = draws.iter().filter(|d| d.is_none()).count();
    check_rejections(rejected, n)?;
    Ok(draws.into_iter().flatten().collect())
}

pub(crate) fn check_rejections(rejected: usize, n: usize) -> Result<()> {
    if rejected as f64 > super::typical::MAX_REJECTION_RATE * n as f64 {
        return Err(Error::NotStabilized(format!(
            "{rejected} of {n} typical cells were not certified"
        )));
    }
    Ok(())
}
