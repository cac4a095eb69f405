use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tesslab_core::pointproc::{extend_carrier, sample_guarded_with};
use tesslab_core::rng::{self, purpose};
use tesslab_core::stats::{ks_statistic, mean, KSResult, SummaryStats};
use tesslab_core::{
    estimate_many_with_mark_bound, evaluate, AxisBox, Characteristic, Error, EstimateResult, EstimatorKind,
    Exclusion, GridSpec, Kernel, MarkedConfiguration, Result,
};

use super::guard::resolve_guard;
use super::tails::check_rejections;
use super::typical::{sample_typical_cell_with, TYPICAL_HALF_SIDE};
use super::{collect_ordered, ExperimentConfig};

/// Carrier extensions stop once the guard exceeds this multiple of
/// `max(initial guard, window side)`.
pub const EXTENSION_CAP_FACTOR: f64 = 8.0;

/// Stream index of replication `rep` at the `lambda_index`-th window.
pub fn stream_index(lambda_index: usize, rep: usize) -> u64 {
    ((lambda_index as u64) << 32) | rep as u64
}

/// Estimates on one guarded sample, after enough carrier extensions to
/// certify every cell that can enter them.
#[derive(Debug, Clone)]
pub struct CertifiedEstimate {
    pub results: Vec<EstimateResult>,
    pub config: MarkedConfiguration,
    pub window: AxisBox,
    pub guard: f64,
    pub extensions: usize,
}

/// Samples the process on the window of volume `lambda` dilated by `guard`
/// from stream `index`, and estimates every characteristic of `hs`.
pub fn certified_estimate(
    cfg: &ExperimentConfig,
    guard: f64,
    lambda: f64,
    index: u64,
    hs: &[Characteristic],
    kind: EstimatorKind,
) -> Result<CertifiedEstimate> {
    let window = cfg.window(lambda)?;
    let mut rng = rng::stream(cfg.master_seed, purpose::ESTIMATOR, index);
    let mut g = guard;
    let mut config = sample_guarded_with(&window, g, cfg.intensity, &cfg.mark_dist, &mut rng)?;
    let cap = EXTENSION_CAP_FACTOR * guard.max(window.side(0));
    let mut extensions = 0;
    loop {
        match estimate_many_with_mark_bound(&config, &window, cfg.model, hs, kind, cfg.kernel, cfg.mu()) {
            Ok(results) => {
                return Ok(CertifiedEstimate {
                    results,
                    config,
                    window,
                    guard: g,
                    extensions,
                })
            }
            Err(Error::GuardTooSmall { x, y }) => {
                let next = (2.0 * g).max(4.0 / cfg.intensity.sqrt());
                if next > cap {
                    return Err(Error::NotStabilized(format!(
                        "cell of generator at ({x}, {y}) not certified with the guard at its cap {cap}"
                    )));
                }
                g = next;
                extensions += 1;
                config = extend_carrier(&config, &window.dilate(g), cfg.intensity, &cfg.mark_dist, &mut rng)?;
            }
            Err(e) => return Err(e),
        }
    }
}

/// One replication of the estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replicate {
    pub replication: usize,
    pub lambda: f64,
    pub kind: EstimatorKind,
    /// One value per characteristic of the run.
    pub values: Vec<f64>,
    pub n_cells_included: usize,
    pub n_cells_excluded_threshold: usize,
    /// Carrier extensions needed because some cell was not certified.
    pub n_unbounded: usize,
    pub guard: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorRun {
    pub lambda: f64,
    pub kind: EstimatorKind,
    pub characteristics: Vec<Characteristic>,
    pub replicates: Vec<Replicate>,
}

impl EstimatorRun {
    pub fn values(&self, k: usize) -> Vec<f64> {
        self.replicates.iter().map(|r| r.values[k]).collect()
    }

    pub fn summary(&self, k: usize, seed: u64) -> Result<SummaryStats> {
        SummaryStats::from_sample(&self.values(k), self.lambda, seed)
    }

    pub fn total_extensions(&self) -> usize {
        self.replicates.iter().map(|r| r.n_unbounded).sum()
    }
}

/// `cfg.replications` independent replications at window volume `lambda`,
/// drawn from the streams of `lambda_index`.
pub fn run_estimator(
    cfg: &ExperimentConfig,
    guard: f64,
    lambda: f64,
    lambda_index: usize,
    hs: &[Characteristic],
    kind: EstimatorKind,
) -> Result<EstimatorRun> {
    cfg.validate()?;
    let reps = collect_ordered(
        (0..cfg.replications)
            .into_par_iter()
            .map(|rep| {
                let e = certified_estimate(cfg, guard, lambda, stream_index(lambda_index, rep), hs, kind)?;
                let first = &e.results[0];
                Ok(Replicate {
                    replication: rep,
                    lambda,
                    kind,
                    values: e.results.iter().map(|r| r.value).collect(),
                    n_cells_included: first.n_included(),
                    n_cells_excluded_threshold: first.n_excluded(Exclusion::BelowHalfWindow),
                    n_unbounded: e.extensions,
                    guard: e.guard,
                })
            })
            .collect(),
    )?;
    Ok(EstimatorRun {
        lambda,
        kind,
        characteristics: hs.to_vec(),
        replicates: reps,
    })
}

/// Typical-cell draws with the score of every characteristic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRun {
    pub characteristics: Vec<Characteristic>,
    /// Scores of each accepted draw, one per characteristic.
    pub values: Vec<Vec<f64>>,
    pub n: usize,
    pub rejected: usize,
    /// Raster spacing used, aligned as in the estimator's window.
    pub grid_h: Option<f64>,
}

impl OracleRun {
    pub fn values(&self, k: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[k]).collect()
    }
}

/// `n` typical cells. Raster cells use the spacing the estimator gets on
/// the window of volume `lambda`, so both target the same mean.
pub fn run_oracle(
    cfg: &ExperimentConfig,
    lambda: f64,
    lambda_index: usize,
    hs: &[Characteristic],
    n: usize,
) -> Result<OracleRun> {
    cfg.validate()?;
    let mut cm = cfg.cell_model();
    let mut grid_h = None;
    if let Kernel::Raster { grid_h: h } = cfg.kernel {
        let (grid, _, _) = GridSpec::aligned_to(&cfg.window(lambda)?, h)?;
        cm.kernel = Kernel::Raster { grid_h: grid.h };
        grid_h = Some(grid.h);
    }
    let start = TYPICAL_HALF_SIDE * cm.scale();
    let draws: Vec<Option<Vec<f64>>> = collect_ordered(
        (0..n)
            .into_par_iter()
            .map(|i| {
                let index = if grid_h.is_some() { stream_index(lambda_index, i) } else { i as u64 };
                let mut rng = rng::stream(cfg.master_seed, purpose::ORACLE, index);
                let t = sample_typical_cell_with(&cm, start, &mut rng)?;
                Ok((!t.rejected()).then(|| hs.iter().map(|h| evaluate(h, &t.cell)).collect()))
            })
            .collect(),
    )?;
    let rejected = draws.iter().filter(|d| d.is_none()).count();
    check_rejections(rejected, n)?;
    Ok(OracleRun {
        characteristics: hs.to_vec(),
        values: draws.into_iter().flatten().collect(),
        n,
        rejected,
        grid_h,
    })
}

/// Estimator mean against oracle mean for one characteristic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub characteristic: Characteristic,
    pub lambda: f64,
    pub estimator: SummaryStats,
    pub oracle: SummaryStats,
    pub difference: f64,
    pub combined_stderr: f64,
    /// `difference / combined_stderr`.
    pub z: f64,
    /// Empirical `E |score|^p` of the oracle draws.
    pub oracle_moment_p: f64,
}

pub fn agreement(
    run: &EstimatorRun,
    oracle: &OracleRun,
    k: usize,
    moment_p: f64,
    seed: u64,
) -> Result<Agreement> {
    let estimator = run.summary(k, seed)?;
    let ov = oracle.values(k);
    let oracle_stats = SummaryStats::from_sample(&ov, 1.0, seed.wrapping_add(1))?;
    let difference = estimator.mean - oracle_stats.mean;
    let combined_stderr = estimator.stderr_mean.hypot(oracle_stats.stderr_mean);
    Ok(Agreement {
        characteristic: run.characteristics[k],
        lambda: run.lambda,
        estimator,
        oracle: oracle_stats,
        difference,
        combined_stderr,
        z: if combined_stderr > 0.0 { difference / combined_stderr } else if difference == 0.0 { 0.0 } else { f64::INFINITY },
        oracle_moment_p: mean(&ov.iter().map(|v| v.abs().powf(moment_p)).collect::<Vec<_>>()),
    })
}

/// Estimator and typical-cell oracle for `cfg.characteristic` at the first
/// window volume, with the guard resolved from `cfg`.
pub fn run_unbiasedness_experiment(cfg: &ExperimentConfig) -> Result<(SummaryStats, SummaryStats)> {
    let guard = resolve_guard(cfg)?.guard;
    let hs = [cfg.characteristic];
    let lambda = cfg.lambda_values[0];
    let run = run_estimator(cfg, guard, lambda, 0, &hs, cfg.kind)?;
    let oracle = run_oracle(cfg, lambda, 0, &hs, cfg.oracle_count())?;
    let a = agreement(&run, &oracle, 0, cfg.moment_p, cfg.master_seed)?;
    Ok((a.estimator, a.oracle))
}

/// `lambda * Var` of a truncated estimator at every window volume.
pub fn run_variance_experiment(cfg: &ExperimentConfig) -> Result<Vec<(f64, SummaryStats)>> {
    let guard = resolve_guard(cfg)?.guard;
    variance_with_guard(cfg, guard)
}

pub fn variance_with_guard(cfg: &ExperimentConfig, guard: f64) -> Result<Vec<(f64, SummaryStats)>> {
    if !cfg.kind.truncated() {
        return Err(Error::InvalidParameter(format!(
            "variance experiments need a truncated estimator, got {}",
            cfg.kind.name()
        )));
    }
    cfg.lambda_values
        .iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let run = run_estimator(cfg, guard, lambda, i, &[cfg.characteristic], cfg.kind)?;
            Ok((lambda, run.summary(0, cfg.master_seed.wrapping_add(i as u64))?))
        })
        .collect()
}

/// Values standardized as `sqrt(lambda) (v - mean)` over its sample
/// standard deviation, with the Kolmogorov–Smirnov test against `N(0, 1)`.
pub fn clt_from_values(values: &[f64], lambda: f64) -> Result<(Vec<f64>, KSResult)> {
    let m = mean(values);
    let scaled: Vec<f64> = values.iter().map(|v| lambda.sqrt() * (v - m)).collect();
    let sd = tesslab_core::stats::variance(&scaled).sqrt();
    if !(sd > 0.0) {
        return Err(Error::DegenerateSample("the replicated values have zero variance".into()));
    }
    let z: Vec<f64> = scaled.iter().map(|s| s / sd).collect();
    let ks = ks_statistic(&z, 0.0, 1.0)?;
    Ok((z, ks))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltResult {
    pub lambda: f64,
    pub standardized: Vec<f64>,
    pub ks: KSResult,
    pub sample_mean: f64,
    /// Sample standard deviation of `sqrt(lambda) H`.
    pub scaled_sd: f64,
    /// Present when the configuration asks for oracle draws.
    pub oracle_mean: Option<f64>,
    pub ks_oracle_centered: Option<KSResult>,
    pub run: EstimatorRun,
}

pub const MIN_CLT_REPLICATIONS: usize = 500;

pub fn run_clt_experiment(cfg: &ExperimentConfig, lambda: f64) -> Result<CltResult> {
    let guard = resolve_guard(cfg)?.guard;
    clt_with_guard(cfg, guard, lambda)
}

/// CLT experiment at `lambda`. Replications reuse the streams of `lambda`'s
/// position in `lambda_values` when it is listed there. The oracle-centered
/// test runs when `oracle_replications` is set.
pub fn clt_with_guard(cfg: &ExperimentConfig, guard: f64, lambda: f64) -> Result<CltResult> {
    if cfg.replications < MIN_CLT_REPLICATIONS {
        return Err(Error::InvalidParameter(format!(
            "CLT experiments need at least {MIN_CLT_REPLICATIONS} replications, got {}",
            cfg.replications
        )));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    let li = cfg
        .lambda_values
        .iter()
        .position(|l| *l == lambda)
        .unwrap_or(cfg.lambda_values.len());
    let run = run_estimator(cfg, guard, lambda, li, &[cfg.characteristic], cfg.kind)?;
    let values = run.values(0);
    let (standardized, ks) = clt_from_values(&values, lambda)?;
    let sample_mean = mean(&values);
    let scaled_sd = lambda.sqrt() * tesslab_core::stats::variance(&values).sqrt();
    let (oracle_mean, ks_oracle_centered) = match cfg.oracle_replications {
        Some(n) => {
            let o = run_oracle(cfg, lambda, li, &[cfg.characteristic], n)?;
            let om = mean(&o.values(0));
            let z: Vec<f64> = values.iter().map(|v| lambda.sqrt() * (v - om) / scaled_sd).collect();
            (Some(om), Some(ks_statistic(&z, 0.0, 1.0)?))
        }
        None => (None, None),
    };
    Ok(CltResult {
        lambda,
        standardized,
        ks,
        sample_mean,
        scaled_sd,
        oracle_mean,
        ks_oracle_centered,
        run,
    })
}

/// Means of the naive estimator and of the truncated window-sample
/// estimator on the same samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Consistency {
    pub lambda: f64,
    pub naive: SummaryStats,
    pub truncated: SummaryStats,
    /// Mean of the per-replication differences and its standard error.
    pub gap: f64,
    pub gap_stderr: f64,
}

pub fn run_consistency_experiment(cfg: &ExperimentConfig, guard: f64) -> Result<Vec<Consistency>> {
    cfg.validate()?;
    let hs = [cfg.characteristic];
    cfg.lambda_values
        .iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let pairs: Vec<(f64, f64)> = collect_ordered(
                (0..cfg.replications)
                    .into_par_iter()
                    .map(|rep| {
                        let e = certified_estimate(
                            cfg,
                            guard,
                            lambda,
                            stream_index(i, rep),
                            &hs,
                            EstimatorKind::TruncatedWindowSample,
                        )?;
                        // same carrier, so every cell is certified already
                        let naive = estimate_many_with_mark_bound(
                            &e.config,
                            &e.window,
                            cfg.model,
                            &hs,
                            EstimatorKind::Naive,
                            cfg.kernel,
                            cfg.mu(),
                        )?;
                        Ok((naive[0].value, e.results[0].value))
                    })
                    .collect(),
            )?;
            let naive: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let trunc: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let diff: Vec<f64> = pairs.iter().map(|p| p.0 - p.1).collect();
            let seed = cfg.master_seed.wrapping_add(i as u64);
            Ok(Consistency {
                lambda,
                naive: SummaryStats::from_sample(&naive, lambda, seed)?,
                truncated: SummaryStats::from_sample(&trunc, lambda, seed)?,
                gap: mean(&diff),
                gap_stderr: (tesslab_core::stats::variance(&diff) / diff.len() as f64).sqrt(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcengine::GuardSpec;
    use tesslab_core::WeightModel;

    fn small(kind: EstimatorKind) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(WeightModel::Voronoi, Characteristic::Volume, vec![16.0, 36.0], 20);
        c.kind = kind;
        c.guard = GuardSpec::Fixed(3.0);
        c.master_seed = 9;
        c
    }

    #[test]
    fn small_guard_is_extended_not_rejected() {
        let c = small(EstimatorKind::FullSample);
        let run = run_estimator(&c, 0.5, 16.0, 0, &[Characteristic::Volume], c.kind).unwrap();
        assert!(run.total_extensions() > 0);
        assert_eq!(run.replicates.len(), 20);
        let again = run_estimator(&c, 0.5, 16.0, 0, &[Characteristic::Volume], c.kind).unwrap();
        assert_eq!(run, again);
    }

    #[test]
    fn scaling_the_window_streams_is_independent() {
        let c = small(EstimatorKind::FullSample);
        let a = run_estimator(&c, 3.0, 16.0, 0, &[Characteristic::Volume], c.kind).unwrap();
        let b = run_estimator(&c, 3.0, 16.0, 1, &[Characteristic::Volume], c.kind).unwrap();
        assert_ne!(a.values(0), b.values(0));
    }

    #[test]
    fn variance_needs_a_truncated_kind() {
        assert!(variance_with_guard(&small(EstimatorKind::FullSample), 3.0).is_err());
        let v = variance_with_guard(&small(EstimatorKind::TruncatedFullSample), 3.0).unwrap();
        assert_eq!(v.len(), 2);
        assert!(v.iter().all(|(_, s)| s.variance >= 0.0));
    }

    #[test]
    fn clt_rejects_constant_and_short_samples() {
        assert!(matches!(clt_from_values(&[2.0; 20], 16.0), Err(Error::DegenerateSample(_))));
        let mut c = small(EstimatorKind::FullSample);
        c.replications = 100;
        assert!(clt_with_guard(&c, 3.0, 16.0).is_err());
    }

    #[test]
    fn one_replication_is_invalid() {
        let mut c = small(EstimatorKind::FullSample);
        c.replications = 1;
        assert!(matches!(run_unbiasedness_experiment(&c), Err(Error::InvalidParameter(_))));
    }
}
