//! Monte Carlo experiments: typical-cell oracle, unbiasedness, variance
//! asymptotics, the `sigma^2` integral, CLT tests, diameter tails,
//! stabilization checks and the add-one cost.
//!
//! Every replication draws from its own ChaCha8 stream, keyed by the master
//! seed, a purpose tag and the replication index. Replications run on the
//! current rayon pool and are gathered in index order, so results do not
//! depend on the number of threads.

mod config;
mod experiments;
mod guard;
mod sigma2;
mod stabilization;
mod tails;
mod typical;

pub use config::{CellModel, ExperimentConfig, GuardSpec};
pub use experiments::{
    agreement, certified_estimate, clt_from_values, clt_with_guard, run_clt_experiment,
    run_consistency_experiment, run_estimator, run_oracle, run_unbiasedness_experiment,
    run_variance_experiment, stream_index, variance_with_guard, Agreement, CertifiedEstimate, CltResult,
    Consistency, EstimatorRun, OracleRun, Replicate, EXTENSION_CAP_FACTOR, MIN_CLT_REPLICATIONS,
};
pub use guard::{resolve_guard, GuardResolution, GUARD_QUANTILE, PILOT_SAMPLES};
pub use sigma2::{default_r_max, estimate_sigma2, AnnulusTerm, Sigma2Estimate, SIGMA2_ANNULUS_WIDTH};
pub use stabilization::{
    add_one_cost, stabilization_experiment, StabilizationCheck, StabilizationReport, GEOMETRY_TOL,
};
pub use tails::{
    d_bound_samples, diameter_tail_experiment, fit_tail, TailFit, TailReport, TailSample, JM_RAYS,
    TAIL_QUANTILE_HI, TAIL_QUANTILE_LO,
};
pub use typical::{
    sample_typical_cell, sample_typical_cell_with, TypicalCell, MAX_REJECTION_RATE, TYPICAL_HALF_SIDE,
    TYPICAL_MAX_HALF_SIDE,
};

use tesslab_core::Result;

/// First error by index, or all values in index order.
pub(crate) fn collect_ordered<T>(items: Vec<Result<T>>) -> Result<Vec<T>> {
    items.into_iter().collect()
}
