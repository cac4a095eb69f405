use serde::{Deserialize, Serialize};
use tesslab_core::stats::quantile_sorted;
use tesslab_core::Result;

use super::tails::d_bound_samples;
use super::{ExperimentConfig, GuardSpec};

/// Typical cells drawn by the pilot behind an automatic guard.
pub const PILOT_SAMPLES: usize = 20_000;
pub const GUARD_QUANTILE: f64 = 0.9999;

/// The guard used by an experiment and how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuardResolution {
    pub guard: f64,
    pub auto: bool,
    pub pilot_samples: usize,
    /// Pilot quantile of the cone bound `D`.
    pub d_quantile: Option<f64>,
    /// Four times the largest window side.
    pub cap: f64,
    pub capped: bool,
}

/// An explicit guard is returned unchanged. `Auto` becomes
/// `2 q + mu` with `q` the pilot's 0.9999 quantile of `D`, capped at four
/// window sides; cells the guard fails to certify are handled by extending
/// the sample per replication.
pub fn resolve_guard(cfg: &ExperimentConfig) -> Result<GuardResolution> {
    cfg.validate()?;
    let side = cfg.lambda_values.last().copied().unwrap_or(1.0).sqrt();
    let cap = 4.0 * side;
    match cfg.guard {
        GuardSpec::Fixed(g) => Ok(GuardResolution {
            guard: g,
            auto: false,
            pilot_samples: 0,
            d_quantile: None,
            cap,
            capped: false,
        }),
        GuardSpec::Auto => {
            let mut d = d_bound_samples(&cfg.cell_model(), PILOT_SAMPLES, cfg.master_seed)?;
            d.sort_by(f64::total_cmp);
            let q = quantile_sorted(&d, GUARD_QUANTILE);
            let raw = 2.0 * q + cfg.mu();
            Ok(GuardResolution {
                guard: raw.min(cap),
                auto: true,
                pilot_samples: d.len(),
                d_quantile: Some(q),
                cap,
                capped: raw > cap,
            })
        }
    }
}
