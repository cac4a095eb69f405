mod common;

use rand::Rng;
use tesslab::mcengine::*;
use tesslab_core::rng::{self, purpose};
use tesslab_core::stats::{ks_statistic, mean};
use tesslab_core::{
    sample_poisson, AxisBox, CellShape, Characteristic, EstimatorKind, Kernel, MarkDistribution,
    MarkedPoint, WeightModel,
};

use common::{normals, stderr, torus_perimeter_oracle};

fn voronoi() -> CellModel {
    CellModel::new(WeightModel::Voronoi, MarkDistribution::PointMass(0.0), Kernel::Exact)
}

#[test]
fn torus_oracle_gives_perimeter_four() {
    let (m, se) = torus_perimeter_oracle(20.0, 40, 20, 0.005, 11);
    assert!((m - 4.0).abs() <= 4.0 * se, "{m} +- {se}");
    assert!(se < 0.05);
}

#[test]
fn typical_voronoi_cell_moments() {
    let n = 10_000;
    let cm = voronoi();
    let mut vol = Vec::with_capacity(n);
    let mut per = Vec::with_capacity(n);
    let mut verts = Vec::with_capacity(n);
    for i in 0..n {
        let t = sample_typical_cell_with(&cm, TYPICAL_HALF_SIDE, &mut rng::stream(3, purpose::ORACLE, i as u64)).unwrap();
        let CellShape::Polygon(p) = &t.cell.shape else { panic!("{:?}", t.cell.shape) };
        vol.push(p.area());
        per.push(p.perimeter());
        verts.push(p.vertices().len() as f64);
    }
    let z = |xs: &[f64], target: f64| (mean(xs) - target) / stderr(xs);
    assert!(z(&vol, 1.0).abs() <= 4.0, "volume z {}", z(&vol, 1.0));
    assert!(z(&verts, 6.0).abs() <= 4.0, "vertices z {}", z(&verts, 6.0));
    let (oracle, oracle_se) = torus_perimeter_oracle(20.0, 40, 20, 0.005, 11);
    let combined = stderr(&per).hypot(oracle_se);
    assert!((mean(&per) - oracle).abs() <= 4.0 * combined, "{} vs {oracle}", mean(&per));
    assert!(z(&per, 4.0).abs() <= 4.0, "perimeter z {}", z(&per, 4.0));
}

#[test]
fn ks_p_values_are_uniform_under_the_null() {
    let rejected = (0..200)
        .filter(|&m| ks_statistic(&normals(500, 1000 + m), 0.0, 1.0).unwrap().p_value < 0.05)
        .count();
    let frac = rejected as f64 / 200.0;
    assert!((0.02..=0.09).contains(&frac), "{frac}");
}

#[test]
fn standardized_normals_are_not_rejected_too_often() {
    // estimated location and scale make the test conservative
    let rejected = (0..200)
        .filter(|&m| {
            let v: Vec<f64> = normals(500, 5000 + m).iter().map(|z| 3.0 + 0.1 * z).collect();
            clt_from_values(&v, 256.0).unwrap().1.p_value < 0.05
        })
        .count();
    assert!(rejected as f64 / 200.0 <= 0.09, "{rejected}");
}

#[test]
fn guard_for_unit_voronoi_on_side_ten() {
    let mut cfg = ExperimentConfig::new(WeightModel::Voronoi, Characteristic::Volume, vec![100.0], 10);
    cfg.mark_dist = MarkDistribution::PointMass(0.0);
    let g = resolve_guard(&cfg).unwrap();
    assert!(g.auto && g.guard.is_finite() && g.guard < 40.0, "{g:?}");
    assert_eq!(g.pilot_samples, PILOT_SAMPLES);
    cfg.guard = GuardSpec::Fixed(7.5);
    assert_eq!(resolve_guard(&cfg).unwrap().guard, 7.5);
}

#[test]
fn guard_grows_with_the_mark_bound() {
    let guard = |b: f64| {
        let mut cfg = ExperimentConfig::new(WeightModel::Laguerre, Characteristic::Volume, vec![100.0], 10);
        cfg.mark_dist = if b == 0.0 { MarkDistribution::PointMass(0.0) } else { MarkDistribution::Uniform { a: 0.0, b } };
        cfg.master_seed = 9;
        resolve_guard(&cfg).unwrap().guard
    };
    let (g0, g1) = (guard(0.0), guard(1.0));
    assert!(g1 >= g0, "{g1} < {g0}");
}

#[test]
fn zero_marks_make_laguerre_tails_voronoi_tails() {
    let lag = CellModel::new(WeightModel::Laguerre, MarkDistribution::PointMass(0.0), Kernel::Exact);
    let a = diameter_tail_experiment(&voronoi(), 2000, 4).unwrap();
    let b = diameter_tail_experiment(&lag, 2000, 4).unwrap();
    assert_eq!(a.fit, b.fit);
    assert_eq!(a.containment_violations + b.containment_violations, 0);
}

#[test]
fn sigma2_is_stable_when_doubling_r_max() {
    let h = Characteristic::BoundaryMeasure;
    let cm = voronoi();
    let a = estimate_sigma2(&cm, &h, 8.0, 12.0, 4000, 20_000, 21).unwrap();
    let b = estimate_sigma2(&cm, &h, 8.0, 24.0, 4000, 20_000, 21).unwrap();
    assert!((a.sigma2 - b.sigma2).abs() <= 2.0 * a.stderr.hypot(b.stderr), "{} vs {}", a.sigma2, b.sigma2);
    assert!(a.sigma2 > 0.0);
}

fn random_ring(n: usize, r_lo: f64, r_hi: f64, seed: u64) -> Vec<MarkedPoint> {
    let mut g = rng::stream(seed, purpose::SAMPLE, 1);
    (0..n)
        .map(|_| {
            let r = g.random_range(r_lo..r_hi);
            let a = g.random_range(0.0..std::f64::consts::TAU);
            MarkedPoint::new(r * a.cos(), r * a.sin(), 0.0)
        })
        .collect()
}

#[test]
fn add_one_cost_varies_and_ignores_far_points() {
    let carrier = AxisBox::centered_square(30.0).unwrap();
    let h = Characteristic::BoundaryMeasure;
    let mut deltas = Vec::new();
    for seed in [1, 2] {
        let c = sample_poisson(&carrier, 1.0, &MarkDistribution::PointMass(0.0), seed).unwrap();
        let d0 = add_one_cost(&c, 5.0, &[], 0.0, WeightModel::Voronoi, &h, Kernel::Exact).unwrap();
        for extra_seed in [10, 20] {
            let extra = random_ring(8, 12.0, 14.0, seed * 100 + extra_seed);
            let d = add_one_cost(&c, 5.0, &extra, 0.0, WeightModel::Voronoi, &h, Kernel::Exact).unwrap();
            assert!((d - d0).abs() <= 1e-9, "{d} vs {d0}");
        }
        // new edges only: the perimeter sum grows
        assert!(d0 > 0.0 && d0.is_finite(), "{d0}");
        deltas.push(d0);
    }
    assert_ne!(deltas[0], deltas[1]);
}

#[test]
fn add_one_cost_of_volume_vanishes() {
    // the inserted cell takes its area from bounded neighbours
    let carrier = AxisBox::centered_square(30.0).unwrap();
    for seed in [1, 2] {
        let c = sample_poisson(&carrier, 1.0, &MarkDistribution::PointMass(0.0), seed).unwrap();
        let d = add_one_cost(&c, 5.0, &[], 0.0, WeightModel::Voronoi, &Characteristic::Volume, Kernel::Exact).unwrap();
        assert!(d.abs() <= 1e-9, "{d}");
    }
}

#[test]
fn unbiasedness_for_the_indicator() {
    for (model, kernel) in [
        (WeightModel::Laguerre, Kernel::Exact),
        (WeightModel::JohnsonMehl, Kernel::Raster { grid_h: 0.1 }),
    ] {
        let mut cfg = ExperimentConfig::new(model, Characteristic::IndicatorVolumeLeq { t: 0.8 }, vec![36.0], 300);
        cfg.kernel = kernel;
        cfg.guard = GuardSpec::Fixed(12.0);
        cfg.master_seed = 77;
        let (est, oracle) = run_unbiasedness_experiment(&cfg).unwrap();
        let combined = est.stderr_mean.hypot(oracle.stderr_mean);
        assert!((est.mean - oracle.mean).abs() <= 3.0 * combined, "{model:?}: {} vs {}", est.mean, oracle.mean);
    }
}

#[test]
fn rerun_with_other_thread_counts_is_identical() {
    let mut cfg = ExperimentConfig::new(WeightModel::Laguerre, Characteristic::BoundaryMeasure, vec![25.0, 49.0], 40);
    cfg.kind = EstimatorKind::TruncatedWindowSample;
    cfg.guard = GuardSpec::Fixed(10.0);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| variance_with_guard(&cfg, 10.0).unwrap())
    };
    let a = run(1);
    let b = run(4);
    for ((la, sa), (lb, sb)) in a.iter().zip(&b) {
        assert_eq!(la.to_bits(), lb.to_bits());
        assert_eq!(sa.mean.to_bits(), sb.mean.to_bits());
        assert_eq!(sa.lambda_var.to_bits(), sb.lambda_var.to_bits());
        assert_eq!(sa.stderr_lambda_var.to_bits(), sb.stderr_lambda_var.to_bits());
    }
}
