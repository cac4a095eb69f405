#![allow(dead_code)]

use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};
use tesslab_core::rng::{self, purpose};
use tesslab_core::stats::{mean, variance};
use tesslab_core::{sample_poisson, AxisBox, MarkDistribution, Vec2};

fn periodic(d: f64, l: f64) -> f64 {
    let d = d.rem_euclid(l);
    d.min(l - d)
}

/// Label of the nearest site to `(x, y0)` on the flat torus of side `l`.
/// `rows` holds `(dy^2, index)` for the line `y = y0`, sorted.
fn nearest_on_line(x: f64, sites: &[Vec2], rows: &[(f64, usize)], l: f64) -> usize {
    let mut best = f64::INFINITY;
    let mut label = usize::MAX;
    for &(dy2, i) in rows {
        if dy2 >= best {
            break;
        }
        let dx = periodic(x - sites[i].x, l);
        let d = dx * dx + dy2;
        if d < best {
            best = d;
            label = i;
        }
    }
    label
}

/// Crossings of Voronoi edges with the horizontal line `y = y0` on the
/// torus, found by walking the line in steps of `step`.
fn crossings(sites: &[Vec2], y0: f64, l: f64, step: f64) -> usize {
    let mut rows: Vec<(f64, usize)> = sites
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let dy = periodic(p.y - y0, l);
            (dy * dy, i)
        })
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = (l / step).round() as usize;
    let first = nearest_on_line(0.0, sites, &rows, l);
    let mut prev = first;
    let mut count = 0;
    for k in 1..n {
        let lab = nearest_on_line(k as f64 * step, sites, &rows, l);
        if lab != prev {
            count += 1;
            prev = lab;
        }
    }
    count + usize::from(prev != first)
}

/// Mean perimeter of the typical cell of the unit-intensity Poisson-Voronoi
/// tessellation from a brute-force torus tessellation: edge length per unit
/// area `L_A` from line crossings (`E crossings per unit length = 2 L_A / pi`),
/// and mean perimeter `2 L_A`. Returns the mean and standard error over
/// `realizations`.
pub fn torus_perimeter_oracle(l: f64, realizations: usize, lines: usize, step: f64, seed: u64) -> (f64, f64) {
    let region = AxisBox::new(Vec2::ZERO, Vec2::new(l, l)).unwrap();
    let per: Vec<f64> = (0..realizations)
        .map(|r| {
            let c = sample_poisson(&region, 1.0, &MarkDistribution::PointMass(0.0), seed + r as u64).unwrap();
            let xy: Vec<Vec2> = c.points().iter().map(|p| p.position).collect();
            let yx: Vec<Vec2> = xy.iter().map(|p| Vec2::new(p.y, p.x)).collect();
            let mut total = 0;
            for k in 0..lines {
                let y0 = (k as f64 + 0.5) * l / lines as f64;
                total += crossings(&xy, y0, l, step);
                total += crossings(&yx, y0, l, step);
            }
            let length = 2.0 * lines as f64 * l;
            let l_a = std::f64::consts::FRAC_PI_2 * total as f64 / length;
            2.0 * l_a
        })
        .collect();
    (mean(&per), (variance(&per) / per.len() as f64).sqrt())
}

/// `n` standard normal draws by inversion.
pub fn normals(n: usize, seed: u64) -> Vec<f64> {
    let normal = Normal::standard();
    let mut r = rng::stream(seed, purpose::BOOTSTRAP, 0);
    (0..n)
        .map(|_| normal.inverse_cdf(r.random_range(f64::EPSILON..1.0)))
        .collect()
}

pub fn stderr(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}
