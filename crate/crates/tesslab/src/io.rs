//! Output artifacts: CSV tables with 17 significant digits, JSON documents,
//! cell geometry with run-length encoded raster masks, and plot-ready
//! tables.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use tesslab_core::{Cell, CellShape, EstimateResult, GridSpec, MarkedConfiguration, MarkedPoint};

use crate::mcengine::{AnnulusTerm, Replicate, TailFit, TailSample};

/// A float with 17 significant digits, enough to round-trip.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Writes `header` and `rows` as CSV. Fields are numbers and plain
/// identifiers, so no quoting is needed.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> io::Result<()> {
    let mut out = io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{}", header.join(","))?;
    for r in rows {
        writeln!(out, "{}", r.join(","))?;
    }
    out.flush()
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> io::Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    s.push('\n');
    fs::write(path, s)
}

pub const REPLICATIONS_HEADER: [&str; 7] = [
    "replication",
    "lambda",
    "kind",
    "value",
    "n_cells_included",
    "n_cells_excluded_threshold",
    "n_unbounded",
];

/// One row per replication, for the characteristic at position `k`.
pub fn write_replications(path: &Path, reps: &[Replicate], k: usize) -> io::Result<()> {
    write_csv(
        path,
        &REPLICATIONS_HEADER,
        reps.iter().map(|r| {
            vec![
                r.replication.to_string(),
                fmt_f64(r.lambda),
                r.kind.name().to_string(),
                fmt_f64(r.values[k]),
                r.n_cells_included.to_string(),
                r.n_cells_excluded_threshold.to_string(),
                r.n_unbounded.to_string(),
            ]
        }),
    )
}

pub fn write_values(path: &Path, column: &str, values: &[f64]) -> io::Result<()> {
    write_csv(
        path,
        &["index", column],
        values.iter().enumerate().map(|(i, v)| vec![i.to_string(), fmt_f64(*v)]),
    )
}

pub fn write_tail_samples(path: &Path, samples: &[TailSample]) -> io::Result<()> {
    write_csv(
        path,
        &["sample", "D_bound", "circumradius"],
        samples
            .iter()
            .enumerate()
            .map(|(i, s)| vec![i.to_string(), fmt_f64(s.d_bound), fmt_f64(s.circumradius)]),
    )
}

/// Thresholds, empirical log-survival and the fitted `t^2` line.
pub fn write_tail_curve(path: &Path, fit: &TailFit) -> io::Result<()> {
    write_csv(
        path,
        &["t", "log_survival", "fitted"],
        fit.thresholds.iter().zip(&fit.log_survival).map(|(t, l)| {
            vec![fmt_f64(*t), fmt_f64(*l), fmt_f64(fit.intercept - fit.fitted_rate * t * t)]
        }),
    )
}

pub fn write_points(path: &Path, config: &MarkedConfiguration) -> io::Result<()> {
    write_csv(
        path,
        &["x", "y", "mark"],
        config
            .points()
            .iter()
            .map(|p| vec![fmt_f64(p.position.x), fmt_f64(p.position.y), fmt_f64(p.mark)]),
    )
}

pub fn write_ledger(path: &Path, r: &EstimateResult) -> io::Result<()> {
    write_csv(
        path,
        &["x", "y", "mark", "h", "erosion", "included", "reason", "term"],
        r.contributions.iter().map(|c| {
            vec![
                fmt_f64(c.generator.position.x),
                fmt_f64(c.generator.position.y),
                fmt_f64(c.generator.mark),
                opt(c.h),
                opt(c.erosion),
                c.included.to_string(),
                c.reason.map(|e| e.name()).unwrap_or("").to_string(),
                fmt_f64(c.term()),
            ]
        }),
    )
}

pub fn write_annuli(path: &Path, annuli: &[AnnulusTerm]) -> io::Result<()> {
    write_csv(
        path,
        &["r_lo", "r_hi", "n", "integral", "stderr"],
        annuli.iter().map(|a| {
            vec![
                fmt_f64(a.r_lo),
                fmt_f64(a.r_hi),
                a.n.to_string(),
                fmt_f64(a.integral),
                fmt_f64(a.stderr),
            ]
        }),
    )
}

/// Equal-width histogram over the sample range with densities.
pub fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64, usize, f64)> {
    if values.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let n = values.len() as f64;
    counts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let a = lo + i as f64 * width;
            (a, a + width, c, c as f64 / (n * width))
        })
        .collect()
}

pub fn write_histogram(path: &Path, values: &[f64], bins: usize) -> io::Result<()> {
    write_csv(
        path,
        &["lower", "upper", "count", "density"],
        histogram(values, bins)
            .into_iter()
            .map(|(a, b, c, d)| vec![fmt_f64(a), fmt_f64(b), c.to_string(), fmt_f64(d)]),
    )
}

/// Standard normal quantiles at `(i - 0.5) / n` against the sorted sample.
pub fn qq_pairs(values: &[f64]) -> Vec<(f64, f64)> {
    let normal = Normal::standard();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, v)| (normal.inverse_cdf((i as f64 + 0.5) / n), *v))
        .collect()
}

pub fn write_qq(path: &Path, values: &[f64]) -> io::Result<()> {
    write_csv(
        path,
        &["theoretical", "sample"],
        qq_pairs(values).into_iter().map(|(t, s)| vec![fmt_f64(t), fmt_f64(s)]),
    )
}

/// Run lengths of a row-major mask, alternating and starting with a run of
/// unset pixels (possibly empty).
pub fn rle_encode(mask: &[bool]) -> Vec<usize> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0;
    for &m in mask {
        if m != current {
            runs.push(len);
            current = m;
            len = 0;
        }
        len += 1;
    }
    runs.push(len);
    runs
}

pub fn rle_decode(runs: &[usize]) -> Vec<bool> {
    let mut mask = Vec::new();
    for (i, &r) in runs.iter().enumerate() {
        mask.extend(std::iter::repeat_n(i % 2 == 1, r));
    }
    mask
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterMask {
    pub grid: GridSpec,
    /// Pixel index of the mask's lower-left pixel.
    pub i0: i64,
    pub j0: i64,
    pub nx: usize,
    pub ny: usize,
    /// Row-major from the bottom row.
    pub rle: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum CellGeometry {
    Polygon { vertices: Vec<[f64; 2]> },
    Raster(RasterMask),
    Empty,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub generator: MarkedPoint,
    pub geometry: CellGeometry,
    pub clipped: bool,
}

pub fn cell_record(cell: &Cell) -> CellRecord {
    let (geometry, clipped) = match &cell.shape {
        CellShape::Polygon(p) => (
            CellGeometry::Polygon {
                vertices: p.vertices().iter().map(|v| [v.x, v.y]).collect(),
            },
            false,
        ),
        CellShape::Raster(r) => {
            (
                CellGeometry::Raster(RasterMask {
                    grid: r.grid,
                    i0: r.i0,
                    j0: r.j0,
                    nx: r.nx,
                    ny: r.ny,
                    rle: rle_encode(&r.mask),
                }),
                r.clipped,
            )
        }
        CellShape::Empty => (CellGeometry::Empty, false),
        CellShape::Unbounded => (CellGeometry::Unbounded, false),
    };
    CellRecord {
        generator: cell.generator,
        geometry,
        clipped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn rle_round_trips() {
        for mask in [vec![], vec![true], vec![false, false, true, true, true, false], vec![true, false, true]] {
            let r = rle_encode(&mask);
            assert_eq!(rle_decode(&r), mask);
        }
        assert_eq!(rle_encode(&[true, true, false]), vec![0, 2, 1]);
    }

    #[test]
    fn histogram_counts_everything() {
        let v: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let h = histogram(&v, 7);
        assert_eq!(h.iter().map(|b| b.2).sum::<usize>(), 100);
        let area: f64 = h.iter().map(|b| b.3 * (b.1 - b.0)).sum();
        assert!((area - 1.0).abs() < 1e-12);
    }

    #[test]
    fn qq_of_symmetric_sample() {
        let q = qq_pairs(&[3.0, 1.0, 2.0]);
        assert!(q[1].0.abs() < 1e-12);
        assert_eq!(q.iter().map(|p| p.1).collect::<Vec<_>>(), vec![1.0, 2.0, 3.0]);
        assert!((q[0].0 + q[2].0).abs() < 1e-12);
    }
}
