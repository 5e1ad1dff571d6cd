//! Runtime of the full loss pipeline on synthetic pairs.

use std::time::Instant;

use cgtopo::{compute_loss, BinaryGrid, Channel, LossConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub size: usize,
    pub pixels: usize,
    pub median_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub critical_regions: usize,
}

/// Ground truth made of random disks at a fixed density, and a noisy score
/// map around it (about 8% of pixels land on the wrong side of 0.5).
pub fn synth_pair(size: usize, seed: u64) -> (Vec<f32>, BinaryGrid) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (size as u64).rotate_left(32));
    let disks = (size * size / 1500).max(1);
    let max_r = (size / 12).max(3);
    let centers: Vec<(f64, f64, f64)> = (0..disks)
        .map(|_| {
            (
                rng.random_range(0.0..size as f64),
                rng.random_range(0.0..size as f64),
                rng.random_range(2.0..max_r as f64),
            )
        })
        .collect();
    let mut gt = BinaryGrid::zeros(size, size);
    for &(cy, cx, r) in &centers {
        let (y0, y1) = (
            (cy - r).floor().max(0.0) as usize,
            ((cy + r).ceil() as usize).min(size - 1),
        );
        let (x0, x1) = (
            (cx - r).floor().max(0.0) as usize,
            ((cx + r).ceil() as usize).min(size - 1),
        );
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (dy, dx) = (y as f64 - cy, x as f64 - cx);
                if dy * dy + dx * dx <= r * r {
                    gt.set(y, x, true);
                }
            }
        }
    }
    let probs = gt
        .as_slice()
        .iter()
        .map(|&b| {
            let base = if b != 0 { 0.75 } else { 0.25 };
            (base + rng.random_range(-0.3f32..0.3)).clamp(0.0, 1.0)
        })
        .collect();
    (probs, gt)
}

/// Milliseconds for one loss evaluation, plus the number of critical regions.
pub fn time_loss(probs: &[f32], gt: &BinaryGrid, cfg: &LossConfig) -> cgtopo::Result<(f64, usize)> {
    let mut rng = cfg.threshold.rng();
    let start = Instant::now();
    let report = compute_loss(Channel::new(gt.height(), gt.width(), probs), gt, cfg, &mut rng)?;
    let ms = start.elapsed().as_secs_f64() * 1e3;
    Ok((ms, report.per_region.len()))
}

pub fn run_bench(sizes: &[usize], repeats: usize, seed: u64, cfg: &LossConfig) -> cgtopo::Result<Vec<BenchRow>> {
    let repeats = repeats.max(1);
    sizes
        .iter()
        .map(|&size| {
            let (probs, gt) = synth_pair(size, seed);
            let mut times = Vec::with_capacity(repeats);
            let mut regions = 0;
            for _ in 0..repeats {
                let (ms, n) = time_loss(&probs, &gt, cfg)?;
                times.push(ms);
                regions = n;
            }
            times.sort_by(f64::total_cmp);
            let mid = times.len() / 2;
            let median_ms = if times.len() % 2 == 1 {
                times[mid]
            } else {
                0.5 * (times[mid - 1] + times[mid])
            };
            Ok(BenchRow {
                size,
                pixels: size * size,
                median_ms,
                min_ms: times[0],
                max_ms: times[times.len() - 1],
                critical_regions: regions,
            })
        })
        .collect()
}

/// Least-squares slope of `ln(median_ms)` against `ln(pixels)`.
pub fn loglog_slope(rows: &[BenchRow]) -> f64 {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| ((r.pixels as f64).ln(), r.median_ms.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

pub fn bench_csv(rows: &[BenchRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}
