//! Component-graph loss: `alpha * sum over critical regions of the
//! aggregated predicted-class score of the region's pixels`.

use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagegrid::{binarize, BinaryGrid, CellClass, Channel, GridParams, ProbabilityMap, ThresholdPolicy};
use crate::topograph::{analyze_pair, PairAnalysis, Predicted};

/// Guard inside the logarithm of the `ce` aggregation.
pub const CE_EPSILON: f64 = 1e-7;

/// Per-region reduction of pixel scores.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Mean,
    Max,
    Rms,
    Sum,
    Min,
    /// Mean of `-ln(1 - s + 1e-7)`: cross-entropy toward the correct class.
    Ce,
}

impl Aggregation {
    pub const ALL: [Aggregation; 6] = [
        Aggregation::Mean,
        Aggregation::Max,
        Aggregation::Rms,
        Aggregation::Sum,
        Aggregation::Min,
        Aggregation::Ce,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::Mean => "mean",
            Aggregation::Max => "max",
            Aggregation::Rms => "rms",
            Aggregation::Sum => "sum",
            Aggregation::Min => "min",
            Aggregation::Ce => "ce",
        }
    }
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Aggregation::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown aggregation {s:?}")))
    }
}

impl std::fmt::Display for Aggregation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn aggregate_region(scores: &[f64], mode: Aggregation) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let n = scores.len() as f64;
    Ok(match mode {
        Aggregation::Mean => scores.iter().sum::<f64>() / n,
        Aggregation::Max => scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Aggregation::Min => scores.iter().copied().fold(f64::INFINITY, f64::min),
        Aggregation::Sum => scores.iter().sum(),
        Aggregation::Rms => (scores.iter().map(|s| s * s).sum::<f64>() / n).sqrt(),
        Aggregation::Ce => scores.iter().map(|s| -(1.0 - s + CE_EPSILON).ln()).sum::<f64>() / n,
    })
}

/// Score of the class the prediction chose: `p` for FP regions, `1 - p`
/// for FN regions.
#[inline]
pub fn predicted_class_score(p: Channel<'_>, pixel: (usize, usize), predicted: Predicted) -> f64 {
    let v = f64::from(p.get(pixel.0, pixel.1));
    match predicted {
        Predicted::Foreground => v,
        Predicted::Background => 1.0 - v,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub alpha: f64,
    pub aggregation: Aggregation,
    /// Used for single-channel maps only; multi-channel maps binarize by
    /// argmax and ignore it.
    pub threshold: ThresholdPolicy,
    pub grid: GridParams,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: 1.0,
            aggregation: Aggregation::Mean,
            threshold: ThresholdPolicy::default(),
            grid: GridParams::default(),
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Parse(format!("alpha {} must be finite and >= 0", self.alpha)));
        }
        self.threshold.validate()?;
        self.grid.validate()
    }
}

/// Loss contribution of one critical region.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionLoss {
    pub id: u32,
    pub class: CellClass,
    pub score: f64,
    pub pixel_count: usize,
    #[serde(skip)]
    pub pixels: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LossReport {
    pub total: f64,
    pub threshold_used: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class_index: Option<usize>,
    /// Critical regions that own at least one pixel, in region-id order.
    pub per_region: Vec<RegionLoss>,
    #[serde(skip)]
    pub support_mask: BinaryGrid,
}

impl LossReport {
    pub fn support_mask(&self) -> &BinaryGrid {
        &self.support_mask
    }
}

/// Pixels of critical regions as a mask.
pub fn support_mask(report: &LossReport) -> BinaryGrid {
    let mut mask = BinaryGrid::zeros(report.support_mask.height(), report.support_mask.width());
    for r in &report.per_region {
        for &(i, j) in &r.pixels {
            mask.set(i, j, true);
        }
    }
    mask
}

/// Loss of an already-binarized prediction against `gt`, scoring pixels
/// with channel `p`.
pub fn loss_from_analysis(
    analysis: &PairAnalysis,
    p: Channel<'_>,
    alpha: f64,
    aggregation: Aggregation,
) -> Result<LossReport> {
    let (h, w) = analysis.map.orig_dims();
    let mut mask = BinaryGrid::zeros(h, w);
    let mut per_region = Vec::new();
    let mut sum = 0.0;
    for region in analysis.critical_regions().filter(|r| !r.pixels.is_empty()) {
        let scores: Vec<f64> = region
            .pixels
            .iter()
            .map(|&px| predicted_class_score(p, px, region.predicted))
            .collect();
        let score = aggregate_region(&scores, aggregation)?;
        sum += score;
        for &(i, j) in &region.pixels {
            mask.set(i, j, true);
        }
        per_region.push(RegionLoss {
            id: region.id,
            class: region.class,
            score,
            pixel_count: region.pixels.len(),
            pixels: region.pixels.clone(),
        });
    }
    Ok(LossReport {
        total: alpha * sum,
        threshold_used: None,
        class_index: None,
        per_region,
        support_mask: mask,
    })
}

/// Binarizes `p` (threshold drawn per `cfg.threshold`), builds the combined
/// graph against `gt` and sums the aggregated scores of critical regions.
pub fn compute_loss<R: Rng + ?Sized>(
    p: Channel<'_>,
    gt: &BinaryGrid,
    cfg: &LossConfig,
    rng: &mut R,
) -> Result<LossReport> {
    let (analysis, threshold) = analyze_scores(p, gt, cfg, rng)?;
    let mut report = loss_from_analysis(&analysis, p, cfg.alpha, cfg.aggregation)?;
    report.threshold_used = Some(threshold);
    Ok(report)
}

/// Threshold resolution, binarization and graph analysis, without the
/// final aggregation.
pub fn analyze_scores<R: Rng + ?Sized>(
    p: Channel<'_>,
    gt: &BinaryGrid,
    cfg: &LossConfig,
    rng: &mut R,
) -> Result<(PairAnalysis, f64)> {
    cfg.validate()?;
    if p.dims() != gt.dims() {
        return Err(Error::DimensionMismatch {
            expected: gt.dims(),
            found: p.dims(),
        });
    }
    let threshold = cfg.threshold.resolve(p, rng);
    let pred = binarize(p, threshold);
    Ok((analyze_pair(&pred, gt, cfg.grid)?, threshold))
}

/// One-vs-rest losses of a multi-channel map.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MulticlassReport {
    pub total: f64,
    pub per_class: Vec<LossReport>,
}

impl MulticlassReport {
    /// Union of all per-class support masks.
    pub fn support_mask(&self) -> BinaryGrid {
        let first = &self.per_class[0].support_mask;
        BinaryGrid::from_fn(first.height(), first.width(), |i, j| {
            self.per_class.iter().any(|r| r.support_mask.get(i, j))
        })
    }
}

/// Per-class binary problems: prediction `argmax == c`, ground truth
/// `label == c`, scores from channel `c`. A single-channel map falls back to
/// [`compute_loss`] with foreground `label != 0`.
pub fn multiclass_loss<R: Rng + ?Sized>(
    p: &ProbabilityMap,
    labels: &[u32],
    cfg: &LossConfig,
    rng: &mut R,
) -> Result<MulticlassReport> {
    let (h, w) = p.dims();
    if labels.len() != h * w {
        return Err(Error::DimensionMismatch {
            expected: (h, w),
            found: (labels.len() / w.max(1), w),
        });
    }
    let channels = p.channels();
    if let Some(bad) = labels.iter().find(|&&l| l as usize >= channels.max(2)) {
        return Err(Error::ChannelMismatch(format!(
            "label {bad} out of range for {channels} channel(s)"
        )));
    }
    if channels == 1 {
        let gt = BinaryGrid::from_vec(h, w, labels.iter().map(|&l| (l != 0) as u8).collect())?;
        let report = compute_loss(p.channel(0), &gt, cfg, rng)?;
        return Ok(MulticlassReport {
            total: report.total,
            per_class: vec![report],
        });
    }
    cfg.validate()?;

    let argmax = p.argmax();
    let per_class = (0..channels)
        .into_par_iter()
        .map(|c| {
            let pred = BinaryGrid::from_vec(h, w, argmax.iter().map(|&a| (a as usize == c) as u8).collect())?;
            let gt = BinaryGrid::from_vec(h, w, labels.iter().map(|&l| (l as usize == c) as u8).collect())?;
            let analysis = analyze_pair(&pred, &gt, cfg.grid)?;
            let mut report = loss_from_analysis(&analysis, p.channel(c), cfg.alpha, cfg.aggregation)?;
            report.class_index = Some(c);
            Ok(report)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MulticlassReport {
        total: per_class.iter().map(|r| r.total).sum(),
        per_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    use crate::imagegrid::ProbabilityMap;

    #[test]
    fn aggregation_examples() {
        assert!((aggregate_region(&[0.2, 0.4], Aggregation::Mean).unwrap() - 0.3).abs() < 1e-12);
        assert!((aggregate_region(&[0.2, 0.4], Aggregation::Rms).unwrap() - 0.1f64.sqrt()).abs() < 1e-12);
        // -ln(1 + 1e-7): the guard makes a zero score slightly negative.
        let ce = aggregate_region(&[0.0], Aggregation::Ce).unwrap();
        assert!((ce + 1.0e-7).abs() < 1e-12, "ce = {ce}");
        assert_eq!(aggregate_region(&[0.2, 0.4], Aggregation::Max).unwrap(), 0.4);
        assert_eq!(aggregate_region(&[0.2, 0.4], Aggregation::Min).unwrap(), 0.2);
        assert!((aggregate_region(&[0.2, 0.4], Aggregation::Sum).unwrap() - 0.6).abs() < 1e-12);
        assert!(matches!(
            aggregate_region(&[], Aggregation::Mean),
            Err(Error::EmptyRegion)
        ));
    }

    #[test]
    fn aggregation_names_round_trip() {
        for a in Aggregation::ALL {
            assert_eq!(a.as_str().parse::<Aggregation>().unwrap(), a);
        }
        assert!("median".parse::<Aggregation>().is_err());
    }

    #[test]
    fn predicted_class_scores() {
        let v = [0.8f32, 0.2, 0.5];
        let p = Channel::new(1, 3, &v);
        assert!((predicted_class_score(p, (0, 0), Predicted::Foreground) - 0.8).abs() < 1e-6);
        assert!((predicted_class_score(p, (0, 1), Predicted::Background) - 0.8).abs() < 1e-6);
        assert_eq!(predicted_class_score(p, (0, 2), Predicted::Background), 0.5);
    }

    #[test]
    fn single_spurious_pixel_loss() {
        let gt = BinaryGrid::zeros(4, 4);
        let mut values = vec![0.0f32; 16];
        values[5] = 0.8;
        let p = ProbabilityMap::single(4, 4, values).unwrap();
        let cfg = LossConfig::default();
        let r = compute_loss(p.channel(0), &gt, &cfg, &mut cfg.threshold.rng()).unwrap();
        assert!((r.total - 0.8).abs() < 1e-6);
        assert_eq!(r.per_region.len(), 1);
        assert_eq!(r.support_mask.count_ones(), 1);
        assert_eq!(support_mask(&r), r.support_mask);
    }

    #[test]
    fn exact_prediction_has_zero_loss() {
        let gt = BinaryGrid::from_ascii("..... .##.. .#.#. .##.. .....").unwrap();
        let p = ProbabilityMap::from_binary(&gt);
        let cfg = LossConfig::default();
        let r = compute_loss(p.channel(0), &gt, &cfg, &mut cfg.threshold.rng()).unwrap();
        assert_eq!(r.total, 0.0);
        assert_eq!(r.support_mask.count_ones(), 0);
        assert_eq!(r.threshold_used, Some(0.5));
    }

    #[test]
    fn multiclass_rejects_bad_labels() {
        let p = ProbabilityMap::new(2, 1, 2, vec![0.4, 0.7, 0.6, 0.3]).unwrap();
        let cfg = LossConfig::default();
        let err = multiclass_loss(&p, &[0, 2], &cfg, &mut cfg.threshold.rng());
        assert!(matches!(err, Err(Error::ChannelMismatch(_))));
    }
}
