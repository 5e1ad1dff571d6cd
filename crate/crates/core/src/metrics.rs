//! Evaluation metrics: DIU, Betti number errors and Dice.
//!
//! DIU compares the intersection and the union of the thickened
//! foregrounds (and of the thinned backgrounds) through their connected
//! components. For an inclusion `A -> B`, `ker` counts the surplus of
//! components of `A` that land in a shared component of `B`, and `coker`
//! counts components of `B` that contain no component of `A`.

use serde::Serialize;

use crate::components::{label_mask, Connectivity, LabelMap};
use crate::error::Result;
use crate::imagegrid::{build_combined_map, BinaryGrid, CellClass, GridParams, RefinedClassMap};
use crate::topograph::image_betti;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize)]
pub struct DiuResult {
    pub total: u32,
    pub ker_fg: u32,
    pub coker_fg: u32,
    pub ker_bg: u32,
    pub coker_bg: u32,
}

/// `(ker, coker)` of the map on components induced by `inner ⊆ outer`.
pub fn inclusion_defect(inner: &LabelMap, outer: &LabelMap) -> (u32, u32) {
    let mut seen = vec![false; inner.count() as usize + 1];
    let mut hit = vec![false; outer.count() as usize + 1];
    if let (Some(a), Some(b)) = (inner.exterior_label(), outer.exterior_label()) {
        seen[a as usize] = true;
        hit[b as usize] = true;
    }
    for (&li, &lo) in inner.labels().iter().zip(outer.labels()) {
        if li != 0 && !seen[li as usize] {
            seen[li as usize] = true;
            debug_assert!(lo != 0, "inner set must be contained in outer set");
            hit[lo as usize] = true;
        }
    }
    let reached = hit.iter().filter(|&&h| h).count() as u32;
    (inner.count() - reached, outer.count() - reached)
}

/// DIU on an existing refined overlay.
pub fn diu_from_map(m: &RefinedClassMap) -> DiuResult {
    use CellClass::*;
    let (h, w) = (m.height(), m.width());
    let fg_inter = label_mask(h, w, &m.mask(&[TP]), Connectivity::Eight, false);
    let fg_union = label_mask(h, w, &m.mask(&[TP, FP, FN]), Connectivity::Eight, false);
    let bg_inter = label_mask(h, w, &m.mask(&[TN]), Connectivity::Four, true);
    let bg_union = label_mask(h, w, &m.mask(&[TN, FP, FN]), Connectivity::Four, true);
    let (ker_fg, coker_fg) = inclusion_defect(&fg_inter, &fg_union);
    let (ker_bg, coker_bg) = inclusion_defect(&bg_inter, &bg_union);
    DiuResult {
        total: ker_fg + coker_fg + ker_bg + coker_bg,
        ker_fg,
        coker_fg,
        ker_bg,
        coker_bg,
    }
}

/// DIU of an ordered (prediction, ground truth) pair.
pub fn diu(pred: &BinaryGrid, gt: &BinaryGrid, params: GridParams) -> Result<DiuResult> {
    Ok(diu_from_map(&build_combined_map(pred, gt, params)?))
}

/// `(|b0(P) - b0(G)|, |b1(P) - b1(G)|)`.
pub fn betti_errors(pred: &BinaryGrid, gt: &BinaryGrid) -> Result<(u32, u32)> {
    pred.check_same_dims(gt)?;
    let (p0, p1) = image_betti(pred)?;
    let (g0, g1) = image_betti(gt)?;
    Ok((p0.abs_diff(g0), p1.abs_diff(g1)))
}

/// `2|P ∧ G| / (|P| + |G|)`, 1 when both are empty.
pub fn dice(pred: &BinaryGrid, gt: &BinaryGrid) -> Result<f64> {
    pred.check_same_dims(gt)?;
    let both = pred
        .as_slice()
        .iter()
        .zip(gt.as_slice())
        .filter(|(&a, &b)| a != 0 && b != 0)
        .count();
    let denom = pred.count_ones() + gt.count_ones();
    Ok(if denom == 0 {
        1.0
    } else {
        2.0 * both as f64 / denom as f64
    })
}

/// One evaluated pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricRow {
    pub id: String,
    pub diu: DiuResult,
    pub b0_err: u32,
    pub b1_err: u32,
    pub dice: f64,
    pub pred_pixels: usize,
    pub gt_pixels: usize,
}

pub const METRIC_CSV_HEADER: [&str; 9] = [
    "id", "diu", "ker_fg", "coker_fg", "ker_bg", "coker_bg", "b0_err", "b1_err", "dice",
];

impl MetricRow {
    pub fn compute(id: impl Into<String>, pred: &BinaryGrid, gt: &BinaryGrid, params: GridParams) -> Result<Self> {
        let diu = diu(pred, gt, params)?;
        let (b0_err, b1_err) = betti_errors(pred, gt)?;
        Ok(MetricRow {
            id: id.into(),
            diu,
            b0_err,
            b1_err,
            dice: dice(pred, gt)?,
            pred_pixels: pred.count_ones(),
            gt_pixels: gt.count_ones(),
        })
    }

    /// Fields in [`METRIC_CSV_HEADER`] order.
    pub fn csv_record(&self) -> [String; 9] {
        [
            self.id.clone(),
            self.diu.total.to_string(),
            self.diu.ker_fg.to_string(),
            self.diu.coker_fg.to_string(),
            self.diu.ker_bg.to_string(),
            self.diu.coker_bg.to_string(),
            self.b0_err.to_string(),
            self.b1_err.to_string(),
            self.dice.to_string(),
        ]
    }
}
