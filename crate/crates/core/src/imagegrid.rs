//! Rasters, binarization and the refined four-class overlay of a
//! prediction/ground-truth pair.
//!
//! A [`BinaryGrid`] models a binary image whose pixels are closed unit
//! squares; an implicit background cell surrounds the whole image so the
//! plane closes up into a sphere. [`build_combined_map`] subdivides every
//! pixel into `k x k` refined cells and thickens both foregrounds by
//! Chebyshev-ball dilation, the prediction by `r_pred` cells and the ground
//! truth by `r_gt` cells, before classifying each refined cell as
//! TP/TN/FP/FN.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary raster, row-major, one byte per pixel (0 or 1).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryGrid {
    height: usize,
    width: usize,
    bits: Vec<u8>,
}

impl BinaryGrid {
    pub fn zeros(height: usize, width: usize) -> Self {
        assert!(height >= 1 && width >= 1, "grid must be at least 1x1");
        BinaryGrid {
            height,
            width,
            bits: vec![0; height * width],
        }
    }

    pub fn ones(height: usize, width: usize) -> Self {
        let mut g = Self::zeros(height, width);
        g.bits.fill(1);
        g
    }

    /// Builds a grid from row-major values; any nonzero value is foreground.
    pub fn from_vec(height: usize, width: usize, values: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::DimensionMismatch {
                expected: (1, 1),
                found: (height, width),
            });
        }
        if values.len() != height * width {
            return Err(Error::Parse(format!(
                "expected {} values for a {}x{} grid, got {}",
                height * width,
                height,
                width,
                values.len()
            )));
        }
        let bits = values.into_iter().map(|v| (v != 0) as u8).collect();
        Ok(BinaryGrid { height, width, bits })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut g = Self::zeros(height, width);
        for r in 0..height {
            for c in 0..width {
                g.bits[r * width + c] = f(r, c) as u8;
            }
        }
        g
    }

    /// Parses rows of `0`/`1` (or `.`/`#`) characters; whitespace separates rows.
    pub fn from_ascii(text: &str) -> Result<Self> {
        let rows: Vec<&str> = text.split_whitespace().collect();
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        let mut values = Vec::with_capacity(height * width);
        for row in &rows {
            if row.chars().count() != width {
                return Err(Error::Parse("ragged ascii grid".into()));
            }
            for ch in row.chars() {
                values.push(match ch {
                    '1' | '#' => 1,
                    '0' | '.' => 0,
                    other => return Err(Error::Parse(format!("unexpected character {other:?}"))),
                });
            }
        }
        Self::from_vec(height, width, values)
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col] != 0
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value as u8;
    }

    /// Row-major 0/1 bytes.
    #[inline]
    pub fn as_slice(&self) -> &[u8] {
        &self.bits
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b != 0).count()
    }

    pub fn complement(&self) -> Self {
        BinaryGrid {
            height: self.height,
            width: self.width,
            bits: self.bits.iter().map(|&b| 1 - b).collect(),
        }
    }

    pub(crate) fn check_same_dims(&self, other: &BinaryGrid) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        Ok(())
    }
}

impl std::fmt::Debug for BinaryGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "BinaryGrid {}x{}", self.height, self.width)?;
        for row in self.bits.chunks(self.width) {
            let line: String = row.iter().map(|&b| if b != 0 { '#' } else { '.' }).collect();
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

/// Per-class score raster, channel-major then row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityMap {
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<f32>,
}

/// Tolerance on the per-pixel channel sum of multi-channel maps.
pub const SOFTMAX_TOLERANCE: f32 = 1e-4;

impl ProbabilityMap {
    pub fn new(channels: usize, height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidProbability(format!(
                "empty shape {channels}x{height}x{width}"
            )));
        }
        if values.len() != channels * height * width {
            return Err(Error::InvalidProbability(format!(
                "expected {} values, got {}",
                channels * height * width,
                values.len()
            )));
        }
        if let Some((idx, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(Error::InvalidProbability(format!(
                "value {v} at flat index {idx} is outside [0, 1]"
            )));
        }
        let map = ProbabilityMap {
            channels,
            height,
            width,
            values,
        };
        if channels > 1 {
            let plane = height * width;
            for px in 0..plane {
                let sum: f32 = (0..channels).map(|c| map.values[c * plane + px]).sum();
                if (sum - 1.0).abs() > SOFTMAX_TOLERANCE {
                    return Err(Error::InvalidProbability(format!(
                        "channel scores at pixel ({}, {}) sum to {sum}",
                        px / width,
                        px % width
                    )));
                }
            }
        }
        Ok(map)
    }

    pub fn single(height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        Self::new(1, height, width, values)
    }

    /// Hard probabilities: 1.0 on foreground, 0.0 on background.
    pub fn from_binary(grid: &BinaryGrid) -> Self {
        ProbabilityMap {
            channels: 1,
            height: grid.height(),
            width: grid.width(),
            values: grid.as_slice().iter().map(|&b| b as f32).collect(),
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn channel(&self, c: usize) -> Channel<'_> {
        let plane = self.height * self.width;
        Channel {
            height: self.height,
            width: self.width,
            values: &self.values[c * plane..(c + 1) * plane],
        }
    }

    /// Per-pixel argmax over channels; ties resolve to the lowest index.
    pub fn argmax(&self) -> Vec<u32> {
        let plane = self.height * self.width;
        (0..plane)
            .map(|px| {
                let mut best = 0;
                for c in 1..self.channels {
                    if self.values[c * plane + px] > self.values[best * plane + px] {
                        best = c;
                    }
                }
                best as u32
            })
            .collect()
    }
}

/// Borrowed view of one score channel.
#[derive(Clone, Copy, Debug)]
pub struct Channel<'a> {
    pub height: usize,
    pub width: usize,
    pub values: &'a [f32],
}

impl<'a> Channel<'a> {
    pub fn new(height: usize, width: usize, values: &'a [f32]) -> Self {
        assert_eq!(values.len(), height * width);
        Channel { height, width, values }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.width + col]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }
}

/// Foreground iff score > threshold; ties go to background.
pub fn binarize(p: Channel<'_>, threshold: f64) -> BinaryGrid {
    let bits = p.values.iter().map(|&v| (f64::from(v) > threshold) as u8).collect();
    BinaryGrid {
        height: p.height,
        width: p.width,
        bits,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    Fixed,
    Gaussian,
    Otsu,
}

/// How the binarization threshold is chosen for each loss evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub mode: ThresholdMode,
    pub base: f64,
    pub sigma: f64,
    pub clamp: (f64, f64),
    pub seed: u64,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy {
            mode: ThresholdMode::Fixed,
            base: 0.5,
            sigma: 0.0,
            clamp: (0.05, 0.95),
            seed: 0,
        }
    }
}

impl ThresholdPolicy {
    pub fn fixed(base: f64) -> Self {
        ThresholdPolicy {
            base,
            ..Default::default()
        }
    }

    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        ThresholdPolicy {
            mode: ThresholdMode::Gaussian,
            sigma,
            seed,
            ..Default::default()
        }
    }

    pub fn otsu() -> Self {
        ThresholdPolicy {
            mode: ThresholdMode::Otsu,
            ..Default::default()
        }
    }

    /// Policy for the `--sigma/--otsu/--seed` style options: Otsu when
    /// requested, Gaussian for nonzero sigma, fixed 0.5 otherwise.
    pub fn from_options(sigma: f64, otsu: bool, seed: u64) -> Self {
        let mut p = if otsu {
            ThresholdPolicy::otsu()
        } else if sigma != 0.0 {
            ThresholdPolicy::gaussian(sigma, seed)
        } else {
            ThresholdPolicy::default()
        };
        p.seed = seed;
        p
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.clamp;
        let bad = |msg: String| Err(Error::InvalidThresholdPolicy(msg));
        if !(lo > 0.0 && hi < 1.0 && lo < hi) {
            return bad(format!("clamp [{lo}, {hi}] must satisfy 0 < lo < hi < 1"));
        }
        if !(lo..=hi).contains(&self.base) {
            return bad(format!("base {} outside clamp [{lo}, {hi}]", self.base));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma {} must be finite and >= 0", self.sigma));
        }
        Ok(())
    }

    /// Fresh RNG seeded from the policy.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    /// Threshold for one evaluation of `p`. Gaussian mode draws from `rng`;
    /// Otsu falls back to `base` on constant input.
    pub fn resolve<R: Rng + ?Sized>(&self, p: Channel<'_>, rng: &mut R) -> f64 {
        match self.mode {
            ThresholdMode::Fixed => self.base,
            ThresholdMode::Gaussian => sample_threshold(self, rng),
            ThresholdMode::Otsu => otsu_threshold(p).unwrap_or(self.base),
        }
    }
}

/// `clamp(base + shift, lo, hi)`.
pub fn shifted_threshold(policy: &ThresholdPolicy, shift: f64) -> f64 {
    let (lo, hi) = policy.clamp;
    (policy.base + shift).clamp(lo, hi)
}

/// Draws `base + x` with `x ~ Normal(0, sigma^2)`, clamped into the policy
/// range. Out-of-range draws are clamped, never resampled. Zero sigma
/// returns `base` without touching the RNG.
pub fn sample_threshold<R: Rng + ?Sized>(policy: &ThresholdPolicy, rng: &mut R) -> f64 {
    if policy.sigma == 0.0 {
        return shifted_threshold(policy, 0.0);
    }
    let normal = Normal::new(0.0, policy.sigma).expect("sigma validated as finite and >= 0");
    shifted_threshold(policy, normal.sample(rng))
}

pub const OTSU_BINS: usize = 256;

#[inline]
pub(crate) fn otsu_bin(v: f32) -> usize {
    ((f64::from(v) * OTSU_BINS as f64) as usize).min(OTSU_BINS - 1)
}

/// Otsu threshold over a 256-bin histogram of the channel.
///
/// Bin `b` holds values in `[b/256, (b+1)/256)`. Splitting after bin `k`
/// maps to the threshold `(k+1)/256`. When several splits reach the same
/// maximal inter-class variance (empty bins between modes), the middle of
/// that plateau is returned.
pub fn otsu_threshold(p: Channel<'_>) -> Result<f64> {
    let mut hist = [0u64; OTSU_BINS];
    for &v in p.values {
        hist[otsu_bin(v)] += 1;
    }
    let first = p.values.first().copied();
    if first.is_none() || p.values.iter().all(|&v| Some(v) == first) {
        return Err(Error::ConstantInput);
    }

    let total = p.values.len() as f64;
    let weighted_total: f64 = hist.iter().enumerate().map(|(b, &n)| (b as f64 + 0.5) * n as f64).sum();

    let mut best = f64::NEG_INFINITY;
    let mut best_first = 0;
    let mut best_last = 0;
    let mut w0 = 0.0;
    let mut sum0 = 0.0;
    for (k, &n) in hist.iter().enumerate().take(OTSU_BINS - 1) {
        w0 += n as f64;
        sum0 += (k as f64 + 0.5) * n as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let mu0 = sum0 / w0;
        let mu1 = (weighted_total - sum0) / w1;
        let between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        // Relative slack absorbs rounding along a flat plateau.
        if between > best * (1.0 + 1e-12) {
            best = between;
            best_first = k;
            best_last = k;
        } else if between >= best * (1.0 - 1e-12) {
            best_last = k;
        }
    }
    if best == f64::NEG_INFINITY {
        // All values fall into a single bin.
        return Err(Error::ConstantInput);
    }
    let split = (best_first + best_last) / 2;
    Ok((split + 1) as f64 / OTSU_BINS as f64)
}

/// Refinement factor and dilation radii (in refined cells) of the overlay.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridParams {
    pub refine_k: usize,
    pub r_pred: usize,
    pub r_gt: usize,
}

impl Default for GridParams {
    fn default() -> Self {
        GridParams {
            refine_k: 5,
            r_pred: 1,
            r_gt: 2,
        }
    }
}

impl GridParams {
    /// Checked constructor: `r_pred < r_gt < ceil(k / 2)`.
    pub fn new(refine_k: usize, r_pred: usize, r_gt: usize) -> Result<Self> {
        let p = GridParams { refine_k, r_pred, r_gt };
        if r_pred >= r_gt {
            return Err(Error::InvalidGridParams(format!(
                "prediction radius {r_pred} must be smaller than ground-truth radius {r_gt}"
            )));
        }
        p.validate()?;
        Ok(p)
    }

    /// Equal radii for both inputs; only meaningful for the metric, where
    /// it makes DIU symmetric in its arguments.
    pub fn symmetric(refine_k: usize, radius: usize) -> Result<Self> {
        let p = GridParams {
            refine_k,
            r_pred: radius,
            r_gt: radius,
        };
        p.validate()?;
        Ok(p)
    }

    /// No refinement and no thickening: the overlay is the raw pixel grid.
    pub fn raw() -> Self {
        GridParams {
            refine_k: 1,
            r_pred: 0,
            r_gt: 0,
        }
    }

    /// Relaxed check shared by all constructors: `r_pred <= r_gt < ceil(k / 2)`,
    /// which keeps every pixel's center cell untouched by neighboring dilations.
    pub fn validate(&self) -> Result<()> {
        if self.refine_k == 0 {
            return Err(Error::InvalidGridParams("refinement factor must be >= 1".into()));
        }
        if self.r_pred > self.r_gt {
            return Err(Error::InvalidGridParams(format!(
                "prediction radius {} exceeds ground-truth radius {}",
                self.r_pred, self.r_gt
            )));
        }
        if self.r_gt >= self.refine_k.div_ceil(2) {
            return Err(Error::InvalidGridParams(format!(
                "ground-truth radius {} must be < ceil({} / 2)",
                self.r_gt, self.refine_k
            )));
        }
        Ok(())
    }

    /// Width of the background collar standing in for the exterior cell.
    /// One cell wider than the largest dilation, so the outermost ring is
    /// always true negative.
    #[inline]
    pub fn margin(&self) -> usize {
        self.r_gt + 1
    }
}

/// Class of a refined cell. Bit 1 = thickened prediction, bit 0 =
/// thickened ground truth.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum CellClass {
    TN = 0,
    FN = 1,
    FP = 2,
    TP = 3,
}

impl CellClass {
    pub const ALL: [CellClass; 4] = [CellClass::TN, CellClass::FN, CellClass::FP, CellClass::TP];

    #[inline]
    pub fn from_bits(pred: bool, gt: bool) -> Self {
        Self::from_u8(((pred as u8) << 1) | gt as u8)
    }

    #[inline]
    pub fn from_u8(v: u8) -> Self {
        match v & 3 {
            0 => CellClass::TN,
            1 => CellClass::FN,
            2 => CellClass::FP,
            _ => CellClass::TP,
        }
    }

    #[inline]
    pub fn in_pred(self) -> bool {
        (self as u8) & 2 != 0
    }

    #[inline]
    pub fn in_gt(self) -> bool {
        (self as u8) & 1 != 0
    }

    /// TP or TN.
    #[inline]
    pub fn is_correct(self) -> bool {
        self.in_pred() == self.in_gt()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CellClass::TN => "TN",
            CellClass::FN => "FN",
            CellClass::FP => "FP",
            CellClass::TP => "TP",
        }
    }

    /// Gray level used for the class-map PGM export.
    pub fn gray(self) -> u8 {
        match self {
            CellClass::TN => 0,
            CellClass::FN => 85,
            CellClass::FP => 170,
            CellClass::TP => 255,
        }
    }
}

impl std::fmt::Display for CellClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Four-class overlay on the refined grid.
///
/// The refined grid covers the original image plus a true-negative collar
/// of [`GridParams::margin`] cells on every side. Original pixel `(i, j)`
/// occupies refined rows `margin + i*k .. margin + (i+1)*k` (and likewise
/// for columns).
#[derive(Clone, Debug)]
pub struct RefinedClassMap {
    params: GridParams,
    orig_height: usize,
    orig_width: usize,
    height: usize,
    width: usize,
    cells: Vec<u8>,
}

impl RefinedClassMap {
    pub fn params(&self) -> GridParams {
        self.params
    }

    pub fn orig_dims(&self) -> (usize, usize) {
        (self.orig_height, self.orig_width)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn margin(&self) -> usize {
        self.params.margin()
    }

    /// Raw class bytes (see [`CellClass`]), row-major.
    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    #[inline]
    pub fn class_at(&self, row: usize, col: usize) -> CellClass {
        CellClass::from_u8(self.cells[row * self.width + col])
    }

    /// Refined coordinates of the center cell of original pixel `(i, j)`.
    #[inline]
    pub fn center_of(&self, i: usize, j: usize) -> (usize, usize) {
        let k = self.params.refine_k;
        let m = self.margin();
        (m + i * k + k / 2, m + j * k + k / 2)
    }

    pub fn count(&self, class: CellClass) -> usize {
        self.cells.iter().filter(|&&c| c == class as u8).count()
    }

    /// Membership mask over refined cells for a set of classes.
    pub fn mask(&self, classes: &[CellClass]) -> Vec<u8> {
        let mut lut = [0u8; 4];
        for c in classes {
            lut[*c as usize] = 1;
        }
        self.cells.iter().map(|&c| lut[c as usize]).collect()
    }
}

/// For every refined coordinate along one axis, the inclusive range of
/// original indices whose dilated footprint covers it (`lo > hi` if none).
fn axis_cover(n: usize, k: usize, margin: usize, radius: usize) -> Vec<(u32, u32)> {
    let len = n * k + 2 * margin;
    let (k, r, n) = (k as i64, radius as i64, n as i64);
    (0..len as i64)
        .map(|y| {
            let t = y - margin as i64;
            // i*k - r <= t <= i*k + k - 1 + r
            let lo = (t - k + 1 - r).div_euclid(k) + i64::from((t - k + 1 - r).rem_euclid(k) != 0);
            let hi = (t + r).div_euclid(k);
            let lo = lo.max(0);
            let hi = hi.min(n - 1);
            if lo > hi {
                (1, 0)
            } else {
                (lo as u32, hi as u32)
            }
        })
        .collect()
}

/// Classifies every refined cell by membership in the Chebyshev dilation of
/// the prediction foreground (radius `r_pred`) and of the ground-truth
/// foreground (radius `r_gt`).
pub fn build_combined_map(pred: &BinaryGrid, gt: &BinaryGrid, params: GridParams) -> Result<RefinedClassMap> {
    pred.check_same_dims(gt)?;
    params.validate()?;
    let (h, w) = pred.dims();
    let k = params.refine_k;
    let m = params.margin();
    let height = h * k + 2 * m;
    let width = w * k + 2 * m;

    let rows_p = axis_cover(h, k, m, params.r_pred);
    let rows_g = axis_cover(h, k, m, params.r_gt);
    let cols_p = axis_cover(w, k, m, params.r_pred);
    let cols_g = axis_cover(w, k, m, params.r_gt);

    let mut cells = vec![0u8; height * width];
    let mut or_p = vec![0u8; w];
    let mut or_g = vec![0u8; w];
    let mut last: Option<((u32, u32), (u32, u32))> = None;

    fn fold_rows(grid: &BinaryGrid, range: (u32, u32), out: &mut [u8]) {
        out.fill(0);
        let w = grid.width();
        for i in range.0..=range.1 {
            if range.0 > range.1 {
                break;
            }
            let row = &grid.as_slice()[i as usize * w..(i as usize + 1) * w];
            for (o, &b) in out.iter_mut().zip(row) {
                *o |= b;
            }
        }
    }

    #[inline]
    fn covered(or_row: &[u8], range: (u32, u32)) -> u8 {
        let mut v = 0;
        let mut j = range.0;
        while j <= range.1 {
            v |= or_row[j as usize];
            j += 1;
        }
        v
    }

    for y in 0..height {
        let key = (rows_p[y], rows_g[y]);
        if last != Some(key) {
            fold_rows(pred, rows_p[y], &mut or_p);
            fold_rows(gt, rows_g[y], &mut or_g);
            last = Some(key);
        }
        let out = &mut cells[y * width..(y + 1) * width];
        for x in 0..width {
            let p = covered(&or_p, cols_p[x]);
            let g = covered(&or_g, cols_g[x]);
            out[x] = (p << 1) | g;
        }
    }

    Ok(RefinedClassMap {
        params,
        orig_height: h,
        orig_width: w,
        height,
        width,
        cells,
    })
}
