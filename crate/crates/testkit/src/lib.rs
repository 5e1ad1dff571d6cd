//! Reference implementations used only by tests.
//!
//! Everything here is written for clarity rather than speed and shares no
//! code path with `cgtopo` beyond the [`BinaryGrid`] container: components
//! come from breadth-first flood fill, thickening from a literal Chebyshev
//! window scan over an upsampled raster, and Betti numbers from the Euler
//! characteristic of the closed cubical complex.

use std::collections::{HashMap, HashSet, VecDeque};

use cgtopo::{BinaryGrid, GridParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_grid<R: Rng>(rng: &mut R, h: usize, w: usize, density: f64) -> BinaryGrid {
    BinaryGrid::from_fn(h, w, |_, _| rng.random_bool(density))
}

/// Flips each pixel independently with probability `p`.
pub fn perturb<R: Rng>(rng: &mut R, g: &BinaryGrid, p: f64) -> BinaryGrid {
    BinaryGrid::from_fn(g.height(), g.width(), |i, j| g.get(i, j) ^ rng.random_bool(p))
}

/// Union of random axis-aligned rectangles.
pub fn random_blobs<R: Rng>(rng: &mut R, h: usize, w: usize, count: usize) -> BinaryGrid {
    let mut g = BinaryGrid::zeros(h, w);
    for _ in 0..count {
        let r0 = rng.random_range(0..h);
        let c0 = rng.random_range(0..w);
        let r1 = (r0 + rng.random_range(1..=h.div_ceil(3).max(1))).min(h);
        let c1 = (c0 + rng.random_range(1..=w.div_ceil(3).max(1))).min(w);
        for r in r0..r1 {
            for c in c0..c1 {
                g.set(r, c, true);
            }
        }
    }
    g
}

/// A mix of structured and noisy pairs: uniform noise, blobs with light
/// perturbation, and identical copies.
pub fn random_pair<R: Rng>(rng: &mut R, h: usize, w: usize) -> (BinaryGrid, BinaryGrid) {
    match rng.random_range(0..4) {
        0 => {
            let d = rng.random_range(0.2..0.8);
            let a = random_grid(rng, h, w, d);
            (a, random_grid(rng, h, w, d))
        }
        1 => {
            let n = rng.random_range(1..6);
            let g = random_blobs(rng, h, w, n);
            let q = rng.random_range(0.0..0.08);
            let p = perturb(rng, &g, q);
            (p, g)
        }
        2 => {
            let n = rng.random_range(1..6);
            let g = random_blobs(rng, h, w, n);
            let m = rng.random_range(1..6);
            (random_blobs(rng, h, w, m), g)
        }
        _ => {
            let d = rng.random_range(0.2..0.8);
            let g = random_grid(rng, h, w, d);
            let q = rng.random_range(0.0..0.03);
            let p = perturb(rng, &g, q);
            (p, g)
        }
    }
}

/// Flood-fill component ids (0 = not a member) and their count. When
/// `exterior` is set, a virtual cell outside the grid is a member that
/// touches every border cell; it receives id 1 and is always counted.
pub fn flood_fill(h: usize, w: usize, member: &[bool], eight: bool, exterior: bool) -> (Vec<usize>, usize) {
    let mut ids = vec![0usize; h * w];
    let mut count = 0;
    let offsets: &[(isize, isize)] = if eight {
        &[(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
    } else {
        &[(-1, 0), (0, -1), (0, 1), (1, 0)]
    };
    let fill = |seeds: Vec<usize>, id: usize, ids: &mut Vec<usize>| {
        let mut queue: VecDeque<usize> = seeds.into_iter().collect();
        for &s in &queue {
            ids[s] = id;
        }
        while let Some(p) = queue.pop_front() {
            let (r, c) = ((p / w) as isize, (p % w) as isize);
            for &(dr, dc) in offsets {
                let (nr, nc) = (r + dr, c + dc);
                if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                    continue;
                }
                let q = nr as usize * w + nc as usize;
                if member[q] && ids[q] == 0 {
                    ids[q] = id;
                    queue.push_back(q);
                }
            }
        }
    };
    if exterior {
        count += 1;
        let border: Vec<usize> = (0..h * w)
            .filter(|&p| {
                let (r, c) = (p / w, p % w);
                member[p] && (r == 0 || c == 0 || r + 1 == h || c + 1 == w)
            })
            .collect();
        fill(border, count, &mut ids);
    }
    for p in 0..h * w {
        if member[p] && ids[p] == 0 {
            count += 1;
            fill(vec![p], count, &mut ids);
        }
    }
    (ids, count)
}

fn members(g: &BinaryGrid) -> Vec<bool> {
    g.as_slice().iter().map(|&b| b != 0).collect()
}

/// `(b0, b1)` of the closed union of foreground squares: b0 by 8-connected
/// flood fill, b1 = b0 - (V - E + F).
pub fn euler_betti(g: &BinaryGrid) -> (i64, i64) {
    let (h, w) = g.dims();
    let (_, b0) = flood_fill(h, w, &members(g), true, false);
    let fg =
        |r: isize, c: isize| r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w && g.get(r as usize, c as usize);
    let mut vertices = 0i64;
    for r in 0..=h as isize {
        for c in 0..=w as isize {
            if fg(r - 1, c - 1) || fg(r - 1, c) || fg(r, c - 1) || fg(r, c) {
                vertices += 1;
            }
        }
    }
    let mut edges = 0i64;
    for r in 0..=h as isize {
        for c in 0..w as isize {
            if fg(r - 1, c) || fg(r, c) {
                edges += 1;
            }
        }
    }
    for r in 0..h as isize {
        for c in 0..=w as isize {
            if fg(r, c - 1) || fg(r, c) {
                edges += 1;
            }
        }
    }
    let faces = g.count_ones() as i64;
    let chi = vertices - edges + faces;
    (b0 as i64, b0 as i64 - chi)
}

/// Refined overlay computed by definition: upsample both rasters into a
/// grid with a background collar of `r_gt + 1` cells, then mark a cell as
/// thickened when any foreground cell lies in its Chebyshev window.
/// Returns `(height, width, classes)` with class = 2*pred + gt.
pub fn brute_refined(pred: &BinaryGrid, gt: &BinaryGrid, params: GridParams) -> (usize, usize, Vec<u8>) {
    let k = params.refine_k;
    let m = params.r_gt + 1;
    let (h, w) = pred.dims();
    let (rh, rw) = (h * k + 2 * m, w * k + 2 * m);
    let upsample = |g: &BinaryGrid| -> Vec<bool> {
        let mut out = vec![false; rh * rw];
        for y in m..m + h * k {
            for x in m..m + w * k {
                out[y * rw + x] = g.get((y - m) / k, (x - m) / k);
            }
        }
        out
    };
    let dilate = |src: &[bool], r: usize| -> Vec<bool> {
        let r = r as isize;
        let mut out = vec![false; rh * rw];
        for y in 0..rh as isize {
            for x in 0..rw as isize {
                'window: for dy in -r..=r {
                    for dx in -r..=r {
                        let (yy, xx) = (y + dy, x + dx);
                        if yy >= 0
                            && xx >= 0
                            && yy < rh as isize
                            && xx < rw as isize
                            && src[yy as usize * rw + xx as usize]
                        {
                            out[y as usize * rw + x as usize] = true;
                            break 'window;
                        }
                    }
                }
            }
        }
        out
    };
    let p = dilate(&upsample(pred), params.r_pred);
    let g = dilate(&upsample(gt), params.r_gt);
    let classes = p.iter().zip(&g).map(|(&a, &b)| ((a as u8) << 1) | b as u8).collect();
    (rh, rw, classes)
}

pub const TN: u8 = 0;
pub const FN: u8 = 1;
pub const FP: u8 = 2;
pub const TP: u8 = 3;

/// Components of `inner` mapped into components of `outer`; returns
/// `(ker, coker)`. Panics if some inner component straddles two outer ones.
fn containment(inner: &(Vec<usize>, usize), outer: &(Vec<usize>, usize), exterior: bool) -> (u32, u32) {
    let mut image: HashMap<usize, usize> = HashMap::new();
    if exterior {
        image.insert(1, 1);
    }
    for (&a, &b) in inner.0.iter().zip(&outer.0) {
        if a != 0 {
            assert_ne!(b, 0, "inner cell outside outer set");
            let prev = image.insert(a, b);
            assert!(
                prev.is_none() || prev == Some(b),
                "inner component maps to two outer components"
            );
        }
    }
    let distinct: HashSet<usize> = image.values().copied().collect();
    ((inner.1 - distinct.len()) as u32, (outer.1 - distinct.len()) as u32)
}

/// `[total, ker_fg, coker_fg, ker_bg, coker_bg]` of the DIU metric.
pub fn oracle_diu(pred: &BinaryGrid, gt: &BinaryGrid, params: GridParams) -> [u32; 5] {
    let (h, w, cls) = brute_refined(pred, gt, params);
    let set = |allowed: &[u8]| -> Vec<bool> { cls.iter().map(|c| allowed.contains(c)).collect() };
    let fg_i = flood_fill(h, w, &set(&[TP]), true, false);
    let fg_u = flood_fill(h, w, &set(&[TP, FP, FN]), true, false);
    let bg_i = flood_fill(h, w, &set(&[TN]), false, true);
    let bg_u = flood_fill(h, w, &set(&[TN, FP, FN]), false, true);
    let (kf, cf) = containment(&fg_i, &fg_u, false);
    let (kb, cb) = containment(&bg_i, &bg_u, true);
    [kf + cf + kb + cb, kf, cf, kb, cb]
}

/// Region of the combined graph as seen by the oracle.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct OracleRegion {
    pub class: u8,
    pub critical: bool,
    pub pixels: Vec<(usize, usize)>,
}

/// Misclassified regions of the combined graph with their regular/critical
/// flag and owned pixels, sorted. TP regions use 8-connectivity, every
/// other class 4-connectivity, the TN touching the border is the exterior,
/// and two regions touch when they share a side.
pub fn oracle_regions(pred: &BinaryGrid, gt: &BinaryGrid, params: GridParams) -> Vec<OracleRegion> {
    let (h, w, cls) = brute_refined(pred, gt, params);
    // Region id = (class, per-class component id).
    let mut region = vec![(0u8, 0usize); h * w];
    for c in [TN, FN, FP, TP] {
        let mem: Vec<bool> = cls.iter().map(|&x| x == c).collect();
        let (ids, _) = flood_fill(h, w, &mem, c == TP, c == TN);
        for p in 0..h * w {
            if mem[p] {
                region[p] = (c, ids[p]);
            }
        }
    }
    let mut nbrs: HashMap<(u8, usize), HashSet<(u8, usize)>> = HashMap::new();
    for r in 0..h {
        for c in 0..w {
            let a = region[r * w + c];
            nbrs.entry(a).or_default();
            for (rr, cc) in [(r + 1, c), (r, c + 1)] {
                if rr < h && cc < w {
                    let b = region[rr * w + cc];
                    if a != b {
                        nbrs.entry(a).or_default().insert(b);
                        nbrs.entry(b).or_default().insert(a);
                    }
                }
            }
        }
    }
    let k = params.refine_k;
    let m = params.r_gt + 1;
    let mut owned: HashMap<(u8, usize), Vec<(usize, usize)>> = HashMap::new();
    for i in 0..pred.height() {
        for j in 0..pred.width() {
            if pred.get(i, j) != gt.get(i, j) {
                let center = (m + i * k + k / 2) * w + m + j * k + k / 2;
                owned.entry(region[center]).or_default().push((i, j));
            }
        }
    }
    let mut out: Vec<OracleRegion> = nbrs
        .iter()
        .filter(|(key, _)| key.0 == FP || key.0 == FN)
        .map(|(key, ns)| {
            let tp = ns.iter().filter(|n| n.0 == TP).count();
            let tn = ns.iter().filter(|n| n.0 == TN).count();
            let mut pixels = owned.get(key).cloned().unwrap_or_default();
            pixels.sort();
            OracleRegion {
                class: key.0,
                critical: !(tp == 1 && tn == 1),
                pixels,
            }
        })
        .collect();
    out.sort();
    out
}

/// Parses an overlay drawing into `(pred, gt)`: `.` neither, `#` both,
/// `+` prediction only, `-` ground truth only. Lines starting with `;`
/// are comments.
pub fn parse_overlay(text: &str) -> (BinaryGrid, BinaryGrid) {
    let rows: Vec<&str> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with(';'))
        .collect();
    let h = rows.len();
    let w = rows[0].len();
    let mut p = BinaryGrid::zeros(h, w);
    let mut g = BinaryGrid::zeros(h, w);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row.len(), w, "ragged overlay row {i}");
        for (j, ch) in row.chars().enumerate() {
            let (a, b) = match ch {
                '.' => (false, false),
                '#' => (true, true),
                '+' => (true, false),
                '-' => (false, true),
                other => panic!("unexpected overlay character {other:?}"),
            };
            p.set(i, j, a);
            g.set(i, j, b);
        }
    }
    (p, g)
}

/// Reads `tests/fixtures/<name>.txt` from the core crate.
pub fn fixture(name: &str) -> (BinaryGrid, BinaryGrid) {
    let path = format!("{}/../core/tests/fixtures/{name}.txt", env!("CARGO_MANIFEST_DIR"));
    parse_overlay(&std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}")))
}

/// Betti numbers of the refined prediction `TP ∪ FP` before and after
/// flipping the cells of one misclassified region to their ground-truth
/// value. `classes` holds the refined cell classes and `in_region` marks
/// the region.
pub fn refined_flip_betti(h: usize, w: usize, classes: &[u8], in_region: &[bool]) -> ((i64, i64), (i64, i64)) {
    let before = BinaryGrid::from_fn(h, w, |r, c| classes[r * w + c] & 2 != 0);
    let after = BinaryGrid::from_fn(h, w, |r, c| {
        let p = r * w + c;
        if in_region[p] {
            classes[p] & 1 != 0
        } else {
            classes[p] & 2 != 0
        }
    });
    (euler_betti(&before), euler_betti(&after))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euler_betti_small_cases() {
        let ring = BinaryGrid::from_ascii("### #.# ###").unwrap();
        assert_eq!(euler_betti(&ring), (1, 1));
        let diag = BinaryGrid::from_ascii("#. .#").unwrap();
        assert_eq!(euler_betti(&diag), (1, 0));
        let diamond = BinaryGrid::from_ascii(".#. #.# .#.").unwrap();
        assert_eq!(euler_betti(&diamond), (1, 1));
        assert_eq!(euler_betti(&BinaryGrid::zeros(3, 3)), (0, 0));
    }

    #[test]
    fn flood_fill_exterior() {
        let mem = [true, true, true, true, false, true, true, true, true];
        let (_, n) = flood_fill(3, 3, &mem, false, true);
        assert_eq!(n, 1);
        let (_, n) = flood_fill(3, 3, &[false; 9], false, true);
        assert_eq!(n, 1);
    }
}
