//! Connected-component labeling and region adjacency.
//!
//! Labeling is a two-pass raster scan: the first pass assigns provisional
//! labels and records equivalences in a [`DisjointSets`] over those labels,
//! the second pass resolves each provisional label to its root and renumbers
//! components in order of first occurrence (the virtual exterior, when
//! requested, is always label 1).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::imagegrid::{BinaryGrid, CellClass};
use crate::unionfind::DisjointSets;

/// Whether diagonal neighbors are connected.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Connectivity {
    Four,
    Eight,
}

/// Component id per cell; 0 marks cells outside the labeled class.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    labels: Vec<u32>,
    count: u32,
    exterior_label: Option<u32>,
}

impl LabelMap {
    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    /// Number of components, counting the exterior when present.
    #[inline]
    pub fn count(&self) -> u32 {
        self.count
    }

    #[inline]
    pub fn exterior_label(&self) -> Option<u32> {
        self.exterior_label
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.labels[row * self.width + col]
    }

    #[inline]
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Label map as an 8-bit image, ids above 255 clamped.
    pub fn to_gray(&self) -> Vec<u8> {
        self.labels.iter().map(|&l| l.min(255) as u8).collect()
    }
}

/// Shared scan for all labelings. `member(p)` selects cells, `joins(p, q,
/// diagonal)` decides whether two member neighbors belong together.
fn scan_label(
    height: usize,
    width: usize,
    member: impl Fn(usize) -> bool,
    joins: impl Fn(usize, usize, bool) -> bool,
    include_exterior: bool,
) -> LabelMap {
    let n = height * width;
    let mut labels = vec![0u32; n];
    let mut sets = DisjointSets::with_capacity(64);
    // Provisional id 0 is the "unlabeled" sentinel.
    sets.make_set();
    let exterior = include_exterior.then(|| sets.make_set());

    for r in 0..height {
        let row = r * width;
        for c in 0..width {
            let p = row + c;
            if !member(p) {
                continue;
            }
            let mut current = 0u32;
            let mut visit = |q: usize, diagonal: bool, labels: &[u32], sets: &mut DisjointSets| {
                let lq = labels[q];
                if lq != 0 && joins(p, q, diagonal) {
                    if current == 0 {
                        current = lq;
                    } else if current != lq {
                        sets.union(current, lq);
                    }
                }
            };
            if c > 0 {
                visit(p - 1, false, &labels, &mut sets);
            }
            if r > 0 {
                let up = p - width;
                visit(up, false, &labels, &mut sets);
                if c > 0 {
                    visit(up - 1, true, &labels, &mut sets);
                }
                if c + 1 < width {
                    visit(up + 1, true, &labels, &mut sets);
                }
            }
            if current == 0 {
                current = sets.make_set();
            }
            labels[p] = current;
            if let Some(ext) = exterior {
                if r == 0 || c == 0 || r + 1 == height || c + 1 == width {
                    sets.union(current, ext);
                }
            }
        }
    }

    let mut canonical = vec![0u32; sets.len()];
    let mut count = 0u32;
    let exterior_label = exterior.map(|ext| {
        let root = sets.find(ext);
        count += 1;
        canonical[root as usize] = count;
        count
    });
    for l in labels.iter_mut() {
        if *l == 0 {
            continue;
        }
        let root = sets.find(*l) as usize;
        if canonical[root] == 0 {
            count += 1;
            canonical[root] = count;
        }
        *l = canonical[root];
    }

    LabelMap {
        height,
        width,
        labels,
        count,
        exterior_label,
    }
}

/// Labels the cells where `mask` is nonzero. With `include_exterior`, a
/// virtual exterior component is created (label 1) and joined with every
/// border cell of the class.
pub fn label_mask(
    height: usize,
    width: usize,
    mask: &[u8],
    connectivity: Connectivity,
    include_exterior: bool,
) -> LabelMap {
    assert_eq!(mask.len(), height * width);
    let eight = connectivity == Connectivity::Eight;
    scan_label(
        height,
        width,
        |p| mask[p] != 0,
        |_, _, diagonal| eight || !diagonal,
        include_exterior,
    )
}

/// Labels the foreground of a binary grid.
pub fn label_components(grid: &BinaryGrid, connectivity: Connectivity, include_exterior: bool) -> LabelMap {
    label_mask(
        grid.height(),
        grid.width(),
        grid.as_slice(),
        connectivity,
        include_exterior,
    )
}

/// Labeling of a class raster where every cell is labeled and each
/// component contains a single class.
#[derive(Clone, Debug)]
pub struct Partition {
    pub labels: LabelMap,
    /// Class of each label, indexed by label (index 0 unused).
    pub classes: Vec<CellClass>,
    /// Cell count of each label, indexed by label (index 0 unused).
    pub sizes: Vec<u64>,
}

/// Labels every cell of a four-class raster; TP joins diagonally when
/// `tp_connectivity` is eight, all other classes are 4-connected. The
/// exterior is joined to border cells of class `exterior_class`.
pub fn label_partition(
    height: usize,
    width: usize,
    classes: &[u8],
    tp_connectivity: Connectivity,
    exterior_class: Option<CellClass>,
) -> Partition {
    assert_eq!(classes.len(), height * width);
    let tp = CellClass::TP as u8;
    let tp_eight = tp_connectivity == Connectivity::Eight;

    let labels = match exterior_class {
        None => scan_label(
            height,
            width,
            |_| true,
            |p, q, diagonal| classes[p] == classes[q] && (!diagonal || (tp_eight && classes[p] == tp)),
            false,
        ),
        Some(ext) => label_partition_with_exterior(height, width, classes, tp_eight, ext as u8),
    };

    let mut class_of = vec![CellClass::TN; labels.count as usize + 1];
    let mut sizes = vec![0u64; labels.count as usize + 1];
    for (&l, &c) in labels.labels.iter().zip(classes) {
        class_of[l as usize] = CellClass::from_u8(c);
        sizes[l as usize] += 1;
    }
    if let Some(ext) = labels.exterior_label {
        class_of[ext as usize] = exterior_class.unwrap_or(CellClass::TN);
    }
    Partition {
        labels,
        classes: class_of,
        sizes,
    }
}

fn label_partition_with_exterior(
    height: usize,
    width: usize,
    classes: &[u8],
    tp_eight: bool,
    ext_class: u8,
) -> LabelMap {
    // The exterior attaches only to border cells of its own class; merge it
    // in after the scan.
    let tp = CellClass::TP as u8;
    let base = scan_label(
        height,
        width,
        |_| true,
        |p, q, diagonal| classes[p] == classes[q] && (!diagonal || (tp_eight && classes[p] == tp)),
        false,
    );
    let mut sets = DisjointSets::new(base.count as usize + 2);
    let ext = base.count + 1;
    let on_border = |p: usize, sets: &mut DisjointSets| {
        if classes[p] == ext_class {
            sets.union(ext, base.labels[p]);
        }
    };
    for c in 0..width {
        on_border(c, &mut sets);
        on_border((height - 1) * width + c, &mut sets);
    }
    for r in 0..height {
        on_border(r * width, &mut sets);
        on_border(r * width + width - 1, &mut sets);
    }

    let mut canonical = vec![0u32; base.count as usize + 2];
    let root = sets.find(ext);
    canonical[root as usize] = 1;
    let mut count = 1u32;
    let labels = base
        .labels
        .iter()
        .map(|&l| {
            let root = sets.find(l) as usize;
            if canonical[root] == 0 {
                count += 1;
                canonical[root] = count;
            }
            canonical[root]
        })
        .collect();
    LabelMap {
        height,
        width,
        labels,
        count,
        exterior_label: Some(1),
    }
}

/// Neighborhood used to decide whether two regions touch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdjacencyMode {
    /// Regions touch iff they share a 1-cell (4-adjacency).
    EdgeShared,
    /// Regions touch iff their closures meet (8-adjacency).
    CornerInclusive,
}

/// How an edge was witnessed; `Side` wins over `Corner`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Contact {
    Side,
    Corner,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Adjacency {
    pub a: u32,
    pub b: u32,
    pub contact: Contact,
    /// First cell (row, col) found on the `a` side of the contact. Contacts
    /// with a virtual exterior report the border cell.
    pub witness: (usize, usize),
}

/// Sorted, deduplicated set of region contacts.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AdjacencySet {
    pub edges: Vec<Adjacency>,
}

impl AdjacencySet {
    fn from_raw(mut raw: Vec<(u32, u32, Contact, usize, usize)>) -> Self {
        raw.sort_unstable();
        raw.dedup_by_key(|e| (e.0, e.1));
        AdjacencySet {
            edges: raw
                .into_iter()
                .map(|(a, b, contact, r, c)| Adjacency {
                    a,
                    b,
                    contact,
                    witness: (r, c),
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn contains(&self, a: u32, b: u32) -> bool {
        self.edges.binary_search_by_key(&(a, b), |e| (e.a, e.b)).is_ok()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.edges.iter().map(|e| (e.a, e.b))
    }
}

/// Forward neighbor offsets (dr, dc) covering each unordered neighbor pair once.
const SIDE_FORWARD: [(isize, isize); 2] = [(0, 1), (1, 0)];
const CORNER_FORWARD: [(isize, isize); 2] = [(1, 1), (1, -1)];

/// Contacts between regions of two label maps over the same grid, as
/// ordered pairs `(label in a, label in b)`. The exterior of either map
/// touches every labeled border cell of the other.
pub fn region_adjacency(a: &LabelMap, b: &LabelMap, mode: AdjacencyMode) -> Result<AdjacencySet> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch {
            expected: a.dims(),
            found: b.dims(),
        });
    }
    let (h, w) = a.dims();
    let mut raw = Vec::new();
    let mut last = (0u32, 0u32);
    let mut push = |la: u32, lb: u32, contact: Contact, r: usize, c: usize, raw: &mut Vec<_>| {
        if la != 0 && lb != 0 && (la, lb) != last {
            raw.push((la, lb, contact, r, c));
            last = (la, lb);
        }
    };

    let mut offsets: Vec<((isize, isize), Contact)> = SIDE_FORWARD.iter().map(|&o| (o, Contact::Side)).collect();
    if mode == AdjacencyMode::CornerInclusive {
        offsets.extend(CORNER_FORWARD.iter().map(|&o| (o, Contact::Corner)));
    }

    for r in 0..h {
        for c in 0..w {
            let p = r * w + c;
            for &((dr, dc), contact) in &offsets {
                let (qr, qc) = (r as isize + dr, c as isize + dc);
                if qr < 0 || qc < 0 || qr >= h as isize || qc >= w as isize {
                    continue;
                }
                let q = qr as usize * w + qc as usize;
                push(a.labels[p], b.labels[q], contact, r, c, &mut raw);
                push(a.labels[q], b.labels[p], contact, qr as usize, qc as usize, &mut raw);
            }
            let border = r == 0 || c == 0 || r + 1 == h || c + 1 == w;
            if border {
                if let Some(ext) = b.exterior_label {
                    push(a.labels[p], ext, Contact::Side, r, c, &mut raw);
                }
                if let Some(ext) = a.exterior_label {
                    push(ext, b.labels[p], Contact::Side, r, c, &mut raw);
                }
            }
        }
    }
    Ok(AdjacencySet::from_raw(raw))
}

/// Contacts between distinct regions of one label map, as pairs `(a, b)`
/// with `a < b`.
pub fn partition_adjacency(map: &LabelMap, mode: AdjacencyMode) -> AdjacencySet {
    let (h, w) = map.dims();
    let mut raw = Vec::new();
    let mut last = (0u32, 0u32);
    let mut offsets: Vec<((isize, isize), Contact)> = SIDE_FORWARD.iter().map(|&o| (o, Contact::Side)).collect();
    if mode == AdjacencyMode::CornerInclusive {
        offsets.extend(CORNER_FORWARD.iter().map(|&o| (o, Contact::Corner)));
    }
    for r in 0..h {
        for c in 0..w {
            let lp = map.labels[r * w + c];
            for &((dr, dc), contact) in &offsets {
                let (qr, qc) = (r as isize + dr, c as isize + dc);
                if qr < 0 || qc < 0 || qr >= h as isize || qc >= w as isize {
                    continue;
                }
                let lq = map.labels[qr as usize * w + qc as usize];
                if lp == 0 || lq == 0 || lp == lq {
                    continue;
                }
                let key = (lp.min(lq), lp.max(lq));
                if key != last {
                    raw.push((key.0, key.1, contact, r, c));
                    last = key;
                }
            }
        }
    }
    AdjacencySet::from_raw(raw)
}
