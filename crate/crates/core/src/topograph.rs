//! Component graphs.
//!
//! [`ComponentGraph`] is the bipartite tree of foreground and background
//! components of one binary image; its node degrees give the Betti numbers.
//! [`CombinedComponentGraph`] is the region adjacency graph of the refined
//! TP/TN/FP/FN overlay of a prediction and its ground truth. A misclassified
//! region is regular when it touches exactly one TP region and exactly one
//! TN region; every other misclassified region is critical.

use std::fmt::Write as _;

use serde::Serialize;

use crate::components::{
    label_components, label_partition, partition_adjacency, region_adjacency, AdjacencyMode, Connectivity, LabelMap,
    Partition,
};
use crate::error::{Error, Result};
use crate::imagegrid::{build_combined_map, BinaryGrid, CellClass, GridParams, RefinedClassMap};
use crate::unionfind::DisjointSets;

/// Foreground (8-connected) and background (4-connected, exterior merged)
/// components of one image, with an edge wherever their closures meet.
#[derive(Clone, Debug)]
pub struct ComponentGraph {
    pub fg: LabelMap,
    pub bg: LabelMap,
    /// `(foreground id, background id)` pairs, sorted.
    pub edges: Vec<(u32, u32)>,
}

impl ComponentGraph {
    pub fn fg_count(&self) -> u32 {
        self.fg.count()
    }

    pub fn bg_count(&self) -> u32 {
        self.bg.count()
    }

    /// Degree of every foreground node, indexed by id (index 0 unused).
    pub fn fg_degrees(&self) -> Vec<u32> {
        let mut deg = vec![0u32; self.fg.count() as usize + 1];
        for &(f, _) in &self.edges {
            deg[f as usize] += 1;
        }
        deg
    }

    pub fn bg_degrees(&self) -> Vec<u32> {
        let mut deg = vec![0u32; self.bg.count() as usize + 1];
        for &(_, b) in &self.edges {
            deg[b as usize] += 1;
        }
        deg
    }
}

pub fn build_component_graph(image: &BinaryGrid) -> Result<ComponentGraph> {
    let fg = label_components(image, Connectivity::Eight, false);
    let bg = label_components(&image.complement(), Connectivity::Four, true);
    let adj = region_adjacency(&fg, &bg, AdjacencyMode::CornerInclusive)?;
    let edges: Vec<(u32, u32)> = adj.pairs().collect();

    let nf = fg.count() as usize;
    let nodes = nf + bg.count() as usize;
    let mut sets = DisjointSets::new(nodes);
    for &(f, b) in &edges {
        sets.union(f - 1, nf as u32 + b - 1);
    }
    let components = (0..nodes as u32).filter(|&x| sets.find(x) == x).count();
    if edges.len() + 1 != nodes || components != 1 {
        return Err(Error::NotATree {
            nodes,
            edges: edges.len(),
            components,
        });
    }
    Ok(ComponentGraph { fg, bg, edges })
}

/// `(b0, b1)` of the foreground: b0 counts foreground nodes, b1 sums
/// `degree - 1` over them.
pub fn betti_numbers(g: &ComponentGraph) -> (u32, u32) {
    let b0 = g.fg_count();
    let b1 = g.fg_degrees().iter().skip(1).map(|&d| d.saturating_sub(1)).sum();
    (b0, b1)
}

/// Betti numbers of a binary image's foreground.
pub fn image_betti(image: &BinaryGrid) -> Result<(u32, u32)> {
    build_component_graph(image).map(|g| betti_numbers(&g))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VertexStatus {
    Regular,
    Critical,
}

/// Region adjacency graph over the refined four-class overlay.
///
/// Node ids are the partition labels `1..=node_count`; the exterior is
/// node 1 and is always TN.
#[derive(Clone, Debug)]
pub struct CombinedComponentGraph {
    partition: Partition,
    edges: Vec<(u32, u32)>,
    offsets: Vec<u32>,
    neighbors: Vec<u32>,
    status: Vec<Option<VertexStatus>>,
}

impl CombinedComponentGraph {
    pub fn node_count(&self) -> u32 {
        self.partition.labels.count()
    }

    pub fn labels(&self) -> &LabelMap {
        &self.partition.labels
    }

    #[inline]
    pub fn class_of(&self, id: u32) -> CellClass {
        self.partition.classes[id as usize]
    }

    /// Number of refined cells in a region.
    pub fn cells_of(&self, id: u32) -> u64 {
        self.partition.sizes[id as usize]
    }

    pub fn exterior(&self) -> u32 {
        self.partition.labels.exterior_label().unwrap_or(1)
    }

    /// Undirected edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn neighbors(&self, id: u32) -> &[u32] {
        let (s, e) = (self.offsets[id as usize], self.offsets[id as usize + 1]);
        &self.neighbors[s as usize..e as usize]
    }

    /// Regular/critical flag of a misclassified node, `None` for TP/TN.
    pub fn status(&self, id: u32) -> Option<VertexStatus> {
        self.status[id as usize]
    }

    pub fn node_ids(&self) -> impl Iterator<Item = u32> {
        1..=self.node_count()
    }

    pub fn misclassified(&self) -> impl Iterator<Item = u32> + '_ {
        self.node_ids().filter(|&v| !self.class_of(v).is_correct())
    }

    pub fn critical(&self) -> impl Iterator<Item = u32> + '_ {
        self.node_ids()
            .filter(|&v| self.status(v) == Some(VertexStatus::Critical))
    }

    pub fn regular(&self) -> impl Iterator<Item = u32> + '_ {
        self.node_ids()
            .filter(|&v| self.status(v) == Some(VertexStatus::Regular))
    }

    /// DOT rendering: nodes labeled `class:id`, critical nodes double-circled,
    /// regular nodes circled.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("graph combined {\n");
        for v in self.node_ids() {
            let shape = match self.status(v) {
                Some(VertexStatus::Critical) => ", shape=doublecircle",
                Some(VertexStatus::Regular) => ", shape=circle",
                None => "",
            };
            let _ = writeln!(out, "  n{v} [label=\"{}:{v}\"{shape}];", self.class_of(v));
        }
        for &(a, b) in &self.edges {
            let _ = writeln!(out, "  n{a} -- n{b};");
        }
        out.push_str("}\n");
        out
    }
}

pub fn build_combined_graph(m: &RefinedClassMap) -> Result<CombinedComponentGraph> {
    let partition = label_partition(
        m.height(),
        m.width(),
        m.cells(),
        Connectivity::Eight,
        Some(CellClass::TN),
    );
    let adj = partition_adjacency(&partition.labels, AdjacencyMode::EdgeShared);

    let mut edges = Vec::with_capacity(adj.len());
    for e in &adj.edges {
        let (ca, cb) = (partition.classes[e.a as usize], partition.classes[e.b as usize]);
        if ca.is_correct() == cb.is_correct() {
            return Err(Error::BipartitenessViolation {
                a: ca,
                b: cb,
                row: e.witness.0,
                col: e.witness.1,
            });
        }
        edges.push((e.a, e.b));
    }

    let n = partition.labels.count() as usize;
    let mut offsets = vec![0u32; n + 2];
    for &(a, b) in &edges {
        offsets[a as usize + 1] += 1;
        offsets[b as usize + 1] += 1;
    }
    for i in 1..offsets.len() {
        offsets[i] += offsets[i - 1];
    }
    let mut fill = offsets.clone();
    let mut neighbors = vec![0u32; edges.len() * 2];
    for &(a, b) in &edges {
        neighbors[fill[a as usize] as usize] = b;
        fill[a as usize] += 1;
        neighbors[fill[b as usize] as usize] = a;
        fill[b as usize] += 1;
    }

    let mut graph = CombinedComponentGraph {
        partition,
        edges,
        offsets,
        neighbors,
        status: Vec::new(),
    };
    let (regular, critical) = classify_vertices(&graph);
    let mut status = vec![None; n + 1];
    for v in regular {
        status[v as usize] = Some(VertexStatus::Regular);
    }
    for v in critical {
        status[v as usize] = Some(VertexStatus::Critical);
    }
    graph.status = status;
    Ok(graph)
}

/// Splits misclassified nodes into regular (exactly one TP neighbor and
/// exactly one TN neighbor) and critical (all others), both sorted by id.
pub fn classify_vertices(g: &CombinedComponentGraph) -> (Vec<u32>, Vec<u32>) {
    let mut regular = Vec::new();
    let mut critical = Vec::new();
    for v in g.misclassified() {
        let (mut tp, mut tn) = (0, 0);
        for &u in g.neighbors(v) {
            match g.class_of(u) {
                CellClass::TP => tp += 1,
                CellClass::TN => tn += 1,
                _ => {}
            }
        }
        if tp == 1 && tn == 1 {
            regular.push(v);
        } else {
            critical.push(v);
        }
    }
    (regular, critical)
}

/// Whether a region was predicted as foreground (FP) or background (FN).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Predicted {
    Foreground,
    Background,
}

/// A misclassified region and the original pixels it owns.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionRecord {
    pub id: u32,
    pub class: CellClass,
    pub predicted: Predicted,
    /// Original pixels `(row, col)` whose center cell lies in the region,
    /// in raster order.
    pub pixels: Vec<(usize, usize)>,
    pub cells: u64,
    pub critical: bool,
}

/// Assigns every original pixel with `pred != gt` to the FP/FN region that
/// contains its center refined cell. Returns one record per misclassified
/// region in id order; margin slivers keep an empty pixel list.
pub fn map_regions_to_pixels(
    g: &CombinedComponentGraph,
    m: &RefinedClassMap,
    pred: &BinaryGrid,
    gt: &BinaryGrid,
) -> Result<Vec<RegionRecord>> {
    pred.check_same_dims(gt)?;
    if pred.dims() != m.orig_dims() {
        return Err(Error::DimensionMismatch {
            expected: m.orig_dims(),
            found: pred.dims(),
        });
    }
    let n = g.node_count() as usize;
    let mut slot = vec![u32::MAX; n + 1];
    let mut records = Vec::new();
    for v in g.misclassified() {
        slot[v as usize] = records.len() as u32;
        let class = g.class_of(v);
        records.push(RegionRecord {
            id: v,
            class,
            predicted: if class.in_pred() {
                Predicted::Foreground
            } else {
                Predicted::Background
            },
            pixels: Vec::new(),
            cells: g.cells_of(v),
            critical: g.status(v) == Some(VertexStatus::Critical),
        });
    }

    let (h, w) = pred.dims();
    for i in 0..h {
        for j in 0..w {
            let (p, t) = (pred.get(i, j), gt.get(i, j));
            if p == t {
                continue;
            }
            let found = CellClass::from_bits(p, t);
            let (r, c) = m.center_of(i, j);
            let v = g.labels().get(r, c);
            let expected = g.class_of(v);
            if expected != found || slot[v as usize] == u32::MAX {
                return Err(Error::ClassMismatch {
                    row: i,
                    col: j,
                    expected,
                    found,
                });
            }
            records[slot[v as usize] as usize].pixels.push((i, j));
        }
    }
    Ok(records)
}

/// Everything derived from one (prediction, ground truth) pair.
#[derive(Clone, Debug)]
pub struct PairAnalysis {
    pub map: RefinedClassMap,
    pub graph: CombinedComponentGraph,
    pub regions: Vec<RegionRecord>,
}

impl PairAnalysis {
    pub fn critical_regions(&self) -> impl Iterator<Item = &RegionRecord> {
        self.regions.iter().filter(|r| r.critical)
    }

    pub fn regular_regions(&self) -> impl Iterator<Item = &RegionRecord> {
        self.regions.iter().filter(|r| !r.critical)
    }

    pub fn has_critical(&self) -> bool {
        self.regions.iter().any(|r| r.critical)
    }

    pub fn dump(&self) -> GraphDump {
        let mut pixels: Vec<&[(usize, usize)]> = vec![&[]; self.graph.node_count() as usize + 1];
        for r in &self.regions {
            pixels[r.id as usize] = &r.pixels;
        }
        GraphDump {
            nodes: self
                .graph
                .node_ids()
                .map(|v| NodeDump {
                    id: v,
                    class: self.graph.class_of(v),
                    cells: self.graph.cells_of(v),
                    status: self.graph.status(v),
                    pixels: pixels[v as usize].to_vec(),
                })
                .collect(),
            edges: self.graph.edges().to_vec(),
        }
    }
}

pub fn analyze_pair(pred: &BinaryGrid, gt: &BinaryGrid, params: GridParams) -> Result<PairAnalysis> {
    let map = build_combined_map(pred, gt, params)?;
    let graph = build_combined_graph(&map)?;
    let regions = map_regions_to_pixels(&graph, &map, pred, gt)?;
    Ok(PairAnalysis { map, graph, regions })
}

/// JSON shape of an exported combined graph.
#[derive(Clone, Debug, Serialize)]
pub struct GraphDump {
    pub nodes: Vec<NodeDump>,
    pub edges: Vec<(u32, u32)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct NodeDump {
    pub id: u32,
    pub class: CellClass,
    pub cells: u64,
    pub status: Option<VertexStatus>,
    pub pixels: Vec<(usize, usize)>,
}
