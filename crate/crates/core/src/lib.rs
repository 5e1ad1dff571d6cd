//! Topology of binary segmentations through component graphs.
//!
//! The crate computes, for a predicted segmentation and its ground truth,
//! the regions whose misclassification changes the topology of the
//! prediction, a loss that aggregates predicted-class scores over those
//! regions, and strict topological metrics (DIU, Betti errors, Dice). All
//! graph construction runs in `O(n α(n))` through union-find labeling.
//!
//! ```
//! use cgtopo::{analyze_pair, metrics, BinaryGrid, GridParams};
//!
//! let gt = BinaryGrid::from_ascii("....... ##...## ##...## .......").unwrap();
//! let pred = BinaryGrid::from_ascii("....... ##...## ####### .......").unwrap();
//! let a = analyze_pair(&pred, &gt, GridParams::default()).unwrap();
//! assert_eq!(a.critical_regions().count(), 1);
//! assert_eq!(metrics::betti_errors(&pred, &gt).unwrap(), (1, 0));
//! ```

pub mod components;
pub mod error;
pub mod imagegrid;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod topograph;
pub mod unionfind;

pub use error::{Error, Result};
pub use imagegrid::{
    binarize, build_combined_map, otsu_threshold, sample_threshold, BinaryGrid, CellClass, Channel, GridParams,
    ProbabilityMap, RefinedClassMap, ThresholdMode, ThresholdPolicy,
};
pub use loss::{compute_loss, multiclass_loss, Aggregation, LossConfig, LossReport};
pub use metrics::{betti_errors, dice, diu, DiuResult, MetricRow};
pub use topograph::{
    analyze_pair, betti_numbers, build_combined_graph, build_component_graph, classify_vertices, map_regions_to_pixels,
    CombinedComponentGraph, ComponentGraph, PairAnalysis, RegionRecord, VertexStatus,
};
