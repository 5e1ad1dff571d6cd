use std::collections::HashSet;

use cgtopo::components::{label_components, Connectivity};
use cgtopo::imagegrid::build_combined_map;
use cgtopo::topograph::image_betti;
use cgtopo::unionfind::DisjointSets;
use cgtopo::{analyze_pair, build_component_graph, diu, BinaryGrid, CellClass, GridParams};
use cgtopo_testkit::{
    brute_refined, euler_betti, flood_fill, oracle_diu, oracle_regions, random_pair, refined_flip_betti, rng,
    OracleRegion,
};
use proptest::prelude::*;

fn grid_strategy(max: usize) -> impl Strategy<Value = BinaryGrid> {
    (1..=max, 1..=max).prop_flat_map(|(h, w)| {
        proptest::collection::vec(any::<bool>(), h * w)
            .prop_map(move |bits| BinaryGrid::from_fn(h, w, |i, j| bits[i * w + j]))
    })
}

fn pair_strategy(max: usize) -> impl Strategy<Value = (BinaryGrid, BinaryGrid)> {
    (1..=max, 1..=max).prop_flat_map(|(h, w)| {
        proptest::collection::vec(any::<(bool, bool)>(), h * w).prop_map(move |bits| {
            (
                BinaryGrid::from_fn(h, w, |i, j| bits[i * w + j].0),
                BinaryGrid::from_fn(h, w, |i, j| bits[i * w + j].1),
            )
        })
    })
}

fn members(g: &BinaryGrid, value: bool) -> Vec<bool> {
    g.as_slice().iter().map(|&b| (b != 0) == value).collect()
}

/// Same partition up to relabeling.
fn same_partition(a: &[u32], b: &[usize]) -> bool {
    let mut fwd = std::collections::HashMap::new();
    let mut back = std::collections::HashMap::new();
    a.iter()
        .zip(b)
        .all(|(&x, &y)| *fwd.entry(x).or_insert(y) == y && *back.entry(y).or_insert(x) == x)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn labeling_matches_flood_fill(g in grid_strategy(14)) {
        let (h, w) = g.dims();
        for (conn, eight) in [(Connectivity::Four, false), (Connectivity::Eight, true)] {
            let ours = label_components(&g, conn, false);
            let (ids, n) = flood_fill(h, w, &members(&g, true), eight, false);
            prop_assert_eq!(ours.count() as usize, n);
            prop_assert!(same_partition(ours.labels(), &ids));
        }
        let ours = label_components(&g.complement(), Connectivity::Four, true);
        let (ids, n) = flood_fill(h, w, &members(&g, false), false, true);
        prop_assert_eq!(ours.count() as usize, n);
        prop_assert!(same_partition(ours.labels(), &ids));
    }

    #[test]
    fn betti_matches_euler_characteristic(g in grid_strategy(12)) {
        let (b0, b1) = image_betti(&g).unwrap();
        prop_assert_eq!((b0 as i64, b1 as i64), euler_betti(&g));
    }

    #[test]
    fn component_graph_is_a_tree(g in grid_strategy(12)) {
        let cg = build_component_graph(&g).unwrap();
        let nodes = (cg.fg_count() + cg.bg_count()) as usize;
        prop_assert_eq!(cg.edges.len() + 1, nodes);
    }

    #[test]
    fn refined_map_matches_window_scan((p, g) in pair_strategy(6), k in 1usize..8, rp in 0usize..3, extra in 0usize..3) {
        let rg = rp + extra;
        let params = GridParams { refine_k: k, r_pred: rp, r_gt: rg };
        prop_assume!(params.validate().is_ok());
        let m = build_combined_map(&p, &g, params).unwrap();
        let (h, w, cls) = brute_refined(&p, &g, params);
        prop_assert_eq!((m.height(), m.width()), (h, w));
        prop_assert_eq!(m.cells(), &cls[..]);
    }

    #[test]
    fn diu_matches_oracle((p, g) in pair_strategy(9)) {
        let params = GridParams::default();
        let d = diu(&p, &g, params).unwrap();
        prop_assert_eq!([d.total, d.ker_fg, d.coker_fg, d.ker_bg, d.coker_bg], oracle_diu(&p, &g, params));
    }

    #[test]
    fn regions_match_oracle((p, g) in pair_strategy(9)) {
        let params = GridParams::default();
        let a = analyze_pair(&p, &g, params).unwrap();
        let mut ours: Vec<OracleRegion> = a
            .regions
            .iter()
            .map(|r| OracleRegion { class: r.class as u8, critical: r.critical, pixels: r.pixels.clone() })
            .collect();
        ours.sort();
        prop_assert_eq!(ours, oracle_regions(&p, &g, params));
    }
}

#[test]
fn identical_pairs_have_no_errors() {
    let mut r = rng(11);
    for _ in 0..200 {
        let (_, g) = random_pair(&mut r, 10, 10);
        let a = analyze_pair(&g, &g, GridParams::default()).unwrap();
        assert!(!a.has_critical());
        assert_eq!(a.map.count(CellClass::FP), 0);
        assert!(a.regions.iter().all(|r| r.pixels.is_empty()));
        assert_eq!(diu(&g, &g, GridParams::default()).unwrap().total, 0);
    }
}

#[test]
fn center_cells_keep_pixel_classes() {
    let mut r = rng(12);
    for _ in 0..300 {
        let (p, g) = random_pair(&mut r, 9, 13);
        let m = build_combined_map(&p, &g, GridParams::default()).unwrap();
        for i in 0..9 {
            for j in 0..13 {
                let (y, x) = m.center_of(i, j);
                assert_eq!(m.class_at(y, x), CellClass::from_bits(p.get(i, j), g.get(i, j)));
            }
        }
    }
}

/// Contracting every edge of the combined graph whose endpoints agree on
/// one image yields that image's component graph.
#[test]
fn quotient_recovers_single_image_graphs() {
    let mut r = rng(13);
    for _ in 0..300 {
        let (p, g) = random_pair(&mut r, 11, 11);
        let a = analyze_pair(&p, &g, GridParams::default()).unwrap();
        for (image, side) in [
            (&p, CellClass::in_pred as fn(CellClass) -> bool),
            (&g, CellClass::in_gt),
        ] {
            let n = a.graph.node_count() as usize;
            let mut ds = DisjointSets::new(n + 1);
            for &(u, v) in a.graph.edges() {
                if side(a.graph.class_of(u)) == side(a.graph.class_of(v)) {
                    ds.union(u, v);
                }
            }
            let mut fg = HashSet::new();
            let mut bg = HashSet::new();
            for v in a.graph.node_ids() {
                let root = ds.find(v);
                if side(a.graph.class_of(v)) {
                    fg.insert(root)
                } else {
                    bg.insert(root)
                };
            }
            let mut qedges = HashSet::new();
            for &(u, v) in a.graph.edges() {
                let (x, y) = (ds.find(u), ds.find(v));
                if x != y {
                    qedges.insert((x.min(y), x.max(y)));
                }
            }
            let cg = build_component_graph(image).unwrap();
            assert_eq!(fg.len() as u32, cg.fg_count());
            assert_eq!(bg.len() as u32, cg.bg_count());
            assert_eq!(qedges.len(), cg.edges.len());
        }
    }
}

/// Flipping the refined cells of one regular region leaves the Betti
/// numbers of the refined prediction unchanged, and those equal the Betti
/// numbers of the original prediction.
#[test]
fn flipping_a_regular_region_keeps_betti_numbers() {
    let mut r = rng(14);
    let mut checked = 0;
    for _ in 0..600 {
        let (p, g) = random_pair(&mut r, 12, 12);
        let a = analyze_pair(&p, &g, GridParams::default()).unwrap();
        let (h, w) = (a.map.height(), a.map.width());
        for region in a.regular_regions() {
            let mask: Vec<bool> = a.graph.labels().labels().iter().map(|&l| l == region.id).collect();
            let (before, after) = refined_flip_betti(h, w, a.map.cells(), &mask);
            assert_eq!(before, euler_betti(&p));
            assert_eq!(before, after, "pred\n{p:?}\ngt\n{g:?}\nregion {region:?}");
            checked += 1;
        }
    }
    assert!(checked > 1000);
}

/// Whole-pixel flips are coarser than region flips: a pixel can hold both
/// a regular FP sliver (owning its center) and TP cells from the ground
/// truth's thickening, so removing the pixel deletes the component.
#[test]
fn whole_pixel_flip_can_change_topology() {
    let p = BinaryGrid::from_ascii(".. .#").unwrap();
    let g = BinaryGrid::from_ascii("## ..").unwrap();
    let a = analyze_pair(&p, &g, GridParams::default()).unwrap();
    let fp: Vec<_> = a.regions.iter().filter(|r| r.class == CellClass::FP).collect();
    assert_eq!(fp.len(), 1);
    assert!(!fp[0].critical);
    assert_eq!(fp[0].pixels, vec![(1, 1)]);
    assert_eq!(image_betti(&p).unwrap(), (1, 0));
    assert_eq!(image_betti(&BinaryGrid::zeros(2, 2)).unwrap(), (0, 0));
}

#[test]
fn no_critical_regions_implies_equal_betti_numbers() {
    let mut r = rng(15);
    let mut sound = 0;
    for _ in 0..1500 {
        let (p, g) = random_pair(&mut r, 10, 10);
        let a = analyze_pair(&p, &g, GridParams::default()).unwrap();
        if !a.has_critical() {
            assert_eq!(image_betti(&p).unwrap(), image_betti(&g).unwrap());
            assert_eq!(diu(&p, &g, GridParams::default()).unwrap().total, 0);
            sound += 1;
        }
    }
    assert!(sound > 100, "only {sound} pairs without critical regions");
}
