use cgtopo::metrics::{betti_errors, dice, diu, MetricRow, METRIC_CSV_HEADER};
use cgtopo::{BinaryGrid, GridParams};
use cgtopo_testkit::{oracle_diu, random_pair, rng};

#[test]
fn diu_is_symmetric_with_equal_radii() {
    let params = GridParams::symmetric(5, 2).unwrap();
    let mut r = rng(41);
    for _ in 0..300 {
        let (p, g) = random_pair(&mut r, 10, 10);
        let a = diu(&p, &g, params).unwrap();
        let b = diu(&g, &p, params).unwrap();
        assert_eq!(a, b);
        let o = oracle_diu(&p, &g, params);
        assert_eq!(a.total, o[0]);
    }
}

#[test]
fn diu_respects_argument_order() {
    // Prediction one pixel left of the ground truth pixel: with rP < rG the
    // prediction's thickening falls inside the ground truth's.
    let p = BinaryGrid::from_ascii("..... .#... .....").unwrap();
    let g = BinaryGrid::from_ascii("..... ..#.. .....").unwrap();
    let params = GridParams::default();
    assert_eq!(diu(&p, &g, params).unwrap().total, oracle_diu(&p, &g, params)[0]);
    assert_eq!(diu(&g, &p, params).unwrap().total, oracle_diu(&g, &p, params)[0]);
}

#[test]
fn diu_bounds_betti_disagreement() {
    let mut r = rng(42);
    let mut seen = 0;
    for _ in 0..500 {
        let (p, g) = random_pair(&mut r, 10, 10);
        let (b0, b1) = betti_errors(&p, &g).unwrap();
        let d = diu(&p, &g, GridParams::default()).unwrap();
        assert_eq!(d.total, d.ker_fg + d.coker_fg + d.ker_bg + d.coker_bg);
        if b0 != 0 || b1 != 0 {
            assert!(d.total >= 1);
            seen += 1;
        }
        assert_eq!(diu(&p, &p, GridParams::default()).unwrap().total, 0);
    }
    assert!(seen > 100);
}

#[test]
fn metric_examples() {
    let blob = BinaryGrid::from_ascii("..... .##.. .##.. .....").unwrap();
    let d = diu(&BinaryGrid::zeros(4, 5), &blob, GridParams::default()).unwrap();
    assert_eq!((d.total, d.coker_fg), (1, 1));

    let two = BinaryGrid::from_ascii("#.# #.#").unwrap();
    let one = BinaryGrid::from_ascii("### ###").unwrap();
    assert_eq!(betti_errors(&one, &two).unwrap(), (1, 0));
    let ring = BinaryGrid::from_ascii("### #.# ###").unwrap();
    assert_eq!(betti_errors(&BinaryGrid::ones(3, 3), &ring).unwrap(), (0, 1));

    let a = BinaryGrid::from_fn(4, 5, |i, _| i < 2);
    let b = BinaryGrid::from_fn(4, 5, |i, _| i == 1 || i == 2);
    assert!((dice(&a, &b).unwrap() - 0.5).abs() < 1e-12);
    assert_eq!(dice(&a, &a).unwrap(), 1.0);
    assert_eq!(dice(&a, &a.complement()).unwrap(), 0.0);
}

#[test]
fn csv_row_layout() {
    assert_eq!(
        METRIC_CSV_HEADER.join(","),
        "id,diu,ker_fg,coker_fg,ker_bg,coker_bg,b0_err,b1_err,dice"
    );
    let g = BinaryGrid::from_ascii("#. ..").unwrap();
    let row = MetricRow::compute("x", &BinaryGrid::zeros(2, 2), &g, GridParams::default()).unwrap();
    let rec = row.csv_record();
    assert_eq!(rec[0], "x");
    assert_eq!(rec[1], "1");
    assert_eq!(rec[3], "1");
    assert_eq!(rec[6], "1");
}
