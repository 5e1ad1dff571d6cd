//! Subcommand implementations. Inputs are fully read and validated before
//! any output is produced.

use std::collections::BTreeSet;
use std::path::Path;

use cgtopo::io::{encode_binary_pgm, encode_pgm, read_binary_grid, read_gray, read_tgf1};
use cgtopo::loss::loss_from_analysis;
use cgtopo::metrics::{betti_errors, dice, diu, MetricRow, METRIC_CSV_HEADER};
use cgtopo::topograph::image_betti;
use cgtopo::{analyze_pair, multiclass_loss, BinaryGrid, Error, PairAnalysis, ProbabilityMap};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::bench::{bench_csv, run_bench};
use crate::output::{write_atomic, Outputs};
use crate::{
    loss_config, AnalyzeArgs, BenchArgs, CliError, EvaluateArgs, GraphArgs, GraphFormat, LossArgs, EXIT_UNMATCHED,
};

fn load_grid(path: &Path) -> Result<BinaryGrid, CliError> {
    read_binary_grid(path).map_err(|e| CliError::input(path, e))
}

fn load_pair(pred: &Path, label: &Path) -> Result<(BinaryGrid, BinaryGrid), CliError> {
    let p = load_grid(pred)?;
    let g = load_grid(label)?;
    if p.dims() != g.dims() {
        return Err(CliError::input(
            pred,
            Error::DimensionMismatch {
                expected: g.dims(),
                found: p.dims(),
            },
        ));
    }
    Ok((p, g))
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::other(e.to_string()))
}

/// Refined class map as gray levels (TN 0, FN 85, FP 170, TP 255).
fn classmap_pgm(a: &PairAnalysis) -> Result<Vec<u8>, CliError> {
    let gray: Vec<u8> = a
        .map
        .cells()
        .iter()
        .map(|&c| cgtopo::CellClass::from_u8(c).gray())
        .collect();
    Ok(encode_pgm(a.map.height(), a.map.width(), &gray)?)
}

/// `report.json` contents and the loss support mask.
fn analysis_report(
    args: &AnalyzeArgs,
    pred: &BinaryGrid,
    gt: &BinaryGrid,
    analysis: &PairAnalysis,
    scores: Option<&ProbabilityMap>,
) -> Result<(Value, BinaryGrid), CliError> {
    let score = &args.score;
    let fallback;
    let channel = match scores {
        Some(m) => m.channel(0),
        None => {
            fallback = ProbabilityMap::from_binary(pred);
            fallback.channel(0)
        }
    };
    let loss = loss_from_analysis(analysis, channel, score.alpha, score.agg)?;
    let d = diu(pred, gt, args.grid.diu_params(args.no_thicken)?)?;
    let (b0_err, b1_err) = betti_errors(pred, gt)?;
    let params = analysis.map.params();
    let report = json!({
        "pred": args.pred.display().to_string(),
        "label": args.label.display().to_string(),
        "height": pred.height(),
        "width": pred.width(),
        "grid": {"refine_k": params.refine_k, "r_pred": params.r_pred, "r_gt": params.r_gt},
        "betti": {
            "pred": image_betti(pred)?,
            "label": image_betti(gt)?,
            "b0_err": b0_err,
            "b1_err": b1_err,
        },
        "diu": d,
        "diu_thickened": !args.no_thicken,
        "dice": dice(pred, gt)?,
        "regions": {
            "critical": analysis.critical_regions().count(),
            "regular": analysis.regular_regions().count(),
            "critical_pixels": loss.support_mask().count_ones(),
        },
        "loss": {
            "alpha": score.alpha,
            "aggregation": score.agg,
            "total": loss.total,
            "per_region": loss.per_region,
        },
    });
    Ok((report, loss.support_mask))
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<(), CliError> {
    let (pred, gt) = load_pair(&args.pred, &args.label)?;
    let scores = match &args.prob {
        Some(path) => {
            let m = read_tgf1(path).map_err(|e| CliError::input(path, e))?;
            if m.channels() != 1 {
                return Err(CliError::input(
                    path,
                    Error::ChannelMismatch(format!("expected 1 channel, found {}", m.channels())),
                ));
            }
            if m.dims() != pred.dims() {
                return Err(CliError::input(
                    path,
                    Error::DimensionMismatch {
                        expected: pred.dims(),
                        found: m.dims(),
                    },
                ));
            }
            Some(m)
        }
        None => None,
    };
    let grid = args.grid.params()?;
    let analysis = analyze_pair(&pred, &gt, grid)?;
    let (report, support) = analysis_report(args, &pred, &gt, &analysis, scores.as_ref())?;

    let mut out = Outputs::new();
    out.add_json("report.json", &report)?;
    out.add("graph.dot", analysis.graph.to_dot().into_bytes());
    out.add_json("graph.json", &analysis.dump())?;
    out.add("support.pgm", encode_binary_pgm(&support)?);
    out.add("classmap.pgm", classmap_pgm(&analysis)?);
    for path in out.commit(&args.out)? {
        println!("{}", path.display());
    }
    Ok(())
}

pub fn cmd_graph(args: &GraphArgs) -> Result<(), CliError> {
    let (pred, gt) = load_pair(&args.pred, &args.label)?;
    let analysis = analyze_pair(&pred, &gt, args.grid.params()?)?;
    let text = match args.format {
        GraphFormat::Dot => analysis.graph.to_dot(),
        GraphFormat::Json => {
            let mut s = serde_json::to_string_pretty(&analysis.dump()).map_err(|e| CliError::other(e.to_string()))?;
            s.push('\n');
            s
        }
    };
    match &args.out {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn file_names(dir: &Path) -> Result<BTreeSet<String>, CliError> {
    let entries =
        std::fs::read_dir(dir).map_err(|e| CliError::new(crate::EXIT_PARSE, format!("{}: {e}", dir.display())))?;
    let mut names = BTreeSet::new();
    for entry in entries {
        let entry = entry.map_err(|e| CliError::new(crate::EXIT_PARSE, format!("{}: {e}", dir.display())))?;
        if entry.path().is_file() {
            names.insert(entry.file_name().to_string_lossy().into_owned());
        }
    }
    Ok(names)
}

const AGGREGATE_FIELDS: [&str; 8] = [
    "diu", "ker_fg", "coker_fg", "ker_bg", "coker_bg", "b0_err", "b1_err", "dice",
];

fn row_values(r: &MetricRow) -> [f64; 8] {
    [
        r.diu.total as f64,
        r.diu.ker_fg as f64,
        r.diu.coker_fg as f64,
        r.diu.ker_bg as f64,
        r.diu.coker_bg as f64,
        r.b0_err as f64,
        r.b1_err as f64,
        r.dice,
    ]
}

/// Mean and population standard deviation of every metric column.
pub fn aggregate(rows: &[MetricRow]) -> Value {
    let n = rows.len();
    let mut mean = Map::new();
    let mut std = Map::new();
    for (k, name) in AGGREGATE_FIELDS.iter().enumerate() {
        let xs: Vec<f64> = rows.iter().map(|r| row_values(r)[k]).collect();
        if n == 0 {
            mean.insert(name.to_string(), Value::Null);
            std.insert(name.to_string(), Value::Null);
            continue;
        }
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
        mean.insert(name.to_string(), json!(m));
        std.insert(name.to_string(), json!(v.sqrt()));
    }
    json!({"pairs": n, "mean": mean, "std": std})
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let preds = file_names(&args.pred_dir)?;
    let labels = file_names(&args.label_dir)?;
    let unmatched: Vec<String> = preds
        .symmetric_difference(&labels)
        .map(|n| {
            if preds.contains(n) {
                args.pred_dir.join(n).display().to_string()
            } else {
                args.label_dir.join(n).display().to_string()
            }
        })
        .collect();
    if !unmatched.is_empty() {
        return Err(CliError::new(
            EXIT_UNMATCHED,
            format!("files without a partner: {}", unmatched.join(", ")),
        ));
    }
    let params = args.grid.diu_params(args.no_thicken)?;
    let names: Vec<&String> = preds.iter().collect();
    let pool = thread_pool(args.jobs)?;
    let rows: Vec<MetricRow> = pool.install(|| {
        names
            .par_iter()
            .map(|name| {
                let (p, g) = load_pair(&args.pred_dir.join(name), &args.label_dir.join(name))?;
                Ok(MetricRow::compute(name.as_str(), &p, &g, params)?)
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(METRIC_CSV_HEADER)
        .map_err(|e| CliError::other(e.to_string()))?;
    for r in &rows {
        w.write_record(r.csv_record())
            .map_err(|e| CliError::other(e.to_string()))?;
    }
    let csv_bytes = w.into_inner().map_err(|e| CliError::other(e.to_string()))?;

    let mut out = Outputs::new();
    out.add("metrics.csv", csv_bytes);
    out.add_json("aggregate.json", &aggregate(&rows))?;
    for path in out.commit(&args.out)? {
        println!("{}", path.display());
    }
    Ok(())
}

pub fn cmd_loss(args: &LossArgs) -> Result<(), CliError> {
    let map = read_tgf1(&args.prob).map_err(|e| CliError::input(&args.prob, e))?;
    let label = read_gray(&args.label).map_err(|e| CliError::input(&args.label, e))?;
    if (label.height, label.width) != map.dims() {
        return Err(CliError::input(
            &args.label,
            Error::DimensionMismatch {
                expected: map.dims(),
                found: (label.height, label.width),
            },
        ));
    }
    // One channel: any nonzero gray level is foreground. Several: gray
    // levels are class indices.
    let labels: Vec<u32> = if map.channels() == 1 {
        label.pixels.iter().map(|&v| u32::from(v != 0)).collect()
    } else {
        label.pixels.iter().map(|&v| u32::from(v)).collect()
    };
    let cfg = loss_config(&args.grid, &args.score, Some(&args.threshold))?;
    let mut rng = cfg.threshold.rng();
    let pool = thread_pool(args.jobs)?;
    let report = pool.install(|| multiclass_loss(&map, &labels, &cfg, &mut rng))?;

    let mut out = Outputs::new();
    if map.channels() == 1 {
        out.add_json("loss.json", &report.per_class[0])?;
    } else {
        out.add_json("loss.json", &report)?;
    }
    out.add("support.pgm", encode_binary_pgm(&report.support_mask())?);
    for path in out.commit(&args.out)? {
        println!("{}", path.display());
    }
    Ok(())
}

pub fn cmd_bench(args: &BenchArgs) -> Result<(), CliError> {
    if args.sizes.is_empty() || args.sizes.contains(&0) {
        return Err(CliError::new(crate::EXIT_PARSE, "sizes must be positive"));
    }
    if args.sizes.windows(2).any(|w| w[0] > w[1]) {
        return Err(CliError::new(crate::EXIT_PARSE, "sizes must be ascending"));
    }
    let cfg = cgtopo::LossConfig {
        grid: args.grid.params()?,
        ..Default::default()
    };
    let rows = run_bench(&args.sizes, args.repeats, args.seed, &cfg)?;
    for r in &rows {
        println!("{:>6} x {:<6} median {:>10.3} ms", r.size, r.size, r.median_ms);
    }
    let mut out = Outputs::new();
    out.add("bench.csv", bench_csv(&rows));
    out.commit(&args.out)?;
    Ok(())
}
