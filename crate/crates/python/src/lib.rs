//! Python bindings: critical regions, loss value, DIU and Betti numbers over
//! numpy arrays. Configuration is a plain dict mirroring the CLI flags:
//! `alpha`, `agg`, `sigma`, `otsu`, `seed`, `refine_k`, `rp`, `rg`,
//! `no_thicken`.

use std::collections::BTreeMap;

use cgtopo::loss::{analyze_scores, loss_from_analysis};
use cgtopo::metrics::diu_from_map;
use cgtopo::topograph::image_betti;
use cgtopo::{
    diu, multiclass_loss, Aggregation, BinaryGrid, CellClass, DiuResult, GridParams, LossConfig, ProbabilityMap,
    ThresholdPolicy,
};
use numpy::ndarray::Array2;
use numpy::{IntoPyArray, PyArray2, PyArrayDyn, PyArrayMethods, PyReadonlyArrayDyn, PyUntypedArrayMethods};
use pyo3::exceptions::{PyTypeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(err: cgtopo::Error) -> PyErr {
    PyValueError::new_err(err.to_string())
}

/// Parsed configuration dict.
#[derive(Clone, Copy, Debug)]
struct Config {
    loss: LossConfig,
    no_thicken: bool,
}

fn parse_config(config: Option<&Bound<'_, PyDict>>) -> PyResult<Config> {
    let mut alpha = 1.0;
    let mut agg = Aggregation::Mean;
    let (mut sigma, mut otsu, mut seed) = (0.0, false, 0u64);
    let mut grid = GridParams::default();
    let mut no_thicken = false;
    if let Some(d) = config {
        for (k, v) in d.iter() {
            let key: String = k.extract()?;
            match key.as_str() {
                "alpha" => alpha = v.extract()?,
                "agg" => agg = v.extract::<String>()?.parse().map_err(to_py)?,
                "sigma" => sigma = v.extract()?,
                "otsu" => otsu = v.extract()?,
                "seed" => seed = v.extract()?,
                "refine_k" => grid.refine_k = v.extract()?,
                "rp" => grid.r_pred = v.extract()?,
                "rg" => grid.r_gt = v.extract()?,
                "no_thicken" => no_thicken = v.extract()?,
                other => return Err(PyValueError::new_err(format!("unknown config key {other:?}"))),
            }
        }
    }
    if otsu && sigma != 0.0 {
        return Err(PyValueError::new_err("otsu and sigma are mutually exclusive"));
    }
    let loss = LossConfig {
        alpha,
        aggregation: agg,
        threshold: ThresholdPolicy::from_options(sigma, otsu, seed),
        grid,
    };
    loss.validate().map_err(to_py)?;
    Ok(Config { loss, no_thicken })
}

/// Scores as `(H, W)` or `(C, H, W)`, float32 or float64.
fn read_prob(obj: &Bound<'_, PyAny>) -> PyResult<ProbabilityMap> {
    let (shape, values): (Vec<usize>, Vec<f32>) = if let Ok(a) = obj.cast::<PyArrayDyn<f32>>() {
        let r = a.readonly();
        (r.shape().to_vec(), r.as_array().iter().copied().collect())
    } else if let Ok(a) = obj.cast::<PyArrayDyn<f64>>() {
        let r = a.readonly();
        (r.shape().to_vec(), r.as_array().iter().map(|&v| v as f32).collect())
    } else {
        return Err(PyTypeError::new_err("prob must be a float32 or float64 numpy array"));
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(PyValueError::new_err("prob contains non-finite values"));
    }
    match shape[..] {
        [h, w] => ProbabilityMap::new(1, h, w, values),
        [c, h, w] => ProbabilityMap::new(c, h, w, values),
        _ => {
            return Err(PyValueError::new_err(format!(
                "prob must be 2D or 3D, got shape {shape:?}"
            )))
        }
    }
    .map_err(to_py)
}

fn read_ints<T: numpy::Element + Copy + TryInto<i64>>(
    r: PyReadonlyArrayDyn<'_, T>,
) -> PyResult<(Vec<usize>, Vec<i64>)> {
    let shape = r.shape().to_vec();
    let values = r
        .as_array()
        .iter()
        .map(|&v| {
            v.try_into()
                .map_err(|_| PyValueError::new_err("label value out of range"))
        })
        .collect::<PyResult<Vec<i64>>>()?;
    Ok((shape, values))
}

/// 2D integer or boolean raster.
fn read_raster(obj: &Bound<'_, PyAny>, what: &str) -> PyResult<(usize, usize, Vec<i64>)> {
    macro_rules! try_dtype {
        ($($t:ty),*) => {
            $(if let Ok(a) = obj.cast::<PyArrayDyn<$t>>() {
                return finish(read_ints(a.readonly())?, what);
            })*
        };
    }
    fn finish((shape, v): (Vec<usize>, Vec<i64>), what: &str) -> PyResult<(usize, usize, Vec<i64>)> {
        match shape[..] {
            [h, w] => Ok((h, w, v)),
            _ => Err(PyValueError::new_err(format!("{what} must be 2D, got shape {shape:?}"))),
        }
    }
    try_dtype!(i64, i32, i16, i8, u8, u16, u32, u64);
    if let Ok(a) = obj.cast::<PyArrayDyn<bool>>() {
        let r = a.readonly();
        let shape = r.shape().to_vec();
        let v = r.as_array().iter().map(|&b| b as i64).collect();
        return finish((shape, v), what);
    }
    Err(PyTypeError::new_err(format!(
        "{what} must be an integer or boolean numpy array"
    )))
}

fn read_grid(obj: &Bound<'_, PyAny>, what: &str) -> PyResult<BinaryGrid> {
    let (h, w, v) = read_raster(obj, what)?;
    BinaryGrid::from_vec(h, w, v.into_iter().map(|x| (x != 0) as u8).collect()).map_err(to_py)
}

fn read_labels(obj: &Bound<'_, PyAny>, map: &ProbabilityMap) -> PyResult<Vec<u32>> {
    let (h, w, v) = read_raster(obj, "label")?;
    if (h, w) != map.dims() {
        return Err(PyValueError::new_err(format!(
            "label shape {:?} does not match prob shape {:?}",
            (h, w),
            map.dims()
        )));
    }
    if map.channels() == 1 {
        return Ok(v.into_iter().map(|x| (x != 0) as u32).collect());
    }
    v.into_iter()
        .map(|x| u32::try_from(x).map_err(|_| PyValueError::new_err(format!("negative label {x}"))))
        .collect()
}

fn diu_dict<'py>(py: Python<'py>, d: &DiuResult) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    out.set_item("total", d.total)?;
    out.set_item("ker_fg", d.ker_fg)?;
    out.set_item("coker_fg", d.coker_fg)?;
    out.set_item("ker_bg", d.ker_bg)?;
    out.set_item("coker_bg", d.coker_bg)?;
    Ok(out)
}

/// Critical regions of one binarized score map against its label.
#[pyclass(frozen, module = "cgtopo_py")]
pub struct RegionBundle {
    ids: Array2<i32>,
    #[pyo3(get)]
    threshold_used: f64,
    classes: BTreeMap<u32, CellClass>,
    scores: BTreeMap<u32, f64>,
    #[pyo3(get)]
    loss: f64,
    diu: DiuResult,
}

#[pymethods]
impl RegionBundle {
    /// `(H, W)` int32 raster: 0 outside critical regions, else the region id.
    #[getter]
    fn region_id_map<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<i32>> {
        self.ids.clone().into_pyarray(py)
    }

    /// Region id to `"FP"` or `"FN"`.
    #[getter]
    fn region_classes(&self) -> BTreeMap<u32, &'static str> {
        self.classes.iter().map(|(&k, c)| (k, c.as_str())).collect()
    }

    /// Region id to its aggregated predicted-class score.
    #[getter]
    fn region_scores(&self) -> BTreeMap<u32, f64> {
        self.scores.clone()
    }

    #[getter]
    fn diu<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        diu_dict(py, &self.diu)
    }

    fn __repr__(&self) -> String {
        format!(
            "RegionBundle(regions={}, threshold_used={}, loss={})",
            self.classes.len(),
            self.threshold_used,
            self.loss
        )
    }
}

/// Binarizes a single-channel `prob` and returns its critical regions.
#[pyfunction]
#[pyo3(signature = (prob, label, config=None))]
fn critical_regions(
    py: Python<'_>,
    prob: &Bound<'_, PyAny>,
    label: &Bound<'_, PyAny>,
    config: Option<&Bound<'_, PyDict>>,
) -> PyResult<RegionBundle> {
    let cfg = parse_config(config)?;
    let map = read_prob(prob)?;
    if map.channels() != 1 {
        return Err(PyValueError::new_err(
            "critical_regions takes a single-channel (H, W) prob",
        ));
    }
    let labels = read_labels(label, &map)?;
    let (h, w) = map.dims();
    let gt = BinaryGrid::from_vec(h, w, labels.iter().map(|&l| l as u8).collect()).map_err(to_py)?;
    py.detach(|| {
        let mut rng = cfg.loss.threshold.rng();
        let (analysis, threshold) = analyze_scores(map.channel(0), &gt, &cfg.loss, &mut rng)?;
        let report = loss_from_analysis(&analysis, map.channel(0), cfg.loss.alpha, cfg.loss.aggregation)?;
        let mut ids = Array2::<i32>::zeros((h, w));
        let mut classes = BTreeMap::new();
        let mut scores = BTreeMap::new();
        for r in &report.per_region {
            for &(i, j) in &r.pixels {
                ids[[i, j]] = r.id as i32;
            }
            classes.insert(r.id, r.class);
            scores.insert(r.id, r.score);
        }
        Ok(RegionBundle {
            ids,
            threshold_used: threshold,
            classes,
            scores,
            loss: report.total,
            diu: diu_from_map(&analysis.map),
        })
    })
    .map_err(to_py)
}

/// Component-graph loss of `prob` (`(H, W)` or `(C, H, W)`) against `label`.
#[pyfunction]
#[pyo3(signature = (prob, label, config=None))]
fn loss_value(
    py: Python<'_>,
    prob: &Bound<'_, PyAny>,
    label: &Bound<'_, PyAny>,
    config: Option<&Bound<'_, PyDict>>,
) -> PyResult<f64> {
    let cfg = parse_config(config)?;
    let map = read_prob(prob)?;
    let labels = read_labels(label, &map)?;
    py.detach(|| {
        let mut rng = cfg.loss.threshold.rng();
        multiclass_loss(&map, &labels, &cfg.loss, &mut rng).map(|r| r.total)
    })
    .map_err(to_py)
}

/// DIU total between binary `pred` and `label`.
#[pyfunction]
#[pyo3(signature = (pred, label, config=None))]
fn diu_value(
    py: Python<'_>,
    pred: &Bound<'_, PyAny>,
    label: &Bound<'_, PyAny>,
    config: Option<&Bound<'_, PyDict>>,
) -> PyResult<u32> {
    let cfg = parse_config(config)?;
    let p = read_grid(pred, "pred")?;
    let g = read_grid(label, "label")?;
    let params = if cfg.no_thicken {
        GridParams::raw()
    } else {
        cfg.loss.grid
    };
    py.detach(|| diu(&p, &g, params).map(|d| d.total)).map_err(to_py)
}

/// `(b0, b1)` of a binary image.
#[pyfunction]
fn betti_numbers(py: Python<'_>, image: &Bound<'_, PyAny>) -> PyResult<(u32, u32)> {
    let g = read_grid(image, "image")?;
    py.detach(|| image_betti(&g)).map_err(to_py)
}

#[pymodule]
fn cgtopo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<RegionBundle>()?;
    m.add_function(wrap_pyfunction!(critical_regions, m)?)?;
    m.add_function(wrap_pyfunction!(loss_value, m)?)?;
    m.add_function(wrap_pyfunction!(diu_value, m)?)?;
    m.add_function(wrap_pyfunction!(betti_numbers, m)?)?;
    Ok(())
}
