//! Python bindings: configs, the full pipeline, and the standalone
//! geometry / metric / attack primitives.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use pullback_mia::attacks::{lp_norm, DimensionMask};
use pullback_mia::eval::{asr, auc, roc, spectral_energy as core_spectral_energy, tpr_at_fpr, LabeledScores, Orientation};
use pullback_mia::geometry::{
    dense_topk_spectrum, influence_exact, influence_hutchinson, randomized_topk_spectrum, HutchinsonConfig,
    RandSvdConfig,
};
use pullback_mia::harness::{self, ExperimentConfig, ResultStore};
use pullback_mia::models::LinearDecoder;
use pullback_mia::numerics::{Image, Matrix, RngStream};

create_exception!(pullback_mia_py, PullbackError, PyException);

fn py_err(e: pullback_mia::Error) -> PyErr {
    PullbackError::new_err(e.to_string())
}

fn linear(matrix: Vec<Vec<f64>>) -> PyResult<LinearDecoder> {
    let rows = matrix.len();
    let cols = matrix.first().map_or(0, Vec::len);
    if matrix.iter().any(|r| r.len() != cols) {
        return Err(PullbackError::new_err("matrix rows have unequal lengths"));
    }
    let m = Matrix::from_row_major(rows, cols, matrix.concat()).map_err(py_err)?;
    Ok(LinearDecoder::new(m))
}

#[pyclass(name = "Config", skip_from_py_object)]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    fn new() -> Self {
        Self {
            inner: ExperimentConfig::default(),
        }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ExperimentConfig::from_json(text).map_err(py_err)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn hash(&self) -> String {
        self.inner.hash()
    }

    fn stage_seed(&self, stage: &str) -> u64 {
        self.inner.stage_seed(stage)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    #[getter]
    fn output_dir(&self) -> String {
        self.inner.output_dir.display().to_string()
    }

    #[setter]
    fn set_output_dir(&mut self, dir: PathBuf) {
        self.inner.output_dir = dir;
    }

    fn __repr__(&self) -> String {
        format!("Config(seed={}, hash={})", self.inner.seed, &self.inner.hash()[..12])
    }
}

/// Runs every stage and returns the run directory.
#[pyfunction]
fn run_pipeline(py: Python<'_>, config: &PyConfig) -> PyResult<String> {
    let cfg = config.inner.clone();
    let store = py.detach(|| harness::run_pipeline(&cfg)).map_err(py_err)?;
    Ok(store.root().display().to_string())
}

/// Renders tables for a run directory; returns rows and the Δ summaries.
#[pyfunction]
fn report<'py>(py: Python<'py>, run_dir: PathBuf) -> PyResult<Bound<'py, PyDict>> {
    let (store, _) = ResultStore::open(&run_dir).map_err(py_err)?;
    let rendered = harness::render_report(&store).map_err(py_err)?;
    let rows = rendered
        .rows
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("method", &r.method)?;
            d.set_item("variant", &r.variant)?;
            d.set_item("t", r.t)?;
            d.set_item("auc", r.auc)?;
            d.set_item("asr", r.asr)?;
            d.set_item("tpr_at_1_fpr", r.tpr_at_1_fpr)?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    let out = PyDict::new(py);
    out.set_item("rows", rows)?;
    out.set_item("mean_delta", rendered.mean_delta.map(|d| d.to_vec()))?;
    out.set_item("min_delta", rendered.min_delta.map(|d| d.to_vec()))?;
    Ok(out)
}

/// Top-K singular values of a linear decoder via the randomized range finder.
#[pyfunction]
#[pyo3(signature = (matrix, rank=20, oversampling=30, power_iters=2, seed=0))]
fn randomized_spectrum(
    matrix: Vec<Vec<f64>>,
    rank: usize,
    oversampling: usize,
    power_iters: usize,
    seed: u64,
) -> PyResult<(Vec<f64>, f64)> {
    let dec = linear(matrix)?;
    let cfg = RandSvdConfig {
        rank,
        oversampling,
        power_iters,
        ..RandSvdConfig::default()
    };
    let z = vec![0.0; dec.matrix.cols()];
    let est = randomized_topk_spectrum(&dec, &z, &cfg, RngStream::new(seed, 0)).map_err(py_err)?;
    Ok((est.singular_values, est.log_volume))
}

#[pyfunction]
#[pyo3(signature = (matrix, rank=20))]
fn dense_spectrum(matrix: Vec<Vec<f64>>, rank: usize) -> PyResult<(Vec<f64>, f64)> {
    let dec = linear(matrix)?;
    let z = vec![0.0; dec.matrix.cols()];
    let est = dense_topk_spectrum(&dec, &z, rank).map_err(py_err)?;
    Ok((est.singular_values, est.log_volume))
}

/// Half-log per-dimension influence; `probes=None` gives the exact diagonal.
#[pyfunction]
#[pyo3(signature = (matrix, probes=Some(8), seed=0, eps_stab=1e-12))]
fn influence(matrix: Vec<Vec<f64>>, probes: Option<usize>, seed: u64, eps_stab: f64) -> PyResult<Vec<f64>> {
    let dec = linear(matrix)?;
    let z = vec![0.0; dec.matrix.cols()];
    let map = match probes {
        Some(probes) => influence_hutchinson(&dec, &z, &HutchinsonConfig { probes, eps_stab, seed }, 0),
        None => influence_exact(&dec, &z, eps_stab, 0),
    }
    .map_err(py_err)?;
    Ok(map.values)
}

/// AUC, ASR and TPR@1%FPR in percent.
#[pyfunction]
#[pyo3(signature = (members, non_members, member_high=false))]
fn roc_metrics(members: Vec<f64>, non_members: Vec<f64>, member_high: bool) -> PyResult<(f64, f64, f64)> {
    let orientation = if member_high {
        Orientation::MemberHigh
    } else {
        Orientation::MemberLow
    };
    let scores = LabeledScores::from_groups(&members, &non_members, orientation).map_err(py_err)?;
    let curve = roc(&scores);
    Ok((auc(&curve), asr(&curve), tpr_at_fpr(&curve, 0.01)))
}

/// ℓp norm over the kept coordinates (`mask=None` keeps all).
#[pyfunction]
#[pyo3(signature = (values, p, mask=None))]
fn masked_norm(values: Vec<f64>, p: f64, mask: Option<Vec<bool>>) -> PyResult<f64> {
    match mask {
        None => Ok(lp_norm(&values, p)),
        Some(bits) => {
            if bits.len() != values.len() {
                return Err(PullbackError::new_err("mask and vector lengths differ"));
            }
            let mask = DimensionMask::new(bits).map_err(py_err)?;
            let kept: Vec<f64> = values.iter().zip(mask.bits()).filter(|(_, &b)| b).map(|(&v, _)| v).collect();
            Ok(lp_norm(&kept, p))
        }
    }
}

/// (low-frequency, high-frequency) spectral energy of a row-major image.
#[pyfunction]
fn spectral_energy(pixels: Vec<f64>, height: usize, width: usize, radius: f64) -> PyResult<(f64, f64)> {
    let img = Image::new(height, width, pixels).map_err(py_err)?;
    core_spectral_energy(&img, radius).map_err(py_err)
}

/// Synthetic member / held-out split as lists of (id, pixels) pairs.
#[pyfunction]
#[pyo3(signature = (samples, side=16, seed=0, generator="two-scale-blobs"))]
fn generate_synthetic(
    samples: usize,
    side: usize,
    seed: u64,
    generator: &str,
) -> PyResult<(Vec<(u64, Vec<f64>)>, Vec<(u64, Vec<f64>)>)> {
    let split = harness::generate_synthetic(generator, samples, side, seed).map_err(py_err)?;
    let pairs = |v: &[harness::Sample]| v.iter().map(|s| (s.id, s.pixels.clone())).collect::<Vec<_>>();
    Ok((pairs(&split.members), pairs(&split.held_out)))
}

/// Parses an IDX3 uint8 file into (rows, cols, images scaled to [-1, 1]).
#[pyfunction]
fn parse_idx(data: &[u8]) -> PyResult<(usize, usize, Vec<Vec<f64>>)> {
    let parsed = harness::parse_idx(data).map_err(py_err)?;
    Ok((parsed.rows, parsed.cols, parsed.images))
}

#[pymodule]
fn pullback_mia_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PullbackError", m.py().get_type::<PullbackError>())?;
    m.add_class::<PyConfig>()?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(report, m)?)?;
    m.add_function(wrap_pyfunction!(randomized_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(dense_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(influence, m)?)?;
    m.add_function(wrap_pyfunction!(roc_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(masked_norm, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_energy, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(parse_idx, m)?)?;
    Ok(())
}
