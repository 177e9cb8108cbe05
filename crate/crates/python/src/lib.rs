//! Python bindings for the target-signature learning library.
//!
//! Build with `cargo build -p mtmi-py`, then import the produced cdylib as
//! `mtmi_py` (see python/smoke_test.py for a loader).

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use mtmi::data::{Bag, BagCollection, BagLabel, Instance, SpectralLibrary};
use mtmi::detectors::{self, DetectorKind, Fusion};
use mtmi::evaluation::{self, ScoredInstance};
use mtmi::learner::{self, LearnerConfig, TargetDictionary, TrainOutput};
use mtmi::simulator::{self, GroundTruth, SimConfig, TargetPlacement};
use mtmi::whitening::{BackgroundSource, BackgroundStats};

fn to_py_err(e: mtmi::Error) -> PyErr {
    match e {
        mtmi::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_detector(text: &str) -> PyResult<DetectorKind> {
    DetectorKind::parse(text)
        .ok_or_else(|| PyValueError::new_err(format!("unknown detector {text:?} (use ace or smf)")))
}

fn parse_fusion(text: &str) -> PyResult<Fusion> {
    Fusion::parse(text)
        .ok_or_else(|| PyValueError::new_err(format!("unknown fusion {text:?} (use max or mean)")))
}

fn parse_background(text: &str) -> PyResult<BackgroundSource> {
    BackgroundSource::parse(text).ok_or_else(|| {
        PyValueError::new_err(format!("unknown background source {text:?} (use negative or all)"))
    })
}

/// Named reference spectra with shared band labels.
#[pyclass(frozen, name = "Library")]
struct PyLibrary {
    inner: SpectralLibrary,
}

#[pymethods]
impl PyLibrary {
    /// The built-in five-mineral demonstration library.
    #[staticmethod]
    fn demo() -> Self {
        PyLibrary { inner: simulator::demo_library() }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyLibrary { inner: SpectralLibrary::load_csv(&path).map_err(to_py_err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save_csv(&path).map_err(to_py_err)
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.names().to_vec()
    }

    #[getter]
    fn band_labels(&self) -> Vec<String> {
        self.inner.band_labels().to_vec()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn get(&self, name: &str) -> PyResult<Vec<f64>> {
        self.inner
            .get(name)
            .map(|s| s.to_vec())
            .ok_or_else(|| PyValueError::new_err(format!("no spectrum named {name:?}")))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Library({} spectra, {} bands)", self.inner.len(), self.inner.dim())
    }
}

/// A bag-labeled dataset: bags of spectra with positive/negative labels.
#[pyclass(frozen, name = "Bags")]
struct PyBags {
    inner: BagCollection,
}

#[pymethods]
impl PyBags {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyBags { inner: BagCollection::load_csv(&path).map_err(to_py_err)? })
    }

    /// Builds a collection from (bag_id, is_positive, instances) triples.
    #[staticmethod]
    fn from_bags(entries: Vec<(i64, bool, Vec<Vec<f64>>)>) -> PyResult<Self> {
        let mut bags = Vec::with_capacity(entries.len());
        for (id, positive, rows) in entries {
            let instances = rows
                .into_iter()
                .map(Instance::new)
                .collect::<mtmi::Result<Vec<_>>>()
                .map_err(to_py_err)?;
            let label = if positive { BagLabel::Positive } else { BagLabel::Negative };
            bags.push(Bag::new(id, label, instances).map_err(to_py_err)?);
        }
        Ok(PyBags { inner: BagCollection::new(bags).map_err(to_py_err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save_csv(&path).map_err(to_py_err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn num_positive(&self) -> usize {
        self.inner.num_positive()
    }

    /// The i-th bag as (bag_id, is_positive, instances).
    fn bag(&self, index: usize) -> PyResult<(i64, bool, Vec<Vec<f64>>)> {
        let bag = self
            .inner
            .bags()
            .get(index)
            .ok_or_else(|| PyValueError::new_err(format!("bag index {index} out of range")))?;
        let instances = bag.instances().iter().map(|i| i.values().to_vec()).collect();
        Ok((bag.id(), bag.label() == BagLabel::Positive, instances))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Bags({} bags, {} positive, {} bands)",
            self.inner.len(),
            self.inner.num_positive(),
            self.inner.dim()
        )
    }
}

/// Instance-level truth for simulated data.
#[pyclass(frozen, name = "Truth")]
struct PyTruth {
    inner: GroundTruth,
}

#[pymethods]
impl PyTruth {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyTruth { inner: GroundTruth::load_csv(&path).map_err(to_py_err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save_csv(&path).map_err(to_py_err)
    }

    /// All records as (bag_id, instance_index, target_name or None, proportion).
    fn records(&self) -> Vec<(i64, usize, Option<String>, f64)> {
        self.inner
            .records()
            .iter()
            .map(|r| (r.bag_id, r.instance_index, r.target_name.clone(), r.proportion))
            .collect()
    }

    #[getter]
    fn target_names(&self) -> Vec<String> {
        self.inner.target_names()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Truth({} records)", self.inner.len())
    }
}

/// Background mean and eigendecomposition used for whitening.
#[pyclass(frozen, name = "Stats")]
struct PyStats {
    inner: BackgroundStats,
}

#[pymethods]
impl PyStats {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyStats { inner: BackgroundStats::load_csv(&path).map_err(to_py_err)? })
    }

    /// Estimates statistics from a dataset's background instances.
    #[staticmethod]
    #[pyo3(signature = (bags, background="negative", eigenvalue_floor_rel=1e-8))]
    fn estimate(bags: &PyBags, background: &str, eigenvalue_floor_rel: f64) -> PyResult<Self> {
        let source = parse_background(background)?;
        let inner =
            BackgroundStats::estimate_with_floor(&bags.inner, source, eigenvalue_floor_rel)
                .map_err(to_py_err)?;
        Ok(PyStats { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save_csv(&path).map_err(to_py_err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn mean(&self) -> Vec<f64> {
        self.inner.mean().to_vec()
    }

    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.eigenvalues().to_vec()
    }

    #[getter]
    fn is_rank_deficient(&self) -> bool {
        self.inner.is_rank_deficient()
    }

    /// Whitens one spectrum.
    fn whiten(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.whiten(&x).map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!("Stats({} bands)", self.inner.dim())
    }
}

/// A learned dictionary of unit-norm target signatures.
#[pyclass(frozen, name = "Dictionary")]
struct PyDictionary {
    inner: TargetDictionary,
}

#[pymethods]
impl PyDictionary {
    /// Loads signatures saved by `save`; whitening comes from `stats`.
    #[staticmethod]
    fn load(path: PathBuf, stats: &PyStats) -> PyResult<Self> {
        Ok(PyDictionary {
            inner: TargetDictionary::load_csv(&path, &stats.inner).map_err(to_py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save_csv(&path).map_err(to_py_err)
    }

    fn save_whitened(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save_whitened_csv(&path).map_err(to_py_err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// Signatures mapped back to the original spectral space.
    #[getter]
    fn signatures(&self) -> Vec<Vec<f64>> {
        self.inner.output_signatures().to_vec()
    }

    /// Unit-norm signatures in whitened space, as optimized.
    #[getter]
    fn whitened_signatures(&self) -> Vec<Vec<f64>> {
        self.inner.whitened_signatures().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.count()
    }

    fn __repr__(&self) -> String {
        format!("Dictionary({} signatures, {} bands)", self.inner.count(), self.inner.dim())
    }
}

/// Everything `train` produces: the dictionary, the background statistics it
/// whitened with, and the per-iteration trace.
#[pyclass(frozen, name = "TrainResult")]
struct PyTrainResult {
    inner: TrainOutput,
}

#[pymethods]
impl PyTrainResult {
    #[getter]
    fn dictionary(&self) -> PyDictionary {
        PyDictionary { inner: self.inner.dictionary.clone() }
    }

    #[getter]
    fn stats(&self) -> PyStats {
        PyStats { inner: self.inner.stats.clone() }
    }

    #[getter]
    fn objectives(&self) -> Vec<f64> {
        self.inner.trace.iterations.iter().map(|r| r.objective).collect()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.trace.iterations.len()
    }

    #[getter]
    fn stop_reason(&self) -> &'static str {
        self.inner.trace.stop_reason.as_str()
    }

    #[getter]
    fn oscillation_detected(&self) -> bool {
        self.inner.trace.oscillation_detected
    }

    #[getter]
    fn degenerate_updates(&self) -> usize {
        self.inner.trace.degenerate_updates
    }

    fn __repr__(&self) -> String {
        format!(
            "TrainResult({} signatures, {} iterations, {})",
            self.inner.dictionary.count(),
            self.inner.trace.iterations.len(),
            self.inner.trace.stop_reason.as_str()
        )
    }
}

/// Generates a mixed-pixel dataset from library spectra.
#[pyfunction]
#[pyo3(signature = (
    library,
    targets,
    backgrounds,
    pos_bags = 10,
    neg_bags = 20,
    points_per_bag = 500,
    targets_per_bag = 250,
    mean_proportion = 0.3,
    snr_db = 20.0,
    placement = "per-bag",
    seed = 0,
))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    library: &PyLibrary,
    targets: Vec<String>,
    backgrounds: Vec<String>,
    pos_bags: usize,
    neg_bags: usize,
    points_per_bag: usize,
    targets_per_bag: usize,
    mean_proportion: f64,
    snr_db: f64,
    placement: &str,
    seed: u64,
) -> PyResult<(PyBags, PyTruth)> {
    let placement = TargetPlacement::parse(placement).ok_or_else(|| {
        PyValueError::new_err(format!(
            "unknown placement {placement:?} (use per-bag or per-instance)"
        ))
    })?;
    let config = SimConfig {
        targets,
        backgrounds,
        num_pos_bags: pos_bags,
        num_neg_bags: neg_bags,
        points_per_bag,
        targets_per_pos_bag: targets_per_bag,
        mean_target_proportion: mean_proportion,
        snr_db,
        placement,
        seed,
    };
    let (bags, truth) = simulator::generate_dataset(&library.inner, &config).map_err(to_py_err)?;
    Ok((PyBags { inner: bags }, PyTruth { inner: truth }))
}

/// Learns a dictionary of target signatures from bag-labeled data.
#[pyfunction]
#[pyo3(signature = (
    bags,
    k = 1,
    alpha = 0.0,
    detector = "ace",
    seed = 0,
    clusters = None,
    kmeans_max_iter = 100,
    max_iter = 1000,
    background = "negative",
    eigenvalue_floor_rel = 1e-8,
))]
#[allow(clippy::too_many_arguments)]
fn train(
    bags: &PyBags,
    k: usize,
    alpha: f64,
    detector: &str,
    seed: u64,
    clusters: Option<usize>,
    kmeans_max_iter: usize,
    max_iter: usize,
    background: &str,
    eigenvalue_floor_rel: f64,
) -> PyResult<PyTrainResult> {
    let config = LearnerConfig {
        initial_targets: k,
        uniqueness_weight: alpha,
        kmeans_clusters: clusters,
        kmeans_max_iter,
        max_iter,
        detector: parse_detector(detector)?,
        seed,
        background_source: parse_background(background)?,
        eigenvalue_floor_rel,
    };
    let inner = learner::train(&bags.inner, &config).map_err(to_py_err)?;
    Ok(PyTrainResult { inner })
}

/// Scores every instance, fusing per-signature scores into one value.
/// Returns (bag_id, instance_index, score) per instance.
#[pyfunction]
#[pyo3(signature = (bags, dictionary, stats, detector = "ace", fusion = "max"))]
fn detect(
    bags: &PyBags,
    dictionary: &PyDictionary,
    stats: &PyStats,
    detector: &str,
    fusion: &str,
) -> PyResult<Vec<(i64, usize, f64)>> {
    let rows = detectors::detect_batch(
        &bags.inner,
        &dictionary.inner,
        &stats.inner,
        parse_detector(detector)?,
        parse_fusion(fusion)?,
    )
    .map_err(to_py_err)?;
    Ok(rows.into_iter().map(|r| (r.bag_id, r.instance_index, r.score)).collect())
}

/// Like `detect`, also returning the unfused per-signature scores.
#[pyfunction]
#[pyo3(signature = (bags, dictionary, stats, detector = "ace", fusion = "max"))]
fn detect_per_signature(
    bags: &PyBags,
    dictionary: &PyDictionary,
    stats: &PyStats,
    detector: &str,
    fusion: &str,
) -> PyResult<Vec<(i64, usize, f64, Vec<f64>)>> {
    let rows = detectors::detect_batch_detailed(
        &bags.inner,
        &dictionary.inner,
        &stats.inner,
        parse_detector(detector)?,
        parse_fusion(fusion)?,
    )
    .map_err(to_py_err)?;
    Ok(rows
        .into_iter()
        .map(|r| (r.bag_id, r.instance_index, r.score, r.per_signature))
        .collect())
}

/// ROC points for (score, is_target) pairs: (threshold, fpr, tpr) rows,
/// starting at (inf, 0, 0).
#[pyfunction]
fn roc(scored: Vec<(f64, bool)>) -> PyResult<Vec<(f64, f64, f64)>> {
    let scored: Vec<ScoredInstance> =
        scored.into_iter().map(|(s, t)| ScoredInstance::new(s, t)).collect();
    let curve = evaluation::roc_curve(&scored).map_err(to_py_err)?;
    Ok(curve.points().iter().map(|p| (p.threshold, p.fpr, p.tpr)).collect())
}

/// Area under the ROC curve up to a false-alarm cutoff, normalized by the
/// cutoff. Returns (value, extrapolated).
#[pyfunction]
#[pyo3(signature = (scored, far = 1.0))]
fn nauc(scored: Vec<(f64, bool)>, far: f64) -> PyResult<(f64, bool)> {
    let scored: Vec<ScoredInstance> =
        scored.into_iter().map(|(s, t)| ScoredInstance::new(s, t)).collect();
    let curve = evaluation::roc_curve(&scored).map_err(to_py_err)?;
    evaluation::nauc_flagged(&curve, far).map_err(to_py_err)
}

/// Joins detection scores with ground truth and summarizes performance:
/// overall normalized AUC plus one entry per target name, where each
/// target's negatives are the background-only instances.
#[pyfunction]
#[pyo3(signature = (scores, truth, far = 1e-3))]
fn evaluate(
    py: Python<'_>,
    scores: Vec<(i64, usize, f64)>,
    truth: &PyTruth,
    far: f64,
) -> PyResult<Py<PyDict>> {
    let map = truth.inner.index_map();
    let mut overall = Vec::with_capacity(scores.len());
    for &(bag_id, instance_index, score) in &scores {
        let record = map.get(&(bag_id, instance_index)).ok_or_else(|| {
            PyValueError::new_err(format!(
                "no ground truth for bag {bag_id} instance {instance_index}"
            ))
        })?;
        overall.push(ScoredInstance::new(score, record.proportion > 0.0));
    }
    let curve = evaluation::roc_curve(&overall).map_err(to_py_err)?;
    let (value, extrapolated) = evaluation::nauc_flagged(&curve, far).map_err(to_py_err)?;

    let result = PyDict::new(py);
    result.set_item("nauc", value)?;
    result.set_item("extrapolated", extrapolated)?;
    result.set_item("num_instances", overall.len())?;
    let per_target = PyDict::new(py);
    for target in truth.inner.target_names() {
        let scored: Vec<ScoredInstance> = scores
            .iter()
            .filter_map(|&(bag_id, instance_index, score)| {
                let record = map[&(bag_id, instance_index)];
                match &record.target_name {
                    Some(name) if *name == target => Some(ScoredInstance::new(score, true)),
                    Some(_) => None,
                    None => Some(ScoredInstance::new(score, false)),
                }
            })
            .collect();
        let curve = evaluation::roc_curve(&scored).map_err(to_py_err)?;
        let (value, extrapolated) = evaluation::nauc_flagged(&curve, far).map_err(to_py_err)?;
        let entry = PyDict::new(py);
        entry.set_item("nauc", value)?;
        entry.set_item("extrapolated", extrapolated)?;
        per_target.set_item(target, entry)?;
    }
    result.set_item("per_target", per_target)?;
    Ok(result.unbind())
}

#[pymodule]
fn mtmi_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLibrary>()?;
    m.add_class::<PyBags>()?;
    m.add_class::<PyTruth>()?;
    m.add_class::<PyStats>()?;
    m.add_class::<PyDictionary>()?;
    m.add_class::<PyTrainResult>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    m.add_function(wrap_pyfunction!(detect_per_signature, m)?)?;
    m.add_function(wrap_pyfunction!(roc, m)?)?;
    m.add_function(wrap_pyfunction!(nauc, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
