//! Python bindings: model loading, prediction, the multi-start attack and
//! the exact oracle.

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use leaftuple::attack::{run_multistart, AttackConfig, AttackRecord};
use leaftuple::baselines::{exact_oracle_with_cap, OracleResult, DEFAULT_ORACLE_CAP};
use leaftuple::data::{load_dataset as load_data_file, parse_libsvm, DataOptions};
use leaftuple::model_io::{parse_model, to_native_json, LoadOptions, ModelFormat};
use leaftuple::{Norm, TreeEnsemble};

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_norm(norm: &str) -> PyResult<Norm> {
    norm.parse().map_err(PyValueError::new_err)
}

fn load_options(
    format: &str,
    num_features: Option<usize>,
    num_classes: usize,
    base_margin: f64,
) -> PyResult<LoadOptions> {
    let format = match format {
        "auto" => ModelFormat::Auto,
        "xgboost" => ModelFormat::Xgboost,
        "native" => ModelFormat::Native,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown model format `{other}`"
            )))
        }
    };
    Ok(LoadOptions {
        format,
        num_features,
        num_classes,
        base_margin,
        ..LoadOptions::default()
    })
}

/// A tree ensemble (binary or multiclass).
#[pyclass(frozen, module = "leaftuple")]
struct Ensemble {
    inner: TreeEnsemble,
}

impl Ensemble {
    fn check(&self, x: &[f64]) -> PyResult<()> {
        if x.len() != self.inner.num_features() {
            return Err(PyValueError::new_err(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.inner.num_features()
            )));
        }
        Ok(())
    }
}

#[pymethods]
impl Ensemble {
    /// Parses a model from JSON text (XGBoost dump or native format).
    #[staticmethod]
    #[pyo3(signature = (text, format="auto", num_features=None, num_classes=2, base_margin=0.0))]
    fn from_json(
        text: &str,
        format: &str,
        num_features: Option<usize>,
        num_classes: usize,
        base_margin: f64,
    ) -> PyResult<Ensemble> {
        let opts = load_options(format, num_features, num_classes, base_margin)?;
        let inner = parse_model(text, &opts).map_err(value_err)?;
        Ok(Ensemble { inner })
    }

    /// Loads a model file.
    #[staticmethod]
    #[pyo3(signature = (path, format="auto", num_features=None, num_classes=2, base_margin=0.0))]
    fn load(
        path: &str,
        format: &str,
        num_features: Option<usize>,
        num_classes: usize,
        base_margin: f64,
    ) -> PyResult<Ensemble> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PyOSError::new_err(format!("{path}: {e}")))?;
        Ensemble::from_json(&text, format, num_features, num_classes, base_margin)
    }

    /// The model in the native JSON format.
    fn to_json(&self) -> String {
        to_native_json(&self.inner)
    }

    #[getter]
    fn num_trees(&self) -> usize {
        self.inner.num_trees()
    }

    #[getter]
    fn num_features(&self) -> usize {
        self.inner.num_features()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<usize> {
        self.check(&x)?;
        Ok(self.inner.predict_class(&x))
    }

    /// Raw margin: one value for binary models, one per class otherwise.
    fn predict_margin(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check(&x)?;
        Ok(self.inner.predict_margin(&x))
    }

    /// Leaf reached in every tree, as (tree, node) pairs.
    fn leaf_tuple(&self, x: Vec<f64>) -> PyResult<Vec<(u32, u32)>> {
        self.check(&x)?;
        Ok(self
            .inner
            .leaf_tuple(&x)
            .leaves
            .iter()
            .map(|l| (l.tree, l.node))
            .collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "Ensemble(num_trees={}, num_features={}, num_classes={})",
            self.inner.num_trees(),
            self.inner.num_features(),
            self.inner.num_classes()
        )
    }
}

/// Outcome of attacking one victim.
#[pyclass(frozen, module = "leaftuple")]
struct AttackResult {
    inner: AttackRecord,
}

#[pymethods]
impl AttackResult {
    #[getter]
    fn success(&self) -> bool {
        self.inner.success
    }

    #[getter]
    fn already_misclassified(&self) -> bool {
        self.inner.already_misclassified
    }

    /// Perturbation of the returned input in the attack norm.
    #[getter]
    fn distance(&self) -> Option<f64> {
        self.inner.distance
    }

    /// Distance to the closure of the final region.
    #[getter]
    fn infimum(&self) -> Option<f64> {
        self.inner.infimum
    }

    #[getter]
    fn point(&self) -> Option<Vec<f64>> {
        self.inner.point.clone()
    }

    #[getter]
    fn adversarial_class(&self) -> Option<usize> {
        self.inner.adversarial_class
    }

    #[getter]
    fn iterations(&self) -> u64 {
        self.inner.stats.iterations
    }

    #[getter]
    fn wall_time_ms(&self) -> f64 {
        self.inner.wall_time_ms
    }

    /// The full record as JSON.
    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "AttackResult(success={}, distance={:?})",
            self.inner.success, self.inner.distance
        )
    }
}

/// Exact minimum adversarial perturbation.
#[pyclass(frozen, module = "leaftuple")]
struct OracleOutcome {
    inner: OracleResult,
}

#[pymethods]
impl OracleOutcome {
    #[getter]
    fn distance(&self) -> f64 {
        self.inner.distance
    }

    #[getter]
    fn point(&self) -> Vec<f64> {
        self.inner.point.clone()
    }

    #[getter]
    fn closest(&self) -> Vec<f64> {
        self.inner.closest.clone()
    }

    #[getter]
    fn adversarial_class(&self) -> usize {
        self.inner.adversarial_class
    }

    #[getter]
    fn tuple(&self) -> Vec<(u32, u32)> {
        self.inner
            .tuple
            .leaves
            .iter()
            .map(|l| (l.tree, l.node))
            .collect()
    }

    fn __repr__(&self) -> String {
        format!("OracleOutcome(distance={})", self.inner.distance)
    }
}

/// Multi-start leaf-tuple attack on one victim `x0` with true label `label`.
#[pyfunction]
#[pyo3(signature = (
    ensemble, x0, label, norm="linf", num_initial=20, seed=0, noise_escape=true, epsilon=1e-6, example=0
))]
#[allow(clippy::too_many_arguments)]
fn attack(
    py: Python<'_>,
    ensemble: &Ensemble,
    x0: Vec<f64>,
    label: usize,
    norm: &str,
    num_initial: usize,
    seed: u64,
    noise_escape: bool,
    epsilon: f64,
    example: usize,
) -> PyResult<AttackResult> {
    let mut cfg = AttackConfig {
        norm: parse_norm(norm)?,
        num_initial,
        seed,
        epsilon,
        ..AttackConfig::default()
    };
    cfg.noise_escape.enabled = noise_escape;
    let e = &ensemble.inner;
    let rec = py
        .detach(|| run_multistart(e, &x0, label, &cfg, example))
        .map_err(value_err)?;
    Ok(AttackResult { inner: rec })
}

/// Exhaustive search over valid leaf tuples. Small models only.
#[pyfunction]
#[pyo3(signature = (ensemble, x0, label, norm="linf", cap=DEFAULT_ORACLE_CAP, epsilon=1e-6))]
fn exact_oracle(
    py: Python<'_>,
    ensemble: &Ensemble,
    x0: Vec<f64>,
    label: usize,
    norm: &str,
    cap: u64,
    epsilon: f64,
) -> PyResult<OracleOutcome> {
    let norm = parse_norm(norm)?;
    ensemble.check(&x0)?;
    let e = &ensemble.inner;
    let r = py
        .detach(|| exact_oracle_with_cap(e, &x0, label, norm, cap, epsilon))
        .map_err(value_err)?;
    Ok(OracleOutcome { inner: r })
}

fn data_options(num_features: usize, num_classes: usize, index_base: usize) -> DataOptions {
    DataOptions {
        index_base,
        num_features,
        num_classes,
    }
}

/// Parses LIBSVM text into (features, labels).
#[pyfunction]
#[pyo3(signature = (text, num_features, num_classes=2, index_base=0))]
fn parse_libsvm_text(
    text: &str,
    num_features: usize,
    num_classes: usize,
    index_base: usize,
) -> PyResult<(Vec<Vec<f64>>, Vec<usize>)> {
    let d = parse_libsvm(text, &data_options(num_features, num_classes, index_base))
        .map_err(value_err)?;
    Ok((d.features, d.labels))
}

/// Loads a LIBSVM or CSV (`.csv`) file into (features, labels).
#[pyfunction]
#[pyo3(signature = (path, num_features, num_classes=2, index_base=0))]
fn load_dataset(
    path: &str,
    num_features: usize,
    num_classes: usize,
    index_base: usize,
) -> PyResult<(Vec<Vec<f64>>, Vec<usize>)> {
    let d = load_data_file(path, &data_options(num_features, num_classes, index_base))
        .map_err(value_err)?;
    Ok((d.features, d.labels))
}

#[pymodule]
#[pyo3(name = "leaftuple")]
fn leaftuple_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Ensemble>()?;
    m.add_class::<AttackResult>()?;
    m.add_class::<OracleOutcome>()?;
    m.add_function(wrap_pyfunction!(attack, m)?)?;
    m.add_function(wrap_pyfunction!(exact_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(parse_libsvm_text, m)?)?;
    m.add_function(wrap_pyfunction!(load_dataset, m)?)?;
    Ok(())
}
