//! Python bindings: corpus loading, the hashing encoder, the BiLSTM scorer,
//! the grouped focal loss, metrics, and the training loop.

use abduct_core::corpus::{self, ReasoningSample};
use abduct_core::encoder::{tokenize, Encoder, FeatureVector, HashEncoder};
use abduct_core::interaction::{self, BiLstmParams, Checkpoint, Provenance};
use abduct_core::loss::{self, LossConfig};
use abduct_core::metrics::{self, ScoredSample};
use abduct_core::trainer::{self, Seeds, TrainConfig};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: abduct_core::Error) -> PyErr {
    match e {
        abduct_core::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn features_from(rows: Vec<Vec<f64>>) -> PyResult<Vec<FeatureVector>> {
    rows.into_iter().map(|r| FeatureVector::new(r).map_err(to_py)).collect()
}

/// An observation pair with candidate hypotheses and 0/1 labels.
#[pyclass(name = "Sample", from_py_object)]
#[derive(Clone)]
pub struct PySample {
    inner: ReasoningSample,
}

#[pymethods]
impl PySample {
    #[new]
    fn new(sample_id: String, obs1: String, obs2: String, hypotheses: Vec<String>, labels: Vec<u8>) -> PyResult<Self> {
        if hypotheses.len() != labels.len() {
            return Err(PyValueError::new_err("hypotheses and labels differ in length"));
        }
        Ok(PySample {
            inner: ReasoningSample {
                sample_id,
                obs1,
                obs2,
                hypotheses,
                labels,
            },
        })
    }

    #[getter]
    fn sample_id(&self) -> String {
        self.inner.sample_id.clone()
    }

    #[getter]
    fn obs1(&self) -> String {
        self.inner.obs1.clone()
    }

    #[getter]
    fn obs2(&self) -> String {
        self.inner.obs2.clone()
    }

    #[getter]
    fn hypotheses(&self) -> Vec<String> {
        self.inner.hypotheses.clone()
    }

    #[getter]
    fn labels(&self) -> Vec<u8> {
        self.inner.labels.clone()
    }

    fn is_trainable(&self) -> bool {
        self.inner.is_trainable()
    }

    fn triads(&self) -> Vec<String> {
        self.inner.triads().into_iter().map(|t| t.text).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Sample({:?}, {} hypotheses)", self.inner.sample_id, self.inner.len())
    }
}

fn unwrap_samples(samples: &[PySample]) -> Vec<ReasoningSample> {
    samples.iter().map(|s| s.inner.clone()).collect()
}

/// Reads a record file and its label file and groups records by context.
#[pyfunction]
fn load_samples(data: &str, labels: &str) -> PyResult<Vec<PySample>> {
    let records = corpus::load_records(data, labels).map_err(to_py)?;
    Ok(corpus::group_by_context(&records)
        .into_iter()
        .map(|inner| PySample { inner })
        .collect())
}

#[pyfunction]
fn subsample(samples: Vec<PySample>, fraction: f64, seed: u64) -> PyResult<Vec<PySample>> {
    let picked = corpus::subsample(&unwrap_samples(&samples), fraction, seed).map_err(to_py)?;
    Ok(picked.into_iter().map(|inner| PySample { inner }).collect())
}

#[pyclass(name = "ToyEncoder", skip_from_py_object)]
pub struct PyToyEncoder {
    inner: HashEncoder,
}

#[pymethods]
impl PyToyEncoder {
    #[new]
    #[pyo3(signature = (seed, dim = abduct_core::encoder::DEFAULT_DIM))]
    fn new(seed: u64, dim: usize) -> PyResult<Self> {
        Ok(PyToyEncoder {
            inner: HashEncoder::new(seed, dim).map_err(to_py)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// Sum of the token vectors of `text`.
    fn feature(&self, text: &str) -> Vec<f64> {
        let mut out = vec![0.0; self.inner.dim()];
        for token in tokenize(text) {
            for (o, v) in out.iter_mut().zip(self.inner.token_vector(&token)) {
                *o += v;
            }
        }
        out
    }

    /// One pooled feature vector per hypothesis.
    fn encode_sample(&self, sample: &PySample) -> PyResult<Vec<Vec<f64>>> {
        let seq = self.inner.encode_sample(&sample.inner).map_err(to_py)?;
        Ok(seq.into_iter().map(|f| f.0.to_vec()).collect())
    }
}

/// Bidirectional LSTM across hypotheses with a shared linear head.
#[pyclass(name = "BiLstm", skip_from_py_object)]
pub struct PyBiLstm {
    params: BiLstmParams,
    provenance: Provenance,
}

#[pymethods]
impl PyBiLstm {
    #[new]
    #[pyo3(signature = (input_dim, hidden_dim = None, seed = 0))]
    fn new(input_dim: usize, hidden_dim: Option<usize>, seed: u64) -> PyResult<Self> {
        let params = interaction::init_params(seed, input_dim, hidden_dim.unwrap_or(input_dim)).map_err(to_py)?;
        Ok(PyBiLstm {
            params,
            provenance: Provenance {
                init_seed: Some(seed),
                ..Provenance::default()
            },
        })
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.params.input_dim
    }

    #[getter]
    fn hidden_dim(&self) -> usize {
        self.params.hidden_dim
    }

    fn num_values(&self) -> usize {
        self.params.num_values()
    }

    fn values(&self) -> Vec<f64> {
        self.params.to_vec()
    }

    fn set_values(&mut self, values: Vec<f64>) -> PyResult<()> {
        self.params.set_from_slice(&values).map_err(to_py)
    }

    /// Scores for every hypothesis of one sample, given its feature rows.
    fn score(&self, features: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        interaction::score(&self.params, &features_from(features)?).map_err(to_py)
    }

    /// Gradient of `sum(upstream * scores)` with respect to the flattened parameters.
    fn gradient(&self, features: Vec<Vec<f64>>, upstream: Vec<f64>) -> PyResult<Vec<f64>> {
        let feats = features_from(features)?;
        let (_, trace) = interaction::forward(&self.params, &feats).map_err(to_py)?;
        let (grads, _) = interaction::backward(&self.params, &feats, &trace, &upstream).map_err(to_py)?;
        Ok(grads.to_vec())
    }

    fn save(&self, path: &str) -> PyResult<()> {
        Checkpoint::new(self.params.clone(), self.provenance.clone())
            .save(path)
            .map_err(to_py)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let ckpt = Checkpoint::load(path).map_err(to_py)?;
        Ok(PyBiLstm {
            params: ckpt.params,
            provenance: ckpt.provenance,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "BiLstm(input_dim={}, hidden_dim={})",
            self.params.input_dim, self.params.hidden_dim
        )
    }
}

#[pyfunction]
fn rearrange_groups(labels: Vec<u8>) -> PyResult<Vec<Vec<usize>>> {
    Ok(loss::rearrange_groups(&labels).map_err(to_py)?.iter().collect())
}

/// Per-hypothesis probabilities under the grouped softmax.
#[pyfunction]
fn grouped_softmax(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<Vec<f64>> {
    Ok(loss::grouped_softmax(&scores, &labels).map_err(to_py)?.y_hat.to_vec())
}

/// Returns `(loss, gradient with respect to the scores)`.
#[pyfunction]
#[pyo3(signature = (scores, labels, gamma = 2.0, alpha = 0.55, eps = 1e-8))]
fn sample_loss(scores: Vec<f64>, labels: Vec<u8>, gamma: f64, alpha: f64, eps: f64) -> PyResult<(f64, Vec<f64>)> {
    let config = LossConfig::new(gamma, alpha, eps).map_err(to_py)?;
    let r = loss::sample_loss(&scores, &labels, &config).map_err(to_py)?;
    Ok((r.loss, r.grad.to_vec()))
}

#[pyfunction]
fn auc(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<f64> {
    metrics::auc(&scores, &labels).map_err(to_py)
}

/// Accuracy over `(scores, labels)` pairs, one per sample.
#[pyfunction]
fn accuracy(samples: Vec<(Vec<f64>, Vec<u8>)>) -> f64 {
    let scored: Vec<ScoredSample> = samples
        .into_iter()
        .enumerate()
        .map(|(i, (scores, labels))| ScoredSample {
            sample_id: i.to_string(),
            labels,
            scores,
        })
        .collect();
    metrics::accuracy(&scored)
}

/// Trains on `samples` with the hashing encoder; returns the model and its
/// `(step, loss)` log.
#[pyfunction]
#[pyo3(signature = (
    samples, epochs = 10, lr = 1e-2, gamma = 2.0, alpha = 0.55, eps = 1e-8,
    seed_init = 0, seed_shuffle = 0, seed_encoder = 0, dim = abduct_core::encoder::DEFAULT_DIM, hidden_dim = None,
))]
#[allow(clippy::too_many_arguments)]
fn train(
    samples: Vec<PySample>,
    epochs: usize,
    lr: f64,
    gamma: f64,
    alpha: f64,
    eps: f64,
    seed_init: u64,
    seed_shuffle: u64,
    seed_encoder: u64,
    dim: usize,
    hidden_dim: Option<usize>,
) -> PyResult<(PyBiLstm, Vec<(u64, f64)>)> {
    let config = TrainConfig {
        learning_rate: lr,
        epochs,
        loss: LossConfig::new(gamma, alpha, eps).map_err(to_py)?,
        seeds: Seeds {
            init: seed_init,
            shuffle: seed_shuffle,
            encoder: seed_encoder,
        },
        hidden_dim,
        ..TrainConfig::default()
    };
    let encoder = HashEncoder::new(seed_encoder, dim).map_err(to_py)?;
    let state = trainer::train(&config, &unwrap_samples(&samples), &encoder).map_err(to_py)?;
    Ok((
        PyBiLstm {
            params: state.params,
            provenance: state.provenance,
        },
        state.loss_history,
    ))
}

/// Returns a dict with `acc`, `auc`, `n_samples` and `n_hypotheses`.
#[pyfunction]
#[pyo3(signature = (model, samples, seed_encoder = None))]
fn evaluate<'py>(
    py: Python<'py>,
    model: &PyBiLstm,
    samples: Vec<PySample>,
    seed_encoder: Option<u64>,
) -> PyResult<Bound<'py, PyDict>> {
    let seed = seed_encoder.or(model.provenance.encoder_seed).unwrap_or(0);
    let encoder = HashEncoder::new(seed, model.params.input_dim).map_err(to_py)?;
    let report = trainer::evaluate(&model.params, &unwrap_samples(&samples), &encoder, false).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("acc", report.acc)?;
    out.set_item("auc", report.auc)?;
    out.set_item("n_samples", report.n_samples)?;
    out.set_item("n_hypotheses", report.n_hypotheses)?;
    Ok(out)
}

#[pymodule]
fn abduct(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySample>()?;
    m.add_class::<PyToyEncoder>()?;
    m.add_class::<PyBiLstm>()?;
    m.add_function(wrap_pyfunction!(load_samples, m)?)?;
    m.add_function(wrap_pyfunction!(subsample, m)?)?;
    m.add_function(wrap_pyfunction!(rearrange_groups, m)?)?;
    m.add_function(wrap_pyfunction!(grouped_softmax, m)?)?;
    m.add_function(wrap_pyfunction!(sample_loss, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
