//! Python bindings for `labelgcn_core`.
//!
//! Matrices cross the boundary as lists of row lists; label sets as lists of
//! label names.

use std::collections::BTreeMap;

use labelgcn_core::data::{self, generate_synthetic_with_vocab, label_matrix, SynthConfig};
use labelgcn_core::graph::{self, PropagationBasis};
use labelgcn_core::metrics::{self, MetricsReport, Scorer};
use labelgcn_core::model::{self, Checkpoint, GcnConfig, GcnScorer, TrainConfig};
use labelgcn_core::proximity;
use ndarray::Array2;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(labelgcn, LabelGcnError, PyException);

fn err(e: labelgcn_core::Error) -> PyErr {
    LabelGcnError::new_err(format!("[{}] {e}", e.kind()))
}

fn to_array(rows: Vec<Vec<f64>>, what: &str) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(LabelGcnError::new_err(format!(
            "{what}: rows have different lengths"
        )));
    }
    Ok(Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect()).expect("rectangular"))
}

fn to_binary(rows: Vec<Vec<u8>>, what: &str) -> PyResult<Array2<u8>> {
    let m = to_array(
        rows.into_iter()
            .map(|r| r.into_iter().map(f64::from).collect())
            .collect(),
        what,
    )?;
    Ok(m.mapv(|v| v as u8))
}

fn to_rows<T: Clone>(m: &Array2<T>) -> Vec<Vec<T>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn parse_basis(basis: &str) -> PyResult<PropagationBasis> {
    match basis {
        "power" => Ok(PropagationBasis::Power),
        "chebyshev" => Ok(PropagationBasis::Chebyshev),
        other => Err(LabelGcnError::new_err(format!("unknown basis `{other}`"))),
    }
}

#[pyclass(name = "Vocabulary", module = "labelgcn", frozen)]
struct PyVocabulary {
    inner: graph::LabelVocabulary,
}

#[pymethods]
impl PyVocabulary {
    #[new]
    fn new(labels: Vec<String>) -> PyResult<Self> {
        Ok(Self {
            inner: graph::LabelVocabulary::new(labels).map_err(err)?,
        })
    }

    #[staticmethod]
    fn synthetic(size: usize) -> PyResult<Self> {
        Ok(Self {
            inner: graph::LabelVocabulary::synthetic(size).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: graph::LabelVocabulary::load(path).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    fn labels(&self) -> Vec<String> {
        self.inner.labels().to_vec()
    }

    fn index(&self, label: &str) -> PyResult<usize> {
        self.inner.require(label).map_err(err)
    }

    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyclass(name = "LabelGraph", module = "labelgcn", frozen)]
struct PyLabelGraph {
    inner: graph::LabelGraph,
}

#[pymethods]
impl PyLabelGraph {
    #[staticmethod]
    #[pyo3(signature = (samples, vocab, t = graph::DEFAULT_COOCCURRENCE_THRESHOLD))]
    fn cooccurrence(samples: Vec<Vec<String>>, vocab: &PyVocabulary, t: f64) -> PyResult<Self> {
        Ok(Self {
            inner: graph::build_cooccurrence_graph(&samples, &vocab.inner, t).map_err(err)?,
        })
    }

    /// Knowledge graph from a groups file; `a` and `b` name the annotators.
    #[staticmethod]
    fn knowledge(groups_path: &str, vocab: &PyVocabulary, a: &str, b: &str) -> PyResult<Self> {
        let groups = graph::load_groups(groups_path).map_err(err)?;
        let get = |id: &str| {
            groups
                .get(id)
                .ok_or_else(|| LabelGcnError::new_err(format!("no annotator `{id}`")))
        };
        Ok(Self {
            inner: graph::build_knowledge_graph(get(a)?, get(b)?, &vocab.inner).map_err(err)?,
        })
    }

    #[staticmethod]
    fn random(size: usize, density: f64, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: graph::random_graph(size, density, seed).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: graph::LabelGraph::load(path).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    fn size(&self) -> usize {
        self.inner.size()
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edge_list()
    }

    fn edge_count(&self) -> usize {
        self.inner.edge_count()
    }

    fn adjacency(&self) -> Vec<Vec<u8>> {
        to_rows(self.inner.edges())
    }

    fn source(&self) -> String {
        self.inner.source().to_string()
    }
}

#[pyfunction]
fn normalize_adjacency(graph: &PyLabelGraph) -> Vec<Vec<f64>> {
    to_rows(graph::normalize_adjacency(&graph.inner).matrix())
}

#[pyfunction]
#[pyo3(signature = (graph, k, basis = "power"))]
fn propagation_matrix(graph: &PyLabelGraph, k: usize, basis: &str) -> PyResult<Vec<Vec<f64>>> {
    let adj = graph::normalize_adjacency(&graph.inner);
    let p = graph::propagation_matrix_with(&adj, k, parse_basis(basis)?).map_err(err)?;
    Ok(to_rows(p.matrix()))
}

#[pyclass(name = "Dataset", module = "labelgcn", frozen)]
struct PyDataset {
    inner: data::Dataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn load(path: &str, vocab: &PyVocabulary) -> PyResult<Self> {
        Ok(Self {
            inner: data::load_dataset(path, &vocab.inner).map_err(err)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        data::save_dataset(&self.inner, path).map_err(err)
    }

    fn features(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.feature_matrix())
    }

    fn label_sets(&self) -> Vec<Vec<String>> {
        let vocab = self.inner.vocab();
        self.inner
            .label_sets()
            .into_iter()
            .map(|s| {
                s.iter()
                    .map(|&i| vocab.label(i).unwrap().to_string())
                    .collect()
            })
            .collect()
    }

    fn targets(&self) -> Vec<Vec<u8>> {
        to_rows(&label_matrix(&self.inner))
    }

    fn vocab(&self) -> PyVocabulary {
        PyVocabulary {
            inner: self.inner.vocab().clone(),
        }
    }

    fn feature_dim(&self) -> usize {
        self.inner.feature_dim()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Planted-cluster synthetic data: `{"train", "test", "true_groups"}`.
#[pyfunction]
#[pyo3(signature = (vocab, n_clusters = 8, n_train = 5000, n_test = 1000, d_feat = 32, noise = 1.0, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn synthesize<'py>(
    py: Python<'py>,
    vocab: &PyVocabulary,
    n_clusters: usize,
    n_train: usize,
    n_test: usize,
    d_feat: usize,
    noise: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = SynthConfig {
        num_labels: vocab.inner.len(),
        n_clusters,
        feature_dim: d_feat,
        n_train,
        n_test,
        noise,
        seed,
        ..SynthConfig::default()
    };
    let out = generate_synthetic_with_vocab(&cfg, &vocab.inner).map_err(err)?;
    let dict = PyDict::new(py);
    dict.set_item("train", PyDataset { inner: out.train })?;
    dict.set_item("test", PyDataset { inner: out.test })?;
    dict.set_item("true_groups", out.true_groups.clusters().to_vec())?;
    Ok(dict)
}

fn train_config(
    lr: f64,
    epochs: usize,
    batch_size: usize,
    seed: u64,
    weight_decay: f64,
) -> TrainConfig {
    TrainConfig {
        learning_rate: lr,
        epochs,
        batch_size,
        seed,
        weight_decay,
        ..TrainConfig::default()
    }
}

#[pyclass(name = "GcnModel", module = "labelgcn")]
struct PyGcnModel {
    inner: model::GcnModel,
}

impl PyGcnModel {
    fn propagation(
        &self,
        graph: &PyLabelGraph,
    ) -> PyResult<(graph::PropagationMatrix, graph::PropagationMatrix)> {
        self.inner.propagation(&graph.inner).map_err(err)
    }
}

#[pymethods]
impl PyGcnModel {
    #[new]
    #[pyo3(signature = (num_labels, d_feat, d0 = 700, d1 = 1024, seed = 0, adapter = true, orders = (1, 2), slope = 0.2, basis = "power", embeddings = None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        num_labels: usize,
        d_feat: usize,
        d0: usize,
        d1: usize,
        seed: u64,
        adapter: bool,
        orders: (usize, usize),
        slope: f64,
        basis: &str,
        embeddings: Option<Vec<Vec<f64>>>,
    ) -> PyResult<Self> {
        let config = GcnConfig {
            d0,
            d1,
            d_feat,
            orders,
            slope,
            use_feature_adapter: adapter,
            basis: parse_basis(basis)?,
        };
        let embeddings = embeddings.map(|e| to_array(e, "embeddings")).transpose()?;
        Ok(Self {
            inner: model::init_model(&config, num_labels, seed, embeddings).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        match Checkpoint::load(path).map_err(err)? {
            Checkpoint::Gcn { model, .. } => Ok(Self { inner: model }),
            Checkpoint::Linear { .. } => Err(LabelGcnError::new_err("not a GCN checkpoint")),
        }
    }

    fn save(&self, path: &str, vocab: &PyVocabulary) -> PyResult<()> {
        Checkpoint::Gcn {
            vocab_fingerprint: vocab.inner.fingerprint(),
            train_config: None,
            model: self.inner.clone(),
        }
        .save(path)
        .map_err(err)
    }

    #[getter]
    fn embeddings(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.embeddings)
    }

    fn parameter_count(&self) -> usize {
        self.inner.parameter_count()
    }

    /// The C x d_feat classifier matrix produced by the graph branch.
    fn forward(&self, graph: &PyLabelGraph) -> PyResult<Vec<Vec<f64>>> {
        let (p1, p2) = self.propagation(graph)?;
        let (w, _) = model::gcn_forward(&self.inner, &p1, &p2).map_err(err)?;
        Ok(to_rows(&w))
    }

    fn predict(&self, graph: &PyLabelGraph, features: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let (p1, p2) = self.propagation(graph)?;
        let scorer = GcnScorer {
            model: &self.inner,
            p1: &p1,
            p2: &p2,
        };
        Ok(to_rows(
            &scorer
                .scores(&to_array(features, "features")?)
                .map_err(err)?,
        ))
    }

    /// Trains in place and returns the per-epoch mean loss.
    #[pyo3(signature = (dataset, graph, lr = 0.0003, epochs = 300, batch_size = 32, seed = 0, weight_decay = 0.0))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        &mut self,
        dataset: &PyDataset,
        graph: &PyLabelGraph,
        lr: f64,
        epochs: usize,
        batch_size: usize,
        seed: u64,
        weight_decay: f64,
    ) -> PyResult<Vec<f64>> {
        let (p1, p2) = self.propagation(graph)?;
        let tc = train_config(lr, epochs, batch_size, seed, weight_decay);
        let (trained, history) =
            model::train(&dataset.inner, &p1, &p2, self.inner.clone(), &tc).map_err(err)?;
        self.inner = trained;
        Ok(history.epoch_loss)
    }
}

#[pyclass(name = "LinearBaseline", module = "labelgcn")]
struct PyLinearBaseline {
    inner: model::LinearBaseline,
}

#[pymethods]
impl PyLinearBaseline {
    #[new]
    #[pyo3(signature = (num_labels, d_feat, seed = 0))]
    fn new(num_labels: usize, d_feat: usize, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: model::init_linear_baseline(num_labels, d_feat, seed).map_err(err)?,
        })
    }

    fn predict(&self, features: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(to_rows(
            &self
                .inner
                .scores(&to_array(features, "features")?)
                .map_err(err)?,
        ))
    }

    #[pyo3(signature = (dataset, lr = 0.0003, epochs = 300, batch_size = 32, seed = 0, weight_decay = 0.0))]
    fn train(
        &mut self,
        dataset: &PyDataset,
        lr: f64,
        epochs: usize,
        batch_size: usize,
        seed: u64,
        weight_decay: f64,
    ) -> PyResult<Vec<f64>> {
        let tc = train_config(lr, epochs, batch_size, seed, weight_decay);
        let (trained, history) =
            model::fit_linear_baseline(self.inner.clone(), &dataset.inner, &tc, None)
                .map_err(err)?;
        self.inner = trained;
        Ok(history.epoch_loss)
    }
}

#[pyfunction]
fn hamming_loss(predictions: Vec<Vec<u8>>, targets: Vec<Vec<u8>>) -> PyResult<f64> {
    metrics::hamming_loss(
        &to_binary(predictions, "predictions")?,
        &to_binary(targets, "targets")?,
    )
    .map_err(err)
}

#[pyfunction]
fn ranking_loss(scores: Vec<Vec<f64>>, targets: Vec<Vec<u8>>) -> PyResult<f64> {
    metrics::ranking_loss(
        &to_array(scores, "scores")?,
        &to_binary(targets, "targets")?,
    )
    .map_err(err)
}

#[pyfunction]
fn one_error(scores: Vec<Vec<f64>>, targets: Vec<Vec<u8>>) -> PyResult<f64> {
    metrics::one_error(
        &to_array(scores, "scores")?,
        &to_binary(targets, "targets")?,
    )
    .map_err(err)
}

#[pyfunction]
fn top_n_accuracy(scores: Vec<Vec<f64>>, targets: Vec<Vec<u8>>, n_rank: usize) -> PyResult<f64> {
    metrics::top_n_accuracy(
        &to_array(scores, "scores")?,
        &to_binary(targets, "targets")?,
        n_rank,
    )
    .map_err(err)
}

#[pyfunction]
fn mean_average_precision(scores: Vec<Vec<f64>>, targets: Vec<Vec<u8>>) -> PyResult<f64> {
    metrics::mean_average_precision(
        &to_array(scores, "scores")?,
        &to_binary(targets, "targets")?,
    )
    .map_err(err)
}

fn report_dict<'py>(py: Python<'py>, r: &MetricsReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("top1_acc", r.top1_acc)?;
    d.set_item("top3_acc", r.top3_acc)?;
    d.set_item("top5_acc", r.top5_acc)?;
    d.set_item("map", r.map)?;
    d.set_item("hamming_loss", r.hamming_loss)?;
    d.set_item("ranking_loss", r.ranking_loss)?;
    d.set_item("one_error", r.one_error)?;
    d.set_item("n", r.n)?;
    d.set_item("C", r.num_labels)?;
    d.set_item("threshold", r.threshold)?;
    let excluded: BTreeMap<String, usize> = r.excluded_rows.clone();
    d.set_item("excluded_rows", excluded)?;
    d.set_item("skipped_classes", r.skipped_classes.clone())?;
    if let Some(t) = &r.top_n {
        d.set_item("top_n", (t.n, t.acc))?;
    }
    Ok(d)
}

/// Full metrics report of a score matrix.
#[pyfunction]
#[pyo3(signature = (scores, targets, threshold = 0.5, top_n = None))]
fn evaluate<'py>(
    py: Python<'py>,
    scores: Vec<Vec<f64>>,
    targets: Vec<Vec<u8>>,
    threshold: f64,
    top_n: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let r = metrics::evaluate_scores(
        &to_array(scores, "scores")?,
        &to_binary(targets, "targets")?,
        threshold,
        top_n,
    )
    .map_err(err)?;
    report_dict(py, &r)
}

#[pyfunction]
fn pairwise_proximity(u: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
    proximity::pairwise_proximity(&u, &v).map_err(err)
}

#[pyfunction]
fn proximity_matrix(nodes: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let p = proximity::proximity_matrix(&to_array(nodes, "nodes")?).map_err(err)?;
    Ok(to_rows(p.matrix()))
}

#[pyfunction]
fn extract_clusters(proximity: Vec<Vec<f64>>, threshold: f64) -> PyResult<Vec<Vec<usize>>> {
    let p =
        proximity::ProximityMatrix::from_matrix(to_array(proximity, "proximity")?).map_err(err)?;
    Ok(proximity::extract_clusters(&p, threshold)
        .clusters()
        .to_vec())
}

#[pyfunction]
fn cluster_agreement(found: Vec<Vec<usize>>, planted: Vec<Vec<usize>>) -> PyResult<f64> {
    let found = proximity::ClusterSet::new(found, None).map_err(err)?;
    let planted = proximity::ClusterSet::new(planted, None).map_err(err)?;
    proximity::cluster_agreement(&found, &planted).map_err(err)
}

#[pymodule]
fn labelgcn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("LabelGcnError", m.py().get_type::<LabelGcnError>())?;
    m.add_class::<PyVocabulary>()?;
    m.add_class::<PyLabelGraph>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyGcnModel>()?;
    m.add_class::<PyLinearBaseline>()?;
    m.add_function(wrap_pyfunction!(normalize_adjacency, m)?)?;
    m.add_function(wrap_pyfunction!(propagation_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(hamming_loss, m)?)?;
    m.add_function(wrap_pyfunction!(ranking_loss, m)?)?;
    m.add_function(wrap_pyfunction!(one_error, m)?)?;
    m.add_function(wrap_pyfunction!(top_n_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(mean_average_precision, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(pairwise_proximity, m)?)?;
    m.add_function(wrap_pyfunction!(proximity_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(extract_clusters, m)?)?;
    m.add_function(wrap_pyfunction!(cluster_agreement, m)?)?;
    Ok(())
}
