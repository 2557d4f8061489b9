//! Two-layer GCN classifier head over precomputed image features.
//!
//! Label embeddings `Z` (C x d0) pass through two graph convolutions,
//!
//! ```text
//! H1 = leaky_relu(P1 . Z . W1)        C x d1
//! W~ = P2 . H1 . W2                   C x d_feat
//! ```
//!
//! and each row of `W~` scores one label against the (optionally adapted)
//! feature vector: `score = logistic(W~ . adapt(x))`. `P1`, `P2` are
//! propagation matrices of the configured orders.

mod backward;
mod checkpoint;
mod linear;
mod loss;
mod train;

use ndarray::{Array1, Array2, Axis};
use rand::distr::Uniform;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::fsx;
use std::path::Path;

use crate::graph::{
    normalize_adjacency, propagation_matrix_with, LabelGraph, PropagationBasis, PropagationMatrix,
};
use crate::metrics::Scorer;
use crate::{Error, Result};

pub use backward::{backward, GradientSet};
pub use checkpoint::Checkpoint;
pub use linear::{init_linear_baseline, linear_backward, LinearBaseline};
pub use loss::{bce_loss, bce_with_logits, logistic};
pub use train::{
    fit_linear_baseline, train, train_linear_baseline, train_with_validation, LrSchedule,
    TrainConfig, TrainHistory,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnConfig {
    /// Label embedding width (GCN-0).
    pub d0: usize,
    /// Hidden width (GCN-1).
    pub d1: usize,
    /// Feature width; also the width of each classifier row (GCN-2).
    pub d_feat: usize,
    /// Propagation orders of the two graph-convolution layers.
    pub orders: (usize, usize),
    /// Negative-side slope of the leaky rectifier between the layers.
    pub slope: f64,
    pub use_feature_adapter: bool,
    #[serde(default)]
    pub basis: PropagationBasis,
}

impl Default for GcnConfig {
    fn default() -> Self {
        Self {
            d0: 700,
            d1: 1024,
            d_feat: 2048,
            orders: (1, 2),
            slope: 0.2,
            use_feature_adapter: true,
            basis: PropagationBasis::Power,
        }
    }
}

impl GcnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d0 == 0 || self.d1 == 0 || self.d_feat == 0 {
            return Err(Error::InvalidParameter(
                "GCN dimensions must be >= 1".into(),
            ));
        }
        if self.orders.0 == 0 || self.orders.1 == 0 {
            return Err(Error::InvalidParameter(
                "propagation orders must be >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.slope) {
            return Err(Error::InvalidParameter(format!(
                "slope {} outside [0, 1)",
                self.slope
            )));
        }
        Ok(())
    }
}

/// Trainable affine map `x -> A x + b` applied to features before scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adapter {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Adapter {
    /// Applies the map to every row of an n x d matrix.
    pub fn apply(&self, features: &Array2<f64>) -> Array2<f64> {
        features.dot(&self.weight.t()) + &self.bias
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnModel {
    pub config: GcnConfig,
    /// C x d0 label embeddings.
    pub embeddings: Array2<f64>,
    /// d0 x d1.
    pub w1: Array2<f64>,
    /// d1 x d_feat.
    pub w2: Array2<f64>,
    pub adapter: Option<Adapter>,
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> Array2<f64> {
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    Array2::from_shape_fn((rows, cols), |_| rng.sample(dist))
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Seeded initialization.
///
/// Weights are uniform on `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, the adapter
/// bias starts at zero, and embeddings not supplied by the caller are
/// uniform on `[-1, 1]`. Every parameter draws from its own ChaCha stream,
/// so supplying embeddings does not change the other weights.
pub fn init_model(
    config: &GcnConfig,
    num_labels: usize,
    seed: u64,
    embeddings: Option<Array2<f64>>,
) -> Result<GcnModel> {
    config.validate()?;
    if num_labels < 2 {
        return Err(Error::InvalidParameter(format!(
            "num_labels {num_labels} < 2"
        )));
    }
    let embeddings = match embeddings {
        Some(z) => {
            if z.dim() != (num_labels, config.d0) {
                return Err(Error::shape(
                    "embeddings",
                    &[num_labels, config.d0],
                    z.shape(),
                ));
            }
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("embeddings".into()));
            }
            z
        }
        None => uniform_matrix(&mut stream(seed, 0), num_labels, config.d0, 1.0),
    };
    let w1 = uniform_matrix(
        &mut stream(seed, 1),
        config.d0,
        config.d1,
        (config.d0 as f64).powf(-0.5),
    );
    let w2 = uniform_matrix(
        &mut stream(seed, 2),
        config.d1,
        config.d_feat,
        (config.d1 as f64).powf(-0.5),
    );
    let adapter = config.use_feature_adapter.then(|| Adapter {
        weight: uniform_matrix(
            &mut stream(seed, 3),
            config.d_feat,
            config.d_feat,
            (config.d_feat as f64).powf(-0.5),
        ),
        bias: Array1::zeros(config.d_feat),
    });
    Ok(GcnModel {
        config: config.clone(),
        embeddings,
        w1,
        w2,
        adapter,
    })
}

impl GcnModel {
    pub fn num_labels(&self) -> usize {
        self.embeddings.nrows()
    }

    pub fn parameter_count(&self) -> usize {
        let adapter = self
            .adapter
            .as_ref()
            .map_or(0, |a| a.weight.len() + a.bias.len());
        self.embeddings.len() + self.w1.len() + self.w2.len() + adapter
    }

    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let c = &self.config;
        let check = |name: &str, m: &Array2<f64>, rows: usize, cols: usize| {
            if m.dim() != (rows, cols) {
                return Err(Error::shape(name, &[rows, cols], m.shape()));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(name.to_string()));
            }
            Ok(())
        };
        check("embeddings", &self.embeddings, self.num_labels(), c.d0)?;
        check("w1", &self.w1, c.d0, c.d1)?;
        check("w2", &self.w2, c.d1, c.d_feat)?;
        match (&self.adapter, c.use_feature_adapter) {
            (Some(a), true) => {
                check("adapter.weight", &a.weight, c.d_feat, c.d_feat)?;
                if a.bias.len() != c.d_feat {
                    return Err(Error::shape("adapter.bias", &[c.d_feat], &[a.bias.len()]));
                }
                if a.bias.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("adapter.bias".into()));
                }
            }
            (None, false) => {}
            _ => {
                return Err(Error::InvalidParameter(
                    "adapter presence disagrees with use_feature_adapter".into(),
                ))
            }
        }
        Ok(())
    }

    /// The two layers' propagation matrices for `graph`, at the configured orders and basis.
    pub fn propagation(
        &self,
        graph: &LabelGraph,
    ) -> Result<(PropagationMatrix, PropagationMatrix)> {
        if graph.size() != self.num_labels() {
            return Err(Error::shape("graph", &[self.num_labels()], &[graph.size()]));
        }
        let adj = normalize_adjacency(graph);
        let (k1, k2) = self.config.orders;
        Ok((
            propagation_matrix_with(&adj, k1, self.config.basis)?,
            propagation_matrix_with(&adj, k2, self.config.basis)?,
        ))
    }

    /// Features as seen by the classifier rows.
    pub fn adapt(&self, features: &Array2<f64>) -> Array2<f64> {
        match &self.adapter {
            Some(a) => a.apply(features),
            None => features.clone(),
        }
    }
}

/// Reads a C x d0 embedding table: one tab-separated row per label, in vocabulary order.
pub fn load_embeddings(
    path: impl AsRef<Path>,
    num_labels: usize,
    d0: usize,
) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let text = fsx::read_to_string(path)?;
    let mut values = Vec::with_capacity(num_labels * d0);
    let mut rows = 0;
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let row = line
            .split('\t')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| parse_err(format!("bad number `{v}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        if row.len() != d0 {
            return Err(parse_err(format!(
                "expected {d0} columns, got {}",
                row.len()
            )));
        }
        values.extend(row);
        rows += 1;
    }
    if rows != num_labels {
        return Err(Error::shape("embedding rows", &[num_labels], &[rows]));
    }
    Ok(Array2::from_shape_vec((rows, d0), values).expect("row-major table"))
}

pub fn save_embeddings(embeddings: &Array2<f64>, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for row in embeddings.rows() {
        let cells: Vec<String> = row.iter().map(f64::to_string).collect();
        out.push_str(&cells.join("\t"));
        out.push('\n');
    }
    fsx::write(path, out)?;
    Ok(())
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// P1 . Z
    pub propagated_embeddings: Array2<f64>,
    /// P1 . Z . W1, before the rectifier.
    pub pre_activation: Array2<f64>,
    /// GCN-1 node features.
    pub hidden: Array2<f64>,
    /// P2 . H1
    pub propagated_hidden: Array2<f64>,
}

pub(crate) fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

fn check_propagation(
    model: &GcnModel,
    p: &PropagationMatrix,
    order: usize,
    name: &str,
) -> Result<()> {
    if p.size() != model.num_labels() {
        return Err(Error::shape(name, &[model.num_labels()], &[p.size()]));
    }
    if p.order() != order {
        return Err(Error::InvalidParameter(format!(
            "{name} has order {} but the layer expects {order}",
            p.order()
        )));
    }
    Ok(())
}

/// Computes the C x d_feat classifier matrix `W~` and the cached activations.
pub fn gcn_forward(
    model: &GcnModel,
    p1: &PropagationMatrix,
    p2: &PropagationMatrix,
) -> Result<(Array2<f64>, ForwardCache)> {
    model.validate()?;
    check_propagation(model, p1, model.config.orders.0, "P1")?;
    check_propagation(model, p2, model.config.orders.1, "P2")?;
    let propagated_embeddings = p1.matrix().dot(&model.embeddings);
    let pre_activation = propagated_embeddings.dot(&model.w1);
    let slope = model.config.slope;
    let hidden = pre_activation.mapv(|x| leaky_relu(x, slope));
    let propagated_hidden = p2.matrix().dot(&hidden);
    let classifier = propagated_hidden.dot(&model.w2);
    Ok((
        classifier,
        ForwardCache {
            propagated_embeddings,
            pre_activation,
            hidden,
            propagated_hidden,
        },
    ))
}

/// Scores of one feature vector: `logistic(W~ . adapt(x))`.
pub fn predict(
    classifier: &Array2<f64>,
    x: &[f64],
    adapter: Option<&Adapter>,
) -> Result<Array1<f64>> {
    let x = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row vector");
    Ok(predict_batch(classifier, &x, adapter)?.remove_axis(Axis(0)))
}

/// Row-wise [`predict`] over an n x d_feat matrix.
pub fn predict_batch(
    classifier: &Array2<f64>,
    features: &Array2<f64>,
    adapter: Option<&Adapter>,
) -> Result<Array2<f64>> {
    Ok(logits_batch(classifier, features, adapter)?.mapv(logistic))
}

pub(crate) fn logits_batch(
    classifier: &Array2<f64>,
    features: &Array2<f64>,
    adapter: Option<&Adapter>,
) -> Result<Array2<f64>> {
    if features.ncols() != classifier.ncols() {
        return Err(Error::shape(
            "features",
            &[classifier.ncols()],
            &[features.ncols()],
        ));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("features".into()));
    }
    let adapted = match adapter {
        Some(a) => a.apply(features),
        None => features.clone(),
    };
    Ok(adapted.dot(&classifier.t()))
}

/// A GCN head bound to the propagation matrices it was trained with.
pub struct GcnScorer<'a> {
    pub model: &'a GcnModel,
    pub p1: &'a PropagationMatrix,
    pub p2: &'a PropagationMatrix,
}

impl Scorer for GcnScorer<'_> {
    fn scores(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        let (classifier, _) = gcn_forward(self.model, self.p1, self.p2)?;
        predict_batch(&classifier, features, self.model.adapter.as_ref())
    }
}
