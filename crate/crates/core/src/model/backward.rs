use ndarray::{Array2, Axis};

use super::{gcn_forward, logistic, Adapter, GcnModel};
use crate::graph::PropagationMatrix;
use crate::{Error, Result};

/// Gradients shaped like the model parameters they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub embeddings: Array2<f64>,
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
    pub adapter: Option<Adapter>,
}

impl GradientSet {
    /// `(name, values)` for every gradient array, in parameter order.
    pub fn named(&self) -> Vec<(&'static str, Vec<f64>)> {
        let mut out = vec![
            ("embeddings", self.embeddings.iter().copied().collect()),
            ("w1", self.w1.iter().copied().collect()),
            ("w2", self.w2.iter().copied().collect()),
        ];
        if let Some(a) = &self.adapter {
            out.push(("adapter.weight", a.weight.iter().copied().collect()));
            out.push(("adapter.bias", a.bias.to_vec()));
        }
        out
    }
}

pub(crate) fn ensure_finite<'a>(
    name: &str,
    values: impl IntoIterator<Item = &'a f64>,
) -> Result<()> {
    if values.into_iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(name.to_string()));
    }
    Ok(())
}

/// Loss and exact gradients of the mean cross entropy over a batch.
///
/// With `G = (sigmoid(logits) - Y) / (n C)` the chain runs
/// `dW~ = G^T X'`, `dW2 = (P2 H1)^T dW~`, `dH1 = P2^T dW~ W2^T`,
/// through the rectifier, then `dW1 = (P1 Z)^T dPre` and
/// `dZ = P1^T dPre W1^T`. For the adapter `X' = X A^T + b`:
/// `dA = (G W~)^T X`, `db = column sums of G W~`.
pub fn backward(
    model: &GcnModel,
    p1: &PropagationMatrix,
    p2: &PropagationMatrix,
    features: &Array2<f64>,
    targets: &Array2<u8>,
) -> Result<(f64, GradientSet)> {
    let (classifier, cache) = gcn_forward(model, p1, p2)?;
    let n = features.nrows();
    let c = model.num_labels();
    if targets.dim() != (n, c) {
        return Err(Error::shape("targets", &[n, c], targets.shape()));
    }
    if features.ncols() != model.config.d_feat {
        return Err(Error::shape(
            "features",
            &[n, model.config.d_feat],
            features.shape(),
        ));
    }
    ensure_finite("features", features.iter())?;
    let adapted = model.adapt(features);
    let logits = adapted.dot(&classifier.t());
    ensure_finite("logits", logits.iter())?;
    let loss = super::bce_with_logits(&logits, targets)?;
    ensure_finite("loss", [loss].iter())?;

    let scale = 1.0 / (n * c) as f64;
    let mut g = logits.mapv(logistic);
    g.zip_mut_with(targets, |s, &y| *s = (*s - y as f64) * scale);

    let d_classifier = g.t().dot(&adapted);
    let d_w2 = cache.propagated_hidden.t().dot(&d_classifier);
    let d_hidden = p2.matrix().t().dot(&d_classifier).dot(&model.w2.t());
    let slope = model.config.slope;
    let mut d_pre = d_hidden;
    d_pre.zip_mut_with(&cache.pre_activation, |d, &x| {
        *d *= leaky_relu_grad(x, slope);
    });
    let d_w1 = cache.propagated_embeddings.t().dot(&d_pre);
    let d_embeddings = p1.matrix().t().dot(&d_pre).dot(&model.w1.t());

    let d_adapter = match &model.adapter {
        Some(_) => {
            let d_adapted = g.dot(&classifier);
            Some(Adapter {
                weight: d_adapted.t().dot(features),
                bias: d_adapted.sum_axis(Axis(0)),
            })
        }
        None => None,
    };

    let grads = GradientSet {
        embeddings: d_embeddings,
        w1: d_w1,
        w2: d_w2,
        adapter: d_adapter,
    };
    for (name, values) in grads.named() {
        ensure_finite(name, values.iter())?;
    }
    Ok((loss, grads))
}

fn leaky_relu_grad(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}
