use ndarray::{Array1, Array2, Axis};
use rand::distr::Uniform;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backward::ensure_finite;
use super::{bce_with_logits, logistic};
use crate::metrics::Scorer;
use crate::{Error, Result};

/// Plain linear head `logistic(W x + b)` with one row per label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearBaseline {
    /// C x d_feat.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

pub fn init_linear_baseline(num_labels: usize, d_feat: usize, seed: u64) -> Result<LinearBaseline> {
    if num_labels < 2 || d_feat == 0 {
        return Err(Error::InvalidParameter(format!(
            "linear baseline needs C >= 2 and d_feat >= 1, got {num_labels} x {d_feat}"
        )));
    }
    let bound = (d_feat as f64).powf(-0.5);
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(LinearBaseline {
        weight: Array2::from_shape_fn((num_labels, d_feat), |_| rng.sample(dist)),
        bias: Array1::zeros(num_labels),
    })
}

impl LinearBaseline {
    pub fn num_labels(&self) -> usize {
        self.weight.nrows()
    }

    pub fn logits(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        if features.ncols() != self.weight.ncols() {
            return Err(Error::shape(
                "features",
                &[self.weight.ncols()],
                &[features.ncols()],
            ));
        }
        ensure_finite("features", features.iter())?;
        Ok(features.dot(&self.weight.t()) + &self.bias)
    }
}

impl Scorer for LinearBaseline {
    fn scores(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.logits(features)?.mapv(logistic))
    }
}

/// Loss and gradients `(dW, db)` of the mean cross entropy.
pub fn linear_backward(
    model: &LinearBaseline,
    features: &Array2<f64>,
    targets: &Array2<u8>,
) -> Result<(f64, LinearBaseline)> {
    let logits = model.logits(features)?;
    ensure_finite("logits", logits.iter())?;
    let loss = bce_with_logits(&logits, targets)?;
    let scale = 1.0 / logits.len() as f64;
    let mut g = logits.mapv(logistic);
    g.zip_mut_with(targets, |s, &y| *s = (*s - y as f64) * scale);
    let grad = LinearBaseline {
        weight: g.t().dot(features),
        bias: g.sum_axis(Axis(0)),
    };
    ensure_finite("weight", grad.weight.iter())?;
    ensure_finite("bias", grad.bias.iter())?;
    Ok((loss, grad))
}
