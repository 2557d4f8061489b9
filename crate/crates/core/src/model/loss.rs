use ndarray::Array2;

use crate::{Error, Result};

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_targets(scores_dim: (usize, usize), targets: &Array2<u8>) -> Result<()> {
    if scores_dim != targets.dim() {
        let (r, c) = scores_dim;
        return Err(Error::shape("targets", &[r, c], targets.shape()));
    }
    if targets.is_empty() {
        return Err(Error::Empty("loss over zero entries".into()));
    }
    if targets.iter().any(|&t| t > 1) {
        return Err(Error::InvalidParameter("targets must be 0/1".into()));
    }
    Ok(())
}

/// Mean binary cross entropy of probabilities strictly inside (0, 1).
pub fn bce_loss(scores: &Array2<f64>, targets: &Array2<u8>) -> Result<f64> {
    check_targets(scores.dim(), targets)?;
    if scores.iter().any(|&s| !(s > 0.0 && s < 1.0)) {
        return Err(Error::InvalidParameter(
            "scores must lie strictly inside (0, 1)".into(),
        ));
    }
    let total: f64 = scores
        .iter()
        .zip(targets.iter())
        .map(|(&s, &y)| if y == 1 { -s.ln() } else { -(-s).ln_1p() })
        .sum();
    Ok(total / scores.len() as f64)
}

/// Mean binary cross entropy from logits, `max(l, 0) - l y + ln(1 + e^-|l|)`.
pub fn bce_with_logits(logits: &Array2<f64>, targets: &Array2<u8>) -> Result<f64> {
    check_targets(logits.dim(), targets)?;
    let total: f64 = logits
        .iter()
        .zip(targets.iter())
        .map(|(&l, &y)| l.max(0.0) - l * y as f64 + (-l.abs()).exp().ln_1p())
        .sum();
    Ok(total / logits.len() as f64)
}
