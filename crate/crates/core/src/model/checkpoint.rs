use crate::error::fsx;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GcnModel, LinearBaseline, TrainConfig};
use crate::graph::LabelVocabulary;
use crate::{Error, Result};

/// Self-describing JSON checkpoint. Floats are written in shortest
/// round-trip form, so loading reproduces every parameter bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
#[allow(clippy::large_enum_variant)]
pub enum Checkpoint {
    Gcn {
        vocab_fingerprint: String,
        train_config: Option<TrainConfig>,
        model: GcnModel,
    },
    Linear {
        vocab_fingerprint: String,
        train_config: Option<TrainConfig>,
        model: LinearBaseline,
    },
}

impl Checkpoint {
    pub fn vocab_fingerprint(&self) -> &str {
        match self {
            Checkpoint::Gcn {
                vocab_fingerprint, ..
            }
            | Checkpoint::Linear {
                vocab_fingerprint, ..
            } => vocab_fingerprint,
        }
    }

    pub fn check_vocab(&self, vocab: &LabelVocabulary) -> Result<()> {
        if self.vocab_fingerprint() != vocab.fingerprint() {
            return Err(Error::Format(
                "checkpoint was trained against a different vocabulary".into(),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Self = serde_json::from_str(text)?;
        match &ckpt {
            Checkpoint::Gcn { model, .. } => model.validate()?,
            Checkpoint::Linear { model, .. } => {
                if model.bias.len() != model.weight.nrows() {
                    return Err(Error::shape(
                        "bias",
                        &[model.weight.nrows()],
                        &[model.bias.len()],
                    ));
                }
            }
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fsx::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fsx::read_to_string(path)?)
    }
}
