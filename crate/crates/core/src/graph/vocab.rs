use crate::error::fsx;
use std::collections::HashMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Ordered, duplicate-free list of condition labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVocabulary {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelVocabulary {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "vocabulary needs at least 2 labels, got {}",
                labels.len()
            )));
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, label) in labels.iter().enumerate() {
            if label.is_empty() {
                return Err(Error::InvalidParameter(format!(
                    "empty label at position {i}"
                )));
            }
            if index.insert(label.clone(), i).is_some() {
                return Err(Error::InvalidParameter(format!(
                    "duplicate label `{label}`"
                )));
            }
        }
        Ok(Self { labels, index })
    }

    /// `label_000`, `label_001`, ... for experiments without a real label set.
    pub fn synthetic(size: usize) -> Result<Self> {
        Self::new((0..size).map(|i| format!("label_{i:03}")))
    }

    /// One label per line; blank lines are ignored, surrounding whitespace trimmed.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fsx::read_to_string(path.as_ref())?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::new(text.lines().map(str::trim).filter(|l| !l.is_empty()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = self.labels.join("\n");
        out.push('\n');
        fsx::write(path, out)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn require(&self, label: &str) -> Result<usize> {
        self.position(label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    /// Hex SHA-256 over the newline-joined labels; pins checkpoints to a vocabulary.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for label in &self.labels {
            hasher.update(label.as_bytes());
            hasher.update(b"\n");
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
