//! Datasets of precomputed feature vectors with (possibly incomplete) label
//! sets, their line-oriented file format, and the synthetic generator.
//!
//! A dataset file holds one JSON record per line:
//!
//! ```text
//! {"id":"train-00000","features":[0.1,-2.5],"labels":["Acne","Comedo"]}
//! ```

use crate::error::fsx;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::graph::LabelVocabulary;
use crate::proximity::ClusterSet;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub features: Vec<f64>,
    labels: Vec<usize>,
}

impl Sample {
    /// Labels are sorted and deduplicated; at least one is required.
    pub fn new(id: impl Into<String>, features: Vec<f64>, mut labels: Vec<usize>) -> Result<Self> {
        let id = id.into();
        labels.sort_unstable();
        labels.dedup();
        if labels.is_empty() {
            return Err(Error::Empty(format!("sample `{id}` has no labels")));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature {pos} of sample `{id}`")));
        }
        Ok(Self {
            id,
            features,
            labels,
        })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    #[default]
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    vocab: LabelVocabulary,
    samples: Vec<Sample>,
    role: Role,
}

impl Dataset {
    pub fn new(vocab: LabelVocabulary, samples: Vec<Sample>, role: Role) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Empty("dataset has no samples".into()))?;
        let dim = first.features.len();
        for s in &samples {
            if s.features.len() != dim {
                return Err(Error::shape(
                    format!("features of sample `{}`", s.id),
                    &[dim],
                    &[s.features.len()],
                ));
            }
            if let Some(&l) = s.labels.iter().find(|&&l| l >= vocab.len()) {
                return Err(Error::LabelIndex {
                    index: l,
                    size: vocab.len(),
                });
            }
        }
        Ok(Self {
            vocab,
            samples,
            role,
        })
    }

    pub fn vocab(&self) -> &LabelVocabulary {
        &self.vocab
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.samples[0].features.len()
    }

    pub fn num_labels(&self) -> usize {
        self.vocab.len()
    }

    /// n x d feature matrix in sample order.
    pub fn feature_matrix(&self) -> Array2<f64> {
        let d = self.feature_dim();
        Array2::from_shape_fn((self.len(), d), |(i, j)| self.samples[i].features[j])
    }

    pub fn label_sets(&self) -> Vec<Vec<usize>> {
        self.samples.iter().map(|s| s.labels.clone()).collect()
    }
}

/// n x C indicator matrix of the dataset's label sets.
pub fn label_matrix(dataset: &Dataset) -> Array2<u8> {
    let mut m = Array2::zeros((dataset.len(), dataset.num_labels()));
    for (i, s) in dataset.samples.iter().enumerate() {
        for &l in &s.labels {
            m[[i, l]] = 1;
        }
    }
    m
}

#[derive(Serialize, Deserialize)]
struct Record<'a> {
    id: std::borrow::Cow<'a, str>,
    features: std::borrow::Cow<'a, [f64]>,
    labels: Vec<std::borrow::Cow<'a, str>>,
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(fsx::create(path)?);
    for s in &dataset.samples {
        let record = Record {
            id: s.id.as_str().into(),
            features: s.features.as_slice().into(),
            labels: s
                .labels
                .iter()
                .map(|&l| dataset.vocab.labels()[l].as_str().into())
                .collect(),
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>, vocab: &LabelVocabulary) -> Result<Dataset> {
    let path = path.as_ref();
    let reader = BufReader::new(fsx::open(path)?);
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut samples = Vec::new();
    let mut dim = None;
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record =
            serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
        let labels = record
            .labels
            .iter()
            .map(|l| vocab.require(l))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| parse_err(lineno, e.to_string()))?;
        let features = record.features.into_owned();
        match dim {
            None => dim = Some(features.len()),
            Some(d) if d != features.len() => {
                return Err(parse_err(
                    lineno,
                    format!(
                        "feature length {} differs from {d} on earlier lines",
                        features.len()
                    ),
                ))
            }
            _ => {}
        }
        let sample = Sample::new(record.id.into_owned(), features, labels)
            .map_err(|e| parse_err(lineno, e.to_string()))?;
        samples.push(sample);
    }
    if samples.is_empty() {
        return Err(Error::Empty(format!(
            "{} contains no samples",
            path.display()
        )));
    }
    Dataset::new(vocab.clone(), samples, Role::Train)
}

/// How many of a sample's complete labels survive annotation.
///
/// Probabilities for keeping 1, 2 and 3 labels; whatever is left over keeps
/// the full set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskDistribution {
    pub single: f64,
    pub double: f64,
    pub triple: f64,
}

impl MaskDistribution {
    pub const TRAIN: Self = Self {
        single: 0.817,
        double: 0.155,
        triple: 0.028,
    };
    pub const TEST: Self = Self {
        single: 0.460,
        double: 0.381,
        triple: 0.127,
    };
    pub const KEEP_ALL: Self = Self {
        single: 0.0,
        double: 0.0,
        triple: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        let parts = [self.single, self.double, self.triple];
        if parts.iter().any(|p| !(0.0..=1.0).contains(p)) || parts.iter().sum::<f64>() > 1.0 + 1e-9
        {
            return Err(Error::InvalidParameter(format!(
                "mask distribution {parts:?} must be probabilities summing to at most 1"
            )));
        }
        Ok(())
    }

    pub fn keep_all(&self) -> f64 {
        (1.0 - self.single - self.double - self.triple).max(0.0)
    }

    /// Number of labels to keep, or `None` for all of them.
    fn draw(&self, rng: &mut impl Rng) -> Option<usize> {
        let u: f64 = rng.random();
        if u < self.single {
            Some(1)
        } else if u < self.single + self.double {
            Some(2)
        } else if u < self.single + self.double + self.triple {
            Some(3)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_labels: usize,
    pub n_clusters: usize,
    pub feature_dim: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Standard deviation of the isotropic feature noise.
    pub noise: f64,
    /// Probability of a complete label set of size 1, 2, ... (capped at the cluster size).
    pub complete_size: Vec<f64>,
    pub train_mask: MaskDistribution,
    pub test_mask: MaskDistribution,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_labels: 40,
            n_clusters: 8,
            feature_dim: 32,
            n_train: 5000,
            n_test: 1000,
            noise: 1.0,
            complete_size: vec![0.0, 0.3, 0.4, 0.3],
            train_mask: MaskDistribution::TRAIN,
            test_mask: MaskDistribution::TEST,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.num_labels < 2 {
            return bad(format!("num_labels {} < 2", self.num_labels));
        }
        if self.n_clusters == 0 || self.n_clusters > self.num_labels {
            return bad(format!(
                "n_clusters {} must be in 1..={}",
                self.n_clusters, self.num_labels
            ));
        }
        if self.feature_dim == 0 || self.n_train == 0 || self.n_test == 0 {
            return bad("feature_dim, n_train and n_test must be positive".into());
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!("noise {} must be finite and >= 0", self.noise));
        }
        let total: f64 = self.complete_size.iter().sum();
        if self.complete_size.iter().any(|p| !(0.0..=1.0).contains(p)) || (total - 1.0).abs() > 1e-9
        {
            return bad(format!(
                "complete_size {:?} must be a probability vector",
                self.complete_size
            ));
        }
        self.train_mask.validate()?;
        self.test_mask.validate()
    }
}

/// Output of [`generate_synthetic`].
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub train: Dataset,
    pub test: Dataset,
    /// The planted differential groups.
    pub true_groups: ClusterSet,
    /// Unmasked label sets behind `train`, in sample order.
    pub train_complete: Vec<Vec<usize>>,
    pub test_complete: Vec<Vec<usize>>,
    /// One prototype feature vector per planted group.
    pub prototypes: Array2<f64>,
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SyntheticData> {
    let vocab = LabelVocabulary::synthetic(cfg.num_labels)?;
    generate_synthetic_with_vocab(cfg, &vocab)
}

/// Planted-cluster generator with single-reader style label truncation.
///
/// Labels are shuffled and split into `n_clusters` groups of near-equal
/// size. Each sample picks a group uniformly, takes that group's prototype
/// plus N(0, noise^2) noise as features, and draws a complete label set from
/// inside the group. The recorded labels are a uniformly chosen subset whose
/// size follows the split's mask distribution.
pub fn generate_synthetic_with_vocab(
    cfg: &SynthConfig,
    vocab: &LabelVocabulary,
) -> Result<SyntheticData> {
    cfg.validate()?;
    if vocab.len() != cfg.num_labels {
        return Err(Error::shape(
            "synthetic vocabulary",
            &[cfg.num_labels],
            &[vocab.len()],
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut order: Vec<usize> = (0..cfg.num_labels).collect();
    order.shuffle(&mut rng);
    let mut clusters = vec![Vec::new(); cfg.n_clusters];
    for (k, &label) in order.iter().enumerate() {
        clusters[k % cfg.n_clusters].push(label);
    }
    for c in &mut clusters {
        c.sort_unstable();
    }
    clusters.sort_by_key(|c| c[0]);

    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let prototypes =
        Array2::from_shape_fn((cfg.n_clusters, cfg.feature_dim), |_| unit.sample(&mut rng));

    let draw_split = |n: usize, mask: &MaskDistribution, prefix: &str, rng: &mut ChaCha8Rng| {
        let mut samples = Vec::with_capacity(n);
        let mut complete_sets = Vec::with_capacity(n);
        for i in 0..n {
            let k = rng.random_range(0..cfg.n_clusters);
            let cluster = &clusters[k];
            let features: Vec<f64> = prototypes
                .row(k)
                .iter()
                .map(|&p| p + cfg.noise * unit.sample(rng))
                .collect();
            let size = draw_size(&cfg.complete_size, rng).min(cluster.len());
            let mut complete: Vec<usize> = cluster.choose_multiple(rng, size).copied().collect();
            let keep = mask.draw(rng).map_or(size, |m| m.min(size));
            let mut observed: Vec<usize> = complete.choose_multiple(rng, keep).copied().collect();
            complete.sort_unstable();
            observed.sort_unstable();
            samples.push(Sample::new(format!("{prefix}-{i:05}"), features, observed)?);
            complete_sets.push(complete);
        }
        Ok::<_, Error>((samples, complete_sets))
    };
    let (train, train_complete) = draw_split(cfg.n_train, &cfg.train_mask, "train", &mut rng)?;
    let (test, test_complete) = draw_split(cfg.n_test, &cfg.test_mask, "test", &mut rng)?;

    let groups = clusters;
    Ok(SyntheticData {
        train: Dataset::new(vocab.clone(), train, Role::Train)?,
        test: Dataset::new(vocab.clone(), test, Role::Test)?,
        true_groups: ClusterSet::new(groups, None)?,
        train_complete,
        test_complete,
        prototypes,
    })
}

fn draw_size(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i + 1;
        }
    }
    // rounding slack in the cumulative sum
    probs.iter().rposition(|&p| p > 0.0).map_or(1, |i| i + 1)
}
