//! Label graphs over a condition vocabulary.
//!
//! A [`LabelGraph`] is a symmetric 0/1 adjacency with an empty diagonal. It
//! can be estimated from training label sets, derived from two annotators'
//! differential groups, or drawn at random as a control. The
//! [`propagation`] submodule turns a graph into the renormalized operator
//! `D^-1/2 (A + I) D^-1/2` and its powers.

mod groups;
pub mod propagation;
mod vocab;

use crate::error::fsx;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

pub use groups::{load_groups, parse_groups, save_groups, DifferentialGroups};
pub use propagation::{
    normalize_adjacency, propagation_matrix, propagation_matrix_with, NormalizedAdjacency,
    PropagationBasis, PropagationMatrix,
};
pub use vocab::LabelVocabulary;

/// Edge threshold used when none is given.
pub const DEFAULT_COOCCURRENCE_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GraphSource {
    Cooccurrence { threshold: f64 },
    Knowledge,
    Random { density: f64, seed: u64 },
}

impl fmt::Display for GraphSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphSource::Cooccurrence { .. } => f.write_str("cooccurrence"),
            GraphSource::Knowledge => f.write_str("knowledge"),
            GraphSource::Random { density, seed } => {
                write!(f, "random(density={density},seed={seed})")
            }
        }
    }
}

/// Undirected, unweighted label graph.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelGraph {
    edges: Array2<u8>,
    source: GraphSource,
}

impl LabelGraph {
    /// Builds a graph from an explicit edge list. Self-loops are rejected.
    pub fn from_edges(size: usize, edges: &[(usize, usize)], source: GraphSource) -> Result<Self> {
        let mut m = Array2::zeros((size, size));
        for &(i, j) in edges {
            if i >= size || j >= size {
                return Err(Error::LabelIndex {
                    index: i.max(j),
                    size,
                });
            }
            if i == j {
                return Err(Error::InvalidParameter(format!("self-loop on node {i}")));
            }
            m[[i, j]] = 1;
            m[[j, i]] = 1;
        }
        Ok(Self { edges: m, source })
    }

    /// Accepts a full 0/1 matrix; it must be symmetric with zero diagonal.
    pub fn from_matrix(edges: Array2<u8>, source: GraphSource) -> Result<Self> {
        let (r, c) = edges.dim();
        if r != c {
            return Err(Error::shape("adjacency", &[r, r], &[r, c]));
        }
        for i in 0..r {
            if edges[[i, i]] != 0 {
                return Err(Error::InvalidParameter(format!("self-loop on node {i}")));
            }
            for j in 0..r {
                let e = edges[[i, j]];
                if e > 1 || e != edges[[j, i]] {
                    return Err(Error::InvalidParameter(format!(
                        "adjacency entry ({i},{j}) is not a symmetric 0/1 value"
                    )));
                }
            }
        }
        Ok(Self { edges, source })
    }

    pub fn size(&self) -> usize {
        self.edges.nrows()
    }

    pub fn source(&self) -> GraphSource {
        self.source
    }

    pub fn edges(&self) -> &Array2<u8> {
        &self.edges
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges[[i, j]] == 1
    }

    pub fn degree(&self, i: usize) -> usize {
        self.edges.row(i).iter().map(|&e| e as usize).sum()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_list().len()
    }

    /// Edges as `(i, j)` with `i < j`, in row-major order.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        let n = self.size();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.edges[[i, j]] == 1 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Graph file text: a `C=.. source=.. t=..` header, then one `i<TAB>j` line per edge.
    pub fn to_file_string(&self) -> String {
        let t = match self.source {
            GraphSource::Cooccurrence { threshold } => threshold.to_string(),
            _ => "n/a".to_string(),
        };
        let mut out = format!("C={} source={} t={}\n", self.size(), self.source, t);
        for (i, j) in self.edge_list() {
            out.push_str(&format!("{i}\t{j}\n"));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fsx::write(path, self.to_file_string())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fsx::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse {
                path: path.to_path_buf(),
                line,
                message,
            },
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: "<graph>".into(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing header line".into()))?;
        let (size, source) = parse_header(header).map_err(|m| parse_err(1, m))?;
        let mut edges = Vec::new();
        for (n, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(parse_err(
                    n + 1,
                    format!("expected `i<TAB>j`, got `{line}`"),
                ));
            };
            let i: usize = a
                .parse()
                .map_err(|_| parse_err(n + 1, format!("bad index `{a}`")))?;
            let j: usize = b
                .parse()
                .map_err(|_| parse_err(n + 1, format!("bad index `{b}`")))?;
            if i >= j || j >= size {
                return Err(parse_err(
                    n + 1,
                    format!("edge ({i},{j}) must satisfy i < j < C"),
                ));
            }
            edges.push((i, j));
        }
        Self::from_edges(size, &edges, source)
    }
}

fn parse_header(header: &str) -> std::result::Result<(usize, GraphSource), String> {
    let mut size = None;
    let mut source = None;
    let mut t = None;
    for field in header.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| format!("header field `{field}` is not key=value"))?;
        match key {
            "C" => {
                size = Some(
                    value
                        .parse::<usize>()
                        .map_err(|_| format!("bad C `{value}`"))?,
                )
            }
            "source" => source = Some(value.to_string()),
            "t" => t = Some(value.to_string()),
            _ => return Err(format!("unknown header key `{key}`")),
        }
    }
    let size = size.ok_or("header missing C")?;
    let source = source.ok_or("header missing source")?;
    let t = t.ok_or("header missing t")?;
    let source = match source.as_str() {
        "cooccurrence" => GraphSource::Cooccurrence {
            threshold: t.parse().map_err(|_| format!("bad threshold `{t}`"))?,
        },
        "knowledge" => GraphSource::Knowledge,
        s => parse_random_source(s).ok_or_else(|| format!("unknown source `{s}`"))?,
    };
    Ok((size, source))
}

fn parse_random_source(s: &str) -> Option<GraphSource> {
    let inner = s.strip_prefix("random(")?.strip_suffix(')')?;
    let (d, sd) = inner.split_once(',')?;
    let density = f64::from_str(d.strip_prefix("density=")?).ok()?;
    let seed = u64::from_str(sd.strip_prefix("seed=")?).ok()?;
    Some(GraphSource::Random { density, seed })
}

fn check_threshold(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidParameter(format!(
            "threshold t={t} outside [0, 1]"
        )));
    }
    Ok(())
}

/// Co-occurrence graph from label names. See [`cooccurrence_from_indices`].
pub fn build_cooccurrence_graph<S: AsRef<str>>(
    samples: &[Vec<S>],
    vocab: &LabelVocabulary,
    t: f64,
) -> Result<LabelGraph> {
    let indexed = samples
        .iter()
        .map(|s| s.iter().map(|l| vocab.require(l.as_ref())).collect())
        .collect::<Result<Vec<Vec<usize>>>>()?;
    cooccurrence_from_indices(&indexed, vocab.len(), t)
}

/// Edge `(i, j)` iff `C(i,j) / (C(i) + C(j)) >= t`, where `C(i)` counts the
/// samples carrying label `i` and `C(i,j)` those carrying both. Labels that
/// never occur get no edges, even at `t = 0`.
pub fn cooccurrence_from_indices(
    samples: &[Vec<usize>],
    size: usize,
    t: f64,
) -> Result<LabelGraph> {
    check_threshold(t)?;
    if samples.is_empty() {
        return Err(Error::Empty(
            "no samples to count co-occurrences over".into(),
        ));
    }
    let mut single = vec![0u64; size];
    let mut pair = Array2::<u64>::zeros((size, size));
    let mut present = Vec::new();
    for labels in samples {
        present.clear();
        for &l in labels {
            if l >= size {
                return Err(Error::LabelIndex { index: l, size });
            }
            present.push(l);
        }
        present.sort_unstable();
        present.dedup();
        for (a, &i) in present.iter().enumerate() {
            single[i] += 1;
            for &j in &present[a + 1..] {
                pair[[i, j]] += 1;
            }
        }
    }
    let mut edges = Array2::zeros((size, size));
    for i in 0..size {
        for j in (i + 1)..size {
            let denom = single[i] + single[j];
            if denom == 0 {
                continue;
            }
            if pair[[i, j]] as f64 / denom as f64 >= t {
                edges[[i, j]] = 1;
                edges[[j, i]] = 1;
            }
        }
    }
    Ok(LabelGraph {
        edges,
        source: GraphSource::Cooccurrence { threshold: t },
    })
}

/// 0/1 matrix with a 1 wherever two distinct labels share a group.
pub fn cogrouping_matrix(
    groups: &DifferentialGroups,
    vocab: &LabelVocabulary,
) -> Result<Array2<u8>> {
    let n = vocab.len();
    let mut m = Array2::zeros((n, n));
    for members in groups.resolve(vocab)? {
        for &i in &members {
            for &j in &members {
                if i != j {
                    m[[i, j]] = 1;
                }
            }
        }
    }
    Ok(m)
}

/// Edge iff both annotators place the two labels in a common group.
pub fn build_knowledge_graph(
    a: &DifferentialGroups,
    b: &DifferentialGroups,
    vocab: &LabelVocabulary,
) -> Result<LabelGraph> {
    let ma = cogrouping_matrix(a, vocab)?;
    let mb = cogrouping_matrix(b, vocab)?;
    Ok(LabelGraph {
        edges: ma * mb,
        source: GraphSource::Knowledge,
    })
}

/// Erdos-Renyi control graph; pairs are visited in row-major `i < j` order.
pub fn random_graph(size: usize, density: f64, seed: u64) -> Result<LabelGraph> {
    if size < 2 {
        return Err(Error::InvalidParameter(format!("graph size {size} < 2")));
    }
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::InvalidParameter(format!(
            "density {density} outside [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Array2::zeros((size, size));
    for i in 0..size {
        for j in (i + 1)..size {
            if rng.random::<f64>() < density {
                edges[[i, j]] = 1;
                edges[[j, i]] = 1;
            }
        }
    }
    Ok(LabelGraph {
        edges,
        source: GraphSource::Random { density, seed },
    })
}
