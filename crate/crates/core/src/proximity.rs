//! Node proximity between label embeddings and threshold clustering.
//!
//! Proximity is the centered cosine (Pearson correlation across embedding
//! coordinates) between two label vectors. Comparing the proximity of the
//! input embeddings with that of the GCN output rows shows which label
//! dependencies training introduced.

use crate::error::fsx;
use std::path::Path;

use ndarray::{Array2, ArrayView1};

use crate::graph::LabelVocabulary;
use crate::{Error, Result};

/// Centered cosine `((u - mean u) . (v - mean v)) / (|u - mean u| |v - mean v|)`.
pub fn pairwise_proximity(u: &[f64], v: &[f64]) -> Result<f64> {
    proximity_view(ArrayView1::from(u), ArrayView1::from(v), "u", "v")
}

fn centered(x: ArrayView1<f64>) -> ndarray::Array1<f64> {
    let mean = x.sum() / x.len() as f64;
    x.mapv(|e| e - mean)
}

fn proximity_view(u: ArrayView1<f64>, v: ArrayView1<f64>, un: &str, vn: &str) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::shape("proximity vectors", &[u.len()], &[v.len()]));
    }
    if u.len() < 2 {
        return Err(Error::InvalidParameter(
            "proximity needs vectors of length >= 2".into(),
        ));
    }
    let cu = centered(u);
    let cv = centered(v);
    let nu = cu.dot(&cu);
    let nv = cv.dot(&cv);
    if nu == 0.0 {
        return Err(Error::ZeroCenteredNorm(un.to_string()));
    }
    if nv == 0.0 {
        return Err(Error::ZeroCenteredNorm(vn.to_string()));
    }
    Ok((cu.dot(&cv) / (nu * nv).sqrt()).clamp(-1.0, 1.0))
}

/// Symmetric C x C matrix of pairwise proximities with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct ProximityMatrix {
    matrix: Array2<f64>,
}

impl ProximityMatrix {
    pub fn from_matrix(matrix: Array2<f64>) -> Result<Self> {
        let (r, c) = matrix.dim();
        if r != c {
            return Err(Error::shape("proximity matrix", &[r, r], &[r, c]));
        }
        Ok(Self { matrix })
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }
}

pub fn proximity_matrix(nodes: &Array2<f64>) -> Result<ProximityMatrix> {
    proximity_rows(nodes, |i| format!("row {i}"))
}

/// Like [`proximity_matrix`], naming the offending label on a constant row.
pub fn proximity_matrix_labeled(
    nodes: &Array2<f64>,
    vocab: &LabelVocabulary,
) -> Result<ProximityMatrix> {
    if nodes.nrows() != vocab.len() {
        return Err(Error::shape(
            "proximity nodes",
            &[vocab.len()],
            &[nodes.nrows()],
        ));
    }
    proximity_rows(nodes, |i| format!("label `{}`", vocab.labels()[i]))
}

fn proximity_rows(nodes: &Array2<f64>, name: impl Fn(usize) -> String) -> Result<ProximityMatrix> {
    let n = nodes.nrows();
    let mut m = Array2::eye(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let p = proximity_view(nodes.row(i), nodes.row(j), &name(i), &name(j))?;
            m[[i, j]] = p;
            m[[j, i]] = p;
        }
    }
    if n == 1 {
        proximity_view(nodes.row(0), nodes.row(0), &name(0), &name(0))?;
    }
    Ok(ProximityMatrix { matrix: m })
}

/// Elementwise `after - before`.
pub fn proximity_delta(before: &ProximityMatrix, after: &ProximityMatrix) -> Result<Array2<f64>> {
    if before.size() != after.size() {
        return Err(Error::shape(
            "proximity delta",
            &[before.size()],
            &[after.size()],
        ));
    }
    Ok(&after.matrix - &before.matrix)
}

/// A partition of label indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSet {
    clusters: Vec<Vec<usize>>,
    threshold: Option<f64>,
}

impl ClusterSet {
    /// Members are sorted and clusters ordered by smallest member. The
    /// clusters must partition `0..n` for some `n`.
    pub fn new(mut clusters: Vec<Vec<usize>>, threshold: Option<f64>) -> Result<Self> {
        for c in &mut clusters {
            c.sort_unstable();
        }
        if clusters.iter().any(Vec::is_empty) {
            return Err(Error::InvalidParameter("empty cluster".into()));
        }
        clusters.sort_by_key(|c| c[0]);
        let n: usize = clusters.iter().map(Vec::len).sum();
        let mut seen = vec![false; n];
        for &m in clusters.iter().flatten() {
            if m >= n || seen[m] {
                return Err(Error::InvalidParameter(format!(
                    "clusters do not partition 0..{n} (member {m})"
                )));
            }
            seen[m] = true;
        }
        Ok(Self {
            clusters,
            threshold,
        })
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    pub fn threshold(&self) -> Option<f64> {
        self.threshold
    }

    pub fn num_items(&self) -> usize {
        self.clusters.iter().map(Vec::len).sum()
    }

    pub fn cluster_of(&self, item: usize) -> Option<usize> {
        self.clusters.iter().position(|c| c.contains(&item))
    }

    /// Cluster index of every item.
    pub fn assignment(&self) -> Vec<usize> {
        let mut out = vec![0; self.num_items()];
        for (k, c) in self.clusters.iter().enumerate() {
            for &m in c {
                out[m] = k;
            }
        }
        out
    }

    /// `cluster_id<TAB>label;label;...` lines.
    pub fn to_file_string(&self, vocab: &LabelVocabulary) -> String {
        let mut out = String::new();
        for (k, c) in self.clusters.iter().enumerate() {
            let names: Vec<&str> = c.iter().map(|&i| vocab.labels()[i].as_str()).collect();
            out.push_str(&format!("{k}\t{}\n", names.join(";")));
        }
        out
    }
}

/// Connected components of the graph joining `i != j` whenever `p[i][j] >= threshold`.
pub fn extract_clusters(p: &ProximityMatrix, threshold: f64) -> ClusterSet {
    let n = p.size();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if p.matrix[[i, j]] >= threshold {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut by_root: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let r = find(&mut parent, i);
        by_root[r].push(i);
    }
    let clusters = by_root.into_iter().filter(|c| !c.is_empty()).collect();
    ClusterSet::new(clusters, Some(threshold)).expect("components partition the nodes")
}

/// Fraction of same-group pairs placed together minus fraction of
/// cross-group pairs placed together. 1 means exact recovery.
pub fn cluster_agreement(found: &ClusterSet, planted: &ClusterSet) -> Result<f64> {
    let n = planted.num_items();
    if found.num_items() != n {
        return Err(Error::shape(
            "cluster agreement",
            &[n],
            &[found.num_items()],
        ));
    }
    let fa = found.assignment();
    let pa = planted.assignment();
    let (mut intra, mut intra_hit, mut inter, mut inter_hit) = (0usize, 0usize, 0usize, 0usize);
    for i in 0..n {
        for j in (i + 1)..n {
            let together = fa[i] == fa[j];
            if pa[i] == pa[j] {
                intra += 1;
                intra_hit += together as usize;
            } else {
                inter += 1;
                inter_hit += together as usize;
            }
        }
    }
    let frac = |hit: usize, total: usize| {
        if total == 0 {
            0.0
        } else {
            hit as f64 / total as f64
        }
    };
    Ok(frac(intra_hit, intra) - frac(inter_hit, inter))
}

/// Tab-separated matrix with a header row of labels.
pub fn matrix_to_tsv(m: &Array2<f64>, vocab: &LabelVocabulary) -> String {
    let mut out = vocab.labels().join("\t");
    out.push('\n');
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join("\t"));
        out.push('\n');
    }
    out
}

pub fn save_matrix_tsv(
    m: &Array2<f64>,
    vocab: &LabelVocabulary,
    path: impl AsRef<Path>,
) -> Result<()> {
    fsx::write(path, matrix_to_tsv(m, vocab))?;
    Ok(())
}
