//! Renormalized adjacency and order-k propagation operators.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::LabelGraph;
use crate::{Error, Result};

/// `D^-1/2 (A + I) D^-1/2`, with `D` the degree matrix of `A + I`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    matrix: Array2<f64>,
}

impl NormalizedAdjacency {
    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    /// Largest eigenvalue magnitude by power iteration from the all-ones vector.
    ///
    /// The operator is symmetric and nonnegative, so the Perron root is the
    /// spectral radius and the Rayleigh quotient converges to it from above
    /// zero without sign ambiguity.
    pub fn spectral_radius(&self, iterations: usize) -> f64 {
        power_iteration(&self.matrix, iterations)
    }
}

pub(crate) fn power_iteration(m: &Array2<f64>, iterations: usize) -> f64 {
    let n = m.nrows();
    let mut v = Array1::from_elem(n, 1.0 / (n as f64).sqrt());
    let mut estimate = 0.0;
    for _ in 0..iterations {
        let w = m.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        estimate = v.dot(&w);
        v = w / norm;
    }
    estimate.abs()
}

pub fn normalize_adjacency(graph: &LabelGraph) -> NormalizedAdjacency {
    let n = graph.size();
    let degree: Vec<f64> = (0..n).map(|i| graph.degree(i) as f64 + 1.0).collect();
    let mut matrix = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let a = if i == j {
                1.0
            } else {
                graph.edges()[[i, j]] as f64
            };
            if a != 0.0 {
                // sqrt of the product keeps regular-graph entries exact (e.g. 1/sqrt(4) = 0.5)
                matrix[[i, j]] = a / (degree[i] * degree[j]).sqrt();
            }
        }
    }
    NormalizedAdjacency { matrix }
}

/// Polynomial family used to build an order-k operator from the normalized adjacency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropagationBasis {
    /// `A^k`.
    #[default]
    Power,
    /// Chebyshev polynomial `T_k(A)`: `T_0 = I`, `T_1 = A`, `T_k = 2 A T_{k-1} - T_{k-2}`.
    Chebyshev,
}

/// Order-k propagation operator applied by one graph-convolution layer.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationMatrix {
    order: usize,
    basis: PropagationBasis,
    matrix: Array2<f64>,
}

impl PropagationMatrix {
    /// Wraps an arbitrary square operator, e.g. an identity for ablations.
    pub fn from_matrix(order: usize, matrix: Array2<f64>) -> Result<Self> {
        let (r, c) = matrix.dim();
        if r != c {
            return Err(Error::shape("propagation matrix", &[r, r], &[r, c]));
        }
        if order < 1 {
            return Err(Error::InvalidParameter(
                "propagation order must be >= 1".into(),
            ));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("propagation matrix".into()));
        }
        Ok(Self {
            order,
            basis: PropagationBasis::Power,
            matrix,
        })
    }

    pub fn identity(size: usize, order: usize) -> Result<Self> {
        Self::from_matrix(order, Array2::eye(size))
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn basis(&self) -> PropagationBasis {
        self.basis
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }
}

/// `A^k` by repeated multiplication.
pub fn propagation_matrix(adj: &NormalizedAdjacency, k: usize) -> Result<PropagationMatrix> {
    propagation_matrix_with(adj, k, PropagationBasis::Power)
}

pub fn propagation_matrix_with(
    adj: &NormalizedAdjacency,
    k: usize,
    basis: PropagationBasis,
) -> Result<PropagationMatrix> {
    if k < 1 {
        return Err(Error::InvalidParameter(format!(
            "propagation order {k} < 1"
        )));
    }
    let a = adj.matrix();
    let matrix = match basis {
        PropagationBasis::Power => {
            let mut m = a.clone();
            for _ in 1..k {
                m = a.dot(&m);
            }
            m
        }
        PropagationBasis::Chebyshev => {
            let mut prev = Array2::eye(a.nrows());
            let mut cur = a.clone();
            for _ in 1..k {
                let next = a.dot(&cur) * 2.0 - &prev;
                prev = cur;
                cur = next;
            }
            cur
        }
    };
    Ok(PropagationMatrix {
        order: k,
        basis,
        matrix,
    })
}
