//! Gauss-Hermite quadrature against the standard normal measure.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of nodes used by every estimator.
pub const DEFAULT_NODES: usize = 40;

const MAX_NODES: usize = 200;

/// Nodes and weights with `sum_q w_q g(x_q) ~ int g(z) phi(z) dz`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn log_weights(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w.ln()).collect()
    }

    /// `sum_q w_q g(x_q)`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, g: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * g(x))
            .sum()
    }
}

/// Orthonormal probabilists' Hermite values `p_{n-1}(x), p_n(x)`.
fn hermite_pair(n: usize, x: f64) -> (f64, f64) {
    let mut prev = 0.0;
    let mut cur = 1.0;
    for k in 0..n {
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    (prev, cur)
}

/// Golub-Welsch eigenvalues polished by Newton steps on the orthonormal
/// recurrence; weights from the Christoffel function.
pub fn gauss_hermite_rule(q: usize) -> Result<QuadratureRule> {
    if q < 2 {
        return Err(Error::Domain(format!("quadrature needs at least 2 nodes, got {q}")));
    }
    if q > MAX_NODES {
        return Err(Error::Domain(format!("at most {MAX_NODES} quadrature nodes supported")));
    }
    let jacobi = DMatrix::from_fn(q, q, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.total_cmp(b));

    for x in nodes.iter_mut() {
        for _ in 0..8 {
            let (pm1, p) = hermite_pair(q, *x);
            let dp = (q as f64).sqrt() * pm1;
            let step = p / dp;
            *x -= step;
            if step.abs() <= 1e-15 * x.abs().max(1.0) {
                break;
            }
        }
    }
    for i in 0..q / 2 {
        let m = 0.5 * (nodes[q - 1 - i] - nodes[i]);
        nodes[i] = -m;
        nodes[q - 1 - i] = m;
    }
    if q % 2 == 1 {
        nodes[q / 2] = 0.0;
    }

    let mut weights: Vec<f64> = nodes
        .iter()
        .map(|&x| {
            let mut prev = 0.0;
            let mut cur = 1.0;
            let mut sum = 1.0;
            for k in 0..q - 1 {
                let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
                prev = cur;
                cur = next;
                sum += cur * cur;
            }
            1.0 / sum
        })
        .collect();
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    Ok(QuadratureRule { nodes, weights })
}
