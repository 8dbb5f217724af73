//! Marginal and pairwise log-likelihoods of the 2PL model with an SNP
//! latent density, and their per-observation scores.
//!
//! The full likelihood works on distinct response patterns. For a pattern
//! `y`, the log integrand at node `x_q` is
//!
//! ```text
//! base_q = ln w_q + sum_j ln(1 - pi_j(x_q)) + sum_{j: y_j = 1} (alpha0_j + alpha1_j x_q)
//! ```
//!
//! so it only costs `O(Q)` per pattern once the item sums are known, and the
//! polynomial factor `P_L(x_q)^2` is applied after shifting by `max_q base_q`.
//!
//! The pairwise likelihood only depends on the four cell counts of each
//! item pair, so its total is evaluated from those counts.

use serde::{Deserialize, Serialize};

use crate::data::ResponseMatrix;
use crate::error::{Error, Result};
use crate::params::{ExtendedParams, ItemParams};
use crate::quadrature::QuadratureRule;
use crate::snp::SnpDensity;

/// Total and per-observation log-likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoglikValue {
    pub total: f64,
    pub per_observation: Vec<f64>,
}

/// Which objective a score or Hessian refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Full (quasi-)likelihood in the raw parametrization.
    Full,
    /// Full (quasi-)likelihood reparametrized by the standardized item
    /// parameters `(alpha0_hat, alpha1_hat, phi)`; equals `Full` when `L = 0`.
    FullStandardized,
    /// Pairwise likelihood of the normal-latent model.
    Pairwise,
}

/// `exp(eta) / (1 + exp(eta))` evaluated without overflow.
#[inline]
pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 - logistic(eta)) = -ln(1 + exp(eta))`.
#[inline]
fn log_one_minus_logistic(eta: f64) -> f64 {
    if eta > 0.0 {
        -eta - (-eta).exp().ln_1p()
    } else {
        -eta.exp().ln_1p()
    }
}

/// Probability of a correct/endorsed response at latent value `z`.
pub fn response_prob(alpha0: f64, alpha1: f64, z: f64) -> f64 {
    logistic(alpha0 + alpha1 * z)
}

fn check_dims(data: &ResponseMatrix, p: usize) -> Result<()> {
    if data.p() != p {
        return Err(Error::Domain(format!(
            "parameters describe {p} items but data has {}",
            data.p()
        )));
    }
    Ok(())
}

/// Per-node item tables shared by every pattern.
struct NodeTables {
    /// `pi[j * q + k]` = response probability of item `j` at node `k`.
    pi: Vec<f64>,
    /// `ln w_k + sum_j ln(1 - pi_jk)`.
    base0: Vec<f64>,
    /// `P_L(x_k)^2`.
    poly_sq: Vec<f64>,
    /// `P_L(x_k)`.
    poly: Vec<f64>,
}

impl NodeTables {
    fn new(items: &ItemParams, density: &SnpDensity, rule: &QuadratureRule) -> Self {
        let q = rule.len();
        let p = items.n_items();
        let mut pi = vec![0.0; p * q];
        let mut base0: Vec<f64> = rule.weights.iter().map(|w| w.ln()).collect();
        for j in 0..p {
            let (a0, a1) = (items.alpha0[j], items.alpha1[j]);
            for (k, &x) in rule.nodes.iter().enumerate() {
                let eta = a0 + a1 * x;
                pi[j * q + k] = logistic(eta);
                base0[k] += log_one_minus_logistic(eta);
            }
        }
        let poly: Vec<f64> = rule.nodes.iter().map(|&x| density.poly(x)).collect();
        let poly_sq = poly.iter().map(|v| v * v).collect();
        Self {
            pi,
            base0,
            poly_sq,
            poly,
        }
    }
}

/// Scratch state for one pattern: shifted node weights and the log value.
struct PatternEval {
    loglik: f64,
    /// `exp(base_q - m)`; the posterior weight of node `q` is
    /// `scaled[q] * P^2(x_q) / sum`.
    sum: f64,
}

fn eval_pattern(
    row: &[u8],
    items: &ItemParams,
    tables: &NodeTables,
    rule: &QuadratureRule,
    scaled: &mut [f64],
) -> PatternEval {
    let (mut s0, mut s1) = (0.0, 0.0);
    for (j, &y) in row.iter().enumerate() {
        if y == 1 {
            s0 += items.alpha0[j];
            s1 += items.alpha1[j];
        }
    }
    let mut m = f64::NEG_INFINITY;
    for (k, &x) in rule.nodes.iter().enumerate() {
        let b = tables.base0[k] + s0 + s1 * x;
        scaled[k] = b;
        if b > m {
            m = b;
        }
    }
    let mut sum = 0.0;
    for k in 0..scaled.len() {
        scaled[k] = (scaled[k] - m).exp();
        sum += scaled[k] * tables.poly_sq[k];
    }
    let loglik = if sum > 0.0 { m + sum.ln() } else { f64::NEG_INFINITY };
    PatternEval { loglik, sum }
}

/// Per-pattern log-likelihoods (and optionally gradients in the raw
/// parametrization, row-major `patterns x dim`).
fn full_by_pattern(
    data: &ResponseMatrix,
    params: &ExtendedParams,
    rule: &QuadratureRule,
    want_grad: bool,
) -> (Vec<f64>, Vec<f64>) {
    let p = params.n_items();
    let l = params.degree();
    let dim = 2 * p + l;
    let q = rule.len();
    let density = SnpDensity::extended(params.angles.values());
    let tables = NodeTables::new(&params.items, &density, rule);
    let dpoly: Vec<Vec<f64>> = if want_grad && l > 0 {
        let jac = density.coefficient_jacobian();
        (0..l)
            .map(|m| {
                rule.nodes
                    .iter()
                    .map(|&x| (0..=l).rev().fold(0.0, |acc, k| acc * x + jac[(k, m)]))
                    .collect()
            })
            .collect()
    } else {
        Vec::new()
    };

    let pat = data.patterns();
    let mut values = Vec::with_capacity(pat.rows.len());
    let mut grads = if want_grad {
        vec![0.0; pat.rows.len() * dim]
    } else {
        Vec::new()
    };
    let mut scaled = vec![0.0; q];
    let mut post = vec![0.0; q];
    let mut post_x = vec![0.0; q];
    for (r, row) in pat.rows.iter().enumerate() {
        let ev = eval_pattern(row, &params.items, &tables, rule, &mut scaled);
        values.push(ev.loglik);
        if !want_grad || !ev.loglik.is_finite() {
            continue;
        }
        let g = &mut grads[r * dim..(r + 1) * dim];
        let inv = 1.0 / ev.sum;
        let mut mean_x = 0.0;
        for k in 0..q {
            post[k] = scaled[k] * tables.poly_sq[k] * inv;
            post_x[k] = post[k] * rule.nodes[k];
            mean_x += post_x[k];
        }
        for j in 0..p {
            let pij = &tables.pi[j * q..(j + 1) * q];
            let mut e0 = 0.0;
            let mut e1 = 0.0;
            for k in 0..q {
                e0 += post[k] * pij[k];
                e1 += post_x[k] * pij[k];
            }
            let y = row[j] as f64;
            g[j] = y - e0;
            g[p + j] = y * mean_x - e1;
        }
        for (m, dp) in dpoly.iter().enumerate() {
            let mut acc = 0.0;
            for k in 0..q {
                acc += scaled[k] * 2.0 * tables.poly[k] * dp[k];
            }
            g[2 * p + m] = acc * inv;
        }
    }
    (values, grads)
}

/// Full (quasi-)log-likelihood of the SNP model by Gauss-Hermite
/// quadrature. Patterns whose probability underflows give `-inf`.
pub fn full_loglik(
    data: &ResponseMatrix,
    params: &ExtendedParams,
    rule: &QuadratureRule,
) -> Result<LoglikValue> {
    check_dims(data, params.n_items())?;
    let (values, _) = full_by_pattern(data, params, rule, false);
    let pat = data.patterns();
    let per_observation: Vec<f64> = pat.row_pattern.iter().map(|&r| values[r]).collect();
    let total = values.iter().zip(&pat.counts).map(|(v, c)| v * c).sum();
    Ok(LoglikValue {
        total,
        per_observation,
    })
}

/// Total full log-likelihood and its gradient (raw parametrization).
pub(crate) fn full_total_and_grad(
    data: &ResponseMatrix,
    params: &ExtendedParams,
    rule: &QuadratureRule,
) -> (f64, Vec<f64>) {
    let dim = params.dim();
    let (values, grads) = full_by_pattern(data, params, rule, true);
    let pat = data.patterns();
    let mut total = 0.0;
    let mut grad = vec![0.0; dim];
    for (r, (&v, &c)) in values.iter().zip(&pat.counts).enumerate() {
        total += c * v;
        for (gk, &pg) in grad.iter_mut().zip(&grads[r * dim..(r + 1) * dim]) {
            *gk += c * pg;
        }
    }
    (total, grad)
}

pub(crate) fn full_total(
    data: &ResponseMatrix,
    params: &ExtendedParams,
    rule: &QuadratureRule,
) -> f64 {
    let (values, _) = full_by_pattern(data, params, rule, false);
    values
        .iter()
        .zip(&data.patterns().counts)
        .map(|(v, c)| v * c)
        .sum()
}

/// Cell probabilities and their derivatives for one item pair.
struct PairCells {
    prob: [f64; 4],
    /// `d prob[cell] / d (alpha0_j, alpha1_j, alpha0_k, alpha1_k)`.
    deriv: [[f64; 4]; 4],
}

fn pair_cells(j: usize, k: usize, pi: &[f64], rule: &QuadratureRule, with_deriv: bool) -> PairCells {
    let q = rule.len();
    let pj = &pi[j * q..(j + 1) * q];
    let pk = &pi[k * q..(k + 1) * q];
    let mut prob = [0.0; 4];
    let mut deriv = [[0.0; 4]; 4];
    for t in 0..q {
        let (w, x) = (rule.weights[t], rule.nodes[t]);
        let (a, b) = (pj[t], pk[t]);
        let lj = [1.0 - a, a];
        let lk = [1.0 - b, b];
        for yj in 0..2 {
            for yk in 0..2 {
                let cell = 2 * yj + yk;
                let f = w * lj[yj] * lk[yk];
                prob[cell] += f;
                if with_deriv {
                    let sj = yj as f64 - a;
                    let sk = yk as f64 - b;
                    let d = &mut deriv[cell];
                    d[0] += f * sj;
                    d[1] += f * sj * x;
                    d[2] += f * sk;
                    d[3] += f * sk * x;
                }
            }
        }
    }
    PairCells { prob, deriv }
}

fn item_probs(items: &ItemParams, rule: &QuadratureRule) -> Vec<f64> {
    let q = rule.len();
    let mut pi = vec![0.0; items.n_items() * q];
    for j in 0..items.n_items() {
        for (t, &x) in rule.nodes.iter().enumerate() {
            pi[j * q + t] = response_prob(items.alpha0[j], items.alpha1[j], x);
        }
    }
    pi
}

/// Pairwise log-likelihood of the normal-latent model over all pairs
/// `j < k`.
pub fn pairwise_loglik(
    data: &ResponseMatrix,
    items: &ItemParams,
    rule: &QuadratureRule,
) -> Result<LoglikValue> {
    let p = items.n_items();
    check_dims(data, p)?;
    let pi = item_probs(items, rule);
    let mut log_cells = Vec::with_capacity(p * (p - 1) / 2);
    for j in 0..p {
        for k in j + 1..p {
            let c = pair_cells(j, k, &pi, rule, false);
            log_cells.push(c.prob.map(|v| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY }));
        }
    }
    let per_observation: Vec<f64> = (0..data.n())
        .map(|i| {
            let row = data.row(i);
            let mut acc = 0.0;
            let mut idx = 0;
            for j in 0..p {
                for k in j + 1..p {
                    acc += log_cells[idx][(2 * row[j] + row[k]) as usize];
                    idx += 1;
                }
            }
            acc
        })
        .collect();
    let total = pairwise_total_from_counts(data, &log_cells);
    Ok(LoglikValue {
        total,
        per_observation,
    })
}

fn pairwise_total_from_counts(data: &ResponseMatrix, log_cells: &[[f64; 4]]) -> f64 {
    data.pair_counts()
        .cells
        .iter()
        .zip(log_cells)
        .map(|(n, l)| {
            (0..4)
                .filter(|&c| n[c] > 0.0)
                .map(|c| n[c] * l[c])
                .sum::<f64>()
        })
        .sum()
}

pub(crate) fn pairwise_total_and_grad(
    data: &ResponseMatrix,
    items: &ItemParams,
    rule: &QuadratureRule,
) -> (f64, Vec<f64>) {
    let p = items.n_items();
    let pi = item_probs(items, rule);
    let counts = &data.pair_counts().cells;
    let mut total = 0.0;
    let mut grad = vec![0.0; 2 * p];
    let mut idx = 0;
    for j in 0..p {
        for k in j + 1..p {
            let c = pair_cells(j, k, &pi, rule, true);
            let n = counts[idx];
            idx += 1;
            for cell in 0..4 {
                if n[cell] == 0.0 {
                    continue;
                }
                let pr = c.prob[cell];
                if !(pr > 0.0) {
                    return (f64::NEG_INFINITY, grad);
                }
                total += n[cell] * pr.ln();
                let s = n[cell] / pr;
                let d = c.deriv[cell];
                grad[j] += s * d[0];
                grad[p + j] += s * d[1];
                grad[k] += s * d[2];
                grad[p + k] += s * d[3];
            }
        }
    }
    (total, grad)
}

pub(crate) fn pairwise_total(data: &ResponseMatrix, items: &ItemParams, rule: &QuadratureRule) -> f64 {
    let p = items.n_items();
    let pi = item_probs(items, rule);
    let mut log_cells = Vec::with_capacity(p * (p - 1) / 2);
    for j in 0..p {
        for k in j + 1..p {
            let c = pair_cells(j, k, &pi, rule, false);
            log_cells.push(c.prob.map(|v| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY }));
        }
    }
    pairwise_total_from_counts(data, &log_cells)
}

/// Per-observation scores as a row-major `n x dim` matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub n: usize,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl ScoreMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for i in 0..self.n {
            for (o, v) in out.iter_mut().zip(self.row(i)) {
                *o += v;
            }
        }
        out
    }
}

/// Jacobian of the raw parameters with respect to the standardized ones,
/// applied as `J' g` to a raw-scale gradient `g`.
pub(crate) struct StandardizingMap {
    p: usize,
    alpha1_std: Vec<f64>,
    /// `s = V^{-1/2}` and `s * E`.
    s: f64,
    se: f64,
    ds: Vec<f64>,
    dse: Vec<f64>,
}

impl StandardizingMap {
    /// `std` holds `(alpha0_hat, alpha1_hat, phi)`.
    pub(crate) fn new(std: &ExtendedParams) -> Result<Self> {
        let density = SnpDensity::extended(std.angles.values());
        let mom = density.moments();
        if !(mom.variance > 0.0) {
            return Err(Error::Domain("nonpositive latent variance".into()));
        }
        let (dm, dv) = density.moment_gradients();
        let s = mom.variance.powf(-0.5);
        let ds: Vec<f64> = dv.iter().map(|d| -0.5 * s * s * s * d).collect();
        let dse = dm
            .iter()
            .zip(&ds)
            .map(|(dmi, dsi)| dsi * mom.mean + s * dmi)
            .collect();
        Ok(Self {
            p: std.n_items(),
            alpha1_std: std.items.alpha1.clone(),
            s,
            se: s * mom.mean,
            ds,
            dse,
        })
    }

    /// Raw parameters implied by the standardized ones.
    pub(crate) fn raw(&self, std: &ExtendedParams) -> ExtendedParams {
        let items = ItemParams {
            alpha0: std
                .items
                .alpha0
                .iter()
                .zip(&std.items.alpha1)
                .map(|(a0, a1)| a0 - a1 * self.se)
                .collect(),
            alpha1: std.items.alpha1.iter().map(|a1| a1 * self.s).collect(),
        };
        ExtendedParams {
            items,
            angles: std.angles.clone(),
        }
    }

    pub(crate) fn pull_back(&self, g_raw: &[f64], out: &mut [f64]) {
        let p = self.p;
        for j in 0..p {
            let (g0, g1) = (g_raw[j], g_raw[p + j]);
            out[j] = g0;
            out[p + j] = -self.se * g0 + self.s * g1;
        }
        for (m, (ds, dse)) in self.ds.iter().zip(&self.dse).enumerate() {
            let mut acc = g_raw[2 * p + m];
            for j in 0..p {
                let a1 = self.alpha1_std[j];
                acc += -a1 * dse * g_raw[j] + a1 * ds * g_raw[p + j];
            }
            out[2 * p + m] = acc;
        }
    }
}

/// Total objective and gradient at `theta` (stacked vector).
pub fn objective_total_and_grad(
    objective: Objective,
    data: &ResponseMatrix,
    theta: &[f64],
    rule: &QuadratureRule,
) -> Result<(f64, Vec<f64>)> {
    let p = data.p();
    match objective {
        Objective::Pairwise => {
            if theta.len() != 2 * p {
                return Err(Error::Domain("pairwise objective takes 2p parameters".into()));
            }
            Ok(pairwise_total_and_grad(data, &ItemParams::from_slice(theta), rule))
        }
        Objective::Full => {
            let params = ExtendedParams::from_slice_unchecked(theta, p);
            Ok(full_total_and_grad(data, &params, rule))
        }
        Objective::FullStandardized => {
            let std = ExtendedParams::from_slice_unchecked(theta, p);
            let map = StandardizingMap::new(&std)?;
            let raw = map.raw(&std);
            let (v, g) = full_total_and_grad(data, &raw, rule);
            let mut out = vec![0.0; g.len()];
            map.pull_back(&g, &mut out);
            Ok((v, out))
        }
    }
}

/// Total objective value at `theta`.
pub fn objective_total(
    objective: Objective,
    data: &ResponseMatrix,
    theta: &[f64],
    rule: &QuadratureRule,
) -> Result<f64> {
    let p = data.p();
    match objective {
        Objective::Pairwise => Ok(pairwise_total(data, &ItemParams::from_slice(theta), rule)),
        Objective::Full => Ok(full_total(data, &ExtendedParams::from_slice_unchecked(theta, p), rule)),
        Objective::FullStandardized => {
            let std = ExtendedParams::from_slice_unchecked(theta, p);
            let map = StandardizingMap::new(&std)?;
            Ok(full_total(data, &map.raw(&std), rule))
        }
    }
}

/// Per-observation gradients of the chosen objective at `params`. For
/// [`Objective::Pairwise`] only the item parameters are used; for
/// [`Objective::FullStandardized`] `params` holds the standardized items.
pub fn score_contributions(
    objective: Objective,
    data: &ResponseMatrix,
    params: &ExtendedParams,
    rule: &QuadratureRule,
) -> Result<ScoreMatrix> {
    let p = params.n_items();
    check_dims(data, p)?;
    match objective {
        Objective::Pairwise => Ok(pairwise_scores(data, &params.items, rule)),
        Objective::Full => Ok(full_scores(data, params, rule)),
        Objective::FullStandardized => {
            let map = StandardizingMap::new(params)?;
            let raw = map.raw(params);
            let mut s = full_scores(data, &raw, rule);
            let mut buf = vec![0.0; s.dim];
            for i in 0..s.n {
                map.pull_back(s.row(i), &mut buf);
                s.values[i * s.dim..(i + 1) * s.dim].copy_from_slice(&buf);
            }
            Ok(s)
        }
    }
}

fn full_scores(data: &ResponseMatrix, params: &ExtendedParams, rule: &QuadratureRule) -> ScoreMatrix {
    let dim = params.dim();
    let (_, grads) = full_by_pattern(data, params, rule, true);
    let pat = data.patterns();
    let mut values = Vec::with_capacity(data.n() * dim);
    for &r in &pat.row_pattern {
        values.extend_from_slice(&grads[r * dim..(r + 1) * dim]);
    }
    ScoreMatrix {
        n: data.n(),
        dim,
        values,
    }
}

fn pairwise_scores(data: &ResponseMatrix, items: &ItemParams, rule: &QuadratureRule) -> ScoreMatrix {
    let p = items.n_items();
    let dim = 2 * p;
    let pi = item_probs(items, rule);
    // d ln P(cell) for every pair and cell.
    let mut dlog = Vec::with_capacity(p * (p - 1) / 2);
    for j in 0..p {
        for k in j + 1..p {
            let c = pair_cells(j, k, &pi, rule, true);
            let mut out = [[0.0; 4]; 4];
            for cell in 0..4 {
                for t in 0..4 {
                    out[cell][t] = c.deriv[cell][t] / c.prob[cell];
                }
            }
            dlog.push(out);
        }
    }
    let mut values = vec![0.0; data.n() * dim];
    for i in 0..data.n() {
        let row = data.row(i);
        let g = &mut values[i * dim..(i + 1) * dim];
        let mut idx = 0;
        for j in 0..p {
            for k in j + 1..p {
                let d = dlog[idx][(2 * row[j] + row[k]) as usize];
                g[j] += d[0];
                g[p + j] += d[1];
                g[k] += d[2];
                g[p + k] += d[3];
                idx += 1;
            }
        }
    }
    ScoreMatrix {
        n: data.n(),
        dim,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_hermite_rule;
    use crate::snp::SnpAngles;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn random_data(n: usize, p: usize, seed: u64) -> ResponseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * p).map(|_| rng.random_range(0..2u8)).collect();
        ResponseMatrix::new(n, p, data).unwrap()
    }

    fn items(p: usize, seed: u64) -> ItemParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ItemParams::new(
            (0..p).map(|_| rng.random_range(-1.0..1.0)).collect(),
            (0..p).map(|_| rng.random_range(0.3..1.8)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn response_prob_examples() {
        assert_eq!(response_prob(0.0, 1.0, 0.0), 0.5);
        let mut last = 0.5;
        for z in [1.0, 10.0, 100.0, 800.0] {
            let v = response_prob(0.0, 1.0, z);
            assert!(v >= last && v <= 1.0);
            last = v;
        }
        assert_eq!(response_prob(0.0, 1.0, -800.0), 0.0f64.max(response_prob(0.0, 1.0, -800.0)));
        assert!(response_prob(0.0, 1.0, -800.0).is_finite());
        let v = response_prob(-1.85, 1.94, 0.0);
        assert!((v - 1.0 / (1.0 + 1.85f64.exp())).abs() < 1e-15);
        assert!((v - 0.1359).abs() < 1e-4);
    }

    #[test]
    fn log_one_minus_logistic_stable() {
        for eta in [-50.0, -1.0, 0.0, 2.0, 40.0, 800.0] {
            let direct = -(1.0f64 + f64::exp(eta)).ln();
            if direct.is_finite() {
                assert!((log_one_minus_logistic(eta) - direct).abs() < 1e-12);
            }
        }
        assert!((log_one_minus_logistic(800.0) + 800.0).abs() < 1e-12);
    }

    #[test]
    fn independence_single_item_gives_log_half() {
        // The minimal observation: one row, slopes 0 so no latent dependence.
        let data = ResponseMatrix::new(1, 2, vec![1, 1]).unwrap();
        let par = ExtendedParams::normal(ItemParams::new(vec![0.0, 0.0], vec![0.0, 0.0]).unwrap());
        let rule = gauss_hermite_rule(40).unwrap();
        let v = full_loglik(&data, &par, &rule).unwrap();
        assert!((v.total - 2.0 * 0.5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn normal_reduction_l1() {
        let data = random_data(60, 5, 3);
        let it = items(5, 4);
        let rule = gauss_hermite_rule(40).unwrap();
        let l0 = full_loglik(&data, &ExtendedParams::normal(it.clone()), &rule).unwrap();
        let l1 = full_loglik(
            &data,
            &ExtendedParams::new(it, SnpAngles::new(vec![FRAC_PI_2]).unwrap()),
            &rule,
        )
        .unwrap();
        assert!((l0.total - l1.total).abs() < 1e-10);
    }

    #[test]
    fn per_observation_sums_to_total() {
        let data = random_data(80, 6, 5);
        let rule = gauss_hermite_rule(40).unwrap();
        let par = ExtendedParams::new(items(6, 6), SnpAngles::new(vec![0.3, -0.8]).unwrap());
        let v = full_loglik(&data, &par, &rule).unwrap();
        assert!((v.per_observation.iter().sum::<f64>() - v.total).abs() < 1e-9);
        assert!(v.per_observation.iter().all(|&x| x <= 0.0));
        let w = pairwise_loglik(&data, &par.items, &rule).unwrap();
        assert!((w.per_observation.iter().sum::<f64>() - w.total).abs() < 1e-9);
    }

    #[test]
    fn pairwise_equals_full_for_two_items() {
        let data = random_data(40, 2, 7);
        let it = items(2, 8);
        let rule = gauss_hermite_rule(40).unwrap();
        let f = full_loglik(&data, &ExtendedParams::normal(it.clone()), &rule).unwrap();
        let pw = pairwise_loglik(&data, &it, &rule).unwrap();
        assert!((f.total - pw.total).abs() < 1e-10);
        for (a, b) in f.per_observation.iter().zip(&pw.per_observation) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn independence_pairwise_is_p_minus_one_times_full() {
        let p = 5;
        let data = random_data(50, p, 9);
        let it = ItemParams::new(vec![0.2, -0.4, 0.9, 0.0, -1.3], vec![0.0; p]).unwrap();
        let rule = gauss_hermite_rule(40).unwrap();
        let f = full_loglik(&data, &ExtendedParams::normal(it.clone()), &rule).unwrap();
        let pw = pairwise_loglik(&data, &it, &rule).unwrap();
        assert!((pw.total - (p as f64 - 1.0) * f.total).abs() < 1e-9);
    }

    #[test]
    fn pair_count_for_ten_items() {
        let data = random_data(3, 10, 10);
        assert_eq!(data.pair_counts().cells.len(), 45);
        let it = ItemParams::new(vec![0.0; 10], vec![0.0; 10]).unwrap();
        let rule = gauss_hermite_rule(10).unwrap();
        let pw = pairwise_loglik(&data, &it, &rule).unwrap();
        for v in pw.per_observation {
            assert!((v - 45.0 * 0.25f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn reflection_symmetry() {
        // Flipping every slope and mirroring the density leaves the likelihood unchanged.
        let data = random_data(70, 5, 11);
        let rule = gauss_hermite_rule(40).unwrap();
        let it = items(5, 12);
        let flipped = ItemParams::new(it.alpha0.clone(), it.alpha1.iter().map(|a| -a).collect())
            .unwrap();
        // P(z) = a0 + a1 z + a2 z^2 mirrors to a0 - a1 z + a2 z^2, i.e. phi2 -> -phi2 (L=2)
        // and phi1 -> -phi1 up to overall sign for L=1.
        let a = full_loglik(
            &data,
            &ExtendedParams::new(it.clone(), SnpAngles::new(vec![0.4, 0.9]).unwrap()),
            &rule,
        )
        .unwrap();
        let b = full_loglik(
            &data,
            &ExtendedParams::new(flipped.clone(), SnpAngles::new(vec![0.4, -0.9]).unwrap()),
            &rule,
        )
        .unwrap();
        assert!((a.total - b.total).abs() < 1e-10);
        let a = full_loglik(
            &data,
            &ExtendedParams::new(it, SnpAngles::new(vec![0.7]).unwrap()),
            &rule,
        )
        .unwrap();
        let b = full_loglik(
            &data,
            &ExtendedParams::new(flipped, SnpAngles::new(vec![-0.7]).unwrap()),
            &rule,
        )
        .unwrap();
        assert!((a.total - b.total).abs() < 1e-10);
    }

    #[test]
    fn quadrature_converges_with_node_count() {
        let data = random_data(50, 5, 13);
        for phi in [vec![], vec![0.5], vec![-0.4, 0.6]] {
            let par = ExtendedParams::new(items(5, 14), SnpAngles::new(phi).unwrap());
            let reference = full_loglik(&data, &par, &gauss_hermite_rule(120).unwrap()).unwrap();
            let q60 = full_loglik(&data, &par, &gauss_hermite_rule(60).unwrap()).unwrap();
            assert!((q60.total - reference.total).abs() < 1e-7);
            let q40 = full_loglik(&data, &par, &gauss_hermite_rule(40).unwrap()).unwrap();
            for (a, b) in q40.per_observation.iter().zip(&reference.per_observation) {
                assert!((a - b).abs() < 1e-6);
            }
            let q30 = full_loglik(&data, &par, &gauss_hermite_rule(30).unwrap()).unwrap();
            assert!((q30.total - reference.total).abs() >= (q60.total - reference.total).abs());
        }
    }

    fn fd_check(objective: Objective, theta: &[f64], data: &ResponseMatrix, rule: &QuadratureRule) {
        let (_, g) = objective_total_and_grad(objective, data, theta, rule).unwrap();
        for k in 0..theta.len() {
            let h = 1e-5 * theta[k].abs().max(1.0);
            let mut up = theta.to_vec();
            up[k] += h;
            let mut dn = theta.to_vec();
            dn[k] -= h;
            let fd = (objective_total(objective, data, &up, rule).unwrap()
                - objective_total(objective, data, &dn, rule).unwrap())
                / (2.0 * h);
            let scale = fd.abs().max(1.0);
            assert!(
                (g[k] - fd).abs() / scale < 1e-4,
                "{objective:?} param {k}: analytic {} vs fd {}",
                g[k],
                fd
            );
        }
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let data = random_data(120, 5, 15);
        let rule = gauss_hermite_rule(40).unwrap();
        let it = items(5, 16);
        fd_check(Objective::Pairwise, &it.to_vec(), &data, &rule);
        for phi in [vec![], vec![0.35], vec![-0.6, 1.1]] {
            let mut th = it.to_vec();
            th.extend_from_slice(&phi);
            fd_check(Objective::Full, &th, &data, &rule);
            fd_check(Objective::FullStandardized, &th, &data, &rule);
        }
    }

    #[test]
    fn score_rows_sum_to_gradient() {
        let data = random_data(90, 4, 17);
        let rule = gauss_hermite_rule(40).unwrap();
        let par = ExtendedParams::new(items(4, 18), SnpAngles::new(vec![0.2]).unwrap());
        for obj in [Objective::Full, Objective::FullStandardized] {
            let s = score_contributions(obj, &data, &par, &rule).unwrap();
            let (_, g) = objective_total_and_grad(obj, &data, &par.to_vec(), &rule).unwrap();
            for (a, b) in s.column_sums().iter().zip(&g) {
                assert!((a - b).abs() < 1e-9 * b.abs().max(1.0));
            }
        }
        let s = score_contributions(Objective::Pairwise, &data, &par, &rule).unwrap();
        assert_eq!(s.dim, 8);
        let (_, g) = objective_total_and_grad(Objective::Pairwise, &data, &par.items.to_vec(), &rule)
            .unwrap();
        for (a, b) in s.column_sums().iter().zip(&g) {
            assert!((a - b).abs() < 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn balanced_independence_scores_are_symmetric() {
        // Slopes zero and intercepts zero: intercept score is +1/2 for a 1 and -1/2 for a 0.
        let data = ResponseMatrix::from_rows(&[vec![1, 0, 1], vec![0, 1, 0]]).unwrap();
        let par = ExtendedParams::normal(ItemParams::new(vec![0.0; 3], vec![0.0; 3]).unwrap());
        let rule = gauss_hermite_rule(20).unwrap();
        let s = score_contributions(Objective::Full, &data, &par, &rule).unwrap();
        for j in 0..3 {
            assert!((s.row(0)[j] + s.row(1)[j]).abs() < 1e-14);
            assert!((s.row(0)[j].abs() - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let data = random_data(5, 3, 19);
        let rule = gauss_hermite_rule(10).unwrap();
        let par = ExtendedParams::normal(items(4, 20));
        assert!(full_loglik(&data, &par, &rule).is_err());
    }
}
