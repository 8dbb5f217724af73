//! Sandwich matrices, the generalized Hausman statistics, LR, `M2` and
//! information criteria.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::data::ResponseMatrix;
use crate::error::{Error, Result};
use crate::estimation::FitResult;
use crate::likelihood::{logistic, objective_total_and_grad, score_contributions, Objective, ScoreMatrix};
use crate::params::{ExtendedParams, ItemParams};
use crate::quadrature::QuadratureRule;

/// Nominal levels attached to every report unless the caller says otherwise.
pub const DEFAULT_ALPHAS: [f64; 3] = [0.01, 0.05, 0.10];

/// Eigenvalues with `|lambda| <= RANK_TOLERANCE * max |lambda|` are dropped.
pub const RANK_TOLERANCE: f64 = 1e-8;

const MAX_CONDITION: f64 = 1e12;

/// With fewer items the reduced form has at most 2 dof and is not reported.
pub const MIN_M2_ITEMS: usize = 5;

fn hessian_step(x: f64) -> f64 {
    1e-4 * x.abs().max(1.0)
}

/// Central-difference Hessian of a scalar function, symmetrized.
pub fn numeric_hessian<F>(f: F, x: &[f64]) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let n = x.len();
    let mut h = DMatrix::zeros(n, n);
    let mut xt = x.to_vec();
    let f0 = f(x);
    for i in 0..n {
        let hi = hessian_step(x[i]);
        xt[i] = x[i] + hi;
        let fp = f(&xt);
        xt[i] = x[i] - hi;
        let fm = f(&xt);
        xt[i] = x[i];
        h[(i, i)] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in 0..i {
            let hj = hessian_step(x[j]);
            let mut eval = |si: f64, sj: f64| {
                xt[i] = x[i] + si * hi;
                xt[j] = x[j] + sj * hj;
                let v = f(&xt);
                xt[i] = x[i];
                xt[j] = x[j];
                v
            };
            let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0))
                / (4.0 * hi * hj);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    finite_or_err(h)
}

/// Hessian as central differences of an analytic gradient, symmetrized as
/// `(H + H') / 2`.
pub fn hessian_from_gradient<G>(grad: G, x: &[f64]) -> Result<DMatrix<f64>>
where
    G: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = x.len();
    let mut h = DMatrix::zeros(n, n);
    let mut xt = x.to_vec();
    for k in 0..n {
        let step = hessian_step(x[k]);
        xt[k] = x[k] + step;
        let gp = grad(&xt)?;
        xt[k] = x[k] - step;
        let gm = grad(&xt)?;
        xt[k] = x[k];
        for i in 0..n {
            h[(i, k)] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    let sym = (&h + h.transpose()) * 0.5;
    finite_or_err(sym)
}

fn finite_or_err(h: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if h.iter().all(|v| v.is_finite()) {
        Ok(h)
    } else {
        Err(Error::Inference("Hessian has non-finite entries".into()))
    }
}

fn objective_vector(objective: Objective, params: &ExtendedParams) -> Vec<f64> {
    match objective {
        Objective::Pairwise => params.items.to_vec(),
        _ => params.to_vec(),
    }
}

/// Observed Hessian of the total objective at `params`. For
/// [`Objective::Pairwise`] only the item block is used.
pub fn observed_hessian(
    objective: Objective,
    data: &ResponseMatrix,
    params: &ExtendedParams,
    rule: &QuadratureRule,
) -> Result<DMatrix<f64>> {
    let theta = objective_vector(objective, params);
    hessian_from_gradient(
        |x| objective_total_and_grad(objective, data, x, rule).map(|(_, g)| g),
        &theta,
    )
}

/// `sum_i g_i g_i'`.
pub fn score_crossproduct(scores: &ScoreMatrix) -> DMatrix<f64> {
    let m = DMatrix::from_row_slice(scores.n, scores.dim, &scores.values);
    m.transpose() * m
}

/// `sum_i s0_i s1_i'` for two score matrices over the same observations.
pub fn cross_model_matrix(pl_scores: &ScoreMatrix, ml_scores: &ScoreMatrix) -> Result<DMatrix<f64>> {
    if pl_scores.n != ml_scores.n {
        return Err(Error::Inference(format!(
            "score matrices have {} and {} rows",
            pl_scores.n, ml_scores.n
        )));
    }
    let a = DMatrix::from_row_slice(pl_scores.n, pl_scores.dim, &pl_scores.values);
    let b = DMatrix::from_row_slice(ml_scores.n, ml_scores.dim, &ml_scores.values);
    Ok(a.transpose() * b)
}

/// Observed Hessian and score cross-product at an estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichParts {
    pub hessian: DMatrix<f64>,
    pub crossprod: DMatrix<f64>,
}

impl SandwichParts {
    pub fn dim(&self) -> usize {
        self.hessian.nrows()
    }

    /// `A^-1 B A^-1`.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        let inv = invert(&self.hessian)?;
        Ok(&inv * &self.crossprod * inv.transpose())
    }

    pub fn standard_errors(&self) -> Result<Vec<f64>> {
        let cov = self.covariance()?;
        Ok(cov.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect())
    }
}

/// Hessian and cross-product of `objective` at `params`, together with the
/// per-observation scores used for the cross-product.
pub fn sandwich_parts(
    objective: Objective,
    data: &ResponseMatrix,
    params: &ExtendedParams,
    rule: &QuadratureRule,
) -> Result<(SandwichParts, ScoreMatrix)> {
    let hessian = observed_hessian(objective, data, params, rule)?;
    let scores = score_contributions(objective, data, params, rule)?;
    let crossprod = score_crossproduct(&scores);
    Ok((SandwichParts { hessian, crossprod }, scores))
}

fn invert(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(a.clone());
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for v in eig.eigenvalues.iter() {
        lo = lo.min(v.abs());
        hi = hi.max(v.abs());
    }
    if !(hi > 0.0) || !(lo > 0.0) || hi / lo > 1e14 {
        return Err(Error::Inference("singular Hessian".into()));
    }
    a.clone()
        .try_inverse()
        .ok_or_else(|| Error::Inference("singular Hessian".into()))
}

/// The combined covariance of `theta_L - theta_0` on the item block:
/// `Aθφ B1 Aθφ' + A0^-1 B0 A0^-1' - Aθφ R' A0^-1' - A0^-1 R Aθφ'`, where
/// `Aθφ` is `A1^-1` without its last `L` rows.
pub fn combined_covariance(
    snp0: &SandwichParts,
    snpl: &SandwichParts,
    r: &DMatrix<f64>,
    degree: usize,
) -> Result<DMatrix<f64>> {
    let d0 = snp0.dim();
    let d1 = snpl.dim();
    if d1 != d0 + degree || r.nrows() != d0 || r.ncols() != d1 {
        return Err(Error::Inference(format!(
            "dimension mismatch: {d0} item parameters, {d1} extended, R is {}x{}",
            r.nrows(),
            r.ncols()
        )));
    }
    let a0 = invert(&snp0.hessian)?;
    let a1 = invert(&snpl.hessian)?;
    let ath = a1.rows(0, d0).into_owned();
    let s = &ath * &snpl.crossprod * ath.transpose() + &a0 * &snp0.crossprod * a0.transpose()
        - &ath * r.transpose() * a0.transpose()
        - &a0 * r * ath.transpose();
    Ok((&s + s.transpose()) * 0.5)
}

/// Eigen-spectrum of `S_hat` with moment-matched scale and dof.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GhCovariance {
    /// Row-major `2p x 2p`.
    pub s_hat: Vec<f64>,
    pub dim: usize,
    /// Sorted by `|lambda|`, largest first.
    pub eigenvalues: Vec<f64>,
    pub rank: usize,
    pub a_scale: f64,
    pub b_dof: f64,
}

/// Signed eigenvalues sorted by magnitude and the number retained.
pub fn spectrum(s: &DMatrix<f64>) -> (Vec<f64>, usize) {
    let mut ev: Vec<f64> = SymmetricEigen::new(s.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
    let max = ev.first().map(|v| v.abs()).unwrap_or(0.0);
    let rank = if max > 0.0 {
        ev.iter().filter(|v| v.abs() > RANK_TOLERANCE * max).count()
    } else {
        0
    };
    (ev, rank)
}

/// `(a, b) = (sum l^2 / sum l, (sum l)^2 / sum l^2)`.
pub fn moment_match(eigenvalues: &[f64]) -> Result<(f64, f64)> {
    let s1: f64 = eigenvalues.iter().sum();
    let s2: f64 = eigenvalues.iter().map(|l| l * l).sum();
    if !(s1 > 0.0) {
        return Err(Error::Inference(format!(
            "indefinite covariance, test unavailable (eigenvalue sum {s1:.3e})"
        )));
    }
    Ok((s2 / s1, s1 * s1 / s2))
}

impl GhCovariance {
    pub fn from_matrix(s: DMatrix<f64>) -> Result<Self> {
        if s.nrows() != s.ncols() {
            return Err(Error::Inference("S_hat must be square".into()));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::Inference("S_hat has non-finite entries".into()));
        }
        let (eigenvalues, rank) = spectrum(&s);
        let (a_scale, b_dof) = moment_match(&eigenvalues[..rank])?;
        Ok(Self {
            dim: s.nrows(),
            s_hat: s.transpose().as_slice().to_vec(),
            eigenvalues,
            rank,
            a_scale,
            b_dof,
        })
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.s_hat)
    }

    pub fn retained(&self) -> &[f64] {
        &self.eigenvalues[..self.rank]
    }
}

pub fn assemble_s(
    snp0: &SandwichParts,
    snpl: &SandwichParts,
    r: &DMatrix<f64>,
    degree: usize,
) -> Result<GhCovariance> {
    GhCovariance::from_matrix(combined_covariance(snp0, snpl, r, degree)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestName {
    #[serde(rename = "GH")]
    Gh,
    #[serde(rename = "GH_T")]
    GhT,
    #[serde(rename = "LR")]
    Lr,
    #[serde(rename = "M2")]
    M2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub alpha: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: TestName,
    pub statistic: f64,
    pub dof: f64,
    /// Scale `a` of the `a chi2_b` reference; 1 for plain chi-square tests.
    pub scale: f64,
    pub p_value: f64,
    pub reject_at: Vec<Decision>,
}

impl TestReport {
    fn new(name: TestName, statistic: f64, dof: f64, scale: f64) -> Result<Self> {
        let p_value = chi2_upper(statistic / scale, dof)?;
        Ok(Self {
            name,
            statistic,
            dof,
            scale,
            p_value,
            reject_at: decisions(p_value, &DEFAULT_ALPHAS),
        })
    }

    /// Replace the attached levels.
    pub fn with_alphas(mut self, alphas: &[f64]) -> Self {
        self.reject_at = decisions(self.p_value, alphas);
        self
    }

    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value <= alpha
    }
}

fn decisions(p_value: f64, alphas: &[f64]) -> Vec<Decision> {
    alphas
        .iter()
        .map(|&alpha| Decision {
            alpha,
            reject: p_value <= alpha,
        })
        .collect()
}

/// Upper tail of a chi-square with possibly fractional dof.
pub fn chi2_upper(x: f64, dof: f64) -> Result<f64> {
    if !(dof > 0.0) || !x.is_finite() {
        return Err(Error::Inference(format!("invalid chi-square tail at x={x}, dof={dof}")));
    }
    if x <= 0.0 {
        return Ok(1.0);
    }
    let d = ChiSquared::new(dof).map_err(|e| Error::Inference(e.to_string()))?;
    Ok(d.sf(x).clamp(0.0, 1.0))
}

/// Upper `alpha` critical value of `chi2_dof`.
pub fn chi2_critical(alpha: f64, dof: f64) -> Result<f64> {
    let d = ChiSquared::new(dof).map_err(|e| Error::Inference(e.to_string()))?;
    Ok(d.inverse_cdf(1.0 - alpha))
}

/// Identity-weighted Hausman statistic against `a chi2_b`.
pub fn gh_t_test(theta_snpl: &ItemParams, theta_snp0: &ItemParams, cov: &GhCovariance) -> Result<TestReport> {
    let (d1, d0) = (theta_snpl.to_vec(), theta_snp0.to_vec());
    if d1.len() != d0.len() || d1.len() != cov.dim {
        return Err(Error::Inference("parameter vectors and S_hat differ in size".into()));
    }
    let stat: f64 = d1.iter().zip(&d0).map(|(a, b)| (a - b) * (a - b)).sum();
    TestReport::new(TestName::GhT, stat, cov.b_dof, cov.a_scale)
}

/// Full Hausman quadratic form with `S_hat^-1`, against `chi2_{2p}`.
pub fn gh_full_test(theta_diff: &[f64], cov: &GhCovariance) -> Result<TestReport> {
    if theta_diff.len() != cov.dim {
        return Err(Error::Inference("difference vector and S_hat differ in size".into()));
    }
    let max = cov.eigenvalues.first().map(|v| v.abs()).unwrap_or(0.0);
    let min = cov.eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(min > 0.0) || max / min > MAX_CONDITION {
        return Err(Error::Inference(
            "S_hat is numerically singular; use the GH_T statistic".into(),
        ));
    }
    let s = cov.matrix();
    let d = DVector::from_column_slice(theta_diff);
    let sol = s
        .lu()
        .solve(&d)
        .ok_or_else(|| Error::Inference("S_hat is singular; use the GH_T statistic".into()))?;
    TestReport::new(TestName::Gh, d.dot(&sol), cov.dim as f64, 1.0)
}

/// `2 (l_L - l_0)` against `chi2_L`.
pub fn lr_test(loglik_snpl: f64, loglik_snp0_full: f64, degree: usize) -> Result<TestReport> {
    if degree < 1 {
        return Err(Error::Domain("LR test needs L >= 1".into()));
    }
    let raw = 2.0 * (loglik_snpl - loglik_snp0_full);
    if raw < -1e-6 {
        return Err(Error::Inference(format!(
            "SNP_{degree} log-likelihood is below the nested SNP_0 value (2 diff = {raw:.3e}); \
             the larger model did not reach its maximum"
        )));
    }
    TestReport::new(TestName::Lr, raw.max(0.0), degree as f64, 1.0)
}

/// Degrees of freedom of `M2` for `p` items.
pub fn m2_dof(p: usize) -> Result<usize> {
    if p < MIN_M2_ITEMS {
        return Err(Error::Inference(format!(
            "M2 undefined for this p ({p}); at least {MIN_M2_ITEMS} items are required"
        )));
    }
    Ok(p * (p + 1) / 2 - 2 * p)
}

/// Observed univariate and bivariate "= 1" proportions, items then pairs
/// `j < k`.
pub fn observed_margins(data: &ResponseMatrix) -> Vec<f64> {
    let p = data.p();
    let n = data.n() as f64;
    let mut out = data.item_means();
    for j in 0..p {
        for k in j + 1..p {
            let c = (0..data.n()).filter(|&i| data.row(i)[j] == 1 && data.row(i)[k] == 1).count();
            out.push(c as f64 / n);
        }
    }
    out
}

fn margin_sets(p: usize) -> Vec<Vec<usize>> {
    let mut sets: Vec<Vec<usize>> = (0..p).map(|j| vec![j]).collect();
    for j in 0..p {
        for k in j + 1..p {
            sets.push(vec![j, k]);
        }
    }
    sets
}

/// `M2` from observed margins at normal-latent item parameters.
pub fn m2_from_margins(observed: &[f64], n: usize, items: &ItemParams, rule: &QuadratureRule) -> Result<TestReport> {
    let p = items.n_items();
    let dof = m2_dof(p)?;
    let sets = margin_sets(p);
    let s = sets.len();
    if observed.len() != s {
        return Err(Error::Inference(format!("expected {s} margins, got {}", observed.len())));
    }
    let q = rule.len();
    let pi: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            rule.nodes
                .iter()
                .map(|&x| logistic(items.alpha0[j] + items.alpha1[j] * x))
                .collect()
        })
        .collect();
    let prob_all = |items_in: &[usize]| -> f64 {
        (0..q)
            .map(|t| rule.weights[t] * items_in.iter().map(|&j| pi[j][t]).product::<f64>())
            .sum()
    };
    let model: Vec<f64> = sets.iter().map(|set| prob_all(set)).collect();

    let mut xi = DMatrix::zeros(s, s);
    for a in 0..s {
        for b in 0..=a {
            let mut union = sets[a].clone();
            for &j in &sets[b] {
                if !union.contains(&j) {
                    union.push(j);
                }
            }
            let v = prob_all(&union) - model[a] * model[b];
            xi[(a, b)] = v;
            xi[(b, a)] = v;
        }
    }

    // d pi_jq / d alpha0j = pi (1 - pi), d / d alpha1j = x pi (1 - pi).
    let mut delta = DMatrix::zeros(s, 2 * p);
    for (a, set) in sets.iter().enumerate() {
        for &j in set {
            let (mut d0, mut d1) = (0.0, 0.0);
            for t in 0..q {
                let others: f64 = set.iter().filter(|&&k| k != j).map(|&k| pi[k][t]).product();
                let v = rule.weights[t] * pi[j][t] * (1.0 - pi[j][t]) * others;
                d0 += v;
                d1 += v * rule.nodes[t];
            }
            delta[(a, j)] = d0;
            delta[(a, p + j)] = d1;
        }
    }

    let chol = xi
        .cholesky()
        .ok_or_else(|| Error::Inference("margin covariance is not positive definite".into()))?;
    let e = DVector::from_iterator(s, observed.iter().zip(&model).map(|(o, m)| o - m));
    let xe = chol.solve(&e);
    let xd = chol.solve(&delta);
    let dxd = delta.transpose() * &xd;
    let dxe = delta.transpose() * &xe;
    let inner = dxd
        .lu()
        .solve(&dxe)
        .ok_or_else(|| Error::Inference("M2 Jacobian is rank deficient".into()))?;
    let quad = e.dot(&xe) - dxe.dot(&inner);
    TestReport::new(TestName::M2, (n as f64 * quad).max(0.0), dof as f64, 1.0)
}

/// `M2` goodness of fit of a normal-latent fit.
pub fn m2_test(data: &ResponseMatrix, snp0_fit: &FitResult, rule: &QuadratureRule) -> Result<TestReport> {
    m2_dof(data.p())?;
    if snp0_fit.raw_params.degree() != 0 {
        return Err(Error::Inference("M2 is computed for the normal-latent model".into()));
    }
    if !snp0_fit.converged {
        return Err(Error::Inference("M2 needs a converged SNP_0 fit".into()));
    }
    m2_from_margins(&observed_margins(data), data.n(), &snp0_fit.final_params.items, rule)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcReport {
    pub aic: f64,
    pub bic: f64,
    pub hq: f64,
    pub k: usize,
    pub n: usize,
    pub loglik: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Criterion {
    #[serde(rename = "AIC")]
    Aic,
    #[serde(rename = "BIC")]
    Bic,
    #[serde(rename = "HQ")]
    Hq,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::Aic, Criterion::Bic, Criterion::Hq];

    pub fn label(self) -> &'static str {
        match self {
            Criterion::Aic => "AIC",
            Criterion::Bic => "BIC",
            Criterion::Hq => "HQ",
        }
    }
}

impl IcReport {
    pub fn value(&self, c: Criterion) -> f64 {
        match c {
            Criterion::Aic => self.aic,
            Criterion::Bic => self.bic,
            Criterion::Hq => self.hq,
        }
    }

    /// Whether `self` is strictly preferred over `other` under `c`.
    pub fn preferred_over(&self, other: &IcReport, c: Criterion) -> bool {
        self.value(c) < other.value(c)
    }
}

pub fn information_criteria(loglik: f64, k: usize, n: usize) -> Result<IcReport> {
    if n < 3 {
        return Err(Error::Domain(format!("information criteria need n >= 3, got {n}")));
    }
    if k < 1 {
        return Err(Error::Domain("parameter count must be positive".into()));
    }
    let (kf, nf) = (k as f64, n as f64);
    Ok(IcReport {
        aic: -2.0 * loglik + 2.0 * kf,
        bic: -2.0 * loglik + kf * nf.ln(),
        hq: -2.0 * loglik + 2.0 * kf * nf.ln().ln(),
        k,
        n,
        loglik,
    })
}

/// One-sample Kolmogorov-Smirnov test of uniformity on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

pub fn ks_uniform(samples: &[f64]) -> Result<KsResult> {
    if samples.is_empty() {
        return Err(Error::Inference("KS test needs at least one value".into()));
    }
    let mut u = samples.to_vec();
    if u.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Inference("KS uniformity test needs values in [0, 1]".into()));
    }
    u.sort_by(|a, b| a.total_cmp(b));
    let n = u.len() as f64;
    let d = u
        .iter()
        .enumerate()
        .map(|(i, &v)| ((i + 1) as f64 / n - v).max(v - i as f64 / n))
        .fold(0.0f64, f64::max);
    let en = n.sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_q(lambda),
        n: u.len(),
    })
}

/// `Q(l) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 l^2)`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let term = sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Everything the Hausman comparison of a pairwise `SNP_0` fit and a
/// quasi-ML `SNP_L` fit needs.
#[derive(Debug, Clone)]
pub struct HausmanInputs {
    pub snp0: SandwichParts,
    pub snpl: SandwichParts,
    pub r: DMatrix<f64>,
    pub degree: usize,
}

/// Sandwich pieces for a pairwise fit and an `SNP_L` fit. The `SNP_L` pieces
/// are taken in the standardized parametrization so the item block matches
/// the scale of the pairwise estimates.
pub fn hausman_inputs(
    data: &ResponseMatrix,
    pl_fit: &FitResult,
    snpl_fit: &FitResult,
    rule: &QuadratureRule,
) -> Result<HausmanInputs> {
    let (snp0, s0) = sandwich_parts(Objective::Pairwise, data, &pl_fit.final_params, rule)?;
    let (snpl, s1) = sandwich_parts(Objective::FullStandardized, data, &snpl_fit.final_params, rule)?;
    let r = cross_model_matrix(&s0, &s1)?;
    Ok(HausmanInputs {
        snp0,
        snpl,
        r,
        degree: snpl_fit.raw_params.degree(),
    })
}

/// `GH_T` for a pairwise `SNP_0` fit against a quasi-ML `SNP_L` fit.
pub fn gh_t_from_fits(
    data: &ResponseMatrix,
    pl_fit: &FitResult,
    snpl_fit: &FitResult,
    rule: &QuadratureRule,
) -> Result<(TestReport, GhCovariance)> {
    let h = hausman_inputs(data, pl_fit, snpl_fit, rule)?;
    let cov = assemble_s(&h.snp0, &h.snpl, &h.r, h.degree)?;
    let report = gh_t_test(&snpl_fit.final_params.items, &pl_fit.final_params.items, &cov)?;
    Ok((report, cov))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parts(a: DMatrix<f64>, b: DMatrix<f64>) -> SandwichParts {
        SandwichParts {
            hessian: a,
            crossprod: b,
        }
    }

    #[test]
    fn quadratic_hessian() {
        let h = numeric_hessian(|x| -(x[0] - 1.0).powi(2), &[0.3]).unwrap();
        assert!((h[(0, 0)] + 2.0).abs() < 1e-6);
        let h = hessian_from_gradient(|x| Ok(vec![-2.0 * (x[0] - 1.0)]), &[0.3]).unwrap();
        assert!((h[(0, 0)] + 2.0).abs() < 1e-6);
    }

    #[test]
    fn crossproduct_cases() {
        let g = [1.0, -2.0, 0.5];
        let one = ScoreMatrix {
            n: 1,
            dim: 3,
            values: g.to_vec(),
        };
        let b = score_crossproduct(&one);
        assert_eq!(spectrum(&b).1, 1);
        let two = ScoreMatrix {
            n: 2,
            dim: 3,
            values: vec![1.0, -2.0, 0.5, -1.0, 2.0, -0.5],
        };
        let b2 = score_crossproduct(&two);
        assert_eq!(b2, &b * 2.0);
    }

    #[test]
    fn cross_model_cases() {
        let pl = ScoreMatrix {
            n: 1,
            dim: 2,
            values: vec![1.0, 2.0],
        };
        let ml = ScoreMatrix {
            n: 1,
            dim: 3,
            values: vec![3.0, 0.0, -1.0],
        };
        let r = cross_model_matrix(&pl, &ml).unwrap();
        assert_eq!(r, DMatrix::from_row_slice(2, 3, &[3.0, 0.0, -1.0, 6.0, 0.0, -2.0]));
        let zero = ScoreMatrix {
            n: 1,
            dim: 3,
            values: vec![0.0; 3],
        };
        assert_eq!(cross_model_matrix(&pl, &zero).unwrap(), DMatrix::zeros(2, 3));
        let bad = ScoreMatrix {
            n: 2,
            dim: 3,
            values: vec![0.0; 6],
        };
        assert!(cross_model_matrix(&pl, &bad).is_err());
    }

    #[test]
    fn identical_parts_cancel() {
        let a = DMatrix::from_row_slice(2, 2, &[-3.0, 0.5, 0.5, -2.0]);
        let b = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let p = parts(a, b.clone());
        let s = combined_covariance(&p, &p, &b, 0).unwrap();
        assert!(s.iter().all(|v| v.abs() < 1e-12));
        assert_eq!(spectrum(&s).1, 0);
        assert!(GhCovariance::from_matrix(s).is_err());
    }

    #[test]
    fn moment_matching_examples() {
        let (a, b) = moment_match(&[2.0]).unwrap();
        assert!((a - 2.0).abs() < 1e-15 && (b - 1.0).abs() < 1e-15);
        let (a, b) = moment_match(&[3.0, 1.0]).unwrap();
        assert!((a - 2.5).abs() < 1e-15 && (b - 1.6).abs() < 1e-15);
        assert!(moment_match(&[-1.0, 0.5]).is_err());
    }

    #[test]
    fn gh_t_identical_is_zero() {
        let cov = GhCovariance::from_matrix(DMatrix::identity(4, 4)).unwrap();
        let items = ItemParams::new(vec![0.1, 0.2], vec![1.0, 1.1]).unwrap();
        let r = gh_t_test(&items, &items, &cov).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn gh_full_cases() {
        let cov = GhCovariance::from_matrix(DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.5]))).unwrap();
        let r = gh_full_test(&[1.0, 1.0], &cov).unwrap();
        assert!((r.statistic - 2.5).abs() < 1e-12);
        assert_eq!(r.dof, 2.0);
        assert_eq!(gh_full_test(&[0.0, 0.0], &cov).unwrap().statistic, 0.0);

        let id = GhCovariance::from_matrix(DMatrix::identity(4, 4)).unwrap();
        let a = ItemParams::new(vec![0.1, 0.2], vec![1.0, 1.1]).unwrap();
        let b = ItemParams::new(vec![0.3, -0.2], vec![0.9, 1.4]).unwrap();
        let diff: Vec<f64> = a.to_vec().iter().zip(b.to_vec()).map(|(x, y)| x - y).collect();
        let t = gh_t_test(&a, &b, &id).unwrap();
        assert!((gh_full_test(&diff, &id).unwrap().statistic - t.statistic).abs() < 1e-12);

        let near = GhCovariance::from_matrix(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-13]))).unwrap();
        assert!(gh_full_test(&[1.0, 1.0], &near).unwrap_err().to_string().contains("GH_T"));
    }

    #[test]
    fn lr_cases() {
        let r = lr_test(-100.0, -100.0, 1).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
        assert_eq!(lr_test(-99.0, -100.0, 2).unwrap().dof, 2.0);
        assert_eq!(lr_test(-100.0, -100.0 + 1e-8, 1).unwrap().statistic, 0.0);
        assert!(lr_test(-101.0, -100.0, 1).is_err());
        // chi2_1 upper tail at 7.66.
        let r = lr_test(3.83, 0.0, 1).unwrap();
        assert!((r.p_value - 0.0056458504767307295).abs() < 1e-9, "{}", r.p_value);
    }

    #[test]
    fn m2_dof_values() {
        assert_eq!(m2_dof(9).unwrap(), 27);
        assert_eq!(m2_dof(10).unwrap(), 35);
        for p in 5..30 {
            assert_eq!(m2_dof(p).unwrap(), p * (p + 1) / 2 - 2 * p);
        }
        assert!(m2_dof(4).unwrap_err().to_string().contains("M2 undefined"));
    }

    #[test]
    fn m2_zero_at_model_margins() {
        let rule = crate::quadrature::gauss_hermite_rule(40).unwrap();
        let items = ItemParams::new(vec![0.1, -0.3, 0.5, 0.0, 0.8], vec![1.0, 0.7, 1.3, 0.9, 1.1]).unwrap();
        let p = 5;
        let mut margins = Vec::new();
        for j in 0..p {
            margins.push(rule.integrate(|x| logistic(items.alpha0[j] + items.alpha1[j] * x)));
        }
        for j in 0..p {
            for k in j + 1..p {
                margins.push(rule.integrate(|x| {
                    logistic(items.alpha0[j] + items.alpha1[j] * x) * logistic(items.alpha0[k] + items.alpha1[k] * x)
                }));
            }
        }
        let r = m2_from_margins(&margins, 500, &items, &rule).unwrap();
        assert!(r.statistic.abs() < 1e-9);
        assert_eq!(r.dof, 5.0);
    }

    #[test]
    fn information_criteria_values() {
        let ic = information_criteria(0.0, 3, 100).unwrap();
        assert!((ic.aic - 6.0).abs() < 1e-12);
        assert!((ic.bic - 13.815510557964274).abs() < 1e-9);
        assert!((ic.hq - 9.163077754847407).abs() < 1e-9);
        assert!(information_criteria(0.0, 3, 2).is_err());

        let small = information_criteria(-50.0, 4, 100).unwrap();
        let big = information_criteria(-50.0, 5, 100).unwrap();
        for c in Criterion::ALL {
            assert!(small.preferred_over(&big, c));
            assert!(!big.preferred_over(&small, c));
        }
    }

    #[test]
    fn ks_detects_nonuniform() {
        let even: Vec<f64> = (0..200).map(|i| (i as f64 + 0.5) / 200.0).collect();
        assert!(ks_uniform(&even).unwrap().p_value > 0.99);
        let squeezed: Vec<f64> = even.iter().map(|u| u * u).collect();
        assert!(ks_uniform(&squeezed).unwrap().p_value < 0.01);
    }

    #[test]
    fn kolmogorov_tail_reference() {
        // Asymptotic Kolmogorov survival at 1.36 is about 0.0494.
        assert!((kolmogorov_q(1.36) - 0.049485876755377876).abs() < 1e-9);
    }
}
