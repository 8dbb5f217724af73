//! Data generation under the latent scenarios and replicated Monte Carlo
//! studies of the tests and information criteria.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::f64::consts::PI;

use crate::data::ResponseMatrix;
use crate::error::{Error, Result};
use crate::estimation::{fit_snp0_full, fit_snp0_pairwise, fit_snpl, FitConfig, FitResult, StartScale};
use crate::inference::{gh_t_from_fits, information_criteria, lr_test, m2_test, Criterion, TestReport};
use crate::likelihood::logistic;
use crate::params::{rescale_item_params, ItemParams};
use crate::quadrature::{gauss_hermite_rule, DEFAULT_NODES};
use crate::snp::LatentMoments;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    /// Standard deviation when `scale_is_sd`, variance otherwise.
    pub scale: f64,
    pub scale_is_sd: bool,
}

impl MixtureComponent {
    pub fn sd(&self) -> f64 {
        if self.scale_is_sd {
            self.scale
        } else {
            self.scale.sqrt()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatentShape {
    StandardNormal,
    NormalMixture { components: Vec<MixtureComponent> },
    SkewNormal { mu: f64, sigma: f64, lambda: f64 },
}

/// A generating latent distribution together with the moments used to put
/// true item parameters on the standardized scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentSpec {
    pub name: String,
    pub shape: LatentShape,
    pub declared_mean: f64,
    pub declared_variance: f64,
}

pub const SCENARIOS: [&str; 5] = ["A", "B", "C", "D", "E"];

fn mix(weight: f64, mean: f64, scale: f64, scale_is_sd: bool) -> MixtureComponent {
    MixtureComponent {
        weight,
        mean,
        scale,
        scale_is_sd,
    }
}

impl LatentSpec {
    /// Look up one of the built-in scenarios `A`..`E`.
    pub fn scenario(name: &str) -> Result<Self> {
        let key = name.trim().to_ascii_uppercase();
        let (shape, mean, var) = match key.as_str() {
            "A" => (LatentShape::StandardNormal, 0.0, 1.0),
            "B" => (
                LatentShape::NormalMixture {
                    components: vec![mix(0.7, -1.0, 0.7, true), mix(0.3, 1.0, 0.8, true)],
                },
                -0.40,
                1.38,
            ),
            "C" => (
                LatentShape::NormalMixture {
                    components: vec![mix(0.1, -2.0, 0.25, false), mix(0.9, 2.0, 1.0, false)],
                },
                1.6,
                2.37,
            ),
            "D" => (
                LatentShape::SkewNormal {
                    mu: -2.5,
                    sigma: 2.0,
                    lambda: 5.0,
                },
                -0.93,
                1.55,
            ),
            "E" => (
                LatentShape::SkewNormal {
                    mu: -2.5,
                    sigma: 2.0,
                    lambda: 10.0,
                },
                -0.91,
                1.47,
            ),
            _ => {
                return Err(Error::Domain(format!(
                    "unknown scenario '{name}'; available: {}",
                    SCENARIOS.join(", ")
                )))
            }
        };
        Ok(Self {
            name: key,
            shape,
            declared_mean: mean,
            declared_variance: var,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.declared_variance > 0.0) || !self.declared_mean.is_finite() {
            return Err(Error::Domain("declared latent moments are invalid".into()));
        }
        match &self.shape {
            LatentShape::StandardNormal => Ok(()),
            LatentShape::NormalMixture { components } => {
                if components.is_empty() || components.iter().any(|c| !(c.weight > 0.0) || !(c.scale > 0.0)) {
                    return Err(Error::Domain("mixture weights and scales must be positive".into()));
                }
                let total: f64 = components.iter().map(|c| c.weight).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::Domain(format!("mixture weights sum to {total}")));
                }
                Ok(())
            }
            LatentShape::SkewNormal { sigma, .. } => {
                if *sigma > 0.0 {
                    Ok(())
                } else {
                    Err(Error::Domain("skew-normal scale must be positive".into()))
                }
            }
        }
    }

    /// Exact mean and variance of the generating distribution.
    pub fn theoretical_moments(&self) -> (f64, f64) {
        match &self.shape {
            LatentShape::StandardNormal => (0.0, 1.0),
            LatentShape::NormalMixture { components } => {
                let mean: f64 = components.iter().map(|c| c.weight * c.mean).sum();
                let second: f64 = components
                    .iter()
                    .map(|c| c.weight * (c.sd() * c.sd() + c.mean * c.mean))
                    .sum();
                (mean, second - mean * mean)
            }
            LatentShape::SkewNormal { mu, sigma, lambda } => {
                let delta = lambda / (1.0 + lambda * lambda).sqrt();
                (
                    mu + sigma * delta * (2.0 / PI).sqrt(),
                    sigma * sigma * (1.0 - 2.0 * delta * delta / PI),
                )
            }
        }
    }

    pub fn declared_moments(&self) -> Result<LatentMoments> {
        LatentMoments::new(self.declared_mean, self.declared_variance)
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// `n` independent latent draws.
pub fn sample_latent<R: Rng + ?Sized>(spec: &LatentSpec, n: usize, rng: &mut R) -> Vec<f64> {
    match &spec.shape {
        LatentShape::StandardNormal => (0..n).map(|_| normal(rng)).collect(),
        LatentShape::NormalMixture { components } => (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = components.len() - 1;
                for (k, c) in components.iter().enumerate() {
                    acc += c.weight;
                    if u < acc {
                        pick = k;
                        break;
                    }
                }
                let c = &components[pick];
                c.mean + c.sd() * normal(rng)
            })
            .collect(),
        LatentShape::SkewNormal { mu, sigma, lambda } => {
            let delta = lambda / (1.0 + lambda * lambda).sqrt();
            let rest = (1.0 - delta * delta).sqrt();
            (0..n)
                .map(|_| {
                    let u0 = normal(rng);
                    let u1 = normal(rng);
                    mu + sigma * (delta * u0.abs() + rest * u1)
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItemRanges {
    pub intercept: (f64, f64),
    pub slope: (f64, f64),
}

impl Default for ItemRanges {
    fn default() -> Self {
        Self {
            intercept: (-0.8, 1.12),
            slope: (0.5, 1.5),
        }
    }
}

/// Independent uniform intercepts and slopes.
pub fn draw_item_params<R: Rng + ?Sized>(p: usize, ranges: &ItemRanges, rng: &mut R) -> Result<ItemParams> {
    let (a, b) = ranges.intercept;
    let (c, d) = ranges.slope;
    if !(a <= b) || !(c <= d) {
        return Err(Error::Domain("item parameter ranges must be ordered".into()));
    }
    let alpha0 = (0..p).map(|_| a + (b - a) * rng.random::<f64>()).collect();
    let alpha1 = (0..p).map(|_| c + (d - c) * rng.random::<f64>()).collect();
    ItemParams::new(alpha0, alpha1)
}

/// Latent draws followed by Bernoulli responses.
pub fn simulate_dataset<R: Rng + ?Sized>(
    truth: &ItemParams,
    spec: &LatentSpec,
    n: usize,
    rng: &mut R,
) -> Result<ResponseMatrix> {
    if n < 1 {
        return Err(Error::Domain("sample size must be positive".into()));
    }
    let z = sample_latent(spec, n, rng);
    let p = truth.n_items();
    let mut data = Vec::with_capacity(n * p);
    for zi in z {
        for j in 0..p {
            let pi = logistic(truth.alpha0[j] + truth.alpha1[j] * zi);
            data.push(u8::from(rng.random::<f64>() < pi));
        }
    }
    Ok(ResponseMatrix::from_validated(n, p, data))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StudyTest {
    #[serde(rename = "GH_T1")]
    GhT1,
    #[serde(rename = "GH_T2")]
    GhT2,
    #[serde(rename = "LR1")]
    Lr1,
    #[serde(rename = "LR2")]
    Lr2,
    #[serde(rename = "M2")]
    M2,
}

impl StudyTest {
    pub const ALL: [StudyTest; 5] = [
        StudyTest::GhT1,
        StudyTest::GhT2,
        StudyTest::Lr1,
        StudyTest::Lr2,
        StudyTest::M2,
    ];

    pub fn label(self) -> &'static str {
        match self {
            StudyTest::GhT1 => "GH_T1",
            StudyTest::GhT2 => "GH_T2",
            StudyTest::Lr1 => "LR1",
            StudyTest::Lr2 => "LR2",
            StudyTest::M2 => "M2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let key: String = s.trim().to_ascii_uppercase().chars().filter(|c| *c != '_').collect();
        Self::ALL
            .into_iter()
            .find(|t| t.label().replace('_', "") == key)
            .ok_or_else(|| {
                Error::Domain(format!(
                    "unknown test '{s}'; available: GH_T1, GH_T2, LR1, LR2, M2"
                ))
            })
    }

    /// SNP degree the test compares against, if any.
    pub fn degree(self) -> Option<usize> {
        match self {
            StudyTest::GhT1 | StudyTest::Lr1 => Some(1),
            StudyTest::GhT2 | StudyTest::Lr2 => Some(2),
            StudyTest::M2 => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub scenario: LatentSpec,
    pub p: usize,
    pub n: usize,
    pub reps: usize,
    pub alphas: Vec<f64>,
    pub tests: Vec<StudyTest>,
    pub ics: Vec<Criterion>,
    pub item_ranges: ItemRanges,
    pub seed: u64,
    pub quadrature_nodes: usize,
    pub n_starts: usize,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub start_scale: StartScale,
}

impl StudyConfig {
    pub fn new(scenario: LatentSpec, p: usize, n: usize, reps: usize) -> Self {
        Self {
            scenario,
            p,
            n,
            reps,
            alphas: vec![0.01, 0.05, 0.10],
            tests: vec![StudyTest::GhT1, StudyTest::Lr1, StudyTest::M2],
            ics: Criterion::ALL.to_vec(),
            item_ranges: ItemRanges::default(),
            seed: 1,
            quadrature_nodes: DEFAULT_NODES,
            n_starts: 10,
            max_iterations: 500,
            gradient_tolerance: 1e-5,
            start_scale: StartScale::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.reps < 1 {
            return Err(Error::Domain("at least one replication is required".into()));
        }
        if self.p < 2 || self.n < 3 {
            return Err(Error::Domain("a study needs p >= 2 and n >= 3".into()));
        }
        if self.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(Error::Domain("nominal levels must lie in (0, 1)".into()));
        }
        if self.n_starts < 1 {
            return Err(Error::Domain("n_starts must be at least 1".into()));
        }
        Ok(())
    }

    /// SNP degrees that have to be fitted in every replication.
    pub fn degrees(&self) -> Vec<usize> {
        let mut d: Vec<usize> = self.tests.iter().filter_map(|t| t.degree()).collect();
        if d.is_empty() && !self.ics.is_empty() {
            d.push(1);
        }
        d.sort_unstable();
        d.dedup();
        d
    }

    fn fit_config(&self, base: FitConfig) -> FitConfig {
        FitConfig {
            quadrature_nodes: self.quadrature_nodes,
            max_iterations: self.max_iterations,
            gradient_tolerance: self.gradient_tolerance,
            n_starts: self.n_starts,
            start_scale: self.start_scale,
            ..base
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub model: String,
    pub converged: bool,
    pub objective_value: Option<f64>,
    /// Rescaled item estimates, intercepts then slopes.
    pub items: Option<Vec<f64>>,
    pub angles: Option<Vec<f64>>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRecord {
    pub test: StudyTest,
    pub statistic: Option<f64>,
    pub dof: Option<f64>,
    pub scale: Option<f64>,
    pub p_value: Option<f64>,
    pub error: Option<String>,
}

impl TestRecord {
    pub fn is_valid(&self) -> bool {
        self.p_value.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcRecord {
    pub criterion: Criterion,
    pub degree: usize,
    /// `None` when either fit failed.
    pub selects_snpl: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub index: usize,
    pub fits: Vec<FitRecord>,
    pub tests: Vec<TestRecord>,
    pub ics: Vec<IcRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub alpha: f64,
    pub rate: f64,
    /// `rate -+ z_{1-alpha/2} sqrt(alpha (1 - alpha) / N_v)`.
    pub ci: (f64, f64),
    /// Same with `rate (1 - rate)` under the root.
    pub wald_ci: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSummary {
    pub test: StudyTest,
    pub n_valid: usize,
    pub n_failed: usize,
    pub rates: Vec<RateRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcSummary {
    pub criterion: Criterion,
    pub degree: usize,
    pub n_valid: usize,
    /// Percentage of valid replications selecting `SNP_0`; absent when no
    /// replication had both fits.
    pub snp0_percent: Option<f64>,
    pub snpl_percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasTable {
    pub estimators: Vec<String>,
    pub parameters: Vec<String>,
    /// `values[e][k]`: mean absolute bias of estimator `e` for parameter `k`.
    pub values: Vec<Vec<f64>>,
    pub n_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub config: StudyConfig,
    pub truth: ItemParams,
    /// Truth on the mean-0, variance-1 latent scale.
    pub truth_standardized: ItemParams,
    pub tests: Vec<TestSummary>,
    pub ics: Vec<IcSummary>,
    pub bias: Option<BiasTable>,
    pub replications: Vec<ReplicationRecord>,
}

impl StudyResult {
    pub fn test(&self, t: StudyTest) -> Option<&TestSummary> {
        self.tests.iter().find(|s| s.test == t)
    }

    pub fn ic(&self, c: Criterion, degree: usize) -> Option<&IcSummary> {
        self.ics.iter().find(|s| s.criterion == c && s.degree == degree)
    }

    /// p-values of valid replications of `t`, in replication order.
    pub fn p_values(&self, t: StudyTest) -> Vec<f64> {
        self.replications
            .iter()
            .flat_map(|r| r.tests.iter().filter(|x| x.test == t).filter_map(|x| x.p_value))
            .collect()
    }
}

impl TestSummary {
    pub fn rate(&self, alpha: f64) -> Option<f64> {
        self.rates
            .iter()
            .find(|r| (r.alpha - alpha).abs() < 1e-12)
            .map(|r| r.rate)
    }
}

/// Stream 0 is reserved for the true item parameters; replication `r` uses
/// stream `r + 1`.
fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn fit_record(model: &str, fit: &Result<FitResult>) -> FitRecord {
    match fit {
        Ok(f) => FitRecord {
            model: model.into(),
            converged: f.converged,
            objective_value: Some(f.objective_value),
            items: Some(f.final_params.items.to_vec()),
            angles: Some(f.raw_params.angles.values().to_vec()),
            error: (!f.converged).then(|| "did not converge".to_string()),
        },
        Err(e) => FitRecord {
            model: model.into(),
            converged: false,
            objective_value: None,
            items: None,
            angles: None,
            error: Some(e.to_string()),
        },
    }
}

fn converged(fit: &Option<Result<FitResult>>) -> Option<&FitResult> {
    match fit {
        Some(Ok(f)) if f.converged => Some(f),
        _ => None,
    }
}

fn test_record(test: StudyTest, r: Result<TestReport>) -> TestRecord {
    match r {
        Ok(t) => TestRecord {
            test,
            statistic: Some(t.statistic),
            dof: Some(t.dof),
            scale: Some(t.scale),
            p_value: Some(t.p_value),
            error: None,
        },
        Err(e) => TestRecord {
            test,
            statistic: None,
            dof: None,
            scale: None,
            p_value: None,
            error: Some(e.to_string()),
        },
    }
}

fn missing_fit(what: &str) -> Error {
    Error::Study(format!("required {what} fit unavailable"))
}

/// One replication: simulate, fit, test.
pub fn run_replication(
    config: &StudyConfig,
    truth: &ItemParams,
    truth_std: &ItemParams,
    index: usize,
) -> Result<ReplicationRecord> {
    let mut rng = stream_rng(config.seed, index as u64 + 1);
    let data = simulate_dataset(truth, &config.scenario, config.n, &mut rng)?;
    let start_seed = rng.next_u64();
    let rule = gauss_hermite_rule(config.quadrature_nodes)?;
    let degrees = config.degrees();
    let need_pl = config.tests.iter().any(|t| matches!(t, StudyTest::GhT1 | StudyTest::GhT2));

    let pl = need_pl.then(|| fit_snp0_pairwise(&data, &config.fit_config(FitConfig::pairwise())));
    let full = Some(fit_snp0_full(&data, &config.fit_config(FitConfig::full_ml())));
    let snp0_items = converged(&full).map(|f| f.final_params.items.clone());

    let mut snpl: Vec<(usize, Option<Result<FitResult>>)> = Vec::new();
    for &l in &degrees {
        let cfg = config.fit_config(FitConfig::snpl(l).with_seed(start_seed.wrapping_add(l as u64)));
        // The quadratic model starts from the true items (on the scale the
        // start policy expects); the linear one from the SNP_0 estimates.
        let init = match (l, config.start_scale) {
            (2, StartScale::Direct) => Some(truth),
            (2, StartScale::Matched) => Some(truth_std),
            _ => snp0_items.as_ref(),
        };
        let fit = match init {
            Some(items) => Some(fit_snpl(&data, &cfg, Some(items))),
            None => Some(Err(missing_fit("SNP_0 full-ML"))),
        };
        snpl.push((l, fit));
    }
    let snpl_fit = |l: usize| snpl.iter().find(|(d, _)| *d == l).and_then(|(_, f)| converged(f));

    let mut fits = Vec::new();
    if let Some(f) = &pl {
        fits.push(fit_record("snp0_pl", f));
    }
    if let Some(f) = &full {
        fits.push(fit_record("snp0_full", f));
    }
    for (l, f) in &snpl {
        if let Some(f) = f {
            fits.push(fit_record(&format!("snp{l}"), f));
        }
    }

    let mut tests = Vec::new();
    for &t in &config.tests {
        let outcome = match t {
            StudyTest::GhT1 | StudyTest::GhT2 => {
                let l = t.degree().unwrap_or(1);
                match (converged(&pl), snpl_fit(l)) {
                    (Some(a), Some(b)) => gh_t_from_fits(&data, a, b, &rule).map(|(r, _)| r),
                    (None, _) => Err(missing_fit("SNP_0 pairwise")),
                    (_, None) => Err(missing_fit(&format!("SNP_{l}"))),
                }
            }
            StudyTest::Lr1 | StudyTest::Lr2 => {
                let l = t.degree().unwrap_or(1);
                match (converged(&full), snpl_fit(l)) {
                    (Some(a), Some(b)) => lr_test(b.objective_value, a.objective_value, l),
                    (None, _) => Err(missing_fit("SNP_0 full-ML")),
                    (_, None) => Err(missing_fit(&format!("SNP_{l}"))),
                }
            }
            StudyTest::M2 => match converged(&full) {
                Some(a) => m2_test(&data, a, &rule),
                None => Err(missing_fit("SNP_0 full-ML")),
            },
        };
        tests.push(test_record(t, outcome));
    }

    let mut ics = Vec::new();
    for &c in &config.ics {
        for &l in &degrees {
            let selects_snpl = match (converged(&full), snpl_fit(l)) {
                (Some(a), Some(b)) => {
                    let ic0 = information_criteria(a.objective_value, a.n_params(), data.n())?;
                    let icl = information_criteria(b.objective_value, b.n_params(), data.n())?;
                    Some(icl.preferred_over(&ic0, c))
                }
                _ => None,
            };
            ics.push(IcRecord {
                criterion: c,
                degree: l,
                selects_snpl,
            });
        }
    }

    Ok(ReplicationRecord {
        index,
        fits,
        tests,
        ics,
    })
}

/// Rejection rate with the fixed-`alpha` interval and a Wald interval.
pub fn rate_row(p_values: &[f64], alpha: f64) -> Result<RateRow> {
    let nv = p_values.len();
    if nv == 0 {
        return Err(Error::Study("no valid replications".into()));
    }
    let rate = p_values.iter().filter(|&&p| p <= alpha).count() as f64 / nv as f64;
    let z = Normal::standard().inverse_cdf(1.0 - alpha / 2.0);
    let half = z * (alpha * (1.0 - alpha) / nv as f64).sqrt();
    let wald = z * (rate * (1.0 - rate) / nv as f64).sqrt();
    Ok(RateRow {
        alpha,
        rate,
        ci: (rate - half, rate + half),
        wald_ci: (rate - wald, rate + wald),
    })
}

fn parameter_labels(p: usize) -> Vec<String> {
    (1..=p)
        .map(|j| format!("alpha0_{j}"))
        .chain((1..=p).map(|j| format!("alpha1_{j}")))
        .collect()
}

/// Mean absolute bias per parameter for each estimator, over replications
/// in which every listed estimator converged. `truth` is on the
/// standardized scale.
pub fn bias_report(
    replications: &[ReplicationRecord],
    estimators: &[&str],
    truth: &ItemParams,
) -> Option<BiasTable> {
    let target = truth.to_vec();
    let mut sums = vec![vec![0.0; target.len()]; estimators.len()];
    let mut used = 0;
    for rep in replications {
        let rows: Option<Vec<&Vec<f64>>> = estimators
            .iter()
            .map(|e| {
                rep.fits
                    .iter()
                    .find(|f| f.model == *e && f.converged)
                    .and_then(|f| f.items.as_ref())
            })
            .collect();
        let Some(rows) = rows else { continue };
        used += 1;
        for (s, row) in sums.iter_mut().zip(rows) {
            for ((acc, est), t) in s.iter_mut().zip(row).zip(&target) {
                *acc += (est - t).abs();
            }
        }
    }
    if used == 0 {
        return None;
    }
    Some(BiasTable {
        estimators: estimators.iter().map(|s| s.to_string()).collect(),
        parameters: parameter_labels(truth.n_items()),
        values: sums
            .into_iter()
            .map(|s| s.into_iter().map(|v| v / used as f64).collect())
            .collect(),
        n_used: used,
    })
}

/// True item parameters of a study and their standardized version.
pub fn study_truth(config: &StudyConfig) -> Result<(ItemParams, ItemParams)> {
    let mut rng = stream_rng(config.seed, 0);
    let truth = draw_item_params(config.p, &config.item_ranges, &mut rng)?;
    let std = rescale_item_params(&truth, &config.scenario.declared_moments()?)?;
    Ok((truth, std))
}

/// Run all replications (in parallel on the current rayon pool) and
/// aggregate them in replication order.
pub fn run_study(config: &StudyConfig) -> Result<StudyResult> {
    config.validate()?;
    let (truth, truth_std) = study_truth(config)?;
    let replications: Vec<ReplicationRecord> = (0..config.reps)
        .into_par_iter()
        .map(|i| run_replication(config, &truth, &truth_std, i))
        .collect::<Result<_>>()?;
    summarize(config.clone(), truth, truth_std, replications)
}

/// Aggregate replication records into rates, IC percentages and bias.
pub fn summarize(
    config: StudyConfig,
    truth: ItemParams,
    truth_std: ItemParams,
    replications: Vec<ReplicationRecord>,
) -> Result<StudyResult> {
    let mut tests = Vec::new();
    for &t in &config.tests {
        let p: Vec<f64> = replications
            .iter()
            .flat_map(|r| r.tests.iter().filter(|x| x.test == t).filter_map(|x| x.p_value))
            .collect();
        if p.is_empty() {
            return Err(Error::Study(format!(
                "no valid replications for {} out of {}",
                t.label(),
                replications.len()
            )));
        }
        let rates = config
            .alphas
            .iter()
            .map(|&a| rate_row(&p, a))
            .collect::<Result<Vec<_>>>()?;
        tests.push(TestSummary {
            test: t,
            n_valid: p.len(),
            n_failed: replications.len() - p.len(),
            rates,
        });
    }

    let mut ics = Vec::new();
    for &c in &config.ics {
        for l in config.degrees() {
            let picks: Vec<bool> = replications
                .iter()
                .flat_map(|r| {
                    r.ics
                        .iter()
                        .filter(|x| x.criterion == c && x.degree == l)
                        .filter_map(|x| x.selects_snpl)
                })
                .collect();
            let nv = picks.len();
            let snpl = picks.iter().filter(|&&b| b).count() as f64;
            let pct = |k: f64| (nv > 0).then(|| 100.0 * k / nv as f64);
            ics.push(IcSummary {
                criterion: c,
                degree: l,
                n_valid: nv,
                snp0_percent: pct(nv as f64 - snpl),
                snpl_percent: pct(snpl),
            });
        }
    }

    let mut names: Vec<String> = Vec::new();
    for rep in replications.iter().take(1) {
        names = rep.fits.iter().map(|f| f.model.clone()).collect();
    }
    let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    let bias = bias_report(&replications, &refs, &truth_std);

    Ok(StudyResult {
        config,
        truth,
        truth_standardized: truth_std,
        tests,
        ics,
        bias,
        replications,
    })
}
