//! Maximum-likelihood fits of `SNP_0` (full and pairwise) and quasi-ML
//! fits of `SNP_L`.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::data::ResponseMatrix;
use crate::error::{Error, Result};
use crate::likelihood::{objective_total_and_grad, Objective};
use crate::optim::{minimize, Bounds, OptimOptions, OptimOutcome, StopReason};
use crate::params::{rescale_item_params, unscale_item_params, ExtendedParams, ItemParams};
use crate::quadrature::{gauss_hermite_rule, QuadratureRule, DEFAULT_NODES};
use crate::snp::{angle_grid, LatentMoments, SnpAngles, SnpDensity};

/// Default angles for the `L = 2` start, a right-skewed SNP shape.
pub const DEFAULT_L2_START: [f64; 2] = [0.7, 1.0];

/// Default number of angle starts for `L = 1`.
pub const DEFAULT_L1_STARTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitObjective {
    FullMlSnp0,
    PairwiseSnp0,
    QuasiMlSnpl,
}

/// How the initial item parameters enter each `SNP_L` start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartScale {
    /// Used as the raw parameters, whatever the starting density.
    #[default]
    Direct,
    /// Mapped onto the raw scale of the starting density so that every
    /// start implies the same standardized response model.
    Matched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub objective: FitObjective,
    /// Polynomial degree; only read by the quasi-ML fit.
    pub degree: usize,
    pub quadrature_nodes: usize,
    pub max_iterations: usize,
    /// Tolerance on the projected gradient norm of the mean per-observation
    /// objective.
    pub gradient_tolerance: f64,
    pub relative_tolerance: f64,
    /// Number of `L = 1` angle starts drawn from the 0.1-spaced grid.
    pub n_starts: usize,
    pub seed: u64,
    /// Override for the `L = 2` starting angles.
    pub initial_angles: Option<Vec<f64>>,
    /// Additional `L = 2` starts tried after the default one.
    pub extra_starts: Vec<Vec<f64>>,
    /// Hold the angles fixed at these values and fit only the items.
    pub fixed_angles: Option<Vec<f64>>,
    pub start_scale: StartScale,
}

impl FitConfig {
    pub fn new(objective: FitObjective, degree: usize) -> Self {
        Self {
            objective,
            degree,
            quadrature_nodes: DEFAULT_NODES,
            max_iterations: 500,
            gradient_tolerance: 1e-5,
            relative_tolerance: 1e-9,
            n_starts: DEFAULT_L1_STARTS,
            seed: 0,
            initial_angles: None,
            extra_starts: Vec::new(),
            fixed_angles: None,
            start_scale: StartScale::default(),
        }
    }

    pub fn full_ml() -> Self {
        Self::new(FitObjective::FullMlSnp0, 0)
    }

    pub fn pairwise() -> Self {
        Self::new(FitObjective::PairwiseSnp0, 0)
    }

    pub fn snpl(degree: usize) -> Self {
        Self::new(FitObjective::QuasiMlSnpl, degree)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_starts < 1 {
            return Err(Error::Domain("n_starts must be at least 1".into()));
        }
        if !(self.gradient_tolerance > 0.0) || !(self.relative_tolerance > 0.0) {
            return Err(Error::Domain("tolerances must be positive".into()));
        }
        Ok(())
    }

    fn options(&self) -> OptimOptions {
        OptimOptions {
            max_iterations: self.max_iterations,
            gradient_tolerance: self.gradient_tolerance,
            relative_tolerance: self.relative_tolerance,
        }
    }

    pub fn rule(&self) -> Result<QuadratureRule> {
        gauss_hermite_rule(self.quadrature_nodes)
    }
}

/// Outcome of one optimizer start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartDiagnostics {
    pub start_index: usize,
    pub initial_angles: Vec<f64>,
    pub objective_value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub stop_reason: StopReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub objective: FitObjective,
    /// Estimates on the scale of the fitted latent density.
    pub raw_params: ExtendedParams,
    /// Items rescaled to a mean-0, variance-1 latent variable.
    pub final_params: ExtendedParams,
    pub latent: LatentMoments,
    pub objective_value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub start_index: usize,
    /// Projected gradient norm of the mean per-observation objective.
    pub gradient_norm: f64,
    /// Some angle sits on `+-pi/2`.
    pub boundary: bool,
    pub n: usize,
    pub starts: Vec<StartDiagnostics>,
}

impl FitResult {
    /// Number of free parameters, `2p + L`.
    pub fn n_params(&self) -> usize {
        self.raw_params.dim()
    }
}

fn check_separation(data: &ResponseMatrix) -> Result<()> {
    let constant = data.constant_items();
    if let Some(&j) = constant.first() {
        let which: Vec<String> = constant.iter().map(|j| (j + 1).to_string()).collect();
        return Err(Error::Estimation(format!(
            "item {} has all-equal responses (constant items: {}); its intercept diverges",
            j + 1,
            which.join(", ")
        )));
    }
    Ok(())
}

fn default_items(data: &ResponseMatrix) -> ItemParams {
    let alpha0 = data
        .item_means()
        .iter()
        .map(|m| {
            let m = m.clamp(1e-3, 1.0 - 1e-3);
            (m / (1.0 - m)).ln()
        })
        .collect();
    ItemParams {
        alpha0,
        alpha1: vec![1.0; data.p()],
    }
}

fn run_optimizer(
    objective: Objective,
    data: &ResponseMatrix,
    rule: &QuadratureRule,
    x0: &[f64],
    bounds: &Bounds,
    opts: &OptimOptions,
) -> OptimOutcome {
    let scale = 1.0 / data.n() as f64;
    let f = |x: &[f64]| -> Option<(f64, Vec<f64>)> {
        let (v, g) = objective_total_and_grad(objective, data, x, rule).ok()?;
        Some((-v * scale, g.into_iter().map(|c| -c * scale).collect()))
    };
    minimize(f, x0, bounds, opts)
}

fn snp0_fit(data: &ResponseMatrix, config: &FitConfig, kind: FitObjective) -> Result<FitResult> {
    config.validate()?;
    check_separation(data)?;
    let rule = config.rule()?;
    let objective = match kind {
        FitObjective::PairwiseSnp0 => Objective::Pairwise,
        _ => Objective::Full,
    };
    let x0 = default_items(data).to_vec();
    let out = run_optimizer(
        objective,
        data,
        &rule,
        &x0,
        &Bounds::unbounded(x0.len()),
        &config.options(),
    );
    if out.reason == StopReason::NonFinite {
        return Err(Error::Estimation("objective not finite at the starting values".into()));
    }
    let params = ExtendedParams::normal(ItemParams::from_slice(&out.x));
    let diag = StartDiagnostics {
        start_index: 0,
        initial_angles: Vec::new(),
        objective_value: -out.value * data.n() as f64,
        converged: out.converged,
        iterations: out.iterations,
        gradient_norm: out.projected_gradient_norm,
        stop_reason: out.reason,
    };
    Ok(FitResult {
        objective: kind,
        raw_params: params.clone(),
        final_params: params,
        latent: LatentMoments::STANDARD,
        objective_value: diag.objective_value,
        converged: out.converged,
        iterations: out.iterations,
        start_index: 0,
        gradient_norm: out.projected_gradient_norm,
        boundary: false,
        n: data.n(),
        starts: vec![diag],
    })
}

/// Full maximum likelihood for the normal-latent 2PL model.
pub fn fit_snp0_full(data: &ResponseMatrix, config: &FitConfig) -> Result<FitResult> {
    snp0_fit(data, config, FitObjective::FullMlSnp0)
}

/// Pairwise maximum likelihood for the normal-latent 2PL model.
pub fn fit_snp0_pairwise(data: &ResponseMatrix, config: &FitConfig) -> Result<FitResult> {
    snp0_fit(data, config, FitObjective::PairwiseSnp0)
}

/// Starting angles for the quasi-ML fit.
pub fn starting_angles(config: &FitConfig) -> Result<Vec<Vec<f64>>> {
    if let Some(fixed) = &config.fixed_angles {
        return Ok(vec![fixed.clone()]);
    }
    match config.degree {
        1 => {
            let grid = angle_grid(0.1);
            let k = config.n_starts.min(grid.len());
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            Ok(sample(&mut rng, grid.len(), k)
                .into_iter()
                .map(|i| vec![grid[i]])
                .collect())
        }
        2 => {
            let mut out = vec![config
                .initial_angles
                .clone()
                .unwrap_or_else(|| DEFAULT_L2_START.to_vec())];
            out.extend(config.extra_starts.iter().cloned());
            Ok(out)
        }
        l => Err(Error::Domain(format!("quasi-ML fit needs L in {{1, 2}}, got {l}"))),
    }
}

/// Quasi-maximum likelihood for `SNP_L`, `L in {1, 2}`.
///
/// `init_items` are item parameters on the standardized latent scale (the
/// `SNP_0` full-ML estimates when absent). For each start they are mapped
/// onto the raw scale of the starting density, so every start begins from
/// the same implied response model.
pub fn fit_snpl(
    data: &ResponseMatrix,
    config: &FitConfig,
    init_items: Option<&ItemParams>,
) -> Result<FitResult> {
    config.validate()?;
    let l = config.degree;
    if !(1..=2).contains(&l) {
        return Err(Error::Domain(format!("quasi-ML fit needs L in {{1, 2}}, got {l}")));
    }
    check_separation(data)?;
    let rule = config.rule()?;
    let init = match init_items {
        Some(it) => it.clone(),
        None => {
            let snp0 = fit_snp0_full(data, &FitConfig { objective: FitObjective::FullMlSnp0, ..config.clone() })?;
            snp0.final_params.items
        }
    };
    if init.n_items() != data.p() {
        return Err(Error::Domain("initial items do not match data".into()));
    }
    let starts = starting_angles(config)?;
    for s in &starts {
        SnpAngles::new(s.clone())?;
        if s.len() != l {
            return Err(Error::Domain(format!("start {s:?} does not have {l} angles")));
        }
    }

    let p = data.p();
    let dim = 2 * p + l;
    let mut bounds = Bounds::unbounded(dim);
    if let Some(fixed) = &config.fixed_angles {
        for m in 0..l {
            bounds.lower[2 * p + m] = fixed[m];
            bounds.upper[2 * p + m] = fixed[m];
        }
    } else {
        for m in 0..l {
            bounds.lower[2 * p + m] = -FRAC_PI_2;
            bounds.upper[2 * p + m] = FRAC_PI_2;
        }
    }

    let opts = config.options();
    let mut diags = Vec::with_capacity(starts.len());
    let mut best: Option<(usize, OptimOutcome)> = None;
    for (idx, phi) in starts.iter().enumerate() {
        let moments = SnpDensity::new(&SnpAngles::new(phi.clone())?)?.moments();
        let raw_items = match config.start_scale {
            StartScale::Direct => init.clone(),
            StartScale::Matched => unscale_item_params(&init, &moments)?,
        };
        let mut x0 = raw_items.to_vec();
        x0.extend_from_slice(phi);
        let out = run_optimizer(Objective::Full, data, &rule, &x0, &bounds, &opts);
        diags.push(StartDiagnostics {
            start_index: idx,
            initial_angles: phi.clone(),
            objective_value: -out.value * data.n() as f64,
            converged: out.converged,
            iterations: out.iterations,
            gradient_norm: out.projected_gradient_norm,
            stop_reason: out.reason,
        });
        if !out.converged {
            continue;
        }
        let better = match &best {
            None => true,
            Some((_, b)) => out.value < b.value,
        };
        if better {
            best = Some((idx, out));
        }
    }

    let Some((start_index, out)) = best else {
        let detail: Vec<String> = diags
            .iter()
            .map(|d| {
                format!(
                    "start {} at {:?}: {:?} after {} iterations, gradient norm {:.3e}",
                    d.start_index, d.initial_angles, d.stop_reason, d.iterations, d.gradient_norm
                )
            })
            .collect();
        return Err(Error::Estimation(format!(
            "no SNP_{l} start converged: {}",
            detail.join("; ")
        )));
    };

    let raw = ExtendedParams::from_slice(&out.x, p)?;
    let latent = SnpDensity::new(&raw.angles)?.moments();
    let final_items = rescale_item_params(&raw.items, &latent)?;
    Ok(FitResult {
        objective: FitObjective::QuasiMlSnpl,
        boundary: raw.angles.on_boundary(1e-8),
        final_params: ExtendedParams::new(final_items, raw.angles.clone()),
        raw_params: raw,
        latent,
        objective_value: -out.value * data.n() as f64,
        converged: true,
        iterations: out.iterations,
        start_index,
        gradient_norm: out.projected_gradient_norm,
        n: data.n(),
        starts: diags,
    })
}

/// Dispatch on `config.objective`.
pub fn fit(data: &ResponseMatrix, config: &FitConfig, init_items: Option<&ItemParams>) -> Result<FitResult> {
    match config.objective {
        FitObjective::FullMlSnp0 => fit_snp0_full(data, config),
        FitObjective::PairwiseSnp0 => fit_snp0_pairwise(data, config),
        FitObjective::QuasiMlSnpl => fit_snpl(data, config, init_items),
    }
}
