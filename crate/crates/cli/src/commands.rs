use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use snpirt::estimation::{fit_snp0_full, fit_snp0_pairwise, fit_snpl, FitConfig, FitResult, StartScale};
use snpirt::inference::{
    gh_full_test, gh_t_from_fits, information_criteria, lr_test, m2_dof, m2_test, Criterion, DEFAULT_ALPHAS,
};
use snpirt::io::{ingest_csv, Ingested};
use snpirt::likelihood::Objective;
use snpirt::simulation::{run_study, LatentSpec, StudyConfig, SCENARIOS};
use snpirt::snp::MAX_DEGREE;

use crate::config::{check_alphas, parse_criteria, parse_data_tests, parse_study_tests, pick, DataTest, FileConfig, Method};
use crate::report::{
    Command, DataSummary, FitPayload, GhtSection, IcSection, ModelSummary, Payload, ReportDocument, RunManifest,
    ScenarioEntry, TestPayload,
};
use crate::{text, CommonArgs, Cmd, FitSettings};

const DEFAULT_SEED: u64 = 1;

pub fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Fit(a) => {
            let file = load_config(&a.common)?;
            let s = ResolvedFit::new(&a.fit, &a.common, &file, a.method.or(file.method))?;
            let ctx = Run::start(Command::Fit, &a.common, &file, Some(&s.data))?;
            let payload = cmd_fit(&s)?;
            ctx.finish(&a.common, serde_json::to_value(&s)?, Payload::Fit(Box::new(payload)))
        }
        Cmd::Test(a) => {
            let file = load_config(&a.common)?;
            let s = ResolvedTest::new(&a, &file)?;
            let ctx = Run::start(Command::Test, &a.common, &file, Some(&s.fit.data))?;
            let payload = cmd_test(&s)?;
            ctx.finish(&a.common, serde_json::to_value(&s)?, Payload::Test(Box::new(payload)))
        }
        Cmd::Simulate(a) => {
            let file = load_config(&a.common)?;
            let cfg = study_config(&a, &file)?;
            let ctx = Run::start(Command::Simulate, &a.common, &file, None)?;
            let result = run_study(&cfg)?;
            ctx.finish(&a.common, serde_json::to_value(&cfg)?, Payload::Simulate(Box::new(result)))
        }
        Cmd::Scenarios(c) => {
            let file = load_config(&c)?;
            let ctx = Run::start(Command::Scenarios, &c, &file, None)?;
            let scenarios = SCENARIOS
                .iter()
                .map(|name| {
                    let spec = LatentSpec::scenario(name)?;
                    let (mean, variance) = spec.theoretical_moments();
                    Ok(ScenarioEntry { spec, mean, variance })
                })
                .collect::<Result<Vec<_>>>()?;
            ctx.finish(&c, serde_json::Value::Null, Payload::Scenarios { scenarios })
        }
    }
}

fn load_config(c: &CommonArgs) -> Result<FileConfig> {
    match &c.config {
        Some(p) => FileConfig::load(p),
        None => Ok(FileConfig::default()),
    }
}

/// Shared bookkeeping around a command: thread pool, manifest, timing.
struct Run {
    manifest: RunManifest,
    out: Option<PathBuf>,
    started: Instant,
}

impl Run {
    fn start(command: Command, c: &CommonArgs, file: &FileConfig, input: Option<&Path>) -> Result<Self> {
        let threads = pick(c.threads, &file.threads, 0);
        if threads > 0 {
            // Fails only when a pool already exists, which cannot happen here.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
        }
        let out = c.out.clone().or_else(|| file.out.clone());
        let manifest = RunManifest {
            command,
            input_path: input.map(|p| p.display().to_string()),
            config_path: c.config.as_ref().map(|p| p.display().to_string()),
            seed: pick(c.seed, &file.seed, DEFAULT_SEED),
            output_path: out.as_ref().map(|p| p.display().to_string()),
            threads: rayon::current_num_threads(),
        };
        Ok(Self {
            manifest,
            out,
            started: Instant::now(),
        })
    }

    fn finish(self, c: &CommonArgs, settings: serde_json::Value, payload: Payload) -> Result<()> {
        let doc = ReportDocument {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            manifest: self.manifest,
            settings,
            payload,
            elapsed_seconds: c.timing.then(|| self.started.elapsed().as_secs_f64()),
        };
        let json = serde_json::to_string_pretty(&doc)?;
        if let Some(path) = &self.out {
            std::fs::write(path, format!("{json}\n")).with_context(|| format!("cannot write {}", path.display()))?;
        }
        if c.json {
            println!("{json}");
        } else {
            print!("{}", text::render(&doc));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedFit {
    pub data: PathBuf,
    #[serde(rename = "L")]
    pub degree: usize,
    pub method: Method,
    pub starts: usize,
    pub quadrature: usize,
    pub seed: u64,
    pub start_scale: StartScale,
    pub initial_angles: Option<Vec<f64>>,
}

impl ResolvedFit {
    fn new(f: &FitSettings, c: &CommonArgs, file: &FileConfig, method: Option<Method>) -> Result<Self> {
        let data = f
            .data
            .clone()
            .or_else(|| file.data.clone())
            .context("--data is required")?;
        let base = FitConfig::snpl(1);
        let s = Self {
            data,
            degree: pick(f.degree, &file.degree, 1),
            method: method.unwrap_or(Method::Full),
            starts: pick(f.starts, &file.starts, base.n_starts),
            quadrature: pick(f.quadrature, &file.quadrature, base.quadrature_nodes),
            seed: pick(c.seed, &file.seed, DEFAULT_SEED),
            start_scale: f.start_scale.map(Into::into).or(file.start_scale).unwrap_or_default(),
            initial_angles: file.initial_angles.clone(),
        };
        if s.degree > MAX_DEGREE {
            bail!("--L must be 0, 1 or 2, got {}", s.degree);
        }
        if s.starts < 1 {
            bail!("--starts must be at least 1");
        }
        Ok(s)
    }

    fn config(&self, base: FitConfig) -> FitConfig {
        FitConfig {
            quadrature_nodes: self.quadrature,
            n_starts: self.starts,
            start_scale: self.start_scale,
            initial_angles: self.initial_angles.clone(),
            ..base.with_seed(self.seed)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedTest {
    #[serde(flatten)]
    pub fit: ResolvedFit,
    pub tests: Vec<DataTest>,
    pub ics: Vec<Criterion>,
    pub alpha: Vec<f64>,
}

impl ResolvedTest {
    fn new(a: &crate::TestArgs, file: &FileConfig) -> Result<Self> {
        let fit = ResolvedFit::new(&a.fit, &a.common, file, None)?;
        let tests = parse_data_tests(&pick(
            a.tests.clone(),
            &file.tests,
            vec!["ght".into(), "lr".into(), "m2".into(), "ic".into()],
        ))?;
        let ics = parse_criteria(&pick(a.ics.clone(), &file.ics, vec!["AIC".into(), "BIC".into(), "HQ".into()]))?;
        let alpha = pick(a.alpha.clone(), &file.alpha, DEFAULT_ALPHAS.to_vec());
        check_alphas(&alpha)?;
        if fit.degree < 1 {
            bail!("tests compare SNP_0 with SNP_L; --L must be 1 or 2");
        }
        Ok(Self { fit, tests, ics, alpha })
    }

    fn wants(&self, t: DataTest) -> bool {
        self.tests.contains(&t)
    }
}

fn ingest(path: &Path) -> Result<(Ingested, DataSummary)> {
    let ing = ingest_csv(path)?;
    if ing.excluded > 0 {
        eprintln!(
            "note: {} of {} rows excluded for missing responses",
            ing.excluded, ing.rows_read
        );
    }
    let summary = DataSummary {
        items: ing.items.clone(),
        rows_read: ing.rows_read,
        excluded: ing.excluded,
        n: ing.data.n(),
    };
    Ok((ing, summary))
}

fn require_converged(fit: FitResult, what: &str) -> Result<FitResult> {
    if !fit.converged {
        bail!("{what} fit did not converge (gradient norm {:.2e})", fit.gradient_norm);
    }
    Ok(fit)
}

fn cmd_fit(s: &ResolvedFit) -> Result<FitPayload> {
    let (ing, data_summary) = ingest(&s.data)?;
    let data = &ing.data;
    let (fit, objective) = match (s.degree, s.method) {
        (0, Method::Full) => (fit_snp0_full(data, &s.config(FitConfig::full_ml()))?, Objective::Full),
        (0, Method::Pairwise) => (fit_snp0_pairwise(data, &s.config(FitConfig::pairwise()))?, Objective::Pairwise),
        (l, Method::Full) => {
            let snp0 = require_converged(fit_snp0_full(data, &s.config(FitConfig::full_ml()))?, "SNP_0")?;
            let fit = fit_snpl(data, &s.config(FitConfig::snpl(l)), Some(&snp0.final_params.items))?;
            (fit, Objective::FullStandardized)
        }
        (_, Method::Pairwise) => bail!("the pairwise estimator is only available for L = 0"),
    };
    let rule = s.config(FitConfig::full_ml()).rule()?;
    let mut labels: Vec<String> = ing.items.iter().map(|i| format!("alpha0[{i}]")).collect();
    labels.extend(ing.items.iter().map(|i| format!("alpha1[{i}]")));
    let mut estimates = fit.final_params.items.to_vec();
    if objective != Objective::Pairwise {
        let phi = fit.final_params.angles.values();
        labels.extend((1..=phi.len()).map(|k| format!("phi{k}")));
        estimates.extend_from_slice(phi);
    }
    let (standard_errors, standard_error_note) =
        match snpirt::inference::sandwich_parts(objective, data, &fit.final_params, &rule)
            .and_then(|(parts, _)| parts.standard_errors())
        {
            Ok(se) if fit.converged => (Some(se), fit.boundary.then(|| "an angle is on the boundary".into())),
            Ok(_) => (None, Some("fit did not converge".into())),
            Err(e) => (None, Some(e.to_string())),
        };
    Ok(FitPayload {
        data: data_summary,
        fit,
        labels,
        estimates,
        standard_errors,
        standard_error_note,
    })
}

fn model_summary(name: &str, f: &FitResult) -> ModelSummary {
    ModelSummary {
        model: name.into(),
        loglik: f.objective_value,
        n_params: f.n_params(),
        converged: f.converged,
        iterations: f.iterations,
        angles: f.raw_params.angles.values().to_vec(),
    }
}

fn cmd_test(s: &ResolvedTest) -> Result<TestPayload> {
    let (ing, data_summary) = ingest(&s.fit.data)?;
    let data = &ing.data;
    if s.wants(DataTest::M2) {
        m2_dof(data.p())?;
    }
    let l = s.fit.degree;
    let cfg = &s.fit;
    let rule = cfg.config(FitConfig::full_ml()).rule()?;
    let mut notes = Vec::new();
    let mut models = Vec::new();

    let full = require_converged(fit_snp0_full(data, &cfg.config(FitConfig::full_ml()))?, "SNP_0 full-ML")?;
    models.push(model_summary("snp0_full", &full));
    let snpl = fit_snpl(data, &cfg.config(FitConfig::snpl(l)), Some(&full.final_params.items))?;
    let snpl = require_converged(snpl, &format!("SNP_{l}"))?;
    models.push(model_summary(&format!("snp{l}"), &snpl));
    if snpl.boundary {
        notes.push(format!("SNP_{l} angles are on the boundary; the fit coincides with a normal latent"));
    }

    let pl = if s.wants(DataTest::Ght) || s.wants(DataTest::Gh) {
        let pl = require_converged(fit_snp0_pairwise(data, &cfg.config(FitConfig::pairwise()))?, "SNP_0 pairwise")?;
        models.push(model_summary("snp0_pl", &pl));
        Some(pl)
    } else {
        None
    };

    let (mut ght, mut gh) = (None, None);
    if let Some(pl) = &pl {
        let (report, cov) = gh_t_from_fits(data, pl, &snpl, &rule)?;
        if s.wants(DataTest::Gh) {
            let diff: Vec<f64> = snpl
                .final_params
                .items
                .to_vec()
                .iter()
                .zip(pl.final_params.items.to_vec())
                .map(|(a, b)| a - b)
                .collect();
            match gh_full_test(&diff, &cov) {
                Ok(r) => gh = Some(r.with_alphas(&s.alpha)),
                Err(e) => notes.push(format!("GH: {e}")),
            }
        }
        if s.wants(DataTest::Ght) {
            ght = Some(GhtSection {
                report: report.with_alphas(&s.alpha),
                a_scale: cov.a_scale,
                b_dof: cov.b_dof,
                rank: cov.rank,
                eigenvalues: cov.eigenvalues.clone(),
            });
        }
    }

    let lr = if s.wants(DataTest::Lr) {
        Some(lr_test(snpl.objective_value, full.objective_value, l)?.with_alphas(&s.alpha))
    } else {
        None
    };
    let m2 = if s.wants(DataTest::M2) {
        notes.push("M2 uses the limited-information statistic of the SNP_0 full-ML fit".into());
        Some(m2_test(data, &full, &rule)?.with_alphas(&s.alpha))
    } else {
        None
    };
    let ic = if s.wants(DataTest::Ic) {
        let snp0 = information_criteria(full.objective_value, full.n_params(), data.n())?;
        let snpl_ic = information_criteria(snpl.objective_value, snpl.n_params(), data.n())?;
        let selected = s
            .ics
            .iter()
            .map(|&c| {
                let m = if snpl_ic.preferred_over(&snp0, c) {
                    format!("snp{l}")
                } else {
                    "snp0".to_string()
                };
                (c, m)
            })
            .collect();
        Some(IcSection {
            snp0,
            snpl: snpl_ic,
            selected,
        })
    } else {
        None
    };

    Ok(TestPayload {
        data: data_summary,
        degree: l,
        models,
        ght,
        gh,
        lr,
        m2,
        ic,
        notes,
    })
}

fn study_config(a: &crate::SimArgs, file: &FileConfig) -> Result<StudyConfig> {
    let spec = match (a.scenario.as_ref(), &file.latent) {
        (None, Some(inline)) if file.scenario.is_none() => {
            inline.validate()?;
            inline.clone()
        }
        _ => LatentSpec::scenario(&pick(a.scenario.clone(), &file.scenario, "A".to_string()))?,
    };
    let mut cfg = StudyConfig::new(
        spec,
        pick(a.p, &file.p, 10),
        pick(a.n, &file.n, 1000),
        pick(a.reps, &file.reps, 100),
    );
    cfg.seed = pick(a.common.seed, &file.seed, DEFAULT_SEED);
    if let Some(t) = a.tests.clone().or_else(|| file.tests.clone()) {
        cfg.tests = parse_study_tests(&t)?;
    }
    if let Some(c) = a.ics.clone().or_else(|| file.ics.clone()) {
        cfg.ics = parse_criteria(&c)?;
    }
    cfg.alphas = pick(a.alpha.clone(), &file.alpha, cfg.alphas);
    check_alphas(&cfg.alphas)?;
    cfg.n_starts = pick(a.starts, &file.starts, cfg.n_starts);
    cfg.quadrature_nodes = pick(a.quadrature, &file.quadrature, cfg.quadrature_nodes);
    cfg.start_scale = a.start_scale.map(Into::into).or(file.start_scale).unwrap_or_default();
    if cfg.tests.contains(&snpirt::simulation::StudyTest::M2) {
        m2_dof(cfg.p)?;
    }
    cfg.validate()?;
    Ok(cfg)
}
