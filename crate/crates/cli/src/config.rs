use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use snpirt::estimation::StartScale;
use snpirt::inference::Criterion;
use snpirt::simulation::{LatentSpec, StudyTest};

/// Keys accepted in a TOML config file. Every key mirrors a command-line
/// flag; flags win over the file, the file over built-in defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data: Option<PathBuf>,
    #[serde(rename = "L")]
    pub degree: Option<usize>,
    pub method: Option<Method>,
    pub starts: Option<usize>,
    pub quadrature: Option<usize>,
    pub tests: Option<Vec<String>>,
    pub ics: Option<Vec<String>>,
    pub alpha: Option<Vec<f64>>,
    pub scenario: Option<String>,
    /// Inline latent distribution, used when no scenario name is given.
    pub latent: Option<LatentSpec>,
    pub n: Option<usize>,
    pub p: Option<usize>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub start_scale: Option<StartScale>,
    pub initial_angles: Option<Vec<f64>>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Full maximum likelihood
    Full,
    /// Pairwise maximum likelihood
    Pairwise,
}

/// Tests selectable for observed data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataTest {
    Ght,
    Gh,
    Lr,
    M2,
    Ic,
}

impl DataTest {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "ght" | "gh_t" => DataTest::Ght,
            "gh" => DataTest::Gh,
            "lr" => DataTest::Lr,
            "m2" => DataTest::M2,
            "ic" => DataTest::Ic,
            other => bail!("unknown test '{other}'; available: ght, gh, lr, m2, ic"),
        })
    }
}

pub fn parse_data_tests(list: &[String]) -> Result<Vec<DataTest>> {
    let mut out = list
        .iter()
        .flat_map(|s| s.split(','))
        .filter(|s| !s.trim().is_empty())
        .map(DataTest::parse)
        .collect::<Result<Vec<_>>>()?;
    out.sort();
    out.dedup();
    if out.is_empty() {
        bail!("no tests selected");
    }
    Ok(out)
}

pub fn parse_study_tests(list: &[String]) -> Result<Vec<StudyTest>> {
    let mut out = Vec::new();
    for s in list.iter().flat_map(|s| s.split(',')).filter(|s| !s.trim().is_empty()) {
        let t = StudyTest::parse(s)?;
        if !out.contains(&t) {
            out.push(t);
        }
    }
    Ok(out)
}

pub fn parse_criteria(list: &[String]) -> Result<Vec<Criterion>> {
    let mut out = Vec::new();
    for s in list.iter().flat_map(|s| s.split(',')).filter(|s| !s.trim().is_empty()) {
        let c = match s.trim().to_ascii_uppercase().as_str() {
            "AIC" => Criterion::Aic,
            "BIC" => Criterion::Bic,
            "HQ" => Criterion::Hq,
            other => bail!("unknown criterion '{other}'; available: AIC, BIC, HQ"),
        };
        if !out.contains(&c) {
            out.push(c);
        }
    }
    Ok(out)
}

pub fn check_alphas(alphas: &[f64]) -> Result<()> {
    if alphas.is_empty() || alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
        bail!("--alpha values must lie in (0, 1)");
    }
    Ok(())
}

/// First of flag, file value, default.
pub fn pick<T: Clone>(flag: Option<T>, file: &Option<T>, default: T) -> T {
    flag.or_else(|| file.clone()).unwrap_or(default)
}
