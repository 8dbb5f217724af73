use serde::{Deserialize, Serialize};
use snpirt::estimation::FitResult;
use snpirt::inference::{Criterion, IcReport, TestReport};
use snpirt::simulation::{LatentSpec, StudyResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Fit,
    Test,
    Simulate,
    Scenarios,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Command,
    pub input_path: Option<String>,
    pub config_path: Option<String>,
    pub seed: u64,
    pub output_path: Option<String>,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub tool: String,
    pub version: String,
    pub manifest: RunManifest,
    /// Settings after merging flags, config file and defaults.
    pub settings: serde_json::Value,
    pub payload: Payload,
    /// Wall-clock seconds; only recorded on request so that reports are
    /// reproducible byte for byte.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elapsed_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Fit(Box<FitPayload>),
    Test(Box<TestPayload>),
    Simulate(Box<StudyResult>),
    Scenarios { scenarios: Vec<ScenarioEntry> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub items: Vec<String>,
    pub rows_read: usize,
    pub excluded: usize,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitPayload {
    pub data: DataSummary,
    pub fit: FitResult,
    /// Parameter labels for `estimates` and `standard_errors`.
    pub labels: Vec<String>,
    /// Rescaled items followed by the angles.
    pub estimates: Vec<f64>,
    /// Sandwich standard errors of `estimates`.
    pub standard_errors: Option<Vec<f64>>,
    pub standard_error_note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    pub loglik: f64,
    pub n_params: usize,
    pub converged: bool,
    pub iterations: usize,
    pub angles: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GhtSection {
    pub report: TestReport,
    pub a_scale: f64,
    pub b_dof: f64,
    pub rank: usize,
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcSection {
    pub snp0: IcReport,
    pub snpl: IcReport,
    /// Model each criterion selects.
    pub selected: Vec<(Criterion, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestPayload {
    pub data: DataSummary,
    pub degree: usize,
    pub models: Vec<ModelSummary>,
    pub ght: Option<GhtSection>,
    pub gh: Option<TestReport>,
    pub lr: Option<TestReport>,
    pub m2: Option<TestReport>,
    pub ic: Option<IcSection>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEntry {
    pub spec: LatentSpec,
    pub mean: f64,
    pub variance: f64,
}
