use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use snpirt::simulation::{draw_item_params, simulate_dataset, ItemRanges, LatentSpec};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_snpirt"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_csv(dir: &Path, scenario: &str, n: usize, p: usize, seed: u64) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = draw_item_params(p, &ItemRanges::default(), &mut rng).unwrap();
    let spec = LatentSpec::scenario(scenario).unwrap();
    let data = simulate_dataset(&truth, &spec, n, &mut rng).unwrap();
    let mut s = (1..=p).map(|j| format!("i{j}")).collect::<Vec<_>>().join(",");
    s.push('\n');
    for i in 0..data.n() {
        let row: Vec<String> = data.row(i).iter().map(|v| v.to_string()).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    let path = dir.join(format!("{scenario}_{p}.csv"));
    std::fs::write(&path, s).unwrap();
    path
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn test_command_reports_all_sections() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_csv(dir.path(), "C", 800, 6, 3);
    let out = run(&["test", "--data", csv.to_str().unwrap(), "--tests", "ght,lr,m2,ic", "--json"]);
    let doc = json(&out);
    let p = &doc["payload"];
    assert_eq!(p["kind"], "test");
    for key in ["ght", "lr", "m2", "ic"] {
        assert!(!p[key].is_null(), "missing {key}");
    }
    let g = &p["ght"];
    let a = g["a_scale"].as_f64().unwrap();
    let b = g["b_dof"].as_f64().unwrap();
    let sum: f64 = g["eigenvalues"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum();
    assert!((a * b - sum).abs() < 1e-8 * sum.abs().max(1.0));
    assert_eq!(p["ic"]["selected"].as_array().unwrap().len(), 3);
}

#[test]
fn m2_needs_five_items() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_csv(dir.path(), "A", 300, 4, 1);
    let out = run(&["test", "--data", csv.to_str().unwrap(), "--tests", "m2"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("M2 undefined"));
}

#[test]
fn same_seed_same_report() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for (out, threads) in [(&a, "1"), (&b, "2")] {
        let o = run(&[
            "simulate", "--scenario", "B", "--reps", "3", "--n", "300", "--p", "5", "--seed", "7", "--threads",
            threads, "--out", out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (ja, jb): (Value, Value) = (
        serde_json::from_str(&std::fs::read_to_string(&a).unwrap()).unwrap(),
        serde_json::from_str(&std::fs::read_to_string(&b).unwrap()).unwrap(),
    );
    assert_eq!(ja["payload"], jb["payload"]);
    assert_eq!(ja["settings"], jb["settings"]);
}

#[test]
fn unknown_scenario_is_rejected() {
    let out = run(&["simulate", "--scenario", "Z", "--reps", "1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("A, B, C, D, E"));
}

#[test]
fn single_replication_smoke() {
    let out = run(&["simulate", "--scenario", "A", "--reps", "1", "--n", "300", "--p", "5", "--json"]);
    let doc = json(&out);
    let tests = doc["payload"]["tests"].as_array().unwrap();
    for t in tests {
        let nv = t["n_valid"].as_u64().unwrap();
        let nf = t["n_failed"].as_u64().unwrap();
        assert_eq!(nv + nf, 1);
    }
    assert_eq!(doc["payload"]["replications"].as_array().unwrap().len(), 1);
}

#[test]
fn fit_reports_standard_errors() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_csv(dir.path(), "A", 500, 5, 2);
    let doc = json(&run(&["fit", "--data", csv.to_str().unwrap(), "--L", "0", "--json"]));
    let se = doc["payload"]["standard_errors"].as_array().unwrap();
    assert_eq!(se.len(), 10);
    assert!(se.iter().all(|v| v.as_f64().unwrap() > 0.0));
    let doc = json(&run(&["fit", "--data", csv.to_str().unwrap(), "--L", "0", "--method", "pairwise", "--json"]));
    assert_eq!(doc["payload"]["fit"]["objective"], "pairwise_snp0");
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "scenario = \"D\"\nreps = 1\nn = 200\np = 5\nseed = 4\ntests = [\"LR1\"]\n").unwrap();
    let doc = json(&run(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "5", "--json"]));
    assert_eq!(doc["settings"]["scenario"]["name"], "D");
    assert_eq!(doc["settings"]["seed"], 5);
    assert_eq!(doc["manifest"]["seed"], 5);
    std::fs::write(&cfg, "bogus = 1\n").unwrap();
    assert!(!run(&["scenarios", "--config", cfg.to_str().unwrap()]).status.success());
}

#[test]
fn ingestion_error_names_cell() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    std::fs::write(&csv, "a,b,c\n1,0,1\n0,2,1\n").unwrap();
    let out = run(&["fit", "--data", csv.to_str().unwrap(), "--L", "0"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 2") && err.contains("'b'"), "{err}");
}

#[test]
fn report_round_trips() {
    let out = run(&["scenarios", "--json"]);
    let doc = json(&out);
    assert_eq!(doc["payload"]["scenarios"].as_array().unwrap().len(), 5);
    assert!(doc.get("elapsed_seconds").is_none());
}

#[test]
fn inline_latent_spec() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(
        &cfg,
        "reps = 1\nn = 200\np = 5\ntests = [\"LR1\"]\n\n[latent]\nname = \"bimodal\"\ndeclared_mean = 0.0\n\
         declared_variance = 1.25\n\n[latent.shape]\nkind = \"normal_mixture\"\ncomponents = [\n\
         { weight = 0.5, mean = -0.5, scale = 1.0, scale_is_sd = true },\n\
         { weight = 0.5, mean = 0.5, scale = 1.0, scale_is_sd = true },\n]\n",
    )
    .unwrap();
    let doc = json(&run(&["simulate", "--config", cfg.to_str().unwrap(), "--json"]));
    assert_eq!(doc["settings"]["scenario"]["name"], "bimodal");
}

#[test]
fn nested_fits_order_log_likelihoods() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_csv(dir.path(), "C", 500, 5, 8);
    let ll = |l: &str| {
        let doc = json(&run(&["fit", "--data", csv.to_str().unwrap(), "--L", l, "--starts", "10", "--json"]));
        doc["payload"]["fit"]["objective_value"].as_f64().unwrap()
    };
    assert!(ll("1") >= ll("0") - 1e-6);
}
