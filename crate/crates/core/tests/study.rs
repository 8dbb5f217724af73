use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use snpirt::inference::Criterion;
use snpirt::simulation::{
    bias_report, run_study, sample_latent, FitRecord, LatentSpec, ReplicationRecord, StudyConfig, StudyTest,
    SCENARIOS,
};
use snpirt::ItemParams;

#[test]
fn latent_samples_match_declared_moments() {
    let n = 1_000_000;
    for (k, name) in SCENARIOS.iter().enumerate() {
        let spec = LatentSpec::scenario(name).unwrap();
        let (mean, var) = spec.theoretical_moments();
        let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
        let z = sample_latent(&spec, n, &mut rng);
        let m = z.iter().sum::<f64>() / n as f64;
        let v = z.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        let m4 = z.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n as f64;
        let se_m = (v / n as f64).sqrt();
        let se_v = ((m4 - v * v) / n as f64).sqrt();
        assert!((m - mean).abs() < 3.0 * se_m, "{name}: mean {m} vs {mean}");
        assert!((v - var).abs() < 3.0 * se_v, "{name}: variance {v} vs {var}");
    }
}

fn small(scenario: &str, seed: u64) -> StudyConfig {
    let mut cfg = StudyConfig::new(LatentSpec::scenario(scenario).unwrap(), 5, 300, 4);
    cfg.tests = vec![StudyTest::GhT1, StudyTest::Lr1, StudyTest::M2];
    cfg.ics = Criterion::ALL.to_vec();
    cfg.seed = seed;
    cfg
}

#[test]
fn study_is_deterministic_and_accounts_for_every_replication() {
    let cfg = small("B", 9);
    let a = run_study(&cfg).unwrap();
    let b = run_study(&cfg).unwrap();
    assert_eq!(a, b);
    for t in &a.tests {
        assert_eq!(t.n_valid + t.n_failed, cfg.reps);
    }
    let other = run_study(&small("B", 10)).unwrap();
    assert_ne!(a.replications, other.replications);
}

#[test]
fn bias_vanishes_when_estimates_equal_truth() {
    let truth = ItemParams::new(vec![0.1, -0.4, 0.7], vec![1.2, 0.6, 0.9]).unwrap();
    let rec = |index| ReplicationRecord {
        index,
        fits: vec![FitRecord {
            model: "snp0_full".into(),
            converged: true,
            objective_value: Some(-1.0),
            items: Some(truth.to_vec()),
            angles: Some(vec![]),
            error: None,
        }],
        tests: vec![],
        ics: vec![],
    };
    let table = bias_report(&[rec(0), rec(1)], &["snp0_full"], &truth).unwrap();
    assert_eq!(table.n_used, 2);
    assert!(table.values[0].iter().all(|&v| v == 0.0));
}
