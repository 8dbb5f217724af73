use std::fmt::Write;

use snpirt::inference::TestReport;

use crate::report::{FitPayload, Payload, ReportDocument, TestPayload};
use snpirt::simulation::StudyResult;

pub fn render(doc: &ReportDocument) -> String {
    let mut s = String::new();
    match &doc.payload {
        Payload::Fit(p) => fit(&mut s, p),
        Payload::Test(p) => test(&mut s, p),
        Payload::Simulate(r) => study(&mut s, r),
        Payload::Scenarios { scenarios } => {
            let _ = writeln!(s, "{:<4} {:>10} {:>10}  shape", "name", "mean", "variance");
            for e in scenarios {
                let shape = serde_json::to_string(&e.spec.shape).unwrap_or_default();
                let _ = writeln!(s, "{:<4} {:>10.4} {:>10.4}  {shape}", e.spec.name, e.mean, e.variance);
            }
        }
    }
    if let Some(t) = doc.elapsed_seconds {
        let _ = writeln!(s, "elapsed {t:.2} s");
    }
    s
}

fn data_line(s: &mut String, d: &crate::report::DataSummary) {
    let _ = writeln!(
        s,
        "data: n = {}, p = {} ({} rows read, {} excluded)",
        d.n,
        d.items.len(),
        d.rows_read,
        d.excluded
    );
}

fn fit(s: &mut String, p: &FitPayload) {
    data_line(s, &p.data);
    let f = &p.fit;
    let _ = writeln!(
        s,
        "objective {:?}: value {:.4}, converged {}, iterations {}, start {}",
        f.objective, f.objective_value, f.converged, f.iterations, f.start_index
    );
    let _ = writeln!(s, "latent mean {:.4}, variance {:.4}", f.latent.mean, f.latent.variance);
    let _ = writeln!(s, "{:<24} {:>10} {:>10}", "parameter", "estimate", "se");
    for (k, label) in p.labels.iter().enumerate() {
        let se = p
            .standard_errors
            .as_ref()
            .map(|v| format!("{:.4}", v[k]))
            .unwrap_or_else(|| "-".into());
        let _ = writeln!(s, "{label:<24} {:>10.4} {se:>10}", p.estimates[k]);
    }
    if let Some(n) = &p.standard_error_note {
        let _ = writeln!(s, "note: {n}");
    }
}

fn report_line(s: &mut String, label: &str, r: &TestReport) {
    let decisions: Vec<String> = r
        .reject_at
        .iter()
        .map(|d| format!("{}@{}", if d.reject { "reject" } else { "keep" }, d.alpha))
        .collect();
    let _ = writeln!(
        s,
        "{label:<6} stat {:>10.4}  dof {:>7.3}  scale {:>7.4}  p {:.4}  {}",
        r.statistic,
        r.dof,
        r.scale,
        r.p_value,
        decisions.join(" ")
    );
}

fn test(s: &mut String, p: &TestPayload) {
    data_line(s, &p.data);
    for m in &p.models {
        let _ = writeln!(
            s,
            "{:<10} loglik {:>12.4}  k {:>3}  converged {}  angles {:?}",
            m.model, m.loglik, m.n_params, m.converged, m.angles
        );
    }
    if let Some(g) = &p.ght {
        report_line(s, "GH_T", &g.report);
        let _ = writeln!(s, "       a {:.4}, b {:.4}, rank {}", g.a_scale, g.b_dof, g.rank);
    }
    if let Some(r) = &p.gh {
        report_line(s, "GH", r);
    }
    if let Some(r) = &p.lr {
        report_line(s, "LR", r);
    }
    if let Some(r) = &p.m2 {
        report_line(s, "M2", r);
    }
    if let Some(ic) = &p.ic {
        for (c, m) in &ic.selected {
            let _ = writeln!(
                s,
                "{:<6} snp0 {:>12.4}  snp{} {:>12.4}  selects {m}",
                c.label(),
                ic.snp0.value(*c),
                p.degree,
                ic.snpl.value(*c)
            );
        }
    }
    for n in &p.notes {
        let _ = writeln!(s, "note: {n}");
    }
}

fn study(s: &mut String, r: &StudyResult) {
    let c = &r.config;
    let _ = writeln!(
        s,
        "scenario {}: p = {}, n = {}, R = {}, seed {}",
        c.scenario.name, c.p, c.n, c.reps, c.seed
    );
    let _ = write!(s, "{:<7} {:>5} {:>6}", "test", "N_v", "failed");
    for a in &c.alphas {
        let _ = write!(s, " {:>8}", format!("a={a}"));
    }
    s.push('\n');
    for t in &r.tests {
        let _ = write!(s, "{:<7} {:>5} {:>6}", t.test.label(), t.n_valid, t.n_failed);
        for row in &t.rates {
            let _ = write!(s, " {:>8.3}", row.rate);
        }
        s.push('\n');
    }
    for ic in &r.ics {
        let pct = |v: Option<f64>| v.map(|x| format!("{x:.1}%")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            s,
            "{:<4} L={}  N_v {:>5}  SNP0 {:>7}  SNP{} {:>7}",
            ic.criterion.label(),
            ic.degree,
            ic.n_valid,
            pct(ic.snp0_percent),
            ic.degree,
            pct(ic.snpl_percent)
        );
    }
    if let Some(b) = &r.bias {
        let _ = write!(s, "{:<14}", "mean |bias|");
        for e in &b.estimators {
            let _ = write!(s, " {e:>10}");
        }
        let _ = writeln!(s, "   ({} replications)", b.n_used);
        for (k, name) in b.parameters.iter().enumerate() {
            let _ = write!(s, "{name:<14}");
            for e in &b.values {
                let _ = write!(s, " {:>10.4}", e[k]);
            }
            s.push('\n');
        }
    }
}
