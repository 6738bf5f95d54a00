//! The verbs, as functions from inputs to the text they print.

use std::fmt::Write as _;
use std::path::Path;

use condmeasure::bayes::{bayes_posterior, validity_gate};
use condmeasure::bayesnet::{check_conditions_net, propagate};
use condmeasure::regularity::{check_conditions, diagonal_joint, mutual_information};
use condmeasure::sequential::{binary_digits_demo, run_simulation, Termination};
use condmeasure::verify::{verify, VerifySummary};
use serde::Serialize;
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::report::{conditions_table, extended, gate_table, ConditionsJson, DigitsJson, GateJson, NetJson, PosteriorJson};
use crate::spec::{point, Model, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    Table,
    Json,
    #[default]
    Both,
}

fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes") + "\n"
}

/// Table, JSON, or the table followed by the JSON.
fn emit<T: Serialize>(format: Format, table: String, json: &T) -> String {
    match format {
        Format::Table => table,
        Format::Json => pretty(json),
        Format::Both => format!("{table}\n{}", pretty(json)),
    }
}

pub fn load(path: &Path) -> CliResult<Model> {
    ModelSpec::load(path)?.build()
}

/// Conditions report for the joint, and the validity gate for a likelihood
/// model, whichever the file defines.
pub fn check(model: &Model, format: Format) -> CliResult<String> {
    if model.joint.is_none() && model.likelihood_model.is_none() {
        return Err(CliError::validation(
            "missing_section",
            "check needs a `joint` or a `likelihood_model` section",
        ));
    }
    let mut table = String::new();
    let mut out = serde_json::Map::new();
    if let Some(j) = &model.joint {
        let r = check_conditions(j)?;
        let mi = mutual_information(j)?;
        table += &conditions_table(&r, &mi);
        out.insert("joint".into(), serde_json::to_value(ConditionsJson::new(&r, &mi)).expect("json"));
    }
    if let Some(m) = &model.likelihood_model {
        let g = validity_gate(m)?;
        let mi = mutual_information(&g.joint)?;
        if !table.is_empty() {
            table.push('\n');
        }
        table += &gate_table(&g, &mi);
        out.insert("likelihood_model".into(), serde_json::to_value(GateJson::new(&g, &mi)).expect("json"));
    }
    Ok(emit(format, table, &out))
}

/// `I(X; Y)` in nats of the joint (or of the joint a likelihood model
/// induces), or `infinite`.
pub fn mi(model: &Model) -> CliResult<String> {
    let v = match (&model.joint, &model.likelihood_model) {
        (Some(j), _) => mutual_information(j)?,
        (None, Some(m)) => mutual_information(&validity_gate(m)?.joint)?,
        (None, None) => return Err(CliError::validation("missing_section", "mi needs a `joint` or a `likelihood_model` section")),
    };
    Ok(format!("{v}\n"))
}

/// Posterior after observing `y`, as JSON.
pub fn bayes(model: &Model, y: &str) -> CliResult<String> {
    let m = model.likelihood_model()?;
    let yp = point(y)?;
    m.likelihood().to_space().check_point(&yp)?;
    let r = bayes_posterior(m, &yp)?;
    let g = validity_gate(m)?;
    let mut v = serde_json::to_value(PosteriorJson::new(y, &r)).expect("json");
    v["model_valid"] = json!(g.valid);
    v["model_failure"] = json!(g.failure);
    Ok(pretty(&v))
}

pub fn net_check(model: &Model, format: Format) -> CliResult<String> {
    let net = model.net()?;
    let r = check_conditions_net(net)?;
    let prop = propagate(net);
    let parts: Vec<Vec<String>> = net
        .nodes()
        .iter()
        .map(|n| n.parts().parts().iter().map(|p| p.to_string()).collect())
        .collect();
    let mut table = format!("{r}\n");
    for (k, n) in net.nodes().iter().enumerate() {
        let _ = write!(table, "{} marginal:", n.name());
        for (p, w) in parts[k].iter().zip(&prop.marginals[k]) {
            let _ = write!(table, " {p}={w:.6}");
        }
        table.push('\n');
    }
    Ok(emit(format, table, &NetJson::new(&r, &parts, &prop)))
}

pub const CSV_HEADER: &str = "trial,placement,outcome,expected_gain_nats,posterior_entropy_nats";

/// Simulated trajectory as CSV. `trials` replaces the configured `max_trials`.
pub fn simulate(model: &Model, theta: &str, seed: u64, trials: Option<usize>) -> CliResult<String> {
    let mut cfg = model.experiment()?.clone();
    if let Some(t) = trials {
        let term = Termination {
            max_trials: t,
            ..*cfg.termination()
        };
        cfg = condmeasure::sequential::ExperimentConfig::new(
            cfg.prior().clone(),
            cfg.placements().to_vec(),
            cfg.policy().clone(),
            term,
            cfg.seed(),
        )?;
    }
    let th = point(theta)?;
    cfg.prior().space().check_point(&th)?;
    let sim = run_simulation(&cfg, &th, seed)?;
    let mut out = format!("{CSV_HEADER}\n");
    for (i, t) in sim.state.history.iter().enumerate() {
        let label = cfg.placements()[t.placement].label();
        let _ = writeln!(out, "{},{},{},{},{}", i + 1, label, t.outcome, t.expected_gain, t.entropy);
    }
    Ok(out)
}

pub fn demo_example1(format: Format) -> CliResult<String> {
    let j = diagonal_joint();
    let r = check_conditions(&j)?;
    let mi = mutual_information(&j)?;
    let table = format!("X = Y ~ uniform[0, 1)\n{}", conditions_table(&r, &mi));
    let json = json!({
        "model": "X = Y ~ uniform[0, 1)",
        "report": ConditionsJson::new(&r, &mi),
        "mutual_information_nats": extended(&mi),
    });
    Ok(emit(format, table, &json))
}

pub fn demo_binary_digits(t: usize, format: Format) -> CliResult<String> {
    let steps = binary_digits_demo(t).map_err(|e| CliError::validation("invalid_argument", e.to_string()))?;
    let d = DigitsJson::new(&steps);
    Ok(emit(format, d.table(), &d))
}

#[derive(Debug, Serialize)]
pub struct CertificateFile<'a> {
    pub seed: u64,
    pub draws: usize,
    pub agreed: usize,
    pub certificates: &'a [condmeasure::verify::Certificate],
}

/// Runs the equivalence suite. On any disagreement the certificate is
/// written to `certificate` and the error carries exit code 2.
pub fn run_verify(draws: usize, seed: u64, workers: usize, certificate: &Path) -> CliResult<(String, VerifySummary)> {
    if draws == 0 {
        return Err(CliError::validation("invalid_argument", "draws must be positive"));
    }
    let start = std::time::Instant::now();
    let s = verify(draws, seed, workers.max(1))?;
    let elapsed = start.elapsed().as_secs_f64();
    let mut out = format!("{}/{} agree\n", s.agreed, s.draws);
    for (p, n) in &s.profiles {
        let _ = writeln!(out, "  {p}: {n} draws");
    }
    let _ = writeln!(out, "  seed {seed}, {} workers, {elapsed:.2} s", workers.max(1));
    if !s.passed() {
        let file = CertificateFile {
            seed,
            draws,
            agreed: s.agreed,
            certificates: &s.certificates,
        };
        std::fs::write(certificate, pretty(&file))
            .map_err(|e| CliError::Internal(format!("writing {}: {e}", certificate.display())))?;
        return Err(CliError::Certificate(format!(
            "{out}{} disagreements; certificate written to {}",
            s.certificates.len(),
            certificate.display()
        )));
    }
    Ok((out, s))
}
