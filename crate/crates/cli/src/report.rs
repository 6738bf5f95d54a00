//! Serializable reports and their human-readable tables.

use std::fmt::Write as _;

use condmeasure::bayes::{GateResult, PosteriorResult};
use condmeasure::bayesnet::{NetReport, Propagation};
use condmeasure::regularity::{ConditionReport, ExtendedReal, CONDITION_NAMES};
use condmeasure::rational::format_rational;
use condmeasure::sequential::DigitStep;
use serde::Serialize;
use serde_json::{json, Value};

use crate::spec::{format_weight, SectionSpec};

/// `f64` in nats, or the string `"infinite"`.
pub fn extended(v: &ExtendedReal) -> Value {
    match v {
        ExtendedReal::Finite(x) => json!(x),
        ExtendedReal::Infinite => json!("infinite"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionLine {
    pub condition: usize,
    pub name: &'static str,
    pub holds: bool,
    pub witness: Option<String>,
    pub witness_is_graph: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionsJson {
    pub conditions: Vec<ConditionLine>,
    pub agree: bool,
    pub all_true: bool,
    pub all_false: bool,
    pub mutual_information_nats: Value,
}

impl ConditionsJson {
    pub fn new(r: &ConditionReport, mi: &ExtendedReal) -> Self {
        let conditions = CONDITION_NAMES
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let w = r.witnesses.get(&(i + 1));
                ConditionLine {
                    condition: i + 1,
                    name,
                    holds: r.conditions[i],
                    witness: w.map(|w| w.to_string()),
                    witness_is_graph: w.is_some_and(|w| w.is_graph()),
                }
            })
            .collect();
        ConditionsJson {
            conditions,
            agree: r.agree,
            all_true: r.all_true(),
            all_false: r.all_false(),
            mutual_information_nats: extended(mi),
        }
    }
}

pub fn conditions_table(r: &ConditionReport, mi: &ExtendedReal) -> String {
    format!("{r}\nmutual information (nats): {mi}\n")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GateJson {
    pub valid: bool,
    pub evidence_is_density: bool,
    pub consistent: bool,
    pub failure: Option<String>,
    pub joint: ConditionsJson,
}

impl GateJson {
    pub fn new(g: &GateResult, mi: &ExtendedReal) -> Self {
        GateJson {
            valid: g.valid,
            evidence_is_density: g.evidence_is_density,
            consistent: g.consistent(),
            failure: g.failure.clone(),
            joint: ConditionsJson::new(&g.report, mi),
        }
    }
}

pub fn gate_table(g: &GateResult, mi: &ExtendedReal) -> String {
    let mut s = format!("Bayes formula valid: {}\n", g.valid);
    if let Some(f) = &g.failure {
        let _ = writeln!(s, "failure: {f}");
    }
    s + &conditions_table(&g.report, mi)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorJson {
    pub observation: String,
    pub evidence: f64,
    pub valid: bool,
    pub prior_impossible: bool,
    pub deficit: f64,
    pub posterior: SectionSpec,
    /// Density w.r.t. the prior reference, on points and cells.
    pub posterior_density: Option<SectionSpec>,
}

impl PosteriorJson {
    pub fn new(y: &str, r: &PosteriorResult) -> Self {
        let posterior = SectionSpec {
            atoms: r
                .posterior
                .atoms()
                .iter()
                .map(|(p, w)| (p.to_string(), format_weight(*w)))
                .collect(),
            density: cells(r.posterior.density()),
        };
        let posterior_density = r.posterior_density.as_ref().map(|f| SectionSpec {
            atoms: f.points().iter().map(|(p, w)| (p.to_string(), format_weight(*w))).collect(),
            density: cells(f.steps()),
        });
        PosteriorJson {
            observation: y.to_string(),
            evidence: r.evidence,
            valid: r.valid,
            prior_impossible: r.prior_impossible,
            deficit: r.deficit,
            posterior,
            posterior_density,
        }
    }
}

fn cells(d: &condmeasure::step::StepDensity) -> Vec<crate::spec::CellSpec> {
    d.cells()
        .iter()
        .map(|c| crate::spec::CellSpec {
            cell: [format_rational(&c.interval.lo), format_rational(&c.interval.hi)],
            value: format_weight(c.value),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeJson {
    pub name: String,
    pub dominated: bool,
    pub witness: Option<String>,
    pub null_rows: usize,
    pub parts: Vec<String>,
    pub marginal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetJson {
    pub global: bool,
    pub global_witness: Option<String>,
    pub nodes_dominated: bool,
    pub agree: bool,
    pub nodes: Vec<NodeJson>,
}

impl NetJson {
    pub fn new(r: &NetReport, parts: &[Vec<String>], prop: &Propagation) -> Self {
        let nodes = r
            .nodes
            .iter()
            .enumerate()
            .map(|(k, n)| NodeJson {
                name: n.name.clone(),
                dominated: n.dominated,
                witness: n.witness.as_ref().map(|(row, w)| format!("row {row}: {w}")),
                null_rows: n.null_rows,
                parts: parts[k].clone(),
                marginal: prop.marginals[k].clone(),
            })
            .collect();
        NetJson {
            global: r.global,
            global_witness: r
                .global_witness
                .as_ref()
                .map(|(idx, m)| format!("parts {idx:?} (mass {m})")),
            nodes_dominated: r.nodes_dominated(),
            agree: r.agree(),
            nodes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DigitRow {
    pub t: usize,
    pub mutual_information_nats: f64,
    pub expected_nats: f64,
    pub abs_error: f64,
    pub support_length: String,
    pub expected_support_length: String,
    pub support_exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DigitsJson {
    pub digits: usize,
    pub rows: Vec<DigitRow>,
    pub max_abs_error: f64,
    pub increasing: bool,
    pub min_increment_nats: f64,
}

impl DigitsJson {
    pub fn new(steps: &[DigitStep]) -> Self {
        let rows: Vec<DigitRow> = steps
            .iter()
            .map(|s| {
                let expected = s.t as f64 * std::f64::consts::LN_2;
                let want = condmeasure::rational::q(1, 1i128 << s.t);
                DigitRow {
                    t: s.t,
                    mutual_information_nats: s.mutual_information,
                    expected_nats: expected,
                    abs_error: (s.mutual_information - expected).abs(),
                    support_length: format_rational(&s.support_length),
                    expected_support_length: format_rational(&want),
                    support_exact: s.support_length == want,
                }
            })
            .collect();
        let increments: Vec<f64> = rows
            .windows(2)
            .map(|w| w[1].mutual_information_nats - w[0].mutual_information_nats)
            .collect();
        DigitsJson {
            digits: steps.len().saturating_sub(1),
            max_abs_error: rows.iter().map(|r| r.abs_error).fold(0.0, f64::max),
            increasing: increments.iter().all(|d| *d > 0.0),
            min_increment_nats: increments.iter().copied().fold(f64::INFINITY, f64::min),
            rows,
        }
    }

    pub fn table(&self) -> String {
        let mut s = format!(
            "{:>3}  {:>20}  {:>20}  {:>10}  {:>12}\n",
            "t", "I(X;Y_1..t) nats", "t·ln 2", "|error|", "support"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>3}  {:>20.15}  {:>20.15}  {:>10.1e}  {:>12}",
                r.t, r.mutual_information_nats, r.expected_nats, r.abs_error, r.support_length
            );
        }
        let _ = writeln!(
            s,
            "strictly increasing: {}; each digit adds at least {:.15} nats, so the information grows without bound",
            self.increasing, self.min_increment_nats
        );
        s
    }
}
