//! Explicit-table reference implementations used as oracles. Nothing here
//! calls into the checkers under test; inputs are plain weight tables.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use condmeasure::bayes::{LikelihoodModel, Reference};
use condmeasure::bayesnet::BayesNet;
use condmeasure::joint::JointMeasure;
use condmeasure::measure::HybridMeasure;
use condmeasure::rational::{parse_rational, to_f64, Rational};
use condmeasure::sequential::{
    all_gains, choose_placement, replay, update, Decision, ExperimentConfig, ExperimentState, Placement, Policy,
    Termination,
};
use condmeasure::space::{Interval, Point, Space, SpaceRef};
use rand::Rng;
use serde_json::Value;

pub fn xlogy(x: f64, y: f64) -> f64 {
    if x > 0.0 {
        x * y.ln()
    } else {
        0.0
    }
}

/// Probability table `p[i][k] = P(X = xs[i], Y = ys[k])`.
#[derive(Debug, Clone)]
pub struct Table {
    pub xs: Vec<Point>,
    pub ys: Vec<Point>,
    pub p: Vec<Vec<f64>>,
}

impl Table {
    /// Reads the atom weights of an atoms-only joint.
    pub fn from_atoms(j: &JointMeasure) -> Table {
        let mut xs: Vec<Point> = j.atoms().keys().map(|(x, _)| x.clone()).collect();
        let mut ys: Vec<Point> = j.atoms().keys().map(|(_, y)| y.clone()).collect();
        xs.sort();
        xs.dedup();
        ys.sort();
        ys.dedup();
        let mut p = vec![vec![0.0; ys.len()]; xs.len()];
        for ((x, y), w) in j.atoms() {
            let i = xs.binary_search(x).unwrap();
            let k = ys.binary_search(y).unwrap();
            p[i][k] += *w;
        }
        Table { xs, ys, p }
    }

    /// Table over labels `x0..` and `y0..`, normalized.
    pub fn labelled(weights: &[Vec<f64>]) -> Table {
        let total: f64 = weights.iter().flatten().sum();
        Table {
            xs: (0..weights.len()).map(|i| Point::atom(format!("x{i}"))).collect(),
            ys: (0..weights[0].len()).map(|k| Point::atom(format!("y{k}"))).collect(),
            p: weights.iter().map(|r| r.iter().map(|w| w / total).collect()).collect(),
        }
    }

    pub fn px(&self) -> Vec<f64> {
        self.p.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn py(&self) -> Vec<f64> {
        (0..self.ys.len()).map(|k| self.p.iter().map(|r| r[k]).sum()).collect()
    }

    pub fn mi(&self) -> f64 {
        let (px, py) = (self.px(), self.py());
        let mut total = 0.0;
        for (i, r) in self.p.iter().enumerate() {
            for (k, v) in r.iter().enumerate() {
                if *v > 0.0 {
                    total += xlogy(*v, *v / (px[i] * py[k]));
                }
            }
        }
        total
    }

    /// `P(X = · | Y = ys[k])`, absent when `P(Y = ys[k]) = 0`.
    pub fn posterior(&self, k: usize) -> Option<Vec<f64>> {
        let e: f64 = self.p.iter().map(|r| r[k]).sum();
        (e > 0.0).then(|| self.p.iter().map(|r| r[k] / e).collect())
    }

    pub fn x_space(&self) -> Space {
        finite_space(&self.xs)
    }

    pub fn y_space(&self) -> Space {
        finite_space(&self.ys)
    }

    /// The table as an atoms-only joint on labelled spaces.
    pub fn joint(&self) -> JointMeasure {
        let mut atoms = BTreeMap::new();
        for (i, x) in self.xs.iter().enumerate() {
            for (k, y) in self.ys.iter().enumerate() {
                atoms.insert((x.clone(), y.clone()), self.p[i][k]);
            }
        }
        JointMeasure::new(self.x_space(), self.y_space(), atoms, None, vec![], true).unwrap()
    }
}

fn finite_space(points: &[Point]) -> Space {
    let labels: Vec<String> = points.iter().map(|p| p.to_string()).collect();
    Space::finite(labels).unwrap()
}

/// `supp p ⊆ supp q` on aligned weight vectors.
pub fn dominated(p: &[f64], q: &[f64]) -> bool {
    p.iter().zip(q).all(|(a, b)| *a == 0.0 || *b > 0.0)
}

/// Finite sequential model: `lik[x][θ][y] = p(y | θ)` for placement `x`.
#[derive(Debug, Clone)]
pub struct Finite {
    pub prior: Vec<f64>,
    pub lik: Vec<Vec<Vec<f64>>>,
}

impl Finite {
    pub fn thetas(&self) -> usize {
        self.prior.len()
    }

    pub fn outcomes(&self, x: usize) -> usize {
        self.lik[x][0].len()
    }

    pub fn evidence(&self, post: &[f64], x: usize, y: usize) -> f64 {
        post.iter().zip(&self.lik[x]).map(|(w, row)| w * row[y]).sum()
    }

    pub fn update(&self, post: &[f64], x: usize, y: usize) -> Vec<f64> {
        let e = self.evidence(post, x, y);
        post.iter().zip(&self.lik[x]).map(|(w, row)| w * row[y] / e).collect()
    }

    /// `I(Θ; Y_x)` as the double sum over `θ` and `y`.
    pub fn gain(&self, post: &[f64], x: usize) -> f64 {
        let mut total = 0.0;
        for y in 0..self.outcomes(x) {
            let e = self.evidence(post, x, y);
            for (w, row) in post.iter().zip(&self.lik[x]) {
                if *w > 0.0 && row[y] > 0.0 {
                    total += w * row[y] * (row[y] / e).ln();
                }
            }
        }
        total
    }

    pub fn theta_space() -> impl Fn(usize) -> Point {
        |i| Point::atom(format!("t{i}"))
    }

    pub fn config(&self, policy: Policy, termination: Termination) -> ExperimentConfig {
        let th = Finite::theta_space();
        let theta = SpaceRef::new(Space::finite((0..self.thetas()).map(|i| format!("t{i}"))).unwrap());
        let prior = HybridMeasure::discrete(theta.clone(), (0..self.thetas()).map(|i| (th(i), self.prior[i]))).unwrap();
        let placements = self
            .lik
            .iter()
            .enumerate()
            .map(|(x, rows)| {
                let outcomes =
                    SpaceRef::new(Space::finite((0..rows[0].len()).map(|y| format!("o{y}"))).unwrap());
                let table: Vec<(Point, Vec<f64>)> = rows.iter().enumerate().map(|(i, r)| (th(i), r.clone())).collect();
                Placement::from_table(format!("p{x}"), &theta, &outcomes, &table).unwrap()
            })
            .collect();
        ExperimentConfig::new(prior, placements, policy, termination, 0).unwrap()
    }

    /// Posterior weights of a measure on the `t{i}` labels.
    pub fn weights(m: &HybridMeasure, n: usize) -> Vec<f64> {
        let th = Finite::theta_space();
        (0..n).map(|i| m.point_mass(&th(i))).collect()
    }
}

pub fn outcome(y: usize) -> Point {
    Point::atom(format!("o{y}"))
}

/// The A/B toy model: A has `p(1 | θ1) = 0.9, p(1 | θ2) = 0.1`, B has
/// `0.6, 0.4`; outcome `o1` stands for `1`.
pub fn toy() -> Finite {
    Finite {
        prior: vec![0.5, 0.5],
        lik: vec![vec![vec![0.1, 0.9], vec![0.9, 0.1]], vec![vec![0.4, 0.6], vec![0.6, 0.4]]],
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Random finite model: two to four parameters, one to three placements
/// with two or three outcomes, zeros allowed in every row.
pub fn random_finite(r: &mut impl Rng) -> Finite {
    let n = r.random_range(2..=4usize);
    let prior = row(r, n);
    let k = r.random_range(1..=3usize);
    let mut lik: Vec<Vec<Vec<f64>>> = (0..k)
        .map(|_| {
            let m = r.random_range(2..=3usize);
            (0..n).map(|_| row(r, m)).collect()
        })
        .collect();
    if r.random_bool(0.3) {
        lik.insert(0, lik[lik.len() - 1].clone());
    }
    Finite { prior, lik }
}

fn row(r: &mut impl Rng, m: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..m)
            .map(|_| if r.random_bool(0.2) { 0.0 } else { r.random_range(0.05..1.0) })
            .collect();
        let t: f64 = v.iter().sum();
        if t > 0.0 {
            return v.into_iter().map(|x| x / t).collect();
        }
    }
}

pub fn open(max_trials: usize) -> Termination {
    Termination {
        max_trials,
        entropy_threshold: None,
        stop_on_zero_gain: false,
    }
}

/// Index of the largest value, first on ties within `tol`.
pub fn argmax(v: &[f64], tol: f64) -> usize {
    let mut best = 0;
    for x in 1..v.len() {
        if v[x] > v[best] + tol {
            best = x;
        }
    }
    best
}

/// One leaf of the history tree: label, per-θ joint weights, and the
/// summed expected gains along the path.
pub struct Leaf {
    pub label: String,
    pub joint: Vec<f64>,
    pub gains: f64,
}

/// All histories of length `depth` under the engine's policy, with joint
/// weights computed from the raw tables.
#[allow(clippy::too_many_arguments)]
pub fn histories(
    f: &Finite,
    cfg: &ExperimentConfig,
    state: &ExperimentState,
    joint: Vec<f64>,
    label: String,
    gains: f64,
    depth: usize,
    out: &mut Vec<Leaf>,
) {
    if depth == 0 {
        out.push(Leaf { label, joint, gains });
        return;
    }
    let Decision::Place(x) = choose_placement(cfg, state).unwrap() else {
        panic!("open termination never stops early");
    };
    let gain = f.gain(&Finite::weights(&state.posterior, f.thetas()), x);
    for y in 0..f.outcomes(x) {
        let next_joint: Vec<f64> = joint.iter().zip(&f.lik[x]).map(|(w, r)| w * r[y]).collect();
        if next_joint.iter().sum::<f64>() <= 0.0 {
            continue;
        }
        let next = update(cfg, state, x, &outcome(y)).unwrap();
        assert!(next.flagged.is_none());
        histories(f, cfg, &next, next_joint, format!("{label}{x}{y}."), gains + gain, depth - 1, out);
    }
}

/// Joint table of θ against the history labels.
pub fn leaf_table(f: &Finite, leaves: &[Leaf]) -> Table {
    Table {
        xs: (0..f.thetas()).map(|i| Point::atom(format!("t{i}"))).collect(),
        ys: leaves.iter().map(|l| Point::atom(l.label.clone())).collect(),
        p: (0..f.thetas()).map(|i| leaves.iter().map(|l| l.joint[i]).collect()).collect(),
    }
}

/// Every assignment of parts with its product weight, multiplied node by
/// node in index order.
pub fn enumerate_net(net: &BayesNet) -> BTreeMap<Vec<usize>, f64> {
    let sizes: Vec<usize> = net.nodes().iter().map(|n| n.parts().len()).collect();
    let total: usize = sizes.iter().product();
    let mut out = BTreeMap::new();
    for mut code in 0..total {
        let mut idx = vec![0; sizes.len()];
        for k in (0..sizes.len()).rev() {
            idx[k] = code % sizes[k];
            code /= sizes[k];
        }
        let mut m = 1.0;
        for (k, node) in net.nodes().iter().enumerate() {
            let mut row = 0;
            for &p in node.parents() {
                row = row * sizes[p] + idx[p];
            }
            let i = idx[k];
            let len = node.parts().length(i).unwrap_or(1.0);
            m *= node.table()[row][i] * node.reference_weights()[i] * len;
        }
        if m > 0.0 {
            out.insert(idx, m);
        }
    }
    out
}

pub fn net_marginals(entries: &BTreeMap<Vec<usize>, f64>, sizes: &[usize]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = sizes.iter().map(|s| vec![0.0; *s]).collect();
    for (idx, w) in entries {
        for (k, i) in idx.iter().enumerate() {
            out[k][*i] += w;
        }
    }
    out
}

/// Y-cells on which the marginal, every likelihood section and the
/// reference are constant.
pub fn y_cells(m: &LikelihoodModel, py_cuts: BTreeSet<Rational>) -> Vec<Interval> {
    let mut cuts = py_cuts;
    for c in m.likelihood().cells() {
        cuts.extend(c.fixed.breakpoints());
    }
    for s in m.likelihood().points().values() {
        cuts.extend(s.breakpoints());
    }
    if let Reference::Measure(nu) = m.reference() {
        cuts.extend(nu.breakpoints());
    }
    m.likelihood().to_space().partition(cuts.iter())
}

fn fraction(v: &Value) -> f64 {
    to_f64(&parse_rational(v.as_str().unwrap()).unwrap())
}

fn strings(v: &Value) -> Vec<String> {
    v.as_array().unwrap().iter().map(|t| t.as_str().unwrap().to_string()).collect()
}

/// Configuration of an outcome-script golden file.
pub fn golden_config(g: &Value) -> ExperimentConfig {
    let thetas = strings(&g["thetas"]);
    let theta = SpaceRef::new(Space::finite(thetas.iter().cloned()).unwrap());
    let prior = HybridMeasure::discrete(
        theta.clone(),
        thetas.iter().zip(g["prior"].as_array().unwrap()).map(|(t, p)| (Point::atom(t.as_str()), fraction(p))),
    )
    .unwrap();
    let placements = g["placements"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| {
            let ys = SpaceRef::new(Space::finite(strings(&p["outcomes"])).unwrap());
            let table: Vec<(Point, Vec<f64>)> = thetas
                .iter()
                .zip(p["table"].as_array().unwrap())
                .map(|(t, row)| (Point::atom(t.as_str()), row.as_array().unwrap().iter().map(fraction).collect()))
                .collect();
            Placement::from_table(p["label"].as_str().unwrap(), &theta, &ys, &table).unwrap()
        })
        .collect();
    ExperimentConfig::new(prior, placements, Policy::External, open(100), 0).unwrap()
}

/// Replays the script of one golden file and compares posterior, gains,
/// entropy and greedy choice at every step within `tol`. Returns the number
/// of steps checked.
pub fn check_golden(path: &Path, tol: f64) -> Result<usize, String> {
    let g: Value = serde_json::from_str(&std::fs::read_to_string(path).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let cfg = golden_config(&g);
    let thetas: Vec<Point> = strings(&g["thetas"]).into_iter().map(Point::atom).collect();
    let script: Vec<(String, Point)> = g["script"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| (s[0].as_str().unwrap().to_string(), Point::atom(s[1].as_str().unwrap())))
        .collect();
    let states = replay(&cfg, &script).map_err(|e| e.to_string())?;
    let expected = g["expected"].as_array().unwrap();
    if states.len() != expected.len() {
        return Err(format!("{} states, {} expected", states.len(), expected.len()));
    }
    let floats = |v: &Value| -> Vec<f64> { v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect() };
    for (t, (s, e)) in states.iter().zip(expected).enumerate() {
        let post: Vec<f64> = thetas.iter().map(|th| s.posterior.point_mass(th)).collect();
        let d = max_abs_diff(&post, &floats(&e["posterior"]));
        if d > tol {
            return Err(format!("step {t}: posterior off by {d:e}"));
        }
        let d = max_abs_diff(&all_gains(&cfg, s).map_err(|e| e.to_string())?, &floats(&e["gains"]));
        if d > tol {
            return Err(format!("step {t}: gains off by {d:e}"));
        }
        let d = (s.entropy() - e["entropy"].as_f64().unwrap()).abs();
        if d > tol {
            return Err(format!("step {t}: entropy off by {d:e}"));
        }
        let Decision::Place(x) = choose_placement(&cfg, s).map_err(|e| e.to_string())? else {
            return Err(format!("step {t}: engine stopped"));
        };
        if cfg.placements()[x].label() != e["greedy"].as_str().unwrap() {
            return Err(format!("step {t}: greedy {} vs {}", cfg.placements()[x].label(), e["greedy"]));
        }
    }
    Ok(states.len())
}
