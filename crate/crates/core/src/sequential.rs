//! Sequential Bayesian estimation: one update per trial, greedy placement by
//! expected information gain, termination rules, and the binary-digits
//! observation sequence.

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bayes::{bayes_update, likelihood_values, Reference};
use crate::error::{Error, Result};
use crate::kernel::TransitionKernel;
use crate::measure::{HybridMeasure, SimpleFunction};
use crate::random::rng;
use crate::rational::{int, Rational};
use crate::regularity::relative_entropy;
use crate::space::{require_same, Interval, Point, Space, SpaceRef};
use crate::step::Cell;

/// Gains closer than this count as tied.
pub const TIE_EPS: f64 = 1e-12;

/// A trial type: a likelihood `p(y | θ)` over a finite outcome space.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    label: String,
    likelihood: TransitionKernel,
}

impl Placement {
    pub fn new(label: impl Into<String>, likelihood: TransitionKernel) -> Result<Self> {
        let label = label.into();
        if !likelihood.to_space().is_finite() {
            return Err(Error::invalid("placement", format!("{label}: outcomes must be finite")));
        }
        if !likelihood.is_normalized() || likelihood.has_tracking() {
            return Err(Error::invalid("placement", format!("{label}: sections must be probabilities")));
        }
        Ok(Placement { label, likelihood })
    }

    /// Placement over a finite parameter space from a table
    /// `θ ↦ [p(y | θ) for y in outcomes]`.
    pub fn from_table(
        label: impl Into<String>,
        theta: &SpaceRef,
        outcomes: &SpaceRef,
        table: &[(Point, Vec<f64>)],
    ) -> Result<Self> {
        let label = label.into();
        let ys: Vec<Point> = outcomes.atom_points().collect();
        let mut points = std::collections::BTreeMap::new();
        for (th, row) in table {
            if row.len() != ys.len() {
                return Err(Error::invalid("placement", format!("{label}: row for {th} has {} values", row.len())));
            }
            let m = HybridMeasure::discrete(outcomes.clone(), ys.iter().cloned().zip(row.iter().copied()))?;
            points.insert(th.clone(), m);
        }
        if let Some(iv) = theta.intervals().first() {
            return Err(Error::invalid("placement", format!("{label}: table rows cannot cover {iv}")));
        }
        let k = TransitionKernel::new(theta.clone(), outcomes.clone(), vec![], points, true)?;
        Placement::new(label, k)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn likelihood(&self) -> &TransitionKernel {
        &self.likelihood
    }

    pub fn outcomes(&self) -> impl Iterator<Item = Point> + '_ {
        self.likelihood.to_space().atom_points()
    }

    /// `θ ↦ p(y | θ)`.
    pub fn likelihood_function(&self, y: &Point) -> Result<SimpleFunction> {
        likelihood_values(&self.likelihood, &Reference::Counting, y)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "sequence", rename_all = "kebab-case")]
pub enum Policy {
    /// Largest expected gain, lowest index on ties.
    GreedyInfoGain,
    /// Placement indices in order, repeated.
    FixedSequence(Vec<usize>),
    /// An operator picks; proposals are the greedy choice.
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Termination {
    pub max_trials: usize,
    pub entropy_threshold: Option<f64>,
    #[serde(default)]
    pub stop_on_zero_gain: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    prior: HybridMeasure,
    placements: Vec<Placement>,
    policy: Policy,
    termination: Termination,
    seed: u64,
}

impl ExperimentConfig {
    pub fn new(
        prior: HybridMeasure,
        placements: Vec<Placement>,
        policy: Policy,
        termination: Termination,
        seed: u64,
    ) -> Result<Self> {
        prior.require_probability()?;
        if placements.is_empty() {
            return Err(Error::invalid("experiment", "no placements"));
        }
        let mut labels = BTreeSet::new();
        for p in &placements {
            require_same(p.likelihood.from_space(), prior.space(), "placement parameter")?;
            if !labels.insert(p.label.as_str()) {
                return Err(Error::invalid("experiment", format!("duplicate placement {}", p.label)));
            }
        }
        if termination.max_trials == 0 {
            return Err(Error::invalid("experiment", "max_trials must be at least 1"));
        }
        if let Policy::FixedSequence(seq) = &policy {
            if seq.is_empty() || seq.iter().any(|&i| i >= placements.len()) {
                return Err(Error::invalid("experiment", "fixed sequence needs valid placement indices"));
            }
        }
        Ok(ExperimentConfig {
            prior,
            placements,
            policy,
            termination,
            seed,
        })
    }

    pub fn prior(&self) -> &HybridMeasure {
        &self.prior
    }

    pub fn placements(&self) -> &[Placement] {
        &self.placements
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn termination(&self) -> &Termination {
        &self.termination
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn placement_index(&self, label: &str) -> Option<usize> {
        self.placements.iter().position(|p| p.label == label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    MaxTrials,
    EntropyThreshold,
    ZeroGain,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::MaxTrials => "maximum number of trials reached",
            StopReason::EntropyThreshold => "posterior entropy at or below the threshold",
            StopReason::ZeroGain => "no placement is informative",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub placement: usize,
    pub outcome: Point,
    /// Expected gain of the placement before the outcome, in nats.
    pub expected_gain: f64,
    /// Posterior entropy after the update, in nats.
    pub entropy: f64,
    pub evidence: f64,
    pub deficit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentState {
    pub posterior: HybridMeasure,
    pub history: Vec<Trial>,
    pub stopped: Option<StopReason>,
    /// Last outcome rejected for zero evidence, as `(placement, outcome)`.
    pub flagged: Option<(usize, Point)>,
}

impl ExperimentState {
    pub fn initial(cfg: &ExperimentConfig) -> Self {
        let mut s = ExperimentState {
            posterior: cfg.prior.clone(),
            history: Vec::new(),
            stopped: None,
            flagged: None,
        };
        s.stopped = stop_reason(cfg, &s);
        s
    }

    pub fn entropy(&self) -> f64 {
        self.posterior.entropy()
    }
}

fn stop_reason(cfg: &ExperimentConfig, s: &ExperimentState) -> Option<StopReason> {
    if let Some(h) = cfg.termination.entropy_threshold {
        if s.entropy() <= h {
            return Some(StopReason::EntropyThreshold);
        }
    }
    (s.history.len() >= cfg.termination.max_trials).then_some(StopReason::MaxTrials)
}

/// Predictive probability of every outcome of a placement.
pub fn predictive(posterior: &HybridMeasure, p: &Placement) -> Result<Vec<(Point, f64)>> {
    p.outcomes()
        .map(|y| {
            let e = posterior.integrate(&p.likelihood_function(&y)?)?;
            Ok((y, e))
        })
        .collect()
}

/// `I(Θ; Y_x)` under `posterior`, in nats.
pub fn information_gain(posterior: &HybridMeasure, p: &Placement) -> Result<f64> {
    let mut total = 0.0;
    for y in p.outcomes() {
        let l = p.likelihood_function(&y)?;
        let e = posterior.integrate(&l)?;
        if e <= 0.0 {
            continue;
        }
        total += posterior.integrate(&l.map(|v| if v > 0.0 { v * (v / e).ln() } else { 0.0 }))?;
    }
    Ok(total.max(0.0))
}

pub fn expected_gain(cfg: &ExperimentConfig, state: &ExperimentState, x: usize) -> Result<f64> {
    let p = cfg
        .placements
        .get(x)
        .ok_or_else(|| Error::invalid("placement", format!("no placement {x}")))?;
    information_gain(&state.posterior, p)
}

pub fn all_gains(cfg: &ExperimentConfig, state: &ExperimentState) -> Result<Vec<f64>> {
    (0..cfg.placements.len()).map(|x| expected_gain(cfg, state, x)).collect()
}

/// Index of the largest gain; anything within [`TIE_EPS`] of an earlier
/// maximum loses to it.
pub fn greedy_index(gains: &[f64]) -> usize {
    let mut best = 0;
    for (i, g) in gains.iter().enumerate().skip(1) {
        if *g > gains[best] + TIE_EPS {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Place(usize),
    Terminate(StopReason),
}

pub fn choose_placement(cfg: &ExperimentConfig, state: &ExperimentState) -> Result<Decision> {
    if let Some(r) = state.stopped.or_else(|| stop_reason(cfg, state)) {
        return Ok(Decision::Terminate(r));
    }
    let gains = all_gains(cfg, state)?;
    let best = greedy_index(&gains);
    if cfg.termination.stop_on_zero_gain && gains[best] <= TIE_EPS {
        return Ok(Decision::Terminate(StopReason::ZeroGain));
    }
    Ok(Decision::Place(match &cfg.policy {
        Policy::GreedyInfoGain | Policy::External => best,
        Policy::FixedSequence(seq) => seq[state.history.len() % seq.len()],
    }))
}

/// One Bayes update with the current posterior as prior. An outcome of zero
/// evidence leaves the posterior alone and flags the state.
pub fn update(cfg: &ExperimentConfig, state: &ExperimentState, x: usize, y: &Point) -> Result<ExperimentState> {
    if let Some(r) = state.stopped {
        return Err(Error::Terminated(r.to_string()));
    }
    let p = cfg
        .placements
        .get(x)
        .ok_or_else(|| Error::invalid("placement", format!("no placement {x}")))?;
    p.likelihood.to_space().check_point(y)?;
    let gain = information_gain(&state.posterior, p)?;
    let r = bayes_update(&state.posterior, &p.likelihood_function(y)?)?;
    let mut next = state.clone();
    if !r.valid {
        next.flagged = Some((x, y.clone()));
        return Ok(next);
    }
    next.flagged = None;
    next.posterior = r.posterior;
    next.history.push(Trial {
        placement: x,
        outcome: y.clone(),
        expected_gain: gain,
        entropy: next.posterior.entropy(),
        evidence: r.evidence,
        deficit: r.deficit,
    });
    next.stopped = stop_reason(cfg, &next);
    Ok(next)
}

/// Applies a fixed list of `(placement label, outcome)` pairs.
pub fn replay(cfg: &ExperimentConfig, script: &[(String, Point)]) -> Result<Vec<ExperimentState>> {
    let mut states = vec![ExperimentState::initial(cfg)];
    for (label, y) in script {
        let x = cfg
            .placement_index(label)
            .ok_or_else(|| Error::invalid("script", format!("unknown placement {label}")))?;
        let next = update(cfg, states.last().expect("initial state"), x, y)?;
        if next.flagged.is_some() {
            return Err(Error::invalid("script", format!("outcome {y} at {label} has zero evidence")));
        }
        states.push(next);
    }
    Ok(states)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub state: ExperimentState,
    pub cumulative_gain: f64,
    /// Entropy before the first trial and after each one.
    pub entropy: Vec<f64>,
}

/// Draws an outcome: one uniform number against the cumulative outcome
/// probabilities in label order.
pub fn sample_outcome(r: &mut impl Rng, section: &HybridMeasure) -> Point {
    let u: f64 = r.random();
    let mut acc = 0.0;
    let mut last = None;
    for y in section.space().atom_points() {
        let w = section.point_mass(&y);
        if w > 0.0 {
            acc += w;
            if u < acc {
                return y;
            }
            last = Some(y);
        }
    }
    last.expect("section has mass")
}

/// Runs the policy against outcomes drawn from `p(y | θ_true)` with the
/// generator seeded from `seed`.
pub fn run_simulation(cfg: &ExperimentConfig, theta: &Point, seed: u64) -> Result<Simulation> {
    let charged = cfg.prior.point_mass(theta) > 0.0
        || matches!(theta, Point::Real(v) if cfg.prior.density().value_at(v) > 0.0);
    if !charged {
        return Err(Error::Domain(format!("{theta} is outside the prior support")));
    }
    let mut r = rng(seed);
    let mut state = ExperimentState::initial(cfg);
    let mut entropy = vec![state.entropy()];
    let mut cumulative_gain = 0.0;
    while let Decision::Place(x) = choose_placement(cfg, &state)? {
        let y = sample_outcome(&mut r, &cfg.placements[x].likelihood.section_at(theta)?);
        state = update(cfg, &state, x, &y)?;
        if state.flagged.is_some() {
            break;
        }
        let t = state.history.last().expect("trial recorded");
        cumulative_gain += t.expected_gain;
        entropy.push(t.entropy);
        if state.stopped.is_some() {
            break;
        }
    }
    Ok(Simulation {
        state,
        cumulative_gain,
        entropy,
    })
}

/// One row of the binary-digits trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitStep {
    pub t: usize,
    /// `I(X; Y_1, ..., Y_t)` in nats.
    pub mutual_information: f64,
    /// Length of the posterior support, the same for every history.
    pub support_length: Rational,
}

pub const MAX_DIGITS: usize = 24;

/// `Y_k` is the k-th binary digit of `X ~ uniform[0, 1)`. Walks every digit
/// history with one Bayes update per digit and returns, for `t = 0..=T`,
/// `I(X; Y_1..Y_t)` as the average relative entropy of the posteriors from
/// the prior. The likelihood of a digit is evaluated on the support of the
/// current posterior, which is all the update reads.
pub fn binary_digits_demo(digits: usize) -> Result<Vec<DigitStep>> {
    if !(1..=MAX_DIGITS).contains(&digits) {
        return Err(Error::Domain(format!("digits must be in 1..={MAX_DIGITS}, got {digits}")));
    }
    let prior = HybridMeasure::uniform(Space::unit())?;
    let levels = walk(&prior, &prior, 1.0, digits)?;
    levels
        .into_iter()
        .enumerate()
        .map(|(t, l)| {
            if l.min_len != l.max_len {
                return Err(Error::Domain(format!("posterior supports differ at t = {t}")));
            }
            Ok(DigitStep {
                t,
                mutual_information: l.information,
                support_length: l.min_len,
            })
        })
        .collect()
}

/// Per-depth totals of one subtree of histories.
#[derive(Debug, Clone)]
struct Level {
    information: f64,
    min_len: Rational,
    max_len: Rational,
}

impl Level {
    fn merge(&mut self, other: &Level) {
        self.information += other.information;
        self.min_len = self.min_len.min(other.min_len);
        self.max_len = self.max_len.max(other.max_len);
    }
}

/// Levels below `post`, reached with probability `prob`; sibling subtrees
/// are added pairwise to keep the rounding flat in the depth.
fn walk(prior: &HybridMeasure, post: &HybridMeasure, prob: f64, remaining: usize) -> Result<Vec<Level>> {
    let d = relative_entropy(post, prior)?
        .finite()
        .ok_or_else(|| Error::Domain("posterior escaped the prior".into()))?;
    let len = post.density_support_length();
    let mut levels = vec![Level {
        information: prob * d,
        min_len: len,
        max_len: len,
    }];
    if remaining == 0 {
        return Ok(levels);
    }
    let support = post
        .density()
        .support()
        .map(|c| c.interval.clone())
        .next()
        .ok_or_else(|| Error::Domain("empty posterior".into()))?;
    let mid = (support.lo + support.hi) / int(2);
    let mut below: Option<Vec<Level>> = None;
    for half in [Interval::new(support.lo, mid)?, Interval::new(mid, support.hi)?] {
        let l = SimpleFunction::new(Default::default(), vec![Cell::new(half, 1.0)])?;
        let r = bayes_update(post, &l)?;
        if !r.valid {
            continue;
        }
        let sub = walk(prior, &r.posterior, prob * r.evidence, remaining - 1)?;
        match &mut below {
            None => below = Some(sub),
            Some(acc) => acc.iter_mut().zip(&sub).for_each(|(a, b)| a.merge(b)),
        }
    }
    levels.extend(below.ok_or_else(|| Error::Domain("no digit has positive evidence".into()))?);
    Ok(levels)
}
