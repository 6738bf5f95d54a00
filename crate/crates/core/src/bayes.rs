//! Evidence, Bayes posteriors and the validity gate that ties Bayes' formula
//! to the regularity conditions.

use std::collections::{BTreeMap, BTreeSet};

use crate::conditioning::ac_check;
use crate::error::{Error, Result};
use crate::joint::JointMeasure;
use crate::kernel::{KernelCell, TransitionKernel};
use crate::measure::{HybridMeasure, SimpleFunction};
use crate::rational::Rational;
use crate::regularity::{check_conditions, ConditionReport};
use crate::space::{require_same, Interval, Point};
use crate::step::Cell;

/// Tolerance for the reconstruction and marginal-density checks.
pub const GATE_TOL: f64 = 1e-9;

/// Reference measure ν on Y for the likelihood densities.
#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    /// A measure of the class (σ-finite).
    Measure(HybridMeasure),
    /// Counting measure on all of Y. Not σ-finite when Y has intervals; the
    /// likelihood sections must then be purely atomic.
    Counting,
}

/// Prior on X and likelihood `P_{Y|x}` with densities `p(y | x)` w.r.t. ν.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodModel {
    prior: HybridMeasure,
    likelihood: TransitionKernel,
    reference: Reference,
    prior_reference: Option<HybridMeasure>,
}

impl LikelihoodModel {
    pub fn new(prior: HybridMeasure, likelihood: TransitionKernel, reference: Reference) -> Result<Self> {
        prior.require_probability()?;
        require_same(likelihood.from_space(), prior.space(), "likelihood source")?;
        if !likelihood.is_normalized() {
            return Err(Error::invalid("likelihood", "sections must be probability measures"));
        }
        let sections = likelihood
            .cells()
            .iter()
            .map(|c| (c.cell.to_string(), &c.fixed, !c.tracking.is_empty()))
            .chain(likelihood.points().iter().map(|(p, m)| (p.to_string(), m, false)));
        match &reference {
            Reference::Measure(nu) => {
                require_same(nu.space(), likelihood.to_space(), "likelihood reference")?;
                for (at, m, tracking) in sections {
                    if tracking {
                        return Err(Error::invalid(
                            "likelihood",
                            format!("moving atoms over {at} have no density w.r.t. the reference"),
                        ));
                    }
                    if let Some(w) = ac_check(m, nu)?.witness {
                        return Err(Error::invalid("likelihood", format!("section at {at} not dominated: {w}")));
                    }
                }
            }
            Reference::Counting => {
                for (at, m, _) in sections {
                    if m.density().support().next().is_some() {
                        return Err(Error::invalid(
                            "likelihood",
                            format!("section at {at} has a density part; counting reference needs atoms"),
                        ));
                    }
                }
            }
        }
        Ok(LikelihoodModel {
            prior,
            likelihood,
            reference,
            prior_reference: None,
        })
    }

    /// Reference μ on X for posterior densities (default: the canonical
    /// reference of the prior).
    pub fn with_prior_reference(mut self, mu: HybridMeasure) -> Result<Self> {
        require_same(mu.space(), self.prior.space(), "prior reference")?;
        if let Some(w) = ac_check(&self.prior, &mu)?.witness {
            return Err(Error::invalid("prior", format!("no density w.r.t. the reference: {w}")));
        }
        self.prior_reference = Some(mu);
        Ok(self)
    }

    pub fn prior(&self) -> &HybridMeasure {
        &self.prior
    }

    pub fn likelihood(&self) -> &TransitionKernel {
        &self.likelihood
    }

    pub fn reference(&self) -> &Reference {
        &self.reference
    }

    /// The reference set with [`LikelihoodModel::with_prior_reference`], if any.
    pub fn explicit_prior_reference(&self) -> Option<&HybridMeasure> {
        self.prior_reference.as_ref()
    }

    pub fn prior_reference(&self) -> HybridMeasure {
        self.prior_reference
            .clone()
            .unwrap_or_else(|| self.prior.canonical_reference())
    }

    /// Same likelihood with another prior.
    pub fn with_prior(&self, prior: HybridMeasure) -> Result<Self> {
        let m = LikelihoodModel::new(prior, self.likelihood.clone(), self.reference.clone())?;
        match &self.prior_reference {
            Some(mu) => m.with_prior_reference(mu.clone()),
            None => Ok(m),
        }
    }

    /// `x ↦ p(y | x)`.
    pub fn likelihood_function(&self, y: &Point) -> Result<SimpleFunction> {
        likelihood_values(&self.likelihood, &self.reference, y)
    }

    /// `p(y) = ∫ p(y | x) dP_X(x)`.
    pub fn evidence(&self, y: &Point) -> Result<f64> {
        self.prior.integrate(&self.likelihood_function(y)?)
    }
}

/// `dS/dν` at y for a fixed section.
fn density_at(reference: &Reference, s: &HybridMeasure, y: &Point) -> f64 {
    match reference {
        Reference::Counting => s.point_mass(y),
        Reference::Measure(nu) => {
            let a = nu.point_mass(y);
            if a > 0.0 {
                return s.point_mass(y) / a;
            }
            match y {
                Point::Real(v) => {
                    let d = nu.density().value_at(v);
                    if d > 0.0 {
                        s.density().value_at(v) / d
                    } else {
                        0.0
                    }
                }
                Point::Atom(_) => 0.0,
            }
        }
    }
}

/// `x ↦ p(y | x)` for a likelihood kernel from X to Y and its reference.
/// With counting reference an atom moving with x contributes at the single
/// x that puts it on y.
pub fn likelihood_values(k: &TransitionKernel, reference: &Reference, y: &Point) -> Result<SimpleFunction> {
    k.to_space().check_point(y)?;
    let mut points = BTreeMap::new();
    let mut cells = Vec::new();
    for c in k.cells() {
        let v = density_at(reference, &c.fixed, y);
        cells.push(Cell::new(c.cell.clone(), v));
        if let (Reference::Counting, Point::Real(yv)) = (reference, y) {
            for t in &c.tracking {
                let x = (yv - t.offset) / t.slope;
                if c.cell.contains(&x) {
                    *points.entry(Point::Real(x)).or_insert(v) += t.weight;
                }
            }
        }
    }
    for (x, s) in k.points() {
        points.insert(x.clone(), density_at(reference, s, y));
    }
    SimpleFunction::new(points, cells)
}

pub fn evidence(m: &LikelihoodModel, y: &Point) -> Result<f64> {
    m.evidence(y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorResult {
    /// Posterior when valid, the unchanged prior otherwise.
    pub posterior: HybridMeasure,
    /// `p(x | y)` w.r.t. the prior reference μ.
    pub posterior_density: Option<SimpleFunction>,
    pub evidence: f64,
    pub valid: bool,
    /// The observation has zero evidence under the prior.
    pub prior_impossible: bool,
    /// `1 − mass` of the posterior before renormalization.
    pub deficit: f64,
}

/// Posterior of the prior given likelihood values `x ↦ L(x)`.
pub fn bayes_update(prior: &HybridMeasure, likelihood: &SimpleFunction) -> Result<PosteriorResult> {
    let evidence = prior.integrate(likelihood)?;
    if !(evidence > 0.0) {
        return Ok(PosteriorResult {
            posterior: prior.clone(),
            posterior_density: None,
            evidence,
            valid: false,
            prior_impossible: true,
            deficit: 0.0,
        });
    }
    let raw = prior.weighted(likelihood)?.scale(1.0 / evidence);
    let deficit = 1.0 - raw.total_mass();
    Ok(PosteriorResult {
        posterior: raw.normalize()?,
        posterior_density: None,
        evidence,
        valid: true,
        prior_impossible: false,
        deficit,
    })
}

/// Bayes' formula at one observation.
pub fn bayes_posterior(m: &LikelihoodModel, y: &Point) -> Result<PosteriorResult> {
    let l = m.likelihood_function(y)?;
    let mut r = bayes_update(&m.prior, &l)?;
    if r.valid {
        let mu = m.prior_reference();
        let p = ac_check(&m.prior, &mu)?
            .derivative
            .expect("prior reference dominates the prior");
        r.posterior_density = Some(l.product(&p).scale(1.0 / r.evidence));
    }
    Ok(r)
}

/// Result of the validity gate.
#[derive(Debug, Clone, PartialEq)]
pub struct GateResult {
    /// Bayes' formula defines a conditional distribution of X given Y.
    pub valid: bool,
    /// The evidence is a marginal density of Y w.r.t. (a σ-finite
    /// restriction of) the reference.
    pub evidence_is_density: bool,
    /// An observation set of positive probability where the formula fails.
    pub failure: Option<String>,
    pub report: ConditionReport,
    /// `P_{X,Y}` on `X × Y`.
    pub joint: JointMeasure,
    /// The kernel given by Bayes' formula (prior on zero-evidence parts).
    pub bayes_kernel: TransitionKernel,
}

impl GateResult {
    /// The gate agrees with the condition checkers.
    pub fn consistent(&self) -> bool {
        self.report.verdict() == Some(self.valid) && self.evidence_is_density == self.valid
    }
}

/// Builds the joint, runs the condition checkers, and independently tests
/// whether the posteriors of Bayes' formula reassemble the joint.
pub fn validity_gate(m: &LikelihoodModel) -> Result<GateResult> {
    let joint = m.likelihood.times_measure(&m.prior)?.transpose();
    let report = check_conditions(&joint)?;
    let py = joint.marginal_y();
    let ys = m.likelihood.to_space();

    // observation points with a section of their own
    let mut y_points: BTreeSet<Point> = ys.atom_points().collect();
    y_points.extend(py.charged_atoms().map(|(p, _)| p.clone()));
    if let Reference::Measure(nu) = &m.reference {
        y_points.extend(nu.charged_atoms().map(|(p, _)| p.clone()));
    }
    // y-cells on which every likelihood density is constant
    let mut cuts: BTreeSet<Rational> = py.breakpoints();
    for c in m.likelihood.cells() {
        cuts.extend(c.fixed.breakpoints());
    }
    for s in m.likelihood.points().values() {
        cuts.extend(s.breakpoints());
    }
    if let Reference::Measure(nu) = &m.reference {
        cuts.extend(nu.breakpoints());
    }
    // y values where a moving atom meets a prior atom
    let mut avoid: BTreeSet<Rational> = y_points
        .iter()
        .filter_map(|p| match p {
            Point::Real(v) => Some(*v),
            Point::Atom(_) => None,
        })
        .collect();
    for c in m.likelihood.cells() {
        for t in &c.tracking {
            for x in m.prior.atoms().keys() {
                if let Point::Real(xv) = x {
                    avoid.insert(t.position(xv));
                }
            }
        }
    }

    let mut failure = None;
    let mut cells = Vec::new();
    let mut ev_cells = Vec::new();
    for cell in ys.partition(&cuts) {
        let y = Point::Real(cell.probe(&avoid));
        let r = bayes_update(&m.prior, &m.likelihood_function(&y)?)?;
        let charged = py.density().integral_over(&cell) > 0.0;
        if charged && !r.valid && failure.is_none() {
            failure = Some(format!("zero evidence on {cell}, which has probability {}", py.density().integral_over(&cell)));
        }
        ev_cells.push(Cell::new(cell.clone(), r.evidence));
        cells.push(KernelCell {
            cell,
            fixed: r.posterior,
            tracking: vec![],
        });
    }
    let mut points = BTreeMap::new();
    let mut ev_points = BTreeMap::new();
    for y in y_points {
        let r = bayes_update(&m.prior, &m.likelihood_function(&y)?)?;
        if py.point_mass(&y) > 0.0 && !r.valid && failure.is_none() {
            failure = Some(format!("zero evidence at {y}, which has probability {}", py.point_mass(&y)));
        }
        ev_points.insert(y.clone(), r.evidence);
        points.insert(y, r.posterior);
    }
    let bayes_kernel = TransitionKernel::new(ys.clone(), m.prior.space().clone(), cells, points, true)?;
    let rebuilt = bayes_kernel.times_measure(&py)?;
    let diff = rebuilt.max_difference(&joint);
    if diff > GATE_TOL && failure.is_none() {
        failure = Some(format!("posteriors reassemble the joint only up to {diff}"));
    }
    let valid = failure.is_none();

    let evidence_fn = SimpleFunction::new(ev_points, ev_cells)?;
    let evidence_is_density = match &m.reference {
        Reference::Measure(nu) => nu.weighted(&evidence_fn)?.approx_eq(&py, GATE_TOL),
        Reference::Counting => {
            py.density().support().next().is_none()
                && py
                    .charged_atoms()
                    .all(|(y, w)| (evidence_fn.value(y) - w).abs() <= GATE_TOL)
        }
    };

    Ok(GateResult {
        valid,
        evidence_is_density,
        failure,
        report,
        joint,
        bayes_kernel,
    })
}

/// Evidence as a function of y: its value at each of `points`, and on each
/// cell its value at a probe away from those points.
pub fn evidence_function(m: &LikelihoodModel, cells: &[Interval], points: &[Point]) -> Result<SimpleFunction> {
    let avoid: BTreeSet<Rational> = points.iter().filter_map(|p| p.as_real().copied()).collect();
    let mut ev_cells = Vec::new();
    for c in cells {
        ev_cells.push(Cell::new(c.clone(), m.evidence(&Point::Real(c.probe(&avoid)))?));
    }
    let mut ev_points = BTreeMap::new();
    for p in points {
        ev_points.insert(p.clone(), m.evidence(p)?);
    }
    SimpleFunction::new(ev_points, ev_cells)
}

/// Likelihood kernel over finite outcomes: `table[x][k]` is the probability
/// of outcome `k` at the atom `x`.
pub fn finite_likelihood(
    x_space: &crate::space::SpaceRef,
    y_space: &crate::space::SpaceRef,
    table: &BTreeMap<Point, Vec<(Point, f64)>>,
) -> Result<TransitionKernel> {
    let points = table
        .iter()
        .map(|(x, row)| Ok((x.clone(), HybridMeasure::discrete(y_space.clone(), row.iter().cloned())?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    TransitionKernel::new(x_space.clone(), y_space.clone(), vec![], points, true)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::MeasurableMap;
    use crate::rational::{int, q};
    use crate::space::{Space, SpaceRef};
    use crate::step::StepDensity;

    fn coin_model(p1: f64, p2: f64) -> LikelihoodModel {
        let thetas: SpaceRef = Space::finite(["t1", "t2"]).unwrap().into();
        let ys: SpaceRef = Space::finite(["0", "1"]).unwrap().into();
        let prior = HybridMeasure::discrete(thetas.clone(), [(Point::atom("t1"), 0.5), (Point::atom("t2"), 0.5)]).unwrap();
        let table = BTreeMap::from([
            (Point::atom("t1"), vec![(Point::atom("1"), p1), (Point::atom("0"), 1.0 - p1)]),
            (Point::atom("t2"), vec![(Point::atom("1"), p2), (Point::atom("0"), 1.0 - p2)]),
        ]);
        let k = finite_likelihood(&thetas, &ys, &table).unwrap();
        LikelihoodModel::new(prior, k, Reference::Counting).unwrap()
    }

    #[test]
    fn two_term_evidence_and_posterior() {
        let m = coin_model(0.8, 0.4);
        let y = Point::atom("1");
        // 0.5·0.8 + 0.5·0.4
        assert!((m.evidence(&y).unwrap() - 0.6).abs() < 1e-15);
        let r = bayes_posterior(&m, &y).unwrap();
        assert!(r.valid);
        assert!((r.posterior.point_mass(&Point::atom("t1")) - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.posterior.point_mass(&Point::atom("t2")) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn uninformative_and_degenerate() {
        let m = coin_model(0.3, 0.3);
        let y = Point::atom("1");
        assert!((m.evidence(&y).unwrap() - 0.3).abs() < 1e-15);
        let r = bayes_posterior(&m, &y).unwrap();
        assert!(r.posterior.approx_eq(m.prior(), 1e-15));
        let m = coin_model(0.8, 0.4);
        let m = m.with_prior(HybridMeasure::dirac(m.prior().space().clone(), Point::atom("t1")).unwrap()).unwrap();
        assert!((m.evidence(&y).unwrap() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn two_cell_density_posterior() {
        let u = HybridMeasure::uniform(Space::unit()).unwrap();
        let ys: SpaceRef = Space::finite(["0", "1"]).unwrap().into();
        let sec = |p: f64| HybridMeasure::discrete(ys.clone(), [(Point::atom("1"), p), (Point::atom("0"), 1.0 - p)]).unwrap();
        let cells = vec![
            KernelCell { cell: Interval::new(int(0), q(1, 2)).unwrap(), fixed: sec(0.2), tracking: vec![] },
            KernelCell { cell: Interval::new(q(1, 2), int(1)).unwrap(), fixed: sec(0.6), tracking: vec![] },
        ];
        let k = TransitionKernel::new(u.space().clone(), ys, cells, BTreeMap::new(), true).unwrap();
        let m = LikelihoodModel::new(u, k, Reference::Counting).unwrap();
        let r = bayes_posterior(&m, &Point::atom("1")).unwrap();
        assert!((r.evidence - 0.4).abs() < 1e-15);
        let d = r.posterior_density.unwrap();
        assert!((d.value(&Point::Real(q(1, 4))) - 0.5).abs() < 1e-15);
        assert!((d.value(&Point::Real(q(3, 4))) - 1.5).abs() < 1e-15);
        let g = validity_gate(&m).unwrap();
        assert!(g.valid && g.consistent());
    }

    #[test]
    fn copying_likelihood_is_invalid() {
        let u = HybridMeasure::uniform(Space::unit()).unwrap();
        let k = TransitionKernel::deterministic(&MeasurableMap::identity(Space::unit())).unwrap();
        let m = LikelihoodModel::new(u, k, Reference::Counting).unwrap();
        assert_eq!(m.evidence(&Point::Real(q(1, 3))).unwrap(), 0.0);
        let r = bayes_posterior(&m, &Point::Real(q(1, 3))).unwrap();
        assert!(!r.valid && r.prior_impossible);
        let g = validity_gate(&m).unwrap();
        assert!(!g.valid && g.report.all_false() && g.consistent());
    }

    #[test]
    fn copying_an_atomic_prior_is_valid() {
        let s: SpaceRef = Space::unit().into();
        let prior = HybridMeasure::discrete(s.clone(), [(Point::Real(q(1, 4)), 0.25), (Point::Real(q(1, 2)), 0.75)]).unwrap();
        let k = TransitionKernel::deterministic(&MeasurableMap::identity(s)).unwrap();
        let m = LikelihoodModel::new(prior, k, Reference::Counting).unwrap();
        let g = validity_gate(&m).unwrap();
        assert!(g.valid && g.report.all_true() && g.consistent(), "{:?}", g.failure);
    }

    #[test]
    fn density_table_is_valid() {
        let x = HybridMeasure::uniform(Space::unit()).unwrap();
        let nu = HybridMeasure::lebesgue(Space::unit());
        let sec = |a: f64| {
            HybridMeasure::new(
                nu.space().clone(),
                BTreeMap::new(),
                StepDensity::new(vec![
                    Cell::new(Interval::new(int(0), q(1, 2)).unwrap(), 2.0 * a),
                    Cell::new(Interval::new(q(1, 2), int(1)).unwrap(), 2.0 * (1.0 - a)),
                ])
                .unwrap(),
                true,
            )
            .unwrap()
        };
        let cells = vec![
            KernelCell { cell: Interval::new(int(0), q(1, 3)).unwrap(), fixed: sec(0.9), tracking: vec![] },
            KernelCell { cell: Interval::new(q(1, 3), int(1)).unwrap(), fixed: sec(0.25), tracking: vec![] },
        ];
        let k = TransitionKernel::new(x.space().clone(), nu.space().clone(), cells, BTreeMap::new(), true).unwrap();
        let m = LikelihoodModel::new(x, k, Reference::Measure(nu)).unwrap();
        let g = validity_gate(&m).unwrap();
        assert!(g.valid && g.consistent(), "{:?}", g.failure);
        // p(y) on [0, 1/2) = 1/3·1.8 + 2/3·0.5
        let e = m.evidence(&Point::Real(q(1, 4))).unwrap();
        assert!((e - (1.8 / 3.0 + 1.0 / 3.0)).abs() < 1e-15);
    }
}
