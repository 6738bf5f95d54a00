//! Hybrid measures: finitely many weighted points plus a piecewise-constant
//! density against length measure on the space's intervals.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::rational::{to_f64, Rational};
use crate::space::{Interval, Point, Space, SpaceRef};
use crate::step::{Cell, StepDensity};

/// Tolerance for mass identities between floating-point weights.
pub const MASS_TOL: f64 = 1e-12;

/// Finite union of atoms (labels or real points) and half-open intervals.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeasurableSet {
    atoms: BTreeSet<Point>,
    intervals: Vec<Interval>,
}

impl MeasurableSet {
    pub fn new(atoms: impl IntoIterator<Item = Point>, intervals: impl IntoIterator<Item = Interval>) -> Self {
        let mut ivs: Vec<Interval> = intervals.into_iter().collect();
        ivs.sort();
        let mut merged: Vec<Interval> = Vec::with_capacity(ivs.len());
        for iv in ivs {
            match merged.last_mut() {
                Some(last) if iv.lo <= last.hi => {
                    if iv.hi > last.hi {
                        last.hi = iv.hi;
                    }
                }
                _ => merged.push(iv),
            }
        }
        MeasurableSet {
            atoms: atoms.into_iter().collect(),
            intervals: merged,
        }
    }

    pub fn atoms_only(atoms: impl IntoIterator<Item = Point>) -> Self {
        MeasurableSet::new(atoms, [])
    }

    pub fn interval(iv: Interval) -> Self {
        MeasurableSet::new([], [iv])
    }

    /// The whole space.
    pub fn full(space: &Space) -> Self {
        MeasurableSet::new(space.atom_points(), space.intervals().iter().cloned())
    }

    pub fn atoms(&self) -> &BTreeSet<Point> {
        &self.atoms
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn contains(&self, p: &Point) -> bool {
        if self.atoms.contains(p) {
            return true;
        }
        match p {
            Point::Real(x) => self.intervals.iter().any(|iv| iv.contains(x)),
            Point::Atom(_) => false,
        }
    }
}

/// Function on a space: explicit values at points, and a step function on the
/// intervals for every real point without an explicit value. Values may be
/// negative (integrable functions), unlike densities.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimpleFunction {
    points: BTreeMap<Point, f64>,
    steps: StepDensity,
}

impl SimpleFunction {
    pub fn new(points: BTreeMap<Point, f64>, mut cells: Vec<Cell>) -> Result<Self> {
        cells.sort_by(|a, b| a.interval.cmp(&b.interval));
        for w in cells.windows(2) {
            if w[1].interval.lo < w[0].interval.hi {
                return Err(Error::invalid("function", format!("cells {} and {} overlap", w[0].interval, w[1].interval)));
            }
        }
        if points.values().chain(cells.iter().map(|c| &c.value)).any(|v| !v.is_finite()) {
            return Err(Error::invalid("function", "values must be finite"));
        }
        Ok(SimpleFunction {
            points,
            steps: StepDensity::from_sorted(cells),
        })
    }

    pub fn constant(space: &Space, c: f64) -> Self {
        SimpleFunction {
            points: space.atom_points().map(|p| (p, c)).collect(),
            steps: StepDensity::constant(space.intervals(), c),
        }
    }

    pub fn indicator(set: &MeasurableSet) -> Self {
        SimpleFunction {
            points: set.atoms.iter().map(|p| (p.clone(), 1.0)).collect(),
            steps: StepDensity::constant(&set.intervals, 1.0),
        }
    }

    pub fn points(&self) -> &BTreeMap<Point, f64> {
        &self.points
    }

    /// Pointwise product.
    pub fn product(&self, other: &SimpleFunction) -> SimpleFunction {
        let keys: BTreeSet<&Point> = self.points.keys().chain(other.points.keys()).collect();
        SimpleFunction {
            points: keys.into_iter().map(|p| (p.clone(), self.value(p) * other.value(p))).collect(),
            steps: StepDensity::combine(&self.steps, &other.steps, |a, b| a * b),
        }
    }

    pub fn scale(&self, c: f64) -> SimpleFunction {
        SimpleFunction {
            points: self.points.iter().map(|(p, v)| (p.clone(), v * c)).collect(),
            steps: self.steps.map(|v| v * c),
        }
    }

    /// `v ↦ f(v)` on every listed value; `f(0)` should be `0`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> SimpleFunction {
        SimpleFunction {
            points: self.points.iter().map(|(p, v)| (p.clone(), f(*v))).collect(),
            steps: self.steps.map(&f),
        }
    }

    pub fn steps(&self) -> &StepDensity {
        &self.steps
    }

    pub fn value(&self, p: &Point) -> f64 {
        if let Some(v) = self.points.get(p) {
            return *v;
        }
        match p {
            Point::Real(x) => self.steps.value_at(x),
            Point::Atom(_) => 0.0,
        }
    }
}

/// Finite atoms plus a step density on a [`Space`].
#[derive(Debug, Clone, PartialEq)]
pub struct HybridMeasure {
    space: SpaceRef,
    atoms: BTreeMap<Point, f64>,
    density: StepDensity,
    normalized: bool,
}

impl HybridMeasure {
    /// Validates the parts and pads the density with zero cells so that its
    /// partition covers every interval of the space.
    pub fn new(
        space: impl Into<SpaceRef>,
        atoms: BTreeMap<Point, f64>,
        density: StepDensity,
        normalized: bool,
    ) -> Result<Self> {
        let space = space.into();
        for (p, w) in &atoms {
            space.check_point(p)?;
            if !w.is_finite() || *w < 0.0 {
                return Err(Error::invalid("measure", format!("atom weight {w} at {p}")));
            }
        }
        let density = density.cover(space.intervals())?;
        let m = HybridMeasure {
            space,
            atoms,
            density,
            normalized,
        };
        if normalized {
            m.check_normalized()?;
        }
        Ok(m)
    }

    pub(crate) fn from_parts(space: SpaceRef, atoms: BTreeMap<Point, f64>, density: StepDensity, normalized: bool) -> Self {
        let density = density
            .cover(space.intervals())
            .expect("density cells inside the space");
        HybridMeasure {
            space,
            atoms,
            density,
            normalized,
        }
    }

    pub fn zero(space: impl Into<SpaceRef>) -> Self {
        let space = space.into();
        HybridMeasure::from_parts(space, BTreeMap::new(), StepDensity::zero(), false)
    }

    /// Unit point mass.
    pub fn dirac(space: impl Into<SpaceRef>, p: Point) -> Result<Self> {
        HybridMeasure::new(space, BTreeMap::from([(p, 1.0)]), StepDensity::zero(), true)
    }

    /// Probability measure on finitely many points.
    pub fn discrete(space: impl Into<SpaceRef>, weights: impl IntoIterator<Item = (Point, f64)>) -> Result<Self> {
        HybridMeasure::new(space, weights.into_iter().collect(), StepDensity::zero(), true)
    }

    /// Uniform probability measure on the intervals of the space.
    pub fn uniform(space: impl Into<SpaceRef>) -> Result<Self> {
        let space: SpaceRef = space.into();
        let len = to_f64(&space.length());
        if len <= 0.0 {
            return Err(Error::Domain("uniform measure needs intervals".into()));
        }
        let d = StepDensity::constant(space.intervals(), 1.0 / len);
        HybridMeasure::new(space, BTreeMap::new(), d, true)
    }

    /// Length measure on the intervals (unnormalized).
    pub fn lebesgue(space: impl Into<SpaceRef>) -> Self {
        let space: SpaceRef = space.into();
        let d = StepDensity::constant(space.intervals(), 1.0);
        HybridMeasure::from_parts(space, BTreeMap::new(), d, false)
    }

    /// Weight one on every labelled atom (unnormalized).
    pub fn counting(space: impl Into<SpaceRef>) -> Self {
        let space: SpaceRef = space.into();
        let atoms = space.atom_points().map(|p| (p, 1.0)).collect();
        HybridMeasure::from_parts(space, atoms, StepDensity::zero(), false)
    }

    /// Counting measure on the charged atoms plus length measure on the
    /// intervals: the smallest σ-finite reference in the class that
    /// dominates this measure.
    pub fn canonical_reference(&self) -> HybridMeasure {
        let atoms = self
            .atoms
            .iter()
            .filter(|(_, w)| **w > 0.0)
            .map(|(p, _)| (p.clone(), 1.0))
            .collect();
        let d = StepDensity::constant(self.space.intervals(), 1.0);
        HybridMeasure::from_parts(self.space.clone(), atoms, d, false)
    }

    pub fn space(&self) -> &SpaceRef {
        &self.space
    }

    pub fn atoms(&self) -> &BTreeMap<Point, f64> {
        &self.atoms
    }

    pub fn density(&self) -> &StepDensity {
        &self.density
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub(crate) fn set_normalized(&mut self, normalized: bool) {
        self.normalized = normalized;
    }

    /// Point masses with strictly positive weight.
    pub fn charged_atoms(&self) -> impl Iterator<Item = (&Point, f64)> {
        self.atoms.iter().filter(|(_, w)| **w > 0.0).map(|(p, w)| (p, *w))
    }

    pub fn atom_mass(&self) -> f64 {
        self.atoms.values().sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.atom_mass() + self.density.total()
    }

    /// Mass of the single point `p`.
    pub fn point_mass(&self, p: &Point) -> f64 {
        self.atoms.get(p).copied().unwrap_or(0.0)
    }

    pub fn check_normalized(&self) -> Result<()> {
        let t = self.total_mass();
        if (t - 1.0).abs() <= MASS_TOL {
            Ok(())
        } else {
            Err(Error::NotNormalized(t))
        }
    }

    pub fn require_probability(&self) -> Result<()> {
        if !self.normalized {
            return Err(Error::NotNormalized(self.total_mass()));
        }
        Ok(())
    }

    /// Breakpoints of the cell partition.
    pub fn breakpoints(&self) -> BTreeSet<Rational> {
        self.density.breakpoints()
    }

    /// Mass of a set aligned with the cell partition.
    pub fn mass(&self, set: &MeasurableSet) -> Result<f64> {
        for p in &set.atoms {
            self.space.check_point(p)?;
        }
        for iv in &set.intervals {
            if !self.space.covers(iv) {
                return Err(Error::Domain(format!("set interval {iv} leaves the space")));
            }
            for e in [&iv.lo, &iv.hi] {
                if !self.density.is_breakpoint(e) {
                    return Err(Error::Alignment(*e));
                }
            }
        }
        Ok(self.measure_of(set))
    }

    /// Mass of any finite union, aligned or not (exact for step densities).
    pub(crate) fn measure_of(&self, set: &MeasurableSet) -> f64 {
        let atoms: f64 = self
            .atoms
            .iter()
            .filter(|(p, _)| set.contains(p))
            .map(|(_, w)| *w)
            .sum();
        let dens: f64 = set.intervals.iter().map(|iv| self.density.integral_over(iv)).sum();
        atoms + dens
    }

    /// Same measure on a finer partition.
    pub fn refine(&self, cuts: &[Rational]) -> Result<HybridMeasure> {
        for c in cuts {
            let inside = self
                .space
                .intervals()
                .iter()
                .any(|iv| iv.lo <= *c && *c <= iv.hi);
            if !inside {
                return Err(Error::Domain(format!(
                    "breakpoint {} is outside the space",
                    crate::rational::format_rational(c)
                )));
            }
        }
        Ok(HybridMeasure {
            space: self.space.clone(),
            atoms: self.atoms.clone(),
            density: self.density.refine(cuts.iter()),
            normalized: self.normalized,
        })
    }

    /// `∫ f dm`, exact on the common refinement of `f` and the density.
    pub fn integrate(&self, f: &SimpleFunction) -> Result<f64> {
        for c in f.steps.cells() {
            if !self.space.covers(&c.interval) {
                return Err(Error::Domain(format!("function cell {} leaves the space", c.interval)));
            }
        }
        let atoms: f64 = self.atoms.iter().map(|(p, w)| w * f.value(p)).sum();
        let dens: f64 = StepDensity::zip(&self.density, &f.steps)
            .into_iter()
            .map(|(iv, d, v)| d.unwrap_or(0.0) * v.unwrap_or(0.0) * iv.len_f64())
            .sum();
        Ok(atoms + dens)
    }

    /// The measure `f·m`, `S ↦ ∫_S f dm`, for nonnegative `f`.
    pub fn weighted(&self, f: &SimpleFunction) -> Result<HybridMeasure> {
        let mut atoms = BTreeMap::new();
        for (p, w) in &self.atoms {
            let v = f.value(p);
            if v < 0.0 {
                return Err(Error::invalid("weight", format!("negative value {v} at {p}")));
            }
            atoms.insert(p.clone(), w * v);
        }
        let mut cells = Vec::new();
        for (iv, d, v) in StepDensity::zip(&self.density, &f.steps) {
            let (d, v) = (d.unwrap_or(0.0), v.unwrap_or(0.0));
            if d > 0.0 && v < 0.0 {
                return Err(Error::invalid("weight", format!("negative value {v} on {iv}")));
            }
            if d > 0.0 {
                cells.push(Cell::new(iv, d * v));
            }
        }
        HybridMeasure::new(self.space.clone(), atoms, StepDensity::sum_of(cells), false)
    }

    /// `c·m`; the result is flagged unnormalized unless `c == 1`.
    pub fn scale(&self, c: f64) -> HybridMeasure {
        HybridMeasure {
            space: self.space.clone(),
            atoms: self.atoms.iter().map(|(p, w)| (p.clone(), w * c)).collect(),
            density: self.density.scale(c),
            normalized: self.normalized && c == 1.0,
        }
    }

    /// Sum of two measures on the same space (unnormalized).
    pub fn add(&self, other: &HybridMeasure) -> Result<HybridMeasure> {
        crate::space::require_same(&self.space, &other.space, "measure sum")?;
        let mut atoms = self.atoms.clone();
        for (p, w) in &other.atoms {
            *atoms.entry(p.clone()).or_insert(0.0) += w;
        }
        Ok(HybridMeasure {
            space: self.space.clone(),
            atoms,
            density: self.density.add(&other.density),
            normalized: false,
        })
    }

    /// `m / m(space)`; fails on the zero measure.
    pub fn normalize(&self) -> Result<HybridMeasure> {
        let t = self.total_mass();
        if !(t > 0.0) {
            return Err(Error::Domain("cannot normalize a null measure".into()));
        }
        let mut m = self.scale(1.0 / t);
        m.normalized = true;
        Ok(m)
    }

    /// Marks the measure as a probability measure after checking its mass.
    pub fn into_probability(mut self) -> Result<HybridMeasure> {
        self.check_normalized()?;
        self.normalized = true;
        Ok(self)
    }

    /// Entropy in nats against [`canonical_reference`](Self::canonical_reference):
    /// Shannon entropy of the atoms plus differential entropy of the density.
    pub fn entropy(&self) -> f64 {
        let a: f64 = self.charged_atoms().map(|(_, w)| -w * w.ln()).sum();
        let d: f64 = self
            .density
            .support()
            .map(|c| -c.mass() * c.value.ln())
            .sum();
        a + d
    }

    /// Total length of the cells carrying positive density.
    pub fn density_support_length(&self) -> Rational {
        self.density.support_length()
    }

    /// Approximate equality of two measures on the same space: equal atom
    /// weights and equal density values on the common refinement.
    pub fn approx_eq(&self, other: &HybridMeasure, tol: f64) -> bool {
        if !crate::space::same_space(&self.space, &other.space) {
            return false;
        }
        let keys: BTreeSet<&Point> = self.atoms.keys().chain(other.atoms.keys()).collect();
        for p in keys {
            if (self.point_mass(p) - other.point_mass(p)).abs() > tol {
                return false;
            }
        }
        StepDensity::zip(&self.density, &other.density)
            .into_iter()
            .all(|(_, a, b)| (a.unwrap_or(0.0) - b.unwrap_or(0.0)).abs() <= tol)
    }
}
