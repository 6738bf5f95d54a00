//! The five equivalent regularity conditions for a pair `(X, Y)`, each
//! decided by its own procedure, plus pushforward behaviour and mutual
//! information.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::conditioning::{ac_check, ac_check_joint, conditional_density_or_witness, disintegrate, Witness};
use crate::error::Result;
use crate::joint::{product_measure, CurveComponent, CurveKind, GridDensity, JointMeasure, Part};
use crate::map::MeasurableMap;
use crate::measure::HybridMeasure;
use crate::rational::Rational;
use crate::space::{Interval, Point, Space};
use crate::step::StepDensity;

/// Tolerance of the Fubini reconstruction used by the first condition.
pub const RECONSTRUCTION_TOL: f64 = 1e-12;

pub const CONDITION_NAMES: [&str; 5] = [
    "joint density w.r.t. a product measure",
    "joint ≪ product of marginals",
    "conditional density w.r.t. a σ-finite measure",
    "conditional distribution ≪ marginal",
    "conditional distribution dominated with a marginal density",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    /// Verdicts for conditions 1 to 5, in order.
    pub conditions: [bool; 5],
    /// Obstruction found by each failed checker, keyed by condition number.
    pub witnesses: BTreeMap<usize, Witness>,
    pub agree: bool,
}

impl ConditionReport {
    fn from_results(results: [std::result::Result<(), Witness>; 5]) -> Self {
        let mut conditions = [false; 5];
        let mut witnesses = BTreeMap::new();
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Ok(()) => conditions[i] = true,
                Err(w) => {
                    witnesses.insert(i + 1, w);
                }
            }
        }
        let agree = conditions.iter().all(|c| *c == conditions[0]);
        ConditionReport {
            conditions,
            witnesses,
            agree,
        }
    }

    pub fn all_true(&self) -> bool {
        self.conditions.iter().all(|c| *c)
    }

    pub fn all_false(&self) -> bool {
        self.conditions.iter().all(|c| !*c)
    }

    /// The common verdict, when the checkers agree.
    pub fn verdict(&self) -> Option<bool> {
        self.agree.then_some(self.conditions[0])
    }
}

impl fmt::Display for ConditionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, name) in CONDITION_NAMES.iter().enumerate() {
            let mark = if self.conditions[i] { "holds" } else { "fails" };
            write!(f, "c{} {:<60} {mark}", i + 1, name)?;
            if let Some(w) = self.witnesses.get(&(i + 1)) {
                write!(f, "  [{w}]")?;
            }
            writeln!(f)?;
        }
        write!(f, "agree: {}", self.agree)
    }
}

/// Nonnegative extended real.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedReal {
    Finite(f64),
    Infinite,
}

impl ExtendedReal {
    pub fn is_finite(&self) -> bool {
        matches!(self, ExtendedReal::Finite(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            ExtendedReal::Finite(v) => Some(*v),
            ExtendedReal::Infinite => None,
        }
    }
}

impl fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedReal::Finite(v) => write!(f, "{v}"),
            ExtendedReal::Infinite => write!(f, "infinite"),
        }
    }
}

fn graph_witness(j: &JointMeasure) -> Option<Witness> {
    j.graphs()
        .iter()
        .flat_map(|((s, o), d)| {
            d.support().map(move |c| Witness::Graph {
                slope: *s,
                offset: *o,
                y: c.interval.clone(),
                p_mass: c.mass(),
            })
        })
        .max_by(|a, b| a.p_mass().total_cmp(&b.p_mass()))
}

/// Condition 1: builds a density with respect to `λ_X × λ_Y`, where `λ` is
/// counting measure on the charged marginal atoms plus length, and verifies
/// it on every product of parts by comparing the iterated integral with the
/// joint mass.
fn condition1(j: &JointMeasure, px: &HybridMeasure, py: &HybridMeasure) -> Result<std::result::Result<(), Witness>> {
    if let Some(w) = graph_witness(j) {
        return Ok(Err(w));
    }
    let x_atoms: Vec<Point> = px.charged_atoms().map(|(p, _)| p.clone()).collect();
    let y_atoms: Vec<Point> = py.charged_atoms().map(|(p, _)| p.clone()).collect();
    let mut xc: BTreeSet<Rational> = j.grid().x_cells().iter().flat_map(|c| [c.lo, c.hi]).collect();
    for d in j.horizontals().values() {
        xc.extend(d.breakpoints());
    }
    let mut yc: BTreeSet<Rational> = j.grid().y_cells().iter().flat_map(|c| [c.lo, c.hi]).collect();
    for d in j.verticals().values() {
        yc.extend(d.breakpoints());
    }
    let x_cells = j.x_space().partition(&xc);
    let y_cells = j.y_space().partition(&yc);
    let grid = j.grid().refine(&xc, &yc);
    let empty = StepDensity::zero();
    // density on parts: atoms first, then cells
    let nx = x_atoms.len() + x_cells.len();
    let ny = y_atoms.len() + y_cells.len();
    let mut values = vec![0.0; nx * ny];
    for (i, x) in x_atoms.iter().enumerate() {
        for (k, y) in y_atoms.iter().enumerate() {
            values[i * ny + k] = j.atoms().get(&(x.clone(), y.clone())).copied().unwrap_or(0.0);
        }
        let line = j.verticals().get(x).unwrap_or(&empty);
        for (k, c) in y_cells.iter().enumerate() {
            values[i * ny + y_atoms.len() + k] = line.value_at(&c.lo);
        }
    }
    for (k, y) in y_atoms.iter().enumerate() {
        let line = j.horizontals().get(y).unwrap_or(&empty);
        for (i, c) in x_cells.iter().enumerate() {
            values[(x_atoms.len() + i) * ny + k] = line.value_at(&c.lo);
        }
    }
    for i in 0..x_cells.len() {
        for k in 0..y_cells.len() {
            values[(x_atoms.len() + i) * ny + y_atoms.len() + k] = grid.value(i, k);
        }
    }
    let parts = |atoms: &[Point], cells: &[Interval]| -> Vec<Part> {
        atoms
            .iter()
            .cloned()
            .map(Part::Point)
            .chain(cells.iter().cloned().map(Part::Cell))
            .collect()
    };
    let x_parts = parts(&x_atoms, &x_cells);
    let y_parts = parts(&y_atoms, &y_cells);
    let size = |p: &Part| match p {
        Part::Point(_) => 1.0,
        Part::Cell(c) => c.len_f64(),
    };
    // Fubini: ∫∫ 1_{A×B} f dλ_X dλ_Y against P(A×B) for every pair of parts.
    // Mass on a cell excludes the atom points inside it, as in the part
    // semantics of product functions.
    let masses = j.part_masses(&x_parts, &y_parts);
    for i in 0..nx {
        for k in 0..ny {
            let mass = masses[i * ny + k];
            let iterated = values[i * ny + k] * size(&x_parts[i]) * size(&y_parts[k]);
            if (mass - iterated).abs() > RECONSTRUCTION_TOL {
                return Ok(Err(Witness::Reconstruction {
                    part: format!("{}×{}", x_parts[i], y_parts[k]),
                    expected: mass,
                    found: iterated,
                }));
            }
        }
    }
    Ok(Ok(()))
}

/// Condition 4: every section of the canonical conditional distribution is
/// tested against `P_X`. Moving atoms are evaluated at a y whose image
/// avoids the atoms of `P_X`.
fn condition4(j: &JointMeasure, px: &HybridMeasure) -> Result<std::result::Result<(), Witness>> {
    let d = disintegrate(j)?;
    let k = &d.kernel;
    for c in k.cells() {
        let y = probe_point(&c.cell, &c.tracking, px, k.points());
        let s = k.section_at(&y)?;
        let r = ac_check(&s, px)?;
        if let Some(w) = r.witness {
            return Ok(Err(Witness::Section { y, inner: Box::new(w) }));
        }
    }
    for (y, s) in k.points() {
        let r = ac_check(s, px)?;
        if let Some(w) = r.witness {
            return Ok(Err(Witness::Section {
                y: y.clone(),
                inner: Box::new(w),
            }));
        }
    }
    Ok(Ok(()))
}

/// A point of `cell` that has no section of its own and at which no moving
/// atom lands on an atom of `m`.
fn probe_point(
    cell: &Interval,
    tracking: &[crate::kernel::TrackingAtom],
    m: &HybridMeasure,
    overrides: &BTreeMap<Point, HybridMeasure>,
) -> Point {
    let mut bad: BTreeSet<Rational> = overrides
        .keys()
        .filter_map(|p| match p {
            Point::Real(y) => Some(*y),
            Point::Atom(_) => None,
        })
        .collect();
    bad.extend(tracking
        .iter()
        .flat_map(|t| {
            m.atoms().keys().filter_map(move |p| match p {
                Point::Real(x) => Some((x - t.offset) / t.slope),
                Point::Atom(_) => None,
            })
        }));
    Point::Real(cell.probe(&bad))
}

/// Condition 5: collects the atoms of all sections; together with length
/// measure they form the only candidate reference in the class. Moving atoms
/// over a cell of positive probability rule every candidate out.
fn condition5(j: &JointMeasure, px: &HybridMeasure) -> Result<std::result::Result<(), Witness>> {
    let d = disintegrate(j)?;
    let k = &d.kernel;
    let mut atoms: BTreeSet<Point> = BTreeSet::new();
    for c in k.cells() {
        if !d.null_cells.contains(&c.cell) {
            if let Some(t) = c.tracking.iter().find(|t| t.weight > 0.0) {
                return Ok(Err(Witness::Tracking {
                    y: c.cell.clone(),
                    slope: t.slope,
                    offset: t.offset,
                    p_mass: t.weight * d.marginal_y.density().integral_over(&c.cell),
                }));
            }
        }
        atoms.extend(c.fixed.charged_atoms().map(|(p, _)| p.clone()));
    }
    for s in k.points().values() {
        atoms.extend(s.charged_atoms().map(|(p, _)| p.clone()));
    }
    let mu = HybridMeasure::new(
        j.x_space().clone(),
        atoms.into_iter().map(|p| (p, 1.0)).collect(),
        StepDensity::constant(j.x_space().intervals(), 1.0),
        false,
    )?;
    // sections dominated by μ: atoms by construction, densities by length
    for c in k.cells() {
        if let Some((p, w)) = c.fixed.charged_atoms().find(|(p, _)| mu.point_mass(p) <= 0.0) {
            return Ok(Err(Witness::Atom { point: p.clone(), p_mass: w }));
        }
    }
    // marginal density p(x) = dP_X/dμ must reproduce P_X
    let r = ac_check(px, &mu)?;
    match r.derivative {
        Some(p) => {
            let back = mu.weighted(&p)?;
            if !back.approx_eq(px, 1e-12) {
                return Ok(Err(Witness::Unnormalized {
                    y: "marginal".into(),
                    total: back.total_mass(),
                }));
            }
            Ok(Ok(()))
        }
        None => Ok(Err(r.witness.expect("failed check carries a witness"))),
    }
}

/// Runs the five checkers on a probability measure on `X × Y`.
pub fn check_conditions(j: &JointMeasure) -> Result<ConditionReport> {
    if !j.is_normalized() {
        return Err(crate::error::Error::NotNormalized(j.total_mass()));
    }
    let px = j.marginal_x();
    let py = j.marginal_y();
    let c1 = condition1(j, &px, &py)?;
    let prod = product_measure(&px, &py);
    let c2 = match ac_check_joint(j, &prod)?.witness {
        None => Ok(()),
        Some(w) => Err(w),
    };
    let c3 = conditional_density_or_witness(j, &px)?.map(|_| ());
    let c4 = condition4(j, &px)?;
    let c5 = condition5(j, &px)?;
    Ok(ConditionReport::from_results([c1, c2, c3, c4, c5]))
}

/// Reports before and after pushing both coordinates forward.
pub fn check_condition6(
    j: &JointMeasure,
    f: &MeasurableMap,
    g: &MeasurableMap,
) -> Result<(ConditionReport, ConditionReport)> {
    let before = check_conditions(j)?;
    let after = check_conditions(&j.pushforward(f, g)?)?;
    Ok((before, after))
}

fn plogr(p: f64, r: f64) -> f64 {
    if p > 0.0 {
        p * r.ln()
    } else {
        0.0
    }
}

/// `I(X; Y)` in nats, infinite when the joint is not absolutely continuous
/// with respect to the product of its marginals.
pub fn mutual_information(j: &JointMeasure) -> Result<ExtendedReal> {
    let px = j.marginal_x();
    let py = j.marginal_y();
    let prod = product_measure(&px, &py);
    let report = ac_check_joint(j, &prod)?;
    let Some(d) = report.derivative else {
        return Ok(ExtendedReal::Infinite);
    };
    let mut total = 0.0;
    for ((x, y), w) in j.atoms() {
        total += plogr(*w, d.atoms.get(&(x.clone(), y.clone())).copied().unwrap_or(0.0));
    }
    let (gp, gr) = GridDensity::common(j.grid(), &d.grid);
    let ny = gp.y_cells().len();
    for (i, xc) in gp.x_cells().iter().enumerate() {
        for (k, yc) in gp.y_cells().iter().enumerate() {
            let p = gp.values()[i * ny + k] * xc.len_f64() * yc.len_f64();
            total += plogr(p, gr.values()[i * ny + k]);
        }
    }
    let empty = StepDensity::zero();
    for (lines, ratios) in [(j.verticals(), &d.verticals), (j.horizontals(), &d.horizontals)] {
        for (k, line) in lines {
            for (iv, p, r) in StepDensity::zip(line, ratios.get(k).unwrap_or(&empty)) {
                total += plogr(p.unwrap_or(0.0) * iv.len_f64(), r.unwrap_or(0.0));
            }
        }
    }
    if total < 0.0 && total > -1e-12 {
        total = 0.0;
    }
    Ok(ExtendedReal::Finite(total))
}

/// `X = Y` uniform on `[0, 1]`: all mass on the diagonal.
pub fn diagonal_joint() -> JointMeasure {
    let unit = Interval::new(Rational::from_integer(0), Rational::from_integer(1)).expect("unit interval");
    JointMeasure::new(
        Space::unit(),
        Space::unit(),
        BTreeMap::new(),
        None,
        vec![CurveComponent {
            kind: CurveKind::Graph {
                slope: Rational::from_integer(1),
                offset: Rational::from_integer(0),
            },
            line_density: StepDensity::constant(&[unit], 1.0),
            weight: 1.0,
        }],
        true,
    )
    .expect("diagonal joint")
}

/// `D(p ‖ q)` in nats, infinite unless `p ≪ q`.
pub fn relative_entropy(p: &HybridMeasure, q: &HybridMeasure) -> Result<ExtendedReal> {
    let Some(d) = ac_check(p, q)?.derivative else {
        return Ok(ExtendedReal::Infinite);
    };
    let mut total: f64 = p.charged_atoms().map(|(x, w)| plogr(w, d.value(x))).sum();
    for (iv, pd, r) in StepDensity::zip(p.density(), d.steps()) {
        total += plogr(pd.unwrap_or(0.0) * iv.len_f64(), r.unwrap_or(0.0));
    }
    Ok(ExtendedReal::Finite(total.max(0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::joint::CurveKind;
    use crate::rational::{int, q};
    use crate::space::Space;

    fn iv(a: Rational, b: Rational) -> Interval {
        Interval::new(a, b).unwrap()
    }

    fn diagonal() -> JointMeasure {
        diagonal_joint()
    }

    fn square() -> JointMeasure {
        let u = HybridMeasure::uniform(Space::unit()).unwrap();
        product_measure(&u, &u)
    }

    fn table(w: &[&[f64]]) -> JointMeasure {
        let rows: Vec<String> = (0..w.len()).map(|i| format!("x{i}")).collect();
        let cols: Vec<String> = (0..w[0].len()).map(|i| format!("y{i}")).collect();
        let mut atoms = BTreeMap::new();
        for (i, r) in rows.iter().enumerate() {
            for (k, c) in cols.iter().enumerate() {
                atoms.insert((Point::atom(r.as_str()), Point::atom(c.as_str())), w[i][k]);
            }
        }
        JointMeasure::new(
            Space::finite(rows.iter().map(String::as_str)).unwrap(),
            Space::finite(cols.iter().map(String::as_str)).unwrap(),
            atoms,
            None,
            vec![],
            true,
        )
        .unwrap()
    }

    #[test]
    fn diagonal_fails_everything() {
        let r = check_conditions(&diagonal()).unwrap();
        assert!(r.all_false() && r.agree);
        assert!(r.witnesses[&2].is_graph());
        assert_eq!(mutual_information(&diagonal()).unwrap(), ExtendedReal::Infinite);
    }

    #[test]
    fn finite_joints_pass_everything() {
        let j = table(&[&[0.4, 0.1], &[0.2, 0.3]]);
        let r = check_conditions(&j).unwrap();
        assert!(r.all_true() && r.agree, "{r}");
    }

    #[test]
    fn half_singular_mixture_fails_everything() {
        let j = square().mix(0.5, &diagonal(), 0.5).unwrap();
        let r = check_conditions(&j).unwrap();
        assert!(r.all_false() && r.agree, "{r}");
        // the singular part carries mass 1/2
        let prod = product_measure(&j.marginal_x(), &j.marginal_y());
        let ac = ac_check_joint(&j, &prod).unwrap();
        assert!((ac.singular_mass - 0.5).abs() < 1e-15);
    }

    #[test]
    fn moving_atom_through_a_y_atom_still_fails() {
        // the y-atom at 1/2 has its own section; the probe must avoid it
        let mut b = crate::joint::JointBuilder::new();
        b.atom(Point::Real(q(1, 4)), Point::Real(q(1, 2)), 0.5);
        b.curve(CurveKind::Graph { slope: int(1), offset: int(0) }, &StepDensity::constant(&[iv(int(0), int(1))], 0.5), 1.0);
        let j = b.build(Space::unit().into(), Space::unit().into(), true).unwrap();
        let r = check_conditions(&j).unwrap();
        assert!(r.all_false() && r.agree, "{r}");
    }

    #[test]
    fn square_passes_and_is_independent() {
        let r = check_conditions(&square()).unwrap();
        assert!(r.all_true() && r.agree);
        assert_eq!(mutual_information(&square()).unwrap(), ExtendedReal::Finite(0.0));
    }

    #[test]
    fn diagonal_table_has_log2_information() {
        let j = table(&[&[0.5, 0.0], &[0.0, 0.5]]);
        let mi = mutual_information(&j).unwrap().finite().unwrap();
        // four-term sum: 2 · 0.5·ln(0.5 / 0.25)
        let oracle = 2.0 * 0.5 * (0.5f64 / 0.25).ln();
        assert!((mi - oracle).abs() < 1e-15);
        assert!((mi - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn mixed_strips_pass() {
        // x-atom with a y-density strip, y-atom with an x-density strip, and a grid
        let xs = Space::new(vec!["a".into()], vec![iv(int(0), int(1))]).unwrap();
        let ys = Space::new(vec!["b".into()], vec![iv(int(0), int(1))]).unwrap();
        let mx = HybridMeasure::new(xs, BTreeMap::from([(Point::atom("a"), 0.3)]), StepDensity::constant(&[iv(int(0), q(1, 2))], 1.4), true).unwrap();
        let my = HybridMeasure::new(ys, BTreeMap::from([(Point::atom("b"), 0.6)]), StepDensity::constant(&[iv(q(1, 2), int(1))], 0.8), true).unwrap();
        let j = product_measure(&mx, &my);
        let r = check_conditions(&j).unwrap();
        assert!(r.all_true() && r.agree, "{r}");
        assert!(mutual_information(&j).unwrap().finite().unwrap().abs() < 1e-12);
    }

    #[test]
    fn condition6_examples() {
        let bins = Space::finite(["lo", "hi"]).unwrap();
        let quant = MeasurableMap::quantizer(
            Space::unit(),
            bins,
            &[int(0), q(1, 2), int(1)],
            &[Point::atom("lo"), Point::atom("hi")],
            BTreeMap::new(),
        )
        .unwrap();
        let (before, after) = check_condition6(&square(), &quant, &quant).unwrap();
        assert!(before.all_true() && after.all_true());
        let (before, after) = check_condition6(&diagonal(), &quant, &quant).unwrap();
        assert!(before.all_false() && after.all_true());

        let j = table(&[&[0.4, 0.1], &[0.2, 0.3]]);
        let swap = MeasurableMap::new(
            j.x_space().clone(),
            j.x_space().clone(),
            BTreeMap::from([(Point::atom("x0"), Point::atom("x1")), (Point::atom("x1"), Point::atom("x0"))]),
            vec![],
        )
        .unwrap();
        let id = MeasurableMap::identity(j.y_space().clone());
        let (before, after) = check_condition6(&j, &swap, &id).unwrap();
        assert!(before.all_true() && after.all_true());
    }
}
