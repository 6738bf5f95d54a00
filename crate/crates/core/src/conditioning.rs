//! Absolute continuity, Radon–Nikodým derivatives and disintegration of
//! joint measures into conditional distributions.
//!
//! Decisions are exact: supports are compared on common refinements of the
//! exact rational partitions, never by sampling.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::joint::{find_cell, midpoint, GridDensity, JointBuilder, JointMeasure, Part, ProductFunction};
use crate::kernel::{KernelCell, TrackingAtom, TransitionKernel};
use crate::measure::{HybridMeasure, SimpleFunction};
use crate::rational::Rational;
use crate::space::{require_same, Interval, Point};
use crate::step::{Cell, StepDensity};

/// A set that is null for the reference measure but charged by the measure
/// under test. Continuous witnesses exclude the finitely many points and
/// lines on which the reference may sit.
#[derive(Debug, Clone, PartialEq)]
pub enum Witness {
    Atom { point: Point, p_mass: f64 },
    Cell { interval: Interval, p_mass: f64 },
    JointAtom { x: Point, y: Point, p_mass: f64 },
    JointCell { x: Interval, y: Interval, p_mass: f64 },
    /// `{x} × y`
    Vertical { x: Point, y: Interval, p_mass: f64 },
    /// `x × {y}`
    Horizontal { y: Point, x: Interval, p_mass: f64 },
    /// Graph of `slope·y + offset` over `y`.
    Graph { slope: Rational, offset: Rational, y: Interval, p_mass: f64 },
    /// Section at `y` of a conditional distribution.
    Section { y: Point, inner: Box<Witness> },
    /// Atoms moving with y over a cell of positive probability: no finite
    /// set of reference atoms can charge them all.
    Tracking { y: Interval, slope: Rational, offset: Rational, p_mass: f64 },
    /// A computed density that fails to integrate to one (an internal
    /// inconsistency, reported rather than raised).
    Unnormalized { y: String, total: f64 },
    /// A constructed density that does not reproduce the measure on a
    /// product of parts.
    Reconstruction { part: String, expected: f64, found: f64 },
}

impl Witness {
    pub fn p_mass(&self) -> f64 {
        match self {
            Witness::Atom { p_mass, .. }
            | Witness::Cell { p_mass, .. }
            | Witness::JointAtom { p_mass, .. }
            | Witness::JointCell { p_mass, .. }
            | Witness::Vertical { p_mass, .. }
            | Witness::Horizontal { p_mass, .. }
            | Witness::Graph { p_mass, .. }
            | Witness::Tracking { p_mass, .. } => *p_mass,
            Witness::Section { inner, .. } => inner.p_mass(),
            Witness::Unnormalized { total, .. } => (total - 1.0).abs(),
            Witness::Reconstruction { expected, found, .. } => (expected - found).abs(),
        }
    }

    pub fn is_graph(&self) -> bool {
        match self {
            Witness::Graph { .. } | Witness::Tracking { .. } => true,
            Witness::Section { inner, .. } => inner.is_graph(),
            _ => false,
        }
    }
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Witness::Atom { point, p_mass } => write!(f, "atom {point} (mass {p_mass})"),
            Witness::Cell { interval, p_mass } => write!(f, "cell {interval} (mass {p_mass})"),
            Witness::JointAtom { x, y, p_mass } => write!(f, "atom ({x}, {y}) (mass {p_mass})"),
            Witness::JointCell { x, y, p_mass } => write!(f, "cell {x}×{y} (mass {p_mass})"),
            Witness::Vertical { x, y, p_mass } => write!(f, "strip {{{x}}}×{y} (mass {p_mass})"),
            Witness::Horizontal { y, x, p_mass } => write!(f, "strip {x}×{{{y}}} (mass {p_mass})"),
            Witness::Graph { slope, offset, y, p_mass } => {
                write!(f, "graph x = {slope}·y + {offset} for y in {y} (mass {p_mass})")
            }
            Witness::Section { y, inner } => write!(f, "section at y = {y}: {inner}"),
            Witness::Tracking { y, slope, offset, p_mass } => {
                write!(f, "moving atom x = {slope}·y + {offset} for y in {y} (mass {p_mass})")
            }
            Witness::Unnormalized { y, total } => write!(f, "density at y = {y} integrates to {total}"),
            Witness::Reconstruction { part, expected, found } => {
                write!(f, "density gives {found} instead of {expected} on {part}")
            }
        }
    }
}

/// Outcome of an absolute-continuity test `P ≪ Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct ACReport<D> {
    pub absolutely_continuous: bool,
    /// Heaviest Q-null piece charged by P.
    pub witness: Option<Witness>,
    /// P-mass of the Q-singular part.
    pub singular_mass: f64,
    /// `dP/dQ`, present iff absolutely continuous; zero on Q-null pieces.
    pub derivative: Option<D>,
}

fn report<D>(pieces: Vec<Witness>, derivative: impl FnOnce() -> Result<D>) -> Result<ACReport<D>> {
    let singular_mass = pieces.iter().map(Witness::p_mass).sum();
    let witness = pieces
        .into_iter()
        .max_by(|a, b| a.p_mass().total_cmp(&b.p_mass()));
    Ok(match witness {
        Some(w) => ACReport {
            absolutely_continuous: false,
            witness: Some(w),
            singular_mass,
            derivative: None,
        },
        None => ACReport {
            absolutely_continuous: true,
            witness: None,
            singular_mass: 0.0,
            derivative: Some(derivative()?),
        },
    })
}

fn ratio(p: f64, q: f64) -> f64 {
    if q > 0.0 {
        p / q
    } else {
        0.0
    }
}

fn line_pieces(p: &StepDensity, q: Option<&StepDensity>) -> Vec<(Interval, f64)> {
    let empty = StepDensity::zero();
    StepDensity::zip(p, q.unwrap_or(&empty))
        .into_iter()
        .filter(|(_, a, b)| a.unwrap_or(0.0) > 0.0 && b.unwrap_or(0.0) <= 0.0)
        .map(|(iv, a, _)| {
            let m = a.unwrap_or(0.0) * iv.len_f64();
            (iv, m)
        })
        .collect()
}

fn line_ratio(p: Option<&StepDensity>, q: &StepDensity) -> StepDensity {
    let empty = StepDensity::zero();
    StepDensity::combine(p.unwrap_or(&empty), q, ratio)
}

/// Decides `P ≪ Q` on one space.
pub fn ac_check(p: &HybridMeasure, q: &HybridMeasure) -> Result<ACReport<SimpleFunction>> {
    require_same(p.space(), q.space(), "absolute continuity")?;
    let mut pieces = Vec::new();
    for (pt, w) in p.charged_atoms() {
        if q.point_mass(pt) <= 0.0 {
            pieces.push(Witness::Atom {
                point: pt.clone(),
                p_mass: w,
            });
        }
    }
    for (interval, p_mass) in line_pieces(p.density(), Some(q.density())) {
        pieces.push(Witness::Cell { interval, p_mass });
    }
    report(pieces, || {
        let points = q
            .charged_atoms()
            .map(|(pt, w)| (pt.clone(), p.point_mass(pt) / w))
            .collect();
        let cells = StepDensity::zip(p.density(), q.density())
            .into_iter()
            .map(|(iv, a, b)| Cell::new(iv, ratio(a.unwrap_or(0.0), b.unwrap_or(0.0))))
            .collect();
        SimpleFunction::new(points, cells)
    })
}

/// `dP/dQ` for joint measures, stored per component of Q.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDerivative {
    pub atoms: BTreeMap<(Point, Point), f64>,
    pub grid: GridDensity,
    pub verticals: BTreeMap<Point, StepDensity>,
    pub horizontals: BTreeMap<Point, StepDensity>,
    pub graphs: BTreeMap<(Rational, Rational), StepDensity>,
}

impl JointDerivative {
    /// The measure `(dP/dQ)·Q`; equals P when the derivative is correct.
    pub fn weighted(&self, q: &JointMeasure) -> Result<JointMeasure> {
        let mut b = JointBuilder::new();
        for ((x, y), w) in q.atoms() {
            let r = self.atoms.get(&(x.clone(), y.clone())).copied().unwrap_or(0.0);
            b.atom(x.clone(), y.clone(), w * r);
        }
        let (gq, gr) = GridDensity::common(q.grid(), &self.grid);
        let weighted = GridDensity::new(
            gq.x_cells().to_vec(),
            gq.y_cells().to_vec(),
            gq.values().iter().zip(gr.values()).map(|(a, r)| a * r).collect(),
        )?;
        b.grid(&weighted);
        fn lines<K: Ord + Clone>(
            b: &mut JointBuilder,
            q: &BTreeMap<K, StepDensity>,
            r: &BTreeMap<K, StepDensity>,
            kind: impl Fn(&K) -> crate::joint::CurveKind,
        ) {
            let empty = StepDensity::zero();
            for (k, d) in q {
                let prod = StepDensity::combine(d, r.get(k).unwrap_or(&empty), |a, c| a * c);
                b.curve(kind(k), &prod, 1.0);
            }
        }
        use crate::joint::CurveKind;
        lines(&mut b, q.verticals(), &self.verticals, |x| CurveKind::Vertical { x: x.clone() });
        lines(&mut b, q.horizontals(), &self.horizontals, |y| CurveKind::Horizontal { y: y.clone() });
        lines(&mut b, q.graphs(), &self.graphs, |(s, o)| CurveKind::Graph { slope: *s, offset: *o });
        b.build(q.x_space().clone(), q.y_space().clone(), false)
    }
}

/// Decides `P ≪ Q` for joint measures on the same product space.
pub fn ac_check_joint(p: &JointMeasure, q: &JointMeasure) -> Result<ACReport<JointDerivative>> {
    require_same(p.x_space(), q.x_space(), "joint X")?;
    require_same(p.y_space(), q.y_space(), "joint Y")?;
    let mut pieces = Vec::new();
    for ((x, y), w) in p.atoms() {
        if *w > 0.0 && q.atoms().get(&(x.clone(), y.clone())).copied().unwrap_or(0.0) <= 0.0 {
            pieces.push(Witness::JointAtom {
                x: x.clone(),
                y: y.clone(),
                p_mass: *w,
            });
        }
    }
    for (x, d) in p.verticals() {
        for (y, p_mass) in line_pieces(d, q.verticals().get(x)) {
            pieces.push(Witness::Vertical { x: x.clone(), y, p_mass });
        }
    }
    for (y, d) in p.horizontals() {
        for (x, p_mass) in line_pieces(d, q.horizontals().get(y)) {
            pieces.push(Witness::Horizontal { y: y.clone(), x, p_mass });
        }
    }
    for ((slope, offset), d) in p.graphs() {
        for (y, p_mass) in line_pieces(d, q.graphs().get(&(*slope, *offset))) {
            pieces.push(Witness::Graph {
                slope: *slope,
                offset: *offset,
                y,
                p_mass,
            });
        }
    }
    let (gp, gq) = GridDensity::common(p.grid(), q.grid());
    let ny = gp.y_cells().len();
    for (i, xc) in gp.x_cells().iter().enumerate() {
        for (j, yc) in gp.y_cells().iter().enumerate() {
            let (a, b) = (gp.values()[i * ny + j], gq.values()[i * ny + j]);
            if a > 0.0 && b <= 0.0 {
                pieces.push(Witness::JointCell {
                    x: xc.clone(),
                    y: yc.clone(),
                    p_mass: a * xc.len_f64() * yc.len_f64(),
                });
            }
        }
    }
    report(pieces, || {
        let atoms = q
            .atoms()
            .iter()
            .filter(|(_, w)| **w > 0.0)
            .map(|(k, w)| (k.clone(), p.atoms().get(k).copied().unwrap_or(0.0) / w))
            .collect();
        let grid = GridDensity::new(
            gp.x_cells().to_vec(),
            gp.y_cells().to_vec(),
            gp.values().iter().zip(gq.values()).map(|(a, b)| ratio(*a, *b)).collect(),
        )?;
        Ok(JointDerivative {
            atoms,
            grid,
            verticals: q.verticals().iter().map(|(k, d)| (k.clone(), line_ratio(p.verticals().get(k), d))).collect(),
            horizontals: q
                .horizontals()
                .iter()
                .map(|(k, d)| (k.clone(), line_ratio(p.horizontals().get(k), d)))
                .collect(),
            graphs: q.graphs().iter().map(|(k, d)| (*k, line_ratio(p.graphs().get(k), d))).collect(),
        })
    })
}

/// `P_{X,Y} = P_{X|Y} × P_Y`, with the x-marginal used wherever `P_Y`
/// vanishes.
#[derive(Debug, Clone, PartialEq)]
pub struct Disintegration {
    pub kernel: TransitionKernel,
    pub marginal_y: HybridMeasure,
    pub null_convention: HybridMeasure,
    /// Y-cells and Y-points where the null convention was used.
    pub null_cells: Vec<Interval>,
    pub null_points: Vec<Point>,
}

impl Disintegration {
    /// Same kernel with `m` used on the `P_Y`-null parts instead.
    pub fn with_null_section(&self, m: &HybridMeasure) -> Result<TransitionKernel> {
        let k = &self.kernel;
        let cells = k
            .cells()
            .iter()
            .map(|c| {
                if self.null_cells.contains(&c.cell) {
                    KernelCell {
                        cell: c.cell.clone(),
                        fixed: m.clone(),
                        tracking: vec![],
                    }
                } else {
                    c.clone()
                }
            })
            .collect();
        let points = k
            .points()
            .iter()
            .map(|(p, s)| {
                let s = if self.null_points.contains(p) { m.clone() } else { s.clone() };
                (p.clone(), s)
            })
            .collect();
        TransitionKernel::new(k.from_space().clone(), k.to_space().clone(), cells, points, true)
    }
}

fn section_from_parts(
    space: &crate::space::SpaceRef,
    atoms: BTreeMap<Point, f64>,
    density: StepDensity,
    tracking: Vec<TrackingAtom>,
) -> Result<Option<(HybridMeasure, Vec<TrackingAtom>)>> {
    let total = atoms.values().sum::<f64>() + density.total() + tracking.iter().map(|t| t.weight).sum::<f64>();
    if !(total > 0.0) {
        return Ok(None);
    }
    let atoms = atoms.into_iter().map(|(p, w)| (p, w / total)).collect();
    let fixed = HybridMeasure::new(space.clone(), atoms, density.scale(1.0 / total), false)?;
    let tracking = tracking
        .into_iter()
        .map(|t| TrackingAtom {
            weight: t.weight / total,
            ..t
        })
        .collect();
    Ok(Some((fixed, tracking)))
}

/// Conditional distribution of X given Y for a probability measure.
pub fn disintegrate(j: &JointMeasure) -> Result<Disintegration> {
    if !j.is_normalized() {
        return Err(Error::NotNormalized(j.total_mass()));
    }
    let py = j.marginal_y();
    let px = j.marginal_x();
    let xs = j.x_space();
    let mut cuts: BTreeSet<Rational> = py.breakpoints();
    cuts.extend(j.grid().y_cells().iter().flat_map(|c| [c.lo, c.hi]));
    for d in j.verticals().values().chain(j.graphs().values()) {
        cuts.extend(d.breakpoints());
    }
    let mut cells = Vec::new();
    let mut null_cells = Vec::new();
    for cell in j.y_space().partition(&cuts) {
        let mid = midpoint(&cell);
        let mut section = None;
        if py.density().value_at(&mid) > 0.0 {
            let density = match find_cell(j.grid().y_cells(), &mid) {
                Some(col) => j.grid().column(col),
                None => StepDensity::zero(),
            };
            let atoms = j
                .verticals()
                .iter()
                .map(|(x, d)| (x.clone(), d.value_at(&mid)))
                .filter(|(_, v)| *v > 0.0)
                .collect();
            let tracking = j
                .graphs()
                .iter()
                .map(|((s, o), d)| TrackingAtom {
                    slope: *s,
                    offset: *o,
                    weight: d.value_at(&mid),
                })
                .filter(|t| t.weight > 0.0)
                .collect();
            section = section_from_parts(xs, atoms, density, tracking)?;
        }
        let (fixed, tracking) = match section {
            Some(s) => s,
            None => {
                null_cells.push(cell.clone());
                (px.clone(), vec![])
            }
        };
        cells.push(KernelCell { cell, fixed, tracking });
    }
    let mut ys: BTreeSet<Point> = j.y_space().atom_points().into_iter().collect();
    ys.extend(py.charged_atoms().map(|(p, _)| p.clone()));
    let mut points = BTreeMap::new();
    let mut null_points = Vec::new();
    for y in ys {
        let mut atoms: BTreeMap<Point, f64> = BTreeMap::new();
        if py.point_mass(&y) > 0.0 {
            for ((x, yy), w) in j.atoms() {
                if *yy == y && *w > 0.0 {
                    *atoms.entry(x.clone()).or_insert(0.0) += w;
                }
            }
        }
        let density = match py.point_mass(&y) > 0.0 {
            true => j.horizontals().get(&y).cloned().unwrap_or_default(),
            false => StepDensity::zero(),
        };
        let section = match section_from_parts(xs, atoms, density, vec![])? {
            Some((m, _)) => m.into_probability_loose()?,
            None => {
                null_points.push(y.clone());
                px.clone()
            }
        };
        points.insert(y, section);
    }
    let kernel = TransitionKernel::new(j.y_space().clone(), xs.clone(), cells, points, true)?;
    Ok(Disintegration {
        kernel,
        marginal_y: py,
        null_convention: px,
        null_cells,
        null_points,
    })
}

/// `p(x | y)` with respect to a reference `μ` on X, as a function constant
/// on products of parts.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalDensity {
    pub reference: HybridMeasure,
    pub density: ProductFunction,
}

/// Density of one section against `μ` on the given x-parts, or the μ-null
/// piece it charges.
fn section_density(
    fixed: &HybridMeasure,
    mu: &HybridMeasure,
    mu_atoms: &[Point],
    x_cells: &[Interval],
) -> std::result::Result<Vec<f64>, Witness> {
    if let Some((p, w)) = fixed.charged_atoms().find(|(p, _)| mu.point_mass(p) <= 0.0) {
        return Err(Witness::Atom { point: p.clone(), p_mass: w });
    }
    let mut out: Vec<f64> = mu_atoms
        .iter()
        .map(|p| fixed.point_mass(p) / mu.point_mass(p))
        .collect();
    for c in x_cells {
        let mid = midpoint(c);
        let (s, m) = (fixed.density().value_at(&mid), mu.density().value_at(&mid));
        if s > 0.0 && m <= 0.0 {
            return Err(Witness::Cell {
                interval: c.clone(),
                p_mass: s * c.len_f64(),
            });
        }
        out.push(ratio(s, m));
    }
    Ok(out)
}

/// Conditional density of X given Y with respect to `μ`, if one exists in
/// the class. On `P_Y`-null parts the density of the null convention is used
/// when it exists and the density of the normalized `μ` otherwise. Every
/// section is checked to integrate to one against `μ`.
pub fn conditional_density(j: &JointMeasure, mu: &HybridMeasure) -> Result<Option<ConditionalDensity>> {
    Ok(conditional_density_or_witness(j, mu)?.ok())
}

/// As [`conditional_density`], naming the obstruction when there is none.
pub fn conditional_density_or_witness(
    j: &JointMeasure,
    mu: &HybridMeasure,
) -> Result<std::result::Result<ConditionalDensity, Witness>> {
    require_same(j.x_space(), mu.space(), "conditional density reference")?;
    let d = disintegrate(j)?;
    let k = &d.kernel;
    let mu_atoms: Vec<Point> = mu.charged_atoms().map(|(p, _)| p.clone()).collect();
    let mut cuts = mu.breakpoints();
    for c in k.cells() {
        cuts.extend(c.fixed.breakpoints());
    }
    for s in k.points().values() {
        cuts.extend(s.breakpoints());
    }
    let x_cells = j.x_space().partition(&cuts);
    let section_witness = |cell: &Interval, m: &HybridMeasure, mu: &HybridMeasure| -> Witness {
        let inner = section_density(m, mu, &mu_atoms, &x_cells).err().expect("section is not dominated");
        Witness::Section {
            y: Point::Real(midpoint(cell)),
            inner: Box::new(inner),
        }
    };
    let null_default = || -> Option<Vec<f64>> {
        let t = mu.total_mass();
        (t > 0.0).then(|| vec![1.0 / t; mu_atoms.len() + x_cells.len()])
    };
    let mut y_parts = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for c in k.cells() {
        let null = d.null_cells.contains(&c.cell);
        if let Some(t) = c.tracking.iter().find(|t| t.weight > 0.0 && !null) {
            return Ok(Err(Witness::Tracking {
                y: c.cell.clone(),
                slope: t.slope,
                offset: t.offset,
                p_mass: t.weight * d.marginal_y.density().integral_over(&c.cell),
            }));
        }
        let col = match section_density(&c.fixed, mu, &mu_atoms, &x_cells) {
            Ok(col) => col,
            Err(_) if null => match null_default() {
                Some(col) => col,
                None => return Ok(Err(section_witness(&c.cell, &c.fixed, mu))),
            },
            Err(_) => return Ok(Err(section_witness(&c.cell, &c.fixed, mu))),
        };
        y_parts.push(Part::Cell(c.cell.clone()));
        columns.push(col);
    }
    for (y, s) in k.points() {
        let null = d.null_points.contains(y);
        let col = match section_density(s, mu, &mu_atoms, &x_cells) {
            Ok(col) => col,
            Err(w) if null => match null_default() {
                Some(col) => col,
                None => return Ok(Err(Witness::Section { y: y.clone(), inner: Box::new(w) })),
            },
            Err(w) => return Ok(Err(Witness::Section { y: y.clone(), inner: Box::new(w) })),
        };
        y_parts.push(Part::Point(y.clone()));
        columns.push(col);
    }
    let x_parts: Vec<Part> = mu_atoms
        .iter()
        .cloned()
        .map(Part::Point)
        .chain(x_cells.iter().cloned().map(Part::Cell))
        .collect();
    // every section must integrate to one against μ
    for (part, col) in y_parts.iter().zip(&columns) {
        let points = mu_atoms.iter().cloned().zip(col.iter().copied()).collect();
        let cells = x_cells
            .iter()
            .cloned()
            .zip(col[mu_atoms.len()..].iter().copied())
            .map(|(iv, v)| Cell::new(iv, v))
            .collect();
        let total = mu.integrate(&SimpleFunction::new(points, cells)?)?;
        if (total - 1.0).abs() > 1e-9 {
            return Ok(Err(Witness::Unnormalized {
                y: match part {
                    Part::Point(p) => p.to_string(),
                    Part::Cell(c) => c.to_string(),
                },
                total,
            }));
        }
    }
    let (nx, ny) = (x_parts.len(), y_parts.len());
    let mut values = vec![0.0; nx * ny];
    for (jj, col) in columns.iter().enumerate() {
        for i in 0..nx {
            values[i * ny + jj] = col[i];
        }
    }
    Ok(Ok(ConditionalDensity {
        reference: mu.clone(),
        density: ProductFunction::new(x_parts, y_parts, values)?,
    }))
}
