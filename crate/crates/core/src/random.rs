//! Seeded generators of representable joints and maps, for property suites
//! and the equivalence verifier.
//!
//! Every generator draws from `ChaCha8Rng::seed_from_u64(seed)`, so a draw is
//! a pure function of its seed and profile.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bayes::{LikelihoodModel, Reference};
use crate::bayesnet::{BayesNet, Node, NodeParts};
use crate::joint::{CurveKind, JointBuilder, JointMeasure};
use crate::kernel::{KernelCell, TrackingAtom, TransitionKernel};
use crate::measure::HybridMeasure;
use crate::map::{affine_maps_into, MapPiece, MeasurableMap, PieceAction};
use crate::rational::{q, Rational};
use crate::space::{Interval, Point, Space, SpaceRef};
use crate::step::{Cell, StepDensity};

/// Class mix of a random joint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Profile {
    /// Point atoms only; every condition holds.
    AtomsOnly,
    /// Product-cell density with atoms and strips; every condition holds.
    Grid,
    /// Graph-supported mass only; every condition fails.
    Curve,
    /// Grid components plus, with some probability, graph mass.
    Mixed,
}

impl Profile {
    pub const ALL: [Profile; 4] = [Profile::AtomsOnly, Profile::Grid, Profile::Curve, Profile::Mixed];

    pub fn name(&self) -> &'static str {
        match self {
            Profile::AtomsOnly => "atoms-only",
            Profile::Grid => "grid",
            Profile::Curve => "curve",
            Profile::Mixed => "mixed",
        }
    }

    pub fn parse(s: &str) -> Option<Profile> {
        Profile::ALL.into_iter().find(|p| p.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileConfig {
    pub profile: Profile,
    /// Chance that a mixed draw carries graph mass.
    pub singular_prob: f64,
    /// Maximal number of atoms per coordinate.
    pub max_atoms: usize,
    /// Maximal number of density cells per coordinate.
    pub max_cells: usize,
}

impl ProfileConfig {
    pub fn new(profile: Profile) -> Self {
        ProfileConfig {
            profile,
            singular_prob: 0.5,
            max_atoms: 6,
            max_cells: 6,
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const DENOMS: [i128; 5] = [2, 3, 4, 6, 8];

/// Positive weight, or zero with probability `zero_prob`.
fn weight(r: &mut impl Rng, zero_prob: f64) -> f64 {
    if r.random_bool(zero_prob) {
        0.0
    } else {
        r.random_range(0.05..1.0)
    }
}

fn labels(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// A space with `0..=n_labels` labels and one or two intervals.
fn random_space(r: &mut impl Rng, prefix: &str, n_labels: usize) -> Space {
    let intervals = match r.random_range(0..4) {
        0 => vec![Interval::raw(q(0, 1), q(2, 1))],
        1 => vec![Interval::raw(q(0, 1), q(1, 1)), Interval::raw(q(2, 1), q(3, 1))],
        _ => vec![Interval::raw(q(0, 1), q(1, 1))],
    };
    Space::new(labels(prefix, n_labels), intervals).expect("valid random space")
}

/// Strictly increasing grid points inside `iv`, including both ends.
fn random_cuts(r: &mut impl Rng, iv: &Interval, max_cells: usize) -> Vec<Rational> {
    let d = DENOMS[r.random_range(0..DENOMS.len())];
    let step = q(1, d);
    let mut inner: Vec<Rational> = Vec::new();
    let mut x = iv.lo + step;
    while x < iv.hi {
        inner.push(x);
        x += step;
    }
    let k = r.random_range(0..=max_cells.saturating_sub(1).min(inner.len()));
    let mut picked: Vec<Rational> = Vec::new();
    for _ in 0..k {
        picked.push(inner[r.random_range(0..inner.len())]);
    }
    picked.push(iv.lo);
    picked.push(iv.hi);
    picked.sort();
    picked.dedup();
    picked
}

fn random_cells(r: &mut impl Rng, space: &Space, max_cells: usize) -> Vec<Interval> {
    let mut cells = Vec::new();
    for iv in space.intervals() {
        let cuts = random_cuts(r, iv, max_cells);
        cells.extend(cuts.windows(2).map(|w| Interval::raw(w[0], w[1])));
    }
    cells
}

/// A random grid point inside one of the intervals.
fn random_real(r: &mut impl Rng, space: &Space) -> Rational {
    let ivs = space.intervals();
    let iv = &ivs[r.random_range(0..ivs.len())];
    let d = DENOMS[r.random_range(0..DENOMS.len())];
    let n = ((iv.hi - iv.lo) * Rational::from_integer(d)).to_integer();
    iv.lo + q(r.random_range(0..n), d)
}

fn random_line(r: &mut impl Rng, cells: &[Interval], zero_prob: f64) -> StepDensity {
    StepDensity::from_sorted(
        cells
            .iter()
            .map(|c| Cell::new(c.clone(), weight(r, zero_prob)))
            .collect(),
    )
}

/// Graph of an affine bijection between grid-aligned subintervals, with a
/// random line density.
fn random_graph(r: &mut impl Rng, xs: &Space, ys: &Space, max_cells: usize) -> (Rational, Rational, StepDensity) {
    loop {
        let ycells = random_cells(r, ys, 2);
        let ycell = ycells[r.random_range(0..ycells.len())].clone();
        let xcells = random_cells(r, xs, 3);
        let xcell = xcells[r.random_range(0..xcells.len())].clone();
        let s = (xcell.hi - xcell.lo) / (ycell.hi - ycell.lo);
        let (slope, offset) = if r.random_bool(0.5) {
            (s, xcell.lo - s * ycell.lo)
        } else {
            // decreasing: y = lo maps to the top end, which must be attained
            let top = xcell.hi - q(1, 8).min((xcell.hi - xcell.lo) / Rational::from_integer(2));
            let s = (top - xcell.lo) / (ycell.hi - ycell.lo);
            (-s, top + s * ycell.lo)
        };
        if !affine_maps_into(xs, &slope, &offset, &ycell) {
            continue;
        }
        let sub = Space::new(vec![], vec![ycell.clone()]).expect("cell");
        let cells = random_cells(r, &sub, max_cells.min(3));
        let line = random_line(r, &cells, 0.0);
        return (slope, offset, line);
    }
}

/// Atoms, grid and strips: the absolutely continuous part of a draw.
fn regular_parts(r: &mut impl Rng, b: &mut JointBuilder, xs: &Space, ys: &Space, cfg: &ProfileConfig) {
    let xcells = random_cells(r, xs, cfg.max_cells);
    let ycells = random_cells(r, ys, cfg.max_cells);
    let density_prob = r.random_range(0.2..0.8);
    for xc in &xcells {
        for yc in &ycells {
            b.rect(xc.clone(), yc.clone(), weight(r, 1.0 - density_prob));
        }
    }
    let x_atoms = atom_points(r, xs, cfg.max_atoms);
    let y_atoms = atom_points(r, ys, cfg.max_atoms);
    for x in &x_atoms {
        for y in &y_atoms {
            let w = weight(r, 0.5);
            b.atom(x.clone(), y.clone(), w * 0.3);
        }
        if r.random_bool(0.5) {
            let line = random_line(r, &ycells, 0.4);
            b.curve(CurveKind::Vertical { x: x.clone() }, &line, 0.3);
        }
    }
    for y in &y_atoms {
        if r.random_bool(0.5) {
            let line = random_line(r, &xcells, 0.4);
            b.curve(CurveKind::Horizontal { y: y.clone() }, &line, 0.3);
        }
    }
}

/// Labels of the space plus up to two real points.
fn atom_points(r: &mut impl Rng, space: &Space, max_atoms: usize) -> Vec<Point> {
    let mut pts: Vec<Point> = space.atom_points().collect();
    if !space.intervals().is_empty() {
        for _ in 0..r.random_range(0..=2usize) {
            pts.push(Point::Real(random_real(r, space)));
        }
    }
    pts.sort();
    pts.dedup();
    pts.truncate(max_atoms);
    pts
}

fn finite_space(r: &mut impl Rng, prefix: &str, max: usize) -> Space {
    let n = r.random_range(1..=max.max(1));
    Space::new(labels(prefix, n), vec![]).expect("labels")
}

/// Random normalized joint for the given profile.
pub fn random_joint(seed: u64, profile: Profile) -> JointMeasure {
    random_joint_with(seed, &ProfileConfig::new(profile))
}

pub fn random_joint_with(seed: u64, cfg: &ProfileConfig) -> JointMeasure {
    let mut r = rng(seed);
    loop {
        if let Some(j) = draw(&mut r, cfg) {
            return j;
        }
    }
}

fn draw(r: &mut ChaCha8Rng, cfg: &ProfileConfig) -> Option<JointMeasure> {
    let mut b = JointBuilder::new();
    let (xs, ys) = match cfg.profile {
        Profile::AtomsOnly => {
            let (xs, ys) = if r.random_bool(0.3) {
                (random_space(r, "x", 0), random_space(r, "y", 0))
            } else {
                (finite_space(r, "x", cfg.max_atoms), finite_space(r, "y", cfg.max_atoms))
            };
            let xa = atom_points_n(r, &xs, cfg.max_atoms);
            let ya = atom_points_n(r, &ys, cfg.max_atoms);
            for x in &xa {
                for y in &ya {
                    b.atom(x.clone(), y.clone(), weight(r, 0.4));
                }
            }
            (xs, ys)
        }
        Profile::Grid => {
            let (nx, ny) = (r.random_range(0..=2), r.random_range(0..=2));
            let xs = random_space(r, "x", nx);
            let ys = random_space(r, "y", ny);
            regular_parts(r, &mut b, &xs, &ys, cfg);
            (xs, ys)
        }
        Profile::Curve => {
            let xs = random_space(r, "x", 0);
            let ys = random_space(r, "y", 0);
            for _ in 0..r.random_range(1..=2) {
                let (slope, offset, line) = random_graph(r, &xs, &ys, cfg.max_cells);
                b.curve(CurveKind::Graph { slope, offset }, &line, 1.0);
            }
            (xs, ys)
        }
        Profile::Mixed => {
            let (nx, ny) = (r.random_range(0..=1), r.random_range(0..=1));
            let xs = random_space(r, "x", nx);
            let ys = random_space(r, "y", ny);
            regular_parts(r, &mut b, &xs, &ys, cfg);
            if r.random_bool(cfg.singular_prob) {
                let (slope, offset, line) = random_graph(r, &xs, &ys, cfg.max_cells);
                let w = r.random_range(0.05..1.0);
                b.curve(CurveKind::Graph { slope, offset }, &line, w);
            }
            (xs, ys)
        }
    };
    let j = b.build(SpaceRef::new(xs), SpaceRef::new(ys), false).ok()?;
    let t = j.total_mass();
    if !(t > 0.0) {
        return None;
    }
    j.scale(1.0 / t).into_probability().ok()
}

/// Exactly the labels of a finite space, or up to `max` distinct real
/// points of an interval space.
fn atom_points_n(r: &mut impl Rng, space: &Space, max: usize) -> Vec<Point> {
    if space.intervals().is_empty() {
        return space.atom_points().collect();
    }
    let n = r.random_range(1..=max.max(1));
    let mut pts: Vec<Point> = (0..n).map(|_| Point::Real(random_real(r, space))).collect();
    pts.sort();
    pts.dedup();
    pts
}

/// Random quantizer of `source` into a finite space of `1..=max_bins`
/// labels: interval cells and atoms go to random bins, and an occasional
/// real point is sent elsewhere.
pub fn random_quantizer(r: &mut impl Rng, source: &SpaceRef, prefix: &str, max_bins: usize) -> MeasurableMap {
    let n = r.random_range(1..=max_bins.max(1));
    let target = SpaceRef::new(Space::new(labels(prefix, n), vec![]).expect("labels"));
    let bin = |r: &mut dyn rand::RngCore| Point::Atom(format!("{prefix}{}", r.random_range(0..n)));
    let mut points: BTreeMap<Point, Point> = source.atom_points().map(|p| (p, bin(r))).collect();
    let mut pieces = Vec::new();
    for c in random_cells(r, source, 4) {
        pieces.push(MapPiece {
            domain: c,
            action: PieceAction::Constant(bin(r)),
        });
    }
    if !source.intervals().is_empty() && r.random_bool(0.2) {
        points.insert(Point::Real(random_real(r, source)), bin(r));
    }
    MeasurableMap::new(source.clone(), target, points, pieces).expect("valid quantizer")
}

/// Class mix of a random likelihood model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelProfile {
    /// Finite prior, finite outcomes, counting reference.
    Finite,
    /// Mixed prior; sections with densities and atoms w.r.t. a length plus
    /// counting reference.
    DensityTable,
    /// Mixed prior on an interval; sections with atoms that move with x,
    /// counting reference. Valid exactly when the prior density vanishes
    /// where atoms move.
    Tracking,
}

impl ModelProfile {
    pub const ALL: [ModelProfile; 3] = [ModelProfile::Finite, ModelProfile::DensityTable, ModelProfile::Tracking];

    pub fn name(&self) -> &'static str {
        match self {
            ModelProfile::Finite => "finite",
            ModelProfile::DensityTable => "density-table",
            ModelProfile::Tracking => "tracking",
        }
    }
}

fn random_prior(r: &mut impl Rng, xs: &SpaceRef, zero_prob: f64) -> HybridMeasure {
    loop {
        let atoms: BTreeMap<Point, f64> = atom_points(r, xs, 4).into_iter().map(|p| (p, weight(r, 0.3))).collect();
        let cells = random_cells(r, xs, 4);
        let density = random_line(r, &cells, zero_prob);
        let m = HybridMeasure::new(xs.clone(), atoms, density, false).expect("prior parts");
        if let Ok(m) = m.normalize() {
            return m;
        }
    }
}

/// Probability section on `ys` with atoms at `atoms` and, if `cells` is
/// nonempty, a density on those cells.
fn random_section(r: &mut impl Rng, ys: &SpaceRef, atoms: &[Point], cells: &[Interval]) -> HybridMeasure {
    loop {
        let a: BTreeMap<Point, f64> = atoms.iter().map(|p| (p.clone(), weight(r, 0.4))).collect();
        let d = random_line(r, cells, 0.4);
        let m = HybridMeasure::new(ys.clone(), a, d, false).expect("section parts");
        if let Ok(m) = m.normalize() {
            return m;
        }
    }
}

/// Random likelihood model for the given profile.
pub fn random_model(seed: u64, profile: ModelProfile) -> LikelihoodModel {
    let mut r = rng(seed);
    match profile {
        ModelProfile::Finite => {
            let xs = SpaceRef::new(finite_space(&mut r, "x", 5));
            let ys = SpaceRef::new(finite_space(&mut r, "y", 5));
            let prior = random_prior(&mut r, &xs, 0.0);
            let outcomes: Vec<Point> = ys.atom_points().collect();
            let points = xs
                .atom_points()
                .map(|x| (x, random_section(&mut r, &ys, &outcomes, &[])))
                .collect();
            let k = TransitionKernel::new(xs, ys, vec![], points, true).expect("finite kernel");
            LikelihoodModel::new(prior, k, Reference::Counting).expect("finite model")
        }
        ModelProfile::DensityTable => {
            let (nx, ny) = (r.random_range(0..=2), r.random_range(0..=2));
            let xs = SpaceRef::new(random_space(&mut r, "x", nx));
            let ys = SpaceRef::new(random_space(&mut r, "y", ny));
            let prior = random_prior(&mut r, &xs, 0.3);
            let y_atoms = atom_points(&mut r, &ys, 4);
            let nu = HybridMeasure::new(
                ys.clone(),
                y_atoms.iter().map(|p| (p.clone(), r.random_range(0.5..2.0))).collect(),
                StepDensity::constant(ys.intervals(), 1.0),
                false,
            )
            .expect("reference");
            let section = |r: &mut ChaCha8Rng| {
                let cells = random_cells(r, &ys, 4);
                random_section(r, &ys, &y_atoms, &cells)
            };
            let cells = random_cells(&mut r, &xs, 4)
                .into_iter()
                .map(|cell| KernelCell {
                    cell,
                    fixed: section(&mut r),
                    tracking: vec![],
                })
                .collect();
            let mut points: BTreeMap<Point, HybridMeasure> = xs.atom_points().map(|x| (x, section(&mut r))).collect();
            for x in prior.atoms().keys() {
                if r.random_bool(0.5) {
                    points.insert(x.clone(), section(&mut r));
                }
            }
            let k = TransitionKernel::new(xs, ys, cells, points, true).expect("density kernel");
            LikelihoodModel::new(prior, k, Reference::Measure(nu)).expect("density model")
        }
        ModelProfile::Tracking => {
            let xs = SpaceRef::new(random_space(&mut r, "x", 0));
            let ny = r.random_range(0..=1);
            let ys = SpaceRef::new(random_space(&mut r, "y", ny));
            let prior = random_prior(&mut r, &xs, 0.5);
            let y_atoms = atom_points(&mut r, &ys, 3);
            let mut cells = Vec::new();
            for cell in random_cells(&mut r, &xs, 4) {
                let mut tracking = Vec::new();
                if y_atoms.is_empty() || r.random_bool(0.6) {
                    // increasing map of the cell onto a cell of Y
                    let targets = random_cells(&mut r, &ys, 3);
                    let t = &targets[r.random_range(0..targets.len())];
                    let slope = (t.hi - t.lo) / (cell.hi - cell.lo);
                    let weight = if y_atoms.is_empty() { 1.0 } else { r.random_range(0.2..1.0) };
                    tracking.push(TrackingAtom {
                        slope,
                        offset: t.lo - slope * cell.lo,
                        weight,
                    });
                }
                let moving: f64 = tracking.iter().map(|t| t.weight).sum();
                let fixed = if y_atoms.is_empty() {
                    HybridMeasure::zero(ys.clone())
                } else {
                    random_section(&mut r, &ys, &y_atoms, &[]).scale(1.0 - moving)
                };
                cells.push(KernelCell { cell, fixed, tracking });
            }
            let mut points = BTreeMap::new();
            for x in prior.atoms().keys() {
                if !y_atoms.is_empty() && r.random_bool(0.3) {
                    points.insert(x.clone(), random_section(&mut r, &ys, &y_atoms, &[]));
                }
            }
            let k = TransitionKernel::new(xs, ys, cells, points, true).expect("tracking kernel");
            LikelihoodModel::new(prior, k, Reference::Counting).expect("tracking model")
        }
    }
}

/// Shape of a random Bayes network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetProfile {
    pub max_nodes: usize,
    /// Maximal number of parts per node.
    pub max_parts: usize,
    /// Only labelled atoms, no intervals.
    pub atoms_only: bool,
}

impl Default for NetProfile {
    fn default() -> Self {
        NetProfile {
            max_nodes: 5,
            max_parts: 6,
            atoms_only: false,
        }
    }
}

fn random_node_parts(r: &mut impl Rng, prefix: &str, cfg: &NetProfile) -> NodeParts {
    if cfg.atoms_only || r.random_bool(0.4) {
        let space = SpaceRef::new(finite_space(r, prefix, cfg.max_parts.min(4)));
        return NodeParts::coarse(space);
    }
    let n_labels = r.random_range(0..=1usize);
    let space = SpaceRef::new(random_space(r, prefix, n_labels));
    let reals: Vec<Rational> = if r.random_bool(0.3) { vec![random_real(r, &space)] } else { vec![] };
    let budget = cfg.max_parts.saturating_sub(n_labels + reals.len()).max(space.intervals().len());
    let cells = random_cells(r, &space, budget);
    let mut cells = cells;
    // merge from the right until the budget is met
    while cells.len() > budget {
        let i = (0..cells.len() - 1).rev().find(|&i| cells[i].hi == cells[i + 1].lo).expect("adjacent cells");
        let hi = cells.remove(i + 1).hi;
        cells[i] = Interval::raw(cells[i].lo, hi);
    }
    NodeParts::new(space, &reals, cells).expect("random parts")
}

/// Random Bayes network. Parents are a random subset of the earlier nodes,
/// or all of them for about a third of the draws.
pub fn random_net(seed: u64, cfg: &NetProfile) -> BayesNet {
    let mut r = rng(seed);
    let n = r.random_range(1..=cfg.max_nodes.max(1));
    let all_predecessors = r.random_bool(0.3);
    let mut nodes: Vec<Node> = Vec::new();
    for k in 0..n {
        let parts = random_node_parts(&mut r, &format!("n{k}_"), cfg);
        let parents: Vec<usize> = (0..k).filter(|_| all_predecessors || r.random_bool(0.5)).collect();
        let reference: Vec<f64> = if r.random_bool(0.5) {
            vec![1.0; parts.len()]
        } else {
            (0..parts.len()).map(|_| r.random_range(0.5..2.0)).collect()
        };
        let rows: usize = parents.iter().map(|&p| nodes[p].parts().len()).product();
        let table = (0..rows)
            .map(|_| {
                let mut v: Vec<f64> = (0..parts.len()).map(|_| weight(&mut r, 0.35)).collect();
                if v.iter().all(|x| *x == 0.0) {
                    v[r.random_range(0..parts.len())] = 1.0;
                }
                let t: f64 = v
                    .iter()
                    .enumerate()
                    .map(|(i, x)| x * reference[i] * parts.length(i).unwrap_or(1.0))
                    .sum();
                v.iter().map(|x| x / t).collect()
            })
            .collect();
        nodes.push(Node::with_reference(format!("X{}", k + 1), parts, reference, parents, table).expect("random node"));
    }
    BayesNet::new(nodes).expect("random net")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regularity::check_conditions;

    #[test]
    fn deterministic_and_normalized() {
        for p in Profile::ALL {
            for seed in 0..20 {
                let a = random_joint(seed, p);
                assert_eq!(a, random_joint(seed, p));
                assert!((a.total_mass() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn profile_examples() {
        let atoms = random_joint(3, Profile::AtomsOnly);
        assert!(atoms.is_atomic());
        assert!(check_conditions(&atoms).unwrap().all_true());
        let curve = random_joint(3, Profile::Curve);
        assert!(check_conditions(&curve).unwrap().all_false());
        let mixed = random_joint(3, Profile::Mixed);
        assert!(check_conditions(&mixed).unwrap().agree);
    }

    #[test]
    fn quantizers_are_valid() {
        let mut r = rng(1);
        for seed in 0..20 {
            let j = random_joint(seed, Profile::Mixed);
            let f = random_quantizer(&mut r, j.x_space(), "u", 3);
            let g = random_quantizer(&mut r, j.y_space(), "v", 3);
            let pushed = j.pushforward(&f, &g).unwrap();
            assert!(pushed.is_atomic());
            assert!((pushed.total_mass() - 1.0).abs() < 1e-12);
        }
    }
}
