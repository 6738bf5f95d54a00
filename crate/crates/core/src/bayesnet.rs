//! Bayes networks with conditional density tables, their assembled joints,
//! and the per-node regularity checks.
//!
//! Every node space is split into finitely many parts (points and cells).
//! A node's table holds, for each combination of parent parts, the density
//! of the node w.r.t. its reference `μ_k`, constant on each own part. The
//! assembled joint is then a finite table of product-part masses, uniform
//! within each product of cells.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::conditioning::{ac_check, Witness};
use crate::error::{Error, Result};
use crate::joint::{CurveKind, JointBuilder, JointMeasure, Part};
use crate::map::{MeasurableMap, PieceAction};
use crate::measure::{HybridMeasure, MASS_TOL};
use crate::rational::Rational;
use crate::space::{require_same, Interval, Point, SpaceRef};
use crate::step::{Cell, StepDensity};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetCaps {
    pub max_nodes: usize,
    pub max_cells: u128,
}

impl Default for NetCaps {
    fn default() -> Self {
        NetCaps {
            max_nodes: 8,
            max_cells: 1_000_000,
        }
    }
}

/// Finite partition of a node space: every label, optional real points,
/// then cells covering the intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeParts {
    space: SpaceRef,
    parts: Vec<Part>,
    n_points: usize,
}

impl NodeParts {
    pub fn new(space: SpaceRef, real_points: &[Rational], cells: Vec<Interval>) -> Result<Self> {
        let mut points: Vec<Point> = space.atom_points().collect();
        let reals: BTreeSet<&Rational> = real_points.iter().collect();
        for x in reals {
            let p = Point::Real(*x);
            space.check_point(&p)?;
            points.push(p);
        }
        let mut cells = cells;
        cells.sort();
        if space.partition(cells.iter().flat_map(|c| [&c.lo, &c.hi])) != cells {
            return Err(Error::invalid("node parts", format!("cells do not partition {space}")));
        }
        let n_points = points.len();
        let parts = points.into_iter().map(Part::Point).chain(cells.into_iter().map(Part::Cell)).collect();
        Ok(NodeParts { space, parts, n_points })
    }

    /// Labels plus the intervals of the space as they are.
    pub fn coarse(space: SpaceRef) -> Self {
        let cells = space.intervals().to_vec();
        NodeParts::new(space, &[], cells).expect("intervals partition themselves")
    }

    pub fn space(&self) -> &SpaceRef {
        &self.space
    }

    pub fn parts(&self) -> &[Part] {
        &self.parts
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn has_cells(&self) -> bool {
        self.n_points < self.parts.len()
    }

    /// Length of a cell part, `None` for a point.
    pub fn length(&self, i: usize) -> Option<f64> {
        match &self.parts[i] {
            Part::Point(_) => None,
            Part::Cell(c) => Some(c.len_f64()),
        }
    }

    /// Index of the part containing a point; listed points win over cells.
    pub fn index_of(&self, p: &Point) -> Option<usize> {
        if let Some(i) = self.parts[..self.n_points].iter().position(|q| q == &Part::Point(p.clone())) {
            return Some(i);
        }
        let Point::Real(x) = p else { return None };
        self.parts[self.n_points..]
            .iter()
            .position(|q| matches!(q, Part::Cell(c) if c.contains(x)))
            .map(|i| i + self.n_points)
    }

    /// Measure on the space with the given mass on each part, uniform
    /// inside cells.
    pub fn measure(&self, masses: &[f64], normalized: bool) -> Result<HybridMeasure> {
        let mut atoms = BTreeMap::new();
        let mut cells = Vec::new();
        for (part, m) in self.parts.iter().zip(masses) {
            match part {
                Part::Point(p) => {
                    atoms.insert(p.clone(), *m);
                }
                Part::Cell(c) => cells.push(Cell::new(c.clone(), m / c.len_f64())),
            }
        }
        let m = HybridMeasure::new(self.space.clone(), atoms, StepDensity::new(cells)?, false)?;
        if normalized {
            m.into_probability()
        } else {
            Ok(m)
        }
    }
}

/// One node: parts, reference weights, parents and the density table.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    name: String,
    parts: NodeParts,
    /// `μ_k` per part: atom weight on points, density on cells.
    reference: Vec<f64>,
    parents: Vec<usize>,
    /// One row per parent-part combination (last parent fastest), one
    /// density value per own part.
    table: Vec<Vec<f64>>,
}

impl Node {
    /// Node with the default reference (counting on points, length on cells).
    pub fn new(name: impl Into<String>, parts: NodeParts, parents: Vec<usize>, table: Vec<Vec<f64>>) -> Result<Self> {
        let reference = vec![1.0; parts.len()];
        Node::with_reference(name, parts, reference, parents, table)
    }

    pub fn with_reference(
        name: impl Into<String>,
        parts: NodeParts,
        reference: Vec<f64>,
        parents: Vec<usize>,
        table: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let name = name.into();
        if reference.len() != parts.len() || reference.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid("node", format!("{name}: reference needs one positive weight per part")));
        }
        let node = Node {
            name,
            parts,
            reference,
            parents,
            table,
        };
        for (r, row) in node.table.iter().enumerate() {
            if row.len() != node.parts.len() {
                return Err(Error::invalid("node", format!("{}: row {r} has {} values", node.name, row.len())));
            }
            if row.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::invalid("node", format!("{}: row {r} has a negative value", node.name)));
            }
            let t: f64 = node.row_masses(r).iter().sum();
            if (t - 1.0).abs() > MASS_TOL {
                return Err(Error::invalid("node", format!("{}: row {r} integrates to {t}", node.name)));
            }
        }
        Ok(node)
    }

    /// Deterministic copy of a parent. Only finite parents can be copied:
    /// a copy over a continuum has no density w.r.t. any reference here.
    pub fn copy_of(name: impl Into<String>, parent: usize, parent_parts: &NodeParts) -> Result<Self> {
        let name = name.into();
        if parent_parts.has_cells() {
            return Err(Error::NotRepresentable(format!(
                "{name} copies a parent over a continuum; its conditionals have no density"
            )));
        }
        let n = parent_parts.len();
        let table = (0..n).map(|r| (0..n).map(|i| if i == r { 1.0 } else { 0.0 }).collect()).collect();
        Node::new(name, parent_parts.clone(), vec![parent], table)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn parts(&self) -> &NodeParts {
        &self.parts
    }

    pub fn parents(&self) -> &[usize] {
        &self.parents
    }

    pub fn table(&self) -> &[Vec<f64>] {
        &self.table
    }

    pub fn reference_weights(&self) -> &[f64] {
        &self.reference
    }

    /// `μ_k` as a measure.
    pub fn reference(&self) -> Result<HybridMeasure> {
        let masses: Vec<f64> = (0..self.parts.len())
            .map(|i| self.reference[i] * self.parts.length(i).unwrap_or(1.0))
            .collect();
        self.parts.measure(&masses, false)
    }

    /// Probability of each own part under table row `r`.
    pub fn row_masses(&self, r: usize) -> Vec<f64> {
        self.table[r]
            .iter()
            .enumerate()
            .map(|(i, v)| v * self.reference[i] * self.parts.length(i).unwrap_or(1.0))
            .collect()
    }

    /// The conditional distribution for table row `r`.
    pub fn section(&self, r: usize) -> Result<HybridMeasure> {
        self.parts.measure(&self.row_masses(r), true)
    }
}

/// Nodes in topological order: parents have smaller indices.
#[derive(Debug, Clone, PartialEq)]
pub struct BayesNet {
    nodes: Vec<Node>,
    caps: NetCaps,
}

impl BayesNet {
    pub fn new(nodes: Vec<Node>) -> Result<Self> {
        BayesNet::with_caps(nodes, NetCaps::default())
    }

    pub fn with_caps(nodes: Vec<Node>, caps: NetCaps) -> Result<Self> {
        if nodes.len() > caps.max_nodes {
            return Err(Error::CapExceeded {
                what: "nodes",
                needed: nodes.len() as u128,
                cap: caps.max_nodes as u128,
            });
        }
        for (k, n) in nodes.iter().enumerate() {
            let mut seen = BTreeSet::new();
            for &p in &n.parents {
                if p >= k || !seen.insert(p) {
                    return Err(Error::invalid("net", format!("{}: parent {p} must be a distinct earlier node", n.name)));
                }
            }
            let rows: usize = n.parents.iter().map(|&p| nodes[p].parts.len()).product();
            if n.table.len() != rows {
                return Err(Error::invalid(
                    "net",
                    format!("{}: {} rows for {rows} parent combinations", n.name, n.table.len()),
                ));
            }
        }
        Ok(BayesNet { nodes, caps })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn caps(&self) -> NetCaps {
        self.caps
    }

    /// Number of product parts of the full joint (saturating).
    pub fn product_size(&self) -> u128 {
        self.nodes
            .iter()
            .fold(1u128, |acc, n| acc.saturating_mul(n.parts.len() as u128))
    }

    fn row_index(&self, k: usize, assignment: impl Fn(usize) -> usize) -> usize {
        self.nodes[k]
            .parents
            .iter()
            .fold(0, |acc, &p| acc * self.nodes[p].parts.len() + assignment(p))
    }
}

/// Finite joint over the product of node partitions.
#[derive(Debug, Clone, PartialEq)]
pub struct NetJoint {
    parts: Vec<NodeParts>,
    /// Positive masses keyed by one part index per node.
    entries: BTreeMap<Vec<usize>, f64>,
}

impl NetJoint {
    pub fn new(parts: Vec<NodeParts>, entries: BTreeMap<Vec<usize>, f64>) -> Result<Self> {
        for (k, w) in &entries {
            if k.len() != parts.len() || k.iter().zip(&parts).any(|(i, p)| *i >= p.len()) {
                return Err(Error::invalid("net joint", format!("bad index {k:?}")));
            }
            if !(w.is_finite() && *w >= 0.0) {
                return Err(Error::invalid("net joint", format!("mass {w}")));
            }
        }
        let entries = entries.into_iter().filter(|(_, w)| *w > 0.0).collect();
        Ok(NetJoint { parts, entries })
    }

    pub fn parts(&self) -> &[NodeParts] {
        &self.parts
    }

    pub fn entries(&self) -> &BTreeMap<Vec<usize>, f64> {
        &self.entries
    }

    pub fn mass(&self, index: &[usize]) -> f64 {
        self.entries.get(index).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }

    /// Mass of every part of node `k`.
    pub fn marginal(&self, k: usize) -> Vec<f64> {
        let mut m = vec![0.0; self.parts[k].len()];
        for (idx, w) in &self.entries {
            m[idx[k]] += w;
        }
        m
    }

    pub fn marginal_measure(&self, k: usize) -> Result<HybridMeasure> {
        self.parts[k].measure(&self.marginal(k), false)
    }

    /// Density w.r.t. the product of counting on points and length on cells.
    pub fn density(&self, index: &[usize]) -> f64 {
        let vol: f64 = index
            .iter()
            .zip(&self.parts)
            .filter_map(|(i, p)| p.length(*i))
            .product();
        self.mass(index) / vol
    }

    pub fn max_difference(&self, other: &NetJoint) -> f64 {
        let keys: BTreeSet<&Vec<usize>> = self.entries.keys().chain(other.entries.keys()).collect();
        keys.into_iter()
            .map(|k| (self.mass(k) - other.mass(k)).abs())
            .fold(0.0, f64::max)
    }

    /// The two-dimensional joint of nodes `a` and `b`.
    pub fn pair(&self, a: usize, b: usize) -> Result<JointMeasure> {
        let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (idx, w) in &self.entries {
            *acc.entry((idx[a], idx[b])).or_insert(0.0) += w;
        }
        let mut builder = JointBuilder::new();
        for ((i, j), w) in acc {
            match (&self.parts[a].parts()[i], &self.parts[b].parts()[j]) {
                (Part::Point(x), Part::Point(y)) => {
                    builder.atom(x.clone(), y.clone(), w);
                }
                (Part::Cell(x), Part::Cell(y)) => {
                    builder.rect(x.clone(), y.clone(), w / (x.len_f64() * y.len_f64()));
                }
                (Part::Point(x), Part::Cell(y)) => {
                    let d = StepDensity::new(vec![Cell::new(y.clone(), w / y.len_f64())])?;
                    builder.curve(CurveKind::Vertical { x: x.clone() }, &d, 1.0);
                }
                (Part::Cell(x), Part::Point(y)) => {
                    let d = StepDensity::new(vec![Cell::new(x.clone(), w / x.len_f64())])?;
                    builder.curve(CurveKind::Horizontal { y: y.clone() }, &d, 1.0);
                }
            }
        }
        builder.build(self.parts[a].space().clone(), self.parts[b].space().clone(), true)
    }

    /// Image under one map per node. Constant pieces collapse cells to
    /// points, affine pieces move them; mass stays uniform inside cells.
    pub fn pushforward(&self, maps: &[MeasurableMap]) -> Result<NetJoint> {
        if maps.len() != self.parts.len() {
            return Err(Error::invalid("net pushforward", format!("{} maps for {} nodes", maps.len(), self.parts.len())));
        }
        let mut parts = Vec::new();
        let mut spread: Vec<Vec<Vec<(usize, f64)>>> = Vec::new();
        for (np, f) in self.parts.iter().zip(maps) {
            let (p, s) = push_parts(np, f)?;
            parts.push(p);
            spread.push(s);
        }
        let mut entries: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        for (idx, w) in &self.entries {
            let mut partial: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), *w)];
            for (k, i) in idx.iter().enumerate() {
                let mut next = Vec::new();
                for (key, m) in &partial {
                    for (t, frac) in &spread[k][*i] {
                        let mut key = key.clone();
                        key.push(*t);
                        next.push((key, m * frac));
                    }
                }
                partial = next;
            }
            for (key, m) in partial {
                *entries.entry(key).or_insert(0.0) += m;
            }
        }
        NetJoint::new(parts, entries)
    }

    /// The net with parents = all predecessors whose assembly is this joint.
    /// Null parent combinations get the node's marginal.
    pub fn to_net(&self) -> Result<BayesNet> {
        let n = self.parts.len();
        let mut nodes = Vec::new();
        for k in 0..n {
            let mut prefix: BTreeMap<Vec<usize>, Vec<f64>> = BTreeMap::new();
            for (idx, w) in &self.entries {
                prefix.entry(idx[..k].to_vec()).or_insert_with(|| vec![0.0; self.parts[k].len()])[idx[k]] += w;
            }
            let marginal = self.marginal(k);
            let total: f64 = marginal.iter().sum();
            let rows: usize = self.parts[..k].iter().map(NodeParts::len).product();
            let mut table = Vec::with_capacity(rows);
            for r in 0..rows {
                let mut key = vec![0; k];
                let mut rest = r;
                for j in (0..k).rev() {
                    key[j] = rest % self.parts[j].len();
                    rest /= self.parts[j].len();
                }
                let masses = prefix.get(&key).unwrap_or(&marginal);
                let t: f64 = if prefix.contains_key(&key) { masses.iter().sum() } else { total };
                table.push(
                    masses
                        .iter()
                        .enumerate()
                        .map(|(i, m)| m / t / self.parts[k].length(i).unwrap_or(1.0))
                        .collect(),
                );
            }
            nodes.push(Node::new(format!("X{}", k + 1), self.parts[k].clone(), (0..k).collect(), table)?);
        }
        BayesNet::new(nodes)
    }
}

/// Target partition of a pushed node and, for every source part, where its
/// mass goes as `(target part, fraction)`.
#[allow(clippy::type_complexity)]
fn push_parts(np: &NodeParts, f: &MeasurableMap) -> Result<(NodeParts, Vec<Vec<(usize, f64)>>)> {
    require_same(f.source(), np.space(), "net pushforward")?;
    // (target point, fraction) or (image interval, fraction)
    enum Piece {
        At(Point, f64),
        Over(Interval, f64),
    }
    let mut images: Vec<Vec<Piece>> = Vec::new();
    for part in np.parts() {
        let mut out = Vec::new();
        match part {
            Part::Point(p) => out.push(Piece::At(f.apply(p)?, 1.0)),
            Part::Cell(c) => {
                let len = c.len_f64();
                for piece in f.pieces() {
                    let Some(sub) = piece.domain.intersect(c) else { continue };
                    let frac = sub.len_f64() / len;
                    match &piece.action {
                        PieceAction::Constant(t) => out.push(Piece::At(t.clone(), frac)),
                        PieceAction::Affine { slope, offset } => out.push(Piece::Over(sub.affine_image(slope, offset), frac)),
                    }
                }
            }
        }
        images.push(out);
    }
    let target = f.target();
    let mut reals = BTreeSet::new();
    let mut cuts = BTreeSet::new();
    for piece in images.iter().flatten() {
        match piece {
            Piece::At(Point::Real(x), _) => {
                reals.insert(*x);
            }
            Piece::At(Point::Atom(_), _) => {}
            Piece::Over(iv, _) => {
                cuts.insert(iv.lo);
                cuts.insert(iv.hi);
            }
        }
    }
    let reals: Vec<Rational> = reals.into_iter().collect();
    let parts = NodeParts::new(target.clone(), &reals, target.partition(&cuts))?;
    let n_points = parts.n_points;
    let spread = images
        .into_iter()
        .map(|pieces| {
            let mut out = Vec::new();
            for piece in pieces {
                match piece {
                    Piece::At(p, frac) => {
                        let i = parts.parts[..n_points]
                            .iter()
                            .position(|q| q == &Part::Point(p.clone()))
                            .expect("image point is a part");
                        out.push((i, frac));
                    }
                    Piece::Over(iv, frac) => {
                        let len = iv.len_f64();
                        for (i, q) in parts.parts.iter().enumerate().skip(n_points) {
                            if let Part::Cell(c) = q {
                                if iv.contains_interval(c) {
                                    out.push((i, frac * c.len_f64() / len));
                                }
                            }
                        }
                    }
                }
            }
            out
        })
        .collect();
    Ok((parts, spread))
}

/// Joint table `∏_k p(x_k | parents) μ_k`, enumerated node by node.
pub fn assemble_joint(net: &BayesNet) -> Result<NetJoint> {
    let size = net.product_size();
    if size > net.caps.max_cells {
        return Err(Error::CapExceeded {
            what: "product cells",
            needed: size,
            cap: net.caps.max_cells,
        });
    }
    let mut partial: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), 1.0)];
    for (k, node) in net.nodes.iter().enumerate() {
        let rows: Vec<Vec<f64>> = (0..node.table.len()).map(|r| node.row_masses(r)).collect();
        let mut next = Vec::new();
        for (idx, m) in &partial {
            let r = net.row_index(k, |p| idx[p]);
            for (i, w) in rows[r].iter().enumerate() {
                if *w > 0.0 {
                    let mut idx = idx.clone();
                    idx.push(i);
                    next.push((idx, m * w));
                }
            }
        }
        partial = next;
    }
    NetJoint::new(
        net.nodes.iter().map(|n| n.parts.clone()).collect(),
        partial.into_iter().collect(),
    )
}

/// Node marginals and parent-combination probabilities, by forward
/// propagation that forgets a node once no later node depends on it.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    pub marginals: Vec<Vec<f64>>,
    /// Per node, the probability of each table row.
    pub row_probabilities: Vec<Vec<f64>>,
}

pub fn propagate(net: &BayesNet) -> Propagation {
    let n = net.nodes.len();
    let last_use: Vec<usize> = (0..n)
        .map(|k| {
            (k + 1..n)
                .filter(|&c| net.nodes[c].parents.contains(&k))
                .max()
                .unwrap_or(k)
        })
        .collect();
    // factor over the nodes in `active`
    let mut active: Vec<usize> = Vec::new();
    let mut factor: BTreeMap<Vec<usize>, f64> = BTreeMap::from([(Vec::new(), 1.0)]);
    let mut marginals = Vec::new();
    let mut row_probabilities = Vec::new();
    for (k, node) in net.nodes.iter().enumerate() {
        let pos: BTreeMap<usize, usize> = active.iter().enumerate().map(|(i, a)| (*a, i)).collect();
        let mut rows = vec![0.0; node.table.len()];
        let masses: Vec<Vec<f64>> = (0..node.table.len()).map(|r| node.row_masses(r)).collect();
        let mut next: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        let mut marginal = vec![0.0; node.parts.len()];
        for (idx, m) in &factor {
            let r = net.row_index(k, |p| idx[pos[&p]]);
            rows[r] += m;
            for (i, w) in masses[r].iter().enumerate() {
                if *w > 0.0 {
                    marginal[i] += m * w;
                    let mut idx = idx.clone();
                    idx.push(i);
                    *next.entry(idx).or_insert(0.0) += m * w;
                }
            }
        }
        active.push(k);
        // forget nodes that no later node reads
        let keep: Vec<usize> = (0..active.len()).filter(|&i| last_use[active[i]] > k).collect();
        factor = BTreeMap::new();
        for (idx, m) in next {
            *factor.entry(keep.iter().map(|&i| idx[i]).collect()).or_insert(0.0) += m;
        }
        active = keep.iter().map(|&i| active[i]).collect();
        marginals.push(marginal);
        row_probabilities.push(rows);
    }
    Propagation {
        marginals,
        row_probabilities,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeReport {
    pub name: String,
    /// Every conditional of the node is dominated by its marginal.
    pub dominated: bool,
    pub witness: Option<(usize, Witness)>,
    /// Rows with zero probability, replaced by the marginal.
    pub null_rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetReport {
    /// The joint is dominated by the product of its marginals.
    pub global: bool,
    pub global_witness: Option<(Vec<usize>, f64)>,
    pub nodes: Vec<NodeReport>,
}

impl NetReport {
    pub fn nodes_dominated(&self) -> bool {
        self.nodes.iter().all(|n| n.dominated)
    }

    /// Global domination agrees with the per-node verdicts.
    pub fn agree(&self) -> bool {
        self.global == self.nodes_dominated()
    }
}

impl fmt::Display for NetReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "joint << product of marginals: {}", self.global)?;
        for n in &self.nodes {
            write!(f, "{}: conditionals << marginal: {}", n.name, n.dominated)?;
            if n.null_rows > 0 {
                write!(f, " ({} null rows)", n.null_rows)?;
            }
            writeln!(f)?;
        }
        write!(f, "agree: {}", self.agree())
    }
}

/// Radon–Nikodým derivative of the assembled joint w.r.t. the product of
/// its marginals on every charged product part, or the first product part
/// the product does not charge.
pub fn joint_derivative(j: &NetJoint) -> std::result::Result<BTreeMap<Vec<usize>, f64>, (Vec<usize>, f64)> {
    let marginals: Vec<Vec<f64>> = (0..j.parts.len()).map(|k| j.marginal(k)).collect();
    let mut out = BTreeMap::new();
    for (idx, w) in &j.entries {
        let q: f64 = idx.iter().enumerate().map(|(k, i)| marginals[k][*i]).product();
        if q <= 0.0 {
            return Err((idx.clone(), *w));
        }
        out.insert(idx.clone(), w / q);
    }
    Ok(out)
}

/// Global and per-node domination checks.
pub fn check_conditions_net(net: &BayesNet) -> Result<NetReport> {
    let joint = assemble_joint(net)?;
    let global = joint_derivative(&joint);
    let prop = propagate(net);
    let mut nodes = Vec::new();
    for (k, node) in net.nodes.iter().enumerate() {
        let marginal = node.parts.measure(&prop.marginals[k], false)?;
        let mut witness = None;
        let mut null_rows = 0;
        for (r, p) in prop.row_probabilities[k].iter().enumerate() {
            if *p <= 0.0 {
                null_rows += 1;
                continue;
            }
            if let Some(w) = ac_check(&node.section(r)?, &marginal)?.witness {
                witness.get_or_insert((r, w));
            }
        }
        nodes.push(NodeReport {
            name: node.name.clone(),
            dominated: witness.is_none(),
            witness,
            null_rows,
        });
    }
    Ok(NetReport {
        global: global.is_ok(),
        global_witness: global.err(),
        nodes,
    })
}

/// Reports before and after mapping every node through its map.
pub fn pushforward_net(net: &BayesNet, maps: &[MeasurableMap]) -> Result<(NetReport, NetReport)> {
    let before = check_conditions_net(net)?;
    let pushed = assemble_joint(net)?.pushforward(maps)?;
    let mut canonical = pushed.to_net()?;
    for (n, m) in canonical.nodes.iter_mut().zip(&net.nodes) {
        n.name = m.name.clone();
    }
    let after = check_conditions_net(&canonical)?;
    Ok((before, after))
}

/// Pairwise mutual information of two nodes, in nats.
pub fn pairwise_mi(j: &NetJoint, a: usize, b: usize) -> Result<crate::regularity::ExtendedReal> {
    crate::regularity::mutual_information(&j.pair(a, b)?)
}
