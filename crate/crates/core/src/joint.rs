//! Joint measures on a product `X × Y`: point atoms, a product-cell step
//! density, and mass carried by lines (vertical and horizontal strips) and by
//! graphs of affine maps.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::map::{affine_maps_into, MeasurableMap, PieceAction};
use crate::measure::{HybridMeasure, MeasurableSet, SimpleFunction, MASS_TOL};
use crate::rational::{abs, is_zero, to_f64, Rational};
use crate::space::{require_same, Interval, Point, Space, SpaceRef};
use crate::step::{Cell, StepDensity};

/// Step density on product cells, row-major with one row per X cell.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GridDensity {
    x_cells: Vec<Interval>,
    y_cells: Vec<Interval>,
    values: Vec<f64>,
}

pub(crate) fn find_cell(cells: &[Interval], x: &Rational) -> Option<usize> {
    let i = cells.partition_point(|c| &c.hi <= x);
    (i < cells.len() && cells[i].contains(x)).then_some(i)
}

fn overlap_len(iv: &Interval, set: &[Interval]) -> f64 {
    set.iter()
        .filter_map(|s| s.intersect(iv))
        .map(|o| o.len_f64())
        .sum()
}

fn check_partition(cells: &[Interval], space: &Space, axis: &str) -> Result<()> {
    let expected = space.partition(cells.iter().flat_map(|c| [&c.lo, &c.hi]));
    if expected.as_slice() != cells {
        return Err(Error::invalid(
            "grid",
            format!("{axis} cells do not partition the intervals of {space}"),
        ));
    }
    Ok(())
}

impl GridDensity {
    pub fn new(x_cells: Vec<Interval>, y_cells: Vec<Interval>, values: Vec<f64>) -> Result<Self> {
        if values.len() != x_cells.len() * y_cells.len() {
            return Err(Error::invalid("grid", "value count does not match the cell counts"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("grid", "values must be finite and nonnegative"));
        }
        Ok(GridDensity {
            x_cells,
            y_cells,
            values,
        })
    }

    /// Zero density on the coarsest partition of both spaces.
    pub fn zero(x: &Space, y: &Space) -> Self {
        let x_cells = x.intervals().to_vec();
        let y_cells = y.intervals().to_vec();
        let values = vec![0.0; x_cells.len() * y_cells.len()];
        GridDensity {
            x_cells,
            y_cells,
            values,
        }
    }

    /// Sum of constant rectangles, on the partition generated by their
    /// corners.
    pub fn from_rectangles(x: &Space, y: &Space, rects: &[(Interval, Interval, f64)]) -> Result<Self> {
        for (a, b, v) in rects {
            if !x.covers(a) || !y.covers(b) {
                return Err(Error::Domain(format!("grid rectangle {a}×{b} leaves the space")));
            }
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::invalid("grid", format!("rectangle value {v}")));
            }
        }
        let x_cells = x.partition(rects.iter().flat_map(|(a, _, _)| [&a.lo, &a.hi]));
        let y_cells = y.partition(rects.iter().flat_map(|(_, b, _)| [&b.lo, &b.hi]));
        let ny = y_cells.len();
        let mut values = vec![0.0; x_cells.len() * ny];
        for (a, b, v) in rects {
            let i0 = x_cells.partition_point(|c| c.lo < a.lo);
            let j0 = y_cells.partition_point(|c| c.lo < b.lo);
            for i in i0..x_cells.len() {
                if x_cells[i].lo >= a.hi {
                    break;
                }
                for j in j0..ny {
                    if y_cells[j].lo >= b.hi {
                        break;
                    }
                    values[i * ny + j] += v;
                }
            }
        }
        Ok(GridDensity {
            x_cells,
            y_cells,
            values,
        })
    }

    pub fn x_cells(&self) -> &[Interval] {
        &self.x_cells
    }

    pub fn y_cells(&self) -> &[Interval] {
        &self.y_cells
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.y_cells.len() + j]
    }

    pub fn value_at(&self, x: &Rational, y: &Rational) -> f64 {
        match (find_cell(&self.x_cells, x), find_cell(&self.y_cells, y)) {
            (Some(i), Some(j)) => self.value(i, j),
            _ => 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    pub fn total(&self) -> f64 {
        let ny = self.y_cells.len();
        let mut s = 0.0;
        for (i, xc) in self.x_cells.iter().enumerate() {
            let lx = xc.len_f64();
            for (j, yc) in self.y_cells.iter().enumerate() {
                s += self.values[i * ny + j] * lx * yc.len_f64();
            }
        }
        s
    }

    /// Same density on a finer partition.
    pub fn refine<'a>(
        &self,
        x_cuts: impl IntoIterator<Item = &'a Rational>,
        y_cuts: impl IntoIterator<Item = &'a Rational>,
    ) -> GridDensity {
        let split = |cells: &[Interval], cuts: BTreeSet<&Rational>| -> (Vec<Interval>, Vec<usize>) {
            let mut out = Vec::new();
            let mut parent = Vec::new();
            for (k, c) in cells.iter().enumerate() {
                let mut lo = c.lo;
                for x in cuts.range::<&Rational, _>((
                    std::ops::Bound::Excluded(&c.lo),
                    std::ops::Bound::Excluded(&c.hi),
                )) {
                    out.push(Interval::raw(lo, **x));
                    parent.push(k);
                    lo = **x;
                }
                out.push(Interval::raw(lo, c.hi));
                parent.push(k);
            }
            (out, parent)
        };
        let (xs, xp) = split(&self.x_cells, x_cuts.into_iter().collect());
        let (ys, yp) = split(&self.y_cells, y_cuts.into_iter().collect());
        let mut values = Vec::with_capacity(xs.len() * ys.len());
        for &pi in &xp {
            for &pj in &yp {
                values.push(self.value(pi, pj));
            }
        }
        GridDensity {
            x_cells: xs,
            y_cells: ys,
            values,
        }
    }

    /// Refines two grids on the same spaces to their common partition.
    pub fn common(a: &GridDensity, b: &GridDensity) -> (GridDensity, GridDensity) {
        let xc: BTreeSet<Rational> = a
            .x_cells
            .iter()
            .chain(&b.x_cells)
            .flat_map(|c| [c.lo, c.hi])
            .collect();
        let yc: BTreeSet<Rational> = a
            .y_cells
            .iter()
            .chain(&b.y_cells)
            .flat_map(|c| [c.lo, c.hi])
            .collect();
        (a.refine(&xc, &yc), b.refine(&xc, &yc))
    }

    /// `∫ p(x, y) dy` as a step density in x.
    pub fn x_marginal(&self) -> StepDensity {
        let ny = self.y_cells.len();
        let cells = self
            .x_cells
            .iter()
            .enumerate()
            .map(|(i, xc)| {
                let v: f64 = (0..ny).map(|j| self.values[i * ny + j] * self.y_cells[j].len_f64()).sum();
                Cell::new(xc.clone(), v)
            })
            .collect();
        StepDensity::from_sorted(cells)
    }

    /// `∫ p(x, y) dx` as a step density in y.
    pub fn y_marginal(&self) -> StepDensity {
        let ny = self.y_cells.len();
        let cells = self
            .y_cells
            .iter()
            .enumerate()
            .map(|(j, yc)| {
                let v: f64 = (0..self.x_cells.len())
                    .map(|i| self.values[i * ny + j] * self.x_cells[i].len_f64())
                    .sum();
                Cell::new(yc.clone(), v)
            })
            .collect();
        StepDensity::from_sorted(cells)
    }

    /// x-profile of column `j`.
    pub fn column(&self, j: usize) -> StepDensity {
        let ny = self.y_cells.len();
        StepDensity::from_sorted(
            self.x_cells
                .iter()
                .enumerate()
                .map(|(i, c)| Cell::new(c.clone(), self.values[i * ny + j]))
                .collect(),
        )
    }

    /// y-profile of row `i`.
    pub fn row(&self, i: usize) -> StepDensity {
        let ny = self.y_cells.len();
        StepDensity::from_sorted(
            self.y_cells
                .iter()
                .enumerate()
                .map(|(j, c)| Cell::new(c.clone(), self.values[i * ny + j]))
                .collect(),
        )
    }

    pub fn transpose(&self) -> GridDensity {
        let (nx, ny) = (self.x_cells.len(), self.y_cells.len());
        let mut values = vec![0.0; nx * ny];
        for i in 0..nx {
            for j in 0..ny {
                values[j * nx + i] = self.values[i * ny + j];
            }
        }
        GridDensity {
            x_cells: self.y_cells.clone(),
            y_cells: self.x_cells.clone(),
            values,
        }
    }

    /// Integral over `A × B` for finite unions of intervals.
    pub fn rectangle_integral(&self, a: &[Interval], b: &[Interval]) -> f64 {
        let ny = self.y_cells.len();
        let ly: Vec<f64> = self.y_cells.iter().map(|c| overlap_len(c, b)).collect();
        let mut s = 0.0;
        for (i, xc) in self.x_cells.iter().enumerate() {
            let lx = overlap_len(xc, a);
            if lx == 0.0 {
                continue;
            }
            for j in 0..ny {
                s += self.values[i * ny + j] * lx * ly[j];
            }
        }
        s
    }

    /// Every cell with its value, zeros included.
    pub fn rectangles(&self) -> impl Iterator<Item = (&Interval, &Interval, f64)> {
        let ny = self.y_cells.len();
        self.x_cells.iter().enumerate().flat_map(move |(i, xc)| {
            self.y_cells
                .iter()
                .enumerate()
                .map(move |(j, yc)| (xc, yc, self.values[i * ny + j]))
        })
    }
}

/// Kind of a line-supported component.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum CurveKind {
    /// `{x} × B`: x fixed, density along y. This is the constant-map case.
    Vertical { x: Point },
    /// `A × {y}`: y fixed, density along x.
    Horizontal { y: Point },
    /// Graph `{(slope·y + offset, y)}` of a strictly monotone affine map,
    /// density along y.
    Graph { slope: Rational, offset: Rational },
}

/// Mass on a line: `weight · line_density` along the free coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveComponent {
    pub kind: CurveKind,
    pub line_density: StepDensity,
    pub weight: f64,
}

impl CurveComponent {
    pub fn mass(&self) -> f64 {
        self.weight * self.line_density.total()
    }
}

/// Joint measure on `X × Y`. Line components of the same kind are merged,
/// so distinct components overlap at most in single points.
#[derive(Debug, Clone, PartialEq)]
pub struct JointMeasure {
    x_space: SpaceRef,
    y_space: SpaceRef,
    atoms: BTreeMap<(Point, Point), f64>,
    grid: GridDensity,
    verticals: BTreeMap<Point, StepDensity>,
    horizontals: BTreeMap<Point, StepDensity>,
    graphs: BTreeMap<(Rational, Rational), StepDensity>,
    normalized: bool,
}

/// Accumulates pieces of a joint measure; overlapping pieces of the same
/// kind add up.
#[derive(Debug, Default)]
pub struct JointBuilder {
    atoms: BTreeMap<(Point, Point), f64>,
    rects: Vec<(Interval, Interval, f64)>,
    verticals: BTreeMap<Point, Vec<Cell>>,
    horizontals: BTreeMap<Point, Vec<Cell>>,
    graphs: BTreeMap<(Rational, Rational), Vec<Cell>>,
}

impl JointBuilder {
    pub fn new() -> Self {
        JointBuilder::default()
    }

    pub fn atom(&mut self, x: Point, y: Point, w: f64) -> &mut Self {
        if w != 0.0 {
            *self.atoms.entry((x, y)).or_insert(0.0) += w;
        }
        self
    }

    pub fn rect(&mut self, x: Interval, y: Interval, v: f64) -> &mut Self {
        if v != 0.0 {
            self.rects.push((x, y, v));
        }
        self
    }

    pub fn grid(&mut self, g: &GridDensity) -> &mut Self {
        for (a, b, v) in g.rectangles() {
            self.rect(a.clone(), b.clone(), v);
        }
        self
    }

    /// Adds `weight · density` on the given line.
    pub fn curve(&mut self, kind: CurveKind, density: &StepDensity, weight: f64) -> &mut Self {
        if weight == 0.0 {
            return self;
        }
        let cells = density
            .cells()
            .iter()
            .filter(|c| c.value != 0.0)
            .map(|c| Cell::new(c.interval.clone(), c.value * weight));
        match kind {
            CurveKind::Vertical { x } => self.verticals.entry(x).or_default().extend(cells),
            CurveKind::Horizontal { y } => self.horizontals.entry(y).or_default().extend(cells),
            CurveKind::Graph { slope, offset } => self.graphs.entry((slope, offset)).or_default().extend(cells),
        }
        self
    }

    pub fn build(self, x_space: SpaceRef, y_space: SpaceRef, normalized: bool) -> Result<JointMeasure> {
        let grid = GridDensity::from_rectangles(&x_space, &y_space, &self.rects)?;
        fn collect<K: Ord>(m: BTreeMap<K, Vec<Cell>>) -> BTreeMap<K, StepDensity> {
            m.into_iter()
                .map(|(k, cells)| (k, StepDensity::sum_of(cells)))
                .filter(|(_, d)| !d.is_empty())
                .collect()
        }
        let j = JointMeasure {
            x_space,
            y_space,
            atoms: self.atoms,
            grid,
            verticals: collect(self.verticals),
            horizontals: collect(self.horizontals),
            graphs: collect(self.graphs),
            normalized: false,
        };
        j.validate()?;
        if normalized {
            j.into_probability()
        } else {
            Ok(j)
        }
    }
}

impl JointMeasure {
    /// Joint measure from explicit parts; curve components of the same kind
    /// are merged.
    pub fn new(
        x_space: impl Into<SpaceRef>,
        y_space: impl Into<SpaceRef>,
        atoms: BTreeMap<(Point, Point), f64>,
        grid: Option<GridDensity>,
        curves: Vec<CurveComponent>,
        normalized: bool,
    ) -> Result<Self> {
        let x_space = x_space.into();
        let y_space = y_space.into();
        for ((x, y), w) in &atoms {
            if !w.is_finite() || *w < 0.0 {
                return Err(Error::invalid("joint", format!("atom weight {w} at ({x}, {y})")));
            }
        }
        let mut b = JointBuilder::new();
        for ((x, y), w) in atoms {
            b.atoms.insert((x, y), w);
        }
        if let Some(g) = grid {
            check_partition(&g.x_cells, &x_space, "x")?;
            check_partition(&g.y_cells, &y_space, "y")?;
            b.grid(&g);
        }
        for c in curves {
            if !c.weight.is_finite() || c.weight < 0.0 {
                return Err(Error::invalid("joint", format!("curve weight {}", c.weight)));
            }
            if let CurveKind::Graph { slope, .. } = &c.kind {
                if is_zero(slope) {
                    return Err(Error::invalid(
                        "joint",
                        "graph with zero slope; use a vertical component",
                    ));
                }
            }
            b.curve(c.kind, &c.line_density, c.weight);
        }
        let j = b.build(x_space, y_space, false)?;
        if normalized {
            let t = j.total_mass();
            if (t - 1.0).abs() > MASS_TOL {
                return Err(Error::NotNormalized(t));
            }
            return Ok(JointMeasure { normalized: true, ..j });
        }
        Ok(j)
    }

    fn validate(&self) -> Result<()> {
        for (x, y) in self.atoms.keys() {
            self.x_space.check_point(x)?;
            self.y_space.check_point(y)?;
        }
        for (x, d) in &self.verticals {
            self.x_space.check_point(x)?;
            for c in d.cells() {
                if !self.y_space.covers(&c.interval) {
                    return Err(Error::Domain(format!("vertical strip at {x} leaves Y on {}", c.interval)));
                }
            }
        }
        for (y, d) in &self.horizontals {
            self.y_space.check_point(y)?;
            for c in d.cells() {
                if !self.x_space.covers(&c.interval) {
                    return Err(Error::Domain(format!("horizontal strip at {y} leaves X on {}", c.interval)));
                }
            }
        }
        for ((s, o), d) in &self.graphs {
            for c in d.cells() {
                if !self.y_space.covers(&c.interval) {
                    return Err(Error::Domain(format!("graph leaves Y on {}", c.interval)));
                }
                if !affine_maps_into(&self.x_space, s, o, &c.interval) {
                    return Err(Error::Domain(format!("graph over {} leaves X", c.interval)));
                }
            }
        }
        Ok(())
    }

    /// Marks as a probability measure, absorbing rounding up to 1e-9.
    pub(crate) fn into_probability(self) -> Result<JointMeasure> {
        let t = self.total_mass();
        if (t - 1.0).abs() > 1e-9 {
            return Err(Error::NotNormalized(t));
        }
        let mut j = if (t - 1.0).abs() > MASS_TOL { self.scale(1.0 / t) } else { self };
        j.normalized = true;
        Ok(j)
    }

    pub fn x_space(&self) -> &SpaceRef {
        &self.x_space
    }

    pub fn y_space(&self) -> &SpaceRef {
        &self.y_space
    }

    pub fn atoms(&self) -> &BTreeMap<(Point, Point), f64> {
        &self.atoms
    }

    pub fn grid(&self) -> &GridDensity {
        &self.grid
    }

    pub fn verticals(&self) -> &BTreeMap<Point, StepDensity> {
        &self.verticals
    }

    pub fn horizontals(&self) -> &BTreeMap<Point, StepDensity> {
        &self.horizontals
    }

    pub fn graphs(&self) -> &BTreeMap<(Rational, Rational), StepDensity> {
        &self.graphs
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// All line components with unit weight.
    pub fn curves(&self) -> Vec<CurveComponent> {
        let mut out = Vec::new();
        for (x, d) in &self.verticals {
            out.push(CurveComponent { kind: CurveKind::Vertical { x: x.clone() }, line_density: d.clone(), weight: 1.0 });
        }
        for (y, d) in &self.horizontals {
            out.push(CurveComponent { kind: CurveKind::Horizontal { y: y.clone() }, line_density: d.clone(), weight: 1.0 });
        }
        for ((s, o), d) in &self.graphs {
            out.push(CurveComponent { kind: CurveKind::Graph { slope: *s, offset: *o }, line_density: d.clone(), weight: 1.0 });
        }
        out
    }

    /// True when every component is a point atom.
    pub fn is_atomic(&self) -> bool {
        self.grid.is_zero()
            && self.verticals.values().all(|d| d.support().next().is_none())
            && self.horizontals.values().all(|d| d.support().next().is_none())
            && self.graph_mass() == 0.0
    }

    pub fn graph_mass(&self) -> f64 {
        self.graphs.values().map(StepDensity::total).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.values().sum::<f64>()
            + self.grid.total()
            + self.verticals.values().map(StepDensity::total).sum::<f64>()
            + self.horizontals.values().map(StepDensity::total).sum::<f64>()
            + self.graph_mass()
    }

    pub fn scale(&self, c: f64) -> JointMeasure {
        JointMeasure {
            x_space: self.x_space.clone(),
            y_space: self.y_space.clone(),
            atoms: self.atoms.iter().map(|(k, w)| (k.clone(), w * c)).collect(),
            grid: GridDensity {
                values: self.grid.values.iter().map(|v| v * c).collect(),
                ..self.grid.clone()
            },
            verticals: self.verticals.iter().map(|(k, d)| (k.clone(), d.scale(c))).collect(),
            horizontals: self.horizontals.iter().map(|(k, d)| (k.clone(), d.scale(c))).collect(),
            graphs: self.graphs.iter().map(|(k, d)| (*k, d.scale(c))).collect(),
            normalized: self.normalized && c == 1.0,
        }
    }

    /// Convex combination `a·self + b·other` (or any nonnegative combination).
    pub fn mix(&self, a: f64, other: &JointMeasure, b: f64) -> Result<JointMeasure> {
        require_same(&self.x_space, &other.x_space, "mixture X")?;
        require_same(&self.y_space, &other.y_space, "mixture Y")?;
        let mut builder = JointBuilder::new();
        for (j, w) in [(self, a), (other, b)] {
            builder.extend_scaled(j, w);
        }
        let normalized = self.normalized && other.normalized && ((a + b) - 1.0).abs() <= MASS_TOL;
        builder.build(self.x_space.clone(), self.y_space.clone(), normalized)
    }

    pub fn marginal_x(&self) -> HybridMeasure {
        let mut atoms: BTreeMap<Point, f64> = BTreeMap::new();
        for ((x, _), w) in &self.atoms {
            *atoms.entry(x.clone()).or_insert(0.0) += w;
        }
        for (x, d) in &self.verticals {
            *atoms.entry(x.clone()).or_insert(0.0) += d.total();
        }
        let mut cells: Vec<Cell> = self.grid.x_marginal().cells().to_vec();
        for d in self.horizontals.values() {
            cells.extend_from_slice(d.cells());
        }
        for ((s, o), d) in &self.graphs {
            cells.extend_from_slice(d.affine_pushforward(s, o).cells());
        }
        self.finish_marginal(self.x_space.clone(), atoms, cells)
    }

    pub fn marginal_y(&self) -> HybridMeasure {
        let mut atoms: BTreeMap<Point, f64> = BTreeMap::new();
        for ((_, y), w) in &self.atoms {
            *atoms.entry(y.clone()).or_insert(0.0) += w;
        }
        for (y, d) in &self.horizontals {
            *atoms.entry(y.clone()).or_insert(0.0) += d.total();
        }
        let mut cells: Vec<Cell> = self.grid.y_marginal().cells().to_vec();
        for d in self.verticals.values().chain(self.graphs.values()) {
            cells.extend_from_slice(d.cells());
        }
        self.finish_marginal(self.y_space.clone(), atoms, cells)
    }

    fn finish_marginal(&self, space: SpaceRef, atoms: BTreeMap<Point, f64>, cells: Vec<Cell>) -> HybridMeasure {
        let m = HybridMeasure::new(space, atoms, StepDensity::sum_of(cells), false)
            .expect("marginal of a valid joint");
        if self.normalized {
            m.into_probability_loose().expect("marginal of a probability measure")
        } else {
            m
        }
    }

    /// Swaps the roles of the coordinates.
    pub fn transpose(&self) -> JointMeasure {
        let graphs = self
            .graphs
            .iter()
            .map(|((s, o), d)| {
                let inv_s = s.recip();
                ((inv_s, -o * inv_s), d.affine_pushforward(s, o))
            })
            .collect();
        JointMeasure {
            x_space: self.y_space.clone(),
            y_space: self.x_space.clone(),
            atoms: self
                .atoms
                .iter()
                .map(|((x, y), w)| ((y.clone(), x.clone()), *w))
                .collect(),
            grid: self.grid.transpose(),
            verticals: self.horizontals.clone(),
            horizontals: self.verticals.clone(),
            graphs,
            normalized: self.normalized,
        }
    }

    /// `P(A × B)` for finite unions `A ⊂ X`, `B ⊂ Y` (no alignment needed:
    /// every component is integrated exactly).
    pub fn rectangle_mass(&self, a: &MeasurableSet, b: &MeasurableSet) -> f64 {
        let mut s = 0.0;
        for ((x, y), w) in &self.atoms {
            if a.contains(x) && b.contains(y) {
                s += w;
            }
        }
        s += self.grid.rectangle_integral(a.intervals(), b.intervals());
        for (x, d) in &self.verticals {
            if a.contains(x) {
                s += b.intervals().iter().map(|iv| d.integral_over(iv)).sum::<f64>();
            }
        }
        for (y, d) in &self.horizontals {
            if b.contains(y) {
                s += a.intervals().iter().map(|iv| d.integral_over(iv)).sum::<f64>();
            }
        }
        for ((sl, o), d) in &self.graphs {
            let inv = sl.recip();
            let inv_o = -o * inv;
            for ai in a.intervals() {
                let pre = ai.affine_image(&inv, &inv_o);
                for bi in b.intervals() {
                    if let Some(part) = pre.intersect(bi) {
                        s += d.integral_over(&part);
                    }
                }
            }
        }
        s
    }

    /// What the measure puts along the section `{y}`: the atomic part (when
    /// `y` carries point mass) as masses, and the continuous part as
    /// densities per unit length in y.
    pub fn section(&self, y: &Point) -> Result<Section> {
        self.y_space.check_point(y)?;
        let mut atomic_atoms = BTreeMap::new();
        for ((x, yy), w) in &self.atoms {
            if yy == y && *w > 0.0 {
                *atomic_atoms.entry(x.clone()).or_insert(0.0) += w;
            }
        }
        let atomic_density = self.horizontals.get(y).cloned().unwrap_or_default();
        let atomic = (!atomic_atoms.is_empty() || atomic_density.support().next().is_some())
            .then(|| SectionPart {
                atoms: atomic_atoms,
                density: atomic_density,
            });
        let mut atoms = BTreeMap::new();
        let mut density = StepDensity::zero();
        if let Point::Real(yv) = y {
            for (x, d) in &self.verticals {
                let v = d.value_at(yv);
                if v > 0.0 {
                    *atoms.entry(x.clone()).or_insert(0.0) += v;
                }
            }
            for ((s, o), d) in &self.graphs {
                let v = d.value_at(yv);
                if v > 0.0 {
                    *atoms.entry(Point::Real(s * yv + o)).or_insert(0.0) += v;
                }
            }
            if let Some(j) = find_cell(&self.grid.y_cells, yv) {
                density = self.grid.column(j);
            }
        }
        Ok(Section {
            atomic,
            continuous: SectionPart { atoms, density },
        })
    }

    /// Image under `(x, y) ↦ (F(x), G(y))`.
    pub fn pushforward(&self, f: &MeasurableMap, g: &MeasurableMap) -> Result<JointMeasure> {
        require_same(&self.x_space, f.source(), "pushforward X")?;
        require_same(&self.y_space, g.source(), "pushforward Y")?;
        let mut b = JointBuilder::new();
        for ((x, y), w) in &self.atoms {
            b.atom(f.apply(x)?, g.apply(y)?, *w);
        }
        // vertical {x}×B: x moves to F(x), the y-density goes through G
        for (x, d) in &self.verticals {
            let fx = f.apply(x)?;
            let (atoms, cells) = g.push_cells(d);
            for (gy, w) in atoms {
                b.atom(fx.clone(), gy, w);
            }
            b.curve(CurveKind::Vertical { x: fx }, &StepDensity::sum_of(cells), 1.0);
        }
        for (y, d) in &self.horizontals {
            let gy = g.apply(y)?;
            let (atoms, cells) = f.push_cells(d);
            for (fx, w) in atoms {
                b.atom(fx, gy.clone(), w);
            }
            b.curve(CurveKind::Horizontal { y: gy }, &StepDensity::sum_of(cells), 1.0);
        }
        for (xc, yc, v) in self.grid.rectangles() {
            if v == 0.0 {
                continue;
            }
            for fp in f.pieces().iter().filter(|p| p.domain.intersect(xc).is_some()) {
                let xpart = fp.domain.intersect(xc).expect("overlap");
                for gp in g.pieces().iter().filter(|p| p.domain.intersect(yc).is_some()) {
                    let ypart = gp.domain.intersect(yc).expect("overlap");
                    let (lx, ly) = (xpart.len_f64(), ypart.len_f64());
                    match (&fp.action, &gp.action) {
                        (PieceAction::Constant(px), PieceAction::Constant(py)) => {
                            b.atom(px.clone(), py.clone(), v * lx * ly);
                        }
                        (PieceAction::Constant(px), PieceAction::Affine { slope, offset }) => {
                            let d = StepDensity::from_sorted(vec![Cell::new(
                                ypart.affine_image(slope, offset),
                                v * lx / to_f64(&abs(slope)),
                            )]);
                            b.curve(CurveKind::Vertical { x: px.clone() }, &d, 1.0);
                        }
                        (PieceAction::Affine { slope, offset }, PieceAction::Constant(py)) => {
                            let d = StepDensity::from_sorted(vec![Cell::new(
                                xpart.affine_image(slope, offset),
                                v * ly / to_f64(&abs(slope)),
                            )]);
                            b.curve(CurveKind::Horizontal { y: py.clone() }, &d, 1.0);
                        }
                        (
                            PieceAction::Affine { slope: a, offset: c },
                            PieceAction::Affine { slope: bs, offset: d },
                        ) => {
                            b.rect(
                                xpart.affine_image(a, c),
                                ypart.affine_image(bs, d),
                                v / (to_f64(&abs(a)) * to_f64(&abs(bs))),
                            );
                        }
                    }
                }
            }
        }
        for ((s, o), dens) in &self.graphs {
            for cell in dens.cells() {
                if cell.value == 0.0 {
                    continue;
                }
                // split the y-range so that both y and φ(y) stay inside single pieces
                let mut cuts: BTreeSet<Rational> = BTreeSet::new();
                for gp in g.pieces() {
                    cuts.insert(gp.domain.lo);
                    cuts.insert(gp.domain.hi);
                }
                let inv = s.recip();
                for fp in f.pieces() {
                    cuts.insert((fp.domain.lo - o) * inv);
                    cuts.insert((fp.domain.hi - o) * inv);
                }
                let mut pts: Vec<Rational> = vec![cell.interval.lo, cell.interval.hi];
                pts.extend(cuts.into_iter().filter(|c| cell.interval.lo < *c && *c < cell.interval.hi));
                pts.sort();
                for w in pts.windows(2) {
                    let part = Interval::raw(w[0], w[1]);
                    let mid = (w[0] + w[1]) / Rational::from_integer(2);
                    let xmid = s * mid + o;
                    let gp = g
                        .pieces()
                        .iter()
                        .find(|p| p.domain.contains(&mid))
                        .ok_or_else(|| Error::Domain("G does not cover the graph".into()))?;
                    let fp = f
                        .pieces()
                        .iter()
                        .find(|p| p.domain.contains(&xmid))
                        .ok_or_else(|| Error::Domain("F does not cover the graph".into()))?;
                    let mass_len = part.len_f64();
                    match (&fp.action, &gp.action) {
                        (PieceAction::Constant(px), PieceAction::Constant(py)) => {
                            b.atom(px.clone(), py.clone(), cell.value * mass_len);
                        }
                        (PieceAction::Affine { slope: a, offset: c }, PieceAction::Constant(py)) => {
                            // x' = a(s·y + o) + c ranges over an interval
                            let xs = part.affine_image(&(a * s), &(a * o + c));
                            let d = StepDensity::from_sorted(vec![Cell::new(
                                xs,
                                cell.value / to_f64(&abs(&(a * s))),
                            )]);
                            b.curve(CurveKind::Horizontal { y: py.clone() }, &d, 1.0);
                        }
                        (PieceAction::Constant(px), PieceAction::Affine { slope: bs, offset: d }) => {
                            let dd = StepDensity::from_sorted(vec![Cell::new(
                                part.affine_image(bs, d),
                                cell.value / to_f64(&abs(bs)),
                            )]);
                            b.curve(CurveKind::Vertical { x: px.clone() }, &dd, 1.0);
                        }
                        (
                            PieceAction::Affine { slope: a, offset: c },
                            PieceAction::Affine { slope: bs, offset: d },
                        ) => {
                            let new_slope = a * s / bs;
                            let new_offset = a * o + c - new_slope * d;
                            let dd = StepDensity::from_sorted(vec![Cell::new(
                                part.affine_image(bs, d),
                                cell.value / to_f64(&abs(bs)),
                            )]);
                            b.curve(
                                CurveKind::Graph {
                                    slope: new_slope,
                                    offset: new_offset,
                                },
                                &dd,
                                1.0,
                            );
                        }
                    }
                }
            }
        }
        b.build(f.target().clone(), g.target().clone(), self.normalized)
    }

    /// Component-wise comparison on common refinements.
    pub fn approx_eq(&self, other: &JointMeasure, tol: f64) -> bool {
        self.max_difference(other) <= tol
    }

    /// Largest absolute difference between matching atom weights or density
    /// values (grid and line densities) on common refinements; infinite when
    /// the spaces differ.
    pub fn max_difference(&self, other: &JointMeasure) -> f64 {
        if !crate::space::same_space(&self.x_space, &other.x_space)
            || !crate::space::same_space(&self.y_space, &other.y_space)
        {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        let keys: BTreeSet<&(Point, Point)> = self.atoms.keys().chain(other.atoms.keys()).collect();
        for k in keys {
            let a = self.atoms.get(k).copied().unwrap_or(0.0);
            let b = other.atoms.get(k).copied().unwrap_or(0.0);
            worst = worst.max((a - b).abs());
        }
        fn lines<K: Ord + Clone>(a: &BTreeMap<K, StepDensity>, b: &BTreeMap<K, StepDensity>) -> f64 {
            let empty = StepDensity::zero();
            let keys: BTreeSet<&K> = a.keys().chain(b.keys()).collect();
            let mut worst: f64 = 0.0;
            for k in keys {
                let da = a.get(k).unwrap_or(&empty);
                let db = b.get(k).unwrap_or(&empty);
                for (_, va, vb) in StepDensity::zip(da, db) {
                    worst = worst.max((va.unwrap_or(0.0) - vb.unwrap_or(0.0)).abs());
                }
            }
            worst
        }
        worst = worst.max(lines(&self.verticals, &other.verticals));
        worst = worst.max(lines(&self.horizontals, &other.horizontals));
        worst = worst.max(lines(&self.graphs, &other.graphs));
        let (ga, gb) = GridDensity::common(&self.grid, &other.grid);
        for (a, b) in ga.values.iter().zip(&gb.values) {
            worst = worst.max((a - b).abs());
        }
        worst
    }

    /// `∫ f d(self)` for a product step function.
    pub fn integrate(&self, f: &ProductFunction) -> f64 {
        let mut s = 0.0;
        for ((x, y), w) in &self.atoms {
            s += w * f.value(x, y);
        }
        for (x, d) in &self.verticals {
            let row = f.y_profile(x);
            s += StepDensity::zip(d, &row)
                .into_iter()
                .map(|(iv, a, b)| a.unwrap_or(0.0) * b.unwrap_or(0.0) * iv.len_f64())
                .sum::<f64>();
        }
        for (y, d) in &self.horizontals {
            let col = f.x_profile(y);
            s += StepDensity::zip(d, &col)
                .into_iter()
                .map(|(iv, a, b)| a.unwrap_or(0.0) * b.unwrap_or(0.0) * iv.len_f64())
                .sum::<f64>();
        }
        let (fx, fy) = f.cell_breaks();
        let g = self.grid.refine(&fx, &fy);
        for (xc, yc, v) in g.rectangles() {
            if v != 0.0 {
                s += v * f.cell_value(&midpoint(xc), &midpoint(yc)) * xc.len_f64() * yc.len_f64();
            }
        }
        for ((sl, o), d) in &self.graphs {
            let inv = sl.recip();
            let mut cuts: Vec<Rational> = fy.iter().cloned().collect();
            cuts.extend(fx.iter().map(|x| (x - o) * inv));
            for c in d.refine(cuts.iter()).cells() {
                let m = midpoint(&c.interval);
                s += c.value * c.interval.len_f64() * f.cell_value(&(sl * m + o), &m);
            }
        }
        s
    }

    /// Mass of every product of parts, row-major: `P(A_i × B_k)` with point
    /// parts carved out of the cells that contain them. One pass over the
    /// components, so the cost is linear in their size plus the part count.
    pub fn part_masses(&self, x_parts: &[Part], y_parts: &[Part]) -> Vec<f64> {
        let lx = PartLocator::new(x_parts);
        let ly = PartLocator::new(y_parts);
        let ny = y_parts.len();
        let mut out = vec![0.0; x_parts.len() * ny];
        for ((x, y), w) in &self.atoms {
            if let (Some(i), Some(k)) = (lx.part(x), ly.part(y)) {
                out[i * ny + k] += w;
            }
        }
        for (x, d) in &self.verticals {
            let Some(i) = lx.part(x) else { continue };
            for (iv, k) in ly.cells.iter() {
                out[i * ny + k] += d.integral_over(iv);
            }
        }
        for (y, d) in &self.horizontals {
            let Some(k) = ly.part(y) else { continue };
            for (iv, i) in lx.cells.iter() {
                out[i * ny + k] += d.integral_over(iv);
            }
        }
        let fx: Vec<Rational> = lx.cells.iter().flat_map(|(c, _)| [c.lo, c.hi]).collect();
        let fy: Vec<Rational> = ly.cells.iter().flat_map(|(c, _)| [c.lo, c.hi]).collect();
        let g = self.grid.refine(&fx, &fy);
        for (xc, yc, v) in g.rectangles() {
            if v == 0.0 {
                continue;
            }
            if let (Some(i), Some(k)) = (lx.cell(&midpoint(xc)), ly.cell(&midpoint(yc))) {
                out[i * ny + k] += v * xc.len_f64() * yc.len_f64();
            }
        }
        for ((sl, o), d) in &self.graphs {
            let inv = sl.recip();
            let mut cuts = fy.clone();
            cuts.extend(fx.iter().map(|x| (x - o) * inv));
            for c in d.refine(cuts.iter()).cells() {
                let m = midpoint(&c.interval);
                if let (Some(i), Some(k)) = (lx.cell(&(sl * m + o)), ly.cell(&m)) {
                    out[i * ny + k] += c.value * c.interval.len_f64();
                }
            }
        }
        out
    }
}

/// Index lookup into a list of parts: point parts by value, real points
/// and densities by the cell containing them.
struct PartLocator {
    points: BTreeMap<Point, usize>,
    cells: Vec<(Interval, usize)>,
}

impl PartLocator {
    fn new(parts: &[Part]) -> Self {
        let mut points = BTreeMap::new();
        let mut cells = Vec::new();
        for (i, p) in parts.iter().enumerate() {
            match p {
                Part::Point(q) => {
                    points.entry(q.clone()).or_insert(i);
                }
                Part::Cell(c) => cells.push((c.clone(), i)),
            }
        }
        cells.sort_by(|a, b| a.0.cmp(&b.0));
        PartLocator { points, cells }
    }

    fn cell(&self, x: &Rational) -> Option<usize> {
        let i = self.cells.partition_point(|(c, _)| &c.hi <= x);
        self.cells.get(i).filter(|(c, _)| c.contains(x)).map(|(_, k)| *k)
    }

    fn part(&self, p: &Point) -> Option<usize> {
        self.points.get(p).copied().or_else(|| match p {
            Point::Real(x) => self.cell(x),
            Point::Atom(_) => None,
        })
    }
}

impl JointBuilder {
    pub(crate) fn extend_scaled(&mut self, j: &JointMeasure, w: f64) {
        for ((x, y), a) in &j.atoms {
            self.atom(x.clone(), y.clone(), a * w);
        }
        for (xc, yc, v) in j.grid.rectangles() {
            self.rect(xc.clone(), yc.clone(), v * w);
        }
        for c in j.curves() {
            self.curve(c.kind, &c.line_density, w);
        }
    }
}

pub(crate) fn midpoint(iv: &Interval) -> Rational {
    (iv.lo + iv.hi) / Rational::from_integer(2)
}

/// Data carried by a section `{y}` of a joint measure.
#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    /// Point mass at `y`: masses of point atoms and the density of a
    /// horizontal strip.
    pub atomic: Option<SectionPart>,
    /// Densities per unit y-length: vertical strips and graph hits as
    /// x-atoms, the grid column as an x-density.
    pub continuous: SectionPart,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectionPart {
    pub atoms: BTreeMap<Point, f64>,
    pub density: StepDensity,
}

/// Product measure of two hybrid measures.
pub fn product_measure(mx: &HybridMeasure, my: &HybridMeasure) -> JointMeasure {
    let mut b = JointBuilder::new();
    for (x, wx) in mx.atoms() {
        for (y, wy) in my.atoms() {
            b.atom(x.clone(), y.clone(), wx * wy);
        }
        b.curve(CurveKind::Vertical { x: x.clone() }, my.density(), *wx);
    }
    for (y, wy) in my.atoms() {
        b.curve(CurveKind::Horizontal { y: y.clone() }, mx.density(), *wy);
    }
    for cx in mx.density().cells() {
        for cy in my.density().cells() {
            b.rect(cx.interval.clone(), cy.interval.clone(), cx.value * cy.value);
        }
    }
    let normalized = mx.is_normalized() && my.is_normalized();
    b.build(mx.space().clone(), my.space().clone(), normalized)
        .expect("product of valid measures")
}

/// Product of hybrid spaces cut into parts: point parts take precedence over
/// the cells that contain them.
#[derive(Debug, Clone, PartialEq)]
pub enum Part {
    Point(Point),
    Cell(Interval),
}

impl std::fmt::Display for Part {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Part::Point(p) => write!(f, "{{{p}}}"),
            Part::Cell(c) => write!(f, "{c}"),
        }
    }
}

/// Function on `X × Y` that is constant on products of parts.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductFunction {
    x_parts: Vec<Part>,
    y_parts: Vec<Part>,
    values: Vec<f64>,
}

impl ProductFunction {
    pub fn new(x_parts: Vec<Part>, y_parts: Vec<Part>, values: Vec<f64>) -> Result<Self> {
        if values.len() != x_parts.len() * y_parts.len() {
            return Err(Error::invalid("product function", "value count does not match the parts"));
        }
        for parts in [&x_parts, &y_parts] {
            let mut cells: Vec<&Interval> = parts
                .iter()
                .filter_map(|p| match p {
                    Part::Cell(c) => Some(c),
                    Part::Point(_) => None,
                })
                .collect();
            cells.sort();
            if cells.windows(2).any(|w| w[1].lo < w[0].hi) {
                return Err(Error::invalid("product function", "cells overlap"));
            }
        }
        Ok(ProductFunction {
            x_parts,
            y_parts,
            values,
        })
    }

    /// One part per atom label and per interval cell of each measure's
    /// partition, plus the real atoms.
    pub fn parts_of(m: &HybridMeasure) -> Vec<Part> {
        let mut parts: Vec<Part> = m.atoms().keys().cloned().map(Part::Point).collect();
        for l in m.space().atom_points() {
            if !m.atoms().contains_key(&l) {
                parts.push(Part::Point(l));
            }
        }
        parts.extend(m.density().cells().iter().map(|c| Part::Cell(c.interval.clone())));
        parts
    }

    pub fn x_parts(&self) -> &[Part] {
        &self.x_parts
    }

    pub fn y_parts(&self) -> &[Part] {
        &self.y_parts
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn part_index(parts: &[Part], p: &Point) -> Option<usize> {
        parts
            .iter()
            .position(|q| matches!(q, Part::Point(pp) if pp == p))
            .or_else(|| match p {
                Point::Real(x) => Self::cell_index(parts, x),
                Point::Atom(_) => None,
            })
    }

    fn cell_index(parts: &[Part], x: &Rational) -> Option<usize> {
        parts
            .iter()
            .position(|q| matches!(q, Part::Cell(c) if c.contains(x)))
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.y_parts.len() + j]
    }

    pub fn value(&self, x: &Point, y: &Point) -> f64 {
        match (Self::part_index(&self.x_parts, x), Self::part_index(&self.y_parts, y)) {
            (Some(i), Some(j)) => self.at(i, j),
            _ => 0.0,
        }
    }

    /// Value at a pair of real points ignoring point parts (what a density
    /// sees almost everywhere).
    fn cell_value(&self, x: &Rational, y: &Rational) -> f64 {
        match (Self::cell_index(&self.x_parts, x), Self::cell_index(&self.y_parts, y)) {
            (Some(i), Some(j)) => self.at(i, j),
            _ => 0.0,
        }
    }

    fn cell_breaks(&self) -> (BTreeSet<Rational>, BTreeSet<Rational>) {
        let breaks = |parts: &[Part]| {
            parts
                .iter()
                .filter_map(|p| match p {
                    Part::Cell(c) => Some([c.lo, c.hi]),
                    Part::Point(_) => None,
                })
                .flatten()
                .collect()
        };
        (breaks(&self.x_parts), breaks(&self.y_parts))
    }

    fn row_cells(&self, i: Option<usize>) -> StepDensity {
        let Some(i) = i else { return StepDensity::zero() };
        let mut cells: Vec<Cell> = self
            .y_parts
            .iter()
            .enumerate()
            .filter_map(|(j, p)| match p {
                Part::Cell(c) => Some(Cell::new(c.clone(), self.at(i, j))),
                Part::Point(_) => None,
            })
            .collect();
        cells.sort_by(|a, b| a.interval.cmp(&b.interval));
        StepDensity::from_sorted(cells)
    }

    /// `y ↦ f(x, y)` on the y-cells.
    fn y_profile(&self, x: &Point) -> StepDensity {
        self.row_cells(Self::part_index(&self.x_parts, x))
    }

    /// `x ↦ f(x, y)` on the x-cells.
    fn x_profile(&self, y: &Point) -> StepDensity {
        self.transpose().row_cells(Self::part_index(&self.y_parts, y))
    }

    pub fn transpose(&self) -> ProductFunction {
        let (nx, ny) = (self.x_parts.len(), self.y_parts.len());
        let mut values = vec![0.0; nx * ny];
        for i in 0..nx {
            for j in 0..ny {
                values[j * nx + i] = self.at(i, j);
            }
        }
        ProductFunction {
            x_parts: self.y_parts.clone(),
            y_parts: self.x_parts.clone(),
            values,
        }
    }

    /// `x ↦ f(x, ·)` restricted to part `j` of Y, as a simple function on X.
    fn slice_for_y_part(&self, j: usize) -> SimpleFunction {
        let mut points = BTreeMap::new();
        let mut cells = Vec::new();
        for (i, p) in self.x_parts.iter().enumerate() {
            match p {
                Part::Point(pt) => {
                    points.insert(pt.clone(), self.at(i, j));
                }
                Part::Cell(c) => cells.push(Cell::new(c.clone(), self.at(i, j))),
            }
        }
        SimpleFunction::new(points, cells).expect("parts are disjoint")
    }

    fn parts_function(parts: &[Part], values: &[f64]) -> SimpleFunction {
        let mut points = BTreeMap::new();
        let mut cells = Vec::new();
        for (p, v) in parts.iter().zip(values) {
            match p {
                Part::Point(pt) => {
                    points.insert(pt.clone(), *v);
                }
                Part::Cell(c) => cells.push(Cell::new(c.clone(), *v)),
            }
        }
        SimpleFunction::new(points, cells).expect("parts are disjoint")
    }
}

/// The three integrals of Fubini's theorem for a nonnegative product step
/// function: against the product measure, x inside, and y inside.
pub fn fubini_check(f: &ProductFunction, mx: &HybridMeasure, my: &HybridMeasure) -> Result<(f64, f64, f64)> {
    if f.values.iter().any(|v| *v < 0.0) {
        return Err(Error::invalid("product function", "Fubini check needs a nonnegative function"));
    }
    let product = product_measure(mx, my).integrate(f);
    // ∫ [∫ f(x, y) dmx(x)] dmy(y)
    let inner_x: Vec<f64> = (0..f.y_parts.len())
        .map(|j| mx.integrate(&f.slice_for_y_part(j)))
        .collect::<Result<_>>()?;
    let x_first = my.integrate(&ProductFunction::parts_function(&f.y_parts, &inner_x))?;
    let t = f.transpose();
    let inner_y: Vec<f64> = (0..t.y_parts.len())
        .map(|i| my.integrate(&t.slice_for_y_part(i)))
        .collect::<Result<_>>()?;
    let y_first = mx.integrate(&ProductFunction::parts_function(&t.y_parts, &inner_y))?;
    Ok((product, x_first, y_first))
}
