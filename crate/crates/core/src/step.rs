//! Piecewise-constant functions on finitely many half-open cells.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::rational::{abs, cmp_q, to_f64, Rational};
use crate::space::Interval;

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub interval: Interval,
    pub value: f64,
}

impl Cell {
    pub fn new(interval: Interval, value: f64) -> Self {
        Cell { interval, value }
    }

    pub fn mass(&self) -> f64 {
        self.value * self.interval.len_f64()
    }
}

/// Step function given by sorted, pairwise disjoint cells. Outside the cells
/// the function is zero; explicit zero cells are kept so that a density can
/// carry a partition finer than its support.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepDensity {
    cells: Vec<Cell>,
}

/// Value of the cell containing `x`, advancing the cursor `k` over cells
/// that end at or before `x`.
fn covering(cells: &[Cell], k: &mut usize, x: &Rational) -> Option<f64> {
    while *k < cells.len() && cmp_q(&cells[*k].interval.hi, x) != Ordering::Greater {
        *k += 1;
    }
    cells
        .get(*k)
        .filter(|c| cmp_q(&c.interval.lo, x) != Ordering::Greater)
        .map(|c| c.value)
}

impl StepDensity {
    pub fn new(mut cells: Vec<Cell>) -> Result<Self> {
        cells.sort_by(|a, b| a.interval.cmp(&b.interval));
        for c in &cells {
            if !c.value.is_finite() || c.value < 0.0 {
                return Err(Error::invalid(
                    "step density",
                    format!("value {} on {} is not a finite nonnegative real", c.value, c.interval),
                ));
            }
        }
        for w in cells.windows(2) {
            if w[1].interval.lo < w[0].interval.hi {
                return Err(Error::invalid(
                    "step density",
                    format!("cells {} and {} overlap", w[0].interval, w[1].interval),
                ));
            }
        }
        Ok(StepDensity { cells })
    }

    /// Caller guarantees sorted disjoint cells with valid values.
    pub(crate) fn from_sorted(cells: Vec<Cell>) -> Self {
        debug_assert!(cells.windows(2).all(|w| w[0].interval.hi <= w[1].interval.lo));
        StepDensity { cells }
    }

    pub fn zero() -> Self {
        StepDensity::default()
    }

    pub fn constant(intervals: &[Interval], value: f64) -> Self {
        let mut cells: Vec<Cell> = intervals.iter().map(|i| Cell::new(i.clone(), value)).collect();
        cells.sort_by(|a, b| a.interval.cmp(&b.interval));
        StepDensity::from_sorted(cells)
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Index of the cell containing `x`, if any.
    pub fn cell_index(&self, x: &Rational) -> Option<usize> {
        let i = self.cells.partition_point(|c| &c.interval.hi <= x);
        (i < self.cells.len() && self.cells[i].interval.contains(x)).then_some(i)
    }

    /// Value at `x` if `x` is covered by a cell.
    pub fn lookup(&self, x: &Rational) -> Option<f64> {
        self.cell_index(x).map(|i| self.cells[i].value)
    }

    pub fn value_at(&self, x: &Rational) -> f64 {
        self.lookup(x).unwrap_or(0.0)
    }

    /// Integral against length measure.
    pub fn total(&self) -> f64 {
        self.cells.iter().map(Cell::mass).sum()
    }

    /// Exact integral over an arbitrary interval (partial overlaps count
    /// their overlap length).
    pub fn integral_over(&self, iv: &Interval) -> f64 {
        let start = self.cells.partition_point(|c| c.interval.hi <= iv.lo);
        let mut sum = 0.0;
        for c in &self.cells[start..] {
            if c.interval.lo >= iv.hi {
                break;
            }
            if let Some(o) = c.interval.intersect(iv) {
                sum += c.value * o.len_f64();
            }
        }
        sum
    }

    pub fn breakpoints(&self) -> BTreeSet<Rational> {
        let mut b = BTreeSet::new();
        for c in &self.cells {
            b.insert(c.interval.lo);
            b.insert(c.interval.hi);
        }
        b
    }

    pub fn is_breakpoint(&self, x: &Rational) -> bool {
        let i = self.cells.partition_point(|c| &c.interval.hi < x);
        i < self.cells.len() && (&self.cells[i].interval.lo == x || &self.cells[i].interval.hi == x)
    }

    /// Same function on a finer partition.
    pub fn refine<'a>(&self, cuts: impl IntoIterator<Item = &'a Rational>) -> StepDensity {
        let cuts: BTreeSet<&Rational> = cuts.into_iter().collect();
        let mut out = Vec::with_capacity(self.cells.len() + cuts.len());
        for c in &self.cells {
            let mut lo = c.interval.lo;
            for x in cuts.range::<&Rational, _>((
                std::ops::Bound::Excluded(&c.interval.lo),
                std::ops::Bound::Excluded(&c.interval.hi),
            )) {
                out.push(Cell::new(Interval::raw(lo, **x), c.value));
                lo = **x;
            }
            out.push(Cell::new(Interval::raw(lo, c.interval.hi), c.value));
        }
        StepDensity::from_sorted(out)
    }

    /// Walks the union of both coverages on the common refinement, yielding
    /// `(piece, a-value, b-value)` with `None` where a side has no cell.
    pub fn zip(a: &StepDensity, b: &StepDensity) -> Vec<(Interval, Option<f64>, Option<f64>)> {
        let (pa, pb) = (a.endpoints(), b.endpoints());
        let mut pts: Vec<Rational> = Vec::with_capacity(pa.len() + pb.len());
        let (mut i, mut j) = (0, 0);
        while i < pa.len() || j < pb.len() {
            let next = match (pa.get(i), pb.get(j)) {
                (Some(x), Some(y)) if cmp_q(x, y) == Ordering::Equal => {
                    i += 1;
                    j += 1;
                    *x
                }
                (Some(x), Some(y)) if cmp_q(x, y) == Ordering::Less => {
                    i += 1;
                    *x
                }
                (Some(x), None) => {
                    i += 1;
                    *x
                }
                (_, Some(y)) => {
                    j += 1;
                    *y
                }
                (None, None) => unreachable!(),
            };
            pts.push(next);
        }
        let mut out = Vec::with_capacity(pts.len());
        let (mut ka, mut kb) = (0, 0);
        for w in pts.windows(2) {
            let va = covering(&a.cells, &mut ka, &w[0]);
            let vb = covering(&b.cells, &mut kb, &w[0]);
            if va.is_some() || vb.is_some() {
                out.push((Interval::raw(w[0], w[1]), va, vb));
            }
        }
        out
    }

    /// Cell endpoints in increasing order, without repeats.
    fn endpoints(&self) -> Vec<Rational> {
        let mut pts: Vec<Rational> = Vec::with_capacity(2 * self.cells.len());
        for c in &self.cells {
            if pts.last().is_none_or(|p| cmp_q(p, &c.interval.lo) != Ordering::Equal) {
                pts.push(c.interval.lo);
            }
            pts.push(c.interval.hi);
        }
        pts
    }

    /// Sum of possibly overlapping cells as a step density on the union of
    /// their supports.
    pub fn sum_of(cells: Vec<Cell>) -> StepDensity {
        if cells.is_empty() {
            return StepDensity::zero();
        }
        let mut pts: Vec<Rational> = cells
            .iter()
            .flat_map(|c| [c.interval.lo, c.interval.hi])
            .collect();
        pts.sort();
        pts.dedup();
        let mut acc = vec![0.0; pts.len() - 1];
        let mut hit = vec![false; pts.len() - 1];
        for c in &cells {
            let start = pts.binary_search(&c.interval.lo).expect("endpoint");
            let end = pts.binary_search(&c.interval.hi).expect("endpoint");
            for k in start..end {
                acc[k] += c.value;
                hit[k] = true;
            }
        }
        let out = (0..acc.len())
            .filter(|&k| hit[k])
            .map(|k| Cell::new(Interval::raw(pts[k], pts[k + 1]), acc[k]))
            .collect();
        StepDensity::from_sorted(out)
    }

    /// Pointwise combination on the common refinement; pieces covered by
    /// neither side are left out.
    pub fn combine(a: &StepDensity, b: &StepDensity, f: impl Fn(f64, f64) -> f64) -> StepDensity {
        let cells = StepDensity::zip(a, b)
            .into_iter()
            .map(|(iv, va, vb)| Cell::new(iv, f(va.unwrap_or(0.0), vb.unwrap_or(0.0))))
            .collect();
        StepDensity::from_sorted(cells)
    }

    pub fn add(&self, other: &StepDensity) -> StepDensity {
        if other.is_empty() {
            return self.clone();
        }
        if self.is_empty() {
            return other.clone();
        }
        StepDensity::combine(self, other, |x, y| x + y)
    }

    pub fn scale(&self, factor: f64) -> StepDensity {
        self.map(|v| v * factor)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> StepDensity {
        StepDensity::from_sorted(
            self.cells
                .iter()
                .map(|c| Cell::new(c.interval.clone(), f(c.value)))
                .collect(),
        )
    }

    /// Restriction to an interval (cells clipped to it).
    pub fn restrict(&self, iv: &Interval) -> StepDensity {
        StepDensity::from_sorted(
            self.cells
                .iter()
                .filter_map(|c| c.interval.intersect(iv).map(|o| Cell::new(o, c.value)))
                .collect(),
        )
    }

    /// Cells with strictly positive value.
    pub fn support(&self) -> impl Iterator<Item = &Cell> {
        self.cells.iter().filter(|c| c.value > 0.0)
    }

    pub fn support_length(&self) -> Rational {
        self.support().map(|c| c.interval.len()).sum()
    }

    /// Fills gaps with zero cells so the density covers exactly the given
    /// sorted intervals. Fails if some cell sticks out of them.
    pub fn cover(&self, intervals: &[Interval]) -> Result<StepDensity> {
        for c in &self.cells {
            if !intervals.iter().any(|iv| iv.contains_interval(&c.interval)) {
                return Err(Error::Domain(format!(
                    "density cell {} lies outside the space",
                    c.interval
                )));
            }
        }
        let mut out = Vec::with_capacity(self.cells.len() + intervals.len());
        let mut k = 0;
        for iv in intervals {
            let mut cursor = iv.lo;
            while k < self.cells.len() && self.cells[k].interval.lo < iv.hi {
                let c = &self.cells[k];
                if c.interval.lo > cursor {
                    out.push(Cell::new(Interval::raw(cursor, c.interval.lo), 0.0));
                }
                out.push(c.clone());
                cursor = c.interval.hi;
                k += 1;
            }
            if cursor < iv.hi {
                out.push(Cell::new(Interval::raw(cursor, iv.hi), 0.0));
            }
        }
        Ok(StepDensity::from_sorted(out))
    }

    /// Image density under the strictly monotone map `x ↦ slope·x + offset`
    /// (change of variables divides by `|slope|`).
    pub fn affine_pushforward(&self, slope: &Rational, offset: &Rational) -> StepDensity {
        debug_assert!(!crate::rational::is_zero(slope));
        let factor = 1.0 / to_f64(&abs(slope));
        let mut cells: Vec<Cell> = self
            .cells
            .iter()
            .map(|c| Cell::new(c.interval.affine_image(slope, offset), c.value * factor))
            .collect();
        if slope < &Rational::from_integer(0) {
            cells.reverse();
        }
        StepDensity::from_sorted(cells)
    }

    /// `y ↦ self(slope·y + offset)` on `domain`, for `slope ≠ 0`.
    pub fn pullback(&self, slope: &Rational, offset: &Rational, domain: &Interval) -> StepDensity {
        let image = domain.affine_image(slope, offset);
        let inv_slope = slope.recip();
        let inv_offset = -offset * inv_slope;
        let mut cells = Vec::new();
        for c in &self.cells {
            if let Some(o) = c.interval.intersect(&image) {
                cells.push(Cell::new(o.affine_image(&inv_slope, &inv_offset), c.value));
            }
        }
        cells.sort_by(|a, b| a.interval.cmp(&b.interval));
        StepDensity::from_sorted(cells)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, q};

    fn iv(a: Rational, b: Rational) -> Interval {
        Interval::new(a, b).unwrap()
    }

    fn halves(a: f64, b: f64) -> StepDensity {
        StepDensity::new(vec![
            Cell::new(iv(int(0), q(1, 2)), a),
            Cell::new(iv(q(1, 2), int(1)), b),
        ])
        .unwrap()
    }

    #[test]
    fn rejects_negative_and_overlapping() {
        assert!(StepDensity::new(vec![Cell::new(iv(int(0), int(1)), -1.0)]).is_err());
        assert!(StepDensity::new(vec![
            Cell::new(iv(int(0), int(1)), 1.0),
            Cell::new(iv(q(1, 2), int(2)), 1.0)
        ])
        .is_err());
    }

    #[test]
    fn integral_over_partial_cells() {
        let d = halves(2.0, 0.0);
        assert!((d.integral_over(&iv(q(1, 4), int(1))) - 0.5).abs() < 1e-15);
        assert_eq!(d.total(), 1.0);
    }

    #[test]
    fn refine_keeps_integrals() {
        let d = halves(2.0, 0.0).refine([&q(1, 4), &q(3, 4)]);
        assert_eq!(d.cells().len(), 4);
        assert_eq!(d.total(), 1.0);
        assert_eq!(d.value_at(&q(1, 3)), 2.0);
    }

    #[test]
    fn pushforward_and_pullback_invert() {
        let d = halves(1.0, 3.0);
        let pushed = d.affine_pushforward(&int(-2), &int(2));
        assert!((pushed.total() - d.total()).abs() < 1e-15);
        assert_eq!(pushed.value_at(&q(1, 2)), 1.5);
        let back = pushed.pullback(&int(-2), &int(2), &iv(int(0), int(1)));
        assert_eq!(back.value_at(&q(1, 4)), 0.5);
        assert_eq!(back.value_at(&q(3, 4)), 1.5);
    }

    #[test]
    fn cover_fills_gaps() {
        let d = StepDensity::new(vec![Cell::new(iv(q(1, 4), q(1, 2)), 4.0)]).unwrap();
        let c = d.cover(&[iv(int(0), int(1))]).unwrap();
        assert_eq!(c.cells().len(), 3);
        assert!(d.cover(&[iv(int(0), q(1, 3))]).is_err());
    }
}
