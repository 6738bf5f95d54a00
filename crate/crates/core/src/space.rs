//! Measurable spaces of the representable class: finitely many labelled
//! atoms next to finitely many disjoint half-open intervals.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rational::{format_rational, parse_rational, to_f64, Rational};

/// Half-open interval `[lo, hi)` with exact endpoints.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Interval {
    pub lo: Rational,
    pub hi: Rational,
}

impl Interval {
    pub fn new(lo: Rational, hi: Rational) -> Result<Self> {
        if lo < hi {
            Ok(Interval { lo, hi })
        } else {
            Err(Error::invalid(
                "interval",
                format!("[{}, {}) is empty", format_rational(&lo), format_rational(&hi)),
            ))
        }
    }

    /// Caller guarantees `lo < hi`.
    pub(crate) fn raw(lo: Rational, hi: Rational) -> Self {
        debug_assert!(lo < hi);
        Interval { lo, hi }
    }

    /// A point of the interval outside `avoid` (which must be finite):
    /// the first of `lo + len/2, lo + len/3, ...` that is not excluded.
    pub fn probe(&self, avoid: &BTreeSet<Rational>) -> Rational {
        let len = self.hi - self.lo;
        (2..)
            .map(|k| self.lo + len / Rational::from_integer(k))
            .find(|y| !avoid.contains(y))
            .expect("finite exclusions")
    }

    pub fn len(&self) -> Rational {
        self.hi - self.lo
    }

    pub fn len_f64(&self) -> f64 {
        to_f64(&self.len())
    }

    pub fn contains(&self, x: &Rational) -> bool {
        &self.lo <= x && x < &self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo < hi).then(|| Interval::raw(lo, hi))
    }

    /// Image of the interval under `x ↦ slope·x + offset`, as the half-open
    /// interval spanned by the two endpoint images.
    pub fn affine_image(&self, slope: &Rational, offset: &Rational) -> Interval {
        let a = slope * self.lo + offset;
        let b = slope * self.hi + offset;
        if a < b {
            Interval::raw(a, b)
        } else {
            Interval::raw(b, a)
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", format_rational(&self.lo), format_rational(&self.hi))
    }
}

impl Serialize for Interval {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [format_rational(&self.lo), format_rational(&self.hi)].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Interval {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [lo, hi] = <[String; 2]>::deserialize(d)?;
        let lo = parse_rational(&lo).map_err(serde::de::Error::custom)?;
        let hi = parse_rational(&hi).map_err(serde::de::Error::custom)?;
        Interval::new(lo, hi).map_err(serde::de::Error::custom)
    }
}

/// A point of a space: either a named atom or a real position inside one of
/// the intervals. Real points are written `@1/2` in text form.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Point {
    Atom(String),
    Real(Rational),
}

impl Point {
    pub fn atom(label: impl Into<String>) -> Self {
        Point::Atom(label.into())
    }

    pub fn real(x: Rational) -> Self {
        Point::Real(x)
    }

    pub fn as_real(&self) -> Option<&Rational> {
        match self {
            Point::Real(x) => Some(x),
            Point::Atom(_) => None,
        }
    }

    pub fn parse(s: &str) -> std::result::Result<Point, String> {
        match s.strip_prefix('@') {
            Some(r) => parse_rational(r).map(Point::Real).map_err(|e| e.to_string()),
            None if s.is_empty() => Err("empty point label".into()),
            None => Ok(Point::Atom(s.to_string())),
        }
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Point::Atom(l) => f.write_str(l),
            Point::Real(x) => write!(f, "@{}", format_rational(x)),
        }
    }
}

impl Serialize for Point {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Point::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Measurable space: labelled atoms plus disjoint half-open intervals, sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Space {
    atoms: Vec<String>,
    intervals: Vec<Interval>,
}

pub type SpaceRef = Arc<Space>;

impl Space {
    pub fn new(atoms: Vec<String>, mut intervals: Vec<Interval>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for a in &atoms {
            if a.is_empty() || a.starts_with('@') {
                return Err(Error::invalid("space", format!("bad atom label {a:?}")));
            }
            if !seen.insert(a.as_str()) {
                return Err(Error::invalid("space", format!("duplicate atom label {a:?}")));
            }
        }
        intervals.sort();
        for w in intervals.windows(2) {
            if w[1].lo < w[0].hi {
                return Err(Error::invalid(
                    "space",
                    format!("intervals {} and {} overlap", w[0], w[1]),
                ));
            }
        }
        Ok(Space { atoms, intervals })
    }

    /// `[lo, hi)` with no atoms.
    pub fn interval(lo: Rational, hi: Rational) -> Result<Self> {
        Space::new(Vec::new(), vec![Interval::new(lo, hi)?])
    }

    /// The unit interval `[0, 1)`.
    pub fn unit() -> Self {
        Space::interval(Rational::from_integer(0), Rational::from_integer(1)).expect("unit interval")
    }

    /// A finite space of labelled atoms.
    pub fn finite<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        Space::new(labels.into_iter().map(Into::into).collect(), Vec::new())
    }

    pub fn atoms(&self) -> &[String] {
        &self.atoms
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn is_finite(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn has_atom(&self, label: &str) -> bool {
        self.atoms.iter().any(|a| a == label)
    }

    pub fn contains_real(&self, x: &Rational) -> bool {
        self.interval_index(x).is_some()
    }

    pub fn interval_index(&self, x: &Rational) -> Option<usize> {
        let i = self.intervals.partition_point(|iv| &iv.hi <= x);
        (i < self.intervals.len() && self.intervals[i].contains(x)).then_some(i)
    }

    pub fn contains(&self, p: &Point) -> bool {
        match p {
            Point::Atom(l) => self.has_atom(l),
            Point::Real(x) => self.contains_real(x),
        }
    }

    pub fn check_point(&self, p: &Point) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::Domain(format!("point {p} is not in the space")))
        }
    }

    /// True when the interval is a subset of the union of the space's
    /// intervals (adjacent intervals may be chained).
    pub fn covers(&self, iv: &Interval) -> bool {
        let mut cursor = iv.lo;
        for s in &self.intervals {
            if s.hi <= cursor {
                continue;
            }
            if s.lo > cursor {
                return false;
            }
            cursor = s.hi;
            if cursor >= iv.hi {
                return true;
            }
        }
        false
    }

    /// Cells obtained by splitting every interval at the given points
    /// (points outside the interiors are ignored).
    pub fn partition<'a>(&self, cuts: impl IntoIterator<Item = &'a Rational>) -> Vec<Interval> {
        let cuts: BTreeSet<&Rational> = cuts.into_iter().collect();
        let mut cells = Vec::new();
        for iv in &self.intervals {
            let mut lo = iv.lo;
            for c in cuts.range::<&Rational, _>((
                std::ops::Bound::Excluded(&iv.lo),
                std::ops::Bound::Excluded(&iv.hi),
            )) {
                cells.push(Interval::raw(lo, **c));
                lo = **c;
            }
            cells.push(Interval::raw(lo, iv.hi));
        }
        cells
    }

    /// Every atom label as a point.
    pub fn atom_points(&self) -> impl Iterator<Item = Point> + '_ {
        self.atoms.iter().map(|a| Point::Atom(a.clone()))
    }

    /// Total Lebesgue length of the intervals.
    pub fn length(&self) -> Rational {
        self.intervals.iter().map(Interval::len).sum()
    }
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = self.atoms.clone();
        parts.extend(self.intervals.iter().map(|i| i.to_string()));
        write!(f, "{{{}}}", parts.join(", "))
    }
}

pub(crate) fn same_space(a: &SpaceRef, b: &SpaceRef) -> bool {
    Arc::ptr_eq(a, b) || a == b
}

pub(crate) fn require_same(a: &SpaceRef, b: &SpaceRef, what: &str) -> Result<()> {
    if same_space(a, b) {
        Ok(())
    } else {
        Err(Error::SpaceMismatch(format!("{what}: {a} vs {b}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, q};

    #[test]
    fn rejects_overlap_and_duplicates() {
        let a = Interval::new(int(0), int(1)).unwrap();
        let b = Interval::new(q(1, 2), int(2)).unwrap();
        assert!(Space::new(vec![], vec![a.clone(), b]).is_err());
        assert!(Space::new(vec!["x".into(), "x".into()], vec![]).is_err());
        assert!(Interval::new(int(1), int(1)).is_err());
        let c = Interval::new(int(1), int(2)).unwrap();
        assert!(Space::new(vec![], vec![c, a]).is_ok());
    }

    #[test]
    fn covers_chains_adjacent_intervals() {
        let s = Space::new(
            vec![],
            vec![
                Interval::new(int(0), int(1)).unwrap(),
                Interval::new(int(1), int(2)).unwrap(),
                Interval::new(int(3), int(4)).unwrap(),
            ],
        )
        .unwrap();
        assert!(s.covers(&Interval::new(q(1, 2), q(3, 2)).unwrap()));
        assert!(!s.covers(&Interval::new(q(3, 2), q(7, 2)).unwrap()));
        assert!(s.contains_real(&int(3)));
        assert!(!s.contains_real(&int(2)));
    }

    #[test]
    fn partition_splits_inside_only() {
        let s = Space::unit();
        let cells = s.partition([&q(1, 2), &int(0), &int(5)]);
        assert_eq!(cells.len(), 2);
        assert_eq!(cells[0], Interval::new(int(0), q(1, 2)).unwrap());
    }

    #[test]
    fn point_text_form() {
        assert_eq!(Point::parse("@1/2").unwrap(), Point::Real(q(1, 2)));
        assert_eq!(Point::parse("a").unwrap(), Point::atom("a"));
        assert_eq!(Point::Real(q(3, 4)).to_string(), "@3/4");
    }
}
