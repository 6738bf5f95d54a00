//! Measurable maps between representable spaces and image measures.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::measure::HybridMeasure;
use crate::rational::{abs, format_rational, is_zero, to_f64, Rational};
use crate::space::{require_same, Interval, Point, Space, SpaceRef};
use crate::step::{Cell, StepDensity};

/// What a map does on one source interval.
#[derive(Debug, Clone, PartialEq)]
pub enum PieceAction {
    /// Every point goes to the same target point.
    Constant(Point),
    /// `x ↦ slope·x + offset` with `slope ≠ 0`.
    Affine { slope: Rational, offset: Rational },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapPiece {
    pub domain: Interval,
    pub action: PieceAction,
}

/// Piecewise map from one space to another: every labelled atom has an
/// image, the intervals are covered by constant or affine pieces, and
/// individual real points may be overridden.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurableMap {
    source: SpaceRef,
    target: SpaceRef,
    points: BTreeMap<Point, Point>,
    pieces: Vec<MapPiece>,
}

/// True when `slope·x + offset` lies in `space` for every `x` in `domain`.
pub(crate) fn affine_maps_into(space: &Space, slope: &Rational, offset: &Rational, domain: &Interval) -> bool {
    let image = domain.affine_image(slope, offset);
    if !space.covers(&image) {
        return false;
    }
    // a decreasing map attains the upper end of its image
    if slope < &Rational::from_integer(0) {
        return space.contains_real(&(slope * domain.lo + offset));
    }
    true
}

impl MeasurableMap {
    pub fn new(
        source: impl Into<SpaceRef>,
        target: impl Into<SpaceRef>,
        points: BTreeMap<Point, Point>,
        mut pieces: Vec<MapPiece>,
    ) -> Result<Self> {
        let source = source.into();
        let target = target.into();
        for label in source.atoms() {
            if !points.contains_key(&Point::Atom(label.clone())) {
                return Err(Error::Domain(format!("atom {label} has no image")));
            }
        }
        for (from, to) in &points {
            source.check_point(from)?;
            target.check_point(to)?;
        }
        pieces.sort_by(|a, b| a.domain.cmp(&b.domain));
        for w in pieces.windows(2) {
            if w[1].domain.lo < w[0].domain.hi {
                return Err(Error::invalid(
                    "map",
                    format!("pieces {} and {} overlap", w[0].domain, w[1].domain),
                ));
            }
        }
        for iv in source.intervals() {
            let mut cursor = iv.lo;
            for p in pieces.iter().filter(|p| p.domain.hi > iv.lo && p.domain.lo < iv.hi) {
                if p.domain.lo > cursor {
                    break;
                }
                cursor = cursor.max(p.domain.hi);
            }
            if cursor < iv.hi {
                return Err(Error::Domain(format!(
                    "map pieces leave a gap at {} in {iv}",
                    format_rational(&cursor)
                )));
            }
        }
        for p in &pieces {
            if !source.covers(&p.domain) {
                return Err(Error::Domain(format!("piece {} leaves the source space", p.domain)));
            }
            match &p.action {
                PieceAction::Constant(t) => target.check_point(t)?,
                PieceAction::Affine { slope, offset } => {
                    if is_zero(slope) {
                        return Err(Error::invalid("map", "affine piece with zero slope"));
                    }
                    if !affine_maps_into(&target, slope, offset, &p.domain) {
                        return Err(Error::Domain(format!(
                            "affine piece on {} maps outside the target",
                            p.domain
                        )));
                    }
                }
            }
        }
        Ok(MeasurableMap {
            source,
            target,
            points,
            pieces,
        })
    }

    pub fn identity(space: impl Into<SpaceRef>) -> Self {
        let space: SpaceRef = space.into();
        let points = space.atom_points().map(|p| (p.clone(), p)).collect();
        let pieces = space
            .intervals()
            .iter()
            .map(|iv| MapPiece {
                domain: iv.clone(),
                action: PieceAction::Affine {
                    slope: Rational::from_integer(1),
                    offset: Rational::from_integer(0),
                },
            })
            .collect();
        MeasurableMap {
            source: space.clone(),
            target: space,
            points,
            pieces,
        }
    }

    /// Sends the cells `[c_{k}, c_{k+1})` between consecutive cuts to the
    /// labels `bins[k]`; `cuts` must start and end at the ends of each source
    /// interval that is being quantized. Atoms go where `atoms` says.
    pub fn quantizer(
        source: impl Into<SpaceRef>,
        target: impl Into<SpaceRef>,
        cuts: &[Rational],
        bins: &[Point],
        atoms: BTreeMap<Point, Point>,
    ) -> Result<Self> {
        if cuts.len() != bins.len() + 1 {
            return Err(Error::invalid("quantizer", "need one more cut than bins"));
        }
        let pieces = cuts
            .windows(2)
            .zip(bins)
            .map(|(w, b)| {
                Ok(MapPiece {
                    domain: Interval::new(w[0], w[1])?,
                    action: PieceAction::Constant(b.clone()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        MeasurableMap::new(source, target, atoms, pieces)
    }

    pub fn source(&self) -> &SpaceRef {
        &self.source
    }

    pub fn target(&self) -> &SpaceRef {
        &self.target
    }

    pub fn pieces(&self) -> &[MapPiece] {
        &self.pieces
    }

    pub fn point_images(&self) -> &BTreeMap<Point, Point> {
        &self.points
    }

    fn piece_at(&self, x: &Rational) -> Option<&MapPiece> {
        let i = self.pieces.partition_point(|p| &p.domain.hi <= x);
        self.pieces.get(i).filter(|p| p.domain.contains(x))
    }

    /// Image of a single point.
    pub fn apply(&self, p: &Point) -> Result<Point> {
        if let Some(t) = self.points.get(p) {
            return Ok(t.clone());
        }
        match p {
            Point::Atom(l) => Err(Error::Domain(format!("atom {l} has no image"))),
            Point::Real(x) => match self.piece_at(x).map(|p| &p.action) {
                Some(PieceAction::Constant(t)) => Ok(t.clone()),
                Some(PieceAction::Affine { slope, offset }) => Ok(Point::Real(slope * x + offset)),
                None => Err(Error::Domain(format!("{p} is not covered by the map"))),
            },
        }
    }

    /// Pushes a step density forward: constant pieces turn cell mass into
    /// point mass, affine pieces transform the density. Returns the atoms
    /// created and the image cells (possibly overlapping).
    pub(crate) fn push_cells(&self, density: &StepDensity) -> (BTreeMap<Point, f64>, Vec<Cell>) {
        let mut atoms: BTreeMap<Point, f64> = BTreeMap::new();
        let mut cells = Vec::new();
        for c in density.cells() {
            if c.value == 0.0 {
                continue;
            }
            let start = self.pieces.partition_point(|p| p.domain.hi <= c.interval.lo);
            for piece in &self.pieces[start..] {
                if piece.domain.lo >= c.interval.hi {
                    break;
                }
                let Some(part) = piece.domain.intersect(&c.interval) else {
                    continue;
                };
                match &piece.action {
                    PieceAction::Constant(t) => {
                        *atoms.entry(t.clone()).or_insert(0.0) += c.value * part.len_f64();
                    }
                    PieceAction::Affine { slope, offset } => {
                        cells.push(Cell::new(
                            part.affine_image(slope, offset),
                            c.value / to_f64(&abs(slope)),
                        ));
                    }
                }
            }
        }
        (atoms, cells)
    }

    /// Image measure `m ∘ F⁻¹`.
    pub fn pushforward(&self, m: &HybridMeasure) -> Result<HybridMeasure> {
        require_same(m.space(), &self.source, "pushforward source")?;
        let (mut atoms, cells) = self.push_cells(m.density());
        for (p, w) in m.atoms() {
            *atoms.entry(self.apply(p)?).or_insert(0.0) += w;
        }
        HybridMeasure::new(
            self.target.clone(),
            atoms,
            StepDensity::sum_of(cells),
            false,
        )
        .and_then(|r| if m.is_normalized() { r.into_probability_loose() } else { Ok(r) })
    }

    /// `next ∘ self`: first this map, then `next`.
    pub fn then(&self, next: &MeasurableMap) -> Result<MeasurableMap> {
        require_same(&self.target, &next.source, "map composition")?;
        let mut points = BTreeMap::new();
        for (from, to) in &self.points {
            points.insert(from.clone(), next.apply(to)?);
        }
        let mut pieces = Vec::new();
        for piece in &self.pieces {
            match &piece.action {
                PieceAction::Constant(t) => pieces.push(MapPiece {
                    domain: piece.domain.clone(),
                    action: PieceAction::Constant(next.apply(t)?),
                }),
                PieceAction::Affine { slope, offset } => {
                    let image = piece.domain.affine_image(slope, offset);
                    let inv = |y: &Rational| (y - offset) / slope;
                    let mut splits: Vec<Rational> = vec![piece.domain.lo, piece.domain.hi];
                    for np in &next.pieces {
                        for e in [&np.domain.lo, &np.domain.hi] {
                            if &image.lo < e && e < &image.hi {
                                splits.push(inv(e));
                            }
                        }
                    }
                    splits.sort();
                    splits.dedup();
                    for w in splits.windows(2) {
                        let sub = Interval::raw(w[0], w[1]);
                        let mid = (w[0] + w[1]) / Rational::from_integer(2);
                        let inner = slope * mid + offset;
                        let outer = next.piece_at(&inner).ok_or_else(|| {
                            Error::Domain(format!("composition leaves the domain at {}", format_rational(&inner)))
                        })?;
                        let action = match &outer.action {
                            PieceAction::Constant(t) => PieceAction::Constant(t.clone()),
                            PieceAction::Affine { slope: s2, offset: o2 } => PieceAction::Affine {
                                slope: s2 * slope,
                                offset: s2 * offset + o2,
                            },
                        };
                        // single points at the split ends keep their exact two-step image
                        let lo = Point::Real(w[0]);
                        if !points.contains_key(&lo) {
                            points.insert(lo.clone(), next.apply(&self.apply(&lo)?)?);
                        }
                        pieces.push(MapPiece { domain: sub, action });
                    }
                }
            }
        }
        MeasurableMap::new(self.source.clone(), next.target.clone(), points, pieces)
    }
}

impl HybridMeasure {
    /// Flags the measure as a probability measure when its mass is within
    /// tolerance of one; used where mass is preserved up to rounding.
    pub(crate) fn into_probability_loose(self) -> Result<HybridMeasure> {
        let t = self.total_mass();
        if (t - 1.0).abs() <= 1e-9 {
            let m = if (t - 1.0).abs() <= crate::measure::MASS_TOL { self } else { self.scale(1.0 / t) };
            m.into_probability()
        } else {
            Err(Error::NotNormalized(t))
        }
    }
}
