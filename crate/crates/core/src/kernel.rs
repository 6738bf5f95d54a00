//! Transition kernels `y ↦ K(y, ·)` from Y to X, constant per Y-cell up to
//! atoms that move affinely with y.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::joint::{CurveKind, JointBuilder, JointMeasure};
use crate::map::{affine_maps_into, MeasurableMap, PieceAction};
use crate::measure::{HybridMeasure, MASS_TOL};
use crate::rational::{is_zero, Rational};
use crate::space::{require_same, Interval, Point, SpaceRef};
use crate::step::StepDensity;

/// Atom at `slope·y + offset` carrying `weight`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingAtom {
    pub slope: Rational,
    pub offset: Rational,
    pub weight: f64,
}

impl TrackingAtom {
    pub fn position(&self, y: &Rational) -> Rational {
        self.slope * y + self.offset
    }
}

/// Section shared by every y in `cell`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelCell {
    pub cell: Interval,
    pub fixed: HybridMeasure,
    pub tracking: Vec<TrackingAtom>,
}

impl KernelCell {
    pub fn mass(&self) -> f64 {
        self.fixed.total_mass() + self.tracking.iter().map(|t| t.weight).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    from: SpaceRef,
    to: SpaceRef,
    cells: Vec<KernelCell>,
    points: BTreeMap<Point, HybridMeasure>,
    normalized: bool,
}

impl TransitionKernel {
    /// `cells` must partition the intervals of `from`; every atom label of
    /// `from` needs an entry in `points`, and real points listed there
    /// override their cell. Zero-slope tracking atoms become fixed atoms.
    pub fn new(
        from: impl Into<SpaceRef>,
        to: impl Into<SpaceRef>,
        mut cells: Vec<KernelCell>,
        mut points: BTreeMap<Point, HybridMeasure>,
        normalized: bool,
    ) -> Result<Self> {
        let from = from.into();
        let to = to.into();
        cells.sort_by(|a, b| a.cell.cmp(&b.cell));
        let bounds: Vec<Interval> = cells.iter().map(|c| c.cell.clone()).collect();
        if from.partition(bounds.iter().flat_map(|c| [&c.lo, &c.hi])) != bounds {
            return Err(Error::invalid("kernel", format!("cells do not partition the intervals of {from}")));
        }
        for c in &mut cells {
            require_same(c.fixed.space(), &to, "kernel section")?;
            let mut moving = Vec::new();
            for t in std::mem::take(&mut c.tracking) {
                if !t.weight.is_finite() || t.weight < 0.0 {
                    return Err(Error::invalid("kernel", format!("tracking weight {}", t.weight)));
                }
                if is_zero(&t.slope) {
                    let atom = HybridMeasure::new(
                        to.clone(),
                        BTreeMap::from([(Point::Real(t.offset), t.weight)]),
                        StepDensity::zero(),
                        false,
                    )?;
                    c.fixed = c.fixed.add(&atom)?;
                } else if !affine_maps_into(&to, &t.slope, &t.offset, &c.cell) {
                    return Err(Error::Domain(format!("tracking atom leaves X over {}", c.cell)));
                } else {
                    moving.push(t);
                }
            }
            c.tracking = moving;
        }
        for label in from.atom_points() {
            if !points.contains_key(&label) {
                return Err(Error::invalid("kernel", format!("no section for atom {label}")));
            }
        }
        for (p, m) in &points {
            from.check_point(p)?;
            require_same(m.space(), &to, "kernel section")?;
        }
        if normalized {
            for c in &cells {
                let t = c.mass();
                if (t - 1.0).abs() > MASS_TOL {
                    return Err(Error::NotNormalized(t));
                }
            }
            for m in points.values() {
                m.check_normalized()?;
            }
        }
        // A section is a probability exactly when the kernel is one.
        for m in points.values_mut() {
            m.set_normalized(normalized);
        }
        for c in &mut cells {
            c.fixed.set_normalized(normalized && c.tracking.is_empty());
        }
        Ok(TransitionKernel {
            from,
            to,
            cells,
            points,
            normalized,
        })
    }

    /// `K(y, ·) = m` for every y.
    pub fn constant(from: impl Into<SpaceRef>, m: &HybridMeasure) -> Result<Self> {
        let from = from.into();
        let cells = from
            .intervals()
            .iter()
            .map(|iv| KernelCell {
                cell: iv.clone(),
                fixed: m.clone(),
                tracking: vec![],
            })
            .collect();
        let points = from.atom_points().into_iter().map(|p| (p, m.clone())).collect();
        let normalized = m.is_normalized();
        TransitionKernel::new(from, m.space().clone(), cells, points, normalized)
    }

    /// `K(y, ·) = δ_{g(y)}`.
    pub fn deterministic(g: &MeasurableMap) -> Result<Self> {
        let to = g.target().clone();
        let zero = HybridMeasure::zero(to.clone());
        let cells = g
            .pieces()
            .iter()
            .map(|p| {
                Ok(match &p.action {
                    PieceAction::Constant(x) => KernelCell {
                        cell: p.domain.clone(),
                        fixed: HybridMeasure::dirac(to.clone(), x.clone())?,
                        tracking: vec![],
                    },
                    PieceAction::Affine { slope, offset } => KernelCell {
                        cell: p.domain.clone(),
                        fixed: zero.clone(),
                        tracking: vec![TrackingAtom {
                            slope: *slope,
                            offset: *offset,
                            weight: 1.0,
                        }],
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let points = g
            .point_images()
            .iter()
            .map(|(y, x)| Ok((y.clone(), HybridMeasure::dirac(to.clone(), x.clone())?)))
            .collect::<Result<_>>()?;
        TransitionKernel::new(g.source().clone(), to, cells, points, true)
    }

    pub fn from_space(&self) -> &SpaceRef {
        &self.from
    }

    pub fn to_space(&self) -> &SpaceRef {
        &self.to
    }

    pub fn cells(&self) -> &[KernelCell] {
        &self.cells
    }

    pub fn points(&self) -> &BTreeMap<Point, HybridMeasure> {
        &self.points
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn has_tracking(&self) -> bool {
        self.cells.iter().any(|c| c.tracking.iter().any(|t| t.weight > 0.0))
    }

    pub fn cell_index(&self, y: &Rational) -> Option<usize> {
        let i = self.cells.partition_point(|c| &c.cell.hi <= y);
        (i < self.cells.len() && self.cells[i].cell.contains(y)).then_some(i)
    }

    /// `K(y, ·)`.
    pub fn section_at(&self, y: &Point) -> Result<HybridMeasure> {
        self.from.check_point(y)?;
        if let Some(m) = self.points.get(y) {
            return Ok(m.clone());
        }
        let Point::Real(v) = y else {
            unreachable!("labels always carry a section")
        };
        let c = &self.cells[self.cell_index(v).expect("real points of the space lie in a cell")];
        if c.tracking.is_empty() {
            return Ok(c.fixed.clone());
        }
        let mut moving = BTreeMap::new();
        for t in &c.tracking {
            *moving.entry(Point::Real(t.position(v))).or_insert(0.0) += t.weight;
        }
        let moving = HybridMeasure::new(self.to.clone(), moving, StepDensity::zero(), false)?;
        let m = c.fixed.add(&moving)?;
        if self.normalized {
            m.into_probability_loose()
        } else {
            Ok(m)
        }
    }

    /// `(K × ν)(A × B) = ∫_B K(y, A) dν(y)`, as a measure on X × Y.
    pub fn times_measure(&self, ny: &HybridMeasure) -> Result<JointMeasure> {
        require_same(&self.from, ny.space(), "kernel source")?;
        let mut b = JointBuilder::new();
        for (y, w) in ny.atoms() {
            if *w == 0.0 {
                continue;
            }
            let s = self.section_at(y)?;
            for (x, a) in s.atoms() {
                b.atom(x.clone(), y.clone(), a * w);
            }
            b.curve(CurveKind::Horizontal { y: y.clone() }, s.density(), *w);
        }
        for c in &self.cells {
            let part = ny.density().restrict(&c.cell);
            if part.support().next().is_none() {
                continue;
            }
            for cx in c.fixed.density().cells() {
                for cy in part.cells() {
                    b.rect(cx.interval.clone(), cy.interval.clone(), cx.value * cy.value);
                }
            }
            for (x, a) in c.fixed.atoms() {
                b.curve(CurveKind::Vertical { x: x.clone() }, &part, *a);
            }
            for t in &c.tracking {
                b.curve(
                    CurveKind::Graph {
                        slope: t.slope,
                        offset: t.offset,
                    },
                    &part,
                    t.weight,
                );
            }
        }
        let normalized = self.normalized && ny.is_normalized();
        b.build(self.to.clone(), self.from.clone(), normalized)
    }
}

/// Kernel–measure product, with the result on `X × Y`.
pub fn kernel_times_measure(k: &TransitionKernel, ny: &HybridMeasure) -> Result<JointMeasure> {
    k.times_measure(ny)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::MeasurableSet;
    use crate::rational::{int, q};
    use crate::space::Space;
    use crate::step::Cell;

    fn unit_iv() -> Interval {
        Interval::new(int(0), int(1)).unwrap()
    }

    #[test]
    fn identity_tracking_gives_the_diagonal() {
        let k = TransitionKernel::deterministic(&MeasurableMap::identity(Space::unit())).unwrap();
        let u = HybridMeasure::uniform(Space::unit()).unwrap();
        let j = kernel_times_measure(&k, &u).unwrap();
        assert!(j.grid().is_zero() && j.atoms().is_empty());
        let g = &j.graphs()[&(int(1), int(0))];
        assert!((g.total() - 1.0).abs() < 1e-15);
        assert!(j.marginal_y().approx_eq(&u, 1e-12));
    }

    #[test]
    fn constant_kernel_gives_the_product() {
        let u = HybridMeasure::uniform(Space::unit()).unwrap();
        let k = TransitionKernel::constant(u.space().clone(), &u).unwrap();
        let j = kernel_times_measure(&k, &u).unwrap();
        assert_eq!(j.grid().values(), &[1.0]);
    }

    #[test]
    fn coin_kernel_gives_two_strips() {
        let coins = Space::finite(["0", "1"]).unwrap();
        let fair = HybridMeasure::discrete(coins, [(Point::atom("0"), 0.5), (Point::atom("1"), 0.5)]).unwrap();
        let u = HybridMeasure::uniform(Space::unit()).unwrap();
        let k = TransitionKernel::constant(u.space().clone(), &fair).unwrap();
        let j = kernel_times_measure(&k, &u).unwrap();
        assert_eq!(j.verticals().len(), 2);
        // rectangle oracle over quarters of y
        for i in 0..4 {
            let b = MeasurableSet::interval(Interval::new(q(i, 4), q(i + 1, 4)).unwrap());
            for label in ["0", "1"] {
                let a = MeasurableSet::atoms_only([Point::atom(label)]);
                assert!((j.rectangle_mass(&a, &b) - 0.125).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn y_marginal_is_recovered() {
        let space = Space::new(vec!["s".into()], vec![unit_iv()]).unwrap();
        let y = HybridMeasure::new(
            space.clone(),
            BTreeMap::from([(Point::atom("s"), 0.25)]),
            StepDensity::new(vec![
                Cell::new(Interval::new(int(0), q(1, 2)).unwrap(), 1.0),
                Cell::new(Interval::new(q(1, 2), int(1)).unwrap(), 0.5),
            ])
            .unwrap(),
            true,
        )
        .unwrap();
        let x = HybridMeasure::uniform(Space::interval(int(0), int(2)).unwrap()).unwrap();
        let half = HybridMeasure::new(
            x.space().clone(),
            BTreeMap::new(),
            StepDensity::constant(&[Interval::new(int(0), int(2)).unwrap()], 0.25),
            false,
        )
        .unwrap();
        let cells = vec![
            KernelCell {
                cell: Interval::new(int(0), q(1, 2)).unwrap(),
                fixed: half.clone(),
                tracking: vec![TrackingAtom { slope: int(2), offset: int(0), weight: 0.5 }],
            },
            KernelCell { cell: Interval::new(q(1, 2), int(1)).unwrap(), fixed: x.clone(), tracking: vec![] },
        ];
        let k = TransitionKernel::new(space, x.space().clone(), cells, BTreeMap::from([(Point::atom("s"), x.clone())]), true).unwrap();
        let j = kernel_times_measure(&k, &y).unwrap();
        assert!(j.is_normalized());
        assert!(j.marginal_y().approx_eq(&y, 1e-12));
        let s = k.section_at(&Point::Real(q(1, 4))).unwrap();
        assert!((s.point_mass(&Point::Real(q(1, 2))) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_kernels() {
        let u = HybridMeasure::uniform(Space::unit()).unwrap();
        let labels = Space::finite(["a"]).unwrap();
        // label without a section
        let k = TransitionKernel::new(labels, u.space().clone(), vec![], BTreeMap::new(), true);
        assert!(k.is_err());
        // tracking atom leaving X
        let cells = vec![KernelCell {
            cell: unit_iv(),
            fixed: HybridMeasure::zero(u.space().clone()),
            tracking: vec![TrackingAtom { slope: int(2), offset: int(0), weight: 1.0 }],
        }];
        assert!(TransitionKernel::new(u.space().clone(), u.space().clone(), cells, BTreeMap::new(), true).is_err());
        // section with the wrong mass
        let cells = vec![KernelCell { cell: unit_iv(), fixed: u.scale(0.5), tracking: vec![] }];
        assert!(TransitionKernel::new(u.space().clone(), u.space().clone(), cells, BTreeMap::new(), true).is_err());
    }
}
