use std::collections::BTreeSet;

use condmeasure::measure::{HybridMeasure, MeasurableSet, SimpleFunction};
use condmeasure::random::{random_joint, random_quantizer, rng, Profile};
use condmeasure::rational::{q, Rational};
use condmeasure::space::{Interval, Point, SpaceRef};
use condmeasure::step::Cell;
use proptest::prelude::*;
use rand::Rng;

const TOL: f64 = 1e-12;

fn measure(seed: u64) -> HybridMeasure {
    let j = random_joint(seed, Profile::ALL[(seed % 4) as usize]);
    if seed % 2 == 0 {
        j.marginal_x()
    } else {
        j.marginal_y()
    }
}

/// Cuts of every interval of the space at the density breakpoints, plus a
/// few random dyadic points when `extra` is set.
fn pieces(m: &HybridMeasure, seed: u64, extra: bool) -> Vec<Interval> {
    let mut r = rng(seed ^ 0xABCD);
    let mut cuts: BTreeSet<Rational> = m.breakpoints();
    for iv in m.space().intervals().iter().filter(|_| extra) {
        for _ in 0..r.random_range(0..4) {
            let t = q(r.random_range(1..16), 16);
            cuts.insert(iv.lo + (iv.hi - iv.lo) * t);
        }
    }
    m.space().partition(cuts.iter())
}

fn atoms(m: &HybridMeasure) -> Vec<Point> {
    let mut pts: BTreeSet<Point> = m.space().atom_points().collect();
    pts.extend(m.atoms().keys().cloned());
    pts.into_iter().collect()
}

fn random_set(m: &HybridMeasure, seed: u64) -> MeasurableSet {
    let mut r = rng(seed ^ 0x5E7);
    let ivs: Vec<Interval> = pieces(m, seed, false).into_iter().filter(|_| r.random_bool(0.5)).collect();
    let pts: Vec<Point> = atoms(m)
        .into_iter()
        .filter(|p| p.as_real().is_none() && r.random_bool(0.5))
        .collect();
    MeasurableSet::new(pts, ivs)
}

proptest! {
    #[test]
    fn partition_masses_sum_to_total(seed in any::<u64>()) {
        let coarse = measure(seed);
        let ivs = pieces(&coarse, seed, true);
        let cuts: Vec<Rational> = ivs.iter().flat_map(|iv| [iv.lo, iv.hi]).collect();
        let m = coarse.refine(&cuts).unwrap();
        let mut sum = 0.0;
        for iv in ivs {
            sum += m.mass(&MeasurableSet::interval(iv)).unwrap();
        }
        for p in m.space().atom_points() {
            sum += m.mass(&MeasurableSet::atoms_only([p])).unwrap();
        }
        prop_assert!((sum - m.total_mass()).abs() <= TOL, "{sum} vs {}", m.total_mass());
    }

    #[test]
    fn refinement_keeps_masses(seed in any::<u64>()) {
        let m = measure(seed);
        let cuts: Vec<Rational> = pieces(&m, seed, true).iter().flat_map(|iv| [iv.lo, iv.hi]).collect();
        let fine = m.refine(&cuts).unwrap();
        prop_assert!(fine.density().cells().len() >= m.density().cells().len());
        for k in 0..4 {
            let s = random_set(&m, seed.wrapping_add(k));
            let (a, b) = (m.mass(&s).unwrap(), fine.mass(&s).unwrap());
            prop_assert!((a - b).abs() <= TOL, "{a} vs {b}");
        }
    }

    #[test]
    fn indicator_integrates_to_mass(seed in any::<u64>()) {
        let m = measure(seed);
        let s = random_set(&m, seed);
        let by_integral = m.integrate(&SimpleFunction::indicator(&s)).unwrap();
        prop_assert!((by_integral - m.mass(&s).unwrap()).abs() <= TOL);
    }

    #[test]
    fn pushforward_keeps_mass_and_composes(seed in any::<u64>()) {
        let m = measure(seed);
        let mut r = rng(seed);
        let g = random_quantizer(&mut r, m.space(), "b", 4);
        let f = random_quantizer(&mut r, g.target(), "c", 3);
        let once = g.pushforward(&m).unwrap();
        prop_assert!((once.total_mass() - m.total_mass()).abs() <= TOL);
        let twice = f.pushforward(&once).unwrap();
        let composed = g.then(&f).unwrap().pushforward(&m).unwrap();
        prop_assert!(twice.approx_eq(&composed, TOL));
    }

    #[test]
    fn simple_function_integral_matches_cellwise_sum(
        values in proptest::collection::vec(0.0f64..3.0, 1..8),
        weights in proptest::collection::vec(0.0f64..1.0, 8),
    ) {
        // measure with density `weights[i]` on [i/8, (i+1)/8)
        let cells: Vec<Cell> = (0..8)
            .map(|i| Cell::new(Interval::new(q(i, 8), q(i + 1, 8)).unwrap(), weights[i as usize]))
            .collect();
        let space = SpaceRef::new(condmeasure::space::Space::unit());
        let m = HybridMeasure::new(
            space,
            Default::default(),
            condmeasure::step::StepDensity::new(cells).unwrap(),
            false,
        )
        .unwrap();
        let n = values.len() as i128;
        let f_cells: Vec<Cell> = values
            .iter()
            .enumerate()
            .map(|(i, v)| Cell::new(Interval::new(q(i as i128, n), q(i as i128 + 1, n)).unwrap(), *v))
            .collect();
        let f = SimpleFunction::new(Default::default(), f_cells).unwrap();
        // oracle: integrate on the common refinement by midpoint sampling of 8n subcells
        let mut expected = 0.0;
        for k in 0..(8 * n) {
            let mid = (k as f64 + 0.5) / (8 * n) as f64;
            let w = weights[(mid * 8.0) as usize];
            let v = values[(mid * n as f64) as usize];
            expected += w * v / (8 * n) as f64;
        }
        let got = m.integrate(&f).unwrap();
        prop_assert!((got - expected).abs() <= 1e-12, "{got} vs {expected}");
    }
}
