mod common;

use std::collections::BTreeMap;

use common::{dominated, Table};
use condmeasure::conditioning::{ac_check_joint, conditional_density, disintegrate};
use condmeasure::joint::product_measure;
use condmeasure::map::MeasurableMap;
use condmeasure::random::{random_joint, random_quantizer, rng, Profile};
use condmeasure::rational::q;
use condmeasure::regularity::{check_condition6, check_conditions, diagonal_joint, mutual_information, ExtendedReal};
use condmeasure::space::{Point, Space};
use proptest::prelude::*;

fn table_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..=6, 1usize..=6).prop_flat_map(|(n, m)| {
        proptest::collection::vec(proptest::collection::vec(prop_oneof![Just(0.0), 0.01f64..1.0], m), n)
    })
}

fn nonzero(w: &[Vec<f64>]) -> bool {
    w.iter().flatten().any(|v| *v > 0.0)
}

#[test]
fn thousand_draws_agree_and_match_their_profile() {
    for seed in 0..1000u64 {
        let profile = Profile::ALL[(seed % 4) as usize];
        let j = random_joint(seed, profile);
        let r = check_conditions(&j).unwrap();
        assert!(r.agree, "seed {seed} {}\n{r}", profile.name());
        match profile {
            Profile::AtomsOnly | Profile::Grid => assert!(r.all_true(), "seed {seed}\n{r}"),
            Profile::Curve => assert!(r.all_false(), "seed {seed}\n{r}"),
            Profile::Mixed => assert_eq!(r.all_true(), j.graph_mass() == 0.0, "seed {seed}\n{r}"),
        }
        let mi = mutual_information(&j).unwrap();
        assert_eq!(mi.is_finite(), r.conditions[1], "seed {seed}");
        if let ExtendedReal::Finite(v) = mi {
            assert!(v >= 0.0);
        }
    }
}

#[test]
fn diagonal_under_two_bin_quantizers() {
    let bins = Space::finite(["lo", "hi"]).unwrap();
    let f = MeasurableMap::quantizer(
        Space::unit(),
        bins,
        &[q(0, 1), q(1, 2), q(1, 1)],
        &[Point::atom("lo"), Point::atom("hi")],
        BTreeMap::new(),
    )
    .unwrap();
    let (before, after) = check_condition6(&diagonal_joint(), &f, &f).unwrap();
    assert!(before.all_false() && after.all_true());
    let pushed = diagonal_joint().pushforward(&f, &f).unwrap();
    let t = Table::from_atoms(&pushed);
    assert_eq!(t.p, vec![vec![0.5, 0.0], vec![0.0, 0.5]]);
    let mi = mutual_information(&pushed).unwrap().finite().unwrap();
    assert!((mi - t.mi()).abs() <= 1e-12 && (mi - 2f64.ln()).abs() <= 1e-12);
}

proptest! {
    #[test]
    fn product_of_marginals_has_no_information(seed in any::<u64>()) {
        let j = random_joint(seed, Profile::ALL[(seed % 4) as usize]);
        let p = product_measure(&j.marginal_x(), &j.marginal_y());
        let mi = mutual_information(&p).unwrap().finite().unwrap();
        prop_assert!(mi.abs() <= 1e-12, "{mi}");
        prop_assert!(check_conditions(&p).unwrap().all_true());
    }

    #[test]
    fn quantizing_never_adds_information(seed in any::<u64>()) {
        let j = random_joint(seed, Profile::ALL[(seed % 4) as usize]);
        let mut r = rng(seed);
        let f = random_quantizer(&mut r, j.x_space(), "a", 4);
        let g = random_quantizer(&mut r, j.y_space(), "b", 4);
        let (before, after) = check_condition6(&j, &f, &g).unwrap();
        prop_assert!(after.agree);
        if before.all_true() {
            prop_assert!(after.all_true());
        }
        if let ExtendedReal::Finite(v) = mutual_information(&j).unwrap() {
            let pushed = mutual_information(&j.pushforward(&f, &g).unwrap()).unwrap().finite().unwrap();
            prop_assert!(pushed <= v + 1e-9, "{pushed} > {v}");
        }
    }

    #[test]
    fn atom_tables_match_the_explicit_oracle(w in table_strategy(), v in table_strategy()) {
        prop_assume!(nonzero(&w));
        let t = Table::labelled(&w);
        let j = t.joint();
        let report = check_conditions(&j).unwrap();
        prop_assert!(report.all_true() && report.agree);
        let mi = mutual_information(&j).unwrap().finite().unwrap();
        prop_assert!((mi - t.mi()).abs() <= 1e-12, "{mi} vs {}", t.mi());

        let (px, py) = (t.px(), t.py());
        let deriv = ac_check_joint(&j, &product_measure(&j.marginal_x(), &j.marginal_y()))
            .unwrap()
            .derivative
            .unwrap();
        let cd = conditional_density(&j, &j.marginal_x()).unwrap().expect("finite joints have densities");
        let d = disintegrate(&j).unwrap();
        for (i, x) in t.xs.iter().enumerate() {
            for (k, y) in t.ys.iter().enumerate() {
                if t.p[i][k] > 0.0 {
                    let want = t.p[i][k] / (px[i] * py[k]);
                    let got = deriv.atoms[&(x.clone(), y.clone())];
                    prop_assert!((got - want).abs() <= 1e-12 * want.max(1.0));
                    let c = cd.density.value(x, y);
                    prop_assert!((c - want).abs() <= 1e-12 * want.max(1.0), "{c} vs {want}");
                }
            }
        }
        for (k, y) in t.ys.iter().enumerate() {
            if let Some(post) = t.posterior(k) {
                let s = d.kernel.section_at(y).unwrap();
                for (i, x) in t.xs.iter().enumerate() {
                    prop_assert!((s.point_mass(x) - post[i]).abs() <= 1e-12);
                }
            }
        }

        // domination of one table by another, same shape
        if v.len() == w.len() && v[0].len() == w[0].len() && nonzero(&v) {
            let u = Table::labelled(&v);
            let flat = |t: &Table| t.p.iter().flatten().copied().collect::<Vec<_>>();
            let r = ac_check_joint(&j, &u.joint()).unwrap();
            prop_assert_eq!(r.absolutely_continuous, dominated(&flat(&t), &flat(&u)));
        }
    }

    #[test]
    fn random_atom_joints_match_the_explicit_oracle(seed in any::<u64>()) {
        let j = random_joint(seed, Profile::AtomsOnly);
        let t = Table::from_atoms(&j);
        let mi = mutual_information(&j).unwrap().finite().unwrap();
        prop_assert!((mi - t.mi()).abs() <= 1e-12);
        let d = disintegrate(&j).unwrap();
        for (k, y) in t.ys.iter().enumerate() {
            if let Some(post) = t.posterior(k) {
                let s = d.kernel.section_at(y).unwrap();
                for (i, x) in t.xs.iter().enumerate() {
                    prop_assert!((s.point_mass(x) - post[i]).abs() <= 1e-12);
                }
            }
        }
    }
}
