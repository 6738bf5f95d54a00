mod common;

use std::fs;
use std::path::Path;

use common::{check_golden, histories, leaf_table, max_abs_diff, open, outcome, toy, Finite};
use condmeasure::regularity::{check_conditions, mutual_information};
use condmeasure::sequential::{
    all_gains, choose_placement, greedy_index, replay, run_simulation, update, Decision, ExperimentState, Policy,
    Termination,
};
use condmeasure::space::Point;
use proptest::prelude::*;

fn row(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(prop_oneof![1 => Just(0.0), 4 => 0.05f64..1.0], n)
        .prop_filter("some mass", |r| r.iter().any(|v| *v > 0.0))
        .prop_map(|r| {
            let t: f64 = r.iter().sum();
            r.into_iter().map(|v| v / t).collect()
        })
}

/// Finite models with up to four parameters, three placements and three
/// outcomes; placements are sometimes repeated to create exact ties.
fn finite_model() -> impl Strategy<Value = Finite> {
    (2usize..=4, 1usize..=3)
        .prop_flat_map(|(n, k)| {
            let placement = (2usize..=3).prop_flat_map(move |m| proptest::collection::vec(row(m), n));
            (row(n), proptest::collection::vec(placement, k), any::<bool>())
        })
        .prop_map(|(prior, mut lik, dup)| {
            if dup {
                lik.insert(0, lik[lik.len() - 1].clone());
            }
            Finite { prior, lik }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn summed_gains_equal_the_information_of_the_history(f in finite_model(), t in 1usize..=6) {
        let cfg = f.config(Policy::GreedyInfoGain, open(t));
        let s0 = ExperimentState::initial(&cfg);
        for depth in 1..=t {
            let mut leaves = Vec::new();
            histories(&f, &cfg, &s0, f.prior.clone(), String::new(), 0.0, depth, &mut leaves);
            let table = leaf_table(&f, &leaves);
            let expected_sum: f64 = leaves.iter().map(|l| l.joint.iter().sum::<f64>() * l.gains).sum();
            let j = table.joint();
            let mi = mutual_information(&j).unwrap().finite().unwrap();
            prop_assert!((mi - table.mi()).abs() <= 1e-9);
            prop_assert!((mi - expected_sum).abs() <= 1e-9, "depth {depth}: {mi} vs {expected_sum}");
            let r = check_conditions(&j).unwrap();
            prop_assert!(r.all_true() && r.agree, "depth {depth}\n{r}");
        }
    }

    #[test]
    fn posterior_is_a_martingale(f in finite_model()) {
        let cfg = f.config(Policy::GreedyInfoGain, open(1));
        let s0 = ExperimentState::initial(&cfg);
        for x in 0..f.lik.len() {
            let mut mean = vec![0.0; f.thetas()];
            for y in 0..f.outcomes(x) {
                let e = f.evidence(&f.prior, x, y);
                if e <= 0.0 {
                    continue;
                }
                let post = Finite::weights(&update(&cfg, &s0, x, &outcome(y)).unwrap().posterior, f.thetas());
                for (m, p) in mean.iter_mut().zip(post) {
                    *m += e * p;
                }
            }
            prop_assert!(max_abs_diff(&mean, &f.prior) <= 1e-9);
        }
    }

    #[test]
    fn greedy_matches_the_exhaustive_argmax(f in finite_model()) {
        let cfg = f.config(Policy::GreedyInfoGain, open(1));
        let s0 = ExperimentState::initial(&cfg);
        let oracle: Vec<f64> = (0..f.lik.len()).map(|x| f.gain(&f.prior, x)).collect();
        let gains = all_gains(&cfg, &s0).unwrap();
        prop_assert!(max_abs_diff(&gains, &oracle) <= 1e-12);
        let mut best = 0;
        for x in 1..oracle.len() {
            if oracle[x] > oracle[best] + 1e-12 {
                best = x;
            }
        }
        prop_assert_eq!(choose_placement(&cfg, &s0).unwrap(), Decision::Place(best));
        prop_assert_eq!(greedy_index(&gains), best);
    }

    #[test]
    fn update_order_does_not_matter(f in finite_model(), a in 0usize..3, b in 0usize..3) {
        let cfg = f.config(Policy::GreedyInfoGain, open(2));
        let s0 = ExperimentState::initial(&cfg);
        let (xa, xb) = (a % f.lik.len(), b % f.lik.len());
        let (ya, yb) = (a % f.outcomes(xa), b % f.outcomes(xb));
        let both = |first: (usize, usize), second: (usize, usize)| {
            let s = update(&cfg, &s0, first.0, &outcome(first.1)).unwrap();
            if s.flagged.is_some() {
                return None;
            }
            let s = update(&cfg, &s, second.0, &outcome(second.1)).unwrap();
            s.flagged.is_none().then(|| Finite::weights(&s.posterior, f.thetas()))
        };
        let (p, q) = (both((xa, ya), (xb, yb)), both((xb, yb), (xa, ya)));
        prop_assert_eq!(p.is_some(), q.is_some());
        if let (Some(p), Some(q)) = (p, q) {
            prop_assert!(max_abs_diff(&p, &q) <= 1e-12);
        }
    }

    #[test]
    fn simulations_replay_bit_for_bit(f in finite_model(), seed in any::<u64>(), theta in 0usize..4) {
        let cfg = f.config(Policy::GreedyInfoGain, open(8));
        let theta = theta % f.thetas();
        prop_assume!(f.prior[theta] > 0.0);
        let th = Point::atom(format!("t{theta}"));
        let a = run_simulation(&cfg, &th, seed).unwrap();
        let b = run_simulation(&cfg, &th, seed).unwrap();
        prop_assert_eq!(&a, &b);
        let script: Vec<(String, Point)> = a
            .state
            .history
            .iter()
            .map(|t| (cfg.placements()[t.placement].label().to_string(), t.outcome.clone()))
            .collect();
        let states = replay(&cfg, &script).unwrap();
        prop_assert_eq!(&states.last().unwrap().posterior, &a.state.posterior);
        prop_assert_eq!(&states.last().unwrap().history, &a.state.history);
    }
}

#[test]
fn toy_model_gains_and_choice() {
    let f = toy();
    let cfg = f.config(Policy::GreedyInfoGain, open(5));
    let s0 = ExperimentState::initial(&cfg);
    let gains = all_gains(&cfg, &s0).unwrap();
    // four-term sums: 0.45 ln 1.8 + 0.05 ln 0.2, twice
    let a = 2.0 * (0.45 * 1.8f64.ln() + 0.05 * 0.2f64.ln());
    let b = 2.0 * (0.3 * 1.2f64.ln() + 0.2 * 0.8f64.ln());
    assert!((gains[0] - a).abs() <= 1e-12 && (gains[1] - b).abs() <= 1e-12);
    assert!((gains[0] - 0.368).abs() < 5e-4 && (gains[1] - 0.0201).abs() < 5e-5);
    assert_eq!(choose_placement(&cfg, &s0).unwrap(), Decision::Place(0));
}

#[test]
fn a_only_simulation_concentrates() {
    let f = Finite {
        prior: vec![0.5, 0.5],
        lik: vec![vec![vec![0.1, 0.9], vec![0.9, 0.1]]],
    };
    let cfg = f.config(Policy::GreedyInfoGain, open(50));
    for seed in 0..20 {
        let s = run_simulation(&cfg, &Point::atom("t0"), seed).unwrap();
        assert_eq!(s.state.history.len(), 50);
        assert!(s.state.posterior.point_mass(&Point::atom("t0")) >= 0.999, "seed {seed}");
    }
}

#[test]
fn threshold_met_at_the_start_gives_an_empty_history() {
    let f = Finite {
        prior: vec![1.0, 0.0],
        lik: toy().lik,
    };
    let cfg = f.config(
        Policy::GreedyInfoGain,
        Termination {
            max_trials: 10,
            entropy_threshold: Some(0.1),
            stop_on_zero_gain: false,
        },
    );
    let s = run_simulation(&cfg, &Point::atom("t0"), 1).unwrap();
    assert!(s.state.history.is_empty());
    assert_eq!(s.entropy.len(), 1);
}

#[test]
fn outcome_scripts_match_the_goldens() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let mut checked = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) == Some("json") {
            check_golden(&path, 1e-9).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            checked += 1;
        }
    }
    assert!(checked >= 3);
}
