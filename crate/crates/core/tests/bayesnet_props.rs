mod common;


use condmeasure::bayesnet::{assemble_joint, check_conditions_net, propagate};
use condmeasure::random::{random_net, NetProfile};
use common::{enumerate_net, net_marginals};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn atom_nets_assemble_to_the_enumeration(seed in any::<u64>()) {
        let net = random_net(seed, &NetProfile { atoms_only: true, ..Default::default() });
        let j = assemble_joint(&net).unwrap();
        let oracle = enumerate_net(&net);
        prop_assert_eq!(j.entries(), &oracle);
    }

    #[test]
    fn marginals_agree_three_ways(seed in any::<u64>(), atoms_only in any::<bool>()) {
        let net = random_net(seed, &NetProfile { atoms_only, ..Default::default() });
        let j = assemble_joint(&net).unwrap();
        prop_assert!((j.total() - 1.0).abs() <= 1e-9);
        let sizes: Vec<usize> = net.nodes().iter().map(|n| n.parts().len()).collect();
        let oracle = net_marginals(&enumerate_net(&net), &sizes);
        let prop = propagate(&net);
        for k in 0..sizes.len() {
            for (i, want) in oracle[k].iter().enumerate() {
                prop_assert!((j.marginal(k)[i] - want).abs() <= 1e-9);
                prop_assert!((prop.marginals[k][i] - want).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn global_domination_matches_the_nodes(seed in any::<u64>(), atoms_only in any::<bool>()) {
        let net = random_net(seed, &NetProfile { atoms_only, ..Default::default() });
        let r = check_conditions_net(&net).unwrap();
        prop_assert!(r.agree(), "{}", r);
    }

    #[test]
    fn canonical_net_reassembles_the_joint(seed in any::<u64>(), atoms_only in any::<bool>()) {
        let net = random_net(seed, &NetProfile { atoms_only, ..Default::default() });
        let j = assemble_joint(&net).unwrap();
        let back = assemble_joint(&j.to_net().unwrap()).unwrap();
        prop_assert!(back.max_difference(&j) <= 1e-9);
    }
}
