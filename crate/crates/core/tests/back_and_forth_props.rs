use std::collections::BTreeMap;

use proptest::prelude::*;

use clonekit::back_and_forth::{recover_value, EmbeddingOracle, Recovery, RecoveryBudget, TuState};
use clonekit::fraisse::{AgeSpec, PartialIso};

fn oracle(seed: u64) -> EmbeddingOracle {
    let mut o = EmbeddingOracle::new(&AgeSpec::graphs(), seed).unwrap();
    o.ensure(16).unwrap();
    o
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn tu_steps_are_fair_and_keep_invariants(seed in any::<u64>(), n in 16usize..64) {
        let mut o = oracle(seed);
        let mut state = TuState::new(&mut o, PartialIso::new(), PartialIso::new(), PartialIso::new()).unwrap();
        for _ in 0..n {
            state.step(&mut o).unwrap();
            prop_assert!(state.check(&o).is_ok());
        }
        prop_assert_eq!(state.verify_composition(&o), None);
        let mut counts: BTreeMap<_, usize> = BTreeMap::new();
        for r in state.log() {
            *counts.entry(r.kind.name()).or_default() += 1;
        }
        let floor = (n / 8).saturating_sub(1);
        prop_assert!(counts.len() == 8 || floor == 0);
        prop_assert!(counts.values().all(|&c| c >= floor), "{counts:?}");
    }

    #[test]
    fn values_survive_further_construction(seed in any::<u64>(), more in 1usize..40) {
        let mut o = oracle(seed);
        let before: Vec<usize> = (0..8).map(|x| o.eval(x).unwrap()).collect();
        o.ensure(16 + more).unwrap();
        let _ = o.eval(8 + more).unwrap();
        let after: Vec<usize> = (0..8).map(|x| o.eval(x).unwrap()).collect();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn determined_recovery_is_the_direct_value(seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let mut o = oracle(seed);
        let image: Vec<usize> = (0..16).filter(|&y| o.in_image(y)).collect();
        prop_assume!(!image.is_empty());
        let u = o.preimage(*pick.get(&image)).unwrap().unwrap();
        let direct = o.eval(u).unwrap();
        let budget = RecoveryBudget { pairs: 40, window: 16, steps_per_pair: 4000 };
        if let Recovery::Determined { value, .. } = recover_value(&mut o, u, budget).unwrap() {
            prop_assert_eq!(value, direct);
        }
    }
}
