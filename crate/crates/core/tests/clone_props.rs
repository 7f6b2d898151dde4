use std::collections::BTreeSet;

use proptest::prelude::*;

use clonekit::clone_core::{
    classify_element, compose, find_projection_homomorphism, generate_clone, verify_clone_homomorphism, CloneMap, CloneOptions,
    FiniteOperation,
};

/// Generator sets on {0,1} with arities up to 2, or unary sets on {0,1,2}.
fn generators() -> impl Strategy<Value = (usize, Vec<FiniteOperation>)> {
    let boolean = prop::collection::vec((1usize..=2, any::<u8>()), 1..=2).prop_map(|gens| {
        let ops = gens
            .into_iter()
            .map(|(arity, bits)| {
                let size = 1 << arity;
                FiniteOperation::new(2, arity, (0..size).map(|i| (bits >> i & 1) as usize).collect()).unwrap()
            })
            .collect();
        (2, ops)
    });
    let ternary = prop::collection::vec(prop::collection::vec(0usize..3, 3), 1..=2)
        .prop_map(|tables| (3, tables.into_iter().map(|t| FiniteOperation::new(3, 1, t).unwrap()).collect()));
    prop_oneof![boolean, ternary]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn regenerating_from_members_is_idempotent((d, gens) in generators()) {
        let clone = generate_clone(d, &gens, CloneOptions::with_cap(2)).unwrap();
        let all: Vec<FiniteOperation> = clone.all_members().cloned().collect();
        let again = generate_clone(d, &all, CloneOptions::with_cap(2)).unwrap();
        for m in 1..=2 {
            let a: BTreeSet<_> = clone.members(m).iter().collect();
            let b: BTreeSet<_> = again.members(m).iter().collect();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn identity_map_is_a_homomorphism((d, gens) in generators()) {
        let clone = generate_clone(d, &gens, CloneOptions::with_cap(2)).unwrap();
        prop_assert!(verify_clone_homomorphism(&CloneMap::identity(&clone)).verdict);
    }

    #[test]
    fn invertible_members_form_a_group((d, gens) in generators()) {
        let clone = generate_clone(d, &gens, CloneOptions::with_cap(2)).unwrap();
        let units: Vec<FiniteOperation> = clone
            .members(1)
            .iter()
            .filter(|f| classify_element(&clone, f).unwrap().invertible.is_some())
            .cloned()
            .collect();
        prop_assert!(units.contains(&FiniteOperation::identity(d)));
        for f in &units {
            let inv = classify_element(&clone, f).unwrap().invertible.unwrap();
            prop_assert!(units.contains(&inv));
            for g in &units {
                prop_assert!(units.contains(&compose(f, std::slice::from_ref(g)).unwrap()));
            }
        }
    }

    #[test]
    fn clone_laws_hold_on_sampled_members((d, gens) in generators(), picks in prop::collection::vec(any::<prop::sample::Index>(), 6)) {
        let clone = generate_clone(d, &gens, CloneOptions::with_cap(2)).unwrap();
        let pick = |m: usize, i: usize| picks[i].get(clone.members(m)).clone();
        let f = pick(2, 0);
        let gs = [pick(2, 1), pick(2, 2)];
        let hs = [pick(1, 3), pick(1, 4)];
        let lhs = compose(&f, &[compose(&gs[0], &hs).unwrap(), compose(&gs[1], &hs).unwrap()]).unwrap();
        let rhs = compose(&compose(&f, &gs).unwrap(), &hs).unwrap();
        prop_assert_eq!(lhs, rhs);
        let p = FiniteOperation::projection(d, 2, 1).unwrap();
        prop_assert_eq!(compose(&p, &gs).unwrap(), gs[1].clone());
        let id2 = [FiniteOperation::projection(d, 2, 0).unwrap(), p];
        prop_assert_eq!(compose(&f, &id2).unwrap(), f.clone());
    }

    #[test]
    fn commutative_idempotent_members_block_projection_maps((d, gens) in generators()) {
        let clone = generate_clone(d, &gens, CloneOptions::with_cap(2)).unwrap();
        let blocking = clone.members(2).iter().any(|f| {
            (0..d).all(|x| f.at(&[x, x]) == x) && (0..d).all(|x| (0..d).all(|y| f.at(&[x, y]) == f.at(&[y, x])))
        });
        if blocking {
            prop_assert!(find_projection_homomorphism(&clone).assignment.is_none());
        }
    }
}
