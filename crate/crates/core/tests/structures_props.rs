use std::collections::BTreeSet;

use proptest::prelude::*;

use clonekit::clone_core::{compose, generate_clone, CloneOptions, FiniteOperation};
use clonekit::structures::{
    invariant_relations, orbit_count, polymorphisms, preserves, verify_open_set_encoding, verify_trans_open, RelationalStructure,
};

/// A structure on {0,1,2} with one binary relation given by a 9-bit mask.
fn structure(mask: u16) -> RelationalStructure {
    let tuples: Vec<Vec<usize>> = (0..9).filter(|i| mask >> i & 1 == 1).map(|i| vec![i / 3, i % 3]).collect();
    RelationalStructure::new(3).with_relation("R", 2, tuples).unwrap()
}

fn permutation(seed: usize) -> FiniteOperation {
    let perms = [[0, 1, 2], [1, 0, 2], [0, 2, 1], [2, 1, 0], [1, 2, 0], [2, 0, 1]];
    FiniteOperation::new(3, 1, perms[seed % 6].to_vec()).unwrap()
}

fn group_closure(gens: &[FiniteOperation]) -> Vec<FiniteOperation> {
    let mut group: BTreeSet<FiniteOperation> = BTreeSet::from([FiniteOperation::identity(3)]);
    loop {
        let next: BTreeSet<FiniteOperation> =
            group.iter().flat_map(|g| gens.iter().map(move |h| compose(h, std::slice::from_ref(g)).unwrap())).collect();
        let before = group.len();
        group.extend(next);
        if group.len() == before {
            return group.into_iter().collect();
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn galois_soundness(mask in 0u16..512) {
        let s = structure(mask);
        for k in 1..=2 {
            let pol = polymorphisms(&s, k, 1 << 22).unwrap().members;
            let inv = invariant_relations(&pol, 3, 2, 1 << 9).unwrap();
            prop_assert!(inv.contains(&s.relations[0].tuples));
        }
    }

    #[test]
    fn polymorphisms_compose(mask in 0u16..512, i in any::<prop::sample::Index>(), j in any::<prop::sample::Index>(), l in any::<prop::sample::Index>()) {
        let s = structure(mask);
        let unary = polymorphisms(&s, 1, 1 << 22).unwrap().members;
        let binary = polymorphisms(&s, 2, 1 << 22).unwrap().members;
        let f = i.get(&binary);
        let gs = [j.get(&unary).clone(), l.get(&unary).clone()];
        prop_assert!(unary.contains(&compose(f, &gs).unwrap()));
        let h = compose(j.get(&unary), std::slice::from_ref(f)).unwrap();
        prop_assert!(binary.contains(&h));
        prop_assert!(preserves(&h, &s.relations[0].tuples));
    }

    #[test]
    fn adding_generators_never_adds_orbits(a in 0usize..6, b in 0usize..6, n in 1usize..=3) {
        let small = group_closure(&[permutation(a)]);
        let large = group_closure(&[permutation(a), permutation(b)]);
        prop_assert!(orbit_count(&large, 3, n).unwrap() <= orbit_count(&small, 3, n).unwrap());
    }

    #[test]
    fn open_sets_are_solution_sets(table in prop::collection::vec(0usize..2, 4), a in prop::collection::vec(0usize..2, 2), b in 0usize..2) {
        let gens = [
            FiniteOperation::new(2, 2, table).unwrap(),
            FiniteOperation::constant(2, 1, 0).unwrap(),
            FiniteOperation::constant(2, 1, 1).unwrap(),
        ];
        let clone = generate_clone(2, &gens, CloneOptions::with_cap(2)).unwrap();
        prop_assert!(verify_open_set_encoding(&clone, &a, b).unwrap());
    }

    #[test]
    fn transitive_p_map_identity(table in prop::collection::vec(0usize..2, 4), point in prop::collection::vec(0usize..2, 2), value in 0usize..2, b in 0usize..2) {
        let not = FiniteOperation::new(2, 1, vec![1, 0]).unwrap();
        let gens = [FiniteOperation::new(2, 2, table).unwrap(), not];
        let clone = generate_clone(2, &gens, CloneOptions::with_cap(2)).unwrap();
        let alphas: Vec<FiniteOperation> = point
            .iter()
            .map(|&p| clone.members(1).iter().find(|g| g.at(&[b]) == p && g.inverse_permutation().is_some()).unwrap().clone())
            .collect();
        prop_assert!(verify_trans_open(clone.members(2), &point, value, &alphas, b).unwrap().holds);
    }
}
