use std::collections::BTreeSet;

use proptest::prelude::*;

use clonekit::clone_core::{generate_clone, CloneOptions, FiniteOperation};
use clonekit::fraisse::{rich_partition, AgeSpec};
use clonekit::gates::{
    build_graph_gate, e_compose_view, gate_decompose_graph, graph_stable_prefix, hf_decompose, horn_canonical_form,
    verify_graph_decomposition, verify_hf, EssentiallyInjective, GateOptions, HornCore, HornVerdict, RandomPolymorphism,
};
use clonekit::topology::Evaluator;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn horn_form_recovers_its_parameters(n in 1usize..=4, mask in 1u32..16, probe in prop::collection::btree_set(0usize..50, 2..=4)) {
        let indices: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        prop_assume!(!indices.is_empty());
        let g = EssentiallyInjective::new(n, indices.clone(), HornCore::Rank).unwrap();
        let probe: Vec<usize> = probe.into_iter().collect();
        match horn_canonical_form(&g, &probe).unwrap() {
            HornVerdict::Unique(form) => {
                prop_assert_eq!(&form.indices, &indices);
                let back = form.to_function();
                for key in form.core.keys() {
                    let mut args = vec![probe[0]; n];
                    for (&i, &v) in indices.iter().zip(key) {
                        args[i] = v;
                    }
                    prop_assert_eq!(back.apply(&args).unwrap(), g.eval(&args).unwrap());
                }
            }
            other => prop_assert!(false, "{other:?}"),
        }
    }

    #[test]
    fn graph_decompositions_verify_and_keep_axioms(seed in 0u64..1000, n in 1usize..=2) {
        let mut bundle = build_graph_gate(n, seed, GateOptions::default()).unwrap();
        let mut g = RandomPolymorphism::injective(n, seed + 1);
        let d = gate_decompose_graph(&mut bundle, &mut g, 20).unwrap();
        prop_assert!(verify_graph_decomposition(&bundle, &d).is_ok());
        prop_assert!(bundle.check_axioms().is_ok());
    }

    #[test]
    fn decompositions_are_cauchy_stable(seed in 0u64..1000, after in 1usize..16) {
        let bundle = build_graph_gate(2, seed, GateOptions::default()).unwrap();
        let g1 = RandomPolymorphism::injective(2, seed + 1);
        let g2 = g1.forked(after, seed + 2);
        let d1 = gate_decompose_graph(&mut bundle.clone(), &mut g1.clone(), after + 6).unwrap();
        let d2 = gate_decompose_graph(&mut bundle.clone(), &mut g2.clone(), after + 6).unwrap();
        prop_assert!(d1.agreement(&d2) >= graph_stable_prefix(after));

        let limit = rich_partition(&AgeSpec::graphs(), seed).unwrap();
        let h1 = RandomPolymorphism::collapsing(1, seed + 3, 50);
        let h2 = h1.forked(after, seed + 4);
        let e1 = hf_decompose(&mut limit.clone(), &mut h1.clone(), after + 6).unwrap();
        let mut second = limit.clone();
        let e2 = hf_decompose(&mut second, &mut h2.clone(), after + 6).unwrap();
        prop_assert!(verify_hf(&second, &e2).is_ok());
        prop_assert!(e1.agreement(&e2) >= after);
    }

    #[test]
    fn e_view_transfer_is_injective(perm in Just(vec![0usize, 1, 2]).prop_shuffle(), table in prop::collection::vec(0usize..3, 3)) {
        let clone = generate_clone(3, &[FiniteOperation::new(3, 1, table).unwrap()], CloneOptions::with_cap(2)).unwrap();
        let e = FiniteOperation::new(3, 1, perm).unwrap();
        let view = e_compose_view(&clone, &e).unwrap();
        for m in 1..=2 {
            let images: BTreeSet<FiniteOperation> = clone.members(m).iter().map(|f| view.psi(f).unwrap()).collect();
            prop_assert_eq!(images.len(), clone.members(m).len());
            prop_assert!(images.iter().all(|f| f.arity() == m));
        }
    }
}
