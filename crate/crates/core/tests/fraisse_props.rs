use proptest::prelude::*;

use clonekit::fraisse::{build_limit, rich_partition, AgeSpec, RichVerdict};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn seeded_runs_are_identical(seed in any::<u64>(), n in 1usize..30) {
        let mut a = build_limit(&AgeSpec::graphs(), seed).unwrap();
        let mut b = build_limit(&AgeSpec::graphs(), seed).unwrap();
        a.ensure(n).unwrap();
        b.ensure(n).unwrap();
        prop_assert_eq!(a.prefix_bytes(n), b.prefix_bytes(n));
    }

    #[test]
    fn triangle_free_prefix_has_no_triangle(seed in any::<u64>()) {
        let mut l = build_limit(&AgeSpec::triangle_free(), seed).unwrap();
        l.saturate(10).unwrap();
        let n = l.len();
        for x in 0..n {
            for y in x + 1..n {
                for z in y + 1..n {
                    prop_assert!(!(l.adjacent(x, y) && l.adjacent(y, z) && l.adjacent(x, z)), "triangle {x} {y} {z}");
                }
            }
        }
    }

    #[test]
    fn small_partial_isomorphisms_extend(seed in any::<u64>(), pts in prop::collection::vec(0usize..12, 5)) {
        let mut l = build_limit(&AgeSpec::graphs(), seed).unwrap();
        l.saturate(12).unwrap();
        let (x1, x2, y1, y2, z) = (pts[0], pts[1], pts[2], pts[3], pts[4]);
        let iso = x1 != x2 && y1 != y2 && l.adjacent(x1, x2) == l.adjacent(y1, y2);
        if iso && z != x1 && z != x2 {
            let found = (0..l.len()).any(|w| {
                w != y1 && w != y2 && l.adjacent(z, x1) == l.adjacent(w, y1) && l.adjacent(z, x2) == l.adjacent(w, y2)
            });
            prop_assert!(found);
            prop_assert_eq!(l.partial_iso_violation(&[(x1, y1), (x2, y2)], false), None);
        }
    }

    #[test]
    fn both_sides_of_a_rich_partition_are_rich(seed in 0u64..1000) {
        let mut l = rich_partition(&AgeSpec::graphs(), seed).unwrap();
        l.saturate(12).unwrap();
        for side in [true, false] {
            let verdict = l.is_rich_upto(side, 2, 12).unwrap();
            prop_assert!(matches!(verdict, RichVerdict::Witnessed { .. }), "{side}: {verdict:?}");
        }
    }
}
