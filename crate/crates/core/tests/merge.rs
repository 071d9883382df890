use conceptmine::dataset::{generate_synthetic, SyntheticSpec};
use conceptmine::mining::{
    merge_centroids, mine_concepts, ConceptBook, ConceptEntry, MergeConfig, MergeLevel,
    MiningParams,
};
use proptest::prelude::*;

const LEVELS: [MergeLevel; 3] = [MergeLevel::Cell, MergeLevel::Class, MergeLevel::Global];

fn merge(book: &ConceptBook, pct: f64, level: MergeLevel) -> ConceptBook {
    merge_centroids(book, &MergeConfig { threshold_pct: pct, level }).unwrap()
}

prop_compose! {
    /// Books whose centroids come in loose clumps, so merges happen at
    /// small thresholds.
    fn clumped_book()(
        raw in proptest::collection::vec(
            (0usize..3, 0usize..3, 1usize..6, 0usize..4, -0.3f64..0.3, -0.3f64..0.3),
            1..30,
        ),
    ) -> ConceptBook {
        let anchors = [(0.0, 0.0), (3.0, 0.0), (0.0, 3.0), (3.0, 3.0)];
        let mut next = std::collections::BTreeMap::<(usize, usize), usize>::new();
        let mut entries: Vec<ConceptEntry> = raw
            .into_iter()
            .map(|(class, part, members, a, dx, dy)| {
                let id = next.entry((class, part)).or_insert(0);
                let e = ConceptEntry {
                    class,
                    part,
                    local_id: *id,
                    member_count: members,
                    centroid: vec![anchors[a].0 + dx, anchors[a].1 + dy],
                };
                *id += 1;
                e
            })
            .collect();
        entries.sort_by_key(|e| (e.class, e.part, e.local_id));
        ConceptBook::new(2, entries).unwrap()
    }
}

proptest! {
    #[test]
    fn d_c_is_monotone_in_threshold(book in clumped_book()) {
        for level in LEVELS {
            let mut prev = book.d_c();
            for pct in [0.0, 2.0, 5.0, 10.0, 20.0, 50.0] {
                let d = merge(&book, pct, level).d_c();
                prop_assert!(d <= prev);
                prev = d;
            }
        }
    }

    #[test]
    fn merging_is_idempotent(book in clumped_book(), pct in 0.0f64..40.0, l in 0usize..3) {
        let once = merge(&book, pct, LEVELS[l]);
        prop_assert_eq!(merge(&once, pct, LEVELS[l]), once.clone());
        prop_assert!(once.validate().is_ok());
        let total: usize = book.entries.iter().map(|e| e.member_count).sum();
        prop_assert_eq!(once.entries.iter().map(|e| e.member_count).sum::<usize>(), total);
    }

    #[test]
    fn coarser_levels_never_keep_more_entries(book in clumped_book(), pct in 0.0f64..40.0) {
        let counts: Vec<usize> = LEVELS.iter().map(|&l| merge(&book, pct, l).d_c()).collect();
        prop_assert!(counts.windows(2).all(|w| w[1] <= w[0]), "{:?}", counts);
    }

    #[test]
    fn zero_threshold_is_identity(book in clumped_book(), l in 0usize..3) {
        prop_assert_eq!(merge(&book, 0.0, LEVELS[l]), book);
    }
}

#[test]
fn level_order_on_a_mined_book() {
    let spec = SyntheticSpec {
        min_separation: 0.3,
        concepts_per_cell: 3,
        ..Default::default()
    };
    let (ds, _) = generate_synthetic(&spec).unwrap();
    let book = mine_concepts(&ds, &MiningParams::default()).unwrap();
    // planted concepts are near-orthogonal, so the closest pair sits above
    // half of D_max
    for pct in [0.0, 5.0, 10.0, 30.0, 60.0] {
        let counts: Vec<usize> = LEVELS.iter().map(|&l| merge(&book, pct, l).d_c()).collect();
        assert!(counts.windows(2).all(|w| w[1] <= w[0]), "{pct}%: {counts:?}");
        if pct == 60.0 {
            assert!(counts[2] < book.d_c(), "nothing merged: {counts:?}");
        }
    }
}

#[test]
fn single_entry_book_is_untouched() {
    let book = ConceptBook::new(
        2,
        vec![ConceptEntry { class: 0, part: 0, local_id: 0, member_count: 4, centroid: vec![1.0, 2.0] }],
    )
    .unwrap();
    for l in LEVELS {
        assert_eq!(merge(&book, 100.0, l), book);
    }
}
