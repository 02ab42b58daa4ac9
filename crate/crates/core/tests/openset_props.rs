use std::collections::BTreeMap;

use proptest::prelude::*;

use layoutbench::model::ObjectSpec;
use layoutbench::openset::{allocate_quotas, downsample, parse_sentence_file, strata_sizes};
use layoutbench::{BoundingBox, Instruction, Scenario};

fn word() -> impl Strategy<Value = String> {
    "[a-z]{1,6}|[A-Z][a-z]{0,5}|[.,]".prop_map(String::from)
}

#[derive(Debug, Clone)]
enum Piece {
    Word(String),
    Entity { chain: u32, categories: Vec<String>, words: Vec<String> },
}

fn piece() -> impl Strategy<Value = Piece> {
    prop_oneof![
        word().prop_map(Piece::Word),
        (
            1u32..500,
            prop::collection::vec(prop::sample::select(vec!["people", "animals", "scene", "notvisual", "other"]), 1..3),
            prop::collection::vec(word(), 1..4),
        )
            .prop_map(|(chain, cats, words)| Piece::Entity {
                chain,
                categories: cats.into_iter().map(String::from).collect(),
                words,
            }),
    ]
}

fn render(pieces: &[Piece]) -> String {
    pieces
        .iter()
        .map(|p| match p {
            Piece::Word(w) => w.clone(),
            Piece::Entity { chain, categories, words } => {
                format!("[/EN#{chain}/{} {}]", categories.join("/"), words.join(" "))
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

proptest! {
    #[test]
    fn markup_round_trips(pieces in prop::collection::vec(piece(), 1..12)) {
        let line = render(&pieces);
        let captions = parse_sentence_file("img", &line).unwrap();
        prop_assert_eq!(captions.len(), 1);
        prop_assert_eq!(captions[0].render_markup(), line);
        let words: Vec<&str> = captions[0].text.split(' ').collect();
        for e in &captions[0].entities {
            prop_assert_eq!(words[e.span.0..e.span.1].join(" "), e.phrase.clone());
        }
    }

    #[test]
    fn quotas_sum_to_target_and_stay_proportional(
        sizes in prop::collection::btree_map(1usize..10, 1usize..300, 1..6),
        frac in 0.0..=1.0f64,
    ) {
        let pool: usize = sizes.values().sum();
        let target = (frac * pool as f64).floor() as usize;
        let quotas = allocate_quotas(&sizes, target);
        prop_assert_eq!(quotas.values().sum::<usize>(), target);
        for (k, n) in &sizes {
            let exact = *n as f64 * target as f64 / pool as f64;
            prop_assert!((quotas[k] as f64 - exact).abs() < 1.0);
            prop_assert!(quotas[k] <= *n);
        }
    }
}

fn synthetic_pool(strata: &[(usize, usize)]) -> Vec<Instruction> {
    let mut pool = Vec::new();
    for &(n, count) in strata {
        for i in 0..count {
            let objects = (0..n)
                .map(|j| ObjectSpec {
                    phrase: format!("thing{j}"),
                    head: format!("thing{j}"),
                    bbox: BoundingBox::new(0.0, 0.0, 0.5, 0.5).unwrap(),
                })
                .collect();
            pool.push(Instruction {
                id: format!("{n}_{i:04}"),
                scenario: Scenario::OpenSet,
                prompt: (0..n).map(|j| format!("thing{j}")).collect::<Vec<_>>().join(" "),
                n_objects: n,
                objects,
                relations: vec![],
            });
        }
    }
    pool
}

#[test]
fn downsampling_preserves_strata_within_one_item() {
    let pool = synthetic_pool(&[(1, 180), (2, 410), (3, 250), (4, 110), (6, 50)]);
    assert_eq!(pool.len(), 1000);
    let out = downsample(&pool, 600, 42).unwrap();
    assert_eq!(out.len(), 600);
    let before = strata_sizes(&pool);
    let after = strata_sizes(&out);
    for (k, n) in &before {
        let expected = *n as f64 * 0.6;
        let got = after.get(k).copied().unwrap_or(0) as f64;
        assert!((got - expected).abs() <= 1.0, "stratum {k}: {got} vs {expected}");
    }
    assert_eq!(out, downsample(&pool, 600, 42).unwrap());
    assert_ne!(out, downsample(&pool, 600, 43).unwrap());
}

#[test]
fn full_target_is_identity() {
    let pool = synthetic_pool(&[(1, 5), (2, 7)]);
    assert_eq!(downsample(&pool, pool.len(), 1).unwrap(), pool);
    let quotas = allocate_quotas(&BTreeMap::from([(1, 100), (2, 200), (3, 100)]), 200);
    assert_eq!(quotas, BTreeMap::from([(1, 50), (2, 100), (3, 50)]));
}
