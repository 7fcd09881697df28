use std::time::Duration;

use abagnn::aba::{example_framework, Limits, RawAbaf, Strategy};
use abagnn::datagen::{
    balance_corpus, generate_abaf, generate_batch, label_corpus, split_corpus, BalanceTargets, Corpus, DatagenError,
    GenParams, Split, SplitConfig, Unlabelled,
};
use abagnn_testkit::{brute_force_stable, to_sets};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn base(seed: u64) -> GenParams {
    GenParams {
        n_atoms: 12,
        assumption_ratio: 0.3,
        max_rules_per_head: 3,
        max_body_len: 2,
        seed,
    }
}

fn unlabelled(name: &str, abaf: abagnn::Abaf) -> Unlabelled {
    Unlabelled {
        name: name.to_string(),
        abaf,
        params: None,
    }
}

fn pool(count: usize, atoms: (usize, usize), seed: u64) -> Corpus {
    let batch = generate_batch(&base(seed), atoms, count).unwrap();
    let (corpus, report) = label_corpus(batch, &Limits::unbounded());
    assert_eq!(report.labelled, count);
    corpus
}

#[test]
fn generated_frameworks_are_flat_and_shaped() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for seed in 0..10_000u64 {
        let p = GenParams {
            n_atoms: rng.gen_range(2..=60),
            assumption_ratio: rng.gen_range(0.05..0.95),
            max_rules_per_head: rng.gen_range(0..=4),
            max_body_len: rng.gen_range(0..=5),
            seed,
        };
        let f = match generate_abaf(&p) {
            Ok(f) => f,
            Err(DatagenError::InvalidParams(_)) => {
                assert!(p.num_assumptions() >= p.n_atoms);
                continue;
            }
            Err(e) => panic!("{e}"),
        };
        let k = p.num_assumptions();
        assert_eq!(f.assumptions(), (0..k).collect::<Vec<_>>().as_slice());
        assert!(f.rules().iter().all(|r| !f.is_assumption(r.head)));
        assert!(f.rules().iter().all(|r| !r.body.contains(&r.head)));
        assert!(f.rules().iter().all(|r| !r.body.is_empty() || p.max_body_len == 0));
        assert!(f.rules().iter().all(|r| r.body.len() <= p.max_body_len));
        assert!(f.assumptions().iter().all(|&a| f.contrary(a).is_some_and(|c| c >= k)));
        for h in k..p.n_atoms {
            assert!(f.rules().iter().filter(|r| r.head == h).count() <= p.max_rules_per_head);
        }
        assert!(f.to_raw().validate().is_ok());
    }
}

#[test]
fn generator_is_seeded() {
    let p = GenParams {
        n_atoms: 10,
        assumption_ratio: 0.4,
        max_rules_per_head: 2,
        max_body_len: 3,
        seed: 7,
    };
    assert_eq!(generate_abaf(&p).unwrap(), generate_abaf(&p).unwrap());
    let q = GenParams { seed: 8, ..p };
    assert_ne!(generate_abaf(&p).unwrap(), generate_abaf(&q).unwrap());
}

#[test]
fn example_is_labelled_fully_accepted() {
    let (corpus, report) = label_corpus(vec![unlabelled("ex", example_framework())], &Limits::default());
    assert_eq!(report.labelled, 1);
    assert_eq!(corpus.instances[0].labels(), vec![true; 4]);
}

#[test]
fn no_rules_means_everything_accepted() {
    let batch: Vec<Unlabelled> = (0..20)
        .map(|seed| {
            let p = GenParams {
                max_rules_per_head: 0,
                ..base(seed)
            };
            unlabelled(&format!("n{seed}"), generate_abaf(&p).unwrap())
        })
        .collect();
    let (corpus, _) = label_corpus(batch, &Limits::default());
    assert_eq!(corpus.len(), 20);
    assert!(corpus.instances.iter().all(|i| i.labels().iter().all(|&l| l)));
}

#[test]
fn oversized_instance_is_dropped_and_reported() {
    let big = generate_abaf(&GenParams {
        n_atoms: 100,
        assumption_ratio: 0.3,
        max_rules_per_head: 2,
        max_body_len: 3,
        seed: 1,
    })
    .unwrap();
    let batch = vec![unlabelled("small", example_framework()), unlabelled("big", big.clone())];
    let tiny = Limits::unbounded()
        .with_strategy(Strategy::Exhaustive)
        .with_budget(Some(Duration::from_millis(1)));
    let (corpus, report) = label_corpus(batch, &tiny);
    assert_eq!(report.total, 2);
    assert_eq!(
        corpus.instances.iter().map(|i| i.name.as_str()).collect::<Vec<_>>(),
        ["small"]
    );
    assert_eq!(report.timed_out, ["big"]);

    let (_, report) = label_corpus(vec![unlabelled("big", big)], &Limits::default());
    assert_eq!(report.rejected.len(), 1);
    assert_eq!(report.labelled, 0);
}

#[test]
fn labels_agree_with_brute_force() {
    let batch = generate_batch(&base(99), (4, 30), 100).unwrap();
    let (corpus, _) = label_corpus(batch, &Limits::unbounded());
    for inst in &corpus.instances {
        if inst.abaf.assumptions().len() <= 12 {
            assert_eq!(
                to_sets(&inst.result.extensions),
                brute_force_stable(&inst.abaf),
                "{}",
                inst.name
            );
        }
    }
}

#[test]
fn balance_hits_curated_targets() {
    let corpus = pool(5000, (6, 20), 5);
    let targets = BalanceTargets {
        overall: 0.325,
        solvable: 0.534,
        tolerance: 0.02,
    };
    let balanced = balance_corpus(corpus.clone(), targets, 3).unwrap();
    let rates = balanced.rates();
    assert!((rates.overall - 0.325).abs() <= 0.02, "{rates:?}");
    assert!((rates.solvable - 0.534).abs() <= 0.02, "{rates:?}");
    let again = balance_corpus(corpus, targets, 3).unwrap();
    let names = |c: &Corpus| c.instances.iter().map(|i| i.name.clone()).collect::<Vec<_>>();
    assert_eq!(names(&balanced), names(&again));
}

#[test]
fn natural_rates_keep_the_pool() {
    let corpus = pool(400, (6, 16), 8);
    let natural = corpus.rates();
    let balanced = balance_corpus(
        corpus.clone(),
        BalanceTargets {
            overall: natural.overall,
            solvable: natural.solvable,
            tolerance: 0.01,
        },
        0,
    )
    .unwrap();
    assert_eq!(balanced.len(), corpus.len());
}

fn mutual_attack() -> abagnn::Abaf {
    RawAbaf::named(&["a", "b", "x", "y"])
        .assume("a", "x")
        .assume("b", "y")
        .rule("x", &["b"])
        .rule("y", &["a"])
        .validate()
        .unwrap()
}

#[test]
fn impossible_targets_are_unreachable() {
    // every framework accepts both assumptions credulously but an extension
    // holds only one, so the solvable rate is 1 and no subset reaches 0.6
    let batch: Vec<Unlabelled> = (0..50).map(|i| unlabelled(&format!("m{i}"), mutual_attack())).collect();
    let (corpus, _) = label_corpus(batch, &Limits::default());
    assert_eq!(corpus.rates().solvable, 1.0);
    let err = balance_corpus(
        corpus,
        BalanceTargets {
            overall: 0.5,
            solvable: 0.6,
            tolerance: 0.01,
        },
        0,
    )
    .unwrap_err();
    assert!(matches!(err, DatagenError::Unreachable { .. }));
}

#[test]
fn high_target_on_capped_pool_is_unreachable() {
    // one accepted assumption out of two (b is attacked by a fact)
    let half = RawAbaf::named(&["a", "b", "x", "y"])
        .assume("a", "x")
        .assume("b", "y")
        .rule("y", &[])
        .validate()
        .unwrap();
    let batch: Vec<Unlabelled> = (0..50).map(|i| unlabelled(&format!("h{i}"), half.clone())).collect();
    let (corpus, _) = label_corpus(batch, &Limits::default());
    assert_eq!(corpus.rates().overall, 0.5);
    let err = balance_corpus(
        corpus,
        BalanceTargets {
            overall: 0.99,
            solvable: 0.99,
            tolerance: 0.01,
        },
        0,
    )
    .unwrap_err();
    assert!(matches!(err, DatagenError::Unreachable { .. }));
}

fn split_counts(c: &Corpus, stratum: usize) -> [usize; 3] {
    let mut n = [0; 3];
    for i in c.instances.iter().filter(|i| i.stratum == stratum) {
        n[i.split as usize] += 1;
    }
    n
}

#[test]
fn single_stratum_splits_exactly() {
    let corpus = pool(100, (6, 10), 1);
    let cfg = SplitConfig {
        validation_fraction: 0.0,
        ..SplitConfig::default()
    };
    let split = split_corpus(corpus.clone(), &[0; 100], 1, cfg).unwrap();
    assert_eq!(split.split(Split::Test).count(), 25);
    assert_eq!(split.split(Split::Train).count(), 75);
    let split = split_corpus(corpus, &[0; 100], 1, SplitConfig::default()).unwrap();
    assert_eq!(split_counts(&split, 0), [60, 15, 25]);
}

#[test]
fn strata_are_split_separately() {
    let corpus = pool(90, (6, 10), 2);
    let strata: Vec<usize> = (0..90).map(|i| usize::from(i >= 17)).collect();
    let split = split_corpus(corpus.clone(), &strata, 2, SplitConfig::default()).unwrap();
    for (s, n) in [(0, 17.0), (1, 73.0)] {
        let c = split_counts(&split, s);
        assert!((c[2] as f64 - n * 0.25).abs() <= 1.0);
        assert_eq!(c.iter().sum::<usize>() as f64, n);
    }
    let again = split_corpus(corpus.clone(), &strata, 2, SplitConfig::default()).unwrap();
    let assign = |c: &Corpus| c.instances.iter().map(|i| i.split).collect::<Vec<_>>();
    assert_eq!(assign(&split), assign(&again));
    assert_eq!(
        split_corpus(corpus.clone(), &strata, 3, SplitConfig::default()).unwrap_err(),
        DatagenError::EmptyStratum(2)
    );
    assert!(matches!(
        split_corpus(corpus, &strata[1..], 2, SplitConfig::default()),
        Err(DatagenError::StrataMismatch { .. })
    ));
}

#[test]
fn batch_generation_is_reproducible() {
    let a = generate_batch(&base(11), (5, 30), 50).unwrap();
    let b = generate_batch(&base(11), (5, 30), 50).unwrap();
    assert!(a.iter().zip(&b).all(|(x, y)| x.abaf == y.abaf && x.name == y.name));
    assert!(a.iter().all(|u| (5..=30).contains(&u.abaf.num_atoms())));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn assumption_count_is_the_ceiling(n in 2usize..200, ratio in 0.01f64..0.99) {
        let p = GenParams { n_atoms: n, assumption_ratio: ratio, max_rules_per_head: 1, max_body_len: 2, seed: 0 };
        let k = p.num_assumptions();
        prop_assert!(k >= 1);
        prop_assert!(k as f64 >= n as f64 * ratio - 1e-6);
        prop_assert!((k as f64) < n as f64 * ratio + 1.0);
    }

    #[test]
    fn raw_roundtrip_preserves_frameworks(seed in any::<u64>()) {
        let f = generate_abaf(&GenParams { seed, ..base(0) }).unwrap();
        let raw: RawAbaf = f.to_raw();
        prop_assert_eq!(raw.validate().unwrap(), f);
    }
}
