use std::collections::BTreeSet;
use std::fs;

use abagnn::aba::{example_framework, Limits};
use abagnn::datagen::{generate_batch, label_corpus, split_corpus, GenParams, SplitConfig};
use abagnn::harness::{
    parse_iccma_aba, read_corpus, run_experiment, serialize_iccma_aba, write_corpus, ExperimentConfig, ParseError,
    PredictorKind, SemanticError,
};
use abagnn::kv::KvMap;
use abagnn::metrics::{extension_f1, node_metrics, set_f1, MetricsSummary, NodeMetrics};
use abagnn_testkit::seeded_framework;
use proptest::prelude::*;

fn tempdir(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("abagnn-harness-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    dir
}

#[test]
fn malformed_inputs_name_their_line() {
    let cases: &[(&str, usize)] = &[
        ("", 1),
        ("# only a comment\n", 1),
        ("a 1\np aba 2\n", 1),
        ("p aba 2\np aba 2\n", 2),
        ("p aba\n", 1),
        ("p abc 2\n", 1),
        ("p aba 2\na\n", 2),
        ("p aba 2\na 1 2\n", 2),
        ("p aba 2\nc 1\n", 2),
        ("p aba 2\nr\n", 2),
        ("p aba 2\nq 1\n", 2),
        ("p aba 2\na x\n", 2),
        ("p aba 2\n\n# c\na 1.5\n", 4),
        ("p aba 2\na 99999999999999999999999\n", 2),
    ];
    for (text, line) in cases {
        match parse_iccma_aba(text) {
            Err(ParseError::Syntax { line: l, .. }) => assert_eq!(l, *line, "{text:?}"),
            other => panic!("{text:?}: expected a syntax error, got {other:?}"),
        }
    }
}

#[test]
fn semantic_errors() {
    let cases: &[(&str, usize, SemanticError)] = &[
        ("p aba 2\na 0\n", 2, SemanticError::UndeclaredAtom(0)),
        ("p aba 2\na 1\nc 1 3\n", 3, SemanticError::UndeclaredAtom(3)),
        ("p aba 2\na 1\nc 1 2\nr 2 5\n", 4, SemanticError::UndeclaredAtom(5)),
        ("p aba 3\na 1\nc 1 2\nc 1 3\n", 4, SemanticError::DuplicateContrary(1)),
        ("p aba 2\na 1\nc 1 2\nr 1 2\n", 4, SemanticError::NotFlat(1)),
        (
            "p aba 2\na 1\nc 1 2\nc 2 1\n",
            4,
            SemanticError::ContraryOfNonAssumption(2),
        ),
        ("p aba 3\na 1\na 2\nc 1 3\n", 3, SemanticError::MissingContrary(2)),
        ("# x\np aba 2\nr 1 2\n", 2, SemanticError::EmptyAssumptionSet),
    ];
    for (text, line, error) in cases {
        assert_eq!(
            parse_iccma_aba(text).unwrap_err(),
            ParseError::Semantic {
                line: *line,
                error: error.clone()
            },
            "{text:?}"
        );
    }
}

#[test]
fn tolerant_whitespace_and_repeated_assumptions() {
    let f = parse_iccma_aba("  # lead\np  aba   3\n\ta 1\na 1\nc 1 2\n r 2 3 3\n").unwrap();
    assert_eq!(f.assumptions(), &[0]);
    assert_eq!(f.rules()[0].body, vec![2]);
    assert_eq!(serialize_iccma_aba(&f), "p aba 3\na 1\nc 1 2\nr 2 3\n");
}

#[test]
fn roundtrip_on_generated_frameworks() {
    let base = GenParams {
        n_atoms: 10,
        assumption_ratio: 0.3,
        max_rules_per_head: 3,
        max_body_len: 3,
        seed: 1,
    };
    for u in generate_batch(&base, (2, 60), 1000).unwrap() {
        let text = serialize_iccma_aba(&u.abaf);
        let back = parse_iccma_aba(&text).unwrap();
        assert_eq!(back, u.abaf);
        assert_eq!(serialize_iccma_aba(&back), text);
    }
}

#[test]
fn corpus_directory_roundtrip() {
    let base = GenParams {
        n_atoms: 10,
        assumption_ratio: 0.3,
        max_rules_per_head: 2,
        max_body_len: 3,
        seed: 4,
    };
    let (corpus, _) = label_corpus(generate_batch(&base, (5, 15), 30).unwrap(), &Limits::default());
    let strata: Vec<usize> = (0..corpus.len()).map(|i| i % 2).collect();
    let corpus = split_corpus(corpus, &strata, 2, SplitConfig::default()).unwrap();
    let dir = tempdir("corpus");
    write_corpus(&dir, &corpus).unwrap();
    let back = read_corpus(&dir).unwrap();
    assert_eq!(back.len(), corpus.len());
    for (a, b) in corpus.instances.iter().zip(&back.instances) {
        assert_eq!(a.name, b.name);
        assert!(a.abaf.structurally_eq(&b.abaf));
        assert_eq!(a.result.extensions, b.result.extensions);
        assert_eq!((a.stratum, a.split), (b.stratum, b.split));
    }
    // tampering with labels is caught by the digest
    let first = &corpus.instances[0].name;
    fs::write(dir.join("instances").join(format!("{first}.ext")), "ext 1 2 3\n").unwrap();
    assert!(read_corpus(&dir).is_err());
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn micro_metrics_pool_counts() {
    let preds = [vec![true, false, true], vec![false, false], vec![true]];
    let truth = [vec![true, true, false], vec![false, true], vec![true]];
    let per: Vec<NodeMetrics> = preds
        .iter()
        .zip(&truth)
        .map(|(p, t)| node_metrics(p, t).unwrap())
        .collect();
    let summary = MetricsSummary::from_instances(&per);
    let pooled: Vec<bool> = preds.concat();
    let gold: Vec<bool> = truth.concat();
    assert_eq!(summary.micro, node_metrics(&pooled, &gold).unwrap());
    assert_eq!(summary.micro.tp, 2);
    assert_eq!(summary.micro.fn_, 2);
    assert!((summary.micro.f1() - 4.0 / 7.0).abs() < 1e-12);
    assert!(node_metrics(&[true], &[]).is_err());
}

#[test]
fn extension_f1_on_example() {
    let f = example_framework();
    let gold: Vec<BTreeSet<usize>> = ["b c", "a b d"]
        .iter()
        .map(|s| s.split(' ').map(|n| f.atom_by_name(n).unwrap()).collect())
        .collect();
    let set = |names: &[&str]| {
        names
            .iter()
            .map(|n| f.atom_by_name(n).unwrap())
            .collect::<BTreeSet<_>>()
    };
    assert_eq!(extension_f1(&set(&["b", "c"]), &gold), 1.0);
    assert_eq!(extension_f1(&set(&["a", "b", "d"]), &gold), 1.0);
    assert!((extension_f1(&set(&["b"]), &gold) - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(extension_f1(&set(&[]), &gold), 0.0);
    assert_eq!(extension_f1(&BTreeSet::<usize>::new(), &[]), 1.0);
    assert_eq!(extension_f1(&set(&["a"]), &[]), 0.0);
}

fn tiny_experiment(seed: u64) -> ExperimentConfig {
    let text = format!(
        "seed = {seed}\ncount = 60\nmin_atoms = 6\nmax_atoms = 30\nmodel.epochs = 3\nmodel.blocks = 1\nmodel.hidden_dim = 8\nmodel.embed_dim = 4\n"
    );
    ExperimentConfig::from_kv(&KvMap::parse(&text).unwrap()).unwrap()
}

#[test]
fn experiment_runs_end_to_end_and_repeats() {
    let (d1, d2) = (tempdir("exp1"), tempdir("exp2"));
    let cfg = tiny_experiment(3);
    let r1 = run_experiment(&cfg, &d1).unwrap();
    run_experiment(&cfg, &d2).unwrap();
    for file in [
        "report.txt",
        "node_metrics.tsv",
        "extension_f1.tsv",
        "train_curve.tsv",
        "model.ckpt",
    ] {
        let a = fs::read(d1.join(file)).unwrap();
        assert_eq!(a, fs::read(d2.join(file)).unwrap(), "{file} differs");
    }
    let report = fs::read_to_string(d1.join("report.txt")).unwrap();
    assert!(report.contains("status = complete"));
    for name in ["gnn", "degree", "majority"] {
        assert!(r1.node_metrics(name).is_some(), "missing {name}");
    }
    assert!(!r1.buckets.is_empty());
    assert_eq!(
        r1.split_sizes.iter().sum::<usize>(),
        r1.label.as_ref().unwrap().labelled
    );
    for d in [d1, d2] {
        fs::remove_dir_all(d).unwrap();
    }
}

#[test]
fn oracle_experiment_reconstructs_stable_sets() {
    let dir = tempdir("oracle");
    let mut cfg = tiny_experiment(5);
    cfg.predictor = PredictorKind::Oracle;
    let r = run_experiment(&cfg, &dir).unwrap();
    assert_eq!(r.node_metrics("oracle").unwrap().micro.f1(), 1.0);
    for b in &r.buckets {
        assert_eq!(b.stable, b.solvable, "bucket {}", b.label);
    }
    fs::remove_dir_all(dir).unwrap();
}

#[test]
fn missing_corpus_fails_in_load_phase() {
    let dir = tempdir("missing");
    let mut cfg = tiny_experiment(1);
    cfg.corpus = Some(dir.join("does-not-exist"));
    let err = run_experiment(&cfg, &dir).unwrap_err();
    assert_eq!(err.phase, "load");
    let report = fs::read_to_string(dir.join("report.txt")).unwrap();
    assert!(report.contains("status = partial"));
    assert!(report.contains("failed_phase = load"));
    fs::remove_dir_all(dir).unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn parser_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..200)) {
        let text = String::from_utf8_lossy(&bytes);
        let n_lines = text.lines().count().max(1);
        match parse_iccma_aba(&text) {
            Ok(_) => {}
            Err(ParseError::Syntax { line, .. }) | Err(ParseError::Semantic { line, .. }) => {
                prop_assert!(line >= 1 && line <= n_lines);
            }
        }
    }

    #[test]
    fn mutated_files_never_panic(seed in any::<u64>(), cut in any::<usize>(), junk in "[ a-z0-9#\n-]{0,12}") {
        let text = serialize_iccma_aba(&seeded_framework(seed, 15, 6));
        let at = cut % (text.len() + 1);
        let mutated = format!("{}{}{}", &text[..at], junk, &text[at..]);
        let n_lines = mutated.lines().count().max(1);
        if let Err(ParseError::Syntax { line, .. } | ParseError::Semantic { line, .. }) = parse_iccma_aba(&mutated) {
            prop_assert!(line >= 1 && line <= n_lines);
        }
    }

    #[test]
    fn serialization_is_canonical(seed in any::<u64>()) {
        let f = seeded_framework(seed, 25, 10);
        let text = serialize_iccma_aba(&f);
        let back = parse_iccma_aba(&text).unwrap();
        prop_assert!(back.structurally_eq(&f));
        prop_assert_eq!(serialize_iccma_aba(&back), text);
    }

    #[test]
    fn f1_is_a_unit_interval_score(p in proptest::collection::btree_set(0usize..8, 0..8),
                                   g in proptest::collection::vec(proptest::collection::btree_set(0usize..8, 0..8), 0..4)) {
        let s = extension_f1(&p, &g);
        prop_assert!((0.0..=1.0).contains(&s));
        let exact = g.contains(&p) || (g.is_empty() && p.is_empty());
        prop_assert_eq!(s == 1.0, exact);
        prop_assert_eq!(set_f1(&p, &p), 1.0);
    }

    #[test]
    fn micro_equals_summed_counts(rows in proptest::collection::vec(proptest::collection::vec((any::<bool>(), any::<bool>()), 0..10), 1..10)) {
        let per: Vec<NodeMetrics> = rows
            .iter()
            .map(|r| {
                let (p, t): (Vec<bool>, Vec<bool>) = r.iter().copied().unzip();
                node_metrics(&p, &t).unwrap()
            })
            .collect();
        let (p, t): (Vec<bool>, Vec<bool>) = rows.concat().into_iter().unzip();
        let pooled = node_metrics(&p, &t).unwrap();
        let summary = MetricsSummary::from_instances(&per);
        prop_assert_eq!(summary.micro, pooled);
        for m in per.iter().chain([&pooled]) {
            for v in [m.precision(), m.recall(), m.f1(), m.accuracy()] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
