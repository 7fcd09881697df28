use abagnn::aba::{example_framework, Abaf};
use abagnn::depgraph::{build_dependency_graph, node_features, recover_abaf, relation_adjacency, NodeKind, Relation};
use abagnn_testkit::seeded_framework;
use proptest::prelude::*;

#[test]
fn example_graph_has_thirteen_nodes_and_fourteen_edges() {
    let g = build_dependency_graph(&example_framework());
    assert_eq!(g.num_nodes(), 13);
    assert_eq!(g.edges().len(), 14);
    let counts: Vec<usize> = Relation::ALL.iter().map(|&r| g.count(r)).collect();
    assert_eq!(counts, vec![6, 4, 4]);
    assert_eq!(g.count_kind(NodeKind::Assumption), 4);
    assert_eq!(g.count_kind(NodeKind::Claim), 5);
    assert_eq!(g.count_kind(NodeKind::Rule), 4);
}

#[test]
fn example_edge_list_by_hand() {
    let f = example_framework();
    let g = build_dependency_graph(&f);
    let atom = |n: &str| g.node_of_atom(f.atom_by_name(n).unwrap());
    let has = |s: usize, d: usize, l: Relation| g.edges().iter().any(|e| e.src == s && e.dst == d && e.label == l);
    // r0: c~ <- a, d
    let r0 = g.node_of_rule(0);
    assert!(has(atom("a"), r0, Relation::Support));
    assert!(has(atom("d"), r0, Relation::Support));
    assert!(has(r0, atom("c~"), Relation::Derive));
    assert!(has(atom("c~"), atom("c"), Relation::Attack));
    assert!(!has(atom("c"), atom("c~"), Relation::Attack));
}

fn framework() -> impl Strategy<Value = Abaf> {
    (any::<u64>(), 1usize..=30, 1usize..=15).prop_map(|(seed, n, k)| seeded_framework(seed, n, k))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn recovery_inverts_encoding(f in framework()) {
        let g = build_dependency_graph(&f);
        prop_assert_eq!(recover_abaf(&g).unwrap(), f);
    }

    #[test]
    fn edge_count_formula(f in framework()) {
        let g = build_dependency_graph(&f);
        let body: usize = f.rules().iter().map(|r| r.body.len()).sum();
        prop_assert_eq!(g.edges().len(), body + f.rules().len() + f.assumptions().len());
        prop_assert_eq!(g.num_nodes(), f.num_atoms() + f.rules().len());
    }

    #[test]
    fn every_assumption_has_one_attacker(f in framework()) {
        let g = build_dependency_graph(&f);
        for &a in f.assumptions() {
            let node = g.node_of_atom(a);
            let attackers: Vec<usize> = g
                .edges()
                .iter()
                .filter(|e| e.dst == node && e.label == Relation::Attack)
                .map(|e| e.src)
                .collect();
            prop_assert_eq!(attackers, vec![g.node_of_atom(f.contrary(a).unwrap())]);
        }
    }

    #[test]
    fn canonical_order_and_kinds(f in framework()) {
        let g = build_dependency_graph(&f);
        let kinds: Vec<NodeKind> = g.nodes().iter().map(|n| n.kind).collect();
        let mut sorted = kinds.clone();
        sorted.sort();
        prop_assert_eq!(&kinds, &sorted);
        for n in g.nodes() {
            match n.kind {
                NodeKind::Assumption => prop_assert!(f.is_assumption(n.source)),
                NodeKind::Claim => prop_assert!(!f.is_assumption(n.source)),
                NodeKind::Rule => prop_assert!(n.source < f.rules().len()),
            }
        }
    }

    #[test]
    fn self_loops_do_not_touch_the_graph(f in framework()) {
        let g = build_dependency_graph(&f);
        let before = g.clone();
        let with = relation_adjacency(&g, Relation::Support, true);
        let without = relation_adjacency(&g, Relation::Support, false);
        prop_assert_eq!(with.nnz(), without.nnz() + g.num_nodes());
        prop_assert_eq!(&g, &before);
        prop_assert_eq!(recover_abaf(&g).unwrap(), f);
    }

    #[test]
    fn features_are_degrees_and_kind(f in framework()) {
        let g = build_dependency_graph(&f);
        let x = node_features(&g);
        prop_assert_eq!(x.rows.len(), g.num_nodes());
        for (i, row) in x.rows.iter().enumerate() {
            prop_assert!(row.iter().all(|&v| v >= 0.0));
            let ind = g.edges().iter().filter(|e| e.dst == i).count() as f64;
            let outd = g.edges().iter().filter(|e| e.src == i).count() as f64;
            prop_assert_eq!(row[0], ind);
            prop_assert_eq!(row[1], outd);
            prop_assert_eq!(row[2..].iter().sum::<f64>(), 1.0);
            prop_assert_eq!(row[2 + g.nodes()[i].kind.index()], 1.0);
        }
    }
}
