use ndarray::Array2;

use crate::aba::{Abaf, AtomId};
use crate::depgraph::{
    build_dependency_graph, node_features, relation_adjacency, DepGraph, FeatureMatrix, NodeKind, Relation,
};

use super::Scalar;

/// In-neighbour lists of one relation, grouped by destination node.
#[derive(Debug, Clone)]
pub struct RelationEdges<T> {
    /// `(src, dst)` sorted by destination.
    pub edges: Vec<(usize, usize)>,
    /// `offsets[i]..offsets[i + 1]` are the edges entering node `i`.
    pub offsets: Vec<usize>,
    /// Symmetric GCN normalisation `1 / sqrt(in_deg(dst) * out_deg(src))` per edge.
    pub gcn_coef: Vec<T>,
}

impl<T: Scalar> RelationEdges<T> {
    fn new(num_nodes: usize, edges: Vec<(usize, usize)>, offsets: Vec<usize>) -> Self {
        let mut in_deg = vec![0usize; num_nodes];
        let mut out_deg = vec![0usize; num_nodes];
        for &(s, d) in &edges {
            out_deg[s] += 1;
            in_deg[d] += 1;
        }
        let gcn_coef = edges
            .iter()
            .map(|&(s, d)| T::of(1.0 / ((in_deg[d] * out_deg[s]) as f64).sqrt()))
            .collect();
        RelationEdges {
            edges,
            offsets,
            gcn_coef,
        }
    }

    pub fn incoming(&self, node: usize) -> std::ops::Range<usize> {
        self.offsets[node]..self.offsets[node + 1]
    }
}

/// Everything the network reads from one framework.
#[derive(Debug, Clone)]
pub struct GraphInput<T> {
    pub features: Array2<T>,
    /// Indexed by [`Relation::index`]; support carries self-loops.
    pub relations: [RelationEdges<T>; 3],
    pub kinds: Vec<NodeKind>,
    /// Atom ids of the assumption nodes, which occupy positions `0..len`.
    pub assumptions: Vec<AtomId>,
}

impl<T: Scalar> GraphInput<T> {
    pub fn from_abaf(abaf: &Abaf) -> Self {
        Self::from_graph(&build_dependency_graph(abaf))
    }

    pub fn from_graph(g: &DepGraph) -> Self {
        let n = g.num_nodes();
        let FeatureMatrix { rows } = node_features(g);
        let features = Array2::from_shape_fn((n, FeatureMatrix::WIDTH), |(i, j)| T::of(rows[i][j]));
        let relations = Relation::ALL.map(|rel| {
            let adj = relation_adjacency(g, rel, true);
            let offsets = adj.in_offsets();
            RelationEdges::new(n, adj.edges, offsets)
        });
        let kinds: Vec<NodeKind> = g.nodes().iter().map(|x| x.kind).collect();
        let assumptions = g
            .nodes()
            .iter()
            .filter(|x| x.kind == NodeKind::Assumption)
            .map(|x| x.source)
            .collect();
        GraphInput {
            features,
            relations,
            kinds,
            assumptions,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.kinds.len()
    }

    pub fn num_assumptions(&self) -> usize {
        self.assumptions.len()
    }
}
