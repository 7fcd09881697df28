//! Dependency-graph encoding of a framework: atom and rule nodes with support
//! (body atom to rule), derive (rule to head) and attack (contrary to
//! assumption) edges. The encoding is injective, so the framework can be
//! recovered from it.

use std::fmt::Write as _;

use thiserror::Error;

use crate::aba::{Abaf, Atom, AtomId, Rule, RuleId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    Assumption,
    Claim,
    Rule,
}

impl NodeKind {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn code(self) -> char {
        match self {
            NodeKind::Assumption => 'a',
            NodeKind::Claim => 'c',
            NodeKind::Rule => 'r',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Relation {
    Support,
    Derive,
    Attack,
}

impl Relation {
    pub const ALL: [Relation; 3] = [Relation::Support, Relation::Derive, Relation::Attack];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn symbol(self) -> char {
        match self {
            Relation::Support => '+',
            Relation::Derive => '>',
            Relation::Attack => '-',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepNode {
    pub id: usize,
    pub kind: NodeKind,
    /// Atom id for atom nodes, rule id for rule nodes.
    pub source: usize,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DepEdge {
    pub src: usize,
    pub dst: usize,
    pub label: Relation,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("malformed dependency graph: {0}")]
    MalformedGraph(String),
}

/// Directed edge-labelled graph with nodes in canonical order: assumptions,
/// then claims, then rules, each ascending by id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepGraph {
    nodes: Vec<DepNode>,
    edges: Vec<DepEdge>,
    atom_node: Vec<usize>,
    rule_node: Vec<usize>,
}

pub fn build_dependency_graph(abaf: &Abaf) -> DepGraph {
    let mut nodes = Vec::with_capacity(abaf.num_atoms() + abaf.rules().len());
    let mut atom_node = vec![usize::MAX; abaf.num_atoms()];
    let mut rule_node = vec![usize::MAX; abaf.rules().len()];
    let assumptions = abaf.atoms().iter().filter(|a| a.is_assumption);
    let claims = abaf.atoms().iter().filter(|a| !a.is_assumption);
    for atom in assumptions.chain(claims) {
        let id = nodes.len();
        atom_node[atom.id] = id;
        nodes.push(DepNode {
            id,
            kind: if atom.is_assumption {
                NodeKind::Assumption
            } else {
                NodeKind::Claim
            },
            source: atom.id,
            label: atom.name.clone(),
        });
    }
    for rule in abaf.rules() {
        let id = nodes.len();
        rule_node[rule.id] = id;
        nodes.push(DepNode {
            id,
            kind: NodeKind::Rule,
            source: rule.id,
            label: format!("r{}", rule.id + 1),
        });
    }
    let mut edges = Vec::new();
    for rule in abaf.rules() {
        let r = rule_node[rule.id];
        for &b in &rule.body {
            edges.push(DepEdge {
                src: atom_node[b],
                dst: r,
                label: Relation::Support,
            });
        }
        edges.push(DepEdge {
            src: r,
            dst: atom_node[rule.head],
            label: Relation::Derive,
        });
    }
    for &a in abaf.assumptions() {
        let c = abaf.contrary(a).expect("assumption has a contrary");
        edges.push(DepEdge {
            src: atom_node[c],
            dst: atom_node[a],
            label: Relation::Attack,
        });
    }
    edges.sort();
    DepGraph {
        nodes,
        edges,
        atom_node,
        rule_node,
    }
}

impl DepGraph {
    /// Assembles a graph from explicit nodes and edges. Nodes must already be
    /// in canonical order; no further checks happen until [`recover_abaf`].
    pub fn from_parts(nodes: Vec<DepNode>, mut edges: Vec<DepEdge>) -> DepGraph {
        let atoms = nodes.iter().filter(|n| n.kind != NodeKind::Rule);
        let num_atoms = atoms.clone().map(|n| n.source + 1).max().unwrap_or(0);
        let mut atom_node = vec![usize::MAX; num_atoms];
        for n in atoms {
            atom_node[n.source] = n.id;
        }
        let rules = nodes.iter().filter(|n| n.kind == NodeKind::Rule);
        let num_rules = rules.clone().map(|n| n.source + 1).max().unwrap_or(0);
        let mut rule_node = vec![usize::MAX; num_rules];
        for n in rules {
            rule_node[n.source] = n.id;
        }
        edges.sort();
        DepGraph {
            nodes,
            edges,
            atom_node,
            rule_node,
        }
    }

    pub fn nodes(&self) -> &[DepNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[DepEdge] {
        &self.edges
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_of_atom(&self, atom: AtomId) -> usize {
        self.atom_node[atom]
    }

    pub fn node_of_rule(&self, rule: RuleId) -> usize {
        self.rule_node[rule]
    }

    pub fn count(&self, relation: Relation) -> usize {
        self.edges.iter().filter(|e| e.label == relation).count()
    }

    pub fn count_kind(&self, kind: NodeKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }

    /// Node ids of assumption nodes; they occupy the leading positions.
    pub fn assumption_nodes(&self) -> std::ops::Range<usize> {
        0..self.count_kind(NodeKind::Assumption)
    }

    /// Line-oriented export: `n <count>`, one `k <node> <kind>` per node, then
    /// one `<src> <dst> <label>` per edge with label in `+`, `>`, `-`.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        writeln!(out, "n {}", self.nodes.len()).unwrap();
        for n in &self.nodes {
            writeln!(out, "k {} {}", n.id, n.kind.code()).unwrap();
        }
        for e in &self.edges {
            writeln!(out, "{} {} {}", e.src, e.dst, e.label.symbol()).unwrap();
        }
        out
    }
}

/// Recovers the unique framework whose dependency graph is `g`.
pub fn recover_abaf(g: &DepGraph) -> Result<Abaf, GraphError> {
    let bad = |msg: String| Err(GraphError::MalformedGraph(msg));
    let n = g.nodes.len();
    for (i, node) in g.nodes.iter().enumerate() {
        if node.id != i {
            return bad(format!("node at position {i} has id {}", node.id));
        }
    }
    let mut atom_nodes: Vec<&DepNode> = g.nodes.iter().filter(|x| x.kind != NodeKind::Rule).collect();
    atom_nodes.sort_by_key(|x| x.source);
    if atom_nodes.iter().enumerate().any(|(i, x)| x.source != i) {
        return bad("atom ids are not dense".into());
    }
    let mut rule_nodes: Vec<&DepNode> = g.nodes.iter().filter(|x| x.kind == NodeKind::Rule).collect();
    rule_nodes.sort_by_key(|x| x.source);
    if rule_nodes.iter().enumerate().any(|(i, x)| x.source != i) {
        return bad("rule ids are not dense".into());
    }

    let mut contrary: Vec<Option<AtomId>> = vec![None; atom_nodes.len()];
    let mut bodies: Vec<Vec<AtomId>> = vec![Vec::new(); rule_nodes.len()];
    let mut heads: Vec<Option<AtomId>> = vec![None; rule_nodes.len()];
    for e in &g.edges {
        if e.src >= n || e.dst >= n {
            return bad(format!("edge {} -> {} leaves the node range", e.src, e.dst));
        }
        let (s, d) = (&g.nodes[e.src], &g.nodes[e.dst]);
        match (e.label, s.kind, d.kind) {
            (Relation::Support, NodeKind::Assumption | NodeKind::Claim, NodeKind::Rule) => {
                bodies[d.source].push(s.source);
            }
            (Relation::Derive, NodeKind::Rule, NodeKind::Claim) => {
                if heads[s.source].replace(d.source).is_some() {
                    return bad(format!("rule node {} has several derive edges", s.id));
                }
            }
            (Relation::Derive, NodeKind::Rule, NodeKind::Assumption) => {
                return bad(format!("rule node {} derives an assumption", s.id));
            }
            (Relation::Attack, NodeKind::Assumption | NodeKind::Claim, NodeKind::Assumption) => {
                if contrary[d.source].replace(s.source).is_some() {
                    return bad(format!("assumption node {} has several attack edges", d.id));
                }
            }
            (label, sk, dk) => {
                return bad(format!(
                    "edge {} -> {} labelled {:?} joins {:?} to {:?}",
                    e.src, e.dst, label, sk, dk
                ));
            }
        }
    }

    let atoms: Vec<Atom> = atom_nodes
        .iter()
        .map(|x| Atom {
            id: x.source,
            name: x.label.clone(),
            is_assumption: x.kind == NodeKind::Assumption,
            dummy: false,
        })
        .collect();
    for a in atoms.iter().filter(|a| a.is_assumption) {
        if contrary[a.id].is_none() {
            return bad(format!("assumption {} has no attack edge", a.name));
        }
    }
    let mut rules = Vec::with_capacity(rule_nodes.len());
    for (id, mut body) in bodies.into_iter().enumerate() {
        let Some(head) = heads[id] else {
            return bad(format!("rule {id} has no derive edge"));
        };
        body.sort_unstable();
        let before = body.len();
        body.dedup();
        if body.len() != before {
            return bad(format!("rule {id} has parallel support edges"));
        }
        rules.push(Rule { id, head, body });
    }
    Ok(Abaf::from_parts(atoms, rules, contrary))
}

/// Per-node input features: in-degree, out-degree, one-hot node kind.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Vec<[f64; FeatureMatrix::WIDTH]>,
}

impl FeatureMatrix {
    pub const WIDTH: usize = 5;
}

pub fn node_features(g: &DepGraph) -> FeatureMatrix {
    let mut rows = vec![[0.0; FeatureMatrix::WIDTH]; g.num_nodes()];
    for e in &g.edges {
        rows[e.dst][0] += 1.0;
        rows[e.src][1] += 1.0;
    }
    for (row, node) in rows.iter_mut().zip(&g.nodes) {
        row[2 + node.kind.index()] = 1.0;
    }
    FeatureMatrix { rows }
}

/// 0/1 adjacency of one relation as a sorted `(src, dst)` edge list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    pub num_nodes: usize,
    /// Sorted by destination, then source.
    pub edges: Vec<(usize, usize)>,
}

impl Adjacency {
    pub fn nnz(&self) -> usize {
        self.edges.len()
    }

    /// `offsets[i]..offsets[i+1]` indexes the edges entering node `i`.
    pub fn in_offsets(&self) -> Vec<usize> {
        let mut offsets = vec![0; self.num_nodes + 1];
        for &(_, dst) in &self.edges {
            offsets[dst + 1] += 1;
        }
        for i in 0..self.num_nodes {
            offsets[i + 1] += offsets[i];
        }
        offsets
    }

    /// Dense row-major matrix with `m[dst][src] = 1`.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.num_nodes]; self.num_nodes];
        for &(s, d) in &self.edges {
            m[d][s] = 1.0;
        }
        m
    }
}

/// Adjacency of `relation`. Self-loops are added only for the support
/// relation, and only for feature propagation.
pub fn relation_adjacency(g: &DepGraph, relation: Relation, with_self_loops: bool) -> Adjacency {
    let mut edges: Vec<(usize, usize)> = g
        .edges
        .iter()
        .filter(|e| e.label == relation)
        .map(|e| (e.src, e.dst))
        .collect();
    if with_self_loops && relation == Relation::Support {
        edges.extend((0..g.num_nodes()).map(|i| (i, i)));
    }
    edges.sort_by_key(|&(s, d)| (d, s));
    edges.dedup();
    Adjacency {
        num_nodes: g.num_nodes(),
        edges,
    }
}
