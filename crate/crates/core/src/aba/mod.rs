//! Flat assumption-based argumentation frameworks and their stable semantics.
//!
//! A framework is validated once from a [`RawAbaf`] and is immutable afterwards.
//! Derivability is computed as a forward-chaining closure, which coincides with
//! tree-derivability for flat frameworks.

mod closure;
mod sets;
mod stable;

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

pub use closure::{derive_closure, Deriver};
pub use sets::{AssumptionSet, AtomSet};
pub use stable::{stable_extensions, Limits, StableResult, Status, Strategy};

pub type AtomId = usize;
pub type RuleId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    pub id: AtomId,
    pub name: String,
    pub is_assumption: bool,
    /// Set for assumptions injected by the reconstruction procedure.
    pub dummy: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Rule {
    pub id: RuleId,
    pub head: AtomId,
    /// Sorted, duplicate free.
    pub body: Vec<AtomId>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AbaError {
    #[error("rule {rule} derives assumption {head}; only flat frameworks are supported")]
    NotFlat { rule: RuleId, head: AtomId },
    #[error("assumption {0} has no contrary")]
    MissingContrary(AtomId),
    #[error("atom index {0} is not declared")]
    UnknownAtom(usize),
    #[error("the framework declares no assumptions")]
    EmptyAssumptionSet,
    #[error("atom name {0:?} is declared twice")]
    DuplicateName(String),
    #[error("assumption {0} has more than one contrary")]
    DuplicateContrary(AtomId),
    #[error("contrary declared for non-assumption atom {0}")]
    ContraryOfNonAssumption(AtomId),
    #[error("{count} assumptions exceed the enumeration cap of {cap}")]
    CapExceeded { count: usize, cap: usize },
}

/// Unvalidated description of a framework, indexed by atom position.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawAbaf {
    pub atoms: Vec<String>,
    pub assumptions: Vec<usize>,
    pub contraries: Vec<(usize, usize)>,
    pub rules: Vec<(usize, Vec<usize>)>,
}

impl RawAbaf {
    /// Framework with atoms named `1..=n`, the convention of the ICCMA format.
    pub fn with_numbered_atoms(n: usize) -> Self {
        RawAbaf {
            atoms: (1..=n).map(|i| i.to_string()).collect(),
            ..Default::default()
        }
    }

    /// Starts a framework from named atoms; handy for hand-written examples.
    pub fn named<S: AsRef<str>>(names: &[S]) -> Self {
        RawAbaf {
            atoms: names.iter().map(|s| s.as_ref().to_string()).collect(),
            ..Default::default()
        }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.atoms.iter().position(|a| a == name)
    }

    fn idx(&self, name: &str) -> usize {
        self.index_of(name)
            .unwrap_or_else(|| panic!("unknown atom name {name:?}"))
    }

    /// Declares `assumption` with contrary `contrary`, both by name. Panics on unknown names.
    pub fn assume(mut self, assumption: &str, contrary: &str) -> Self {
        let (a, c) = (self.idx(assumption), self.idx(contrary));
        self.assumptions.push(a);
        self.contraries.push((a, c));
        self
    }

    /// Adds `head <- body`, by name. Panics on unknown names.
    pub fn rule(mut self, head: &str, body: &[&str]) -> Self {
        let h = self.idx(head);
        let b = body.iter().map(|n| self.idx(n)).collect();
        self.rules.push((h, b));
        self
    }

    pub fn validate(&self) -> Result<Abaf, AbaError> {
        validate(self)
    }
}

/// A flat, finite ABA framework.
#[derive(Debug, Clone)]
pub struct Abaf {
    atoms: Vec<Atom>,
    rules: Vec<Rule>,
    assumptions: Vec<AtomId>,
    contrary: Vec<Option<AtomId>>,
    /// For every atom, the rules whose body mentions it.
    occurs: Vec<Vec<RuleId>>,
    names: HashMap<String, AtomId>,
}

pub fn validate(raw: &RawAbaf) -> Result<Abaf, AbaError> {
    let n = raw.atoms.len();
    let mut names = HashMap::with_capacity(n);
    for (i, name) in raw.atoms.iter().enumerate() {
        if names.insert(name.clone(), i).is_some() {
            return Err(AbaError::DuplicateName(name.clone()));
        }
    }
    let mut is_assumption = vec![false; n];
    for &a in &raw.assumptions {
        if a >= n {
            return Err(AbaError::UnknownAtom(a));
        }
        is_assumption[a] = true;
    }
    if !is_assumption.iter().any(|&x| x) {
        return Err(AbaError::EmptyAssumptionSet);
    }
    let mut contrary = vec![None; n];
    for &(a, c) in &raw.contraries {
        if a >= n {
            return Err(AbaError::UnknownAtom(a));
        }
        if c >= n {
            return Err(AbaError::UnknownAtom(c));
        }
        if !is_assumption[a] {
            return Err(AbaError::ContraryOfNonAssumption(a));
        }
        if contrary[a].replace(c).is_some() {
            return Err(AbaError::DuplicateContrary(a));
        }
    }
    if let Some(a) = (0..n).find(|&a| is_assumption[a] && contrary[a].is_none()) {
        return Err(AbaError::MissingContrary(a));
    }
    let mut rules = Vec::with_capacity(raw.rules.len());
    for (id, (head, body)) in raw.rules.iter().enumerate() {
        if let Some(&bad) = std::iter::once(head).chain(body).find(|&&x| x >= n) {
            return Err(AbaError::UnknownAtom(bad));
        }
        if is_assumption[*head] {
            return Err(AbaError::NotFlat { rule: id, head: *head });
        }
        let mut body = body.clone();
        body.sort_unstable();
        body.dedup();
        rules.push(Rule { id, head: *head, body });
    }
    let atoms = raw
        .atoms
        .iter()
        .enumerate()
        .map(|(id, name)| Atom {
            id,
            name: name.clone(),
            is_assumption: is_assumption[id],
            dummy: false,
        })
        .collect();
    Ok(Abaf::from_parts(atoms, rules, contrary))
}

impl Abaf {
    /// Assembles a framework from parts that already satisfy the invariants,
    /// except that the assumption set may be empty.
    pub(crate) fn from_parts(atoms: Vec<Atom>, rules: Vec<Rule>, contrary: Vec<Option<AtomId>>) -> Abaf {
        debug_assert!(rules.iter().enumerate().all(|(i, r)| r.id == i));
        debug_assert!(rules.iter().all(|r| !atoms[r.head].is_assumption));
        let assumptions = atoms.iter().filter(|a| a.is_assumption).map(|a| a.id).collect();
        let mut occurs = vec![Vec::new(); atoms.len()];
        for r in &rules {
            for &b in &r.body {
                occurs[b].push(r.id);
            }
        }
        let names = atoms.iter().map(|a| (a.name.clone(), a.id)).collect();
        Abaf {
            atoms,
            rules,
            assumptions,
            contrary,
            occurs,
            names,
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom(&self, id: AtomId) -> &Atom {
        &self.atoms[id]
    }

    pub fn num_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    /// Assumption atom ids in ascending order.
    pub fn assumptions(&self) -> &[AtomId] {
        &self.assumptions
    }

    pub fn is_assumption(&self, id: AtomId) -> bool {
        self.atoms[id].is_assumption
    }

    /// Contrary of an assumption; `None` for non-assumptions.
    pub fn contrary(&self, a: AtomId) -> Option<AtomId> {
        self.contrary[a]
    }

    pub(crate) fn contrary_table(&self) -> &[Option<AtomId>] {
        &self.contrary
    }

    pub(crate) fn occurrences(&self, atom: AtomId) -> &[RuleId] {
        &self.occurs[atom]
    }

    pub fn atom_by_name(&self, name: &str) -> Option<AtomId> {
        self.names.get(name).copied()
    }

    /// Claims are the non-assumption atoms.
    pub fn claims(&self) -> impl Iterator<Item = AtomId> + '_ {
        self.atoms.iter().filter(|a| !a.is_assumption).map(|a| a.id)
    }

    pub fn has_dummies(&self) -> bool {
        self.atoms.iter().any(|a| a.dummy)
    }

    pub fn empty_set(&self) -> AssumptionSet {
        AssumptionSet::empty(self.num_atoms())
    }

    pub fn full_set(&self) -> AssumptionSet {
        AssumptionSet::from_ids(self.num_atoms(), self.assumptions.iter().copied())
    }

    /// Builds a set from assumption names. Panics on names that are not assumptions.
    pub fn set_of(&self, names: &[&str]) -> AssumptionSet {
        let ids = names.iter().map(|n| {
            let id = self.atom_by_name(n).unwrap_or_else(|| panic!("unknown atom {n:?}"));
            assert!(self.is_assumption(id), "{n:?} is not an assumption");
            id
        });
        AssumptionSet::from_ids(self.num_atoms(), ids)
    }

    /// Sorted atom names of a set.
    pub fn names_of(&self, set: &AssumptionSet) -> Vec<String> {
        let mut v: Vec<String> = set.iter().map(|a| self.atoms[a].name.clone()).collect();
        v.sort();
        v
    }

    /// `s` attacks `t` iff the closure of `s` contains the contrary of some member of `t`.
    pub fn attacks(&self, s: &AssumptionSet, t: &AssumptionSet) -> bool {
        let closure = derive_closure(self, s);
        t.iter().any(|a| self.contrary[a].is_some_and(|c| closure.contains(c)))
    }

    pub fn is_conflict_free(&self, s: &AssumptionSet) -> bool {
        !self.attacks(s, s)
    }

    /// Conflict free and attacking every assumption outside `s`.
    pub fn is_stable(&self, s: &AssumptionSet) -> bool {
        let closure = derive_closure(self, s);
        self.assumptions.iter().all(|&a| {
            let attacked = self.contrary[a].is_some_and(|c| closure.contains(c));
            attacked != s.contains(a)
        })
    }

    /// Equality of everything except atom names (and the dummy markers).
    pub fn structurally_eq(&self, other: &Abaf) -> bool {
        self.num_atoms() == other.num_atoms()
            && self.assumptions == other.assumptions
            && self.contrary == other.contrary
            && self.rules == other.rules
    }

    /// Size measure used for polynomial-cost arguments: `|L| + sum |body|`.
    pub fn size(&self) -> usize {
        self.atoms.len() + self.rules.iter().map(|r| r.body.len() + 1).sum::<usize>()
    }

    /// Unvalidated copy of the framework.
    pub fn to_raw(&self) -> RawAbaf {
        RawAbaf {
            atoms: self.atoms.iter().map(|a| a.name.clone()).collect(),
            assumptions: self.assumptions.clone(),
            contraries: self
                .assumptions
                .iter()
                .map(|&a| (a, self.contrary[a].expect("assumption without contrary")))
                .collect(),
            rules: self.rules.iter().map(|r| (r.head, r.body.clone())).collect(),
        }
    }
}

impl PartialEq for Abaf {
    fn eq(&self, other: &Self) -> bool {
        self.atoms == other.atoms && self.rules == other.rules && self.contrary == other.contrary
    }
}

impl Eq for Abaf {}

impl fmt::Display for Abaf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = |i: AtomId| self.atoms[i].name.as_str();
        let asm: Vec<&str> = self.assumptions.iter().map(|&a| name(a)).collect();
        writeln!(f, "assumptions: {{{}}}", asm.join(", "))?;
        for &a in &self.assumptions {
            if let Some(c) = self.contrary[a] {
                writeln!(f, "contrary({}) = {}", name(a), name(c))?;
            }
        }
        for r in &self.rules {
            let body: Vec<&str> = r.body.iter().map(|&b| name(b)).collect();
            writeln!(f, "r{}: {} <- {}", r.id, name(r.head), body.join(", "))?;
        }
        Ok(())
    }
}

/// The running example: four assumptions, four rules, two stable extensions.
pub fn example_framework() -> Abaf {
    RawAbaf::named(&["a", "b", "c", "d", "p", "a~", "b~", "c~", "d~"])
        .assume("a", "a~")
        .assume("b", "b~")
        .assume("c", "c~")
        .assume("d", "d~")
        .rule("c~", &["a", "d"])
        .rule("p", &["b"])
        .rule("d~", &["c"])
        .rule("a~", &["p", "c"])
        .validate()
        .expect("example framework is valid")
}
