use std::collections::{BTreeMap, HashSet};

use thiserror::Error;

use crate::aba::{Abaf, Atom, AtomId, Rule, RuleId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModifyError {
    #[error("atom {0} is not an assumption of the framework")]
    NotAnAssumption(AtomId),
}

/// Where a dummy assumption came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DummySource {
    /// A rule of the input framework deriving the contrary of the chosen assumption.
    Rule(RuleId),
    /// The contrary of the chosen assumption is itself an assumption.
    ContraryAssumption(AtomId),
}

#[derive(Debug, Clone)]
pub struct ModifyOutcome {
    pub modified: Abaf,
    pub dummies: BTreeMap<DummySource, AtomId>,
    /// Original assumptions removed because they are attacked once `a_star` is accepted.
    pub rejected: Vec<AtomId>,
    pub conflicting: bool,
}

struct Work {
    atoms: Vec<Atom>,
    contrary: Vec<Option<AtomId>>,
    rules: Vec<Option<(AtomId, Vec<AtomId>)>>,
    names: HashSet<String>,
    rejected: Vec<AtomId>,
}

impl Work {
    fn fresh_name(&mut self, base: String) -> String {
        let mut name = base;
        while self.names.contains(&name) {
            name.push('\'');
        }
        self.names.insert(name.clone());
        name
    }

    fn push_atom(&mut self, name: String, is_assumption: bool, dummy: bool) -> AtomId {
        let id = self.atoms.len();
        let name = self.fresh_name(name);
        self.atoms.push(Atom {
            id,
            name,
            is_assumption,
            dummy,
        });
        self.contrary.push(None);
        id
    }

    /// New dummy assumption with a fresh contrary; returns `(dummy, contrary)`.
    fn dummy(&mut self, tag: String) -> (AtomId, AtomId) {
        let d = self.push_atom(format!("__d_{tag}"), true, true);
        let cd = self.push_atom(format!("__cd_{tag}"), false, false);
        self.contrary[d] = Some(cd);
        (d, cd)
    }

    /// Drops `c` from the assumptions together with every rule using it.
    fn reject(&mut self, c: AtomId) {
        if !self.atoms[c].is_assumption {
            return;
        }
        self.atoms[c].is_assumption = false;
        self.contrary[c] = None;
        self.rejected.push(c);
        for rule in self.rules.iter_mut() {
            if rule.as_ref().is_some_and(|(_, body)| body.contains(&c)) {
                *rule = None;
            }
        }
    }

    fn reject_attacked_by(&mut self, p: AtomId) {
        let attacked: Vec<AtomId> = (0..self.atoms.len())
            .filter(|&c| self.atoms[c].is_assumption && self.contrary[c] == Some(p))
            .collect();
        for c in attacked {
            self.reject(c);
        }
    }

    fn erase_from_bodies(&mut self, p: AtomId) {
        for (_, body) in self.rules.iter_mut().flatten() {
            body.retain(|&b| b != p);
        }
    }
}

/// Rewrites `abaf` so that its stable extensions, restricted to the original
/// assumptions, are the extensions of `abaf` containing `a_star` minus `a_star`.
///
/// Steps, in order: drop `a_star` from the assumptions and from every body;
/// turn each rule deriving the contrary of `a_star` into a constraint guarded
/// by a fresh dummy assumption; reject every assumption whose contrary is
/// `a_star`; then remove facts until none remain, rejecting the assumptions
/// whose contraries they establish.
pub fn modify(abaf: &Abaf, a_star: AtomId) -> Result<ModifyOutcome, ModifyError> {
    if a_star >= abaf.num_atoms() || !abaf.is_assumption(a_star) {
        return Err(ModifyError::NotAnAssumption(a_star));
    }
    let round = abaf.num_atoms();
    let mut w = Work {
        atoms: abaf.atoms().to_vec(),
        contrary: abaf.contrary_table().to_vec(),
        rules: abaf.rules().iter().map(|r| Some((r.head, r.body.clone()))).collect(),
        names: abaf.atoms().iter().map(|a| a.name.clone()).collect(),
        rejected: Vec::new(),
    };
    let target = abaf.contrary(a_star).expect("assumption has a contrary");

    // 1. a_star is accepted: it leaves the assumptions and every body.
    w.atoms[a_star].is_assumption = false;
    w.contrary[a_star] = None;
    w.erase_from_bodies(a_star);

    // 2. rules deriving the contrary of a_star become constraints.
    let mut dummies = BTreeMap::new();
    for rid in 0..w.rules.len() {
        let derives_target = w.rules[rid].as_ref().is_some_and(|(h, _)| *h == target);
        if derives_target {
            let (d, cd) = w.dummy(format!("{rid}_{round}"));
            let (head, body) = w.rules[rid].as_mut().expect("rule present");
            *head = cd;
            body.push(d);
            dummies.insert(DummySource::Rule(rid), d);
        }
    }
    // An assumption contrary holds exactly when it is itself accepted.
    if abaf.is_assumption(target) {
        let (d, cd) = w.dummy(format!("a{target}_{round}"));
        let mut body = vec![d];
        if target != a_star {
            body.push(target);
        }
        w.rules.push(Some((cd, body)));
        dummies.insert(DummySource::ContraryAssumption(target), d);
    }

    // 3. assumptions attacked by a_star are rejected.
    w.reject_attacked_by(a_star);

    // 4. facts.
    loop {
        let facts: Vec<usize> = w
            .rules
            .iter()
            .enumerate()
            .filter(|(_, r)| r.as_ref().is_some_and(|(_, body)| body.is_empty()))
            .map(|(i, _)| i)
            .collect();
        if facts.is_empty() {
            break;
        }
        for i in facts {
            let Some((p, _)) = w.rules[i].take() else {
                continue;
            };
            w.erase_from_bodies(p);
            w.reject_attacked_by(p);
        }
    }

    let rules: Vec<Rule> = w
        .rules
        .into_iter()
        .flatten()
        .enumerate()
        .map(|(id, (head, mut body))| {
            body.sort_unstable();
            Rule { id, head, body }
        })
        .collect();
    let modified = Abaf::from_parts(w.atoms, rules, w.contrary);
    let conflicting = is_conflicting(&modified);
    Ok(ModifyOutcome {
        modified,
        dummies,
        rejected: w.rejected,
        conflicting,
    })
}

/// True iff some rule has the form `contrary(d) <- d` for a dummy assumption `d`.
pub fn is_conflicting(abaf: &Abaf) -> bool {
    abaf.rules().iter().any(|r| {
        let [d] = r.body[..] else { return false };
        let atom = abaf.atom(d);
        atom.dummy && atom.is_assumption && abaf.contrary(d) == Some(r.head)
    })
}
