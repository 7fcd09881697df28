use std::time::{Duration, Instant};

use super::{AbaError, Abaf, AssumptionSet, AtomId, AtomSet, Deriver};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Complete,
    TimedOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Branching search with in/out propagation.
    Search,
    /// Test every subset in order of increasing cardinality.
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    /// `None` lifts the cap.
    pub max_assumptions: Option<usize>,
    pub budget: Option<Duration>,
    pub strategy: Strategy,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_assumptions: Some(25),
            budget: Some(Duration::from_secs(5)),
            strategy: Strategy::Search,
        }
    }
}

impl Limits {
    pub fn unbounded() -> Self {
        Limits {
            max_assumptions: None,
            budget: None,
            strategy: Strategy::Search,
        }
    }

    pub fn with_budget(mut self, budget: Option<Duration>) -> Self {
        self.budget = budget;
        self
    }

    pub fn uncapped(mut self) -> Self {
        self.max_assumptions = None;
        self
    }

    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StableResult {
    /// Sorted by cardinality, then lexicographically.
    pub extensions: Vec<AssumptionSet>,
    /// Assumptions contained in some listed extension.
    pub credulous: AssumptionSet,
    pub status: Status,
}

impl StableResult {
    pub fn is_complete(&self) -> bool {
        self.status == Status::Complete
    }

    pub fn is_accepted(&self, a: AtomId) -> bool {
        self.credulous.contains(a)
    }

    /// Labels aligned with `abaf.assumptions()`.
    pub fn labels(&self, abaf: &Abaf) -> Vec<bool> {
        abaf.assumptions().iter().map(|&a| self.is_accepted(a)).collect()
    }
}

/// Enumerates every stable extension of `abaf`.
pub fn stable_extensions(abaf: &Abaf, limits: &Limits) -> Result<StableResult, AbaError> {
    let count = abaf.assumptions().len();
    if let Some(cap) = limits.max_assumptions {
        if count > cap {
            return Err(AbaError::CapExceeded { count, cap });
        }
    }
    let deadline = limits.budget.map(|b| Instant::now() + b);
    let (mut extensions, timed_out) = match limits.strategy {
        Strategy::Search => Search::new(abaf, deadline).run(),
        Strategy::Exhaustive => exhaustive(abaf, deadline),
    };
    extensions.sort();
    let mut credulous = abaf.empty_set();
    for e in &extensions {
        for a in e.iter() {
            credulous.insert(a);
        }
    }
    Ok(StableResult {
        extensions,
        credulous,
        status: if timed_out { Status::TimedOut } else { Status::Complete },
    })
}

fn exhaustive(abaf: &Abaf, deadline: Option<Instant>) -> (Vec<AssumptionSet>, bool) {
    let asm = abaf.assumptions();
    let n = asm.len();
    let mut deriver = Deriver::new(abaf);
    let mut closure = AtomSet::empty(abaf.num_atoms());
    let mut found = Vec::new();
    let mut visited = 0u64;
    for k in 0..=n {
        // Lexicographic k-combinations of assumption positions.
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            visited += 1;
            if visited.is_multiple_of(256) && deadline.is_some_and(|d| Instant::now() >= d) {
                return (found, true);
            }
            let set = AssumptionSet::from_ids(abaf.num_atoms(), idx.iter().map(|&i| asm[i]));
            deriver.closure_into(set.iter(), &mut closure);
            let stable = asm.iter().all(|&a| {
                let attacked = abaf.contrary(a).is_some_and(|c| closure.contains(c));
                attacked != set.contains(a)
            });
            if stable {
                found.push(set);
            }
            if !next_combination(&mut idx, n) {
                break;
            }
        }
    }
    (found, false)
}

/// Advances `idx` to the next k-combination of `0..n` in lexicographic order.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    for i in (0..k).rev() {
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Value {
    In,
    Out,
    Open,
}

struct Search<'a> {
    abaf: &'a Abaf,
    deriver: Deriver<'a>,
    lower: AtomSet,
    upper: AtomSet,
    deadline: Option<Instant>,
    nodes: u64,
    timed_out: bool,
    found: Vec<AssumptionSet>,
}

impl<'a> Search<'a> {
    fn new(abaf: &'a Abaf, deadline: Option<Instant>) -> Self {
        Search {
            abaf,
            deriver: Deriver::new(abaf),
            lower: AtomSet::empty(abaf.num_atoms()),
            upper: AtomSet::empty(abaf.num_atoms()),
            deadline,
            nodes: 0,
            timed_out: false,
            found: Vec::new(),
        }
    }

    fn run(mut self) -> (Vec<AssumptionSet>, bool) {
        let values = vec![Value::Open; self.abaf.assumptions().len()];
        self.branch(values);
        (self.found, self.timed_out)
    }

    /// Tightens `values` until fixpoint. Returns false when no stable extension
    /// can extend the assignment.
    ///
    /// An assumption whose contrary follows from the `In` part must be out; one
    /// whose contrary does not follow even from `In` plus `Open` can never be
    /// attacked and must be in.
    fn propagate(&mut self, values: &mut [Value]) -> bool {
        let asm = self.abaf.assumptions();
        loop {
            let ins = asm
                .iter()
                .zip(values.iter())
                .filter(|(_, v)| **v == Value::In)
                .map(|(a, _)| *a);
            self.deriver.closure_into(ins, &mut self.lower);
            let possible = asm
                .iter()
                .zip(values.iter())
                .filter(|(_, v)| **v != Value::Out)
                .map(|(a, _)| *a);
            self.deriver.closure_into(possible, &mut self.upper);
            let mut changed = false;
            for (i, &a) in asm.iter().enumerate() {
                let c = self.abaf.contrary(a).expect("assumption has a contrary");
                let surely = self.lower.contains(c);
                let maybe = self.upper.contains(c);
                match values[i] {
                    Value::In if surely => return false,
                    Value::Out if !maybe => return false,
                    Value::Open if surely => {
                        values[i] = Value::Out;
                        changed = true;
                    }
                    Value::Open if !maybe => {
                        values[i] = Value::In;
                        changed = true;
                    }
                    _ => {}
                }
            }
            if !changed {
                return true;
            }
        }
    }

    fn branch(&mut self, mut values: Vec<Value>) {
        if self.timed_out {
            return;
        }
        self.nodes += 1;
        if self.nodes.is_multiple_of(64) && self.deadline.is_some_and(|d| Instant::now() >= d) {
            self.timed_out = true;
            return;
        }
        if !self.propagate(&mut values) {
            return;
        }
        match values.iter().position(|v| *v == Value::Open) {
            None => {
                // lower == upper here, so the assignment is conflict free and
                // every out assumption is attacked.
                let asm = self.abaf.assumptions();
                let set = AssumptionSet::from_ids(
                    self.abaf.num_atoms(),
                    asm.iter()
                        .zip(&values)
                        .filter(|(_, v)| **v == Value::In)
                        .map(|(a, _)| *a),
                );
                self.found.push(set);
            }
            Some(i) => {
                let mut with = values.clone();
                with[i] = Value::In;
                self.branch(with);
                values[i] = Value::Out;
                self.branch(values);
            }
        }
    }
}
