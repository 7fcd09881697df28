use super::{Abaf, AssumptionSet, AtomId, AtomSet};

/// Forward-chaining closure of `s`: the least atom set containing `s` and closed
/// under every rule whose body it contains.
pub fn derive_closure(abaf: &Abaf, s: &AssumptionSet) -> AtomSet {
    let mut deriver = Deriver::new(abaf);
    deriver.closure(s.iter())
}

/// Reusable closure engine (linear in the size of the framework per call).
pub struct Deriver<'a> {
    abaf: &'a Abaf,
    missing: Vec<usize>,
    queue: Vec<AtomId>,
}

impl<'a> Deriver<'a> {
    pub fn new(abaf: &'a Abaf) -> Self {
        Deriver {
            abaf,
            missing: vec![0; abaf.rules().len()],
            queue: Vec::new(),
        }
    }

    pub fn closure(&mut self, seeds: impl IntoIterator<Item = AtomId>) -> AtomSet {
        let mut out = AtomSet::empty(self.abaf.num_atoms());
        self.closure_into(seeds, &mut out);
        out
    }

    /// Computes the closure of `seeds` into `out`, which is cleared first.
    pub fn closure_into(&mut self, seeds: impl IntoIterator<Item = AtomId>, out: &mut AtomSet) {
        let abaf = self.abaf;
        *out = AtomSet::empty(abaf.num_atoms());
        self.queue.clear();
        for (m, r) in self.missing.iter_mut().zip(abaf.rules()) {
            *m = r.body.len();
        }
        for r in abaf.rules() {
            if r.body.is_empty() && out.insert(r.head) {
                self.queue.push(r.head);
            }
        }
        for a in seeds {
            if out.insert(a) {
                self.queue.push(a);
            }
        }
        while let Some(atom) = self.queue.pop() {
            for &rid in abaf.occurrences(atom) {
                let m = &mut self.missing[rid];
                *m -= 1;
                if *m == 0 {
                    let head = abaf.rules()[rid].head;
                    if out.insert(head) {
                        self.queue.push(head);
                    }
                }
            }
        }
    }
}
