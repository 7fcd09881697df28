use std::cmp::Ordering;
use std::fmt;

use fixedbitset::FixedBitSet;

use super::AtomId;

/// Dense membership mask over the atoms of one framework.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct AtomSet {
    bits: FixedBitSet,
}

impl AtomSet {
    pub fn empty(num_atoms: usize) -> Self {
        AtomSet {
            bits: FixedBitSet::with_capacity(num_atoms),
        }
    }

    pub fn from_ids(num_atoms: usize, ids: impl IntoIterator<Item = AtomId>) -> Self {
        let mut s = Self::empty(num_atoms);
        for id in ids {
            s.insert(id);
        }
        s
    }

    pub fn insert(&mut self, id: AtomId) -> bool {
        !self.bits.put(id)
    }

    pub fn remove(&mut self, id: AtomId) {
        self.bits.set(id, false);
    }

    pub fn contains(&self, id: AtomId) -> bool {
        self.bits.contains(id)
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones(..)
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_clear()
    }

    pub fn is_subset(&self, other: &AtomSet) -> bool {
        self.bits.is_subset(&other.bits)
    }

    /// Members in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = AtomId> + '_ {
        self.bits.ones()
    }

    pub fn universe(&self) -> usize {
        self.bits.len()
    }
}

impl fmt::Debug for AtomSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// A set of assumptions, stored as a mask over atom ids.
///
/// Ordered by cardinality first, then lexicographically by ascending atom ids.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct AssumptionSet(AtomSet);

impl AssumptionSet {
    pub fn empty(num_atoms: usize) -> Self {
        AssumptionSet(AtomSet::empty(num_atoms))
    }

    pub fn from_ids(num_atoms: usize, ids: impl IntoIterator<Item = AtomId>) -> Self {
        AssumptionSet(AtomSet::from_ids(num_atoms, ids))
    }

    pub fn insert(&mut self, id: AtomId) -> bool {
        self.0.insert(id)
    }

    pub fn remove(&mut self, id: AtomId) {
        self.0.remove(id)
    }

    pub fn contains(&self, id: AtomId) -> bool {
        self.0.contains(id)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_subset(&self, other: &AssumptionSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = AtomId> + '_ {
        self.0.iter()
    }

    pub fn ids(&self) -> Vec<AtomId> {
        self.iter().collect()
    }

    pub fn as_atoms(&self) -> &AtomSet {
        &self.0
    }

    /// Same members over a universe of `num_atoms` atoms; members beyond it are dropped.
    pub fn resized(&self, num_atoms: usize) -> AssumptionSet {
        AssumptionSet::from_ids(num_atoms, self.iter().filter(|&a| a < num_atoms))
    }
}

impl Ord for AssumptionSet {
    fn cmp(&self, other: &Self) -> Ordering {
        self.len().cmp(&other.len()).then_with(|| self.iter().cmp(other.iter()))
    }
}

impl PartialOrd for AssumptionSet {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for AssumptionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}
