//! Facts, partial and full states, and dense fact sets.
//!
//! A [`Fact`] is a variable/value pair. A [`FactSpace`] assigns every fact of a
//! task a dense global index so that sets of facts can be stored as bitsets.

use std::collections::BTreeMap;
use std::fmt;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

/// A variable/value pair `⟨var, val⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Fact {
    pub var: usize,
    pub val: usize,
}

impl Fact {
    pub const fn new(var: usize, val: usize) -> Self {
        Fact { var, val }
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}={}", self.var, self.val)
    }
}

/// An assignment to a subset of the variables, each at most once.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PartialState(BTreeMap<usize, usize>);

impl PartialState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a partial state, rejecting two different values for one variable.
    pub fn from_facts<I: IntoIterator<Item = Fact>>(facts: I) -> Result<Self, Fact> {
        let mut s = PartialState::new();
        for f in facts {
            match s.0.insert(f.var, f.val) {
                Some(old) if old != f.val => return Err(f),
                _ => {}
            }
        }
        Ok(s)
    }

    pub fn get(&self, var: usize) -> Option<usize> {
        self.0.get(&var).copied()
    }

    /// Sets `var` to `val`, returning the previous value.
    pub fn set(&mut self, var: usize, val: usize) -> Option<usize> {
        self.0.insert(var, val)
    }

    pub fn contains(&self, fact: Fact) -> bool {
        self.get(fact.var) == Some(fact.val)
    }

    pub fn facts(&self) -> impl Iterator<Item = Fact> + '_ {
        self.0.iter().map(|(&var, &val)| Fact { var, val })
    }

    pub fn vars(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Whether every assignment here also holds in `state`.
    pub fn holds_in(&self, state: &State) -> bool {
        self.facts().all(|f| state.get(f.var) == f.val)
    }

    /// The first assignment that does not hold in `state`.
    pub fn first_unsatisfied(&self, state: &State) -> Option<Fact> {
        self.facts().find(|f| state.get(f.var) != f.val)
    }
}

impl FromIterator<Fact> for PartialState {
    /// Collects facts; later facts overwrite earlier ones on the same variable.
    fn from_iter<I: IntoIterator<Item = Fact>>(iter: I) -> Self {
        PartialState(iter.into_iter().map(|f| (f.var, f.val)).collect())
    }
}

/// A full assignment: one value for every variable of the task.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct State(pub Vec<usize>);

impl State {
    pub fn get(&self, var: usize) -> usize {
        self.0[var]
    }

    pub fn set(&mut self, var: usize, val: usize) {
        self.0[var] = val;
    }

    pub fn facts(&self) -> impl Iterator<Item = Fact> + '_ {
        self.0.iter().enumerate().map(|(var, &val)| Fact { var, val })
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Dense indexing of all facts of a task.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactSpace {
    domains: Vec<usize>,
    offsets: Vec<usize>,
    total: usize,
}

impl FactSpace {
    pub fn new(domains: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(domains.len());
        let mut total = 0;
        for &d in &domains {
            offsets.push(total);
            total += d;
        }
        FactSpace { domains, offsets, total }
    }

    pub fn num_vars(&self) -> usize {
        self.domains.len()
    }

    pub fn domain(&self, var: usize) -> usize {
        self.domains[var]
    }

    /// Total number of facts.
    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn is_valid(&self, fact: Fact) -> bool {
        fact.var < self.domains.len() && fact.val < self.domains[fact.var]
    }

    pub fn index(&self, fact: Fact) -> usize {
        debug_assert!(self.is_valid(fact), "fact {fact} outside the fact space");
        self.offsets[fact.var] + fact.val
    }

    pub fn fact(&self, index: usize) -> Fact {
        let var = self.offsets.partition_point(|&o| o <= index) - 1;
        Fact { var, val: index - self.offsets[var] }
    }

    /// An empty set sized for this space.
    pub fn empty_set(&self) -> FactSet {
        FactSet(FixedBitSet::with_capacity(self.total))
    }

    pub fn set_of<I: IntoIterator<Item = Fact>>(&self, facts: I) -> FactSet {
        let mut s = self.empty_set();
        for f in facts {
            s.0.insert(self.index(f));
        }
        s
    }

    pub fn facts_of<'a>(&'a self, set: &'a FactSet) -> impl Iterator<Item = Fact> + 'a {
        set.0.ones().map(move |i| self.fact(i))
    }

    /// All facts of `var` except `val`.
    pub fn others(&self, var: usize, val: usize) -> impl Iterator<Item = Fact> {
        (0..self.domains[var]).filter(move |&d| d != val).map(move |d| Fact { var, val: d })
    }
}

/// A set of facts over a [`FactSpace`], stored as a bitset.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FactSet(pub FixedBitSet);

impl FactSet {
    pub fn contains(&self, space: &FactSpace, fact: Fact) -> bool {
        self.0.contains(space.index(fact))
    }

    pub fn insert(&mut self, space: &FactSpace, fact: Fact) {
        self.0.insert(space.index(fact));
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_clear()
    }

    pub fn union_with(&mut self, other: &FactSet) {
        self.0.union_with(&other.0);
    }

    pub fn intersects(&self, other: &FactSet) -> bool {
        !self.0.is_disjoint(&other.0)
    }
}
