//! Transitive closure of a strict order over `0..n`, stored as a dense bit matrix.

use fixedbitset::FixedBitSet;

/// The transitive closure of an acyclic relation over `0..n`.
///
/// Row `i` holds every `j` with `i ≺ j`. The relation is irreflexive.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Closure {
    rows: Vec<FixedBitSet>,
}

impl Closure {
    /// The empty order over `n` elements.
    pub fn new(n: usize) -> Self {
        Closure { rows: vec![FixedBitSet::with_capacity(n); n] }
    }

    /// The closure of a set of edges, or a cycle (listing its elements in
    /// order, first element repeated at the end) if the edges are cyclic.
    pub fn from_edges<I: IntoIterator<Item = (usize, usize)>>(n: usize, edges: I) -> Result<Self, Vec<usize>> {
        let mut succ = vec![Vec::new(); n];
        let mut indeg = vec![0usize; n];
        for (a, b) in edges {
            if a == b {
                return Err(vec![a, a]);
            }
            succ[a].push(b);
            indeg[b] += 1;
        }
        let mut order = Vec::with_capacity(n);
        let mut ready: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut deg = indeg.clone();
        while let Some(u) = ready.pop() {
            order.push(u);
            for &v in &succ[u] {
                deg[v] -= 1;
                if deg[v] == 0 {
                    ready.push(v);
                }
            }
        }
        if order.len() < n {
            return Err(find_cycle(&succ, &deg));
        }
        let mut c = Closure::new(n);
        for &u in order.iter().rev() {
            let mut row = FixedBitSet::with_capacity(n);
            for &v in &succ[u] {
                row.insert(v);
                row.union_with(&c.rows[v]);
            }
            c.rows[u] = row;
        }
        Ok(c)
    }

    /// Wraps precomputed rows; the caller guarantees they form a transitive,
    /// irreflexive relation.
    pub(crate) fn from_rows(rows: Vec<FixedBitSet>) -> Self {
        Closure { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Whether `a ≺ b`.
    pub fn precedes(&self, a: usize, b: usize) -> bool {
        self.rows[a].contains(b)
    }

    /// Whether `a` and `b` are ordered either way.
    pub fn ordered(&self, a: usize, b: usize) -> bool {
        self.precedes(a, b) || self.precedes(b, a)
    }

    /// Every `b` with `a ≺ b`.
    pub fn successors(&self, a: usize) -> &FixedBitSet {
        &self.rows[a]
    }

    /// Every `a` with `a ≺ b`.
    pub fn predecessors(&self, b: usize) -> FixedBitSet {
        let mut out = FixedBitSet::with_capacity(self.len());
        for (a, row) in self.rows.iter().enumerate() {
            if row.contains(b) {
                out.insert(a);
            }
        }
        out
    }

    /// Adds `a ≺ b` and everything it implies. On a cycle the closure is left
    /// unchanged and the returned witness is `[a, b, a]`: `b ≺ a` already holds.
    pub fn insert(&mut self, a: usize, b: usize) -> Result<(), Vec<usize>> {
        if a == b || self.precedes(b, a) {
            return Err(vec![a, b, a]);
        }
        if self.precedes(a, b) {
            return Ok(());
        }
        let mut add = self.rows[b].clone();
        add.insert(b);
        for x in 0..self.len() {
            if x == a || self.rows[x].contains(a) {
                self.rows[x].union_with(&add);
            }
        }
        Ok(())
    }

    /// Number of ordered pairs among the elements selected by `mask`.
    pub fn count_pairs_within(&self, mask: &FixedBitSet) -> usize {
        mask.ones().map(|a| self.rows[a].intersection_count(mask)).sum()
    }

    /// Number of ordered pairs.
    pub fn count_pairs(&self) -> usize {
        self.rows.iter().map(FixedBitSet::count_ones_all).sum()
    }

    /// All ordered pairs `(a, b)` with `a ≺ b`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows.iter().enumerate().flat_map(|(a, row)| row.ones().map(move |b| (a, b)))
    }

    /// Pairs of the transitive reduction (the Hasse diagram).
    pub fn reduction(&self) -> Vec<(usize, usize)> {
        self.pairs()
            .filter(|&(a, b)| !self.rows[a].ones().any(|c| self.rows[c].contains(b)))
            .collect()
    }

    /// A topological order; ties are broken by the smallest index.
    pub fn topological_order(&self) -> Vec<usize> {
        let n = self.len();
        let mut indeg: Vec<usize> = (0..n).map(|b| (0..n).filter(|&a| self.precedes(a, b)).count()).collect();
        let mut done = vec![false; n];
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let u = (0..n).find(|&i| !done[i] && indeg[i] == 0).expect("closure is acyclic");
            done[u] = true;
            out.push(u);
            for v in self.rows[u].ones() {
                indeg[v] -= 1;
            }
        }
        out
    }
}

trait CountAll {
    fn count_ones_all(&self) -> usize;
}

impl CountAll for FixedBitSet {
    fn count_ones_all(&self) -> usize {
        self.count_ones(..)
    }
}

/// Finds a cycle among the nodes Kahn's algorithm could not remove.
///
/// Every such node still has an unremoved predecessor, so walking
/// predecessors must eventually repeat a node.
fn find_cycle(succ: &[Vec<usize>], remaining_deg: &[usize]) -> Vec<usize> {
    let n = succ.len();
    let mut pred = vec![None; n];
    for (u, vs) in succ.iter().enumerate() {
        if remaining_deg[u] > 0 {
            for &v in vs {
                pred[v].get_or_insert(u);
            }
        }
    }
    let mut seen = vec![usize::MAX; n];
    let mut path = Vec::new();
    let mut u = (0..n).find(|&v| remaining_deg[v] > 0).expect("a cycle exists");
    while seen[u] == usize::MAX {
        seen[u] = path.len();
        path.push(u);
        u = pred[u].expect("unremoved nodes have unremoved predecessors");
    }
    let mut cycle = path[seen[u]..].to_vec();
    cycle.reverse();
    cycle.push(cycle[0]);
    cycle
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_is_closed_transitively() {
        let c = Closure::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        assert!(c.precedes(0, 2));
        assert!(!c.precedes(2, 0));
        assert_eq!(c.count_pairs(), 3);
        assert_eq!(c.reduction(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn unrelated_elements_stay_unordered() {
        let c = Closure::from_edges(2, []).unwrap();
        assert!(!c.ordered(0, 1));
    }

    #[test]
    fn two_cycle_is_reported() {
        let cycle = Closure::from_edges(3, [(0, 1), (1, 0), (1, 2)]).unwrap_err();
        assert_eq!(cycle.first(), cycle.last());
        assert_eq!(cycle.len(), 3);
    }

    #[test]
    fn incremental_insertion_matches_rebuild() {
        let mut c = Closure::from_edges(4, [(0, 1), (2, 3)]).unwrap();
        c.insert(1, 2).unwrap();
        assert_eq!(c, Closure::from_edges(4, [(0, 1), (1, 2), (2, 3)]).unwrap());
        assert_eq!(c.insert(3, 0), Err(vec![3, 0, 3]));
    }
}
