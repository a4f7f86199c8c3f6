//! Block-decomposed partial-order plans.
//!
//! A [`BdpoPlan`] is a partial-order plan whose steps are grouped into a
//! laminar forest of blocks. Every step has its own *primitive* block;
//! *compound* blocks group sibling blocks. Blocks at the same level (the root,
//! or the children of one compound block) are ordered among themselves by
//! reasoned orderings, and a block ordering `A ≺ B` orders every member of `A`
//! before every member of `B`. Steps of disjoint blocks never interleave.
//!
//! A block behaves like an operator whose precondition is what its members
//! receive from outside and whose effect is the last value each member writes
//! (see [`BlockProfile`]). Validity is checked level by level with these
//! block semantics, which is what lets block deordering remove orderings that
//! step-level reasoning must keep.

mod deorder;
mod export;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use fixedbitset::FixedBitSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::closure::Closure;
use crate::error::{Error, Result};
use crate::facts::{Fact, FactSpace};
use crate::pop::{CausalLink, OrderingReason, PartialOrderPlan, Rank, Step, StepId};
use crate::task::{PlanningTask, SequentialPlan};
use crate::validation::{ValidationReport, Violation};

pub use deorder::{block_deorder, try_remove_reason};
pub(crate) use deorder::supplier_step;

/// Stable identifier of a block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct BlockId(pub u32);

impl BlockId {
    /// The primitive block of the synthetic initial step.
    pub const INIT: BlockId = BlockId(0);
    /// The primitive block of the synthetic goal step.
    pub const GOAL: BlockId = BlockId(1);

    pub fn is_synthetic(self) -> bool {
        self == Self::INIT || self == Self::GOAL
    }
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::INIT => f.write_str("B:init"),
            Self::GOAL => f.write_str("B:goal"),
            BlockId(n) => write!(f, "b{n}"),
        }
    }
}

/// What a block contains.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum BlockKind {
    /// Exactly one step.
    Primitive(StepId),
    /// Two or more child blocks.
    Compound(BTreeSet<BlockId>),
}

/// A node of the block forest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Block {
    pub kind: BlockKind,
    /// The enclosing compound block, or `None` for outermost blocks.
    pub parent: Option<BlockId>,
}

impl Block {
    pub fn is_primitive(&self) -> bool {
        matches!(self.kind, BlockKind::Primitive(_))
    }
}

/// The operator-like view of a block.
///
/// `pre` holds the facts members receive through causal links from outside
/// the block. `eff` holds every value a member writes that no later member
/// overwrites with a different value; unordered writers of one variable leave
/// several values. A block consumes its precondition, produces the effect
/// facts that it does not consume and that are the only effect value of their
/// variable, and deletes every value of an effect variable other than an
/// effect value, restricted to the consumed value when it consumes the
/// variable.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct BlockProfile {
    pub pre: BTreeSet<Fact>,
    pub eff: BTreeSet<Fact>,
    pub cons: BTreeSet<Fact>,
    pub prod: BTreeSet<Fact>,
    pub del: BTreeSet<Fact>,
}

/// One end of a causal link lifted to a level: a child block, or `None` for
/// the boundary of the enclosing block.
pub type LinkEnd = Option<BlockId>;

/// A causal link seen at the granularity of one level.
pub type LiftedLink = (LinkEnd, Fact, LinkEnd);

/// Cached analysis of the current structure.
#[derive(Clone, Debug, Default)]
struct Derived {
    ids: Vec<StepId>,
    index: HashMap<StepId, usize>,
    closure: Option<Closure>,
    members: HashMap<BlockId, FixedBitSet>,
    profiles: HashMap<BlockId, BlockProfile>,
    position: HashMap<BlockId, Rank>,
    /// Outermost blocks, sorted by position.
    outer: Vec<BlockId>,
    /// Outermost block of every step index.
    top: Vec<BlockId>,
}

/// A block-decomposed partial-order plan.
#[derive(Clone, Debug)]
pub struct BdpoPlan {
    space: Arc<FactSpace>,
    steps: BTreeMap<StepId, Step>,
    links: BTreeSet<CausalLink>,
    blocks: BTreeMap<BlockId, Block>,
    primitive: BTreeMap<StepId, BlockId>,
    reasons: BTreeMap<(BlockId, BlockId), BTreeSet<OrderingReason>>,
    next_step: u32,
    next_block: u32,
    derived: Derived,
}

impl PartialEq for BdpoPlan {
    fn eq(&self, other: &Self) -> bool {
        self.steps == other.steps
            && self.links == other.links
            && self.blocks == other.blocks
            && self.primitive == other.primitive
            && self.reasons == other.reasons
    }
}

/// Wraps every step of `pop` in its own primitive block.
///
/// Block orderings mirror the step orderings: every ordered pair of the
/// closure that has a producer-consumer, consumer-deleter or deleter-producer
/// explanation becomes a reasoned block ordering.
pub fn init_bdpo(pop: &PartialOrderPlan) -> BdpoPlan {
    BdpoPlan::from_pop(pop)
}

impl BdpoPlan {
    /// See [`init_bdpo`].
    pub fn from_pop(pop: &PartialOrderPlan) -> Self {
        let mut plan = BdpoPlan {
            space: pop.space().clone(),
            steps: pop.steps().clone(),
            links: pop.links().clone(),
            blocks: BTreeMap::new(),
            primitive: BTreeMap::new(),
            reasons: BTreeMap::new(),
            next_step: pop.steps().keys().map(|s| s.0 + 1).max().unwrap_or(2),
            next_block: 2,
            derived: Derived::default(),
        };
        plan.add_primitive(StepId::INIT, BlockId::INIT, None);
        plan.add_primitive(StepId::GOAL, BlockId::GOAL, None);
        for s in pop.real_steps() {
            let b = plan.fresh_block();
            plan.add_primitive(s, b, None);
        }
        let oracle = Oracle::from_pop(pop);
        plan.normalize_with(&oracle).expect("orderings of a partial-order plan are acyclic");
        plan
    }

    fn fresh_block(&mut self) -> BlockId {
        let b = BlockId(self.next_block);
        self.next_block += 1;
        b
    }

    fn add_primitive(&mut self, s: StepId, b: BlockId, parent: Option<BlockId>) {
        self.blocks.insert(b, Block { kind: BlockKind::Primitive(s), parent });
        self.primitive.insert(s, b);
    }

    // ----------------------------------------------------------------------
    // Accessors

    pub fn space(&self) -> &Arc<FactSpace> {
        &self.space
    }

    pub fn steps(&self) -> &BTreeMap<StepId, Step> {
        &self.steps
    }

    pub fn step(&self, s: StepId) -> &Step {
        &self.steps[&s]
    }

    /// Non-synthetic steps in rank order.
    pub fn real_steps(&self) -> Vec<StepId> {
        let mut v: Vec<StepId> = self.steps.keys().copied().filter(|s| !s.is_synthetic()).collect();
        v.sort_by_key(|s| (self.steps[s].rank, *s));
        v
    }

    pub fn len(&self) -> usize {
        self.steps.len() - 2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn links(&self) -> &BTreeSet<CausalLink> {
        &self.links
    }

    pub fn blocks(&self) -> &BTreeMap<BlockId, Block> {
        &self.blocks
    }

    pub fn block(&self, b: BlockId) -> &Block {
        &self.blocks[&b]
    }

    pub fn contains_block(&self, b: BlockId) -> bool {
        self.blocks.contains_key(&b)
    }

    /// The primitive block of a step.
    pub fn primitive_block(&self, s: StepId) -> BlockId {
        self.primitive[&s]
    }

    /// Reasoned orderings between sibling blocks, at every level.
    pub fn block_reasons(&self) -> &BTreeMap<(BlockId, BlockId), BTreeSet<OrderingReason>> {
        &self.reasons
    }

    pub fn reasons_for(&self, a: BlockId, b: BlockId) -> Option<&BTreeSet<OrderingReason>> {
        self.reasons.get(&(a, b))
    }

    /// Children of a level (`None` is the root), sorted by position.
    pub fn children(&self, level: Option<BlockId>) -> Vec<BlockId> {
        let mut v: Vec<BlockId> = match level {
            None => self.blocks.iter().filter(|(_, b)| b.parent.is_none()).map(|(&id, _)| id).collect(),
            Some(p) => match &self.blocks[&p].kind {
                BlockKind::Compound(ch) => ch.iter().copied().collect(),
                BlockKind::Primitive(_) => Vec::new(),
            },
        };
        v.sort_by_key(|b| (self.position(*b), *b));
        v
    }

    /// Outermost blocks, synthetic ones included, sorted by position.
    pub fn outer_blocks(&self) -> &[BlockId] {
        &self.derived.outer
    }

    /// The outermost block containing `s`.
    pub fn outer_of(&self, s: StepId) -> BlockId {
        self.derived.top[self.ix(s)]
    }

    /// The ancestor of `b` (or `b` itself) that is outermost.
    pub fn outermost(&self, mut b: BlockId) -> BlockId {
        while let Some(p) = self.blocks[&b].parent {
            b = p;
        }
        b
    }

    /// Steps of a block.
    pub fn members(&self, b: BlockId) -> BTreeSet<StepId> {
        self.derived.members[&b].ones().map(|i| self.derived.ids[i]).collect()
    }

    /// Whether step `s` belongs to block `b`.
    pub fn is_member(&self, s: StepId, b: BlockId) -> bool {
        self.derived.members[&b].contains(self.ix(s))
    }

    /// Earliest original-sequence rank among the block's steps.
    pub fn position(&self, b: BlockId) -> Rank {
        self.derived.position.get(&b).copied().unwrap_or(Rank::GOAL)
    }

    /// Total cost of the block's steps.
    pub fn block_cost(&self, b: BlockId) -> u64 {
        self.members(b).iter().map(|s| self.steps[s].op.cost).sum()
    }

    /// Nesting depth: 0 for outermost blocks.
    pub fn depth(&self, mut b: BlockId) -> usize {
        let mut d = 0;
        while let Some(p) = self.blocks[&b].parent {
            b = p;
            d += 1;
        }
        d
    }

    /// The profile of a block.
    pub fn profile(&self, b: BlockId) -> &BlockProfile {
        &self.derived.profiles[&b]
    }

    /// Total cost of the non-synthetic steps.
    pub fn cost(&self) -> u64 {
        self.steps.values().map(|s| s.op.cost).sum()
    }

    fn ix(&self, s: StepId) -> usize {
        *self.derived.index.get(&s).unwrap_or_else(|| panic!("unknown step {s}"))
    }

    fn closure(&self) -> &Closure {
        self.derived.closure.as_ref().expect("analysis is current")
    }

    /// Whether step `a` precedes step `b`.
    pub fn step_precedes(&self, a: StepId, b: StepId) -> bool {
        self.closure().precedes(self.ix(a), self.ix(b))
    }

    /// Whether block `a` precedes block `b`: some member of `a` precedes some
    /// member of `b`.
    pub fn precedes(&self, a: BlockId, b: BlockId) -> bool {
        let mb = &self.derived.members[&b];
        self.derived.members[&a].ones().any(|i| !self.closure().successors(i).is_disjoint(mb))
    }

    pub fn ordered(&self, a: BlockId, b: BlockId) -> bool {
        self.precedes(a, b) || self.precedes(b, a)
    }

    /// Flexibility over the non-synthetic steps.
    pub fn flex(&self) -> crate::pop::FlexScore {
        let mut mask = FixedBitSet::with_capacity(self.derived.ids.len());
        for (i, s) in self.derived.ids.iter().enumerate() {
            if !s.is_synthetic() {
                mask.insert(i);
            }
        }
        crate::pop::FlexScore::from_counts(self.len(), self.closure().count_pairs_within(&mask))
    }

    /// Block orderings at the root whose endpoints are both non-synthetic,
    /// sorted by the positions of source and target.
    pub fn root_orderings(&self) -> Vec<(BlockId, BlockId)> {
        let mut v: Vec<(BlockId, BlockId)> = self
            .reasons
            .keys()
            .copied()
            .filter(|&(a, b)| {
                !a.is_synthetic()
                    && !b.is_synthetic()
                    && self.blocks[&a].parent.is_none()
                    && self.blocks[&b].parent.is_none()
            })
            .collect();
        v.sort_by_key(|&(a, b)| (self.position(a), self.position(b), a, b));
        v
    }

    // ----------------------------------------------------------------------
    // Analysis

    /// Recomputes the cached analysis after a structural change.
    fn refresh(&mut self) -> Result<()> {
        let ids: Vec<StepId> = self.steps.keys().copied().collect();
        let index: HashMap<StepId, usize> = ids.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let n = ids.len();
        let post = self.post_order();
        let mut members: HashMap<BlockId, FixedBitSet> = HashMap::new();
        let mut position: HashMap<BlockId, Rank> = HashMap::new();
        for &b in &post {
            match &self.blocks[&b].kind {
                BlockKind::Primitive(s) => {
                    let mut m = FixedBitSet::with_capacity(n);
                    m.insert(index[s]);
                    members.insert(b, m);
                    position.insert(b, self.steps[s].rank);
                }
                BlockKind::Compound(ch) => {
                    let mut m = FixedBitSet::with_capacity(n);
                    for c in ch {
                        m.union_with(&members[c]);
                    }
                    members.insert(b, m);
                    position.insert(b, ch.iter().map(|c| position[c]).min().unwrap_or(Rank::GOAL));
                }
            }
        }
        self.derived.members = members;
        self.derived.position = position;
        self.derived.ids = ids;
        self.derived.index = index;

        let mut rows = vec![FixedBitSet::with_capacity(n); n];
        for level in self.levels() {
            let children = self.children(level);
            let (_, lc) = self.level_closure_from_reasons(level, &children)?;
            for (i, j) in lc.pairs() {
                let target = &self.derived.members[&children[j]];
                for a in self.derived.members[&children[i]].ones() {
                    rows[a].union_with(target);
                }
            }
        }
        self.derived.closure = Some(Closure::from_rows(rows));

        let mut profiles = HashMap::new();
        for &b in &post {
            profiles.insert(b, self.compute_profile(b));
        }
        self.derived.profiles = profiles;
        self.derived.outer = self.children(None);
        let mut top = vec![BlockId::INIT; n];
        for &b in &self.derived.outer {
            for i in self.derived.members[&b].ones() {
                top[i] = b;
            }
        }
        self.derived.top = top;
        Ok(())
    }

    /// Closure over the children of a level built from the recorded reasons.
    fn level_closure_from_reasons(&self, level: Option<BlockId>, children: &[BlockId]) -> Result<(HashMap<BlockId, usize>, Closure)> {
        let local: HashMap<BlockId, usize> = children.iter().enumerate().map(|(i, &b)| (b, i)).collect();
        let mut edges = Vec::new();
        for &(a, b) in self.reasons.keys() {
            if let (Some(&i), Some(&j)) = (local.get(&a), local.get(&b)) {
                edges.push((i, j));
            }
        }
        if level.is_none() {
            add_synthetic_edges(&local, children, &mut edges);
        }
        let c = Closure::from_edges(children.len(), edges).map_err(|w| {
            Error::CycleDetected(w.into_iter().map(|i| self.representative(children[i])).collect())
        })?;
        Ok((local, c))
    }

    fn representative(&self, b: BlockId) -> StepId {
        let mut b = b;
        loop {
            match &self.blocks[&b].kind {
                BlockKind::Primitive(s) => return *s,
                BlockKind::Compound(ch) => b = *ch.iter().next().expect("compound blocks are non-empty"),
            }
        }
    }

    /// All levels: the root followed by every compound block.
    fn levels(&self) -> Vec<Option<BlockId>> {
        let mut v = vec![None];
        v.extend(self.blocks.iter().filter(|(_, b)| !b.is_primitive()).map(|(&id, _)| Some(id)));
        v
    }

    /// Blocks with children before parents.
    fn post_order(&self) -> Vec<BlockId> {
        let mut out = Vec::with_capacity(self.blocks.len());
        let roots: Vec<BlockId> = self.blocks.iter().filter(|(_, b)| b.parent.is_none()).map(|(&id, _)| id).collect();
        let mut stack: Vec<(BlockId, bool)> = roots.into_iter().rev().map(|b| (b, false)).collect();
        while let Some((b, expanded)) = stack.pop() {
            if expanded {
                out.push(b);
                continue;
            }
            stack.push((b, true));
            if let BlockKind::Compound(ch) = &self.blocks[&b].kind {
                stack.extend(ch.iter().rev().map(|&c| (c, false)));
            }
        }
        out
    }

    fn compute_profile(&self, b: BlockId) -> BlockProfile {
        match &self.blocks[&b].kind {
            BlockKind::Primitive(s) => {
                let step = &self.steps[s];
                let pre: BTreeSet<Fact> = step.op.pre.facts().collect();
                let eff: BTreeSet<Fact> = step.op.eff.facts().collect();
                BlockProfile { cons: pre.clone(), prod: eff.clone(), del: step.del.clone(), pre, eff }
            }
            BlockKind::Compound(_) => {
                let m = &self.derived.members[&b];
                let (ids, index) = (&self.derived.ids, &self.derived.index);
                let inside = |s: StepId| m.contains(index[&s]);
                let pre: BTreeSet<Fact> =
                    self.links.iter().filter(|l| inside(l.consumer) && !inside(l.producer)).map(|l| l.fact).collect();
                let closure = self.derived.closure.as_ref().expect("closure computed before profiles");
                let mut eff = BTreeSet::new();
                for i in m.ones() {
                    for f in self.steps[&ids[i]].op.eff.facts() {
                        let overwritten = closure.successors(i).ones().filter(|&j| m.contains(j)).any(|j| {
                            self.steps[&ids[j]].op.eff.get(f.var).is_some_and(|d| d != f.val)
                        });
                        if !overwritten {
                            eff.insert(f);
                        }
                    }
                }
                block_semantics(&self.space, pre, eff)
            }
        }
    }

    // ----------------------------------------------------------------------
    // Levels, lifted links and reasons

    /// Causal links lifted to the children of `level`.
    pub fn level_links(&self, level: Option<BlockId>) -> BTreeSet<LiftedLink> {
        let children = self.children(level);
        let owner = self.owner_map(&children);
        let mut out = BTreeSet::new();
        for l in &self.links {
            let p = owner.get(&l.producer).copied();
            let c = owner.get(&l.consumer).copied();
            if (p.is_none() && c.is_none()) || p == c {
                continue;
            }
            out.insert((p, l.fact, c));
        }
        out
    }

    fn owner_map(&self, children: &[BlockId]) -> HashMap<StepId, BlockId> {
        let mut owner = HashMap::new();
        for &c in children {
            for i in self.derived.members[&c].ones() {
                owner.insert(self.derived.ids[i], c);
            }
        }
        owner
    }

    /// The reasons that explain `a ≺ b` between two siblings, given the links
    /// of their level.
    fn definitional_reasons(&self, a: BlockId, b: BlockId, links: &BTreeSet<LiftedLink>) -> BTreeSet<OrderingReason> {
        let (pa, pb) = (self.profile(a), self.profile(b));
        let mut out = BTreeSet::new();
        for &(p, f, c) in links {
            if p == Some(a) && c == Some(b) {
                out.insert(OrderingReason::pc(f));
            }
        }
        for &f in pa.cons.intersection(&pb.del) {
            out.insert(OrderingReason::cd(f));
        }
        for &f in &pa.del {
            if links.iter().any(|&(p, g, c)| p == Some(b) && g == f && c != Some(a)) {
                out.insert(OrderingReason::dp(f));
            }
        }
        out
    }

    /// Order among the children of a level induced by an oracle over steps.
    fn level_order_from(&self, level: Option<BlockId>, children: &[BlockId], oracle: &Oracle) -> Result<Closure> {
        let local: HashMap<BlockId, usize> = children.iter().enumerate().map(|(i, &b)| (b, i)).collect();
        let sets: Vec<Vec<StepId>> = children.iter().map(|&c| self.members(c).into_iter().collect()).collect();
        let mut edges = Vec::new();
        for i in 0..children.len() {
            for j in 0..children.len() {
                if i != j && oracle.any_precedes(&sets[i], &sets[j]) {
                    edges.push((i, j));
                }
            }
        }
        if level.is_none() {
            add_synthetic_edges(&local, children, &mut edges);
        }
        Closure::from_edges(children.len(), edges)
            .map_err(|w| Error::CycleDetected(w.into_iter().map(|i| self.representative(children[i])).collect()))
    }

    /// Replaces the reasons of every level by the reasons that explain the
    /// orderings the oracle imposes between siblings. Levels are processed
    /// innermost first, so each level sees the final profiles of its children.
    fn normalize_with(&mut self, oracle: &Oracle) -> Result<()> {
        let parents: HashMap<BlockId, Option<BlockId>> = self.blocks.iter().map(|(&b, blk)| (b, blk.parent)).collect();
        self.reasons.retain(|&(a, b), _| parents.get(&a).is_some_and(|pa| parents.get(&b) == Some(pa)));
        self.refresh()?;
        let mut by_depth: BTreeMap<usize, Vec<Option<BlockId>>> = BTreeMap::new();
        for level in self.levels() {
            let d = level.map_or(0, |b| self.depth(b) + 1);
            by_depth.entry(d).or_default().push(level);
        }
        for (_, levels) in by_depth.into_iter().rev() {
            let mut updates = Vec::new();
            for level in levels {
                let children = self.children(level);
                let order = self.level_order_from(level, &children, oracle)?;
                let links = self.level_links(level);
                for (i, j) in order.pairs() {
                    let r = self.definitional_reasons(children[i], children[j], &links);
                    updates.push(((children[i], children[j]), r));
                }
                let set: BTreeSet<BlockId> = children.iter().copied().collect();
                self.reasons.retain(|(a, b), _| !(set.contains(a) && set.contains(b)));
            }
            for (key, r) in updates {
                if !r.is_empty() {
                    self.reasons.insert(key, r);
                }
            }
            self.refresh()?;
        }
        Ok(())
    }

    /// Canonicalizes the reasons of every level against the current order.
    pub(crate) fn normalize(&mut self) -> Result<()> {
        let oracle = Oracle::from_plan(self);
        self.normalize_with(&oracle)
    }

    // ----------------------------------------------------------------------
    // Mutations (crate-internal; callers validate afterwards)

    /// Wraps outermost blocks into a new compound block, keeping the order of
    /// everything else.
    pub(crate) fn wrap(&mut self, set: &BTreeSet<BlockId>) -> Result<BlockId> {
        debug_assert!(set.len() >= 2 && set.iter().all(|b| self.blocks[b].parent.is_none() && !b.is_synthetic()));
        let oracle = Oracle::from_plan(self);
        let b = self.fresh_block();
        for c in set {
            self.blocks.get_mut(c).expect("block exists").parent = Some(b);
        }
        self.blocks.insert(b, Block { kind: BlockKind::Compound(set.clone()), parent: None });
        self.normalize_with(&oracle)?;
        Ok(b)
    }

    /// Points the causal link that supplies `fact` to `consumer` at a new producer.
    pub(crate) fn relink(&mut self, consumer: StepId, fact: Fact, producer: StepId) {
        self.links.retain(|l| !(l.consumer == consumer && l.fact == fact));
        self.links.insert(CausalLink { producer, fact, consumer });
    }

    /// Adds a reasoned ordering between two outermost blocks.
    pub(crate) fn add_root_reason(&mut self, a: BlockId, b: BlockId, reason: OrderingReason) -> Result<()> {
        if a == b || self.precedes(b, a) || b == BlockId::INIT || a == BlockId::GOAL {
            return Err(Error::CycleDetected(vec![self.representative(a), self.representative(b), self.representative(a)]));
        }
        self.reasons.entry((a, b)).or_default().insert(reason);
        self.refresh()
    }

    /// Drops every root-level reason that mentions `b`, so that the remaining
    /// order no longer passes through it.
    pub(crate) fn isolate(&mut self, b: BlockId) -> Result<()> {
        self.reasons.retain(|&(x, y), _| x != b && y != b);
        self.refresh()
    }

    /// Allocates a rank just after `after` that no step uses yet.
    pub(crate) fn fresh_rank(&self, after: Rank) -> Rank {
        let sub = self.steps.values().filter(|s| s.rank.0 == after.0).map(|s| s.rank.1).max().unwrap_or(after.1);
        Rank(after.0, sub.max(after.1) + 1)
    }

    /// Removes steps together with their links, primitive blocks and reasons.
    /// Compound blocks left with a single child dissolve into that child.
    pub(crate) fn remove_steps(&mut self, doomed: &BTreeSet<StepId>) -> Result<()> {
        let oracle = Oracle::from_plan(self);
        for s in doomed {
            assert!(!s.is_synthetic(), "synthetic steps cannot be removed");
            let b = self.primitive.remove(s).expect("step has a primitive block");
            self.steps.remove(s);
            self.detach(b);
        }
        self.links.retain(|l| !doomed.contains(&l.producer) && !doomed.contains(&l.consumer));
        self.normalize_with(&oracle)
    }

    /// Removes a block from the forest and repairs its ancestors.
    fn detach(&mut self, b: BlockId) {
        let parent = self.blocks.remove(&b).and_then(|blk| blk.parent);
        self.reasons.retain(|&(x, y), _| x != b && y != b);
        let Some(p) = parent else { return };
        let remaining = match &mut self.blocks.get_mut(&p).expect("parent exists").kind {
            BlockKind::Compound(ch) => {
                ch.remove(&b);
                ch.clone()
            }
            BlockKind::Primitive(_) => unreachable!("primitive blocks have no children"),
        };
        match remaining.len() {
            0 => self.detach(p),
            1 => {
                let only = *remaining.iter().next().expect("one child");
                let grand = self.blocks[&p].parent;
                self.blocks.remove(&p);
                self.reasons.retain(|&(x, y), _| x != p && y != p);
                self.blocks.get_mut(&only).expect("child exists").parent = grand;
                if let Some(g) = grand {
                    if let BlockKind::Compound(ch) = &mut self.blocks.get_mut(&g).expect("grandparent exists").kind {
                        ch.remove(&p);
                        ch.insert(only);
                    }
                }
            }
            _ => {}
        }
    }

    /// Removes a whole block (any level) with all of its steps.
    pub(crate) fn remove_block(&mut self, b: BlockId) -> Result<()> {
        let doomed = self.members(b);
        self.remove_steps(&doomed)
    }

    /// Inserts the steps of a fragment as a new outermost block, ordered only
    /// after the initial and before the goal block. The fragment's synthetic
    /// steps and their links are dropped; its other links and orderings are
    /// kept. Returns the block and the new id of every fragment step.
    pub(crate) fn insert_fragment(&mut self, frag: &PartialOrderPlan, rank: Rank) -> Result<(BlockId, BTreeMap<StepId, StepId>)> {
        if frag.is_empty() {
            return Err(Error::Internal("cannot insert an empty fragment".into()));
        }
        let mut map = BTreeMap::new();
        let mut prims = BTreeSet::new();
        for (k, s) in frag.real_steps().into_iter().enumerate() {
            let id = StepId(self.next_step);
            self.next_step += 1;
            let mut step = frag.step(s).clone();
            step.rank = Rank(rank.0, rank.1 + k as u32);
            self.steps.insert(id, step);
            let b = self.fresh_block();
            self.add_primitive(id, b, None);
            map.insert(s, id);
            prims.insert(b);
        }
        for l in frag.links() {
            if let (Some(&p), Some(&c)) = (map.get(&l.producer), map.get(&l.consumer)) {
                self.links.insert(CausalLink { producer: p, fact: l.fact, consumer: c });
            }
        }
        let new_block = if prims.len() == 1 {
            *prims.iter().next().expect("one block")
        } else {
            let b = self.fresh_block();
            for c in &prims {
                self.blocks.get_mut(c).expect("fresh block").parent = Some(b);
            }
            self.blocks.insert(b, Block { kind: BlockKind::Compound(prims.clone()), parent: None });
            b
        };
        // Inner orderings come from the fragment; the new block is unordered
        // with the rest of the plan until links and threat resolution order it.
        let mut oracle = Oracle::from_plan(self);
        oracle.extend_from_pop(frag, &map);
        self.normalize_with(&oracle)?;
        Ok((new_block, map))
    }

    // ----------------------------------------------------------------------
    // Validity

    /// Checks structure, causal support and threats at every level, plus
    /// contiguity of every block.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::valid();
        self.validate_structure(&mut report);
        if !report.is_valid() {
            return report;
        }
        let mut support: BTreeMap<(StepId, Fact), Vec<StepId>> = BTreeMap::new();
        for l in &self.links {
            let (Some(p), Some(c)) = (self.steps.get(&l.producer), self.steps.get(&l.consumer)) else {
                report.push(Violation::BadLink { producer: l.producer, fact: l.fact, consumer: l.consumer, problem: "refers to a missing step" });
                continue;
            };
            if !p.op.eff.contains(l.fact) {
                report.push(Violation::BadLink { producer: l.producer, fact: l.fact, consumer: l.consumer, problem: "producer does not achieve the fact" });
            }
            if !c.op.pre.contains(l.fact) {
                report.push(Violation::BadLink { producer: l.producer, fact: l.fact, consumer: l.consumer, problem: "consumer does not require the fact" });
            }
            if !self.step_precedes(l.producer, l.consumer) {
                report.push(Violation::BadLink { producer: l.producer, fact: l.fact, consumer: l.consumer, problem: "producer is not ordered before the consumer" });
            }
            support.entry((l.consumer, l.fact)).or_default().push(l.producer);
        }
        for (&id, step) in &self.steps {
            for fact in step.op.pre.facts() {
                match support.get(&(id, fact)).map(Vec::as_slice) {
                    None | Some([]) => report.push(Violation::UnsupportedPrecondition { consumer: id, fact }),
                    Some([_]) => {}
                    Some(ps) => report.push(Violation::AmbiguousSupport { consumer: id, fact, producers: ps.to_vec() }),
                }
            }
        }
        for level in self.levels() {
            self.validate_level(level, &mut report);
        }
        self.validate_contiguity(&mut report);
        report
    }

    fn validate_structure(&self, report: &mut ValidationReport) {
        for (&s, &b) in &self.primitive {
            if self.blocks.get(&b).map(|blk| &blk.kind) != Some(&BlockKind::Primitive(s)) {
                report.push(Violation::Structure { detail: format!("{s} is not wrapped by its primitive block {b}") });
            }
        }
        if self.primitive.len() != self.steps.len() {
            report.push(Violation::Structure { detail: "some step lacks a primitive block".into() });
        }
        for (&id, blk) in &self.blocks {
            if let Some(p) = blk.parent {
                let ok = matches!(self.blocks.get(&p).map(|b| &b.kind), Some(BlockKind::Compound(ch)) if ch.contains(&id));
                if !ok {
                    report.push(Violation::Structure { detail: format!("{id} is not a child of its parent {p}") });
                }
            }
            if let BlockKind::Compound(ch) = &blk.kind {
                if ch.len() < 2 {
                    report.push(Violation::Structure { detail: format!("{id} has fewer than two children") });
                }
                for c in ch {
                    if self.blocks.get(c).map(|b| b.parent) != Some(Some(id)) {
                        report.push(Violation::Structure { detail: format!("{c} does not name {id} as parent") });
                    }
                }
            }
        }
        for b in [BlockId::INIT, BlockId::GOAL] {
            if self.blocks.get(&b).map(|blk| blk.parent) != Some(None) {
                report.push(Violation::Structure { detail: format!("{b} must be an outermost block") });
            }
        }
        for &(a, b) in self.reasons.keys() {
            if self.blocks.get(&a).map(|x| x.parent) != self.blocks.get(&b).map(|x| x.parent) {
                report.push(Violation::Structure { detail: format!("ordering {a} ≺ {b} crosses levels") });
            }
        }
    }

    fn validate_level(&self, level: Option<BlockId>, report: &mut ValidationReport) {
        let children = self.children(level);
        let links = self.level_links(level);
        for &(p, f, c) in &links {
            if let Some(a) = p {
                if !self.profile(a).prod.contains(&f) {
                    report.push(Violation::BadBlockLink { producer: p, fact: f, consumer: c, problem: "producer block does not produce the fact" });
                }
            }
            if let Some(b) = c {
                if !self.profile(b).cons.contains(&f) {
                    report.push(Violation::BadBlockLink { producer: p, fact: f, consumer: c, problem: "consumer block does not consume the fact" });
                }
            }
            if let (Some(a), Some(b)) = (p, c) {
                if !self.precedes(a, b) {
                    report.push(Violation::BadBlockLink { producer: p, fact: f, consumer: c, problem: "producer block is not ordered before the consumer" });
                }
            }
            for &d in &children {
                if Some(d) == p || Some(d) == c || !self.profile(d).del.contains(&f) {
                    continue;
                }
                let before = p.is_some_and(|a| self.precedes(d, a));
                let after = c.is_some_and(|b| self.precedes(b, d));
                if !(before || after) {
                    report.push(Violation::BlockThreat { deleter: d, producer: p, fact: f, consumer: c });
                }
            }
        }
    }

    fn validate_contiguity(&self, report: &mut ValidationReport) {
        let closure = self.closure();
        let n = self.derived.ids.len();
        for (&b, blk) in &self.blocks {
            if blk.is_primitive() {
                continue;
            }
            let m = &self.derived.members[&b];
            let mut after = FixedBitSet::with_capacity(n);
            let mut before = FixedBitSet::with_capacity(n);
            for i in m.ones() {
                after.union_with(closure.successors(i));
            }
            for j in 0..n {
                if m.ones().any(|i| closure.precedes(j, i)) {
                    before.insert(j);
                }
            }
            after.intersect_with(&before);
            after.difference_with(m);
            if let Some(x) = after.ones().next() {
                report.push(Violation::NotContiguous { block: b, intruder: self.derived.ids[x] });
            }
        }
    }

    // ----------------------------------------------------------------------
    // Linearization

    /// A random block-respecting linearization of the non-synthetic steps.
    pub fn linearize_steps(&self, seed: u64) -> Vec<StepId> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(self.len());
        self.linearize_level(None, &mut rng, &mut out);
        out
    }

    fn linearize_level(&self, level: Option<BlockId>, rng: &mut ChaCha8Rng, out: &mut Vec<StepId>) {
        let children: Vec<BlockId> = self.children(level).into_iter().filter(|b| !b.is_synthetic()).collect();
        let n = children.len();
        let succ: Vec<Vec<usize>> =
            (0..n).map(|i| (0..n).filter(|&j| j != i && self.precedes(children[i], children[j])).collect()).collect();
        let mut waiting = vec![0usize; n];
        for &j in succ.iter().flatten() {
            waiting[j] += 1;
        }
        let mut ready: Vec<usize> = (0..n).filter(|&i| waiting[i] == 0).collect();
        for _ in 0..n {
            let pick = rng.random_range(0..ready.len());
            let i = ready.swap_remove(pick);
            for &j in &succ[i] {
                waiting[j] -= 1;
                if waiting[j] == 0 {
                    ready.push(j);
                }
            }
            match &self.blocks[&children[i]].kind {
                BlockKind::Primitive(s) => out.push(*s),
                BlockKind::Compound(_) => self.linearize_level(Some(children[i]), rng, out),
            }
        }
    }

    /// Up to `limit` block-respecting linearizations of the non-synthetic steps.
    pub fn linearizations(&self, limit: usize) -> Vec<Vec<StepId>> {
        self.level_sequences(None, limit)
    }

    /// Every order of a level's children, each child expanded into its own
    /// internal sequences (up to `limit`).
    fn level_sequences(&self, level: Option<BlockId>, limit: usize) -> Vec<Vec<StepId>> {
        let children: Vec<BlockId> = self.children(level).into_iter().filter(|b| !b.is_synthetic()).collect();
        let expansions: Vec<Vec<Vec<StepId>>> = children
            .iter()
            .map(|&c| match &self.blocks[&c].kind {
                BlockKind::Primitive(s) => vec![vec![*s]],
                BlockKind::Compound(_) => self.level_sequences(Some(c), limit),
            })
            .collect();
        let mut out = Vec::new();
        let mut used = vec![false; children.len()];
        self.sequences_rec(&children, &expansions, &mut used, Vec::new(), &mut out, limit);
        out
    }

    fn sequences_rec(
        &self,
        children: &[BlockId],
        expansions: &[Vec<Vec<StepId>>],
        used: &mut [bool],
        prefix: Vec<StepId>,
        out: &mut Vec<Vec<StepId>>,
        limit: usize,
    ) {
        if out.len() >= limit {
            return;
        }
        if used.iter().all(|&u| u) {
            out.push(prefix);
            return;
        }
        for i in 0..children.len() {
            if used[i] || (0..children.len()).any(|j| !used[j] && j != i && self.precedes(children[j], children[i])) {
                continue;
            }
            used[i] = true;
            for seq in &expansions[i] {
                let mut p = prefix.clone();
                p.extend_from_slice(seq);
                self.sequences_rec(children, expansions, used, p, out, limit);
                if out.len() >= limit {
                    break;
                }
            }
            used[i] = false;
        }
    }

    /// Turns a sequence of steps into a sequential plan over the task operators.
    pub fn to_sequential(&self, order: &[StepId]) -> Result<SequentialPlan> {
        let mut steps = Vec::with_capacity(order.len());
        let mut cost = 0;
        for s in order {
            let step = &self.steps[s];
            steps.push(step.source.ok_or_else(|| Error::InvalidInput(format!("{s} has no task operator")))?);
            cost += step.op.cost;
        }
        Ok(SequentialPlan { steps, cost })
    }

    /// The step-level partial-order view: steps, causal links (with PC
    /// reasons) and the remaining orderings implied by the blocks, imposed
    /// without reasons. Block semantics are not represented, so the view may
    /// fail step-level threat checks that the block structure resolves.
    pub fn to_pop(&self) -> PartialOrderPlan {
        let init = crate::facts::State(
            (0..self.space.num_vars())
                .map(|v| self.steps[&StepId::INIT].op.eff.get(v).expect("initial step assigns every variable"))
                .collect(),
        );
        let mut pop = PartialOrderPlan::new(self.space.clone(), &init, &self.steps[&StepId::GOAL].op.pre);
        for (&id, s) in &self.steps {
            if !id.is_synthetic() {
                pop.insert_step(id, s.op.clone(), s.source, s.rank);
            }
        }
        for l in &self.links {
            pop.add_link(*l);
            pop.add_reason(l.producer, l.consumer, OrderingReason::pc(l.fact)).expect("links follow the order");
        }
        for (a, b) in self.closure().reduction() {
            let (sa, sb) = (self.derived.ids[a], self.derived.ids[b]);
            if !pop.precedes(sa, sb) {
                pop.impose(sa, sb).expect("block order is acyclic");
            }
        }
        pop
    }

    /// Checks that the plan belongs to `task`: the synthetic steps match its
    /// initial state and goal and every step is one of its operators.
    pub fn matches_task(&self, task: &PlanningTask) -> ValidationReport {
        let mut report = ValidationReport::valid();
        let init: crate::facts::PartialState = task.init.facts().collect();
        if self.steps[&StepId::INIT].op.eff != init {
            report.push(Violation::TaskMismatch { detail: "initial step does not produce the initial state".into() });
        }
        if self.steps[&StepId::GOAL].op.pre != task.goal {
            report.push(Violation::TaskMismatch { detail: "goal step does not consume the goal".into() });
        }
        for (id, s) in &self.steps {
            if let Some(o) = s.source {
                if task.operators.get(o) != Some(&s.op) {
                    report.push(Violation::TaskMismatch { detail: format!("{id} does not match task operator {o}") });
                }
            }
        }
        report
    }

    /// Executes block-respecting linearizations on `task`: every one when the
    /// plan has at most `exhaustive_up_to` steps, otherwise `samples` seeded
    /// ones. Each failure is reported with the offending order.
    pub fn check_linearizations(&self, task: &PlanningTask, exhaustive_up_to: usize, samples: u64) -> ValidationReport {
        let orders = if self.len() <= exhaustive_up_to {
            self.linearizations(usize::MAX)
        } else {
            (0..samples).map(|seed| self.linearize_steps(seed)).collect()
        };
        let mut report = ValidationReport::valid();
        for order in orders {
            let seq = match self.to_sequential(&order) {
                Ok(seq) => seq,
                Err(e) => {
                    report.push(Violation::Structure { detail: format!("linearization {order:?}: {e}") });
                    continue;
                }
            };
            if let Some(v) = crate::task::validate_sequential(task, &seq).first() {
                report.push(Violation::Structure { detail: format!("linearization {order:?}: {v}") });
            }
        }
        report
    }
}

/// Applies the block semantics to a block's precondition and effect.
pub(crate) fn block_semantics(space: &FactSpace, pre: BTreeSet<Fact>, eff: BTreeSet<Fact>) -> BlockProfile {
    let cons = pre.clone();
    let mut eff_by_var: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for f in &eff {
        eff_by_var.entry(f.var).or_default().push(f.val);
    }
    let mut prod = BTreeSet::new();
    let mut del = BTreeSet::new();
    for (&var, vals) in &eff_by_var {
        if let [only] = vals.as_slice() {
            let f = Fact::new(var, *only);
            if !cons.contains(&f) {
                prod.insert(f);
            }
        }
        let consumed: Vec<usize> = cons.iter().filter(|f| f.var == var).map(|f| f.val).collect();
        for d in 0..space.domain(var) {
            let allowed = consumed.is_empty() || consumed.contains(&d);
            if allowed && vals.iter().any(|&e| e != d) {
                del.insert(Fact::new(var, d));
            }
        }
    }
    BlockProfile { pre, eff, cons, prod, del }
}

fn add_synthetic_edges(local: &HashMap<BlockId, usize>, children: &[BlockId], edges: &mut Vec<(usize, usize)>) {
    let (Some(&init), Some(&goal)) = (local.get(&BlockId::INIT), local.get(&BlockId::GOAL)) else { return };
    for (i, b) in children.iter().enumerate() {
        if !b.is_synthetic() {
            edges.push((init, i));
            edges.push((i, goal));
        }
    }
    edges.push((init, goal));
}

/// A snapshot of step orderings used to orient reasons after a structural
/// change.
struct Oracle {
    index: HashMap<StepId, usize>,
    closure: Closure,
    /// Extra orderings between steps the snapshot does not know.
    extra: BTreeSet<(StepId, StepId)>,
}

impl Oracle {
    fn from_plan(plan: &BdpoPlan) -> Self {
        Oracle { index: plan.derived.index.clone(), closure: plan.closure().clone(), extra: BTreeSet::new() }
    }

    fn from_pop(pop: &PartialOrderPlan) -> Self {
        let index = pop.step_ids().iter().enumerate().map(|(i, &s)| (s, i)).collect();
        Oracle { index, closure: pop.closure().clone(), extra: BTreeSet::new() }
    }

    fn extend_from_pop(&mut self, pop: &PartialOrderPlan, map: &BTreeMap<StepId, StepId>) {
        for (&a, &na) in map {
            for (&b, &nb) in map {
                if pop.precedes(a, b) {
                    self.extra.insert((na, nb));
                }
            }
        }
    }

    fn precedes(&self, a: StepId, b: StepId) -> bool {
        if self.extra.contains(&(a, b)) {
            return true;
        }
        match (self.index.get(&a), self.index.get(&b)) {
            (Some(&i), Some(&j)) => self.closure.precedes(i, j),
            _ => false,
        }
    }

    fn any_precedes(&self, xs: &[StepId], ys: &[StepId]) -> bool {
        xs.iter().any(|&a| ys.iter().any(|&b| self.precedes(a, b)))
    }
}

/// The profile of block `b`.
pub fn block_profile(plan: &BdpoPlan, b: BlockId) -> &BlockProfile {
    plan.profile(b)
}

/// Earliest candidate producer of `fact` among the outermost blocks for the
/// outermost block `consumer`.
///
/// A candidate produces the fact, precedes the consumer, and has no block
/// deleting the fact ordered strictly between itself and the consumer. Among
/// candidates, one with no other candidate before it is returned; ties go to
/// the earliest position.
pub fn earliest_candidate_producer(plan: &BdpoPlan, fact: Fact, consumer: BlockId) -> Option<BlockId> {
    candidate_producer_at(plan, fact, consumer, &BTreeSet::from([consumer]))
}

/// Earliest candidate producer for a block that will take the place of
/// `anchor`: ordering tests use `anchor`, and blocks in `exclude` are ignored.
pub(crate) fn candidate_producer_at(plan: &BdpoPlan, fact: Fact, anchor: BlockId, exclude: &BTreeSet<BlockId>) -> Option<BlockId> {
    let outer = plan.outer_blocks();
    let deleters: Vec<BlockId> =
        outer.iter().copied().filter(|&k| !exclude.contains(&k) && plan.profile(k).del.contains(&fact)).collect();
    let candidates: Vec<BlockId> = outer
        .iter()
        .copied()
        .filter(|&b| {
            !exclude.contains(&b)
                && b != anchor
                && plan.profile(b).prod.contains(&fact)
                && plan.precedes(b, anchor)
                && !deleters.iter().any(|&k| k != b && plan.precedes(b, k) && plan.precedes(k, anchor))
        })
        .collect();
    candidates.iter().copied().find(|&b| !candidates.iter().any(|&c| c != b && plan.precedes(c, b)))
}

#[cfg(test)]
mod tests;
