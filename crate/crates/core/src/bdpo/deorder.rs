//! Block deordering: removing orderings between blocks by wrapping blocks
//! into larger ones whose combined semantics no longer require the ordering.
//!
//! For a reason on `b_i ≺ b_j` between outermost blocks:
//!
//! * `PC(f)`: an earlier block `b_c ≺ b_i` that also consumes `f` from some
//!   producer `p` is wrapped together with `b_i`; `b_j` is then served by `p`.
//! * `CD(f)` (producer side): a block `b_p ≺ b_i` that produces `f` is wrapped
//!   with `b_i`, which takes `f` from `b_p`, so the new block no longer
//!   consumes it.
//! * `CD(f)` (deleter side): a later block `b_p` with `b_j ≺ b_p` that produces
//!   `f` again is wrapped with `b_j`, so the new block no longer deletes it.
//! * `DP(f)`: `b_j` is wrapped with every block it supplies `f` to, so the new
//!   block no longer produces `f` for anyone outside.
//!
//! Every new block is the convex hull of its seed blocks. When a member then
//! supplies an outside block with a fact the new block does not produce, that
//! consumer is absorbed as well. An ordering is removed only when all of its
//! reasons go, the plan stays valid and flex does not drop; otherwise nothing
//! changes.

use std::collections::BTreeSet;

use super::{BdpoPlan, BlockId, BlockKind};
use crate::facts::Fact;
use crate::pop::{OrderingReason, Rank, ReasonKind, StepId};

/// Greedily removes orderings between outermost blocks until no ordering can
/// be removed. Orderings are scanned by the positions of their source and
/// target, and the scan restarts after every removal.
pub fn block_deorder(plan: &BdpoPlan) -> BdpoPlan {
    let mut plan = plan.clone();
    'scan: loop {
        for (a, b) in plan.root_orderings() {
            if let Some(next) = remove_ordering(&plan, a, b) {
                log::debug!("removed ordering {a} ≺ {b}; flex now {}", next.flex());
                plan = next;
                continue 'scan;
            }
        }
        return plan;
    }
}

/// Upper bound on the transformations explored while removing one ordering.
const SEARCH_BUDGET: usize = 64;

/// Tries to remove every reason on `a ≺ b`, cascading through the blocks
/// that contain `a` and `b` as new blocks are formed. When a choice of block
/// leads to a dead end, the next choice is tried.
fn remove_ordering(plan: &BdpoPlan, a: BlockId, b: BlockId) -> Option<BdpoPlan> {
    let unordered_before = plan.flex().unordered_pairs;
    let reps = (plan.representative(a), plan.representative(b));
    let mut budget = SEARCH_BUDGET;
    cascade(plan, reps, unordered_before, &mut budget)
}

fn cascade(work: &BdpoPlan, reps: (StepId, StepId), unordered_before: usize, budget: &mut usize) -> Option<BdpoPlan> {
    let (ca, cb) = (work.outer_of(reps.0), work.outer_of(reps.1));
    if ca == cb {
        return None;
    }
    let Some(&reason) = work.reasons_for(ca, cb).and_then(|r| r.iter().next()) else {
        let done = !work.ordered(ca, cb) && work.flex().unordered_pairs >= unordered_before;
        return done.then(|| work.clone());
    };
    for next in reason_removals(work, ca, cb, reason) {
        if *budget == 0 {
            return None;
        }
        *budget -= 1;
        if let Some(done) = cascade(&next, reps, unordered_before, budget) {
            return Some(done);
        }
    }
    None
}

/// Removes one reason from the ordering between two outermost blocks.
///
/// Returns `false` and leaves the plan untouched when no rule applies or no
/// transformation yields a valid plan.
pub fn try_remove_reason(plan: &mut BdpoPlan, edge: (BlockId, BlockId), reason: OrderingReason) -> bool {
    match remove_reason(plan, edge.0, edge.1, reason) {
        Some(next) => {
            *plan = next;
            true
        }
        None => false,
    }
}

/// A way to remove a reason: blocks to wrap, blocks that must stay outside,
/// and causal links to redirect first.
struct Candidate {
    seed: BTreeSet<BlockId>,
    forbidden: BTreeSet<BlockId>,
    relinks: Vec<(StepId, Fact, StepId)>,
    position: Rank,
}

fn remove_reason(plan: &BdpoPlan, bi: BlockId, bj: BlockId, reason: OrderingReason) -> Option<BdpoPlan> {
    reason_removals(plan, bi, bj, reason).into_iter().next()
}

/// Every valid plan in which `reason` no longer orders the blocks that
/// contain `bi` and `bj`, preferring small new blocks and early positions.
fn reason_removals(plan: &BdpoPlan, bi: BlockId, bj: BlockId, reason: OrderingReason) -> Vec<BdpoPlan> {
    if !plan.reasons_for(bi, bj).is_some_and(|r| r.contains(&reason)) {
        return Vec::new();
    }
    let (rep_i, rep_j) = (plan.representative(bi), plan.representative(bj));
    let mut results: Vec<(usize, Rank, usize, BdpoPlan)> = Vec::new();
    for (order, cand) in candidates(plan, bi, bj, reason).into_iter().enumerate() {
        if let Some((size, next)) = apply(plan, &cand) {
            results.push((size, cand.position, order, next));
        }
    }
    results.sort_by(|x, y| (x.0, x.1, x.2).cmp(&(y.0, y.1, y.2)));
    results
        .into_iter()
        .map(|r| r.3)
        .filter(|next| {
            let (ci, cj) = (next.outer_of(rep_i), next.outer_of(rep_j));
            ci != cj && !next.reasons_for(ci, cj).is_some_and(|r| r.contains(&reason)) && next.validate().is_valid()
        })
        .collect()
}

fn candidates(plan: &BdpoPlan, bi: BlockId, bj: BlockId, reason: OrderingReason) -> Vec<Candidate> {
    let f = reason.fact;
    let synthetic = [BlockId::INIT, BlockId::GOAL];
    let others = || plan.outer_blocks().iter().copied().filter(move |&x| x != bi && x != bj && !x.is_synthetic());
    let mut out = Vec::new();
    match reason.kind {
        ReasonKind::ProducerConsumer => {
            for bc in others().filter(|&x| plan.precedes(x, bi) && plan.profile(x).cons.contains(&f)) {
                let Some(link) = plan.links.iter().find(|l| {
                    l.fact == f && plan.is_member(l.consumer, bc) && !plan.is_member(l.producer, bc)
                }) else {
                    continue;
                };
                let p = link.producer;
                let relinks = plan
                    .links
                    .iter()
                    .filter(|l| l.fact == f && plan.is_member(l.producer, bi) && plan.is_member(l.consumer, bj))
                    .map(|l| (l.consumer, f, p))
                    .collect();
                let mut forbidden = BTreeSet::from([bj, plan.outer_of(p)]);
                forbidden.extend(synthetic);
                out.push(Candidate { seed: BTreeSet::from([bc, bi]), forbidden, relinks, position: plan.position(bc) });
            }
        }
        ReasonKind::ConsumerDeleter => {
            for bp in others().filter(|&x| plan.precedes(x, bi) && plan.profile(x).prod.contains(&f)) {
                let Some(s) = supplier_step(plan, bp, f) else { continue };
                let relinks = plan
                    .links
                    .iter()
                    .filter(|l| l.fact == f && plan.is_member(l.consumer, bi) && !plan.is_member(l.producer, bp))
                    .map(|l| (l.consumer, f, s))
                    .collect();
                let mut forbidden = BTreeSet::from([bj]);
                forbidden.extend(synthetic);
                out.push(Candidate { seed: BTreeSet::from([bp, bi]), forbidden, relinks, position: plan.position(bp) });
            }
            for bp in others().filter(|&x| plan.precedes(bj, x) && plan.profile(x).prod.contains(&f)) {
                let mut forbidden = BTreeSet::from([bi]);
                forbidden.extend(synthetic);
                out.push(Candidate { seed: BTreeSet::from([bj, bp]), forbidden, relinks: Vec::new(), position: plan.position(bp) });
            }
        }
        ReasonKind::DeleterProducer => {
            let consumers: BTreeSet<BlockId> = plan
                .links
                .iter()
                .filter(|l| l.fact == f && plan.is_member(l.producer, bj) && !plan.is_member(l.consumer, bj))
                .map(|l| plan.outer_of(l.consumer))
                .collect();
            if !consumers.is_empty() && !consumers.contains(&BlockId::GOAL) && !consumers.contains(&bi) {
                let mut seed = consumers;
                seed.insert(bj);
                let mut forbidden = BTreeSet::from([bi]);
                forbidden.extend(synthetic);
                out.push(Candidate { seed, forbidden, relinks: Vec::new(), position: plan.position(bj) });
            }
        }
    }
    out
}

/// The member step whose effect on `f`'s variable survives to the end of the block.
pub(crate) fn supplier_step(plan: &BdpoPlan, b: BlockId, f: Fact) -> Option<StepId> {
    let members = plan.members(b);
    let writers: Vec<StepId> = members.iter().copied().filter(|s| plan.steps[s].op.eff.get(f.var).is_some()).collect();
    let mut finals: Vec<StepId> = writers
        .iter()
        .copied()
        .filter(|&s| plan.steps[&s].op.eff.contains(f) && !writers.iter().any(|&t| t != s && plan.step_precedes(s, t)))
        .collect();
    finals.sort_by_key(|s| (plan.steps[s].rank, *s));
    finals.first().copied()
}

/// Outermost blocks lying between two seed blocks (inclusive).
fn convex_hull(plan: &BdpoPlan, seed: &BTreeSet<BlockId>) -> BTreeSet<BlockId> {
    let within = |x: BlockId, y: BlockId| x == y || plan.precedes(x, y);
    plan.outer_blocks()
        .iter()
        .copied()
        .filter(|&x| seed.iter().any(|&s| within(s, x)) && seed.iter().any(|&s| within(x, s)))
        .collect()
}

/// Applies a candidate; returns the size of the final hull and the plan.
fn apply(plan: &BdpoPlan, cand: &Candidate) -> Option<(usize, BdpoPlan)> {
    let mut seed = cand.seed.clone();
    for _ in 0..plan.outer_blocks().len() {
        let hull = convex_hull(plan, &seed);
        if hull.len() < 2 || !hull.is_disjoint(&cand.forbidden) {
            return None;
        }
        let mut work = plan.clone();
        for &(consumer, f, producer) in &cand.relinks {
            work.relink(consumer, f, producer);
        }
        let b = work.wrap(&hull).ok()?;
        let prod = &work.profile(b).prod;
        let missing: BTreeSet<BlockId> = work
            .links
            .iter()
            .filter(|l| work.is_member(l.producer, b) && !work.is_member(l.consumer, b) && !prod.contains(&l.fact))
            .map(|l| plan.outer_of(l.consumer))
            .collect();
        if missing.is_empty() {
            return Some((hull.len(), work));
        }
        if !missing.is_disjoint(&cand.forbidden) {
            return None;
        }
        seed.extend(missing);
    }
    None
}

impl BdpoPlan {
    /// Whether the block is a compound block.
    pub fn is_compound(&self, b: BlockId) -> bool {
        matches!(self.blocks[&b].kind, BlockKind::Compound(_))
    }
}
