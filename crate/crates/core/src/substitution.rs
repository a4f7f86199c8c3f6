//! Block substitution.
//!
//! [`substitute`] replaces a block of a [`BdpoPlan`] by another block, either a
//! fresh subplan ([`CandidateBlock`]) or a block already in the plan, and
//! repairs the plan around it:
//!
//! 1. a fresh block is inserted and each of its preconditions is bound to the
//!    earliest candidate producer of the fact;
//! 2. every causal link the old block supplied is re-pointed at the new
//!    block, which must produce the fact;
//! 3. the old block is deleted and every threat that appears is resolved by
//!    demotion or promotion, or — when both would close a cycle and the new
//!    block is involved — by substituting the conflicting block with the new
//!    one.
//!
//! All work happens on a copy; a failed substitution leaves the input alone.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::bdpo::{block_semantics, candidate_producer_at, supplier_step, BdpoPlan, BlockId, BlockProfile};
use crate::facts::Fact;
use crate::pop::{CausalLink, OrderingReason, PartialOrderPlan, StepId};

/// A subplan offered as the replacement of a block.
#[derive(Clone, Debug)]
pub struct CandidateBlock {
    /// The subplan, with its own initial and goal steps.
    pub subplan: PartialOrderPlan,
    /// Block semantics of the subplan's real steps.
    pub profile: BlockProfile,
    pub cost: u64,
}

impl CandidateBlock {
    /// Wraps a subplan. Its precondition is what the subplan's initial step
    /// supplies to real steps; its effect is the last value each step writes.
    pub fn new(subplan: PartialOrderPlan) -> Self {
        let real = subplan.real_steps();
        let space = subplan.space().clone();
        let profile = if let [only] = real.as_slice() {
            let step = subplan.step(*only);
            let pre: BTreeSet<Fact> = step.op.pre.facts().collect();
            let eff: BTreeSet<Fact> = step.op.eff.facts().collect();
            BlockProfile { cons: pre.clone(), prod: eff.clone(), del: step.del.clone(), pre, eff }
        } else {
            let pre: BTreeSet<Fact> = subplan
                .links()
                .iter()
                .filter(|l| l.producer == StepId::INIT && !l.consumer.is_synthetic())
                .map(|l| l.fact)
                .collect();
            let mut eff = BTreeSet::new();
            for &s in &real {
                for f in subplan.step(s).op.eff.facts() {
                    let overwritten = real.iter().any(|&t| {
                        subplan.precedes(s, t) && subplan.step(t).op.eff.get(f.var).is_some_and(|d| d != f.val)
                    });
                    if !overwritten {
                        eff.insert(f);
                    }
                }
            }
            block_semantics(&space, pre, eff)
        };
        let cost = subplan.cost();
        CandidateBlock { subplan, profile, cost }
    }

    /// Number of operators in the candidate.
    pub fn len(&self) -> usize {
        self.subplan.real_steps().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Facts the candidate's steps receive from outside, with the receiving steps.
    fn requirements(&self) -> BTreeMap<Fact, Vec<StepId>> {
        let mut out: BTreeMap<Fact, Vec<StepId>> = BTreeMap::new();
        for l in self.subplan.links() {
            if l.producer == StepId::INIT && !l.consumer.is_synthetic() {
                out.entry(l.fact).or_default().push(l.consumer);
            }
        }
        out
    }
}

/// The block that takes the place of the substituted one.
#[derive(Clone, Debug)]
pub enum Replacement {
    /// A subplan from outside the plan.
    External(CandidateBlock),
    /// A block already in the plan.
    Internal(BlockId),
}

impl From<CandidateBlock> for Replacement {
    fn from(c: CandidateBlock) -> Self {
        Replacement::External(c)
    }
}

impl From<BlockId> for Replacement {
    fn from(b: BlockId) -> Self {
        Replacement::Internal(b)
    }
}

/// Why a substitution failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FailureReason {
    /// A precondition of the new block has no candidate producer.
    UnboundPrecondition,
    /// The new block does not produce a fact the old block supplied.
    MissingProduct,
    /// A threat could be resolved neither by ordering nor by internal substitution.
    UnresolvableThreat,
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FailureReason::UnboundPrecondition => "unbound precondition",
            FailureReason::MissingProduct => "missing product",
            FailureReason::UnresolvableThreat => "unresolvable threat",
        };
        f.write_str(s)
    }
}

/// One decision taken during a substitution.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum TraceEvent {
    Inserted { block: BlockId, steps: Vec<StepId> },
    Linked { producer: StepId, fact: Fact, consumer: StepId },
    Ordered { before: BlockId, after: BlockId, reason: OrderingReason },
    Removed { block: BlockId },
    InternalSubstitution { replaced: BlockId, by: BlockId },
    Failed { reason: FailureReason, detail: String },
}

/// Result of [`substitute`].
#[derive(Clone, Debug)]
pub struct SubstitutionOutcome {
    /// The new plan on success, the untouched input otherwise.
    pub plan: BdpoPlan,
    pub success: bool,
    /// The block that replaced the old one (`None` for an empty candidate or on failure).
    pub new_block: Option<BlockId>,
    pub failure: Option<FailureReason>,
    pub trace: Vec<TraceEvent>,
}

impl SubstitutionOutcome {
    /// The trace as JSON.
    pub fn trace_json(&self) -> serde_json::Value {
        serde_json::json!({
            "success": self.success,
            "new_block": self.new_block,
            "failure": self.failure,
            "trace": self.trace,
        })
    }
}

/// A block that may delete a linked fact while the link is open.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Threat {
    pub threat: BlockId,
    pub producer: BlockId,
    pub fact: Fact,
    pub consumer: BlockId,
}

/// All threats among the outermost blocks: a block deleting the fact of a
/// causal link while being ordered neither before its producer nor after its
/// consumer. Sorted by the positions of producer, consumer and threat.
pub fn detect_threats(plan: &BdpoPlan) -> Vec<Threat> {
    let links = plan.level_links(None);
    let mut out = Vec::new();
    for &k in plan.outer_blocks() {
        let del = &plan.profile(k).del;
        if del.is_empty() {
            continue;
        }
        for &(p, fact, c) in &links {
            let (Some(i), Some(j)) = (p, c) else { continue };
            if k == i || k == j || !del.contains(&fact) {
                continue;
            }
            if !plan.precedes(k, i) && !plan.precedes(j, k) {
                out.push(Threat { threat: k, producer: i, fact, consumer: j });
            }
        }
    }
    out.sort_by_key(|t| (plan.position(t.producer), plan.position(t.consumer), plan.position(t.threat), *t));
    out
}

type Failure = (FailureReason, String);
type Attempt<T> = std::result::Result<T, Failure>;

fn fail<T>(reason: FailureReason, detail: impl Into<String>) -> Attempt<T> {
    Err((reason, detail.into()))
}

/// Replaces the outermost block `old` by `new`.
pub fn substitute(plan: &BdpoPlan, old: BlockId, new: impl Into<Replacement>) -> SubstitutionOutcome {
    let mut trace = Vec::new();
    let mut work = plan.clone();
    let result = run(&mut work, &mut trace, old, new.into());
    match result {
        Ok(new_block) => SubstitutionOutcome { plan: work, success: true, new_block, failure: None, trace },
        Err((reason, detail)) => {
            log::debug!("substitution of {old} failed: {reason}: {detail}");
            trace.push(TraceEvent::Failed { reason, detail });
            SubstitutionOutcome { plan: plan.clone(), success: false, new_block: None, failure: Some(reason), trace }
        }
    }
}

fn run(w: &mut BdpoPlan, trace: &mut Vec<TraceEvent>, old: BlockId, new: Replacement) -> Attempt<Option<BlockId>> {
    if !w.outer_blocks().contains(&old) || old.is_synthetic() {
        return fail(FailureReason::MissingProduct, format!("{old} is not a replaceable outermost block"));
    }
    let nb = match new {
        Replacement::External(cand) => {
            let bind = |p: &BdpoPlan, f: Fact, nb: BlockId| candidate_producer_at(p, f, old, &BTreeSet::from([old, nb]));
            let nb = insert_external(w, trace, old, &cand, &bind)?;
            if let Some(nb) = nb {
                let bindings = trace.iter().filter(|e| matches!(e, TraceEvent::Linked { .. })).count();
                log::trace!("inserted {nb} for {old} with {bindings} bindings");
            }
            nb
        }
        Replacement::Internal(b) => {
            if b == old || !w.outer_blocks().contains(&b) || b.is_synthetic() {
                return fail(FailureReason::MissingProduct, format!("{b} cannot replace {old}"));
            }
            Some(b)
        }
    };
    rebind_and_remove(w, trace, old, nb)?;
    resolve_threats(w, trace, nb)?;
    finish(w)?;
    Ok(nb)
}

/// Phase 1: inserts the candidate and binds its preconditions.
fn insert_external(
    w: &mut BdpoPlan,
    trace: &mut Vec<TraceEvent>,
    old: BlockId,
    cand: &CandidateBlock,
    bind: &dyn Fn(&BdpoPlan, Fact, BlockId) -> Option<BlockId>,
) -> Attempt<Option<BlockId>> {
    if cand.is_empty() {
        return Ok(None);
    }
    let rank = w.fresh_rank(w.position(old));
    let (nb, map) = w.insert_fragment(&cand.subplan, rank).map_err(|e| (FailureReason::UnresolvableThreat, e.to_string()))?;
    trace.push(TraceEvent::Inserted { block: nb, steps: map.values().copied().collect() });
    for (fact, consumers) in cand.requirements() {
        let Some(p) = bind(w, fact, nb) else {
            return fail(FailureReason::UnboundPrecondition, format!("no candidate producer of {fact}"));
        };
        bind_to(w, trace, p, fact, nb, consumers.iter().map(|c| map[c]))?;
    }
    Ok(Some(nb))
}

fn bind_to(
    w: &mut BdpoPlan,
    trace: &mut Vec<TraceEvent>,
    p: BlockId,
    fact: Fact,
    nb: BlockId,
    consumers: impl Iterator<Item = StepId>,
) -> Attempt<()> {
    let Some(s) = supplier_step(w, p, fact) else {
        return fail(FailureReason::UnboundPrecondition, format!("{p} has no final writer of {fact}"));
    };
    for c in consumers {
        w.relink(c, fact, s);
        trace.push(TraceEvent::Linked { producer: s, fact, consumer: c });
    }
    order(w, trace, p, nb, OrderingReason::pc(fact))
        .map_err(|_| (FailureReason::UnresolvableThreat, format!("binding {fact} from {p} closes a cycle")))
}

fn order(w: &mut BdpoPlan, trace: &mut Vec<TraceEvent>, a: BlockId, b: BlockId, reason: OrderingReason) -> crate::error::Result<()> {
    w.add_root_reason(a, b, reason)?;
    trace.push(TraceEvent::Ordered { before: a, after: b, reason });
    Ok(())
}

/// Phase 2 and the deletion: moves the links `old` supplies onto `nb`, then
/// removes `old` together with every ordering that passed through it.
fn rebind_and_remove(w: &mut BdpoPlan, trace: &mut Vec<TraceEvent>, old: BlockId, nb: Option<BlockId>) -> Attempt<()> {
    let outgoing: Vec<CausalLink> =
        w.links().iter().copied().filter(|l| w.is_member(l.producer, old) && !w.is_member(l.consumer, old)).collect();
    for l in outgoing {
        let Some(nb) = nb.filter(|&nb| w.profile(nb).prod.contains(&l.fact) && !w.is_member(l.consumer, nb)) else {
            return fail(FailureReason::MissingProduct, format!("{old} supplies {} to {}", l.fact, l.consumer));
        };
        let Some(s) = supplier_step(w, nb, l.fact) else {
            return fail(FailureReason::MissingProduct, format!("{nb} has no final writer of {}", l.fact));
        };
        w.relink(l.consumer, l.fact, s);
        trace.push(TraceEvent::Linked { producer: s, fact: l.fact, consumer: l.consumer });
        let y = w.outer_of(l.consumer);
        if !w.precedes(nb, y) || w.reasons_for(nb, y).is_none() {
            order(w, trace, nb, y, OrderingReason::pc(l.fact))
                .map_err(|_| (FailureReason::UnresolvableThreat, format!("{nb} cannot precede {y}")))?;
        }
    }
    w.isolate(old).map_err(|e| (FailureReason::UnresolvableThreat, e.to_string()))?;
    w.remove_block(old).map_err(|e| (FailureReason::UnresolvableThreat, e.to_string()))?;
    trace.push(TraceEvent::Removed { block: old });
    Ok(())
}

/// The ordering that resolves a threat: demotion unless the threat already
/// precedes the consumer, in which case promotion.
fn resolution(w: &BdpoPlan, t: &Threat) -> (BlockId, BlockId, OrderingReason) {
    if !w.precedes(t.threat, t.consumer) {
        (t.consumer, t.threat, OrderingReason::cd(t.fact))
    } else {
        (t.threat, t.producer, OrderingReason::dp(t.fact))
    }
}

/// Phase 3: resolves threats one at a time, earliest first.
fn resolve_threats(w: &mut BdpoPlan, trace: &mut Vec<TraceEvent>, nb: Option<BlockId>) -> Attempt<()> {
    let limit = 4 * w.outer_blocks().len().pow(2) + 16;
    for _ in 0..limit {
        let Some(t) = detect_threats(w).into_iter().next() else { return Ok(()) };
        let (a, b, reason) = resolution(w, &t);
        if order(w, trace, a, b, reason).is_ok() {
            continue;
        }
        let conflicting = match nb {
            Some(n) if t.threat == n => t.consumer,
            Some(n) if t.consumer == n => t.threat,
            _ => {
                return fail(
                    FailureReason::UnresolvableThreat,
                    format!("{} threatens {} -{}-> {}", t.threat, t.producer, t.fact, t.consumer),
                )
            }
        };
        let n = nb.expect("matched above");
        if conflicting.is_synthetic() {
            return fail(FailureReason::UnresolvableThreat, format!("{conflicting} cannot be substituted"));
        }
        internal_substitution(w, trace, conflicting, n)?;
    }
    fail(FailureReason::UnresolvableThreat, "threat resolution did not settle")
}

/// Substitutes a block that conflicts with the new block by the new block.
/// Threats left behind may only be resolved by ordering.
fn internal_substitution(w: &mut BdpoPlan, trace: &mut Vec<TraceEvent>, conflicting: BlockId, by: BlockId) -> Attempt<()> {
    let inner = rebind_and_remove(w, trace, conflicting, Some(by)).and_then(|()| {
        trace.push(TraceEvent::InternalSubstitution { replaced: conflicting, by });
        resolve_threats(w, trace, None)
    });
    inner.map_err(|(reason, detail)| {
        (FailureReason::UnresolvableThreat, format!("{by} cannot substitute {conflicting}: {reason}: {detail}"))
    })
}

fn finish(w: &mut BdpoPlan) -> Attempt<()> {
    w.normalize().map_err(|e| (FailureReason::UnresolvableThreat, e.to_string()))?;
    let report = w.validate();
    if let Some(v) = report.first() {
        return fail(FailureReason::UnresolvableThreat, format!("result is invalid: {v}"));
    }
    Ok(())
}

/// Exhaustive substitution search used as a completeness reference.
///
/// Unlike [`substitute`], every precondition of the candidate may be bound to
/// any producer ordered before `old`, and every threat may be resolved by
/// either demotion or promotion. Returns the first valid plan found, or
/// `None` if the search space (bounded by `budget` resolution attempts) holds
/// none.
pub fn substitute_exhaustive(plan: &BdpoPlan, old: BlockId, cand: &CandidateBlock, budget: usize) -> Option<BdpoPlan> {
    if cand.is_empty() || !plan.outer_blocks().contains(&old) || old.is_synthetic() {
        return None;
    }
    let reqs: Vec<(Fact, Vec<StepId>)> = cand.requirements().into_iter().collect();
    let options: Vec<Vec<BlockId>> = reqs
        .iter()
        .map(|(f, _)| {
            plan.outer_blocks()
                .iter()
                .copied()
                .filter(|&b| b != old && plan.profile(b).prod.contains(f) && plan.precedes(b, old))
                .collect()
        })
        .collect();
    if options.iter().any(Vec::is_empty) {
        return None;
    }
    let mut budget = budget;
    let mut choice = vec![0usize; reqs.len()];
    loop {
        let mut w = plan.clone();
        let mut trace = Vec::new();
        let attempt = (|| -> Attempt<BlockId> {
            let rank = w.fresh_rank(w.position(old));
            let (nb, map) = w.insert_fragment(&cand.subplan, rank).map_err(|e| (FailureReason::UnresolvableThreat, e.to_string()))?;
            for (k, (fact, consumers)) in reqs.iter().enumerate() {
                bind_to(&mut w, &mut trace, options[k][choice[k]], *fact, nb, consumers.iter().map(|c| map[c]))?;
            }
            rebind_and_remove(&mut w, &mut trace, old, Some(nb))?;
            Ok(nb)
        })();
        if attempt.is_ok() {
            if let Some(found) = search_resolutions(w, &mut budget) {
                return Some(found);
            }
        }
        // Next binding combination.
        let mut k = 0;
        loop {
            if k == choice.len() {
                return None;
            }
            choice[k] += 1;
            if choice[k] < options[k].len() {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
        if budget == 0 {
            return None;
        }
    }
}

fn search_resolutions(mut w: BdpoPlan, budget: &mut usize) -> Option<BdpoPlan> {
    if *budget == 0 {
        return None;
    }
    *budget -= 1;
    let Some(t) = detect_threats(&w).into_iter().next() else {
        return finish(&mut w).ok().map(|_| w);
    };
    let options = [
        (t.consumer, t.threat, OrderingReason::cd(t.fact)),
        (t.threat, t.producer, OrderingReason::dp(t.fact)),
    ];
    for (a, b, reason) in options {
        let mut next = w.clone();
        if next.add_root_reason(a, b, reason).is_ok() {
            if let Some(found) = search_resolutions(next, budget) {
                return Some(found);
            }
        }
    }
    None
}

#[cfg(test)]
mod tests;
