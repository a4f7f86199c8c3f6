//! Partial-order plans with reasoned orderings, causal links and a cached
//! transitive closure.
//!
//! Every operator occurrence is a [`Step`] with a stable [`StepId`]. The
//! synthetic initial step ([`StepId::INIT`]) produces the initial state and
//! precedes every other step; the synthetic goal step ([`StepId::GOAL`])
//! consumes the goal and follows every other step. An ordering is *basic* when
//! it carries at least one [`OrderingReason`]; the closure holds the rest.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::closure::Closure;
use crate::error::{Error, Result};
use crate::facts::{Fact, FactSpace, PartialState, State};
use crate::task::{OperatorDef, PlanningTask, SequentialPlan};
use crate::validation::{ValidationReport, Violation};

/// Stable identifier of an operator occurrence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StepId(pub u32);

impl StepId {
    /// The synthetic step producing the initial state.
    pub const INIT: StepId = StepId(0);
    /// The synthetic step consuming the goal.
    pub const GOAL: StepId = StepId(1);

    pub fn is_synthetic(self) -> bool {
        self == Self::INIT || self == Self::GOAL
    }
}

impl fmt::Display for StepId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::INIT => f.write_str("init"),
            Self::GOAL => f.write_str("goal"),
            StepId(n) => write!(f, "s{n}"),
        }
    }
}

/// Position of a step relative to the sequential plan it came from.
///
/// Steps of the input plan have rank `(i, 0)` for one-based position `i`;
/// steps inserted later share the position of what they replaced and count
/// upwards in the second component. The initial step ranks first and the goal
/// step last.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Rank(pub u32, pub u32);

impl Rank {
    pub const INIT: Rank = Rank(0, 0);
    pub const GOAL: Rank = Rank(u32::MAX, 0);
}

/// The three kinds of ordering reasons.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ReasonKind {
    /// The earlier step produces a fact the later one consumes.
    #[serde(rename = "PC")]
    ProducerConsumer,
    /// The earlier step consumes a fact the later one deletes.
    #[serde(rename = "CD")]
    ConsumerDeleter,
    /// The earlier step deletes a fact the later one produces for someone else.
    #[serde(rename = "DP")]
    DeleterProducer,
}

impl ReasonKind {
    pub fn label(self) -> &'static str {
        match self {
            ReasonKind::ProducerConsumer => "PC",
            ReasonKind::ConsumerDeleter => "CD",
            ReasonKind::DeleterProducer => "DP",
        }
    }
}

/// Why one step (or block) must precede another.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OrderingReason {
    pub kind: ReasonKind,
    pub fact: Fact,
}

impl OrderingReason {
    pub fn pc(fact: Fact) -> Self {
        OrderingReason { kind: ReasonKind::ProducerConsumer, fact }
    }
    pub fn cd(fact: Fact) -> Self {
        OrderingReason { kind: ReasonKind::ConsumerDeleter, fact }
    }
    pub fn dp(fact: Fact) -> Self {
        OrderingReason { kind: ReasonKind::DeleterProducer, fact }
    }
}

impl fmt::Display for OrderingReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.kind.label(), self.fact)
    }
}

/// A commitment that `producer` supplies `fact` to `consumer`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CausalLink {
    pub producer: StepId,
    pub fact: Fact,
    pub consumer: StepId,
}

/// An operator occurrence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Step {
    pub op: OperatorDef,
    /// Index of the operator in the task, or `None` for the synthetic steps.
    pub source: Option<usize>,
    pub rank: Rank,
    /// Facts deleted by the operator.
    pub del: BTreeSet<Fact>,
}

/// Flexibility of a plan: the share of step pairs left unordered.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct FlexScore {
    pub unordered_pairs: usize,
    pub total_pairs: usize,
}

impl FlexScore {
    /// `1 − ordered/total`, defined as 1 when there are no pairs.
    pub fn value(&self) -> f64 {
        if self.total_pairs == 0 {
            1.0
        } else {
            self.unordered_pairs as f64 / self.total_pairs as f64
        }
    }

    /// Flex in hundredths, rounded half up; plans are compared at this precision.
    pub fn hundredths(&self) -> u32 {
        if self.total_pairs == 0 {
            100
        } else {
            ((200 * self.unordered_pairs + self.total_pairs) / (2 * self.total_pairs)) as u32
        }
    }

    /// Compares two scores by their exact ratio.
    pub fn cmp_value(&self, other: &FlexScore) -> std::cmp::Ordering {
        let lhs = if self.total_pairs == 0 { (1, 1) } else { (self.unordered_pairs as u128, self.total_pairs as u128) };
        let rhs = if other.total_pairs == 0 { (1, 1) } else { (other.unordered_pairs as u128, other.total_pairs as u128) };
        (lhs.0 * rhs.1).cmp(&(rhs.0 * lhs.1))
    }

    pub fn ordered_pairs(&self) -> usize {
        self.total_pairs - self.unordered_pairs
    }

    /// Counts pairs for `n` steps of which `ordered` pairs are ordered.
    pub fn from_counts(n: usize, ordered: usize) -> Self {
        let total_pairs = n * n.saturating_sub(1) / 2;
        FlexScore { unordered_pairs: total_pairs - ordered, total_pairs }
    }
}

impl fmt::Display for FlexScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} ({}/{} unordered)", self.value(), self.unordered_pairs, self.total_pairs)
    }
}

/// A partial-order plan.
#[derive(Clone, Debug)]
pub struct PartialOrderPlan {
    space: Arc<FactSpace>,
    steps: BTreeMap<StepId, Step>,
    links: BTreeSet<CausalLink>,
    reasons: BTreeMap<(StepId, StepId), BTreeSet<OrderingReason>>,
    /// Orderings imposed without a recorded reason (for example by a decoded
    /// MaxSAT model); they count as basic orderings.
    imposed: BTreeSet<(StepId, StepId)>,
    next_id: u32,
    ids: Vec<StepId>,
    index: HashMap<StepId, usize>,
    closure: Closure,
}

impl PartialEq for PartialOrderPlan {
    fn eq(&self, other: &Self) -> bool {
        self.steps == other.steps
            && self.links == other.links
            && self.reasons == other.reasons
            && self.imposed == other.imposed
    }
}

impl PartialOrderPlan {
    /// A plan holding only the synthetic steps for `init` and `goal`.
    pub fn new(space: Arc<FactSpace>, init: &State, goal: &PartialState) -> Self {
        let mut pop = PartialOrderPlan {
            space,
            steps: BTreeMap::new(),
            links: BTreeSet::new(),
            reasons: BTreeMap::new(),
            imposed: BTreeSet::new(),
            next_id: 2,
            ids: Vec::new(),
            index: HashMap::new(),
            closure: Closure::new(0),
        };
        let init_op = OperatorDef { name: "init".into(), pre: PartialState::new(), eff: init.facts().collect(), cost: 0 };
        let goal_op = OperatorDef { name: "goal".into(), pre: goal.clone(), eff: PartialState::new(), cost: 0 };
        pop.steps.insert(StepId::INIT, Step { op: init_op, source: None, rank: Rank::INIT, del: BTreeSet::new() });
        pop.steps.insert(StepId::GOAL, Step { op: goal_op, source: None, rank: Rank::GOAL, del: BTreeSet::new() });
        pop.rebuild().expect("synthetic steps alone are acyclic");
        pop
    }

    /// A plan with the synthetic steps of `task`.
    pub fn for_task(task: &PlanningTask) -> Self {
        Self::new(task.space().clone(), &task.init, &task.goal)
    }

    pub fn space(&self) -> &Arc<FactSpace> {
        &self.space
    }

    /// Adds an operator occurrence, ordered only after the initial and before
    /// the goal step.
    pub fn add_step(&mut self, op: OperatorDef, source: Option<usize>, rank: Rank) -> StepId {
        let id = StepId(self.next_id);
        self.next_id += 1;
        self.insert_step(id, op, source, rank);
        id
    }

    /// Inserts a step under a caller-chosen id (used when rebuilding plans
    /// that must keep the ids of another plan).
    pub(crate) fn insert_step(&mut self, id: StepId, op: OperatorDef, source: Option<usize>, rank: Rank) {
        assert!(!self.steps.contains_key(&id), "step {id} already exists");
        self.next_id = self.next_id.max(id.0 + 1);
        let del = op.del(&self.space).into_iter().collect();
        self.steps.insert(id, Step { op, source, rank, del });
        self.rebuild().expect("a fresh step cannot close a cycle");
    }

    /// Removes a step with its links, reasons and imposed orderings.
    pub fn remove_step(&mut self, id: StepId) -> Result<()> {
        assert!(!id.is_synthetic(), "synthetic steps cannot be removed");
        self.steps.remove(&id);
        self.links.retain(|l| l.producer != id && l.consumer != id);
        self.reasons.retain(|&(a, b), _| a != id && b != id);
        self.imposed.retain(|&(a, b)| a != id && b != id);
        self.rebuild()
    }

    pub fn add_link(&mut self, link: CausalLink) {
        self.links.insert(link);
    }

    pub fn remove_link(&mut self, link: &CausalLink) -> bool {
        self.links.remove(link)
    }

    /// Adds a reason for `a ≺ b`, failing without change if it closes a cycle.
    pub fn add_reason(&mut self, a: StepId, b: StepId, reason: OrderingReason) -> Result<()> {
        self.order(a, b)?;
        self.reasons.entry((a, b)).or_default().insert(reason);
        Ok(())
    }

    /// Imposes `a ≺ b` without a reason.
    pub fn impose(&mut self, a: StepId, b: StepId) -> Result<()> {
        self.order(a, b)?;
        self.imposed.insert((a, b));
        Ok(())
    }

    fn order(&mut self, a: StepId, b: StepId) -> Result<()> {
        let (ia, ib) = (self.ix(a), self.ix(b));
        self.closure
            .insert(ia, ib)
            .map_err(|w| Error::CycleDetected(w.into_iter().map(|i| self.ids[i]).collect()))
    }

    /// Removes one reason; the pair stops being basic when its last reason goes.
    pub fn remove_reason(&mut self, a: StepId, b: StepId, reason: &OrderingReason) -> Result<bool> {
        let Some(set) = self.reasons.get_mut(&(a, b)) else { return Ok(false) };
        let removed = set.remove(reason);
        if set.is_empty() {
            self.reasons.remove(&(a, b));
            self.rebuild()?;
        }
        Ok(removed)
    }

    /// Recomputes the transitive closure of the basic orderings.
    pub fn recompute_closure(&mut self) -> Result<&Closure> {
        self.rebuild()?;
        Ok(&self.closure)
    }

    fn rebuild(&mut self) -> Result<()> {
        self.ids = self.steps.keys().copied().collect();
        self.index = self.ids.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        let (init, goal) = (self.index[&StepId::INIT], self.index[&StepId::GOAL]);
        let mut edges: Vec<(usize, usize)> = Vec::new();
        for (i, s) in self.ids.iter().enumerate() {
            if !s.is_synthetic() {
                edges.push((init, i));
                edges.push((i, goal));
            }
        }
        edges.push((init, goal));
        for &(a, b) in self.reasons.keys().chain(self.imposed.iter()) {
            edges.push((self.index[&a], self.index[&b]));
        }
        self.closure = Closure::from_edges(self.ids.len(), edges)
            .map_err(|w| Error::CycleDetected(w.into_iter().map(|i| self.ids[i]).collect()))?;
        Ok(())
    }

    fn ix(&self, s: StepId) -> usize {
        *self.index.get(&s).unwrap_or_else(|| panic!("unknown step {s}"))
    }

    /// The cached closure; indices follow [`PartialOrderPlan::step_ids`].
    pub fn closure(&self) -> &Closure {
        &self.closure
    }

    /// Whether `a ≺ b` holds, directly or transitively.
    pub fn precedes(&self, a: StepId, b: StepId) -> bool {
        self.closure.precedes(self.ix(a), self.ix(b))
    }

    pub fn ordered(&self, a: StepId, b: StepId) -> bool {
        self.precedes(a, b) || self.precedes(b, a)
    }

    pub fn step(&self, id: StepId) -> &Step {
        &self.steps[&id]
    }

    pub fn contains(&self, id: StepId) -> bool {
        self.steps.contains_key(&id)
    }

    pub fn steps(&self) -> &BTreeMap<StepId, Step> {
        &self.steps
    }

    /// All step ids, synthetic ones included, in increasing id order.
    pub fn step_ids(&self) -> &[StepId] {
        &self.ids
    }

    /// Non-synthetic steps in rank order.
    pub fn real_steps(&self) -> Vec<StepId> {
        let mut v: Vec<StepId> = self.ids.iter().copied().filter(|s| !s.is_synthetic()).collect();
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

    pub fn reasons(&self) -> &BTreeMap<(StepId, StepId), BTreeSet<OrderingReason>> {
        &self.reasons
    }

    pub fn reasons_for(&self, a: StepId, b: StepId) -> Option<&BTreeSet<OrderingReason>> {
        self.reasons.get(&(a, b))
    }

    pub fn imposed(&self) -> &BTreeSet<(StepId, StepId)> {
        &self.imposed
    }

    /// Basic orderings: pairs with reasons plus imposed pairs.
    pub fn basic_orderings(&self) -> BTreeSet<(StepId, StepId)> {
        self.reasons.keys().chain(self.imposed.iter()).copied().collect()
    }

    /// Total cost of the non-synthetic steps.
    pub fn cost(&self) -> u64 {
        self.steps.values().map(|s| s.op.cost).sum()
    }

    /// Flexibility over the non-synthetic steps.
    pub fn flex(&self) -> FlexScore {
        let mut mask = fixedbitset::FixedBitSet::with_capacity(self.ids.len());
        for (i, s) in self.ids.iter().enumerate() {
            if !s.is_synthetic() {
                mask.insert(i);
            }
        }
        FlexScore::from_counts(self.len(), self.closure.count_pairs_within(&mask))
    }

    /// Structural validity: acyclic, every precondition supported by exactly
    /// one ordered causal link with a PC reason, and no unresolved threats.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::valid();
        let mut support: BTreeMap<(StepId, Fact), Vec<StepId>> = BTreeMap::new();
        for l in &self.links {
            let (Some(p), Some(c)) = (self.steps.get(&l.producer), self.steps.get(&l.consumer)) else {
                report.push(bad_link(l, "refers to a missing step"));
                continue;
            };
            if !p.op.eff.contains(l.fact) {
                report.push(bad_link(l, "producer does not achieve the fact"));
            }
            if !c.op.pre.contains(l.fact) {
                report.push(bad_link(l, "consumer does not require the fact"));
            }
            if !self.precedes(l.producer, l.consumer) {
                report.push(bad_link(l, "producer is not ordered before the consumer"));
            } else if !self.reasons_for(l.producer, l.consumer).is_some_and(|r| r.contains(&OrderingReason::pc(l.fact))) {
                report.push(bad_link(l, "ordering lacks its PC reason"));
            }
            support.entry((l.consumer, l.fact)).or_default().push(l.producer);
        }
        for (&(a, b), reasons) in &self.reasons {
            for r in reasons.iter().filter(|r| r.kind == ReasonKind::ProducerConsumer) {
                if !self.links.contains(&CausalLink { producer: a, fact: r.fact, consumer: b }) {
                    report.push(Violation::Structure { detail: format!("{r} on {a} ≺ {b} has no causal link") });
                }
            }
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
        for l in &self.links {
            for (&d, step) in &self.steps {
                if d == l.producer || d == l.consumer || !step.del.contains(&l.fact) {
                    continue;
                }
                if !(self.precedes(d, l.producer) || self.precedes(l.consumer, d)) {
                    report.push(Violation::Threat { deleter: d, producer: l.producer, fact: l.fact, consumer: l.consumer });
                }
            }
        }
        report
    }

    /// A random linearization of the non-synthetic steps; equal seeds give
    /// equal results.
    pub fn linearize_steps(&self, seed: u64) -> Vec<StepId> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let real: Vec<usize> = (0..self.ids.len()).filter(|&i| !self.ids[i].is_synthetic()).collect();
        let mut indeg: HashMap<usize, usize> =
            real.iter().map(|&b| (b, real.iter().filter(|&&a| self.closure.precedes(a, b)).count())).collect();
        let mut out = Vec::with_capacity(real.len());
        let mut ready: Vec<usize> = real.iter().copied().filter(|i| indeg[i] == 0).collect();
        while let Some(&u) = ready.choose(&mut rng) {
            ready.retain(|&x| x != u);
            out.push(self.ids[u]);
            for v in self.closure.successors(u).ones() {
                if let Some(d) = indeg.get_mut(&v) {
                    *d -= 1;
                    if *d == 0 {
                        ready.push(v);
                        ready.sort_unstable();
                    }
                }
            }
        }
        out
    }

    /// Up to `limit` distinct linearizations of the non-synthetic steps, in
    /// lexicographic order of step ids.
    pub fn linearizations(&self, limit: usize) -> Vec<Vec<StepId>> {
        let real: Vec<usize> = (0..self.ids.len()).filter(|&i| !self.ids[i].is_synthetic()).collect();
        let mut out = Vec::new();
        let mut prefix = Vec::new();
        let mut used = vec![false; self.ids.len()];
        self.enumerate(&real, &mut used, &mut prefix, &mut out, limit);
        out
    }

    fn enumerate(&self, real: &[usize], used: &mut [bool], prefix: &mut Vec<StepId>, out: &mut Vec<Vec<StepId>>, limit: usize) {
        if out.len() >= limit {
            return;
        }
        if prefix.len() == real.len() {
            out.push(prefix.clone());
            return;
        }
        for &u in real {
            if used[u] || real.iter().any(|&a| !used[a] && self.closure.precedes(a, u)) {
                continue;
            }
            used[u] = true;
            prefix.push(self.ids[u]);
            self.enumerate(real, used, prefix, out, limit);
            prefix.pop();
            used[u] = false;
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

    /// A JSON description of steps, causal links and basic orderings.
    pub fn to_json(&self) -> serde_json::Value {
        let steps: Vec<_> = self
            .steps
            .iter()
            .map(|(id, s)| {
                serde_json::json!({
                    "id": id.to_string(),
                    "name": s.op.name,
                    "operator": s.source,
                    "cost": s.op.cost,
                })
            })
            .collect();
        let links: Vec<_> = self
            .links
            .iter()
            .map(|l| serde_json::json!({"producer": l.producer.to_string(), "fact": l.fact, "consumer": l.consumer.to_string()}))
            .collect();
        let orderings: Vec<_> = self
            .basic_orderings()
            .into_iter()
            .map(|(a, b)| {
                let reasons: Vec<String> =
                    self.reasons.get(&(a, b)).into_iter().flatten().map(ToString::to_string).collect();
                serde_json::json!({"before": a.to_string(), "after": b.to_string(), "reasons": reasons})
            })
            .collect();
        let flex = self.flex();
        serde_json::json!({
            "steps": steps,
            "links": links,
            "orderings": orderings,
            "cost": self.cost(),
            "flex": {"unordered_pairs": flex.unordered_pairs, "total_pairs": flex.total_pairs},
        })
    }

    /// A Graphviz rendering of the basic orderings labelled with their reasons.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph pop {\n  rankdir=LR;\n  node [shape=box];\n");
        for (id, s) in &self.steps {
            let _ = writeln!(out, "  \"{id}\" [label=\"{}\"];", s.op.name);
        }
        for (a, b) in self.basic_orderings() {
            let label: Vec<String> = self.reasons.get(&(a, b)).into_iter().flatten().map(ToString::to_string).collect();
            let _ = writeln!(out, "  \"{a}\" -> \"{b}\" [label=\"{}\"];", label.join(", "));
        }
        out.push_str("}\n");
        out
    }
}

fn bad_link(l: &CausalLink, problem: &'static str) -> Violation {
    Violation::BadLink { producer: l.producer, fact: l.fact, consumer: l.consumer, problem }
}

/// Validates `pop` and checks that its synthetic steps match `task`.
pub fn validate_pop(task: &PlanningTask, pop: &PartialOrderPlan) -> ValidationReport {
    let mut report = pop.validate();
    let init_eff: PartialState = task.init.facts().collect();
    if pop.step(StepId::INIT).op.eff != init_eff {
        report.push(Violation::TaskMismatch { detail: "initial step does not produce the initial state".into() });
    }
    if pop.step(StepId::GOAL).op.pre != task.goal {
        report.push(Violation::TaskMismatch { detail: "goal step does not consume the goal".into() });
    }
    for (id, s) in pop.steps() {
        if let Some(o) = s.source {
            if task.operators.get(o) != Some(&s.op) {
                report.push(Violation::TaskMismatch { detail: format!("{id} does not match task operator {o}") });
            }
        }
    }
    report
}

/// A random linearization of `pop` as a sequential plan.
pub fn linearize(pop: &PartialOrderPlan, seed: u64) -> Result<SequentialPlan> {
    pop.to_sequential(&pop.linearize_steps(seed))
}
