//! Flexibility improvement via block substitution, and plan reduction.
//!
//! [`fibs`] runs the whole pipeline on a sequential plan:
//!
//! | phase  | what it does                                                     |
//! |--------|------------------------------------------------------------------|
//! | EOG    | deorders the plan into a partial-order plan                      |
//! | SD1    | substitutes primitive blocks to remove orderings                 |
//! | BD     | block deordering                                                 |
//! | SD2    | substitutes primitive and compound blocks                        |
//! | REDUCE | optionally removes redundant blocks                              |
//!
//! A substitution phase ([`substitution_deorder`]) scans the basic orderings
//! `b_i ≺ b_j` between outermost blocks and asks [`resolve`] to replace `b_j`
//! (or, failing that, `b_i`) by a subplan found for a subtask that no longer
//! depends on the other block. A replacement is accepted only when it meets
//! the [`Criteria`].

use std::collections::BTreeSet;
use std::fmt;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::bdpo::{block_deorder, init_bdpo, BdpoPlan, BlockId};
use crate::eog::eog;
use crate::error::{Error, Result};
use crate::facts::{Fact, PartialState, State};
use crate::pop::{FlexScore, StepId};
use crate::subplanner::{solve_subtask, Subtask, SubplannerConfig};
use crate::substitution::{substitute, CandidateBlock};
use crate::task::{apply, PlanningTask, SequentialPlan};

/// When a changed plan replaces the current one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Criteria {
    /// Relative flexibility optimization: strictly more flexible, not more expensive.
    #[default]
    Rfo,
    /// Relative cost optimization: strictly cheaper, or as cheap and strictly
    /// more flexible.
    Rco,
}

impl Criteria {
    /// Whether a plan with `after` cost and flex is accepted over one with `before`.
    pub fn accepts(self, before: (u64, FlexScore), after: (u64, FlexScore)) -> bool {
        let more_flexible = after.1.cmp_value(&before.1).is_gt();
        match self {
            Criteria::Rfo => more_flexible && after.0 <= before.0,
            Criteria::Rco => after.0 < before.0 || (after.0 == before.0 && more_flexible),
        }
    }
}

impl std::str::FromStr for Criteria {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rfo" => Ok(Criteria::Rfo),
            "rco" => Ok(Criteria::Rco),
            _ => Err(Error::InvalidInput(format!("unknown criteria {s:?}"))),
        }
    }
}

/// Which redundancy test the reduction phase uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReduceMode {
    #[default]
    None,
    /// Backward justification on outermost blocks.
    Bj,
    /// Greedy justification on blocks at any level.
    Gj,
}

impl std::str::FromStr for ReduceMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(ReduceMode::None),
            "bj" => Ok(ReduceMode::Bj),
            "gj" => Ok(ReduceMode::Gj),
            _ => Err(Error::InvalidInput(format!("unknown reduction {s:?}"))),
        }
    }
}

/// Settings of a pipeline run.
#[derive(Clone, Debug)]
pub struct FibsConfig {
    pub criteria: Criteria,
    pub subplanner: SubplannerConfig,
    pub reduce: ReduceMode,
    /// Subplans may be at most this many times longer than the replaced block.
    pub length_factor: usize,
    /// Limit for the whole run; phases stop early when it is exceeded.
    pub time_limit: Duration,
}

impl Default for FibsConfig {
    fn default() -> Self {
        FibsConfig {
            criteria: Criteria::Rfo,
            subplanner: SubplannerConfig::default(),
            reduce: ReduceMode::None,
            length_factor: 4,
            time_limit: Duration::from_secs(1800),
        }
    }
}

/// Pipeline phases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Phase {
    Eog,
    Sd1,
    Bd,
    Sd2,
    Reduce,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Phase::Eog => "EOG",
            Phase::Sd1 => "SD1",
            Phase::Bd => "BD",
            Phase::Sd2 => "SD2",
            Phase::Reduce => "REDUCE",
        };
        f.write_str(s)
    }
}

/// What one phase changed.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseReport {
    pub phase: Phase,
    pub flex_before: FlexScore,
    pub flex_after: FlexScore,
    pub cost_before: u64,
    pub cost_after: u64,
    pub elapsed: Duration,
    pub substitutions_attempted: usize,
    pub substitutions_accepted: usize,
    pub blocks_removed: usize,
}

impl PhaseReport {
    fn new(phase: Phase, before: &BdpoPlan) -> Self {
        PhaseReport {
            phase,
            flex_before: before.flex(),
            flex_after: before.flex(),
            cost_before: before.cost(),
            cost_after: before.cost(),
            elapsed: Duration::ZERO,
            substitutions_attempted: 0,
            substitutions_accepted: 0,
            blocks_removed: 0,
        }
    }

    fn finish(mut self, after: &BdpoPlan, start: Instant) -> Self {
        self.flex_after = after.flex();
        self.cost_after = after.cost();
        self.elapsed = start.elapsed();
        self
    }

    /// The report as JSON; elapsed time is included only when `timings` is set,
    /// so that reports of identical runs are identical.
    pub fn to_json(&self, timings: bool) -> serde_json::Value {
        let mut v = serde_json::json!({
            "phase": self.phase,
            "flex_before": round4(self.flex_before.value()),
            "flex_after": round4(self.flex_after.value()),
            "unordered_pairs": self.flex_after.unordered_pairs,
            "total_pairs": self.flex_after.total_pairs,
            "cost_before": self.cost_before,
            "cost_after": self.cost_after,
            "substitutions_attempted": self.substitutions_attempted,
            "substitutions_accepted": self.substitutions_accepted,
            "blocks_removed": self.blocks_removed,
        });
        if timings {
            v["elapsed_s"] = serde_json::json!(self.elapsed.as_secs_f64());
        }
        v
    }
}

fn round4(x: f64) -> f64 {
    (x * 10_000.0).round() / 10_000.0
}

/// Reports as a JSON array.
pub fn reports_json(reports: &[PhaseReport], timings: bool) -> serde_json::Value {
    serde_json::Value::Array(reports.iter().map(|r| r.to_json(timings)).collect())
}

/// Reports as CSV with a header row.
pub fn reports_csv(reports: &[PhaseReport], timings: bool) -> String {
    let mut out = String::from(
        "phase,flex_before,flex_after,unordered_pairs,total_pairs,cost_before,cost_after,substitutions_attempted,substitutions_accepted,blocks_removed",
    );
    if timings {
        out.push_str(",elapsed_s");
    }
    out.push('\n');
    for r in reports {
        out.push_str(&format!(
            "{},{:.4},{:.4},{},{},{},{},{},{},{}",
            r.phase,
            r.flex_before.value(),
            r.flex_after.value(),
            r.flex_after.unordered_pairs,
            r.flex_after.total_pairs,
            r.cost_before,
            r.cost_after,
            r.substitutions_attempted,
            r.substitutions_accepted,
            r.blocks_removed
        ));
        if timings {
            out.push_str(&format!(",{:.6}", r.elapsed.as_secs_f64()));
        }
        out.push('\n');
    }
    out
}

/// Builds the subtask whose solutions may replace `b_j` without depending on
/// `b_i`.
///
/// The initial state applies, in the seed-0 linearization, every block that
/// precedes `b_j` except `b_i`. The goal holds the facts `b_j` supplies to
/// other blocks and the facts that reach past `b_j` from a predecessor other
/// than `b_i`. The cost bound is the cost of `b_j`.
pub fn build_subtask(task: &PlanningTask, plan: &BdpoPlan, b_i: BlockId, b_j: BlockId, config: &FibsConfig) -> Result<Subtask> {
    let mut state: State = task.init.clone();
    for s in plan.linearize_steps(0) {
        let b = plan.outer_of(s);
        if b != b_i && b != b_j && plan.precedes(b, b_j) {
            state = apply(&plan.step(s).op, &state)
                .map_err(|e| Error::Internal(format!("prefix before {b_j} without {b_i} is not executable: {e}")))?;
        }
    }
    let mut goal: BTreeSet<Fact> = BTreeSet::new();
    for l in plan.links() {
        let (x, y) = (plan.outer_of(l.producer), plan.outer_of(l.consumer));
        let supplied = x == b_j && y != b_j;
        let straddles = x != b_i && x != b_j && y != b_j && plan.precedes(x, b_j) && plan.precedes(b_j, y);
        if supplied || straddles {
            goal.insert(l.fact);
        }
    }
    let goal = PartialState::from_facts(goal)
        .map_err(|f| Error::InvalidInput(format!("subtask goal for {b_j} conflicts on {f}")))?;
    let cost_bound = plan.block_cost(b_j);
    let length_cap = config.length_factor.max(1) * plan.members(b_j).len();
    Ok(Subtask::new(task, state, goal, cost_bound, length_cap, config.subplanner.clone()))
}

/// Result of one [`resolve`] call.
#[derive(Clone, Debug)]
pub struct Resolution {
    pub plan: BdpoPlan,
    pub success: bool,
    /// Substitutions tried.
    pub attempted: usize,
    /// Blocks removed by the sweep after an accepted substitution.
    pub swept: usize,
}

/// Tries to remove the basic ordering `b_i ≺ b_j` by replacing `b_j` with a
/// subplan. Candidate subplans are tried cheapest first; the first
/// successful substitution that meets the criteria is kept, followed by a
/// sweep that lets the new block substitute blocks it makes redundant.
pub fn resolve(task: &PlanningTask, plan: &BdpoPlan, b_i: BlockId, b_j: BlockId, config: &FibsConfig) -> Resolution {
    resolve_with(task, plan, b_i, b_j, config, false)
}

fn resolve_with(
    task: &PlanningTask,
    plan: &BdpoPlan,
    b_i: BlockId,
    b_j: BlockId,
    config: &FibsConfig,
    primitive_first: bool,
) -> Resolution {
    let unchanged = |attempted| Resolution { plan: plan.clone(), success: false, attempted, swept: 0 };
    let st = match build_subtask(task, plan, b_i, b_j, config) {
        Ok(st) => st,
        Err(e) => {
            log::debug!("no subtask for {b_i} < {b_j}: {e}");
            return unchanged(0);
        }
    };
    let mut subplans = Vec::new();
    if primitive_first {
        subplans.extend(solve_subtask(&Subtask { length_cap: 1, ..st.clone() }));
    }
    for p in solve_subtask(&st) {
        if !subplans.iter().any(|q: &SequentialPlan| q.steps == p.steps) {
            subplans.push(p);
        }
    }
    let before = (plan.cost(), plan.flex());
    let mut attempted = 0;
    for sub in subplans {
        let Ok(pop) = eog(&st.task, &sub) else { continue };
        attempted += 1;
        let out = substitute(plan, b_j, CandidateBlock::new(pop));
        if !out.success {
            continue;
        }
        if config.criteria.accepts(before, (out.plan.cost(), out.plan.flex())) {
            let (plan, swept) = match out.new_block {
                Some(nb) => sweep(out.plan, nb, config.criteria),
                None => (out.plan, 0),
            };
            return Resolution { plan, success: true, attempted, swept };
        }
    }
    unchanged(attempted)
}

/// Lets `nb` substitute every other outermost block it can replace, as long
/// as the plan does not lose flexibility.
fn sweep(mut plan: BdpoPlan, nb: BlockId, criteria: Criteria) -> (BdpoPlan, usize) {
    let mut removed = 0;
    loop {
        let others: Vec<BlockId> =
            plan.outer_blocks().iter().copied().filter(|&b| b != nb && !b.is_synthetic()).collect();
        let before = (plan.cost(), plan.flex());
        let next = others.into_iter().find_map(|b| {
            let out = substitute(&plan, b, nb);
            let after = (out.plan.cost(), out.plan.flex());
            let keeps = match criteria {
                Criteria::Rfo => after.1.cmp_value(&before.1).is_ge(),
                Criteria::Rco => true,
            };
            (out.success && after.0 < before.0 && keeps).then_some(out.plan)
        });
        match next {
            Some(p) => {
                plan = p;
                removed += 1;
            }
            None => return (plan, removed),
        }
    }
}

/// Counters of a substitution phase.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SdStats {
    pub attempted: usize,
    pub accepted: usize,
    pub swept: usize,
}

/// Substitution deordering: repeatedly scans the basic orderings between
/// outermost blocks, trying to replace the later block and then the earlier
/// one, and restarts from the top after every accepted replacement.
pub fn substitution_deorder(task: &PlanningTask, plan: &BdpoPlan, config: &FibsConfig) -> BdpoPlan {
    substitution_deorder_until(task, plan, config, false, None).0
}

fn substitution_deorder_until(
    task: &PlanningTask,
    plan: &BdpoPlan,
    config: &FibsConfig,
    primitive_only: bool,
    deadline: Option<Instant>,
) -> (BdpoPlan, SdStats) {
    let mut plan = plan.clone();
    let mut stats = SdStats::default();
    'restart: loop {
        for (b_i, b_j) in plan.root_orderings() {
            if deadline.is_some_and(|d| Instant::now() > d) {
                log::warn!("time limit reached; substitution phase stopped early");
                break 'restart;
            }
            for (keep, replace) in [(b_i, b_j), (b_j, b_i)] {
                if primitive_only && !plan.block(replace).is_primitive() {
                    continue;
                }
                let r = resolve_with(task, &plan, keep, replace, config, primitive_only);
                stats.attempted += r.attempted;
                if r.success {
                    stats.accepted += 1;
                    stats.swept += r.swept;
                    log::debug!("replaced {replace} (ordering {b_i} < {b_j}); flex {}", r.plan.flex());
                    plan = r.plan;
                    continue 'restart;
                }
            }
        }
        break;
    }
    (plan, stats)
}

/// Outermost blocks that are not backward justified: neither supplying the
/// goal nor, transitively, a block that does.
pub fn backward_justify(plan: &BdpoPlan) -> BTreeSet<BlockId> {
    let mut justified: BTreeSet<BlockId> = BTreeSet::from([BlockId::GOAL]);
    loop {
        let mut grew = false;
        for l in plan.links() {
            let (x, y) = (plan.outer_of(l.producer), plan.outer_of(l.consumer));
            if x != y && justified.contains(&y) && justified.insert(x) {
                grew = true;
            }
        }
        if !grew {
            break;
        }
    }
    plan.outer_blocks().iter().copied().filter(|b| !b.is_synthetic() && !justified.contains(b)).collect()
}

/// Steps removed together with `b`: its members and every step that
/// transitively consumes from them. `None` if the goal would be among them.
fn with_dependents(plan: &BdpoPlan, b: BlockId) -> Option<BTreeSet<StepId>> {
    let mut doomed = plan.members(b);
    let mut frontier: Vec<StepId> = doomed.iter().copied().collect();
    while let Some(s) = frontier.pop() {
        for l in plan.links().iter().filter(|l| l.producer == s) {
            if l.consumer == StepId::GOAL {
                return None;
            }
            if doomed.insert(l.consumer) {
                frontier.push(l.consumer);
            }
        }
    }
    Some(doomed)
}

fn removal_cost(plan: &BdpoPlan, steps: &BTreeSet<StepId>) -> u64 {
    steps.iter().map(|&s| plan.step(s).op.cost).sum()
}

/// Blocks, at any level, that are not greedy justified: removing the block
/// and every step depending on it leaves a valid plan. Innermost blocks come
/// first.
pub fn greedy_justify(plan: &BdpoPlan) -> BTreeSet<BlockId> {
    greedy_candidates(plan).into_iter().map(|(b, _)| b).collect()
}

fn greedy_candidates(plan: &BdpoPlan) -> Vec<(BlockId, BTreeSet<StepId>)> {
    let mut blocks: Vec<BlockId> = plan.blocks().keys().copied().filter(|b| !b.is_synthetic()).collect();
    blocks.sort_by_key(|&b| (std::cmp::Reverse(plan.depth(b)), plan.position(b), b));
    let mut out = Vec::new();
    for b in blocks {
        let Some(doomed) = with_dependents(plan, b) else { continue };
        let mut trial = plan.clone();
        if trial.remove_steps(&doomed).is_ok() && trial.validate().is_valid() {
            out.push((b, doomed));
        }
    }
    out
}

/// Removes redundant blocks until none is left, returning the plan and the
/// number of removals.
pub fn reduce(plan: &BdpoPlan, mode: ReduceMode) -> BdpoPlan {
    reduce_counting(plan, mode).0
}

fn reduce_counting(plan: &BdpoPlan, mode: ReduceMode) -> (BdpoPlan, usize) {
    let mut plan = plan.clone();
    let mut removed = 0;
    match mode {
        ReduceMode::None => {}
        ReduceMode::Bj => loop {
            let redundant = backward_justify(&plan);
            if redundant.is_empty() {
                break;
            }
            let doomed: BTreeSet<StepId> = redundant.iter().flat_map(|&b| plan.members(b)).collect();
            let mut trial = plan.clone();
            if trial.remove_steps(&doomed).is_err() || !trial.validate().is_valid() {
                log::warn!("removing backward-unjustified blocks broke the plan; keeping them");
                break;
            }
            removed += redundant.len();
            plan = trial;
        },
        ReduceMode::Gj => loop {
            let candidates = greedy_candidates(&plan);
            // Highest cost first; ties keep the innermost-first order.
            let Some((_, doomed)) = candidates.into_iter().rev().max_by_key(|(_, d)| removal_cost(&plan, d)) else { break };
            plan.remove_steps(&doomed).expect("removal was validated on a copy");
            removed += 1;
        },
    }
    (plan, removed)
}

/// Runs the pipeline on a sequential plan and reports every phase.
pub fn fibs(task: &PlanningTask, seq: &SequentialPlan, config: &FibsConfig) -> Result<(BdpoPlan, Vec<PhaseReport>)> {
    let run_start = Instant::now();
    let deadline = run_start + config.time_limit;
    let mut reports = Vec::new();

    let start = Instant::now();
    let pop = eog(task, seq)?;
    let plan = init_bdpo(&pop);
    let mut eog_report = PhaseReport::new(Phase::Eog, &plan);
    eog_report.flex_before = FlexScore::from_counts(seq.len(), seq.len() * seq.len().saturating_sub(1) / 2);
    eog_report.cost_before = seq.cost;
    reports.push(eog_report.finish(&plan, start));

    let start = Instant::now();
    let mut report = PhaseReport::new(Phase::Sd1, &plan);
    let (plan, stats) = substitution_deorder_until(task, &plan, config, true, Some(deadline));
    report.substitutions_attempted = stats.attempted;
    report.substitutions_accepted = stats.accepted;
    report.blocks_removed = stats.swept;
    reports.push(report.finish(&plan, start));

    let start = Instant::now();
    let report = PhaseReport::new(Phase::Bd, &plan);
    let plan = block_deorder(&plan);
    reports.push(report.finish(&plan, start));

    let start = Instant::now();
    let mut report = PhaseReport::new(Phase::Sd2, &plan);
    let (mut plan, stats) = substitution_deorder_until(task, &plan, config, false, Some(deadline));
    report.substitutions_attempted = stats.attempted;
    report.substitutions_accepted = stats.accepted;
    report.blocks_removed = stats.swept;
    reports.push(report.finish(&plan, start));

    if config.reduce != ReduceMode::None {
        let start = Instant::now();
        let mut report = PhaseReport::new(Phase::Reduce, &plan);
        let (reduced, removed) = reduce_counting(&plan, config.reduce);
        plan = reduced;
        report.blocks_removed = removed;
        reports.push(report.finish(&plan, start));
    }

    debug_assert!(plan.validate().is_valid(), "{:?}", plan.validate());
    Ok((plan, reports))
}

#[cfg(test)]
mod tests;
