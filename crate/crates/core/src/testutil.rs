//! Helpers shared by unit tests.

use crate::facts::{Fact, PartialState, State};
use crate::task::{OperatorDef, PlanningTask, Variable};

/// Builds a unit-cost task from compact operator descriptions
/// `(name, pre, eff)` over variables with the given domain sizes.
pub(crate) fn tiny_task(
    domains: &[usize],
    ops: &[(&str, &[(usize, usize)], &[(usize, usize)])],
    init: &[usize],
    goal: &[(usize, usize)],
) -> PlanningTask {
    let variables = domains
        .iter()
        .enumerate()
        .map(|(i, &n)| Variable { name: format!("var{i}"), values: (0..n).map(|d| format!("v{i}-{d}")).collect() })
        .collect();
    let facts = |fs: &[(usize, usize)]| -> PartialState { fs.iter().map(|&(v, d)| Fact::new(v, d)).collect() };
    let operators = ops
        .iter()
        .map(|(name, pre, eff)| OperatorDef { name: name.to_string(), pre: facts(pre), eff: facts(eff), cost: 1 })
        .collect();
    PlanningTask::new(variables, operators, State(init.to_vec()), facts(goal), true).expect("well-formed test task")
}
