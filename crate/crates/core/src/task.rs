//! Grounded finite-domain planning tasks, sequential plans and progression.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::facts::{Fact, FactSpace, PartialState, State};
use crate::validation::{ValidationReport, Violation};

/// A finite-domain state variable.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Variable {
    pub name: String,
    /// One human-readable name per domain value; the domain size is its length.
    pub values: Vec<String>,
}

impl Variable {
    pub fn domain(&self) -> usize {
        self.values.len()
    }
}

/// A grounded operator with precondition, effect and cost.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct OperatorDef {
    pub name: String,
    pub pre: PartialState,
    pub eff: PartialState,
    pub cost: u64,
}

impl OperatorDef {
    /// Facts deleted by this operator.
    ///
    /// When the precondition pins the variable of an effect, only the consumed
    /// value is deleted (and nothing if the value does not change). For an
    /// unpinned variable every other value counts as deleted, so that no
    /// potential deleter is overlooked.
    pub fn del(&self, space: &FactSpace) -> Vec<Fact> {
        let mut out = Vec::new();
        for f in self.eff.facts() {
            match self.pre.get(f.var) {
                Some(p) if p == f.val => {}
                Some(p) => out.push(Fact::new(f.var, p)),
                None => out.extend(space.others(f.var, f.val)),
            }
        }
        out
    }

    pub fn is_applicable(&self, state: &State) -> bool {
        self.pre.holds_in(state)
    }
}

/// Consumed, produced and deleted facts of an operator.
pub fn cons_prod_del(op: &OperatorDef, space: &FactSpace) -> (BTreeSet<Fact>, BTreeSet<Fact>, BTreeSet<Fact>) {
    (op.pre.facts().collect(), op.eff.facts().collect(), op.del(space).into_iter().collect())
}

/// Progresses `state` through `op`.
pub fn apply(op: &OperatorDef, state: &State) -> Result<State> {
    if let Some(fact) = op.pre.first_unsatisfied(state) {
        return Err(Error::NotApplicable { op: op.name.clone(), fact });
    }
    let mut next = state.clone();
    for f in op.eff.facts() {
        next.set(f.var, f.val);
    }
    Ok(next)
}

/// A grounded planning task `⟨V, O, s₀, s_*⟩`.
#[derive(Clone, Debug, Serialize)]
pub struct PlanningTask {
    pub variables: Vec<Variable>,
    pub operators: Vec<OperatorDef>,
    pub init: State,
    pub goal: PartialState,
    /// Whether operator costs are significant; without a metric every cost is 1.
    pub metric: bool,
    #[serde(skip)]
    space: Arc<FactSpace>,
    #[serde(skip)]
    by_name: HashMap<String, usize>,
}

impl PartialEq for PlanningTask {
    fn eq(&self, other: &Self) -> bool {
        self.variables == other.variables
            && self.operators == other.operators
            && self.init == other.init
            && self.goal == other.goal
            && self.metric == other.metric
    }
}

impl Eq for PlanningTask {}

impl PlanningTask {
    /// Builds a task after checking that every fact is well-formed and every
    /// operator has a non-empty effect.
    pub fn new(
        variables: Vec<Variable>,
        operators: Vec<OperatorDef>,
        init: State,
        goal: PartialState,
        metric: bool,
    ) -> Result<Self> {
        let space = FactSpace::new(variables.iter().map(Variable::domain).collect());
        if init.len() != variables.len() {
            return Err(Error::InvalidInput(format!(
                "initial state assigns {} values to {} variables",
                init.len(),
                variables.len()
            )));
        }
        let check = |f: Fact, what: &str| {
            if space.is_valid(f) {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!("{what}: fact {f} outside the variable domains")))
            }
        };
        for f in init.facts() {
            check(f, "initial state")?;
        }
        for f in goal.facts() {
            check(f, "goal")?;
        }
        let mut by_name = HashMap::new();
        for (i, op) in operators.iter().enumerate() {
            if op.eff.is_empty() {
                return Err(Error::InvalidInput(format!("operator `{}` has no effect", op.name)));
            }
            for f in op.pre.facts().chain(op.eff.facts()) {
                check(f, &op.name)?;
            }
            by_name.entry(normalize_name(&op.name)).or_insert(i);
        }
        Ok(PlanningTask { variables, operators, init, goal, metric, space: Arc::new(space), by_name })
    }

    pub fn space(&self) -> &Arc<FactSpace> {
        &self.space
    }

    /// Index of the operator with the given name, ignoring case, surrounding
    /// parentheses and repeated whitespace.
    pub fn operator_index(&self, name: &str) -> Option<usize> {
        self.by_name.get(&normalize_name(name)).copied()
    }

    /// Human-readable name of a fact.
    pub fn fact_name(&self, f: Fact) -> String {
        let var = &self.variables[f.var];
        format!("{}={}", var.name, var.values[f.val])
    }

    /// Whether the goal holds in `state`.
    pub fn is_goal(&self, state: &State) -> bool {
        self.goal.holds_in(state)
    }

    /// A copy of this task with a different initial state and goal.
    pub fn with_init_goal(&self, init: State, goal: PartialState) -> PlanningTask {
        PlanningTask { init, goal, ..self.clone() }
    }

    /// Progresses the initial state through a sequence of operator indices.
    pub fn progress(&self, ops: &[usize]) -> Result<State> {
        let mut s = self.init.clone();
        for &o in ops {
            s = apply(&self.operators[o], &s)?;
        }
        Ok(s)
    }
}

pub(crate) fn normalize_name(name: &str) -> String {
    let trimmed = name.trim();
    let inner = trimmed
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .unwrap_or(trimmed);
    inner.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// A sequence of operator indices into [`PlanningTask::operators`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize)]
pub struct SequentialPlan {
    pub steps: Vec<usize>,
    pub cost: u64,
}

impl SequentialPlan {
    /// Builds a plan and computes its cost; indices must be valid for `task`.
    pub fn new(task: &PlanningTask, steps: Vec<usize>) -> Self {
        let cost = steps.iter().map(|&o| task.operators[o].cost).sum();
        SequentialPlan { steps, cost }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Checks that `plan` is executable from the initial state and reaches the
/// goal; the report names the first violation.
pub fn validate_sequential(task: &PlanningTask, plan: &SequentialPlan) -> ValidationReport {
    let mut state = task.init.clone();
    for (position, &o) in plan.steps.iter().enumerate() {
        let op = &task.operators[o];
        match apply(op, &state) {
            Ok(next) => state = next,
            Err(Error::NotApplicable { fact, .. }) => {
                return ValidationReport::from(Violation::NotApplicable { position, op: op.name.clone(), fact })
            }
            Err(e) => unreachable!("apply only fails with NotApplicable: {e}"),
        }
    }
    match task.goal.first_unsatisfied(&state) {
        Some(fact) => ValidationReport::from(Violation::GoalUnsatisfied { fact }),
        None => ValidationReport::valid(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op(pre: &[(usize, usize)], eff: &[(usize, usize)]) -> OperatorDef {
        OperatorDef {
            name: "o".into(),
            pre: pre.iter().map(|&(v, d)| Fact::new(v, d)).collect(),
            eff: eff.iter().map(|&(v, d)| Fact::new(v, d)).collect(),
            cost: 1,
        }
    }

    #[test]
    fn pinned_variable_deletes_only_consumed_value() {
        let space = FactSpace::new(vec![3]);
        let (_, _, del) = cons_prod_del(&op(&[(0, 0)], &[(0, 1)]), &space);
        assert_eq!(del, BTreeSet::from([Fact::new(0, 0)]));
    }

    #[test]
    fn unpinned_variable_deletes_every_other_value() {
        let space = FactSpace::new(vec![3]);
        let (_, _, del) = cons_prod_del(&op(&[], &[(0, 1)]), &space);
        assert_eq!(del, BTreeSet::from([Fact::new(0, 0), Fact::new(0, 2)]));
    }

    #[test]
    fn unchanged_value_deletes_nothing() {
        let space = FactSpace::new(vec![3]);
        let (_, _, del) = cons_prod_del(&op(&[(0, 1)], &[(0, 1)]), &space);
        assert!(del.is_empty());
    }

    #[test]
    fn apply_rejects_conflicting_precondition() {
        let s = State(vec![0]);
        assert!(matches!(apply(&op(&[(0, 2)], &[(0, 1)]), &s), Err(Error::NotApplicable { .. })));
        assert_eq!(apply(&op(&[(0, 0)], &[(0, 1)]), &s).unwrap(), State(vec![1]));
    }

    #[test]
    fn operator_names_are_normalized() {
        assert_eq!(normalize_name(" (Board  p1 n2 e1) "), "board p1 n2 e1");
    }
}
