//! Random and synthetic planning tasks with known valid plans.
//!
//! [`random_task`] builds a small task around a random walk: each step of
//! the walk becomes an operator (sometimes reused), the final state provides
//! the goal, and a few alternative operators with weaker preconditions give
//! substitution something to work with. [`loosely_coupled`] builds a large
//! task of independent counters gated by a few shared switches.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::facts::{Fact, PartialState, State};
use crate::task::{OperatorDef, PlanningTask, SequentialPlan, Variable};

/// Shape of the tasks produced by [`random_task`].
#[derive(Clone, Debug)]
pub struct RandomTaskConfig {
    pub max_vars: usize,
    pub max_domain: usize,
    pub max_steps: usize,
    /// Alternative operators added next to those of the walk.
    pub max_alternatives: usize,
    /// Every operator costs 1; otherwise costs are drawn from 1..=3.
    pub unit_cost: bool,
}

impl Default for RandomTaskConfig {
    fn default() -> Self {
        RandomTaskConfig { max_vars: 8, max_domain: 3, max_steps: 12, max_alternatives: 4, unit_cost: false }
    }
}

impl RandomTaskConfig {
    /// Tiny unit-cost tasks for exact reordering.
    pub fn tiny() -> Self {
        RandomTaskConfig { max_vars: 4, max_domain: 3, max_steps: 6, max_alternatives: 2, unit_cost: true }
    }
}

/// A random task and a valid plan for it; equal seeds give equal results.
pub fn random_task(seed: u64, config: &RandomTaskConfig) -> (PlanningTask, SequentialPlan) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nvars = rng.random_range(2..=config.max_vars.max(2));
    let domains: Vec<usize> = (0..nvars).map(|_| rng.random_range(2..=config.max_domain.max(2))).collect();
    let init: Vec<usize> = domains.iter().map(|&d| rng.random_range(0..d)).collect();
    let len = rng.random_range(1..=config.max_steps.max(1));
    let cost = |rng: &mut ChaCha8Rng| if config.unit_cost { 1 } else { rng.random_range(1..=3) };

    let mut ops: Vec<OperatorDef> = Vec::new();
    let mut steps = Vec::with_capacity(len);
    let mut state = init.clone();
    for _ in 0..len {
        let applicable: Vec<usize> = (0..ops.len()).filter(|&i| ops[i].is_applicable(&State(state.clone()))).collect();
        let op = if !applicable.is_empty() && rng.random_bool(0.25) {
            *applicable.choose(&mut rng).expect("non-empty")
        } else {
            let pre_vars = sample_vars(&mut rng, nvars, 0, 2);
            let eff_vars = sample_vars(&mut rng, nvars, 1, 2);
            let pre: PartialState = pre_vars.iter().map(|&v| Fact::new(v, state[v])).collect();
            let eff: PartialState = eff_vars
                .iter()
                .map(|&v| {
                    let mut d = rng.random_range(0..domains[v] - 1);
                    if d >= state[v] {
                        d += 1;
                    }
                    Fact::new(v, d)
                })
                .collect();
            let c = cost(&mut rng);
            ops.push(OperatorDef { name: format!("op{}", ops.len()), pre, eff, cost: c });
            ops.len() - 1
        };
        for f in ops[op].eff.facts() {
            state[f.var] = f.val;
        }
        steps.push(op);
    }
    let walk_ops = ops.len();
    for _ in 0..rng.random_range(0..=config.max_alternatives) {
        let base = ops[rng.random_range(0..walk_ops)].clone();
        let pre: PartialState = base.pre.facts().filter(|_| rng.random_bool(0.5)).collect();
        let mut eff = base.eff.clone();
        if rng.random_bool(0.3) {
            let v = rng.random_range(0..nvars);
            eff.set(v, rng.random_range(0..domains[v]));
        }
        let c = cost(&mut rng);
        ops.push(OperatorDef { name: format!("alt{}", ops.len()), pre, eff, cost: c });
    }

    let mut goal: PartialState = (0..nvars).filter(|&v| state[v] != init[v]).map(|v| Fact::new(v, state[v])).collect();
    let keep: Vec<Fact> = goal.facts().filter(|_| rng.random_bool(0.7)).collect();
    if !keep.is_empty() {
        goal = keep.into_iter().collect();
    }
    if goal.is_empty() {
        let v = rng.random_range(0..nvars);
        goal.set(v, state[v]);
    }
    let task = PlanningTask::new(variables(&domains), ops, State(init), goal, !config.unit_cost)
        .expect("generated tasks are well-formed");
    let plan = SequentialPlan::new(&task, steps);
    (task, plan)
}

fn sample_vars(rng: &mut ChaCha8Rng, nvars: usize, min: usize, max: usize) -> Vec<usize> {
    let k = rng.random_range(min..=max.min(nvars));
    let all: Vec<usize> = (0..nvars).collect();
    let mut vars: Vec<usize> = all.choose_multiple(rng, k).copied().collect();
    vars.sort_unstable();
    vars
}

fn variables(domains: &[usize]) -> Vec<Variable> {
    domains
        .iter()
        .enumerate()
        .map(|(i, &n)| Variable { name: format!("var{i}"), values: (0..n).map(|d| format!("v{i}={d}")).collect() })
        .collect()
}

/// A task of `groups × per_group` counters, each counted from 0 to
/// `increments`, where the first increment of every counter needs its
/// group's switch to be on. The plan turns all switches on, then advances
/// the counters round-robin; it has `groups + groups·per_group·increments`
/// steps.
pub fn loosely_coupled(groups: usize, per_group: usize, increments: usize) -> (PlanningTask, SequentialPlan) {
    let counters = groups * per_group;
    let mut domains = vec![2; groups];
    domains.extend(std::iter::repeat_n(increments + 1, counters));
    let counter = |c: usize| groups + c;
    let mut ops = Vec::new();
    let mut steps = Vec::new();
    for g in 0..groups {
        steps.push(ops.len());
        ops.push(OperatorDef {
            name: format!("switch-on g{g}"),
            pre: [Fact::new(g, 0)].into_iter().collect(),
            eff: [Fact::new(g, 1)].into_iter().collect(),
            cost: 1,
        });
    }
    let inc = |c: usize, k: usize| groups + c * increments + k;
    for c in 0..counters {
        for k in 0..increments {
            let mut pre: PartialState = [Fact::new(counter(c), k)].into_iter().collect();
            if k == 0 {
                pre.set(c / per_group, 1);
            }
            ops.push(OperatorDef {
                name: format!("inc c{c} {k}"),
                pre,
                eff: [Fact::new(counter(c), k + 1)].into_iter().collect(),
                cost: 1,
            });
        }
    }
    for k in 0..increments {
        for c in 0..counters {
            steps.push(inc(c, k));
        }
    }
    let goal: PartialState = (0..counters).map(|c| Fact::new(counter(c), increments)).collect();
    let task = PlanningTask::new(variables(&domains), ops, State(vec![0; domains.len()]), goal, false)
        .expect("well-formed task");
    let plan = SequentialPlan::new(&task, steps);
    (task, plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::validate_sequential;

    #[test]
    fn random_plans_are_valid_and_reproducible() {
        for seed in 0..200 {
            let (task, plan) = random_task(seed, &RandomTaskConfig::default());
            assert!(validate_sequential(&task, &plan).is_valid(), "seed {seed}");
            assert!(plan.len() <= 12 && task.variables.len() <= 8);
            assert_eq!(random_task(seed, &RandomTaskConfig::default()), (task, plan));
        }
    }

    #[test]
    fn loosely_coupled_plan_is_valid() {
        let (task, plan) = loosely_coupled(12, 8, 3);
        assert_eq!(plan.len(), 300);
        assert!(validate_sequential(&task, &plan).is_valid());
    }
}
