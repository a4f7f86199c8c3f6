//! Explanation-based order generalization: the least-committed partial-order
//! plan that keeps every causal explanation of a sequential plan.
//!
//! Each precondition is linked to the earliest producer with no intervening
//! deleter; threats are then resolved by ordering consumers before later
//! deleters (CD) and deleters before later producers that serve a link (DP),
//! always in the direction of the input sequence.

use crate::error::{Error, Result};
use crate::pop::{CausalLink, OrderingReason, PartialOrderPlan, Rank, StepId};
use crate::task::{validate_sequential, PlanningTask, SequentialPlan};

/// Builds a partial-order plan from a valid sequential plan.
pub fn eog(task: &PlanningTask, plan: &SequentialPlan) -> Result<PartialOrderPlan> {
    let report = validate_sequential(task, plan);
    if !report.is_valid() {
        return Err(Error::InvalidInput(format!("sequential plan is {report}")));
    }
    let mut pop = PartialOrderPlan::for_task(task);
    // seq[0] is the initial step, seq[n + 1] the goal step.
    let mut seq = vec![StepId::INIT];
    for (i, &o) in plan.steps.iter().enumerate() {
        seq.push(pop.add_step(task.operators[o].clone(), Some(o), Rank(i as u32 + 1, 0)));
    }
    seq.push(StepId::GOAL);

    let produces = |pop: &PartialOrderPlan, k: usize, f| pop.step(seq[k]).op.eff.contains(f);
    let deletes = |pop: &PartialOrderPlan, k: usize, f| pop.step(seq[k]).del.contains(&f);

    let mut links = Vec::new();
    for i in 1..seq.len() {
        let pre: Vec<_> = pop.step(seq[i]).op.pre.facts().collect();
        for f in pre {
            let k = (0..i)
                .find(|&k| produces(&pop, k, f) && !(k + 1..i).any(|m| deletes(&pop, m, f)))
                .ok_or_else(|| Error::Internal(format!("no producer for {f} of step {i}")))?;
            links.push((k, f, i));
        }
    }
    for &(k, f, i) in &links {
        pop.add_link(CausalLink { producer: seq[k], fact: f, consumer: seq[i] });
        pop.add_reason(seq[k], seq[i], OrderingReason::pc(f))?;
    }
    for &(k, f, i) in &links {
        for m in 1..seq.len() - 1 {
            if m == k || m == i || !deletes(&pop, m, f) {
                continue;
            }
            if m > i {
                pop.add_reason(seq[i], seq[m], OrderingReason::cd(f))?;
            } else if m < k {
                pop.add_reason(seq[m], seq[k], OrderingReason::dp(f))?;
            } else {
                return Err(Error::Internal(format!("step {m} deletes {f} inside its causal link")));
            }
        }
    }
    Ok(pop)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ELEVATOR;

    #[test]
    fn elevator_stays_totally_ordered() {
        let (task, plan) = ELEVATOR.load().unwrap();
        let pop = eog(&task, &plan).unwrap();
        assert!(pop.validate().is_valid(), "{}", pop.validate());
        assert_eq!(pop.flex().unordered_pairs, 0);
        assert_eq!(pop.flex().total_pairs, 36);
    }
}
