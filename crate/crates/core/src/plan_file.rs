//! Reading and writing plans in the IPC plan-file format.
//!
//! Each non-comment line names one ground operator, optionally in
//! parentheses. Lines starting with `;` are comments; a `; cost = N` comment
//! is checked against the task but never trusted.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::task::{PlanningTask, SequentialPlan};

/// Parses a plan for `task`.
pub fn parse_plan(text: &str, task: &PlanningTask) -> Result<SequentialPlan> {
    let mut steps = Vec::new();
    let mut claimed_cost = None;
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if let Some(comment) = line.strip_prefix(';') {
            claimed_cost = claimed_cost.or_else(|| parse_cost_comment(comment));
            continue;
        }
        let idx = task.operator_index(line).ok_or_else(|| Error::UnknownOperator(line.to_string()))?;
        steps.push(idx);
    }
    let plan = SequentialPlan::new(task, steps);
    if let Some(claimed) = claimed_cost {
        if claimed != plan.cost {
            log::warn!("plan file claims cost {claimed}, but the task gives {}", plan.cost);
        }
    }
    Ok(plan)
}

fn parse_cost_comment(comment: &str) -> Option<u64> {
    let rest = comment.trim().strip_prefix("cost")?.trim_start().strip_prefix('=')?;
    rest.split_whitespace().next()?.parse().ok()
}

/// Writes `plan` as an IPC plan file with a trailing cost comment.
pub fn emit_plan(task: &PlanningTask, plan: &SequentialPlan) -> String {
    let mut out = String::new();
    for &o in &plan.steps {
        let _ = writeln!(out, "({})", task.operators[o].name);
    }
    let kind = if task.metric { "general cost" } else { "unit cost" };
    let _ = writeln!(out, "; cost = {} ({kind})", plan.cost);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cost_comment_is_recognized() {
        assert_eq!(parse_cost_comment(" cost = 9 (unit cost)"), Some(9));
        assert_eq!(parse_cost_comment(" some remark"), None);
    }
}
