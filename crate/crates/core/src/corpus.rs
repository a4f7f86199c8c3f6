//! The bundled example tasks and plans.
//!
//! The elevator pair is the running example of the guide: two lifts, three
//! floors and two passengers, with a nine-step plan that uses lift `e1` only.
//! The micro tasks each isolate one block-deordering rule or one threat shape.

use crate::bdpo::{init_bdpo, BdpoPlan, BlockId};
use crate::eog::eog;
use crate::error::{Error, Result};
use crate::facts::PartialState;
use crate::plan_file::parse_plan;
use crate::sas::parse_sas;
use crate::substitution::CandidateBlock;
use crate::task::{PlanningTask, SequentialPlan};

/// A named task/plan pair from the bundled corpus.
#[derive(Clone, Copy, Debug)]
pub struct Example {
    pub name: &'static str,
    pub sas: &'static str,
    pub plan: &'static str,
}

impl Example {
    /// Parses the task and its plan.
    pub fn load(&self) -> Result<(PlanningTask, SequentialPlan)> {
        let task = parse_sas(self.sas)?;
        let plan = parse_plan(self.plan, &task)?;
        Ok((task, plan))
    }
}

macro_rules! example {
    ($name:literal) => {
        Example {
            name: $name,
            sas: include_str!(concat!("../../../corpus/", $name, ".sas")),
            plan: include_str!(concat!("../../../corpus/", $name, ".plan")),
        }
    };
}

/// The two-lift elevator task with its nine-step single-lift plan.
pub const ELEVATOR: Example = example!("elevator");

/// A three-step chain in which every step consumes its predecessor's product.
pub const CHAIN: Example = example!("chain");
/// Three steps on disjoint variables.
pub const INDEPENDENT: Example = example!("independent");
/// A producer-consumer ordering that block deordering removes by wrapping an
/// earlier consumer of the same fact.
pub const RULE_PC: Example = example!("rule-pc");
/// A consumer-deleter ordering removed by wrapping the consumer with the
/// producer before it.
pub const RULE_CD_BEFORE: Example = example!("rule-cd-before");
/// A consumer-deleter ordering removed by wrapping the deleter with the step
/// that restores the fact after it.
pub const RULE_CD_AFTER: Example = example!("rule-cd-after");
/// A deleter-producer ordering removed by wrapping the producer with its consumer.
pub const RULE_DP: Example = example!("rule-dp");
/// A substitution whose replacement must be demoted below a deleter.
pub const SUB_DEMOTION: Example = example!("sub-demotion");
/// A replacement that lands between the ends of a link whose fact it deletes.
pub const THREAT_BETWEEN: Example = example!("threat-between");
/// A replacement that shares a producer with a block deleting the same fact.
pub const THREAT_MUTUAL: Example = example!("threat-mutual");
/// Binding to the earliest producer makes a feasible substitution fail.
pub const EARLY_COMMIT: Example = example!("early-commit");
/// Two mutually inverse steps that contribute nothing to the goal.
pub const INVERSE_PAIR: Example = example!("inverse-pair");

/// Every bundled example.
pub const ALL: &[Example] = &[
    ELEVATOR,
    CHAIN,
    INDEPENDENT,
    RULE_PC,
    RULE_CD_BEFORE,
    RULE_CD_AFTER,
    RULE_DP,
    SUB_DEMOTION,
    THREAT_BETWEEN,
    THREAT_MUTUAL,
    EARLY_COMMIT,
    INVERSE_PAIR,
];

/// Looks an example up by name.
pub fn by_name(name: &str) -> Option<Example> {
    ALL.iter().copied().find(|e| e.name == name)
}

/// A ready-made substitution: a plan (one primitive block per step), the
/// block to replace and a replacement subplan.
#[derive(Clone, Copy, Debug)]
pub struct SubstitutionCase {
    pub example: Example,
    /// Plan position (1-based) of the step whose block is replaced.
    pub old: u32,
    /// The replacement's operators, in execution order.
    pub replacement: &'static [&'static str],
    /// Plan positions applied to the initial state to obtain the state the
    /// replacement starts from.
    pub prefix: &'static [u32],
}

impl SubstitutionCase {
    /// Builds the task, the plan, the block to replace and the candidate.
    pub fn build(&self) -> Result<(PlanningTask, BdpoPlan, BlockId, CandidateBlock)> {
        let (task, plan) = self.example.load()?;
        let pop = eog(&task, &plan)?;
        let bdpo = init_bdpo(&pop);
        let old = bdpo
            .outer_blocks()
            .iter()
            .copied()
            .find(|&b| !b.is_synthetic() && bdpo.members(b).iter().any(|&s| bdpo.step(s).rank.0 == self.old))
            .ok_or_else(|| Error::InvalidInput(format!("no step at position {}", self.old)))?;
        let prefix: Vec<usize> = self.prefix.iter().map(|&p| plan.steps[p as usize - 1]).collect();
        let init = task.progress(&prefix)?;
        let sub = task.with_init_goal(init, PartialState::default());
        let steps = self
            .replacement
            .iter()
            .map(|n| task.operator_index(n).ok_or_else(|| Error::UnknownOperator(n.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let candidate = CandidateBlock::new(eog(&sub, &SequentialPlan::new(&sub, steps))?);
        Ok((task, bdpo, old, candidate))
    }
}

/// The replacement binds to a producer whose link a deleter threatens; one
/// demotion ordering repairs the plan and leaves the replacement unordered
/// with an earlier block.
pub const DEMOTION_CASE: SubstitutionCase =
    SubstitutionCase { example: SUB_DEMOTION, old: 3, replacement: &["x-alt"], prefix: &[1, 2] };

/// The replacement deletes the fact of a link it sits inside; the consumer is
/// not substitutable, so the threat cannot be resolved.
pub const BETWEEN_CASE: SubstitutionCase =
    SubstitutionCase { example: THREAT_BETWEEN, old: 2, replacement: &["x-alt"], prefix: &[1] };

/// As [`BETWEEN_CASE`], but the replacement also produces everything the
/// consumer supplies, so the consumer is substituted away.
pub const BETWEEN_SUBSTITUTABLE_CASE: SubstitutionCase =
    SubstitutionCase { example: THREAT_BETWEEN, old: 2, replacement: &["x-alt-full"], prefix: &[1] };

/// The replacement and another consumer of the same link delete the fact
/// and threaten each other.
pub const MUTUAL_CASE: SubstitutionCase =
    SubstitutionCase { example: THREAT_MUTUAL, old: 3, replacement: &["x-alt"], prefix: &[1] };

/// As [`MUTUAL_CASE`], but the other consumer is substitutable by the replacement.
pub const MUTUAL_SUBSTITUTABLE_CASE: SubstitutionCase =
    SubstitutionCase { example: THREAT_MUTUAL, old: 3, replacement: &["x-alt-full"], prefix: &[1] };

/// Binding to the earliest producer creates mutual threats, while binding to
/// the later producer and ordering the deleter before it succeeds.
pub const EARLY_COMMIT_CASE: SubstitutionCase =
    SubstitutionCase { example: EARLY_COMMIT, old: 4, replacement: &["finish-alt"], prefix: &[1] };
