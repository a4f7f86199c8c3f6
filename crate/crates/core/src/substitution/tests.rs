use super::*;
use crate::bdpo::{block_deorder, init_bdpo};
use crate::corpus::{BETWEEN_CASE, BETWEEN_SUBSTITUTABLE_CASE, DEMOTION_CASE, EARLY_COMMIT_CASE, ELEVATOR, MUTUAL_CASE, MUTUAL_SUBSTITUTABLE_CASE};
use crate::eog::eog;
use crate::facts::PartialState;
use crate::task::{validate_sequential, PlanningTask, SequentialPlan};

fn elevator_bd() -> (PlanningTask, BdpoPlan) {
    let (task, plan) = ELEVATOR.load().unwrap();
    let pop = eog(&task, &plan).unwrap();
    (task.clone(), block_deorder(&init_bdpo(&pop)))
}

fn block_with_rank(plan: &BdpoPlan, rank: u32) -> BlockId {
    plan.outer_blocks().iter().copied().find(|&b| plan.members(b).iter().any(|&s| plan.step(s).rank.0 == rank)).unwrap()
}

fn candidate(task: &PlanningTask, names: &[&str], goal: &[(usize, usize)]) -> CandidateBlock {
    let steps = names.iter().map(|n| task.operator_index(n).unwrap()).collect();
    let goal: PartialState = goal.iter().map(|&(v, d)| Fact::new(v, d)).collect();
    let sub = task.with_init_goal(task.init.clone(), goal);
    let plan = SequentialPlan::new(&sub, steps);
    CandidateBlock::new(eog(&sub, &plan).unwrap())
}

fn assert_sound(task: &PlanningTask, plan: &BdpoPlan) {
    assert!(plan.validate().is_valid(), "{}", plan.validate());
    for seq in plan.linearizations(5_000) {
        let sp = plan.to_sequential(&seq).unwrap();
        assert!(validate_sequential(task, &sp).is_valid());
    }
}

#[test]
fn elevator_second_lift_takes_over() {
    let (task, plan) = elevator_bd();
    let old = block_with_rank(&plan, 6);
    let cand = candidate(&task, &["board p2 n1 e2", "move_up e2 n1 n2", "leave p2 n2 e2"], &[(3, 1)]);
    assert_eq!(cand.cost, 3);
    assert_eq!(cand.profile.pre, BTreeSet::from([Fact::new(1, 0), Fact::new(3, 0)]));
    let out = substitute(&plan, old, cand);
    assert!(out.success, "{:#}", out.trace_json());
    assert_sound(&task, &out.plan);
    assert_eq!(out.plan.cost(), 8);
    assert_eq!((out.plan.flex().unordered_pairs, out.plan.flex().total_pairs), (15, 28));
    assert_eq!(out.plan.flex().hundredths(), 54);
}

#[test]
fn missing_product_leaves_plan_untouched() {
    let (task, plan) = elevator_bd();
    let old = block_with_rank(&plan, 6);
    let cand = candidate(&task, &["move_up e2 n1 n2"], &[(1, 1)]);
    let out = substitute(&plan, old, cand);
    assert!(!out.success);
    assert_eq!(out.failure, Some(FailureReason::MissingProduct));
    assert!(out.plan == plan);
    assert!(matches!(out.trace.last(), Some(TraceEvent::Failed { .. })));
}

#[test]
fn valid_plan_has_no_threats() {
    let (_, plan) = elevator_bd();
    assert!(detect_threats(&plan).is_empty());
}

/// Runs the first two phases and the deletion, leaving threats unresolved.
fn before_threat_resolution(case: &crate::corpus::SubstitutionCase) -> (BdpoPlan, BlockId) {
    let (_, plan, old, cand) = case.build().unwrap();
    let mut w = plan.clone();
    let mut trace = Vec::new();
    let bind = |p: &BdpoPlan, f: Fact, nb: BlockId| candidate_producer_at(p, f, old, &BTreeSet::from([old, nb]));
    let nb = insert_external(&mut w, &mut trace, old, &cand, &bind).unwrap().unwrap();
    rebind_and_remove(&mut w, &mut trace, old, Some(nb)).unwrap();
    (w, nb)
}

fn name_of(plan: &BdpoPlan, b: BlockId) -> String {
    let s = *plan.members(b).iter().next().unwrap();
    plan.step(s).op.name.clone()
}

#[test]
fn demotion_case_orders_replacement_before_deleter() {
    let (task, plan, old, cand) = DEMOTION_CASE.build().unwrap();
    let out = substitute(&plan, old, cand);
    assert!(out.success, "{:#}", out.trace_json());
    assert_sound(&task, &out.plan);
    let p = &out.plan;
    let nb = out.new_block.unwrap();
    let by_name = |n: &str| p.outer_blocks().iter().copied().find(|&b| !b.is_synthetic() && name_of(p, b) == n).unwrap();
    let v1 = Fact::new(0, 1);
    assert!(p.links().iter().any(|l| l.fact == v1 && p.is_member(l.consumer, nb) && p.is_member(l.producer, by_name("r"))));
    assert!(p.links().iter().any(|l| l.fact == Fact::new(2, 1) && p.is_member(l.producer, nb) && p.is_member(l.consumer, by_name("t"))));
    assert!(p.reasons_for(nb, by_name("s")).unwrap().contains(&OrderingReason::cd(v1)));
    assert!(!p.ordered(by_name("i"), nb));
}

#[test]
fn threat_inside_link_is_detected_once() {
    let (w, nb) = before_threat_resolution(&BETWEEN_CASE);
    let threats = detect_threats(&w);
    assert_eq!(threats.len(), 1, "{threats:?}");
    assert_eq!(threats[0].threat, nb);
    assert!(w.precedes(threats[0].producer, nb) && w.precedes(nb, threats[0].consumer));
}

#[test]
fn mutual_threats_are_both_detected() {
    let (w, nb) = before_threat_resolution(&MUTUAL_CASE);
    let threats = detect_threats(&w);
    assert_eq!(threats.len(), 2, "{threats:?}");
    assert!(threats.iter().any(|t| t.threat == nb));
    assert!(threats.iter().any(|t| t.consumer == nb));
}

#[test]
fn unsubstitutable_conflicts_are_unresolvable() {
    for case in [BETWEEN_CASE, MUTUAL_CASE] {
        let (_, plan, old, cand) = case.build().unwrap();
        let out = substitute(&plan, old, cand);
        assert!(!out.success);
        assert_eq!(out.failure, Some(FailureReason::UnresolvableThreat), "{}", case.example.name);
        assert!(out.plan == plan);
    }
}

#[test]
fn substitutable_conflicts_are_substituted_away() {
    for case in [BETWEEN_SUBSTITUTABLE_CASE, MUTUAL_SUBSTITUTABLE_CASE] {
        let (task, plan, old, cand) = case.build().unwrap();
        let out = substitute(&plan, old, cand);
        assert!(out.success, "{}: {:#}", case.example.name, out.trace_json());
        assert!(out.trace.iter().any(|e| matches!(e, TraceEvent::InternalSubstitution { .. })));
        assert!(detect_threats(&out.plan).is_empty());
        assert_sound(&task, &out.plan);
        assert_eq!(out.plan.len(), 2);
    }
}

#[test]
fn earliest_producer_commitment_is_incomplete() {
    let (task, plan, old, cand) = EARLY_COMMIT_CASE.build().unwrap();
    let out = substitute(&plan, old, cand.clone());
    assert!(!out.success, "{:#}", out.trace_json());
    let found = substitute_exhaustive(&plan, old, &cand, 1_000).expect("an alternative binding works");
    assert_sound(&task, &found);
}
