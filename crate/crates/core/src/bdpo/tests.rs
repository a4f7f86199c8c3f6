use super::*;
use crate::corpus::ELEVATOR;
use crate::eog::eog;
use crate::task::SequentialPlan;

fn elevator_bdpo() -> (PlanningTask, BdpoPlan) {
    let (task, plan) = ELEVATOR.load().unwrap();
    let pop = eog(&task, &plan).unwrap();
    (task, init_bdpo(&pop))
}

#[test]
fn init_bdpo_wraps_every_step() {
    let (_, plan) = elevator_bdpo();
    assert_eq!(plan.blocks().len(), 11);
    assert!(plan.blocks().values().all(Block::is_primitive));
    assert_eq!(plan.flex().unordered_pairs, 0);
    assert!(plan.validate().is_valid(), "{}", plan.validate());
}

#[test]
fn elevator_block_deordering() {
    let (task, plan) = elevator_bdpo();
    let out = block_deorder(&plan);
    assert!(out.validate().is_valid(), "{}", out.validate());
    for seq in out.linearizations(10_000) {
        let sp = out.to_sequential(&seq).unwrap();
        assert!(crate::task::validate_sequential(&task, &sp).is_valid());
    }
    assert_eq!(out.flex().unordered_pairs, 16, "{:#}", out.to_json());
}

#[test]
fn elevator_block_structure() {
    let (_, plan) = elevator_bdpo();
    let out = block_deorder(&plan);
    let mut shapes: Vec<Vec<u32>> = out
        .outer_blocks()
        .iter()
        .filter(|b| !b.is_synthetic())
        .map(|&b| out.members(b).iter().map(|&s| out.step(s).rank.0).collect())
        .collect();
    shapes.sort();
    assert_eq!(shapes, vec![vec![1], vec![2], vec![3, 4, 5], vec![6, 7, 8, 9]]);
    let first = |r: u32| out.outer_blocks().iter().copied().find(|&b| out.members(b).iter().any(|&s| out.step(s).rank.0 == r)).unwrap();
    assert!(!out.ordered(first(3), first(6)));
    assert!(out.precedes(first(1), first(6)));
}

fn deordered(ex: crate::corpus::Example) -> (PlanningTask, BdpoPlan, BdpoPlan) {
    let (task, plan) = ex.load().unwrap();
    let b = init_bdpo(&eog(&task, &plan).unwrap());
    let out = block_deorder(&b);
    (task, b, out)
}

fn outer_shapes(plan: &BdpoPlan) -> Vec<Vec<u32>> {
    let mut v: Vec<Vec<u32>> = plan
        .outer_blocks()
        .iter()
        .filter(|b| !b.is_synthetic())
        .map(|&b| plan.members(b).iter().map(|&s| plan.step(s).rank.0).collect())
        .collect();
    v.sort();
    v
}

fn block_at(plan: &BdpoPlan, rank: u32) -> BlockId {
    plan.primitive_block(*plan.steps().iter().find(|(_, s)| s.rank.0 == rank).unwrap().0)
}

#[test]
fn each_rule_wraps_the_expected_span() {
    use crate::corpus::*;
    let cases: [(crate::corpus::Example, Vec<Vec<u32>>, usize); 4] = [
        (RULE_PC, vec![vec![1], vec![2, 3], vec![4]], 2),
        (RULE_CD_BEFORE, vec![vec![1, 2], vec![3]], 2),
        (RULE_CD_AFTER, vec![vec![1], vec![2, 3]], 2),
        (RULE_DP, vec![vec![1], vec![2, 3]], 2),
    ];
    for (ex, shapes, unordered) in cases {
        let (task, before, out) = deordered(ex);
        assert_eq!(before.flex().unordered_pairs, 0, "{}", ex.name);
        assert_eq!(outer_shapes(&out), shapes, "{}", ex.name);
        assert_eq!(out.flex().unordered_pairs, unordered, "{}", ex.name);
        assert!(out.validate().is_valid(), "{}: {}", ex.name, out.validate());
        for seq in out.linearizations(100) {
            assert!(crate::task::validate_sequential(&task, &out.to_sequential(&seq).unwrap()).is_valid());
        }
    }
}

#[test]
fn dependent_chain_and_independent_steps_are_unchanged() {
    let (_, before, out) = deordered(crate::corpus::CHAIN);
    assert!(out == before);
    assert_eq!(out.flex().value(), 0.0);
    let (_, before, out) = deordered(crate::corpus::INDEPENDENT);
    assert!(out == before);
    assert_eq!(out.flex().value(), 1.0);
}

#[test]
fn deleter_producer_reason_wraps_producer_with_its_consumer() {
    let (_, mut plan, _) = deordered(crate::corpus::RULE_DP);
    let (spoil, make) = (block_at(&plan, 1), block_at(&plan, 2));
    let reasons = plan.reasons_for(spoil, make).unwrap().clone();
    assert_eq!(reasons.len(), 1);
    let reason = *reasons.iter().next().unwrap();
    assert_eq!(reason.kind, crate::pop::ReasonKind::DeleterProducer);
    assert!(try_remove_reason(&mut plan, (spoil, make), reason));
    let wrapped = plan.outermost(make);
    assert_eq!(plan.members(wrapped).len(), 2);
    assert!(!plan.ordered(spoil, wrapped));
    assert!(plan.validate().is_valid());
}

#[test]
fn irremovable_reason_leaves_plan_intact() {
    let (_, mut plan, _) = deordered(crate::corpus::CHAIN);
    let before = plan.clone();
    let (a, b) = (block_at(&plan, 1), block_at(&plan, 2));
    let reason = *plan.reasons_for(a, b).unwrap().iter().next().unwrap();
    assert!(!try_remove_reason(&mut plan, (a, b), reason));
    assert!(plan == before);
}

#[test]
fn primitive_profile_is_operator_semantics() {
    let (_, plan) = elevator_bdpo();
    let b = block_at(&plan, 2);
    let p = block_profile(&plan, b);
    let step = plan.step(*plan.members(b).iter().next().unwrap());
    assert_eq!(p.cons, step.op.pre.facts().collect());
    assert_eq!(p.prod, step.op.eff.facts().collect());
    assert_eq!(p.del, step.del);
}

#[test]
fn compound_profile_of_first_passenger_trip() {
    let (task, plan) = elevator_bdpo();
    let mut plan = block_deorder(&plan);
    let trip = BTreeSet::from([plan.outermost(block_at(&plan, 2)), plan.outermost(block_at(&plan, 3))]);
    assert_eq!(trip.len(), 2);
    let b = plan.wrap(&trip).unwrap();
    assert_eq!(plan.members(b).len(), 4);
    let p = block_profile(&plan, b);
    let fact = |name: &str| {
        let (v, var) = task.variables.iter().enumerate().find(|(_, var)| var.values.iter().any(|x| x.ends_with(name))).unwrap();
        Fact::new(v, var.values.iter().position(|x| x.ends_with(name)).unwrap())
    };
    let (e1_n2, p1_n2, p1_n3) = (fact("lift-at(e1, n2)"), fact("at(p1, n2)"), fact("at(p1, n3)"));
    assert!(p.pre.contains(&e1_n2) && p.pre.contains(&p1_n2));
    assert!(p.eff.contains(&p1_n3) && p.eff.contains(&e1_n2));
    assert!(p.prod.contains(&p1_n3) && !p.prod.contains(&e1_n2));
    assert!(plan.validate().is_valid());
}

#[test]
fn unordered_writers_give_several_effects_and_no_product() {
    let task = crate::testutil::tiny_task(
        &[3, 2, 2],
        &[("one", &[], &[(0, 1), (1, 1)]), ("two", &[], &[(0, 2), (2, 1)])],
        &[0, 0, 0],
        &[(1, 1), (2, 1)],
    );
    let plan = SequentialPlan::new(&task, vec![0, 1]);
    let mut b = init_bdpo(&eog(&task, &plan).unwrap());
    assert_eq!(b.flex().unordered_pairs, 1);
    let set: BTreeSet<BlockId> = b.outer_blocks().iter().copied().filter(|x| !x.is_synthetic()).collect();
    let w = b.wrap(&set).unwrap();
    let p = block_profile(&b, w);
    assert!(p.eff.contains(&Fact::new(0, 1)) && p.eff.contains(&Fact::new(0, 2)));
    assert!(!p.prod.contains(&Fact::new(0, 1)) && !p.prod.contains(&Fact::new(0, 2)));
    assert!(p.del.contains(&Fact::new(0, 0)));
}

#[test]
fn earliest_candidate_producer_cases() {
    // Producers a ≺ b of v=1, a deleter between them, and a consumer after b.
    let task = crate::testutil::tiny_task(
        &[2, 2, 2, 2],
        &[
            ("a", &[], &[(0, 1), (1, 1)]),
            ("kill", &[(1, 1)], &[(0, 0), (2, 1)]),
            ("b", &[(2, 1)], &[(0, 1)]),
            ("c", &[(0, 1)], &[(3, 1)]),
        ],
        &[0, 0, 0, 0],
        &[(3, 1)],
    );
    let plan = init_bdpo(&eog(&task, &SequentialPlan::new(&task, vec![0, 1, 2, 3])).unwrap());
    let (a, b, c) = (block_at(&plan, 1), block_at(&plan, 3), block_at(&plan, 4));
    let v1 = Fact::new(0, 1);
    assert_eq!(earliest_candidate_producer(&plan, v1, c), Some(b));
    assert_eq!(earliest_candidate_producer(&plan, Fact::new(1, 0), a), Some(BlockId::INIT));
    assert_eq!(earliest_candidate_producer(&plan, v1, a), None);
    // Without the deleter, the earlier producer wins.
    let plan = init_bdpo(&eog(&task, &SequentialPlan::new(&task, vec![0, 3])).unwrap());
    let (a, c) = (block_at(&plan, 1), block_at(&plan, 2));
    assert_eq!(earliest_candidate_producer(&plan, v1, c), Some(a));
}
