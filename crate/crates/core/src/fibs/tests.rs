use super::*;
use crate::corpus::{ELEVATOR, INDEPENDENT, INVERSE_PAIR};

fn elevator() -> (PlanningTask, SequentialPlan) {
    ELEVATOR.load().unwrap()
}

fn quick() -> FibsConfig {
    FibsConfig { time_limit: Duration::from_secs(120), ..FibsConfig::default() }
}

#[test]
fn criteria_accept_as_documented() {
    let f = |u, t| FlexScore { unordered_pairs: u, total_pairs: t };
    assert!(Criteria::Rfo.accepts((8, f(0, 36)), (8, f(1, 36))));
    assert!(!Criteria::Rfo.accepts((8, f(0, 36)), (9, f(10, 36))));
    assert!(!Criteria::Rfo.accepts((8, f(1, 36)), (7, f(1, 36))));
    assert!(Criteria::Rco.accepts((8, f(5, 36)), (7, f(0, 21))));
    assert!(Criteria::Rco.accepts((8, f(0, 36)), (8, f(1, 36))));
    assert!(!Criteria::Rco.accepts((8, f(1, 36)), (8, f(1, 36))));
    // 15/28 beats 16/36 even though it has fewer unordered pairs.
    assert!(Criteria::Rfo.accepts((8, f(16, 36)), (8, f(15, 28))));
}

#[test]
fn elevator_trajectory() {
    let (task, seq) = elevator();
    let config = FibsConfig { reduce: ReduceMode::Gj, ..quick() };
    let (plan, reports) = fibs(&task, &seq, &config).unwrap();
    let got: Vec<(Phase, usize, usize, u64)> =
        reports.iter().map(|r| (r.phase, r.flex_after.unordered_pairs, r.flex_after.total_pairs, r.cost_after)).collect();
    assert_eq!(
        got,
        vec![
            (Phase::Eog, 0, 36, 9),
            (Phase::Sd1, 0, 36, 9),
            (Phase::Bd, 16, 36, 9),
            (Phase::Sd2, 15, 28, 8),
            (Phase::Reduce, 12, 21, 7),
        ]
    );
    assert!(plan.validate().is_valid(), "{}", plan.validate());
    for order in plan.linearizations(10_000) {
        let sp = plan.to_sequential(&order).unwrap();
        assert!(crate::task::validate_sequential(&task, &sp).is_valid());
    }
}

#[test]
fn elevator_second_lift_replaces_last_trip() {
    let (task, seq) = elevator();
    let bd = block_deorder(&init_bdpo(&eog(&task, &seq).unwrap()));
    let sd2 = substitution_deorder(&task, &bd, &quick());
    assert_eq!(sd2.cost(), 8);
    assert_eq!(sd2.flex().hundredths(), 54);
    let names: BTreeSet<String> = sd2.real_steps().iter().map(|&s| sd2.step(s).op.name.clone()).collect();
    assert!(names.iter().any(|n| n.contains("e2")), "{names:?}");
}

#[test]
fn subtask_for_the_last_trip() {
    let (task, seq) = elevator();
    let bd = block_deorder(&init_bdpo(&eog(&task, &seq).unwrap()));
    let block_with = |r: u32| bd.outer_blocks().iter().copied().find(|&b| bd.members(b).iter().any(|&s| bd.step(s).rank.0 == r)).unwrap();
    let (b_i, b_j) = (block_with(1), block_with(6));
    assert!(bd.root_orderings().contains(&(b_i, b_j)));
    let st = build_subtask(&task, &bd, b_i, b_j, &quick()).unwrap();
    // Hand progression: nothing but the excluded first move precedes the
    // trip, so e1 is still at n3 and e2 and p2 wait at n1.
    let at = |var, val| st.init().get(var) == val;
    assert!(at(0, 2) && at(1, 0) && at(3, 0));
    // The trip only supplies p2 at n2 to the goal and nothing straddles it.
    assert_eq!(st.goal().facts().collect::<Vec<_>>(), vec![Fact { var: 3, val: 1 }]);
    assert_eq!(st.cost_bound, 4);
    assert_eq!(st.length_cap, 16);
}

#[test]
fn backward_justification_misses_internal_detour() {
    let (task, seq) = elevator();
    let bd = block_deorder(&init_bdpo(&eog(&task, &seq).unwrap()));
    let sd2 = substitution_deorder(&task, &bd, &quick());
    assert!(backward_justify(&sd2).is_empty());
    assert_eq!(reduce(&sd2, ReduceMode::Bj).cost(), 8);
    assert!(!greedy_justify(&sd2).is_empty());
    let gj = reduce(&sd2, ReduceMode::Gj);
    assert_eq!(gj.cost(), 7);
    assert_eq!(gj.flex().hundredths(), 57);
}

#[test]
fn inverse_pair_is_removed_by_greedy_justification() {
    let (task, seq) = INVERSE_PAIR.load().unwrap();
    let plan = init_bdpo(&eog(&task, &seq).unwrap());
    let reduced = reduce(&plan, ReduceMode::Gj);
    assert_eq!(reduced.len() + 2, plan.len());
    assert!(reduced.validate().is_valid());
    assert!(reduced.matches_task(&task).is_valid());
}

#[test]
fn independent_plan_is_left_alone() {
    let (task, seq) = INDEPENDENT.load().unwrap();
    let (plan, reports) = fibs(&task, &seq, &quick()).unwrap();
    assert_eq!(plan.cost(), seq.cost);
    assert!(reports.windows(2).all(|w| w[1].flex_before == w[0].flex_after));
    assert_eq!(reports.last().unwrap().flex_after.value(), 1.0);
}

#[test]
fn rfo_never_loses_flexibility_or_adds_cost() {
    for ex in crate::corpus::ALL {
        let (task, seq) = ex.load().unwrap();
        let (plan, reports) = fibs(&task, &seq, &quick()).unwrap();
        assert!(plan.validate().is_valid(), "{}", ex.name);
        for r in &reports[1..] {
            assert!(r.flex_after.cmp_value(&r.flex_before).is_ge(), "{} {:?}", ex.name, r);
            assert!(r.cost_after <= r.cost_before, "{} {:?}", ex.name, r);
        }
    }
}

#[test]
fn reports_omit_timings_unless_asked() {
    let (task, seq) = elevator();
    let (_, reports) = fibs(&task, &seq, &quick()).unwrap();
    let plain = reports_json(&reports, false).to_string();
    assert!(!plain.contains("elapsed"));
    assert!(reports_json(&reports, true).to_string().contains("elapsed_s"));
    let csv = reports_csv(&reports, false);
    assert_eq!(csv.lines().count(), reports.len() + 1);
    assert!(csv.starts_with("phase,"));
}

