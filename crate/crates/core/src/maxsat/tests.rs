use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::eog::eog;
use crate::generate::{random_task, RandomTaskConfig};
use crate::task::SequentialPlan;
use crate::testutil::tiny_task;

fn pop_of(task: &crate::task::PlanningTask, steps: &[usize]) -> PartialOrderPlan {
    eog(task, &SequentialPlan::new(task, steps.to_vec())).unwrap()
}

fn independent() -> PartialOrderPlan {
    let task = tiny_task(&[2, 2], &[("a", &[], &[(0, 1)]), ("b", &[], &[(1, 1)])], &[0, 0], &[(0, 1), (1, 1)]);
    pop_of(&task, &[0, 1])
}

fn chain() -> PartialOrderPlan {
    let task = tiny_task(
        &[2, 2, 2],
        &[("a", &[], &[(0, 1)]), ("b", &[(0, 1)], &[(1, 1)]), ("c", &[(1, 1)], &[(2, 1)])],
        &[0, 0, 0],
        &[(2, 1)],
    );
    pop_of(&task, &[0, 1, 2])
}

/// Every assignment of a small instance, scored directly.
fn exhaustive_optimum(w: &Wcnf) -> Option<u64> {
    assert!(w.num_vars <= 16);
    (0u32..1 << w.num_vars)
        .filter_map(|bits| {
            let model: Vec<bool> = (0..w.num_vars).map(|i| bits >> i & 1 == 1).collect();
            w.cost(&model)
        })
        .min()
}

#[test]
fn branch_and_bound_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..300 {
        let n = rng.random_range(1..=10u32);
        let mut w = Wcnf::new(n);
        let lit = |rng: &mut ChaCha8Rng| {
            let v = rng.random_range(1..=n) as Lit;
            if rng.random_bool(0.5) {
                v
            } else {
                -v
            }
        };
        for _ in 0..rng.random_range(0..12) {
            let c = (0..rng.random_range(1..=3)).map(|_| lit(&mut rng)).collect();
            w.add_hard(c);
        }
        for _ in 0..rng.random_range(1..10) {
            let c = (0..rng.random_range(1..=2)).map(|_| lit(&mut rng)).collect();
            w.add_soft(rng.random_range(1..5), c);
        }
        let got = solve(&w).map(|m| w.cost(&m).expect("solver models satisfy the hard clauses"));
        assert_eq!(got, exhaustive_optimum(&w), "{}", w.to_dimacs(&[]));
    }
}

#[test]
fn independent_steps_need_no_ordering() {
    let pop = independent();
    let out = minimum_reordering(&pop, false).unwrap();
    assert_eq!(out.flex().ordered_pairs(), 0);
    assert_eq!(brute_force_mr(&pop, false).unwrap().flex().ordered_pairs(), 0);
}

#[test]
fn chain_keeps_exactly_its_forced_orderings() {
    let pop = chain();
    let (w, cat) = encode_mr(&pop, false).unwrap();
    let model = solve(&w).unwrap();
    let out = decode_model(&model, &w, &cat, &pop).unwrap();
    // a ≺ b ≺ c and the closure a ≺ c.
    assert_eq!(out.flex().ordered_pairs(), 3);
    let ids = out.real_steps();
    assert!(out.precedes(ids[0], ids[1]) && out.precedes(ids[1], ids[2]) && out.precedes(ids[0], ids[2]));
    // Every model supporting b's precondition orders a before b.
    let g = cat.get(MrVar::Link(ids[0], Fact::new(0, 1), ids[1])).unwrap();
    let t = cat.get(MrVar::Before(ids[0], ids[1])).unwrap();
    assert!(model[g as usize - 1] && model[t as usize - 1]);
}

#[test]
fn mclcp_drops_a_step_that_contributes_nothing() {
    let task = tiny_task(&[2, 2], &[("a", &[], &[(0, 1)]), ("idle", &[], &[(1, 1)])], &[0, 0], &[(0, 1)]);
    let pop = pop_of(&task, &[0, 1]);
    let out = minimum_reordering(&pop, true).unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(out.step(out.real_steps()[0]).op.name, "a");
    assert_eq!(minimum_reordering(&pop, false).unwrap().len(), 2);
    assert_eq!(brute_force_mr(&pop, true).unwrap().len(), 1);
}

#[test]
fn total_order_model_decodes_to_a_total_order() {
    let pop = chain();
    let (w, cat) = encode_mr(&pop, false).unwrap();
    let mut order = vec![StepId::INIT];
    order.extend(pop.real_steps());
    order.push(StepId::GOAL);
    let pos = |s: StepId| order.iter().position(|&x| x == s).unwrap();
    let model: Vec<bool> = (1..=w.num_vars)
        .map(|n| match cat.var(n).unwrap() {
            MrVar::Present(_) => true,
            MrVar::Before(a, b) => pos(a) < pos(b),
            MrVar::Link(p, f, c) => pop.links().contains(&CausalLink { producer: p, fact: f, consumer: c }),
        })
        .collect();
    let out = decode_model(&model, &w, &cat, &pop).unwrap();
    assert_eq!(out.flex().unordered_pairs, 0);
    assert!(out.validate().is_valid());
}

#[test]
fn link_without_its_ordering_is_rejected() {
    let pop = chain();
    let (w, cat) = encode_mr(&pop, false).unwrap();
    let mut model = solve(&w).unwrap();
    let ids = pop.real_steps();
    let t = cat.get(MrVar::Before(ids[0], ids[1])).unwrap();
    model[t as usize - 1] = false;
    assert!(matches!(decode_model(&model, &w, &cat, &pop), Err(Error::InvalidModel(_))));
}

#[test]
fn dimacs_round_trip() {
    let (w, cat) = encode_mr(&chain(), true).unwrap();
    let text = w.to_dimacs(&catalog_comments(&cat));
    let header = text.lines().find(|l| l.starts_with("p ")).unwrap();
    assert_eq!(header, format!("p wcnf {} {} {}", w.num_vars, w.hard.len() + w.soft.len(), w.top()));
    assert_eq!(Wcnf::parse_dimacs(&text).unwrap(), w);
    assert!(w.soft.iter().all(|(wt, c)| *wt > 0 && !c.is_empty()));
    assert!(w.hard.iter().all(|c| !c.is_empty()));
}

#[test]
fn models_parse_in_both_notations() {
    assert_eq!(parse_model("s OPTIMUM FOUND\nv 1 -2 3 0\n", 3).unwrap(), vec![true, false, true]);
    assert_eq!(parse_model("v 101\n", 3).unwrap(), vec![true, false, true]);
    assert!(parse_model("o 3\n", 3).is_err());
    assert!(parse_model("v 4\n", 3).is_err());
}

#[test]
fn size_limits() {
    let steps: Vec<usize> = (0..201).map(|i| i % 2).collect();
    let task = tiny_task(&[2], &[("on", &[(0, 0)], &[(0, 1)]), ("off", &[(0, 1)], &[(0, 0)])], &[0], &[(0, 1)]);
    let big = pop_of(&task, &steps);
    assert!(matches!(encode_mr(&big, false), Err(Error::TooLarge { size: 201, limit: 200 })));
    let seven = pop_of(&task, &steps[..7]);
    assert!(matches!(brute_force_mr(&seven, false), Err(Error::TooLarge { size: 7, limit: 6 })));
}

#[test]
fn encoding_optimum_matches_enumeration_on_random_tasks() {
    for seed in 0..40 {
        let (task, plan) = random_task(seed, &RandomTaskConfig::tiny());
        let pop = eog(&task, &plan).unwrap();
        for mclcp in [false, true] {
            let mr = minimum_reordering(&pop, mclcp).unwrap();
            let bf = brute_force_mr(&pop, mclcp).unwrap();
            assert!(mr.validate().is_valid() && bf.validate().is_valid());
            assert_eq!(
                (mr.cost(), mr.flex().ordered_pairs()),
                (bf.cost(), bf.flex().ordered_pairs()),
                "seed {seed} mclcp {mclcp}"
            );
        }
    }
}
