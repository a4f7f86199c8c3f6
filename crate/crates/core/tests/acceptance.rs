//! Acceptance checks: one PASS/FAIL line per criterion, non-zero exit status
//! if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use popflex::bdpo::{block_deorder, init_bdpo, BdpoPlan};
use popflex::corpus::{self, BETWEEN_CASE, BETWEEN_SUBSTITUTABLE_CASE, EARLY_COMMIT_CASE, MUTUAL_CASE, MUTUAL_SUBSTITUTABLE_CASE};
use popflex::eog::eog;
use popflex::error::Error;
use popflex::fibs::{fibs, reduce, reports_json, Criteria, FibsConfig, Phase, ReduceMode};
use popflex::generate::{loosely_coupled, random_task, RandomTaskConfig};
use popflex::maxsat::{brute_force_mr, encode_mr, minimum_reordering};
use popflex::pop::{validate_pop, FlexScore};
use popflex::substitution::{substitute, substitute_exhaustive, FailureReason};
use popflex::task::PlanningTask;

const RANDOM_TASKS: u64 = 500;
const MR_TASKS: u64 = 100;

type Outcome = Result<String, String>;

fn config() -> FibsConfig {
    FibsConfig { time_limit: Duration::from_secs(120), ..FibsConfig::default() }
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn sound(task: &PlanningTask, plan: &BdpoPlan) -> Result<(), String> {
    let structure = plan.validate();
    check(structure.is_valid(), || structure.to_string())?;
    let matches = plan.matches_task(task);
    check(matches.is_valid(), || matches.to_string())?;
    let runs = plan.check_linearizations(task, 7, 20);
    check(runs.is_valid(), || runs.to_string())
}

fn show(f: FlexScore) -> String {
    format!("{}/{} = {:.4}", f.unordered_pairs, f.total_pairs, f.value())
}

/// Elevator golden run.
fn elevator_golden_run() -> Outcome {
    let start = Instant::now();
    let (task, seq) = corpus::ELEVATOR.load().map_err(|e| e.to_string())?;
    let cfg = FibsConfig { reduce: ReduceMode::Gj, ..config() };
    let (plan, reports) = fibs(&task, &seq, &cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let at = |p: Phase| reports.iter().find(|r| r.phase == p).expect("phase ran");
    let (eog_r, bd, sd2, red) = (at(Phase::Eog), at(Phase::Bd), at(Phase::Sd2), at(Phase::Reduce));
    let trajectory = format!(
        "EOG {}, BD {}, SD2 {} (cost {}), GJ {} (cost {}), {:.2?}",
        show(eog_r.flex_after),
        show(bd.flex_after),
        show(sd2.flex_after),
        sd2.cost_after,
        show(red.flex_after),
        red.cost_after,
        elapsed
    );
    let mut problems = Vec::new();
    if eog_r.flex_after.unordered_pairs != 0 {
        problems.push("EOG flex is not 0".to_string());
    }
    if bd.flex_after.hundredths() != 44 {
        problems.push("BD flex is not 0.44".to_string());
    }
    if sd2.flex_after.hundredths() < 54 {
        problems.push("SD2 flex is below 0.54".to_string());
    }
    if red.flex_after.hundredths() != 75 {
        problems.push(format!("GJ flex {:.2} is not 0.75", red.flex_after.value()));
    }
    if red.cost_after != 7 {
        problems.push("GJ cost is not 7".to_string());
    }
    if elapsed >= Duration::from_secs(10) {
        problems.push("slower than 10 s".to_string());
    }
    sound(&task, &plan)?;
    if problems.is_empty() {
        Ok(trajectory)
    } else {
        Err(format!("{trajectory}; {}", problems.join("; ")))
    }
}

/// Every stage on every random task yields a valid, executable plan; the
/// same runs also feed the monotonicity criterion.
fn random_corpus() -> (Outcome, Outcome) {
    let mut validity_failures = Vec::new();
    let mut monotonic_failures = Vec::new();
    let mut stages = 0;
    let mut improved = 0;
    for seed in 0..RANDOM_TASKS {
        let (task, seq) = random_task(seed, &RandomTaskConfig::default());
        let mut fail = |stage: &str, e: String| validity_failures.push(format!("seed {seed} {stage}: {e}"));
        let pop = match eog(&task, &seq) {
            Ok(p) => p,
            Err(e) => {
                fail("EOG", e.to_string());
                continue;
            }
        };
        let report = validate_pop(&task, &pop);
        if !report.is_valid() {
            fail("EOG", report.to_string());
        }
        let base = init_bdpo(&pop);
        let bd = block_deorder(&base);
        let mut plans: Vec<(&str, BdpoPlan)> = vec![("EOG", base), ("BD", bd.clone())];
        for criteria in [Criteria::Rfo, Criteria::Rco] {
            match fibs(&task, &seq, &FibsConfig { criteria, ..config() }) {
                Ok((plan, reports)) => {
                    if criteria == Criteria::Rfo {
                        let steps: Vec<(FlexScore, u64)> = reports.iter().map(|r| (r.flex_after, r.cost_after)).collect();
                        let ok = steps
                            .windows(2)
                            .all(|w| w[1].0.cmp_value(&w[0].0).is_ge() && w[1].1 <= w[0].1);
                        if !ok {
                            monotonic_failures.push(format!("seed {seed}: {steps:?}"));
                        }
                        if steps.last().unwrap().0.cmp_value(&steps[2].0).is_gt() {
                            improved += 1;
                        }
                    }
                    plans.push((if criteria == Criteria::Rfo { "FIBS-RFO" } else { "FIBS-RCO" }, plan));
                }
                Err(e) => fail("FIBS", e.to_string()),
            }
        }
        plans.push(("BJ", reduce(&bd, ReduceMode::Bj)));
        plans.push(("GJ", reduce(&bd, ReduceMode::Gj)));
        for (stage, plan) in &plans {
            stages += 1;
            if let Err(e) = sound(&task, plan) {
                fail(stage, e);
            }
        }
    }
    let validity = if validity_failures.is_empty() {
        Ok(format!("{RANDOM_TASKS} tasks, {stages} stage outputs, 0 failures"))
    } else {
        Err(format!("{} failures, first: {}", validity_failures.len(), validity_failures[0]))
    };
    let monotonic = if monotonic_failures.is_empty() {
        Ok(format!("{RANDOM_TASKS} runs monotone; SD2 raised flex over BD in {improved}"))
    } else {
        Err(format!("{} non-monotone runs, first: {}", monotonic_failures.len(), monotonic_failures[0]))
    };
    (validity, monotonic)
}

/// MaxSAT optimum agrees with enumeration.
fn mr_oracle() -> Outcome {
    let mut compared = 0;
    for seed in 0..MR_TASKS {
        let (task, seq) = random_task(seed, &RandomTaskConfig::tiny());
        let pop = eog(&task, &seq).map_err(|e| e.to_string())?;
        for mclcp in [false, true] {
            let mr = minimum_reordering(&pop, mclcp).map_err(|e| format!("seed {seed}: {e}"))?;
            let bf = brute_force_mr(&pop, mclcp).map_err(|e| format!("seed {seed}: {e}"))?;
            let key = |p: &popflex::pop::PartialOrderPlan| (if mclcp { p.cost() } else { 0 }, p.flex().ordered_pairs());
            check(key(&mr) == key(&bf), || {
                format!("seed {seed} mclcp={mclcp}: encoding {:?} vs enumeration {:?}", key(&mr), key(&bf))
            })?;
            check(validate_pop(&task, &mr).is_valid(), || format!("seed {seed}: decoded plan invalid"))?;
            compared += 1;
        }
    }
    Ok(format!("{compared} optima compared ({MR_TASKS} tasks, both modes)"))
}

/// Committing to the earliest producer can miss a valid substitution.
fn incompleteness_witness() -> Outcome {
    let (task, plan, old, cand) = EARLY_COMMIT_CASE.build().map_err(|e| e.to_string())?;
    let out = substitute(&plan, old, cand.clone());
    check(!out.success, || "substitution unexpectedly succeeded".into())?;
    let found = substitute_exhaustive(&plan, old, &cand, 10_000).ok_or("exhaustive search found nothing")?;
    sound(&task, &found)?;
    Ok(format!("substitute fails ({:?}); alternative binding yields a valid plan", out.failure))
}

/// Threat shapes that only a substitution of the conflicting block resolves.
fn threat_shapes() -> Outcome {
    for case in [BETWEEN_CASE, MUTUAL_CASE] {
        let (_, plan, old, cand) = case.build().map_err(|e| e.to_string())?;
        let out = substitute(&plan, old, cand);
        check(out.failure == Some(FailureReason::UnresolvableThreat), || {
            format!("{}: expected UnresolvableThreat, got {:?}", case.example.name, out.failure)
        })?;
    }
    for case in [BETWEEN_SUBSTITUTABLE_CASE, MUTUAL_SUBSTITUTABLE_CASE] {
        let (task, plan, old, cand) = case.build().map_err(|e| e.to_string())?;
        let out = substitute(&plan, old, cand);
        check(out.success, || format!("{}: substitution failed: {:?}", case.example.name, out.failure))?;
        sound(&task, &out.plan).map_err(|e| format!("{}: {e}", case.example.name))?;
    }
    Ok("both shapes unresolvable as given; both resolved by internal substitution".into())
}

/// Identical runs give identical reports.
fn determinism() -> Outcome {
    for ex in corpus::ALL {
        let (task, seq) = ex.load().map_err(|e| e.to_string())?;
        let run = || -> Result<String, String> {
            let cfg = FibsConfig { reduce: ReduceMode::Gj, ..config() };
            let (plan, reports) = fibs(&task, &seq, &cfg).map_err(|e| e.to_string())?;
            Ok(format!("{}\n{}", reports_json(&reports, false), plan.to_json()))
        };
        let (a, b) = (run()?, run()?);
        check(a == b, || format!("{}: reports differ", ex.name))?;
    }
    Ok(format!("{} examples, byte-identical reports and plans", corpus::ALL.len()))
}

/// A large loosely coupled plan: the pipeline finishes, the encoding refuses.
fn scaling() -> Outcome {
    let (task, seq) = loosely_coupled(12, 8, 3);
    let start = Instant::now();
    let cfg = FibsConfig { time_limit: Duration::from_secs(1800), ..FibsConfig::default() };
    let (plan, reports) = fibs(&task, &seq, &cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(1800), || format!("took {elapsed:.2?}"))?;
    check(plan.validate().is_valid(), || "final plan invalid".into())?;
    let pop = eog(&task, &seq).map_err(|e| e.to_string())?;
    match encode_mr(&pop, false) {
        Err(Error::TooLarge { size, limit }) => Ok(format!(
            "{size}-step plan: pipeline done in {elapsed:.2?} (flex {:.4}), encoding rejected (limit {limit})",
            reports.last().unwrap().flex_after.value()
        )),
        Ok(_) => Err("the encoding accepted a 300-step plan".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn main() -> ExitCode {
    let (validity, monotonic) = random_corpus();
    let results: Vec<(&str, Outcome)> = vec![
        ("1 elevator golden run", elevator_golden_run()),
        ("2 validity master property", validity),
        ("3 RFO monotonicity", monotonic),
        ("4 MR oracle equivalence", mr_oracle()),
        ("5 incompleteness witness", incompleteness_witness()),
        ("6 threat-shape regressions", threat_shapes()),
        ("7 determinism", determinism()),
        ("8 scaling smoke test", scaling()),
    ];
    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
