//! Cost-bounded satisficing planner for the subtasks of block substitution.
//!
//! [`solve_subtask`] runs a greedy best-first search guided by the additive
//! delete-relaxation heuristic. Paths whose cost plus the admissible max
//! heuristic exceeds the cost bound are pruned, so every plan returned stays
//! within the bound. After a goal is reached the search continues, skipping
//! plans whose operator multiset was already returned, until enough plans are
//! found or a limit is hit.
//!
//! A different planner can be plugged in through [`SubplannerConfig::external`]:
//! a shell command that reads a SAS+ task and writes plan files named
//! `sas_plan*` into its working directory.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::fs;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::facts::{PartialState, State};
use crate::plan_file::parse_plan;
use crate::sas::emit_sas;
use crate::task::{validate_sequential, PlanningTask, SequentialPlan};

/// Environment variable that selects an external planner command.
pub const PLANNER_CMD_ENV: &str = "POPFLEX_PLANNER_CMD";

/// Limits and planner selection shared by all subtasks of a run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubplannerConfig {
    /// Wall-clock limit per subtask.
    pub time_bound: Duration,
    /// Maximum number of plans returned per subtask.
    pub max_plans: usize,
    /// Maximum number of node expansions per subtask. This is the limit that
    /// normally binds, which keeps runs reproducible.
    pub max_expansions: usize,
    /// Shell command of an external planner; `{task}` is replaced by the path
    /// of the SAS+ file (appended when absent).
    pub external: Option<String>,
}

impl Default for SubplannerConfig {
    fn default() -> Self {
        SubplannerConfig { time_bound: Duration::from_secs(5), max_plans: 10, max_expansions: 20_000, external: None }
    }
}

impl SubplannerConfig {
    /// The default configuration with the external planner taken from the
    /// environment, if set.
    pub fn from_env() -> Self {
        let external = std::env::var(PLANNER_CMD_ENV).ok().filter(|c| !c.trim().is_empty());
        SubplannerConfig { external, ..Self::default() }
    }
}

/// A planning problem over the operators of a base task.
#[derive(Clone, Debug)]
pub struct Subtask {
    /// The base task with the subtask's initial state and goal.
    pub task: PlanningTask,
    pub cost_bound: u64,
    /// Longest plan considered, in steps.
    pub length_cap: usize,
    pub config: SubplannerConfig,
}

impl Subtask {
    pub fn new(base: &PlanningTask, init: State, goal: PartialState, cost_bound: u64, length_cap: usize, config: SubplannerConfig) -> Self {
        Subtask { task: base.with_init_goal(init, goal), cost_bound, length_cap, config }
    }

    pub fn init(&self) -> &State {
        &self.task.init
    }

    pub fn goal(&self) -> &PartialState {
        &self.task.goal
    }
}

/// Plans for the subtask, cheapest first, each valid and within the cost
/// bound. An empty result means no plan was found within the limits.
pub fn solve_subtask(st: &Subtask) -> Vec<SequentialPlan> {
    let plans = match &st.config.external {
        Some(cmd) => match run_external(st, cmd) {
            Ok(plans) => plans,
            Err(e) => {
                log::warn!("external planner failed: {e}");
                Vec::new()
            }
        },
        None => Search::new(st).run(),
    };
    finalize(st, plans)
}

/// Keeps valid plans within the bounds, sorted by cost, without repeated
/// operator multisets.
fn finalize(st: &Subtask, plans: Vec<SequentialPlan>) -> Vec<SequentialPlan> {
    let mut seen = BTreeSet::new();
    let mut out: Vec<SequentialPlan> = plans
        .into_iter()
        .filter(|p| p.cost <= st.cost_bound && p.len() <= st.length_cap)
        .filter(|p| validate_sequential(&st.task, p).is_valid())
        .filter(|p| seen.insert(multiset(&p.steps)))
        .collect();
    out.sort_by_key(|p| p.cost);
    out.truncate(st.config.max_plans);
    out
}

fn multiset(steps: &[usize]) -> Vec<usize> {
    let mut m = steps.to_vec();
    m.sort_unstable();
    m
}

const INF: u64 = u64::MAX / 4;

/// Delete-relaxation heuristics over a task's operators.
struct Relaxation {
    offsets: Vec<usize>,
    pre: Vec<Vec<usize>>,
    eff: Vec<Vec<usize>>,
    cost: Vec<u64>,
    consumers: Vec<Vec<usize>>,
    goal: Vec<usize>,
}

#[derive(Clone, Copy)]
enum Combine {
    Add,
    Max,
}

impl Relaxation {
    fn new(task: &PlanningTask) -> Self {
        let mut offsets = Vec::with_capacity(task.variables.len());
        let mut n = 0;
        for v in &task.variables {
            offsets.push(n);
            n += v.domain();
        }
        let idx = |var: usize, val: usize| offsets[var] + val;
        let pre: Vec<Vec<usize>> = task.operators.iter().map(|o| o.pre.facts().map(|f| idx(f.var, f.val)).collect()).collect();
        let eff = task.operators.iter().map(|o| o.eff.facts().map(|f| idx(f.var, f.val)).collect()).collect();
        let cost = task.operators.iter().map(|o| o.cost).collect();
        let mut consumers = vec![Vec::new(); n];
        for (o, p) in pre.iter().enumerate() {
            for &f in p {
                consumers[f].push(o);
            }
        }
        let goal = task.goal.facts().map(|f| idx(f.var, f.val)).collect();
        Relaxation { offsets, pre, eff, cost, consumers, goal }
    }

    /// Heuristic value of `state`, `INF` when the goal is relaxed-unreachable.
    fn eval(&self, state: &[usize], combine: Combine) -> u64 {
        let n = self.consumers.len();
        let mut dist = vec![INF; n];
        let mut heap = BinaryHeap::new();
        for (var, &val) in state.iter().enumerate() {
            let f = self.offsets[var] + val;
            dist[f] = 0;
            heap.push(Reverse((0u64, f)));
        }
        let mut missing: Vec<usize> = self.pre.iter().map(Vec::len).collect();
        let mut acc = vec![0u64; self.pre.len()];
        let fire = |o: usize, base: u64, dist: &mut Vec<u64>, heap: &mut BinaryHeap<Reverse<(u64, usize)>>| {
            let c = base.saturating_add(self.cost[o]);
            for &e in &self.eff[o] {
                if c < dist[e] {
                    dist[e] = c;
                    heap.push(Reverse((c, e)));
                }
            }
        };
        for o in 0..self.pre.len() {
            if missing[o] == 0 {
                fire(o, 0, &mut dist, &mut heap);
            }
        }
        while let Some(Reverse((d, f))) = heap.pop() {
            if d > dist[f] {
                continue;
            }
            for &o in &self.consumers[f] {
                acc[o] = match combine {
                    Combine::Add => acc[o].saturating_add(d),
                    Combine::Max => acc[o].max(d),
                };
                missing[o] -= 1;
                if missing[o] == 0 {
                    fire(o, acc[o], &mut dist, &mut heap);
                }
            }
        }
        let mut h = 0u64;
        for &g in &self.goal {
            if dist[g] >= INF {
                return INF;
            }
            h = match combine {
                Combine::Add => h.saturating_add(dist[g]),
                Combine::Max => h.max(dist[g]),
            };
        }
        h
    }
}

struct Node {
    state: Vec<usize>,
    parent: Option<usize>,
    op: usize,
    g: u64,
    depth: usize,
}

struct Search<'a> {
    st: &'a Subtask,
    relax: Relaxation,
    nodes: Vec<Node>,
}

impl<'a> Search<'a> {
    fn new(st: &'a Subtask) -> Self {
        Search { st, relax: Relaxation::new(&st.task), nodes: Vec::new() }
    }

    fn run(mut self) -> Vec<SequentialPlan> {
        let start = Instant::now();
        let task = &self.st.task;
        let bound = self.st.cost_bound;
        let mut found = Vec::new();
        let mut banned: BTreeSet<Vec<usize>> = BTreeSet::new();
        let mut expansions: HashMap<Vec<usize>, usize> = HashMap::new();
        let per_state = self.st.config.max_plans.max(1);
        let mut open = BinaryHeap::new();
        let mut tick = 0u64;

        let root = task.init.0.clone();
        if self.relax.eval(&root, Combine::Max) > bound {
            return found;
        }
        let h = self.relax.eval(&root, Combine::Add);
        self.nodes.push(Node { state: root, parent: None, op: usize::MAX, g: 0, depth: 0 });
        open.push(Reverse((h, 0u64, tick, 0usize)));
        let mut expanded = 0usize;

        while let Some(Reverse((_, _, _, id))) = open.pop() {
            let g = self.nodes[id].g;
            if found.len() >= self.st.config.max_plans
                || expanded >= self.st.config.max_expansions
                || start.elapsed() > self.st.config.time_bound
            {
                break;
            }
            let state = State(self.nodes[id].state.clone());
            if task.goal.holds_in(&state) {
                let steps = self.path(id);
                if banned.insert(multiset(&steps)) {
                    found.push(SequentialPlan { steps, cost: g });
                }
                continue;
            }
            if self.nodes[id].depth >= self.st.length_cap {
                continue;
            }
            let count = expansions.entry(state.0.clone()).or_insert(0);
            if *count >= per_state {
                continue;
            }
            *count += 1;
            expanded += 1;
            for (o, op) in task.operators.iter().enumerate() {
                if !op.is_applicable(&state) {
                    continue;
                }
                let ng = g + op.cost;
                if ng > bound {
                    continue;
                }
                let mut next = state.0.clone();
                for f in op.eff.facts() {
                    next[f.var] = f.val;
                }
                if next == state.0 || self.on_path(id, &next) {
                    continue;
                }
                let hmax = self.relax.eval(&next, Combine::Max);
                if hmax >= INF || ng + hmax > bound {
                    continue;
                }
                let h = self.relax.eval(&next, Combine::Add);
                let depth = self.nodes[id].depth + 1;
                self.nodes.push(Node { state: next, parent: Some(id), op: o, g: ng, depth });
                tick += 1;
                open.push(Reverse((h, ng, tick, self.nodes.len() - 1)));
            }
        }
        log::debug!("subplanner: {} plans, {} expansions, {:?}", found.len(), expanded, start.elapsed());
        found
    }

    fn path(&self, mut id: usize) -> Vec<usize> {
        let mut ops = Vec::new();
        while let Some(p) = self.nodes[id].parent {
            ops.push(self.nodes[id].op);
            id = p;
        }
        ops.reverse();
        ops
    }

    fn on_path(&self, mut id: usize, state: &[usize]) -> bool {
        loop {
            if self.nodes[id].state == state {
                return true;
            }
            match self.nodes[id].parent {
                Some(p) => id = p,
                None => return false,
            }
        }
    }
}

/// Runs an external planner on the subtask and reads back its plans.
fn run_external(st: &Subtask, cmd: &str) -> Result<Vec<SequentialPlan>> {
    let dir = tempfile::tempdir()?;
    let task_path = dir.path().join("task.sas");
    fs::write(&task_path, emit_sas(&st.task))?;
    let path = task_path.display().to_string();
    let line = if cmd.contains("{task}") { cmd.replace("{task}", &path) } else { format!("{cmd} {path}") };
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(&line)
        .current_dir(dir.path())
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()?;
    let start = Instant::now();
    loop {
        if child.try_wait()?.is_some() {
            break;
        }
        if start.elapsed() > st.config.time_bound {
            log::debug!("external planner timed out; killing it");
            child.kill()?;
            child.wait()?;
            break;
        }
        std::thread::sleep(Duration::from_millis(10));
    }
    let pattern = dir.path().join("sas_plan*").display().to_string();
    let mut paths: Vec<_> = glob::glob(&pattern).map_err(|e| Error::Planner(e.to_string()))?.filter_map(|p| p.ok()).collect();
    paths.sort();
    let mut plans = Vec::new();
    for p in paths {
        let text = fs::read_to_string(&p)?;
        match parse_plan(&text, &st.task) {
            Ok(plan) => plans.push(plan),
            Err(e) => log::warn!("ignoring plan file {}: {e}", p.display()),
        }
    }
    Ok(plans)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ELEVATOR;
    use crate::facts::Fact;

    fn elevator_subtask(bound: u64) -> (PlanningTask, Subtask) {
        let (task, _) = ELEVATOR.load().unwrap();
        let goal: PartialState = [Fact::new(3, 1)].into_iter().collect();
        let st = Subtask::new(&task, task.init.clone(), goal, bound, 16, SubplannerConfig::default());
        (task, st)
    }

    #[test]
    fn finds_second_lift_plan_within_bound() {
        let (task, st) = elevator_subtask(4);
        let plans = solve_subtask(&st);
        let names: Vec<Vec<&str>> =
            plans.iter().map(|p| p.steps.iter().map(|&o| task.operators[o].name.as_str()).collect()).collect();
        assert!(names.contains(&vec!["board p2 n1 e2", "move_up e2 n1 n2", "leave p2 n2 e2"]), "{names:?}");
        assert!(plans.windows(2).all(|w| w[0].cost <= w[1].cost));
        assert!(plans.iter().all(|p| p.cost <= 4 && validate_sequential(&st.task, p).is_valid()));
        assert_eq!(plans[0].cost, 3);
    }

    #[test]
    fn satisfied_goal_yields_empty_plan_first() {
        let (task, _) = ELEVATOR.load().unwrap();
        let goal: PartialState = [Fact::new(3, 0)].into_iter().collect();
        let st = Subtask::new(&task, task.init.clone(), goal, 4, 16, SubplannerConfig::default());
        let plans = solve_subtask(&st);
        assert_eq!(plans[0].steps, Vec::<usize>::new());
    }

    #[test]
    fn unreachable_goal_yields_nothing() {
        let task = crate::testutil::tiny_task(&[2, 2], &[("a", &[(0, 0)], &[(0, 1)])], &[0, 0], &[(1, 1)]);
        let st = Subtask::new(&task, task.init.clone(), task.goal.clone(), 10, 8, SubplannerConfig::default());
        assert!(solve_subtask(&st).is_empty());
    }

    #[test]
    fn tight_bound_prunes_expensive_plans() {
        let (_, st) = elevator_subtask(2);
        assert!(solve_subtask(&st).is_empty());
    }

    #[test]
    fn external_planner_plans_are_read_back() {
        let (task, st) = elevator_subtask(4);
        let cmd = "printf '(board p2 n1 e2)\\n(move_up e2 n1 n2)\\n(leave p2 n2 e2)\\n' > sas_plan.1; \
                   printf '(move_up e2 n1 n2)\\n' > sas_plan.2; test -s {task}";
        let st = Subtask { config: SubplannerConfig { external: Some(cmd.into()), ..st.config.clone() }, ..st };
        let plans = solve_subtask(&st);
        assert_eq!(plans.len(), 1, "the invalid second plan is dropped");
        assert_eq!(task.operators[plans[0].steps[0]].name, "board p2 n1 e2");
    }

    #[test]
    fn external_planner_is_killed_at_time_bound() {
        let (_, st) = elevator_subtask(4);
        let config = SubplannerConfig { external: Some("sleep 30".into()), time_bound: Duration::from_millis(200), ..st.config.clone() };
        let st = Subtask { config, ..st };
        let start = Instant::now();
        assert!(solve_subtask(&st).is_empty());
        assert!(start.elapsed() < Duration::from_secs(5));
    }
}
