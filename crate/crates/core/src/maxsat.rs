//! Minimum reordering as partial weighted MaxSAT.
//!
//! [`encode_mr`] turns a partial-order plan into a WCNF instance whose
//! optimal models are the least-constrained valid reorderings of the plan
//! (optionally dropping operators to minimize cost first). The instance can
//! be written in the classic DIMACS WCNF format for an external solver, or
//! solved in-process by a small branch-and-bound search ([`solve`]) when it
//! is tiny. [`brute_force_mr`] computes the same optimum by enumerating
//! partial orders directly and serves as an independent check.
//!
//! Variables:
//!
//! * `x(o)` — operator `o` is part of the target plan;
//! * `τ(a, b)` — `a` precedes `b`;
//! * `γ(p, f, c)` — `p` supplies `f` to `c` through a causal link.
//!
//! Hard clauses make `τ` a strict partial order (irreflexive, transitive),
//! keep the synthetic steps, place every present operator between them,
//! support every precondition of a present operator by an ordered link, and
//! protect every link from present deleters. Soft unit clauses `¬τ(a, b)` of
//! weight 1 minimize the number of orderings; with `mclcp`, soft unit clauses
//! `¬x(o)` of weight `cost(o) + |O|² + 1` put operator removal first.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::facts::{Fact, PartialState, State};
use crate::pop::{CausalLink, OrderingReason, PartialOrderPlan, StepId};

/// Plans with more real steps than this are rejected by [`encode_mr`]; the
/// transitivity clauses alone grow cubically.
pub const MAX_MR_STEPS: usize = 200;

/// Largest plan [`brute_force_mr`] accepts.
pub const MAX_BRUTE_FORCE_STEPS: usize = 6;

/// A propositional literal in DIMACS convention: `v` or `-v` for variable `v ≥ 1`.
pub type Lit = i32;

/// A meaning of a propositional variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MrVar {
    Present(StepId),
    Before(StepId, StepId),
    Link(StepId, Fact, StepId),
}

impl fmt::Display for MrVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MrVar::Present(s) => write!(f, "x({s})"),
            MrVar::Before(a, b) => write!(f, "tau({a},{b})"),
            MrVar::Link(p, fact, c) => write!(f, "gamma({p},{fact},{c})"),
        }
    }
}

/// Bijection between [`MrVar`]s and DIMACS variable numbers `1..=len`.
#[derive(Clone, Debug, Default)]
pub struct VarCatalog {
    vars: Vec<MrVar>,
    index: HashMap<MrVar, u32>,
}

impl VarCatalog {
    fn add(&mut self, v: MrVar) -> u32 {
        *self.index.entry(v).or_insert_with(|| {
            self.vars.push(v);
            self.vars.len() as u32
        })
    }

    /// DIMACS number of `v`.
    pub fn get(&self, v: MrVar) -> Option<u32> {
        self.index.get(&v).copied()
    }

    /// Meaning of DIMACS variable `n`.
    pub fn var(&self, n: u32) -> Option<MrVar> {
        self.vars.get((n as usize).checked_sub(1)?).copied()
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    /// All variables with their numbers, in number order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, MrVar)> + '_ {
        self.vars.iter().enumerate().map(|(i, &v)| (i as u32 + 1, v))
    }

    fn lit(&self, v: MrVar) -> Lit {
        self.index[&v] as Lit
    }
}

/// A partial weighted MaxSAT instance.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Wcnf {
    pub num_vars: u32,
    pub hard: Vec<Vec<Lit>>,
    /// Soft clauses with positive weights.
    pub soft: Vec<(u64, Vec<Lit>)>,
}

impl Wcnf {
    pub fn new(num_vars: u32) -> Self {
        Wcnf { num_vars, ..Default::default() }
    }

    pub fn add_hard(&mut self, clause: Vec<Lit>) {
        debug_assert!(!clause.is_empty(), "empty hard clause");
        self.hard.push(clause);
    }

    pub fn add_soft(&mut self, weight: u64, clause: Vec<Lit>) {
        debug_assert!(weight > 0 && !clause.is_empty());
        self.soft.push((weight, clause));
    }

    /// Weight marking hard clauses: one more than all soft weights together.
    pub fn top(&self) -> u64 {
        self.soft.iter().map(|(w, _)| w).sum::<u64>() + 1
    }

    /// The first hard clause the model violates.
    pub fn violated_hard(&self, model: &[bool]) -> Option<&[Lit]> {
        self.hard.iter().find(|c| !satisfied(c, model)).map(Vec::as_slice)
    }

    /// Total weight of the soft clauses the model violates, or `None` if it
    /// violates a hard clause.
    pub fn cost(&self, model: &[bool]) -> Option<u64> {
        if self.violated_hard(model).is_some() {
            return None;
        }
        Some(self.soft.iter().filter(|(_, c)| !satisfied(c, model)).map(|(w, _)| w).sum())
    }

    /// The instance in classic DIMACS WCNF (`p wcnf nvars nclauses top`).
    pub fn to_dimacs(&self, comments: &[String]) -> String {
        let top = self.top();
        let mut out = String::new();
        for c in comments {
            let _ = writeln!(out, "c {c}");
        }
        let _ = writeln!(out, "p wcnf {} {} {}", self.num_vars, self.hard.len() + self.soft.len(), top);
        let mut clause = |w: u64, lits: &[Lit]| {
            let _ = write!(out, "{w}");
            for l in lits {
                let _ = write!(out, " {l}");
            }
            out.push_str(" 0\n");
        };
        for c in &self.hard {
            clause(top, c);
        }
        for (w, c) in &self.soft {
            clause(*w, c);
        }
        out
    }

    /// Parses classic DIMACS WCNF; clauses weighing at least `top` are hard.
    pub fn parse_dimacs(text: &str) -> Result<Wcnf> {
        let syntax = |line: usize, message: String| Error::Syntax { line, message };
        let mut header: Option<(u32, usize, u64)> = None;
        let mut wcnf = Wcnf::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('c') {
                continue;
            }
            let mut tokens = line.split_whitespace();
            if line.starts_with('p') {
                let fields: Vec<&str> = tokens.collect();
                let [_, "wcnf", nv, nc, top] = fields[..] else {
                    return Err(syntax(i + 1, format!("expected `p wcnf nvars nclauses top`, got `{line}`")));
                };
                let num = |s: &str| s.parse::<u64>().map_err(|e| syntax(i + 1, format!("{s}: {e}")));
                header = Some((num(nv)? as u32, num(nc)? as usize, num(top)?));
                wcnf.num_vars = num(nv)? as u32;
                continue;
            }
            let Some((nvars, _, top)) = header else {
                return Err(syntax(i + 1, "clause before the `p wcnf` header".into()));
            };
            let weight: u64 = tokens
                .next()
                .and_then(|t| t.parse().ok())
                .filter(|&w| w > 0)
                .ok_or_else(|| syntax(i + 1, "clause must start with a positive weight".into()))?;
            let mut lits = Vec::new();
            let mut closed = false;
            for t in tokens {
                let l: Lit = t.parse().map_err(|e| syntax(i + 1, format!("{t}: {e}")))?;
                if l == 0 {
                    closed = true;
                    break;
                }
                if l.unsigned_abs() > nvars {
                    return Err(syntax(i + 1, format!("literal {l} exceeds {nvars} variables")));
                }
                lits.push(l);
            }
            if !closed || lits.is_empty() {
                return Err(syntax(i + 1, "clause must be non-empty and end with 0".into()));
            }
            if weight >= top {
                wcnf.hard.push(lits);
            } else {
                wcnf.soft.push((weight, lits));
            }
        }
        let Some((_, nclauses, _)) = header else {
            return Err(syntax(0, "missing `p wcnf` header".into()));
        };
        if nclauses != wcnf.hard.len() + wcnf.soft.len() {
            return Err(syntax(0, format!("header announces {nclauses} clauses, found {}", wcnf.hard.len() + wcnf.soft.len())));
        }
        Ok(wcnf)
    }
}

fn satisfied(clause: &[Lit], model: &[bool]) -> bool {
    clause.iter().any(|&l| model.get(l.unsigned_abs() as usize - 1).copied().unwrap_or(false) == (l > 0))
}

/// Parses a model given as a solver `v` line: either signed literals
/// (`v 1 -2 3 0`) or a string of `0`/`1` digits (`v 101`). Unmentioned
/// variables are false.
pub fn parse_model(text: &str, num_vars: u32) -> Result<Vec<bool>> {
    let mut model = vec![false; num_vars as usize];
    let mut seen = false;
    for line in text.lines().map(str::trim).filter(|l| l.starts_with("v ") || *l == "v") {
        seen = true;
        let tokens: Vec<&str> = line.split_whitespace().skip(1).collect();
        if let [bits] = tokens[..] {
            if bits.len() > 1 && bits.chars().all(|c| c == '0' || c == '1') {
                for (i, c) in bits.chars().enumerate().take(model.len()) {
                    model[i] = c == '1';
                }
                continue;
            }
        }
        for t in tokens {
            let l: Lit = t.parse().map_err(|_| Error::InvalidModel(format!("bad literal `{t}`")))?;
            if l == 0 {
                break;
            }
            let v = l.unsigned_abs() as usize;
            if v > model.len() {
                return Err(Error::InvalidModel(format!("literal {l} exceeds {num_vars} variables")));
            }
            model[v - 1] = l > 0;
        }
    }
    if !seen {
        return Err(Error::InvalidModel("no `v` line".into()));
    }
    Ok(model)
}

/// Encodes minimum reordering of `pop`; with `mclcp`, operators may be
/// dropped and cost is minimized before orderings.
pub fn encode_mr(pop: &PartialOrderPlan, mclcp: bool) -> Result<(Wcnf, VarCatalog)> {
    let real = pop.real_steps();
    if real.len() > MAX_MR_STEPS {
        return Err(Error::TooLarge { size: real.len(), limit: MAX_MR_STEPS });
    }
    let steps: Vec<StepId> = pop.step_ids().to_vec();
    let mut cat = VarCatalog::default();
    for &s in &steps {
        cat.add(MrVar::Present(s));
    }
    for &a in &steps {
        for &b in &steps {
            cat.add(MrVar::Before(a, b));
        }
    }
    // Candidate links: every producer of every precondition.
    let mut supports: BTreeMap<(StepId, Fact), Vec<StepId>> = BTreeMap::new();
    for &c in &steps {
        for f in pop.step(c).op.pre.facts() {
            let producers: Vec<StepId> =
                steps.iter().copied().filter(|&p| p != c && pop.step(p).op.eff.contains(f)).collect();
            for &p in &producers {
                cat.add(MrVar::Link(p, f, c));
            }
            supports.insert((c, f), producers);
        }
    }

    let mut w = Wcnf::new(cat.len() as u32);
    let x = |s| cat.lit(MrVar::Present(s));
    let tau = |a, b| cat.lit(MrVar::Before(a, b));
    let gamma = |p, f, c| cat.lit(MrVar::Link(p, f, c));

    for &a in &steps {
        w.add_hard(vec![-tau(a, a)]);
    }
    for &a in &steps {
        for &b in &steps {
            for &c in &steps {
                if a != b && b != c {
                    w.add_hard(vec![-tau(a, b), -tau(b, c), tau(a, c)]);
                }
            }
        }
    }
    w.add_hard(vec![x(StepId::INIT)]);
    w.add_hard(vec![x(StepId::GOAL)]);
    for &o in &real {
        w.add_hard(vec![-x(o), tau(StepId::INIT, o)]);
        w.add_hard(vec![-x(o), tau(o, StepId::GOAL)]);
        if !mclcp {
            w.add_hard(vec![x(o)]);
        }
    }
    w.add_hard(vec![tau(StepId::INIT, StepId::GOAL)]);
    for ((c, f), producers) in &supports {
        let mut support = vec![-x(*c)];
        support.extend(producers.iter().map(|&p| gamma(p, *f, *c)));
        w.add_hard(support);
        for &p in producers {
            let g = gamma(p, *f, *c);
            w.add_hard(vec![-g, tau(p, *c)]);
            w.add_hard(vec![-g, x(p)]);
            for &k in &steps {
                if k != p && k != *c && pop.step(k).del.contains(f) {
                    w.add_hard(vec![-g, -x(k), tau(k, p), tau(*c, k)]);
                }
            }
        }
    }
    for &a in &steps {
        for &b in &steps {
            if a != b {
                w.add_soft(1, vec![-tau(a, b)]);
            }
        }
    }
    if mclcp {
        let n = steps.len() as u64;
        for &o in &real {
            w.add_soft(pop.step(o).op.cost + n * n + 1, vec![-x(o)]);
        }
    }
    Ok((w, cat))
}

/// Comment lines naming every variable, for inclusion in a WCNF file.
pub fn catalog_comments(cat: &VarCatalog) -> Vec<String> {
    cat.iter().map(|(n, v)| format!("var {n} {v}")).collect()
}

/// An optimal model of `wcnf`, or `None` if its hard clauses are
/// unsatisfiable. Exact branch and bound; meant for small instances.
pub fn solve(wcnf: &Wcnf) -> Option<Vec<bool>> {
    Solver::new(wcnf).run()
}

struct Solver<'a> {
    w: &'a Wcnf,
    /// Clause indices by literal: hard clauses as `(false, i)`, soft as `(true, i)`.
    occurs: HashMap<Lit, Vec<(bool, usize)>>,
    assign: Vec<Option<bool>>,
    trail: Vec<usize>,
    cost: u64,
    best: Option<(u64, Vec<bool>)>,
    /// Preferred first value per variable (the one satisfying its soft unit).
    prefer: Vec<bool>,
}

impl<'a> Solver<'a> {
    fn new(w: &'a Wcnf) -> Self {
        let mut occurs: HashMap<Lit, Vec<(bool, usize)>> = HashMap::new();
        let clauses = w.hard.iter().enumerate().map(|(i, c)| (false, i, c)).chain(w.soft.iter().enumerate().map(|(i, (_, c))| (true, i, c)));
        for (soft, i, c) in clauses {
            for l in c.iter().copied().collect::<BTreeSet<Lit>>() {
                occurs.entry(l).or_default().push((soft, i));
            }
        }
        let mut prefer = vec![false; w.num_vars as usize];
        for (_, c) in &w.soft {
            if let [l] = c[..] {
                prefer[l.unsigned_abs() as usize - 1] = l > 0;
            }
        }
        Solver { w, occurs, assign: vec![None; w.num_vars as usize], trail: Vec::new(), cost: 0, best: None, prefer }
    }

    fn value(&self, l: Lit) -> Option<bool> {
        self.assign[l.unsigned_abs() as usize - 1].map(|v| v == (l > 0))
    }

    fn clause(&self, soft: bool, i: usize) -> &'a [Lit] {
        if soft {
            &self.w.soft[i].1
        } else {
            &self.w.hard[i]
        }
    }

    /// Assigns `l` true and propagates; false on a hard conflict.
    fn assign_and_propagate(&mut self, l: Lit) -> bool {
        let mut queue = vec![l];
        while let Some(l) = queue.pop() {
            match self.value(l) {
                Some(true) => continue,
                Some(false) => return false,
                None => {}
            }
            let v = l.unsigned_abs() as usize - 1;
            self.assign[v] = Some(l > 0);
            self.trail.push(v);
            let Some(occ) = self.occurs.get(&-l) else { continue };
            // Every clause of the literal is visited even after a conflict so
            // that the soft cost stays in step with `undo_to`.
            let mut conflict = false;
            for &(soft, i) in occ {
                let c = self.clause(soft, i);
                let mut open = None;
                let mut n_open = 0;
                let mut sat = false;
                for &m in c {
                    match self.value(m) {
                        Some(true) => {
                            sat = true;
                            break;
                        }
                        Some(false) => {}
                        None => {
                            n_open += 1;
                            open = Some(m);
                        }
                    }
                }
                if sat {
                    continue;
                }
                match (soft, n_open) {
                    (true, 0) => self.cost += self.w.soft[i].0,
                    (true, _) => {}
                    (false, 0) => conflict = true,
                    (false, 1) => queue.push(open.expect("one open literal")),
                    (false, _) => {}
                }
            }
            if conflict {
                return false;
            }
        }
        true
    }

    fn undo_to(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let v = self.trail.pop().expect("trail above mark");
            let l = if self.assign[v] == Some(true) { v as Lit + 1 } else { -(v as Lit + 1) };
            if let Some(occ) = self.occurs.get(&-l) {
                for &(_, i) in occ.iter().filter(|(soft, _)| *soft) {
                    if self.w.soft[i].1.iter().all(|&m| self.value(m) == Some(false)) {
                        self.cost -= self.w.soft[i].0;
                    }
                }
            }
            self.assign[v] = None;
        }
    }

    fn run(mut self) -> Option<Vec<bool>> {
        // Unit hard clauses first.
        let units: Vec<Lit> = self.w.hard.iter().filter(|c| c.len() == 1).map(|c| c[0]).collect();
        for l in units {
            if !self.assign_and_propagate(l) {
                return None;
            }
        }
        self.search(0);
        self.best.map(|(_, m)| m)
    }

    fn search(&mut self, from: usize) {
        if self.best.as_ref().is_some_and(|(b, _)| self.cost >= *b) {
            return;
        }
        let Some(v) = (from..self.assign.len()).find(|&v| self.assign[v].is_none()) else {
            let model = self.assign.iter().map(|a| a.expect("complete assignment")).collect();
            self.best = Some((self.cost, model));
            return;
        };
        let first = self.prefer[v];
        for value in [first, !first] {
            let mark = self.trail.len();
            let lit = if value { v as Lit + 1 } else { -(v as Lit + 1) };
            if self.assign_and_propagate(lit) {
                self.search(v + 1);
            }
            self.undo_to(mark);
        }
    }
}

/// The plan described by a model of [`encode_mr`]'s instance for `pop`.
pub fn decode_model(model: &[bool], wcnf: &Wcnf, cat: &VarCatalog, pop: &PartialOrderPlan) -> Result<PartialOrderPlan> {
    if model.len() < wcnf.num_vars as usize {
        return Err(Error::InvalidModel(format!("model assigns {} of {} variables", model.len(), wcnf.num_vars)));
    }
    if let Some(c) = wcnf.violated_hard(model) {
        let names: Vec<String> = c
            .iter()
            .map(|&l| {
                let name = cat.var(l.unsigned_abs()).map_or_else(|| l.unsigned_abs().to_string(), |v| v.to_string());
                if l < 0 {
                    format!("¬{name}")
                } else {
                    name
                }
            })
            .collect();
        return Err(Error::InvalidModel(format!("hard clause ({}) is violated", names.join(" ∨ "))));
    }
    let holds = |v: MrVar| cat.get(v).is_some_and(|n| model[n as usize - 1]);
    let present: BTreeSet<StepId> = pop.step_ids().iter().copied().filter(|&s| holds(MrVar::Present(s))).collect();
    let mut out = empty_like(pop);
    for &s in present.iter().filter(|s| !s.is_synthetic()) {
        let st = pop.step(s);
        out.insert_step(s, st.op.clone(), st.source, st.rank);
    }
    for &c in &present {
        for f in pop.step(c).op.pre.facts() {
            let p = present
                .iter()
                .copied()
                .find(|&p| holds(MrVar::Link(p, f, c)))
                .ok_or_else(|| Error::InvalidModel(format!("no link supports {f} at {c}")))?;
            out.add_link(CausalLink { producer: p, fact: f, consumer: c });
            out.add_reason(p, c, OrderingReason::pc(f))?;
        }
    }
    for &a in &present {
        for &b in &present {
            if a != b && holds(MrVar::Before(a, b)) && !out.precedes(a, b) {
                out.impose(a, b)?;
            }
        }
    }
    let report = out.validate();
    if !report.is_valid() {
        return Err(Error::Internal(format!("decoded plan is invalid: {report}")));
    }
    Ok(out)
}

fn empty_like(pop: &PartialOrderPlan) -> PartialOrderPlan {
    let init = State(pop.step(StepId::INIT).op.eff.facts().map(|f| f.val).collect());
    let goal: PartialState = pop.step(StepId::GOAL).op.pre.clone();
    PartialOrderPlan::new(Arc::clone(pop.space()), &init, &goal)
}

/// Solves the instance of `pop` in-process and decodes the optimum.
pub fn minimum_reordering(pop: &PartialOrderPlan, mclcp: bool) -> Result<PartialOrderPlan> {
    let (w, cat) = encode_mr(pop, mclcp)?;
    let model = solve(&w).ok_or_else(|| Error::Internal("the reordering instance has no model".into()))?;
    decode_model(&model, &w, &cat, pop)
}

/// Least-constrained valid reordering of `pop` by exhaustive enumeration of
/// partial orders (and, with `mclcp`, of operator subsets, cheapest first).
/// Ties are broken towards the lexicographically least step set and
/// ordering set.
pub fn brute_force_mr(pop: &PartialOrderPlan, mclcp: bool) -> Result<PartialOrderPlan> {
    let real = pop.real_steps();
    let n = real.len();
    if n > MAX_BRUTE_FORCE_STEPS {
        return Err(Error::TooLarge { size: n, limit: MAX_BRUTE_FORCE_STEPS });
    }
    let mut best: Option<BruteKey> = None;
    let masks: Vec<u32> = if mclcp { (0..1u32 << n).collect() } else { vec![(1u32 << n) - 1] };
    for mask in masks {
        let members: Vec<StepId> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| real[i]).collect();
        let cost = if mclcp { members.iter().map(|&s| pop.step(s).op.cost).sum() } else { 0 };
        if best.as_ref().is_some_and(|b| cost > b.cost) {
            continue;
        }
        let mut search = PosetSearch { pop, members: &members, cost, best: &mut best };
        let k = members.len();
        search.extend(&mut vec![vec![false; k]; k], 0, 0);
    }
    let best = best.ok_or_else(|| Error::InvalidInput("the plan has no valid reordering".into()))?;
    let mut out = empty_like(pop);
    for &s in &best.members {
        let st = pop.step(s);
        out.insert_step(s, st.op.clone(), st.source, st.rank);
    }
    let before = |a: StepId, b: StepId| a == StepId::INIT || b == StepId::GOAL || best.pairs.contains(&(a, b));
    let mut consumers = best.members.clone();
    consumers.push(StepId::GOAL);
    for &c in &consumers {
        for f in pop.step(c).op.pre.facts() {
            let p = supporter(pop, &best.members, f, c, &before).expect("optimum is valid");
            out.add_link(CausalLink { producer: p, fact: f, consumer: c });
            out.add_reason(p, c, OrderingReason::pc(f))?;
        }
    }
    for &(a, b) in &best.pairs {
        if !out.precedes(a, b) {
            out.impose(a, b)?;
        }
    }
    debug_assert!(out.validate().is_valid(), "{}", out.validate());
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct BruteKey {
    cost: u64,
    count: usize,
    members: Vec<StepId>,
    pairs: Vec<(StepId, StepId)>,
}

/// The first producer (initial step first) that can support `f` at `c`
/// under the order `before` without an unordered deleter.
fn supporter(
    pop: &PartialOrderPlan,
    members: &[StepId],
    f: Fact,
    c: StepId,
    before: &dyn Fn(StepId, StepId) -> bool,
) -> Option<StepId> {
    std::iter::once(StepId::INIT).chain(members.iter().copied()).find(|&p| {
        p != c
            && pop.step(p).op.eff.contains(f)
            && before(p, c)
            && members
                .iter()
                .all(|&d| d == p || d == c || !pop.step(d).del.contains(&f) || before(d, p) || before(c, d))
    })
}

struct PosetSearch<'a> {
    pop: &'a PartialOrderPlan,
    members: &'a [StepId],
    cost: u64,
    best: &'a mut Option<BruteKey>,
}

impl PosetSearch<'_> {
    /// Adds element `e` to the strict order `rel` over elements `0..e` in
    /// every consistent way: below a down-closed set, above an up-closed set.
    fn extend(&mut self, rel: &mut Vec<Vec<bool>>, e: usize, count: usize) {
        if let Some(b) = self.best.as_ref() {
            if (self.cost, count) > (b.cost, b.count) {
                return;
            }
        }
        let k = self.members.len();
        if e == k {
            self.leaf(rel, count);
            return;
        }
        for down in 0..1u32 << e {
            let in_down = |i: usize| down >> i & 1 == 1;
            if !(0..e).all(|d| !in_down(d) || (0..e).all(|x| !rel[x][d] || in_down(x))) {
                continue;
            }
            for up in 0..1u32 << e {
                let in_up = |i: usize| up >> i & 1 == 1;
                if down & up != 0 || !(0..e).all(|u| !in_up(u) || (0..e).all(|x| !rel[u][x] || in_up(x))) {
                    continue;
                }
                if !(0..e).all(|d| !in_down(d) || (0..e).all(|u| !in_up(u) || rel[d][u])) {
                    continue;
                }
                for i in 0..e {
                    rel[i][e] = in_down(i);
                    rel[e][i] = in_up(i);
                }
                let added = (down.count_ones() + up.count_ones()) as usize;
                self.extend(rel, e + 1, count + added);
                for i in 0..e {
                    rel[i][e] = false;
                    rel[e][i] = false;
                }
            }
        }
    }

    fn leaf(&mut self, rel: &[Vec<bool>], count: usize) {
        let m = self.members;
        let pos = |s: StepId| m.iter().position(|&x| x == s);
        let before = |a: StepId, b: StepId| {
            if a == StepId::INIT || b == StepId::GOAL {
                return a != b;
            }
            match (pos(a), pos(b)) {
                (Some(i), Some(j)) => rel[i][j],
                _ => false,
            }
        };
        let valid = m.iter().copied().chain([StepId::GOAL]).all(|c| {
            self.pop.step(c).op.pre.facts().all(|f| supporter(self.pop, m, f, c, &before).is_some())
        });
        if !valid {
            return;
        }
        let mut pairs: Vec<(StepId, StepId)> = Vec::with_capacity(count);
        for (i, &a) in m.iter().enumerate() {
            for (j, &b) in m.iter().enumerate() {
                if rel[i][j] {
                    pairs.push((a, b));
                }
            }
        }
        pairs.sort();
        let key = BruteKey { cost: self.cost, count, members: m.to_vec(), pairs };
        if self.best.as_ref().is_none_or(|b| key < *b) {
            *self.best = Some(key);
        }
    }
}

#[cfg(test)]
mod tests;
