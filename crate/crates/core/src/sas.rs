//! Reading and writing the Fast Downward translator output format (version 3).
//!
//! Prevail conditions fold into the precondition; each pre-post pair adds its
//! pre-value (when not `-1`) to the precondition and its post-value to the
//! effect. Axioms, derived variables and conditional effects are rejected.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::facts::{Fact, PartialState, State};
use crate::task::{OperatorDef, PlanningTask, Variable};

/// Line-oriented cursor over the input, skipping blank lines.
struct Lines<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        Lines { lines, pos: 0 }
    }

    fn line_no(&self) -> usize {
        self.lines.get(self.pos).or(self.lines.last()).map_or(1, |l| l.0)
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Syntax { line: self.line_no(), message: message.into() }
    }

    fn next(&mut self) -> Result<&'a str> {
        let l = self.lines.get(self.pos).ok_or_else(|| self.err("unexpected end of file"))?.1;
        self.pos += 1;
        Ok(l)
    }

    fn expect(&mut self, keyword: &str) -> Result<()> {
        let l = self.next()?;
        if l == keyword {
            Ok(())
        } else {
            self.pos -= 1;
            Err(self.err(format!("expected `{keyword}`, found `{l}`")))
        }
    }

    fn number<T: std::str::FromStr>(&mut self) -> Result<T> {
        let l = self.next()?;
        l.parse().map_err(|_| {
            self.pos -= 1;
            self.err(format!("expected a number, found `{l}`"))
        })
    }

    fn numbers(&mut self, n: usize) -> Result<Vec<i64>> {
        let l = self.next()?;
        let nums: std::result::Result<Vec<i64>, _> = l.split_whitespace().map(str::parse).collect();
        match nums {
            Ok(v) if v.len() == n => Ok(v),
            _ => {
                self.pos -= 1;
                Err(self.err(format!("expected {n} numbers, found `{l}`")))
            }
        }
    }
}

fn fact(lines: &Lines<'_>, vars: &[Variable], var: i64, val: i64) -> Result<Fact> {
    let ok = var >= 0 && (var as usize) < vars.len() && val >= 0 && (val as usize) < vars[var as usize].domain();
    if ok {
        Ok(Fact::new(var as usize, val as usize))
    } else {
        Err(Error::Syntax { line: lines.line_no() - 1, message: format!("fact {var}={val} out of range") })
    }
}

/// Parses a task in SAS+ version 3 format.
pub fn parse_sas(text: &str) -> Result<PlanningTask> {
    let mut l = Lines::new(text);
    l.expect("begin_version")?;
    let version: u32 = l.number()?;
    if version != 3 {
        return Err(l.err(format!("unsupported version {version}")));
    }
    l.expect("end_version")?;
    l.expect("begin_metric")?;
    let metric = match l.number::<u32>()? {
        0 => false,
        1 => true,
        m => return Err(l.err(format!("bad metric flag {m}"))),
    };
    l.expect("end_metric")?;

    let nvars: usize = l.number()?;
    let mut variables = Vec::with_capacity(nvars);
    for _ in 0..nvars {
        l.expect("begin_variable")?;
        let name = l.next()?.to_string();
        let layer: i64 = l.number()?;
        if layer != -1 {
            return Err(Error::Unsupported("axioms"));
        }
        let domain: usize = l.number()?;
        let values = (0..domain).map(|_| l.next().map(str::to_string)).collect::<Result<Vec<_>>>()?;
        l.expect("end_variable")?;
        variables.push(Variable { name, values });
    }

    let nmutex: usize = l.number()?;
    for _ in 0..nmutex {
        l.expect("begin_mutex_group")?;
        let n: usize = l.number()?;
        for _ in 0..n {
            let v = l.numbers(2)?;
            fact(&l, &variables, v[0], v[1])?;
        }
        l.expect("end_mutex_group")?;
    }

    l.expect("begin_state")?;
    let mut init = Vec::with_capacity(nvars);
    for var in 0..nvars {
        let val: i64 = l.number()?;
        init.push(fact(&l, &variables, var as i64, val)?.val);
    }
    l.expect("end_state")?;

    l.expect("begin_goal")?;
    let ngoal: usize = l.number()?;
    let mut goal_facts = Vec::with_capacity(ngoal);
    for _ in 0..ngoal {
        let v = l.numbers(2)?;
        goal_facts.push(fact(&l, &variables, v[0], v[1])?);
    }
    let goal = PartialState::from_facts(goal_facts).map_err(|f| l.err(format!("goal assigns {} twice", f.var)))?;
    l.expect("end_goal")?;

    let nops: usize = l.number()?;
    let mut operators = Vec::with_capacity(nops);
    for _ in 0..nops {
        l.expect("begin_operator")?;
        let name = l.next()?.to_string();
        let mut pre = Vec::new();
        let mut eff = Vec::new();
        let nprevail: usize = l.number()?;
        for _ in 0..nprevail {
            let v = l.numbers(2)?;
            pre.push(fact(&l, &variables, v[0], v[1])?);
        }
        let neffects: usize = l.number()?;
        for _ in 0..neffects {
            let line = l.next()?;
            let nums: Vec<i64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Syntax { line: l.line_no() - 1, message: format!("bad effect `{line}`") })?;
            match nums.first() {
                Some(0) if nums.len() == 4 => {}
                Some(&n) if n > 0 => return Err(Error::Unsupported("conditional effects")),
                _ => return Err(Error::Syntax { line: l.line_no() - 1, message: format!("bad effect `{line}`") }),
            }
            let (var, pre_val, post) = (nums[1], nums[2], nums[3]);
            if pre_val != -1 {
                pre.push(fact(&l, &variables, var, pre_val)?);
            }
            eff.push(fact(&l, &variables, var, post)?);
        }
        let cost: u64 = l.number()?;
        l.expect("end_operator")?;
        let pre = PartialState::from_facts(pre).map_err(|f| l.err(format!("`{name}` requires v{} twice", f.var)))?;
        let eff = PartialState::from_facts(eff).map_err(|f| l.err(format!("`{name}` sets v{} twice", f.var)))?;
        operators.push(OperatorDef { name, pre, eff, cost: if metric { cost } else { 1 } });
    }

    let naxioms: usize = l.number()?;
    if naxioms > 0 {
        return Err(Error::Unsupported("axioms"));
    }
    PlanningTask::new(variables, operators, State(init), goal, metric)
}

/// Writes a task in SAS+ version 3 format; [`parse_sas`] reads it back unchanged.
///
/// Effects on variables the precondition pins become pre-post pairs; the rest
/// of the precondition becomes prevail conditions.
pub fn emit_sas(task: &PlanningTask) -> String {
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, "begin_version\n3\nend_version");
    let _ = writeln!(w, "begin_metric\n{}\nend_metric", u8::from(task.metric));
    let _ = writeln!(w, "{}", task.variables.len());
    for v in &task.variables {
        let _ = writeln!(w, "begin_variable\n{}\n-1\n{}", v.name, v.domain());
        for name in &v.values {
            let _ = writeln!(w, "{name}");
        }
        let _ = writeln!(w, "end_variable");
    }
    let _ = writeln!(w, "0");
    let _ = writeln!(w, "begin_state");
    for val in &task.init.0 {
        let _ = writeln!(w, "{val}");
    }
    let _ = writeln!(w, "end_state\nbegin_goal\n{}", task.goal.len());
    for f in task.goal.facts() {
        let _ = writeln!(w, "{} {}", f.var, f.val);
    }
    let _ = writeln!(w, "end_goal\n{}", task.operators.len());
    for op in &task.operators {
        let _ = writeln!(w, "begin_operator\n{}", op.name);
        let prevail: Vec<Fact> = op.pre.facts().filter(|f| op.eff.get(f.var).is_none()).collect();
        let _ = writeln!(w, "{}", prevail.len());
        for f in prevail {
            let _ = writeln!(w, "{} {}", f.var, f.val);
        }
        let _ = writeln!(w, "{}", op.eff.len());
        for f in op.eff.facts() {
            let pre = op.pre.get(f.var).map_or(-1, |v| v as i64);
            let _ = writeln!(w, "0 {} {} {}", f.var, pre, f.val);
        }
        let _ = writeln!(w, "{}\nend_operator", op.cost);
    }
    let _ = writeln!(w, "0");
    out
}
