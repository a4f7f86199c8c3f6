//! `popflex`: command-line front end.
//!
//! Every subcommand reads a SAS+ task and a sequential plan (or a bundled
//! example) and writes its result to stdout or to the given files.
//!
//! Exit codes: 0 on success, 1 when a plan fails validation, 2 on usage or
//! input errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use popflex::bdpo::{block_deorder, init_bdpo, BdpoPlan};
use popflex::corpus;
use popflex::eog::eog;
use popflex::fibs::{fibs, reduce, reports_csv, reports_json, Criteria, FibsConfig, ReduceMode};
use popflex::maxsat::{catalog_comments, decode_model, encode_mr, solve};
use popflex::plan_file::{emit_plan, parse_plan};
use popflex::sas::parse_sas;
use popflex::subplanner::SubplannerConfig;
use popflex::task::{validate_sequential, PlanningTask, SequentialPlan};

#[derive(Parser, Debug)]
#[command(name = "popflex", version, about = "Make sequential plans flexible: deordering, block deordering and block substitution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check that a sequential plan solves the task.
    Validate(Input),
    /// Deorder a plan into a partial-order plan.
    Eog(Transform),
    /// Deorder a plan with blocks.
    BlockDeorder(Transform),
    /// Run the substitution pipeline (EOG, SD1, BD, SD2, optional reduction).
    Fibs(FibsArgs),
    /// Remove redundant blocks from the block-deordered plan.
    Reduce(ReduceArgs),
    /// Print the flexibility of the deordered plan.
    Flex(FlexArgs),
    /// Write the minimum-reordering MaxSAT instance as WCNF.
    EncodeMr(EncodeArgs),
    /// Print one linearization of the block-deordered plan.
    #[command(alias = "linearize")]
    Lineate(LineateArgs),
}

#[derive(Args, Debug)]
struct Input {
    /// SAS+ task file.
    #[arg(long, required_unless_present = "example", requires = "plan")]
    task: Option<PathBuf>,
    /// Sequential plan file.
    #[arg(long, requires = "task")]
    plan: Option<PathBuf>,
    /// Use a bundled example instead of files (see `--example list`).
    #[arg(long, conflicts_with_all = ["task", "plan"])]
    example: Option<String>,
}

#[derive(Args, Debug)]
struct Output {
    /// Write the plan as JSON here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Also write a Graphviz rendering.
    #[arg(long)]
    dot: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Transform {
    #[command(flatten)]
    input: Input,
    #[command(flatten)]
    output: Output,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CriteriaArg {
    Rfo,
    Rco,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ReduceArg {
    None,
    Bj,
    Gj,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ReportFormat {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct SubplannerArgs {
    /// Time limit per subtask, in seconds.
    #[arg(long, default_value_t = 5.0)]
    subtask_time: f64,
    /// Plans requested per subtask.
    #[arg(long, default_value_t = 10)]
    max_plans: usize,
    /// Node expansions per subtask.
    #[arg(long, default_value_t = 20_000)]
    max_expansions: usize,
    /// External planner command (`{task}` is replaced by the SAS+ file);
    /// defaults to $POPFLEX_PLANNER_CMD.
    #[arg(long)]
    planner_cmd: Option<String>,
}

#[derive(Args, Debug)]
struct FibsArgs {
    #[command(flatten)]
    input: Input,
    #[command(flatten)]
    output: Output,
    #[arg(long, value_enum, default_value = "rfo")]
    criteria: CriteriaArg,
    #[arg(long, value_enum, default_value = "none")]
    reduce: ReduceArg,
    #[command(flatten)]
    subplanner: SubplannerArgs,
    /// Limit for the whole run, in seconds.
    #[arg(long, default_value_t = 1800.0)]
    time_limit: f64,
    /// Write the phase report here (format from the extension unless `--format`).
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<ReportFormat>,
    /// Include elapsed times in the report (makes it run-dependent).
    #[arg(long)]
    timings: bool,
}

#[derive(Args, Debug)]
struct ReduceArgs {
    #[command(flatten)]
    input: Input,
    #[command(flatten)]
    output: Output,
    #[arg(long, value_enum, default_value = "gj")]
    mode: ReduceArg,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Stage {
    Eog,
    Bd,
}

#[derive(Args, Debug)]
struct FlexArgs {
    #[command(flatten)]
    input: Input,
    #[arg(long, value_enum, default_value = "eog")]
    stage: Stage,
}

#[derive(Args, Debug)]
struct EncodeArgs {
    #[command(flatten)]
    input: Input,
    /// Minimize cost first (operators may be dropped).
    #[arg(long)]
    mclcp: bool,
    /// WCNF output file (stdout when absent).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Solve in-process (tiny instances only) and write the decoded plan as JSON.
    #[arg(long)]
    solve: Option<PathBuf>,
    /// Decode a solver model (a file with a `v` line) and write the plan as JSON to stdout.
    #[arg(long, conflicts_with = "solve")]
    model: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LineateArgs {
    #[command(flatten)]
    input: Input,
    #[arg(long, value_enum, default_value = "bd")]
    stage: Stage,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// An error that maps to exit code 1.
#[derive(Debug)]
struct Invalid(String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<Invalid>() => {
            eprintln!("invalid: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Validate(input) => {
            let (task, plan) = load(&input)?;
            let report = validate_sequential(&task, &plan);
            if report.is_valid() {
                println!("valid: {} steps, cost {}", plan.len(), plan.cost);
                Ok(())
            } else {
                Err(Invalid(report.to_string()).into())
            }
        }
        Command::Eog(t) => {
            let (task, plan) = load_valid(&t.input)?;
            let pop = eog(&task, &plan)?;
            let mut out = pop.to_json();
            out["flex"] = flex_json(&init_bdpo(&pop));
            write_output(&t.output, &out, Some(pop.to_dot()))
        }
        Command::BlockDeorder(t) => {
            let (task, plan) = load_valid(&t.input)?;
            let bd = block_deorder(&init_bdpo(&eog(&task, &plan)?));
            write_plan(&t.output, &bd)
        }
        Command::Fibs(a) => run_fibs(a),
        Command::Reduce(a) => {
            let (task, plan) = load_valid(&a.input)?;
            let bd = block_deorder(&init_bdpo(&eog(&task, &plan)?));
            write_plan(&a.output, &reduce(&bd, reduce_mode(a.mode)))
        }
        Command::Flex(a) => {
            let (task, plan) = load_valid(&a.input)?;
            let p = stage_plan(&task, &plan, a.stage)?;
            let f = p.flex();
            println!("{:?} ({}/{} pairs unordered)", round4(f.value()), f.unordered_pairs, f.total_pairs);
            Ok(())
        }
        Command::EncodeMr(a) => run_encode(a),
        Command::Lineate(a) => {
            let (task, plan) = load_valid(&a.input)?;
            let p = stage_plan(&task, &plan, a.stage)?;
            let seq = p.to_sequential(&p.linearize_steps(a.seed))?;
            print!("{}", emit_plan(&task, &seq));
            Ok(())
        }
    }
}

fn run_fibs(a: FibsArgs) -> Result<()> {
    let (task, plan) = load_valid(&a.input)?;
    let env = SubplannerConfig::from_env();
    let config = FibsConfig {
        criteria: match a.criteria {
            CriteriaArg::Rfo => Criteria::Rfo,
            CriteriaArg::Rco => Criteria::Rco,
        },
        subplanner: SubplannerConfig {
            time_bound: seconds(a.subplanner.subtask_time, "--subtask-time")?,
            max_plans: a.subplanner.max_plans,
            max_expansions: a.subplanner.max_expansions,
            external: a.subplanner.planner_cmd.or(env.external),
        },
        reduce: reduce_mode(a.reduce),
        time_limit: seconds(a.time_limit, "--time-limit")?,
        ..FibsConfig::default()
    };
    let (out, reports) = fibs(&task, &plan, &config)?;
    if let Some(path) = &a.report {
        let format = a.format.unwrap_or(match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => ReportFormat::Csv,
            _ => ReportFormat::Json,
        });
        let text = match format {
            ReportFormat::Csv => reports_csv(&reports, a.timings),
            ReportFormat::Json => {
                let body = json!({
                    "phases": reports_json(&reports, a.timings),
                    "final": flex_json(&out),
                });
                serde_json::to_string_pretty(&body)? + "\n"
            }
        };
        write_file(path, &text)?;
    } else {
        for r in &reports {
            eprintln!(
                "{:<6} flex {:.4} -> {:.4}  cost {} -> {}",
                r.phase.to_string(),
                r.flex_before.value(),
                r.flex_after.value(),
                r.cost_before,
                r.cost_after
            );
        }
    }
    write_plan(&a.output, &out)
}

fn run_encode(a: EncodeArgs) -> Result<()> {
    let (task, plan) = load_valid(&a.input)?;
    let pop = eog(&task, &plan)?;
    let (wcnf, catalog) = encode_mr(&pop, a.mclcp)?;
    if let Some(path) = &a.model {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let model = popflex::maxsat::parse_model(&text, wcnf.num_vars)?;
        let decoded = decode_model(&model, &wcnf, &catalog, &pop).map_err(|e| Invalid(e.to_string()))?;
        println!("{}", serde_json::to_string_pretty(&decoded.to_json())?);
        return Ok(());
    }
    let text = wcnf.to_dimacs(&catalog_comments(&catalog));
    match &a.output {
        Some(path) => write_file(path, &text)?,
        None => print!("{text}"),
    }
    if let Some(path) = &a.solve {
        let model = solve(&wcnf).context("the instance has no model")?;
        let decoded = decode_model(&model, &wcnf, &catalog, &pop)?;
        let mut out = decoded.to_json();
        out["cost"] = json!(decoded.cost());
        out["ordered_pairs"] = json!(decoded.flex().ordered_pairs());
        write_file(path, &(serde_json::to_string_pretty(&out)? + "\n"))?;
    }
    Ok(())
}

fn seconds(s: f64, flag: &str) -> Result<Duration> {
    Duration::try_from_secs_f64(s).with_context(|| format!("{flag} must be a non-negative number of seconds"))
}

fn reduce_mode(r: ReduceArg) -> ReduceMode {
    match r {
        ReduceArg::None => ReduceMode::None,
        ReduceArg::Bj => ReduceMode::Bj,
        ReduceArg::Gj => ReduceMode::Gj,
    }
}

fn round4(x: f64) -> f64 {
    (x * 10_000.0).round() / 10_000.0
}

fn flex_json(p: &BdpoPlan) -> serde_json::Value {
    let f = p.flex();
    json!({
        "flex": round4(f.value()),
        "unordered_pairs": f.unordered_pairs,
        "total_pairs": f.total_pairs,
        "cost": p.cost(),
        "steps": p.len(),
    })
}

fn stage_plan(task: &PlanningTask, plan: &SequentialPlan, stage: Stage) -> Result<BdpoPlan> {
    let p = init_bdpo(&eog(task, plan)?);
    Ok(match stage {
        Stage::Eog => p,
        Stage::Bd => block_deorder(&p),
    })
}

fn load(input: &Input) -> Result<(PlanningTask, SequentialPlan)> {
    if let Some(name) = &input.example {
        if name == "list" {
            for ex in corpus::ALL {
                println!("{}", ex.name);
            }
            std::process::exit(0);
        }
        let ex = corpus::by_name(name).with_context(|| format!("no bundled example `{name}`"))?;
        return Ok(ex.load()?);
    }
    let (Some(task_path), Some(plan_path)) = (&input.task, &input.plan) else {
        bail!("give --task and --plan, or --example");
    };
    let task = parse_sas(&read(task_path)?).with_context(|| format!("parsing {}", task_path.display()))?;
    let plan = parse_plan(&read(plan_path)?, &task).with_context(|| format!("parsing {}", plan_path.display()))?;
    Ok((task, plan))
}

fn load_valid(input: &Input) -> Result<(PlanningTask, SequentialPlan)> {
    let (task, plan) = load(input)?;
    let report = validate_sequential(&task, &plan);
    if !report.is_valid() {
        return Err(Invalid(format!("the input plan is not valid: {report}")).into());
    }
    Ok((task, plan))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_plan(output: &Output, plan: &BdpoPlan) -> Result<()> {
    let mut json = plan.to_json();
    json["flex"] = flex_json(plan);
    write_output(output, &json, Some(plan.to_dot()))
}

fn write_output(output: &Output, json: &serde_json::Value, dot: Option<String>) -> Result<()> {
    let text = serde_json::to_string_pretty(json)? + "\n";
    match &output.output {
        Some(path) => write_file(path, &text)?,
        None => print!("{text}"),
    }
    if let (Some(path), Some(dot)) = (&output.dot, dot) {
        write_file(path, &dot)?;
    }
    Ok(())
}
