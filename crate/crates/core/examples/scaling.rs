//! Runs the pipeline on a large loosely coupled plan and prints the phase
//! report with timings.
//!
//! ```text
//! cargo run --release -p popflex --example scaling -- [groups] [per_group] [increments]
//! ```

use popflex::fibs::{fibs, reports_csv, FibsConfig};
use popflex::generate::loosely_coupled;

fn main() {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let arg = |i: usize, default: usize| args.get(i).copied().unwrap_or(default);
    let (task, plan) = loosely_coupled(arg(0, 12), arg(1, 8), arg(2, 3));
    println!("{} steps", plan.len());
    let (_, reports) = fibs(&task, &plan, &FibsConfig::default()).expect("valid plan");
    print!("{}", reports_csv(&reports, true));
}
