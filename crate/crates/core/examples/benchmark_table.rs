//! A small benchmark cell comparing the three aggregation rules.
//!
//! cargo run --release --example benchmark_table -- M4 1.0 20 5

use sbs_mvts::cusum::Aggregation;
use sbs_mvts::simbench::{format_bench_table, write_bench_csv};
use sbs_mvts::{run_benchmark, Model, ModelSpec, MvtsConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let model: Model = args.first().map(|s| s.parse()).transpose()?.unwrap_or(Model::M3);
    let rho: f64 = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(0.5);
    let p: usize = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(20);
    let reps: usize = args.get(3).map(|s| s.parse()).transpose()?.unwrap_or(3);

    let spec = ModelSpec::new(model, p, 1024, rho, 0);
    let rules = [Aggregation::Thr, Aggregation::Avg, Aggregation::Max];
    let rows = run_benchmark(&spec, &rules, reps, &MvtsConfig::default())?;
    print!("{}", format_bench_table(&rows));
    println!();
    write_bench_csv(&rows, std::io::stdout().lock())?;
    Ok(())
}
