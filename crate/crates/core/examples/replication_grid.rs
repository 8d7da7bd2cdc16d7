//! Runs the (n, m) replication grid for λ=5, μ=1, α=2, β=0.2 and prints the
//! AE (STD) table.
//!
//! cargo run --release --example replication_grid

use nash_queue::experiments::{run_experiment, ExperimentPlan, ScheduleSpec, DEFAULT_MASTER_SEED};
use nash_queue::ModelParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = ModelParams::builder(5.0, 1.0, 2.0, 0.2)
        .horizon(20.0)
        .build()?;
    let schedules = vec![
        ScheduleSpec::uniform(20_001, 0.001),
        ScheduleSpec::uniform(41, 0.5),
        ScheduleSpec::uniform(21, 1.0),
        ScheduleSpec::uniform(5, 5.0),
    ];
    let plan = ExperimentPlan::new(
        params,
        vec![50, 100, 500, 1000],
        schedules.clone(),
        20,
        DEFAULT_MASTER_SEED,
    )?;
    let results = run_experiment(&plan)?;
    println!("theta = {:.4}", plan.params.theta());
    print!("{:>6}", "n");
    for spec in &schedules {
        print!("  {:>28}", spec.label());
    }
    println!();
    for (row, n) in results.summaries.iter().zip(&plan.n_values) {
        print!("{n:>6}");
        for cell in row {
            print!("  {:>28}", cell.cell());
        }
        println!();
    }
    Ok(())
}
