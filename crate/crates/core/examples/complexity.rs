// Exact attention-pair counts of the three lifting modes on cubic grids.
//
// ```bash
// cargo run --example complexity
// ```

use planecycle::metrics::complexity::{attention_cost, reports_to_csv};
use planecycle::{build_cycle_schedule, LiftMode, PoolMode};

pub fn run_example() -> planecycle::Result<()> {
    let depth = 4;
    let schedule = build_cycle_schedule(depth)?;
    let modes = [LiftMode::Slice2D, LiftMode::Flat3D, LiftMode::PlaneCycle(PoolMode::Grouped)];

    println!("{:>4} {:>16} {:>16} {:>16} {:>8}", "n", "2d", "3d", "pcg", "3d/pcg");
    for n in [2usize, 4, 8, 16, 32] {
        let totals = modes
            .iter()
            .map(|&m| attention_cost(m, (n, n, n), 0, depth, &schedule).map(|r| r.total_pairs()))
            .collect::<planecycle::Result<Vec<_>>>()?;
        println!(
            "{n:>4} {:>16} {:>16} {:>16} {:>8.3}",
            totals[0],
            totals[1],
            totals[2],
            totals[1] as f64 / totals[2] as f64
        );
    }

    let report = attention_cost(modes[2], (2, 3, 4), 5, depth, &schedule)?;
    print!("{}", reports_to_csv(&[report]));
    Ok(())
}

#[allow(dead_code)]
fn main() -> planecycle::Result<()> {
    run_example()
}
