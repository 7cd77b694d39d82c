// Median forward time per mode on small cubic token grids.
//
// ```bash
// cargo run --release --example bench_modes
// ```

use planecycle::metrics::bench::{benchmark_forward, rows_to_csv};
use planecycle::weights::{synth_weights, Arch};
use planecycle::{LiftMode, LiftingEngine};

pub fn run_example() -> planecycle::Result<()> {
    let arch = Arch {
        depth: 2,
        ..Arch::default()
    };
    let engine = LiftingEngine::new(synth_weights(0, &arch)?, 1)?;
    let rows = benchmark_forward(&engine, &[(2, 2, 2), (4, 4, 4)], &LiftMode::ALL, 3, None)?;
    print!("{}", rows_to_csv(&rows));
    Ok(())
}

#[allow(dead_code)]
fn main() -> planecycle::Result<()> {
    run_example()
}
