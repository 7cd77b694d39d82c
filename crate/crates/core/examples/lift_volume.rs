// Lift a small volume through a synthetic backbone in every mode.
//
// ```bash
// cargo run --example lift_volume
// ```

use planecycle::lifting::GLOBAL_TOKENS;
use planecycle::metrics::complexity::attention_cost;
use planecycle::weights::{synth_weights, Arch};
use planecycle::{build_cycle_schedule, extract_global_summary, LiftMode, LiftingEngine, Tensor};

pub fn run_example() -> planecycle::Result<()> {
    let arch = Arch::default();
    let engine = LiftingEngine::new(synth_weights(42, &arch)?, 2)?;

    // 4 slices of 48x32 pixels: a 4x3x2 token grid
    let raw = Tensor::from_fn([4, 48, 32, 1], |i| ((i % 97) as f32 / 97.0).sin())?;
    let grid = (4, 3, 2);
    let schedule = build_cycle_schedule(arch.depth)?;
    println!("schedule: {schedule}");

    for mode in LiftMode::ALL {
        let out = engine.forward(&raw, mode, &schedule)?;
        let cost = attention_cost(mode, grid, GLOBAL_TOKENS, arch.depth, &schedule)?;
        let summary = extract_global_summary(&out.globals);
        println!(
            "{mode:>3}: features {:?} globals {:?} summary[0]={:+.4} pairs={}",
            out.features.tensor().dims(),
            out.globals.tensor().dims(),
            summary.data()[0],
            cost.total_pairs()
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> planecycle::Result<()> {
    run_example()
}
