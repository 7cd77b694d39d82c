// Apply one block along each of the three planes and inspect the
// sequences it runs.
//
// ```bash
// cargo run --example plane_step
// ```

use planecycle::weights::{synth_weights, Arch};
use planecycle::{patch_embed_volume, plane_cycle_step, reshape_to_plane, PlaneAxis, PoolMode, Tensor};

pub fn run_example() -> planecycle::Result<()> {
    let weights = synth_weights(7, &Arch::default())?;
    let raw = Tensor::from_fn([3, 64, 32, 1], |i| (i % 13) as f32 / 13.0)?;
    let (features, globals) = patch_embed_volume(&raw, &weights)?;
    println!("token grid {:?}, {} channels", features.grid(), features.channels());

    for axis in PlaneAxis::ALL {
        let planes = reshape_to_plane(&features, axis)?;
        let step = plane_cycle_step(&features, &globals, &weights.blocks[0], axis, PoolMode::Grouped)?;
        println!(
            "{axis}: plane view {:?} -> {} sequences of {} tokens, globals {:?}",
            planes.dims(),
            step.sequences,
            step.sequence_len,
            step.globals.tensor().dims()
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> planecycle::Result<()> {
    run_example()
}
