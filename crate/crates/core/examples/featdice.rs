// Score how well feature similarity to a lesion's centre recovers the
// lesion.
//
// ```bash
// cargo run --example featdice
// ```

use planecycle::metrics::featdice::{downsample_mask, feat_dice, LesionMask};
use planecycle::weights::{synth_weights, Arch};
use planecycle::{build_cycle_schedule, forward, LiftMode, PoolMode, Tensor, VolumeFeatures};

pub fn run_example() -> planecycle::Result<()> {
    // features that are exactly the lesion indicator score 1
    let inside = |i: usize| {
        let (d, h, w) = (i / 16, (i / 4) % 4, i % 4);
        (1..3).contains(&d) && (1..3).contains(&h) && (1..3).contains(&w)
    };
    let mask = LesionMask::new(Tensor::from_fn([4, 4, 4], |i| inside(i) as u8 as f32)?)?;
    let indicator = Tensor::from_fn([4, 4, 4, 2], |i| if inside(i / 2) { 1.0 } else { (i % 2) as f32 })?;
    let perfect = feat_dice(&VolumeFeatures::new(indicator)?, &mask)?;
    println!("indicator features: featdice={:.4}", perfect.score);

    // lifted features against a voxel-resolution mask
    let weights = synth_weights(3, &Arch::default())?;
    let raw = Tensor::from_fn([4, 64, 64, 1], |i| {
        let (d, y, x) = (i / 4096, (i / 64) % 64, i % 64);
        if (1..3).contains(&d) && (16..48).contains(&y) && (16..48).contains(&x) { 1.0 } else { 0.0 }
    })?;
    let voxel_mask = raw.reshape([4, 64, 64])?;
    let mask = downsample_mask(&voxel_mask, 16)?;
    let schedule = build_cycle_schedule(weights.depth())?;
    for mode in [LiftMode::Slice2D, LiftMode::PlaneCycle(PoolMode::Grouped)] {
        let out = forward(&raw, &weights, mode, &schedule)?;
        let score = feat_dice(&out.features, &mask)?;
        println!(
            "{mode:>3}: featdice={:.4} at threshold {:.2}, reference {:?}",
            score.score, score.threshold, score.reference
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> planecycle::Result<()> {
    run_example()
}
