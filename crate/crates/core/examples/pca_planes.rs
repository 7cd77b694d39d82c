// Project features on their top three principal components and save the
// central HW, DW and DH slices as RGB images.
//
// ```bash
// cargo run --example pca_planes -- /tmp/pca
// ```

use std::path::PathBuf;

use planecycle::metrics::pca::pca_project;
use planecycle::ppm::central_slice;
use planecycle::weights::{synth_weights, Arch};
use planecycle::{build_cycle_schedule, forward, LiftMode, PlaneAxis, PoolMode, Tensor};

pub fn run_example() -> planecycle::Result<()> {
    let prefix = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("planecycle_pca"));

    let weights = synth_weights(11, &Arch::default())?;
    let raw = Tensor::from_fn([6, 96, 80, 1], |i| {
        let (d, y, x) = (i / (96 * 80), (i / 80) % 96, i % 80);
        ((d as f32 * 0.7).cos() + (y as f32 / 20.0).sin() * (x as f32 / 15.0).cos()) * 0.5
    })?;
    let schedule = build_cycle_schedule(weights.depth())?;
    let out = forward(&raw, &weights, LiftMode::PlaneCycle(PoolMode::Grouped), &schedule)?;

    let pca = pca_project(&out.features, 3)?;
    println!("eigenvalues {:.4?}", pca.eigenvalues);
    for axis in PlaneAxis::ALL {
        let image = central_slice(&pca.projection, axis)?;
        let path = PathBuf::from(format!("{}_{}.ppm", prefix.display(), axis.plane_name()));
        image.write(&path)?;
        println!("{axis}: {}x{} -> {}", image.width, image.height, path.display());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> planecycle::Result<()> {
    run_example()
}
