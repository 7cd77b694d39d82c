// Save synthetic weights to a tensor archive, load them back, and check
// that a forward pass leaves the weights untouched.
//
// ```bash
// cargo run --example archive_roundtrip
// ```

use planecycle::archive::{encode_archive, read_archive, write_archive};
use planecycle::weights::{synth_weights, weights_checksum, weights_from_archive, weights_to_archive, Arch};
use planecycle::{LiftMode, LiftingEngine, Tensor};

pub fn run_example() -> planecycle::Result<()> {
    let weights = synth_weights(42, &Arch::default())?;
    let before = weights_checksum(&weights)?;
    let archive = weights_to_archive(&weights)?;
    println!("{} tensors, {} parameters", archive.len(), weights.parameter_count());

    let path = std::env::temp_dir().join(format!("planecycle_weights_{}.safetensors", std::process::id()));
    write_archive(&archive, &path)?;
    let loaded = read_archive(&path)?;
    std::fs::remove_file(&path).ok();
    assert_eq!(encode_archive(&loaded), encode_archive(&archive));
    println!("metadata {:?}", loaded.metadata);

    let engine = LiftingEngine::new(weights_from_archive(&loaded)?, 1)?;
    let raw = Tensor::zeros([2, 32, 32, 1])?;
    for mode in LiftMode::ALL {
        engine.forward_default(&raw, mode)?;
    }
    let after = weights_checksum(engine.weights())?;
    println!("checksum {before}");
    assert_eq!(before, after);
    Ok(())
}

#[allow(dead_code)]
fn main() -> planecycle::Result<()> {
    run_example()
}
