use crate::block::BlockWeights;
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

pub fn random_tensor(dims: &[usize], seed: u64, scale: f32) -> Tensor {
    let mut rng = SplitMix64::new(seed);
    Tensor::from_fn(dims.to_vec(), |_| rng.next_normal() as f32 * scale).unwrap()
}

/// Block with every parameter drawn from `N(0, scale²)`, MLP ratio 2.
pub fn random_block(seed: u64, c: usize, heads: usize, scale: f32) -> BlockWeights {
    let mut rng = SplitMix64::new(seed);
    let mut t = |dims: &[usize]| {
        Tensor::from_fn(dims.to_vec(), |_| rng.next_normal() as f32 * scale).unwrap()
    };
    BlockWeights {
        ln1_gamma: t(&[c]),
        ln1_beta: t(&[c]),
        qkv_weight: t(&[3 * c, c]),
        qkv_bias: t(&[3 * c]),
        proj_weight: t(&[c, c]),
        proj_bias: t(&[c]),
        ls1_gamma: t(&[c]),
        ln2_gamma: t(&[c]),
        ln2_beta: t(&[c]),
        fc1_weight: t(&[2 * c, c]),
        fc1_bias: t(&[2 * c]),
        fc2_weight: t(&[c, 2 * c]),
        fc2_bias: t(&[c]),
        ls2_gamma: t(&[c]),
        num_heads: heads,
    }
}
