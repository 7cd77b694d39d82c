//! Binding between archives and [`NetworkWeights`], plus deterministic
//! synthetic weights.
//!
//! # Manifest
//!
//! Archive metadata carries `depth`, `channels`, `heads`, `patch` (16) and
//! `registers` (4). Tensor names:
//!
//! | name | shape |
//! |------|-------|
//! | `patch_embed.proj.weight` | `[C, in_ch, 16, 16]` |
//! | `patch_embed.proj.bias` | `[C]` |
//! | `cls_token` | `[1, C]` |
//! | `register_tokens` | `[4, C]` |
//! | `blocks.{i}.norm1.weight` / `.bias` | `[C]` |
//! | `blocks.{i}.attn.qkv.weight` / `.bias` | `[3C, C]` / `[3C]` |
//! | `blocks.{i}.attn.proj.weight` / `.bias` | `[C, C]` / `[C]` |
//! | `blocks.{i}.ls1.gamma` (optional) | `[C]` |
//! | `blocks.{i}.norm2.weight` / `.bias` | `[C]` |
//! | `blocks.{i}.mlp.fc1.weight` / `.bias` | `[Ch, C]` / `[Ch]` |
//! | `blocks.{i}.mlp.fc2.weight` / `.bias` | `[C, Ch]` / `[C]` |
//! | `blocks.{i}.ls2.gamma` (optional) | `[C]` |
//! | `norm.weight` / `norm.bias` | `[C]` |
//!
//! Missing layer-scale vectors load as ones.

use sha2::{Digest, Sha256};

use crate::archive::{encode_archive, Archive};
use crate::block::BlockWeights;
use crate::error::{Error, Result};
use crate::lifting::{NetworkWeights, NUM_REGISTERS, PATCH_SIZE};
use crate::rng::{stream_seed, SplitMix64};
use crate::tensor::Tensor;

pub const SYNTH_SCALE: f64 = 0.02;

/// Backbone hyper-parameters for synthetic weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Arch {
    pub depth: usize,
    pub channels: usize,
    pub heads: usize,
    pub in_channels: usize,
    pub mlp_ratio: usize,
}

impl Default for Arch {
    /// Small backbone whose head dim (24) supports both 2-axis and
    /// 3-axis rotary embeddings.
    fn default() -> Self {
        Arch {
            depth: 4,
            channels: 48,
            heads: 2,
            in_channels: 1,
            mlp_ratio: 4,
        }
    }
}

impl Arch {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.channels == 0 || self.heads == 0 || self.in_channels == 0 || self.mlp_ratio == 0 {
            return Err(Error::InvalidArch(format!("zero-sized architecture {self:?}")));
        }
        if !self.channels.is_multiple_of(self.heads) {
            return Err(Error::InvalidArch(format!(
                "{} channels do not split over {} heads",
                self.channels, self.heads
            )));
        }
        let head_dim = self.channels / self.heads;
        if !head_dim.is_multiple_of(4) {
            return Err(Error::InvalidArch(format!(
                "head dim {head_dim} must be a multiple of 4 for 2-axis rotary pairs"
            )));
        }
        Ok(())
    }
}

fn is_norm_gamma(name: &str) -> bool {
    name.ends_with("norm1.weight") || name.ends_with("norm2.weight") || name == "norm.weight"
}

fn is_norm_beta(name: &str) -> bool {
    name.ends_with("norm1.bias") || name.ends_with("norm2.bias") || name == "norm.bias"
}

fn synth_tensor(seed: u64, name: &str, dims: Vec<usize>) -> Result<Tensor> {
    if is_norm_gamma(name) || name.ends_with(".gamma") {
        return Tensor::ones(dims);
    }
    if is_norm_beta(name) {
        return Tensor::zeros(dims);
    }
    let mut rng = SplitMix64::new(stream_seed(seed, name));
    Tensor::from_fn(dims, |_| (rng.next_normal() * SYNTH_SCALE) as f32)
}

/// Deterministic weights: every tensor draws from its own SplitMix64
/// stream seeded by `(seed, name)`, Box–Muller normals times 0.02. Norm
/// gammas and layer-scales are one, norm betas zero.
pub fn synth_weights(seed: u64, arch: &Arch) -> Result<NetworkWeights> {
    arch.validate()?;
    let c = arch.channels;
    let hidden = arch.mlp_ratio * c;
    let t = |name: &str, dims: Vec<usize>| synth_tensor(seed, name, dims);

    let blocks = (0..arch.depth)
        .map(|i| {
            let p = |suffix: &str, dims: Vec<usize>| t(&format!("blocks.{i}.{suffix}"), dims);
            Ok(BlockWeights {
                ln1_gamma: p("norm1.weight", vec![c])?,
                ln1_beta: p("norm1.bias", vec![c])?,
                qkv_weight: p("attn.qkv.weight", vec![3 * c, c])?,
                qkv_bias: p("attn.qkv.bias", vec![3 * c])?,
                proj_weight: p("attn.proj.weight", vec![c, c])?,
                proj_bias: p("attn.proj.bias", vec![c])?,
                ls1_gamma: p("ls1.gamma", vec![c])?,
                ln2_gamma: p("norm2.weight", vec![c])?,
                ln2_beta: p("norm2.bias", vec![c])?,
                fc1_weight: p("mlp.fc1.weight", vec![hidden, c])?,
                fc1_bias: p("mlp.fc1.bias", vec![hidden])?,
                fc2_weight: p("mlp.fc2.weight", vec![c, hidden])?,
                fc2_bias: p("mlp.fc2.bias", vec![c])?,
                ls2_gamma: p("ls2.gamma", vec![c])?,
                num_heads: arch.heads,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let weights = NetworkWeights {
        patch_weight: t(
            "patch_embed.proj.weight",
            vec![c, arch.in_channels, PATCH_SIZE, PATCH_SIZE],
        )?,
        patch_bias: t("patch_embed.proj.bias", vec![c])?,
        cls_token: t("cls_token", vec![1, c])?,
        register_tokens: t("register_tokens", vec![NUM_REGISTERS, c])?,
        blocks,
        norm_gamma: t("norm.weight", vec![c])?,
        norm_beta: t("norm.bias", vec![c])?,
    };
    weights.validate()?;
    Ok(weights)
}

/// Serializes weights under the manifest names with architecture metadata.
pub fn weights_to_archive(w: &NetworkWeights) -> Result<Archive> {
    let mut archive = Archive::new();
    for (name, t) in w.named_tensors() {
        archive.insert(name, t.clone())?;
    }
    for (k, v) in [
        ("depth", w.depth()),
        ("channels", w.channels()),
        ("heads", w.num_heads()),
        ("patch", PATCH_SIZE),
        ("registers", NUM_REGISTERS),
    ] {
        archive.metadata.insert(k.to_string(), v.to_string());
    }
    Ok(archive)
}

fn metadata_usize(archive: &Archive, key: &str) -> Result<usize> {
    let raw = archive
        .metadata
        .get(key)
        .ok_or_else(|| Error::InvalidArch(format!("archive metadata lacks {key:?}")))?;
    raw.trim()
        .parse()
        .map_err(|_| Error::InvalidArch(format!("metadata {key}={raw:?} is not an integer")))
}

/// Resolves every manifest name. Shapes are checked by
/// [`NetworkWeights::validate`].
pub fn weights_from_archive(archive: &Archive) -> Result<NetworkWeights> {
    let depth = metadata_usize(archive, "depth")?;
    let heads = metadata_usize(archive, "heads")?;
    for (key, want) in [("patch", PATCH_SIZE), ("registers", NUM_REGISTERS)] {
        if archive.metadata.contains_key(key) && metadata_usize(archive, key)? != want {
            return Err(Error::InvalidArch(format!("{key} must be {want}")));
        }
    }
    let get = |name: &str| archive.require(name).cloned();
    let channels = get("patch_embed.proj.bias")?.numel();
    if let Ok(c) = metadata_usize(archive, "channels") {
        if c != channels {
            return Err(Error::InvalidArch(format!(
                "metadata channels {c} but patch bias has {channels}"
            )));
        }
    }
    let layer_scale = |name: String| match archive.get(&name) {
        Some(t) => Ok(t.clone()),
        None => Tensor::ones([channels]),
    };

    let blocks = (0..depth)
        .map(|i| {
            let p = |suffix: &str| get(&format!("blocks.{i}.{suffix}"));
            Ok(BlockWeights {
                ln1_gamma: p("norm1.weight")?,
                ln1_beta: p("norm1.bias")?,
                qkv_weight: p("attn.qkv.weight")?,
                qkv_bias: p("attn.qkv.bias")?,
                proj_weight: p("attn.proj.weight")?,
                proj_bias: p("attn.proj.bias")?,
                ls1_gamma: layer_scale(format!("blocks.{i}.ls1.gamma"))?,
                ln2_gamma: p("norm2.weight")?,
                ln2_beta: p("norm2.bias")?,
                fc1_weight: p("mlp.fc1.weight")?,
                fc1_bias: p("mlp.fc1.bias")?,
                fc2_weight: p("mlp.fc2.weight")?,
                fc2_bias: p("mlp.fc2.bias")?,
                ls2_gamma: layer_scale(format!("blocks.{i}.ls2.gamma"))?,
                num_heads: heads,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let weights = NetworkWeights {
        patch_weight: get("patch_embed.proj.weight")?,
        patch_bias: get("patch_embed.proj.bias")?,
        cls_token: get("cls_token")?,
        register_tokens: get("register_tokens")?,
        blocks,
        norm_gamma: get("norm.weight")?,
        norm_beta: get("norm.bias")?,
    };
    weights.validate()?;
    Ok(weights)
}

/// Hex SHA-256 of the canonical archive encoding of the weights.
pub fn weights_checksum(w: &NetworkWeights) -> Result<String> {
    Ok(archive_checksum(&weights_to_archive(w)?))
}

pub fn archive_checksum(archive: &Archive) -> String {
    let digest = Sha256::digest(encode_archive(archive));
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
