//! FeatDice: how well a single lesion feature picks out the lesion.
//!
//! The feature at the lesion centroid is the reference. Every voxel gets its
//! cosine similarity to it, the map `(sim + 1) / 2` is binarized at each
//! threshold `0.00, 0.05, …, 1.00` (voxel positive when `≥` threshold), and
//! the best Dice against the mask is the score.

use crate::error::{Error, Result};
use crate::plane::VolumeFeatures;
use crate::tensor::Tensor;

pub const THRESHOLD_STEPS: usize = 20;

/// Binarization thresholds, `k / 20` for `k = 0..=20`.
pub fn thresholds() -> impl Iterator<Item = f64> {
    (0..=THRESHOLD_STEPS).map(|k| k as f64 / THRESHOLD_STEPS as f64)
}

/// Binary `[D, H, W]` mask at token-grid resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct LesionMask(Tensor);

impl LesionMask {
    /// Values above 0.5 count as lesion.
    pub fn new(mask: Tensor) -> Result<Self> {
        if mask.rank() != 3 {
            return Err(Error::ShapeMismatch(format!(
                "lesion mask must be [D, H, W], got {:?}",
                mask.dims()
            )));
        }
        let binary = mask.data().iter().map(|&v| if v > 0.5 { 1.0 } else { 0.0 }).collect();
        Ok(LesionMask(Tensor::from_raw(mask.dims(), binary)))
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn grid(&self) -> (usize, usize, usize) {
        let d = self.0.dims();
        (d[0], d[1], d[2])
    }

    pub fn is_positive(&self, flat: usize) -> bool {
        self.0.data()[flat] > 0.5
    }

    pub fn count(&self) -> usize {
        self.0.data().iter().filter(|&&v| v > 0.5).count()
    }
}

/// Majority vote over each `patch × patch` in-plane footprint of a
/// voxel-resolution `[D₀, H₀, W₀]` mask; ties count as lesion.
pub fn downsample_mask(mask: &Tensor, patch: usize) -> Result<LesionMask> {
    let [d0, h0, w0] = *mask.dims() else {
        return Err(Error::ShapeMismatch(format!(
            "voxel mask must be [D, H, W], got {:?}",
            mask.dims()
        )));
    };
    for extent in [h0, w0] {
        if patch == 0 || extent % patch != 0 {
            return Err(Error::IndivisibleExtent { extent, patch });
        }
    }
    let (gh, gw) = (h0 / patch, w0 / patch);
    let src = mask.data();
    let mut out = Vec::with_capacity(d0 * gh * gw);
    for d in 0..d0 {
        for hp in 0..gh {
            for wp in 0..gw {
                let mut positive = 0;
                for y in hp * patch..(hp + 1) * patch {
                    for x in wp * patch..(wp + 1) * patch {
                        if src[(d * h0 + y) * w0 + x] > 0.5 {
                            positive += 1;
                        }
                    }
                }
                out.push(if 2 * positive >= patch * patch { 1.0 } else { 0.0 });
            }
        }
    }
    LesionMask::new(Tensor::from_raw(&[d0, gh, gw], out))
}

/// Reference voxel: the rounded centroid of the lesion, or, when that voxel
/// lies outside the lesion, the lesion voxel nearest to it (lowest flat
/// index on ties).
pub fn reference_voxel(mask: &LesionMask) -> Result<(usize, usize, usize)> {
    let (d, h, w) = mask.grid();
    let mut sum = [0.0f64; 3];
    let mut positives = Vec::new();
    for i in 0..d {
        for j in 0..h {
            for k in 0..w {
                if mask.is_positive((i * h + j) * w + k) {
                    sum[0] += i as f64;
                    sum[1] += j as f64;
                    sum[2] += k as f64;
                    positives.push((i, j, k));
                }
            }
        }
    }
    if positives.is_empty() {
        return Err(Error::EmptyMask);
    }
    let n = positives.len() as f64;
    let round = |s: f64, extent: usize| ((s / n).round() as usize).min(extent - 1);
    let centroid = (round(sum[0], d), round(sum[1], h), round(sum[2], w));
    if mask.is_positive((centroid.0 * h + centroid.1) * w + centroid.2) {
        return Ok(centroid);
    }
    let dist = |&(i, j, k): &(usize, usize, usize)| {
        let sq = |a: usize, b: usize| (a as i64 - b as i64).pow(2);
        sq(i, centroid.0) + sq(j, centroid.1) + sq(k, centroid.2)
    };
    // positives are in ascending flat order, min_by_key keeps the first
    Ok(*positives.iter().min_by_key(|p| dist(p)).expect("nonempty"))
}

fn cosine(a: &[f32], b: &[f32], b_norm: f64) -> f64 {
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        dot += x as f64 * y as f64;
        na += x as f64 * x as f64;
    }
    if na == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * b_norm)
    }
}

/// Cosine similarity of every voxel to the reference voxel, in flat order.
/// Zero-norm voxels get similarity 0.
pub fn similarity_values(features: &VolumeFeatures, reference: (usize, usize, usize)) -> Result<Vec<f64>> {
    let r = features.voxel(reference.0, reference.1, reference.2);
    let r_norm = r.iter().map(|&v| v as f64 * v as f64).sum::<f64>().sqrt();
    if r_norm == 0.0 {
        return Err(Error::ZeroReferenceFeature);
    }
    let c = features.channels();
    Ok(features
        .tensor()
        .data()
        .chunks_exact(c)
        .map(|v| cosine(v, r, r_norm))
        .collect())
}

/// Similarity map `[D, H, W]`.
pub fn similarity_map(features: &VolumeFeatures, reference: (usize, usize, usize)) -> Result<Tensor> {
    let (d, h, w) = features.grid();
    let sims = similarity_values(features, reference)?;
    Ok(Tensor::from_raw(&[d, h, w], sims.into_iter().map(|s| s as f32).collect()))
}

pub fn dice(pred: &[bool], truth: &[bool]) -> f64 {
    let mut inter = 0usize;
    let mut p = 0usize;
    let mut t = 0usize;
    for (&a, &b) in pred.iter().zip(truth) {
        inter += (a && b) as usize;
        p += a as usize;
        t += b as usize;
    }
    if p + t == 0 {
        return 1.0;
    }
    2.0 * inter as f64 / (p + t) as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatDice {
    pub score: f64,
    /// Best threshold on `(sim + 1) / 2`; the lowest one on ties.
    pub threshold: f64,
    pub reference: (usize, usize, usize),
}

pub fn feat_dice(features: &VolumeFeatures, mask: &LesionMask) -> Result<FeatDice> {
    if features.grid() != mask.grid() {
        return Err(Error::ShapeMismatch(format!(
            "feature grid {:?} vs mask grid {:?}",
            features.grid(),
            mask.grid()
        )));
    }
    let reference = reference_voxel(mask)?;
    let sims = similarity_values(features, reference)?;
    let truth: Vec<bool> = (0..sims.len()).map(|i| mask.is_positive(i)).collect();
    let shifted: Vec<f64> = sims.iter().map(|s| (s + 1.0) / 2.0).collect();

    let mut best = FeatDice {
        score: -1.0,
        threshold: 0.0,
        reference,
    };
    for t in thresholds() {
        let pred: Vec<bool> = shifted.iter().map(|&s| s >= t).collect();
        let score = dice(&pred, &truth);
        if score > best.score {
            best.score = score;
            best.threshold = t;
        }
    }
    Ok(best)
}
