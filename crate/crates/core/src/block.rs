//! Forward pass of one frozen transformer block: pre-norm multi-head
//! self-attention with rotary position embedding, then a GELU MLP, each
//! behind a layer-scaled residual.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-6;
pub const ROPE_BASE: f64 = 100.0;

/// Parameters of one pretrained block. Linear weights use the
/// `[out, in]` layout of published checkpoints.
#[derive(Clone, Debug)]
pub struct BlockWeights {
    pub ln1_gamma: Tensor,
    pub ln1_beta: Tensor,
    pub qkv_weight: Tensor,
    pub qkv_bias: Tensor,
    pub proj_weight: Tensor,
    pub proj_bias: Tensor,
    pub ls1_gamma: Tensor,
    pub ln2_gamma: Tensor,
    pub ln2_beta: Tensor,
    pub fc1_weight: Tensor,
    pub fc1_bias: Tensor,
    pub fc2_weight: Tensor,
    pub fc2_bias: Tensor,
    pub ls2_gamma: Tensor,
    pub num_heads: usize,
}

impl BlockWeights {
    pub fn channels(&self) -> usize {
        self.ln1_gamma.numel()
    }

    pub fn hidden(&self) -> usize {
        self.fc1_bias.numel()
    }

    pub fn head_dim(&self) -> usize {
        self.channels() / self.num_heads
    }

    /// Named parameter tensors in a fixed order.
    pub fn tensors(&self) -> [(&'static str, &Tensor); 14] {
        [
            ("norm1.weight", &self.ln1_gamma),
            ("norm1.bias", &self.ln1_beta),
            ("attn.qkv.weight", &self.qkv_weight),
            ("attn.qkv.bias", &self.qkv_bias),
            ("attn.proj.weight", &self.proj_weight),
            ("attn.proj.bias", &self.proj_bias),
            ("ls1.gamma", &self.ls1_gamma),
            ("norm2.weight", &self.ln2_gamma),
            ("norm2.bias", &self.ln2_beta),
            ("mlp.fc1.weight", &self.fc1_weight),
            ("mlp.fc1.bias", &self.fc1_bias),
            ("mlp.fc2.weight", &self.fc2_weight),
            ("mlp.fc2.bias", &self.fc2_bias),
            ("ls2.gamma", &self.ls2_gamma),
        ]
    }

    /// Checks every shape against `C` and `Ch` and the head split.
    pub fn validate(&self) -> Result<()> {
        let c = self.channels();
        let ch = self.hidden();
        if self.num_heads == 0 || !c.is_multiple_of(self.num_heads) {
            return Err(Error::InvalidArch(format!(
                "{c} channels cannot be split over {} heads",
                self.num_heads
            )));
        }
        let head_dim = c / self.num_heads;
        if !head_dim.is_multiple_of(4) {
            return Err(Error::UnsupportedHeadDim {
                head_dim,
                required: 4,
            });
        }
        let expected: [(&str, &Tensor, Vec<usize>); 14] = [
            ("norm1.weight", &self.ln1_gamma, vec![c]),
            ("norm1.bias", &self.ln1_beta, vec![c]),
            ("attn.qkv.weight", &self.qkv_weight, vec![3 * c, c]),
            ("attn.qkv.bias", &self.qkv_bias, vec![3 * c]),
            ("attn.proj.weight", &self.proj_weight, vec![c, c]),
            ("attn.proj.bias", &self.proj_bias, vec![c]),
            ("ls1.gamma", &self.ls1_gamma, vec![c]),
            ("norm2.weight", &self.ln2_gamma, vec![c]),
            ("norm2.bias", &self.ln2_beta, vec![c]),
            ("mlp.fc1.weight", &self.fc1_weight, vec![ch, c]),
            ("mlp.fc1.bias", &self.fc1_bias, vec![ch]),
            ("mlp.fc2.weight", &self.fc2_weight, vec![c, ch]),
            ("mlp.fc2.bias", &self.fc2_bias, vec![c]),
            ("ls2.gamma", &self.ls2_gamma, vec![c]),
        ];
        for (name, t, dims) in expected {
            if t.dims() != dims.as_slice() {
                return Err(Error::ShapeMismatch(format!(
                    "{name}: expected {dims:?}, got {:?}",
                    t.dims()
                )));
            }
            if let Some(index) = t.data().iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { index });
            }
        }
        Ok(())
    }
}

/// Per-token rotary coordinates. Tokens with `mask == false` (global
/// tokens) are never rotated.
#[derive(Clone, Debug, PartialEq)]
pub struct RopeCoords {
    axes: usize,
    coords: Vec<f32>,
    mask: Vec<bool>,
}

impl RopeCoords {
    /// `coords` is `len × axes`, row-major.
    pub fn new(axes: usize, coords: Vec<f32>, mask: Vec<bool>) -> Result<Self> {
        if axes == 0 || coords.len() != mask.len() * axes {
            return Err(Error::ShapeMismatch(format!(
                "{} coordinates for {} tokens on {axes} axes",
                coords.len(),
                mask.len()
            )));
        }
        Ok(RopeCoords { axes, coords, mask })
    }

    /// 2-axis `(y, x)` coordinates, all rotated.
    pub fn from_pairs(pairs: &[(f32, f32)]) -> Self {
        RopeCoords {
            axes: 2,
            coords: pairs.iter().flat_map(|&(y, x)| [y, x]).collect(),
            mask: vec![true; pairs.len()],
        }
    }

    /// `n` unrotated tokens.
    pub fn unrotated(axes: usize, n: usize) -> Self {
        RopeCoords {
            axes,
            coords: vec![0.0; n * axes],
            mask: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn axes(&self) -> usize {
        self.axes
    }

    pub fn coord(&self, token: usize) -> &[f32] {
        &self.coords[token * self.axes..(token + 1) * self.axes]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Applies a token permutation: entry `i` of the result is entry
    /// `order[i]` of `self`.
    pub fn reorder(&self, order: &[usize]) -> Self {
        RopeCoords {
            axes: self.axes,
            coords: order
                .iter()
                .flat_map(|&i| self.coord(i).iter().copied())
                .collect(),
            mask: order.iter().map(|&i| self.mask[i]).collect(),
        }
    }

    pub fn concat(&self, other: &RopeCoords) -> Result<Self> {
        if self.axes != other.axes {
            return Err(Error::ShapeMismatch(format!(
                "rope axes {} vs {}",
                self.axes, other.axes
            )));
        }
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        let mut mask = self.mask.clone();
        mask.extend_from_slice(&other.mask);
        Ok(RopeCoords {
            axes: self.axes,
            coords,
            mask,
        })
    }
}

pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<Tensor> {
    let (n, c) = x.as_matrix("layer_norm")?;
    if gamma.dims() != [c] || beta.dims() != [c] {
        return Err(Error::ShapeMismatch(format!(
            "layer_norm affine {:?}/{:?} for {c} channels",
            gamma.dims(),
            beta.dims()
        )));
    }
    let (g, b) = (gamma.data(), beta.data());
    let mut out = Vec::with_capacity(n * c);
    for i in 0..n {
        let row = x.row(i);
        let mean = row.iter().map(|&v| v as f64).sum::<f64>() / c as f64;
        let var = row
            .iter()
            .map(|&v| {
                let d = v as f64 - mean;
                d * d
            })
            .sum::<f64>()
            / c as f64;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        for j in 0..c {
            let normed = ((row[j] as f64 - mean) * inv) as f32;
            out.push(normed * g[j] + b[j]);
        }
    }
    Ok(Tensor::from_raw(&[n, c], out))
}

/// Exact GELU, `x/2 · (1 + erf(x/√2))`.
pub fn gelu(x: f32) -> f32 {
    0.5 * x * (1.0 + libm::erff(x * std::f32::consts::FRAC_1_SQRT_2))
}

/// Rotation frequency of pair `j` within one axis' channel budget:
/// `base^(-2·axes·j / head_dim)`.
pub fn rope_frequency(j: usize, axes: usize, head_dim: usize) -> f64 {
    libm::pow(ROPE_BASE, -((2 * axes * j) as f64) / head_dim as f64)
}

/// Rotates `[heads, n, head_dim]` query or key rows in place.
///
/// Channel pairs are adjacent `(2p, 2p+1)`. The `head_dim/2` pairs are split
/// into `axes` equal groups in axis order; pair `j` of group `a` turns by
/// `rope_frequency(j) · coord[a]`.
fn rope_rotate_in_place(rows: &mut [f32], head_dim: usize, coords: &RopeCoords) -> Result<()> {
    let axes = coords.axes();
    if !head_dim.is_multiple_of(2 * axes) {
        return Err(Error::UnsupportedHeadDim {
            head_dim,
            required: 2 * axes,
        });
    }
    let n = coords.len();
    if !rows.len().is_multiple_of(n * head_dim) {
        return Err(Error::ShapeMismatch(format!(
            "{} values for {n} tokens of head dim {head_dim}",
            rows.len()
        )));
    }
    let pairs_per_axis = head_dim / (2 * axes);
    let freqs: Vec<f64> = (0..pairs_per_axis)
        .map(|j| rope_frequency(j, axes, head_dim))
        .collect();

    // sin/cos table per token, shared by every head
    let mut table = vec![(0.0f32, 1.0f32); n * head_dim / 2];
    for t in 0..n {
        if !coords.mask()[t] {
            continue;
        }
        let coord = coords.coord(t);
        for (a, &pos) in coord.iter().enumerate() {
            for (j, &freq) in freqs.iter().enumerate() {
                let angle = freq * pos as f64;
                table[t * head_dim / 2 + a * pairs_per_axis + j] =
                    (libm::sin(angle) as f32, libm::cos(angle) as f32);
            }
        }
    }

    for (row_idx, row) in rows.chunks_exact_mut(head_dim).enumerate() {
        let t = row_idx % n;
        if !coords.mask()[t] {
            continue;
        }
        for p in 0..head_dim / 2 {
            let (sin, cos) = table[t * head_dim / 2 + p];
            let (a, b) = (row[2 * p], row[2 * p + 1]);
            row[2 * p] = cos * a - sin * b;
            row[2 * p + 1] = sin * a + cos * b;
        }
    }
    Ok(())
}

/// Rotary embedding of `qk[heads, n, head_dim]`.
pub fn rope_rotate(qk: &Tensor, coords: &RopeCoords) -> Result<Tensor> {
    let [heads, n, head_dim] = *qk.dims() else {
        return Err(Error::ShapeMismatch(format!(
            "rope expects [heads, n, head_dim], got {:?}",
            qk.dims()
        )));
    };
    if n != coords.len() {
        return Err(Error::ShapeMismatch(format!(
            "{n} tokens but {} coordinates",
            coords.len()
        )));
    }
    let mut data = qk.to_vec();
    rope_rotate_in_place(&mut data, head_dim, coords)?;
    Ok(Tensor::from_raw(&[heads, n, head_dim], data))
}

/// Splits the fused qkv projection `[n, 3C]` into q, k, v as `[heads, n, head_dim]`.
fn split_heads(qkv: &Tensor, heads: usize) -> [Vec<f32>; 3] {
    let (n, three_c) = (qkv.dims()[0], qkv.dims()[1]);
    let c = three_c / 3;
    let hd = c / heads;
    let mut out = [vec![0.0; n * c], vec![0.0; n * c], vec![0.0; n * c]];
    for t in 0..n {
        let row = qkv.row(t);
        for (which, buf) in out.iter_mut().enumerate() {
            for h in 0..heads {
                let src = &row[which * c + h * hd..which * c + (h + 1) * hd];
                buf[(h * n + t) * hd..(h * n + t + 1) * hd].copy_from_slice(src);
            }
        }
    }
    out
}

struct HeadInputs {
    q: Vec<f32>,
    k: Vec<f32>,
    v: Vec<f32>,
    n: usize,
    heads: usize,
    head_dim: usize,
}

fn head_inputs(x: &Tensor, w: &BlockWeights, coords: &RopeCoords) -> Result<HeadInputs> {
    let (n, c) = x.as_matrix("mhsa")?;
    if c != w.channels() {
        return Err(Error::ShapeMismatch(format!(
            "tokens have {c} channels, block expects {}",
            w.channels()
        )));
    }
    if coords.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{n} tokens but {} coordinates",
            coords.len()
        )));
    }
    let heads = w.num_heads;
    let head_dim = c / heads;
    let qkv = x.linear(&w.qkv_weight, Some(&w.qkv_bias))?;
    let [mut q, mut k, v] = split_heads(&qkv, heads);
    rope_rotate_in_place(&mut q, head_dim, coords)?;
    rope_rotate_in_place(&mut k, head_dim, coords)?;
    Ok(HeadInputs {
        q,
        k,
        v,
        n,
        heads,
        head_dim,
    })
}

/// Softmax attention probabilities of one head, `[n, n]` row-major.
fn head_probs(inputs: &HeadInputs, h: usize) -> Vec<f32> {
    let HeadInputs { n, head_dim, .. } = *inputs;
    let scale = 1.0 / (head_dim as f32).sqrt();
    let q = &inputs.q[h * n * head_dim..(h + 1) * n * head_dim];
    let k = &inputs.k[h * n * head_dim..(h + 1) * n * head_dim];
    let mut probs = vec![0.0f32; n * n];
    for i in 0..n {
        let qi = &q[i * head_dim..(i + 1) * head_dim];
        let row = &mut probs[i * n..(i + 1) * n];
        let mut max = f32::NEG_INFINITY;
        for (j, s) in row.iter_mut().enumerate() {
            *s = crate::tensor::dot(qi, &k[j * head_dim..(j + 1) * head_dim]) * scale;
            max = max.max(*s);
        }
        let mut sum = 0.0f32;
        for s in row.iter_mut() {
            *s = (*s - max).exp();
            sum += *s;
        }
        for s in row.iter_mut() {
            *s /= sum;
        }
    }
    probs
}

fn head_output(inputs: &HeadInputs, h: usize) -> Vec<f32> {
    let HeadInputs { n, head_dim, .. } = *inputs;
    let probs = head_probs(inputs, h);
    let v = &inputs.v[h * n * head_dim..(h + 1) * n * head_dim];
    let mut out = vec![0.0f32; n * head_dim];
    for i in 0..n {
        let o = &mut out[i * head_dim..(i + 1) * head_dim];
        for j in 0..n {
            let p = probs[i * n + j];
            for (acc, &vj) in o.iter_mut().zip(&v[j * head_dim..(j + 1) * head_dim]) {
                *acc += p * vj;
            }
        }
    }
    out
}

/// Multi-head self-attention over `x[n, C]`. Heads are evaluated in
/// parallel; each head's arithmetic is sequential, so results do not
/// depend on the thread count.
pub fn mhsa(x: &Tensor, w: &BlockWeights, coords: &RopeCoords) -> Result<Tensor> {
    let inputs = head_inputs(x, w, coords)?;
    let HeadInputs {
        n,
        heads,
        head_dim,
        ..
    } = inputs;
    let per_head: Vec<Vec<f32>> = (0..heads)
        .into_par_iter()
        .map(|h| head_output(&inputs, h))
        .collect();
    let c = heads * head_dim;
    let mut merged = vec![0.0f32; n * c];
    for (h, out) in per_head.iter().enumerate() {
        for t in 0..n {
            merged[t * c + h * head_dim..t * c + (h + 1) * head_dim]
                .copy_from_slice(&out[t * head_dim..(t + 1) * head_dim]);
        }
    }
    Tensor::from_raw(&[n, c], merged).linear(&w.proj_weight, Some(&w.proj_bias))
}

/// Debug hook: per-head softmax matrices `[n, n]` of the attention that
/// `mhsa` would compute on `x`.
pub fn attention_probs(x: &Tensor, w: &BlockWeights, coords: &RopeCoords) -> Result<Vec<Tensor>> {
    let inputs = head_inputs(x, w, coords)?;
    Ok((0..inputs.heads)
        .map(|h| Tensor::from_raw(&[inputs.n, inputs.n], head_probs(&inputs, h)))
        .collect())
}

fn scaled_residual(x: &Tensor, update: &Tensor, gamma: &Tensor) -> Tensor {
    let c = gamma.numel();
    let g = gamma.data();
    let out = x
        .data()
        .iter()
        .zip(update.data())
        .enumerate()
        .map(|(i, (&xv, &u))| xv + g[i % c] * u)
        .collect();
    Tensor::from_raw(x.dims(), out)
}

pub fn mlp(x: &Tensor, w: &BlockWeights) -> Result<Tensor> {
    let hidden = x.linear(&w.fc1_weight, Some(&w.fc1_bias))?;
    let dims = hidden.dims().to_vec();
    let activated = Tensor::from_raw(&dims, hidden.into_vec().into_iter().map(gelu).collect());
    activated.linear(&w.fc2_weight, Some(&w.fc2_bias))
}

/// `x + ls1⊙attn(ln1(x))`, then `+ ls2⊙mlp(ln2(·))`.
pub fn block_forward(x: &Tensor, w: &BlockWeights, coords: &RopeCoords) -> Result<Tensor> {
    let attn = mhsa(&layer_norm(x, &w.ln1_gamma, &w.ln1_beta)?, w, coords)?;
    let x1 = scaled_residual(x, &attn, &w.ls1_gamma);
    let m = mlp(&layer_norm(&x1, &w.ln2_gamma, &w.ln2_beta)?, w)?;
    Ok(scaled_residual(&x1, &m, &w.ls2_gamma))
}
