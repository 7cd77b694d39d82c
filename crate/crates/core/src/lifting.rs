//! Network-level lifting of a 2D backbone to volumes.
//!
//! A raw `D₀×H₀×W₀×in_ch` volume is patch-embedded slice by slice, then
//! every block runs in one of three ways:
//!
//! * [`LiftMode::Slice2D`]: each depth slice is an independent sequence.
//! * [`LiftMode::Flat3D`]: all patch tokens form a single sequence.
//! * [`LiftMode::PlaneCycle`]: block `i` runs on the plane `schedule[i]`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::block::{block_forward, layer_norm, BlockWeights, RopeCoords};
use crate::error::{Error, Result};
use crate::plane::{
    coords_for_plane, normalized_coord, plane_cycle_step, GlobalTokens, PlaneAxis, PoolMode,
    VolumeFeatures,
};
use crate::tensor::Tensor;

pub const PATCH_SIZE: usize = 16;
pub const NUM_REGISTERS: usize = 4;
/// One CLS token plus the register tokens.
pub const GLOBAL_TOKENS: usize = 1 + NUM_REGISTERS;

/// Frozen backbone parameters.
#[derive(Clone, Debug)]
pub struct NetworkWeights {
    /// `[C, in_ch, 16, 16]`
    pub patch_weight: Tensor,
    pub patch_bias: Tensor,
    /// `[1, C]`
    pub cls_token: Tensor,
    /// `[4, C]`
    pub register_tokens: Tensor,
    pub blocks: Vec<BlockWeights>,
    pub norm_gamma: Tensor,
    pub norm_beta: Tensor,
}

impl NetworkWeights {
    pub fn channels(&self) -> usize {
        self.patch_bias.numel()
    }

    pub fn in_channels(&self) -> usize {
        self.patch_weight.dims()[1]
    }

    pub fn depth(&self) -> usize {
        self.blocks.len()
    }

    pub fn num_heads(&self) -> usize {
        self.blocks[0].num_heads
    }

    /// The `g = 5` learned global tokens, CLS first.
    pub fn global_tokens(&self) -> Result<Tensor> {
        Tensor::concat_rows(&[&self.cls_token, &self.register_tokens])
    }

    /// Every parameter tensor with its archive name, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            ("patch_embed.proj.weight".to_string(), &self.patch_weight),
            ("patch_embed.proj.bias".to_string(), &self.patch_bias),
            ("cls_token".to_string(), &self.cls_token),
            ("register_tokens".to_string(), &self.register_tokens),
        ];
        for (i, block) in self.blocks.iter().enumerate() {
            for (name, t) in block.tensors() {
                out.push((format!("blocks.{i}.{name}"), t));
            }
        }
        out.push(("norm.weight".to_string(), &self.norm_gamma));
        out.push(("norm.bias".to_string(), &self.norm_beta));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.channels();
        let [wc, _, ph, pw] = *self.patch_weight.dims() else {
            return Err(Error::ShapeMismatch(format!(
                "patch weight must be [C, in_ch, 16, 16], got {:?}",
                self.patch_weight.dims()
            )));
        };
        if wc != c || ph != PATCH_SIZE || pw != PATCH_SIZE {
            return Err(Error::ShapeMismatch(format!(
                "patch weight {:?} with bias of {c}",
                self.patch_weight.dims()
            )));
        }
        for (name, t, dims) in [
            ("cls_token", &self.cls_token, vec![1, c]),
            ("register_tokens", &self.register_tokens, vec![NUM_REGISTERS, c]),
            ("norm.weight", &self.norm_gamma, vec![c]),
            ("norm.bias", &self.norm_beta, vec![c]),
        ] {
            if t.dims() != dims.as_slice() {
                return Err(Error::ShapeMismatch(format!(
                    "{name}: expected {dims:?}, got {:?}",
                    t.dims()
                )));
            }
        }
        if self.blocks.is_empty() {
            return Err(Error::InvalidArch("network needs at least one block".into()));
        }
        let heads = self.blocks[0].num_heads;
        for (i, block) in self.blocks.iter().enumerate() {
            block.validate()?;
            if block.channels() != c || block.num_heads != heads {
                return Err(Error::InvalidArch(format!(
                    "block {i} has {} channels / {} heads, expected {c} / {heads}",
                    block.channels(),
                    block.num_heads
                )));
            }
        }
        Ok(())
    }
}

/// One plane per block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schedule(Vec<PlaneAxis>);

impl Schedule {
    /// The four-operator cycle `HW → DW → DH → HW`.
    pub const CYCLE: [PlaneAxis; 4] = [PlaneAxis::D, PlaneAxis::H, PlaneAxis::W, PlaneAxis::D];

    pub fn new(planes: Vec<PlaneAxis>) -> Result<Self> {
        if planes.is_empty() {
            return Err(Error::InvalidSchedule("schedule is empty".into()));
        }
        Ok(Schedule(planes))
    }

    /// Repeats `pattern` and truncates it to `depth` entries.
    pub fn from_pattern(pattern: &[PlaneAxis], depth: usize) -> Result<Self> {
        if pattern.is_empty() || depth == 0 {
            return Err(Error::InvalidSchedule(format!(
                "pattern of {} planes for depth {depth}",
                pattern.len()
            )));
        }
        Schedule::new(pattern.iter().copied().cycle().take(depth).collect())
    }

    pub fn uniform(axis: PlaneAxis, depth: usize) -> Result<Self> {
        Schedule::from_pattern(&[axis], depth)
    }

    pub fn planes(&self) -> &[PlaneAxis] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.0.iter().map(|p| p.plane_name()).collect();
        f.write_str(&names.join(","))
    }
}

impl FromStr for Schedule {
    type Err = Error;

    /// Comma-separated plane names, e.g. `hw,dw,dh,hw`.
    fn from_str(s: &str) -> Result<Self> {
        let planes = s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>>>()?;
        Schedule::new(planes)
    }
}

/// The four-operator cycle repeated over `depth` blocks, truncated when
/// `depth` is not a multiple of four.
pub fn build_cycle_schedule(depth: usize) -> Result<Schedule> {
    Schedule::from_pattern(&Schedule::CYCLE, depth)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LiftMode {
    Slice2D,
    Flat3D,
    PlaneCycle(PoolMode),
}

impl LiftMode {
    pub const ALL: [LiftMode; 4] = [
        LiftMode::Slice2D,
        LiftMode::Flat3D,
        LiftMode::PlaneCycle(PoolMode::Mean),
        LiftMode::PlaneCycle(PoolMode::Grouped),
    ];

    pub fn name(self) -> &'static str {
        match self {
            LiftMode::Slice2D => "2d",
            LiftMode::Flat3D => "3d",
            LiftMode::PlaneCycle(PoolMode::Mean) => "pcm",
            LiftMode::PlaneCycle(PoolMode::Grouped) => "pcg",
        }
    }
}

impl fmt::Display for LiftMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LiftMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "2d" | "slice2d" => Ok(LiftMode::Slice2D),
            "3d" | "flat3d" => Ok(LiftMode::Flat3D),
            "pcm" => Ok(LiftMode::PlaneCycle(PoolMode::Mean)),
            "pcg" => Ok(LiftMode::PlaneCycle(PoolMode::Grouped)),
            other => Err(Error::InvalidSchedule(format!("unknown lift mode {other:?}"))),
        }
    }
}

/// Per-slice 2D patch projection. Returns the `(D₀, H₀/16, W₀/16, C)`
/// token volume and the learned global tokens replicated per slice.
pub fn patch_embed_volume(raw: &Tensor, w: &NetworkWeights) -> Result<(VolumeFeatures, GlobalTokens)> {
    let [d0, h0, w0, in_ch] = *raw.dims() else {
        return Err(Error::ShapeMismatch(format!(
            "raw volume must be [D, H, W, in_ch], got {:?}",
            raw.dims()
        )));
    };
    if in_ch != w.in_channels() {
        return Err(Error::ShapeMismatch(format!(
            "volume has {in_ch} input channels, patch embedding expects {}",
            w.in_channels()
        )));
    }
    for extent in [h0, w0] {
        if extent % PATCH_SIZE != 0 {
            return Err(Error::IndivisibleExtent {
                extent,
                patch: PATCH_SIZE,
            });
        }
    }
    let (gh, gw) = (h0 / PATCH_SIZE, w0 / PATCH_SIZE);
    let c = w.channels();
    let patch_len = in_ch * PATCH_SIZE * PATCH_SIZE;
    let weight = w.patch_weight.data();
    let bias = w.patch_bias.data();
    let src = raw.data();

    let slices: Vec<Vec<f32>> = (0..d0)
        .into_par_iter()
        .map(|d| {
            let mut out = Vec::with_capacity(gh * gw * c);
            let mut patch = vec![0.0f32; patch_len];
            for hp in 0..gh {
                for wp in 0..gw {
                    // gather in the weight's (in_ch, y, x) order
                    for ci in 0..in_ch {
                        for py in 0..PATCH_SIZE {
                            for px in 0..PATCH_SIZE {
                                let (y, x) = (hp * PATCH_SIZE + py, wp * PATCH_SIZE + px);
                                patch[(ci * PATCH_SIZE + py) * PATCH_SIZE + px] =
                                    src[((d * h0 + y) * w0 + x) * in_ch + ci];
                            }
                        }
                    }
                    for o in 0..c {
                        let row = &weight[o * patch_len..(o + 1) * patch_len];
                        out.push(crate::tensor::dot(&patch, row) + bias[o]);
                    }
                }
            }
            out
        })
        .collect();

    let features = VolumeFeatures::new(Tensor::from_raw(&[d0, gh, gw, c], slices.concat()))?;
    let globals = GlobalTokens::replicate(&w.global_tokens()?, d0)?;
    Ok((features, globals))
}

/// Sequence count and length of one block application.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerStats {
    pub plane: Option<PlaneAxis>,
    pub sequences: usize,
    pub sequence_len: usize,
}

#[derive(Clone, Debug)]
pub struct ForwardOutput {
    pub features: VolumeFeatures,
    pub globals: GlobalTokens,
    pub layers: Vec<LayerStats>,
}

fn final_norm(
    features: &VolumeFeatures,
    globals: &GlobalTokens,
    w: &NetworkWeights,
) -> Result<(VolumeFeatures, GlobalTokens)> {
    let c = w.channels();
    let norm = |t: &Tensor| -> Result<Tensor> {
        let flat = t.reshape([t.numel() / c, c])?;
        layer_norm(&flat, &w.norm_gamma, &w.norm_beta)?.reshape(t.dims().to_vec())
    };
    Ok((
        VolumeFeatures::new(norm(features.tensor())?)?,
        GlobalTokens::new(norm(globals.tensor())?)?,
    ))
}

/// Rotary coordinates of the flattened-volume sequence: `g` unrotated
/// globals, then every patch at its normalized `(d, h, w)`.
pub fn volume_coords(dims: (usize, usize, usize), g: usize) -> RopeCoords {
    let (d, h, w) = dims;
    let n = g + d * h * w;
    let mut coords = Vec::with_capacity(3 * n);
    let mut mask = Vec::with_capacity(n);
    coords.resize(3 * g, 0.0);
    mask.resize(g, false);
    for i in 0..d {
        for j in 0..h {
            for k in 0..w {
                coords.extend([
                    normalized_coord(i, d),
                    normalized_coord(j, h),
                    normalized_coord(k, w),
                ]);
                mask.push(true);
            }
        }
    }
    RopeCoords::new(3, coords, mask).expect("coordinate layout is consistent")
}

fn forward_slice2d(
    features: &VolumeFeatures,
    globals: &GlobalTokens,
    w: &NetworkWeights,
) -> Result<(VolumeFeatures, GlobalTokens, Vec<LayerStats>)> {
    let (d, h, wd) = features.grid();
    let c = features.channels();
    let g = globals.per_slice();
    let m = h * wd;
    let coords = coords_for_plane(PlaneAxis::D, (d, h, wd), g);

    let outputs: Vec<Tensor> = (0..d)
        .into_par_iter()
        .map(|s| {
            let patches = Tensor::from_raw(
                &[m, c],
                features.tensor().data()[s * m * c..(s + 1) * m * c].to_vec(),
            );
            let mut seq = Tensor::concat_rows(&[&globals.slice(s), &patches])?;
            for block in &w.blocks {
                seq = block_forward(&seq, block, &coords)?;
            }
            Ok(seq)
        })
        .collect::<Result<_>>()?;

    let mut patch_out = Vec::with_capacity(d * m * c);
    let mut global_out = Vec::with_capacity(d * g * c);
    for t in &outputs {
        global_out.extend_from_slice(&t.data()[..g * c]);
        patch_out.extend_from_slice(&t.data()[g * c..]);
    }
    let stats = vec![
        LayerStats {
            plane: Some(PlaneAxis::D),
            sequences: d,
            sequence_len: g + m,
        };
        w.depth()
    ];
    Ok((
        VolumeFeatures::new(Tensor::from_raw(&[d, h, wd, c], patch_out))?,
        GlobalTokens::new(Tensor::from_raw(&[d, g, c], global_out))?,
        stats,
    ))
}

fn forward_flat3d(
    features: &VolumeFeatures,
    w: &NetworkWeights,
) -> Result<(VolumeFeatures, GlobalTokens, Vec<LayerStats>)> {
    let head_dim = w.channels() / w.num_heads();
    if !head_dim.is_multiple_of(6) {
        return Err(Error::UnsupportedHeadDim {
            head_dim,
            required: 6,
        });
    }
    let dims = features.grid();
    let c = features.channels();
    let n = dims.0 * dims.1 * dims.2;
    let learned = w.global_tokens()?;
    let g = learned.dims()[0];
    let coords = volume_coords(dims, g);

    let mut seq = Tensor::concat_rows(&[&learned, &features.tensor().reshape([n, c])?])?;
    for block in &w.blocks {
        seq = block_forward(&seq, block, &coords)?;
    }
    let globals = GlobalTokens::new(seq.slice_rows(0, g)?.reshape([1, g, c])?)?;
    let patches = seq.slice_rows(g, g + n)?.reshape([dims.0, dims.1, dims.2, c])?;
    let stats = vec![
        LayerStats {
            plane: None,
            sequences: 1,
            sequence_len: g + n,
        };
        w.depth()
    ];
    Ok((VolumeFeatures::new(patches)?, globals, stats))
}

fn forward_plane_cycle(
    features: VolumeFeatures,
    globals: GlobalTokens,
    w: &NetworkWeights,
    schedule: &Schedule,
    pool: PoolMode,
) -> Result<(VolumeFeatures, GlobalTokens, Vec<LayerStats>)> {
    let mut volume = features;
    let mut globals = globals;
    let mut stats = Vec::with_capacity(w.depth());
    for (block, &axis) in w.blocks.iter().zip(schedule.planes()) {
        let step = plane_cycle_step(&volume, &globals, block, axis, pool)?;
        stats.push(LayerStats {
            plane: Some(axis),
            sequences: step.sequences,
            sequence_len: step.sequence_len,
        });
        volume = step.volume;
        globals = step.globals;
    }
    Ok((volume, globals, stats))
}

/// Patch embedding, every block under `mode`, then the final norm on patch
/// and global tokens. `schedule` is only read by [`LiftMode::PlaneCycle`]
/// but must always have one entry per block.
pub fn forward(
    raw: &Tensor,
    w: &NetworkWeights,
    mode: LiftMode,
    schedule: &Schedule,
) -> Result<ForwardOutput> {
    if schedule.len() != w.depth() {
        return Err(Error::InvalidSchedule(format!(
            "schedule has {} planes for {} blocks",
            schedule.len(),
            w.depth()
        )));
    }
    let (features, globals) = patch_embed_volume(raw, w)?;
    let (features, globals, layers) = match mode {
        LiftMode::Slice2D => forward_slice2d(&features, &globals, w)?,
        LiftMode::Flat3D => forward_flat3d(&features, w)?,
        LiftMode::PlaneCycle(pool) => forward_plane_cycle(features, globals, w, schedule, pool)?,
    };
    let (features, globals) = final_norm(&features, &globals, w)?;
    Ok(ForwardOutput {
        features,
        globals,
        layers,
    })
}

/// Mean CLS token (index 0) over the slices, `[C]`.
pub fn extract_global_summary(g: &GlobalTokens) -> Tensor {
    let c = g.channels();
    let slices = g.slices();
    let per = g.per_slice() * c;
    let data = g.tensor().data();
    let mut sum = data[..c].to_vec();
    for s in 1..slices {
        for (acc, &v) in sum.iter_mut().zip(&data[s * per..s * per + c]) {
            *acc += v;
        }
    }
    let n = slices as f32;
    Tensor::from_raw(&[c], sum.into_iter().map(|v| v / n).collect())
}

/// Read-only forward engine bound to one set of weights and a fixed
/// worker count.
pub struct LiftingEngine {
    weights: Arc<NetworkWeights>,
    pool: rayon::ThreadPool,
    threads: usize,
}

impl LiftingEngine {
    pub fn new(weights: impl Into<Arc<NetworkWeights>>, threads: usize) -> Result<Self> {
        let weights = weights.into();
        weights.validate()?;
        let threads = threads.max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::InvalidArch(format!("thread pool: {e}")))?;
        Ok(LiftingEngine {
            weights,
            pool,
            threads,
        })
    }

    pub fn weights(&self) -> &NetworkWeights {
        &self.weights
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    /// Parameter tensors held by the engine. The lifting itself adds none.
    pub fn registered_tensors(&self) -> Vec<(String, &Tensor)> {
        self.weights.named_tensors()
    }

    pub fn forward(&self, raw: &Tensor, mode: LiftMode, schedule: &Schedule) -> Result<ForwardOutput> {
        self.pool.install(|| forward(raw, &self.weights, mode, schedule))
    }

    /// Forward with the default four-operator cycle.
    pub fn forward_default(&self, raw: &Tensor, mode: LiftMode) -> Result<ForwardOutput> {
        let schedule = build_cycle_schedule(self.weights.depth())?;
        self.forward(raw, mode, &schedule)
    }
}
