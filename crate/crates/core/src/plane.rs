//! The plane-cycling operator.
//!
//! One step views the `D×H×W×C` feature volume as `P` slices along a chosen
//! axis, pools the incoming global tokens to `P` rows, runs the frozen 2D
//! block once per slice on `[globals, patches]`, and writes the patches
//! back into the volume layout.
//!
//! Within a slice, tokens are flattened in the canonical `(D, H, W)` order
//! with the slicing axis removed:
//!
//! | axis | plane | slice index | token order |
//! |------|-------|-------------|-------------|
//! | `D`  | HW    | `d`         | `(h, w)`    |
//! | `H`  | DW    | `h`         | `(d, w)`    |
//! | `W`  | DH    | `w`         | `(d, h)`    |

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::block::{block_forward, BlockWeights, RopeCoords};
use crate::error::{Error, Result};
use crate::tensor::{adaptive_avg_pool_1d, Tensor};

/// Slicing axis. `D` slices give HW planes, `H` slices DW planes, `W`
/// slices DH planes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PlaneAxis {
    D,
    H,
    W,
}

impl PlaneAxis {
    pub const ALL: [PlaneAxis; 3] = [PlaneAxis::D, PlaneAxis::H, PlaneAxis::W];

    pub fn index(self) -> usize {
        match self {
            PlaneAxis::D => 0,
            PlaneAxis::H => 1,
            PlaneAxis::W => 2,
        }
    }

    pub fn plane_name(self) -> &'static str {
        match self {
            PlaneAxis::D => "hw",
            PlaneAxis::H => "dw",
            PlaneAxis::W => "dh",
        }
    }

    /// Volume axis order that puts this slicing axis first, the others in
    /// canonical order, channels last.
    pub fn volume_permutation(self) -> [usize; 4] {
        match self {
            PlaneAxis::D => [0, 1, 2, 3],
            PlaneAxis::H => [1, 0, 2, 3],
            PlaneAxis::W => [2, 0, 1, 3],
        }
    }

    fn inverse_permutation(self) -> [usize; 4] {
        let fwd = self.volume_permutation();
        let mut inv = [0; 4];
        for (k, &a) in fwd.iter().enumerate() {
            inv[a] = k;
        }
        inv
    }

    /// `(slices, row extent, column extent)` of this plane view.
    pub fn plane_extents(self, dims: (usize, usize, usize)) -> (usize, usize, usize) {
        let (d, h, w) = dims;
        match self {
            PlaneAxis::D => (d, h, w),
            PlaneAxis::H => (h, d, w),
            PlaneAxis::W => (w, d, h),
        }
    }
}

impl fmt::Display for PlaneAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.plane_name())
    }
}

impl FromStr for PlaneAxis {
    type Err = Error;

    /// Accepts plane names (`hw`, `dw`, `dh`) or axis letters (`d`, `h`, `w`).
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hw" | "d" => Ok(PlaneAxis::D),
            "dw" | "h" => Ok(PlaneAxis::H),
            "dh" | "w" => Ok(PlaneAxis::W),
            other => Err(Error::InvalidSchedule(format!("unknown plane {other:?}"))),
        }
    }
}

/// Global-token remapping across a plane switch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PoolMode {
    /// Mean over all incoming slices, replicated to every outgoing slice.
    Mean,
    /// Adaptive average pooling from the incoming to the outgoing slice count.
    Grouped,
}

/// Patch-token volume `[D, H, W, C]`.
#[derive(Clone, Debug, PartialEq)]
pub struct VolumeFeatures(Tensor);

impl VolumeFeatures {
    pub fn new(x: Tensor) -> Result<Self> {
        if x.rank() != 4 {
            return Err(Error::ShapeMismatch(format!(
                "volume features must be [D, H, W, C], got {:?}",
                x.dims()
            )));
        }
        Ok(VolumeFeatures(x))
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    pub fn grid(&self) -> (usize, usize, usize) {
        let d = self.0.dims();
        (d[0], d[1], d[2])
    }

    pub fn channels(&self) -> usize {
        self.0.dims()[3]
    }

    /// Feature vector of voxel `(d, h, w)`.
    pub fn voxel(&self, d: usize, h: usize, w: usize) -> &[f32] {
        let (_, hh, ww) = self.grid();
        let c = self.channels();
        let start = ((d * hh + h) * ww + w) * c;
        &self.0.data()[start..start + c]
    }

    /// Reorders axes so that `axis` comes first (see [`PlaneAxis::volume_permutation`]).
    pub fn permuted_for(&self, axis: PlaneAxis) -> Result<VolumeFeatures> {
        Ok(VolumeFeatures(self.0.permute(&axis.volume_permutation())?))
    }

    /// Inverse of [`VolumeFeatures::permuted_for`].
    pub fn unpermuted_from(&self, axis: PlaneAxis) -> Result<VolumeFeatures> {
        Ok(VolumeFeatures(self.0.permute(&axis.inverse_permutation())?))
    }
}

/// Global tokens `[P', g, C]`: `g` tokens for each of the `P'` slices of
/// the previous plane.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalTokens(Tensor);

impl GlobalTokens {
    pub fn new(t: Tensor) -> Result<Self> {
        if t.rank() != 3 {
            return Err(Error::ShapeMismatch(format!(
                "global tokens must be [P', g, C], got {:?}",
                t.dims()
            )));
        }
        Ok(GlobalTokens(t))
    }

    /// The same `[g, C]` set for each of `slices` slices.
    pub fn replicate(tokens: &Tensor, slices: usize) -> Result<Self> {
        let (g, c) = tokens.as_matrix("global tokens")?;
        let mut data = Vec::with_capacity(slices * g * c);
        for _ in 0..slices {
            data.extend_from_slice(tokens.data());
        }
        GlobalTokens::new(Tensor::new([slices, g, c], data)?)
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn slices(&self) -> usize {
        self.0.dims()[0]
    }

    pub fn per_slice(&self) -> usize {
        self.0.dims()[1]
    }

    pub fn channels(&self) -> usize {
        self.0.dims()[2]
    }

    /// The `[g, C]` tokens of slice `s`.
    pub fn slice(&self, s: usize) -> Tensor {
        let n = self.per_slice() * self.channels();
        Tensor::from_raw(
            &[self.per_slice(), self.channels()],
            self.0.data()[s * n..(s + 1) * n].to_vec(),
        )
    }
}

/// Views the volume as `[P, DHW/P, C]` slices along `axis`.
pub fn reshape_to_plane(v: &VolumeFeatures, axis: PlaneAxis) -> Result<Tensor> {
    let (d, h, w) = v.grid();
    let (p, rows, cols) = axis.plane_extents((d, h, w));
    let permuted = match axis {
        PlaneAxis::D => v.tensor().clone(),
        _ => v.tensor().permute(&axis.volume_permutation())?,
    };
    permuted.reshape([p, rows * cols, v.channels()])
}

/// Inverse of [`reshape_to_plane`].
pub fn restore_from_plane(
    t: &Tensor,
    axis: PlaneAxis,
    dims: (usize, usize, usize),
) -> Result<VolumeFeatures> {
    let (p, rows, cols) = axis.plane_extents(dims);
    let [tp, tm, c] = *t.dims() else {
        return Err(Error::ShapeMismatch(format!(
            "plane tensor must be [P, M, C], got {:?}",
            t.dims()
        )));
    };
    if tp != p || tm != rows * cols {
        return Err(Error::ShapeMismatch(format!(
            "plane tensor {:?} does not match {} slices of {dims:?}",
            t.dims(),
            axis.plane_name()
        )));
    }
    let sliced = t.reshape([p, rows, cols, c])?;
    let volume = match axis {
        PlaneAxis::D => sliced,
        _ => sliced.permute(&axis.inverse_permutation())?,
    };
    VolumeFeatures::new(volume)
}

/// Remaps `[P', g, C]` global tokens to `[target, g, C]`. Token positions
/// are pooled independently and never mix.
pub fn pool_global_tokens(g_in: &GlobalTokens, target: usize, mode: PoolMode) -> Result<Tensor> {
    if target == 0 {
        return Err(Error::InvalidLength("target slice count must be >= 1".into()));
    }
    let (src, g, c) = (g_in.slices(), g_in.per_slice(), g_in.channels());
    let data = g_in.tensor().data();
    let mut out = vec![0.0f32; target * g * c];
    for j in 0..g {
        let mut column = Vec::with_capacity(src * c);
        for s in 0..src {
            column.extend_from_slice(&data[(s * g + j) * c..(s * g + j + 1) * c]);
        }
        let column = Tensor::from_raw(&[src, c], column);
        let pooled = match mode {
            PoolMode::Grouped => adaptive_avg_pool_1d(&column, target)?,
            PoolMode::Mean => {
                let mean = adaptive_avg_pool_1d(&column, 1)?;
                adaptive_avg_pool_1d(&mean, target)?
            }
        };
        for s in 0..target {
            out[(s * g + j) * c..(s * g + j + 1) * c].copy_from_slice(pooled.row(s));
        }
    }
    Ok(Tensor::from_raw(&[target, g, c], out))
}

/// Index `i` of an axis with `n` positions mapped onto `[-1, 1]`.
pub fn normalized_coord(i: usize, n: usize) -> f32 {
    if n <= 1 {
        0.0
    } else {
        (-1.0 + 2.0 * i as f64 / (n - 1) as f64) as f32
    }
}

/// Rotary coordinates of one slice sequence on this plane: `g` unrotated
/// global tokens, then the in-plane `(row, column)` positions in flattening
/// order.
pub fn coords_for_plane(axis: PlaneAxis, dims: (usize, usize, usize), g: usize) -> RopeCoords {
    let (_, rows, cols) = axis.plane_extents(dims);
    let n = g + rows * cols;
    let mut coords = Vec::with_capacity(2 * n);
    let mut mask = Vec::with_capacity(n);
    for _ in 0..g {
        coords.extend([0.0, 0.0]);
        mask.push(false);
    }
    for r in 0..rows {
        for c in 0..cols {
            coords.push(normalized_coord(r, rows));
            coords.push(normalized_coord(c, cols));
            mask.push(true);
        }
    }
    RopeCoords::new(2, coords, mask).expect("coordinate layout is consistent")
}

/// Result of one operator application.
#[derive(Clone, Debug)]
pub struct StepOutput {
    pub volume: VolumeFeatures,
    pub globals: GlobalTokens,
    /// Number of block applications (equals the slice count `P`).
    pub sequences: usize,
    /// Length of every sequence, `g + DHW/P`.
    pub sequence_len: usize,
}

/// One plane-cycle step: reshape to `axis`, pool globals to `P` rows, run
/// `block` on each `[G_p, X_p]`, split globals back off, restore the volume.
pub fn plane_cycle_step(
    v: &VolumeFeatures,
    g_in: &GlobalTokens,
    block: &BlockWeights,
    axis: PlaneAxis,
    mode: PoolMode,
) -> Result<StepOutput> {
    let c = v.channels();
    if block.channels() != c || g_in.channels() != c {
        return Err(Error::ShapeMismatch(format!(
            "volume has {c} channels, globals {}, block {}",
            g_in.channels(),
            block.channels()
        )));
    }
    let dims = v.grid();
    let planes = reshape_to_plane(v, axis)?;
    let (p, m) = (planes.dims()[0], planes.dims()[1]);
    let g = g_in.per_slice();
    let pooled = GlobalTokens::new(pool_global_tokens(g_in, p, mode)?)?;
    let coords = coords_for_plane(axis, dims, g);

    let outputs: Vec<Tensor> = (0..p)
        .into_par_iter()
        .map(|s| {
            let patches = Tensor::from_raw(&[m, c], planes.data()[s * m * c..(s + 1) * m * c].to_vec());
            let seq = Tensor::concat_rows(&[&pooled.slice(s), &patches])?;
            block_forward(&seq, block, &coords)
        })
        .collect::<Result<_>>()?;

    let mut patch_out = Vec::with_capacity(p * m * c);
    let mut global_out = Vec::with_capacity(p * g * c);
    for t in &outputs {
        global_out.extend_from_slice(&t.data()[..g * c]);
        patch_out.extend_from_slice(&t.data()[g * c..]);
    }
    let volume = restore_from_plane(&Tensor::from_raw(&[p, m, c], patch_out), axis, dims)?;
    Ok(StepOutput {
        volume,
        globals: GlobalTokens(Tensor::from_raw(&[p, g, c], global_out)),
        sequences: p,
        sequence_len: g + m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_block, random_tensor};

    fn volume(dims: [usize; 4], seed: u64) -> VolumeFeatures {
        VolumeFeatures::new(random_tensor(&dims, seed, 1.0)).unwrap()
    }

    fn slice_values(t: &Tensor, s: usize) -> Vec<f32> {
        let n = t.dims()[1] * t.dims()[2];
        t.data()[s * n..(s + 1) * n].to_vec()
    }

    #[test]
    fn plane_views_follow_canonical_order() {
        let v = VolumeFeatures::new(Tensor::from_fn([2, 2, 2, 1], |i| i as f32).unwrap()).unwrap();
        let hw = reshape_to_plane(&v, PlaneAxis::D).unwrap();
        assert_eq!(slice_values(&hw, 0), vec![0.0, 1.0, 2.0, 3.0]);
        let dw = reshape_to_plane(&v, PlaneAxis::H).unwrap();
        assert_eq!(slice_values(&dw, 0), vec![0.0, 1.0, 4.0, 5.0]);
        assert_eq!(slice_values(&dw, 1), vec![2.0, 3.0, 6.0, 7.0]);
        let dh = reshape_to_plane(&v, PlaneAxis::W).unwrap();
        assert_eq!(slice_values(&dh, 0), vec![0.0, 2.0, 4.0, 6.0]);
        for axis in PlaneAxis::ALL {
            let t = reshape_to_plane(&v, axis).unwrap();
            assert_eq!(restore_from_plane(&t, axis, (2, 2, 2)).unwrap(), v);
        }
    }

    #[test]
    fn restore_rejects_mismatched_dims() {
        let v = volume([2, 3, 4, 2], 1);
        let t = reshape_to_plane(&v, PlaneAxis::H).unwrap();
        assert!(matches!(
            restore_from_plane(&t, PlaneAxis::H, (2, 4, 3)),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(restore_from_plane(&t, PlaneAxis::D, (2, 3, 4)).is_err());
    }

    #[test]
    fn grouped_pool_identity_and_downsample() {
        let g = GlobalTokens::new(random_tensor(&[4, 5, 3], 2, 1.0)).unwrap();
        assert_eq!(&pool_global_tokens(&g, 4, PoolMode::Grouped).unwrap(), g.tensor());

        let (a, b, c) = (1.0f32, 2.5f32, -4.0f32);
        let g = GlobalTokens::new(Tensor::new([3, 2, 1], vec![a, 10.0, b, 20.0, c, 30.0]).unwrap()).unwrap();
        let pooled = pool_global_tokens(&g, 2, PoolMode::Grouped).unwrap();
        assert_eq!(pooled.data(), &[(a + b) / 2.0, 15.0, (b + c) / 2.0, 25.0]);
    }

    #[test]
    fn mean_pool_replicates_the_average() {
        let row = random_tensor(&[1, 5, 3], 3, 1.0);
        let mut data = Vec::new();
        for _ in 0..4 {
            data.extend_from_slice(row.data());
        }
        let g = GlobalTokens::new(Tensor::new([4, 5, 3], data).unwrap()).unwrap();
        let pooled = pool_global_tokens(&g, 6, PoolMode::Mean).unwrap();
        for s in 0..6 {
            for (x, y) in slice_values(&pooled, s).iter().zip(row.data()) {
                assert!((x - y).abs() < 1e-6);
            }
        }

        let g = GlobalTokens::new(Tensor::new([2, 1, 1], vec![1.0, 3.0]).unwrap()).unwrap();
        assert_eq!(pool_global_tokens(&g, 2, PoolMode::Mean).unwrap().data(), &[2.0, 2.0]);
        assert_eq!(pool_global_tokens(&g, 3, PoolMode::Grouped).unwrap().data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn hw_coords_hit_the_corners() {
        let coords = coords_for_plane(PlaneAxis::D, (3, 2, 2), 5);
        assert_eq!(coords.len(), 9);
        assert!(coords.mask()[..5].iter().all(|m| !m));
        let patches: Vec<&[f32]> = (5..9).map(|t| coords.coord(t)).collect();
        assert_eq!(patches, vec![&[-1.0, -1.0][..], &[-1.0, 1.0], &[1.0, -1.0], &[1.0, 1.0]]);
        for t in 0..5 {
            assert_eq!(coords.coord(t), &[0.0, 0.0]);
        }
    }

    #[test]
    fn degenerate_axis_maps_to_zero() {
        let coords = coords_for_plane(PlaneAxis::H, (1, 4, 3), 0);
        assert_eq!(coords.len(), 3);
        for t in 0..3 {
            assert_eq!(coords.coord(t)[0], 0.0);
        }
        assert_eq!(normalized_coord(0, 1), 0.0);
        assert_eq!(normalized_coord(2, 5), 0.0);
    }

    #[test]
    fn plane_coords_match_hw_coords_of_permuted_dims() {
        let (d, h, w) = (3, 4, 5);
        assert_eq!(
            coords_for_plane(PlaneAxis::H, (d, h, w), 5),
            coords_for_plane(PlaneAxis::D, (h, d, w), 5)
        );
        assert_eq!(
            coords_for_plane(PlaneAxis::W, (d, h, w), 5),
            coords_for_plane(PlaneAxis::D, (w, d, h), 5)
        );
    }

    #[test]
    fn identity_block_step_keeps_volume() {
        let mut block = random_block(4, 16, 2, 0.1);
        block.ls1_gamma = Tensor::zeros([16]).unwrap();
        block.ls2_gamma = Tensor::zeros([16]).unwrap();
        let v = volume([3, 2, 4, 16], 5);
        let g = GlobalTokens::new(random_tensor(&[3, 5, 16], 6, 1.0)).unwrap();
        for axis in PlaneAxis::ALL {
            for mode in [PoolMode::Mean, PoolMode::Grouped] {
                let out = plane_cycle_step(&v, &g, &block, axis, mode).unwrap();
                assert_eq!(out.volume, v);
                let p = axis.plane_extents(v.grid()).0;
                assert_eq!(out.globals.tensor(), &pool_global_tokens(&g, p, mode).unwrap());
            }
        }
    }

    #[test]
    fn hw_step_equals_per_slice_loop() {
        let block = random_block(7, 16, 2, 0.2);
        let v = volume([3, 2, 3, 16], 8);
        let g = GlobalTokens::new(random_tensor(&[3, 5, 16], 9, 1.0)).unwrap();
        let out = plane_cycle_step(&v, &g, &block, PlaneAxis::D, PoolMode::Grouped).unwrap();
        let coords = coords_for_plane(PlaneAxis::D, (3, 2, 3), 5);
        for d in 0..3 {
            let patch_data: Vec<f32> = (0..2)
                .flat_map(|h| (0..3).map(move |w| (h, w)))
                .flat_map(|(h, w)| v.voxel(d, h, w).to_vec())
                .collect();
            let patches = Tensor::new([6, 16], patch_data).unwrap();
            let seq = Tensor::concat_rows(&[&g.slice(d), &patches]).unwrap();
            let want = block_forward(&seq, &block, &coords).unwrap();
            assert_eq!(out.globals.slice(d).data(), &want.data()[..5 * 16]);
            for h in 0..2 {
                for w in 0..3 {
                    let t = 5 + h * 3 + w;
                    assert_eq!(out.volume.voxel(d, h, w), want.row(t));
                }
            }
        }
    }

    #[test]
    fn step_shapes_and_token_budget() {
        let block = random_block(10, 16, 4, 0.1);
        let v = volume([2, 3, 4, 16], 11);
        let g = GlobalTokens::new(random_tensor(&[2, 5, 16], 12, 1.0)).unwrap();
        for axis in PlaneAxis::ALL {
            let out = plane_cycle_step(&v, &g, &block, axis, PoolMode::Grouped).unwrap();
            let p = axis.plane_extents((2, 3, 4)).0;
            assert_eq!(out.volume.tensor().dims(), &[2, 3, 4, 16]);
            assert_eq!(out.globals.tensor().dims(), &[p, 5, 16]);
            assert_eq!(out.sequences, p);
            assert_eq!(out.sequence_len, 5 + 24 / p);
        }
    }

    #[test]
    fn step_rejects_channel_mismatch() {
        let block = random_block(13, 16, 2, 0.1);
        let v = volume([2, 2, 2, 8], 14);
        let g = GlobalTokens::new(random_tensor(&[2, 5, 8], 15, 1.0)).unwrap();
        assert!(matches!(
            plane_cycle_step(&v, &g, &block, PlaneAxis::D, PoolMode::Mean),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn plane_steps_agree_with_permuted_hw_steps() {
        let block = random_block(16, 16, 2, 0.3);
        let v = volume([2, 3, 4, 16], 17);
        let g = GlobalTokens::new(random_tensor(&[2, 5, 16], 18, 1.0)).unwrap();
        for axis in [PlaneAxis::H, PlaneAxis::W] {
            let direct = plane_cycle_step(&v, &g, &block, axis, PoolMode::Grouped).unwrap();
            let permuted = v.permuted_for(axis).unwrap();
            let via_hw = plane_cycle_step(&permuted, &g, &block, PlaneAxis::D, PoolMode::Grouped).unwrap();
            assert_eq!(via_hw.volume.unpermuted_from(axis).unwrap(), direct.volume);
            assert_eq!(via_hw.globals, direct.globals);
        }
    }

    #[test]
    fn plane_names_parse() {
        assert_eq!("HW".parse::<PlaneAxis>().unwrap(), PlaneAxis::D);
        assert_eq!("dw".parse::<PlaneAxis>().unwrap(), PlaneAxis::H);
        assert_eq!(" dh".parse::<PlaneAxis>().unwrap(), PlaneAxis::W);
        assert!("xy".parse::<PlaneAxis>().is_err());
    }
}
