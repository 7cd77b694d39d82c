//! Wall-clock forward timing per lifting mode and token grid.

use std::fmt::Write;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::lifting::{build_cycle_schedule, LiftMode, LiftingEngine, GLOBAL_TOKENS, PATCH_SIZE};
use crate::metrics::complexity::attention_cost;
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub mode: LiftMode,
    pub dims: (usize, usize, usize),
    pub depth: usize,
    /// Total attention pairs over all layers.
    pub attn_pairs: u128,
    pub median_ms: f64,
}

pub const CSV_HEADER: &str = "mode,D,H,W,depth,attn_pairs,median_ms";

pub fn rows_to_csv(rows: &[BenchRow]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for r in rows {
        let (d, h, w) = r.dims;
        writeln!(
            out,
            "{},{d},{h},{w},{},{},{:.3}",
            r.mode, r.depth, r.attn_pairs, r.median_ms
        )
        .expect("writing to a String");
    }
    out
}

/// Deterministic raw volume whose patch grid is `dims`.
pub fn bench_volume(dims: (usize, usize, usize), in_channels: usize, seed: u64) -> Result<Tensor> {
    let (d, h, w) = dims;
    let mut rng = SplitMix64::new(seed);
    Tensor::from_fn([d, h * PATCH_SIZE, w * PATCH_SIZE, in_channels], |_| {
        rng.next_f64() as f32
    })
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Times `engine.forward` for every `(dims, mode)` pair: one untimed
/// warm-up run, then the median of `repeats` timed runs. The pair column
/// counts `globals` tokens per sequence (the engine always runs with 5).
pub fn benchmark_forward(
    engine: &LiftingEngine,
    dims: &[(usize, usize, usize)],
    modes: &[LiftMode],
    repeats: usize,
    globals: Option<usize>,
) -> Result<Vec<BenchRow>> {
    if repeats < 3 {
        return Err(Error::InvalidLength(format!("{repeats} repeats, need at least 3")));
    }
    let depth = engine.weights().depth();
    let schedule = build_cycle_schedule(depth)?;
    let g = globals.unwrap_or(GLOBAL_TOKENS);
    let mut rows = Vec::with_capacity(dims.len() * modes.len());
    for &grid in dims {
        let raw = bench_volume(grid, engine.weights().in_channels(), 0)?;
        for &mode in modes {
            engine.forward(&raw, mode, &schedule)?;
            let mut times = Vec::with_capacity(repeats);
            for _ in 0..repeats {
                let start = Instant::now();
                engine.forward(&raw, mode, &schedule)?;
                times.push(start.elapsed().as_secs_f64() * 1e3);
            }
            let report = attention_cost(mode, grid, g, depth, &schedule)?;
            rows.push(BenchRow {
                mode,
                dims: grid,
                depth,
                attn_pairs: report.total_pairs(),
                median_ms: median(&mut times),
            });
        }
    }
    Ok(rows)
}
