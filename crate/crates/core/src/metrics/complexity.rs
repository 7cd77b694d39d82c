//! Exact attention-pair counts per lifting mode.
//!
//! A layer that runs `n` sequences of length `L` costs `n · L²` query–key
//! pairs. Counts are exact integers.

use std::fmt::Write;

use crate::error::{Error, Result};
use crate::lifting::{LiftMode, Schedule};
use crate::plane::PlaneAxis;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerCost {
    pub layer: usize,
    pub plane: Option<PlaneAxis>,
    pub sequence_count: u64,
    pub sequence_length: u64,
    pub attention_pairs: u128,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComplexityReport {
    pub mode: LiftMode,
    pub dims: (usize, usize, usize),
    pub globals: usize,
    pub layers: Vec<LayerCost>,
}

impl ComplexityReport {
    pub fn total_pairs(&self) -> u128 {
        self.layers.iter().map(|l| l.attention_pairs).sum()
    }

    pub fn total_tokens(&self) -> u128 {
        self.layers
            .iter()
            .map(|l| l.sequence_count as u128 * l.sequence_length as u128)
            .sum()
    }

    pub const CSV_HEADER: &'static str =
        "mode,D,H,W,g,layer,plane,sequence_count,sequence_length,attention_pairs";

    /// One CSV row per layer, no header.
    pub fn csv_rows(&self) -> String {
        let (d, h, w) = self.dims;
        let mut out = String::new();
        for l in &self.layers {
            let plane = l.plane.map_or("all", PlaneAxis::plane_name);
            writeln!(
                out,
                "{},{d},{h},{w},{},{},{plane},{},{},{}",
                self.mode, self.globals, l.layer, l.sequence_count, l.sequence_length, l.attention_pairs
            )
            .expect("writing to a String");
        }
        out
    }
}

/// Reports with the documented header row.
pub fn reports_to_csv(reports: &[ComplexityReport]) -> String {
    let mut out = format!("{}\n", ComplexityReport::CSV_HEADER);
    for r in reports {
        out.push_str(&r.csv_rows());
    }
    out
}

/// Per-layer costs: Slice2D runs `D` sequences of `g + HW`; Flat3D one of
/// `g + DHW`; PlaneCycle, on plane `P`, `P` sequences of `g + DHW/P`.
pub fn attention_cost(
    mode: LiftMode,
    dims: (usize, usize, usize),
    globals: usize,
    depth: usize,
    schedule: &Schedule,
) -> Result<ComplexityReport> {
    let (d, h, w) = dims;
    if d == 0 || h == 0 || w == 0 {
        return Err(Error::InvalidLength(format!("token grid {dims:?}")));
    }
    if matches!(mode, LiftMode::PlaneCycle(_)) && schedule.len() != depth {
        return Err(Error::InvalidSchedule(format!(
            "schedule has {} planes for depth {depth}",
            schedule.len()
        )));
    }
    let volume = (d * h * w) as u64;
    let g = globals as u64;
    let layers = (0..depth)
        .map(|layer| {
            let (plane, count) = match mode {
                LiftMode::Slice2D => (Some(PlaneAxis::D), d as u64),
                LiftMode::Flat3D => (None, 1),
                LiftMode::PlaneCycle(_) => {
                    let axis = schedule.planes()[layer];
                    (Some(axis), axis.plane_extents(dims).0 as u64)
                }
            };
            let length = g + volume / count;
            LayerCost {
                layer,
                plane,
                sequence_count: count,
                sequence_length: length,
                attention_pairs: count as u128 * (length as u128).pow(2),
            }
        })
        .collect();
    Ok(ComplexityReport {
        mode,
        dims,
        globals,
        layers,
    })
}
