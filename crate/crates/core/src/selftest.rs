//! Invariant checks run by `planecycle selftest` on synthetic weights.

use std::io::Write;

use crate::error::Result;
use crate::lifting::{build_cycle_schedule, forward, LiftMode, Schedule};
use crate::metrics::complexity::attention_cost;
use crate::plane::{reshape_to_plane, restore_from_plane, PlaneAxis, PoolMode, VolumeFeatures};
use crate::rng::SplitMix64;
use crate::tensor::{adaptive_avg_pool_1d, Tensor};
use crate::weights::{synth_weights, Arch};

pub type PoolFn = fn(&Tensor, usize) -> Result<Tensor>;

/// Replaceable implementations, so a harness can inject a faulty kernel
/// and confirm the checks catch it.
#[derive(Clone, Copy)]
pub struct Hooks {
    pub pool: PoolFn,
}

impl Default for Hooks {
    fn default() -> Self {
        Hooks {
            pool: adaptive_avg_pool_1d,
        }
    }
}

type Check = fn(&Hooks) -> std::result::Result<(), String>;

pub const CHECKS: [(&str, Check); 7] = [
    ("reshape_round_trip", check_round_trip),
    ("pool_bins", check_pool_bins),
    ("pcm_replication", check_pcm_replication),
    ("two_d_equivalence", check_two_d_equivalence),
    ("slice_independence", check_slice_independence),
    ("receptive_field", check_receptive_field),
    ("complexity_identities", check_complexity),
];

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn random(dims: &[usize], rng: &mut SplitMix64) -> Tensor {
    Tensor::from_fn(dims.to_vec(), |_| rng.next_normal() as f32).expect("finite normals")
}

fn check_round_trip(_: &Hooks) -> std::result::Result<(), String> {
    let mut rng = SplitMix64::new(1);
    for _ in 0..20 {
        let dims: Vec<usize> = (0..3).map(|_| 1 + (rng.next_u64() % 5) as usize).collect();
        let v = VolumeFeatures::new(random(&[dims[0], dims[1], dims[2], 3], &mut rng)).map_err(err)?;
        for axis in PlaneAxis::ALL {
            let t = reshape_to_plane(&v, axis).map_err(err)?;
            let back = restore_from_plane(&t, axis, v.grid()).map_err(err)?;
            if back != v {
                return Err(format!("{axis} round trip differs for {dims:?}"));
            }
        }
    }
    Ok(())
}

fn check_pool_bins(hooks: &Hooks) -> std::result::Result<(), String> {
    for len in 1..=16 {
        let input = Tensor::from_fn([len, 2], |i| (i as f32 * 0.731).sin()).map_err(err)?;
        for out_len in 1..=16 {
            let got = (hooks.pool)(&input, out_len).map_err(err)?;
            for i in 0..out_len {
                let start = (i * len) / out_len;
                let end = ((i + 1) * len).div_ceil(out_len);
                for c in 0..2 {
                    let mut acc = input.at(&[start, c]);
                    for r in start + 1..end {
                        acc += input.at(&[r, c]);
                    }
                    let want = acc / (end - start) as f32;
                    if got.dims() != [out_len, 2] || got.at(&[i, c]).to_bits() != want.to_bits() {
                        return Err(format!("bin {i} of {len}->{out_len} differs"));
                    }
                }
            }
        }
    }
    Ok(())
}

fn check_pcm_replication(hooks: &Hooks) -> std::result::Result<(), String> {
    let input = Tensor::from_fn([5, 3], |i| i as f32).map_err(err)?;
    let mean = (hooks.pool)(&input, 1).map_err(err)?;
    let replicated = (hooks.pool)(&mean, 4).map_err(err)?;
    for r in 0..4 {
        if replicated.row(r) != mean.row(0) {
            return Err(format!("row {r} is not the replicated mean"));
        }
    }
    if mean.row(0) != [6.0, 7.0, 8.0] {
        return Err(format!("mean {:?}", mean.row(0)));
    }
    Ok(())
}

fn small_arch(depth: usize) -> Arch {
    Arch {
        depth,
        channels: 24,
        heads: 2,
        ..Arch::default()
    }
}

fn check_two_d_equivalence(_: &Hooks) -> std::result::Result<(), String> {
    let w = synth_weights(3, &small_arch(4)).map_err(err)?;
    let raw = random(&[3, 32, 48, 1], &mut SplitMix64::new(4));
    let hw = Schedule::uniform(PlaneAxis::D, 4).map_err(err)?;
    let a = forward(&raw, &w, LiftMode::Slice2D, &hw).map_err(err)?;
    let b = forward(&raw, &w, LiftMode::PlaneCycle(PoolMode::Grouped), &hw).map_err(err)?;
    if a.features != b.features || a.globals != b.globals {
        return Err("all-HW grouped plane cycle differs from slice-wise 2D".into());
    }
    Ok(())
}

fn perturb_patch(raw: &Tensor, d: usize, hp: usize, wp: usize) -> Tensor {
    let [_, h0, w0, c] = *raw.dims() else { unreachable!() };
    let mut data = raw.to_vec();
    for y in hp * 16..(hp + 1) * 16 {
        for x in wp * 16..(wp + 1) * 16 {
            for ch in 0..c {
                data[((d * h0 + y) * w0 + x) * c + ch] += 1.0;
            }
        }
    }
    Tensor::new(raw.dims().to_vec(), data).expect("finite")
}

fn check_slice_independence(_: &Hooks) -> std::result::Result<(), String> {
    let w = synth_weights(5, &small_arch(2)).map_err(err)?;
    let raw = random(&[3, 32, 32, 1], &mut SplitMix64::new(6));
    let schedule = build_cycle_schedule(2).map_err(err)?;
    let base = forward(&raw, &w, LiftMode::Slice2D, &schedule).map_err(err)?;
    let moved = forward(&perturb_patch(&raw, 1, 0, 1), &w, LiftMode::Slice2D, &schedule).map_err(err)?;
    let per_slice = 2 * 2 * 24;
    let (a, b) = (base.features.tensor().data(), moved.features.tensor().data());
    for d in [0, 2] {
        if a[d * per_slice..(d + 1) * per_slice] != b[d * per_slice..(d + 1) * per_slice] {
            return Err(format!("slice {d} changed"));
        }
    }
    Ok(())
}

fn check_receptive_field(_: &Hooks) -> std::result::Result<(), String> {
    let w = synth_weights(7, &small_arch(2)).map_err(err)?;
    let raw = random(&[4, 48, 48, 1], &mut SplitMix64::new(8));
    let schedule = Schedule::new(vec![PlaneAxis::D, PlaneAxis::H]).map_err(err)?;
    let mode = LiftMode::PlaneCycle(PoolMode::Grouped);
    let base = forward(&raw, &w, mode, &schedule).map_err(err)?;
    let moved = forward(&perturb_patch(&raw, 1, 1, 2), &w, mode, &schedule).map_err(err)?;
    let (a, b) = (base.features.tensor().data(), moved.features.tensor().data());
    let changed = a.iter().zip(b).filter(|(x, y)| ((**x as f64) - (**y as f64)).abs() > 1e-9).count();
    let fraction = changed as f64 / a.len() as f64;
    if fraction < 0.99 {
        return Err(format!("only {:.2}% of features changed", 100.0 * fraction));
    }
    Ok(())
}

fn check_complexity(_: &Hooks) -> std::result::Result<(), String> {
    for n in [2usize, 4, 8, 16] {
        let s = build_cycle_schedule(4).map_err(err)?;
        let flat = attention_cost(LiftMode::Flat3D, (n, n, n), 0, 4, &s).map_err(err)?;
        let pc = attention_cost(LiftMode::PlaneCycle(PoolMode::Grouped), (n, n, n), 0, 4, &s).map_err(err)?;
        for (f, p) in flat.layers.iter().zip(&pc.layers) {
            if f.attention_pairs != n as u128 * p.attention_pairs {
                return Err(format!("n={n}: {} vs {}", f.attention_pairs, p.attention_pairs));
            }
        }
        let slice = attention_cost(LiftMode::Slice2D, (n, n, n), 5, 1, &s).map_err(err)?;
        let want = n as u128 * (5 + (n * n) as u128).pow(2);
        if slice.layers[0].attention_pairs != want {
            return Err(format!("slice-wise n={n}"));
        }
    }
    Ok(())
}

/// Runs every check, writing one `PASS`/`FAIL` line each. Returns whether
/// all passed.
pub fn run(hooks: &Hooks, out: &mut dyn Write) -> std::io::Result<bool> {
    let mut all = true;
    for (name, check) in CHECKS {
        match check(hooks) {
            Ok(()) => writeln!(out, "PASS {name}")?,
            Err(msg) => {
                all = false;
                writeln!(out, "FAIL {name}: {msg}")?;
            }
        }
    }
    Ok(all)
}
