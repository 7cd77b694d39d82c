//! Acceptance criteria 1–12. Runs without the test harness and prints one
//! PASS/FAIL line per criterion; exits nonzero if any fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use planecycle::archive::{encode_archive, parse_archive, Archive};
use planecycle::block::BlockWeights;
use planecycle::lifting::{GLOBAL_TOKENS, PATCH_SIZE};
use planecycle::metrics::bench::{bench_volume, median};
use planecycle::metrics::complexity::attention_cost;
use planecycle::metrics::featdice::{feat_dice, LesionMask};
use planecycle::metrics::pca::{covariance, pca_project};
use planecycle::rng::SplitMix64;
use planecycle::weights::{synth_weights, weights_checksum, Arch};
use planecycle::{
    adaptive_avg_pool_1d, build_cycle_schedule, forward, plane_cycle_step, pool_global_tokens, reshape_to_plane,
    restore_from_plane, GlobalTokens, LiftMode, LiftingEngine, PlaneAxis, PoolMode, Schedule, Tensor, VolumeFeatures,
};

type Outcome = Result<String, String>;

fn ok(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn e(err: planecycle::Error) -> String {
    format!("{}: {err}", err.code())
}

fn range(rng: &mut SplitMix64, lo: usize, hi: usize) -> usize {
    lo + (rng.next_u64() % (hi - lo + 1) as u64) as usize
}

fn normals(dims: &[usize], rng: &mut SplitMix64) -> Tensor {
    Tensor::from_fn(dims.to_vec(), |_| rng.next_normal() as f32).unwrap()
}

fn arch(depth: usize, channels: usize) -> Arch {
    Arch {
        depth,
        channels,
        heads: channels / 16,
        ..Arch::default()
    }
}

fn raw_for(grid: (usize, usize, usize), rng: &mut SplitMix64) -> Tensor {
    normals(&[grid.0, grid.1 * PATCH_SIZE, grid.2 * PATCH_SIZE, 1], rng)
}

fn c1_two_d_equivalence() -> Outcome {
    let mut rng = SplitMix64::new(101);
    let mut cases = 0;
    for i in 0..24 {
        let grid = (range(&mut rng, 1, 6), range(&mut rng, 1, 6), range(&mut rng, 1, 6));
        let c = [32, 64][i % 2];
        let depth = [1, 4, 8][i % 3];
        let w = synth_weights(rng.next_u64(), &arch(depth, c)).map_err(e)?;
        let raw = raw_for(grid, &mut rng);
        let hw = Schedule::uniform(PlaneAxis::D, depth).map_err(e)?;
        let a = forward(&raw, &w, LiftMode::Slice2D, &hw).map_err(e)?;
        let b = forward(&raw, &w, LiftMode::PlaneCycle(PoolMode::Grouped), &hw).map_err(e)?;
        if a.features != b.features || a.globals != b.globals {
            return Err(format!("case {i}: grid {grid:?} C={c} depth={depth} differs"));
        }
        cases += 1;
    }
    Ok(format!("{cases} cases bit-identical"))
}

fn c2_round_trips() -> Outcome {
    let mut rng = SplitMix64::new(202);
    for i in 0..100 {
        let dims = [range(&mut rng, 1, 9), range(&mut rng, 1, 9), range(&mut rng, 1, 9), range(&mut rng, 1, 8)];
        let v = VolumeFeatures::new(normals(&dims, &mut rng)).map_err(e)?;
        for axis in PlaneAxis::ALL {
            let back = restore_from_plane(&reshape_to_plane(&v, axis).map_err(e)?, axis, v.grid()).map_err(e)?;
            if back != v {
                return Err(format!("shape {i} {dims:?} plane {axis}"));
            }
        }
    }
    Ok("100 shapes x 3 planes bitwise identical".into())
}

fn perturb_patch(raw: &Tensor, d: usize, hp: usize, wp: usize) -> Tensor {
    let [_, h0, w0, c] = *raw.dims() else { unreachable!() };
    let mut data = raw.to_vec();
    for y in hp * PATCH_SIZE..(hp + 1) * PATCH_SIZE {
        for x in wp * PATCH_SIZE..(wp + 1) * PATCH_SIZE {
            for ch in 0..c {
                data[((d * h0 + y) * w0 + x) * c + ch] += 1.0;
            }
        }
    }
    Tensor::new(raw.dims().to_vec(), data).unwrap()
}

fn c3_receptive_field() -> Outcome {
    let mut rng = SplitMix64::new(303);
    let grid = (4, 3, 3);
    let raw = raw_for(grid, &mut rng);
    let moved_raw = perturb_patch(&raw, 1, 1, 2);
    let mut worst = 1.0f64;
    for seed in 0..3 {
        let w = synth_weights(seed, &arch(2, 48)).map_err(e)?;
        let prefix = Schedule::new(vec![PlaneAxis::D, PlaneAxis::H]).map_err(e)?;
        let mode = LiftMode::PlaneCycle(PoolMode::Grouped);
        let a = forward(&raw, &w, mode, &prefix).map_err(e)?;
        let b = forward(&moved_raw, &w, mode, &prefix).map_err(e)?;
        let (x, y) = (a.features.tensor().data(), b.features.tensor().data());
        let changed = x.iter().zip(y).filter(|(p, q)| p.to_bits() != q.to_bits()).count();
        worst = worst.min(changed as f64 / x.len() as f64);
    }
    if worst < 0.99 {
        return Err(format!("only {:.2}% of features changed", 100.0 * worst));
    }

    let c = 48;
    let per_slice = grid.1 * grid.2 * c;
    for depth in [1, 4, 8] {
        let w = synth_weights(depth as u64, &arch(depth, c)).map_err(e)?;
        let s = build_cycle_schedule(depth).map_err(e)?;
        let a = forward(&raw, &w, LiftMode::Slice2D, &s).map_err(e)?;
        let b = forward(&moved_raw, &w, LiftMode::Slice2D, &s).map_err(e)?;
        let (x, y) = (a.features.tensor().data(), b.features.tensor().data());
        let leaked = (0..grid.0)
            .filter(|&d| d != 1)
            .flat_map(|d| d * per_slice..(d + 1) * per_slice)
            .filter(|&i| x[i].to_bits() != y[i].to_bits())
            .count();
        if leaked != 0 {
            return Err(format!("Slice2D depth {depth}: {leaked} features changed outside the slice"));
        }
    }
    Ok(format!(
        "after [HW, DW] {:.2}% of features changed (min over 3 seeds); Slice2D leaks 0 at depth 1/4/8",
        100.0 * worst
    ))
}

fn c4_pool() -> Outcome {
    for len in 1..=16 {
        let input = Tensor::from_fn([len, 3], |i| (i as f32 * 0.377).cos() * 3.0).map_err(e)?;
        for p in 1..=16 {
            let got = adaptive_avg_pool_1d(&input, p).map_err(e)?;
            for i in 0..p {
                let start = i * len / p;
                let end = ((i + 1) * len).div_ceil(p);
                for c in 0..3 {
                    let mut acc = input.at(&[start, c]);
                    for r in start + 1..end {
                        acc += input.at(&[r, c]);
                    }
                    let want = acc / (end - start) as f32;
                    if got.at(&[i, c]).to_bits() != want.to_bits() {
                        return Err(format!("L={len} P={p} bin {i}"));
                    }
                }
            }
        }
    }
    let mut rng = SplitMix64::new(404);
    for slices in 1..=8 {
        let g = GlobalTokens::new(normals(&[slices, GLOBAL_TOKENS, 6], &mut rng)).map_err(e)?;
        if pool_global_tokens(&g, slices, PoolMode::Grouped).map_err(e)? != *g.tensor() {
            return Err(format!("grouped pool is not the identity at P=L={slices}"));
        }
        for target in 1..=8 {
            let m = pool_global_tokens(&g, target, PoolMode::Mean).map_err(e)?;
            let first = pool_global_tokens(&g, 1, PoolMode::Mean).map_err(e)?;
            for s in 0..target {
                if m.data()[s * GLOBAL_TOKENS * 6..(s + 1) * GLOBAL_TOKENS * 6] != *first.data() {
                    return Err(format!("mean pool row {s} of {target} is not the replicated mean"));
                }
            }
        }
    }
    Ok("256 (L, P) pairs match the bin oracle; PCg identity and PCm replication hold".into())
}

fn c5_complexity() -> Outcome {
    for n in [2usize, 4, 8, 16] {
        let s = build_cycle_schedule(4).map_err(e)?;
        let flat = attention_cost(LiftMode::Flat3D, (n, n, n), 0, 4, &s).map_err(e)?;
        for pool in [PoolMode::Mean, PoolMode::Grouped] {
            let pc = attention_cost(LiftMode::PlaneCycle(pool), (n, n, n), 0, 4, &s).map_err(e)?;
            for (f, p) in flat.layers.iter().zip(&pc.layers) {
                if f.attention_pairs != p.attention_pairs * n as u128 {
                    return Err(format!("n={n} layer {}: {} / {}", f.layer, f.attention_pairs, p.attention_pairs));
                }
            }
        }
        for g in [0usize, 5] {
            let slice = attention_cost(LiftMode::Slice2D, (n, n + 1, n + 2), g, 4, &s).map_err(e)?;
            let want = n as u128 * ((g + (n + 1) * (n + 2)) as u128).pow(2);
            if slice.layers.iter().any(|l| l.attention_pairs != want) {
                return Err(format!("Slice2D n={n} g={g}"));
            }
        }
    }
    Ok("3D/PlaneCycle == n per layer; Slice2D == D(g+HW)^2".into())
}

fn c6_parameter_free() -> Outcome {
    let w = synth_weights(6, &Arch::default()).map_err(e)?;
    let names: BTreeSet<String> = w.named_tensors().into_iter().map(|(n, _)| n).collect();
    let before = weights_checksum(&w).map_err(e)?;
    let engine = LiftingEngine::new(w, 2).map_err(e)?;
    let registered: BTreeSet<String> = engine.registered_tensors().into_iter().map(|(n, _)| n).collect();
    if registered != names {
        return Err(format!("engine registers {} tensors, weights have {}", registered.len(), names.len()));
    }
    let raw = raw_for((2, 2, 3), &mut SplitMix64::new(6));
    for mode in LiftMode::ALL {
        engine.forward_default(&raw, mode).map_err(e)?;
        let after = weights_checksum(engine.weights()).map_err(e)?;
        if after != before {
            return Err(format!("checksum changed after {mode}"));
        }
    }
    Ok(format!("checksum {}.. unchanged over 4 modes; 0 extra tensors", &before[..12]))
}

fn c7_equivariance() -> Outcome {
    let mut rng = SplitMix64::new(707);
    let mut worst = 0.0f64;
    for axis in PlaneAxis::ALL {
        for case in 0..20 {
            let w = synth_weights(rng.next_u64(), &arch(1, 32)).map_err(e)?;
            let block: &BlockWeights = &w.blocks[0];
            let dims = [range(&mut rng, 1, 5), range(&mut rng, 1, 5), range(&mut rng, 1, 5), 32];
            let v = VolumeFeatures::new(normals(&dims, &mut rng)).map_err(e)?;
            let slices_in = range(&mut rng, 1, 5);
            let g = GlobalTokens::new(normals(&[slices_in, GLOBAL_TOKENS, 32], &mut rng)).map_err(e)?;
            let mode = if case % 2 == 0 { PoolMode::Grouped } else { PoolMode::Mean };

            let direct = plane_cycle_step(&v, &g, block, axis, mode).map_err(e)?;
            let permuted = v.permuted_for(axis).map_err(e)?;
            let via = plane_cycle_step(&permuted, &g, block, PlaneAxis::D, mode).map_err(e)?;
            let back = via.volume.unpermuted_from(axis).map_err(e)?;
            let diff = direct
                .volume
                .tensor()
                .data()
                .iter()
                .zip(back.tensor().data())
                .chain(direct.globals.tensor().data().iter().zip(via.globals.tensor().data()))
                .map(|(a, b)| (a - b).abs() as f64)
                .fold(0.0, f64::max);
            worst = worst.max(diff);
        }
    }
    ok(worst <= 1e-5, format!("max |diff| {worst:.2e} over 60 cases"))
}

/// Exhaustive FeatDice written from scratch: centroid reference, cosine
/// similarity, Dice at every threshold k/20.
fn featdice_oracle(features: &[f32], mask: &[bool], dims: (usize, usize, usize), c: usize) -> f64 {
    let (d, h, w) = dims;
    let pos: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    let coord = |i: usize| [(i / (h * w)) as f64, ((i / w) % h) as f64, (i % w) as f64];
    let mut centroid = [0.0f64; 3];
    for &i in &pos {
        for (a, x) in centroid.iter_mut().zip(coord(i)) {
            *a += x;
        }
    }
    let cen: Vec<f64> = centroid
        .iter()
        .zip([d, h, w])
        .map(|(s, n)| (s / pos.len() as f64).round().min((n - 1) as f64))
        .collect();
    let cen_idx = ((cen[0] as usize) * h + cen[1] as usize) * w + cen[2] as usize;
    let reference = if mask[cen_idx] {
        cen_idx
    } else {
        *pos.iter()
            .min_by(|&&a, &&b| {
                let da: f64 = coord(a).iter().zip(&cen).map(|(x, y)| (x - y).powi(2)).sum();
                let db: f64 = coord(b).iter().zip(&cen).map(|(x, y)| (x - y).powi(2)).sum();
                da.partial_cmp(&db).unwrap()
            })
            .unwrap()
    };
    let vec = |i: usize| &features[i * c..(i + 1) * c];
    let r = vec(reference);
    let rn: f64 = r.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    let sims: Vec<f64> = (0..mask.len())
        .map(|i| {
            let v = vec(i);
            let n: f64 = v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            let dot: f64 = v.iter().zip(r).map(|(&a, &b)| a as f64 * b as f64).sum();
            if n == 0.0 {
                0.0
            } else {
                dot / (n * rn)
            }
        })
        .collect();
    let mut best = 0.0f64;
    for k in 0..=20 {
        let t = k as f64 / 20.0;
        let pred: Vec<bool> = sims.iter().map(|s| (s + 1.0) / 2.0 >= t).collect();
        let inter = pred.iter().zip(mask).filter(|(p, m)| **p && **m).count();
        let total = pred.iter().filter(|p| **p).count() + pos.len();
        best = best.max(2.0 * inter as f64 / total as f64);
    }
    best
}

fn c8_featdice() -> Outcome {
    let dims = (4, 4, 4);
    let inside = |i: usize| (i / 16) >= 2 && (i / 4) % 4 >= 1 && i % 4 < 3;
    let mask_t = Tensor::from_fn([4, 4, 4], |i| inside(i) as u8 as f32).map_err(e)?;
    let mask = LesionMask::new(mask_t).map_err(e)?;
    let indicator = Tensor::from_fn([4, 4, 4, 3], |i| if inside(i / 3) || i % 3 == 1 { 1.0 } else { 0.0 })
        .map_err(e)?;
    let score = feat_dice(&VolumeFeatures::new(indicator).map_err(e)?, &mask).map_err(e)?.score;
    if score != 1.0 {
        return Err(format!("indicator fixture scored {score}"));
    }

    let mut rng = SplitMix64::new(808);
    let mut worst = 0.0f64;
    for case in 0..10 {
        let feats = normals(&[4, 4, 4, 8], &mut rng);
        let mut truth: Vec<bool> = (0..64).map(|_| rng.next_f64() < 0.3).collect();
        truth[case] = true;
        let mask = LesionMask::new(Tensor::from_fn([4, 4, 4], |i| truth[i] as u8 as f32).map_err(e)?).map_err(e)?;
        let v = VolumeFeatures::new(feats.clone()).map_err(e)?;
        let got = feat_dice(&v, &mask).map_err(e)?.score;
        let want = featdice_oracle(feats.data(), &truth, dims, 8);
        worst = worst.max((got - want).abs());
        for scale in [0.25f32, 2.0, 8.0] {
            let scaled = Tensor::from_fn([4, 4, 4, 8], |i| feats.data()[i] * scale).map_err(e)?;
            let s = feat_dice(&VolumeFeatures::new(scaled).map_err(e)?, &mask).map_err(e)?.score;
            if s != got {
                return Err(format!("case {case}: scale {scale} changed {got} to {s}"));
            }
        }
    }
    ok(worst == 0.0, format!("indicator 1.0; scale-invariant; oracle max |diff| {worst:.1e} over 10 fixtures"))
}

/// Cyclic Jacobi eigenvalues of a symmetric matrix, descending.
fn jacobi_eigenvalues(m: &[f64], n: usize) -> Vec<f64> {
    let mut a = m.to_vec();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i * n + j].powi(2)).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    eig
}

fn c9_pca() -> Outcome {
    let mut rng = SplitMix64::new(909);
    let (mut worst_rel, mut worst_orth) = (0.0f64, 0.0f64);
    for case in 0..10 {
        let c = 32;
        let scales: Vec<f32> = (0..c).map(|j| 1.0 / (1.0 + j as f32 * 0.35) + 0.01 * case as f32).collect();
        let mix = normals(&[c, c], &mut rng);
        let latent = normals(&[6, 5, 4, c], &mut rng);
        let data = Tensor::from_fn([6, 5, 4, c], |i| {
            let (t, j) = (i / c, i % c);
            (0..c).map(|k| latent.data()[t * c + k] * scales[k] * mix.data()[k * c + j]).sum::<f32>()
        })
        .map_err(e)?;
        let v = VolumeFeatures::new(data).map_err(e)?;
        let pca = pca_project(&v, 3).map_err(|err| format!("case {case}: {}", e(err)))?;
        let (cov, _) = covariance(&v);
        let oracle = jacobi_eigenvalues(&cov, c);
        for j in 0..3 {
            worst_rel = worst_rel.max((pca.eigenvalues[j] - oracle[j]).abs() / oracle[j].abs());
            for k in 0..3 {
                let dot: f64 = pca.components[j].iter().zip(&pca.components[k]).map(|(a, b)| a * b).sum();
                worst_orth = worst_orth.max((dot - if j == k { 1.0 } else { 0.0 }).abs());
            }
        }
    }
    ok(
        worst_rel <= 1e-6 && worst_orth <= 1e-6,
        format!("eigenvalue rel err {worst_rel:.1e}, orthonormality err {worst_orth:.1e} over 10 cases"),
    )
}

fn random_archive(rng: &mut SplitMix64) -> Archive {
    let mut a = Archive::new();
    for i in 0..range(rng, 0, 6) {
        let rank = range(rng, 1, 4);
        let dims: Vec<usize> = (0..rank).map(|_| range(rng, 1, 5)).collect();
        a.insert(format!("t{i}.{}", rng.next_u64() % 1000), normals(&dims, rng)).unwrap();
    }
    for i in 0..range(rng, 0, 3) {
        a.metadata.insert(format!("k{i}"), format!("v{}", rng.next_u64()));
    }
    a
}

fn c10_archives() -> Outcome {
    let mut rng = SplitMix64::new(1010);
    let mut samples = Vec::new();
    for i in 0..50 {
        let a = random_archive(&mut rng);
        let bytes = encode_archive(&a);
        let back = parse_archive(&bytes).map_err(|err| format!("archive {i}: {}", e(err)))?;
        if encode_archive(&back) != bytes || back.metadata != a.metadata {
            return Err(format!("archive {i} does not round-trip"));
        }
        samples.push(bytes);
    }
    let (mut rejected, mut accepted) = (0, 0);
    for m in 0..200 {
        let mut bytes = samples[m % samples.len()].clone();
        let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        match m % 5 {
            0 => {
                let at = range(&mut rng, 0, 8 + header_len - 1);
                bytes[at] ^= 1 << (rng.next_u64() % 8);
            }
            1 => bytes.truncate(range(&mut rng, 0, bytes.len() - 1)),
            2 => {
                let len = header_len as u64 + rng.next_u64() % 64 - 32;
                bytes[..8].copy_from_slice(&len.to_le_bytes());
            }
            3 => {
                let at = range(&mut rng, 8, 8 + header_len - 1);
                bytes[at] = b"{}[]\",:0-9e"[(rng.next_u64() % 11) as usize];
            }
            _ => {
                let text = String::from_utf8_lossy(&bytes[8..8 + header_len]).into_owned();
                let mutated = text.replacen("F32", ["F16", "I64", "f32", "BOOL"][m % 4], 1).replacen("\"shape\":[", "\"shape\":[0,", m % 2);
                let mut out = (mutated.len() as u64).to_le_bytes().to_vec();
                out.extend_from_slice(mutated.as_bytes());
                out.extend_from_slice(&bytes[8 + header_len..]);
                bytes = out;
            }
        }
        match catch_unwind(AssertUnwindSafe(|| parse_archive(&bytes))) {
            Err(_) => return Err(format!("mutant {m} panicked")),
            Ok(Err(err)) => {
                assert!(err.code().starts_with("E_"));
                rejected += 1;
            }
            Ok(Ok(_)) => accepted += 1,
        }
    }
    Ok(format!("50 byte-identical round trips; 200 mutants: {rejected} structured errors, {accepted} still valid, 0 panics"))
}

fn c11_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|err| err.to_string())?;
    let mut rng = SplitMix64::new(1111);
    let grids = [(1, 1, 1), (2, 3, 4), (3, 2, 2), (4, 4, 4), (5, 2, 3)];
    for (i, &grid) in grids.iter().enumerate() {
        let mut input = Archive::new();
        input.insert("volume", raw_for(grid, &mut rng)).unwrap();
        let input_path = dir.path().join(format!("in{i}.safetensors"));
        std::fs::write(&input_path, encode_archive(&input)).map_err(|err| err.to_string())?;
        let mode = ["pcg", "pcm", "2d", "3d", "pcg"][i];
        let mut outputs = Vec::new();
        for threads in ["1", "8"] {
            let out = dir.path().join(format!("out{i}_{threads}.safetensors"));
            let args = [
                "planecycle", "lift", "--weights", "synth", "--seed", "5", "--mode", mode, "--threads", threads,
                "--input", input_path.to_str().unwrap(), "--output", out.to_str().unwrap(),
            ];
            let (mut stdout, mut stderr) = (Vec::new(), Vec::new());
            let code = planecycle::cli::run(args, &mut stdout, &mut stderr);
            if code != 0 {
                return Err(format!("fixture {i}: exit {code}: {}", String::from_utf8_lossy(&stderr)));
            }
            outputs.push(std::fs::read(&out).map_err(|err| err.to_string())?);
        }
        if outputs[0] != outputs[1] {
            return Err(format!("fixture {i} ({mode}) differs between 1 and 8 threads"));
        }
    }
    Ok("5 fixtures byte-identical at 1 and 8 threads".into())
}

fn c12_performance() -> Outcome {
    let engine = LiftingEngine::new(synth_weights(12, &Arch::default()).map_err(e)?, 1).map_err(e)?;
    let schedule = build_cycle_schedule(4).map_err(e)?;
    let mut lines = Vec::new();
    for n in [8usize, 10] {
        let raw = bench_volume((n, n, n), 1, 0).map_err(e)?;
        let mut medians = Vec::new();
        for mode in [LiftMode::PlaneCycle(PoolMode::Grouped), LiftMode::Flat3D] {
            engine.forward(&raw, mode, &schedule).map_err(e)?;
            let mut times: Vec<f64> = (0..3)
                .map(|_| {
                    let t = Instant::now();
                    engine.forward(&raw, mode, &schedule).map(|_| t.elapsed().as_secs_f64() * 1e3)
                })
                .collect::<Result<_, _>>()
                .map_err(e)?;
            medians.push(median(&mut times));
        }
        lines.push(format!("n={n}: pcg {:.1} ms < 3d {:.1} ms", medians[0], medians[1]));
        if medians[0] >= medians[1] {
            return Err(lines.join("; "));
        }
    }
    Ok(lines.join("; "))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("2D-equivalence oracle", c1_two_d_equivalence),
        ("reshape round trips", c2_round_trips),
        ("receptive field", c3_receptive_field),
        ("adaptive-pool semantics", c4_pool),
        ("complexity identities", c5_complexity),
        ("parameter-free", c6_parameter_free),
        ("plane-permutation equivariance", c7_equivariance),
        ("FeatDice properties", c8_featdice),
        ("PCA correctness", c9_pca),
        ("archive round trips and fuzzing", c10_archives),
        ("thread determinism", c11_determinism),
        ("performance ordering", c12_performance),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} ({secs:.2}s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.2}s): {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
