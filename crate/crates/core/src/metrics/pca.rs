//! Principal components of a feature volume by power iteration with
//! deflation, for three-plane RGB visualizations.

use crate::error::{Error, Result};
use crate::plane::VolumeFeatures;
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PcaConfig {
    /// Stop when successive unit iterates differ by less than this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Residual `‖Av − λv‖` above which a non-converged component is an error.
    pub max_residual: f64,
    pub seed: u64,
}

impl Default for PcaConfig {
    fn default() -> Self {
        PcaConfig {
            tolerance: 1e-8,
            max_iterations: 1000,
            max_residual: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Pca {
    /// Unit eigenvectors of the channel covariance, `k × C`.
    pub components: Vec<Vec<f64>>,
    /// Matching eigenvalues, non-increasing.
    pub eigenvalues: Vec<f64>,
    /// Centered tokens projected on each component, `N × k` row-major.
    pub scores: Vec<f64>,
    /// Scores min-max normalized per component to `[0, 1]`, `[D, H, W, k]`.
    pub projection: Tensor,
}

/// Sample covariance `XcᵀXc / (N − 1)` of the `N × C` token matrix.
pub fn covariance(features: &VolumeFeatures) -> (Vec<f64>, Vec<f64>) {
    let c = features.channels();
    let rows: Vec<&[f32]> = features.tensor().data().chunks_exact(c).collect();
    let n = rows.len();
    let mut mean = vec![0.0f64; c];
    for row in &rows {
        for (m, &v) in mean.iter_mut().zip(row.iter()) {
            *m += v as f64;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = vec![0.0f64; c * c];
    let mut centered = vec![0.0f64; c];
    for row in &rows {
        for j in 0..c {
            centered[j] = row[j] as f64 - mean[j];
        }
        for a in 0..c {
            let ca = centered[a];
            for b in a..c {
                cov[a * c + b] += ca * centered[b];
            }
        }
    }
    let denom = (n.max(2) - 1) as f64;
    for a in 0..c {
        for b in a..c {
            let v = cov[a * c + b] / denom;
            cov[a * c + b] = v;
            cov[b * c + a] = v;
        }
    }
    (cov, mean)
}

fn mat_vec(m: &[f64], v: &[f64]) -> Vec<f64> {
    let c = v.len();
    (0..c)
        .map(|i| m[i * c..(i + 1) * c].iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for u in basis {
        let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
        for (x, y) in v.iter_mut().zip(u) {
            *x -= d * y;
        }
    }
}

/// Top-`k` eigenpairs of a symmetric `C × C` matrix.
pub fn top_eigenpairs(matrix: &[f64], c: usize, k: usize, cfg: &PcaConfig) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut deflated = matrix.to_vec();
    // below this norm of A·v the remaining spectrum is rounding noise
    let null_norm = 1e-12 * norm(matrix).max(f64::MIN_POSITIVE);
    let mut rng = SplitMix64::new(cfg.seed);
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut values = Vec::with_capacity(k);

    for component in 0..k {
        let mut v: Vec<f64> = (0..c).map(|_| rng.next_normal()).collect();
        orthogonalize(&mut v, &vectors);
        orthogonalize(&mut v, &vectors);
        let n = norm(&v);
        for x in &mut v {
            *x /= n;
        }

        let mut converged = false;
        for _ in 0..cfg.max_iterations {
            let mut w = mat_vec(&deflated, &v);
            orthogonalize(&mut w, &vectors);
            orthogonalize(&mut w, &vectors);
            let n = norm(&w);
            if n <= null_norm {
                // remaining spectrum is zero: any orthonormal v is an eigenvector
                converged = true;
                break;
            }
            for x in &mut w {
                *x /= n;
            }
            let delta = norm(&w.iter().zip(&v).map(|(a, b)| a - b).collect::<Vec<_>>());
            v = w;
            if delta < cfg.tolerance {
                converged = true;
                break;
            }
        }

        let av = mat_vec(&deflated, &v);
        let lambda: f64 = av.iter().zip(&v).map(|(a, b)| a * b).sum();
        if !converged {
            let residual = norm(&av.iter().zip(&v).map(|(a, b)| a - lambda * b).collect::<Vec<_>>());
            if residual > cfg.max_residual {
                return Err(Error::ConvergenceFailure { component, residual });
            }
        }

        // largest-magnitude entry positive, first index on ties
        let pivot = v
            .iter()
            .enumerate()
            .fold(0, |best, (i, x)| if x.abs() > v[best].abs() { i } else { best });
        if v[pivot] < 0.0 {
            for x in &mut v {
                *x = -*x;
            }
        }

        for a in 0..c {
            for b in 0..c {
                deflated[a * c + b] -= lambda * v[a] * v[b];
            }
        }
        vectors.push(v);
        values.push(lambda.max(0.0));
    }
    Ok((vectors, values))
}

/// Ranges at or below this fraction of the first component's range are
/// treated as constant and map to 0.
const FLAT_RANGE: f64 = 1e-9;

pub fn pca_project(features: &VolumeFeatures, k: usize) -> Result<Pca> {
    pca_project_with(features, k, &PcaConfig::default())
}

pub fn pca_project_with(features: &VolumeFeatures, k: usize, cfg: &PcaConfig) -> Result<Pca> {
    let c = features.channels();
    let (d, h, w) = features.grid();
    let n = d * h * w;
    if k == 0 || k > c {
        return Err(Error::InvalidLength(format!("{k} components of {c} channels")));
    }
    if n < k + 1 {
        return Err(Error::InvalidLength(format!("{n} tokens for {k} components")));
    }
    let (cov, mean) = covariance(features);
    let (components, eigenvalues) = top_eigenpairs(&cov, c, k, cfg)?;

    let mut scores = vec![0.0f64; n * k];
    for (t, row) in features.tensor().data().chunks_exact(c).enumerate() {
        for (j, u) in components.iter().enumerate() {
            scores[t * k + j] = row
                .iter()
                .zip(&mean)
                .zip(u)
                .map(|((&x, m), e)| (x as f64 - m) * e)
                .sum();
        }
    }

    let ranges: Vec<(f64, f64)> = (0..k)
        .map(|j| {
            (0..n).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
                let s = scores[t * k + j];
                (lo.min(s), hi.max(s))
            })
        })
        .collect();
    let reference = (ranges[0].1 - ranges[0].0).max(f64::MIN_POSITIVE);
    let mut projection = Vec::with_capacity(n * k);
    for t in 0..n {
        for (j, &(lo, hi)) in ranges.iter().enumerate() {
            let span = hi - lo;
            projection.push(if span <= FLAT_RANGE * reference {
                0.0
            } else {
                ((scores[t * k + j] - lo) / span) as f32
            });
        }
    }

    Ok(Pca {
        components,
        eigenvalues,
        scores,
        projection: Tensor::from_raw(&[d, h, w, k], projection),
    })
}
