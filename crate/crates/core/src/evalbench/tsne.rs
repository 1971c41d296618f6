//! Exact O(n^2) t-SNE.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedStream;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub exaggeration: f64,
    pub exaggeration_iterations: usize,
    pub learning_rate: f64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            iterations: 1000,
            exaggeration: 12.0,
            exaggeration_iterations: 250,
            learning_rate: 200.0,
        }
    }
}

const ENTROPY_TOL: f64 = 1e-5;
const MAX_BISECT: usize = 200;

fn squared_distances(x: &Tensor<f64>) -> Vec<f64> {
    let n = x.rows();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = x
                .row(i)
                .iter()
                .zip(x.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// Row `i` of `p` gets `exp(-beta * (d_ij - d_min))` normalized; returns
/// the Shannon entropy (nats) of that row.
fn row_affinities(d: &[f64], i: usize, beta: f64, p: &mut [f64]) -> f64 {
    let dmin = d
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for (j, (pj, &dj)) in p.iter_mut().zip(d).enumerate() {
        *pj = if j == i {
            0.0
        } else {
            (-beta * (dj - dmin)).exp()
        };
        sum += *pj;
    }
    let mut h = 0.0;
    for (j, pj) in p.iter_mut().enumerate() {
        *pj /= sum;
        if j != i && *pj > 0.0 {
            h -= *pj * pj.ln();
        }
    }
    h
}

/// Conditional affinities `p_{j|i}` (rows sum to one) whose entropies match
/// `ln(perplexity)`, found by bisection on each point's precision.
/// Returns the row-major `[n, n]` matrix and the achieved entropies.
pub fn conditional_affinities(x: &Tensor<f64>, perplexity: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = x.rows();
    validate(x, perplexity)?;
    let d = squared_distances(x);
    let target = perplexity.ln();
    let mut p = vec![0.0; n * n];
    let mut entropies = vec![0.0; n];
    for i in 0..n {
        let di = &d[i * n..(i + 1) * n];
        let row = &mut p[i * n..(i + 1) * n];
        let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
        // Scale-aware start: 1 / mean squared distance.
        let mean = di.iter().sum::<f64>() / (n - 1) as f64;
        let mut beta = if mean > 0.0 { 1.0 / mean } else { 1.0 };
        let mut h = row_affinities(di, i, beta, row);
        for _ in 0..MAX_BISECT {
            if (h - target).abs() < ENTROPY_TOL {
                break;
            }
            if h > target {
                lo = beta;
                beta = if hi.is_finite() {
                    (beta + hi) / 2.0
                } else {
                    beta * 2.0
                };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
            h = row_affinities(di, i, beta, row);
        }
        entropies[i] = h;
    }
    Ok((p, entropies))
}

fn validate(x: &Tensor<f64>, perplexity: f64) -> Result<()> {
    if x.shape().len() != 2 {
        return Err(Error::Shape(format!(
            "t-SNE input must be [n, d], got {:?}",
            x.shape()
        )));
    }
    let n = x.rows();
    if n < 4 || n > 5000 {
        return Err(Error::InvalidArgument(format!(
            "t-SNE supports 4..=5000 points, got {n}"
        )));
    }
    if !(perplexity > 0.0 && perplexity < n as f64 / 3.0) {
        return Err(Error::InvalidArgument(format!(
            "perplexity {perplexity} must lie in (0, n/3) for n = {n}"
        )));
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("t-SNE input"));
    }
    let first = x.row(0);
    if (1..n).all(|i| x.row(i) == first) {
        return Err(Error::InvalidArgument(
            "all t-SNE input points are identical".into(),
        ));
    }
    Ok(())
}

/// Two-dimensional exact t-SNE layout `[n, 2]`.
///
/// Symmetrized affinities, Student-t output kernel, gradient descent with
/// momentum 0.5 then 0.8, per-coordinate adaptive gains, and early
/// exaggeration. Deterministic given the seed.
pub fn tsne_2d(x: &Tensor<f64>, cfg: &TsneConfig, seed: SeedStream) -> Result<Tensor<f64>> {
    let n = x.rows();
    let (cond, _) = conditional_affinities(x, cfg.perplexity)?;
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = ((cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64)).max(1e-12);
        }
    }
    let mut rng = seed.rng();
    let mut y: Vec<f64> = (0..2 * n)
        .map(|_| 1e-4 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut update = vec![0.0; 2 * n];
    let mut gains = vec![1.0f64; 2 * n];
    let mut q = vec![0.0; n * n];
    let mut grad = vec![0.0; 2 * n];
    for it in 0..cfg.iterations {
        let exag = if it < cfg.exaggeration_iterations {
            cfg.exaggeration
        } else {
            1.0
        };
        let momentum = if it < cfg.exaggeration_iterations {
            0.5
        } else {
            0.8
        };
        let mut qsum = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let dx = y[2 * i] - y[2 * j];
                let dy = y[2 * i + 1] - y[2 * j + 1];
                let w = 1.0 / (1.0 + dx * dx + dy * dy);
                q[i * n + j] = w;
                q[j * n + i] = w;
                qsum += 2.0 * w;
            }
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        for i in 0..n {
            let (mut gx, mut gy) = (0.0, 0.0);
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = q[i * n + j];
                let m = (exag * p[i * n + j] - w / qsum) * w;
                gx += m * (y[2 * i] - y[2 * j]);
                gy += m * (y[2 * i + 1] - y[2 * j + 1]);
            }
            grad[2 * i] = 4.0 * gx;
            grad[2 * i + 1] = 4.0 * gy;
        }
        for k in 0..2 * n {
            gains[k] = if (grad[k] > 0.0) != (update[k] > 0.0) {
                gains[k] + 0.2
            } else {
                (gains[k] * 0.8).max(0.01)
            };
            update[k] = momentum * update[k] - cfg.learning_rate * gains[k] * grad[k];
            y[k] += update[k];
        }
        let (mx, my) = (0..n).fold((0.0, 0.0), |(a, b), i| (a + y[2 * i], b + y[2 * i + 1]));
        for i in 0..n {
            y[2 * i] -= mx / n as f64;
            y[2 * i + 1] -= my / n as f64;
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("t-SNE layout"));
    }
    Tensor::new(&[n, 2], y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(seed: u64) -> (Tensor<f64>, Vec<usize>) {
        let mut rng = SeedStream::new(seed).rng();
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for c in 0..2 {
            for _ in 0..10 {
                for k in 0..50 {
                    let centre = if k == 0 { 20.0 * c as f64 } else { 0.0 };
                    data.push(centre + rng.sample::<f64, _>(StandardNormal));
                }
                labels.push(c);
            }
        }
        (Tensor::new(&[20, 50], data).unwrap(), labels)
    }

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Mean silhouette from direct pairwise distances.
    fn silhouette(y: &Tensor<f64>, labels: &[usize]) -> f64 {
        let n = labels.len();
        let mut total = 0.0;
        for i in 0..n {
            let mean_to = |c: usize| {
                let v: Vec<f64> = (0..n)
                    .filter(|&j| j != i && labels[j] == c)
                    .map(|j| dist(y.row(i), y.row(j)))
                    .collect();
                v.iter().sum::<f64>() / v.len() as f64
            };
            let a = mean_to(labels[i]);
            let b = mean_to(1 - labels[i]);
            total += (b - a) / a.max(b);
        }
        total / n as f64
    }

    #[test]
    fn affinity_rows_are_normalized_and_hit_perplexity() {
        let (x, _) = blobs(1);
        let (p, h) = conditional_affinities(&x, 5.0).unwrap();
        for i in 0..20 {
            let s: f64 = p[i * 20..(i + 1) * 20].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!((h[i] - 5f64.ln()).abs() < 1e-4, "row {i}: {}", h[i]);
        }
    }

    #[test]
    fn separates_blobs_deterministically() {
        let (x, labels) = blobs(2);
        let cfg = TsneConfig {
            perplexity: 5.0,
            ..Default::default()
        };
        let y = tsne_2d(&x, &cfg, SeedStream::new(3)).unwrap();
        assert_eq!(y.shape(), &[20, 2]);
        let s = silhouette(&y, &labels);
        assert!(s > 0.8, "silhouette {s}");
        assert_eq!(y, tsne_2d(&x, &cfg, SeedStream::new(3)).unwrap());
    }

    #[test]
    fn rejects_degenerate_inputs() {
        let same = Tensor::full(&[10, 3], 1.0);
        assert!(tsne_2d(
            &same,
            &TsneConfig {
                perplexity: 2.0,
                ..Default::default()
            },
            SeedStream::new(0)
        )
        .is_err());
        let (x, _) = blobs(0);
        assert!(conditional_affinities(&x, 7.0).is_err());
    }
}
