//! Latent vector sampling and class conditioning for the generator.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedStream;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Default truncation threshold.
pub const DEFAULT_TAU: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "regime")]
pub enum Regime {
    Standard,
    /// Every coordinate lies in `[-threshold, threshold]`.
    Truncated {
        threshold: f64,
    },
    /// Whole vectors lie in the ball of radius `threshold`.
    NormTruncated {
        threshold: f64,
    },
}

impl Regime {
    pub fn is_truncated(&self) -> bool {
        self.threshold().is_some()
    }

    pub fn threshold(&self) -> Option<f64> {
        match *self {
            Regime::Standard => None,
            Regime::Truncated { threshold } | Regime::NormTruncated { threshold } => {
                Some(threshold)
            }
        }
    }
}

/// How the truncation trick restricts a latent vector.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationMode {
    /// Per coordinate: `|z_i| <= tau`.
    #[default]
    Coordinate,
    /// Per vector: `||z||_2 <= tau`.
    Norm,
}

impl TruncationMode {
    pub fn regime(self, tau: f64) -> Regime {
        match self {
            TruncationMode::Coordinate => Regime::Truncated { threshold: tau },
            TruncationMode::Norm => Regime::NormTruncated { threshold: tau },
        }
    }
}

/// A batch of latent vectors `[batch, latent_dim]` with conditioning labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBatch<T> {
    values: Tensor<T>,
    regime: Regime,
    labels: Vec<usize>,
}

impl<T: Scalar> LatentBatch<T> {
    pub fn values(&self) -> &Tensor<T> {
        &self.values
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn batch(&self) -> usize {
        self.values.rows()
    }

    pub fn latent_dim(&self) -> usize {
        self.values.row_len()
    }

    /// Replaces the conditioning labels (one per row).
    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.batch() {
            return Err(Error::Shape(format!(
                "{} labels for a batch of {}",
                labels.len(),
                self.batch()
            )));
        }
        self.labels = labels;
        Ok(self)
    }

    /// Largest absolute entry (0 for an empty batch).
    pub fn max_abs(&self) -> T {
        self.values.max_abs()
    }
}

fn check_dims(batch: usize, latent_dim: usize) -> Result<()> {
    if latent_dim == 0 {
        return Err(Error::InvalidArgument("latent_dim must be positive".into()));
    }
    if batch == 0 {
        return Err(Error::InvalidArgument("batch must be positive".into()));
    }
    Ok(())
}

fn uniform_labels(batch: usize, num_classes: usize, seed: SeedStream) -> Result<Vec<usize>> {
    if num_classes == 0 {
        return Err(Error::InvalidArgument(
            "num_classes must be positive".into(),
        ));
    }
    let mut rng = seed.derive("labels").rng();
    Ok((0..batch)
        .map(|_| rng.random_range(0..num_classes))
        .collect())
}

/// I.i.d. `N(0, 1)` entries; labels uniform over `num_classes` from a separate
/// child stream so they never perturb the latent values.
pub fn sample_standard<T: Scalar>(
    batch: usize,
    latent_dim: usize,
    num_classes: usize,
    seed: SeedStream,
) -> Result<LatentBatch<T>> {
    check_dims(batch, latent_dim)?;
    let mut rng = seed.derive("values").rng();
    let values = Tensor::from_fn(&[batch, latent_dim], |_| {
        let z: f64 = rng.sample(StandardNormal);
        T::lit(z)
    });
    Ok(LatentBatch {
        values,
        regime: Regime::Standard,
        labels: uniform_labels(batch, num_classes, seed)?,
    })
}

/// `N(0, 1)` truncated to `[-tau, tau]`: every coordinate is redrawn until it
/// lands inside the interval.
pub fn sample_truncated<T: Scalar>(
    batch: usize,
    latent_dim: usize,
    num_classes: usize,
    tau: f64,
    seed: SeedStream,
) -> Result<LatentBatch<T>> {
    check_dims(batch, latent_dim)?;
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "truncation threshold must be positive, got {tau}"
        )));
    }
    let bound = T::lit(tau);
    let mut rng = seed.derive("values").rng();
    let values = Tensor::from_fn(&[batch, latent_dim], |_| loop {
        let z: f64 = rng.sample(StandardNormal);
        let z = T::lit(z);
        if z.abs() <= bound {
            break z;
        }
    });
    Ok(LatentBatch {
        values,
        regime: Regime::Truncated { threshold: tau },
        labels: uniform_labels(batch, num_classes, seed)?,
    })
}

/// `N(0, I)` conditioned on `||z|| <= tau`, row by row.
///
/// The squared radius follows a chi-square law with `latent_dim` degrees of
/// freedom cut at `tau^2`, and the direction is uniform. When the cut keeps
/// at least about half the mass, whole vectors are simply redrawn. Otherwise
/// the squared radius `s` is drawn from the density `s^(c-1)` on
/// `[0, tau^2]` with `c = (d - tau^2) / 2` and accepted with probability
/// `(s / tau^2)^(tau^2 / 2) * exp((tau^2 - s) / 2)`, which is exact and keeps
/// the acceptance rate high even when the ball holds almost no mass.
pub fn sample_norm_truncated<T: Scalar>(
    batch: usize,
    latent_dim: usize,
    num_classes: usize,
    tau: f64,
    seed: SeedStream,
) -> Result<LatentBatch<T>> {
    check_dims(batch, latent_dim)?;
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "truncation threshold must be positive, got {tau}"
        )));
    }
    let d = latent_dim as f64;
    let b = tau * tau;
    let mut rng = seed.derive("values").rng();
    let mut out = Vec::with_capacity(batch * latent_dim);
    let mut g = vec![0.0f64; latent_dim];
    for _ in 0..batch {
        let scale = if b >= d {
            loop {
                g.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                if g.iter().map(|v| v * v).sum::<f64>() <= b {
                    break 1.0;
                }
            }
        } else {
            let c = (d - b) / 2.0;
            let s = loop {
                let u: f64 = 1.0 - rng.random::<f64>();
                let s = b * u.powf(1.0 / c);
                let log_accept = 0.5 * b * (s / b).ln() + 0.5 * (b - s);
                let v: f64 = 1.0 - rng.random::<f64>();
                if v.ln() <= log_accept {
                    break s;
                }
            };
            let norm = loop {
                g.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n > 0.0 {
                    break n;
                }
            };
            s.sqrt() / norm
        };
        out.extend(g.iter().map(|v| {
            // Rounding must not push a coordinate past the bound.
            let x = T::lit(v * scale);
            x.max(T::lit(-tau)).min(T::lit(tau))
        }));
    }
    Ok(LatentBatch {
        values: Tensor::new(&[batch, latent_dim], out)?,
        regime: Regime::NormTruncated { threshold: tau },
        labels: uniform_labels(batch, num_classes, seed)?,
    })
}

/// Draws under the given regime.
pub fn sample<T: Scalar>(
    batch: usize,
    latent_dim: usize,
    num_classes: usize,
    regime: Regime,
    seed: SeedStream,
) -> Result<LatentBatch<T>> {
    match regime {
        Regime::Standard => sample_standard(batch, latent_dim, num_classes, seed),
        Regime::Truncated { threshold } => {
            sample_truncated(batch, latent_dim, num_classes, threshold, seed)
        }
        Regime::NormTruncated { threshold } => {
            sample_norm_truncated(batch, latent_dim, num_classes, threshold, seed)
        }
    }
}

/// Generator input: latent values with a one-hot class code appended.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedLatent<T> {
    values: Tensor<T>,
    latent_dim: usize,
    num_classes: usize,
}

impl<T: Scalar> ConditionedLatent<T> {
    /// `[batch, latent_dim + num_classes]`.
    pub fn values(&self) -> &Tensor<T> {
        &self.values
    }

    pub fn into_tensor(self) -> Tensor<T> {
        self.values
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }
}

/// Row `i` becomes `values[i] ++ one_hot(labels[i])`.
pub fn condition<T: Scalar>(
    z: &LatentBatch<T>,
    num_classes: usize,
) -> Result<ConditionedLatent<T>> {
    condition_rows(z.values(), z.labels(), num_classes)
}

pub(crate) fn condition_rows<T: Scalar>(
    values: &Tensor<T>,
    labels: &[usize],
    num_classes: usize,
) -> Result<ConditionedLatent<T>> {
    if num_classes == 0 {
        return Err(Error::InvalidArgument(
            "num_classes must be positive".into(),
        ));
    }
    let batch = values.rows();
    if labels.len() != batch {
        return Err(Error::Shape(format!(
            "{} labels for {batch} latent rows",
            labels.len()
        )));
    }
    let dim = if values.shape().len() >= 2 {
        values.row_len()
    } else {
        0
    };
    let width = dim + num_classes;
    let mut out = Vec::with_capacity(batch * width);
    for (i, &label) in labels.iter().enumerate() {
        if label >= num_classes {
            return Err(Error::LabelOutOfRange { label, num_classes });
        }
        out.extend_from_slice(values.row(i));
        out.extend((0..num_classes).map(|c| if c == label { T::one() } else { T::zero() }));
    }
    Ok(ConditionedLatent {
        values: Tensor::new(&[batch, width], out)?,
        latent_dim: dim,
        num_classes,
    })
}

/// An empty batch with the given latent width; used where a sampler would
/// reject `batch = 0`.
pub fn empty_batch<T: Scalar>(latent_dim: usize) -> LatentBatch<T> {
    LatentBatch {
        values: Tensor::zeros(&[0, latent_dim]),
        regime: Regime::Standard,
        labels: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(x: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n)
    }

    #[test]
    fn standard_moments() {
        let z = sample_standard::<f64>(10_000, 1, 10, SeedStream::new(11)).unwrap();
        let (m, v) = moments(z.values().data());
        assert!(m.abs() < 0.05 && (v - 1.0).abs() < 0.05, "mean {m} var {v}");
        assert_eq!(z.regime(), Regime::Standard);
    }

    #[test]
    fn standard_is_deterministic_per_seed() {
        let a = sample_standard::<f32>(4, 8, 10, SeedStream::new(5)).unwrap();
        let b = sample_standard::<f32>(4, 8, 10, SeedStream::new(5)).unwrap();
        let c = sample_standard::<f32>(4, 8, 10, SeedStream::new(6)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn truncated_respects_bound() {
        let z = sample_truncated::<f32>(64, 16, 10, 0.5, SeedStream::new(1)).unwrap();
        assert!(z.values().data().iter().all(|v| v.abs() <= 0.5));
        assert_eq!(z.regime(), Regime::Truncated { threshold: 0.5 });
    }

    #[test]
    fn huge_threshold_matches_standard() {
        let z = sample_truncated::<f64>(20_000, 1, 2, 1e6, SeedStream::new(9)).unwrap();
        let (m, v) = moments(z.values().data());
        assert!(m.abs() < 0.05 && (v - 1.0).abs() < 0.05);
    }

    #[test]
    fn rejects_non_positive_threshold() {
        for tau in [0.0, -1.0, f64::NAN] {
            assert!(sample_truncated::<f32>(2, 2, 2, tau, SeedStream::new(0)).is_err());
            assert!(sample_norm_truncated::<f32>(2, 2, 2, tau, SeedStream::new(0)).is_err());
        }
    }

    /// KS statistic of the squared norms against the chi-square law with
    /// `d` degrees of freedom conditioned on `s <= tau^2`.
    fn norm_ks(d: usize, tau: f64, n: usize, seed: u64) -> f64 {
        use statrs::function::gamma::gamma_lr;
        let z = sample_norm_truncated::<f64>(n, d, 2, tau, SeedStream::new(seed)).unwrap();
        let k = d as f64 / 2.0;
        let top = gamma_lr(k, tau * tau / 2.0);
        let mut s: Vec<f64> = (0..n)
            .map(|i| z.values().row(i).iter().map(|v| v * v).sum())
            .collect();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let nf = n as f64;
        s.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = gamma_lr(k, x / 2.0) / top;
                (f - i as f64 / nf)
                    .abs()
                    .max(((i + 1) as f64 / nf - f).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn norm_truncated_radius_law() {
        let n = 20_000;
        let critical = 1.628 / (n as f64).sqrt();
        // Plain rejection, then the radius sampler on both sides of the mode.
        for (d, tau) in [(4, 3.0), (6, 2.0), (10, 2.5), (3, 0.3)] {
            let ks = norm_ks(d, tau, n, d as u64);
            assert!(ks < critical, "d={d} tau={tau}: KS {ks}");
        }
    }

    #[test]
    fn norm_truncated_tiny_ball_in_high_dimension() {
        let tau = 1.0;
        let z = sample_norm_truncated::<f32>(2000, 100, 10, tau, SeedStream::new(3)).unwrap();
        assert_eq!(z.regime(), Regime::NormTruncated { threshold: tau });
        let mut mean = vec![0.0f64; 100];
        for i in 0..z.batch() {
            let row = z.values().row(i);
            let norm = row.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
            assert!(norm <= tau + 1e-6, "norm {norm}");
            // Nearly all the mass sits just inside the sphere.
            assert!(norm > 0.9, "norm {norm}");
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v as f64 / z.batch() as f64;
            }
        }
        // Isotropic: each coordinate has sd about 0.1 / sqrt(2000).
        assert!(mean.iter().all(|m| m.abs() < 0.01), "{mean:?}");
        assert!(z.max_abs() <= tau as f32);
    }

    #[test]
    fn regime_dispatch_and_modes() {
        for mode in [TruncationMode::Coordinate, TruncationMode::Norm] {
            let r = mode.regime(0.7);
            assert_eq!(r.threshold(), Some(0.7));
            let z = sample::<f64>(8, 5, 3, r, SeedStream::new(1)).unwrap();
            assert_eq!(z.regime(), r);
            assert!(z.max_abs() <= 0.7);
        }
        assert!(!Regime::Standard.is_truncated());
    }

    #[test]
    fn one_hot_conditioning() {
        let z = sample_standard::<f64>(1, 2, 10, SeedStream::new(0))
            .unwrap()
            .with_labels(vec![3])
            .unwrap();
        let c = condition(&z, 10).unwrap();
        assert_eq!(c.values().shape(), &[1, 12]);
        assert_eq!(
            &c.values().data()[2..],
            &[0., 0., 0., 1., 0., 0., 0., 0., 0., 0.]
        );
        assert_eq!(&c.values().data()[..2], z.values().data());
    }

    #[test]
    fn single_class_and_empty_batch() {
        let z = sample_standard::<f32>(3, 2, 1, SeedStream::new(0)).unwrap();
        let c = condition(&z, 1).unwrap();
        for i in 0..3 {
            assert_eq!(c.values().row(i)[2], 1.0);
        }
        let e = condition(&empty_batch::<f32>(2), 10).unwrap();
        assert_eq!(e.values().shape(), &[0, 12]);
    }

    #[test]
    fn label_out_of_range() {
        let z = sample_standard::<f32>(1, 2, 10, SeedStream::new(0))
            .unwrap()
            .with_labels(vec![10])
            .unwrap();
        assert!(matches!(
            condition(&z, 10),
            Err(Error::LabelOutOfRange {
                label: 10,
                num_classes: 10
            })
        ));
    }
}
