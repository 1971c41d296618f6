//! Backbone embeddings and class-centroid dispersion.

use serde::{Deserialize, Serialize};

use crate::datapipe::{LabeledImageBatch, SourceTag};
use crate::error::{Error, Result};
use crate::latent::{self, Regime};
use crate::netspec::{Network, Section};
use crate::rng::SeedStream;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Real,
    AcganGen,
    WacganGptGen,
}

impl Origin {
    pub fn name(self) -> &'static str {
        match self {
            Origin::Real => "real",
            Origin::AcganGen => "acgan_gen",
            Origin::WacganGptGen => "wacgan_gpt_gen",
        }
    }
}

/// Points with their class labels and origin tags. `points` is `[n, d]`
/// backbone features or `[n, 2]` after t-SNE.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub points: Tensor<f64>,
    pub labels: Vec<usize>,
    pub origins: Vec<Origin>,
}

impl EmbeddingSet {
    pub fn count(&self, origin: Origin) -> usize {
        self.origins.iter().filter(|&&o| o == origin).count()
    }

    /// Rows belonging to `origin`, as `(points, labels)`.
    pub fn subset(&self, origin: Origin) -> (Tensor<f64>, Vec<usize>) {
        let idx: Vec<usize> = (0..self.origins.len())
            .filter(|&i| self.origins[i] == origin)
            .collect();
        (
            self.points.select_rows(&idx),
            idx.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    pub fn with_points(&self, points: Tensor<f64>) -> Result<Self> {
        if points.rows() != self.labels.len() {
            return Err(Error::Shape(
                "replacement points must keep the row count".into(),
            ));
        }
        Ok(EmbeddingSet {
            points,
            labels: self.labels.clone(),
            origins: self.origins.clone(),
        })
    }
}

/// `count` generated images with class-balanced labels (`i mod K`).
pub fn generated_batch<T: Scalar>(
    gen: &Network<T>,
    count: usize,
    regime: Regime,
    seed: SeedStream,
) -> Result<LabeledImageBatch<T>> {
    let spec = gen.spec();
    let k = spec.num_classes;
    let labels: Vec<usize> = (0..count).map(|i| i % k).collect();
    let z = latent::sample::<T>(count, spec.latent_dim, k, regime, seed)?
        .with_labels(labels.clone())?;
    let c = latent::condition(&z, k)?;
    Ok(LabeledImageBatch {
        images: gen.predict_images(c.values()),
        labels,
        source: SourceTag::Generated,
    })
}

/// Backbone-output features of each batch, forward pass only.
pub fn extract_embeddings<T: Scalar>(
    model: &Network<T>,
    batches: &[(&LabeledImageBatch<T>, Origin)],
    chunk: usize,
) -> Result<EmbeddingSet> {
    if !model.has_section(Section::Backbone) {
        return Err(Error::InvalidArgument("model has no backbone layer".into()));
    }
    let mut parts = Vec::new();
    let mut labels = Vec::new();
    let mut origins = Vec::new();
    for (b, origin) in batches {
        parts.push(model.predict_features(&b.images, chunk).cast::<f64>());
        labels.extend_from_slice(&b.labels);
        origins.extend(std::iter::repeat_n(*origin, b.len()));
    }
    let refs: Vec<&Tensor<f64>> = parts.iter().filter(|p| !p.is_empty()).collect();
    let points = if refs.is_empty() {
        Tensor::zeros(&[0, 0])
    } else {
        Tensor::concat_rows(&refs)?
    };
    Ok(EmbeddingSet {
        points,
        labels,
        origins,
    })
}

/// Mean and (population) standard deviation of the distance from each point
/// to the centroid of its class.
pub fn centroid_dispersion(
    points: &Tensor<f64>,
    labels: &[usize],
    num_classes: usize,
) -> Result<(f64, f64)> {
    let n = labels.len();
    if points.shape().len() != 2 || points.rows() != n {
        return Err(Error::Shape(format!(
            "{:?} points for {n} labels",
            points.shape()
        )));
    }
    let d = points.row_len();
    let mut sums = vec![0.0; num_classes * d];
    let mut counts = vec![0usize; num_classes];
    for (i, &y) in labels.iter().enumerate() {
        if y >= num_classes {
            return Err(Error::LabelOutOfRange {
                label: y,
                num_classes,
            });
        }
        counts[y] += 1;
        for (s, &p) in sums[y * d..(y + 1) * d].iter_mut().zip(points.row(i)) {
            *s += p;
        }
    }
    if let Some(c) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass(c.to_string()));
    }
    let dists: Vec<f64> = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let c = &sums[y * d..(y + 1) * d];
            points
                .row(i)
                .iter()
                .zip(c)
                .map(|(&p, &s)| (p - s / counts[y] as f64).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let mean = dists.iter().sum::<f64>() / n as f64;
    let var = dists.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    Ok((mean, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pts(v: &[[f64; 2]]) -> Tensor<f64> {
        Tensor::new(&[v.len(), 2], v.concat()).unwrap()
    }

    #[test]
    fn dispersion_examples() {
        assert_eq!(
            centroid_dispersion(&pts(&[[1.0, 1.0]; 3]), &[0, 0, 0], 1).unwrap(),
            (0.0, 0.0)
        );
        let (m, s) = centroid_dispersion(&pts(&[[-3.0, 0.0], [3.0, 0.0]]), &[0, 0], 1).unwrap();
        assert_abs_diff_eq!(m, 3.0);
        assert_abs_diff_eq!(s, 0.0);
        let sq = pts(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        let (m, s) = centroid_dispersion(&sq, &[0; 4], 1).unwrap();
        assert_abs_diff_eq!(m, 2f64.sqrt() / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s, 0.0, epsilon = 1e-12);
        assert!(matches!(
            centroid_dispersion(&sq, &[0; 4], 2),
            Err(Error::EmptyClass(_))
        ));
    }

    proptest! {
        #[test]
        fn dispersion_is_rigid_invariant_and_scales(
            raw in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 6..30),
            theta in 0.0f64..6.3, tx in -50.0f64..50.0, ty in -50.0f64..50.0, k in 0.1f64..10.0,
        ) {
            let labels: Vec<usize> = (0..raw.len()).map(|i| i % 3).collect();
            let p = Tensor::new(&[raw.len(), 2], raw.iter().flat_map(|&(x, y)| [x, y]).collect()).unwrap();
            let (c, s) = (theta.cos(), theta.sin());
            let moved = Tensor::new(&[raw.len(), 2],
                raw.iter().flat_map(|&(x, y)| [c * x - s * y + tx, s * x + c * y + ty]).collect()).unwrap();
            let scaled = p.map(|v| v * k);
            let (m0, s0) = centroid_dispersion(&p, &labels, 3).unwrap();
            let (m1, s1) = centroid_dispersion(&moved, &labels, 3).unwrap();
            let (m2, s2) = centroid_dispersion(&scaled, &labels, 3).unwrap();
            prop_assert!((m0 - m1).abs() < 1e-9 && (s0 - s1).abs() < 1e-9);
            prop_assert!((m2 - k * m0).abs() < 1e-9 * k.max(1.0) && (s2 - k * s0).abs() < 1e-9 * k.max(1.0));
        }
    }
}
