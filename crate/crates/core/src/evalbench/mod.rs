//! Accuracy, seed-level confidence intervals, embeddings, t-SNE, centroid
//! dispersion and report files.

mod analysis;
mod embed;
mod report;
mod tsne;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

pub use analysis::{dispersion_analysis, AnalysisInputs};
pub use embed::{centroid_dispersion, extract_embeddings, generated_batch, EmbeddingSet, Origin};
pub use report::{
    dispersion_by_origin, parse_accuracy_csv, render_accuracy_csv, render_report,
    render_scatter_csv, DispersionReport, ReportPaths,
};
pub use tsne::{conditional_affinities, tsne_2d, TsneConfig};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::trainer::{RunRecord, Variant};

/// Index of the largest entry; ties go to the lowest index. NaN never wins.
pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] || row[best].is_nan() && !v.is_nan() {
            best = i;
        }
    }
    best
}

pub(crate) fn count_correct<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<usize> {
    if logits.shape().len() != 2 || logits.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "logits {:?} for {} labels",
            logits.shape(),
            labels.len()
        )));
    }
    Ok(labels
        .iter()
        .enumerate()
        .filter(|&(i, &y)| argmax(logits.row(i)) == y)
        .count())
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::InvalidArgument("accuracy of an empty set".into()));
    }
    Ok(count_correct(logits, labels)? as f64 / labels.len() as f64)
}

/// `(mean, half_width)` of the 95% Student-t interval, with the sample
/// standard deviation.
pub fn confidence_interval(values: &[f64]) -> Result<(f64, f64)> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "a confidence interval needs at least 2 values, got {n}"
        )));
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let t = StudentsT::new(0.0, 1.0, nf - 1.0)
        .expect("dof >= 1")
        .inverse_cdf(0.975);
    Ok((mean, t * var.sqrt() / nf.sqrt()))
}

/// Accuracy summary of one (variant, size) cell over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub variant: Variant,
    pub train_size: usize,
    pub mean: f64,
    /// `None` with a single seed.
    pub half_width: Option<f64>,
    pub n_seeds: usize,
}

/// Groups records by (variant, size) and summarizes test accuracy.
pub fn summarize(records: &[RunRecord]) -> Vec<CellSummary> {
    let mut groups: std::collections::BTreeMap<(usize, Variant), Vec<f64>> = Default::default();
    for r in records {
        groups
            .entry((r.key.train_size, r.key.variant))
            .or_default()
            .push(r.test_accuracy);
    }
    groups
        .into_iter()
        .map(|((train_size, variant), accs)| {
            let (mean, half_width) = match confidence_interval(&accs) {
                Ok((m, h)) => (m, Some(h)),
                Err(_) => (accs[0], None),
            };
            CellSummary {
                variant,
                train_size,
                mean,
                half_width,
                n_seeds: accs.len(),
            }
        })
        .collect()
}
