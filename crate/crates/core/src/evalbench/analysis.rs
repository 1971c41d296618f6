//! Embedding analysis of a real / AC-GAN / WAC-GAN-GPT sample trio.

use crate::datapipe::{stratified_subset, Dataset, Split};
use crate::error::Result;
use crate::latent::Regime;
use crate::netspec::Network;
use crate::rng::SeedStream;
use crate::scalar::Scalar;

use super::embed::{extract_embeddings, generated_batch, EmbeddingSet, Origin};
use super::report::{dispersion_by_origin, DispersionReport};
use super::tsne::{tsne_2d, TsneConfig};

/// Inputs of [`dispersion_analysis`].
pub struct AnalysisInputs<'a, T: Scalar> {
    /// Classifier whose backbone provides the features.
    pub cnn: &'a Network<T>,
    pub acgan_generator: &'a Network<T>,
    pub wgpt_generator: &'a Network<T>,
    /// Source of the real images (class-balanced draw).
    pub real: &'a Dataset,
    pub per_origin: usize,
    /// Truncated regime for the WAC-GAN-GPT samples.
    pub wgpt_regime: Regime,
}

/// Draws `per_origin` real, standard AC-GAN and truncated WAC-GAN-GPT
/// images, embeds all of them with the CNN backbone, and runs one joint
/// t-SNE per seed. Returns per-seed dispersion reports and the layout of
/// the first seed.
pub fn dispersion_analysis<T: Scalar>(
    inputs: &AnalysisInputs<'_, T>,
    tsne: &TsneConfig,
    tsne_seeds: &[u64],
    seed: SeedStream,
) -> Result<(Vec<DispersionReport>, Option<EmbeddingSet>)> {
    let n = inputs.per_origin;
    let real_idx = stratified_subset(inputs.real, n, Split::Test, seed.derive("real"))?;
    let real = inputs.real.batch::<T>(&real_idx.indices);
    let acgan = generated_batch(
        inputs.acgan_generator,
        n,
        Regime::Standard,
        seed.derive("acgan"),
    )?;
    let wgpt = generated_batch(
        inputs.wgpt_generator,
        n,
        inputs.wgpt_regime,
        seed.derive("wgpt"),
    )?;
    let features = extract_embeddings(
        inputs.cnn,
        &[
            (&real, Origin::Real),
            (&acgan, Origin::AcganGen),
            (&wgpt, Origin::WacganGptGen),
        ],
        256,
    )?;
    let k = inputs.cnn.spec().num_classes;
    let mut reports = Vec::new();
    let mut first = None;
    for &s in tsne_seeds {
        let layout = features.with_points(tsne_2d(&features.points, tsne, SeedStream::new(s))?)?;
        reports.push(dispersion_by_origin(&layout, k, s)?);
        if first.is_none() {
            first = Some(layout);
        }
    }
    Ok((reports, first))
}
