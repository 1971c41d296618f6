//! Random flip augmentation applied to real training batches.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::layers::flip_image;
use crate::rng::SeedStream;
use crate::scalar::Scalar;

use super::LabeledImageBatch;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentPolicy {
    /// Mirror left-right.
    #[serde(default)]
    pub horizontal_flip: bool,
    /// Mirror top-bottom.
    #[serde(default)]
    pub vertical_flip: bool,
    #[serde(default = "half")]
    pub probability: f64,
}

fn half() -> f64 {
    0.5
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy {
            horizontal_flip: false,
            vertical_flip: false,
            probability: half(),
        }
    }
}

impl AugmentPolicy {
    pub fn flips() -> Self {
        AugmentPolicy {
            horizontal_flip: true,
            vertical_flip: true,
            probability: half(),
        }
    }

    pub fn is_identity(&self) -> bool {
        !(self.horizontal_flip || self.vertical_flip) || self.probability <= 0.0
    }
}

/// Applies each enabled flip independently per image with the policy
/// probability. Labels are untouched.
pub fn augment<T: Scalar>(
    batch: &LabeledImageBatch<T>,
    policy: &AugmentPolicy,
    seed: SeedStream,
) -> LabeledImageBatch<T> {
    let mut out = batch.clone();
    if policy.is_identity() || batch.is_empty() {
        return out;
    }
    let shape = batch.images.shape().to_vec();
    let (h, w, c) = (shape[1], shape[2], shape[3]);
    let per = h * w * c;
    let mut rng = seed.rng();
    for img in out.images.data_mut().chunks_exact_mut(per) {
        let fh = rng.random_bool(policy.probability.min(1.0));
        let fv = rng.random_bool(policy.probability.min(1.0));
        flip_image(
            img,
            h,
            w,
            c,
            policy.vertical_flip && fv,
            policy.horizontal_flip && fh,
        );
    }
    out
}
