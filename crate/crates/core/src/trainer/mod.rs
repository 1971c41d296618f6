//! Training variants, single optimizer steps, epochs, and the seeded
//! experiment grid.

mod cell;
mod step;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use cell::{
    cell_dir, cell_seed, evaluate_accuracy, run_cell, run_experiment, train_epoch, CellKey,
    CellOutcome, EpochMetrics, ExperimentData, Grid, RunRecord, Trainer, MANIFEST_FILE,
    RECORD_FILE,
};
pub use step::{
    train_step_classifier, train_step_discriminator, train_step_generator, Consumer, LatentUse,
    Models, RoutingLog, StepSeeds, StepStats,
};

use crate::datapipe::AugmentPolicy;
use crate::error::{Error, Result};
use crate::latent::{Regime, TruncationMode, DEFAULT_TAU};
use crate::objectives::{ObjectiveConfig, ObjectiveMode};
use crate::optim::AdamConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "BaselineCNN")]
    BaselineCnn,
    #[serde(rename = "ACGAN")]
    Acgan,
    #[serde(rename = "WACGAN_GP")]
    WacganGp,
    #[serde(rename = "ACGAN_Trunc")]
    AcganTrunc,
    #[serde(rename = "WACGAN_GPT")]
    WacganGpt,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::BaselineCnn,
        Variant::Acgan,
        Variant::WacganGp,
        Variant::AcganTrunc,
        Variant::WacganGpt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::BaselineCnn => "BaselineCNN",
            Variant::Acgan => "ACGAN",
            Variant::WacganGp => "WACGAN_GP",
            Variant::AcganTrunc => "ACGAN_Trunc",
            Variant::WacganGpt => "WACGAN_GPT",
        }
    }

    /// `None` for the plain classifier.
    pub fn objective_mode(self) -> Option<ObjectiveMode> {
        match self {
            Variant::BaselineCnn => None,
            Variant::Acgan | Variant::AcganTrunc => Some(ObjectiveMode::LogLikelihood),
            Variant::WacganGp | Variant::WacganGpt => Some(ObjectiveMode::WassersteinGp),
        }
    }

    pub fn is_gan(self) -> bool {
        self.objective_mode().is_some()
    }

    pub fn truncated(self) -> bool {
        matches!(self, Variant::AcganTrunc | Variant::WacganGpt)
    }

    /// Flips for the baseline only; the GAN variants train without augmentation.
    pub fn augmentation(self) -> AugmentPolicy {
        match self {
            Variant::BaselineCnn => AugmentPolicy::flips(),
            _ => AugmentPolicy::default(),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}

/// Hyperparameters shared by every cell of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub gen_optimizer: AdamConfig,
    #[serde(default)]
    pub disc_optimizer: AdamConfig,
    /// Discriminator steps per generator step.
    #[serde(default = "one")]
    pub n_critic: usize,
    /// omega: weight of the class term in the discriminator objective.
    /// Part of the Wasserstein modification; log-likelihood variants are the
    /// standard AC-GAN and always use 1. With a weight of 1 the critic's
    /// unbounded source term swamps the class term at small data sizes.
    #[serde(default = "d_omega")]
    pub class_weight: f64,
    /// lambda: gradient-penalty weight, Wasserstein variants only.
    #[serde(default = "d_lambda")]
    pub penalty_weight: f64,
    #[serde(default = "one_f")]
    pub fake_class_weight: f64,
    /// tau: truncation threshold, truncation variants only.
    #[serde(default = "d_tau")]
    pub tau: f64,
    /// Whether `tau` bounds each coordinate or the whole vector.
    #[serde(default)]
    pub truncation: TruncationMode,
    /// Save a rolling checkpoint every this many epochs (0 = only the best).
    #[serde(default)]
    pub checkpoint_every: usize,
    /// Stop after this many epochs without a validation improvement (0 = never).
    #[serde(default)]
    pub patience: usize,
    /// Chunk size for evaluation forward passes.
    #[serde(default = "d_eval")]
    pub eval_batch: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            epochs: d_epochs(),
            batch_size: d_batch(),
            gen_optimizer: AdamConfig::default(),
            disc_optimizer: AdamConfig::default(),
            n_critic: 1,
            class_weight: d_omega(),
            penalty_weight: d_lambda(),
            fake_class_weight: 1.0,
            tau: d_tau(),
            truncation: TruncationMode::default(),
            checkpoint_every: 0,
            patience: 0,
            eval_batch: d_eval(),
        }
    }
}

/// Everything that defines one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub variant: Variant,
    pub seed: u64,
    pub schedule: Schedule,
}

fn d_epochs() -> usize {
    20
}
fn d_batch() -> usize {
    64
}
fn one() -> usize {
    1
}
fn one_f() -> f64 {
    1.0
}
fn d_omega() -> f64 {
    10.0
}
fn d_lambda() -> f64 {
    10.0
}
fn d_tau() -> f64 {
    DEFAULT_TAU
}
fn d_eval() -> usize {
    500
}

impl TrainConfig {
    pub fn new(variant: Variant) -> Self {
        TrainConfig {
            variant,
            seed: 0,
            schedule: Schedule::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schedule.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2".into()));
        }
        if self.schedule.n_critic == 0 {
            return Err(Error::Config("n_critic must be at least 1".into()));
        }
        if self.schedule.eval_batch == 0 {
            return Err(Error::Config("eval_batch must be positive".into()));
        }
        if self.variant.truncated() && !(self.schedule.tau > 0.0 && self.schedule.tau.is_finite()) {
            return Err(Error::Config(format!(
                "tau must be positive, got {}",
                self.schedule.tau
            )));
        }
        self.schedule.gen_optimizer.validate()?;
        self.schedule.disc_optimizer.validate()?;
        if let Some(o) = self.objective() {
            o.validate()?;
        }
        Ok(())
    }

    pub fn objective(&self) -> Option<ObjectiveConfig> {
        self.variant.objective_mode().map(|mode| ObjectiveConfig {
            mode,
            class_weight: match mode {
                ObjectiveMode::WassersteinGp => self.schedule.class_weight,
                ObjectiveMode::LogLikelihood => 1.0,
            },
            penalty_weight: self.schedule.penalty_weight,
            fake_class_weight: self.schedule.fake_class_weight,
        })
    }

    /// Regime of the latents feeding the discriminator class term.
    pub fn class_regime(&self) -> Regime {
        if self.variant.truncated() {
            self.schedule.truncation.regime(self.schedule.tau)
        } else {
            Regime::Standard
        }
    }
}
