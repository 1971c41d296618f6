//! Single optimizer steps for each player, with latent routing records.

use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::datapipe::LabeledImageBatch;
use crate::error::{Error, Result};
use crate::latent::{self, LatentBatch, Regime};
use crate::netspec::{ArchSpec, NetRole, Network};
use crate::objectives::{self, LossBundle, ObjectiveConfig, ObjectiveMode};
use crate::optim::Adam;
use crate::rng::SeedStream;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::TrainConfig;

/// Which part of the objective consumed a latent batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Consumer {
    DiscSource,
    DiscClass,
    Generator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentUse {
    pub consumer: Consumer,
    pub regime: Regime,
    pub rows: usize,
    pub max_abs: f64,
}

/// Instrumentation collected by the step functions when supplied.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoutingLog {
    pub latents: Vec<LatentUse>,
    pub penalty_evaluations: usize,
}

impl RoutingLog {
    fn record<T: Scalar>(
        log: &mut Option<&mut RoutingLog>,
        consumer: Consumer,
        z: &LatentBatch<T>,
    ) {
        if let Some(l) = log.as_deref_mut() {
            l.latents.push(LatentUse {
                consumer,
                regime: z.regime(),
                rows: z.batch(),
                max_abs: z.max_abs().as_f64(),
            });
        }
    }

    pub fn uses(&self, consumer: Consumer) -> impl Iterator<Item = &LatentUse> {
        self.latents.iter().filter(move |u| u.consumer == consumer)
    }
}

/// Per-step random streams. Each consumer has its own stream so turning
/// truncation on never shifts the draws seen elsewhere.
#[derive(Debug, Clone, Copy)]
pub struct StepSeeds {
    pub disc_source: SeedStream,
    pub disc_class: SeedStream,
    pub generator: SeedStream,
    pub penalty: SeedStream,
}

impl StepSeeds {
    pub fn new(root: SeedStream, step: u64) -> Self {
        StepSeeds {
            disc_source: root.derive("latent/disc_source").derive_index(step),
            disc_class: root.derive("latent/disc_class").derive_index(step),
            generator: root.derive("latent/generator").derive_index(step),
            penalty: root.derive("penalty").derive_index(step),
        }
    }
}

/// The networks and optimizer state of one run. The discriminator slot
/// holds the plain classifier for the baseline variant.
#[derive(Debug, Clone)]
pub struct Models<T: Scalar> {
    pub disc: Network<T>,
    pub gen: Option<Network<T>>,
    pub disc_opt: Adam<T>,
    pub gen_opt: Option<Adam<T>>,
}

impl<T: Scalar> Models<T> {
    pub fn new(spec: &ArchSpec, cfg: &TrainConfig, init: SeedStream) -> Result<Self> {
        let (disc, gen) = if cfg.variant.is_gan() {
            (
                crate::netspec::build_discriminator(spec, init)?,
                Some(crate::netspec::build_generator(spec, init)?),
            )
        } else {
            (crate::netspec::build_baseline_cnn(spec, init)?, None)
        };
        let disc_opt = Adam::new(cfg.schedule.disc_optimizer, disc.params());
        let gen_opt = gen
            .as_ref()
            .map(|g| Adam::new(cfg.schedule.gen_optimizer, g.params()));
        Ok(Models {
            disc,
            gen,
            disc_opt,
            gen_opt,
        })
    }

    fn generator(&self) -> Result<&Network<T>> {
        self.gen
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("variant has no generator".into()))
    }
}

fn scalar<T: Scalar>(g: &Graph<T>, v: Var) -> f64 {
    g.value(v).data()[0].as_f64()
}

fn apply_grads<T: Scalar>(
    g: &mut Graph<T>,
    loss: Var,
    vars: &[Var],
    net: &mut Network<T>,
    opt: &mut Adam<T>,
) {
    let grads = g.grad(loss, vars, false);
    let tensors: Vec<Option<&Tensor<T>>> = grads.iter().map(|v| v.map(|v| g.value(v))).collect();
    opt.step(net.params_mut(), &tensors);
}

fn generate<T: Scalar>(gen: &Network<T>, z: &LatentBatch<T>, k: usize) -> Result<Tensor<T>> {
    let c = latent::condition(z, k)?;
    Ok(gen.predict_images(c.values()))
}

fn correct<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> usize {
    labels
        .iter()
        .enumerate()
        .filter(|&(i, &y)| crate::evalbench::argmax(logits.row(i)) == y)
        .count()
}

/// Step outcome: loss components and how many real samples the
/// classifier head got right before the update.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepStats {
    pub losses: LossBundle,
    pub correct: usize,
}

/// One discriminator update.
///
/// Source term: `real` against fakes from standard latents. Class term:
/// real labels plus fakes from the class regime (truncated when the variant
/// truncates). In Wasserstein mode the gradient penalty is taken on the
/// source head between `real` and the standard fakes. Only discriminator
/// parameters move.
pub fn train_step_discriminator<T: Scalar>(
    models: &mut Models<T>,
    real: &LabeledImageBatch<T>,
    cfg: &TrainConfig,
    seeds: StepSeeds,
    mut log: Option<&mut RoutingLog>,
) -> Result<StepStats> {
    let obj = cfg
        .objective()
        .ok_or_else(|| Error::InvalidArgument("baseline has no discriminator step".into()))?;
    let gen = models.generator()?;
    let spec = models.disc.spec().clone();
    let (b, k) = (real.len(), spec.num_classes);

    let z_src = latent::sample_standard::<T>(b, spec.latent_dim, k, seeds.disc_source)?;
    RoutingLog::record(&mut log, Consumer::DiscSource, &z_src);
    let fake_src = generate(gen, &z_src, k)?;
    let class_fakes = match cfg.class_regime() {
        Regime::Standard => None,
        regime => {
            let z = latent::sample(b, spec.latent_dim, k, regime, seeds.disc_class)?;
            RoutingLog::record(&mut log, Consumer::DiscClass, &z);
            let imgs = generate(gen, &z, k)?;
            Some((imgs, z.labels().to_vec()))
        }
    };
    if class_fakes.is_none() {
        RoutingLog::record(&mut log, Consumer::DiscClass, &z_src);
    }

    let disc = &models.disc;
    let mut g = Graph::new();
    let bound = disc.bind(&mut g, true);
    let x_real = g.constant(real.images.clone());
    let (s_real, c_real) = disc.discriminate(&mut g, &bound, x_real);
    let x_fake = g.constant(fake_src.clone());
    let f_fake = disc.features(&mut g, &bound, x_fake);
    let s_fake = disc.source_scores(&mut g, &bound, f_fake);
    let (c_fake, fake_labels) = match &class_fakes {
        None => (
            disc.class_logits(&mut g, &bound, f_fake),
            z_src.labels().to_vec(),
        ),
        Some((imgs, labels)) => {
            let x = g.constant(imgs.clone());
            let f = disc.features(&mut g, &bound, x);
            (disc.class_logits(&mut g, &bound, f), labels.clone())
        }
    };
    let correct = correct(g.value(c_real), &real.labels);

    let source = match obj.mode {
        ObjectiveMode::LogLikelihood => objectives::source_loss_loglik_var(&mut g, s_real, s_fake),
        ObjectiveMode::WassersteinGp => {
            objectives::source_loss_wasserstein_var(&mut g, s_real, s_fake)
        }
    };
    let ce_real = objectives::class_loss_var(&mut g, c_real, &real.labels)?;
    let ce_fake = objectives::class_loss_var(&mut g, c_fake, &fake_labels)?;
    let ce_fake = g.scale(ce_fake, T::lit(obj.fake_class_weight));
    let class_ce = g.add(ce_real, ce_fake);
    let penalty = match obj.mode {
        ObjectiveMode::WassersteinGp => {
            if let Some(l) = log.as_deref_mut() {
                l.penalty_evaluations += 1;
            }
            let critic = |g: &mut Graph<T>, x: Var| {
                let f = disc.features(g, &bound, x);
                disc.source_scores(g, &bound, f)
            };
            Some(objectives::gradient_penalty(
                &mut g,
                &critic,
                &real.images,
                &fake_src,
                seeds.penalty,
            )?)
        }
        ObjectiveMode::LogLikelihood => None,
    };
    let total = objectives::disc_objective_var(&mut g, source, class_ce, penalty, &obj);
    let losses = bundle(&g, source, class_ce, penalty, &obj);
    check_losses(&losses)?;
    let vars = bound.vars.clone();
    apply_grads(&mut g, total, &vars, &mut models.disc, &mut models.disc_opt);
    Ok(StepStats { losses, correct })
}

/// One generator update on standard latents, minimising `L_S + class_ce`
/// on its own samples. Only generator parameters move.
pub fn train_step_generator<T: Scalar>(
    models: &mut Models<T>,
    cfg: &TrainConfig,
    batch: usize,
    seeds: StepSeeds,
    mut log: Option<&mut RoutingLog>,
) -> Result<LossBundle> {
    let obj = cfg
        .objective()
        .ok_or_else(|| Error::InvalidArgument("baseline has no generator step".into()))?;
    let spec = models.disc.spec().clone();
    let k = spec.num_classes;
    let z = latent::sample_standard::<T>(batch, spec.latent_dim, k, seeds.generator)?;
    RoutingLog::record(&mut log, Consumer::Generator, &z);
    let cond = latent::condition(&z, k)?.into_tensor();

    let gen = models.generator()?;
    let mut g = Graph::new();
    let gb = gen.bind(&mut g, true);
    let db = models.disc.bind(&mut g, false);
    let zc = g.constant(cond);
    let fake = gen.generate(&mut g, &gb, zc);
    let (s_fake, c_fake) = models.disc.discriminate(&mut g, &db, fake);
    // Only the fake half of L_S depends on the generator.
    let source = match obj.mode {
        ObjectiveMode::LogLikelihood => objectives::source_fake_term_loglik(&mut g, s_fake),
        ObjectiveMode::WassersteinGp => {
            let m = g.mean_all(s_fake);
            g.neg(m)
        }
    };
    let ce = objectives::class_loss_var(&mut g, c_fake, z.labels())?;
    let total = objectives::gen_objective_var(&mut g, source, ce);
    let losses = bundle(&g, source, ce, None, &obj);
    check_losses(&losses)?;
    let vars = gb.vars.clone();
    let gen = models.gen.as_mut().expect("checked above");
    let opt = models
        .gen_opt
        .as_mut()
        .expect("optimizer exists with generator");
    apply_grads(&mut g, total, &vars, gen, opt);
    Ok(losses)
}

/// Plain supervised step for the baseline classifier.
pub fn train_step_classifier<T: Scalar>(
    models: &mut Models<T>,
    batch: &LabeledImageBatch<T>,
) -> Result<StepStats> {
    if models.disc.role() != NetRole::BaselineCnn {
        return Err(Error::InvalidArgument(
            "classifier step needs the baseline network".into(),
        ));
    }
    let net = &models.disc;
    let mut g = Graph::new();
    let bound = net.bind(&mut g, true);
    let x = g.constant(batch.images.clone());
    let f = net.features(&mut g, &bound, x);
    let logits = net.class_logits(&mut g, &bound, f);
    let correct = correct(g.value(logits), &batch.labels);
    let ce = objectives::class_loss_var(&mut g, logits, &batch.labels)?;
    let v = scalar(&g, ce);
    let losses = LossBundle {
        class_loss: v,
        disc_objective: v,
        ..Default::default()
    };
    check_losses(&losses)?;
    let vars = bound.vars.clone();
    apply_grads(&mut g, ce, &vars, &mut models.disc, &mut models.disc_opt);
    Ok(StepStats { losses, correct })
}

fn bundle<T: Scalar>(
    g: &Graph<T>,
    source: Var,
    class_ce: Var,
    penalty: Option<Var>,
    cfg: &ObjectiveConfig,
) -> LossBundle {
    let (s, c) = (scalar(g, source), scalar(g, class_ce));
    let p = penalty.map_or(0.0, |p| scalar(g, p));
    let (gen_objective, disc_objective) = objectives::compose(s, c, p, cfg);
    LossBundle {
        source_loss: s,
        class_loss: c,
        penalty: p,
        gen_objective,
        disc_objective,
    }
}

fn check_losses(l: &LossBundle) -> Result<()> {
    let all = [
        l.source_loss,
        l.class_loss,
        l.penalty,
        l.gen_objective,
        l.disc_objective,
    ];
    if all.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("training loss"))
    }
}
