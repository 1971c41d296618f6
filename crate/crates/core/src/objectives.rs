//! Source and class losses, the gradient penalty, and the composition of the
//! generator and discriminator objectives.
//!
//! Sign conventions: `L_S` and `L_C` are the log-likelihood style quantities
//! the players maximise. The class term is passed around in its minimisation
//! form (mean cross-entropy, i.e. `-L_C`). [`compose`] is the single place where
//! maximised quantities are negated, and both returned objectives are to be
//! minimised.
//!
//! The critic minimises `-L_S + omega * class_ce + lambda * penalty`, the
//! standard Wasserstein-GP critic loss with an auxiliary class term; the
//! generator minimises `L_S + class_ce`.

use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::rng::SeedStream;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveMode {
    LogLikelihood,
    WassersteinGp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub mode: ObjectiveMode,
    /// Weight of the class term in the discriminator objective.
    #[serde(default = "default_class_weight")]
    pub class_weight: f64,
    /// Gradient-penalty coefficient; only used in Wasserstein mode.
    #[serde(default = "default_penalty_weight")]
    pub penalty_weight: f64,
    /// Relative weight of the fake-image class term against the real-image one.
    #[serde(default = "default_fake_class_weight")]
    pub fake_class_weight: f64,
}

fn default_class_weight() -> f64 {
    1.0
}
fn default_penalty_weight() -> f64 {
    10.0
}
fn default_fake_class_weight() -> f64 {
    1.0
}

impl ObjectiveConfig {
    pub fn new(mode: ObjectiveMode) -> Self {
        ObjectiveConfig {
            mode,
            class_weight: default_class_weight(),
            penalty_weight: default_penalty_weight(),
            fake_class_weight: default_fake_class_weight(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("class_weight", self.class_weight),
            ("penalty_weight", self.penalty_weight),
            ("fake_class_weight", self.fake_class_weight),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} must be a finite non-negative number, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Penalty coefficient actually applied (zero outside Wasserstein mode).
    pub fn effective_penalty_weight(&self) -> f64 {
        match self.mode {
            ObjectiveMode::WassersteinGp => self.penalty_weight,
            ObjectiveMode::LogLikelihood => 0.0,
        }
    }
}

/// Loss components of one training step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBundle {
    /// `L_S` (maximised by the discriminator).
    pub source_loss: f64,
    /// Class term in minimisation form (cross-entropy).
    pub class_loss: f64,
    /// Gradient penalty, `>= 0`.
    pub penalty: f64,
    pub gen_objective: f64,
    pub disc_objective: f64,
}

/// `(gen_objective, disc_objective)`, both to be minimised.
pub fn compose(source: f64, class_ce: f64, penalty: f64, cfg: &ObjectiveConfig) -> (f64, f64) {
    let gen = source + class_ce;
    let disc = -source + cfg.class_weight * class_ce + cfg.effective_penalty_weight() * penalty;
    (gen, disc)
}

/// Graph form of the discriminator objective of [`compose`].
pub fn disc_objective_var<T: Scalar>(
    g: &mut Graph<T>,
    source: Var,
    class_ce: Var,
    penalty: Option<Var>,
    cfg: &ObjectiveConfig,
) -> Var {
    let neg_s = g.neg(source);
    let c = g.scale(class_ce, T::lit(cfg.class_weight));
    let mut total = g.add(neg_s, c);
    if let Some(p) = penalty {
        let lam = cfg.effective_penalty_weight();
        if lam != 0.0 {
            let p = g.scale(p, T::lit(lam));
            total = g.add(total, p);
        }
    }
    total
}

/// Graph form of the generator objective of [`compose`].
pub fn gen_objective_var<T: Scalar>(g: &mut Graph<T>, source: Var, class_ce: Var) -> Var {
    g.add(source, class_ce)
}

fn check_finite<T: Scalar>(t: &Tensor<T>, what: &'static str) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

fn check_pair<T: Scalar>(real: &Tensor<T>, fake: &Tensor<T>) -> Result<()> {
    check_finite(real, "real scores")?;
    check_finite(fake, "fake scores")?;
    if real.is_empty() || fake.is_empty() {
        return Err(Error::InvalidArgument("empty score batch".into()));
    }
    Ok(())
}

fn scalar_of<T: Scalar>(g: &Graph<T>, v: Var) -> T {
    g.value(v).data()[0]
}

// ---- source term ----------------------------------------------------------

/// `mean log sigma(real) + mean log(1 - sigma(fake))` from raw logits.
pub fn source_loss_loglik_var<T: Scalar>(
    g: &mut Graph<T>,
    real_logits: Var,
    fake_logits: Var,
) -> Var {
    let r = source_real_term_loglik(g, real_logits);
    let f = source_fake_term_loglik(g, fake_logits);
    g.add(r, f)
}

/// `mean log sigma(x)` = `-mean softplus(-x)`.
pub fn source_real_term_loglik<T: Scalar>(g: &mut Graph<T>, logits: Var) -> Var {
    let n = g.neg(logits);
    let sp = g.softplus(n);
    let m = g.mean_all(sp);
    g.neg(m)
}

/// `mean log(1 - sigma(x))` = `-mean softplus(x)`.
pub fn source_fake_term_loglik<T: Scalar>(g: &mut Graph<T>, logits: Var) -> Var {
    let sp = g.softplus(logits);
    let m = g.mean_all(sp);
    g.neg(m)
}

/// `mean(real) - mean(fake)` on raw critic scores.
pub fn source_loss_wasserstein_var<T: Scalar>(g: &mut Graph<T>, real: Var, fake: Var) -> Var {
    let r = g.mean_all(real);
    let f = g.mean_all(fake);
    g.sub(r, f)
}

/// Log-likelihood source loss from probabilities in `(0, 1)`.
///
/// Probabilities are mapped back to logits and evaluated with the stable
/// softplus form used in training.
pub fn source_loss_loglik<T: Scalar>(d_real: &Tensor<T>, d_fake: &Tensor<T>) -> Result<T> {
    check_pair(d_real, d_fake)?;
    let in_unit = |t: &Tensor<T>| t.data().iter().all(|&p| p > T::zero() && p < T::one());
    if !in_unit(d_real) || !in_unit(d_fake) {
        return Err(Error::InvalidArgument(
            "source probabilities must lie in (0, 1)".into(),
        ));
    }
    let logit = |p: T| (p / (T::one() - p)).ln();
    source_loss_loglik_logits(&d_real.map(logit), &d_fake.map(logit))
}

/// Log-likelihood source loss from raw logits.
pub fn source_loss_loglik_logits<T: Scalar>(
    real_logits: &Tensor<T>,
    fake_logits: &Tensor<T>,
) -> Result<T> {
    check_pair(real_logits, fake_logits)?;
    let mut g = Graph::inference();
    let r = g.constant(real_logits.clone());
    let f = g.constant(fake_logits.clone());
    let v = source_loss_loglik_var(&mut g, r, f);
    Ok(scalar_of(&g, v))
}

pub fn source_loss_wasserstein<T: Scalar>(d_real: &Tensor<T>, d_fake: &Tensor<T>) -> Result<T> {
    check_pair(d_real, d_fake)?;
    let mut g = Graph::inference();
    let r = g.constant(d_real.clone());
    let f = g.constant(d_fake.clone());
    let v = source_loss_wasserstein_var(&mut g, r, f);
    Ok(scalar_of(&g, v))
}

// ---- class term -----------------------------------------------------------

fn one_hot<T: Scalar>(labels: &[usize], k: usize) -> Result<Tensor<T>> {
    let mut data = vec![T::zero(); labels.len() * k];
    for (i, &l) in labels.iter().enumerate() {
        if l >= k {
            return Err(Error::LabelOutOfRange {
                label: l,
                num_classes: k,
            });
        }
        data[i * k + l] = T::one();
    }
    Tensor::new(&[labels.len(), k], data)
}

/// Mean cross-entropy `-mean log softmax(logits)[label]` on a `[B, K]` var.
pub fn class_loss_var<T: Scalar>(g: &mut Graph<T>, logits: Var, labels: &[usize]) -> Result<Var> {
    let shape = g.shape(logits).to_vec();
    let [b, k] = shape[..] else {
        return Err(Error::Shape(format!(
            "class logits must be [B, K], got {shape:?}"
        )));
    };
    if b != labels.len() {
        return Err(Error::Shape(format!(
            "{} labels for {b} logit rows",
            labels.len()
        )));
    }
    if k < 2 {
        return Err(Error::InvalidArgument("class loss needs K >= 2".into()));
    }
    let mask = g.constant(one_hot(labels, k)?);
    let ls = g.log_softmax(logits);
    let picked = g.mul(ls, mask);
    let s = g.mean_all(picked);
    // mean over B*K entries -> mean over B rows
    Ok(g.scale(s, -T::from_usize_lossy(k)))
}

pub fn class_loss<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<T> {
    check_finite(logits, "class logits")?;
    if labels.is_empty() {
        return Err(Error::InvalidArgument("empty class batch".into()));
    }
    let mut g = Graph::inference();
    let l = g.constant(logits.clone());
    let v = class_loss_var(&mut g, l, labels)?;
    Ok(scalar_of(&g, v))
}

// ---- gradient penalty -----------------------------------------------------

/// Anything that maps an image batch on a graph to raw source scores `[B]`.
pub trait Critic<T: Scalar> {
    fn source(&self, g: &mut Graph<T>, images: Var) -> Var;
}

impl<T: Scalar, F> Critic<T> for F
where
    F: Fn(&mut Graph<T>, Var) -> Var,
{
    fn source(&self, g: &mut Graph<T>, images: Var) -> Var {
        self(g, images)
    }
}

/// One `U[0, 1]` mixing weight per sample.
pub fn draw_mixing_weights<T: Scalar>(batch: usize, seed: SeedStream) -> Vec<T> {
    use rand::Rng;
    let mut rng = seed.rng();
    (0..batch).map(|_| T::lit(rng.random::<f64>())).collect()
}

/// `eps_i * real_i + (1 - eps_i) * fake_i`, row by row.
pub fn interpolate<T: Scalar>(real: &Tensor<T>, fake: &Tensor<T>, eps: &[T]) -> Result<Tensor<T>> {
    if real.shape() != fake.shape() {
        return Err(Error::Shape(format!(
            "real {:?} vs fake {:?}",
            real.shape(),
            fake.shape()
        )));
    }
    if eps.len() != real.rows() {
        return Err(Error::Shape(format!(
            "{} mixing weights for {} samples",
            eps.len(),
            real.rows()
        )));
    }
    let w = real.row_len();
    let mut out = Vec::with_capacity(real.len());
    for (i, &e) in eps.iter().enumerate() {
        let (r, f) = (real.row(i), fake.row(i));
        out.extend(r.iter().zip(f).map(|(&a, &b)| e * a + (T::one() - e) * b));
    }
    debug_assert_eq!(out.len(), real.rows() * w);
    Tensor::new(real.shape(), out)
}

/// Gradient penalty with explicit mixing weights, as a differentiable node:
/// `mean_i (||grad_x D(x_hat_i)||_2 - 1)^2`.
pub fn gradient_penalty_with_eps<T: Scalar>(
    g: &mut Graph<T>,
    critic: &impl Critic<T>,
    real: &Tensor<T>,
    fake: &Tensor<T>,
    eps: &[T],
) -> Result<Var> {
    let mixed = interpolate(real, fake, eps)?;
    let b = mixed.rows();
    let width = mixed.row_len();
    let x_hat = g.param(mixed);
    let scores = critic.source(g, x_hat);
    let total = g.sum_all(scores);
    let Some(grad) = g.grad(total, &[x_hat], true)[0] else {
        // Critic ignores its input: every gradient norm is zero.
        return Ok(g.constant(Tensor::scalar(T::one())));
    };
    let rows = g.reshape(grad, &[b, width]);
    let sq = g.square(rows);
    let sumsq = g.sum_cols(sq);
    let sumsq = g.add_scalar(sumsq, T::min_positive_value());
    let norm = g.pow(sumsq, T::lit(0.5));
    let dev = g.add_scalar(norm, -T::one());
    let dev2 = g.square(dev);
    Ok(g.mean_all(dev2))
}

/// Gradient penalty with mixing weights drawn from `eps_stream`.
pub fn gradient_penalty<T: Scalar>(
    g: &mut Graph<T>,
    critic: &impl Critic<T>,
    real: &Tensor<T>,
    fake: &Tensor<T>,
    eps_stream: SeedStream,
) -> Result<Var> {
    let eps = draw_mixing_weights(real.rows(), eps_stream);
    gradient_penalty_with_eps(g, critic, real, fake, &eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn t(v: &[f64]) -> Tensor<f64> {
        Tensor::new(&[v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn loglik_examples() {
        let half = source_loss_loglik(&t(&[0.5]), &t(&[0.5])).unwrap();
        assert_abs_diff_eq!(half, 2.0 * 0.5f64.ln(), epsilon = 1e-12);
        let v = source_loss_loglik(&t(&[0.9, 0.8]), &t(&[0.1, 0.2])).unwrap();
        assert_abs_diff_eq!(v, 0.9f64.ln() + 0.8f64.ln(), epsilon = 1e-12);
        let eps = 1e-12;
        let near = source_loss_loglik(&t(&[1.0 - eps]), &t(&[eps])).unwrap();
        assert!(near.abs() < 1e-9);
        assert!(source_loss_loglik(&t(&[1.0]), &t(&[0.5])).is_err());
        assert!(source_loss_loglik(&t(&[f64::NAN]), &t(&[0.5])).is_err());
    }

    #[test]
    fn loglik_logits_stay_finite_at_large_magnitude() {
        let v = source_loss_loglik_logits(&t(&[1e3, -1e3]), &t(&[-1e3, 1e3])).unwrap();
        assert!(v.is_finite());
        assert_abs_diff_eq!(v, -1e3, epsilon = 1e-9);
    }

    #[test]
    fn wasserstein_examples() {
        assert_eq!(
            source_loss_wasserstein(&t(&[1.0, 3.0]), &t(&[0.0, 2.0])).unwrap(),
            1.0
        );
        assert_eq!(
            source_loss_wasserstein(&t(&[0.3, 0.7]), &t(&[0.3, 0.7])).unwrap(),
            0.0
        );
        assert_eq!(
            source_loss_wasserstein(&t(&[-1.0]), &t(&[1.0])).unwrap(),
            -2.0
        );
        assert!(source_loss_wasserstein(&t(&[f64::INFINITY]), &t(&[1.0])).is_err());
    }

    #[test]
    fn class_loss_examples() {
        let l = Tensor::new(&[1, 2], vec![2.0, 0.0]).unwrap();
        assert_abs_diff_eq!(
            class_loss(&l, &[0]).unwrap(),
            -(2f64.exp() / (2f64.exp() + 1.0)).ln(),
            epsilon = 1e-12
        );
        let u = Tensor::zeros(&[3, 10]);
        assert_abs_diff_eq!(
            class_loss::<f64>(&u, &[0, 4, 9]).unwrap(),
            10f64.ln(),
            epsilon = 1e-12
        );
        let mut big = Tensor::<f64>::zeros(&[2, 3]);
        big.data_mut()[1] = 1e6;
        big.data_mut()[3 + 2] = 1e6;
        assert!(class_loss(&big, &[1, 2]).unwrap().abs() < 1e-12);
        assert!(matches!(
            class_loss(&big, &[1, 3]),
            Err(Error::LabelOutOfRange { .. })
        ));
        let mut bad = big.clone();
        bad.data_mut()[0] = f64::NAN;
        assert!(class_loss(&bad, &[1, 2]).is_err());
    }

    #[test]
    fn compose_examples() {
        let wgp = ObjectiveConfig::new(ObjectiveMode::WassersteinGp);
        assert_eq!(compose(1.0, 2.0, 0.5, &wgp), (3.0, 6.0));
        assert_eq!(compose(0.0, 0.0, 0.0, &wgp).0, 0.0);
        let ll = ObjectiveConfig::new(ObjectiveMode::LogLikelihood);
        // maximise L_S + L_C with L_C = -ce
        let (_, d) = compose(-0.7, 0.4, 123.0, &ll);
        assert_eq!(d, -(-0.7 + -0.4));
    }

    #[test]
    fn compose_var_agrees_with_scalar_form() {
        let cfg = ObjectiveConfig {
            class_weight: 0.3,
            ..ObjectiveConfig::new(ObjectiveMode::WassersteinGp)
        };
        let mut g = Graph::<f64>::inference();
        let s = g.constant(Tensor::scalar(0.25));
        let c = g.constant(Tensor::scalar(1.5));
        let p = g.constant(Tensor::scalar(0.125));
        let d = disc_objective_var(&mut g, s, c, Some(p), &cfg);
        let gen = gen_objective_var(&mut g, s, c);
        let (ge, de) = compose(0.25, 1.5, 0.125, &cfg);
        assert_eq!(g.value(d).data()[0], de);
        assert_eq!(g.value(gen).data()[0], ge);
    }

    #[test]
    fn penalty_of_scalar_doubling_critic_is_one() {
        let mut g = Graph::<f64>::new();
        let critic = |g: &mut Graph<f64>, x: Var| {
            let b = g.shape(x)[0];
            let s = g.scale(x, 2.0);
            g.reshape(s, &[b])
        };
        let real = Tensor::new(&[3, 1], vec![0.1, -2.0, 5.0]).unwrap();
        let fake = Tensor::new(&[3, 1], vec![1.0, 0.0, -3.0]).unwrap();
        let p = gradient_penalty(&mut g, &critic, &real, &fake, SeedStream::new(4)).unwrap();
        assert_abs_diff_eq!(g.value(p).data()[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn interpolation_endpoint() {
        let real = Tensor::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let fake = Tensor::new(&[2, 2], vec![-1.0, -2.0, -3.0, -4.0]).unwrap();
        assert_eq!(interpolate(&real, &fake, &[1.0, 1.0]).unwrap(), real);
        assert_eq!(interpolate(&real, &fake, &[0.0, 0.0]).unwrap(), fake);
        assert!(interpolate(&real, &Tensor::zeros(&[2, 3]), &[1.0, 1.0]).is_err());
    }
}
