use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{LossWeights, TrainConfig};
use super::losses::{clip_gradients, discriminator_loss, discriminator_loss_grad, fidelity_loss, gan_generator_loss, gan_warmup, pixel_loss, GeneratorLossTerms};
use crate::error::{Error, Result};
use crate::model::{magnitude_backward, magnitude_forward, Discriminator, DiscriminatorCache, UnrolledModel, UnrolledOutput};
use crate::nn::{AdamState, Mode, Parameters};
use crate::operators::LinearOperator;
use crate::tensor::{shape_str, Real, Tensor};

/// Measurements, initial images and ground truth, each with a leading sample axis.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainData<T = f32> {
    pub y: Tensor<T>,
    pub x_tilde: Tensor<T>,
    pub truth: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Batch<T = f32> {
    pub y: Tensor<T>,
    pub x_tilde: Tensor<T>,
    pub truth: Tensor<T>,
}

fn gather<T: Real>(t: &Tensor<T>, idx: &[usize]) -> Result<Tensor<T>> {
    let per = t.item_slice(0).len();
    let mut data = Vec::with_capacity(per * idx.len());
    for &i in idx {
        data.extend_from_slice(t.item_slice(i));
    }
    let mut shape = t.shape().to_vec();
    shape[0] = idx.len();
    Tensor::from_vec(&shape, data)
}

impl<T: Real> TrainData<T> {
    pub fn new(y: Tensor<T>, x_tilde: Tensor<T>, truth: Tensor<T>) -> Result<Self> {
        x_tilde.same_shape(&truth, "TrainData")?;
        if y.ndim() == 0 || y.shape()[0] != truth.shape()[0] || truth.ndim() != 4 || truth.shape()[0] == 0 {
            return Err(Error::shape("TrainData", "matching non-empty leading axes", format!("{} / {}", shape_str(y.shape()), shape_str(truth.shape()))));
        }
        Ok(TrainData { y, x_tilde, truth })
    }

    pub fn len(&self) -> usize {
        self.truth.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn batch(&self, idx: &[usize]) -> Result<Batch<T>> {
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.len()) {
            return Err(Error::InvalidArgument(format!("sample {bad} out of range for {} samples", self.len())));
        }
        Ok(Batch { y: gather(&self.y, idx)?, x_tilde: gather(&self.x_tilde, idx)?, truth: gather(&self.truth, idx)? })
    }

    pub fn all(&self) -> Batch<T> {
        Batch { y: self.y.clone(), x_tilde: self.x_tilde.clone(), truth: self.truth.clone() }
    }
}

/// Discriminator input: magnitude for two-channel complex images, the image itself otherwise.
pub fn discriminator_input<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    if x.shape().get(1) == Some(&2) {
        magnitude_forward(x)
    } else {
        Ok(x.clone())
    }
}

fn discriminator_input_backward<T: Real>(x: &Tensor<T>, input: &Tensor<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
    if x.shape().get(1) == Some(&2) {
        magnitude_backward(x, input, grad)
    } else {
        Ok(grad.clone())
    }
}

pub struct GeneratorStep<T> {
    pub terms: GeneratorLossTerms,
    pub grads: UnrolledModel<T>,
    /// Gradient with respect to `x_tilde` for fixed `y`.
    pub grad_x_tilde: Tensor<T>,
    pub output: UnrolledOutput<T>,
}

/// Generator cost on one batch and its parameter gradients; the discriminator is frozen.
pub fn generator_step<T: Real>(
    model: &UnrolledModel<T>,
    disc: Option<&Discriminator<T>>,
    op: &dyn LinearOperator<T>,
    batch: &Batch<T>,
    lambda: f64,
    weights: &LossWeights,
    mode: Mode,
) -> Result<GeneratorStep<T>> {
    let output = model.forward(op, &batch.y, &batch.x_tilde, mode)?;
    let b = T::of(batch.truth.shape()[0] as f64);
    let residuals = output.intermediates.iter().map(|c| batch.y.sub(&op.forward(c)?)).collect::<Result<Vec<_>>>()?;
    let fidelity = fidelity_loss(&residuals);
    let grad_checks: Vec<Tensor<T>> = output.cache.adjoint_residuals().iter().map(|a| a.scale(-T::of(2.0) / b)).collect();

    let (pixel, pixel_grad) = pixel_loss(&batch.truth, &output.x_hat, weights.gamma)?;
    let mut grad_x_hat = pixel_grad.scale(T::of(weights.eta));

    let mut gan = 0.0;
    if let Some(d) = disc {
        let input = discriminator_input(&output.x_hat)?;
        let (scores, cache) = d.forward(&input, Mode::Train)?;
        let (value, grad_scores) = gan_generator_loss(&scores);
        gan = value;
        let mut scratch = d.zeros_like();
        let g_input = d.backward(&cache, &grad_scores.scale(T::of(lambda)), &mut scratch)?;
        grad_x_hat.add_assign(&discriminator_input_backward(&output.x_hat, &input, &g_input)?)?;
    }
    let mut grads = model.zeros_like();
    let grad_x_tilde = model.backward(op, &output.cache, &grad_x_hat, &grad_checks, &mut grads)?;
    Ok(GeneratorStep { terms: GeneratorLossTerms { fidelity, gan, pixel, lambda, eta: weights.eta }, grads, grad_x_tilde, output })
}

pub struct DiscriminatorStep<T> {
    pub loss: f64,
    pub grads: Discriminator<T>,
    pub caches: [DiscriminatorCache<T>; 2],
}

pub fn discriminator_step<T: Real>(disc: &Discriminator<T>, real: &Tensor<T>, fake: &Tensor<T>) -> Result<DiscriminatorStep<T>> {
    let (d_real, cache_real) = disc.forward(&discriminator_input(real)?, Mode::Train)?;
    let (d_fake, cache_fake) = disc.forward(&discriminator_input(fake)?, Mode::Train)?;
    let loss = discriminator_loss(&d_real, &d_fake)?;
    let (g_real, g_fake) = discriminator_loss_grad(&d_real, &d_fake);
    let mut grads = disc.zeros_like();
    disc.backward(&cache_real, &g_real, &mut grads)?;
    disc.backward(&cache_fake, &g_fake, &mut grads)?;
    Ok(DiscriminatorStep { loss, grads, caches: [cache_real, cache_fake] })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub batch: usize,
    pub fidelity_loss: f64,
    pub pixel_loss: f64,
    pub gan_g_loss: f64,
    pub gan_d_loss: f64,
    pub lambda_eff: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

pub const LOG_HEADER: &str = "batch,fidelity_loss,pixel_loss,gan_g_loss,gan_d_loss,lambda_eff,grad_norm";

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{LOG_HEADER}\n");
        for r in &self.rows {
            writeln!(out, "{},{},{},{},{},{},{}", r.batch, r.fidelity_loss, r.pixel_loss, r.gan_g_loss, r.gan_d_loss, r.lambda_eff, r.grad_norm).unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

pub type CheckpointHook<'a, T> = &'a mut dyn FnMut(usize, &UnrolledModel<T>) -> Result<()>;

/// Alternating optimization: per mini-batch one discriminator step (skipped when
/// `lambda == 0`) and one generator step.
///
/// The discriminator is required when `weights.lambda > 0` and is never touched otherwise.
#[allow(clippy::too_many_arguments)]
pub fn train<T: Real>(
    model: &mut UnrolledModel<T>,
    mut disc: Option<&mut Discriminator<T>>,
    op: &dyn LinearOperator<T>,
    data: &TrainData<T>,
    config: &TrainConfig,
    weights: &LossWeights,
    mut checkpoint: Option<CheckpointHook<'_, T>>,
) -> Result<TrainLog> {
    config.validate()?;
    weights.validate()?;
    let use_gan = weights.lambda > 0.0;
    if use_gan && disc.is_none() {
        return Err(Error::InvalidArgument("lambda > 0 needs a discriminator".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut g_opt = AdamState::new(config.adam(), &model.params());
    let mut d_opt = match (&disc, use_gan) {
        (Some(d), true) => Some(AdamState::new(config.adam(), &d.params())),
        _ => None,
    };
    let n = data.len();
    let bs = config.batch_size.min(n);
    let mut log = TrainLog::default();
    let mut t = 0usize;
    let mut order: Vec<usize> = (0..n).collect();
    let start = Instant::now();
    'epochs: for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(bs) {
            if chunk.len() < bs {
                continue;
            }
            if config.max_batches.is_some_and(|m| t >= m) || config.max_seconds.is_some_and(|s| start.elapsed().as_secs_f64() >= s) {
                break 'epochs;
            }
            let batch = data.batch(chunk)?;
            let lambda = gan_warmup(t, weights.lambda, weights.warmup_batches);

            let mut gan_d_loss = 0.0;
            if use_gan {
                let d = disc.as_deref_mut().expect("checked above");
                let fake = model.forward(op, &batch.y, &batch.x_tilde, Mode::Train)?.x_hat;
                let step = discriminator_step(d, &batch.truth, &fake)?;
                if !step.loss.is_finite() {
                    return Err(Error::NonFiniteLoss { batch: t });
                }
                gan_d_loss = step.loss;
                d_opt.as_mut().expect("created with the discriminator").step(d.params_mut(), &step.grads.params()).map_err(|_| Error::NonFiniteLoss { batch: t })?;
                for c in &step.caches {
                    d.update_running(c);
                }
            }

            let d_ref = if use_gan { disc.as_deref() } else { None };
            let step = generator_step(model, d_ref, op, &batch, lambda, weights, Mode::Train)?;
            if !step.terms.total().is_finite() {
                return Err(Error::NonFiniteLoss { batch: t });
            }
            let mut grads = step.grads;
            let grad_norm = match config.clip_threshold {
                Some(c) => clip_gradients(&mut grads.params_mut(), c)?,
                None => grads.grad_norm(),
            };
            g_opt.step(model.params_mut(), &grads.params()).map_err(|_| Error::NonFiniteLoss { batch: t })?;
            model.update_running(&step.output.cache);
            log.rows.push(LogRow {
                batch: t,
                fidelity_loss: step.terms.fidelity,
                pixel_loss: step.terms.pixel,
                gan_g_loss: step.terms.gan,
                gan_d_loss,
                lambda_eff: lambda,
                grad_norm,
            });
            t += 1;
            if let (Some(every), Some(hook)) = (config.checkpoint_every, checkpoint.as_mut()) {
                if every > 0 && t % every == 0 {
                    hook(t, model)?;
                }
            }
        }
    }
    Ok(log)
}

/// Eval-mode reconstructions, processed in chunks of `batch_size`.
pub fn reconstruct<T: Real>(model: &UnrolledModel<T>, op: &dyn LinearOperator<T>, y: &Tensor<T>, x_tilde: &Tensor<T>, batch_size: usize) -> Result<Tensor<T>> {
    let n = x_tilde.shape()[0];
    let mut parts = Vec::new();
    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let out = model.forward(op, &gather(y, chunk)?, &gather(x_tilde, chunk)?, Mode::Eval)?;
        parts.push(out.x_hat);
    }
    Tensor::concat(&parts.iter().collect::<Vec<_>>())
}
