//! Finite-difference verification of every differentiable layer, the model
//! composites and the training losses.
//!
//! Each check draws random parameters and inputs, evaluates a scalar built from
//! the layer output (a random linear projection unless the check is a loss) and
//! compares the analytic gradient with central differences. Large parameter
//! tensors are checked on a random subset of coordinates; every tensor is covered.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{magnitude_backward, magnitude_forward, Discriminator, Generator, GeneratorConfig, ResidualBlock, UnrolledModel, ValueMap, WeightMode};
use crate::nn::gradcheck::{relative_error_with_floor, GradCheck};
use crate::nn::{activate, activation_backward, Activation, BatchNorm2d, Conv2d, ConvTranspose2d, Mode, Padding, Parameters};
use crate::operators::{generate_mask, LinearOperator, MaskSpec, MaskedFourier};
use crate::tensor::Tensor;
use crate::train::{discriminator_loss, discriminator_loss_grad, generator_step, pixel_loss, Batch, LossWeights};

pub const THRESHOLD: f64 = 1e-4;
pub const STEP: f64 = 1e-5;
/// Denominator floor relative to `max(|f|, 1)`. Entries whose true gradient is
/// zero (biases ahead of batch norm, dead units) then need an absolute match of
/// `THRESHOLD * NEAR_ZERO_FLOOR * |f|`; their quotient is roundoff of order `1e-9 |f|`.
pub const NEAR_ZERO_FLOOR: f64 = 1e-3;
/// Quotients further than this from the analytic value are re-estimated.
pub const REFINE_AT: f64 = THRESHOLD / 100.0;
/// Coordinates drawn per tensor when it is larger than this.
pub const COORDS_PER_TENSOR: usize = 24;

/// A scalar function of a flat point with its analytic gradient at `point`.
pub struct Problem {
    pub point: Tensor<f64>,
    pub segments: Vec<usize>,
    pub grad: Tensor<f64>,
    pub eval: Box<dyn Fn(&Tensor<f64>) -> Result<f64>>,
}

pub fn flatten(tensors: &[&Tensor<f64>]) -> (Tensor<f64>, Vec<usize>) {
    let data: Vec<f64> = tensors.iter().flat_map(|t| t.data().iter().copied()).collect();
    let n = data.len();
    (Tensor::from_vec(&[n], data).expect("flat length"), tensors.iter().map(|t| t.len()).collect())
}

pub fn unflatten(flat: &Tensor<f64>, targets: Vec<&mut Tensor<f64>>) -> Result<()> {
    let total: usize = targets.iter().map(|t| t.len()).sum();
    if total != flat.len() {
        return Err(Error::shape("unflatten", total, flat.len()));
    }
    let mut offset = 0;
    for t in targets {
        let n = t.len();
        t.data_mut().copy_from_slice(&flat.data()[offset..offset + n]);
        offset += n;
    }
    Ok(())
}

fn jitter<M: Parameters<f64>>(model: &mut M, sigma: f64, rng: &mut ChaCha8Rng) {
    for p in model.params_mut() {
        let noise = Tensor::randn(p.shape(), sigma, rng);
        p.add_assign(&noise).expect("same shape");
    }
}

/// Gradient problem over the parameters of `model` and the input `x`.
///
/// `f` returns the scalar, the parameter gradients (same layout as the model) and the input gradient.
pub fn model_problem<M, F>(model: M, x: Tensor<f64>, f: F) -> Result<Problem>
where
    M: Parameters<f64> + Clone + 'static,
    F: Fn(&M, &Tensor<f64>) -> Result<(f64, M, Tensor<f64>)> + 'static,
{
    let (_, grads, gx) = f(&model, &x)?;
    let mut tensors = model.params();
    tensors.push(&x);
    let (point, segments) = flatten(&tensors);
    let mut gts = grads.params();
    gts.push(&gx);
    let (grad, _) = flatten(&gts);
    let x_shape = x.shape().to_vec();
    let eval = move |p: &Tensor<f64>| {
        let mut m = model.clone();
        let mut xi = Tensor::zeros(&x_shape);
        let mut targets = m.params_mut();
        targets.push(&mut xi);
        unflatten(p, targets)?;
        Ok(f(&m, &xi)?.0)
    };
    Ok(Problem { point, segments, grad, eval: Box::new(eval) })
}

/// Gradient problem over an input only.
pub fn input_problem<F>(x: Tensor<f64>, f: F) -> Result<Problem>
where
    F: Fn(&Tensor<f64>) -> Result<(f64, Tensor<f64>)> + 'static,
{
    let (_, grad) = f(&x)?;
    let n = x.len();
    let shape = x.shape().to_vec();
    let point = x.reshape(&[n])?;
    let grad = grad.reshape(&[n])?;
    let eval = move |p: &Tensor<f64>| Ok(f(&p.clone().reshape(&shape)?)?.0);
    Ok(Problem { point, segments: vec![n], grad, eval: Box::new(eval) })
}

fn coordinates(segments: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut out = Vec::new();
    let mut offset = 0;
    for &n in segments {
        if n <= COORDS_PER_TENSOR {
            out.extend(offset..offset + n);
        } else {
            let mut idx: Vec<usize> = sample(rng, n, COORDS_PER_TENSOR).into_iter().map(|i| offset + i).collect();
            idx.sort_unstable();
            out.extend(idx);
        }
        offset += n;
    }
    out
}

fn central(problem: &Problem, x: &mut Tensor<f64>, i: usize, h: f64) -> Result<f64> {
    let orig = x.data()[i];
    x.data_mut()[i] = orig + h;
    let fp = (problem.eval)(x)?;
    x.data_mut()[i] = orig - h;
    let fm = (problem.eval)(x)?;
    x.data_mut()[i] = orig;
    Ok((fp - fm) / (2.0 * h))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointCheck {
    pub worst: GradCheck,
    pub checked: usize,
    /// Coordinates whose difference quotient is not smooth at scale `h`.
    pub kinked: usize,
}

/// Worst relative error of `problem` over the chosen coordinates.
///
/// The floor for near-zero entries scales with `|f|`, the size of the roundoff
/// in the difference quotient. A coordinate whose quotient misses by more than
/// [`REFINE_AT`] usually has `[x - h, x + h]` crossing a ReLU kink; it is
/// re-estimated with steps `h / 4` and `h / 16`. If those two disagree the
/// coordinate sits on a kink and is excluded, otherwise the `h / 16` quotient is
/// scored. A wrong analytic gradient gives converged quotients that miss, and fails.
pub fn check_problem(problem: &Problem, coords: &[usize], h: f64) -> Result<PointCheck> {
    let floor = NEAR_ZERO_FLOOR * (problem.eval)(&problem.point)?.abs().max(1.0);
    let mut x = problem.point.clone();
    let mut out = PointCheck { worst: GradCheck { max_rel_error: 0.0, worst_index: 0, analytic: 0.0, numeric: 0.0 }, checked: 0, kinked: 0 };
    for &i in coords {
        let a = problem.grad.data()[i];
        let mut n = central(problem, &mut x, i, h)?;
        let mut e = relative_error_with_floor(a, n, floor);
        if e >= REFINE_AT {
            let fine = central(problem, &mut x, i, h / 4.0)?;
            let finer = central(problem, &mut x, i, h / 16.0)?;
            if relative_error_with_floor(fine, finer, floor) >= THRESHOLD {
                out.kinked += 1;
                continue;
            }
            (n, e) = (finer, relative_error_with_floor(a, finer, floor));
        }
        out.checked += 1;
        if e >= out.worst.max_rel_error {
            out.worst = GradCheck { max_rel_error: e, worst_index: i, analytic: a, numeric: n };
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub points: usize,
    pub coordinates: usize,
    pub kinked: usize,
    pub worst: GradCheck,
}

/// Largest share of excluded coordinates before a check counts as failed.
pub const MAX_KINKED_FRACTION: f64 = 0.05;

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.worst.max_rel_error < THRESHOLD && (self.kinked as f64) <= MAX_KINKED_FRACTION * (self.coordinates + self.kinked) as f64
    }
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub results: Vec<CheckResult>,
    pub elapsed: Duration,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed())
    }

    pub fn worst_error(&self) -> f64 {
        self.results.iter().map(|r| r.worst.max_rel_error).fold(0.0, f64::max)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.results {
            writeln!(
                out,
                "{} {:<32} points={} coords={} kinked={} max_rel_error={:.3e}",
                if r.passed() { "ok  " } else { "FAIL" },
                r.name,
                r.points,
                r.coordinates,
                r.kinked,
                r.worst.max_rel_error
            )
            .unwrap();
        }
        writeln!(out, "worst {:.3e}, threshold {:.0e}, {:.1}s", self.worst_error(), THRESHOLD, self.elapsed.as_secs_f64()).unwrap();
        out
    }
}

type Maker = fn(&mut ChaCha8Rng) -> Result<Problem>;

/// Runs one check over `points` random points.
pub fn run_check(name: &str, make: Maker, points: usize, rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let mut result = CheckResult { name: name.to_string(), points, coordinates: 0, kinked: 0, worst: GradCheck { max_rel_error: 0.0, worst_index: 0, analytic: 0.0, numeric: 0.0 } };
    for _ in 0..points {
        let problem = make(rng)?;
        let coords = coordinates(&problem.segments, rng);
        let r = check_problem(&problem, &coords, STEP)?;
        result.coordinates += r.checked;
        result.kinked += r.kinked;
        if r.worst.max_rel_error >= result.worst.max_rel_error {
            result.worst = r.worst;
        }
    }
    Ok(result)
}

fn projection(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    Tensor::randn(shape, 1.0 / (n as f64).sqrt(), rng)
}

fn conv_problem(rng: &mut ChaCha8Rng, stride: usize, padding: Padding) -> Result<Problem> {
    let mut conv = Conv2d::<f64>::new(3, 4, 3, stride, padding, rng);
    jitter(&mut conv, 0.2, rng);
    let x = Tensor::randn(&[2, 3, 7, 6], 1.0, rng);
    let w = projection(&conv.output_shape(x.shape())?, rng);
    model_problem(conv, x, move |c, x| {
        let (y, cache) = c.forward(x)?;
        let mut g = c.zeros_like();
        let gx = c.backward(&cache, &w, &mut g)?;
        Ok((y.dot(&w)?, g, gx))
    })
}

fn conv_same(rng: &mut ChaCha8Rng) -> Result<Problem> {
    conv_problem(rng, 1, Padding::Same)
}

fn conv_strided(rng: &mut ChaCha8Rng) -> Result<Problem> {
    conv_problem(rng, 2, Padding::Same)
}

fn conv_valid(rng: &mut ChaCha8Rng) -> Result<Problem> {
    conv_problem(rng, 1, Padding::Valid)
}

fn conv_transpose(rng: &mut ChaCha8Rng) -> Result<Problem> {
    let mut conv = ConvTranspose2d::<f64>::new(3, 2, 4, 4, Padding::Valid, rng);
    jitter(&mut conv, 0.2, rng);
    let x = Tensor::randn(&[2, 3, 3, 2], 1.0, rng);
    let (probe, _) = conv.forward(&x, None)?;
    let w = projection(probe.shape(), rng);
    model_problem(conv, x, move |c, x| {
        let (y, cache) = c.forward(x, None)?;
        let mut g = c.zeros_like();
        let gx = c.backward(&cache, &w, &mut g)?;
        Ok((y.dot(&w)?, g, gx))
    })
}

fn batchnorm(rng: &mut ChaCha8Rng, mode: Mode) -> Result<Problem> {
    let mut bn = BatchNorm2d::<f64>::new(3);
    jitter(&mut bn, 0.3, rng);
    bn.running_mean = Tensor::randn(&[3], 0.5, rng);
    bn.running_var = Tensor::rand_uniform(&[3], 0.5, 2.0, rng);
    let x = Tensor::randn(&[4, 3, 3, 3], 1.5, rng);
    let w = projection(x.shape(), rng);
    model_problem(bn, x, move |bn, x| {
        let (y, cache) = bn.forward(x, mode)?;
        let mut g = bn.zeros_like();
        let gx = bn.backward(&cache, &w, &mut g)?;
        Ok((y.dot(&w)?, g, gx))
    })
}

fn batchnorm_train(rng: &mut ChaCha8Rng) -> Result<Problem> {
    batchnorm(rng, Mode::Train)
}

fn batchnorm_eval(rng: &mut ChaCha8Rng) -> Result<Problem> {
    batchnorm(rng, Mode::Eval)
}

fn activation(rng: &mut ChaCha8Rng, kind: Activation) -> Result<Problem> {
    let x = Tensor::randn(&[2, 2, 4, 4], 2.0, rng);
    let w = projection(x.shape(), rng);
    input_problem(x, move |x| {
        let y = activate(x, kind);
        Ok((y.dot(&w)?, activation_backward(&y, &w, kind)?))
    })
}

fn relu(rng: &mut ChaCha8Rng) -> Result<Problem> {
    activation(rng, Activation::Relu)
}

fn sigmoid(rng: &mut ChaCha8Rng) -> Result<Problem> {
    activation(rng, Activation::Sigmoid)
}

/// conv -> BN -> ReLU -> sum.
#[derive(Clone)]
struct Composite {
    conv: Conv2d<f64>,
    bn: BatchNorm2d<f64>,
}

impl Parameters<f64> for Composite {
    fn visit_params<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<f64>)) {
        self.conv.visit_params(&crate::nn::join(prefix, "conv"), f);
        self.bn.visit_params(&crate::nn::join(prefix, "bn"), f);
    }
    fn visit_params_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor<f64>)) {
        self.conv.visit_params_mut(&crate::nn::join(prefix, "conv"), f);
        self.bn.visit_params_mut(&crate::nn::join(prefix, "bn"), f);
    }
}

fn composite(rng: &mut ChaCha8Rng) -> Result<Problem> {
    let mut m = Composite { conv: Conv2d::new(2, 3, 3, 1, Padding::Same, rng), bn: BatchNorm2d::new(3) };
    jitter(&mut m, 0.2, rng);
    let x = Tensor::randn(&[2, 2, 5, 5], 1.0, rng);
    model_problem(m, x, |m, x| {
        let (a, c1) = m.conv.forward(x)?;
        let (b, c2) = m.bn.forward(&a, Mode::Train)?;
        let y = activate(&b, Activation::Relu);
        let ones = Tensor::full(y.shape(), 1.0);
        let mut g = Composite { conv: m.conv.zeros_like(), bn: m.bn.zeros_like() };
        let gb = activation_backward(&y, &ones, Activation::Relu)?;
        let ga = m.bn.backward(&c2, &gb, &mut g.bn)?;
        let gx = m.conv.backward(&c1, &ga, &mut g.conv)?;
        Ok((y.sum(), g, gx))
    })
}

fn residual_block(rng: &mut ChaCha8Rng) -> Result<Problem> {
    let mut rb = ResidualBlock::<f64>::new(3, rng);
    jitter(&mut rb, 0.2, rng);
    let x = Tensor::randn(&[2, 3, 5, 5], 1.0, rng);
    let w = projection(x.shape(), rng);
    model_problem(rb, x, move |rb, x| {
        let (y, cache) = rb.forward(x, Mode::Train)?;
        let mut g = rb.zeros_like();
        let gx = rb.backward(&cache, &w, &mut g)?;
        Ok((y.dot(&w)?, g, gx))
    })
}

fn small_generator(rbs: usize) -> GeneratorConfig {
    GeneratorConfig { num_residual_blocks: rbs, feature_maps: 4, in_channels: 2, out_channels: 2 }
}

fn generator(rng: &mut ChaCha8Rng, mode: Mode) -> Result<Problem> {
    let mut g = Generator::<f64>::new(small_generator(2), rng)?;
    jitter(&mut g, 0.2, rng);
    let x = Tensor::randn(&[2, 2, 6, 6], 1.0, rng);
    let w = projection(x.shape(), rng);
    model_problem(g, x, move |g, x| {
        let (y, cache) = g.forward(x, mode)?;
        let mut grads = g.zeros_like();
        let gx = g.backward(&cache, &w, &mut grads)?;
        Ok((y.dot(&w)?, grads, gx))
    })
}

fn generator_train(rng: &mut ChaCha8Rng) -> Result<Problem> {
    generator(rng, Mode::Train)
}

fn generator_eval(rng: &mut ChaCha8Rng) -> Result<Problem> {
    generator(rng, Mode::Eval)
}

fn discriminator(rng: &mut ChaCha8Rng) -> Result<Problem> {
    let mut d = Discriminator::<f64>::new(1, rng);
    jitter(&mut d, 0.1, rng);
    let x = Tensor::rand_uniform(&[3, 1, 16, 16], 0.0, 1.0, rng);
    let w = projection(&[3], rng);
    model_problem(d, x, move |d, x| {
        let (s, cache) = d.forward(x, Mode::Train)?;
        let mut g = d.zeros_like();
        let gx = d.backward(&cache, &w, &mut g)?;
        Ok((s.dot(&w)?, g, gx))
    })
}

fn magnitude(rng: &mut ChaCha8Rng) -> Result<Problem> {
    let x = Tensor::randn(&[2, 2, 4, 4], 1.0, rng);
    let w = projection(&[2, 1, 4, 4], rng);
    input_problem(x, move |x| {
        let m = magnitude_forward(x)?;
        Ok((m.dot(&w)?, magnitude_backward(x, &m, &w)?))
    })
}

fn pixel(rng: &mut ChaCha8Rng) -> Result<Problem> {
    let truth = Tensor::randn(&[2, 2, 4, 4], 1.0, rng);
    let gamma = rng.random::<f64>();
    let x = Tensor::randn(&[2, 2, 4, 4], 1.0, rng);
    input_problem(x, move |x| pixel_loss(&truth, x, gamma))
}

fn d_loss(rng: &mut ChaCha8Rng) -> Result<Problem> {
    let x = Tensor::rand_uniform(&[2, 3], 0.0, 1.0, rng);
    input_problem(x, |x| {
        let real = Tensor::from_vec(&[3], x.item_slice(0).to_vec())?;
        let fake = Tensor::from_vec(&[3], x.item_slice(1).to_vec())?;
        let (gr, gf) = discriminator_loss_grad(&real, &fake);
        let mut data = gr.data().to_vec();
        data.extend_from_slice(gf.data());
        Ok((discriminator_loss(&real, &fake)?, Tensor::from_vec(&[2, 3], data)?))
    })
}

/// Total generator cost of a 2-copy, 1-RB unrolled network with the
/// discriminator term active, over generator parameters, step sizes and `x_tilde`.
fn unrolled(rng: &mut ChaCha8Rng, weight_mode: WeightMode) -> Result<Problem> {
    let (n, b) = (16, 3);
    let op = MaskedFourier::<f64>::new(generate_mask(&MaskSpec::new(n, n, 0.4, rng.random()))?);
    let mut model = UnrolledModel::<f64>::new(2, weight_mode, small_generator(1), ValueMap::COMPLEX, rng)?;
    jitter(&mut model, 0.1, rng);
    let mut d = Discriminator::<f64>::new(1, rng);
    jitter(&mut d, 0.1, rng);
    let truth = Tensor::rand_uniform(&[b, 2, n, n], 0.0, 0.5, rng);
    let y = op.forward(&truth)?.add(&Tensor::randn(&[b, 2, op.num_samples()], 0.01, rng))?;
    let x_tilde = op.adjoint(&y)?;
    let weights = LossWeights { lambda: 0.3, eta: 0.9, gamma: rng.random(), warmup_batches: 1 };
    model_problem(model, x_tilde, move |m, x| {
        let batch = Batch { y: y.clone(), x_tilde: x.clone(), truth: truth.clone() };
        let step = generator_step(m, Some(&d), &op, &batch, weights.lambda, &weights, Mode::Train)?;
        Ok((step.terms.total(), step.grads, step.grad_x_tilde))
    })
}

fn unrolled_shared(rng: &mut ChaCha8Rng) -> Result<Problem> {
    unrolled(rng, WeightMode::Shared)
}

fn unrolled_independent(rng: &mut ChaCha8Rng) -> Result<Problem> {
    unrolled(rng, WeightMode::Independent)
}

pub const CHECKS: &[(&str, Maker)] = &[
    ("conv2d_same", conv_same),
    ("conv2d_stride2", conv_strided),
    ("conv2d_valid", conv_valid),
    ("conv_transpose2d_stride4", conv_transpose),
    ("batchnorm_train", batchnorm_train),
    ("batchnorm_eval", batchnorm_eval),
    ("relu", relu),
    ("sigmoid", sigmoid),
    ("conv_bn_relu_sum", composite),
    ("residual_block", residual_block),
    ("generator_train", generator_train),
    ("generator_eval", generator_eval),
    ("discriminator", discriminator),
    ("magnitude", magnitude),
    ("pixel_loss", pixel),
    ("discriminator_loss", d_loss),
    ("unrolled_2copy_1rb_shared", unrolled_shared),
    ("unrolled_2copy_1rb_independent", unrolled_independent),
];

/// Runs every check on `points` random points each.
pub fn run_suite(seed: u64, points: usize) -> Result<SuiteReport> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let results = CHECKS.iter().map(|(name, make)| run_check(name, *make, points, &mut rng)).collect::<Result<Vec<_>>>()?;
    Ok(SuiteReport { results, elapsed: start.elapsed() })
}
