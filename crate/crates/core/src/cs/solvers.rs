use super::shrink::{soft_threshold_complex, soft_threshold_scalar};
use super::{tv, wavelet, SolverTrace, SparsityConfig, Transform};
use crate::error::{Error, Result};
use crate::operators::LinearOperator;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub x0: Option<Tensor<f64>>,
    pub keep_snapshots: bool,
    /// ISTA reports divergence when the objective rises by more than this relative amount.
    pub divergence_tol: f64,
    /// Geometric continuation: the threshold weight starts at the largest
    /// transform coefficient of `Phi^H y` and is multiplied by this factor each
    /// iteration until it reaches `reg_weight`.
    pub continuation: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { x0: None, keep_snapshots: false, divergence_tol: 1e-6, continuation: None }
    }
}

fn is_complex(x: &Tensor<f64>) -> bool {
    x.ndim() == 4 && x.shape()[1] == 2
}

/// Sum of (complex) magnitudes, pairing channels 0 and 1 of two-channel images.
fn l1(c: &Tensor<f64>) -> f64 {
    if is_complex(c) {
        let n = c.shape()[2] * c.shape()[3];
        (0..c.shape()[0])
            .map(|b| {
                let (re, im) = c.item_slice(b).split_at(n);
                re.iter().zip(im).map(|(a, b)| a.hypot(*b)).sum::<f64>()
            })
            .sum()
    } else {
        c.norm_l1()
    }
}

fn shrink(c: &mut Tensor<f64>, tau: f64) {
    if is_complex(c) {
        let n = c.shape()[2] * c.shape()[3];
        for b in 0..c.shape()[0] {
            let (re, im) = c.item_slice_mut(b).split_at_mut(n);
            soft_threshold_complex(re, im, tau);
        }
    } else {
        c.map_inplace(|v| soft_threshold_scalar(v, tau));
    }
}

pub(crate) fn regularizer(x: &Tensor<f64>, config: &SparsityConfig) -> Result<f64> {
    Ok(match config.transform {
        Transform::Wavelet => l1(&wavelet::wavelet_forward(x, config.wavelet_levels)?),
        Transform::Tv => tv::tv_norm(x),
        Transform::Identity => l1(x),
    })
}

fn prox(x: &Tensor<f64>, tau: f64, config: &SparsityConfig) -> Result<Tensor<f64>> {
    if tau == 0.0 {
        return Ok(x.clone());
    }
    Ok(match config.transform {
        Transform::Wavelet => {
            let mut c = wavelet::wavelet_forward(x, config.wavelet_levels)?;
            shrink(&mut c, tau);
            wavelet::wavelet_inverse(&c, config.wavelet_levels)?
        }
        Transform::Tv => tv::tv_prox(x, tau, config.tv_inner_iters),
        Transform::Identity => {
            let mut c = x.clone();
            shrink(&mut c, tau);
            c
        }
    })
}

/// `0.5 ||y - Phi x||^2 + reg_weight R(x)`.
pub fn objective(op: &dyn LinearOperator<f64>, y: &Tensor<f64>, x: &Tensor<f64>, config: &SparsityConfig) -> Result<f64> {
    let r = y.sub(&op.forward(x)?)?;
    Ok(0.5 * r.norm_sqr() + config.reg_weight * regularizer(x, config)?)
}

fn setup(op: &dyn LinearOperator<f64>, y: &Tensor<f64>, config: &SparsityConfig, step: f64, opts: &SolveOptions) -> Result<Tensor<f64>> {
    let shape = op.image_shape();
    config.validate(shape[shape.len() - 2], shape[shape.len() - 1])?;
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    let mut full = vec![y.shape().first().copied().unwrap_or(0)];
    full.extend(shape);
    match &opts.x0 {
        Some(x0) if x0.shape() != full.as_slice() => Err(Error::shape("solver x0", crate::tensor::shape_str(&full), crate::tensor::shape_str(x0.shape()))),
        Some(x0) => Ok(x0.clone()),
        None => Ok(Tensor::zeros(&full)),
    }
}

fn record(trace: &mut SolverTrace, op: &dyn LinearOperator<f64>, y: &Tensor<f64>, x: &Tensor<f64>, config: &SparsityConfig, keep: bool) -> Result<f64> {
    let r = y.sub(&op.forward(x)?)?;
    let obj = 0.5 * r.norm_sqr() + config.reg_weight * regularizer(x, config)?;
    trace.objective.push(obj);
    trace.residual.push(r.norm_l2());
    if keep {
        trace.snapshots.get_or_insert_with(Vec::new).push(x.clone());
    }
    Ok(obj)
}

fn prox_grad(op: &dyn LinearOperator<f64>, y: &Tensor<f64>, z: &Tensor<f64>, config: &SparsityConfig, step: f64, reg: f64) -> Result<Tensor<f64>> {
    let g = crate::operators::data_consistency(op, z, y, step)?;
    prox(&g, step * reg, config)
}

fn coefficient_max(x: &Tensor<f64>, config: &SparsityConfig) -> Result<f64> {
    let c = match config.transform {
        Transform::Wavelet => wavelet::wavelet_forward(x, config.wavelet_levels)?,
        _ => x.clone(),
    };
    Ok(c.max_abs())
}

/// Per-iteration threshold weights.
fn reg_schedule(op: &dyn LinearOperator<f64>, y: &Tensor<f64>, config: &SparsityConfig, opts: &SolveOptions) -> Result<Box<dyn Fn(usize) -> f64>> {
    let target = config.reg_weight;
    match opts.continuation {
        None => Ok(Box::new(move |_| target)),
        Some(factor) => {
            if !(factor > 0.0 && factor < 1.0) {
                return Err(Error::InvalidArgument(format!("continuation factor must lie in (0, 1), got {factor}")));
            }
            let start = coefficient_max(&op.adjoint(y)?, config)?.max(target);
            Ok(Box::new(move |k| (start * factor.powi(k as i32)).max(target)))
        }
    }
}

pub fn ista(op: &dyn LinearOperator<f64>, y: &Tensor<f64>, config: &SparsityConfig, step: f64, iters: usize) -> Result<(Tensor<f64>, SolverTrace)> {
    ista_with(op, y, config, step, iters, &SolveOptions::default())
}

pub fn ista_with(
    op: &dyn LinearOperator<f64>,
    y: &Tensor<f64>,
    config: &SparsityConfig,
    step: f64,
    iters: usize,
    opts: &SolveOptions,
) -> Result<(Tensor<f64>, SolverTrace)> {
    let mut x = setup(op, y, config, step, opts)?;
    let mut trace = SolverTrace::default();
    let reg = reg_schedule(op, y, config, opts)?;
    let mut previous = objective(op, y, &x, config)?;
    // Rises below this are roundoff once the objective has collapsed toward zero.
    let floor = 1e-12 * previous.abs();
    for k in 0..iters {
        x = prox_grad(op, y, &x, config, step, reg(k))?;
        let current = record(&mut trace, op, y, &x, config, opts.keep_snapshots)?;
        // A proximal-gradient step at the target weight never increases the objective.
        let at_target = reg(k) == config.reg_weight;
        if !current.is_finite() || (at_target && current > previous + opts.divergence_tol * previous.abs().max(floor).max(1e-300)) {
            return Err(Error::Divergence { iteration: k + 1, previous, current });
        }
        previous = current;
    }
    Ok((x, trace))
}

pub fn fista(op: &dyn LinearOperator<f64>, y: &Tensor<f64>, config: &SparsityConfig, step: f64, iters: usize) -> Result<(Tensor<f64>, SolverTrace)> {
    fista_with(op, y, config, step, iters, &SolveOptions::default())
}

/// FISTA with the `t_{k+1} = (1 + sqrt(1 + 4 t_k^2)) / 2` momentum sequence.
pub fn fista_with(
    op: &dyn LinearOperator<f64>,
    y: &Tensor<f64>,
    config: &SparsityConfig,
    step: f64,
    iters: usize,
    opts: &SolveOptions,
) -> Result<(Tensor<f64>, SolverTrace)> {
    let mut x = setup(op, y, config, step, opts)?;
    let mut z = x.clone();
    let mut t = 1.0f64;
    let mut trace = SolverTrace::default();
    let reg = reg_schedule(op, y, config, opts)?;
    let start = objective(op, y, &x, config)?;
    for k in 0..iters {
        let next = prox_grad(op, y, &z, config, step, reg(k))?;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        z = next.clone();
        let mut diff = next.sub(&x)?;
        diff.map_inplace(|v| v * beta);
        z.add_assign(&diff)?;
        x = next;
        t = t_next;
        let current = record(&mut trace, op, y, &x, config, opts.keep_snapshots)?;
        // Momentum makes FISTA non-monotone; only gross blow-up counts as divergence.
        if !current.is_finite() || current > 1e3 * start.max(1e-300) + 1.0 {
            return Err(Error::Divergence { iteration: k + 1, previous: start, current });
        }
    }
    Ok((x, trace))
}
