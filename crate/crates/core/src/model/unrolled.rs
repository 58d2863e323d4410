use std::str::FromStr;

use rand::Rng;

use super::generator::{Generator, GeneratorCache, GeneratorConfig};
use crate::error::{Error, Result};
use crate::nn::{join, Mode, Parameters};
use crate::operators::LinearOperator;
use crate::tensor::{shape_str, Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightMode {
    Shared,
    Independent,
}

impl FromStr for WeightMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared" => Ok(WeightMode::Shared),
            "independent" => Ok(WeightMode::Independent),
            _ => Err(Error::InvalidArgument(format!("unknown weight mode '{s}' (shared|independent)"))),
        }
    }
}

impl std::fmt::Display for WeightMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            WeightMode::Shared => "shared",
            WeightMode::Independent => "independent",
        })
    }
}

/// Affine map between physical image values and the generator's sigmoid range:
/// the generator sees `offset + scale v` and its output `g` maps back to `(g - offset) / scale`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValueMap {
    pub scale: f64,
    pub offset: f64,
}

impl ValueMap {
    /// Real and imaginary parts in `[-1, 1]` land in `[0.05, 0.95]`.
    pub const COMPLEX: ValueMap = ValueMap { scale: 0.45, offset: 0.5 };
    pub const IDENTITY: ValueMap = ValueMap { scale: 1.0, offset: 0.0 };

    pub fn to_generator<T: Real>(&self, x: &Tensor<T>) -> Tensor<T> {
        let (s, o) = (T::of(self.scale), T::of(self.offset));
        x.map(|v| o + s * v)
    }

    pub fn from_generator<T: Real>(&self, g: &Tensor<T>) -> Tensor<T> {
        let (s, o) = (T::of(self.scale), T::of(self.offset));
        g.map(|v| (v - o) / s)
    }
}

/// The K-copy recursion `x_check_k = G_k(x_{k-1})`, `x_k = x_check_k + alpha_k Phi^H (y - Phi x_check_k)`.
///
/// Returns `(x_hat, [x_check_k], [Phi^H (y - Phi x_check_k)])`.
#[allow(clippy::type_complexity)]
pub fn unroll<T: Real>(
    op: &dyn LinearOperator<T>,
    y: &Tensor<T>,
    x_tilde: &Tensor<T>,
    alphas: &[T],
    mut prox: impl FnMut(usize, &Tensor<T>) -> Result<Tensor<T>>,
) -> Result<(Tensor<T>, Vec<Tensor<T>>, Vec<Tensor<T>>)> {
    if alphas.is_empty() {
        return Err(Error::InvalidArgument("unrolled network needs at least one copy".into()));
    }
    let mut x = x_tilde.clone();
    let mut checks = Vec::with_capacity(alphas.len());
    let mut adjoint_residuals = Vec::with_capacity(alphas.len());
    for (k, &alpha) in alphas.iter().enumerate() {
        let check = prox(k, &x)?;
        if check.shape() != x_tilde.shape() {
            return Err(Error::shape("unroll", shape_str(x_tilde.shape()), shape_str(check.shape())));
        }
        let adj = op.adjoint(&y.sub(&op.forward(&check)?)?)?;
        x = check.clone();
        x.axpy(alpha, &adj)?;
        checks.push(check);
        adjoint_residuals.push(adj);
    }
    Ok((x, checks, adjoint_residuals))
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnrolledModel<T = f64> {
    pub copies: usize,
    pub weight_mode: WeightMode,
    /// One generator in shared mode, `copies` otherwise.
    pub generators: Vec<Generator<T>>,
    /// Step sizes are `alpha_k = alpha_raw_k^2`.
    pub alpha_raw: Tensor<T>,
    pub learn_alpha: bool,
    pub value_map: ValueMap,
    version: u64,
}

#[derive(Clone, Debug)]
pub struct UnrolledCache<T> {
    version: u64,
    alphas: Vec<T>,
    generators: Vec<GeneratorCache<T>>,
    adjoint_residuals: Vec<Tensor<T>>,
}

impl<T> UnrolledCache<T> {
    /// `Phi^H (y - Phi x_check_k)` for each copy.
    pub fn adjoint_residuals(&self) -> &[Tensor<T>] {
        &self.adjoint_residuals
    }
}

#[derive(Clone, Debug)]
pub struct UnrolledOutput<T> {
    pub x_hat: Tensor<T>,
    pub intermediates: Vec<Tensor<T>>,
    pub cache: UnrolledCache<T>,
}

impl<T: Real> UnrolledModel<T> {
    pub fn new<R: Rng + ?Sized>(copies: usize, weight_mode: WeightMode, config: GeneratorConfig, value_map: ValueMap, rng: &mut R) -> Result<Self> {
        if copies == 0 {
            return Err(Error::InvalidArgument("unrolled network needs at least one copy".into()));
        }
        let n = match weight_mode {
            WeightMode::Shared => 1,
            WeightMode::Independent => copies,
        };
        let generators = (0..n).map(|_| Generator::new(config.clone(), rng)).collect::<Result<_>>()?;
        Ok(UnrolledModel {
            copies,
            weight_mode,
            generators,
            alpha_raw: Tensor::full(&[copies], T::one()),
            learn_alpha: true,
            value_map,
            version: 0,
        })
    }

    /// Model over explicit generators (one when shared, `copies` when independent).
    pub fn from_generators(generators: Vec<Generator<T>>, weight_mode: WeightMode, copies: usize, value_map: ValueMap) -> Result<Self> {
        let expected = if weight_mode == WeightMode::Shared { 1 } else { copies };
        if copies == 0 || generators.len() != expected {
            return Err(Error::InvalidArgument(format!("{weight_mode} model with {copies} copies needs {expected} generators, got {}", generators.len())));
        }
        Ok(UnrolledModel { copies, weight_mode, generators, alpha_raw: Tensor::full(&[copies], T::one()), learn_alpha: true, value_map, version: 0 })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.generators[0].config
    }

    pub fn generator(&self, k: usize) -> &Generator<T> {
        match self.weight_mode {
            WeightMode::Shared => &self.generators[0],
            WeightMode::Independent => &self.generators[k],
        }
    }

    pub fn alphas(&self) -> Vec<T> {
        self.alpha_raw.data().iter().map(|&a| a * a).collect()
    }

    /// Sets `alpha_k` (stored as its square root).
    pub fn set_alphas(&mut self, alphas: &[T]) -> Result<()> {
        if alphas.len() != self.copies || alphas.iter().any(|&a| a < T::zero()) {
            return Err(Error::InvalidArgument(format!("need {} non-negative step sizes", self.copies)));
        }
        self.alpha_raw = Tensor::from_vec(&[self.copies], alphas.iter().map(|&a| a.sqrt()).collect())?;
        self.version += 1;
        Ok(())
    }

    pub fn generator_param_count(&self) -> usize {
        self.generators.iter().map(|g| g.param_count()).sum()
    }

    /// Gradient accumulator of the same layout.
    pub fn zeros_like(&self) -> Self {
        UnrolledModel {
            copies: self.copies,
            weight_mode: self.weight_mode,
            generators: self.generators.iter().map(|g| g.zeros_like()).collect(),
            alpha_raw: Tensor::zeros(&[self.copies]),
            learn_alpha: self.learn_alpha,
            value_map: self.value_map,
            version: 0,
        }
    }

    pub fn forward(&self, op: &dyn LinearOperator<T>, y: &Tensor<T>, x_tilde: &Tensor<T>, mode: Mode) -> Result<UnrolledOutput<T>> {
        let alphas = self.alphas();
        let mut caches = Vec::with_capacity(self.copies);
        let (x_hat, intermediates, adjoint_residuals) = unroll(op, y, x_tilde, &alphas, |k, x| {
            let (g, cache) = self.generator(k).forward(&self.value_map.to_generator(x), mode)?;
            caches.push(cache);
            Ok(self.value_map.from_generator(&g))
        })?;
        Ok(UnrolledOutput {
            x_hat,
            intermediates,
            cache: UnrolledCache { version: self.version, alphas, generators: caches, adjoint_residuals },
        })
    }

    /// Backpropagates `dL/dx_hat` plus direct `dL/dx_check_k` terms (empty slice for none).
    /// Parameter gradients are accumulated into `grads`; returns `dL/dx_tilde`.
    pub fn backward(
        &self,
        op: &dyn LinearOperator<T>,
        cache: &UnrolledCache<T>,
        grad_x_hat: &Tensor<T>,
        grad_intermediates: &[Tensor<T>],
        grads: &mut Self,
    ) -> Result<Tensor<T>> {
        if cache.version != self.version || cache.generators.len() != self.copies {
            return Err(Error::StaleCache);
        }
        if !grad_intermediates.is_empty() && grad_intermediates.len() != self.copies {
            return Err(Error::shape("UnrolledModel::backward", format!("{} intermediate gradients", self.copies), grad_intermediates.len()));
        }
        let s = T::of(self.value_map.scale);
        let mut g = grad_x_hat.clone();
        for k in (0..self.copies).rev() {
            let alpha = cache.alphas[k];
            if self.learn_alpha {
                let d_alpha = g.dot(&cache.adjoint_residuals[k])?;
                grads.alpha_raw.data_mut()[k] += d_alpha * T::of(2.0) * self.alpha_raw.data()[k];
            }
            // d x_k / d x_check_k = I - alpha Phi^H Phi (self-adjoint)
            let mut g_check = g.clone();
            g_check.axpy(-alpha, &op.normal(&g)?)?;
            if let Some(extra) = grad_intermediates.get(k) {
                g_check.add_assign(extra)?;
            }
            g_check.map_inplace(|v| v / s);
            let idx = if self.weight_mode == WeightMode::Shared { 0 } else { k };
            g = self.generator(k).backward(&cache.generators[k], &g_check, &mut grads.generators[idx])?;
            g.map_inplace(|v| v * s);
        }
        Ok(g)
    }

    /// Folds the BN batch statistics of every copy, in copy order.
    pub fn update_running(&mut self, cache: &UnrolledCache<T>) {
        for (k, c) in cache.generators.iter().enumerate() {
            let idx = if self.weight_mode == WeightMode::Shared { 0 } else { k };
            self.generators[idx].update_running(c);
        }
        self.version += 1;
    }

    pub fn version(&self) -> u64 {
        self.version
    }
}

impl<T: Real> Parameters<T> for UnrolledModel<T> {
    fn visit_params<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        for (i, g) in self.generators.iter().enumerate() {
            g.visit_params(&join(prefix, &format!("g{i}")), f);
        }
        f(join(prefix, "alpha_raw"), &self.alpha_raw);
    }
    fn visit_params_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor<T>)) {
        self.version += 1;
        for (i, g) in self.generators.iter_mut().enumerate() {
            g.visit_params_mut(&join(prefix, &format!("g{i}")), f);
        }
        f(join(prefix, "alpha_raw"), &mut self.alpha_raw);
    }
    fn visit_buffers<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        for (i, g) in self.generators.iter().enumerate() {
            g.visit_buffers(&join(prefix, &format!("g{i}")), f);
        }
    }
    fn visit_buffers_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor<T>)) {
        self.version += 1;
        for (i, g) in self.generators.iter_mut().enumerate() {
            g.visit_buffers_mut(&join(prefix, &format!("g{i}")), f);
        }
    }
}
