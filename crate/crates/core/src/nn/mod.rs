//! Differentiable layers, the Adam optimizer and gradient verification.

pub mod activation;
pub mod adam;
pub mod batchnorm;
pub mod conv;
pub mod gradcheck;

pub use activation::{activate, activation_backward, sigmoid, Activation};
pub use adam::{AdamConfig, AdamState};
pub use batchnorm::{BatchNorm2d, BnCache, Mode};
pub use conv::{Conv2d, ConvCache, ConvTranspose2d, ConvTransposeCache, Padding};
pub use gradcheck::{finite_diff_gradcheck, numeric_gradient, GradCheck};

use crate::tensor::{Real, Tensor};

/// Named access to trainable parameters and non-trainable buffers.
///
/// Gradients are stored in a value of the same type (see `zeros_like` on each
/// layer), so the visiting order of a model and of its gradient always agree.
pub trait Parameters<T: Real> {
    fn visit_params<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>));
    fn visit_params_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor<T>));

    fn visit_buffers<'a>(&'a self, _prefix: &str, _f: &mut dyn FnMut(String, &'a Tensor<T>)) {}
    fn visit_buffers_mut<'a>(&'a mut self, _prefix: &str, _f: &mut dyn FnMut(String, &'a mut Tensor<T>)) {}

    fn params(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::new();
        self.visit_params("", &mut |_, t| out.push(t));
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        self.visit_params_mut("", &mut |_, t| out.push(t));
        out
    }

    fn named_params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        self.visit_params("", &mut |n, t| out.push((n, t)));
        out
    }

    /// Parameters followed by buffers, as stored in checkpoints.
    fn named_state(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        self.visit_params("", &mut |n, t| out.push((n, t)));
        self.visit_buffers("", &mut |n, t| out.push((n, t)));
        out
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    fn grad_norm(&self) -> f64 {
        self.params().iter().map(|t| t.norm_sqr().as_f64()).sum::<f64>().sqrt()
    }
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

impl<T: Real> Parameters<T> for Conv2d<T> {
    fn visit_params<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        f(join(prefix, "weight"), &self.weight);
        f(join(prefix, "bias"), &self.bias);
    }
    fn visit_params_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor<T>)) {
        f(join(prefix, "weight"), &mut self.weight);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

impl<T: Real> Parameters<T> for ConvTranspose2d<T> {
    fn visit_params<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        f(join(prefix, "weight"), &self.weight);
        f(join(prefix, "bias"), &self.bias);
    }
    fn visit_params_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor<T>)) {
        f(join(prefix, "weight"), &mut self.weight);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

impl<T: Real> Parameters<T> for BatchNorm2d<T> {
    fn visit_params<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        f(join(prefix, "scale"), &self.scale);
        f(join(prefix, "shift"), &self.shift);
    }
    fn visit_params_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor<T>)) {
        f(join(prefix, "scale"), &mut self.scale);
        f(join(prefix, "shift"), &mut self.shift);
    }
    fn visit_buffers<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        f(join(prefix, "running_mean"), &self.running_mean);
        f(join(prefix, "running_var"), &self.running_var);
    }
    fn visit_buffers_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor<T>)) {
        f(join(prefix, "running_mean"), &mut self.running_mean);
        f(join(prefix, "running_var"), &mut self.running_var);
    }
}
