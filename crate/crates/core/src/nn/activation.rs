use crate::error::Result;
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

pub fn sigmoid<T: Real>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

pub fn activate<T: Real>(x: &Tensor<T>, kind: Activation) -> Tensor<T> {
    match kind {
        Activation::Relu => x.map(|v| v.max(T::zero())),
        Activation::Sigmoid => x.map(sigmoid),
    }
}

/// Gradient through the activation, expressed in terms of its output.
pub fn activation_backward<T: Real>(output: &Tensor<T>, grad_out: &Tensor<T>, kind: Activation) -> Result<Tensor<T>> {
    match kind {
        Activation::Relu => output.zip_map(grad_out, |y, g| if y > T::zero() { g } else { T::zero() }),
        Activation::Sigmoid => output.zip_map(grad_out, |y, g| g * y * (T::one() - y)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let x = Tensor::<f64>::from_vec(&[3], vec![-3.0, 0.0, 3.0]).unwrap();
        assert_eq!(activate(&x, Activation::Relu).data(), &[0.0, 0.0, 3.0]);
        let s = activate(&x, Activation::Sigmoid);
        assert_eq!(s.data()[1], 0.5);
        assert!(s.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }
}
