use crate::tensor::{Real, Tensor};

pub fn soft_threshold_scalar<T: Real>(x: T, tau: T) -> T {
    let m = x.abs() - tau;
    if m > T::zero() {
        m.copysign(x)
    } else {
        T::zero()
    }
}

/// Elementwise `sign(x) max(|x| - tau, 0)`.
pub fn soft_threshold<T: Real>(x: &Tensor<T>, tau: T) -> Tensor<T> {
    x.map(|v| soft_threshold_scalar(v, tau))
}

/// Magnitude shrinkage of complex values stored as separate real and imaginary slices.
pub fn soft_threshold_complex<T: Real>(re: &mut [T], im: &mut [T], tau: T) {
    for (a, b) in re.iter_mut().zip(im.iter_mut()) {
        let mag = a.hypot(*b);
        let factor = if mag > tau { (mag - tau) / mag } else { T::zero() };
        *a *= factor;
        *b *= factor;
    }
}
