//! Central finite differences against analytic gradients.

use crate::tensor::Tensor;

/// Magnitude below which gradient entries are compared absolutely rather than relatively.
///
/// Central differences carry roundoff of order `c eps |f| / h`; through deep
/// networks `c` reaches a few tens, about 3e-10 for `|f| ~ 1` and `h = 1e-5`.
/// Entries whose true value is zero (a conv bias followed by batch
/// normalization) therefore need a floor well above that.
pub const ABSOLUTE_FLOOR: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    relative_error_with_floor(analytic, numeric, ABSOLUTE_FLOOR)
}

pub fn relative_error_with_floor(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

pub fn numeric_gradient(mut f: impl FnMut(&Tensor<f64>) -> f64, point: &Tensor<f64>, h: f64) -> Tensor<f64> {
    let mut x = point.clone();
    let mut grad = Tensor::zeros(point.shape());
    for i in 0..point.len() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + h;
        let fp = f(&x);
        x.data_mut()[i] = orig - h;
        let fm = f(&x);
        x.data_mut()[i] = orig;
        grad.data_mut()[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Compares the analytic gradient returned by `f` at `point` with central differences
/// of its value and returns the worst elementwise relative error.
pub fn finite_diff_gradcheck(
    mut f: impl FnMut(&Tensor<f64>) -> (f64, Tensor<f64>),
    point: &Tensor<f64>,
    h: f64,
) -> GradCheck {
    let (_, analytic) = f(point);
    let numeric = numeric_gradient(|x| f(x).0, point, h);
    compare(&analytic, &numeric)
}

pub fn compare(analytic: &Tensor<f64>, numeric: &Tensor<f64>) -> GradCheck {
    compare_with_floor(analytic, numeric, ABSOLUTE_FLOOR)
}

/// Like [`compare`] with an explicit floor, e.g. scaled by the function magnitude.
pub fn compare_with_floor(analytic: &Tensor<f64>, numeric: &Tensor<f64>, floor: f64) -> GradCheck {
    let mut worst = GradCheck {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    for (i, (&a, &n)) in analytic.data().iter().zip(numeric.data()).enumerate() {
        let e = relative_error_with_floor(a, n, floor);
        if e > worst.max_rel_error || (i == 0 && e == 0.0) {
            worst = GradCheck {
                max_rel_error: e,
                worst_index: i,
                analytic: a,
                numeric: n,
            };
        }
    }
    worst
}
