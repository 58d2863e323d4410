use crate::error::{Error, Result};
use crate::operators::LinearOperator;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct CgResult {
    pub x: Tensor<f64>,
    /// `||A x_k - b||` for `k = 0..=iterations`.
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

/// Solves `A x = rhs` for symmetric positive definite `A`, starting from zero.
///
/// Uses the conjugate-residual form of the recurrence, which keeps the
/// residual norm non-increasing while retaining finite termination.
pub fn conjugate_gradient(
    mut apply: impl FnMut(&Tensor<f64>) -> Result<Tensor<f64>>,
    rhs: &Tensor<f64>,
    iters: usize,
    tol: f64,
) -> Result<CgResult> {
    let mut x = Tensor::zeros(rhs.shape());
    let mut r = rhs.clone();
    let mut residuals = vec![r.norm_l2()];
    if residuals[0] <= tol {
        return Ok(CgResult { x, residuals, iterations: 0 });
    }
    let mut ar = apply(&r)?;
    ar.same_shape(rhs, "conjugate_gradient")?;
    let mut p = r.clone();
    let mut ap = ar.clone();
    let mut rho = r.dot(&ar)?;
    let mut iterations = 0;
    while iterations < iters {
        let denom = ap.norm_sqr();
        if !(denom > 0.0) || !(rho > 0.0) {
            return Err(Error::Breakdown(format!("iteration {}: r.Ar = {rho:e}, |Ap|^2 = {denom:e}", iterations + 1)));
        }
        let alpha = rho / denom;
        x.axpy(alpha, &p)?;
        r.axpy(-alpha, &ap)?;
        iterations += 1;
        let norm = r.norm_l2();
        residuals.push(norm);
        if norm <= tol {
            break;
        }
        ar = apply(&r)?;
        let rho_next = r.dot(&ar)?;
        let beta = rho_next / rho;
        rho = rho_next;
        p.map_inplace(|v| v * beta);
        p.add_assign(&r)?;
        ap.map_inplace(|v| v * beta);
        ap.add_assign(&ar)?;
    }
    Ok(CgResult { x, residuals, iterations })
}

/// `argmin 0.5 ||y - Phi x||^2 + 0.5 mu ||x||^2` via `(Phi^H Phi + mu I) x = Phi^H y`.
pub fn ridge_solve(op: &dyn LinearOperator<f64>, y: &Tensor<f64>, mu: f64, iters: usize, tol: f64) -> Result<CgResult> {
    if !(mu > 0.0) {
        return Err(Error::InvalidArgument(format!("ridge weight must be positive, got {mu}")));
    }
    let rhs = op.adjoint(y)?;
    conjugate_gradient(
        |x| {
            let mut out = op.normal(x)?;
            out.axpy(mu, x)?;
            Ok(out)
        },
        &rhs,
        iters,
        tol,
    )
}
