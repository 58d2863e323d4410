use super::{fista, SparsityConfig};
use crate::error::{Error, Result};
use crate::eval::image_snr;
use crate::operators::LinearOperator;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct TuneResult {
    pub reg_weight: f64,
    pub snr_db: f64,
    /// Every `(reg_weight, snr_db)` pair tried, in evaluation order.
    pub evaluations: Vec<(f64, f64)>,
}

/// Picks the regularization weight maximizing SNR against `truth`: a coarse
/// log-spaced grid followed by golden-section refinement in log space around
/// the best grid point.
pub fn tune_reg_weight(
    op: &dyn LinearOperator<f64>,
    y: &Tensor<f64>,
    truth: &Tensor<f64>,
    base: &SparsityConfig,
    iters: usize,
    grid: &[f64],
    refine_steps: usize,
) -> Result<TuneResult> {
    if grid.is_empty() || grid.iter().any(|&g| !(g > 0.0)) {
        return Err(Error::InvalidArgument("reg grid must be non-empty and positive".into()));
    }
    let mut evaluations = Vec::new();
    let mut eval = |log_reg: f64| -> Result<f64> {
        let reg = 10f64.powf(log_reg);
        let config = SparsityConfig { reg_weight: reg, ..base.clone() };
        let (x, _) = fista(op, y, &config, 1.0, iters)?;
        let snr = image_snr(truth, &x)?;
        evaluations.push((reg, snr));
        Ok(snr)
    };
    let mut logs: Vec<f64> = grid.iter().map(|g| g.log10()).collect();
    logs.sort_by(f64::total_cmp);
    let scores: Vec<f64> = logs.iter().map(|&l| eval(l)).collect::<Result<_>>()?;
    let best = (0..logs.len()).max_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(b.cmp(&a))).unwrap();
    let (mut lo, mut hi) = (logs[best.saturating_sub(1)], logs[(best + 1).min(logs.len() - 1)]);
    if hi > lo {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (hi - g * (hi - lo), lo + g * (hi - lo));
        let (mut fa, mut fb) = (eval(a)?, eval(b)?);
        for _ in 2..refine_steps {
            if fa >= fb {
                hi = b;
                b = a;
                fb = fa;
                a = hi - g * (hi - lo);
                fa = eval(a)?;
            } else {
                lo = a;
                a = b;
                fa = fb;
                b = lo + g * (hi - lo);
                fb = eval(b)?;
            }
        }
    }
    let &(reg_weight, snr_db) = evaluations.iter().max_by(|p, q| p.1.total_cmp(&q.1)).unwrap();
    Ok(TuneResult { reg_weight, snr_db, evaluations })
}
