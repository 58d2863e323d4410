//! Reconstruction metrics, baselines and the architecture sweep harness.

mod harness;
mod metrics;

pub use harness::{
    cs_baseline, evaluate, inference_ms, parse_cells, run_cell, run_sweep, zero_fill_baseline, CsBaselines, MetricReport, Precision, SweepCell, SweepData,
    SweepResult, SweepRow, SweepSpec, SWEEP_HEADER,
};
pub use metrics::{gaussian_window, image_snr, image_ssim, snr, ssim, SNR_CAP_DB, SSIM_C1, SSIM_C2, SSIM_SIGMA, SSIM_WINDOW};
