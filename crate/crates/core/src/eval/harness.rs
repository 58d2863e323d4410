use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::metrics::{image_snr, image_ssim};
use crate::cs::{fista_with, tune_reg_weight, SolveOptions, SparsityConfig, Transform};
use crate::data::{save_image, BitDepth};
use crate::error::{Error, Result};
use crate::model::{GeneratorConfig, UnrolledModel, ValueMap, WeightMode};
use crate::nn::Mode;
use crate::operators::{batch_magnitude, LinearOperator, MaskedFourier};
use crate::tensor::{Real, Tensor};
use crate::train::{reconstruct, train, LossWeights, TrainConfig, TrainData};

/// Per-image SNR (dB) and SSIM over a test set.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub snr_db: Vec<f64>,
    pub ssim: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len().max(1) as f64).sqrt()
}

impl MetricReport {
    /// `[B, C, H, W]` batches; complex two-channel images are scored on magnitude.
    pub fn compute(truth: &Tensor<f64>, estimate: &Tensor<f64>) -> Result<Self> {
        truth.same_shape(estimate, "MetricReport")?;
        let (b, ..) = truth.dims4("MetricReport")?;
        let item = |t: &Tensor<f64>, i: usize| {
            let mut shape = t.shape().to_vec();
            shape[0] = 1;
            Tensor::from_vec(&shape, t.item_slice(i).to_vec())
        };
        let snr_db = (0..b).map(|i| image_snr(&item(truth, i)?, &item(estimate, i)?)).collect::<Result<_>>()?;
        let ssim = image_ssim(truth, estimate)?;
        Ok(MetricReport { snr_db, ssim })
    }

    pub fn len(&self) -> usize {
        self.snr_db.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snr_db.is_empty()
    }

    pub fn mean_snr(&self) -> f64 {
        mean(&self.snr_db)
    }

    pub fn std_snr(&self) -> f64 {
        std(&self.snr_db)
    }

    pub fn mean_ssim(&self) -> f64 {
        mean(&self.ssim)
    }

    pub fn std_ssim(&self) -> f64 {
        std(&self.ssim)
    }

    /// Summary lines followed by one `image,snr_db,ssim` row per image.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "# mean_snr_db={:.6} std_snr_db={:.6} mean_ssim={:.6} std_ssim={:.6}\nimage,snr_db,ssim\n",
            self.mean_snr(),
            self.std_snr(),
            self.mean_ssim(),
            self.std_ssim()
        );
        for (i, (s, q)) in self.snr_db.iter().zip(&self.ssim).enumerate() {
            writeln!(out, "{i},{s:.6},{q:.6}").unwrap();
        }
        out
    }
}

/// The adjoint of the undersampled k-space data.
pub fn zero_fill_baseline<T: Real>(op: &MaskedFourier<T>, y: &Tensor<T>) -> Result<Tensor<T>> {
    op.adjoint(y)
}

/// Eval-mode reconstructions of `data` scored against its truth.
pub fn evaluate<T: Real>(model: &UnrolledModel<T>, op: &dyn LinearOperator<T>, data: &TrainData<f64>, batch_size: usize) -> Result<(Tensor<f64>, MetricReport)> {
    let x_hat = reconstruct(model, op, &data.y.cast(), &data.x_tilde.cast(), batch_size)?.cast::<f64>();
    let report = MetricReport::compute(&data.truth, &x_hat)?;
    Ok((x_hat, report))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SweepCell {
    pub copies: usize,
    pub residual_blocks: usize,
    pub weight_mode: WeightMode,
}

impl SweepCell {
    pub fn new(copies: usize, residual_blocks: usize, weight_mode: WeightMode) -> Self {
        SweepCell { copies, residual_blocks, weight_mode }
    }

    pub fn label(&self) -> String {
        format!("{}x{}-{}", self.copies, self.residual_blocks, self.weight_mode)
    }

    /// Initialization seed from the sweep seed and the cell itself, so cell order does not matter.
    fn init_seed(&self, seed: u64) -> u64 {
        let mode = match self.weight_mode {
            WeightMode::Shared => 0,
            WeightMode::Independent => 1,
        };
        let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
        for v in [self.copies as u64, self.residual_blocks as u64, mode] {
            h = (h ^ v).wrapping_mul(0x0000_0100_0000_01b3).rotate_left(17);
        }
        h
    }
}

/// Parses `copies:rbs:mode` entries separated by commas, e.g. `3:1:shared,2:2:independent`.
pub fn parse_cells(text: &str) -> Result<Vec<SweepCell>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            let parts: Vec<&str> = s.trim().split(':').collect();
            if parts.len() != 3 {
                return Err(Error::parse("sweep cells", format!("expected copies:rbs:mode, got '{s}'")));
            }
            let num = |p: &str| p.parse::<usize>().map_err(|_| Error::parse("sweep cells", format!("bad count '{p}'")));
            Ok(SweepCell::new(num(parts[0])?, num(parts[1])?, parts[2].parse()?))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    Single,
    Double,
}

/// Classical baselines appended to a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct CsBaselines {
    pub transforms: Vec<Transform>,
    pub iters: usize,
    /// Training images used to tune the regularization weight.
    pub tune_images: usize,
    pub grid: Vec<f64>,
    pub refine_steps: usize,
}

impl Default for CsBaselines {
    fn default() -> Self {
        CsBaselines { transforms: vec![Transform::Tv, Transform::Wavelet], iters: 200, tune_images: 4, grid: vec![1e-5, 1e-4, 1e-3, 1e-2, 1e-1], refine_steps: 8 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub cells: Vec<SweepCell>,
    pub feature_maps: usize,
    pub train: TrainConfig,
    pub weights: LossWeights,
    pub seed: u64,
    pub precision: Precision,
    /// Writes measured seconds and milliseconds; otherwise the timing columns hold `-`.
    pub record_timing: bool,
    /// Appends a row scoring the network input itself.
    pub include_input: bool,
    pub cs: Option<CsBaselines>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            cells: vec![SweepCell::new(3, 1, WeightMode::Shared)],
            feature_maps: GeneratorConfig::DESK_FEATURE_MAPS,
            train: TrainConfig::default(),
            weights: LossWeights::default(),
            seed: 0,
            precision: Precision::Single,
            record_timing: false,
            include_input: false,
            cs: None,
        }
    }
}

/// A reconstruction problem with train and held-out test data.
pub struct SweepData<'a> {
    pub op: &'a dyn LinearOperator<f64>,
    pub op_single: &'a dyn LinearOperator<f32>,
    pub value_map: ValueMap,
    pub train: &'a TrainData<f64>,
    pub test: &'a TrainData<f64>,
    /// Label of the row scoring the network input itself.
    pub input_label: &'a str,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub copies: Option<usize>,
    pub residual_blocks: Option<usize>,
    /// Weight mode for network rows, the method name otherwise.
    pub method: String,
    pub report: MetricReport,
    pub train_seconds: Option<f64>,
    pub inference_ms: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Test reconstructions in row order.
    pub reconstructions: Vec<Tensor<f64>>,
}

pub const SWEEP_HEADER: &str = "copies,residual_blocks,weight_mode,mean_snr_db,mean_ssim,train_seconds,inference_ms_per_image";

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let opt_usize = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_else(|| "-".into());
        let opt_f = |v: Option<f64>, p: usize| v.map(|x| format!("{x:.p$}")).unwrap_or_else(|| "-".into());
        let mut out = format!("{SWEEP_HEADER}\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{:.6},{:.6},{},{}",
                opt_usize(r.copies),
                opt_usize(r.residual_blocks),
                r.method,
                r.report.mean_snr(),
                r.report.mean_ssim(),
                opt_f(r.train_seconds, 3),
                opt_f(r.inference_ms, 3)
            )
            .unwrap();
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Writes truth, each row's reconstruction of test image `index`, as 16-bit PNG
    /// magnitudes (or RGB) named `<index>_<label>.png`.
    pub fn dump_panels(&self, dir: &Path, truth: &Tensor<f64>, index: usize) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let panel = |x: &Tensor<f64>| -> Result<Tensor<f64>> {
            let (b, c, h, w) = x.dims4("dump_panels")?;
            if index >= b {
                return Err(Error::InvalidArgument(format!("panel index {index} out of {b} images")));
            }
            let item = Tensor::from_vec(&[1, c, h, w], x.item_slice(index).to_vec())?;
            if c == 2 {
                batch_magnitude(&item)?.reshape(&[h, w])
            } else {
                item.reshape(&[c, h, w])
            }
        };
        save_image(&dir.join(format!("{index}_truth.png")), &panel(truth)?, BitDepth::Sixteen)?;
        for (row, x) in self.rows.iter().zip(&self.reconstructions) {
            let label = match (row.copies, row.residual_blocks) {
                (Some(k), Some(r)) => format!("{k}x{r}-{}", row.method),
                _ => row.method.clone(),
            };
            save_image(&dir.join(format!("{index}_{label}.png")), &panel(x)?, BitDepth::Sixteen)?;
        }
        Ok(())
    }
}

/// Median wall-clock milliseconds of single-image eval forward passes after warm-up.
pub fn inference_ms<T: Real>(model: &UnrolledModel<T>, op: &dyn LinearOperator<T>, y: &Tensor<T>, x_tilde: &Tensor<T>) -> Result<f64> {
    const WARMUP: usize = 3;
    const RUNS: usize = 20;
    let one = |t: &Tensor<T>| {
        let mut shape = t.shape().to_vec();
        shape[0] = 1;
        Tensor::from_vec(&shape, t.item_slice(0).to_vec())
    };
    let (y1, x1) = (one(y)?, one(x_tilde)?);
    for _ in 0..WARMUP {
        model.forward(op, &y1, &x1, Mode::Eval)?;
    }
    let mut times: Vec<f64> = (0..RUNS)
        .map(|_| {
            let t = Instant::now();
            model.forward(op, &y1, &x1, Mode::Eval).map(|_| t.elapsed().as_secs_f64() * 1e3)
        })
        .collect::<Result<_>>()?;
    times.sort_by(f64::total_cmp);
    Ok((times[RUNS / 2 - 1] + times[RUNS / 2]) / 2.0)
}

/// Builds, trains and evaluates one cell; returns the row, test reconstructions and trained model.
pub fn run_cell<T: Real>(spec: &SweepSpec, cell: SweepCell, op: &dyn LinearOperator<T>, data: &SweepData<'_>) -> Result<(SweepRow, Tensor<f64>, UnrolledModel<T>)> {
    let channels = data.train.truth.shape()[1];
    let config = GeneratorConfig { num_residual_blocks: cell.residual_blocks, feature_maps: spec.feature_maps, in_channels: channels, out_channels: channels };
    let mut rng = ChaCha8Rng::seed_from_u64(cell.init_seed(spec.seed));
    let mut model = UnrolledModel::<T>::new(cell.copies, cell.weight_mode, config, data.value_map, &mut rng)?;
    let train_data = TrainData::new(data.train.y.cast(), data.train.x_tilde.cast(), data.train.truth.cast())?;
    let start = Instant::now();
    train(&mut model, None, op, &train_data, &spec.train, &spec.weights, None)?;
    let train_seconds = start.elapsed().as_secs_f64();
    let (x_hat, report) = evaluate(&model, op, data.test, spec.train.batch_size.max(8))?;
    let inference = if spec.record_timing { Some(inference_ms(&model, op, &data.test.y.cast(), &data.test.x_tilde.cast())?) } else { None };
    let row = SweepRow {
        copies: Some(cell.copies),
        residual_blocks: Some(cell.residual_blocks),
        method: cell.weight_mode.to_string(),
        report,
        train_seconds: spec.record_timing.then_some(train_seconds),
        inference_ms: inference,
    };
    Ok((row, x_hat, model))
}

/// Sparse-coding reconstruction of `test` with a weight tuned on the first training images.
pub fn cs_baseline(data: &SweepData<'_>, transform: Transform, cs: &CsBaselines) -> Result<(f64, Tensor<f64>)> {
    let k = cs.tune_images.clamp(1, data.train.len());
    let idx: Vec<usize> = (0..k).collect();
    let tune = data.train.batch(&idx)?;
    let base = SparsityConfig::new(transform, 0.0);
    let tuned = tune_reg_weight(data.op, &tune.y, &tune.truth, &base, cs.iters, &cs.grid, cs.refine_steps)?;
    let config = SparsityConfig { reg_weight: tuned.reg_weight, ..base };
    let (x, _) = fista_with(data.op, &data.test.y, &config, 1.0, cs.iters, &SolveOptions::default())?;
    Ok((tuned.reg_weight, x))
}

/// Trains every cell with the same data and budget, then optionally scores the network
/// input and classical baselines. Rows follow the cell order, then input and baselines.
pub fn run_sweep(spec: &SweepSpec, data: &SweepData<'_>) -> Result<SweepResult> {
    if spec.cells.is_empty() {
        return Err(Error::InvalidArgument("sweep has no cells".into()));
    }
    let mut result = SweepResult::default();
    for &cell in &spec.cells {
        let wrap = |e: Error| Error::Cell { cell: cell.label(), source: Box::new(e) };
        let (row, x_hat) = match spec.precision {
            Precision::Single => run_cell(spec, cell, data.op_single, data).map(|(r, x, _)| (r, x)),
            Precision::Double => run_cell(spec, cell, data.op, data).map(|(r, x, _)| (r, x)),
        }
        .map_err(wrap)?;
        result.rows.push(row);
        result.reconstructions.push(x_hat);
    }
    let baseline_row = |method: String, x: &Tensor<f64>| -> Result<SweepRow> {
        Ok(SweepRow { copies: None, residual_blocks: None, method, report: MetricReport::compute(&data.test.truth, x)?, train_seconds: None, inference_ms: None })
    };
    if spec.include_input {
        result.rows.push(baseline_row(data.input_label.to_string(), &data.test.x_tilde)?);
        result.reconstructions.push(data.test.x_tilde.clone());
    }
    if let Some(cs) = &spec.cs {
        for &t in &cs.transforms {
            let name = match t {
                Transform::Wavelet => "cs-wv".to_string(),
                Transform::Tv => "cs-tv".to_string(),
                Transform::Identity => "cs-l1".to_string(),
            };
            let (_, x) = cs_baseline(data, t, cs).map_err(|e| Error::Cell { cell: name.clone(), source: Box::new(e) })?;
            result.rows.push(baseline_row(name, &x)?);
            result.reconstructions.push(x);
        }
    }
    Ok(result)
}
