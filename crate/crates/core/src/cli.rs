//! Command-line entry point. Every subcommand reads an optional `key=value` config
//! file and a `--seed`; exit codes are 0 success, 1 usage, 2 runtime, 3 verification failure.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::KeyValues;
use crate::cs::{fista, ista, SparsityConfig, Transform};
use crate::data::{
    build_mri_dataset, build_sr_dataset, build_sr_dataset_from_images, generate_texture, load_image, load_image_dir, save_image, BitDepth, MeasurementFile,
    MriDataConfig, Split, SrDataConfig, MRI_DATA_KEYS,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, parse_cells, run_sweep, CsBaselines, MetricReport, Precision, SweepData, SweepSpec};
use crate::gradsuite::run_suite;
use crate::model::{load_model, save_model, Discriminator, GeneratorConfig, UnrolledModel, ValueMap, WeightMode};
use crate::nn::Mode;
use crate::operators::{batch_magnitude, generate_mask, BoxDownsample, LinearOperator, MaskSpec, MaskedFourier, SamplingMask};
use crate::tensor::{Real, Tensor};
use crate::train::{apply_train_keys, train, train_keys, LossWeights, TrainConfig, TrainData, TRAIN_KEYS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "proxrec", version, about = "Compressive image recovery with unrolled proximal networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// key=value configuration file
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Overrides the seed keys of the config
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Variable-density k-space sampling mask
    MaskGen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// Also write the mask as an 8-bit image
        #[arg(long)]
        image: Option<PathBuf>,
    },
    /// Synthetic phantoms with measurement files and a manifest, or RGB textures
    PhantomGen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// mri or texture
        #[arg(long, default_value = "mri")]
        kind: String,
    },
    /// Trains an unrolled network; writes model, log, config and test report
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstructs a measurement file with a trained model
    Reconstruct {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        measurements: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Sparse-coding reconstruction of a measurement file
    CsSolve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        measurements: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// ista or fista
        #[arg(long)]
        solver: Option<String>,
        /// wavelet or tv
        #[arg(long)]
        transform: Option<String>,
        #[arg(long)]
        reg_weight: Option<f64>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Trains and scores a sweep of architectures; writes a CSV table
    Benchmark {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// Directory for reconstruction panels of the first test image
        #[arg(long)]
        panels: Option<PathBuf>,
        /// Records train seconds and inference times (makes the CSV run-dependent)
        #[arg(long)]
        timing: bool,
    },
    /// Finite-difference gradient suite; exits 3 if any check fails
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(common: &Common, known: &[&[&str]]) -> Result<KeyValues> {
    let kv = match &common.config {
        Some(p) => KeyValues::load(p)?,
        None => KeyValues::new(),
    };
    let all: Vec<&str> = known.iter().flat_map(|k| k.iter().copied()).collect();
    kv.check_known(&all)?;
    Ok(kv)
}

const MASK_KEYS: &[&str] = &["size", "fraction", "decay_power", "calib_size", "mask_seed"];

fn mask_from(kv: &KeyValues, seed: Option<u64>) -> Result<SamplingMask> {
    let size: usize = kv.get("size")?.unwrap_or(64);
    let mut spec = MaskSpec::new(size, size, kv.get("fraction")?.unwrap_or(0.2), kv.get("mask_seed")?.unwrap_or(0));
    kv.read_into("decay_power", &mut spec.decay_power)?;
    spec.calib_size = kv.get("calib_size")?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    generate_mask(&spec)
}

fn mask_gen(common: &Common, out: &Path, image: Option<&Path>) -> Result<()> {
    let kv = load_config(common, &[MASK_KEYS])?;
    let mask = mask_from(&kv, common.seed)?;
    mask.save(out)?;
    if let Some(p) = image {
        let (h, w) = mask.dims();
        let pixels = Tensor::from_vec(&[h, w], mask.to_gray8().into_iter().map(|v| v as f64 / 255.0).collect())?;
        save_image(p, &pixels, BitDepth::Eight)?;
    }
    println!("mask {:016x} {}x{} samples={} fraction={:.4}", mask.id(), mask.dims().0, mask.dims().1, mask.count(), mask.realized_fraction());
    Ok(())
}

fn mri_config(kv: &KeyValues, seed: Option<u64>) -> Result<MriDataConfig> {
    let mut c = MriDataConfig::default();
    c.apply_keys(kv)?;
    if let Some(s) = seed {
        c.seed = s;
    }
    Ok(c)
}

fn item(t: &Tensor<f64>, i: usize) -> Result<Tensor<f64>> {
    let mut shape = t.shape().to_vec();
    shape[0] = 1;
    Tensor::from_vec(&shape, t.item_slice(i).to_vec())
}

/// `[1, C, H, W]` as a savable image: magnitude for complex data.
fn displayable(x: &Tensor<f64>) -> Result<Tensor<f64>> {
    let (_, c, h, w) = x.dims4("image output")?;
    if c == 2 {
        batch_magnitude(x)?.reshape(&[h, w])
    } else {
        x.clone().reshape(&[c, h, w])
    }
}

fn phantom_gen(common: &Common, out: &Path, kind: &str) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    match kind {
        "mri" => {
            let kv = load_config(common, &[MRI_DATA_KEYS])?;
            let config = mri_config(&kv, common.seed)?;
            let mut ds = build_mri_dataset(&config)?;
            ds.op.mask().save(&out.join("mask.prmk"))?;
            let (mut n_train, mut n_test) = (0, 0);
            for e in ds.manifest.entries.iter_mut() {
                let (data, counter, name) = match e.split {
                    Split::Train => (&ds.train, &mut n_train, "train"),
                    Split::Test => (&ds.test, &mut n_test, "test"),
                };
                let i = *counter;
                *counter += 1;
                let stem = format!("{name}_{i:04}");
                save_image(&out.join(format!("{stem}.png")), &displayable(&item(&data.truth, i)?)?, BitDepth::Sixteen)?;
                let y = item(&data.y, i)?;
                MeasurementFile::from_tensor(&y, 0, config.size, config.size, e.mask_id, config.noise_sigma)?.save(&out.join(format!("{stem}.prms")))?;
                e.path = format!("{stem}.png");
            }
            ds.manifest.validate()?;
            ds.manifest.save(&out.join("manifest.txt"))?;
            println!("wrote {n_train} train and {n_test} test phantoms to {}", out.display());
        }
        "texture" => {
            let kv = load_config(common, &[&["size", "count", "data_seed"]])?;
            let size: usize = kv.get("size")?.unwrap_or(64);
            let count: usize = kv.get("count")?.unwrap_or(16);
            let seed = common.seed.or(kv.get("data_seed")?).unwrap_or(0);
            for i in 0..count {
                let t = generate_texture(size, seed.wrapping_add(i as u64))?;
                save_image(&out.join(format!("texture_{i:04}.png")), &t, BitDepth::Eight)?;
            }
            println!("wrote {count} textures to {}", out.display());
        }
        other => return Err(Error::InvalidArgument(format!("unknown phantom kind '{other}' (mri|texture)"))),
    }
    Ok(())
}

const MODEL_KEYS: &[&str] = &["task", "copies", "residual_blocks", "weight_mode", "feature_maps", "precision"];
const SR_KEYS: &[&str] = &["image_dir", "deconv_steps", "deconv_step_size"];

/// A dataset with its operator in both precisions.
struct Problem {
    op: Box<dyn LinearOperator<f64>>,
    op_single: Box<dyn LinearOperator<f32>>,
    value_map: ValueMap,
    train: TrainData<f64>,
    test: TrainData<f64>,
    input_label: &'static str,
}

fn build_problem(kv: &KeyValues, data_seed: Option<u64>) -> Result<Problem> {
    match kv.get_str("task").unwrap_or("mri") {
        "mri" => {
            let ds = build_mri_dataset(&mri_config(kv, data_seed)?)?;
            let single = MaskedFourier::<f32>::new(ds.op.mask().clone());
            Ok(Problem { op: Box::new(ds.op), op_single: Box::new(single), value_map: ValueMap::COMPLEX, train: ds.train, test: ds.test, input_label: "zero-fill" })
        }
        "sr" => {
            let mut c = SrDataConfig::default();
            kv.read_into("size", &mut c.size)?;
            kv.read_into("n_train", &mut c.n_train)?;
            kv.read_into("n_test", &mut c.n_test)?;
            kv.read_into("noise_sigma", &mut c.noise_sigma)?;
            kv.read_into("data_seed", &mut c.seed)?;
            kv.read_into("deconv_steps", &mut c.deconv_steps)?;
            kv.read_into("deconv_step_size", &mut c.deconv_step_size)?;
            if let Some(s) = data_seed {
                c.seed = s;
            }
            let ds = match kv.get_str("image_dir") {
                Some(dir) => build_sr_dataset_from_images(&load_image_dir(Path::new(dir))?.1, &c)?,
                None => build_sr_dataset(&c)?,
            };
            let op: BoxDownsample = ds.op;
            Ok(Problem { op: Box::new(op.clone()), op_single: Box::new(op), value_map: ValueMap::IDENTITY, train: ds.train, test: ds.test, input_label: "deconvolution" })
        }
        other => Err(Error::InvalidArgument(format!("unknown task '{other}' (mri|sr)"))),
    }
}

fn precision(kv: &KeyValues) -> Result<Precision> {
    match kv.get_str("precision").unwrap_or("single") {
        "single" | "f32" => Ok(Precision::Single),
        "double" | "f64" => Ok(Precision::Double),
        other => Err(Error::InvalidArgument(format!("unknown precision '{other}' (single|double)"))),
    }
}

fn train_settings(kv: &KeyValues, seed: Option<u64>) -> Result<(TrainConfig, LossWeights)> {
    let mut config = TrainConfig::default();
    let mut weights = LossWeights::default();
    apply_train_keys(kv, &mut config, &mut weights)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    Ok((config, weights))
}

fn train_typed<T: Real>(kv: &KeyValues, problem: &Problem, op: &dyn LinearOperator<T>, config: &TrainConfig, weights: &LossWeights, out: &Path) -> Result<MetricReport> {
    let channels = problem.train.truth.shape()[1];
    let generator = GeneratorConfig {
        num_residual_blocks: kv.get("residual_blocks")?.unwrap_or(1),
        feature_maps: kv.get("feature_maps")?.unwrap_or(GeneratorConfig::DESK_FEATURE_MAPS),
        in_channels: channels,
        out_channels: channels,
    };
    let copies: usize = kv.get("copies")?.unwrap_or(3);
    let mode: WeightMode = kv.get("weight_mode")?.unwrap_or(WeightMode::Shared);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = UnrolledModel::<T>::new(copies, mode, generator, problem.value_map, &mut rng)?;
    let mut disc = (weights.lambda > 0.0).then(|| Discriminator::<T>::new(if channels == 2 { 1 } else { channels }, &mut rng));
    let data = TrainData::new(problem.train.y.cast(), problem.train.x_tilde.cast(), problem.train.truth.cast())?;
    let mut hook = |t: usize, m: &UnrolledModel<T>| save_model(&out.join(format!("checkpoint_{t:06}.prxm")), m);
    let log = train(&mut model, disc.as_mut(), op, &data, config, weights, Some(&mut hook))?;
    log.write_csv(&out.join("train_log.csv"))?;
    save_model(&out.join("model.prxm"), &model)?;
    let (_, report) = evaluate(&model, op, &problem.test, 16)?;
    Ok(report)
}

fn train_cmd(common: &Common, out: &Path) -> Result<()> {
    let kv = load_config(common, &[MODEL_KEYS, TRAIN_KEYS, MRI_DATA_KEYS, SR_KEYS])?;
    let (config, weights) = train_settings(&kv, common.seed)?;
    let problem = build_problem(&kv, None)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let report = match precision(&kv)? {
        Precision::Single => train_typed(&kv, &problem, problem.op_single.as_ref(), &config, &weights, out)?,
        Precision::Double => train_typed(&kv, &problem, problem.op.as_ref(), &config, &weights, out)?,
    };
    let mut effective = kv.clone();
    for k in train_keys(&config, &weights).keys() {
        effective.set(k, train_keys(&config, &weights).get_str(k).unwrap_or_default());
    }
    std::fs::write(out.join("config.txt"), effective.to_text()).map_err(|e| Error::io(out, e))?;
    std::fs::write(out.join("test_report.txt"), report.to_text()).map_err(|e| Error::io(out, e))?;
    println!("test mean SNR {:.3} dB, mean SSIM {:.4} over {} images", report.mean_snr(), report.mean_ssim(), report.len());
    Ok(())
}

fn read_measurements(path: &Path, mask_path: &Path) -> Result<(MaskedFourier<f64>, Tensor<f64>)> {
    let file = MeasurementFile::load(path)?;
    let mask = SamplingMask::load(mask_path)?;
    if mask.id() != file.mask_id || mask.dims() != (file.h, file.w) {
        return Err(Error::InvalidArgument(format!("measurement mask id {:016x} does not match mask file {:016x}", file.mask_id, mask.id())));
    }
    Ok((MaskedFourier::new(mask), file.to_tensor()))
}

fn write_result(x: &Tensor<f64>, out: &Path, truth: Option<&Path>, report: Option<&Path>) -> Result<()> {
    let image = displayable(x)?;
    save_image(out, &image, BitDepth::Sixteen)?;
    if let Some(t) = truth {
        let truth = load_image(t)?;
        let shape: Vec<usize> = std::iter::once(1).chain(truth.shape().iter().copied()).collect();
        let r = MetricReport::compute(&truth.reshape(&shape)?, &image.reshape(&shape)?)?;
        println!("SNR {:.3} dB, SSIM {:.4}", r.mean_snr(), r.mean_ssim());
        if let Some(p) = report {
            std::fs::write(p, r.to_text()).map_err(|e| Error::io(p, e))?;
        }
    } else if report.is_some() {
        return Err(Error::InvalidArgument("--report needs --truth".into()));
    }
    Ok(())
}

fn reconstruct_cmd(common: &Common, measurements: &Path, checkpoint: &Path, mask: &Path, out: &Path, truth: Option<&Path>, report: Option<&Path>) -> Result<()> {
    load_config(common, &[&["precision"]])?;
    let (op, y) = read_measurements(measurements, mask)?;
    let model: UnrolledModel<f64> = load_model(checkpoint)?;
    let x_tilde = op.adjoint(&y)?;
    let x = model.forward(&op, &y, &x_tilde, Mode::Eval)?.x_hat;
    write_result(&x, out, truth, report)
}

#[allow(clippy::too_many_arguments)]
fn cs_solve_cmd(
    common: &Common,
    measurements: &Path,
    mask: &Path,
    out: &Path,
    solver: Option<&str>,
    transform: Option<&str>,
    reg_weight: Option<f64>,
    iters: Option<usize>,
    truth: Option<&Path>,
    report: Option<&Path>,
) -> Result<()> {
    let kv = load_config(common, &[&["solver", "transform", "reg_weight", "iters", "wavelet_levels"]])?;
    let solver = solver.map(str::to_string).or_else(|| kv.get_str("solver").map(str::to_string)).unwrap_or_else(|| "fista".into());
    let transform: Transform = match transform {
        Some(t) => t.parse()?,
        None => kv.get("transform")?.unwrap_or(Transform::Wavelet),
    };
    let reg = match reg_weight {
        Some(r) => r,
        None => kv.get("reg_weight")?.unwrap_or(1e-3),
    };
    let iters = match iters {
        Some(i) => i,
        None => kv.get("iters")?.unwrap_or(200),
    };
    let mut config = SparsityConfig::new(transform, reg);
    kv.read_into("wavelet_levels", &mut config.wavelet_levels)?;
    let (op, y) = read_measurements(measurements, mask)?;
    let (x, trace) = match solver.as_str() {
        "ista" => ista(&op, &y, &config, 1.0, iters)?,
        "fista" => fista(&op, &y, &config, 1.0, iters)?,
        other => return Err(Error::InvalidArgument(format!("unknown solver '{other}' (ista|fista)"))),
    };
    println!("{solver} {transform} reg={reg} iters={iters} final objective {:.6e}", trace.objective.last().copied().unwrap_or(f64::NAN));
    write_result(&x, out, truth, report)
}

const BENCH_KEYS: &[&str] = &["cells", "cs", "cs_iters", "cs_tune_images", "record_timing", "include_input", "sweep_seed"];

fn benchmark_cmd(common: &Common, out: &Path, panels: Option<&Path>, timing: bool) -> Result<()> {
    let kv = load_config(common, &[MODEL_KEYS, TRAIN_KEYS, MRI_DATA_KEYS, SR_KEYS, BENCH_KEYS])?;
    let (train, weights) = train_settings(&kv, common.seed)?;
    let problem = build_problem(&kv, None)?;
    let mut spec = SweepSpec {
        cells: parse_cells(kv.get_str("cells").unwrap_or("3:1:shared"))?,
        feature_maps: kv.get("feature_maps")?.unwrap_or(GeneratorConfig::DESK_FEATURE_MAPS),
        train,
        weights,
        seed: common.seed.or(kv.get("sweep_seed")?).unwrap_or(0),
        precision: precision(&kv)?,
        record_timing: timing || kv.get("record_timing")?.unwrap_or(false),
        include_input: kv.get("include_input")?.unwrap_or(false),
        cs: None,
    };
    match kv.get_str("cs").unwrap_or("none") {
        "none" => {}
        list => {
            let mut cs = CsBaselines { transforms: list.split(',').map(|t| t.trim().parse()).collect::<Result<_>>()?, ..CsBaselines::default() };
            kv.read_into("cs_iters", &mut cs.iters)?;
            kv.read_into("cs_tune_images", &mut cs.tune_images)?;
            spec.cs = Some(cs);
        }
    }
    let data = SweepData {
        op: problem.op.as_ref(),
        op_single: problem.op_single.as_ref(),
        value_map: problem.value_map,
        train: &problem.train,
        test: &problem.test,
        input_label: problem.input_label,
    };
    let result = run_sweep(&spec, &data)?;
    result.write_csv(out)?;
    if let Some(dir) = panels {
        result.dump_panels(dir, &problem.test.truth, 0)?;
    }
    print!("{}", result.to_csv());
    Ok(())
}

fn gradcheck_cmd(common: &Common, points: Option<usize>, out: Option<&Path>) -> Result<bool> {
    let kv = load_config(common, &[&["points", "seed"]])?;
    let points = match points {
        Some(p) => p,
        None => kv.get("points")?.unwrap_or(10),
    };
    let seed = common.seed.or(kv.get("seed")?).unwrap_or(0);
    let report = run_suite(seed, points)?;
    let text = report.to_text();
    print!("{text}");
    if let Some(p) = out {
        std::fs::write(p, &text).map_err(|e| Error::io(p, e))?;
    }
    Ok(report.passed())
}

/// Runs a parsed command; `Ok(false)` is a verification failure.
pub fn execute(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::MaskGen { common, out, image } => mask_gen(common, out, image.as_deref()).map(|_| true),
        Command::PhantomGen { common, out, kind } => phantom_gen(common, out, kind).map(|_| true),
        Command::Train { common, out } => train_cmd(common, out).map(|_| true),
        Command::Reconstruct { common, measurements, checkpoint, mask, out, truth, report } => {
            reconstruct_cmd(common, measurements, checkpoint, mask, out, truth.as_deref(), report.as_deref()).map(|_| true)
        }
        Command::CsSolve { common, measurements, mask, out, solver, transform, reg_weight, iters, truth, report } => cs_solve_cmd(
            common,
            measurements,
            mask,
            out,
            solver.as_deref(),
            transform.as_deref(),
            *reg_weight,
            *iters,
            truth.as_deref(),
            report.as_deref(),
        )
        .map(|_| true),
        Command::Benchmark { common, out, panels, timing } => benchmark_cmd(common, out, panels.as_deref(), *timing).map(|_| true),
        Command::Gradcheck { common, points, out } => gradcheck_cmd(common, *points, out.as_deref()),
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let code = match execute(&cli) {
        Ok(true) => EXIT_OK,
        Ok(false) => {
            eprintln!("verification failed");
            EXIT_VERIFY
        }
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            EXIT_RUNTIME
        }
    };
    let _ = std::io::stdout().flush();
    code
}
