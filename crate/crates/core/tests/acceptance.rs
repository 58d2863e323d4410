//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion. The exit
//! status is non-zero on a failure only with `PROXREC_ACCEPTANCE_STRICT=1`.
//!
//! `PROXREC_ACCEPTANCE_SCALE` (default 1) multiplies the training budgets of the
//! two long runs; values below 1 are for development only and may fail.
//! `PROXREC_ACCEPTANCE_ONLY=2,5` restricts the run to the listed criteria.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use proxrec::cs::{fista, fista_with, ista, objective, wavelet_inverse, SolveOptions, SparsityConfig, Transform};
use proxrec::data::{build_mri_dataset, build_sr_dataset, MriDataConfig, SrDataConfig};
use proxrec::eval::{
    image_snr, run_sweep, snr, ssim, CsBaselines, MetricReport, Precision, SweepCell, SweepData, SweepSpec, SNR_CAP_DB,
};
use proxrec::gradsuite::run_suite;
use proxrec::model::{Discriminator, GeneratorConfig, UnrolledModel, ValueMap, WeightMode};
use proxrec::nn::Parameters;
use proxrec::operators::{
    approx_deconvolve, data_consistency, generate_mask, nullspace_filter, BoxDownsample, LinearOperator, MaskSpec, MaskedFourier, SamplingMask,
};
use proxrec::train::{discriminator_loss, gan_warmup, generator_loss, train, LossWeights, TrainConfig, TrainData};
use proxrec::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn check(ok: bool, msg: String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg)
    }
}

fn scale() -> f64 {
    std::env::var("PROXREC_ACCEPTANCE_SCALE").ok().and_then(|s| s.parse().ok()).filter(|s: &f64| *s > 0.0).unwrap_or(1.0)
}

// ---------------------------------------------------------------------------

fn gradient_suite() -> Outcome {
    let report = run_suite(2024, 3).map_err(|e| e.to_string())?;
    let secs = report.elapsed.as_secs_f64();
    let failed: Vec<&str> = report.results.iter().filter(|r| !r.passed()).map(|r| r.name.as_str()).collect();
    let detail = format!("{} checks, worst rel err {:.2e}, {:.1}s", report.results.len(), report.worst_error(), secs);
    check(failed.is_empty(), format!("{detail}; failed: {}", failed.join(" ")))?;
    check(secs < 120.0, format!("{detail}; over the 120 s budget"))?;
    Ok(detail)
}

// ---------------------------------------------------------------------------

fn batch_of<T: LinearOperator<f64>>(op: &T, b: usize, measurement: bool, r: &mut ChaCha8Rng) -> Tensor<f64> {
    let mut shape = vec![b];
    shape.extend(if measurement { op.measurement_shape() } else { op.image_shape() });
    Tensor::randn(&shape, 1.0, r)
}

fn adjoint_gap<T: LinearOperator<f64>>(op: &T, r: &mut ChaCha8Rng) -> f64 {
    let x = batch_of(op, 2, false, r);
    let y = batch_of(op, 2, true, r);
    let lhs = op.forward(&x).unwrap().dot(&y).unwrap();
    let rhs = x.dot(&op.adjoint(&y).unwrap()).unwrap();
    (lhs - rhs).abs() / (x.norm_l2() * y.norm_l2())
}

/// `Phi Phi^H` applied to every standard basis vector of the measurement space.
fn row_gram_error(op: &MaskedFourier<f64>) -> f64 {
    let m: usize = op.measurement_shape().iter().product();
    let mut shape = vec![m];
    shape.extend(op.measurement_shape());
    let mut basis = Tensor::zeros(&shape);
    for i in 0..m {
        basis.data_mut()[i * m + i] = 1.0;
    }
    op.forward(&op.adjoint(&basis).unwrap()).unwrap().max_abs_diff(&basis).unwrap()
}

fn operator_suite() -> Outcome {
    let mut r = rng(11);
    let masks: Vec<SamplingMask> = [(16, 16, 0.3), (32, 24, 0.5), (8, 8, 0.2), (64, 64, 0.2)]
        .iter()
        .enumerate()
        .map(|(i, &(h, w, f))| generate_mask(&MaskSpec::new(h, w, f, i as u64)).unwrap())
        .collect();
    let fourier: Vec<MaskedFourier<f64>> = masks.iter().cloned().map(MaskedFourier::new).collect();
    let boxes = [BoxDownsample::new(3, 16, 16).unwrap(), BoxDownsample::new(1, 32, 48).unwrap()];

    let mut adj = 0.0f64;
    for _ in 0..5 {
        for op in &fourier {
            adj = adj.max(adjoint_gap(op, &mut r));
        }
        for op in &boxes {
            adj = adj.max(adjoint_gap(op, &mut r));
        }
    }
    check(adj < 1e-10, format!("adjointness gap {adj:.2e}"))?;

    let gram = fourier[..3].iter().map(row_gram_error).fold(0.0, f64::max);
    check(gram < 1e-10, format!("row Gram error {gram:.2e}"))?;

    let mut idem = 0.0f64;
    for op in &fourier {
        let x = batch_of(op, 3, false, &mut r);
        let p = nullspace_filter(op, &x, 1.0).unwrap();
        let pp = nullspace_filter(op, &p, 1.0).unwrap();
        idem = idem.max(pp.max_abs_diff(&p).unwrap() / x.max_abs());
    }
    check(idem < 1e-9, format!("P_N idempotence {idem:.2e}"))?;

    let mut dc = 0.0f64;
    let mut keep = 0.0f64;
    for (op, mask) in fourier.iter().zip(&masks) {
        let (h, w) = mask.dims();
        let truth = batch_of(op, 2, false, &mut r);
        let guess = batch_of(op, 2, false, &mut r);
        let y = op.forward(&truth).unwrap();
        let x = data_consistency(op, &guess, &y, 1.0).unwrap();
        dc = dc.max(op.forward(&x).unwrap().max_abs_diff(&y).unwrap());
        let complement = SamplingMask::from_included(h, w, mask.included().iter().map(|b| !b).collect(), 1.0 - mask.realized_fraction()).unwrap();
        let rest = MaskedFourier::<f64>::new(complement);
        keep = keep.max(rest.forward(&x).unwrap().max_abs_diff(&rest.forward(&guess).unwrap()).unwrap());
    }
    check(dc < 1e-10 && keep < 1e-10, format!("DC sampled mismatch {dc:.2e}, unsampled drift {keep:.2e}"))?;

    Ok(format!("adjoint {adj:.1e}, gram {gram:.1e}, idempotence {idem:.1e}, dc {dc:.1e}/{keep:.1e}"))
}

// ---------------------------------------------------------------------------

fn sparse_instance(seed: u64) -> (MaskedFourier<f64>, Tensor<f64>, Tensor<f64>) {
    let n = 16;
    let mut r = rng(1000 + seed);
    let mut c = Tensor::zeros(&[1, 2, n, n]);
    let mut picked = Vec::new();
    while picked.len() < 2 {
        let p = r.random_range(0..n * n);
        if !picked.contains(&p) {
            picked.push(p);
        }
    }
    for &p in &picked {
        let mag = r.random_range(0.5..2.0);
        let phase = r.random_range(0.0..std::f64::consts::TAU);
        c.data_mut()[p] = mag * phase.cos();
        c.data_mut()[n * n + p] = mag * phase.sin();
    }
    let x = wavelet_inverse(&c, 3).unwrap();
    let op = MaskedFourier::new(generate_mask(&MaskSpec::new(n, n, 0.5, seed)).unwrap());
    let y = op.forward(&x).unwrap();
    (op, x, y)
}

fn cs_oracle() -> Outcome {
    const INSTANCES: u64 = 20;
    const ITERS: usize = 500;
    let recover = SparsityConfig::new(Transform::Wavelet, 1e-6);
    let fixed = SparsityConfig::new(Transform::Wavelet, 1e-3);
    let continuation = SolveOptions { continuation: Some(0.9), ..SolveOptions::default() };
    let (mut worst_err, mut worst_gap, mut non_monotone) = (0.0f64, f64::NEG_INFINITY, 0);
    for s in 0..INSTANCES {
        let (op, x, y) = sparse_instance(s);
        let (xf, _) = fista_with(&op, &y, &recover, 1.0, ITERS, &continuation).map_err(|e| e.to_string())?;
        worst_err = worst_err.max(xf.sub(&x).unwrap().norm_l2() / x.norm_l2());

        let (xi, ti) = ista(&op, &y, &fixed, 1.0, ITERS).map_err(|e| format!("instance {s}: {e}"))?;
        if ti.objective.windows(2).any(|w| w[1] > w[0] * (1.0 + 1e-12)) {
            non_monotone += 1;
        }
        let (xf, _) = fista(&op, &y, &fixed, 1.0, ITERS).map_err(|e| e.to_string())?;
        let gap = objective(&op, &y, &xf, &fixed).unwrap() - objective(&op, &y, &xi, &fixed).unwrap();
        worst_gap = worst_gap.max(gap);
    }
    let detail = format!("{INSTANCES} instances: worst FISTA rel err {worst_err:.2e}, ISTA non-monotone {non_monotone}, worst FISTA-ISTA objective gap {worst_gap:.2e}");
    check(worst_err < 1e-4 && non_monotone == 0 && worst_gap <= 1e-8, detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------------------

fn mri_sweep() -> Outcome {
    let epochs = ((100.0 * scale()).round() as usize).max(1);
    let data = build_mri_dataset(&MriDataConfig::default()).map_err(|e| e.to_string())?;
    let single = MaskedFourier::<f32>::new(data.op.mask().clone());
    let ks = [1, 2, 3, 5];
    let spec = SweepSpec {
        cells: ks.iter().map(|&k| SweepCell::new(k, 1, WeightMode::Shared)).collect(),
        feature_maps: GeneratorConfig::DESK_FEATURE_MAPS,
        train: TrainConfig { epochs, batch_size: 2, learning_rate: 1e-3, ..TrainConfig::default() },
        weights: LossWeights::default(),
        seed: 0,
        precision: Precision::Single,
        record_timing: true,
        include_input: true,
        cs: Some(CsBaselines { transforms: vec![Transform::Wavelet, Transform::Tv], ..CsBaselines::default() }),
    };
    let sweep = SweepData { op: &data.op, op_single: &single, value_map: ValueMap::COMPLEX, train: &data.train, test: &data.test, input_label: "zero-fill" };
    let result = run_sweep(&spec, &sweep).map_err(|e| e.to_string())?;
    for line in result.to_csv().lines() {
        println!("    {line}");
    }
    let snr_of = |method: &str| result.rows.iter().find(|r| r.method == method).map(|r| r.report.mean_snr()).unwrap();
    let k_snr: Vec<f64> = result.rows[..ks.len()].iter().map(|r| r.report.mean_snr()).collect();
    let three = &result.rows[2];
    let (model, zf, wv) = (three.report.mean_snr(), snr_of("zero-fill"), snr_of("cs-wv"));
    let secs = three.train_seconds.unwrap();
    let drops: Vec<f64> = k_snr.windows(2).map(|w| w[0] - w[1]).filter(|d| *d > 0.0).collect();
    let trend = drops.is_empty() || (drops.len() == 1 && drops[0] <= 0.1);
    let detail = format!(
        "{epochs} epochs: 3x1 {model:.2} dB vs zero-fill {zf:.2} (+{:.2}) and cs-wv {wv:.2} (+{:.2}); train {secs:.0}s; K trend {:?}",
        model - zf,
        model - wv,
        k_snr.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>()
    );
    check(model >= zf + 6.0 && model >= wv + 1.0 && secs <= 1800.0 && trend, detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------------------

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1.0)
}

fn losses_by_hand() -> std::result::Result<String, String> {
    let d_real = [0.3, 0.9, -0.2];
    let d_fake = [0.1, 0.7, 1.4];
    let expected = d_real.iter().zip(&d_fake).map(|(r, f)| (1.0 - r) * (1.0 - r) + f * f).sum::<f64>() / 3.0;
    let got = discriminator_loss(&Tensor::from_vec(&[3], d_real.to_vec()).unwrap(), &Tensor::from_vec(&[3], d_fake.to_vec()).unwrap()).unwrap();
    check(close(got, expected), format!("discriminator loss {got} vs {expected}"))?;

    let mut r = rng(77);
    let (b, m) = (2usize, 5usize);
    let y = Tensor::randn(&[b, 2, m], 1.0, &mut r);
    let predicted: Vec<Tensor<f64>> = (0..3).map(|_| Tensor::randn(&[b, 2, m], 1.0, &mut r)).collect();
    let truth = Tensor::randn(&[b, 2, 4, 4], 1.0, &mut r);
    let x_hat = Tensor::randn(&[b, 2, 4, 4], 1.0, &mut r);
    let d = Tensor::from_vec(&[b, 1], vec![0.25, -0.5]).unwrap();
    let (lambda, eta, gamma) = (0.1, 0.9, 0.3);
    let terms = generator_loss(&y, &predicted, &x_hat, &truth, Some(&d), lambda, eta, gamma).unwrap();

    let (yd, td, xd) = (y.data(), truth.data(), x_hat.data());
    let per_y = 2 * m;
    let mut fidelity = 0.0;
    for p in &predicted {
        for i in 0..b {
            for j in 0..per_y {
                let e = yd[i * per_y + j] - p.data()[i * per_y + j];
                fidelity += e * e;
            }
        }
    }
    fidelity /= b as f64;
    let per_x = 32;
    let mut pixel = 0.0;
    for i in 0..b {
        let (mut l1, mut l2) = (0.0, 0.0);
        for j in 0..per_x {
            let e = td[i * per_x + j] - xd[i * per_x + j];
            l1 += e.abs();
            l2 += e * e;
        }
        pixel += gamma * l1 + (1.0 - gamma) * l2.sqrt();
    }
    pixel /= b as f64;
    let gan = ((1.0f64 - 0.25).powi(2) + (1.0f64 + 0.5).powi(2)) / 2.0;
    let total = fidelity + lambda * gan + eta * pixel;
    for (name, got, want) in [("fidelity", terms.fidelity, fidelity), ("pixel", terms.pixel, pixel), ("gan", terms.gan, gan), ("total", terms.total(), total)] {
        check(close(got, want), format!("generator {name} term {got} vs {want}"))?;
    }
    Ok("loss terms match".into())
}

/// One 32x32 phantom, 1 copy, 1 RB, 5000 constant-rate Adam steps. Returns the
/// first step below 1e-3 (0 if none), the best loss and the first and last losses.
fn overfit() -> std::result::Result<(usize, f64, f64, f64), String> {
    let ds = build_mri_dataset(&MriDataConfig { size: 32, n_train: 1, n_test: 1, noise_sigma: 0.0, ..MriDataConfig::default() }).map_err(|e| e.to_string())?;
    let config = GeneratorConfig { num_residual_blocks: 1, feature_maps: 64, in_channels: 2, out_channels: 2 };
    let mut model = UnrolledModel::<f64>::new(1, WeightMode::Shared, config, ValueMap::COMPLEX, &mut rng(3)).map_err(|e| e.to_string())?;
    let train_config = TrainConfig { epochs: 5000, batch_size: 1, learning_rate: 1e-3, ..TrainConfig::default() };
    let log = train(&mut model, None, &ds.op, &ds.train, &train_config, &LossWeights::default(), None).map_err(|e| e.to_string())?;
    let best = log.rows.iter().map(|r| r.pixel_loss).fold(f64::INFINITY, f64::min);
    let first = log.rows.iter().position(|r| r.pixel_loss < 1e-3).map(|p| p + 1).unwrap_or(0);
    Ok((first, best, log.rows[0].pixel_loss, log.rows[log.rows.len() - 1].pixel_loss))
}

fn lambda_zero_identity() -> std::result::Result<(), String> {
    let ds = build_mri_dataset(&MriDataConfig { size: 16, n_train: 6, n_test: 1, ..MriDataConfig::default() }).map_err(|e| e.to_string())?;
    let config = GeneratorConfig { num_residual_blocks: 1, feature_maps: 4, in_channels: 2, out_channels: 2 };
    let base = UnrolledModel::<f64>::new(2, WeightMode::Independent, config, ValueMap::COMPLEX, &mut rng(8)).unwrap();
    let train_config = TrainConfig { epochs: 2, learning_rate: 1e-3, seed: 4, ..TrainConfig::default() };
    let weights = LossWeights::default();
    let (mut a, mut b) = (base.clone(), base);
    let mut d = Discriminator::<f64>::new(1, &mut rng(9));
    let d_before = d.clone();
    let log_a = train(&mut a, Some(&mut d), &ds.op, &ds.train, &train_config, &weights, None).map_err(|e| e.to_string())?;
    let log_b = train(&mut b, None, &ds.op, &ds.train, &train_config, &weights, None).map_err(|e| e.to_string())?;
    let bits = |m: &UnrolledModel<f64>| m.params().iter().flat_map(|t| t.data().iter().map(|v| v.to_bits())).collect::<Vec<u64>>();
    check(bits(&a) == bits(&b) && log_a.to_csv() == log_b.to_csv() && d == d_before, "lambda=0 run differs when a discriminator is attached".into())
}

fn loss_suite() -> Outcome {
    losses_by_hand()?;
    let (l, w) = (0.1, 1000);
    check(gan_warmup(0, l, w) == 0.0 && gan_warmup(w, l, w) == l && gan_warmup(5 * w, l, w) == l && gan_warmup(w / 2, l, w) == l / 2.0, "warm-up endpoints".into())?;
    lambda_zero_identity()?;
    let (first, best, initial, last) = overfit()?;
    let detail = format!(
        "hand-computed terms exact, warm-up exact, lambda=0 identical; overfit pixel loss {initial:.2e} -> {last:.2e} (best {best:.2e}, {})",
        if first > 0 { format!("below 1e-3 at step {first}") } else { "never below 1e-3 in 5000 steps".to_string() }
    );
    check(first > 0, detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------------------

fn superresolution() -> Outcome {
    let mut r = rng(21);
    let op = BoxDownsample::new(3, 64, 64).unwrap();
    for c in [0.0, 1.0, 0.3, -2.75, 1.0 / 3.0, 0.123456789] {
        let x = Tensor::full(&[1, 3, 64, 64], c);
        let y = op.forward(&x).unwrap();
        check(y.data().iter().all(|v| *v == c), format!("constant {c} is not a fixed point of the box operator"))?;
        let back = approx_deconvolve(&op, &y, 5, 0.1).unwrap();
        check(back.data().iter().all(|v| *v == c), format!("constant {c} not recovered by the deconvolution initializer"))?;
    }

    let (mut worst_after, mut least_before) = (0.0f64, f64::INFINITY);
    for _ in 0..100 {
        let x = Tensor::rand_uniform(&[1, 3, 64, 64], 0.0, 1.0, &mut r);
        let y = op.forward(&x).unwrap();
        let spread = LinearOperator::<f64>::adjoint(&op, &y).unwrap();
        let before = y.sub(&op.forward(&spread).unwrap()).unwrap().norm_l2();
        let after = y.sub(&op.forward(&approx_deconvolve(&op, &y, 5, 0.1).unwrap()).unwrap()).unwrap().norm_l2();
        check(after < before, format!("deconvolution residual {after} not below spread residual {before}"))?;
        worst_after = worst_after.max(after);
        least_before = least_before.min(before);
    }

    let seconds = 900.0 * scale();
    let ds = build_sr_dataset(&SrDataConfig::default()).map_err(|e| e.to_string())?;
    let baseline = MetricReport::compute(&ds.test.truth, &ds.test.x_tilde).unwrap().mean_snr();
    let mut model = UnrolledModel::<f32>::new(2, WeightMode::Shared, GeneratorConfig::rgb(2), ValueMap::IDENTITY, &mut rng(0)).unwrap();
    let data = TrainData::new(ds.train.y.cast(), ds.train.x_tilde.cast(), ds.train.truth.cast()).unwrap();
    let config = TrainConfig { epochs: usize::MAX, learning_rate: 1e-3, max_seconds: Some(seconds), ..TrainConfig::default() };
    let log = train(&mut model, None, &ds.op, &data, &config, &LossWeights::default(), None).map_err(|e| e.to_string())?;
    let (_, report) = proxrec::eval::evaluate(&model, &ds.op, &ds.test, 16).map_err(|e| e.to_string())?;
    let got = report.mean_snr();
    let detail = format!(
        "constants exact, residual <= {worst_after:.1e} vs spread >= {least_before:.2} on 100 images; 2x2 model {got:.2} dB vs deconvolution {baseline:.2} dB (+{:.2}) after {seconds:.0}s / {} batches",
        got - baseline,
        log.rows.len()
    );
    check(got >= baseline + 2.0, detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------------------

fn naive_ssim(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    let k = 11;
    let raw: Vec<f64> = (0..k).map(|i| (-((i as f64 - 5.0).powi(2)) / (2.0 * 1.5 * 1.5)).exp()).collect();
    let mut weights = vec![0.0; k * k];
    for u in 0..k {
        for v in 0..k {
            weights[u * k + v] = raw[u] * raw[v];
        }
    }
    let norm: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|v| *v /= norm);
    let (c1, c2) = (1e-4, 9e-4);
    let mut sum = 0.0;
    let mut count = 0;
    for i in 0..=h - k {
        for j in 0..=w - k {
            let at = |img: &[f64], u: usize, v: usize| img[(i + u) * w + j + v];
            let (mut ma, mut mb) = (0.0, 0.0);
            for u in 0..k {
                for v in 0..k {
                    ma += weights[u * k + v] * at(a, u, v);
                    mb += weights[u * k + v] * at(b, u, v);
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for u in 0..k {
                for v in 0..k {
                    let (p, q) = (at(a, u, v) - ma, at(b, u, v) - mb);
                    va += weights[u * k + v] * p * p;
                    vb += weights[u * k + v] * q * q;
                    cov += weights[u * k + v] * p * q;
                }
            }
            sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    sum / count as f64
}

fn bench_twice() -> std::result::Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = dir.path().join("bench.cfg");
    std::fs::write(&cfg, "size=16\nn_train=4\nn_test=2\nfraction=0.4\ncells=1:1:shared,2:1:independent\nfeature_maps=4\nmax_batches=3\ninclude_input=true\ncs=wavelet,tv\ncs_iters=10\n")
        .map_err(|e| e.to_string())?;
    let mut csvs = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_proxrec"))
            .args(["benchmark", "--config", p(&cfg), "--seed", "5", "--out", p(&out)])
            .output()
            .map_err(|e| e.to_string())?;
        check(status.status.success(), format!("benchmark failed: {}", String::from_utf8_lossy(&status.stderr)))?;
        csvs.push(std::fs::read(&out).map_err(|e| e.to_string())?);
    }
    check(csvs[0] == csvs[1] && String::from_utf8_lossy(&csvs[0]).lines().count() == 6, "CLI benchmark CSVs differ between runs".into())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn metric_suite() -> Outcome {
    let mut r = rng(31);
    let mut worst = 0.0f64;
    for (h, w) in [(11, 11), (32, 32), (20, 37)] {
        let a = Tensor::<f64>::rand_uniform(&[h, w], 0.0, 1.0, &mut r);
        let noise = Tensor::<f64>::randn(&[h, w], 0.1, &mut r);
        let b = a.add(&noise).unwrap();
        worst = worst.max((ssim(&a, &b).unwrap() - naive_ssim(a.data(), b.data(), h, w)).abs());
    }
    check(worst < 1e-10, format!("SSIM differs from the naive loop by {worst:.2e}"))?;

    let truth = Tensor::<f64>::randn(&[1, 3, 16, 16], 1.0, &mut r);
    let dir = Tensor::<f64>::randn(&[1, 3, 16, 16], 1.0, &mut r);
    let mut snr_err = 0.0f64;
    for ratio in [1.0, 10.0, 100.0, 3.5, 1e4] {
        let e = dir.scale(truth.norm_l2() / (ratio * dir.norm_l2()));
        let est = truth.add(&e).unwrap();
        let want = 20.0 * ratio.log10();
        snr_err = snr_err.max((image_snr(&truth, &est).unwrap() - want).abs()).max((snr(&truth, &est).unwrap() - want).abs());
    }
    check(snr_err < 1e-9 && snr(&truth, &truth).unwrap() == SNR_CAP_DB, format!("SNR analytic error {snr_err:.2e}"))?;

    let ds = build_mri_dataset(&MriDataConfig { size: 16, n_train: 4, n_test: 2, ..MriDataConfig::default() }).map_err(|e| e.to_string())?;
    let single = MaskedFourier::<f32>::new(ds.op.mask().clone());
    let spec = SweepSpec {
        cells: vec![SweepCell::new(1, 1, WeightMode::Shared), SweepCell::new(2, 1, WeightMode::Independent)],
        feature_maps: 4,
        train: TrainConfig { epochs: 2, learning_rate: 1e-3, ..TrainConfig::default() },
        include_input: true,
        cs: Some(CsBaselines { iters: 10, ..CsBaselines::default() }),
        ..SweepSpec::default()
    };
    let data = SweepData { op: &ds.op, op_single: &single, value_map: ValueMap::COMPLEX, train: &ds.train, test: &ds.test, input_label: "zero-fill" };
    let a = run_sweep(&spec, &data).map_err(|e| e.to_string())?.to_csv();
    let b = run_sweep(&spec, &data).map_err(|e| e.to_string())?.to_csv();
    check(a == b, "library sweep CSVs differ between runs".into())?;
    bench_twice()?;
    Ok(format!("SSIM gap {worst:.1e}, SNR error {snr_err:.1e}, sweep and CLI CSVs byte-identical"))
}

// ---------------------------------------------------------------------------

fn main() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("gradient suite", gradient_suite),
        ("operator suite", operator_suite),
        ("classical-CS oracle", cs_oracle),
        ("desk-scale MRI sweep", mri_sweep),
        ("loss and GAN suite", loss_suite),
        ("superresolution path", superresolution),
        ("metric suite", metric_suite),
    ];
    let only: Option<Vec<usize>> = std::env::var("PROXREC_ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    if scale() != 1.0 {
        println!("note: PROXREC_ACCEPTANCE_SCALE={} (development run)", scale());
    }
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("AC{id} PASS {name}: {detail} [{secs:.0}s]"),
            Err(detail) => {
                failed += 1;
                println!("AC{id} FAIL {name}: {detail} [{secs:.0}s]");
            }
        }
    }
    println!("acceptance: {}/{ran} passed", ran - failed);
    if failed > 0 && std::env::var("PROXREC_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
