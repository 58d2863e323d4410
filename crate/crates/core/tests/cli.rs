use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use proxrec::data::{load_image, DatasetManifest, MeasurementFile, Split};
use proxrec::operators::SamplingMask;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_proxrec"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn proxrec")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

const TINY_MRI: &str = "size=16\nn_train=4\nn_test=2\nfraction=0.4\nnoise_sigma=0\n";

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(&["mask-gen", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", "size=16\nnot_a_key=1\n");
    let out = run(&["mask-gen", "--config", p(&cfg), "--out", p(&dir.path().join("m.prmk"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not_a_key"));
    let missing = run(&["mask-gen", "--config", p(&dir.path().join("nope.cfg")), "--out", "x.prmk"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn mask_gen_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "mask.cfg", "size=32\nfraction=0.25\n");
    let paths: Vec<PathBuf> = ["a", "b", "c"].iter().map(|n| dir.path().join(format!("{n}.prmk"))).collect();
    for (path, seed) in paths.iter().zip(["7", "7", "8"]) {
        let out = run(&["mask-gen", "--config", p(&cfg), "--seed", seed, "--out", p(path), "--image", p(&path.with_extension("png"))]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let bytes: Vec<Vec<u8>> = paths.iter().map(|p| std::fs::read(p).unwrap()).collect();
    assert_eq!(bytes[0], bytes[1]);
    assert_ne!(bytes[0], bytes[2]);
    let mask = SamplingMask::load(&paths[0]).unwrap();
    assert_eq!(mask.count(), 256);
    assert_eq!(load_image(&paths[0].with_extension("png")).unwrap().shape(), &[1, 32, 32]);
}

#[test]
fn phantom_gen_writes_consistent_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "data.cfg", TINY_MRI);
    let out_dir = dir.path().join("data");
    let out = run(&["phantom-gen", "--config", p(&cfg), "--seed", "3", "--out", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = DatasetManifest::load(&out_dir.join("manifest.txt")).unwrap();
    assert_eq!(manifest.split(Split::Train).count(), 4);
    assert_eq!(manifest.split(Split::Test).count(), 2);
    let mask = SamplingMask::load(&out_dir.join("mask.prmk")).unwrap();
    for e in &manifest.entries {
        assert_eq!(e.mask_id, mask.id());
        let img = load_image(&out_dir.join(&e.path)).unwrap();
        assert_eq!(img.shape(), &[1, 16, 16]);
        let meas = out_dir.join(Path::new(&e.path).with_extension("prms"));
        let bytes = std::fs::read(&meas).unwrap();
        let file = MeasurementFile::from_bytes(&bytes).unwrap();
        assert_eq!(file.values.len(), mask.count());
        assert_eq!(file.to_bytes(), bytes);
    }
    let mut leaked = std::fs::read_to_string(out_dir.join("manifest.txt")).unwrap();
    let first = manifest.split(Split::Train).next().unwrap();
    leaked.push_str(&format!("test {} {:016x} {}\n", first.seed + 1, first.mask_id, first.path));
    std::fs::write(out_dir.join("manifest.txt"), leaked).unwrap();
    assert!(DatasetManifest::load(&out_dir.join("manifest.txt")).is_err());
}

#[test]
fn cs_solve_without_regularization_on_full_mask_reproduces_input() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "data.cfg", "size=16\nn_train=1\nn_test=1\nfraction=1.0\nnoise_sigma=0\n");
    let data = dir.path().join("data");
    assert_eq!(run(&["phantom-gen", "--config", p(&cfg), "--out", p(&data)]).status.code(), Some(0));
    let recon = dir.path().join("recon.png");
    let report = dir.path().join("report.txt");
    for solver in ["ista", "fista"] {
        let out = run(&[
            "cs-solve",
            "--seed",
            "0",
            "--measurements",
            p(&data.join("test_0000.prms")),
            "--mask",
            p(&data.join("mask.prmk")),
            "--solver",
            solver,
            "--transform",
            "wavelet",
            "--reg-weight",
            "0",
            "--iters",
            "5",
            "--out",
            p(&recon),
            "--truth",
            p(&data.join("test_0000.png")),
            "--report",
            p(&report),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let a = load_image(&recon).unwrap();
        let b = load_image(&data.join("test_0000.png")).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() <= 1.0 / 65535.0 + 1e-12);
        assert!(std::fs::read_to_string(&report).unwrap().contains("mean_snr_db"));
    }
}

#[test]
fn mismatched_mask_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "data.cfg", TINY_MRI);
    let data = dir.path().join("data");
    assert_eq!(run(&["phantom-gen", "--config", p(&cfg), "--out", p(&data)]).status.code(), Some(0));
    let other = dir.path().join("other.prmk");
    let mcfg = write_config(dir.path(), "mask.cfg", "size=16\nfraction=0.4\n");
    assert_eq!(run(&["mask-gen", "--config", p(&mcfg), "--seed", "99", "--out", p(&other)]).status.code(), Some(0));
    let out = run(&["cs-solve", "--measurements", p(&data.join("test_0000.prms")), "--mask", p(&other), "--out", p(&dir.path().join("x.png"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mask id"));
}

#[test]
fn train_then_reconstruct_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{TINY_MRI}copies=2\nresidual_blocks=1\nfeature_maps=4\nmax_batches=4\nepochs=2\ncheckpoint_every=2\nlearning_rate=0.001\n");
    let cfg = write_config(dir.path(), "train.cfg", &text);
    let runs: Vec<PathBuf> = ["r1", "r2"].iter().map(|n| dir.path().join(n)).collect();
    for r in &runs {
        let out = run(&["train", "--config", p(&cfg), "--seed", "5", "--out", p(r)]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["model.prxm", "train_log.csv", "checkpoint_000002.prxm", "checkpoint_000004.prxm", "config.txt", "test_report.txt"] {
        assert_eq!(std::fs::read(runs[0].join(name)).unwrap(), std::fs::read(runs[1].join(name)).unwrap(), "{name}");
    }
    let log = std::fs::read_to_string(runs[0].join("train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 5);
    assert!(std::fs::read_to_string(runs[0].join("config.txt")).unwrap().contains("seed=5"));

    let data = dir.path().join("data");
    assert_eq!(run(&["phantom-gen", "--config", p(&write_config(dir.path(), "d.cfg", TINY_MRI)), "--out", p(&data)]).status.code(), Some(0));
    let recon = dir.path().join("recon.png");
    let report = dir.path().join("report.txt");
    let out = run(&[
        "reconstruct",
        "--measurements",
        p(&data.join("test_0001.prms")),
        "--checkpoint",
        p(&runs[0].join("model.prxm")),
        "--mask",
        p(&data.join("mask.prmk")),
        "--out",
        p(&recon),
        "--truth",
        p(&data.join("test_0001.png")),
        "--report",
        p(&report),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(load_image(&recon).unwrap().shape(), &[1, 16, 16]);
    assert_eq!(std::fs::read_to_string(&report).unwrap().lines().count(), 3);
}

#[test]
fn gan_training_runs_from_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{TINY_MRI}copies=1\nfeature_maps=4\nepochs=2\nmax_batches=3\nlambda=0.1\neta=0.9\nwarmup_batches=2\n");
    let cfg = write_config(dir.path(), "gan.cfg", &text);
    let out = run(&["train", "--config", p(&cfg), "--out", p(&dir.path().join("run"))]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let log = std::fs::read_to_string(dir.path().join("run/train_log.csv")).unwrap();
    let last = log.lines().last().unwrap();
    assert!(last.starts_with("2,"));
    assert!(last.split(',').nth(5).unwrap() == "0.1");
}

#[test]
fn one_cell_benchmark_gives_one_row_and_repeats_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{TINY_MRI}cells=1:1:shared\nfeature_maps=4\nmax_batches=2\n");
    let cfg = write_config(dir.path(), "bench.cfg", &text);
    let csvs: Vec<PathBuf> = ["a.csv", "b.csv"].iter().map(|n| dir.path().join(n)).collect();
    for c in &csvs {
        let out = run(&["benchmark", "--config", p(&cfg), "--seed", "1", "--out", p(c)]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = std::fs::read_to_string(&csvs[0]).unwrap();
    assert_eq!(a, std::fs::read_to_string(&csvs[1]).unwrap());
    assert_eq!(a.lines().count(), 2);
    assert!(a.lines().nth(1).unwrap().starts_with("1,1,shared,"));

    let panels = dir.path().join("panels");
    let text = format!("{TINY_MRI}cells=1:1:shared\nfeature_maps=4\nmax_batches=2\ninclude_input=true\ncs=wavelet\ncs_iters=10\n");
    let cfg = write_config(dir.path(), "bench2.cfg", &text);
    let out = run(&["benchmark", "--config", p(&cfg), "--out", p(&csvs[0]), "--panels", p(&panels), "--timing"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&csvs[0]).unwrap();
    let methods: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(2).unwrap()).collect();
    assert_eq!(methods, ["shared", "zero-fill", "cs-wv"]);
    assert!(!csv.lines().nth(1).unwrap().ends_with(",-,-"));
    assert_eq!(std::fs::read_dir(&panels).unwrap().count(), 4);
}

#[test]
fn sr_training_from_an_image_directory() {
    let dir = tempfile::tempdir().unwrap();
    let images = dir.path().join("images");
    let tcfg = write_config(dir.path(), "tex.cfg", "size=16\ncount=5\n");
    assert_eq!(run(&["phantom-gen", "--kind", "texture", "--config", p(&tcfg), "--out", p(&images)]).status.code(), Some(0));
    let text = format!("task=sr\nimage_dir={}\nn_test=2\ncopies=1\nfeature_maps=4\nmax_batches=2\n", images.display());
    let cfg = write_config(dir.path(), "sr.cfg", &text);
    let out = run(&["train", "--config", p(&cfg), "--out", p(&dir.path().join("run"))]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(dir.path().join("run/test_report.txt")).unwrap();
    assert_eq!(report.lines().count(), 4);
}

#[test]
fn gradcheck_passes_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("grad.txt");
    let out = run(&["gradcheck", "--seed", "4", "--points", "1", "--out", p(&report)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = std::fs::read_to_string(&report).unwrap();
    assert!(text.lines().filter(|l| l.starts_with("ok")).count() >= 18);
    assert!(!text.contains("FAIL"));
}
