use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::measurement::synthesize_measurements;
use super::phantom::{generate_phantom, generate_texture, PhantomSpec};
use crate::config::KeyValues;
use crate::error::{Error, Result};
use crate::operators::{approx_deconvolve, generate_mask, BoxDownsample, ComplexImage, LinearOperator, MaskSpec, MaskedFourier, SamplingMask};
use crate::tensor::Tensor;
use crate::train::TrainData;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub split: Split,
    pub seed: u64,
    pub mask_id: u64,
    /// Image file, or `-` for images synthesized from `seed`.
    pub path: String,
}

/// Image list with a train/test assignment and the operator configuration.
///
/// Text form: `key=value` lines for the operator, then one line per image,
/// `train|test <seed> <mask id hex> <path>`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetManifest {
    pub operator: KeyValues,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Errors when an image (by path, or by seed for synthesized entries) is in both splits.
    pub fn validate(&self) -> Result<()> {
        let key = |e: &ManifestEntry| if e.path == "-" { format!("seed:{}", e.seed) } else { format!("path:{}", e.path) };
        let train: HashSet<String> = self.entries.iter().filter(|e| e.split == Split::Train).map(key).collect();
        if let Some(e) = self.entries.iter().find(|e| e.split == Split::Test && train.contains(&key(e))) {
            return Err(Error::InvalidArgument(format!("image {} is in both train and test splits", key(e))));
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# dataset manifest\n");
        out.push_str(&self.operator.to_text());
        for e in &self.entries {
            writeln!(out, "{} {} {:016x} {}", e.split.as_str(), e.seed, e.mask_id, e.path).unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv_text = String::new();
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let t = line.trim();
            let split = if t.starts_with("train ") {
                Split::Train
            } else if t.starts_with("test ") {
                Split::Test
            } else {
                kv_text.push_str(line);
                kv_text.push('\n');
                continue;
            };
            let ctx = format!("manifest line {}", i + 1);
            let parts: Vec<&str> = t.splitn(4, ' ').collect();
            if parts.len() != 4 {
                return Err(Error::parse(ctx, "expected 'split seed mask_id path'"));
            }
            let seed = parts[1].parse().map_err(|_| Error::parse(ctx.clone(), format!("bad seed '{}'", parts[1])))?;
            let mask_id = u64::from_str_radix(parts[2], 16).map_err(|_| Error::parse(ctx.clone(), format!("bad mask id '{}'", parts[2])))?;
            entries.push(ManifestEntry { split, seed, mask_id, path: parts[3].to_string() });
        }
        let manifest = DatasetManifest { operator: KeyValues::parse(&kv_text)?, entries };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Distinct per-image seeds and a seeded train/test assignment.
pub fn split_seeds(seed: u64, n_train: usize, n_test: usize) -> (Vec<u64>, Vec<u64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut seeds = Vec::with_capacity(n_train + n_test);
    while seeds.len() < n_train + n_test {
        let s: u64 = rng.random();
        if seen.insert(s) {
            seeds.push(s);
        }
    }
    seeds.shuffle(&mut rng);
    let test = seeds.split_off(n_train);
    (seeds, test)
}

/// Synthetic single-coil MRI data.
#[derive(Clone, Debug, PartialEq)]
pub struct MriDataConfig {
    pub size: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub fraction: f64,
    pub decay_power: f64,
    pub mask_seed: u64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for MriDataConfig {
    fn default() -> Self {
        MriDataConfig { size: 64, n_train: 512, n_test: 64, fraction: 0.2, decay_power: 3.0, mask_seed: 0, noise_sigma: 0.005, seed: 0 }
    }
}

pub const MRI_DATA_KEYS: &[&str] = &["size", "n_train", "n_test", "fraction", "decay_power", "mask_seed", "noise_sigma", "data_seed"];

impl MriDataConfig {
    pub fn apply_keys(&mut self, kv: &KeyValues) -> Result<()> {
        kv.read_into("size", &mut self.size)?;
        kv.read_into("n_train", &mut self.n_train)?;
        kv.read_into("n_test", &mut self.n_test)?;
        kv.read_into("fraction", &mut self.fraction)?;
        kv.read_into("decay_power", &mut self.decay_power)?;
        kv.read_into("mask_seed", &mut self.mask_seed)?;
        kv.read_into("noise_sigma", &mut self.noise_sigma)?;
        kv.read_into("data_seed", &mut self.seed)
    }

    pub fn keys(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("size", self.size);
        kv.set("n_train", self.n_train);
        kv.set("n_test", self.n_test);
        kv.set("fraction", self.fraction);
        kv.set("decay_power", self.decay_power);
        kv.set("mask_seed", self.mask_seed);
        kv.set("noise_sigma", self.noise_sigma);
        kv.set("data_seed", self.seed);
        kv
    }

    pub fn mask(&self) -> Result<SamplingMask> {
        generate_mask(&MaskSpec { decay_power: self.decay_power, ..MaskSpec::new(self.size, self.size, self.fraction, self.mask_seed) })
    }
}

#[derive(Clone, Debug)]
pub struct MriDataset {
    pub op: MaskedFourier<f64>,
    pub train: TrainData<f64>,
    pub test: TrainData<f64>,
    pub manifest: DatasetManifest,
}

fn mri_split(op: &MaskedFourier<f64>, size: usize, seeds: &[u64], sigma: f64, noise_seed: u64) -> Result<TrainData<f64>> {
    let images = seeds.iter().map(|&s| generate_phantom(&PhantomSpec::new(size, s))).collect::<Result<Vec<_>>>()?;
    let truth = ComplexImage::stack(&images)?;
    let y = synthesize_measurements(&truth, op, sigma, &mut ChaCha8Rng::seed_from_u64(noise_seed))?;
    let x_tilde = op.adjoint(&y)?;
    TrainData::new(y, x_tilde, truth)
}

/// Phantoms, measurements and zero-filled inputs for disjoint train and test sets.
pub fn build_mri_dataset(config: &MriDataConfig) -> Result<MriDataset> {
    if config.n_train == 0 || config.n_test == 0 {
        return Err(Error::InvalidArgument("train and test sets must be non-empty".into()));
    }
    let mask = config.mask()?;
    let mask_id = mask.id();
    let op = MaskedFourier::new(mask);
    let (train_seeds, test_seeds) = split_seeds(config.seed, config.n_train, config.n_test);
    let mut operator = config.keys();
    operator.set("operator", "masked_fourier");
    let entries = train_seeds
        .iter()
        .map(|&s| (Split::Train, s))
        .chain(test_seeds.iter().map(|&s| (Split::Test, s)))
        .map(|(split, seed)| ManifestEntry { split, seed, mask_id, path: "-".into() })
        .collect();
    let manifest = DatasetManifest { operator, entries };
    manifest.validate()?;
    let train = mri_split(&op, config.size, &train_seeds, config.noise_sigma, config.seed ^ 0x7472_6169_6e00)?;
    let test = mri_split(&op, config.size, &test_seeds, config.noise_sigma, config.seed ^ 0x7465_7374_0000)?;
    Ok(MriDataset { op, train, test, manifest })
}

/// Synthetic RGB superresolution data under 4x box downsampling.
#[derive(Clone, Debug, PartialEq)]
pub struct SrDataConfig {
    pub size: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub noise_sigma: f64,
    pub deconv_steps: usize,
    pub deconv_step_size: f64,
    pub seed: u64,
}

impl Default for SrDataConfig {
    fn default() -> Self {
        SrDataConfig { size: 64, n_train: 512, n_test: 64, noise_sigma: 0.0, deconv_steps: 5, deconv_step_size: 0.1, seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct SrDataset {
    pub op: BoxDownsample,
    pub train: TrainData<f64>,
    pub test: TrainData<f64>,
}

fn sr_split(op: &BoxDownsample, config: &SrDataConfig, seeds: &[u64], noise_seed: u64) -> Result<TrainData<f64>> {
    let images = seeds.iter().map(|&s| generate_texture(config.size, s).map(|t| t.unsqueeze_leading())).collect::<Result<Vec<_>>>()?;
    let truth = Tensor::concat(&images.iter().collect::<Vec<_>>())?;
    let y = synthesize_measurements(&truth, op, config.noise_sigma, &mut ChaCha8Rng::seed_from_u64(noise_seed))?;
    let x_tilde = approx_deconvolve(op, &y, config.deconv_steps, config.deconv_step_size)?;
    TrainData::new(y, x_tilde, truth)
}

/// Textures, low-resolution measurements and deconvolution initializers.
pub fn build_sr_dataset(config: &SrDataConfig) -> Result<SrDataset> {
    if config.n_train == 0 || config.n_test == 0 {
        return Err(Error::InvalidArgument("train and test sets must be non-empty".into()));
    }
    let op = BoxDownsample::new(3, config.size, config.size)?;
    let (train_seeds, test_seeds) = split_seeds(config.seed, config.n_train, config.n_test);
    let train = sr_split(&op, config, &train_seeds, config.seed ^ 0x7472_6169_6e00)?;
    let test = sr_split(&op, config, &test_seeds, config.seed ^ 0x7465_7374_0000)?;
    Ok(SrDataset { op, train, test })
}

/// Superresolution data from given `[N, 3, H, W]` images; a seeded shuffle puts
/// `config.n_test` images in the test split and the rest in training.
pub fn build_sr_dataset_from_images(images: &Tensor<f64>, config: &SrDataConfig) -> Result<SrDataset> {
    let (n, c, h, w) = images.dims4("build_sr_dataset_from_images")?;
    if c != 3 || h != w {
        return Err(Error::InvalidArgument(format!("expected square RGB images, got {}", crate::tensor::shape_str(images.shape()))));
    }
    if config.n_test == 0 || config.n_test >= n {
        return Err(Error::InvalidArgument(format!("n_test {} must be in 1..{n}", config.n_test)));
    }
    let op = BoxDownsample::new(3, h, w)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let (test_idx, train_idx) = order.split_at(config.n_test);
    let split = |idx: &[usize], noise_seed: u64| -> Result<TrainData<f64>> {
        let items: Vec<Tensor<f64>> =
            idx.iter().map(|&i| Tensor::from_vec(&[1, c, h, w], images.item_slice(i).to_vec())).collect::<Result<_>>()?;
        let truth = Tensor::concat(&items.iter().collect::<Vec<_>>())?;
        let y = synthesize_measurements(&truth, &op, config.noise_sigma, &mut ChaCha8Rng::seed_from_u64(noise_seed))?;
        let x_tilde = approx_deconvolve(&op, &y, config.deconv_steps, config.deconv_step_size)?;
        TrainData::new(y, x_tilde, truth)
    };
    let train = split(train_idx, config.seed ^ 0x7472_6169_6e00)?;
    let test = split(test_idx, config.seed ^ 0x7465_7374_0000)?;
    Ok(SrDataset { op, train, test })
}
