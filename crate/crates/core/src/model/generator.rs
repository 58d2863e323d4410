use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{activate, activation_backward, join, Activation, BatchNorm2d, BnCache, Conv2d, ConvCache, Mode, Padding, Parameters};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratorConfig {
    pub num_residual_blocks: usize,
    pub feature_maps: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl GeneratorConfig {
    pub const DESK_FEATURE_MAPS: usize = 16;

    pub fn mri(num_residual_blocks: usize) -> Self {
        GeneratorConfig { num_residual_blocks, feature_maps: Self::DESK_FEATURE_MAPS, in_channels: 2, out_channels: 2 }
    }

    pub fn rgb(num_residual_blocks: usize) -> Self {
        GeneratorConfig { num_residual_blocks, feature_maps: Self::DESK_FEATURE_MAPS, in_channels: 3, out_channels: 3 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_maps == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::InvalidArgument(format!("degenerate generator config {self:?}")));
        }
        Ok(())
    }

    fn head_width(&self) -> usize {
        (self.feature_maps / 2).max(1)
    }
}

/// conv3x3 -> BN -> ReLU -> conv3x3 -> BN, identity skip, ReLU.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualBlock<T = f64> {
    pub conv1: Conv2d<T>,
    pub bn1: BatchNorm2d<T>,
    pub conv2: Conv2d<T>,
    pub bn2: BatchNorm2d<T>,
}

#[derive(Clone, Debug)]
pub struct ResidualBlockCache<T> {
    conv1: ConvCache<T>,
    bn1: BnCache<T>,
    relu1: Tensor<T>,
    conv2: ConvCache<T>,
    bn2: BnCache<T>,
    out: Tensor<T>,
}

impl<T: Real> ResidualBlock<T> {
    pub fn new<R: Rng + ?Sized>(channels: usize, rng: &mut R) -> Self {
        ResidualBlock {
            conv1: Conv2d::new(channels, channels, 3, 1, Padding::Same, rng),
            bn1: BatchNorm2d::new(channels),
            conv2: Conv2d::new(channels, channels, 3, 1, Padding::Same, rng),
            bn2: BatchNorm2d::new(channels),
        }
    }

    pub fn zeros_like(&self) -> Self {
        ResidualBlock {
            conv1: self.conv1.zeros_like(),
            bn1: self.bn1.zeros_like(),
            conv2: self.conv2.zeros_like(),
            bn2: self.bn2.zeros_like(),
        }
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, ResidualBlockCache<T>)> {
        let (a1, conv1) = self.conv1.forward(x)?;
        let (b1, bn1) = self.bn1.forward(&a1, mode)?;
        let relu1 = activate(&b1, Activation::Relu);
        let (a2, conv2) = self.conv2.forward(&relu1)?;
        let (mut s, bn2) = self.bn2.forward(&a2, mode)?;
        s.add_assign(x)?;
        let out = activate(&s, Activation::Relu);
        Ok((out.clone(), ResidualBlockCache { conv1, bn1, relu1, conv2, bn2, out }))
    }

    pub fn backward(&self, cache: &ResidualBlockCache<T>, grad_out: &Tensor<T>, grads: &mut Self) -> Result<Tensor<T>> {
        let gs = activation_backward(&cache.out, grad_out, Activation::Relu)?;
        let ga2 = self.bn2.backward(&cache.bn2, &gs, &mut grads.bn2)?;
        let gr1 = self.conv2.backward(&cache.conv2, &ga2, &mut grads.conv2)?;
        let gb1 = activation_backward(&cache.relu1, &gr1, Activation::Relu)?;
        let ga1 = self.bn1.backward(&cache.bn1, &gb1, &mut grads.bn1)?;
        let mut gx = self.conv1.backward(&cache.conv1, &ga1, &mut grads.conv1)?;
        gx.add_assign(&gs)?;
        Ok(gx)
    }

    pub fn update_running(&mut self, cache: &ResidualBlockCache<T>) {
        self.bn1.update_running(&cache.bn1);
        self.bn2.update_running(&cache.bn2);
    }
}

impl<T: Real> Parameters<T> for ResidualBlock<T> {
    fn visit_params<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        self.conv1.visit_params(&join(prefix, "conv1"), f);
        self.bn1.visit_params(&join(prefix, "bn1"), f);
        self.conv2.visit_params(&join(prefix, "conv2"), f);
        self.bn2.visit_params(&join(prefix, "bn2"), f);
    }
    fn visit_params_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor<T>)) {
        self.conv1.visit_params_mut(&join(prefix, "conv1"), f);
        self.bn1.visit_params_mut(&join(prefix, "bn1"), f);
        self.conv2.visit_params_mut(&join(prefix, "conv2"), f);
        self.bn2.visit_params_mut(&join(prefix, "bn2"), f);
    }
    fn visit_buffers<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        self.bn1.visit_buffers(&join(prefix, "bn1"), f);
        self.bn2.visit_buffers(&join(prefix, "bn2"), f);
    }
    fn visit_buffers_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor<T>)) {
        self.bn1.visit_buffers_mut(&join(prefix, "bn1"), f);
        self.bn2.visit_buffers_mut(&join(prefix, "bn2"), f);
    }
}

/// ResNet proximal: stem conv, residual blocks, then three 1x1 convs ending in a sigmoid.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator<T = f64> {
    pub config: GeneratorConfig,
    pub stem: Conv2d<T>,
    pub blocks: Vec<ResidualBlock<T>>,
    pub head: [Conv2d<T>; 3],
}

#[derive(Clone, Debug)]
pub struct GeneratorCache<T> {
    stem: ConvCache<T>,
    stem_out: Tensor<T>,
    blocks: Vec<ResidualBlockCache<T>>,
    head: Vec<(ConvCache<T>, Tensor<T>)>,
}

const HEAD_ACTIVATIONS: [Activation; 3] = [Activation::Relu, Activation::Relu, Activation::Sigmoid];

impl<T: Real> Generator<T> {
    pub fn new<R: Rng + ?Sized>(config: GeneratorConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let f = config.feature_maps;
        let stem = Conv2d::new(config.in_channels, f, 3, 1, Padding::Same, rng);
        let blocks = (0..config.num_residual_blocks).map(|_| ResidualBlock::new(f, rng)).collect();
        let head = [
            Conv2d::new(f, f, 1, 1, Padding::Same, rng),
            Conv2d::new(f, config.head_width(), 1, 1, Padding::Same, rng),
            Conv2d::new(config.head_width(), config.out_channels, 1, 1, Padding::Same, rng),
        ];
        Ok(Generator { config, stem, blocks, head })
    }

    pub fn zeros_like(&self) -> Self {
        Generator {
            config: self.config.clone(),
            stem: self.stem.zeros_like(),
            blocks: self.blocks.iter().map(|b| b.zeros_like()).collect(),
            head: [self.head[0].zeros_like(), self.head[1].zeros_like(), self.head[2].zeros_like()],
        }
    }

    /// Zeroes the last 1x1 layer so the output is the constant 0.5.
    pub fn zero_output_layer(&mut self) {
        self.head[2].weight.fill(T::zero());
        self.head[2].bias.fill(T::zero());
    }

    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, GeneratorCache<T>)> {
        let (_, c, _, _) = x.dims4("Generator::forward")?;
        if c != self.config.in_channels {
            return Err(Error::shape("Generator::forward", format!("{} input channels", self.config.in_channels), c));
        }
        let (a, stem) = self.stem.forward(x)?;
        let stem_out = activate(&a, Activation::Relu);
        let mut h = stem_out.clone();
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (out, cache) = block.forward(&h, mode)?;
            blocks.push(cache);
            h = out;
        }
        let mut head = Vec::with_capacity(3);
        for (conv, act) in self.head.iter().zip(HEAD_ACTIVATIONS) {
            let (a, cache) = conv.forward(&h)?;
            h = activate(&a, act);
            head.push((cache, h.clone()));
        }
        Ok((h, GeneratorCache { stem, stem_out, blocks, head }))
    }

    pub fn backward(&self, cache: &GeneratorCache<T>, grad_out: &Tensor<T>, grads: &mut Self) -> Result<Tensor<T>> {
        let mut g = grad_out.clone();
        for i in (0..3).rev() {
            let (conv_cache, out) = &cache.head[i];
            let ga = activation_backward(out, &g, HEAD_ACTIVATIONS[i])?;
            g = self.head[i].backward(conv_cache, &ga, &mut grads.head[i])?;
        }
        for (i, block) in self.blocks.iter().enumerate().rev() {
            g = block.backward(&cache.blocks[i], &g, &mut grads.blocks[i])?;
        }
        let ga = activation_backward(&cache.stem_out, &g, Activation::Relu)?;
        self.stem.backward(&cache.stem, &ga, &mut grads.stem)
    }

    pub fn update_running(&mut self, cache: &GeneratorCache<T>) {
        for (block, c) in self.blocks.iter_mut().zip(&cache.blocks) {
            block.update_running(c);
        }
    }
}

impl<T: Real> Parameters<T> for Generator<T> {
    fn visit_params<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        self.stem.visit_params(&join(prefix, "stem"), f);
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit_params(&join(prefix, &format!("rb{i}")), f);
        }
        for (i, h) in self.head.iter().enumerate() {
            h.visit_params(&join(prefix, &format!("head{i}")), f);
        }
    }
    fn visit_params_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor<T>)) {
        self.stem.visit_params_mut(&join(prefix, "stem"), f);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_params_mut(&join(prefix, &format!("rb{i}")), f);
        }
        for (i, h) in self.head.iter_mut().enumerate() {
            h.visit_params_mut(&join(prefix, &format!("head{i}")), f);
        }
    }
    fn visit_buffers<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit_buffers(&join(prefix, &format!("rb{i}")), f);
        }
    }
    fn visit_buffers_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor<T>)) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_buffers_mut(&join(prefix, &format!("rb{i}")), f);
        }
    }
}
