use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{activate, activation_backward, join, Activation, BatchNorm2d, BnCache, Conv2d, ConvCache, Mode, Padding, Parameters};
use crate::tensor::{shape_str, Real, Tensor};

pub const MIN_DISCRIMINATOR_SIZE: usize = 16;

/// `(out_channels, kernel, stride)` for the eight layers after the input.
const LAYERS: [(usize, usize, usize); 8] = [(8, 3, 2), (16, 3, 2), (32, 3, 2), (64, 3, 2), (64, 3, 1), (64, 1, 1), (32, 1, 1), (1, 1, 1)];

/// Eight-layer CNN; the last map is averaged to one unbounded score per image.
#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator<T = f64> {
    pub in_channels: usize,
    pub convs: Vec<Conv2d<T>>,
    /// One per layer except the last.
    pub norms: Vec<BatchNorm2d<T>>,
}

#[derive(Clone, Debug)]
pub struct DiscriminatorCache<T> {
    layers: Vec<(ConvCache<T>, Option<(BnCache<T>, Tensor<T>)>)>,
    last_shape: Vec<usize>,
}

impl<T: Real> Discriminator<T> {
    pub fn new<R: Rng + ?Sized>(in_channels: usize, rng: &mut R) -> Self {
        let mut convs = Vec::new();
        let mut norms = Vec::new();
        let mut c = in_channels;
        for (i, &(out, k, s)) in LAYERS.iter().enumerate() {
            convs.push(Conv2d::new(c, out, k, s, Padding::Same, rng));
            if i + 1 < LAYERS.len() {
                norms.push(BatchNorm2d::new(out));
            }
            c = out;
        }
        Discriminator { in_channels, convs, norms }
    }

    pub fn zeros_like(&self) -> Self {
        Discriminator {
            in_channels: self.in_channels,
            convs: self.convs.iter().map(|c| c.zeros_like()).collect(),
            norms: self.norms.iter().map(|n| n.zeros_like()).collect(),
        }
    }

    pub fn zero_output_layer(&mut self) {
        let last = self.convs.last_mut().expect("eight layers");
        last.weight.fill(T::zero());
        last.bias.fill(T::zero());
    }

    /// Scores `[B]` for images `[B, C, H, W]` with `H, W >= 16`.
    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, DiscriminatorCache<T>)> {
        let (b, c, h, w) = x.dims4("Discriminator::forward")?;
        if c != self.in_channels || h < MIN_DISCRIMINATOR_SIZE || w < MIN_DISCRIMINATOR_SIZE {
            return Err(Error::shape(
                "Discriminator::forward",
                format!("[B, {}, >={MIN_DISCRIMINATOR_SIZE}, >={MIN_DISCRIMINATOR_SIZE}]", self.in_channels),
                shape_str(x.shape()),
            ));
        }
        let mut h = x.clone();
        let mut layers = Vec::with_capacity(self.convs.len());
        for (i, conv) in self.convs.iter().enumerate() {
            let (a, cc) = conv.forward(&h)?;
            if let Some(bn) = self.norms.get(i) {
                let (n, bc) = bn.forward(&a, mode)?;
                h = activate(&n, Activation::Relu);
                layers.push((cc, Some((bc, h.clone()))));
            } else {
                h = a;
                layers.push((cc, None));
            }
        }
        let per = h.len() / b;
        let scores = (0..b).map(|i| h.item_slice(i).iter().copied().sum::<T>() / T::of(per as f64)).collect();
        Ok((Tensor::from_vec(&[b], scores)?, DiscriminatorCache { layers, last_shape: h.shape().to_vec() }))
    }

    pub fn backward(&self, cache: &DiscriminatorCache<T>, grad_scores: &Tensor<T>, grads: &mut Self) -> Result<Tensor<T>> {
        let b = cache.last_shape[0];
        if grad_scores.shape() != [b] {
            return Err(Error::shape("Discriminator::backward", format!("[{b}]"), shape_str(grad_scores.shape())));
        }
        let per: usize = cache.last_shape[1..].iter().product();
        let mut data = Vec::with_capacity(b * per);
        for &g in grad_scores.data() {
            data.extend(std::iter::repeat_n(g / T::of(per as f64), per));
        }
        let mut g = Tensor::from_vec(&cache.last_shape, data)?;
        for (i, conv) in self.convs.iter().enumerate().rev() {
            let (cc, bn) = &cache.layers[i];
            if let Some((bc, out)) = bn {
                let gr = activation_backward(out, &g, Activation::Relu)?;
                g = self.norms[i].backward(bc, &gr, &mut grads.norms[i])?;
            }
            g = conv.backward(cc, &g, &mut grads.convs[i])?;
        }
        Ok(g)
    }

    pub fn update_running(&mut self, cache: &DiscriminatorCache<T>) {
        for (bn, (_, c)) in self.norms.iter_mut().zip(&cache.layers) {
            if let Some((bc, _)) = c {
                bn.update_running(bc);
            }
        }
    }
}

impl<T: Real> Parameters<T> for Discriminator<T> {
    fn visit_params<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        for (i, conv) in self.convs.iter().enumerate() {
            conv.visit_params(&join(prefix, &format!("conv{i}")), f);
            if let Some(bn) = self.norms.get(i) {
                bn.visit_params(&join(prefix, &format!("bn{i}")), f);
            }
        }
    }
    fn visit_params_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor<T>)) {
        let norms = &mut self.norms;
        let mut norms_iter = norms.iter_mut();
        for (i, conv) in self.convs.iter_mut().enumerate() {
            conv.visit_params_mut(&join(prefix, &format!("conv{i}")), f);
            if let Some(bn) = norms_iter.next() {
                bn.visit_params_mut(&join(prefix, &format!("bn{i}")), f);
            }
        }
    }
    fn visit_buffers<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        for (i, bn) in self.norms.iter().enumerate() {
            bn.visit_buffers(&join(prefix, &format!("bn{i}")), f);
        }
    }
    fn visit_buffers_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor<T>)) {
        for (i, bn) in self.norms.iter_mut().enumerate() {
            bn.visit_buffers_mut(&join(prefix, &format!("bn{i}")), f);
        }
    }
}

/// Magnitude of two-channel complex images, `[B, 2, H, W] -> [B, 1, H, W]`, with its backward.
pub fn magnitude_forward<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    crate::operators::batch_magnitude(x)
}

pub fn magnitude_backward<T: Real>(x: &Tensor<T>, magnitude: &Tensor<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, _, h, w) = x.dims4("magnitude_backward")?;
    magnitude.same_shape(grad, "magnitude_backward")?;
    let n = h * w;
    let mut out = Tensor::zeros(x.shape());
    for i in 0..b {
        let (xi, mi, gi) = (x.item_slice(i), magnitude.item_slice(i), grad.item_slice(i));
        let oi = out.item_slice_mut(i);
        for p in 0..n {
            if mi[p] > T::zero() {
                oi[p] = gi[p] * xi[p] / mi[p];
                oi[n + p] = gi[p] * xi[n + p] / mi[p];
            }
        }
    }
    Ok(out)
}
