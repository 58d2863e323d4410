use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Two-channel complex image; batched form is a `[B, 2, H, W]` tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexImage<T = f64> {
    pub real: Tensor<T>,
    pub imag: Tensor<T>,
}

impl<T: Real> ComplexImage<T> {
    pub fn new(real: Tensor<T>, imag: Tensor<T>) -> Result<Self> {
        if real.ndim() != 2 {
            return Err(Error::shape("ComplexImage", "[H, W]", crate::tensor::shape_str(real.shape())));
        }
        real.same_shape(&imag, "ComplexImage")?;
        Ok(ComplexImage { real, imag })
    }

    pub fn zeros(h: usize, w: usize) -> Self {
        ComplexImage { real: Tensor::zeros(&[h, w]), imag: Tensor::zeros(&[h, w]) }
    }

    pub fn from_real(real: Tensor<T>) -> Result<Self> {
        let imag = Tensor::zeros(real.shape());
        Self::new(real, imag)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.real.shape()[0], self.real.shape()[1])
    }

    pub fn magnitude(&self) -> Tensor<T> {
        self.real.zip_map(&self.imag, |a, b| a.hypot(b)).expect("matching shapes")
    }

    /// `[1, 2, H, W]`.
    pub fn to_tensor(&self) -> Tensor<T> {
        let (h, w) = self.dims();
        let mut data = Vec::with_capacity(2 * h * w);
        data.extend_from_slice(self.real.data());
        data.extend_from_slice(self.imag.data());
        Tensor::from_vec(&[1, 2, h, w], data).expect("consistent size")
    }

    pub fn from_tensor_item(t: &Tensor<T>, i: usize) -> Result<Self> {
        let (b, c, h, w) = t.dims4("ComplexImage")?;
        if c != 2 || i >= b {
            return Err(Error::shape("ComplexImage", format!("[>{i}, 2, H, W]"), crate::tensor::shape_str(t.shape())));
        }
        let item = t.item_slice(i);
        Ok(ComplexImage {
            real: Tensor::from_vec(&[h, w], item[..h * w].to_vec())?,
            imag: Tensor::from_vec(&[h, w], item[h * w..].to_vec())?,
        })
    }

    pub fn stack(images: &[ComplexImage<T>]) -> Result<Tensor<T>> {
        let items: Vec<Tensor<T>> = images.iter().map(|x| x.to_tensor()).collect();
        Tensor::concat(&items.iter().collect::<Vec<_>>())
    }

    pub fn unstack(t: &Tensor<T>) -> Result<Vec<Self>> {
        let b = t.dims4("ComplexImage")?.0;
        (0..b).map(|i| Self::from_tensor_item(t, i)).collect()
    }
}

/// Magnitude of each item of a `[B, 2, H, W]` tensor as `[B, 1, H, W]`.
pub fn batch_magnitude<T: Real>(t: &Tensor<T>) -> Result<Tensor<T>> {
    let (b, c, h, w) = t.dims4("magnitude")?;
    if c != 2 {
        return Err(Error::shape("magnitude", "2 channels", c));
    }
    let mut out = Vec::with_capacity(b * h * w);
    for i in 0..b {
        let item = t.item_slice(i);
        let (re, im) = item.split_at(h * w);
        out.extend(re.iter().zip(im).map(|(&a, &b)| a.hypot(b)));
    }
    Tensor::from_vec(&[b, 1, h, w], out)
}
