//! Dense row-major tensors over `f32` or `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftNum;

use crate::error::{Error, Result};

/// Scalar type usable in tensors, layers and operators.
///
/// Implemented for `f64` (verification) and `f32` (training).
pub trait Real:
    Float
    + FftNum
    + FromPrimitive
    + Default
    + Debug
    + Display
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + 'static
{
    /// `c <- alpha * a * b + beta * c` on row-major buffers with explicit strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        a_strides: (isize, isize),
        b: &[Self],
        b_strides: (isize, isize),
        beta: Self,
        c: &mut [Self],
        c_row_stride: isize,
    );

    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("representable constant")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }

    fn as_f32(self) -> f32 {
        self.to_f32().expect("finite conversion")
    }
}

fn check_extent(len: usize, rows: usize, cols: usize, strides: (isize, isize)) {
    if rows == 0 || cols == 0 {
        return;
    }
    let last = (rows as isize - 1) * strides.0 + (cols as isize - 1) * strides.1;
    assert!(
        strides.0 >= 0 && strides.1 >= 0 && (last as usize) < len,
        "gemm operand out of bounds"
    );
}

macro_rules! impl_real {
    ($t:ty, $gemm:path) => {
        impl Real for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                a_strides: (isize, isize),
                b: &[Self],
                b_strides: (isize, isize),
                beta: Self,
                c: &mut [Self],
                c_row_stride: isize,
            ) {
                check_extent(a.len(), m, k, a_strides);
                check_extent(b.len(), k, n, b_strides);
                check_extent(c.len(), m, n, (c_row_stride, 1));
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: every operand extent was bounds-checked above.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        a_strides.0,
                        a_strides.1,
                        b.as_ptr(),
                        b_strides.0,
                        b_strides.1,
                        beta,
                        c.as_mut_ptr(),
                        c_row_stride,
                        1,
                    );
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);

/// Dense tensor with shape metadata and contiguous row-major storage.
#[derive(Clone, PartialEq)]
pub struct Tensor<T = f64> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Debug> Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        const SHOWN: usize = 8;
        write!(f, "Tensor{:?} ", self.shape)?;
        if self.data.len() <= SHOWN {
            write!(f, "{:?}", self.data)
        } else {
            write!(f, "{:?}..", &self.data[..SHOWN])
        }
    }
}

pub(crate) fn shape_str(shape: &[usize]) -> String {
    format!("{shape:?}")
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape(
                "Tensor::from_vec",
                format!("{n} elements for shape {shape:?}"),
                data.len(),
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// Zero-mean Gaussian samples with the given standard deviation.
    pub fn randn<R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Self {
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                T::of(z * std)
            })
            .collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn rand_uniform<R: Rng + ?Sized>(shape: &[usize], lo: f64, hi: f64, rng: &mut R) -> Self {
        let n = shape.iter().product();
        let data = (0..n).map(|_| T::of(rng.random_range(lo..hi))).collect();
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn dims4(&self, op: &'static str) -> Result<(usize, usize, usize, usize)> {
        match *self.shape.as_slice() {
            [b, c, h, w] => Ok((b, c, h, w)),
            _ => Err(Error::shape(op, "rank-4 [B,C,H,W]", shape_str(&self.shape))),
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::shape(
                "Tensor::reshape",
                format!("{} elements", self.data.len()),
                shape_str(shape),
            ));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(
                op,
                shape_str(&self.shape),
                shape_str(&other.shape),
            ));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn map_inplace(&mut self, f: impl Fn(T) -> T) {
        self.data.iter_mut().for_each(|v| *v = f(*v));
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.same_shape(other, "Tensor::zip_map")?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.axpy(T::one(), other)
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: T, x: &Self) -> Result<()> {
        self.same_shape(x, "Tensor::axpy")?;
        for (s, &v) in self.data.iter_mut().zip(&x.data) {
            *s += a * v;
        }
        Ok(())
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        self.same_shape(other, "Tensor::dot")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a * b)
            .sum())
    }

    pub fn norm_sqr(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }

    pub fn norm_l2(&self) -> T {
        self.norm_sqr().sqrt()
    }

    pub fn norm_l1(&self) -> T {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        self.same_shape(other, "Tensor::max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs())))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(context.to_string()))
        }
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::of(v.as_f64())).collect(),
        }
    }

    /// Number of leading-axis items and elements per item.
    fn leading(&self) -> (usize, usize) {
        let b = self.shape.first().copied().unwrap_or(0);
        let per = if b == 0 { 0 } else { self.data.len() / b };
        (b, per)
    }

    /// Copy of item `i` along the leading axis, keeping a leading axis of 1.
    pub fn batch_item(&self, i: usize) -> Result<Self> {
        let (b, per) = self.leading();
        if i >= b {
            return Err(Error::InvalidArgument(format!(
                "batch index {i} out of range for batch of {b}"
            )));
        }
        let mut shape = self.shape.clone();
        shape[0] = 1;
        Ok(Tensor {
            shape,
            data: self.data[i * per..(i + 1) * per].to_vec(),
        })
    }

    pub fn item_slice(&self, i: usize) -> &[T] {
        let (_, per) = self.leading();
        &self.data[i * per..(i + 1) * per]
    }

    pub fn item_slice_mut(&mut self, i: usize) -> &mut [T] {
        let (_, per) = self.leading();
        &mut self.data[i * per..(i + 1) * per]
    }

    /// Concatenates tensors along a new leading axis.
    pub fn stack(items: &[&Tensor<T>]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::InvalidArgument("cannot stack zero tensors".into()))?;
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            first.same_shape(t, "Tensor::stack")?;
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        Ok(Tensor { shape, data })
    }

    /// Concatenates tensors along their existing leading axis.
    pub fn concat(items: &[&Tensor<T>]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::InvalidArgument("cannot concatenate zero tensors".into()))?;
        let tail = &first.shape[1..];
        let mut lead = 0;
        let mut data = Vec::new();
        for t in items {
            if t.shape.len() != first.shape.len() || &t.shape[1..] != tail {
                return Err(Error::shape(
                    "Tensor::concat",
                    shape_str(&first.shape),
                    shape_str(&t.shape),
                ));
            }
            lead += t.shape[0];
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![lead];
        shape.extend_from_slice(tail);
        Ok(Tensor { shape, data })
    }

    /// Drops the leading axis (which must be 1).
    pub fn squeeze_leading(self) -> Result<Self> {
        if self.shape.first() != Some(&1) {
            return Err(Error::shape(
                "Tensor::squeeze_leading",
                "leading axis of 1",
                shape_str(&self.shape),
            ));
        }
        let shape = self.shape[1..].to_vec();
        Ok(Tensor {
            shape,
            data: self.data,
        })
    }

    pub fn unsqueeze_leading(mut self) -> Self {
        self.shape.insert(0, 1);
        self
    }
}

/// 64-bit FNV-1a over the little-endian bytes of every value; used to compare
/// parameter sets across runs.
pub fn checksum<T: Real>(tensors: &[&Tensor<T>]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for t in tensors {
        for v in t.data() {
            for byte in v.as_f64().to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::<f64>::from_vec(&[2, 3], vec![0.0; 5]).is_err());
        let t = Tensor::<f64>::from_vec(&[2, 3], vec![1.0; 6]).unwrap();
        assert_eq!(t.len(), 6);
        assert_eq!(t.shape(), &[2, 3]);
    }

    #[test]
    fn gemm_matches_naive_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Tensor::<f64>::randn(&[5, 7], 1.0, &mut rng);
        let b = Tensor::<f64>::randn(&[7, 4], 1.0, &mut rng);
        let mut c = vec![0.0; 20];
        f64::gemm(5, 7, 4, 1.0, a.data(), (7, 1), b.data(), (4, 1), 0.0, &mut c, 4);
        for i in 0..5 {
            for j in 0..4 {
                let want: f64 = (0..7).map(|p| a.data()[i * 7 + p] * b.data()[p * 4 + j]).sum();
                assert!((c[i * 4 + j] - want).abs() < 1e-12);
            }
        }
        // transposed a via strides
        let mut ct = vec![0.0; 7 * 4];
        let a2 = Tensor::<f64>::randn(&[5, 7], 1.0, &mut rng);
        let b2 = Tensor::<f64>::randn(&[5, 4], 1.0, &mut rng);
        f64::gemm(7, 5, 4, 1.0, a2.data(), (1, 7), b2.data(), (4, 1), 0.0, &mut ct, 4);
        for i in 0..7 {
            for j in 0..4 {
                let want: f64 = (0..5).map(|p| a2.data()[p * 7 + i] * b2.data()[p * 4 + j]).sum();
                assert!((ct[i * 4 + j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stack_and_batch_item_invert() {
        let a = Tensor::<f64>::full(&[2, 2], 1.0);
        let b = Tensor::<f64>::full(&[2, 2], 2.0);
        let s = Tensor::stack(&[&a, &b]).unwrap();
        assert_eq!(s.shape(), &[2, 2, 2]);
        assert_eq!(s.batch_item(1).unwrap().squeeze_leading().unwrap(), b);
        assert!(s.batch_item(2).is_err());
    }

    #[test]
    fn checksum_detects_single_bit_change() {
        let a = Tensor::<f32>::full(&[3], 1.0);
        let mut b = a.clone();
        b.data_mut()[2] = f32::from_bits(1.0f32.to_bits() + 1);
        assert_ne!(checksum(&[&a]), checksum(&[&b]));
    }
}
