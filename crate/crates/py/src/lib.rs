//! Python bindings: tensors, sampling masks, measurement operators, sparse-coding
//! solvers, metrics and unrolled models.

use std::path::PathBuf;

use proxrec::cs::{fista, ista, SparsityConfig, Transform};
use proxrec::data::{generate_phantom, generate_texture, PhantomSpec};
use proxrec::eval::{image_snr, image_ssim};
use proxrec::model::{load_model, save_model, GeneratorConfig, UnrolledModel, ValueMap, WeightMode};
use proxrec::nn::Mode;
use proxrec::operators::{approx_deconvolve, generate_mask, BoxDownsample, LinearOperator, MaskSpec, MaskedFourier, SamplingMask};
use proxrec::Tensor;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn err(e: proxrec::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Dense float64 array with a row-major shape.
#[pyclass(name = "Tensor", module = "proxrec")]
struct PyTensor {
    inner: Tensor<f64>,
}

#[pymethods]
impl PyTensor {
    #[new]
    fn new(data: Vec<f64>, shape: Vec<usize>) -> PyResult<Self> {
        Ok(PyTensor { inner: Tensor::from_vec(&shape, data).map_err(err)? })
    }

    #[staticmethod]
    fn zeros(shape: Vec<usize>) -> Self {
        PyTensor { inner: Tensor::zeros(&shape) }
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.inner.shape().to_vec()
    }

    /// Flat row-major values.
    fn tolist(&self) -> Vec<f64> {
        self.inner.data().to_vec()
    }

    fn norm(&self) -> f64 {
        self.inner.norm_l2()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Tensor(shape={:?})", self.inner.shape())
    }
}

#[pyclass(name = "Mask", module = "proxrec")]
struct PyMask {
    inner: SamplingMask,
}

#[pymethods]
impl PyMask {
    /// Variable-density random mask keeping `fraction` of the k-space bins.
    #[staticmethod]
    #[pyo3(signature = (h, w, fraction, seed=0))]
    fn generate(h: usize, w: usize, fraction: f64, seed: u64) -> PyResult<Self> {
        Ok(PyMask { inner: generate_mask(&MaskSpec::new(h, w, fraction, seed)).map_err(err)? })
    }

    #[staticmethod]
    fn full(h: usize, w: usize) -> Self {
        PyMask { inner: SamplingMask::full(h, w) }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyMask { inner: SamplingMask::load(&path).map_err(err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    #[getter]
    fn count(&self) -> usize {
        self.inner.count()
    }

    #[getter]
    fn fraction(&self) -> f64 {
        self.inner.realized_fraction()
    }

    #[getter]
    fn id(&self) -> u64 {
        self.inner.id()
    }

    fn included(&self) -> Vec<bool> {
        self.inner.included().to_vec()
    }
}

enum OpKind {
    Fourier(MaskedFourier<f64>),
    Box(BoxDownsample),
}

/// A measurement operator acting on batches `[B, ...image_shape]`.
#[pyclass(name = "Operator", module = "proxrec")]
struct PyOperator {
    kind: OpKind,
}

impl PyOperator {
    fn op(&self) -> &dyn LinearOperator<f64> {
        match &self.kind {
            OpKind::Fourier(f) => f,
            OpKind::Box(b) => b,
        }
    }
}

#[pymethods]
impl PyOperator {
    #[staticmethod]
    fn masked_fourier(mask: &PyMask) -> Self {
        PyOperator { kind: OpKind::Fourier(MaskedFourier::new(mask.inner.clone())) }
    }

    #[staticmethod]
    fn box_downsample(channels: usize, h: usize, w: usize) -> PyResult<Self> {
        Ok(PyOperator { kind: OpKind::Box(BoxDownsample::new(channels, h, w).map_err(err)?) })
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.op().name()
    }

    #[getter]
    fn image_shape(&self) -> Vec<usize> {
        self.op().image_shape()
    }

    #[getter]
    fn measurement_shape(&self) -> Vec<usize> {
        self.op().measurement_shape()
    }

    fn forward(&self, x: &PyTensor) -> PyResult<PyTensor> {
        Ok(PyTensor { inner: self.op().forward(&x.inner).map_err(err)? })
    }

    fn adjoint(&self, y: &PyTensor) -> PyResult<PyTensor> {
        Ok(PyTensor { inner: self.op().adjoint(&y.inner).map_err(err)? })
    }

    /// Network input for `y`: the zero-filled adjoint, or the deconvolution
    /// initializer for box downsampling.
    fn initial_estimate(&self, y: &PyTensor) -> PyResult<PyTensor> {
        let inner = match &self.kind {
            OpKind::Fourier(f) => LinearOperator::<f64>::adjoint(f, &y.inner),
            OpKind::Box(b) => approx_deconvolve(b, &y.inner, 5, 0.1),
        };
        Ok(PyTensor { inner: inner.map_err(err)? })
    }
}

/// Complex phantom `[1, 2, size, size]`.
#[pyfunction]
#[pyo3(signature = (size, seed=0))]
fn phantom(size: usize, seed: u64) -> PyResult<PyTensor> {
    let img = generate_phantom(&PhantomSpec::new(size, seed)).map_err(err)?;
    Ok(PyTensor { inner: img.to_tensor() })
}

/// RGB texture `[1, 3, size, size]`.
#[pyfunction]
#[pyo3(signature = (size, seed=0))]
fn texture(size: usize, seed: u64) -> PyResult<PyTensor> {
    let t = generate_texture(size, seed).map_err(err)?;
    let mut shape = vec![1];
    shape.extend_from_slice(t.shape());
    Ok(PyTensor { inner: t.reshape(&shape).map_err(err)? })
}

/// Sparse-coding reconstruction with ISTA or FISTA at unit step.
#[pyfunction]
#[pyo3(signature = (op, y, reg_weight, solver="fista", transform="wavelet", iters=200))]
fn cs_solve(op: &PyOperator, y: &PyTensor, reg_weight: f64, solver: &str, transform: &str, iters: usize) -> PyResult<PyTensor> {
    let transform: Transform = transform.parse().map_err(err)?;
    let config = SparsityConfig::new(transform, reg_weight);
    let out = match solver {
        "ista" => ista(op.op(), &y.inner, &config, 1.0, iters),
        "fista" => fista(op.op(), &y.inner, &config, 1.0, iters),
        other => return Err(PyValueError::new_err(format!("unknown solver '{other}' (ista|fista)"))),
    };
    Ok(PyTensor { inner: out.map_err(err)?.0 })
}

/// Mean SNR in dB over the batch; two-channel images are compared by magnitude.
#[pyfunction]
fn snr(truth: &PyTensor, estimate: &PyTensor) -> PyResult<f64> {
    image_snr(&truth.inner, &estimate.inner).map_err(err)
}

/// Per-image SSIM over a `[B, C, H, W]` batch.
#[pyfunction]
fn ssim(truth: &PyTensor, estimate: &PyTensor) -> PyResult<Vec<f64>> {
    image_ssim(&truth.inner, &estimate.inner).map_err(err)
}

#[pyclass(name = "Model", module = "proxrec")]
struct PyModel {
    inner: UnrolledModel<f64>,
}

#[pymethods]
impl PyModel {
    /// Randomly initialized K-copy unrolled network. Two channels selects the
    /// complex MRI value map, anything else the identity map.
    #[new]
    #[pyo3(signature = (copies, residual_blocks=1, weight_mode="shared", channels=2, feature_maps=16, seed=0))]
    fn new(copies: usize, residual_blocks: usize, weight_mode: &str, channels: usize, feature_maps: usize, seed: u64) -> PyResult<Self> {
        let mode: WeightMode = weight_mode.parse().map_err(err)?;
        let config = GeneratorConfig { num_residual_blocks: residual_blocks, feature_maps, in_channels: channels, out_channels: channels };
        let map = if channels == 2 { ValueMap::COMPLEX } else { ValueMap::IDENTITY };
        let inner = UnrolledModel::new(copies, mode, config, map, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(err)?;
        Ok(PyModel { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyModel { inner: load_model(&path).map_err(err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_model(&path, &self.inner).map_err(err)
    }

    #[getter]
    fn copies(&self) -> usize {
        self.inner.copies
    }

    fn alphas(&self) -> Vec<f64> {
        self.inner.alphas()
    }

    /// Eval-mode reconstruction from measurements and the network input.
    fn reconstruct(&self, op: &PyOperator, y: &PyTensor, x_tilde: &PyTensor) -> PyResult<PyTensor> {
        let out = self.inner.forward(op.op(), &y.inner, &x_tilde.inner, Mode::Eval).map_err(err)?;
        Ok(PyTensor { inner: out.x_hat })
    }
}

#[pymodule]
#[pyo3(name = "proxrec")]
fn proxrec_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTensor>()?;
    m.add_class::<PyMask>()?;
    m.add_class::<PyOperator>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(phantom, m)?)?;
    m.add_function(wrap_pyfunction!(texture, m)?)?;
    m.add_function(wrap_pyfunction!(cs_solve, m)?)?;
    m.add_function(wrap_pyfunction!(snr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    Ok(())
}
