//! Python bindings. Tensors cross the boundary as flat row-major `float`
//! lists plus a shape, so no array library is required on either side.

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use hotcake::convsim::{self, FeatureMap};
use hotcake::hotcake::{self as hc, ConvSpec, HotcakeRanks, KernelTensor, LayerReport, LayerStatus, ParamCount};
use hotcake::rng::CounterRng;
use hotcake::tucker::{self, HosvdOptions, TuckerRanks};
use hotcake::vbmf::{self, VbmfOptions};
use hotcake::{DenseTensor, Matrix};

fn py_err(e: hotcake::Error) -> PyErr {
    match e {
        hotcake::Error::Io(io) => PyOSError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Dense row-major tensor of `float64`.
#[pyclass(name = "Tensor", module = "hotcake_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyTensor {
    inner: DenseTensor,
}

impl PyTensor {
    fn matrix(&self) -> PyResult<Matrix> {
        let s = self.inner.shape();
        if s.len() != 2 {
            return Err(PyValueError::new_err(format!("expected a matrix, got shape {s:?}")));
        }
        Matrix::new(s[0], s[1], self.inner.data().to_vec()).map_err(py_err)
    }

    fn from_matrix(m: Matrix) -> PyResult<Self> {
        let shape = vec![m.rows(), m.cols()];
        Ok(PyTensor { inner: DenseTensor::new(shape, m.into_data()).map_err(py_err)? })
    }

    fn kernel(&self, stride: (usize, usize), padding: (usize, usize)) -> PyResult<KernelTensor> {
        let s = self.inner.shape();
        if s.len() != 4 {
            return Err(PyValueError::new_err(format!("expected a [D_h, D_w, K1, K2] kernel, got {s:?}")));
        }
        let spec = ConvSpec::new((s[0], s[1]), stride, padding).map_err(py_err)?;
        KernelTensor::new(self.inner.clone(), spec).map_err(py_err)
    }
}

#[pymethods]
impl PyTensor {
    #[new]
    fn new(shape: Vec<usize>, data: Vec<f64>) -> PyResult<Self> {
        Ok(PyTensor { inner: DenseTensor::new(shape, data).map_err(py_err)? })
    }

    #[staticmethod]
    fn random_normal(shape: Vec<usize>, seed: u64) -> PyResult<Self> {
        let t = DenseTensor::random_normal(shape, &mut CounterRng::new(seed)).map_err(py_err)?;
        Ok(PyTensor { inner: t })
    }

    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        Ok(PyTensor { inner: hotcake::io::read_tensor(path.as_ref()).map_err(py_err)? })
    }

    fn write(&self, path: &str) -> PyResult<()> {
        hotcake::io::write_tensor(path.as_ref(), &self.inner, hotcake::io::Dtype::F64).map_err(py_err)
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.inner.shape().to_vec()
    }

    #[getter]
    fn data(&self) -> Vec<f64> {
        self.inner.data().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Tensor(shape={:?})", self.inner.shape())
    }

    fn reshape(&self, shape: Vec<usize>) -> PyResult<Self> {
        Ok(PyTensor { inner: self.inner.reshape(&shape).map_err(py_err)? })
    }

    fn permute(&self, order: Vec<usize>) -> PyResult<Self> {
        Ok(PyTensor { inner: self.inner.permute(&order).map_err(py_err)? })
    }

    fn unfold(&self, mode: usize) -> PyResult<Self> {
        PyTensor::from_matrix(self.inner.unfold(mode).map_err(py_err)?)
    }

    #[staticmethod]
    fn fold(matrix: &PyTensor, mode: usize, shape: Vec<usize>) -> PyResult<Self> {
        let m = matrix.matrix()?;
        Ok(PyTensor { inner: DenseTensor::fold(&m, mode, &shape).map_err(py_err)? })
    }

    /// `self ×_mode u` with `u` of shape `[J, I_mode]`.
    fn mode_product(&self, u: &PyTensor, mode: usize) -> PyResult<Self> {
        Ok(PyTensor { inner: self.inner.mode_product(&u.matrix()?, mode).map_err(py_err)? })
    }

    fn frobenius_norm(&self) -> f64 {
        self.inner.frobenius_norm()
    }
}

/// A convolution replaced by sub-mode, core and output stages.
#[pyclass(name = "DecomposedLayer", module = "hotcake_py", frozen)]
struct PyDecomposedLayer {
    inner: hc::DecomposedLayer,
}

#[pymethods]
impl PyDecomposedLayer {
    #[getter]
    fn branches(&self) -> Vec<usize> {
        self.inner.channels.branches().to_vec()
    }

    /// Flat `[R_31, …, R_3l, R_4]`.
    #[getter]
    fn ranks(&self) -> Vec<usize> {
        self.inner.ranks.to_flat()
    }

    #[getter]
    fn approx_error(&self) -> f64 {
        self.inner.approx_error
    }

    #[getter]
    fn is_full_rank(&self) -> bool {
        self.inner.is_full_rank()
    }

    fn param_count(&self) -> usize {
        self.inner.param_count()
    }

    fn flops(&self, input_hw: (usize, usize)) -> PyResult<u64> {
        hc::flop_estimate(&self.inner, input_hw).map_err(py_err)
    }

    /// Stage kernels in execution order.
    fn stages(&self) -> Vec<PyTensor> {
        self.inner.stages().into_iter().map(|t| PyTensor { inner: t.clone() }).collect()
    }

    fn reconstruct_kernel(&self) -> PyResult<PyTensor> {
        Ok(PyTensor { inner: self.inner.reconstruct_kernel().map_err(py_err)?.tensor().clone() })
    }

    fn __repr__(&self) -> String {
        format!("DecomposedLayer(branches={:?}, ranks={:?})", self.branches(), self.ranks())
    }
}

/// Truncated HOSVD; returns `(core, factors)`. `modes` defaults to all.
#[pyfunction]
#[pyo3(signature = (t, ranks, modes=None, use_rsvd=false, seed=0))]
fn hosvd(
    t: &PyTensor,
    ranks: Vec<usize>,
    modes: Option<Vec<usize>>,
    use_rsvd: bool,
    seed: u64,
) -> PyResult<(PyTensor, Vec<PyTensor>)> {
    let modes = modes.unwrap_or_else(|| (0..t.inner.ndim()).collect());
    let opts = HosvdOptions { use_rsvd, seed, ..Default::default() };
    let f = tucker::hosvd(&t.inner, &TuckerRanks(ranks), &modes, &opts).map_err(py_err)?;
    let factors = f.factors.into_iter().map(PyTensor::from_matrix).collect::<PyResult<_>>()?;
    Ok((PyTensor { inner: f.core }, factors))
}

#[pyfunction]
fn factorize_channels(k1: usize, branches: usize) -> PyResult<Vec<usize>> {
    Ok(hc::factorize_channels(k1, branches).map_err(py_err)?.branches().to_vec())
}

/// Splits the input channels into `l` branches and decomposes at the given
/// flat ranks, or at ranks picked by the neighbourhood search when `ranks`
/// is omitted.
#[pyfunction]
#[pyo3(signature = (kernel, ranks=None, l=2, branches=None, stride=(1, 1), padding=(0, 0), diameter=3, use_rsvd=false, seed=0))]
#[allow(clippy::too_many_arguments)]
fn decompose_layer(
    kernel: &PyTensor,
    ranks: Option<Vec<usize>>,
    l: usize,
    branches: Option<Vec<usize>>,
    stride: (usize, usize),
    padding: (usize, usize),
    diameter: usize,
    use_rsvd: bool,
    seed: u64,
) -> PyResult<PyDecomposedLayer> {
    let k = kernel.kernel(stride, padding)?;
    let cf = match branches {
        Some(b) => hc::ChannelFactorization::new(b),
        None => hc::factorize_channels(k.in_channels(), l),
    }
    .map_err(py_err)?;
    let ranks = match ranks {
        Some(r) => HotcakeRanks::from_flat(&r).map_err(py_err)?,
        None => {
            let k_new = hc::reshape_kernel(&k, &cf).map_err(py_err)?;
            let cfg = hc::SearchConfig { diameter, use_rsvd, seed, ..Default::default() };
            hc::select_ranks(&k_new, &cfg).map_err(py_err)?.ranks
        }
    };
    let opts = HosvdOptions { use_rsvd, seed, ..Default::default() };
    let inner = hc::decompose_layer(&k, &cf, &ranks, &opts).map_err(py_err)?;
    Ok(PyDecomposedLayer { inner })
}

/// `D_h · D_w · K1 · K2` of a 4-way kernel.
#[pyfunction]
fn param_count(kernel: &PyTensor) -> PyResult<usize> {
    Ok(kernel.kernel((1, 1), (0, 0))?.param_count())
}

/// Cross-correlation of an `[H, W, C]` map with a `[D_h, D_w, C, K]` kernel.
#[pyfunction]
#[pyo3(signature = (x, kernel, stride=(1, 1), padding=(0, 0)))]
fn conv2d(x: &PyTensor, kernel: &PyTensor, stride: (usize, usize), padding: (usize, usize)) -> PyResult<PyTensor> {
    let fm = FeatureMap::new(x.inner.clone()).map_err(py_err)?;
    let y = convsim::conv2d(&fm, &kernel.kernel(stride, padding)?).map_err(py_err)?;
    Ok(PyTensor { inner: y.into_tensor() })
}

#[pyfunction]
fn forward_decomposed(x: &PyTensor, layer: &PyDecomposedLayer) -> PyResult<PyTensor> {
    let fm = FeatureMap::new(x.inner.clone()).map_err(py_err)?;
    let y = convsim::forward_decomposed(&fm, &layer.inner).map_err(py_err)?;
    Ok(PyTensor { inner: y.into_tensor() })
}

/// VBMF rank of a matrix; returns `(rank, noise_variance)`.
#[pyfunction]
#[pyo3(signature = (m, use_rsvd=false, seed=0))]
fn estimate_rank(m: &PyTensor, use_rsvd: bool, seed: u64) -> PyResult<(usize, f64)> {
    let opts = VbmfOptions { use_rsvd, seed, candidate_max: None };
    let e = vbmf::estimate_rank(&m.matrix()?, &opts).map_err(py_err)?;
    Ok((e.rank, e.noise_variance))
}

/// Ids sorted by descending compression ratio, ties by id.
#[pyfunction]
fn plan_compression_order(layers: Vec<(String, f64)>) -> Vec<String> {
    let reports: Vec<LayerReport> = layers
        .into_iter()
        .map(|(id, ratio)| LayerReport {
            id,
            status: LayerStatus::Compressed,
            message: None,
            kernel_shape: Vec::new(),
            branches: Vec::new(),
            ranks: None,
            center_ranks: None,
            candidates_evaluated: 0,
            feasible: true,
            original_params: 0,
            compressed_params: 0,
            compression_ratio: ratio,
            approx_error: 0.0,
            flop_original: 0,
            flop_compressed: 0,
        })
        .collect();
    hc::plan_compression_order(&reports)
}

#[pymodule]
fn hotcake_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTensor>()?;
    m.add_class::<PyDecomposedLayer>()?;
    m.add_function(wrap_pyfunction!(hosvd, m)?)?;
    m.add_function(wrap_pyfunction!(factorize_channels, m)?)?;
    m.add_function(wrap_pyfunction!(decompose_layer, m)?)?;
    m.add_function(wrap_pyfunction!(param_count, m)?)?;
    m.add_function(wrap_pyfunction!(conv2d, m)?)?;
    m.add_function(wrap_pyfunction!(forward_decomposed, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_rank, m)?)?;
    m.add_function(wrap_pyfunction!(plan_compression_order, m)?)?;
    Ok(())
}
