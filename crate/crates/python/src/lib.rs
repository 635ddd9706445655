//! Python bindings: operators, phantoms, acquisition, both reconstruction
//! methods, prox operators and quality metrics. Images are 2-D `float64`
//! arrays; coefficient and measurement vectors are 1-D.

use csdecon::experiment::{self, PhantomSpec, RunSpec, SeedStreams};
use csdecon::io::KeyValues;
use csdecon::metrics::{self as quality, CnrInput, RegionSpec};
use csdecon::phantoms::{self, AcquisitionSpec, SheppLoganVariant};
use csdecon::{prox, Error, Image, Prior};
use numpy::ndarray::Array2;
use numpy::{IntoPyArray, PyArray1, PyArray2, PyReadonlyArray1, PyReadonlyArray2};
use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        e if e.is_numerical() => PyArithmeticError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn image(arr: &PyReadonlyArray2<'_, f64>) -> PyResult<Image> {
    let a = arr.as_array();
    let (h, w) = a.dim();
    Image::new(h, w, a.iter().copied().collect()).map_err(to_py)
}

fn array<'py>(py: Python<'py>, img: Image) -> Bound<'py, PyArray2<f64>> {
    let (h, w) = img.shape();
    Array2::from_shape_vec((h, w), img.into_vec())
        .expect("image buffer matches its shape")
        .into_pyarray(py)
}

fn vector<'py>(py: Python<'py>, v: Vec<f64>) -> Bound<'py, PyArray1<f64>> {
    v.into_pyarray(py)
}

/// Keyword arguments as `key = value` parameters.
fn key_values(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<KeyValues> {
    let mut kv = KeyValues::new();
    if let Some(d) = kwargs {
        for (k, v) in d.iter() {
            let key: String = k.extract()?;
            let value = match v.extract::<bool>() {
                Ok(b) => b.to_string(),
                Err(_) => v.str()?.to_string(),
            };
            kv.set(key, value);
        }
    }
    Ok(kv)
}

/// Structurally random sensing matrix `Φ` with orthonormal rows.
#[pyclass(name = "SensingOperator", module = "pycsdecon")]
struct PySensing(csdecon::SensingOperator);

#[pymethods]
impl PySensing {
    #[new]
    fn new(height: usize, width: usize, m: usize, seed: u64) -> PyResult<Self> {
        csdecon::SensingOperator::new(height, width, m, seed).map(Self).map_err(to_py)
    }

    /// Number of measurements for `n` pixels at the given CS ratio.
    #[staticmethod]
    fn measurement_count(n: usize, cs_ratio: f64) -> PyResult<usize> {
        csdecon::SensingOperator::measurement_count(n, cs_ratio).map_err(to_py)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.0.m()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed()
    }

    /// `Φ x` for a flattened (row-major) image.
    fn apply<'py>(&self, py: Python<'py>, x: PyReadonlyArray1<'py, f64>) -> PyResult<Bound<'py, PyArray1<f64>>> {
        Ok(vector(py, self.0.apply(x.as_slice()?).map_err(to_py)?))
    }

    fn adjoint<'py>(&self, py: Python<'py>, y: PyReadonlyArray1<'py, f64>) -> PyResult<Bound<'py, PyArray1<f64>>> {
        Ok(vector(py, self.0.adjoint(y.as_slice()?).map_err(to_py)?))
    }

    fn __repr__(&self) -> String {
        format!("SensingOperator(n={}, m={}, seed={})", self.0.n(), self.0.m(), self.0.seed())
    }
}

/// Periodic 2-D convolution `H` with a centred kernel.
#[pyclass(name = "PsfOperator", module = "pycsdecon")]
struct PyPsf(csdecon::PsfOperator);

#[pymethods]
impl PyPsf {
    #[new]
    fn new(kernel: PyReadonlyArray2<'_, f64>, height: usize, width: usize) -> PyResult<Self> {
        csdecon::PsfOperator::new(&image(&kernel)?, height, width)
            .map(Self)
            .map_err(to_py)
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    /// `max |ĥ|²`.
    fn lipschitz(&self) -> f64 {
        self.0.lipschitz()
    }

    fn apply<'py>(&self, py: Python<'py>, x: PyReadonlyArray2<'py, f64>) -> PyResult<Bound<'py, PyArray2<f64>>> {
        Ok(array(py, self.0.apply(&image(&x)?).map_err(to_py)?))
    }

    fn adjoint<'py>(&self, py: Python<'py>, y: PyReadonlyArray2<'py, f64>) -> PyResult<Bound<'py, PyArray2<f64>>> {
        Ok(array(py, self.0.adjoint(&image(&y)?).map_err(to_py)?))
    }

    /// `[βHᵗH + 2αI]⁻¹ rhs`.
    fn solve_tikhonov<'py>(
        &self,
        py: Python<'py>,
        rhs: PyReadonlyArray2<'py, f64>,
        beta: f64,
        alpha: f64,
    ) -> PyResult<Bound<'py, PyArray2<f64>>> {
        Ok(array(py, self.0.solve_tikhonov(&image(&rhs)?, beta, alpha).map_err(to_py)?))
    }
}

/// Orthonormal multi-level 2-D Haar transform.
#[pyclass(name = "HaarWavelet", module = "pycsdecon")]
struct PyWavelet(csdecon::HaarWavelet);

#[pymethods]
impl PyWavelet {
    #[new]
    #[pyo3(signature = (height, width, levels = 3))]
    fn new(height: usize, width: usize, levels: usize) -> PyResult<Self> {
        csdecon::HaarWavelet::new(levels, height, width).map(Self).map_err(to_py)
    }

    #[getter]
    fn levels(&self) -> usize {
        self.0.levels()
    }

    fn forward<'py>(&self, py: Python<'py>, x: PyReadonlyArray2<'py, f64>) -> PyResult<Bound<'py, PyArray1<f64>>> {
        Ok(vector(py, self.0.forward(&image(&x)?).map_err(to_py)?))
    }

    fn inverse<'py>(&self, py: Python<'py>, a: PyReadonlyArray1<'py, f64>) -> PyResult<Bound<'py, PyArray2<f64>>> {
        Ok(array(py, self.0.inverse(a.as_slice()?).map_err(to_py)?))
    }
}

/// ADMM hyperparameters. `prior` is `"lp"` or `"gtv"`; `gamma = None`
/// selects `0.9 / max|ĥ|²`.
#[pyclass(name = "SolverConfig", module = "pycsdecon", get_all, set_all, skip_from_py_object)]
#[derive(Clone)]
struct PyConfig {
    prior: String,
    p: f64,
    alpha: f64,
    mu: f64,
    beta: f64,
    gamma: Option<f64>,
    rel_tol: f64,
    max_iter: usize,
    gtv_inner_iter: usize,
    gtv_epsilon: f64,
    cg_tol: f64,
    cg_max_iter: usize,
}

impl PyConfig {
    fn to_core(&self) -> PyResult<csdecon::SolverConfig> {
        let prior = match self.prior.as_str() {
            "lp" => Prior::Lp { p: self.p },
            "gtv" => Prior::Gtv { p: self.p },
            other => return Err(PyValueError::new_err(format!("unknown prior `{other}`"))),
        };
        let mut c = csdecon::SolverConfig::new(prior, self.alpha, self.mu, self.beta);
        c.gamma = self.gamma;
        c.rel_tol = self.rel_tol;
        c.max_iter = self.max_iter;
        c.gtv_inner_iter = self.gtv_inner_iter;
        c.gtv_epsilon = self.gtv_epsilon;
        c.cg_tol = self.cg_tol;
        c.cg_max_iter = self.cg_max_iter;
        c.validate().map_err(to_py)?;
        Ok(c)
    }
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (alpha, mu, beta, prior = "lp", p = None, gamma = None))]
    fn new(alpha: f64, mu: f64, beta: f64, prior: &str, p: Option<f64>, gamma: Option<f64>) -> Self {
        let d = csdecon::SolverConfig::lp(1.0, alpha, mu, beta);
        let p = p.unwrap_or(if prior == "gtv" { csdecon::SolverConfig::DEFAULT_GTV_P } else { 1.0 });
        Self {
            prior: prior.to_string(),
            p,
            alpha,
            mu,
            beta,
            gamma,
            rel_tol: d.rel_tol,
            max_iter: d.max_iter,
            gtv_inner_iter: d.gtv_inner_iter,
            gtv_epsilon: d.gtv_epsilon,
            cg_tol: d.cg_tol,
            cg_max_iter: d.cg_max_iter,
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "SolverConfig(prior={:?}, p={}, alpha={}, mu={}, beta={}, gamma={:?}, rel_tol={}, max_iter={})",
            self.prior, self.p, self.alpha, self.mu, self.beta, self.gamma, self.rel_tol, self.max_iter
        )
    }
}

/// Joint compressive deconvolution. Returns `(x, report)`.
#[pyfunction]
fn admm_reconstruct<'py>(
    py: Python<'py>,
    y: PyReadonlyArray1<'py, f64>,
    sensing: &PySensing,
    psf: &PyPsf,
    wavelet: &PyWavelet,
    config: &PyConfig,
) -> PyResult<(Bound<'py, PyArray2<f64>>, Bound<'py, PyDict>)> {
    let config = config.to_core()?;
    let y = y.as_slice()?.to_vec();
    let (x, report) = py
        .detach(|| csdecon::admm_reconstruct(&y, &sensing.0, &psf.0, &wavelet.0, &config))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("iterations", report.iterations)?;
    d.set_item("converged", report.converged)?;
    d.set_item("rel_change", report.rel_change)?;
    d.set_item("residual_coefficient", report.final_residuals.coefficient)?;
    d.set_item("residual_image", report.final_residuals.image)?;
    d.set_item("residual_reduction", report.residual_reduction())?;
    d.set_item(
        "residual_history",
        report.residual_history.iter().map(|r| r.combined()).collect::<Vec<_>>(),
    )?;
    d.set_item("seconds", report.wall_seconds)?;
    Ok((array(py, x), d))
}

/// Compressive sampling recovery followed by deconvolution. Returns `(x, report)`.
#[pyfunction]
#[pyo3(signature = (y, sensing, psf, wavelet, mu, alpha, p = 1.0, fista_max_iter = None, fb_max_iter = None))]
#[allow(clippy::too_many_arguments)]
fn sequential_reconstruct<'py>(
    py: Python<'py>,
    y: PyReadonlyArray1<'py, f64>,
    sensing: &PySensing,
    psf: &PyPsf,
    wavelet: &PyWavelet,
    mu: f64,
    alpha: f64,
    p: f64,
    fista_max_iter: Option<usize>,
    fb_max_iter: Option<usize>,
) -> PyResult<(Bound<'py, PyArray2<f64>>, Bound<'py, PyDict>)> {
    let mut config = csdecon::SequentialConfig::new(mu, alpha, p);
    if let Some(n) = fista_max_iter {
        config.fista_max_iter = n;
    }
    if let Some(n) = fb_max_iter {
        config.fb_max_iter = n;
    }
    let y = y.as_slice()?.to_vec();
    let (x, report) = py
        .detach(|| csdecon::sequential_reconstruct(&y, &sensing.0, &psf.0, &wavelet.0, &config))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("iterations", report.iterations())?;
    d.set_item("converged", report.converged())?;
    d.set_item("cs_iterations", report.cs.iterations)?;
    d.set_item("deconvolution_iterations", report.deconvolution.iterations)?;
    d.set_item("seconds", report.wall_seconds)?;
    Ok((array(py, x), d))
}

/// Shepp-Logan phantom normalized to `[0, 1]`.
#[pyfunction]
#[pyo3(signature = (n, variant = "toft"))]
fn shepp_logan<'py>(py: Python<'py>, n: usize, variant: &str) -> PyResult<Bound<'py, PyArray2<f64>>> {
    let variant = match variant {
        "toft" => SheppLoganVariant::Toft,
        "original" => SheppLoganVariant::Original,
        other => return Err(PyValueError::new_err(format!("unknown variant `{other}`"))),
    };
    Ok(array(py, phantoms::shepp_logan_variant(n, variant).map_err(to_py)?))
}

/// Any phantom kind, configured with the parameter-file keys
/// (`ggd_shape`, `scatterer_density`, `cyst_radius`, ...).
#[pyfunction]
#[pyo3(signature = (kind, size, seed = 0, **params))]
fn phantom<'py>(
    py: Python<'py>,
    kind: &str,
    size: usize,
    seed: u64,
    params: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyArray2<f64>>> {
    let mut kv = key_values(params)?;
    kv.set("phantom", kind);
    kv.set("size", size);
    let spec = PhantomSpec::from_key_values(&kv).map_err(to_py)?;
    let img = spec.build(SeedStreams::derive(seed).phantom).map_err(to_py)?;
    Ok(array(py, img))
}

/// Unit-sum isotropic Gaussian kernel.
#[pyfunction]
#[pyo3(signature = (variance, size = 17))]
fn gaussian_psf<'py>(py: Python<'py>, variance: f64, size: usize) -> PyResult<Bound<'py, PyArray2<f64>>> {
    Ok(array(py, phantoms::gaussian_psf(size, variance).map_err(to_py)?))
}

/// Unit-energy synthetic RF pulse.
#[pyfunction]
#[pyo3(signature = (axial_freq = phantoms::DEFAULT_AXIAL_FREQ, axial_sigma = 4.0, lateral_sigma = 2.0, size = 25))]
fn gabor_psf<'py>(
    py: Python<'py>,
    axial_freq: f64,
    axial_sigma: f64,
    lateral_sigma: f64,
    size: usize,
) -> PyResult<Bound<'py, PyArray2<f64>>> {
    Ok(array(py, phantoms::gabor_psf(axial_freq, axial_sigma, lateral_sigma, size).map_err(to_py)?))
}

/// `y = ΦHx + n`. Returns `(y, sensing, info)`; sensing and noise seeds are
/// derived from `seed`.
#[pyfunction]
#[pyo3(signature = (trf, psf, cs_ratio, snr_db = None, seed = 0))]
fn acquire<'py>(
    py: Python<'py>,
    trf: PyReadonlyArray2<'py, f64>,
    psf: &PyPsf,
    cs_ratio: f64,
    snr_db: Option<f64>,
    seed: u64,
) -> PyResult<(Bound<'py, PyArray1<f64>>, PySensing, Bound<'py, PyDict>)> {
    let seeds = SeedStreams::derive(seed);
    let spec = AcquisitionSpec {
        cs_ratio,
        snr_db,
        sensing_seed: seeds.sensing,
        noise_seed: seeds.noise,
    };
    let acq = phantoms::acquire(&image(&trf)?, &psf.0, &spec).map_err(to_py)?;
    let info = PyDict::new(py);
    info.set_item("sensing_seed", seeds.sensing)?;
    info.set_item("noise_seed", seeds.noise)?;
    info.set_item("realized_snr_db", acq.realized_snr_db())?;
    info.set_item("signal_energy", acq.signal_energy)?;
    info.set_item("noise_energy", acq.noise_energy)?;
    Ok((vector(py, acq.measurements), PySensing(acq.sensing), info))
}

/// Minimizer of `K|x|^p + ½(x - v)²`, elementwise, for `1 <= p <= 2`.
#[pyfunction]
fn prox_lp<'py>(py: Python<'py>, v: PyReadonlyArray1<'py, f64>, k: f64, p: f64) -> PyResult<Bound<'py, PyArray1<f64>>> {
    Ok(vector(py, prox::prox_lp(v.as_slice()?, k, p).map_err(to_py)?))
}

#[pyfunction]
fn soft_threshold<'py>(py: Python<'py>, v: PyReadonlyArray1<'py, f64>, k: f64) -> PyResult<Bound<'py, PyArray1<f64>>> {
    Ok(vector(py, prox::prox_l1(v.as_slice()?, k)))
}

#[pyfunction]
fn psnr(truth: PyReadonlyArray2<'_, f64>, estimate: PyReadonlyArray2<'_, f64>) -> PyResult<f64> {
    quality::psnr(&image(&truth)?, &image(&estimate)?).map_err(to_py)
}

/// Global SSIM in `[-1, 1]`.
#[pyfunction]
fn ssim(truth: PyReadonlyArray2<'_, f64>, estimate: PyReadonlyArray2<'_, f64>) -> PyResult<f64> {
    quality::ssim_global(&image(&truth)?, &image(&estimate)?).map_err(to_py)
}

/// Regions are `(row, col, height, width)`.
#[pyfunction]
#[pyo3(signature = (img, region1, region2, input = "envelope"))]
fn cnr(
    img: PyReadonlyArray2<'_, f64>,
    region1: (usize, usize, usize, usize),
    region2: (usize, usize, usize, usize),
    input: &str,
) -> PyResult<f64> {
    let input = match input {
        "envelope" => CnrInput::Envelope,
        "raw" => CnrInput::Raw,
        other => return Err(PyValueError::new_err(format!("unknown cnr input `{other}`"))),
    };
    let r = |t: (usize, usize, usize, usize)| RegionSpec::new(t.0, t.1, t.2, t.3);
    quality::cnr_with(&image(&img)?, &r(region1), &r(region2), input).map_err(to_py)
}

/// One full simulation from parameter-file keys. Returns a dict with the
/// metrics plus `truth` and `estimate` arrays.
#[pyfunction]
#[pyo3(signature = (**params))]
fn run<'py>(py: Python<'py>, params: Option<&Bound<'py, PyDict>>) -> PyResult<Bound<'py, PyDict>> {
    let spec = RunSpec::from_key_values(&key_values(params)?).map_err(to_py)?;
    let outcome = py.detach(|| experiment::run(&spec)).map_err(to_py)?;
    let m = &outcome.metrics;
    let d = PyDict::new(py);
    d.set_item("method", spec.solver.label())?;
    d.set_item("psnr_db", m.psnr_db)?;
    d.set_item("ssim", m.ssim)?;
    d.set_item("cnr", m.cnr)?;
    d.set_item("iterations", m.iterations)?;
    d.set_item("converged", m.converged)?;
    d.set_item("rel_change", m.rel_change)?;
    d.set_item("residual_reduction", m.residual_reduction)?;
    d.set_item("measurements", m.measurements)?;
    d.set_item("realized_snr_db", m.realized_snr_db)?;
    d.set_item("seconds", m.seconds)?;
    d.set_item("truth", array(py, outcome.truth))?;
    d.set_item("estimate", array(py, outcome.estimate))?;
    Ok(d)
}

/// `(phantom, sensing, noise)` seeds derived from a run seed.
#[pyfunction]
fn seed_streams(seed: u64) -> (u64, u64, u64) {
    let s = SeedStreams::derive(seed);
    (s.phantom, s.sensing, s.noise)
}

#[pymodule]
fn pycsdecon(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySensing>()?;
    m.add_class::<PyPsf>()?;
    m.add_class::<PyWavelet>()?;
    m.add_class::<PyConfig>()?;
    m.add_function(wrap_pyfunction!(admm_reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(sequential_reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(shepp_logan, m)?)?;
    m.add_function(wrap_pyfunction!(phantom, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_psf, m)?)?;
    m.add_function(wrap_pyfunction!(gabor_psf, m)?)?;
    m.add_function(wrap_pyfunction!(acquire, m)?)?;
    m.add_function(wrap_pyfunction!(prox_lp, m)?)?;
    m.add_function(wrap_pyfunction!(soft_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(cnr, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(seed_streams, m)?)?;
    Ok(())
}
