//! Python bindings. Images cross the boundary as lists of rows of floats on
//! the 0..255 scale.

#![allow(clippy::type_complexity)]

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use clear_core::experiments::estimators::run_refit;
use clear_core::experiments::validation::{all_passed, run_suite, Suite, ValidateOptions};
use clear_core::experiments::{self as exp, DegradationSpec, EstimatorId, EstimatorSettings, JvpChoice, PhantomId};
use clear_core::nlm::NlmParams;
use clear_core::{closed_form, nlm, Error, Grid};

/// Rows of equal length to a grid.
pub fn grid_from_rows(rows: &[Vec<f64>]) -> clear_core::Result<Grid> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(Error::InvalidParameter("image must be non-empty".into()));
    }
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::InvalidParameter("image rows have different lengths".into()));
    }
    Grid::new(r, c, rows.concat())
}

pub fn grid_to_rows(g: &Grid) -> Vec<Vec<f64>> {
    g.as_slice().chunks(g.cols()).map(<[f64]>::to_vec).collect()
}

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::Parse(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(py_err)
}

fn to_grid(rows: Vec<Vec<f64>>) -> PyResult<Grid> {
    grid_from_rows(&rows).map_err(py_err)
}

#[pyclass(get_all, frozen)]
pub struct RefitOutput {
    observation: Vec<Vec<f64>>,
    estimate: Vec<Vec<f64>>,
    refit: Vec<Vec<f64>>,
    rho: f64,
    iters: usize,
    converged: bool,
}

#[pymethods]
impl RefitOutput {
    fn __repr__(&self) -> String {
        format!(
            "RefitOutput(rho={}, iters={}, converged={})",
            self.rho, self.iters, self.converged
        )
    }
}

#[pyfunction]
fn phantom(name: &str, size: usize) -> PyResult<Vec<Vec<f64>>> {
    let id: PhantomId = parse(name)?;
    Ok(grid_to_rows(&exp::phantom(id, size).map_err(py_err)?))
}

#[pyfunction]
fn soft_threshold(y: Vec<Vec<f64>>, lam: f64) -> PyResult<Vec<Vec<f64>>> {
    let r = closed_form::soft_threshold(&to_grid(y)?, lam).map_err(py_err)?;
    Ok(grid_to_rows(&r.estimate))
}

#[pyfunction]
fn hard_threshold(y: Vec<Vec<f64>>, lam: f64) -> PyResult<Vec<Vec<f64>>> {
    let r = closed_form::hard_threshold(&to_grid(y)?, lam).map_err(py_err)?;
    Ok(grid_to_rows(&r.estimate))
}

/// Non-local means and its derivative in direction `d`.
#[pyfunction]
#[pyo3(signature = (y, d, h, s = 7, b = 1, sigma_noise = 0.0))]
fn nlm_jvp(
    y: Vec<Vec<f64>>,
    d: Vec<Vec<f64>>,
    h: f64,
    s: usize,
    b: usize,
    sigma_noise: f64,
) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let params = NlmParams { s, b, h, sigma_noise };
    let out = nlm::nlm_with_jvp(&to_grid(y)?, &to_grid(d)?, &params).map_err(py_err)?;
    Ok((grid_to_rows(&out.estimate), grid_to_rows(&out.jvp)))
}

/// Degrades `x0` (`task` is denoise, inpaint or deblur), restores it with
/// `estimator` and returns the estimate with its re-fitting.
#[pyfunction]
#[pyo3(signature = (
    x0, estimator, param, task = "denoise", sigma = 0.0, seed = 0, mask_fraction = 0.25, blur = 1.5,
    s = 7, b = 1, max_iters = 20000, rel_tol = 1e-9, jvp = "algorithmic"
))]
#[allow(clippy::too_many_arguments)]
fn restore(
    x0: Vec<Vec<f64>>,
    estimator: &str,
    param: f64,
    task: &str,
    sigma: f64,
    seed: u64,
    mask_fraction: f64,
    blur: f64,
    s: usize,
    b: usize,
    max_iters: usize,
    rel_tol: f64,
    jvp: &str,
) -> PyResult<RefitOutput> {
    let x0 = to_grid(x0)?;
    let spec = match task {
        "denoise" => DegradationSpec::awgn(sigma, seed),
        "inpaint" => DegradationSpec::mask(mask_fraction, sigma, seed),
        "deblur" => DegradationSpec::blur(blur, sigma, seed),
        t => return Err(PyValueError::new_err(format!("unknown task '{t}'"))),
    };
    let (y, phi) = exp::degrade(&x0, &spec).map_err(py_err)?;
    let settings = EstimatorSettings {
        nlm_s: s,
        nlm_b: b,
        sigma_noise: sigma,
        max_iters,
        rel_tol,
        jvp: parse::<JvpChoice>(jvp)?,
        ..EstimatorSettings::new(parse::<EstimatorId>(estimator)?, param)
    };
    let run = run_refit(&settings, &phi, &y).map_err(py_err)?;
    Ok(RefitOutput {
        observation: grid_to_rows(&y),
        estimate: grid_to_rows(&run.estimate),
        refit: grid_to_rows(&run.refit),
        rho: run.rho,
        iters: run.iters,
        converged: run.converged,
    })
}

#[pyfunction]
fn psnr(x: Vec<Vec<f64>>, reference: Vec<Vec<f64>>) -> PyResult<f64> {
    exp::psnr(&to_grid(x)?, &to_grid(reference)?).map_err(py_err)
}

#[pyfunction]
fn ssim(x: Vec<Vec<f64>>, reference: Vec<Vec<f64>>) -> PyResult<f64> {
    exp::ssim(&to_grid(x)?, &to_grid(reference)?).map_err(py_err)
}

/// Runs a property suite; returns `(all_passed, [(name, value, bound, passed)])`.
#[pyfunction]
#[pyo3(signature = (suite, seed = 7, draws = 20000))]
fn validate(suite: &str, seed: u64, draws: usize) -> PyResult<(bool, Vec<(String, f64, f64, bool)>)> {
    let suite: Suite = parse(suite)?;
    let checks = run_suite(
        suite,
        &ValidateOptions {
            seed,
            draws,
            beta: None,
        },
    )
    .map_err(py_err)?;
    let ok = all_passed(&checks);
    Ok((
        ok,
        checks
            .into_iter()
            .map(|c| (c.name, c.value, c.bound, c.passed))
            .collect(),
    ))
}

#[pymodule]
fn clear_refit(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<RefitOutput>()?;
    m.add_function(wrap_pyfunction!(phantom, m)?)?;
    m.add_function(wrap_pyfunction!(soft_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(hard_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(nlm_jvp, m)?)?;
    m.add_function(wrap_pyfunction!(restore, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    Ok(())
}
