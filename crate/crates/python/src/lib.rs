use lambda_family::divergence::renyi_divergence_closed;
use lambda_family::duality::coupling_eval;
use lambda_family::inference::{self, mle_moment_match, OnlineMle, VIIterate};
use lambda_family::numerics::{SeededRng, SpdMatrix};
use lambda_family::samplers::StudentTarget;
use lambda_family::student::{self, natural_from_params, renyi_entropy, SufficientMoments};
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn py_err(e: lambda_family::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn points(data: Vec<Vec<f64>>) -> Vec<DVector<f64>> {
    data.into_iter().map(DVector::from_vec).collect()
}

/// Multivariate Student distribution; `nu = float("inf")` is the Gaussian.
#[pyclass(name = "StudentParams", module = "lambda_family_py", from_py_object)]
#[derive(Clone)]
struct PyStudent {
    inner: student::StudentParams,
}

#[pymethods]
impl PyStudent {
    #[new]
    fn new(nu: f64, mu: Vec<f64>, sigma: Vec<Vec<f64>>) -> PyResult<Self> {
        let sigma = SpdMatrix::new(from_rows(sigma)?).map_err(py_err)?;
        let inner = student::StudentParams::new(nu, DVector::from_vec(mu), sigma).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn standard(nu: f64, d: usize) -> PyResult<Self> {
        Ok(Self { inner: student::StudentParams::standard(nu, d).map_err(py_err)? })
    }

    #[getter]
    fn nu(&self) -> f64 {
        self.inner.nu
    }

    #[getter]
    fn mu(&self) -> Vec<f64> {
        to_vec(&self.inner.mu)
    }

    #[getter]
    fn sigma(&self) -> Vec<Vec<f64>> {
        to_rows(self.inner.sigma.matrix())
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// `λ = -2/(ν+d)`.
    #[getter]
    fn lam(&self) -> f64 {
        self.inner.lambda()
    }

    /// Escort exponent `α = 1 - λ`.
    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha()
    }

    fn log_density(&self, x: Vec<f64>) -> PyResult<f64> {
        student::log_density(&self.inner, &DVector::from_vec(x)).map_err(py_err)
    }

    fn grad_log_density(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(to_vec(&student::grad_log_density(&self.inner, &DVector::from_vec(x)).map_err(py_err)?))
    }

    #[pyo3(signature = (n, seed=0))]
    fn sample(&self, n: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        let mut rng = SeededRng::new(seed).replicate(0);
        Ok(student::sample(&self.inner, n, &mut rng).map_err(py_err)?.iter().map(to_vec).collect())
    }

    /// Escort with respect to a family of `nu_q` degrees of freedom.
    fn escort(&self, nu_q: f64) -> PyResult<Self> {
        Ok(Self { inner: student::escort(&self.inner, nu_q).map_err(py_err)? })
    }

    /// `(E[x], E[xxᵀ])` under the escort.
    fn escort_moments(&self, nu_q: f64) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let m = student::escort_moments(&self.inner, nu_q).map_err(py_err)?;
        Ok((to_vec(&m.m1), to_rows(&m.m2)))
    }

    /// Natural parameters `(θ₁, θ₂)`.
    fn natural(&self) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let n = natural_from_params(&self.inner).map_err(py_err)?;
        Ok((to_vec(&n.theta1), to_rows(&n.theta2)))
    }

    fn log_partition(&self) -> PyResult<f64> {
        let n = natural_from_params(&self.inner).map_err(py_err)?;
        student::log_partition(&n, self.inner.nu).map_err(py_err)
    }

    fn renyi_entropy(&self, alpha: f64) -> PyResult<f64> {
        renyi_entropy(&self.inner, alpha).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("StudentParams(nu={}, d={})", self.inner.nu, self.inner.dim())
    }
}

/// `RD_α(pi, q)` with `α` set by `q`'s family (KL for a Gaussian `q`).
#[pyfunction]
fn renyi_divergence(pi: &PyStudent, q: &PyStudent) -> PyResult<f64> {
    Ok(renyi_divergence_closed(&pi.inner, &q.inner).map_err(py_err)?.value)
}

#[pyfunction]
fn coupling(lam: f64, u: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
    coupling_eval(lam, &u, &v).map_err(py_err)
}

#[pyfunction]
fn escort_nu(nu_p: f64, nu_q: f64, d: usize) -> f64 {
    student::escort_nu(nu_p, nu_q, d)
}

#[pyfunction]
fn is_compatible(nu_p: f64, nu_q: f64, d: usize) -> bool {
    student::is_compatible(nu_p, nu_q, d)
}

/// Family member whose escort has the given moments.
#[pyfunction]
fn params_from_escort_moments(nu: f64, m1: Vec<f64>, m2: Vec<Vec<f64>>) -> PyResult<PyStudent> {
    let m = SufficientMoments { m1: DVector::from_vec(m1), m2: from_rows(m2)? };
    Ok(PyStudent { inner: student::params_from_escort_moments(nu, &m).map_err(py_err)? })
}

fn iterates(its: Vec<VIIterate>) -> Vec<PyStudent> {
    its.into_iter().map(|it| PyStudent { inner: it.params }).collect()
}

/// Runs a VI algorithm; returns the initialization followed by every iterate.
///
/// `method` is `"exact"`, `"mala"` or `"scaled_mala"`.
#[pyfunction]
#[pyo3(signature = (target, family_nu, n_iters, method="exact", n_per_iter=None, seed=0))]
fn vi(target: &PyStudent, family_nu: f64, n_iters: usize, method: &str, n_per_iter: Option<usize>, seed: u64) -> PyResult<Vec<PyStudent>> {
    let d = target.inner.dim();
    let n = n_per_iter.unwrap_or_else(|| inference::default_samples_per_iter(d));
    let mut rng = SeededRng::new(seed).replicate(0);
    let oracle = StudentTarget::new(target.inner.clone());
    let its = match method {
        "exact" => inference::vi_exact_escort(&target.inner, family_nu, n, n_iters, &mut rng),
        "mala" => inference::vi_plain_mala(&oracle, family_nu, n, n_iters, &mut rng),
        "scaled_mala" => inference::vi_scaled_mala(&oracle, family_nu, n, n_iters, &mut rng),
        other => return Err(PyValueError::new_err(format!("unknown method {other:?}"))),
    };
    Ok(iterates(its.map_err(py_err)?))
}

/// Moment-matched fit and its likelihood lower bound.
#[pyfunction]
fn mle(data: Vec<Vec<f64>>, nu: f64) -> PyResult<(PyStudent, f64)> {
    let fit = mle_moment_match(&points(data), nu).map_err(py_err)?;
    Ok((PyStudent { inner: fit.params }, fit.bound))
}

/// Streams `data` through the online estimator and returns the final fit.
#[pyfunction]
fn mle_online(data: Vec<Vec<f64>>, nu: f64) -> PyResult<PyStudent> {
    let xs = points(data);
    let d = xs.first().map_or(0, |x| x.len());
    let init = student::StudentParams::standard(nu, d).map_err(py_err)?;
    let mut est = OnlineMle::new(nu, init).map_err(py_err)?;
    for x in &xs {
        est.push(x).map_err(py_err)?;
    }
    Ok(PyStudent { inner: est.params().clone() })
}

#[pymodule]
fn lambda_family_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyStudent>()?;
    m.add_function(wrap_pyfunction!(renyi_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(coupling, m)?)?;
    m.add_function(wrap_pyfunction!(escort_nu, m)?)?;
    m.add_function(wrap_pyfunction!(is_compatible, m)?)?;
    m.add_function(wrap_pyfunction!(params_from_escort_moments, m)?)?;
    m.add_function(wrap_pyfunction!(vi, m)?)?;
    m.add_function(wrap_pyfunction!(mle, m)?)?;
    m.add_function(wrap_pyfunction!(mle_online, m)?)?;
    Ok(())
}
