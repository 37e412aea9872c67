//! The coupling `c_λ(u, v) = (1/λ)·log(1 + λ⟨u, v⟩)` and one-dimensional
//! λ-exponential densities evaluated by quadrature.
//!
//! The 1-D machinery here is the reference every closed form in the crate
//! is checked against: log-partitions, escort densities and Fenchel–Young
//! residuals computed without any of the Student algebra.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::{integrate, Domain, QuadOptions};

pub const DEFAULT_QUAD_TOL: f64 = 1e-10;

/// `log(s)` with `log(s) = -∞` for `s <= 0`.
pub fn log_ext(s: f64) -> f64 {
    if s > 0.0 {
        s.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// `exp(t)` with `exp(-∞) = 0`.
pub fn exp_ext(t: f64) -> f64 {
    if t == f64::NEG_INFINITY {
        0.0
    } else {
        t.exp()
    }
}

/// The λ-coupling. `λ = 0` is the Euclidean inner product.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coupling {
    pub lambda: f64,
}

impl Coupling {
    pub fn new(lambda: f64) -> Self {
        Self { lambda }
    }

    /// Coupling value given the inner product `⟨u, v⟩`; `-∞` whenever
    /// `1 + λ⟨u, v⟩ <= 0`, for either sign of `λ`.
    pub fn from_inner(&self, inner: f64) -> f64 {
        if self.lambda == 0.0 {
            return inner;
        }
        let arg = 1.0 + self.lambda * inner;
        if arg > 0.0 {
            arg.ln() / self.lambda
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn eval(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        if u.len() != v.len() {
            return Err(Error::DimensionMismatch { expected: u.len(), got: v.len() });
        }
        let inner: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
        Ok(self.from_inner(inner))
    }
}

pub fn coupling_eval(lambda: f64, u: &[f64], v: &[f64]) -> Result<f64> {
    Coupling::new(lambda).eval(u, v)
}

/// `c_λ(s·v1 + (1-s)·v2, u) - [s·c_λ(v1, u) + (1-s)·c_λ(v2, u)]`.
///
/// Nonnegative for `λ > 0` (concave), nonpositive for `λ < 0` (convex) and
/// zero for `λ = 0`.
pub fn coupling_convexity_residual(lambda: f64, u: &[f64], v1: &[f64], v2: &[f64], s: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::InvalidArgument(format!("mixing weight must lie in [0, 1], got {s}")));
    }
    if v1.len() != v2.len() {
        return Err(Error::DimensionMismatch { expected: v1.len(), got: v2.len() });
    }
    let c = Coupling::new(lambda);
    let mix: Vec<f64> = v1.iter().zip(v2).map(|(a, b)| s * a + (1.0 - s) * b).collect();
    let f1 = c.eval(v1, u)?;
    let f2 = c.eval(v2, u)?;
    if lambda == 0.0 {
        // exact: the inner product is linear
        return Ok(0.0);
    }
    Ok(c.eval(&mix, u)? - (s * f1 + (1.0 - s) * f2))
}

/// `φ + ψ - c`; zero exactly at a `c_λ`-subgradient pair.
pub fn fenchel_young_residual(phi: f64, psi: f64, coupling_value: f64) -> f64 {
    phi + psi - coupling_value
}

/// A scalar λ-exponential family `x ↦ exp(c_λ(θ, T(x)) - φ_λ(θ))`.
#[derive(Clone)]
pub struct Scalar1DFamily {
    pub lambda: f64,
    pub statistic: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub theta: f64,
    pub domain: Domain,
    /// Interior points where the integrand has a kink (support edges).
    pub breakpoints: Vec<f64>,
}

impl std::fmt::Debug for Scalar1DFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scalar1DFamily")
            .field("lambda", &self.lambda)
            .field("theta", &self.theta)
            .field("domain", &self.domain)
            .field("breakpoints", &self.breakpoints)
            .finish()
    }
}

impl Scalar1DFamily {
    pub fn new<T>(lambda: f64, statistic: T, theta: f64, domain: Domain) -> Self
    where
        T: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self { lambda, statistic: Arc::new(statistic), theta, domain, breakpoints: Vec::new() }
    }

    pub fn with_breakpoints(mut self, breakpoints: Vec<f64>) -> Self {
        self.breakpoints = breakpoints;
        self
    }

    /// `c_λ(θ, T(x))`; `-∞` outside the support.
    pub fn log_kernel(&self, x: f64) -> f64 {
        Coupling::new(self.lambda).from_inner(self.theta * (self.statistic)(x))
    }

    pub fn in_support(&self, x: f64) -> bool {
        1.0 + self.lambda * self.theta * (self.statistic)(x) > 0.0
    }
}

/// `log ∫ exp(c_λ(θ, T(x))) dx`.
pub fn log_partition_1d(family: &Scalar1DFamily, quad_tol: f64) -> Result<f64> {
    let r = integrate(
        |x| exp_ext(family.log_kernel(x)),
        family.domain,
        &family.breakpoints,
        QuadOptions::with_tol(quad_tol),
    )?;
    if !(r.value > 0.0) || !r.value.is_finite() {
        return Err(Error::DivergentIntegral(format!("normalizer evaluated to {}", r.value)));
    }
    Ok(r.value.ln())
}

/// A normalized density on the real line: `x ↦ exp(alpha·log_kernel(x) - log_norm)`.
#[derive(Clone)]
pub struct Density1d {
    family: Scalar1DFamily,
    alpha: f64,
    log_norm: f64,
}

impl Density1d {
    pub fn pdf(&self, x: f64) -> f64 {
        if !in_domain(&self.family.domain, x) {
            return 0.0;
        }
        let k = self.family.log_kernel(x);
        if k == f64::NEG_INFINITY {
            return 0.0;
        }
        (self.alpha * k - self.log_norm).exp()
    }

    pub fn log_normalizer(&self) -> f64 {
        self.log_norm
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn family(&self) -> &Scalar1DFamily {
        &self.family
    }
}

fn in_domain(domain: &Domain, x: f64) -> bool {
    match *domain {
        Domain::Interval(a, b) => x >= a && x <= b,
        Domain::RealLine { .. } => x.is_finite(),
    }
}

pub fn density_1d(family: &Scalar1DFamily, quad_tol: f64) -> Result<Density1d> {
    escort_density_1d(family, 1.0, quad_tol)
}

/// Escort `q(x)^α / ∫q^α` of the family member.
///
/// Since `q = exp(c - φ)`, the escort only depends on `exp(α·c)`, so it is
/// normalized directly without going through `φ`.
pub fn escort_density_1d(family: &Scalar1DFamily, alpha: f64, quad_tol: f64) -> Result<Density1d> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("escort exponent must be positive, got {alpha}")));
    }
    let r = integrate(
        |x| {
            let k = family.log_kernel(x);
            if k == f64::NEG_INFINITY {
                0.0
            } else {
                (alpha * k).exp()
            }
        },
        family.domain,
        &family.breakpoints,
        QuadOptions::with_tol(quad_tol),
    )?;
    if !(r.value > 0.0) || !r.value.is_finite() {
        return Err(Error::DivergentIntegral(format!("q^alpha integrates to {}", r.value)));
    }
    Ok(Density1d { family: family.clone(), alpha, log_norm: r.value.ln() })
}

/// Integral of a density over its family's domain, for normalization checks.
pub fn integrate_density(density: &Density1d, quad_tol: f64) -> Result<f64> {
    let fam = density.family();
    Ok(integrate(|x| density.pdf(x), fam.domain, &fam.breakpoints, QuadOptions::with_tol(quad_tol))?.value)
}
