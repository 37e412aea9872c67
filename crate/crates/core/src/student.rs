//! The multivariate Student family as a λ-exponential family, with the
//! Gaussian family as the `ν = ∞` branch.
//!
//! Degrees of freedom are a plain `f64`; `f64::INFINITY` selects the
//! Gaussian formulas (λ = 0, α = 1, Shannon entropy).

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution};

use crate::duality::Coupling;
use crate::error::{Error, Result};
use crate::numerics::{cholesky, digamma, log_gamma, min_eigenvalue, standard_normal_vector, symmetrize, SpdMatrix};

/// Below this distance from 1 the Rényi entropy is evaluated as its
/// Shannon limit; the generic expression cancels catastrophically there.
const SHANNON_WINDOW: f64 = 1e-9;

/// `λ = -2/(ν+d)`, zero for the Gaussian.
pub fn lambda_for(nu: f64, d: usize) -> f64 {
    if nu.is_infinite() {
        0.0
    } else {
        -2.0 / (nu + d as f64)
    }
}

/// Escort exponent `α = 1 + 2/(ν+d)` tied to a family with `ν` degrees of freedom.
pub fn escort_exponent(nu: f64, d: usize) -> f64 {
    1.0 - lambda_for(nu, d)
}

/// `log Z_ν = log Γ(ν/2) - log Γ((ν+d)/2) + (d/2)·log(νπ)`; `(d/2)·log(2π)` for `ν = ∞`.
pub fn log_normalizer(nu: f64, d: usize) -> Result<f64> {
    let df = d as f64;
    if nu.is_infinite() {
        return Ok(0.5 * df * (2.0 * PI).ln());
    }
    Ok(log_gamma(0.5 * nu)? - log_gamma(0.5 * (nu + df))? + 0.5 * df * (nu * PI).ln())
}

fn check_nu(nu: f64) -> Result<()> {
    if !(nu > 0.0) || nu.is_nan() {
        return Err(Error::InvalidArgument(format!("degrees of freedom must be positive, got {nu}")));
    }
    Ok(())
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentParams {
    pub nu: f64,
    pub mu: DVector<f64>,
    pub sigma: SpdMatrix,
}

impl StudentParams {
    pub fn new(nu: f64, mu: DVector<f64>, sigma: SpdMatrix) -> Result<Self> {
        check_nu(nu)?;
        check_dim(mu.len(), sigma.dim())?;
        Ok(Self { nu, mu, sigma })
    }

    pub fn gaussian(mu: DVector<f64>, sigma: SpdMatrix) -> Result<Self> {
        Self::new(f64::INFINITY, mu, sigma)
    }

    /// Standard member: `μ = 0`, `Σ = I`.
    pub fn standard(nu: f64, d: usize) -> Result<Self> {
        Self::new(nu, DVector::zeros(d), SpdMatrix::identity(d))
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn is_gaussian(&self) -> bool {
        self.nu.is_infinite()
    }

    pub fn lambda(&self) -> f64 {
        lambda_for(self.nu, self.dim())
    }

    pub fn alpha(&self) -> f64 {
        escort_exponent(self.nu, self.dim())
    }

    pub fn log_normalizer(&self) -> f64 {
        log_normalizer(self.nu, self.dim()).expect("nu > 0 checked at construction")
    }

    /// `(x-μ)ᵀ Σ⁻¹ (x-μ)`.
    pub fn mahalanobis(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        self.sigma.quad_form(&(x - &self.mu))
    }

    /// Covariance `ν/(ν-2)·Σ`, defined for `ν > 2`.
    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        if self.is_gaussian() {
            return Ok(self.sigma.matrix().clone());
        }
        if self.nu <= 2.0 {
            return Err(Error::InvalidArgument(format!("covariance needs nu > 2, got {}", self.nu)));
        }
        Ok(self.sigma.matrix() * (self.nu / (self.nu - 2.0)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NaturalParams {
    pub theta1: DVector<f64>,
    pub theta2: DMatrix<f64>,
    pub lambda: f64,
}

impl NaturalParams {
    pub fn dim(&self) -> usize {
        self.theta1.len()
    }

    /// `⟨ϑ, T(x)⟩ = θ₁ᵀx + xᵀθ₂x`.
    pub fn pair_point(&self, x: &DVector<f64>) -> f64 {
        self.theta1.dot(x) + (x.transpose() * &self.theta2 * x)[(0, 0)]
    }

    /// `⟨ϑ, T̄⟩ = θ₁ᵀm1 + ⟨θ₂, M2⟩_F`.
    pub fn pair_moments(&self, m: &SufficientMoments) -> f64 {
        self.theta1.dot(&m.m1) + self.theta2.component_mul(&m.m2).sum()
    }

    /// `-θ₂`, which must be positive definite.
    fn neg_theta2(&self) -> Result<SpdMatrix> {
        cholesky(&(-&self.theta2))
    }
}

/// First and second moments `(E[x], E[xxᵀ])`.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientMoments {
    pub m1: DVector<f64>,
    pub m2: DMatrix<f64>,
}

impl SufficientMoments {
    pub fn dim(&self) -> usize {
        self.m1.len()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        symmetrize(&(&self.m2 - &self.m1 * self.m1.transpose()))
    }

    /// Empirical moments of a sample.
    pub fn from_samples(samples: &[DVector<f64>]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty sample".into()))?;
        let d = first.len();
        let mut m1 = DVector::zeros(d);
        let mut m2 = DMatrix::zeros(d, d);
        for x in samples {
            check_dim(d, x.len())?;
            m1 += x;
            m2.ger(1.0, x, x, 1.0);
        }
        let n = samples.len() as f64;
        Ok(Self { m1: m1 / n, m2: m2 / n })
    }
}

fn require_finite_nu(nu: f64) -> Result<()> {
    check_nu(nu)?;
    if nu.is_infinite() {
        return Err(Error::GaussianChart);
    }
    Ok(())
}

pub fn natural_from_params(p: &StudentParams) -> Result<NaturalParams> {
    require_finite_nu(p.nu)?;
    let df = p.dim() as f64;
    let s = p.sigma.quad_form(&p.mu)?;
    let scale = (p.nu + df) / (p.nu + s);
    let sigma_inv = p.sigma.inverse();
    Ok(NaturalParams {
        theta1: p.sigma.solve(&p.mu)? * scale,
        theta2: sigma_inv * (-0.5 * scale),
        lambda: p.lambda(),
    })
}

/// `2(ν+d) + θ₁ᵀθ₂⁻¹θ₁`; positive exactly on the domain of `φ_λ`.
pub fn domain_value(n: &NaturalParams, nu: f64) -> Result<f64> {
    let a = n.neg_theta2()?;
    check_dim(a.dim(), n.theta1.len())?;
    Ok(2.0 * (nu + n.dim() as f64) - a.quad_form(&n.theta1)?)
}

fn checked_domain(n: &NaturalParams, nu: f64) -> Result<(SpdMatrix, f64)> {
    require_finite_nu(nu)?;
    let expected = lambda_for(nu, n.dim());
    if (n.lambda - expected).abs() > 1e-12 * expected.abs() {
        return Err(Error::InvalidArgument(format!(
            "natural parameters carry lambda {} but nu = {nu} implies {expected}",
            n.lambda
        )));
    }
    let a = n.neg_theta2()?;
    let value = domain_value(n, nu)?;
    if !(value > 0.0) {
        return Err(Error::DomainViolation { value });
    }
    Ok((a, value))
}

pub fn params_from_natural(n: &NaturalParams, nu: f64) -> Result<StudentParams> {
    let (a, dval) = checked_domain(n, nu)?;
    // θ₂⁻¹ = -A⁻¹ with A = -θ₂
    let mu = a.solve(&n.theta1)? * 0.5;
    let sigma = cholesky(&(a.inverse() * (dval / (4.0 * nu))))?;
    StudentParams::new(nu, mu, sigma)
}

/// `φ_λ(ϑ)` in closed form.
pub fn log_partition(n: &NaturalParams, nu: f64) -> Result<f64> {
    let (a, dval) = checked_domain(n, nu)?;
    let df = n.dim() as f64;
    Ok(-0.5 * df * (4.0 * nu).ln() - 0.5 * a.logdet() + 0.5 * (nu + df) * (2.0 * (nu + df)).ln()
        - 0.5 * nu * dval.ln()
        + log_normalizer(nu, n.dim())?)
}

/// Log-density written as `c_λ(ϑ, T(x)) - φ_λ(ϑ)`.
pub fn lambda_log_density(n: &NaturalParams, nu: f64, x: &DVector<f64>) -> Result<f64> {
    check_dim(n.dim(), x.len())?;
    let phi = log_partition(n, nu)?;
    Ok(Coupling::new(n.lambda).from_inner(n.pair_point(x)) - phi)
}

/// Rényi entropy `H_α(p) = (1/(1-α))·log ∫p^α`; Shannon entropy at `α = 1`.
pub fn renyi_entropy(p: &StudentParams, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("entropy order must be positive, got {alpha}")));
    }
    let df = p.dim() as f64;
    let half_logdet = 0.5 * p.sigma.logdet();
    if p.is_gaussian() {
        let base = half_logdet + 0.5 * df * (2.0 * PI).ln();
        if (alpha - 1.0).abs() < SHANNON_WINDOW {
            return Ok(base + 0.5 * df);
        }
        return Ok(base + 0.5 * df * alpha.ln() / (alpha - 1.0));
    }
    let nu = p.nu;
    let log_z = log_normalizer(nu, p.dim())?;
    if (alpha - 1.0).abs() < SHANNON_WINDOW {
        let a = 0.5 * (nu + df);
        return Ok(half_logdet + log_z + a * (digamma(a) - digamma(0.5 * nu)));
    }
    let nu_prime = alpha * (nu + df) - df;
    if !(nu_prime > 0.0) {
        return Err(Error::EntropyDivergent { value: nu_prime });
    }
    let log_integral = log_normalizer(nu_prime, p.dim())? + 0.5 * df * (nu / nu_prime).ln() + (1.0 - alpha) * half_logdet
        - alpha * log_z;
    Ok(log_integral / (1.0 - alpha))
}

/// `ψ_λ(ϑ) = -H_α(q_ϑ)` with the family's own `α`.
pub fn conjugate_log_partition(p: &StudentParams) -> Result<f64> {
    Ok(-renyi_entropy(p, p.alpha())?)
}

/// Degrees of freedom of the `α`-escort of a `ν_p` Student, `α` set by `ν_q`.
pub fn escort_nu(nu_p: f64, nu_q: f64, d: usize) -> f64 {
    if nu_p.is_infinite() {
        return f64::INFINITY;
    }
    if nu_q.is_infinite() {
        return nu_p;
    }
    let df = d as f64;
    nu_p + 2.0 * (nu_p + df) / (nu_q + df)
}

/// Whether the escort of a `ν_p` target has finite second moments for the `ν_q` family.
pub fn is_compatible(nu_p: f64, nu_q: f64, d: usize) -> bool {
    escort_nu(nu_p, nu_q, d) > 2.0
}

/// The `α`-escort `p^α / ∫p^α` with `α = 1 + 2/(ν_q+d)`.
pub fn escort(p: &StudentParams, nu_q: f64) -> Result<StudentParams> {
    check_nu(nu_q)?;
    let alpha = escort_exponent(nu_q, p.dim());
    if p.is_gaussian() {
        return StudentParams::gaussian(p.mu.clone(), p.sigma.scaled(1.0 / alpha)?);
    }
    let nu_a = escort_nu(p.nu, nu_q, p.dim());
    StudentParams::new(nu_a, p.mu.clone(), p.sigma.scaled(p.nu / nu_a)?)
}

/// `(E[x], E[xxᵀ])` under the escort of `p` for the `ν_q` family.
pub fn escort_moments(p: &StudentParams, nu_q: f64) -> Result<SufficientMoments> {
    check_nu(nu_q)?;
    let outer = &p.mu * p.mu.transpose();
    if p.is_gaussian() {
        let alpha = escort_exponent(nu_q, p.dim());
        return Ok(SufficientMoments { m1: p.mu.clone(), m2: p.sigma.matrix() / alpha + outer });
    }
    let nu_a = escort_nu(p.nu, nu_q, p.dim());
    if !(nu_a > 2.0) {
        return Err(Error::Incompatible { value: nu_a });
    }
    Ok(SufficientMoments { m1: p.mu.clone(), m2: p.sigma.matrix() * (p.nu / (nu_a - 2.0)) + outer })
}

/// Inverse of within-family [`escort_moments`]: `μ = m1`, `Σ = M2 - m1m1ᵀ`.
pub fn params_from_escort_moments(nu: f64, m: &SufficientMoments) -> Result<StudentParams> {
    params_from_escort_moments_with_floor(nu, m, None)
}

/// As [`params_from_escort_moments`], optionally raising eigenvalues of the
/// covariance candidate to `floor` before factorizing.
pub fn params_from_escort_moments_with_floor(nu: f64, m: &SufficientMoments, floor: Option<f64>) -> Result<StudentParams> {
    check_nu(nu)?;
    check_dim(m.dim(), m.m2.nrows())?;
    let mut cov = m.covariance();
    if let Some(floor) = floor {
        let eig = cov.clone().symmetric_eigen();
        let clamped = eig.eigenvalues.map(|v| v.max(floor));
        cov = symmetrize(&(&eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose()));
    }
    let sigma = cholesky(&cov).map_err(|_| Error::NonPdMoments { min_eigenvalue: min_eigenvalue(&cov) })?;
    StudentParams::new(nu, m.m1.clone(), sigma)
}

pub fn log_density(p: &StudentParams, x: &DVector<f64>) -> Result<f64> {
    let s = p.mahalanobis(x)?;
    let base = -p.log_normalizer() - 0.5 * p.sigma.logdet();
    if p.is_gaussian() {
        return Ok(base - 0.5 * s);
    }
    Ok(base - 0.5 * (p.nu + p.dim() as f64) * (s / p.nu).ln_1p())
}

pub fn grad_log_density(p: &StudentParams, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim(p.dim(), x.len())?;
    let w = p.sigma.solve(&(x - &p.mu))?;
    if p.is_gaussian() {
        return Ok(-w);
    }
    let s = (x - &p.mu).dot(&w);
    let df = p.dim() as f64;
    Ok(w * (-(p.nu + df) / (p.nu + s)))
}

/// Draws one point: `μ + Lz·√(ν/w)` with `w ~ χ²_ν`.
pub fn sample_one<R: Rng + ?Sized>(p: &StudentParams, rng: &mut R) -> DVector<f64> {
    let z = standard_normal_vector(p.dim(), rng);
    let lz = p.sigma.mul_factor(&z);
    if p.is_gaussian() {
        return &p.mu + lz;
    }
    let chi = ChiSquared::new(p.nu).expect("nu > 0 checked at construction");
    let w: f64 = chi.sample(rng);
    &p.mu + lz * (p.nu / w).sqrt()
}

pub fn sample<R: Rng + ?Sized>(p: &StudentParams, n: usize, rng: &mut R) -> Result<Vec<DVector<f64>>> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    Ok((0..n).map(|_| sample_one(p, rng)).collect())
}
