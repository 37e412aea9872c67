//! Dense linear algebra on SPD matrices, special functions, and seeded
//! random streams.
//!
//! Every scale matrix in the crate is held as an [`SpdMatrix`], which keeps
//! the lower Cholesky factor next to the matrix so that solves, log
//! determinants and Gaussian draws all share one factorization.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// A symmetric positive definite matrix stored with its Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    matrix: DMatrix<f64>,
    chol: DMatrix<f64>,
}

impl SpdMatrix {
    /// Factorizes `m`. The upper triangle is ignored; the stored matrix is
    /// the symmetrization of `m`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        cholesky(&m)
    }

    pub fn identity(d: usize) -> Self {
        Self {
            matrix: DMatrix::identity(d, d),
            chol: DMatrix::identity(d, d),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        cholesky(&DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Lower-triangular factor `L` with `L Lᵀ = M`.
    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn logdet(&self) -> f64 {
        2.0 * self.chol.diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    /// Solves `M x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.dim(), b.len())?;
        let y = self.forward(b);
        Ok(self.backward(&y))
    }

    /// `vᵀ M⁻¹ v`, always nonnegative.
    pub fn quad_form(&self, v: &DVector<f64>) -> Result<f64> {
        check_dim(self.dim(), v.len())?;
        Ok(self.forward(v).norm_squared())
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut inv = DMatrix::zeros(d, d);
        for j in 0..d {
            let mut e = DVector::zeros(d);
            e[j] = 1.0;
            let col = self.backward(&self.forward(&e));
            inv.set_column(j, &col);
        }
        symmetrize(&inv)
    }

    /// `c·M` for `c > 0`, reusing the factorization.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!("scale factor must be positive, got {c}")));
        }
        Ok(Self {
            matrix: &self.matrix * c,
            chol: &self.chol * c.sqrt(),
        })
    }

    /// `L z`, used to colour standard normal draws.
    pub fn mul_factor(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.chol * z
    }

    /// `L⁻¹ v`.
    pub fn whiten(&self, v: &DVector<f64>) -> DVector<f64> {
        self.forward(v)
    }

    fn forward(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal")
    }

    fn backward(&self, y: &DVector<f64>) -> DVector<f64> {
        self.chol
            .tr_solve_lower_triangular(y)
            .expect("cholesky factor has a positive diagonal")
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Cholesky factorization of a symmetric matrix.
///
/// Reports the first pivot that is not strictly positive when `m` is not
/// positive definite.
pub fn cholesky(m: &DMatrix<f64>) -> Result<SpdMatrix> {
    let d = m.nrows();
    if m.ncols() != d {
        return Err(Error::DimensionMismatch { expected: d, got: m.ncols() });
    }
    let sym = symmetrize(m);
    let mut l = DMatrix::<f64>::zeros(d, d);
    for j in 0..d {
        let mut pivot = sym[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j, value: pivot });
        }
        let ljj = pivot.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..d {
            let mut s = sym[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(SpdMatrix { matrix: sym, chol: l })
}

pub fn solve_spd(m: &SpdMatrix, b: &DVector<f64>) -> Result<DVector<f64>> {
    m.solve(b)
}

pub fn logdet(m: &SpdMatrix) -> f64 {
    m.logdet()
}

pub fn quad_form(m: &SpdMatrix, v: &DVector<f64>) -> Result<f64> {
    m.quad_form(v)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// `log Γ(x)` for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::InvalidArgument(format!("log_gamma requires x > 0, got {x}")));
    }
    Ok(statrs::function::gamma::ln_gamma(x))
}

/// Digamma `ψ(x) = d/dx log Γ(x)`, needed for Shannon entropies.
pub fn digamma(x: f64) -> f64 {
    statrs::function::gamma::digamma(x)
}

/// `log Σ exp(v_i)` with max-subtraction; `-∞` for an empty or all `-∞` slice.
pub fn logsumexp(v: &[f64]) -> f64 {
    let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return top;
    }
    top + v.iter().map(|x| (x - top).exp()).sum::<f64>().ln()
}

/// Reproducible random streams keyed by `(seed, run, iteration)`.
///
/// Each key maps to an independent ChaCha8 stream, so replicates can be
/// generated in any order or on any thread and still produce the same draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeededRng {
    seed: u64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Stream for a `(run, iteration)` pair.
    pub fn stream(&self, run: u32, iteration: u32) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((run as u64) << 32) | iteration as u64);
        rng
    }

    /// Stream for a whole replicate (iteration slot 0).
    pub fn replicate(&self, run: u32) -> ChaCha8Rng {
        self.stream(run, 0)
    }
}

/// Random SPD matrix `Q D Qᵀ` with condition number `kappa`.
///
/// `Q` comes from the QR factorization of a standard Gaussian matrix with
/// the signs of `R`'s diagonal folded into `Q`; the eigenvalues in `D` are
/// geometrically spaced from 1 to `kappa`.
pub fn spd_with_condition<R: Rng + ?Sized>(d: usize, kappa: f64, rng: &mut R) -> Result<SpdMatrix> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    if !(kappa >= 1.0) || !kappa.is_finite() {
        return Err(Error::InvalidArgument(format!("condition number must be >= 1, got {kappa}")));
    }
    if d == 1 {
        return Ok(SpdMatrix::identity(1));
    }
    let g = DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let eig = DVector::from_fn(d, |i, _| kappa.powf(i as f64 / (d - 1) as f64));
    let m = &q * DMatrix::from_diagonal(&eig) * q.transpose();
    cholesky(&symmetrize(&m))
}

pub fn standard_normal_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.sample(StandardNormal))
}

/// Point drawn uniformly in `[lo, hi]^d`.
pub fn uniform_box<R: Rng + ?Sized>(d: usize, lo: f64, hi: f64, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.random_range(lo..=hi))
}
