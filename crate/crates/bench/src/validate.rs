//! Oracle suite: every closed form checked against an independent route.

use std::fmt;

use lambda_family::divergence::{renyi_divergence_closed, renyi_divergence_quadrature_1d};
use lambda_family::duality::{Coupling, DEFAULT_QUAD_TOL};
use lambda_family::inference::{prox_vi_update, ProxSchedule};
use lambda_family::numerics::{spd_with_condition, SeededRng, SpdMatrix};
use lambda_family::quadrature::Domain;
use lambda_family::samplers::{gradient_check, StudentTarget};
use lambda_family::student::{
    conjugate_log_partition, escort_moments, log_density, log_partition, natural_from_params, params_from_escort_moments, params_from_natural,
    StudentParams, SufficientMoments,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::Result;
use crate::fig1;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub max_residual: f64,
    pub tolerance: f64,
    pub cases: usize,
}

impl CheckResult {
    fn new(name: &'static str, max_residual: f64, tolerance: f64, cases: usize) -> Self {
        // NaN residuals fail
        Self { name, passed: max_residual <= tolerance, max_residual, tolerance, cases }
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<28} max_residual={:.3e} tol={:.0e} cases={}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.max_residual,
            self.tolerance,
            self.cases
        )
    }
}

#[derive(Debug, Clone)]
pub struct ValidateOptions {
    pub seed: u64,
    /// Random draws for the randomized checks.
    pub draws: usize,
    /// Added to `φ_λ` in the Fenchel–Young check; nonzero only to
    /// confirm the check can fail.
    pub phi_perturbation: f64,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self { seed: 20240611, draws: 100, phi_perturbation: 0.0 }
    }
}

fn student_1d(nu: f64, mu: f64, s2: f64) -> StudentParams {
    StudentParams::new(nu, DVector::from_element(1, mu), SpdMatrix::from_diagonal(&[s2]).expect("positive variance")).expect("valid parameters")
}

/// Twenty 1-D `(π, q)` pairs whose `RD_α` integrals converge fast enough
/// for the quadrature oracle; `α` is set by `q`'s family.
pub fn oracle_cases() -> Vec<(StudentParams, StudentParams)> {
    let inf = f64::INFINITY;
    [
        ((3.0, 0.0, 1.0), (3.0, 1.0, 1.0)),
        ((3.0, 0.5, 2.0), (3.0, -0.5, 0.5)),
        ((1.0, 0.0, 1.0), (1.0, 0.3, 1.5)),
        ((1.0, 1.0, 0.5), (1.0, 0.0, 1.0)),
        ((10.0, 0.0, 1.0), (10.0, 2.0, 3.0)),
        ((10.0, -1.0, 0.3), (10.0, -1.2, 0.4)),
        ((3.0, 0.0, 1.0), (10.0, 0.0, 1.0)),
        ((10.0, 0.0, 1.0), (3.0, 0.5, 1.2)),
        ((2.0, 0.0, 1.0), (3.0, 0.0, 2.0)),
        ((2.5, 0.2, 0.8), (1.0, 0.0, 1.0)),
        ((5.0, 0.0, 1.0), (inf, 0.0, 2.0)),
        ((inf, 0.0, 1.0), (inf, 1.0, 1.0)),
        ((inf, 0.3, 2.0), (inf, -0.4, 0.7)),
        ((inf, 0.0, 1.0), (3.0, 0.0, 1.0)),
        ((inf, 1.0, 0.5), (1.0, 0.0, 2.0)),
        ((inf, 0.0, 1.0), (10.0, 0.5, 0.9)),
        ((3.0, 0.0, 1.0), (inf, 0.0, 3.0)),
        ((4.0, 2.0, 1.0), (4.0, 2.0, 1.0)),
        ((6.0, -3.0, 4.0), (2.0, -2.0, 2.0)),
        ((2.0, 0.0, 1.0), (5.0, 0.1, 1.1)),
    ]
    .iter()
    .map(|&((a, b, c), (e, f, g))| (student_1d(a, b, c), student_1d(e, f, g)))
    .collect()
}

/// Closed-form `RD_α` against adaptive quadrature on the 1-D cases.
pub fn closed_vs_quadrature(tolerance: f64) -> Result<CheckResult> {
    let cases = oracle_cases();
    let mut worst: f64 = 0.0;
    for (pi, q) in &cases {
        let closed = renyi_divergence_closed(pi, q)?;
        let lp = |x: f64| log_density(pi, &DVector::from_element(1, x)).unwrap_or(f64::NAN);
        let lq = |x: f64| log_density(q, &DVector::from_element(1, x)).unwrap_or(f64::NAN);
        let domain = Domain::RealLine { center: pi.mu[0], scale: pi.sigma.matrix()[(0, 0)].sqrt() };
        let quad = renyi_divergence_quadrature_1d(lp, lq, closed.alpha, domain, DEFAULT_QUAD_TOL)?;
        worst = worst.max((closed.value - quad.value).abs());
    }
    Ok(CheckResult::new("closed_form_vs_quadrature", worst, tolerance, cases.len()))
}

/// Random Student parameters: `μ ∈ [-2,2]^d`, condition in `[1,20)`, scale in `[0.3,3)`.
pub fn random_params<R: Rng + ?Sized>(rng: &mut R, nu: f64, d: usize) -> Result<StudentParams> {
    let mu = DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0));
    let kappa = rng.random_range(1.0..20.0);
    let scale = rng.random_range(0.3..3.0);
    let sigma = spd_with_condition(d, kappa, rng)?.scaled(scale)?;
    Ok(StudentParams::new(nu, mu, sigma)?)
}

/// Configurations of the randomized checks, cycled over the draws.
pub const DIMS: [usize; 4] = [1, 2, 5, 20];
pub const NUS: [f64; 3] = [1.0, 3.0, 10.0];

fn config_for(i: usize) -> (usize, f64) {
    (DIMS[i % DIMS.len()], NUS[(i / DIMS.len()) % NUS.len()])
}

/// `|φ_λ(ϑ) + ψ_λ(ϑ) - c_λ(ϑ, escort moments)|` over random parameters.
pub fn fenchel_young(opts: &ValidateOptions, tolerance: f64) -> Result<CheckResult> {
    let mut rng = SeededRng::new(opts.seed).stream(1, 0);
    let mut worst: f64 = 0.0;
    for i in 0..opts.draws {
        let (d, nu) = config_for(i);
        let p = random_params(&mut rng, nu, d)?;
        let n = natural_from_params(&p)?;
        let phi = log_partition(&n, nu)? + opts.phi_perturbation;
        let psi = conjugate_log_partition(&p)?;
        let c = Coupling::new(n.lambda).from_inner(n.pair_moments(&escort_moments(&p, nu)?));
        worst = worst.max((phi + psi - c).abs());
    }
    Ok(CheckResult::new("fenchel_young", worst, tolerance, opts.draws))
}

fn rel_err_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(f64::MIN_POSITIVE)
}

fn rel_err_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(f64::MIN_POSITIVE)
}

/// Natural ↔ parameter and escort-moment ↔ parameter round trips.
pub fn chart_round_trips(opts: &ValidateOptions, tolerance: f64) -> Result<CheckResult> {
    let mut rng = SeededRng::new(opts.seed).stream(2, 0);
    let mut worst: f64 = 0.0;
    for i in 0..opts.draws {
        let (d, nu) = config_for(i);
        let p = random_params(&mut rng, nu, d)?;
        let n = natural_from_params(&p)?;
        let back = params_from_natural(&n, nu)?;
        let n2 = natural_from_params(&back)?;
        let m = escort_moments(&p, nu)?;
        let from_m = params_from_escort_moments(nu, &m)?;
        let m2 = escort_moments(&from_m, nu)?;
        let errs = [
            rel_err_vec(&p.mu, &back.mu),
            rel_err_mat(p.sigma.matrix(), back.sigma.matrix()),
            rel_err_vec(&n.theta1, &n2.theta1),
            rel_err_mat(&n.theta2, &n2.theta2),
            rel_err_vec(&p.mu, &from_m.mu),
            rel_err_mat(p.sigma.matrix(), from_m.sigma.matrix()),
            rel_err_vec(&m.m1, &m2.m1),
            rel_err_mat(&m.m2, &m2.m2),
        ];
        worst = errs.iter().fold(worst, |w, &e| if e.is_nan() { f64::NAN } else { w.max(e) });
    }
    Ok(CheckResult::new("chart_round_trips", worst, tolerance, opts.draws))
}

/// Error of proximal iterates driven by exact moments against `∏(1+τ_k)⁻¹`,
/// relative to the initial error, for a constant and the harmonic schedule.
pub fn prox_contraction(steps: usize, tolerance: f64) -> Result<CheckResult> {
    let target = SufficientMoments {
        m1: DVector::from_vec(vec![1.0, -2.0, 0.5]),
        m2: DMatrix::from_row_slice(3, 3, &[3.0, 0.2, 0.1, 0.2, 5.0, -0.3, 0.1, -0.3, 2.0]),
    };
    let init = SufficientMoments { m1: DVector::from_vec(vec![-4.0, 3.0, 2.0]), m2: DMatrix::identity(3, 3) * 7.0 };
    let dist = |m: &SufficientMoments| ((&m.m1 - &target.m1).norm_squared() + (&m.m2 - &target.m2).norm_squared()).sqrt();
    let e0 = dist(&init);
    let mut worst: f64 = 0.0;
    for schedule in [ProxSchedule::Constant(0.5), ProxSchedule::Harmonic] {
        let mut m = init.clone();
        let mut product = 1.0;
        for k in 1..=steps {
            let tau = schedule.tau(k)?;
            m = prox_vi_update(&m, &target, tau)?;
            product /= 1.0 + tau;
            worst = worst.max((dist(&m) / e0 - product).abs());
        }
        worst = worst.max((schedule.error_product(steps)? - product).abs());
    }
    Ok(CheckResult::new("prox_contraction", worst, tolerance, 2 * steps))
}

/// Analytic gradients against central differences at random points.
pub fn gradients(opts: &ValidateOptions, tolerance: f64) -> Result<CheckResult> {
    let mut rng = SeededRng::new(opts.seed).stream(3, 0);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for d in [1usize, 5] {
        for nu in [1.0, 3.0, 10.0, f64::INFINITY] {
            let p = random_params(&mut rng, nu, d)?;
            let points: Vec<DVector<f64>> = (0..opts.draws).map(|_| DVector::from_fn(d, |_, _| rng.random_range(-6.0..6.0))).collect();
            worst = worst.max(gradient_check(&StudentTarget::new(p), &points, 1e-5));
            cases += points.len();
        }
    }
    Ok(CheckResult::new("gradients", worst, tolerance, cases))
}

/// Mass of each of the nine escort curves.
pub fn fig1_normalization(tolerance: f64) -> Result<CheckResult> {
    let table = fig1::normalization_table()?;
    let worst = table.iter().fold(0.0f64, |w, &(_, _, m)| w.max((m - 1.0).abs()));
    Ok(CheckResult::new("fig1_normalization", worst, tolerance, table.len()))
}

/// The `λ = 0, α = 1` curve against the `N(0, 1/4)` density.
pub fn fig1_gaussian(points: usize, tolerance: f64) -> Result<CheckResult> {
    let dens = fig1::densities(0.0)?.swap_remove(1);
    let xs = fig1::grid(points);
    let worst = xs.iter().fold(0.0f64, |w, &x| {
        let exact = (2.0 / std::f64::consts::PI).sqrt() * (-2.0 * x * x).exp();
        w.max((dens.pdf(x) - exact).abs())
    });
    Ok(CheckResult::new("fig1_gaussian_curve", worst, tolerance, xs.len()))
}

pub fn validate(opts: &ValidateOptions) -> Result<Vec<CheckResult>> {
    Ok(vec![
        closed_vs_quadrature(1e-6)?,
        fenchel_young(opts, 1e-8)?,
        chart_round_trips(opts, 1e-10)?,
        prox_contraction(1000, 1e-12)?,
        gradients(opts, 1e-5)?,
        fig1_normalization(1e-6)?,
        fig1_gaussian(1001, 1e-8)?,
    ])
}
