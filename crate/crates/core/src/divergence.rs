//! Rényi and Kullback–Leibler divergences: closed forms through the
//! λ-duality rewriting, plus 1-D quadrature and Monte Carlo estimators.

use std::f64::consts::PI;

use nalgebra::DVector;
use rand::Rng;

use crate::duality::Coupling;
use crate::error::{Error, Result};
use crate::quadrature::{integrate, Domain, QuadOptions};
use crate::student::{escort_exponent, escort_moments, log_partition, natural_from_params, renyi_entropy, StudentParams};

/// Importance-weight effective sample size below which an MC estimate is refused.
pub const MIN_ESS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivergenceMethod {
    ClosedForm,
    Quadrature1d,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceReport {
    pub alpha: f64,
    pub value: f64,
    pub method: DivergenceMethod,
    /// Present only for Monte Carlo estimates.
    pub stderr: Option<f64>,
}

/// `RD_α(π, q)` with `α = 1 + 2/(ν_q+d)` set by `q`'s family; `KL(π, q)` when `q` is Gaussian.
pub fn renyi_divergence_closed(pi: &StudentParams, q: &StudentParams) -> Result<DivergenceReport> {
    if pi.dim() != q.dim() {
        return Err(Error::DimensionMismatch { expected: q.dim(), got: pi.dim() });
    }
    let alpha = escort_exponent(q.nu, q.dim());
    let value = if q.is_gaussian() { kl_to_gaussian(pi, q)? } else { renyi_to_student(pi, q)? };
    Ok(DivergenceReport { alpha, value, method: DivergenceMethod::ClosedForm, stderr: None })
}

/// `φ_λ(ϑ_q) - c_λ(ϑ_q, π^(α)(T)) - H_α(π)`.
fn renyi_to_student(pi: &StudentParams, q: &StudentParams) -> Result<f64> {
    let n = natural_from_params(q)?;
    let moments = escort_moments(pi, q.nu)?;
    let phi = log_partition(&n, q.nu)?;
    let coupling = Coupling::new(n.lambda).from_inner(n.pair_moments(&moments));
    Ok(phi - coupling - renyi_entropy(pi, q.alpha())?)
}

/// `-H(π) + ½logdet(2πΣ_q) + ½[tr(Σ_q⁻¹C_π) + δᵀΣ_q⁻¹δ]`.
fn kl_to_gaussian(pi: &StudentParams, q: &StudentParams) -> Result<f64> {
    let cov = if pi.is_gaussian() {
        pi.sigma.matrix().clone()
    } else if pi.nu > 2.0 {
        pi.sigma.matrix() * (pi.nu / (pi.nu - 2.0))
    } else {
        return Err(Error::Incompatible { value: pi.nu });
    };
    let d = q.dim() as f64;
    let trace = q.sigma.inverse().component_mul(&cov).sum();
    let delta = &pi.mu - &q.mu;
    let maha = q.sigma.quad_form(&delta)?;
    Ok(-renyi_entropy(pi, 1.0)? + 0.5 * (d * (2.0 * PI).ln() + q.sigma.logdet()) + 0.5 * (trace + maha))
}

/// `(1/(α-1))·log ∫ p^α q^(1-α)` (or `∫ p log(p/q)` at `α = 1`) by quadrature.
///
/// Densities are passed as log-densities; `domain` should centre the
/// tangent map on the bulk of `p`.
pub fn renyi_divergence_quadrature_1d<P, Q>(log_p: P, log_q: Q, alpha: f64, domain: Domain, quad_tol: f64) -> Result<DivergenceReport>
where
    P: Fn(f64) -> f64,
    Q: Fn(f64) -> f64,
{
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("divergence order must be positive, got {alpha}")));
    }
    let opts = QuadOptions::with_tol(quad_tol);
    let value = if alpha == 1.0 {
        integrate(
            |x| {
                let lp = log_p(x);
                if lp == f64::NEG_INFINITY {
                    0.0
                } else {
                    lp.exp() * (lp - log_q(x))
                }
            },
            domain,
            &[],
            opts,
        )?
        .value
    } else {
        let r = integrate(
            |x| {
                let lp = log_p(x);
                if lp == f64::NEG_INFINITY {
                    0.0
                } else {
                    (alpha * lp + (1.0 - alpha) * log_q(x)).exp()
                }
            },
            domain,
            &[],
            opts,
        )?;
        if !(r.value > 0.0) {
            return Err(Error::DivergentIntegral(format!("∫p^α q^(1-α) evaluated to {}", r.value)));
        }
        r.value.ln() / (alpha - 1.0)
    };
    Ok(DivergenceReport { alpha, value, method: DivergenceMethod::Quadrature1d, stderr: None })
}

/// Monte Carlo estimate from `n` draws of `π` with a jackknife standard error.
pub fn renyi_divergence_mc<R, S, P, Q>(mut sampler: S, log_pi: P, log_q: Q, alpha: f64, n: usize, rng: &mut R) -> Result<DivergenceReport>
where
    R: Rng + ?Sized,
    S: FnMut(&mut R) -> DVector<f64>,
    P: Fn(&DVector<f64>) -> f64,
    Q: Fn(&DVector<f64>) -> f64,
{
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 samples, got {n}")));
    }
    let log_ratios: Vec<f64> = (0..n)
        .map(|_| {
            let x = sampler(rng);
            log_pi(&x) - log_q(&x)
        })
        .collect();
    let (value, stderr) = if alpha == 1.0 { mean_and_se(&log_ratios) } else { importance_estimate(&log_ratios, alpha)? };
    if !value.is_finite() {
        return Err(Error::DivergentIntegral(format!("Monte Carlo estimate is {value}")));
    }
    Ok(DivergenceReport { alpha, value, method: DivergenceMethod::MonteCarlo, stderr: Some(stderr) })
}

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `(1/(α-1))·log mean exp((α-1)·r_i)` with its leave-one-out jackknife error.
fn importance_estimate(log_ratios: &[f64], alpha: f64) -> Result<(f64, f64)> {
    let n = log_ratios.len();
    let k = alpha - 1.0;
    let w: Vec<f64> = log_ratios.iter().map(|r| k * r).collect();
    let top = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::DivergentIntegral(format!("log-weight maximum is {top}")));
    }
    let scaled: Vec<f64> = w.iter().map(|v| (v - top).exp()).collect();
    let sum: f64 = scaled.iter().sum();
    let sum_sq: f64 = scaled.iter().map(|v| v * v).sum();
    let ess = sum * sum / sum_sq;
    if ess < MIN_ESS {
        return Err(Error::DegenerateWeights { ess });
    }
    let nf = n as f64;
    let estimate = (top + (sum / nf).ln()) / k;
    let loo: Vec<f64> = scaled.iter().map(|s| (top + ((sum - s).max(f64::MIN_POSITIVE) / (nf - 1.0)).ln()) / k).collect();
    let loo_mean = loo.iter().sum::<f64>() / nf;
    let var = (nf - 1.0) / nf * loo.iter().map(|v| (v - loo_mean).powi(2)).sum::<f64>();
    Ok((estimate, var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::duality::DEFAULT_QUAD_TOL;
    use crate::numerics::{spd_with_condition, SeededRng, SpdMatrix};
    use crate::student::{log_density, sample_one};
    use rand::Rng;

    fn student_1d(nu: f64, mu: f64, s2: f64) -> StudentParams {
        StudentParams::new(nu, DVector::from_element(1, mu), SpdMatrix::from_diagonal(&[s2]).unwrap()).unwrap()
    }

    fn quad(pi: &StudentParams, q: &StudentParams, alpha: f64) -> Result<DivergenceReport> {
        let lp = |x: f64| log_density(pi, &DVector::from_element(1, x)).unwrap();
        let lq = |x: f64| log_density(q, &DVector::from_element(1, x)).unwrap();
        let sd = pi.sigma.matrix()[(0, 0)].sqrt();
        renyi_divergence_quadrature_1d(lp, lq, alpha, Domain::RealLine { center: pi.mu[0], scale: sd }, DEFAULT_QUAD_TOL)
    }

    #[test]
    fn self_divergence_is_zero() {
        let mut rng = SeededRng::new(1).stream(0, 0);
        for nu in [1.0, 4.0, f64::INFINITY] {
            let sigma = spd_with_condition(4, 30.0, &mut rng).unwrap();
            let p = StudentParams::new(nu, DVector::from_vec(vec![0.3, -1.0, 2.0, 0.0]), sigma).unwrap();
            let r = renyi_divergence_closed(&p, &p).unwrap();
            assert!(r.value.abs() < 1e-10, "nu={nu}: {}", r.value);
            assert_eq!(r.method, DivergenceMethod::ClosedForm);
            assert!(r.stderr.is_none());
        }
        let p = student_1d(3.0, 0.0, 1.0);
        assert!(quad(&p, &p, 1.5).unwrap().value.abs() < 10.0 * DEFAULT_QUAD_TOL);
    }

    #[test]
    fn closed_form_matches_quadrature_examples() {
        let pi = student_1d(3.0, 0.0, 1.0);
        let q = student_1d(3.0, 1.0, 1.0);
        let closed = renyi_divergence_closed(&pi, &q).unwrap();
        assert!((closed.alpha - 1.5).abs() < 1e-15);
        let oracle = quad(&pi, &q, 1.5).unwrap();
        assert!((closed.value - oracle.value).abs() < 1e-8);
        // 30-digit reference for the same integral
        assert!((closed.value - 0.446_287_102_628_419_5).abs() < 1e-10);

        let g0 = student_1d(f64::INFINITY, 0.0, 1.0);
        let g1 = student_1d(f64::INFINITY, 1.0, 1.0);
        assert!((renyi_divergence_closed(&g0, &g1).unwrap().value - 0.5).abs() < 1e-14);
        assert!((quad(&g0, &g1, 1.0).unwrap().value - 0.5).abs() < 1e-8);
    }

    #[test]
    fn cross_family_entropy_term() {
        // π = T₃, q = T₁₀ with the q-family exponent α = 1 + 2/11
        let pi = student_1d(3.0, 0.0, 1.0);
        let q = student_1d(10.0, 0.0, 1.0);
        let closed = renyi_divergence_closed(&pi, &q).unwrap();
        let oracle = quad(&pi, &q, closed.alpha).unwrap();
        assert!((closed.value - oracle.value).abs() < 1e-8);
        assert!((closed.value - 0.140_964_067_126_862_83).abs() < 1e-10);

        // at α = 1.5 the integrand p^1.5 q^-0.5 decays like |x|^-1/2
        assert!(matches!(quad(&pi, &q, 1.5), Err(Error::DivergentIntegral(_))));
    }

    #[test]
    fn incompatible_targets_are_rejected() {
        let cauchy = student_1d(1.0, 0.0, 1.0);
        assert!(matches!(
            renyi_divergence_closed(&cauchy, &student_1d(3.0, 0.0, 1.0)),
            Err(Error::Incompatible { .. })
        ));
        assert!(matches!(
            renyi_divergence_closed(&cauchy, &student_1d(f64::INFINITY, 0.0, 1.0)),
            Err(Error::Incompatible { .. })
        ));
        // ν_π = 1 is compatible with the Cauchy family itself: 1 + 2·2/2 = 3
        assert!(renyi_divergence_closed(&cauchy, &student_1d(1.0, 1.0, 2.0)).is_ok());
    }

    /// 20 one-dimensional (π, q) pairs covering matched, mismatched and Gaussian families.
    fn oracle_grid() -> Vec<(StudentParams, StudentParams)> {
        let specs = [
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
            ((5.0, 0.0, 1.0), (f64::INFINITY, 0.0, 2.0)),
            ((f64::INFINITY, 0.0, 1.0), (f64::INFINITY, 1.0, 1.0)),
            ((f64::INFINITY, 0.3, 2.0), (f64::INFINITY, -0.4, 0.7)),
            ((f64::INFINITY, 0.0, 1.0), (3.0, 0.0, 1.0)),
            ((f64::INFINITY, 1.0, 0.5), (1.0, 0.0, 2.0)),
            ((f64::INFINITY, 0.0, 1.0), (10.0, 0.5, 0.9)),
            ((3.0, 0.0, 1.0), (f64::INFINITY, 0.0, 3.0)),
            ((4.0, 2.0, 1.0), (4.0, 2.0, 1.0)),
            ((6.0, -3.0, 4.0), (2.0, -2.0, 2.0)),
            ((2.0, 0.0, 1.0), (5.0, 0.1, 1.1)),
        ];
        specs
            .iter()
            .map(|&((a, b, c), (e, f, g))| (student_1d(a, b, c), student_1d(e, f, g)))
            .collect()
    }

    #[test]
    fn oracle_triangle() {
        let mut rng = SeededRng::new(77).stream(0, 0);
        for (pi, q) in oracle_grid() {
            let closed = renyi_divergence_closed(&pi, &q).unwrap();
            assert!(closed.value >= -1e-12);
            let oracle = quad(&pi, &q, closed.alpha).unwrap();
            assert!((closed.value - oracle.value).abs() < 1e-8, "{pi:?} {q:?}: {} vs {}", closed.value, oracle.value);
            let mc = renyi_divergence_mc(
                |r| sample_one(&pi, r),
                |x| log_density(&pi, x).unwrap(),
                |x| log_density(&q, x).unwrap(),
                closed.alpha,
                20_000,
                &mut rng,
            )
            .unwrap();
            let se = mc.stderr.unwrap();
            assert!((mc.value - closed.value).abs() <= 3.0 * se + 1e-12, "{} ± {se} vs {}", mc.value, closed.value);
        }
    }

    #[test]
    fn monte_carlo_in_five_dimensions() {
        let mut rng = SeededRng::new(5).stream(0, 0);
        let pi = StudentParams::new(4.0, DVector::from_element(5, 0.2), spd_with_condition(5, 5.0, &mut rng).unwrap()).unwrap();
        let q = StudentParams::new(4.0, DVector::zeros(5), SpdMatrix::identity(5)).unwrap();
        let closed = renyi_divergence_closed(&pi, &q).unwrap();
        let mc = renyi_divergence_mc(
            |r| sample_one(&pi, r),
            |x| log_density(&pi, x).unwrap(),
            |x| log_density(&q, x).unwrap(),
            closed.alpha,
            200_000,
            &mut rng,
        )
        .unwrap();
        assert!((mc.value - closed.value).abs() <= 3.0 * mc.stderr.unwrap());

        let same = renyi_divergence_mc(|r| sample_one(&pi, r), |x| log_density(&pi, x).unwrap(), |x| log_density(&pi, x).unwrap(), 1.5, 1000, &mut rng).unwrap();
        assert!(same.value.abs() <= 3.0 * same.stderr.unwrap() + 1e-15);
    }

    #[test]
    fn degenerate_weights_are_flagged() {
        // one sample carries all the weight
        let mut i = 0;
        let r = renyi_divergence_mc(
            |_r: &mut rand_chacha::ChaCha8Rng| {
                i += 1;
                DVector::from_element(1, if i == 1 { 1.0 } else { 0.0 })
            },
            |x| 500.0 * x[0],
            |_| 0.0,
            2.0,
            100,
            &mut SeededRng::new(0).stream(0, 0),
        );
        assert!(matches!(r, Err(Error::DegenerateWeights { .. })));
    }

    #[test]
    fn identity_of_indiscernibles() {
        let mut rng = SeededRng::new(2).stream(0, 0);
        for nu in [2.0, 7.0] {
            let p = StudentParams::new(nu, DVector::from_vec(vec![0.5, 0.1]), spd_with_condition(2, 4.0, &mut rng).unwrap()).unwrap();
            assert!(renyi_divergence_closed(&p, &p).unwrap().value < 1e-10);
            for _ in 0..20 {
                let shift = DVector::from_fn(2, |_, _| rng.random_range(-1e-3..1e-3));
                let q = StudentParams::new(nu, &p.mu + shift, p.sigma.clone()).unwrap();
                assert!(renyi_divergence_closed(&p, &q).unwrap().value > 1e-10);
            }
        }
    }
}
