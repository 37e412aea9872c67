//! Solvers: moment-matching variational inference (exact escort sampling,
//! plain MALA, scaled MALA), proximal updates, batch and online
//! moment-matched MLE, and relaxed EM for Student mixtures.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{cholesky, logsumexp, standard_normal_vector, SpdMatrix};
use crate::samplers::{default_init, default_step, mala_run, MalaState, TargetOracle};
use crate::student::{
    conjugate_log_partition, escort, escort_exponent, escort_nu, is_compatible, log_density,
    params_from_escort_moments, sample_one, StudentParams, SufficientMoments,
};

/// Proximal step sizes `τ_k`, indexed from `k = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProxSchedule {
    Constant(f64),
    /// `τ_k = 1/k`.
    Harmonic,
}

impl ProxSchedule {
    pub fn tau(&self, k: usize) -> Result<f64> {
        match *self {
            ProxSchedule::Constant(t) if t > 0.0 => Ok(t),
            ProxSchedule::Constant(t) => Err(Error::InvalidArgument(format!("step must be positive, got {t}"))),
            ProxSchedule::Harmonic if k >= 1 => Ok(1.0 / k as f64),
            ProxSchedule::Harmonic => Err(Error::InvalidArgument("harmonic schedule starts at k = 1".into())),
        }
    }

    /// `∏_{k=1}^K (1+τ_k)⁻¹`, the contraction of the error after `K` steps.
    pub fn error_product(&self, steps: usize) -> Result<f64> {
        let mut p = 1.0;
        for k in 1..=steps {
            p /= 1.0 + self.tau(k)?;
        }
        Ok(p)
    }
}

fn combine(a: &SufficientMoments, wa: f64, b: &SufficientMoments, wb: f64) -> Result<SufficientMoments> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    Ok(SufficientMoments { m1: &a.m1 * wa + &b.m1 * wb, m2: &a.m2 * wa + &b.m2 * wb })
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("proximal step must be positive, got {tau}")));
    }
    Ok(())
}

/// `τ/(1+τ)·target + 1/(1+τ)·current`.
pub fn prox_vi_update(current: &SufficientMoments, target: &SufficientMoments, tau: f64) -> Result<SufficientMoments> {
    check_tau(tau)?;
    combine(target, tau / (1.0 + tau), current, 1.0 / (1.0 + tau))
}

/// `Nτ/(1+Nτ)·data_stat + 1/(1+Nτ)·current`, with `data_stat` the mean statistic.
pub fn prox_mle_update(current: &SufficientMoments, data_stat: &SufficientMoments, tau: f64, n: usize) -> Result<SufficientMoments> {
    check_tau(tau)?;
    if n == 0 {
        return Err(Error::InvalidArgument("data size must be positive".into()));
    }
    let nt = n as f64 * tau;
    combine(data_stat, nt / (1.0 + nt), current, 1.0 / (1.0 + nt))
}

/// One VI iterate: fitted parameters and the moments they were matched to.
#[derive(Debug, Clone)]
pub struct VIIterate {
    pub params: StudentParams,
    pub cumulative_moments: SufficientMoments,
    pub samples_used: usize,
    /// MALA acceptance rate over the iteration's steps, when MALA is used.
    pub acceptance_rate: Option<f64>,
}

/// Default number of samples per iteration, `10·d`.
pub fn default_samples_per_iter(d: usize) -> usize {
    10 * d
}

/// Iteration 0 shared by every VI algorithm: `μ₀ = x₀`, `Σ₀ = I`.
fn initial_iterate(nu: f64, x0: &DVector<f64>) -> Result<VIIterate> {
    let d = x0.len();
    let params = StudentParams::new(nu, x0.clone(), SpdMatrix::identity(d))?;
    let m = SufficientMoments { m1: x0.clone(), m2: DMatrix::identity(d, d) + x0 * x0.transpose() };
    Ok(VIIterate { params, cumulative_moments: m, samples_used: 0, acceptance_rate: None })
}

/// Running sums of `x` and `xxᵀ`.
#[derive(Debug, Clone)]
struct MomentSums {
    s1: DVector<f64>,
    s2: DMatrix<f64>,
    n: usize,
}

impl MomentSums {
    fn new(d: usize) -> Self {
        Self { s1: DVector::zeros(d), s2: DMatrix::zeros(d, d), n: 0 }
    }

    fn add(&mut self, x: &DVector<f64>) {
        self.s1 += x;
        self.s2.ger(1.0, x, x, 1.0);
        self.n += 1;
    }

    fn means(&self) -> SufficientMoments {
        let n = self.n as f64;
        SufficientMoments { m1: &self.s1 / n, m2: &self.s2 / n }
    }
}

fn check_vi_args(d: usize, n_per_iter: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    if n_per_iter == 0 {
        return Err(Error::InvalidArgument("samples per iteration must be positive".into()));
    }
    Ok(())
}

/// Moment-matching VI with exact draws from the target escort.
///
/// Iterate `k` matches the average of `(x, xxᵀ)` over all `kN` draws so far.
/// The returned sequence starts with the initialization.
pub fn vi_exact_escort<R: Rng + ?Sized>(
    target: &StudentParams,
    family_nu: f64,
    n_per_iter: usize,
    n_iters: usize,
    rng: &mut R,
) -> Result<Vec<VIIterate>> {
    let d = target.dim();
    check_vi_args(d, n_per_iter)?;
    if !is_compatible(target.nu, family_nu, d) {
        return Err(Error::Incompatible { value: escort_nu(target.nu, family_nu, d) });
    }
    let esc = escort(target, family_nu)?;
    let x0 = default_init(d, rng);
    let mut out = vec![initial_iterate(family_nu, &x0)?];
    let mut sums = MomentSums::new(d);
    for _ in 0..n_iters {
        for _ in 0..n_per_iter {
            sums.add(&sample_one(&esc, rng));
        }
        let m = sums.means();
        let params = params_from_escort_moments(family_nu, &m)?;
        out.push(VIIterate { params, cumulative_moments: m, samples_used: sums.n, acceptance_rate: None });
    }
    Ok(out)
}

/// Moment-matching VI where the escort is sampled by one continuing MALA
/// chain with identity preconditioner; moments are cumulative averages.
pub fn vi_plain_mala<R: Rng + ?Sized>(
    oracle: &dyn TargetOracle,
    family_nu: f64,
    n_per_iter: usize,
    n_iters: usize,
    rng: &mut R,
) -> Result<Vec<VIIterate>> {
    let d = oracle.dim();
    check_vi_args(d, n_per_iter)?;
    let alpha = escort_exponent(family_nu, d);
    let x0 = default_init(d, rng);
    let mut out = vec![initial_iterate(family_nu, &x0)?];
    let mut state = MalaState::new(oracle, x0, alpha, default_step(d), SpdMatrix::identity(d))?;
    let mut sums = MomentSums::new(d);
    for _ in 0..n_iters {
        let before = (state.accepted_count, state.proposed_count);
        for x in mala_run(&mut state, oracle, n_per_iter, rng) {
            sums.add(&x);
        }
        let rate = (state.accepted_count - before.0) as f64 / (state.proposed_count - before.1) as f64;
        let m = sums.means();
        let params = params_from_escort_moments(family_nu, &m)?;
        out.push(VIIterate { params, cumulative_moments: m, samples_used: sums.n, acceptance_rate: Some(rate) });
    }
    Ok(out)
}

/// Moment-matching VI with MALA preconditioned by the current `Σ_k`.
///
/// Each iteration's `N` draws give a fresh moment estimate `T̂_k`; the
/// iterate moments follow `k/(k+1)·T_k + 1/(k+1)·T̂_k`, so the
/// initialization carries zero weight after the first iteration. A
/// non-positive-definite `Σ_{k+1}` aborts the run.
pub fn vi_scaled_mala<R: Rng + ?Sized>(
    oracle: &dyn TargetOracle,
    family_nu: f64,
    n_per_iter: usize,
    n_iters: usize,
    rng: &mut R,
) -> Result<Vec<VIIterate>> {
    let d = oracle.dim();
    check_vi_args(d, n_per_iter)?;
    let alpha = escort_exponent(family_nu, d);
    let x0 = default_init(d, rng);
    let init = initial_iterate(family_nu, &x0)?;
    let mut state = MalaState::new(oracle, x0, alpha, default_step(d), init.params.sigma.clone())?;
    let mut moments = init.cumulative_moments.clone();
    let mut out = vec![init];
    for k in 0..n_iters {
        let before = (state.accepted_count, state.proposed_count);
        let mut sums = MomentSums::new(d);
        for x in mala_run(&mut state, oracle, n_per_iter, rng) {
            sums.add(&x);
        }
        let rate = (state.accepted_count - before.0) as f64 / (state.proposed_count - before.1) as f64;
        let estimate = sums.means();
        moments = if k == 0 { estimate } else { prox_vi_update(&moments, &estimate, ProxSchedule::Harmonic.tau(k)?)? };
        let params = params_from_escort_moments(family_nu, &moments)?;
        state.set_scale(oracle, params.sigma.clone())?;
        out.push(VIIterate {
            params,
            cumulative_moments: moments.clone(),
            samples_used: (k + 1) * n_per_iter,
            acceptance_rate: Some(rate),
        });
    }
    Ok(out)
}

/// Moment-matched fit and its likelihood bound `ψ_λ(ϑ*)`.
#[derive(Debug, Clone)]
pub struct MleFit {
    pub params: StudentParams,
    pub bound: f64,
}

/// `μ* = mean(x)`, `Σ* = mean(xxᵀ) - μ*μ*ᵀ`; for `λ < 0` the mean
/// log-likelihood at the fit is at least `ψ_λ(ϑ*)`, and for the Gaussian
/// the fit is the exact MLE with mean log-likelihood equal to the bound.
pub fn mle_moment_match(data: &[DVector<f64>], nu: f64) -> Result<MleFit> {
    let m = SufficientMoments::from_samples(data)?;
    if data.len() < m.dim() + 1 {
        return Err(Error::InvalidArgument(format!("need at least d+1 = {} points, got {}", m.dim() + 1, data.len())));
    }
    let params = params_from_escort_moments(nu, &m)?;
    let bound = conjugate_log_partition(&params)?;
    Ok(MleFit { params, bound })
}

/// Online proximal MLE with the harmonic schedule.
///
/// Running means of `(x, xxᵀ)` are tracked exactly; the reported `Σ` is
/// `M2 - m1m1ᵀ` once that is positive definite and the previous `Σ`
/// otherwise, so early rank-deficient prefixes never leak into later steps.
#[derive(Debug, Clone)]
pub struct OnlineMle {
    nu: f64,
    sums: MomentSums,
    current: StudentParams,
}

impl OnlineMle {
    pub fn new(nu: f64, init: StudentParams) -> Result<Self> {
        let d = init.dim();
        let current = StudentParams::new(nu, init.mu, init.sigma)?;
        Ok(Self { nu, sums: MomentSums::new(d), current })
    }

    pub fn push(&mut self, x: &DVector<f64>) -> Result<&StudentParams> {
        if x.len() != self.current.dim() {
            return Err(Error::DimensionMismatch { expected: self.current.dim(), got: x.len() });
        }
        self.sums.add(x);
        let m = self.sums.means();
        let sigma = cholesky(&m.covariance()).unwrap_or_else(|_| self.current.sigma.clone());
        self.current = StudentParams::new(self.nu, m.m1, sigma)?;
        Ok(&self.current)
    }

    pub fn params(&self) -> &StudentParams {
        &self.current
    }

    pub fn count(&self) -> usize {
        self.sums.n
    }

    pub fn moments(&self) -> Option<SufficientMoments> {
        (self.sums.n > 0).then(|| self.sums.means())
    }
}

/// Feeds `n_steps` points from `stream`; returns `init` followed by every update.
pub fn mle_online<I>(stream: I, nu: f64, n_steps: usize, init: StudentParams) -> Result<Vec<StudentParams>>
where
    I: IntoIterator<Item = DVector<f64>>,
{
    let mut online = OnlineMle::new(nu, init)?;
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push(online.params().clone());
    for x in stream.into_iter().take(n_steps) {
        out.push(online.push(&x)?.clone());
    }
    if out.len() != n_steps + 1 {
        return Err(Error::InvalidArgument(format!("stream ended after {} of {n_steps} points", out.len() - 1)));
    }
    Ok(out)
}

/// Sum of log-densities.
pub fn log_likelihood(params: &StudentParams, data: &[DVector<f64>]) -> Result<f64> {
    data.iter().map(|x| log_density(params, x)).sum()
}

#[derive(Debug, Clone)]
pub struct MixtureModel {
    pub weights: Vec<f64>,
    pub components: Vec<StudentParams>,
}

impl MixtureModel {
    pub fn new(weights: Vec<f64>, components: Vec<StudentParams>) -> Result<Self> {
        if weights.is_empty() || weights.len() != components.len() {
            return Err(Error::DimensionMismatch { expected: components.len(), got: weights.len() });
        }
        if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() >= 1e-12 {
            return Err(Error::InvalidArgument(format!("mixture weights must be nonnegative and sum to 1: {weights:?}")));
        }
        let (nu, d) = (components[0].nu, components[0].dim());
        for c in &components {
            if c.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, got: c.dim() });
            }
            if c.nu != nu {
                return Err(Error::InvalidArgument("mixture components must share nu".into()));
            }
        }
        Ok(Self { weights, components })
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn nu(&self) -> f64 {
        self.components[0].nu
    }

    /// `log ξ_j + log q_j(x)` for every component.
    fn joint_log(&self, x: &DVector<f64>) -> Result<Vec<f64>> {
        self.weights
            .iter()
            .zip(&self.components)
            .map(|(w, c)| Ok(w.ln() + log_density(c, x)?))
            .collect()
    }

    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(logsumexp(&self.joint_log(x)?))
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<DVector<f64>> {
        (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut j = self.weights.len() - 1;
                for (i, w) in self.weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        j = i;
                        break;
                    }
                }
                sample_one(&self.components[j], rng)
            })
            .collect()
    }
}

pub fn mixture_log_likelihood(model: &MixtureModel, data: &[DVector<f64>]) -> Result<f64> {
    data.iter().map(|x| model.log_density(x)).sum()
}

#[derive(Debug, Clone)]
pub struct Responsibilities {
    /// `N×J`, rows sum to 1.
    pub gamma: DMatrix<f64>,
    /// Rows where every component underflowed and a uniform row was used.
    pub underflow_rows: Vec<usize>,
}

pub fn em_responsibilities(model: &MixtureModel, data: &[DVector<f64>]) -> Result<Responsibilities> {
    let j = model.n_components();
    let mut gamma = DMatrix::zeros(data.len(), j);
    let mut underflow_rows = Vec::new();
    for (i, x) in data.iter().enumerate() {
        let logs = model.joint_log(x)?;
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            underflow_rows.push(i);
            gamma.row_mut(i).fill(1.0 / j as f64);
            continue;
        }
        let e: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
        let s: f64 = e.iter().sum();
        for (c, v) in e.iter().enumerate() {
            gamma[(i, c)] = v / s;
        }
    }
    Ok(Responsibilities { gamma, underflow_rows })
}

/// Total responsibility below which a component is considered empty.
pub const EMPTY_COMPONENT_MASS: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct EmStep {
    pub model: MixtureModel,
    /// Components left unchanged because they received no responsibility.
    pub frozen: Vec<usize>,
    /// Components whose covariance needed the `1e-8·tr/d` jitter.
    pub jittered: Vec<usize>,
    pub underflow_rows: Vec<usize>,
}

/// One relaxed EM step: responsibilities, then a weighted moment match per component.
pub fn em_step(model: &MixtureModel, data: &[DVector<f64>]) -> Result<EmStep> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("EM needs data".into()));
    }
    let resp = em_responsibilities(model, data)?;
    let n = data.len() as f64;
    let d = model.dim();
    let mut weights = Vec::with_capacity(model.n_components());
    let mut components = Vec::with_capacity(model.n_components());
    let mut frozen = Vec::new();
    let mut jittered = Vec::new();
    for j in 0..model.n_components() {
        let col = resp.gamma.column(j);
        let mass: f64 = col.sum();
        weights.push(mass / n);
        if mass < EMPTY_COMPONENT_MASS {
            frozen.push(j);
            components.push(model.components[j].clone());
            continue;
        }
        let mut m1 = DVector::zeros(d);
        let mut m2 = DMatrix::zeros(d, d);
        for (i, x) in data.iter().enumerate() {
            let w = col[i] / mass;
            m1.axpy(w, x, 1.0);
            m2.ger(w, x, x, 1.0);
        }
        let moments = SufficientMoments { m1, m2 };
        let params = match params_from_escort_moments(model.nu(), &moments) {
            Ok(p) => p,
            Err(Error::NonPdMoments { .. }) => {
                let cov = moments.covariance();
                let jitter = 1e-8 * cov.trace().abs().max(f64::MIN_POSITIVE) / d as f64;
                jittered.push(j);
                let sigma = cholesky(&(cov + DMatrix::identity(d, d) * jitter))?;
                StudentParams::new(model.nu(), moments.m1, sigma)?
            }
            Err(e) => return Err(e),
        };
        components.push(params);
    }
    // renormalize away the rounding in Σγ/N
    let total: f64 = weights.iter().sum();
    let weights = weights.into_iter().map(|w| w / total).collect();
    Ok(EmStep { model: MixtureModel::new(weights, components)?, frozen, jittered, underflow_rows: resp.underflow_rows })
}

/// Initialization `ξ_j = 1/J`, `μ_j ~ N(0, 10·I)`, `Σ_j = 10·I`.
pub fn em_init<R: Rng + ?Sized>(nu: f64, d: usize, j: usize, rng: &mut R) -> Result<MixtureModel> {
    if j == 0 {
        return Err(Error::InvalidArgument("need at least one component".into()));
    }
    let sigma = SpdMatrix::identity(d).scaled(10.0)?;
    let components = (0..j)
        .map(|_| StudentParams::new(nu, standard_normal_vector(d, rng) * 10f64.sqrt(), sigma.clone()))
        .collect::<Result<Vec<_>>>()?;
    MixtureModel::new(vec![1.0 / j as f64; j], components)
}

/// Runs `steps` EM steps; returns the model after each step and the data
/// log-likelihood before the first step and after each one.
pub fn em_run(init: &MixtureModel, data: &[DVector<f64>], steps: usize) -> Result<(Vec<MixtureModel>, Vec<f64>)> {
    let mut models = vec![init.clone()];
    let mut lls = vec![mixture_log_likelihood(init, data)?];
    for _ in 0..steps {
        let next = em_step(models.last().expect("non-empty"), data)?.model;
        lls.push(mixture_log_likelihood(&next, data)?);
        models.push(next);
    }
    Ok((models, lls))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::renyi_divergence_closed;
    use crate::numerics::{spd_with_condition, SeededRng};
    use crate::samplers::StudentTarget;
    use crate::student::{escort_moments, sample};
    use proptest::prelude::*;

    fn moments(m1: Vec<f64>, diag: Vec<f64>) -> SufficientMoments {
        SufficientMoments { m1: DVector::from_vec(m1), m2: DMatrix::from_diagonal(&DVector::from_vec(diag)) }
    }

    fn dist(a: &SufficientMoments, b: &SufficientMoments) -> f64 {
        ((&a.m1 - &b.m1).norm_squared() + (&a.m2 - &b.m2).norm_squared()).sqrt()
    }

    #[test]
    fn prox_examples() {
        let cur = moments(vec![1.0, 2.0], vec![3.0, 4.0]);
        let tgt = moments(vec![-1.0, 0.0], vec![1.0, 2.0]);
        let far = prox_vi_update(&cur, &tgt, 1e12).unwrap();
        assert!(dist(&far, &tgt) < 1e-10);
        let mid = prox_vi_update(&cur, &tgt, 1.0).unwrap();
        assert_eq!(mid.m1, DVector::from_vec(vec![0.0, 1.0]));
        assert_eq!(mid.m2, DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0])));
        assert!(prox_vi_update(&cur, &tgt, 0.0).is_err());
        let far = prox_mle_update(&cur, &tgt, 1e12, 5).unwrap();
        assert!(dist(&far, &tgt) < 1e-10);
    }

    #[test]
    fn prox_error_product_is_exact() {
        let tgt = moments(vec![0.5, -0.25], vec![1.5, 0.75]);
        let start = moments(vec![4.0, 3.0], vec![9.0, 6.0]);
        let e0 = dist(&start, &tgt);
        for schedule in [ProxSchedule::Constant(0.3), ProxSchedule::Constant(2.0), ProxSchedule::Harmonic] {
            let mut cur = start.clone();
            for k in 1..=1000 {
                cur = prox_vi_update(&cur, &tgt, schedule.tau(k).unwrap()).unwrap();
                if k % 50 == 0 || k < 10 {
                    let expected = schedule.error_product(k).unwrap() * e0;
                    assert!((dist(&cur, &tgt) - expected).abs() <= 1e-12 * e0.max(1.0), "{schedule:?} k={k}");
                }
            }
        }
        assert!((ProxSchedule::Harmonic.error_product(9).unwrap() - 0.1).abs() < 1e-15);
        assert!(ProxSchedule::Harmonic.tau(0).is_err());
    }

    #[test]
    fn harmonic_mle_prox_is_running_mean() {
        let mut rng = SeededRng::new(1).stream(0, 0);
        let data: Vec<DVector<f64>> = (0..200).map(|_| standard_normal_vector(2, &mut rng)).collect();
        let mut cur = moments(vec![7.0, 7.0], vec![7.0, 7.0]);
        for (k, x) in data.iter().enumerate() {
            let stat = SufficientMoments { m1: x.clone(), m2: x * x.transpose() };
            // the first point replaces the initialization (τ = ∞); point k+1 uses τ_k = 1/k
            cur = if k == 0 { stat } else { prox_mle_update(&cur, &stat, ProxSchedule::Harmonic.tau(k).unwrap(), 1).unwrap() };
            let batch = SufficientMoments::from_samples(&data[..=k]).unwrap();
            assert!(dist(&cur, &batch) < 1e-12, "k={k}: {:e}", dist(&cur, &batch));
        }
    }

    proptest! {
        #[test]
        fn prox_composition(t1 in 0.01f64..100.0, t2 in 0.01f64..100.0, a in -5.0f64..5.0, b in -5.0f64..5.0) {
            let cur = moments(vec![a], vec![a * a + 1.0]);
            let tgt = moments(vec![b], vec![b * b + 2.0]);
            let two = prox_vi_update(&prox_vi_update(&cur, &tgt, t1).unwrap(), &tgt, t2).unwrap();
            // both steps keep the weight on `current` multiplicative
            let w = 1.0 / ((1.0 + t1) * (1.0 + t2));
            let one = combine(&cur, w, &tgt, 1.0 - w).unwrap();
            prop_assert!(dist(&one, &two) <= 1e-14 * (1.0 + dist(&cur, &tgt)) * 10.0);
        }
    }

    #[test]
    fn exact_vi_large_sample_matches_escort_moments() {
        let mut rng = SeededRng::new(2).stream(0, 0);
        let target = StudentParams::new(5.0, DVector::from_vec(vec![1.0, -2.0]), spd_with_condition(2, 4.0, &mut rng).unwrap()).unwrap();
        let run = vi_exact_escort(&target, 5.0, 1_000_000, 1, &mut rng).unwrap();
        assert_eq!(run.len(), 2);
        let fit = &run[1].params;
        // within-family escort moments reproduce (μ_π, Σ_π)
        let m = escort_moments(&target, 5.0).unwrap();
        let se = (m.covariance().diagonal().amax() / 1e6).sqrt();
        assert!((&fit.mu - &target.mu).amax() < 5.0 * se);
        assert!((fit.sigma.matrix() - target.sigma.matrix()).amax() < 0.02);
        assert_eq!(run[1].samples_used, 1_000_000);
    }

    #[test]
    fn vi_zero_iterations_returns_init() {
        let target = StudentParams::standard(3.0, 2).unwrap();
        let oracle = StudentTarget::new(target.clone());
        let mut rng = SeededRng::new(3).stream(0, 0);
        for run in [
            vi_exact_escort(&target, 3.0, 20, 0, &mut rng).unwrap(),
            vi_plain_mala(&oracle, 3.0, 20, 0, &mut rng).unwrap(),
            vi_scaled_mala(&oracle, 3.0, 20, 0, &mut rng).unwrap(),
        ] {
            assert_eq!(run.len(), 1);
            assert!(run[0].params.mu.amax() <= 5.0);
            assert_eq!(run[0].params.sigma.matrix(), &DMatrix::identity(2, 2));
        }
    }

    #[test]
    fn exact_vi_rejects_incompatible_targets() {
        let target = StudentParams::standard(1.0, 5).unwrap();
        let mut rng = SeededRng::new(4).stream(0, 0);
        assert!(matches!(vi_exact_escort(&target, 10.0, 50, 3, &mut rng), Err(Error::Incompatible { .. })));
    }

    #[test]
    fn scaled_mala_moments_are_running_mean_of_estimates() {
        // with n_per_iter = N, iterate k's moments equal the plain average of the k per-iteration estimates
        let target = StudentParams::standard(4.0, 2).unwrap();
        let oracle = StudentTarget::new(target);
        let mut rng = SeededRng::new(5).stream(0, 0);
        let run = vi_scaled_mala(&oracle, 4.0, 30, 6, &mut rng).unwrap();
        // recover per-iteration estimates: T̂_k = (k+1)·T_{k+1} - k·T_k
        let est: Vec<SufficientMoments> = (0..6)
            .map(|k| combine(&run[k + 1].cumulative_moments, (k + 1) as f64, &run[k].cumulative_moments, -(k as f64)).unwrap())
            .collect();
        for k in 1..=6 {
            let mut m1 = DVector::zeros(2);
            let mut m2 = DMatrix::zeros(2, 2);
            for e in &est[..k] {
                m1 += &e.m1;
                m2 += &e.m2;
            }
            let avg = SufficientMoments { m1: m1 / k as f64, m2: m2 / k as f64 };
            assert!(dist(&avg, &run[k].cumulative_moments) < 1e-10);
        }
    }

    #[test]
    fn plain_mala_vi_improves_on_initialization() {
        let target = StudentParams::new(3.0, DVector::from_element(1, 0.5), SpdMatrix::from_diagonal(&[2.0]).unwrap()).unwrap();
        let oracle = StudentTarget::new(target.clone());
        let rng = SeededRng::new(6);
        let mut improved = 0;
        for r in 0..100 {
            let run = vi_plain_mala(&oracle, 3.0, 10, 1000, &mut rng.replicate(r)).unwrap();
            let first = renyi_divergence_closed(&target, &run[0].params).unwrap().value;
            let last = renyi_divergence_closed(&target, &run.last().unwrap().params).unwrap().value;
            if last < first {
                improved += 1;
            }
        }
        assert!(improved >= 95, "{improved}");
    }

    #[test]
    fn moment_match_examples() {
        let data = vec![DVector::from_element(1, -1.0), DVector::from_element(1, 1.0)];
        let fit = mle_moment_match(&data, 3.0).unwrap();
        assert_eq!(fit.params.mu[0], 0.0);
        assert_eq!(fit.params.sigma.matrix()[(0, 0)], 1.0);
        let flat = vec![DVector::from_vec(vec![1.0, 1.0]); 5];
        assert!(matches!(mle_moment_match(&flat, 3.0), Err(Error::NonPdMoments { .. })));
    }

    #[test]
    fn likelihood_bound_holds() {
        let rng = SeededRng::new(7);
        for r in 0..100u32 {
            let mut s = rng.replicate(r);
            let nu = [1.0, 3.0, 10.0][r as usize % 3];
            let d = 1 + r as usize % 4;
            let truth = StudentParams::new(nu, standard_normal_vector(d, &mut s), spd_with_condition(d, 10.0, &mut s).unwrap()).unwrap();
            let data = sample(&truth, 50, &mut s).unwrap();
            let fit = mle_moment_match(&data, nu).unwrap();
            let mean_ll = log_likelihood(&fit.params, &data).unwrap() / data.len() as f64;
            assert!(mean_ll >= fit.bound - 1e-12, "r={r}: {mean_ll} < {}", fit.bound);
        }
    }

    #[test]
    fn gaussian_moment_match_is_the_mle() {
        let mut rng = SeededRng::new(8).stream(0, 0);
        let truth = StudentParams::new(f64::INFINITY, DVector::from_vec(vec![1.0, 2.0, 3.0]), spd_with_condition(3, 5.0, &mut rng).unwrap()).unwrap();
        let data = sample(&truth, 300, &mut rng).unwrap();
        let fit = mle_moment_match(&data, f64::INFINITY).unwrap();
        let best = log_likelihood(&fit.params, &data).unwrap();
        assert!((best / 300.0 - fit.bound).abs() < 1e-10);
        for _ in 0..50 {
            let mu = &fit.params.mu + standard_normal_vector(3, &mut rng) * 0.05;
            let c = 1.0 + 0.1 * rand::Rng::random::<f64>(&mut rng);
            let p = StudentParams::gaussian(mu, fit.params.sigma.scaled(c).unwrap()).unwrap();
            assert!(log_likelihood(&p, &data).unwrap() <= best);
        }
    }

    #[test]
    fn online_equals_batch() {
        let mut rng = SeededRng::new(9).stream(0, 0);
        let truth = StudentParams::new(4.0, DVector::from_vec(vec![0.5, -0.5]), spd_with_condition(2, 3.0, &mut rng).unwrap()).unwrap();
        let data = sample(&truth, 500, &mut rng).unwrap();
        let init = StudentParams::standard(4.0, 2).unwrap();
        let path = mle_online(data.clone(), 4.0, 500, init.clone()).unwrap();
        assert_eq!(path.len(), 501);
        assert_eq!(path[0], init);
        // one or two points give a singular covariance; the previous Σ is held
        assert_eq!(path[1].sigma, init.sigma);
        for k in 3..=500 {
            let batch = mle_moment_match(&data[..k], 4.0).unwrap().params;
            assert!((&path[k].mu - &batch.mu).amax() < 1e-12);
            assert!((path[k].sigma.matrix() - batch.sigma.matrix()).amax() < 1e-12);
        }
        assert!(mle_online(data[..3].to_vec(), 4.0, 5, init).is_err());
    }

    #[test]
    fn online_fixed_point_is_inflated_scale() {
        let mut rng = SeededRng::new(10).stream(0, 0);
        let truth = StudentParams::new(10.0, DVector::from_vec(vec![1.0, -1.0]), spd_with_condition(2, 3.0, &mut rng).unwrap()).unwrap();
        let data = sample(&truth, 100_000, &mut rng).unwrap();
        let path = mle_online(data, 10.0, 100_000, StudentParams::standard(10.0, 2).unwrap()).unwrap();
        let last = path.last().unwrap();
        let expected = truth.sigma.matrix() * 1.25;
        assert!((last.sigma.matrix() - &expected).norm() / expected.norm() < 0.05);
        assert!((&last.mu - &truth.mu).norm() < 0.05);
    }

    fn symmetric_pair() -> MixtureModel {
        let a = StudentParams::new(3.0, DVector::from_element(1, -1.0), SpdMatrix::identity(1)).unwrap();
        let b = StudentParams::new(3.0, DVector::from_element(1, 1.0), SpdMatrix::identity(1)).unwrap();
        MixtureModel::new(vec![0.5, 0.5], vec![a, b]).unwrap()
    }

    #[test]
    fn responsibility_examples() {
        let one = MixtureModel::new(vec![1.0], vec![StudentParams::standard(3.0, 2).unwrap()]).unwrap();
        let data = vec![DVector::from_vec(vec![1.0, 2.0]), DVector::from_vec(vec![-3.0, 0.0])];
        let r = em_responsibilities(&one, &data).unwrap();
        assert!(r.gamma.iter().all(|g| *g == 1.0));
        let r = em_responsibilities(&symmetric_pair(), &[DVector::zeros(1)]).unwrap();
        assert!((r.gamma[(0, 0)] - 0.5).abs() < 1e-15 && (r.gamma[(0, 1)] - 0.5).abs() < 1e-15);

        // Gaussian components far from a point underflow in linear space but not in log space
        let g = |m: f64| StudentParams::gaussian(DVector::from_element(1, m), SpdMatrix::identity(1)).unwrap();
        let far = MixtureModel::new(vec![0.5, 0.5], vec![g(0.0), g(1.0)]).unwrap();
        let r = em_responsibilities(&far, &[DVector::from_element(1, 60.0)]).unwrap();
        assert!(r.underflow_rows.is_empty());
        assert!(r.gamma[(0, 1)] > 0.999);
    }

    #[test]
    fn responsibilities_rows_sum_to_one() {
        let mut rng = SeededRng::new(11).stream(0, 0);
        let model = em_init(3.0, 3, 5, &mut rng).unwrap();
        let data = model.sample(200, &mut rng);
        let r = em_responsibilities(&model, &data).unwrap();
        for row in r.gamma.row_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_component_em_is_moment_matching() {
        let mut rng = SeededRng::new(12).stream(0, 0);
        let truth = StudentParams::new(3.0, DVector::from_vec(vec![1.0, 2.0]), spd_with_condition(2, 5.0, &mut rng).unwrap()).unwrap();
        let data = sample(&truth, 100, &mut rng).unwrap();
        let model = MixtureModel::new(vec![1.0], vec![StudentParams::standard(3.0, 2).unwrap()]).unwrap();
        let step = em_step(&model, &data).unwrap();
        let fit = mle_moment_match(&data, 3.0).unwrap().params;
        assert!((&step.model.components[0].mu - &fit.mu).amax() < 1e-12);
        assert!((step.model.components[0].sigma.matrix() - fit.sigma.matrix()).amax() < 1e-12);
        let ll = mixture_log_likelihood(&step.model, &data).unwrap();
        assert!((ll - log_likelihood(&step.model.components[0], &data).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn gaussian_em_is_monotone() {
        let rng = SeededRng::new(13);
        for r in 0..5 {
            let mut s = rng.replicate(r);
            let truth = em_init(f64::INFINITY, 2, 3, &mut s).unwrap();
            let data = truth.sample(150, &mut s);
            let init = em_init(f64::INFINITY, 2, 3, &mut s).unwrap();
            let (_, lls) = em_run(&init, &data, 100).unwrap();
            for w in lls.windows(2) {
                assert!(w[1] >= w[0] - 1e-8 * w[0].abs(), "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn empty_components_are_frozen_and_weights_sum_to_one() {
        let g = |m: f64| StudentParams::gaussian(DVector::from_element(1, m), SpdMatrix::identity(1)).unwrap();
        let model = MixtureModel::new(vec![0.5, 0.5], vec![g(0.0), g(1e6)]).unwrap();
        let data: Vec<_> = [-0.5, 0.1, 0.4, 1.2].iter().map(|v| DVector::from_element(1, *v)).collect();
        let step = em_step(&model, &data).unwrap();
        assert_eq!(step.frozen, vec![1]);
        assert_eq!(step.model.components[1], model.components[1]);
        assert!((step.model.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_component_gets_jitter() {
        let g = |m: f64| StudentParams::gaussian(DVector::from_vec(vec![m, 0.0]), SpdMatrix::identity(2)).unwrap();
        let model = MixtureModel::new(vec![0.5, 0.5], vec![g(-50.0), g(50.0)]).unwrap();
        // the second cluster lies on a line, so its covariance is singular
        let mut data: Vec<_> = (0..5).map(|i| DVector::from_vec(vec![-50.0 + i as f64, (i * i) as f64])).collect();
        data.extend((0..5).map(|i| DVector::from_vec(vec![50.0 + i as f64, 0.0])));
        let step = em_step(&model, &data).unwrap();
        assert_eq!(step.jittered, vec![1]);
    }
}
