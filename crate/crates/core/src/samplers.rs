//! Metropolis-adjusted Langevin (MALA) kernels targeting escorts `π^α`
//! given an unnormalized log-density oracle.

use nalgebra::DVector;
use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{standard_normal_vector, uniform_box, SpdMatrix};
use crate::student::{grad_log_density, log_density, StudentParams};

/// Unnormalized log-density `log π̃` and its gradient.
pub trait TargetOracle: Send + Sync {
    fn dim(&self) -> usize;
    fn log_unnormalized(&self, x: &DVector<f64>) -> f64;
    fn grad_log_unnormalized(&self, x: &DVector<f64>) -> DVector<f64>;
}

/// A Student (or Gaussian) target.
#[derive(Debug, Clone)]
pub struct StudentTarget {
    pub params: StudentParams,
}

impl StudentTarget {
    pub fn new(params: StudentParams) -> Self {
        Self { params }
    }
}

impl TargetOracle for StudentTarget {
    fn dim(&self) -> usize {
        self.params.dim()
    }

    fn log_unnormalized(&self, x: &DVector<f64>) -> f64 {
        log_density(&self.params, x).unwrap_or(f64::NAN)
    }

    fn grad_log_unnormalized(&self, x: &DVector<f64>) -> DVector<f64> {
        grad_log_density(&self.params, x).unwrap_or_else(|_| DVector::from_element(x.len(), f64::NAN))
    }
}

/// An oracle built from two closures.
pub struct FnTarget<F, G> {
    dim: usize,
    log_fn: F,
    grad_fn: G,
}

impl<F, G> FnTarget<F, G>
where
    F: Fn(&DVector<f64>) -> f64 + Send + Sync,
    G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
{
    pub fn new(dim: usize, log_fn: F, grad_fn: G) -> Self {
        Self { dim, log_fn, grad_fn }
    }
}

impl<F, G> TargetOracle for FnTarget<F, G>
where
    F: Fn(&DVector<f64>) -> f64 + Send + Sync,
    G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_unnormalized(&self, x: &DVector<f64>) -> f64 {
        (self.log_fn)(x)
    }

    fn grad_log_unnormalized(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.grad_fn)(x)
    }
}

/// Largest relative error of the oracle gradient against central
/// differences with step `h` over the probe points.
pub fn gradient_check(oracle: &dyn TargetOracle, points: &[DVector<f64>], h: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for x in points {
        let g = oracle.grad_log_unnormalized(x);
        for i in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (oracle.log_unnormalized(&xp) - oracle.log_unnormalized(&xm)) / (2.0 * h);
            let err = (fd - g[i]).abs() / g[i].abs().max(1.0);
            worst = worst.max(err);
        }
    }
    worst
}

/// Step size `σ_d² = 0.574²/d^(1/3)`.
pub fn default_step(d: usize) -> f64 {
    0.574 * 0.574 / (d as f64).cbrt()
}

/// Initial point drawn uniformly from `[-5, 5]^d`.
pub fn default_init<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<f64> {
    uniform_box(d, -5.0, 5.0, rng)
}

#[derive(Debug, Clone)]
pub struct MalaState {
    pub x: DVector<f64>,
    pub alpha: f64,
    pub step: f64,
    pub scale: SpdMatrix,
    pub accepted_count: u64,
    pub proposed_count: u64,
    /// Proposals rejected because the drift, the proposal or its
    /// log-density was not finite.
    pub nonfinite_count: u64,
    log_target: f64,
    drift: DVector<f64>,
}

impl MalaState {
    pub fn new(oracle: &dyn TargetOracle, x: DVector<f64>, alpha: f64, step: f64, scale: SpdMatrix) -> Result<Self> {
        if x.len() != oracle.dim() {
            return Err(Error::DimensionMismatch { expected: oracle.dim(), got: x.len() });
        }
        if scale.dim() != x.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), got: scale.dim() });
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
        }
        if !(alpha > 0.0) {
            return Err(Error::InvalidArgument(format!("escort exponent must be positive, got {alpha}")));
        }
        let log_target = alpha * oracle.log_unnormalized(&x);
        let drift = drift(oracle, &x, alpha, step, &scale);
        if !log_target.is_finite() || drift.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("initial point has a non-finite log-density or gradient".into()));
        }
        Ok(Self { x, alpha, step, scale, accepted_count: 0, proposed_count: 0, nonfinite_count: 0, log_target, drift })
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed_count == 0 {
            0.0
        } else {
            self.accepted_count as f64 / self.proposed_count as f64
        }
    }

    /// Replaces the preconditioner, keeping the chain position.
    pub fn set_scale(&mut self, oracle: &dyn TargetOracle, scale: SpdMatrix) -> Result<()> {
        if scale.dim() != self.x.len() {
            return Err(Error::DimensionMismatch { expected: self.x.len(), got: scale.dim() });
        }
        self.drift = drift(oracle, &self.x, self.alpha, self.step, &scale);
        self.scale = scale;
        Ok(())
    }
}

/// `½ σ² α A ∇log π̃(x)`.
fn drift(oracle: &dyn TargetOracle, x: &DVector<f64>, alpha: f64, step: f64, scale: &SpdMatrix) -> DVector<f64> {
    scale.matrix() * oracle.grad_log_unnormalized(x) * (0.5 * step * alpha)
}

/// `log N(to; from + drift(from), σ²A)` up to the constant shared by both directions.
fn log_kernel(to: &DVector<f64>, from: &DVector<f64>, drift_from: &DVector<f64>, step: f64, scale: &SpdMatrix) -> f64 {
    let r = to - from - drift_from;
    -0.5 * scale.quad_form(&r).expect("dimensions checked at construction") / step
}

/// Log Metropolis–Hastings ratio for moving from `x` to `y` under the
/// escort target `π̃^α`.
pub fn log_acceptance_ratio(oracle: &dyn TargetOracle, x: &DVector<f64>, y: &DVector<f64>, alpha: f64, step: f64, scale: &SpdMatrix) -> f64 {
    let dx = drift(oracle, x, alpha, step, scale);
    let dy = drift(oracle, y, alpha, step, scale);
    alpha * (oracle.log_unnormalized(y) - oracle.log_unnormalized(x)) + log_kernel(x, y, &dy, step, scale)
        - log_kernel(y, x, &dx, step, scale)
}

/// One MALA transition; returns whether the proposal was accepted.
pub fn mala_step<R: Rng + ?Sized>(state: &mut MalaState, oracle: &dyn TargetOracle, rng: &mut R) -> bool {
    state.proposed_count += 1;
    let z = standard_normal_vector(state.x.len(), rng);
    let y = &state.x + &state.drift + state.scale.mul_factor(&z) * state.step.sqrt();
    let u: f64 = rng.random();
    if y.iter().any(|v| !v.is_finite()) {
        state.nonfinite_count += 1;
        return false;
    }
    let log_target_y = state.alpha * oracle.log_unnormalized(&y);
    let drift_y = drift(oracle, &y, state.alpha, state.step, &state.scale);
    if log_target_y.is_nan() || log_target_y == f64::INFINITY || drift_y.iter().any(|v| !v.is_finite()) {
        state.nonfinite_count += 1;
        return false;
    }
    let log_ratio = log_target_y - state.log_target + log_kernel(&state.x, &y, &drift_y, state.step, &state.scale)
        - log_kernel(&y, &state.x, &state.drift, state.step, &state.scale);
    if u.ln() < log_ratio {
        state.x = y;
        state.log_target = log_target_y;
        state.drift = drift_y;
        state.accepted_count += 1;
        true
    } else {
        false
    }
}

/// Runs `n_steps` transitions and records every post-step state.
pub fn mala_run<R: Rng + ?Sized>(state: &mut MalaState, oracle: &dyn TargetOracle, n_steps: usize, rng: &mut R) -> Vec<DVector<f64>> {
    (0..n_steps)
        .map(|_| {
            mala_step(state, oracle, rng);
            state.x.clone()
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct MalaChain {
    pub samples: Vec<DVector<f64>>,
    pub acceptance_rate: f64,
    pub final_state: MalaState,
}

pub fn mala_chain<R: Rng + ?Sized>(
    oracle: &dyn TargetOracle,
    alpha: f64,
    n_steps: usize,
    init_x: DVector<f64>,
    scale: SpdMatrix,
    step: f64,
    rng: &mut R,
) -> Result<MalaChain> {
    if n_steps == 0 {
        return Err(Error::InvalidArgument("a chain needs at least one step".into()));
    }
    let mut state = MalaState::new(oracle, init_x, alpha, step, scale)?;
    let samples = mala_run(&mut state, oracle, n_steps, rng);
    Ok(MalaChain { samples, acceptance_rate: state.acceptance_rate(), final_state: state })
}
