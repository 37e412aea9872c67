//! Student and Gaussian members of the λ-exponential family: duality
//! identities, Rényi divergences, MALA samplers, moment-matching VI,
//! proximal MLE and mixture EM.

pub mod divergence;
pub mod duality;
pub mod error;
pub mod inference;
pub mod numerics;
pub mod quadrature;
pub mod samplers;
pub mod student;

pub use error::{Error, Result};
pub use numerics::{SeededRng, SpdMatrix};
pub use student::{StudentParams, SufficientMoments};
