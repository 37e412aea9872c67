//! Escort curves of a scalar λ-family with `T(x) = -x²`, `θ = 2` on `[-5, 5]`.

use std::path::Path;

use lambda_family::duality::{escort_density_1d, integrate_density, Density1d, Scalar1DFamily, DEFAULT_QUAD_TOL};
use lambda_family::quadrature::Domain;

use crate::error::{io_err, Result};

pub const LAMBDAS: [f64; 3] = [-1.0, 0.0, 1.0];
pub const ALPHAS: [f64; 3] = [0.5, 1.0, 2.0];
pub const WINDOW: (f64, f64) = (-5.0, 5.0);
pub const THETA: f64 = 2.0;
pub const DEFAULT_POINTS: usize = 1001;

/// The family at `λ`. For `λ > 0` the support is `|x| < 1/√(λθ)`, whose
/// edges are passed to the integrator as breakpoints.
pub fn family(lambda: f64) -> Scalar1DFamily {
    let f = Scalar1DFamily::new(lambda, |x: f64| -x * x, THETA, Domain::Interval(WINDOW.0, WINDOW.1));
    if lambda > 0.0 {
        let edge = 1.0 / (lambda * THETA).sqrt();
        f.with_breakpoints(vec![-edge, edge])
    } else {
        f
    }
}

/// The three escort densities at `λ`, in the order of [`ALPHAS`].
pub fn densities(lambda: f64) -> Result<Vec<Density1d>> {
    let fam = family(lambda);
    Ok(ALPHAS.iter().map(|&a| escort_density_1d(&fam, a, DEFAULT_QUAD_TOL)).collect::<lambda_family::Result<_>>()?)
}

/// `(λ, α, ∫density)` for all nine curves.
pub fn normalization_table() -> Result<Vec<(f64, f64, f64)>> {
    let mut out = Vec::new();
    for lambda in LAMBDAS {
        for (alpha, dens) in ALPHAS.iter().zip(densities(lambda)?) {
            out.push((lambda, *alpha, integrate_density(&dens, DEFAULT_QUAD_TOL)?));
        }
    }
    Ok(out)
}

pub fn grid(points: usize) -> Vec<f64> {
    let (a, b) = WINDOW;
    let n = points.max(2);
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

pub fn curve_file_name(lambda: f64) -> String {
    format!("fig1_lambda_{lambda}.csv")
}

/// One CSV per `λ`: `x` then the density for each `α`.
pub fn write_curves(out_dir: &Path, points: usize) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let xs = grid(points);
    for lambda in LAMBDAS {
        let dens = densities(lambda)?;
        let path = out_dir.join(curve_file_name(lambda));
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(std::iter::once("x".to_string()).chain(ALPHAS.iter().map(|a| format!("alpha_{a}"))))?;
        for &x in &xs {
            w.write_record(std::iter::once(x).chain(dens.iter().map(|d| d.pdf(x))).map(|v| v.to_string()))?;
        }
        w.flush().map_err(io_err(&path))?;
    }
    Ok(())
}
