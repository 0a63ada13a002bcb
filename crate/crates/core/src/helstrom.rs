//! Minimum-error discrimination of two known, equiprobable states.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::qmat::{self, HermitianOperator, C64};
use crate::states::{DensityMatrix, PovmSet};

/// Eigenvalues of `(ρ₁ − ρ₂)/2` with magnitude below this are treated as zero
/// and their eigenspace goes to the second outcome.
const ZERO_EIGENVALUE_TOL: f64 = 1e-14;

#[derive(Clone, Debug)]
pub struct DiscriminationReport {
    pub povm: PovmSet,
    pub error_rate: f64,
    pub extremal_residual: f64,
}

fn check_pair(povm: &PovmSet, rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<()> {
    if povm.len() != 2 {
        return Err(Error::InvalidPovm(format!(
            "two-state discrimination needs 2 elements, got {}",
            povm.len()
        )));
    }
    for d in [rho1.dim(), rho2.dim()] {
        if d != povm.dim() {
            return Err(Error::DimensionMismatch {
                expected: povm.dim(),
                found: d,
            });
        }
    }
    Ok(())
}

/// `½(Tr[Π₁ρ₂] + Tr[Π₂ρ₁])`.
pub fn error_rate(povm: &PovmSet, rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<f64> {
    check_pair(povm, rho1, rho2)?;
    let e = povm.elements();
    Ok(0.5 * (qmat::trace_product(&e[0], rho2.op())? + qmat::trace_product(&e[1], rho1.op())?))
}

/// Helstrom bound for two equiprobable pure states with `|⟨1|2⟩| = overlap`.
pub fn helstrom_bound_pure(overlap: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&overlap) {
        return Err(Error::InvalidParameter(format!(
            "overlap magnitude {overlap} outside [0, 1]"
        )));
    }
    Ok(0.5 * (1.0 - (1.0 - overlap * overlap).sqrt()))
}

/// Optimal two-outcome measurement: `Π₁` projects onto the strictly positive
/// eigenspace of `(ρ₁ − ρ₂)/2` and `Π₂ = I − Π₁`.
pub fn helstrom_two_state(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<DiscriminationReport> {
    let delta = rho1.op().sub(rho2.op())?.scale(0.5);
    let spec = delta.spectrum();
    let pi1 = spec.map(|e| if e > ZERO_EIGENVALUE_TOL { 1.0 } else { 0.0 });
    let pi2 = HermitianOperator::identity(rho1.dim()).sub(&pi1)?;
    let povm = PovmSet::new(vec![pi1, pi2], vec!["1".into(), "2".into()])?;
    let error_rate = error_rate(&povm, rho1, rho2)?;
    let extremal_residual = check_extremal(&povm, &[rho1.clone(), rho2.clone()])?;
    Ok(DiscriminationReport {
        povm,
        error_rate,
        extremal_residual,
    })
}

/// Grid search over qubit projective measurements `{P_n, I − P_n}` with
/// `P_n = (I + n·σ)/2`. Polar angle takes `grid_steps` points on `[0, π]`,
/// azimuth `grid_steps` points on `[0, 2π)`.
pub fn brute_force_oracle(rho1: &DensityMatrix, rho2: &DensityMatrix, grid_steps: usize) -> Result<f64> {
    for d in [rho1.dim(), rho2.dim()] {
        if d != 2 {
            return Err(Error::UnsupportedDimension(d));
        }
    }
    if grid_steps < 2 {
        return Err(Error::InvalidParameter("grid_steps must be at least 2".into()));
    }
    // ER(P) = ½(Tr[P ρ₂] + Tr[(I − P) ρ₁]) = ½(1 + Tr[P (ρ₂ − ρ₁)])
    let diff = rho2.op().matrix() - rho1.op().matrix();
    let steps = grid_steps as f64;
    let best = (0..grid_steps)
        .into_par_iter()
        .map(|a| {
            let theta = PI * a as f64 / (steps - 1.0);
            let (st, ct) = theta.sin_cos();
            (0..grid_steps)
                .map(|b| {
                    let phi = 2.0 * PI * b as f64 / steps;
                    let (sp, cp) = phi.sin_cos();
                    let (nx, ny, nz) = (st * cp, st * sp, ct);
                    let p00 = C64::new(0.5 * (1.0 + nz), 0.0);
                    let p11 = C64::new(0.5 * (1.0 - nz), 0.0);
                    let p01 = C64::new(0.5 * nx, -0.5 * ny);
                    let p10 = p01.conj();
                    let tr = p00 * diff[(0, 0)] + p01 * diff[(1, 0)] + p10 * diff[(0, 1)] + p11 * diff[(1, 1)];
                    0.5 * (1.0 + tr.re)
                })
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| f64::INFINITY, f64::min);
    Ok(best)
}

/// Residual of the minimum-error optimality conditions for a candidate POVM.
///
/// With `Λ = Σᵢ ρᵢΠᵢ` this is the largest of the stationarity violations
/// `‖ρᵢΠᵢ − ΛΠᵢ‖_F` and of the negative parts of `Λ − ρᵢ`. Stationarity alone
/// is also met by the worst possible assignment (e.g. the optimal POVM with
/// its outcomes swapped); the positivity part separates the two.
pub fn check_extremal(povm: &PovmSet, states: &[DensityMatrix]) -> Result<f64> {
    if states.len() != povm.len() {
        return Err(Error::InvalidParameter(format!(
            "{} states for {} POVM elements",
            states.len(),
            povm.len()
        )));
    }
    let dim = povm.dim();
    let products: Vec<DMatrix<C64>> = states
        .iter()
        .zip(povm.elements())
        .map(|(rho, pi)| {
            if rho.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: rho.dim(),
                });
            }
            Ok(rho.op().matrix() * pi.matrix())
        })
        .collect::<Result<_>>()?;
    let lambda = products
        .iter()
        .fold(DMatrix::<C64>::zeros(dim, dim), |acc, p| acc + p);
    let mut residual: f64 = 0.0;
    for (p, pi) in products.iter().zip(povm.elements()) {
        let r = p - &lambda * pi.matrix();
        residual = residual.max(r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt());
    }
    let lambda_h = HermitianOperator::symmetrized(lambda);
    for rho in states {
        let gap = lambda_h.sub(rho.op())?.min_eigenvalue();
        residual = residual.max(-gap);
    }
    Ok(residual)
}
