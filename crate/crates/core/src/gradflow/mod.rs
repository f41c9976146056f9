//! Explicit finite-difference solver for `∂_t u = L_p u` on rectangular
//! grids with fixed (Dirichlet) boundary values.

mod config;
mod grid;
mod run;

pub use config::{read_snapshot, write_snapshot, FlowConfig, MapSpec, ModeName, OutputSpec};
pub use grid::GridField;
pub use run::{
    run_flow, run_flow_with, FlowMode, FlowRun, FlowRunStats, HaltReason, RunOptions, MAX_MONITOR_VIOLATIONS,
};

use crate::error::{QcError, Result};
use crate::linalg::{SquareMatrix, Vector};
use crate::operators::{flux_linearization, lh_upper_constant};
use crate::par::{self, Execution};

pub const DEFAULT_SAFETY: f64 = 0.2;

/// `ln K^{np} = p (n/2 ln|q|² − ln det q)`.
fn log_energy_density(q: &SquareMatrix, p: f64) -> Result<f64> {
    let d = q.det();
    if !(d > 0.0) {
        return Err(QcError::NonPositiveDeterminant(d));
    }
    Ok(p * (0.5 * q.dim() as f64 * q.norm_sq().ln() - d.ln()))
}

/// Trapezoidal quadrature of `K^{np}` divided by the domain measure.
pub fn energy(grid: &GridField, p: f64) -> Result<f64> {
    energy_with(grid, p, Execution::default())
}

pub fn energy_with(grid: &GridField, p: f64, exec: Execution) -> Result<f64> {
    let dens = par::try_map_indexed(exec, grid.len(), |i| log_energy_density(&grid.jacobian(i), p))?;
    let total: f64 = dens.iter().enumerate().map(|(i, l)| grid.weight(i) * l.exp()).sum();
    Ok(total / grid.volume())
}

/// Largest Legendre–Hadamard upper bound `C₂ p² (|q|^{np−2}/det^p + |q|^{n(p+2)−2}/det^{p+2})`
/// over the nodes.
fn lambda_max(grid: &GridField, p: f64, exec: Execution) -> Result<f64> {
    let n = grid.dim() as f64;
    let c2 = lh_upper_constant(grid.dim());
    let vals = par::try_map_indexed(exec, grid.len(), |i| {
        let q = grid.jacobian(i);
        let d = q.det();
        if !(d > 0.0) {
            return Err(QcError::NonPositiveDeterminant(d));
        }
        let lq = 0.5 * q.norm_sq().ln();
        let w1 = ((n * p - 2.0) * lq - p * d.ln()).exp();
        let w2 = ((n * (p + 2.0) - 2.0) * lq - (p + 2.0) * d.ln()).exp();
        Ok(c2 * p * p * (w1 + w2))
    })?;
    Ok(vals.into_iter().fold(0.0, f64::max))
}

/// `c h² / Λ_max` with safety factor `c`.
pub fn dtmax(grid: &GridField, p: f64, safety: f64) -> Result<f64> {
    Ok(safety * grid.spacing() * grid.spacing() / lambda_max(grid, p, Execution::default())?)
}

/// Discrete `L_p u` at every node (zero on the boundary).
pub fn discrete_lp(grid: &GridField, p: f64, exec: Execution) -> Result<Vec<Vector>> {
    par::try_map_indexed(exec, grid.len(), |i| -> Result<Vector> {
        if grid.is_boundary(i) {
            return Ok(Vector::zeros(grid.dim()));
        }
        let (q, h) = grid.jet(i);
        Ok(flux_linearization(&q, p)?.contract_hessian(&h))
    })
}

/// Largest `|A(du₀) ∂²u₀|` over the boundary nodes, using one-sided
/// differences there.
pub fn compatibility_check(grid: &GridField, p: f64) -> Result<f64> {
    let vals = par::try_map_indexed(Execution::default(), grid.len(), |i| -> Result<f64> {
        if !grid.is_boundary(i) {
            return Ok(0.0);
        }
        let (q, h) = grid.jet(i);
        Ok(flux_linearization(&q, p)?.contract_hessian(&h).max_abs())
    })?;
    Ok(vals.into_iter().fold(0.0, f64::max))
}

/// One forward Euler step of size `dt`. Fails with `DeterminantCollapse` if
/// any node's determinant drops below the grid's floor, and with `NonFinite`
/// on overflow; `grid` is left untouched in both cases.
pub fn explicit_step(grid: &GridField, p: f64, dt: f64) -> Result<GridField> {
    explicit_step_with(grid, p, dt, Execution::default())
}

pub fn explicit_step_with(grid: &GridField, p: f64, dt: f64, exec: Execution) -> Result<GridField> {
    frozen_step(grid, grid, p, dt, exec)
}

/// Euler step of `u ↦ u + dt A(dv) ∂²u` with coefficients taken from `coeffs`
/// (a grid with the same layout). `coeffs == grid` is the plain explicit step.
pub(crate) fn frozen_step(grid: &GridField, coeffs: &GridField, p: f64, dt: f64, exec: Execution) -> Result<GridField> {
    let values = par::try_map_indexed(exec, grid.len(), |i| -> Result<Vector> {
        let u = grid.values()[i];
        if grid.is_boundary(i) {
            return Ok(u);
        }
        let (_, h) = grid.jet(i);
        Ok(u + flux_linearization(&coeffs.jacobian(i), p)?.contract_hessian(&h).scale(dt))
    })?;
    accept(grid, values, exec)
}

pub(crate) fn accept(grid: &GridField, values: Vec<Vector>, exec: Execution) -> Result<GridField> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(QcError::NonFinite("grid values"));
    }
    let next = grid.with_values(values, exec);
    let min_det = next.min_det();
    if !(min_det >= next.det_floor()) {
        return Err(QcError::DeterminantCollapse { min_det, floor: next.det_floor() });
    }
    Ok(next)
}
