//! p-Laplacian machinery: the map `a_p`, P1 assembly, a Newton minimizer and norms.

mod ap;
mod assemble;
mod newton;
mod norms;
mod sparse;

pub use ap::{
    a_p, a_p_scalar, conjugate, flux_sensitivity, gradient_floor, inequality_suite,
    monotonicity_gap, InequalityReport,
};
pub use assemble::{Constraint, EnergySpec, Load, MIDPOINT_BASIS};
pub(crate) use newton::Stopwatch;
pub use newton::{minimize_objective, SolveConfig, SolveReport, StageReport};
pub use norms::{grad_lp_power, grad_lp_power_weighted, lp_power, norms, Norms};
pub use sparse::{pcg, remove_weighted_mean, CgStats, CsrMatrix};

use std::sync::Arc;

use crate::error::Result;
use crate::mesh::{FieldRole, NodalField};

/// A smooth convex energy in a finite number of unknowns.
pub trait Objective {
    fn dofs(&self) -> usize;
    fn energy(&self, u: &[f64]) -> f64;
    /// Gradient and the norm below which it cannot be resolved in floating point.
    fn gradient(&self, u: &[f64]) -> (Vec<f64>, f64);
    /// Hessian of the `γ`-regularized energy.
    fn hessian(&self, u: &[f64], gamma: f64) -> CsrMatrix;
    /// A matrix whose quadratic model lies above the energy, used when the
    /// Newton step overshoots. `None` when there is none.
    fn majorant(&self, _u: &[f64], _gamma: f64) -> Option<CsrMatrix> {
        None
    }
    /// Quadrature weights when constants are factored out, `None` otherwise.
    fn mean_weights(&self) -> Option<&[f64]>;
}

/// Minimizes `spec` starting from `initial`.
pub fn minimize(
    spec: &EnergySpec,
    config: &SolveConfig,
    initial: &NodalField,
) -> Result<(NodalField, SolveReport)> {
    if initial.values().len() != spec.dofs() {
        return Err(crate::Error::MeshMismatch(
            "initial guess lives on a different mesh".into(),
        ));
    }
    let (u, report) = minimize_objective(spec, config, initial.values().to_vec())?;
    let role = match spec.constraint() {
        Constraint::PeriodicZeroMean => FieldRole::Corrector,
        _ => FieldRole::Solution,
    };
    let field = NodalField::new(Arc::clone(spec.mesh()), u, spec.p(), role)?;
    Ok((field, report))
}
