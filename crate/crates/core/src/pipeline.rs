//! Solve-and-recover convenience used by the CLI and the integration tests.
//! Meridian problems are solved on the half-domain and then mirrored so the
//! planar analyses see a field that is smooth across the axis.

use std::sync::Arc;

use thiserror::Error;

use crate::domain::{DomainError, DomainSpec};
use crate::fields::{recover_gradient, recover_hessian, FieldError, GradientField, HessianField};
use crate::mesh::{triangulate_domain, Mesh, MeshError};
use crate::solver::{solve, Problem, ScalarField, SolveReport, SolverError, SourceSpec};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Clone, Debug)]
pub struct Solved {
    pub domain: DomainSpec,
    pub source: SourceSpec,
    pub weight_exponent: u32,
    /// Solution on the computational mesh (half-domain for meridian problems).
    pub solution: ScalarField,
    pub report: SolveReport,
    /// Solution on the full planar mesh (mirrored for meridian problems).
    pub planar: ScalarField,
    pub gradient: GradientField,
    pub hessian: HessianField,
}

impl Solved {
    pub fn h(&self) -> f64 {
        self.solution.mesh.h
    }

    pub fn is_meridian(&self) -> bool {
        self.weight_exponent > 0 || self.domain.dim() > 2
    }
}

pub fn solve_domain(
    domain: &DomainSpec,
    source: SourceSpec,
    h: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Solved, PipelineError> {
    domain.validate()?;
    let (_, m) = domain.computational_region()?;
    let mesh: Arc<Mesh> = Arc::new(triangulate_domain(domain, h)?);
    let problem = Problem::new(mesh, source, m);
    let (solution, report) = solve(&problem, tol, max_iter)?;
    let planar = if domain.dim() > 2 { solution.mirrored() } else { solution.clone() };
    let gradient = recover_gradient(&planar)?;
    let hessian = recover_hessian(&planar)?;
    Ok(Solved {
        domain: *domain,
        source,
        weight_exponent: m,
        solution,
        report,
        planar,
        gradient,
        hessian,
    })
}
