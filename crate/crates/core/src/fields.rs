//! Gradient and Hessian recovery from piecewise-linear fields by
//! least-squares polynomial fits over vertex patches.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::geometry::{Sym2, Vec2};
use crate::mesh::Mesh;
use crate::solver::{basis_gradients, ScalarField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("patch around vertex {vertex} is rank deficient")]
    PatchRankFailure { vertex: usize },
}

#[derive(Clone, Debug)]
pub struct GradientField {
    pub mesh: Arc<Mesh>,
    pub values: Vec<Vec2>,
}

/// Quadratic model `value + grad·d + ½ dᵀ hess d` with `d = x − center`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadraticFit {
    pub center: Vec2,
    pub value: f64,
    pub grad: Vec2,
    pub hess: Sym2,
}

impl QuadraticFit {
    pub fn value_at(&self, x: Vec2) -> f64 {
        let d = x - self.center;
        self.value + self.grad.dot(d) + 0.5 * self.hess.quadratic_form(d)
    }

    pub fn grad_at(&self, x: Vec2) -> Vec2 {
        self.grad + self.hess.mul_vec(x - self.center)
    }
}

#[derive(Clone, Debug)]
pub struct HessianField {
    pub mesh: Arc<Mesh>,
    pub values: Vec<Sym2>,
    pub fits: Vec<QuadraticFit>,
    /// Vertices within one ring of the Dirichlet boundary.
    pub low_confidence: Vec<bool>,
}

impl HessianField {
    /// Vertex gradients of the quadratic fits (second-order accurate, smoother
    /// than the linear recovery).
    pub fn fit_gradient(&self) -> GradientField {
        GradientField {
            mesh: self.mesh.clone(),
            values: self.fits.iter().map(|f| f.grad).collect(),
        }
    }
}

const RANK_TOL: f64 = 1e-8;

/// Least-squares solve in scaled coordinates; None when the design matrix is rank deficient.
fn least_squares(rows: &[Vec<f64>], rhs: &[f64]) -> Option<DVector<f64>> {
    let k = rows[0].len();
    if rows.len() < k {
        return None;
    }
    let a = DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]);
    let b = DVector::from_column_slice(rhs);
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > RANK_TOL * smax) {
        return None;
    }
    svd.solve(&b, 0.0).ok()
}

fn linear_fit(mesh: &Mesh, values: &[f64], v: usize, patch: &[usize]) -> Option<Vec2> {
    let c = mesh.vertices[v];
    let s = mesh.h;
    let rows: Vec<Vec<f64>> = patch
        .iter()
        .map(|&w| {
            let d = (mesh.vertices[w] - c) / s;
            vec![1.0, d.x, d.y]
        })
        .collect();
    let rhs: Vec<f64> = patch.iter().map(|&w| values[w]).collect();
    let x = least_squares(&rows, &rhs)?;
    Some(Vec2::new(x[1], x[2]) / s)
}

fn quadratic_fit(mesh: &Mesh, values: &[f64], v: usize, patch: &[usize]) -> Option<QuadraticFit> {
    let c = mesh.vertices[v];
    let s = mesh.h;
    let rows: Vec<Vec<f64>> = patch
        .iter()
        .map(|&w| {
            let d = (mesh.vertices[w] - c) / s;
            vec![1.0, d.x, d.y, 0.5 * d.x * d.x, d.x * d.y, 0.5 * d.y * d.y]
        })
        .collect();
    let rhs: Vec<f64> = patch.iter().map(|&w| values[w]).collect();
    let x = least_squares(&rows, &rhs)?;
    Some(QuadraticFit {
        center: c,
        value: x[0],
        grad: Vec2::new(x[1], x[2]) / s,
        hess: Sym2::new(x[3], x[4], x[5]).scale(1.0 / (s * s)),
    })
}

/// Per-vertex linear least-squares fit over the one-ring (extended when rank deficient).
pub fn recover_gradient(field: &ScalarField) -> Result<GradientField, FieldError> {
    let mesh = &field.mesh;
    let mut values = Vec::with_capacity(mesh.n_vertices());
    for v in 0..mesh.n_vertices() {
        let mut rings = 1;
        let g = loop {
            if let Some(g) = linear_fit(mesh, &field.values, v, &mesh.ring(v, rings)) {
                break g;
            }
            rings += 1;
            if rings > 3 {
                return Err(FieldError::PatchRankFailure { vertex: v });
            }
        };
        values.push(g);
    }
    Ok(GradientField {
        mesh: mesh.clone(),
        values,
    })
}

/// Per-vertex quadratic least-squares fit over the two-ring (extended when rank deficient).
pub fn recover_hessian(field: &ScalarField) -> Result<HessianField, FieldError> {
    let mesh = &field.mesh;
    let mut fits = Vec::with_capacity(mesh.n_vertices());
    for v in 0..mesh.n_vertices() {
        let mut rings = 2;
        let fit = loop {
            if let Some(f) = quadratic_fit(mesh, &field.values, v, &mesh.ring(v, rings)) {
                break f;
            }
            rings += 1;
            if rings > 4 {
                return Err(FieldError::PatchRankFailure { vertex: v });
            }
        };
        fits.push(fit);
    }
    let hops = mesh.hops_to_boundary();
    Ok(HessianField {
        mesh: mesh.clone(),
        values: fits.iter().map(|f| f.hess).collect(),
        fits,
        low_confidence: hops.iter().map(|&k| k <= 1).collect(),
    })
}

/// Vertexwise `∇u·θ`.
pub fn directional_derivative(gradient: &GradientField, theta: Vec2) -> ScalarField {
    ScalarField::new(
        gradient.mesh.clone(),
        gradient.values.iter().map(|g| g.dot(theta)).collect(),
    )
}

/// Local model of u: barycentric blend of the three vertex quadratic fits,
/// `q(x) = Σ λ_k(x) q_k(x)`, continuous across triangles.
#[derive(Clone, Copy, Debug)]
pub struct ModelSample {
    pub value: f64,
    pub grad: Vec2,
    pub hess: Sym2,
}

pub struct BlendedModel<'a> {
    pub hessian: &'a HessianField,
}

impl<'a> BlendedModel<'a> {
    pub fn new(hessian: &'a HessianField) -> Self {
        BlendedModel { hessian }
    }

    pub fn sample(&self, x: Vec2) -> Option<ModelSample> {
        let mesh = &self.hessian.mesh;
        let (t, lambda) = mesh.locate_clamped(x)?;
        let tri = mesh.triangles[t];
        let pts = mesh.triangle_points(t);
        let dl = basis_gradients(pts);
        let mut value = 0.0;
        let mut grad = Vec2::ZERO;
        let mut hess = Sym2::new(0.0, 0.0, 0.0);
        for k in 0..3 {
            let f = &self.hessian.fits[tri[k]];
            let qk = f.value_at(x);
            let gk = f.grad_at(x);
            value += lambda[k] * qk;
            grad += gk * lambda[k] + dl[k] * qk;
            // ∇λ ⊗ ∇q + ∇q ⊗ ∇λ, since λ is linear.
            let cross = Sym2::new(2.0 * dl[k].x * gk.x, dl[k].x * gk.y + dl[k].y * gk.x, 2.0 * dl[k].y * gk.y);
            hess = hess.add(&f.hess.scale(lambda[k])).add(&cross);
        }
        Some(ModelSample { value, grad, hess })
    }

    /// Directional derivative `∇q·θ` and its gradient `D²q θ`.
    pub fn directional(&self, x: Vec2, theta: Vec2) -> Option<(f64, Vec2)> {
        let s = self.sample(x)?;
        Some((s.grad.dot(theta), s.hess.mul_vec(theta)))
    }
}
