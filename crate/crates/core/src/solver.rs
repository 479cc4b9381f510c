//! Energy-based Newton solver for `div(∇u/√(1+|∇u|²)) = f(u)` with Dirichlet
//! data, in planar form (weight exponent 0) or meridian form (weight `r^m`).
//!
//! The discrete problem is the stationarity condition of
//! `E(u) = ∫ r^m [√(1+|∇u|²) + F(u)]` over continuous piecewise-linear functions.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::{self, GradientField};
use crate::geometry::Vec2;
use crate::mesh::Mesh;
use crate::sparse::{norm2, pcg, CsrMatrix, LinearSolveError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("Newton iteration did not converge in {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("linear solve failed: {0}")]
    LinearSolveFailure(#[from] LinearSolveError),
    #[error("field is degenerate (max |∇u| below threshold)")]
    DegenerateField,
    #[error("invalid solver input: {0}")]
    InvalidInput(String),
}

/// The nonlinearity f(u).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    Constant {
        #[serde(rename = "H")]
        h: f64,
    },
    /// f(u) = a u + b with a >= 0.
    Affine { a: f64, b: f64 },
}

impl SourceSpec {
    pub fn validate(&self) -> Result<(), SolverError> {
        match *self {
            SourceSpec::Constant { h } if !h.is_finite() => {
                Err(SolverError::InvalidInput("H must be finite".into()))
            }
            SourceSpec::Affine { a, b } if !(a.is_finite() && b.is_finite() && a >= 0.0) => Err(
                SolverError::InvalidInput("affine source needs finite a >= 0 and finite b".into()),
            ),
            _ => Ok(()),
        }
    }

    pub fn f(&self, u: f64) -> f64 {
        match *self {
            SourceSpec::Constant { h } => h,
            SourceSpec::Affine { a, b } => a * u + b,
        }
    }

    pub fn df(&self, u: f64) -> f64 {
        let _ = u;
        match *self {
            SourceSpec::Constant { .. } => 0.0,
            SourceSpec::Affine { a, .. } => a,
        }
    }

    /// Primitive F with F(0) = 0.
    pub fn primitive(&self, u: f64) -> f64 {
        match *self {
            SourceSpec::Constant { h } => h * u,
            SourceSpec::Affine { a, b } => 0.5 * a * u * u + b * u,
        }
    }

    pub fn scaled(&self, s: f64) -> SourceSpec {
        match *self {
            SourceSpec::Constant { h } => SourceSpec::Constant { h: s * h },
            SourceSpec::Affine { a, b } => SourceSpec::Affine { a: s * a, b: s * b },
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            SourceSpec::Constant { h } => h == 0.0,
            SourceSpec::Affine { a, b } => a == 0.0 && b == 0.0,
        }
    }
}

/// Piecewise-linear field: one value per mesh vertex.
#[derive(Clone, Debug)]
pub struct ScalarField {
    pub mesh: Arc<Mesh>,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(mesh: Arc<Mesh>, values: Vec<f64>) -> ScalarField {
        assert_eq!(mesh.n_vertices(), values.len());
        ScalarField { mesh, values }
    }

    pub fn from_fn(mesh: Arc<Mesh>, f: impl Fn(Vec2) -> f64) -> ScalarField {
        let values = mesh.vertices.iter().map(|&p| f(p)).collect();
        ScalarField { mesh, values }
    }

    /// Barycentric-linear evaluation (with snapping in the chord gap near curved boundaries).
    pub fn eval(&self, p: Vec2) -> Option<f64> {
        let (t, b) = self.mesh.locate_clamped(p)?;
        let tri = self.mesh.triangles[t];
        Some((0..3).map(|k| b[k] * self.values[tri[k]]).sum())
    }

    /// Constant gradient of the interpolant on triangle `t`.
    pub fn triangle_gradient(&self, t: usize) -> Vec2 {
        let g = basis_gradients(self.mesh.triangle_points(t));
        let tri = self.mesh.triangles[t];
        g[0] * self.values[tri[0]] + g[1] * self.values[tri[1]] + g[2] * self.values[tri[2]]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Maximum over triangles of |∇u_h|.
    pub fn max_gradient(&self) -> f64 {
        (0..self.mesh.triangles.len())
            .map(|t| self.triangle_gradient(t).norm())
            .fold(0.0, f64::max)
    }

    /// Reflects a field on a half-domain mesh onto the mirrored full mesh.
    pub fn mirrored(&self) -> ScalarField {
        let (full, source) = self.mesh.mirror();
        let values = source.iter().map(|&s| self.values[s]).collect();
        ScalarField::new(Arc::new(full), values)
    }
}

/// Gradients of the three hat functions on a counterclockwise triangle.
pub fn basis_gradients(p: [Vec2; 3]) -> [Vec2; 3] {
    let two_area = (p[1] - p[0]).cross(p[2] - p[0]);
    let mut out = [Vec2::ZERO; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        out[i] = Vec2::new(p[j].y - p[k].y, p[k].x - p[j].x) / two_area;
    }
    out
}

/// Quadrature data for one triangle: the three edge midpoints with weight area/3.
struct Element {
    area: f64,
    grads: [Vec2; 3],
    /// r^m at the midpoint of the edge opposite each vertex.
    weights: [f64; 3],
}

impl Element {
    fn new(p: [Vec2; 3], m: u32) -> Element {
        let area = 0.5 * (p[1] - p[0]).cross(p[2] - p[0]);
        let mid = |i: usize| (p[(i + 1) % 3] + p[(i + 2) % 3]) * 0.5;
        let w = |q: Vec2| q.y.abs().powi(m as i32);
        Element {
            area,
            grads: basis_gradients(p),
            weights: [w(mid(0)), w(mid(1)), w(mid(2))],
        }
    }

    /// ∫_T r^m.
    fn weight_integral(&self) -> f64 {
        self.area / 3.0 * (self.weights[0] + self.weights[1] + self.weights[2])
    }
}

#[derive(Clone, Debug)]
pub struct Problem {
    pub mesh: Arc<Mesh>,
    pub source: SourceSpec,
    pub weight_exponent: u32,
    /// Dirichlet value per vertex (read only at Outer/Inner vertices).
    pub dirichlet: Vec<f64>,
}

impl Problem {
    pub fn new(mesh: Arc<Mesh>, source: SourceSpec, weight_exponent: u32) -> Problem {
        let n = mesh.n_vertices();
        Problem {
            mesh,
            source,
            weight_exponent,
            dirichlet: vec![0.0; n],
        }
    }

    pub fn with_dirichlet(mut self, g: impl Fn(Vec2) -> f64) -> Problem {
        self.dirichlet = self.mesh.vertices.iter().map(|&p| g(p)).collect();
        self
    }

    fn free_map(&self) -> (Vec<Option<usize>>, Vec<usize>) {
        let mut index = vec![None; self.mesh.n_vertices()];
        let mut free = Vec::new();
        for v in self.mesh.free_vertices() {
            index[v] = Some(free.len());
            free.push(v);
        }
        (index, free)
    }

    fn has_nonzero_data(&self) -> bool {
        (0..self.mesh.n_vertices()).any(|v| self.mesh.tags[v].is_dirichlet() && self.dirichlet[v] != 0.0)
    }

    fn elements(&self) -> impl Iterator<Item = (usize, Element)> + '_ {
        (0..self.mesh.triangles.len())
            .map(|t| (t, Element::new(self.mesh.triangle_points(t), self.weight_exponent)))
    }
}

/// Weak residual per free vertex: ∫ r^m [∇φ_i·∇u/W + f(u) φ_i].
pub fn assemble_residual(problem: &Problem, field: &ScalarField) -> Vec<f64> {
    let (index, free) = problem.free_map();
    let mut r = vec![0.0; free.len()];
    residual_with(problem, &field.values, &index, &problem.source, &mut r);
    r
}

fn residual_with(problem: &Problem, u: &[f64], index: &[Option<usize>], source: &SourceSpec, r: &mut [f64]) {
    r.iter_mut().for_each(|v| *v = 0.0);
    for (t, e) in problem.elements() {
        let tri = problem.mesh.triangles[t];
        let grad = e.grads[0] * u[tri[0]] + e.grads[1] * u[tri[1]] + e.grads[2] * u[tri[2]];
        let w = (1.0 + grad.norm_squared()).sqrt();
        let flux = grad * (e.weight_integral() / w);
        for i in 0..3 {
            let Some(row) = index[tri[i]] else { continue };
            let mut value = e.grads[i].dot(flux);
            // φ_i = 1/2 at the two midpoints adjacent to vertex i.
            for q in 0..3 {
                if q == i {
                    continue;
                }
                let uq = 0.5 * (u[tri[(q + 1) % 3]] + u[tri[(q + 2) % 3]]);
                value += e.area / 3.0 * e.weights[q] * source.f(uq) * 0.5;
            }
            r[row] += value;
        }
    }
}

/// Discrete energy ∫ r^m [√(1+|∇u|²) + F(u)].
pub fn energy(problem: &Problem, field: &ScalarField) -> f64 {
    energy_with(problem, &field.values, &problem.source)
}

fn energy_with(problem: &Problem, u: &[f64], source: &SourceSpec) -> f64 {
    let mut total = 0.0;
    for (t, e) in problem.elements() {
        let tri = problem.mesh.triangles[t];
        let grad = e.grads[0] * u[tri[0]] + e.grads[1] * u[tri[1]] + e.grads[2] * u[tri[2]];
        total += e.weight_integral() * (1.0 + grad.norm_squared()).sqrt();
        for q in 0..3 {
            let uq = 0.5 * (u[tri[(q + 1) % 3]] + u[tri[(q + 2) % 3]]);
            total += e.area / 3.0 * e.weights[q] * source.primitive(uq);
        }
    }
    total
}

fn pattern(problem: &Problem, index: &[Option<usize>], free: &[usize]) -> CsrMatrix {
    let rows: Vec<Vec<usize>> = free
        .iter()
        .map(|&v| {
            let mut row = vec![index[v].unwrap()];
            row.extend(problem.mesh.neighbors(v).iter().filter_map(|&w| index[w]));
            row
        })
        .collect();
    CsrMatrix::from_pattern(&rows)
}

/// Second variation ∫ r^m [∇φ_i·A(∇u)∇φ_j + f'(u) φ_i φ_j] over free vertices.
pub fn assemble_hessian(problem: &Problem, field: &ScalarField) -> CsrMatrix {
    let (index, free) = problem.free_map();
    hessian_with(problem, &field.values, &index, &free, &problem.source, false)
}

/// Coefficient matrix A(p) = (I − p pᵀ/(1+|p|²))/√(1+|p|²).
pub fn coefficient_matrix(p: Vec2) -> crate::geometry::Sym2 {
    let w2 = 1.0 + p.norm_squared();
    let w = w2.sqrt();
    crate::geometry::Sym2::new((1.0 - p.x * p.x / w2) / w, -p.x * p.y / w2 / w, (1.0 - p.y * p.y / w2) / w)
}

fn hessian_with(
    problem: &Problem,
    u: &[f64],
    index: &[Option<usize>],
    free: &[usize],
    source: &SourceSpec,
    laplacian: bool,
) -> CsrMatrix {
    let mut m = pattern(problem, index, free);
    for (t, e) in problem.elements() {
        let tri = problem.mesh.triangles[t];
        let grad = e.grads[0] * u[tri[0]] + e.grads[1] * u[tri[1]] + e.grads[2] * u[tri[2]];
        let a = if laplacian {
            crate::geometry::Sym2::identity()
        } else {
            coefficient_matrix(grad)
        };
        let wi = e.weight_integral();
        for i in 0..3 {
            let Some(ri) = index[tri[i]] else { continue };
            for j in i..3 {
                let Some(rj) = index[tri[j]] else { continue };
                let mut value = wi * e.grads[i].dot(a.mul_vec(e.grads[j]));
                if !laplacian {
                    for q in 0..3 {
                        if q == i || q == j {
                            continue;
                        }
                        let uq = 0.5 * (u[tri[(q + 1) % 3]] + u[tri[(q + 2) % 3]]);
                        value += e.area / 3.0 * e.weights[q] * source.df(uq) * 0.25;
                    }
                }
                m.add(ri, rj, value);
                if ri != rj {
                    m.add(rj, ri, value);
                }
            }
        }
    }
    m
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual_norm: f64,
    pub residual_history: Vec<f64>,
    pub energy_history: Vec<f64>,
    pub damping_history: Vec<f64>,
    pub linear_iterations: Vec<usize>,
    pub degenerate: bool,
    pub homotopy: bool,
    pub max_gradient: f64,
}

/// Threshold on max|∇u| below which a solution is flagged degenerate.
pub const DEGENERACY_THRESHOLD: f64 = 1e-10;
const MIN_DAMPING: f64 = 1.0 / 1024.0;
const HOMOTOPY_STEPS: usize = 10;

pub fn solve(problem: &Problem, tol: f64, max_iter: usize) -> Result<(ScalarField, SolveReport), SolverError> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(SolverError::InvalidInput("tol must be positive".into()));
    }
    problem.source.validate()?;
    let (index, free) = problem.free_map();
    let mut u = vec![0.0; problem.mesh.n_vertices()];
    for v in 0..u.len() {
        if problem.mesh.tags[v].is_dirichlet() {
            u[v] = problem.dirichlet[v];
        }
    }
    if problem.has_nonzero_data() {
        harmonic_lift(problem, &mut u, &index, &free, tol)?;
    }
    let start = u.clone();
    let mut report = SolveReport::default();
    let outcome = newton(problem, &mut u, &index, &free, &problem.source, tol, max_iter, &mut report);
    match outcome {
        Ok(()) => {}
        Err(SolverError::NonConvergence { .. }) => {
            // Continuation from the zero source in equal steps.
            u = start;
            report = SolveReport {
                homotopy: true,
                ..SolveReport::default()
            };
            for s in 1..=HOMOTOPY_STEPS {
                let source = problem.source.scaled(s as f64 / HOMOTOPY_STEPS as f64);
                newton(problem, &mut u, &index, &free, &source, tol, max_iter, &mut report)?;
            }
        }
        Err(e) => return Err(e),
    }
    let field = ScalarField::new(problem.mesh.clone(), u);
    report.max_gradient = field.max_gradient();
    report.degenerate = report.max_gradient < DEGENERACY_THRESHOLD;
    Ok((field, report))
}

fn harmonic_lift(
    problem: &Problem,
    u: &mut [f64],
    index: &[Option<usize>],
    free: &[usize],
    tol: f64,
) -> Result<(), SolverError> {
    let k = hessian_with(problem, u, index, free, &problem.source, true);
    // Right-hand side −K_fd g from the weighted Laplacian applied to the data.
    let mut rhs = vec![0.0; free.len()];
    for (t, e) in problem.elements() {
        let tri = problem.mesh.triangles[t];
        let wi = e.weight_integral();
        for i in 0..3 {
            let Some(ri) = index[tri[i]] else { continue };
            for j in 0..3 {
                if index[tri[j]].is_none() {
                    rhs[ri] -= wi * e.grads[i].dot(e.grads[j]) * u[tri[j]];
                }
            }
        }
    }
    let out = pcg(&k, &rhs, tol / 10.0)?;
    for (row, &v) in free.iter().enumerate() {
        u[v] = out.x[row];
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn newton(
    problem: &Problem,
    u: &mut [f64],
    index: &[Option<usize>],
    free: &[usize],
    source: &SourceSpec,
    tol: f64,
    max_iter: usize,
    report: &mut SolveReport,
) -> Result<(), SolverError> {
    let mut r = vec![0.0; free.len()];
    residual_with(problem, u, index, source, &mut r);
    let mut norm = norm2(&r);
    let mut e = energy_with(problem, u, source);
    report.residual_history.push(norm);
    report.energy_history.push(e);
    let mut trial = u.to_vec();
    let mut r_trial = vec![0.0; free.len()];
    for _ in 0..max_iter {
        if norm <= tol {
            report.residual_norm = norm;
            return Ok(());
        }
        let k = hessian_with(problem, u, index, free, source, false);
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        let step = pcg(&k, &rhs, tol / 10.0)?;
        report.linear_iterations.push(step.iterations);
        report.iterations += 1;
        let mut alpha = 1.0;
        let mut accepted = false;
        while alpha >= MIN_DAMPING {
            trial.copy_from_slice(u);
            for (row, &v) in free.iter().enumerate() {
                trial[v] += alpha * step.x[row];
            }
            residual_with(problem, &trial, index, source, &mut r_trial);
            let n_trial = norm2(&r_trial);
            let e_trial = energy_with(problem, &trial, source);
            if n_trial < norm && e_trial <= e + 1e-12 * e.abs() {
                u.copy_from_slice(&trial);
                std::mem::swap(&mut r, &mut r_trial);
                norm = n_trial;
                e = e_trial;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            report.residual_norm = norm;
            return Err(SolverError::NonConvergence {
                iterations: report.iterations,
                residual: norm,
            });
        }
        report.damping_history.push(alpha);
        report.residual_history.push(norm);
        report.energy_history.push(e);
    }
    report.residual_norm = norm;
    if norm <= tol {
        Ok(())
    } else {
        Err(SolverError::NonConvergence {
            iterations: report.iterations,
            residual: norm,
        })
    }
}

/// Weak residual of the equation satisfied by w = ∂_θ u, evaluated with the
/// recovered directional derivative. Differentiating the equation gives
/// `div(r^m A(∇u)∇w) − r^m f'(u) w = m θ_r r^{m−2} u_r/W`; the right-hand
/// side is tested in the equivalent form obtained by substituting the
/// equation for `(m/r) u_r/W`, which avoids the 1/r singularity on the axis.
/// Returns one entry per vertex (zero at Dirichlet vertices).
pub fn linearized_residual(field: &ScalarField, theta: Vec2, problem: &Problem) -> Result<Vec<f64>, SolverError> {
    if field.values.iter().all(|&v| v == 0.0) {
        return Ok(vec![0.0; field.values.len()]);
    }
    if field.max_gradient() < DEGENERACY_THRESHOLD {
        return Err(SolverError::DegenerateField);
    }
    let grad: GradientField =
        fields::recover_gradient(field).map_err(|e| SolverError::InvalidInput(e.to_string()))?;
    let w = fields::directional_derivative(&grad, theta);
    let u = &field.values;
    let m = problem.weight_exponent;
    let mut out = vec![0.0; u.len()];
    for t in 0..problem.mesh.triangles.len() {
        let p = problem.mesh.triangle_points(t);
        let e = Element::new(p, m);
        let tri = problem.mesh.triangles[t];
        let gu = e.grads[0] * u[tri[0]] + e.grads[1] * u[tri[1]] + e.grads[2] * u[tri[2]];
        let gw = e.grads[0] * w.values[tri[0]] + e.grads[1] * w.values[tri[1]] + e.grads[2] * w.values[tri[2]];
        let a = coefficient_matrix(gu);
        let wu = (1.0 + gu.norm_squared()).sqrt();
        let flux_w = a.mul_vec(gw) * e.weight_integral();
        // Weights r^{m−1}, r^{m−2} at the midpoints for the transport term.
        let mid = |q: usize| (p[(q + 1) % 3] + p[(q + 2) % 3]) * 0.5;
        let rpow = |q: usize, k: i32| if k == 0 { 1.0 } else { mid(q).y.abs().powi(k) };
        for i in 0..3 {
            if problem.mesh.tags[tri[i]].is_dirichlet() {
                continue;
            }
            let mut value = e.grads[i].dot(flux_w);
            for q in 0..3 {
                if q == i {
                    continue;
                }
                let (a0, a1) = (tri[(q + 1) % 3], tri[(q + 2) % 3]);
                let uq = 0.5 * (u[a0] + u[a1]);
                let wq = 0.5 * (w.values[a0] + w.values[a1]);
                value += e.area / 3.0 * e.weights[q] * problem.source.df(uq) * wq * 0.5;
            }
            if m > 0 && theta.y != 0.0 {
                let mf = m as f64;
                let mut transport = 0.0;
                let w1: f64 = (0..3).map(|q| rpow(q, m as i32 - 1)).sum::<f64>() * e.area / 3.0;
                transport += w1 * e.grads[i].dot(gu) / wu;
                for q in 0..3 {
                    if q == i {
                        continue;
                    }
                    let uq = 0.5 * (u[tri[(q + 1) % 3]] + u[tri[(q + 2) % 3]]);
                    transport += e.area / 3.0 * rpow(q, m as i32 - 1) * problem.source.f(uq) * 0.5;
                    if m >= 2 {
                        transport += (mf - 1.0) * e.area / 3.0 * rpow(q, m as i32 - 2) * gu.y / wu * 0.5;
                    }
                }
                value += mf * theta.y * transport;
            }
            out[tri[i]] += value;
        }
    }
    Ok(out)
}

/// Pointwise right-hand side `(m/r²) θ_r u_r/W` of the meridian linearized
/// equation at vertices with r > 0, using recovered gradients.
pub fn meridian_rhs(gradient: &GradientField, theta: Vec2, weight_exponent: u32) -> Vec<Option<f64>> {
    let mesh = &gradient.mesh;
    (0..mesh.n_vertices())
        .map(|v| {
            let r = mesh.vertices[v].y;
            if r <= 0.0 || mesh.tags[v].is_dirichlet() {
                return None;
            }
            let g = gradient.values[v];
            let w = (1.0 + g.norm_squared()).sqrt();
            Some(weight_exponent as f64 / (r * r) * theta.y * g.y / w)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Conic, DomainSpec, PlanarRegion};
    use crate::mesh::{triangulate, triangulate_domain};
    use crate::radial_oracle::{radial_annulus, radial_ball};

    fn disk_mesh(h: f64) -> Arc<Mesh> {
        Arc::new(triangulate(&PlanarRegion::new(Conic::circle(0.0, 1.0), None), h).unwrap())
    }

    fn ball_error(mesh: Arc<Mesh>, m: u32, n: usize) -> f64 {
        let problem = Problem::new(mesh.clone(), SourceSpec::Constant { h: -1.0 }, m);
        let (u, report) = solve(&problem, 1e-10, 50).unwrap();
        assert!(!report.degenerate);
        let oracle = radial_ball(1.0, n, -1.0).unwrap();
        mesh.vertices
            .iter()
            .zip(&u.values)
            .map(|(p, v)| (oracle.eval(p.norm()).0 - v).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn zero_field_has_zero_residual() {
        let mesh = disk_mesh(0.2);
        let problem = Problem::new(mesh.clone(), SourceSpec::Constant { h: 0.0 }, 0);
        let zero = ScalarField::from_fn(mesh, |_| 0.0);
        assert!(assemble_residual(&problem, &zero).iter().all(|&r| r == 0.0));
    }

    #[test]
    fn linear_fields_are_minimal() {
        let mesh = disk_mesh(0.1);
        let problem = Problem::new(mesh.clone(), SourceSpec::Constant { h: 0.0 }, 0);
        let lin = ScalarField::from_fn(mesh, |p| 0.7 * p.x - 1.3 * p.y + 0.2);
        let r = assemble_residual(&problem, &lin);
        assert!(r.iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn hessian_at_zero_is_stiffness() {
        let mesh = disk_mesh(0.2);
        let problem = Problem::new(mesh.clone(), SourceSpec::Constant { h: 0.0 }, 0);
        let zero = ScalarField::from_fn(mesh.clone(), |_| 0.0);
        let k = assemble_hessian(&problem, &zero);
        // Rows of the Laplacian stiffness matrix for interior vertices sum to zero.
        let (index, free) = problem.free_map();
        for (row, &v) in free.iter().enumerate() {
            if mesh.neighbors(v).iter().all(|&w| index[w].is_some()) {
                let s: f64 = (k.row_ptr[row]..k.row_ptr[row + 1]).map(|j| k.values[j]).sum();
                assert!(s.abs() < 1e-12);
            }
            assert!(k.get(row, row) > 0.0);
        }
    }

    #[test]
    fn hessian_is_exactly_symmetric() {
        let mesh = disk_mesh(0.1);
        let problem = Problem::new(mesh.clone(), SourceSpec::Affine { a: 0.5, b: -1.0 }, 0);
        let field = ScalarField::from_fn(mesh, |p| (3.0 * p.x).sin() * p.y + p.x * p.x);
        assert_eq!(assemble_hessian(&problem, &field).max_asymmetry(), 0.0);
    }

    #[test]
    fn hessian_matches_finite_difference_of_residual() {
        let mesh = disk_mesh(0.25);
        let problem = Problem::new(mesh.clone(), SourceSpec::Affine { a: 0.5, b: -1.0 }, 0);
        let field = ScalarField::from_fn(mesh.clone(), |p| (1.0 - p.norm_squared()) * (0.3 + p.x));
        let k = assemble_hessian(&problem, &field);
        let (_, free) = problem.free_map();
        let base = assemble_residual(&problem, &field);
        let eps = 1e-6;
        for col in [0, free.len() / 2, free.len() - 1] {
            let mut pert = field.clone();
            pert.values[free[col]] += eps;
            let r = assemble_residual(&problem, &pert);
            for row in 0..free.len() {
                let fd = (r[row] - base[row]) / eps;
                assert!((fd - k.get(row, col)).abs() < 1e-5, "({row},{col})");
            }
        }
    }

    #[test]
    fn zero_source_gives_degenerate_zero() {
        for spec in [
            DomainSpec::Ball { radius: 1.0, n: 2 },
            DomainSpec::ConcentricAnnulus { inner: 1.0, outer: 2.0, n: 3 },
        ] {
            let mesh = Arc::new(triangulate_domain(&spec, 0.1).unwrap());
            let (_, m) = spec.computational_region().unwrap();
            let problem = Problem::new(mesh, SourceSpec::Constant { h: 0.0 }, m);
            let (u, report) = solve(&problem, 1e-10, 20).unwrap();
            assert!(u.values.iter().all(|&v| v == 0.0));
            assert!(report.degenerate);
        }
    }

    #[test]
    fn ball_matches_closed_form() {
        let e1 = ball_error(disk_mesh(0.04), 0, 2);
        let e2 = ball_error(disk_mesh(0.02), 0, 2);
        assert!(e2 <= 5e-3, "error {e2}");
        assert!(e1 / e2 >= 3.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn residual_of_interpolated_oracle_is_second_order() {
        // Max-norm of the weak residual entries; on unstructured patches each
        // entry is O(h²).
        let norm = |h: f64| {
            let mesh = disk_mesh(h);
            let problem = Problem::new(mesh.clone(), SourceSpec::Constant { h: -1.0 }, 0);
            let oracle = radial_ball(1.0, 2, -1.0).unwrap();
            let u = ScalarField::from_fn(mesh, |p| oracle.eval(p.norm()).0);
            assemble_residual(&problem, &u).iter().fold(0.0, |m: f64, x| m.max(x.abs()))
        };
        let ratio = norm(0.04) / norm(0.02);
        assert!(ratio >= 3.0, "ratio {ratio}");
    }

    #[test]
    fn energy_descends_and_solution_is_positive() {
        let mesh = disk_mesh(0.05);
        let problem = Problem::new(mesh.clone(), SourceSpec::Affine { a: 0.5, b: -1.0 }, 0);
        let (u, report) = solve(&problem, 1e-10, 50).unwrap();
        for w in report.energy_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs());
        }
        for v in 0..mesh.n_vertices() {
            if !mesh.tags[v].is_dirichlet() {
                assert!(u.values[v] > 0.0);
            }
        }
    }

    #[test]
    fn quadratic_convergence_tail() {
        let mesh = disk_mesh(0.05);
        let problem = Problem::new(mesh, SourceSpec::Constant { h: -1.0 }, 0);
        let (_, report) = solve(&problem, 1e-12, 50).unwrap();
        let hist = &report.residual_history;
        for k in 1..hist.len() {
            if hist[k - 1] < 1e-4 && report.damping_history[k - 1] == 1.0 && hist[k] > 1e-12 {
                assert!(hist[k] <= 10.0 * hist[k - 1] * hist[k - 1], "{hist:?}");
            }
        }
    }

    #[test]
    fn smallest_eigenvalue_is_positive() {
        let mesh = disk_mesh(0.1);
        let problem = Problem::new(mesh.clone(), SourceSpec::Affine { a: 0.5, b: -1.0 }, 0);
        let (u, _) = solve(&problem, 1e-10, 50).unwrap();
        let k = assemble_hessian(&problem, &u);
        // Inverse power iteration: x_{k+1} = K^{-1} x_k / |.|, λ_min ≈ 1/|K^{-1} x|.
        let mut x: Vec<f64> = (0..k.n).map(|i| 1.0 + (i % 7) as f64 * 0.1).collect();
        let mut lambda = 0.0;
        for _ in 0..30 {
            let n = norm2(&x);
            x.iter_mut().for_each(|v| *v /= n);
            let y = pcg(&k, &x, 1e-12).unwrap().x;
            lambda = 1.0 / norm2(&y);
            x = y;
        }
        assert!(lambda > 0.0);
    }

    #[test]
    fn solution_inherits_rotational_symmetry() {
        let h = 0.05;
        let tol = 1e-10;
        let mesh = disk_mesh(h);
        let problem = Problem::new(mesh.clone(), SourceSpec::Constant { h: -1.0 }, 0);
        let (u, _) = solve(&problem, tol, 50).unwrap();
        // Interpolation error of the P1 field at the mesh size, from the closed-form curvature bound.
        let interp = 0.5 * h * h * 1.2;
        for angle in [std::f64::consts::FRAC_PI_2, 1.0, std::f64::consts::PI] {
            let mut worst: f64 = 0.0;
            for (p, v) in mesh.vertices.iter().zip(&u.values) {
                if let Some(w) = u.eval(p.rotate(angle)) {
                    worst = worst.max((w - v).abs());
                }
            }
            assert!(worst <= 2.0 * (tol + interp), "{worst}");
        }
    }

    #[test]
    fn meridian_annulus_matches_radial_oracle() {
        let spec = DomainSpec::ConcentricAnnulus { inner: 1.0, outer: 2.0, n: 3 };
        let h = 0.04;
        let mesh = Arc::new(triangulate_domain(&spec, h).unwrap());
        let problem = Problem::new(mesh.clone(), SourceSpec::Constant { h: -0.5 }, 1);
        let (u, _) = solve(&problem, 1e-10, 50).unwrap();
        let oracle = radial_annulus(1.0, 2.0, 3, -0.5, 0.0, 0.0).unwrap();
        let err = mesh.vertices
            .iter()
            .zip(&u.values)
            .map(|(p, v)| (oracle.eval(p.norm()).0 - v).abs())
            .fold(0.0, f64::max);
        assert!(err < 2.0 * h * h, "{err}");
    }

    #[test]
    fn linearized_residual_of_zero_field() {
        let mesh = disk_mesh(0.2);
        let problem = Problem::new(mesh.clone(), SourceSpec::Constant { h: 0.0 }, 0);
        let zero = ScalarField::from_fn(mesh, |_| 0.0);
        let r = linearized_residual(&zero, Vec2::new(1.0, 0.0), &problem).unwrap();
        assert!(r.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linearized_residual_decreases_under_refinement() {
        let norm = |h: f64| {
            let mesh = disk_mesh(h);
            let problem = Problem::new(mesh, SourceSpec::Constant { h: -1.0 }, 0);
            let (u, _) = solve(&problem, 1e-10, 50).unwrap();
            let r = linearized_residual(&u, Vec2::new(1.0, 0.0), &problem).unwrap();
            r.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
        };
        let (a, b, c) = (norm(0.08), norm(0.04), norm(0.02));
        assert!(b < a && c < b, "{a} {b} {c}");
        assert!(a / c >= 3.0, "{a} {b} {c}");
    }

    #[test]
    fn meridian_rhs_sign() {
        let spec = DomainSpec::ConcentricAnnulus { inner: 1.0, outer: 2.0, n: 3 };
        let mesh = Arc::new(triangulate_domain(&spec, 0.05).unwrap());
        let problem = Problem::new(mesh.clone(), SourceSpec::Constant { h: -0.5 }, 1);
        let (u, _) = solve(&problem, 1e-10, 50).unwrap();
        let grad = fields::recover_gradient(&u).unwrap();
        let rhs = meridian_rhs(&grad, Vec2::new(0.0, 1.0), 1);
        for v in 0..mesh.n_vertices() {
            if let Some(value) = rhs[v] {
                if grad.values[v].y > 0.0 {
                    assert!(value >= 0.0);
                }
            }
        }
    }
}
