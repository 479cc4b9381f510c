//! Nodal sets of directional derivatives u_θ = ∇u·θ: marching extraction,
//! Hamiltonian tracing, branch points, enclosure and annulus-structure
//! checks, and the rotation field X with its flow.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::critical::{cluster_points, CriticalCurve};
use crate::domain::{BoundaryLabel, PlanarRegion};
use crate::fields::{recover_hessian, BlendedModel, FieldError, GradientField, HessianField};
use crate::geometry::{point_polyline_distance, point_segment_distance, winding_number, Sym2, Vec2};
use crate::mesh::VertexTag;
use crate::solver::{ScalarField, DEGENERACY_THRESHOLD};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NodalError {
    #[error("field is degenerate; nodal sets are not defined")]
    DegenerateField,
    #[error("start point is not on the nodal set (|u_θ| = {value:e} > {tolerance:e})")]
    StartNotOnNodal { value: f64, tolerance: f64 },
    #[error("flow from seed {seed} came within h of the boundary at ({}, {})", at.x, at.y)]
    FlowExitedDomain { seed: usize, at: Vec2 },
    #[error("annulus structure item ({item}) failed: {detail}")]
    StructureMismatch { item: u8, detail: String },
    #[error("precondition failed: no closed critical curve")]
    NoCriticalCurve,
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodalComponent {
    pub points: Vec<Vec2>,
    pub closed: bool,
    /// Boundary labels at the first and last point (open components only).
    pub ends: [Option<BoundaryLabel>; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BranchPoint {
    pub location: Vec2,
    pub ray_count: usize,
    /// Hessian of the fitted quadratic of u_θ at the branch point.
    pub hessian: Sym2,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodalSet {
    pub theta: Vec2,
    pub components: Vec<NodalComponent>,
    pub branch_points: Vec<BranchPoint>,
    pub boundary_endpoints: Vec<(Vec2, BoundaryLabel)>,
    pub tau_branch: f64,
}

impl NodalSet {
    /// Halting threshold on |∇u_θ| for Hamiltonian traces: 0.2·h·‖D²u_θ‖∞.
    /// (τ_branch itself marks a disk of radius about 10h around each
    /// branch point, too wide to stop a trace at.)
    pub fn trace_threshold(&self) -> f64 {
        0.02 * self.tau_branch
    }

    pub fn polylines(&self) -> Vec<Vec<Vec2>> {
        self.components
            .iter()
            .map(|c| {
                let mut p = c.points.clone();
                if c.closed && !p.is_empty() {
                    p.push(p[0]);
                }
                p
            })
            .collect()
    }

    /// Distance from `p` to the nodal polylines.
    pub fn distance(&self, p: Vec2) -> f64 {
        self.polylines()
            .iter()
            .map(|l| point_polyline_distance(p, l))
            .fold(f64::INFINITY, f64::min)
    }

    /// The same set rotated about the origin (θ included).
    pub fn rotated(&self, angle: f64) -> NodalSet {
        NodalSet {
            theta: self.theta.rotate(angle),
            components: self
                .components
                .iter()
                .map(|c| NodalComponent {
                    points: c.points.iter().map(|p| p.rotate(angle)).collect(),
                    closed: c.closed,
                    ends: c.ends,
                })
                .collect(),
            branch_points: self
                .branch_points
                .iter()
                .map(|b| BranchPoint {
                    location: b.location.rotate(angle),
                    ray_count: b.ray_count,
                    hessian: b.hessian.rotate(angle),
                })
                .collect(),
            boundary_endpoints: self
                .boundary_endpoints
                .iter()
                .map(|(p, l)| (p.rotate(angle), *l))
                .collect(),
            tau_branch: self.tau_branch,
        }
    }
}

fn label_of(tag: VertexTag) -> Option<BoundaryLabel> {
    match tag {
        VertexTag::Outer => Some(BoundaryLabel::Outer),
        VertexTag::Inner => Some(BoundaryLabel::Inner),
        VertexTag::Axis => Some(BoundaryLabel::Axis),
        VertexTag::Interior => None,
    }
}

/// Marching-triangle extraction of {u_θ = 0} plus branch point detection.
pub fn nodal_set(u_theta: &ScalarField, theta: Vec2) -> Result<NodalSet, NodalError> {
    let scale = u_theta.max_abs();
    if scale < DEGENERACY_THRESHOLD {
        return Err(NodalError::DegenerateField);
    }
    let fits = recover_hessian(u_theta)?;
    let (components, boundary_endpoints) = extract_zero_set(u_theta);
    let (branch_points, tau_branch) = branch_points(u_theta, &fits);
    Ok(NodalSet {
        theta,
        components,
        branch_points,
        boundary_endpoints,
        tau_branch,
    })
}

/// Zero-level polylines of a piecewise-linear field and their boundary endpoints.
pub fn extract_zero_set(field: &ScalarField) -> (Vec<NodalComponent>, Vec<(Vec2, BoundaryLabel)>) {
    let mesh = &field.mesh;
    let eps = 1e-12 * field.max_abs();
    let values: Vec<f64> = field
        .values
        .iter()
        .map(|&v| if v.abs() <= 1e-13 { eps } else { v })
        .collect();

    let mut edge_count: BTreeMap<[usize; 2], u8> = BTreeMap::new();
    for tri in &mesh.triangles {
        for i in 0..3 {
            let (a, b) = (tri[i], tri[(i + 1) % 3]);
            *edge_count.entry([a.min(b), a.max(b)]).or_default() += 1;
        }
    }

    let mut node_of: BTreeMap<[usize; 2], usize> = BTreeMap::new();
    let mut nodes: Vec<Vec2> = Vec::new();
    let mut node_edge: Vec<[usize; 2]> = Vec::new();
    let mut adjacency: Vec<Vec<usize>> = Vec::new();
    let mut node = |a: usize, b: usize, nodes: &mut Vec<Vec2>, adjacency: &mut Vec<Vec<usize>>| -> usize {
        let key = [a.min(b), a.max(b)];
        *node_of.entry(key).or_insert_with(|| {
            let (va, vb) = (values[key[0]], values[key[1]]);
            let s = va / (va - vb);
            let p = mesh.vertices[key[0]] + (mesh.vertices[key[1]] - mesh.vertices[key[0]]) * s;
            nodes.push(p);
            adjacency.push(Vec::new());
            node_edge.push(key);
            nodes.len() - 1
        })
    };
    for tri in &mesh.triangles {
        let mut crossing = Vec::with_capacity(2);
        for i in 0..3 {
            let (a, b) = (tri[i], tri[(i + 1) % 3]);
            if (values[a] > 0.0) != (values[b] > 0.0) {
                crossing.push(node(a, b, &mut nodes, &mut adjacency));
            }
        }
        if crossing.len() == 2 {
            adjacency[crossing[0]].push(crossing[1]);
            adjacency[crossing[1]].push(crossing[0]);
        }
    }

    let boundary_label = |k: usize| -> Option<BoundaryLabel> {
        let e = node_edge[k];
        if edge_count[&e] != 1 {
            return None;
        }
        let (la, lb) = (label_of(mesh.tags[e[0]]), label_of(mesh.tags[e[1]]));
        if la == Some(BoundaryLabel::Inner) || lb == Some(BoundaryLabel::Inner) {
            Some(BoundaryLabel::Inner)
        } else {
            la.or(lb).or(Some(BoundaryLabel::Outer))
        }
    };

    let mut visited = vec![false; nodes.len()];
    let mut components = Vec::new();
    let mut endpoints = Vec::new();
    let walk = |start: usize, visited: &mut Vec<bool>| -> Vec<usize> {
        let mut chain = vec![start];
        visited[start] = true;
        let mut prev = usize::MAX;
        let mut cur = start;
        loop {
            let next = adjacency[cur].iter().copied().find(|&n| n != prev && !visited[n]);
            match next {
                Some(n) => {
                    visited[n] = true;
                    chain.push(n);
                    prev = cur;
                    cur = n;
                }
                None => break,
            }
        }
        chain
    };
    for k in 0..nodes.len() {
        if !visited[k] && adjacency[k].len() == 1 {
            let chain = walk(k, &mut visited);
            let ends = [boundary_label(chain[0]), boundary_label(*chain.last().unwrap())];
            for (&i, l) in [chain[0], *chain.last().unwrap()].iter().zip(ends) {
                if let Some(l) = l {
                    endpoints.push((nodes[i], l));
                }
            }
            components.push(NodalComponent {
                points: chain.iter().map(|&i| nodes[i]).collect(),
                closed: false,
                ends,
            });
        }
    }
    for k in 0..nodes.len() {
        if !visited[k] {
            let chain = walk(k, &mut visited);
            components.push(NodalComponent {
                points: chain.iter().map(|&i| nodes[i]).collect(),
                closed: chain.len() > 2,
                ends: [None, None],
            });
        }
    }
    (components, endpoints)
}

/// Points where u_θ and ∇u_θ vanish together, with the number of zero rays
/// of the fitted quadratic around them. Returns the list and τ_branch.
pub fn branch_points(u_theta: &ScalarField, fits: &HessianField) -> (Vec<BranchPoint>, f64) {
    let mesh = &u_theta.mesh;
    let h = mesh.h;
    let trusted: Vec<usize> = (0..mesh.n_vertices()).filter(|&v| !fits.low_confidence[v]).collect();
    let d2max = trusted.iter().map(|&v| fits.fits[v].hess.norm()).fold(0.0, f64::max);
    let tau = 10.0 * h * d2max;

    let candidates: Vec<usize> = trusted
        .iter()
        .copied()
        .filter(|&v| fits.fits[v].grad.norm() < tau)
        .collect();
    let locs: Vec<Vec2> = candidates.iter().map(|&v| mesh.vertices[v]).collect();
    let nearest = |x: Vec2| -> usize {
        match mesh.locate_clamped(x) {
            Some((t, _)) => *mesh.triangles[t]
                .iter()
                .min_by(|&&a, &&b| {
                    mesh.vertices[a].distance(x).partial_cmp(&mesh.vertices[b].distance(x)).unwrap()
                })
                .unwrap(),
            None => usize::MAX,
        }
    };
    // Candidates along a near-critical arc can join distinct branch points
    // into one cluster, so every candidate starts its own Newton iteration.
    let mut found: Vec<BranchPoint> = Vec::new();
    for &start in &locs {
        let mut x = start;
        let mut anchor = usize::MAX;
        let mut previous = (usize::MAX, x);
        let mut ok = false;
        for _ in 0..20 {
            let v = nearest(x);
            if v == usize::MAX {
                break;
            }
            if v == anchor {
                ok = true;
                break;
            }
            // on a mesh symmetry line two tied anchors can alternate
            if v == previous.0 && x.distance(previous.1) < 0.01 * h {
                ok = true;
                anchor = v;
                break;
            }
            previous = (anchor, x);
            anchor = v;
            match fits.fits[v].hess.solve(-fits.fits[v].grad_at(x)) {
                Some(s) => x += s,
                None => break,
            }
            if x.distance(start) > 10.0 * h {
                break;
            }
        }
        if !ok || fits.low_confidence[anchor] || mesh.region.dirichlet_distance(x) > -h {
            continue;
        }
        if found.iter().any(|b| b.location.distance(x) < 0.5 * h) {
            continue;
        }
        let fit = &fits.fits[anchor];
        if fit.value_at(x).abs() > tau * h {
            continue;
        }
        found.push(BranchPoint {
            location: x,
            ray_count: ray_count(|d| fit.value_at(x + d), 3.0 * h),
            hessian: fit.hess,
        });
    }
    // Merge duplicates closer than 2h.
    let locs: Vec<Vec2> = found.iter().map(|b| b.location).collect();
    let mut out: Vec<BranchPoint> = cluster_points(&locs, 2.0 * h).iter().map(|g| found[g[0]]).collect();
    out.sort_by(|a, b| (a.location.x, a.location.y).partial_cmp(&(b.location.x, b.location.y)).unwrap());
    (out, tau)
}

/// Number of sign changes of `q` on a circle of the given radius.
pub fn ray_count(q: impl Fn(Vec2) -> f64, radius: f64) -> usize {
    const SAMPLES: usize = 720;
    let signs: Vec<bool> = (0..SAMPLES)
        .map(|k| q(Vec2::from_angle(std::f64::consts::TAU * k as f64 / SAMPLES as f64) * radius) > 0.0)
        .collect();
    (0..SAMPLES).filter(|&k| signs[k] != signs[(k + 1) % SAMPLES]).count()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnclosureReport {
    pub loops_inside: usize,
    /// First point of each offending loop.
    pub witnesses: Vec<Vec2>,
}

/// Counts closed nodal components enclosing a subdomain of Ω, i.e. loops
/// that do not surround a boundary component.
pub fn check_no_enclosure(nodal: &NodalSet, region: &PlanarRegion) -> EnclosureReport {
    let mut witnesses = Vec::new();
    for c in nodal.components.iter().filter(|c| c.closed) {
        let surrounds_hole = region
            .hole
            .is_some_and(|hole| winding_number(&c.points, hole.center()) != 0);
        if !surrounds_hole {
            witnesses.push(c.points[0]);
        }
    }
    EnclosureReport {
        loops_inside: witnesses.len(),
        witnesses,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Halt {
    /// Parameter budget used up.
    Completed,
    Boundary,
    /// |∇u_θ| fell below τ_branch.
    Branch,
    /// Projection back onto the level set failed.
    LostLevelSet,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlowTrace {
    pub start: Vec2,
    pub t: Vec<f64>,
    pub points: Vec<Vec2>,
    /// Direction whose nodal set the trace should end on.
    pub target: Vec2,
    pub halt: Halt,
    /// max |u_θ| over accepted Hamiltonian samples (0 for rotation traces).
    pub max_hamiltonian: f64,
}

impl FlowTrace {
    pub fn end(&self) -> Vec2 {
        *self.points.last().unwrap()
    }
}

const PROJECTION_TOL: f64 = 1e-13;

fn project_to_level(model: &BlendedModel, theta: Vec2, mut x: Vec2) -> Option<(Vec2, f64, Vec2)> {
    for _ in 0..12 {
        let (q, g) = model.directional(x, theta)?;
        if q.abs() <= PROJECTION_TOL {
            return Some((x, q, g));
        }
        let g2 = g.norm_squared();
        if g2 == 0.0 {
            return None;
        }
        x -= g * (q / g2);
    }
    let (q, g) = model.directional(x, theta)?;
    Some((x, q, g))
}

/// Traces {u_θ = 0} through `start` by RK4 on ẋ = B∇u_θ/|∇u_θ| with
/// B = [[0,1],[−1,0]] (negative `step` reverses direction), projecting back
/// onto the level set after each step.
pub fn trace_hamiltonian(
    model: &BlendedModel,
    theta: Vec2,
    start: Vec2,
    step: f64,
    max_len: f64,
    tau_branch: f64,
) -> Result<FlowTrace, NodalError> {
    let region = &model.hessian.mesh.region;
    let h = model.hessian.mesh.h;
    let (q0, g0) = model
        .directional(start, theta)
        .ok_or(NodalError::StartNotOnNodal { value: f64::INFINITY, tolerance: 0.0 })?;
    let tolerance = h * g0.norm();
    if q0.abs() > tolerance {
        return Err(NodalError::StartNotOnNodal { value: q0.abs(), tolerance });
    }
    let velocity = |x: Vec2| -> Option<Vec2> {
        let (_, g) = model.directional(x, theta)?;
        let n = g.norm();
        (n > 0.0).then(|| Vec2::new(g.y, -g.x) / n)
    };
    let mut trace = FlowTrace {
        start,
        t: vec![],
        points: vec![],
        target: theta,
        halt: Halt::Completed,
        max_hamiltonian: 0.0,
    };
    let Some((mut x, q, g)) = project_to_level(model, theta, start) else {
        trace.halt = Halt::LostLevelSet;
        return Ok(trace);
    };
    trace.t.push(0.0);
    trace.points.push(x);
    trace.max_hamiltonian = q.abs();
    if g.norm() < tau_branch {
        trace.halt = Halt::Branch;
        return Ok(trace);
    }
    let mut s = 0.0;
    while s < max_len {
        let dt = step.abs().min(max_len - s) * step.signum();
        let rk = (|| {
            let k1 = velocity(x)?;
            let k2 = velocity(x + k1 * (0.5 * dt))?;
            let k3 = velocity(x + k2 * (0.5 * dt))?;
            let k4 = velocity(x + k3 * dt)?;
            Some(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
        })();
        let Some(next) = rk else {
            trace.halt = Halt::Boundary;
            break;
        };
        if region.dirichlet_distance(next) > 0.0 {
            trace.halt = Halt::Boundary;
            break;
        }
        let Some((next, q, g)) = project_to_level(model, theta, next) else {
            trace.halt = Halt::Boundary;
            break;
        };
        if q.abs() > 1e-8 {
            trace.halt = Halt::LostLevelSet;
            break;
        }
        if region.dirichlet_distance(next) > 0.0 {
            trace.halt = Halt::Boundary;
            break;
        }
        if g.norm() < tau_branch {
            trace.halt = Halt::Branch;
            break;
        }
        s += dt.abs();
        x = next;
        trace.t.push(s);
        trace.points.push(x);
        trace.max_hamiltonian = trace.max_hamiltonian.max(q.abs());
    }
    Ok(trace)
}

/// X = D²u·(−u_y, u_x)/|∇u|², the gradient of the gradient angle λ.
pub fn rotation_vector(grad: Vec2, hess: &Sym2) -> Vec2 {
    hess.mul_vec(grad.perp()) / grad.norm_squared()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct XField {
    pub vertices: Vec<usize>,
    pub values: Vec<Vec2>,
    pub min_norm: f64,
    /// Empirical lower bound for |X|·|∇u|.
    pub min_norm_times_grad: f64,
}

/// X at interior vertices away from the critical set (> 4h from every
/// critical point) and where |∇u| is not negligible.
pub fn field_x(gradient: &GradientField, hessian: &HessianField, critical: &[Vec2]) -> Result<XField, NodalError> {
    let mesh = &gradient.mesh;
    let gmax = gradient.values.iter().map(|g| g.norm()).fold(0.0, f64::max);
    if gmax < DEGENERACY_THRESHOLD {
        return Err(NodalError::DegenerateField);
    }
    let tau_x = 1e-6 * gmax;
    let h = mesh.h;
    let mut out = XField {
        vertices: vec![],
        values: vec![],
        min_norm: f64::INFINITY,
        min_norm_times_grad: f64::INFINITY,
    };
    for v in 0..mesh.n_vertices() {
        let p = mesh.vertices[v];
        let g = gradient.values[v];
        if mesh.tags[v].is_dirichlet() || g.norm() <= tau_x || critical.iter().any(|c| c.distance(p) <= 4.0 * h) {
            continue;
        }
        let x = rotation_vector(g, &hessian.values[v]);
        out.min_norm = out.min_norm.min(x.norm());
        out.min_norm_times_grad = out.min_norm_times_grad.min(x.norm() * g.norm());
        out.vertices.push(v);
        out.values.push(x);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundaryIdentity {
    pub samples: usize,
    pub max_relative_gap: f64,
    pub mean_relative_gap: f64,
}

/// Compares ⟨X, t⟩ with the boundary curvature κ. Each vertex two rings in
/// from the boundary extrapolates its quadratic fit to the nearest boundary
/// point, where X is evaluated against the positively oriented tangent.
pub fn boundary_identity(hessian: &HessianField) -> BoundaryIdentity {
    let mesh = &hessian.mesh;
    let region = &mesh.region;
    let hops = mesh.hops_to_boundary();
    let mut gaps = Vec::new();
    for v in 0..mesh.n_vertices() {
        if hops[v] != 2 {
            continue;
        }
        let p = mesh.vertices[v];
        let (_, foot) = region.outer.signed_distance(p);
        let foot = match region.hole {
            Some(hole) if hole.signed_distance(p).0.abs() < region.outer.signed_distance(p).0.abs() => {
                hole.signed_distance(p).1
            }
            _ => foot,
        };
        let (tangent, _) = region.boundary_tangent_near(foot);
        let kappa = region.boundary_curvature_near(foot);
        let fit = &hessian.fits[v];
        let x = rotation_vector(fit.grad_at(foot), &fit.hess);
        if kappa.abs() > 0.0 {
            gaps.push((x.dot(tangent) - kappa).abs() / kappa.abs());
        }
    }
    BoundaryIdentity {
        samples: gaps.len(),
        max_relative_gap: gaps.iter().copied().fold(0.0, f64::max),
        mean_relative_gap: if gaps.is_empty() { 0.0 } else { gaps.iter().sum::<f64>() / gaps.len() as f64 },
    }
}

/// Gradient angle λ = atan2(u_y, u_x) of the blended model.
pub fn gradient_angle(model: &BlendedModel, x: Vec2) -> Option<f64> {
    model.sample(x).map(|s| s.grad.angle())
}

/// Integrates ẋ = X/|X|² for parameter `t` from each seed. Spatial steps are
/// at most h/2; traces coming within h of ∂Ω are abandoned.
pub fn flow_rotate(model: &BlendedModel, theta: Vec2, t: f64, seeds: &[Vec2]) -> Vec<Result<FlowTrace, NodalError>> {
    let mesh = &model.hessian.mesh;
    let h = mesh.h;
    let velocity = |x: Vec2| -> Option<Vec2> {
        let s = model.sample(x)?;
        let xv = rotation_vector(s.grad, &s.hess);
        let n2 = xv.norm_squared();
        (n2 > 0.0 && n2.is_finite()).then(|| xv / n2)
    };
    seeds
        .iter()
        .enumerate()
        .map(|(i, &seed)| {
            let mut trace = FlowTrace {
                start: seed,
                t: vec![0.0],
                points: vec![seed],
                target: theta.rotate(t),
                halt: Halt::Completed,
                max_hamiltonian: 0.0,
            };
            let exited = |at: Vec2| NodalError::FlowExitedDomain { seed: i, at };
            let mut x = seed;
            let mut s = 0.0;
            let mut steps = 0;
            while s < t.abs() {
                steps += 1;
                let v = velocity(x).ok_or(exited(x))?;
                if steps > 1_000_000 {
                    return Err(exited(x));
                }
                let dt = ((0.5 * h) / v.norm()).min(t.abs() - s) * t.signum();
                let k1 = v;
                let k2 = velocity(x + k1 * (0.5 * dt)).ok_or(exited(x))?;
                let k3 = velocity(x + k2 * (0.5 * dt)).ok_or(exited(x))?;
                let k4 = velocity(x + k3 * dt).ok_or(exited(x))?;
                x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
                s += dt.abs();
                if mesh.region.dirichlet_distance(x) > -h {
                    return Err(exited(x));
                }
                trace.t.push(s * t.signum());
                trace.points.push(x);
            }
            Ok(trace)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlowVerdict {
    pub landing_distances: Vec<f64>,
    pub max_landing_distance: f64,
    pub landed: bool,
    pub abandoned: usize,
}

/// Checks that completed traces end on the nodal set of their target direction within `tol`.
pub fn flow_verdict(traces: &[Result<FlowTrace, NodalError>], target: &NodalSet, tol: f64) -> FlowVerdict {
    let d: Vec<f64> = traces
        .iter()
        .filter_map(|t| t.as_ref().ok())
        .map(|t| target.distance(t.end()))
        .collect();
    let max = d.iter().copied().fold(0.0, f64::max);
    FlowVerdict {
        max_landing_distance: max,
        landed: !d.is_empty() && max <= tol,
        abandoned: traces.iter().filter(|t| t.is_err()).count(),
        landing_distances: d,
    }
}

/// Arc-length position of the nearest point of a polyline.
pub fn polyline_parameter(line: &[Vec2], p: Vec2) -> f64 {
    let mut best = (f64::INFINITY, 0.0);
    let mut acc = 0.0;
    for w in line.windows(2) {
        let (d, s) = point_segment_distance(p, w[0], w[1]);
        let len = w[0].distance(w[1]);
        if d < best.0 {
            best = (d, acc + s * len);
        }
        acc += len;
    }
    best.1
}

/// True when the order of the images along `line` is the reverse of the order of the seeds.
pub fn ends_exchanged(line: &[Vec2], seeds: [Vec2; 2], images: [Vec2; 2]) -> bool {
    let s = seeds.map(|p| polyline_parameter(line, p));
    let e = images.map(|p| polyline_parameter(line, p));
    (s[0] < s[1]) != (e[0] < e[1])
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArmReport {
    pub along_curve: usize,
    pub to_inner: usize,
    pub to_outer: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StructureReport {
    pub theta: Vec2,
    /// (1) max distance from the critical curve to N_θ.
    pub curve_distance: f64,
    /// (2) branch points and the angle between θ and the curve tangent there.
    pub branch_points: Vec<Vec2>,
    pub tangency_angles: Vec<f64>,
    /// (3) arms at each branch point.
    pub arms: Vec<ArmReport>,
    /// (4) angle between θ and ∂Ω at each boundary endpoint.
    pub boundary_angles: Vec<f64>,
    /// (5) components not passing through a branch point.
    pub stray_components: usize,
}

fn angle_to(theta: Vec2, tangent: Vec2) -> f64 {
    (theta.dot(tangent).abs() / (theta.norm() * tangent.norm())).clamp(0.0, 1.0).acos()
}

/// Verifies the nodal structure around a critical Jordan curve in an annulus:
/// (1) curve ⊂ N_θ; (2) two branch points with θ tangent to the curve; (3)
/// four arms at each, two along the curve, one to γ_I, one to γ_E; (4)
/// boundary endpoints where θ is tangent to ∂Ω; (5) nothing else.
pub fn annulus_branch_structure(
    nodal: &NodalSet,
    curve: Option<&CriticalCurve>,
    region: &PlanarRegion,
    h: f64,
) -> Result<StructureReport, NodalError> {
    let curve = curve.filter(|c| c.closed).ok_or(NodalError::NoCriticalCurve)?;
    let circle = curve.fitted_circle.ok_or(NodalError::NoCriticalCurve)?;
    let fail = |item: u8, detail: String| Err(NodalError::StructureMismatch { item, detail });
    let theta = nodal.theta;

    let curve_distance = curve.points.iter().map(|&p| nodal.distance(p)).fold(0.0, f64::max);
    if curve_distance > 2.0 * h {
        return fail(1, format!("curve lies {curve_distance:.3e} from N_θ (> 2h)"));
    }

    let bps: Vec<&BranchPoint> = nodal.branch_points.iter().collect();
    if bps.len() != 2 {
        return fail(2, format!("{} branch points, expected 2", bps.len()));
    }
    let mut tangency_angles = Vec::new();
    for b in &bps {
        let radial = b.location - circle.center;
        let off = (radial.norm() - circle.radius).abs();
        if off > 2.0 * h {
            return fail(2, format!("branch point {:?} is {off:.3e} off the curve", b.location));
        }
        let a = angle_to(theta, radial.perp());
        if a > 2.0 * h / circle.radius {
            return fail(2, format!("θ makes angle {a:.3e} with the curve at {:?}", b.location));
        }
        tangency_angles.push(a);
    }

    let rho = 4.0 * h;
    let mut arms = Vec::new();
    for b in &bps {
        if b.ray_count != 4 {
            return fail(3, format!("ray count {} at {:?}", b.ray_count, b.location));
        }
        let c = b.location;
        let mut report = ArmReport {
            along_curve: 0,
            to_inner: 0,
            to_outer: 0,
        };
        let mut bad = Vec::new();
        for comp in &nodal.components {
            let pts = &comp.points;
            let nseg = if comp.closed { pts.len() } else { pts.len() - 1 };
            for i in 0..nseg {
                let (a, e) = (pts[i], pts[(i + 1) % pts.len()]);
                let (ia, ie) = (a.distance(c) < rho, e.distance(c) < rho);
                if ia == ie {
                    continue;
                }
                let q = if ia { e } else { a };
                let dr = q.distance(circle.center) - circle.radius;
                if dr.abs() < 0.5 * rho {
                    report.along_curve += 1;
                    continue;
                }
                // Follow the arm away from the branch point to its end.
                let end = if comp.closed {
                    None
                } else if ia {
                    comp.ends[1]
                } else {
                    comp.ends[0]
                };
                let (want, slot) = if dr < 0.0 {
                    (BoundaryLabel::Inner, &mut report.to_inner)
                } else {
                    (BoundaryLabel::Outer, &mut report.to_outer)
                };
                if end == Some(want) {
                    *slot += 1;
                } else {
                    bad.push((q, end));
                }
            }
        }
        if report.along_curve != 2 || report.to_inner != 1 || report.to_outer != 1 || !bad.is_empty() {
            return fail(3, format!("arms at {c:?}: {report:?}, unmatched {bad:?}"));
        }
        arms.push(report);
    }

    let mut boundary_angles = Vec::new();
    let count = |l: BoundaryLabel| nodal.boundary_endpoints.iter().filter(|(_, x)| *x == l).count();
    if count(BoundaryLabel::Inner) != 2 || count(BoundaryLabel::Outer) != 2 {
        return fail(
            4,
            format!("{} inner and {} outer endpoints, expected 2 each", count(BoundaryLabel::Inner), count(BoundaryLabel::Outer)),
        );
    }
    for &(p, _) in &nodal.boundary_endpoints {
        let (t, _) = region.boundary_tangent_near(p);
        let kappa = region.boundary_curvature_near(p).abs();
        let a = angle_to(theta, t);
        if a > 4.0 * h * kappa.max(1.0) {
            return fail(4, format!("θ makes angle {a:.3e} with ∂Ω at {p:?}"));
        }
        boundary_angles.push(a);
    }

    let stray_components = nodal
        .components
        .iter()
        .filter(|comp| {
            !bps.iter()
                .any(|b| comp.points.iter().any(|p| p.distance(b.location) < rho))
        })
        .count();
    if stray_components > 0 {
        return fail(5, format!("{stray_components} components avoid both branch points"));
    }

    Ok(StructureReport {
        theta,
        curve_distance,
        branch_points: bps.iter().map(|b| b.location).collect(),
        tangency_angles,
        arms,
        boundary_angles,
        stray_components,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Conic;
    use crate::geometry::hausdorff;
    use crate::mesh::{triangulate, Mesh};
    use std::sync::Arc;

    fn disk(h: f64, r: f64) -> Arc<Mesh> {
        Arc::new(triangulate(&PlanarRegion::new(Conic::circle(0.0, r), None), h).unwrap())
    }

    #[test]
    fn product_field_nodal_line_is_horizontal_axis() {
        let h = 0.05;
        let mesh = disk(h, 1.0);
        // u = x y, θ = (1, 0) → u_θ = y.
        let u_theta = ScalarField::from_fn(mesh, |p| p.y);
        let n = nodal_set(&u_theta, Vec2::new(1.0, 0.0)).unwrap();
        assert_eq!(n.components.len(), 1);
        let axis = vec![vec![Vec2::new(-1.0, 0.0), Vec2::new(1.0, 0.0)]];
        assert!(hausdorff(&n.polylines(), &axis) < 2.0 * h);
        assert_eq!(n.boundary_endpoints.len(), 2);
        assert!(n.branch_points.is_empty());
    }

    #[test]
    fn saddle_has_one_branch_point_with_four_rays() {
        let h = 0.04;
        let mesh = disk(h, 1.0);
        let u_theta = ScalarField::from_fn(mesh, |p| p.x * p.x - p.y * p.y);
        let n = nodal_set(&u_theta, Vec2::new(1.0, 0.0)).unwrap();
        assert_eq!(n.branch_points.len(), 1, "{:?}", n.branch_points);
        let b = n.branch_points[0];
        assert!(b.location.norm() < 1e-8);
        assert_eq!(b.ray_count, 4);
    }

    #[test]
    fn ray_count_of_harmonic_forms() {
        assert_eq!(ray_count(|d| d.x * d.x - d.y * d.y + 1e-3, 0.1), 4);
        assert_eq!(ray_count(|d| d.x * d.x + d.y * d.y, 0.1), 0);
        assert_eq!(ray_count(|d| d.x * (d.x * d.x - 3.0 * d.y * d.y) + 1e-9, 0.1), 6);
    }

    #[test]
    fn synthetic_loop_is_detected() {
        let mesh = disk(0.05, 2.0);
        let u_theta = ScalarField::from_fn(mesh.clone(), |p| 1.0 - p.norm_squared());
        let n = nodal_set(&u_theta, Vec2::new(1.0, 0.0)).unwrap();
        assert_eq!(n.components.len(), 1);
        assert!(n.components[0].closed);
        assert_eq!(check_no_enclosure(&n, &mesh.region).loops_inside, 1);
    }

    #[test]
    fn loop_around_hole_is_exempt() {
        let region = PlanarRegion::new(Conic::circle(0.0, 2.0), Some(Conic::circle(0.0, 1.0)));
        let mesh = Arc::new(triangulate(&region, 0.05).unwrap());
        let u_theta = ScalarField::from_fn(mesh, |p| 1.5 - p.norm());
        let n = nodal_set(&u_theta, Vec2::new(1.0, 0.0)).unwrap();
        assert_eq!(n.components.iter().filter(|c| c.closed).count(), 1);
        assert_eq!(check_no_enclosure(&n, &region).loops_inside, 0);
    }

    #[test]
    fn exact_zero_vertices_are_perturbed_consistently() {
        let mesh = disk(0.1, 1.0);
        // Vanishes exactly on all vertices with y = 0 (common on symmetric meshes).
        let u_theta = ScalarField::from_fn(mesh, |p| if p.y.abs() < 1e-15 { 0.0 } else { p.y });
        let a = nodal_set(&u_theta, Vec2::new(1.0, 0.0)).unwrap();
        let b = nodal_set(&u_theta, Vec2::new(1.0, 0.0)).unwrap();
        assert_eq!(a, b);
        assert!(a.components.iter().all(|c| !c.closed));
    }

    #[test]
    fn degenerate_field_is_refused() {
        let mesh = disk(0.1, 1.0);
        let z = ScalarField::from_fn(mesh, |_| 0.0);
        assert_eq!(nodal_set(&z, Vec2::new(1.0, 0.0)).unwrap_err(), NodalError::DegenerateField);
    }

    fn product_model(h: f64) -> HessianField {
        let mesh = disk(h, 1.0);
        let u = ScalarField::from_fn(mesh, |p| p.x * p.y);
        recover_hessian(&u).unwrap()
    }

    #[test]
    fn hamiltonian_trace_stays_on_axis() {
        let hf = product_model(0.05);
        let model = BlendedModel::new(&hf);
        let theta = Vec2::new(1.0, 0.0);
        for step in [0.02, -0.02] {
            let tr = trace_hamiltonian(&model, theta, Vec2::new(0.1, 1e-4), step, 3.0, 1e-6).unwrap();
            assert_eq!(tr.halt, Halt::Boundary);
            assert!(tr.points.len() > 20);
            assert!(tr.points.iter().all(|p| p.y.abs() <= 1e-8));
            assert!(tr.max_hamiltonian <= 1e-8);
            let reach = tr.end().x.abs();
            assert!(reach > 0.9, "{reach}");
        }
    }

    #[test]
    fn hamiltonian_start_must_be_on_nodal_set() {
        let hf = product_model(0.05);
        let model = BlendedModel::new(&hf);
        let err = trace_hamiltonian(&model, Vec2::new(1.0, 0.0), Vec2::new(0.0, 0.5), 0.01, 1.0, 1e-6);
        assert!(matches!(err, Err(NodalError::StartNotOnNodal { .. })));
    }

    #[test]
    fn rotation_field_of_radial_function() {
        // u = 1 − |x|²: X = (−2I)(2y, −2x)/(4|x|²) = (−y, x)/|x|², azimuthal.
        let x = rotation_vector(Vec2::new(-1.0, -0.5), &Sym2::diag(-2.0, -2.0));
        let p = Vec2::new(0.5, 0.25);
        assert!(x.dot(p).abs() < 1e-14);
        assert!((x.norm() - 1.0 / p.norm()).abs() < 1e-12);
    }

    #[test]
    fn boundary_identity_on_exact_paraboloid() {
        let mesh = disk(0.05, 1.0);
        let u = ScalarField::from_fn(mesh, |p| 1.0 - p.norm_squared());
        let hf = recover_hessian(&u).unwrap();
        let b = boundary_identity(&hf);
        assert!(b.samples > 50);
        assert!(b.max_relative_gap < 1e-8, "{b:?}");
    }

    #[test]
    fn zero_flow_is_identity_and_quarter_turn_rotates() {
        let mesh = disk(0.05, 1.0);
        let u = ScalarField::from_fn(mesh, |p| 1.0 - p.norm_squared());
        let hf = recover_hessian(&u).unwrap();
        let model = BlendedModel::new(&hf);
        let seeds = [Vec2::new(0.0, 0.4), Vec2::new(0.0, -0.3)];
        let theta = Vec2::new(1.0, 0.0);
        for (s, tr) in seeds.iter().zip(flow_rotate(&model, theta, 0.0, &seeds)) {
            assert_eq!(tr.unwrap().end(), *s);
        }
        let traces = flow_rotate(&model, theta, std::f64::consts::FRAC_PI_2, &seeds);
        let e = traces[0].as_ref().unwrap().end();
        assert!(e.distance(Vec2::new(-0.4, 0.0)) < 1e-6, "{e:?}");
        let half = flow_rotate(&model, theta, std::f64::consts::PI, &seeds);
        let line = [Vec2::new(0.0, -1.0), Vec2::new(0.0, 1.0)];
        let ends = [half[0].as_ref().unwrap().end(), half[1].as_ref().unwrap().end()];
        assert!(ends_exchanged(&line, seeds, ends));
    }

    #[test]
    fn flow_near_boundary_is_abandoned() {
        let mesh = disk(0.05, 1.0);
        let u = ScalarField::from_fn(mesh, |p| 1.0 - p.norm_squared() + 0.3 * p.x);
        let hf = recover_hessian(&u).unwrap();
        let model = BlendedModel::new(&hf);
        let r = flow_rotate(&model, Vec2::new(1.0, 0.0), 6.0, &[Vec2::new(0.15, 0.93)]);
        assert!(matches!(r[0], Err(NodalError::FlowExitedDomain { .. })), "{:?}", r[0]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]
            #[test]
            fn saddles_have_four_rays_and_extrema_none(angle in 0.0f64..6.3, a in 0.2f64..3.0, b in 0.2f64..3.0) {
                let saddle = Sym2::diag(a, -b).rotate(angle);
                let definite = Sym2::diag(a, b).rotate(angle);
                prop_assert_eq!(ray_count(|d| saddle.quadratic_form(d) + 1e-12, 0.1), 4);
                prop_assert_eq!(ray_count(|d| definite.quadratic_form(d), 0.1), 0);
                prop_assert_eq!(ray_count(|d| -definite.quadratic_form(d), 0.1), 0);
            }

            #[test]
            fn zero_set_of_an_affine_field_is_one_chord(angle in 0.0f64..6.3, offset in -0.6f64..0.6) {
                let mesh = disk(0.15, 1.0);
                let n = Vec2::from_angle(angle);
                let field = ScalarField::from_fn(mesh, move |p| p.dot(n) - offset);
                let (components, ends) = extract_zero_set(&field);
                prop_assert_eq!(components.len(), 1);
                prop_assert!(!components[0].closed);
                prop_assert_eq!(ends.len(), 2);
                for p in &components[0].points {
                    prop_assert!((p.dot(n) - offset).abs() < 1e-9);
                }
            }
        }
    }

}
