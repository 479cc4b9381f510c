//! Critical set detection, Morse classification, critical curves, and the
//! sweep of meridian results to descriptions in n dimensions.

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::fields::{GradientField, HessianField, QuadraticFit};
use crate::geometry::{fit_circle, winding_number, Sym2, Vec2};
use crate::solver::{ScalarField, DEGENERACY_THRESHOLD};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CriticalError {
    #[error("field is degenerate (max |∇u| below threshold); the critical set would be the whole domain")]
    DegenerateField,
    #[error("index sum is undefined: degenerate critical point at ({x}, {y})")]
    DegeneratePresent { x: f64, y: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Classification {
    Maximum,
    Minimum,
    Saddle,
    Degenerate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CriticalPoint {
    pub location: Vec2,
    pub gradient_residual: f64,
    pub hessian: Sym2,
    pub classification: Classification,
    pub morse_index: Option<u8>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CircleFit {
    pub center: Vec2,
    pub radius: f64,
    pub max_radial_deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriticalCurve {
    pub points: Vec<Vec2>,
    pub closed: bool,
    pub fitted_circle: Option<CircleFit>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweptSurface {
    /// Meridian profile of the surface (both half-planes when mirrored).
    pub meridian: Vec<Vec2>,
    pub closed: bool,
    /// (center on the axis, radius) when the profile is a circle centred on the axis.
    pub sphere: Option<(f64, f64)>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CriticalSet3D {
    pub axis_points: Vec<f64>,
    pub circles: Vec<Vec2>,
    pub surfaces: Vec<SweptSurface>,
}

/// Relative determinant threshold for degenerate critical points.
pub const TAU_DEG: f64 = 1e-6;
/// Candidate widening in units of h²·(typical Hessian norm).
const CANDIDATE_SLACK: f64 = 1.0;

pub fn classify(hessian: &Sym2, tau_deg: f64) -> (Classification, Option<u8>) {
    let scale = hessian.norm();
    if !(hessian.det().abs() > tau_deg * scale * scale) {
        return (Classification::Degenerate, None);
    }
    let (lo, hi) = hessian.eigenvalues();
    let index = (lo < 0.0) as u8 + (hi < 0.0) as u8;
    let class = match index {
        2 => Classification::Maximum,
        0 => Classification::Minimum,
        _ => Classification::Saddle,
    };
    (class, Some(index))
}

/// Σ sign(det D²u) over nondegenerate critical points.
pub fn index_sum(points: &[CriticalPoint]) -> Result<i32, CriticalError> {
    let mut sum = 0;
    for p in points {
        if p.classification == Classification::Degenerate {
            return Err(CriticalError::DegeneratePresent {
                x: p.location.x,
                y: p.location.y,
            });
        }
        sum += p.hessian.det().signum() as i32;
    }
    Ok(sum)
}

/// Squared distance from the origin to the triangle spanned by three vectors.
fn origin_distance_to_hull(g: [Vec2; 3]) -> f64 {
    let cross = |a: Vec2, b: Vec2| a.cross(b);
    let s0 = cross(g[1] - g[0], -g[0]);
    let s1 = cross(g[2] - g[1], -g[1]);
    let s2 = cross(g[0] - g[2], -g[2]);
    let inside = (s0 >= 0.0 && s1 >= 0.0 && s2 >= 0.0) || (s0 <= 0.0 && s1 <= 0.0 && s2 <= 0.0);
    if inside {
        return 0.0;
    }
    (0..3)
        .map(|i| crate::geometry::point_segment_distance(Vec2::ZERO, g[i], g[(i + 1) % 3]).0)
        .fold(f64::INFINITY, f64::min)
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }
    fn find(&mut self, i: usize) -> usize {
        let mut r = i;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut k = i;
        while self.0[k] != r {
            let next = self.0[k];
            self.0[k] = r;
            k = next;
        }
        r
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Groups points into clusters whose members are chained within `radius`.
pub fn cluster_points(points: &[Vec2], radius: f64) -> Vec<Vec<usize>> {
    let cell = radius.max(1e-300);
    let key = |p: Vec2| ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, &p) in points.iter().enumerate() {
        grid.entry(key(p)).or_default().push(i);
    }
    let mut uf = UnionFind::new(points.len());
    for (i, &p) in points.iter().enumerate() {
        let (kx, ky) = key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(bucket) = grid.get(&(kx + dx, ky + dy)) {
                    for &j in bucket {
                        if j > i && points[j].distance(p) <= radius {
                            uf.union(i, j);
                        }
                    }
                }
            }
        }
    }
    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for i in 0..points.len() {
        let r = uf.find(i);
        groups.entry(r).or_default().push(i);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort_by_key(|g| g[0]);
    out
}

fn diameter(points: &[Vec2]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            d = d.max(points[i].distance(points[j]));
        }
    }
    d
}

fn mean(points: &[Vec2]) -> Vec2 {
    points.iter().fold(Vec2::ZERO, |a, &p| a + p) / points.len() as f64
}

struct Refiner<'a> {
    hessian: &'a HessianField,
}

impl Refiner<'_> {
    fn nearest_vertex(&self, x: Vec2) -> usize {
        let mesh = &self.hessian.mesh;
        match mesh.locate_clamped(x) {
            Some((t, _)) => {
                let tri = mesh.triangles[t];
                *tri.iter()
                    .min_by(|&&a, &&b| {
                        mesh.vertices[a]
                            .distance(x)
                            .partial_cmp(&mesh.vertices[b].distance(x))
                            .unwrap()
                    })
                    .unwrap()
            }
            None => (0..mesh.n_vertices())
                .min_by(|&a, &b| {
                    mesh.vertices[a]
                        .distance(x)
                        .partial_cmp(&mesh.vertices[b].distance(x))
                        .unwrap()
                })
                .unwrap(),
        }
    }

    fn fit(&self, x: Vec2) -> &QuadraticFit {
        &self.hessian.fits[self.nearest_vertex(x)]
    }

    /// Newton on the local quadratic fit, re-anchoring to the nearest vertex
    /// until it stabilizes. Steps longer than `max_step` are rejected.
    fn newton(&self, start: Vec2, max_step: f64) -> Option<(Vec2, &QuadraticFit)> {
        let mut x = start;
        let mut anchor = usize::MAX;
        for _ in 0..20 {
            let v = self.nearest_vertex(x);
            let fit = &self.hessian.fits[v];
            if v == anchor {
                return Some((x, fit));
            }
            anchor = v;
            let step = fit.hess.solve(-fit.grad_at(x))?;
            if step.norm() > max_step {
                return None;
            }
            x += step;
        }
        let fit = self.fit(x);
        Some((x, fit))
    }

    /// Projection onto the critical locus along the dominant curvature
    /// direction (pseudo-inverse Newton step); along a critical curve the
    /// other eigenvalue is near zero and carries only noise.
    fn project(&self, start: Vec2, h: f64) -> Vec2 {
        let mut x = start;
        for _ in 0..5 {
            let fit = self.fit(x);
            let g = fit.grad_at(x);
            let [_, (lam, v)] = dominant_pair(&fit.hess);
            if lam == 0.0 {
                break;
            }
            let s = v * (-g.dot(v) / lam);
            if s.norm() > 2.0 * h {
                break;
            }
            x += s;
        }
        x
    }
}

/// Eigenpairs ordered by absolute value (smallest first).
fn dominant_pair(h: &Sym2) -> [(f64, Vec2); 2] {
    let [a, b] = h.eigen();
    if a.0.abs() <= b.0.abs() {
        [a, b]
    } else {
        [b, a]
    }
}

#[derive(Clone, Debug, Default)]
pub struct Detection {
    pub points: Vec<CriticalPoint>,
    pub curves: Vec<CriticalCurve>,
    /// Number of candidate triangles (diagnostic).
    pub candidates: usize,
}

/// Detects the critical set of a planar field. Vertex gradients for the
/// candidate test come from the quadratic patch fits (second-order accurate);
/// the linear recovery only vets the refined points.
pub fn detect_critical_set(
    field: &ScalarField,
    gradient: &GradientField,
    hessian: &HessianField,
) -> Result<Detection, CriticalError> {
    if field.max_gradient() < DEGENERACY_THRESHOLD {
        return Err(CriticalError::DegenerateField);
    }
    let mesh = &field.mesh;
    let h = mesh.h;
    let trusted: Vec<usize> = (0..mesh.n_vertices()).filter(|&v| !hessian.low_confidence[v]).collect();
    let mut norms: Vec<f64> = trusted.iter().map(|&v| hessian.values[v].norm()).collect();
    norms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let typical = if norms.is_empty() { 0.0 } else { norms[norms.len() / 2] };
    let slack = CANDIDATE_SLACK * h * h * typical;

    let mut candidates = Vec::new();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        if tri.iter().any(|&v| hessian.low_confidence[v]) {
            continue;
        }
        let g = tri.map(|v| hessian.fits[v].grad);
        if origin_distance_to_hull(g) <= slack {
            candidates.push(t);
        }
    }
    let centroids: Vec<Vec2> = candidates.iter().map(|&t| mesh.centroid(t)).collect();
    let refiner = Refiner { hessian };
    let mut raw_points: Vec<CriticalPoint> = Vec::new();
    let mut curves = Vec::new();
    for cluster in cluster_points(&centroids, 2.0 * h) {
        let pts: Vec<Vec2> = cluster.iter().map(|&i| centroids[i]).collect();
        if diameter(&pts) <= 4.0 * h {
            if let Some(p) = refine_point(&refiner, mean(&pts), h) {
                raw_points.push(p);
            }
            continue;
        }
        let loci: Vec<Vec2> = pts.iter().map(|&p| refiner.project(p, h)).collect();
        match chain_curve(&loci, h) {
            Some(curve) => curves.push(curve),
            None => {
                for group in cluster_points(&loci, 2.0 * h) {
                    let sub: Vec<Vec2> = group.iter().map(|&i| loci[i]).collect();
                    if let Some(p) = refine_point(&refiner, mean(&sub), h) {
                        raw_points.push(p);
                    }
                }
            }
        }
    }
    // Independent consistency check with the linear gradient recovery.
    raw_points.retain(|p| {
        let g = mesh.locate_clamped(p.location).map(|(t, b)| {
            let tri = mesh.triangles[t];
            (0..3).fold(Vec2::ZERO, |acc, k| acc + gradient.values[tri[k]] * b[k])
        });
        g.is_some_and(|g| g.norm() <= 5.0 * h * p.hessian.norm().max(typical))
    });
    // Merge points closer than 2h and keep only those well inside the domain.
    let locs: Vec<Vec2> = raw_points.iter().map(|p| p.location).collect();
    let mut points = Vec::new();
    for group in cluster_points(&locs, 2.0 * h) {
        let best = group
            .iter()
            .min_by(|&&a, &&b| {
                raw_points[a]
                    .gradient_residual
                    .partial_cmp(&raw_points[b].gradient_residual)
                    .unwrap()
            })
            .unwrap();
        let p = raw_points[*best];
        if mesh.region.dirichlet_distance(p.location) < -0.5 * h {
            points.push(p);
        }
    }
    points.sort_by(|a, b| {
        (a.location.x, a.location.y)
            .partial_cmp(&(b.location.x, b.location.y))
            .unwrap()
    });
    Ok(Detection {
        points,
        curves,
        candidates: candidates.len(),
    })
}

fn refine_point(refiner: &Refiner, start: Vec2, h: f64) -> Option<CriticalPoint> {
    let (x, fit) = match refiner.newton(start, 2.0 * h) {
        Some(r) => r,
        None => {
            let fit = refiner.fit(start);
            (start, fit)
        }
    };
    if x.distance(start) > 2.0 * h {
        return None;
    }
    let (classification, morse_index) = classify(&fit.hess, TAU_DEG);
    Some(CriticalPoint {
        location: x,
        gradient_residual: fit.grad_at(x).norm(),
        hessian: fit.hess,
        classification,
        morse_index,
    })
}

/// Orders loci into a chain (by angle about their centroid) and accepts it
/// as a critical curve if consecutive points are within 2h and it spreads
/// beyond 4h.
fn chain_curve(loci: &[Vec2], h: f64) -> Option<CriticalCurve> {
    if loci.len() < 3 || diameter(loci) <= 4.0 * h {
        return None;
    }
    // Average the loci in angular bins of arc length about h.
    let c = mean(loci);
    let radius = loci.iter().map(|p| p.distance(c)).sum::<f64>() / loci.len() as f64;
    let bins = ((std::f64::consts::TAU * radius / h).ceil() as usize).max(8);
    let mut acc = vec![(Vec2::ZERO, 0usize); bins];
    for &p in loci {
        let a = (p - c).angle().rem_euclid(std::f64::consts::TAU);
        let k = ((a / std::f64::consts::TAU * bins as f64) as usize).min(bins - 1);
        acc[k].0 += p;
        acc[k].1 += 1;
    }
    let mut pts: Vec<Vec2> = acc.iter().filter(|(_, n)| *n > 0).map(|(s, n)| *s / *n as f64).collect();
    if pts.len() < 3 {
        return None;
    }
    let gaps: Vec<f64> = (0..pts.len()).map(|i| pts[i].distance(pts[(i + 1) % pts.len()])).collect();
    let open_gaps = gaps.iter().filter(|&&g| g > 2.0 * h).count();
    let closed = open_gaps == 0;
    if !closed {
        // An open chain has exactly one long gap; rotate it to the end.
        if open_gaps != 1 {
            return None;
        }
        let k = gaps.iter().position(|&g| g > 2.0 * h).unwrap();
        pts.rotate_left(k + 1);
    }
    let fitted_circle = if closed {
        let (center, radius) = fit_circle(&pts)?;
        if winding_number(&pts, center).abs() != 1 {
            return None;
        }
        let dev = pts
            .iter()
            .map(|p| (p.distance(center) - radius).abs())
            .fold(0.0, f64::max);
        Some(CircleFit {
            center,
            radius,
            max_radial_deviation: dev,
        })
    } else {
        None
    };
    Some(CriticalCurve {
        points: pts,
        closed,
        fitted_circle,
    })
}

/// Cross-check of a detected critical circle against the radius where the
/// radial flux term changes sign.
pub fn radial_shortcut_agrees(curves: &[CriticalCurve], r_star: Option<f64>, h: f64) -> bool {
    match r_star {
        None => curves.is_empty(),
        Some(r) => {
            curves.len() == 1
                && curves[0]
                    .fitted_circle
                    .is_some_and(|c| (c.radius - r).abs() <= 2.0 * h && c.center.norm() <= 2.0 * h)
        }
    }
}

/// Sweeps meridian results (either half-plane or mirrored) about the axis y = 0.
pub fn sweep_to_3d(points: &[CriticalPoint], curves: &[CriticalCurve], h: f64) -> CriticalSet3D {
    let mut out = CriticalSet3D::default();
    for p in points {
        let loc = p.location;
        if loc.y.abs() <= 2.0 * h {
            out.axis_points.push(loc.x);
        } else if loc.y > 0.0 {
            out.circles.push(loc);
        }
    }
    for c in curves {
        let sphere = c.fitted_circle.and_then(|f| {
            (c.closed && f.center.y.abs() <= 2.0 * h && f.max_radial_deviation <= 2.0 * h)
                .then_some((f.center.x, f.radius))
        });
        out.surfaces.push(SweptSurface {
            meridian: c.points.clone(),
            closed: c.closed,
            sphere,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Conic, PlanarRegion};
    use crate::fields::{recover_gradient, recover_hessian};
    use crate::mesh::{triangulate, Mesh};
    use std::sync::Arc;

    fn disk(h: f64, r: f64) -> Arc<Mesh> {
        Arc::new(triangulate(&PlanarRegion::new(Conic::circle(0.0, r), None), h).unwrap())
    }

    fn detect(f: &ScalarField) -> Detection {
        let g = recover_gradient(f).unwrap();
        let hf = recover_hessian(f).unwrap();
        detect_critical_set(f, &g, &hf).unwrap()
    }

    #[test]
    fn classify_examples() {
        assert_eq!(classify(&Sym2::diag(-1.0, -1.0), TAU_DEG), (Classification::Maximum, Some(2)));
        assert_eq!(classify(&Sym2::diag(-1.0, 1.0), TAU_DEG), (Classification::Saddle, Some(1)));
        assert_eq!(classify(&Sym2::diag(1.0, 2.0), TAU_DEG), (Classification::Minimum, Some(0)));
        assert_eq!(classify(&Sym2::diag(-1.0, 0.0), TAU_DEG), (Classification::Degenerate, None));
    }

    fn point(class: Classification, det_sign: f64) -> CriticalPoint {
        let hess = if det_sign > 0.0 { Sym2::diag(-1.0, -1.0) } else { Sym2::diag(-1.0, 1.0) };
        CriticalPoint {
            location: Vec2::ZERO,
            gradient_residual: 0.0,
            hessian: hess,
            classification: class,
            morse_index: None,
        }
    }

    #[test]
    fn index_sums() {
        assert_eq!(index_sum(&[point(Classification::Maximum, 1.0)]), Ok(1));
        assert_eq!(
            index_sum(&[point(Classification::Maximum, 1.0), point(Classification::Saddle, -1.0)]),
            Ok(0)
        );
        let mut d = point(Classification::Degenerate, 1.0);
        d.hessian = Sym2::diag(-1.0, 0.0);
        assert!(index_sum(&[d]).is_err());
    }

    #[test]
    fn synthetic_maximum_and_saddle() {
        let mesh = disk(0.05, 1.0);
        let c = Vec2::new(0.2, -0.1);
        let f = ScalarField::from_fn(mesh.clone(), |p| -(p - c).norm_squared() * 0.5);
        let d = detect(&f);
        assert_eq!(d.points.len(), 1);
        assert!(d.points[0].location.distance(c) < 1e-9);
        assert_eq!(d.points[0].classification, Classification::Maximum);

        let s = ScalarField::from_fn(mesh, |p| p.x * p.x - p.y * p.y + 0.3 * p.x);
        let d = detect(&s);
        assert_eq!(d.points.len(), 1);
        assert!(d.points[0].location.distance(Vec2::new(-0.15, 0.0)) < 1e-9);
        assert_eq!(d.points[0].classification, Classification::Saddle);
        assert!(d.curves.is_empty());
    }

    #[test]
    fn synthetic_ring_is_a_closed_curve() {
        let h = 0.03;
        let region = PlanarRegion::new(Conic::circle(0.0, 2.0), Some(Conic::circle(0.0, 0.6)));
        let mesh = Arc::new(triangulate(&region, h).unwrap());
        let r0 = 1.2;
        let f = ScalarField::from_fn(mesh, |p| -(p.norm() - r0).powi(2));
        let d = detect(&f);
        assert!(d.points.is_empty(), "{:?}", d.points);
        assert_eq!(d.curves.len(), 1);
        let fit = d.curves[0].fitted_circle.unwrap();
        assert!((fit.radius - r0).abs() < 2.0 * h);
        assert!(fit.max_radial_deviation < 2.0 * h);
        let s = sweep_to_3d(&d.points, &d.curves, h);
        assert_eq!(s.surfaces.len(), 1);
        assert!(s.surfaces[0].sphere.is_some());
    }

    #[test]
    fn sweep_sorts_axis_and_circles() {
        let h = 0.05;
        let mk = |x: f64, y: f64| CriticalPoint {
            location: Vec2::new(x, y),
            ..point(Classification::Maximum, 1.0)
        };
        let s = sweep_to_3d(&[mk(0.3, 0.01), mk(-0.5, 0.8), mk(-0.5, -0.8)], &[], h);
        assert_eq!(s.axis_points, vec![0.3]);
        assert_eq!(s.circles, vec![Vec2::new(-0.5, 0.8)]);
        assert!(s.surfaces.is_empty());
    }

    #[test]
    fn degenerate_field_is_refused() {
        let mesh = disk(0.1, 1.0);
        let f = ScalarField::from_fn(mesh, |_| 0.0);
        let g = recover_gradient(&f).unwrap();
        let hf = recover_hessian(&f).unwrap();
        assert_eq!(detect_critical_set(&f, &g, &hf).unwrap_err(), CriticalError::DegenerateField);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn classification_is_invariant_under_rotation_and_scaling(
                a in -3.0f64..3.0, b in -3.0f64..3.0, angle in 0.0f64..6.3, scale in 0.01f64..100.0,
            ) {
                prop_assume!(a.abs() > 1e-2 && b.abs() > 1e-2);
                let base = Sym2::diag(a, b);
                let moved = Sym2 { xx: base.xx * scale, xy: base.xy * scale, yy: base.yy * scale }.rotate(angle);
                prop_assert_eq!(classify(&base, TAU_DEG), classify(&moved, TAU_DEG));
                let (class, index) = classify(&base, TAU_DEG);
                prop_assert_eq!(index, Some((a < 0.0) as u8 + (b < 0.0) as u8));
                prop_assert_eq!(class == Classification::Saddle, a * b < 0.0);
            }

            #[test]
            fn clusters_partition_the_points(pts in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 0..60), r in 0.01f64..0.5) {
                let pts: Vec<Vec2> = pts.into_iter().map(|(x, y)| Vec2::new(x, y)).collect();
                let groups = cluster_points(&pts, r);
                let mut seen: Vec<usize> = groups.iter().flatten().copied().collect();
                seen.sort();
                prop_assert_eq!(seen, (0..pts.len()).collect::<Vec<_>>());
                // points closer than r always share a cluster
                let id = |i: usize| groups.iter().position(|g| g.contains(&i)).unwrap();
                for i in 0..pts.len() {
                    for j in 0..i {
                        if pts[i].distance(pts[j]) < r {
                            prop_assert_eq!(id(i), id(j));
                        }
                    }
                }
            }
        }
    }

}
