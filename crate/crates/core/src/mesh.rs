//! Conforming triangulations of planar regions.
//!
//! Generation follows the force-equilibrium approach: boundary samples are
//! fixed, interior points start on a hexagonal lattice and relax under
//! repulsive edge springs, and a constrained Delaunay triangulation of the
//! final point set (boundary chords as constraints) gives the mesh.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use spade::{ConstrainedDelaunayTriangulation, DelaunayTriangulation, Point2, Triangulation};
use thiserror::Error;

use crate::domain::{BoundaryLabel, DomainError, DomainSpec, PlanarRegion};
use crate::geometry::{orient2d, winding_number, Vec2};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VertexTag {
    Interior,
    Outer,
    Inner,
    Axis,
}

impl VertexTag {
    /// Dirichlet vertices carry boundary data; Interior and Axis vertices are unknowns.
    pub fn is_dirichlet(self) -> bool {
        matches!(self, VertexTag::Outer | VertexTag::Inner)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VertexTag::Interior => "Interior",
            VertexTag::Outer => "Outer",
            VertexTag::Inner => "Inner",
            VertexTag::Axis => "Axis",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("mesh size h = {h} must satisfy 0 < h < {limit} (a quarter of the domain diameter)")]
    InvalidSize { h: f64, limit: f64 },
    #[error("mesh quality failure: minimum angle {min_angle_deg:.2} deg after {attempts} attempts")]
    MeshQualityFailure { min_angle_deg: f64, attempts: usize },
    #[error("triangulation failed: {0}")]
    Triangulation(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub vertices: Vec<Vec2>,
    pub triangles: Vec<[usize; 3]>,
    pub tags: Vec<VertexTag>,
    pub h: f64,
    pub region: PlanarRegion,
    vertex_triangles: Vec<Vec<usize>>,
    neighbors: Vec<Vec<usize>>,
    locator: Locator,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeshQuality {
    pub min_angle_deg: f64,
    pub max_aspect_ratio: f64,
    pub min_edge: f64,
    pub max_edge: f64,
    pub mean_edge: f64,
    pub max_circumradius: f64,
    pub vertices: usize,
    pub triangles: usize,
}

impl Mesh {
    /// Builds a mesh from raw parts, reorienting triangles counterclockwise.
    pub fn from_parts(
        vertices: Vec<Vec2>,
        mut triangles: Vec<[usize; 3]>,
        tags: Vec<VertexTag>,
        h: f64,
        region: PlanarRegion,
    ) -> Mesh {
        assert_eq!(vertices.len(), tags.len());
        for t in &mut triangles {
            if orient2d(vertices[t[0]], vertices[t[1]], vertices[t[2]]) < 0.0 {
                t.swap(1, 2);
            }
        }
        let mut vertex_triangles = vec![Vec::new(); vertices.len()];
        let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); vertices.len()];
        for (k, t) in triangles.iter().enumerate() {
            for i in 0..3 {
                vertex_triangles[t[i]].push(k);
                for j in 0..3 {
                    if i != j {
                        neighbors[t[i]].push(t[j]);
                    }
                }
            }
        }
        for n in &mut neighbors {
            n.sort_unstable();
            n.dedup();
        }
        let locator = Locator::new(&vertices, &triangles, h);
        Mesh {
            vertices,
            triangles,
            tags,
            h,
            region,
            vertex_triangles,
            neighbors,
            locator,
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn vertex_triangles(&self, v: usize) -> &[usize] {
        &self.vertex_triangles[v]
    }

    pub fn triangle_points(&self, t: usize) -> [Vec2; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        0.5 * orient2d(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    pub fn centroid(&self, t: usize) -> Vec2 {
        let [a, b, c] = self.triangle_points(t);
        (a + b + c) / 3.0
    }

    /// Sorted list of undirected edges.
    pub fn edges(&self) -> Vec<[usize; 2]> {
        let mut edges: Vec<[usize; 2]> = self
            .triangles
            .iter()
            .flat_map(|t| (0..3).map(move |i| sorted_edge(t[i], t[(i + 1) % 3])))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// For every undirected edge, the (one or two) triangles that contain it.
    pub fn edge_triangles(&self) -> HashMap<[usize; 2], Vec<usize>> {
        let mut map: HashMap<[usize; 2], Vec<usize>> = HashMap::new();
        for (k, t) in self.triangles.iter().enumerate() {
            for i in 0..3 {
                map.entry(sorted_edge(t[i], t[(i + 1) % 3])).or_default().push(k);
            }
        }
        map
    }

    /// V − E + F with F counting triangles only.
    pub fn euler_characteristic(&self) -> i64 {
        self.n_vertices() as i64 - self.edges().len() as i64 + self.triangles.len() as i64
    }

    pub fn free_vertices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_vertices()).filter(|&v| !self.tags[v].is_dirichlet())
    }

    /// Graph distance (in edges) from every vertex to the nearest Dirichlet vertex.
    pub fn hops_to_boundary(&self) -> Vec<usize> {
        let mut hops = vec![usize::MAX; self.n_vertices()];
        let mut queue = std::collections::VecDeque::new();
        for v in 0..self.n_vertices() {
            if self.tags[v].is_dirichlet() {
                hops[v] = 0;
                queue.push_back(v);
            }
        }
        while let Some(v) = queue.pop_front() {
            for &w in &self.neighbors[v] {
                if hops[w] == usize::MAX {
                    hops[w] = hops[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        hops
    }

    /// All vertices within `rings` edges of `v`, including `v` itself.
    pub fn ring(&self, v: usize, rings: usize) -> Vec<usize> {
        let mut out = vec![v];
        let mut frontier = vec![v];
        for _ in 0..rings {
            let mut next = Vec::new();
            for &u in &frontier {
                for &w in &self.neighbors[u] {
                    if !out.contains(&w) {
                        out.push(w);
                        next.push(w);
                    }
                }
            }
            frontier = next;
        }
        out
    }

    /// Containing triangle and barycentric coordinates of `p`, if `p` lies in the mesh.
    pub fn locate(&self, p: Vec2) -> Option<(usize, [f64; 3])> {
        self.locator.locate(self, p, false)
    }

    /// Like `locate`, but points slightly outside the polygonal mesh (within
    /// one cell, e.g. in the gap between a chord and the curved boundary) are
    /// snapped to the best nearby triangle with clamped coordinates.
    pub fn locate_clamped(&self, p: Vec2) -> Option<(usize, [f64; 3])> {
        self.locator.locate(self, p, true)
    }

    /// Reflects a half-domain mesh across the axis y = 0. Returns the full
    /// mesh and, for each of its vertices, the source vertex in `self`.
    pub fn mirror(&self) -> (Mesh, Vec<usize>) {
        let mut vertices = self.vertices.clone();
        let mut tags: Vec<VertexTag> = self
            .tags
            .iter()
            .map(|&t| if t == VertexTag::Axis { VertexTag::Interior } else { t })
            .collect();
        let mut source: Vec<usize> = (0..self.n_vertices()).collect();
        let mut image = vec![usize::MAX; self.n_vertices()];
        for v in 0..self.n_vertices() {
            let p = self.vertices[v];
            if p.y == 0.0 {
                image[v] = v;
            } else {
                image[v] = vertices.len();
                vertices.push(Vec2::new(p.x, -p.y));
                tags.push(tags[v]);
                source.push(v);
            }
        }
        let mut triangles = self.triangles.clone();
        for t in &self.triangles {
            triangles.push([image[t[0]], image[t[2]], image[t[1]]]);
        }
        let region = self.region.mirrored();
        (Mesh::from_parts(vertices, triangles, tags, self.h, region), source)
    }

    pub fn quality(&self) -> MeshQuality {
        mesh_quality(self)
    }

    /// Plain-text dump: a vertex section (index x y tag) and a triangle section.
    pub fn write_dump<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut s = String::new();
        let _ = writeln!(s, "vertices {}", self.n_vertices());
        for (i, (p, t)) in self.vertices.iter().zip(&self.tags).enumerate() {
            let _ = writeln!(s, "{i} {} {} {}", p.x, p.y, t.as_str());
        }
        let _ = writeln!(s, "triangles {}", self.triangles.len());
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        w.write_all(s.as_bytes())
    }
}

fn sorted_edge(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

fn angles(p: [Vec2; 3]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for i in 0..3 {
        let a = p[(i + 1) % 3] - p[i];
        let b = p[(i + 2) % 3] - p[i];
        out[i] = a.cross(b).abs().atan2(a.dot(b));
    }
    out
}

fn circumradius(p: [Vec2; 3]) -> f64 {
    let a = p[1].distance(p[2]);
    let b = p[0].distance(p[2]);
    let c = p[0].distance(p[1]);
    a * b * c / (2.0 * orient2d(p[0], p[1], p[2]).abs())
}

/// Exact quality statistics recomputed from the vertex coordinates.
pub fn mesh_quality(mesh: &Mesh) -> MeshQuality {
    let mut min_angle = f64::INFINITY;
    let mut max_aspect: f64 = 0.0;
    let mut max_circ: f64 = 0.0;
    for t in 0..mesh.triangles.len() {
        let p = mesh.triangle_points(t);
        for a in angles(p) {
            min_angle = min_angle.min(a);
        }
        let r = circumradius(p);
        let longest = (0..3)
            .map(|i| p[i].distance(p[(i + 1) % 3]))
            .fold(0.0, f64::max);
        let area = 0.5 * orient2d(p[0], p[1], p[2]).abs();
        // Longest edge over the altitude onto it; 2/sqrt(3) for equilateral.
        max_aspect = max_aspect.max(longest * longest / (2.0 * area));
        max_circ = max_circ.max(r);
    }
    let edges = mesh.edges();
    let lengths: Vec<f64> = edges
        .iter()
        .map(|e| mesh.vertices[e[0]].distance(mesh.vertices[e[1]]))
        .collect();
    let sum: f64 = lengths.iter().sum();
    MeshQuality {
        min_angle_deg: min_angle.to_degrees(),
        max_aspect_ratio: max_aspect,
        min_edge: lengths.iter().cloned().fold(f64::INFINITY, f64::min),
        max_edge: lengths.iter().cloned().fold(0.0, f64::max),
        mean_edge: sum / lengths.len().max(1) as f64,
        max_circumradius: max_circ,
        vertices: mesh.n_vertices(),
        triangles: mesh.triangles.len(),
    }
}

/// Uniform bucket grid over triangle bounding boxes.
#[derive(Clone, Debug)]
struct Locator {
    origin: Vec2,
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl Locator {
    fn new(vertices: &[Vec2], triangles: &[[usize; 3]], h: f64) -> Locator {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in vertices {
            lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        if vertices.is_empty() {
            lo = Vec2::ZERO;
            hi = Vec2::ZERO;
        }
        let cell = (2.0 * h).max(1e-9);
        let nx = ((hi.x - lo.x) / cell).floor() as usize + 1;
        let ny = ((hi.y - lo.y) / cell).floor() as usize + 1;
        let mut loc = Locator {
            origin: lo,
            cell,
            nx,
            ny,
            buckets: vec![Vec::new(); nx * ny],
        };
        for (k, t) in triangles.iter().enumerate() {
            let ps = [vertices[t[0]], vertices[t[1]], vertices[t[2]]];
            let (i0, j0) = loc.cell_of(Vec2::new(
                ps.iter().map(|p| p.x).fold(f64::INFINITY, f64::min),
                ps.iter().map(|p| p.y).fold(f64::INFINITY, f64::min),
            ));
            let (i1, j1) = loc.cell_of(Vec2::new(
                ps.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max),
                ps.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max),
            ));
            for j in j0..=j1 {
                for i in i0..=i1 {
                    loc.buckets[j * nx + i].push(k);
                }
            }
        }
        loc
    }

    fn cell_of(&self, p: Vec2) -> (usize, usize) {
        let i = ((p.x - self.origin.x) / self.cell).floor();
        let j = ((p.y - self.origin.y) / self.cell).floor();
        (
            i.clamp(0.0, (self.nx - 1) as f64) as usize,
            j.clamp(0.0, (self.ny - 1) as f64) as usize,
        )
    }

    fn locate(&self, mesh: &Mesh, p: Vec2, clamp: bool) -> Option<(usize, [f64; 3])> {
        if !p.is_finite() {
            return None;
        }
        let i = ((p.x - self.origin.x) / self.cell).floor();
        let j = ((p.y - self.origin.y) / self.cell).floor();
        let reach = if clamp { 1.0 } else { 0.0 };
        if i < -reach || j < -reach || i > self.nx as f64 - 1.0 + reach || j > self.ny as f64 - 1.0 + reach {
            return None;
        }
        let (ci, cj) = self.cell_of(p);
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        let span = if clamp { 1 } else { 0 };
        for dj in -span..=span {
            for di in -span..=span {
                let (ii, jj) = (ci as i64 + di, cj as i64 + dj);
                if ii < 0 || jj < 0 || ii >= self.nx as i64 || jj >= self.ny as i64 {
                    continue;
                }
                for &t in &self.buckets[jj as usize * self.nx + ii as usize] {
                    let bary = barycentric(mesh.triangle_points(t), p);
                    let worst = bary[0].min(bary[1]).min(bary[2]);
                    if worst >= -1e-12 {
                        return Some((t, bary));
                    }
                    if clamp && best.as_ref().is_none_or(|b| worst > b.2) {
                        best = Some((t, bary, worst));
                    }
                }
            }
        }
        best.map(|(t, b, _)| {
            let c = [b[0].max(0.0), b[1].max(0.0), b[2].max(0.0)];
            let s = c[0] + c[1] + c[2];
            (t, [c[0] / s, c[1] / s, c[2] / s])
        })
    }
}

pub fn barycentric(p: [Vec2; 3], x: Vec2) -> [f64; 3] {
    let area = orient2d(p[0], p[1], p[2]);
    let l0 = orient2d(x, p[1], p[2]) / area;
    let l1 = orient2d(p[0], x, p[2]) / area;
    [l0, l1, 1.0 - l0 - l1]
}

const FSCALE: f64 = 1.2;
const DT: f64 = 0.2;
const MAX_RELAX: usize = 80;
const MIN_ANGLE_DEG: f64 = 20.0;
const ATTEMPTS: usize = 3;

/// Triangulates the computational region of a domain (the meridian half-domain for n >= 3).
pub fn triangulate_domain(domain: &DomainSpec, h: f64) -> Result<Mesh, MeshError> {
    let (region, _) = domain.computational_region()?;
    triangulate(&region, h)
}

pub fn triangulate(region: &PlanarRegion, h: f64) -> Result<Mesh, MeshError> {
    let limit = region.diameter() / 4.0;
    if !(h.is_finite() && h > 0.0 && h < limit) {
        return Err(MeshError::InvalidSize { h, limit });
    }
    let mut worst = 0.0;
    for attempt in 0..ATTEMPTS {
        let mesh = generate(region, h, attempt)?;
        let q = mesh_quality(&mesh);
        if q.min_angle_deg >= MIN_ANGLE_DEG {
            return Ok(mesh);
        }
        worst = q.min_angle_deg;
    }
    Err(MeshError::MeshQualityFailure {
        min_angle_deg: worst,
        attempts: ATTEMPTS,
    })
}

struct BoundaryLoops {
    points: Vec<Vec2>,
    tags: Vec<VertexTag>,
    /// Closed polygons as index cycles (first index not repeated).
    loops: Vec<Vec<usize>>,
}

/// Boundary spacing that keeps the chord sagitta below h²/8 on curved parts.
fn boundary_spacing(region: &PlanarRegion, h: f64) -> f64 {
    let kappa = |c: &crate::domain::Conic| {
        let (big, small) = (c.ax.max(c.ay), c.ax.min(c.ay));
        big / (small * small)
    };
    let mut kmax = kappa(&region.outer);
    if let Some(hole) = &region.hole {
        kmax = kmax.max(kappa(hole));
    }
    0.98 * h / kmax.max(1.0).sqrt()
}

fn boundary_loops(region: &PlanarRegion, h: f64) -> Result<BoundaryLoops, MeshError> {
    let comps = region.boundary_components(boundary_spacing(region, h))?;
    let mut points: Vec<Vec2> = Vec::new();
    let mut tags: Vec<VertexTag> = Vec::new();
    let mut loops = Vec::new();
    let tag_of = |label: BoundaryLabel| match label {
        BoundaryLabel::Outer => VertexTag::Outer,
        BoundaryLabel::Inner => VertexTag::Inner,
        BoundaryLabel::Axis => VertexTag::Axis,
    };
    if !region.half {
        for c in &comps {
            let start = points.len();
            let n = c.points.len() - 1;
            points.extend_from_slice(&c.points[..n]);
            tags.extend(std::iter::repeat_n(tag_of(c.label), n));
            loops.push((start..start + n).collect());
        }
    } else {
        // Components chain end to start into a single closed loop.
        let mut cycle = Vec::new();
        for c in &comps {
            for (k, &p) in c.points.iter().enumerate() {
                if k == 0 && !points.is_empty() {
                    let last = points.len() - 1;
                    debug_assert_eq!(points[last], p);
                    if tag_of(c.label).is_dirichlet() {
                        tags[last] = tag_of(c.label);
                    }
                    continue;
                }
                points.push(p);
                tags.push(tag_of(c.label));
                cycle.push(points.len() - 1);
            }
        }
        // The last point coincides with the first.
        let last = points.pop().unwrap();
        let last_tag = tags.pop().unwrap();
        cycle.pop();
        debug_assert_eq!(last, points[0]);
        if last_tag.is_dirichlet() && !tags[0].is_dirichlet() {
            tags[0] = last_tag;
        }
        loops.push(cycle);
    }
    Ok(BoundaryLoops { points, tags, loops })
}

fn hex_seeds(region: &PlanarRegion, h: f64, attempt: usize) -> Vec<Vec2> {
    let (lo, hi) = region.bounding_box();
    let center = region.outer.center();
    let dy = h * 3f64.sqrt() / 2.0;
    // Later attempts shift the lattice slightly to break unlucky alignments.
    let shift = Vec2::new(0.17 * h, 0.11 * h) * attempt as f64;
    let j0 = ((lo.y - center.y) / dy).floor() as i64 - 1;
    let j1 = ((hi.y - center.y) / dy).ceil() as i64 + 1;
    let i0 = ((lo.x - center.x) / h).floor() as i64 - 2;
    let i1 = ((hi.x - center.x) / h).ceil() as i64 + 2;
    let mut out = Vec::new();
    for j in j0..=j1 {
        let offset = if j.rem_euclid(2) == 1 { 0.5 * h } else { 0.0 };
        for i in i0..=i1 {
            let p = center + Vec2::new(i as f64 * h + offset, j as f64 * dy) + shift;
            if region.signed_distance(p) < -0.45 * h {
                out.push(p);
            }
        }
    }
    out
}

fn sdf_gradient(region: &PlanarRegion, p: Vec2, eps: f64) -> Vec2 {
    let dx = region.signed_distance(p + Vec2::new(eps, 0.0)) - region.signed_distance(p - Vec2::new(eps, 0.0));
    let dy = region.signed_distance(p + Vec2::new(0.0, eps)) - region.signed_distance(p - Vec2::new(0.0, eps));
    Vec2::new(dx, dy) / (2.0 * eps)
}

fn to_spade(p: Vec2) -> Point2<f64> {
    Point2::new(p.x, p.y)
}

fn generate(region: &PlanarRegion, h: f64, attempt: usize) -> Result<Mesh, MeshError> {
    let boundary = boundary_loops(region, h)?;
    let nb = boundary.points.len();
    let mut interior = hex_seeds(region, h, attempt);
    let margin = 0.35 * h;

    let mut edges: Vec<[usize; 2]> = Vec::new();
    let mut reference = interior.clone();
    let mut retriangulate = true;
    for _ in 0..MAX_RELAX {
        if retriangulate {
            let all: Vec<Point2<f64>> = boundary
                .points
                .iter()
                .chain(&interior)
                .map(|&p| to_spade(p))
                .collect();
            let dt: DelaunayTriangulation<Point2<f64>> = DelaunayTriangulation::bulk_load_stable(all)
                .map_err(|e| MeshError::Triangulation(format!("{e:?}")))?;
            let position = |i: usize| if i < nb { boundary.points[i] } else { interior[i - nb] };
            edges.clear();
            for face in dt.inner_faces() {
                let vs = face.vertices().map(|v| v.fix().index());
                let c = (position(vs[0]) + position(vs[1]) + position(vs[2])) / 3.0;
                if region.signed_distance(c) < -1e-3 * h {
                    for i in 0..3 {
                        edges.push(sorted_edge(vs[i], vs[(i + 1) % 3]));
                    }
                }
            }
            edges.sort_unstable();
            edges.dedup();
            reference = interior.clone();
            retriangulate = false;
        }
        let position = |i: usize| if i < nb { boundary.points[i] } else { interior[i - nb] };
        let lengths: Vec<f64> = edges
            .iter()
            .map(|e| position(e[0]).distance(position(e[1])))
            .collect();
        let mean_sq = lengths.iter().map(|l| l * l).sum::<f64>() / lengths.len().max(1) as f64;
        let l0 = FSCALE * mean_sq.sqrt();
        let mut force = vec![Vec2::ZERO; interior.len()];
        for (e, &l) in edges.iter().zip(&lengths) {
            let push = (l0 - l).max(0.0);
            if push == 0.0 || l == 0.0 {
                continue;
            }
            let f = (position(e[0]) - position(e[1])) * (push / l);
            if e[0] >= nb {
                force[e[0] - nb] += f;
            }
            if e[1] >= nb {
                force[e[1] - nb] -= f;
            }
        }
        let mut max_move: f64 = 0.0;
        for (p, f) in interior.iter_mut().zip(&force) {
            let old = *p;
            *p += *f * DT;
            let d = region.signed_distance(*p);
            if d > -margin {
                let g = sdf_gradient(region, *p, 1e-4 * h);
                if g.norm() > 0.0 {
                    *p -= g.normalized() * (d + margin);
                }
            }
            max_move = max_move.max(p.distance(old));
        }
        let drift = interior
            .iter()
            .zip(&reference)
            .map(|(a, b)| a.distance(*b))
            .fold(0.0, f64::max);
        if drift > 0.1 * h {
            retriangulate = true;
        }
        if max_move < 1e-3 * h {
            break;
        }
    }

    // Final constrained triangulation with every boundary chord as a constraint.
    let mut vertices = boundary.points.clone();
    vertices.extend_from_slice(&interior);
    let mut tags = boundary.tags.clone();
    tags.extend(std::iter::repeat_n(VertexTag::Interior, interior.len()));
    let mut constraints = Vec::new();
    for cycle in &boundary.loops {
        for k in 0..cycle.len() {
            constraints.push([cycle[k], cycle[(k + 1) % cycle.len()]]);
        }
    }
    let cdt: ConstrainedDelaunayTriangulation<Point2<f64>> =
        ConstrainedDelaunayTriangulation::bulk_load_cdt(vertices.iter().map(|&p| to_spade(p)).collect(), constraints)
            .map_err(|e| MeshError::Triangulation(format!("{e:?}")))?;
    if cdt.num_vertices() != vertices.len() {
        return Err(MeshError::Triangulation("duplicate vertices".into()));
    }
    let polygons: Vec<Vec<Vec2>> = boundary
        .loops
        .iter()
        .map(|cycle| cycle.iter().map(|&i| vertices[i]).collect())
        .collect();
    let mut triangles = Vec::new();
    for face in cdt.inner_faces() {
        let vs = face.vertices().map(|v| v.fix().index());
        let c = (vertices[vs[0]] + vertices[vs[1]] + vertices[vs[2]]) / 3.0;
        let inside = if region.signed_distance(c) < -2.0 * h {
            true
        } else {
            polygons.iter().map(|poly| winding_number(poly, c)).sum::<i32>() != 0
        };
        if inside {
            triangles.push(vs);
        }
    }
    // Drop interior points that ended up outside every kept triangle.
    let mut used = vec![false; vertices.len()];
    for t in &triangles {
        for &v in t {
            used[v] = true;
        }
    }
    let mut remap = vec![usize::MAX; vertices.len()];
    let mut kept_vertices = Vec::new();
    let mut kept_tags = Vec::new();
    for v in 0..vertices.len() {
        if used[v] {
            remap[v] = kept_vertices.len();
            kept_vertices.push(vertices[v]);
            kept_tags.push(tags[v]);
        }
    }
    for t in &mut triangles {
        *t = t.map(|v| remap[v]);
    }
    Ok(Mesh::from_parts(kept_vertices, triangles, kept_tags, h, *region))
}
