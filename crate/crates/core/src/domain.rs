//! Analytic domain geometry.
//!
//! Every supported domain is either planar or rotationally symmetric about the
//! `x_n` axis, and every one of them has a planar cross-section whose boundary
//! curves are ellipses centred on the x-axis. Planar queries on an
//! n-dimensional domain use meridian coordinates `(x_n, r)`: the first
//! component runs along the symmetry axis, the second is the distance to it.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("invalid domain: {0}")]
    Invalid(String),
    #[error("point has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("curvature is undefined on the symmetry axis")]
    AxisCurvature,
    #[error("arc length {s} outside component range [0, {length}]")]
    ArcLengthOutOfRange { s: f64, length: f64 },
    #[error("planar domain has no meridian reduction")]
    NoMeridian,
    #[error("domain of dimension {0} has no planar form; use its meridian domain")]
    NotPlanar(usize),
    #[error("invalid boundary resolution {0}")]
    InvalidResolution(f64),
}

/// Meridian curve of a convex body of revolution, in `(x_n, r)` coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeridianCurve {
    /// Ellipse with semi-axis `a` along the symmetry axis and `b` across it.
    Ellipse { a: f64, b: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    Ball {
        #[serde(rename = "R")]
        radius: f64,
        n: usize,
    },
    Ellipse {
        a: f64,
        b: f64,
    },
    ConcentricAnnulus {
        #[serde(rename = "R_I")]
        inner: f64,
        #[serde(rename = "R_E")]
        outer: f64,
        n: usize,
    },
    /// Inner sphere centred at distance `offset` along the symmetry axis.
    EccentricAnnulus {
        #[serde(rename = "R_I")]
        inner: f64,
        #[serde(rename = "d")]
        offset: f64,
        #[serde(rename = "R_E")]
        outer: f64,
        n: usize,
    },
    ConvexRevolution {
        meridian: MeridianCurve,
        n: usize,
    },
}

impl DomainSpec {
    pub fn validate(&self) -> Result<(), DomainError> {
        let bad = |msg: &str| Err(DomainError::Invalid(msg.to_string()));
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let n = self.dim();
        if n < 2 {
            return bad("dimension n must be at least 2");
        }
        match *self {
            DomainSpec::Ball { radius, .. } if !positive(radius) => bad("R must be positive"),
            DomainSpec::Ellipse { a, b } if !positive(a) || !positive(b) => {
                bad("semi-axes a and b must be positive")
            }
            DomainSpec::ConcentricAnnulus { inner, outer, .. }
                if !(positive(inner) && positive(outer) && inner < outer) =>
            {
                bad("annulus requires 0 < R_I < R_E")
            }
            DomainSpec::EccentricAnnulus {
                inner,
                offset,
                outer,
                ..
            } => {
                if !(positive(inner) && positive(outer) && inner < outer) {
                    bad("annulus requires 0 < R_I < R_E")
                } else if !offset.is_finite() || offset == 0.0 {
                    bad("eccentric annulus requires a finite nonzero offset d")
                } else if offset.abs() + inner >= outer {
                    bad("inner sphere must lie strictly inside the outer sphere (|d| + R_I < R_E)")
                } else {
                    Ok(())
                }
            }
            DomainSpec::ConvexRevolution {
                meridian: MeridianCurve::Ellipse { a, b },
                ..
            } if !positive(a) || !positive(b) => bad("meridian semi-axes must be positive"),
            _ => Ok(()),
        }
    }

    /// Spatial dimension n.
    pub fn dim(&self) -> usize {
        match *self {
            DomainSpec::Ellipse { .. } => 2,
            DomainSpec::Ball { n, .. }
            | DomainSpec::ConcentricAnnulus { n, .. }
            | DomainSpec::EccentricAnnulus { n, .. }
            | DomainSpec::ConvexRevolution { n, .. } => n,
        }
    }

    pub fn is_convex(&self) -> bool {
        matches!(
            self,
            DomainSpec::Ball { .. } | DomainSpec::Ellipse { .. } | DomainSpec::ConvexRevolution { .. }
        )
    }

    pub fn is_concentric_annulus(&self) -> bool {
        matches!(self, DomainSpec::ConcentricAnnulus { .. })
    }

    /// The full planar cross-section through the symmetry axis (for n = 2, the domain itself).
    pub fn cross_section(&self) -> PlanarRegion {
        match *self {
            DomainSpec::Ball { radius, .. } => PlanarRegion::new(Conic::circle(0.0, radius), None),
            DomainSpec::Ellipse { a, b } => PlanarRegion::new(Conic::new(0.0, a, b), None),
            DomainSpec::ConcentricAnnulus { inner, outer, .. } => {
                PlanarRegion::new(Conic::circle(0.0, outer), Some(Conic::circle(0.0, inner)))
            }
            DomainSpec::EccentricAnnulus {
                inner,
                offset,
                outer,
                ..
            } => PlanarRegion::new(Conic::circle(0.0, outer), Some(Conic::circle(offset, inner))),
            DomainSpec::ConvexRevolution {
                meridian: MeridianCurve::Ellipse { a, b },
                ..
            } => PlanarRegion::new(Conic::new(0.0, a, b), None),
        }
    }

    /// The planar domain itself; only defined for n = 2.
    pub fn planar(&self) -> Result<PlanarRegion, DomainError> {
        self.validate()?;
        match self.dim() {
            2 => Ok(self.cross_section()),
            n => Err(DomainError::NotPlanar(n)),
        }
    }

    /// Half-plane cross-section `r >= 0` and the axisymmetric weight exponent `n - 2`.
    pub fn meridian_domain(&self) -> Result<MeridianDomain, DomainError> {
        self.validate()?;
        if self.dim() < 3 || matches!(self, DomainSpec::Ellipse { .. }) {
            return Err(DomainError::NoMeridian);
        }
        let mut region = self.cross_section();
        region.half = true;
        Ok(MeridianDomain {
            region,
            weight_exponent: (self.dim() - 2) as u32,
        })
    }

    /// The planar region a solve actually discretizes: the domain itself for n = 2,
    /// the meridian half-domain otherwise. Returns the weight exponent with it.
    pub fn computational_region(&self) -> Result<(PlanarRegion, u32), DomainError> {
        if self.dim() == 2 {
            Ok((self.planar()?, 0))
        } else {
            let m = self.meridian_domain()?;
            Ok((m.region, m.weight_exponent))
        }
    }

    /// Open-domain membership. Accepts either a full n-dimensional point or, for
    /// n >= 3, a planar meridian point `(x_n, r)`.
    pub fn contains(&self, point: &[f64]) -> Result<bool, DomainError> {
        let n = self.dim();
        let planar = if point.len() == n && n >= 3 {
            let r = point[..n - 1].iter().map(|v| v * v).sum::<f64>().sqrt();
            Vec2::new(point[n - 1], r)
        } else if point.len() == 2 {
            if n >= 3 {
                Vec2::new(point[0], point[1].abs())
            } else {
                Vec2::new(point[0], point[1])
            }
        } else {
            return Err(DomainError::DimensionMismatch {
                expected: n,
                got: point.len(),
            });
        };
        Ok(self.cross_section().contains(planar))
    }

    /// Boundary of the computational region, sampled at the given arc-length step.
    pub fn boundary_components(&self, resolution: f64) -> Result<Vec<BoundaryComponent>, DomainError> {
        let (region, _) = self.computational_region()?;
        region.boundary_components(resolution)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeridianDomain {
    pub region: PlanarRegion,
    pub weight_exponent: u32,
}

/// Axis-aligned ellipse centred at `(cx, 0)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conic {
    pub cx: f64,
    pub ax: f64,
    pub ay: f64,
}

impl Conic {
    pub fn new(cx: f64, ax: f64, ay: f64) -> Self {
        Self { cx, ax, ay }
    }

    pub fn circle(cx: f64, radius: f64) -> Self {
        Self::new(cx, radius, radius)
    }

    pub fn is_circle(&self) -> bool {
        self.ax == self.ay
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(self.cx, 0.0)
    }

    pub fn point(&self, t: f64) -> Vec2 {
        let (s, c) = t.sin_cos();
        Vec2::new(self.cx + self.ax * c, self.ay * s)
    }

    /// Derivative of `point` with respect to the angle parameter.
    pub fn tangent(&self, t: f64) -> Vec2 {
        let (s, c) = t.sin_cos();
        Vec2::new(-self.ax * s, self.ay * c)
    }

    pub fn speed(&self, t: f64) -> f64 {
        self.tangent(t).norm()
    }

    /// Curvature of the counterclockwise traversal at parameter `t`.
    pub fn curvature(&self, t: f64) -> f64 {
        let (s, c) = t.sin_cos();
        let q = self.ax * self.ax * s * s + self.ay * self.ay * c * c;
        self.ax * self.ay / (q * q.sqrt())
    }

    /// Value of the implicit function `(x/ax)^2 + (y/ay)^2 - 1`.
    pub fn implicit(&self, p: Vec2) -> f64 {
        let u = (p.x - self.cx) / self.ax;
        let v = p.y / self.ay;
        u * u + v * v - 1.0
    }

    /// Signed Euclidean distance (negative inside) and the closest boundary point.
    pub fn signed_distance(&self, p: Vec2) -> (f64, Vec2) {
        let local = p - self.center();
        if self.is_circle() {
            let r = local.norm();
            let foot = if r == 0.0 {
                Vec2::new(self.ax, 0.0)
            } else {
                local * (self.ax / r)
            };
            return (r - self.ax, foot + self.center());
        }
        // Reduce to the first quadrant with the major axis along the first coordinate.
        let swap = self.ay > self.ax;
        let (e0, e1) = if swap { (self.ay, self.ax) } else { (self.ax, self.ay) };
        let (y0, y1) = if swap {
            (local.y.abs(), local.x.abs())
        } else {
            (local.x.abs(), local.y.abs())
        };
        let (dist, x0, x1) = ellipse_distance_first_quadrant(e0, e1, y0, y1);
        let (fx, fy) = if swap { (x1, x0) } else { (x0, x1) };
        let foot = Vec2::new(fx.copysign(local.x), fy.copysign(local.y)) + self.center();
        let sign = if self.implicit(p) < 0.0 { -1.0 } else { 1.0 };
        (sign * dist, foot)
    }

    /// Parameter of the point of the conic closest to `p`.
    pub fn parameter_of(&self, p: Vec2) -> f64 {
        let (_, foot) = self.signed_distance(p);
        let local = foot - self.center();
        (local.y / self.ay).atan2(local.x / self.ax)
    }
}

/// Closest point on the ellipse (x/e0)^2 + (y/e1)^2 = 1 with e0 >= e1 to a
/// first-quadrant point, by robust bisection on the Lagrange multiplier.
fn ellipse_distance_first_quadrant(e0: f64, e1: f64, y0: f64, y1: f64) -> (f64, f64, f64) {
    if y1 > 0.0 {
        if y0 > 0.0 {
            let z0 = y0 / e0;
            let z1 = y1 / e1;
            let g = z0 * z0 + z1 * z1 - 1.0;
            if g != 0.0 {
                let r0 = (e0 / e1) * (e0 / e1);
                let n0 = r0 * z0;
                let mut s0 = z1 - 1.0;
                let mut s1 = if g < 0.0 { 0.0 } else { n0.hypot(z1) - 1.0 };
                let mut s = 0.0;
                for _ in 0..200 {
                    s = 0.5 * (s0 + s1);
                    if s == s0 || s == s1 {
                        break;
                    }
                    let ratio0 = n0 / (s + r0);
                    let ratio1 = z1 / (s + 1.0);
                    let gs = ratio0 * ratio0 + ratio1 * ratio1 - 1.0;
                    if gs > 0.0 {
                        s0 = s;
                    } else if gs < 0.0 {
                        s1 = s;
                    } else {
                        break;
                    }
                }
                let x0 = r0 * y0 / (s + r0);
                let x1 = y1 / (s + 1.0);
                ((x0 - y0).hypot(x1 - y1), x0, x1)
            } else {
                (0.0, y0, y1)
            }
        } else {
            ((y1 - e1).abs(), 0.0, e1)
        }
    } else {
        let numer0 = e0 * y0;
        let denom0 = e0 * e0 - e1 * e1;
        if numer0 < denom0 {
            let xde0 = numer0 / denom0;
            let x0 = e0 * xde0;
            let x1 = e1 * (1.0 - xde0 * xde0).max(0.0).sqrt();
            ((x0 - y0).hypot(x1), x0, x1)
        } else {
            ((y0 - e0).abs(), e0, 0.0)
        }
    }
}

/// Planar region: inside `outer`, outside the optional `hole`, and restricted
/// to `y >= 0` when `half` is set (meridian half-domain).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanarRegion {
    pub outer: Conic,
    pub hole: Option<Conic>,
    pub half: bool,
}

impl PlanarRegion {
    pub fn new(outer: Conic, hole: Option<Conic>) -> Self {
        Self {
            outer,
            hole,
            half: false,
        }
    }

    /// The full region obtained by reflecting a half-domain across the axis.
    pub fn mirrored(&self) -> PlanarRegion {
        PlanarRegion { half: false, ..*self }
    }

    pub fn is_simply_connected(&self) -> bool {
        self.hole.is_none()
    }

    /// Open membership. The symmetry axis of a half-domain is part of the
    /// domain (it is interior to the body of revolution).
    pub fn contains(&self, p: Vec2) -> bool {
        if self.half && p.y < 0.0 {
            return false;
        }
        if self.outer.implicit(p) >= 0.0 {
            return false;
        }
        match self.hole {
            Some(hole) => hole.implicit(p) > 0.0,
            None => true,
        }
    }

    /// Signed distance to the region boundary (negative inside), including the
    /// axis of a half-domain.
    pub fn signed_distance(&self, p: Vec2) -> f64 {
        let mut d = self.outer.signed_distance(p).0;
        if let Some(hole) = self.hole {
            d = d.max(-hole.signed_distance(p).0);
        }
        if self.half {
            d = d.max(-p.y);
        }
        d
    }

    /// Signed distance to the Dirichlet boundary only (outer and inner curves).
    pub fn dirichlet_distance(&self, p: Vec2) -> f64 {
        let mut d = self.outer.signed_distance(p).0;
        if let Some(hole) = self.hole {
            d = d.max(-hole.signed_distance(p).0);
        }
        d
    }

    pub fn diameter(&self) -> f64 {
        let (ax, ay) = (self.outer.ax, self.outer.ay);
        if self.half {
            (2.0 * ax).max(ax.hypot(ay))
        } else {
            2.0 * ax.max(ay)
        }
    }

    pub fn bounding_box(&self) -> (Vec2, Vec2) {
        let lo = Vec2::new(
            self.outer.cx - self.outer.ax,
            if self.half { 0.0 } else { -self.outer.ay },
        );
        let hi = Vec2::new(self.outer.cx + self.outer.ax, self.outer.ay);
        (lo, hi)
    }

    pub fn area(&self) -> f64 {
        let full = PI * self.outer.ax * self.outer.ay
            - self.hole.map_or(0.0, |h| PI * h.ax * h.ay);
        if self.half {
            0.5 * full
        } else {
            full
        }
    }

    /// Positively oriented boundary components sampled at spacing <= `resolution`.
    pub fn boundary_components(&self, resolution: f64) -> Result<Vec<BoundaryComponent>, DomainError> {
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(DomainError::InvalidResolution(resolution));
        }
        let mut out = Vec::new();
        if !self.half {
            out.push(BoundaryComponent::conic_arc(
                BoundaryLabel::Outer,
                self.outer,
                0.0,
                TAU,
                resolution,
            ));
            if let Some(hole) = self.hole {
                out.push(BoundaryComponent::conic_arc(
                    BoundaryLabel::Inner,
                    hole,
                    TAU,
                    0.0,
                    resolution,
                ));
            }
            return Ok(out);
        }
        let o = self.outer;
        let right = Vec2::new(o.cx + o.ax, 0.0);
        let left = Vec2::new(o.cx - o.ax, 0.0);
        out.push(BoundaryComponent::conic_arc(BoundaryLabel::Outer, o, 0.0, PI, resolution));
        match self.hole {
            None => {
                out.push(BoundaryComponent::segment(left, right, resolution));
            }
            Some(hole) => {
                let hl = Vec2::new(hole.cx - hole.ax, 0.0);
                let hr = Vec2::new(hole.cx + hole.ax, 0.0);
                out.push(BoundaryComponent::segment(left, hl, resolution));
                out.push(BoundaryComponent::conic_arc(
                    BoundaryLabel::Inner,
                    hole,
                    PI,
                    0.0,
                    resolution,
                ));
                out.push(BoundaryComponent::segment(hr, right, resolution));
            }
        }
        Ok(out)
    }

    /// Unit tangent of the Dirichlet boundary curve nearest to `p`, oriented
    /// positively (domain on the left), with that curve's label.
    pub fn boundary_tangent_near(&self, p: Vec2) -> (Vec2, BoundaryLabel) {
        let d_outer = self.outer.signed_distance(p).0.abs();
        match self.hole {
            Some(hole) if hole.signed_distance(p).0.abs() < d_outer => {
                let t = hole.parameter_of(p);
                (-hole.tangent(t).normalized(), BoundaryLabel::Inner)
            }
            _ => {
                let t = self.outer.parameter_of(p);
                (self.outer.tangent(t).normalized(), BoundaryLabel::Outer)
            }
        }
    }

    /// Signed curvature (positive orientation) of the Dirichlet boundary at the
    /// point nearest to `p`.
    pub fn boundary_curvature_near(&self, p: Vec2) -> f64 {
        let d_outer = self.outer.signed_distance(p).0.abs();
        match self.hole {
            Some(hole) if hole.signed_distance(p).0.abs() < d_outer => {
                -hole.curvature(hole.parameter_of(p))
            }
            _ => self.outer.curvature(self.outer.parameter_of(p)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BoundaryLabel {
    Outer,
    Inner,
    Axis,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BoundaryCurve {
    /// Arc of a conic from parameter `t_start` to `t_end` (decreasing for clockwise).
    ConicArc {
        conic: Conic,
        t_start: f64,
        t_end: f64,
        table: ArcTable,
    },
    Segment { from: Vec2, to: Vec2 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryComponent {
    pub label: BoundaryLabel,
    pub curve: BoundaryCurve,
    /// Sample points at equal arc-length spacing; closed components repeat the first point.
    pub points: Vec<Vec2>,
    pub arc_length: Vec<f64>,
    pub closed: bool,
}

impl BoundaryComponent {
    fn conic_arc(label: BoundaryLabel, conic: Conic, t_start: f64, t_end: f64, resolution: f64) -> Self {
        let table = ArcTable::new(conic, t_start, t_end);
        let curve = BoundaryCurve::ConicArc {
            conic,
            t_start,
            t_end,
            table,
        };
        let closed = (t_end - t_start).abs() >= TAU;
        let mut comp = BoundaryComponent {
            label,
            curve,
            points: Vec::new(),
            arc_length: Vec::new(),
            closed,
        };
        let length = comp.length();
        let segments = ((length / resolution).ceil() as usize).max(if closed { 8 } else { 2 });
        for k in 0..=segments {
            let s = length * k as f64 / segments as f64;
            let p = if closed && k == segments {
                comp.points[0]
            } else {
                comp.point_at_unchecked(s)
            };
            comp.points.push(p);
            comp.arc_length.push(s);
        }
        comp
    }

    fn segment(from: Vec2, to: Vec2, resolution: f64) -> Self {
        let length = from.distance(to);
        let segments = ((length / resolution).ceil() as usize).max(1);
        let points = (0..=segments)
            .map(|k| {
                if k == segments {
                    to
                } else {
                    let t = k as f64 / segments as f64;
                    Vec2::new(from.x + (to.x - from.x) * t, 0.0)
                }
            })
            .collect();
        let arc_length = (0..=segments)
            .map(|k| length * k as f64 / segments as f64)
            .collect();
        BoundaryComponent {
            label: BoundaryLabel::Axis,
            curve: BoundaryCurve::Segment { from, to },
            points,
            arc_length,
            closed: false,
        }
    }

    pub fn length(&self) -> f64 {
        match &self.curve {
            BoundaryCurve::ConicArc { table, .. } => table.total(),
            BoundaryCurve::Segment { from, to } => from.distance(*to),
        }
    }

    /// Point at arc length `s` from the start of the component.
    pub fn point_at(&self, s: f64) -> Result<Vec2, DomainError> {
        self.check_range(s)?;
        Ok(self.point_at_unchecked(s))
    }

    fn point_at_unchecked(&self, s: f64) -> Vec2 {
        match &self.curve {
            BoundaryCurve::ConicArc {
                conic,
                t_start,
                t_end,
                table,
            } => {
                let length = table.total();
                // Arc endpoints on the symmetry axis are placed exactly at r = 0.
                let on_axis = (t_end - t_start).abs() < TAU;
                if on_axis && s <= 0.0 {
                    return Vec2::new(conic.cx + conic.ax * t_start.cos().round(), 0.0);
                }
                if on_axis && s >= length {
                    return Vec2::new(conic.cx + conic.ax * t_end.cos().round(), 0.0);
                }
                conic.point(table.parameter_at(s))
            }
            BoundaryCurve::Segment { from, to } => {
                let t = s / from.distance(*to);
                *from + (*to - *from) * t
            }
        }
    }

    fn check_range(&self, s: f64) -> Result<(), DomainError> {
        let length = self.length();
        if !(s >= -1e-12 * length && s <= length * (1.0 + 1e-12)) {
            return Err(DomainError::ArcLengthOutOfRange { s, length });
        }
        Ok(())
    }

    /// Unit tangent in the direction of traversal at arc length `s`.
    pub fn tangent_at(&self, s: f64) -> Result<Vec2, DomainError> {
        self.check_range(s)?;
        Ok(match &self.curve {
            BoundaryCurve::ConicArc {
                conic,
                t_start,
                t_end,
                table,
            } => {
                let dir = (t_end - t_start).signum();
                (conic.tangent(table.parameter_at(s)) * dir).normalized()
            }
            BoundaryCurve::Segment { from, to } => (*to - *from).normalized(),
        })
    }
}

/// Signed curvature of a boundary component at arc length `s`, for the
/// positive orientation (domain on the left).
pub fn boundary_curvature(component: &BoundaryComponent, s: f64) -> Result<f64, DomainError> {
    component.check_range(s)?;
    match &component.curve {
        BoundaryCurve::Segment { .. } => Err(DomainError::AxisCurvature),
        BoundaryCurve::ConicArc {
            conic,
            t_start,
            t_end,
            table,
        } => {
            let dir = (t_end - t_start).signum();
            Ok(dir * conic.curvature(table.parameter_at(s)))
        }
    }
}

const GAUSS8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

/// Arc-length table for a conic arc, with Newton inversion s -> t.
#[derive(Clone, Debug, PartialEq)]
pub struct ArcTable {
    conic: Conic,
    t_start: f64,
    dir: f64,
    step: f64,
    cumulative: Vec<f64>,
}

const ARC_TABLE_INTERVALS: usize = 512;

impl ArcTable {
    fn new(conic: Conic, t_start: f64, t_end: f64) -> Self {
        let span = (t_end - t_start).abs();
        let step = span / ARC_TABLE_INTERVALS as f64;
        let mut table = ArcTable {
            conic,
            t_start,
            dir: (t_end - t_start).signum(),
            step,
            cumulative: Vec::with_capacity(ARC_TABLE_INTERVALS + 1),
        };
        let mut acc = 0.0;
        table.cumulative.push(0.0);
        for k in 0..ARC_TABLE_INTERVALS {
            acc += table.integrate(k as f64 * step, (k + 1) as f64 * step);
            table.cumulative.push(acc);
        }
        table
    }

    fn param(&self, tau: f64) -> f64 {
        self.t_start + self.dir * tau
    }

    fn integrate(&self, tau0: f64, tau1: f64) -> f64 {
        let half = 0.5 * (tau1 - tau0);
        let mid = 0.5 * (tau1 + tau0);
        GAUSS8
            .iter()
            .map(|&(x, w)| w * self.conic.speed(self.param(mid + half * x)))
            .sum::<f64>()
            * half
    }

    fn total(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    fn arc_length_at(&self, tau: f64) -> f64 {
        let k = ((tau / self.step).floor() as usize).min(ARC_TABLE_INTERVALS - 1);
        self.cumulative[k] + self.integrate(k as f64 * self.step, tau)
    }

    /// Conic parameter at arc length `s`.
    fn parameter_at(&self, s: f64) -> f64 {
        if self.conic.is_circle() {
            return self.param(s / self.conic.ax);
        }
        let k = match self
            .cumulative
            .binary_search_by(|v| v.partial_cmp(&s).unwrap())
        {
            Ok(k) => return self.param(k as f64 * self.step),
            Err(k) => k.clamp(1, ARC_TABLE_INTERVALS) - 1,
        };
        let (s0, s1) = (self.cumulative[k], self.cumulative[k + 1]);
        let mut tau = self.step * (k as f64 + (s - s0) / (s1 - s0));
        for _ in 0..8 {
            let delta = (self.arc_length_at(tau) - s) / self.conic.speed(self.param(tau));
            tau -= delta;
            if delta.abs() < 1e-16 * (1.0 + tau.abs()) {
                break;
            }
        }
        self.param(tau)
    }
}
