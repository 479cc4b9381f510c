//! Small planar vector and symmetric-matrix types shared by every module.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector at angle `angle` (radians) from the x-axis.
    pub fn from_angle(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self { x: c, y: s }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3-D cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    /// Counterclockwise rotation by a quarter turn: (x, y) -> (-y, x).
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn normalized(self) -> Vec2 {
        self / self.norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, s: f64) -> Vec2 {
        Vec2::new(self.x / s, self.y / s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Symmetric 2x2 matrix stored as its three independent entries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym2 {
    pub const fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Self { xx, xy, yy }
    }

    pub fn diag(a: f64, b: f64) -> Self {
        Self::new(a, 0.0, b)
    }

    pub fn identity() -> Self {
        Self::diag(1.0, 1.0)
    }

    pub fn mul_vec(&self, v: Vec2) -> Vec2 {
        Vec2::new(self.xx * v.x + self.xy * v.y, self.xy * v.x + self.yy * v.y)
    }

    pub fn quadratic_form(&self, v: Vec2) -> f64 {
        v.dot(self.mul_vec(v))
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        (self.xx * self.xx + 2.0 * self.xy * self.xy + self.yy * self.yy).sqrt()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * self.trace();
        let half_diff = 0.5 * (self.xx - self.yy);
        let rad = half_diff.hypot(self.xy);
        (mean - rad, mean + rad)
    }

    /// Eigenpairs in ascending eigenvalue order; eigenvectors are unit length.
    pub fn eigen(&self) -> [(f64, Vec2); 2] {
        let (lo, hi) = self.eigenvalues();
        let vec_for = |lambda: f64| -> Vec2 {
            // Pick the better conditioned of the two null-space candidates of (A - lambda I).
            let a = Vec2::new(self.xy, lambda - self.xx);
            let b = Vec2::new(lambda - self.yy, self.xy);
            let v = if a.norm_squared() >= b.norm_squared() { a } else { b };
            if v.norm_squared() == 0.0 {
                Vec2::new(1.0, 0.0)
            } else {
                v.normalized()
            }
        };
        let v_hi = vec_for(hi);
        [(lo, v_hi.perp()), (hi, v_hi)]
    }

    /// Solves `self * x = b`; `None` when the matrix is singular.
    pub fn solve(&self, b: Vec2) -> Option<Vec2> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        Some(Vec2::new(
            (self.yy * b.x - self.xy * b.y) / det,
            (self.xx * b.y - self.xy * b.x) / det,
        ))
    }

    pub fn scale(&self, s: f64) -> Sym2 {
        Sym2::new(self.xx * s, self.xy * s, self.yy * s)
    }

    pub fn add(&self, o: &Sym2) -> Sym2 {
        Sym2::new(self.xx + o.xx, self.xy + o.xy, self.yy + o.yy)
    }

    /// Congruence by a rotation: R * self * R^T.
    pub fn rotate(&self, angle: f64) -> Sym2 {
        let (s, c) = angle.sin_cos();
        let xx = c * c * self.xx - 2.0 * c * s * self.xy + s * s * self.yy;
        let yy = s * s * self.xx + 2.0 * c * s * self.xy + c * c * self.yy;
        let xy = c * s * (self.xx - self.yy) + (c * c - s * s) * self.xy;
        Sym2::new(xx, xy, yy)
    }
}

/// Twice the signed area of triangle (a, b, c); positive for counterclockwise order.
pub fn orient2d(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b - a).cross(c - a)
}

/// Distance from `p` to the segment [a, b] and the clamped segment parameter.
pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> (f64, f64) {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((p - a).dot(ab) / len2).clamp(0.0, 1.0)
    };
    ((a + ab * t).distance(p), t)
}

/// Distance from `p` to an open or closed polyline.
pub fn point_polyline_distance(p: Vec2, line: &[Vec2]) -> f64 {
    match line.len() {
        0 => f64::INFINITY,
        1 => p.distance(line[0]),
        _ => line
            .windows(2)
            .map(|w| point_segment_distance(p, w[0], w[1]).0)
            .fold(f64::INFINITY, f64::min),
    }
}

/// Winding number of a closed polyline (first point need not be repeated) about `p`.
pub fn winding_number(polygon: &[Vec2], p: Vec2) -> i32 {
    let n = polygon.len();
    let mut wn = 0;
    for i in 0..n {
        let a = polygon[i];
        let b = polygon[(i + 1) % n];
        if a.y <= p.y {
            if b.y > p.y && orient2d(a, b, p) > 0.0 {
                wn += 1;
            }
        } else if b.y <= p.y && orient2d(a, b, p) < 0.0 {
            wn -= 1;
        }
    }
    wn
}

/// Signed area of a closed polyline (shoelace); positive for counterclockwise traversal.
pub fn signed_area(polygon: &[Vec2]) -> f64 {
    let n = polygon.len();
    let mut acc = 0.0;
    for i in 0..n {
        acc += polygon[i].cross(polygon[(i + 1) % n]);
    }
    0.5 * acc
}

/// Algebraic least-squares circle fit; returns (center, radius).
pub fn fit_circle(points: &[Vec2]) -> Option<(Vec2, f64)> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let mean = points.iter().fold(Vec2::ZERO, |acc, &p| acc + p) / n;
    let (mut suu, mut suv, mut svv, mut suuu, mut svvv, mut suvv, mut svuu) =
        (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for &p in points {
        let u = p.x - mean.x;
        let v = p.y - mean.y;
        suu += u * u;
        suv += u * v;
        svv += v * v;
        suuu += u * u * u;
        svvv += v * v * v;
        suvv += u * v * v;
        svuu += v * u * u;
    }
    let m = Sym2::new(suu, suv, svv);
    let rhs = Vec2::new(0.5 * (suuu + suvv), 0.5 * (svvv + svuu));
    let c = m.solve(rhs)?;
    let radius = (c.norm_squared() + (suu + svv) / n).sqrt();
    Some((mean + c, radius))
}

/// Symmetric Hausdorff distance between two polyline sets.
pub fn hausdorff(a: &[Vec<Vec2>], b: &[Vec<Vec2>]) -> f64 {
    let one_sided = |from: &[Vec<Vec2>], to: &[Vec<Vec2>]| -> f64 {
        from.iter()
            .flat_map(|line| line.iter())
            .map(|&p| {
                to.iter()
                    .map(|l| point_polyline_distance(p, l))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    one_sided(a, b).max(one_sided(b, a))
}
