//! Exact radial solutions through the first integral
//! `r^{n-1} u'/√(1+u'²) = H rⁿ/n + c`.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("graph condition violated: |H| R / n = {0} >= 1")]
    GraphConditionViolated(f64),
    #[error("no bracket for the flux constant c (graph solution does not exist for these data)")]
    OracleBracketFailure,
    #[error("invalid oracle input: {0}")]
    InvalidInput(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RadialSample {
    pub r: f64,
    pub u: f64,
    pub du: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RadialProfile {
    pub n: usize,
    pub r_inner: f64,
    pub r_outer: f64,
    #[serde(rename = "H")]
    pub h_source: f64,
    pub c: f64,
    pub samples: Vec<RadialSample>,
    pub r_star: Option<f64>,
}

/// Fixed RK4 step count over [R_I, R_E].
pub const RK4_STEPS: usize = 4096;
const SCAN_CANDIDATES: usize = 1024;
const BALL_SAMPLES: usize = 4096;

impl RadialProfile {
    pub fn is_ball(&self) -> bool {
        self.r_inner == 0.0
    }

    /// Flux term `H rⁿ/n + c`.
    pub fn flux(&self, r: f64) -> f64 {
        self.h_source * r.powi(self.n as i32) / self.n as f64 + self.c
    }

    /// Residual of the first integral at one sample.
    pub fn first_integral_residual(&self, s: &RadialSample) -> f64 {
        let lhs = s.r.powi(self.n as i32 - 1) * s.du / (1.0 + s.du * s.du).sqrt();
        (lhs - self.flux(s.r)).abs()
    }

    /// Slope u'(r) from the first integral.
    pub fn slope(&self, r: f64) -> f64 {
        if r == 0.0 {
            return 0.0;
        }
        slope(self.n, self.h_source, self.c, r)
    }

    /// u(r) and u'(r) for r in [R_I, R_E]: closed form for balls, cubic
    /// Hermite interpolation of the samples for annuli.
    pub fn eval(&self, r: f64) -> (f64, f64) {
        if self.is_ball() {
            return ball_value(self.n, self.h_source, self.r_outer, r);
        }
        let r = r.clamp(self.r_inner, self.r_outer);
        let m = self.samples.len() - 1;
        let step = (self.r_outer - self.r_inner) / m as f64;
        let k = (((r - self.r_inner) / step).floor() as usize).min(m - 1);
        let (a, b) = (&self.samples[k], &self.samples[k + 1]);
        let t = (r - a.r) / step;
        let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
        let h10 = t * (1.0 - t) * (1.0 - t);
        let h01 = t * t * (3.0 - 2.0 * t);
        let h11 = t * t * (t - 1.0);
        let u = h00 * a.u + h10 * step * a.du + h01 * b.u + h11 * step * b.du;
        (u, self.slope(r))
    }
}

fn slope(n: usize, h: f64, c: f64, r: f64) -> f64 {
    let q = (h * r.powi(n as i32) / n as f64 + c) / r.powi(n as i32 - 1);
    q / (1.0 - q * q).sqrt()
}

fn ball_value(n: usize, h: f64, radius: f64, r: f64) -> (f64, f64) {
    if h == 0.0 {
        return (0.0, 0.0);
    }
    let nf = n as f64;
    let q = h * r / nf;
    let u = -(nf / h) * ((1.0 - q * q).sqrt() - (1.0 - (h * radius / nf).powi(2)).sqrt());
    (u, q / (1.0 - q * q).sqrt())
}

pub fn radial_ball(radius: f64, n: usize, h: f64) -> Result<RadialProfile, OracleError> {
    if !(radius.is_finite() && radius > 0.0) || n < 2 || !h.is_finite() {
        return Err(OracleError::InvalidInput("need R > 0, n >= 2, finite H".into()));
    }
    let graph = h.abs() * radius / n as f64;
    if graph >= 1.0 {
        return Err(OracleError::GraphConditionViolated(graph));
    }
    let samples = (0..=BALL_SAMPLES)
        .map(|k| {
            let r = radius * k as f64 / BALL_SAMPLES as f64;
            let (u, du) = ball_value(n, h, radius, r);
            RadialSample { r, u, du }
        })
        .collect();
    Ok(RadialProfile {
        n,
        r_inner: 0.0,
        r_outer: radius,
        h_source: h,
        c: 0.0,
        samples,
        r_star: Some(0.0),
    })
}

struct Shooting {
    n: usize,
    r_inner: f64,
    r_outer: f64,
    h: f64,
    g_inner: f64,
}

impl Shooting {
    fn q(&self, c: f64, r: f64) -> f64 {
        (self.h * r.powi(self.n as i32) / self.n as f64 + c) / r.powi(self.n as i32 - 1)
    }

    /// Whether |q| < 1 on the integration grid (u' finite everywhere).
    fn admissible(&self, c: f64, steps: usize) -> bool {
        let dr = (self.r_outer - self.r_inner) / steps as f64;
        (0..=2 * steps).all(|k| self.q(c, self.r_inner + 0.5 * dr * k as f64).abs() < 1.0)
    }

    /// Classical RK4 for u' = g(r). Returns the samples on the step grid.
    fn integrate(&self, c: f64, steps: usize) -> Vec<RadialSample> {
        let dr = (self.r_outer - self.r_inner) / steps as f64;
        let g = |r: f64| slope(self.n, self.h, c, r);
        let mut u = self.g_inner;
        let mut out = Vec::with_capacity(steps + 1);
        out.push(RadialSample {
            r: self.r_inner,
            u,
            du: g(self.r_inner),
        });
        for k in 0..steps {
            let r = self.r_inner + dr * k as f64;
            let k1 = g(r);
            let k2 = g(r + 0.5 * dr);
            let k3 = k2;
            let k4 = g(r + dr);
            u += dr / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            let r_next = if k + 1 == steps { self.r_outer } else { r + dr };
            out.push(RadialSample {
                r: r_next,
                u,
                du: k4,
            });
        }
        out
    }

    fn end_value(&self, c: f64, steps: usize) -> f64 {
        self.integrate(c, steps).last().unwrap().u
    }
}

pub fn radial_annulus(
    r_inner: f64,
    r_outer: f64,
    n: usize,
    h: f64,
    g_inner: f64,
    g_outer: f64,
) -> Result<RadialProfile, OracleError> {
    if !(r_inner > 0.0 && r_inner < r_outer && r_outer.is_finite()) || n < 2 {
        return Err(OracleError::InvalidInput("need 0 < R_I < R_E and n >= 2".into()));
    }
    if !(h.is_finite() && g_inner.is_finite() && g_outer.is_finite()) {
        return Err(OracleError::InvalidInput("H and boundary data must be finite".into()));
    }
    let shoot = Shooting {
        n,
        r_inner,
        r_outer,
        h,
        g_inner,
    };
    let c = if h == 0.0 && g_inner == g_outer {
        0.0
    } else {
        find_flux_constant(&shoot, g_outer)?
    };
    let samples = shoot.integrate(c, RK4_STEPS);
    let mut profile = RadialProfile {
        n,
        r_inner,
        r_outer,
        h_source: h,
        c,
        samples,
        r_star: None,
    };
    let (f0, f1) = (profile.flux(r_inner), profile.flux(r_outer));
    if h != 0.0 && f0 * f1 < 0.0 {
        profile.r_star = Some((-(n as f64) * c / h).powf(1.0 / n as f64));
    }
    Ok(profile)
}

fn find_flux_constant(shoot: &Shooting, g_outer: f64) -> Result<f64, OracleError> {
    let n = shoot.n as f64;
    // Nonzero boundary data can push c past the source flux; |q(R_I)| < 1 bounds it too.
    let bound = (shoot.h.abs() * shoot.r_outer.powf(n) / n)
        .max(shoot.r_inner.powf(n - 1.0) + shoot.h.abs() * shoot.r_inner.powf(n) / n);
    let mismatch = |c: f64| shoot.end_value(c, RK4_STEPS) - g_outer;
    let mut previous: Option<(f64, f64)> = None;
    let mut bracket = None;
    for k in 0..=SCAN_CANDIDATES {
        let c = -bound + 2.0 * bound * k as f64 / SCAN_CANDIDATES as f64;
        if !shoot.admissible(c, RK4_STEPS) {
            previous = None;
            continue;
        }
        let m = mismatch(c);
        if m == 0.0 {
            return Ok(c);
        }
        if let Some((c0, m0)) = previous {
            if m0 * m < 0.0 {
                bracket = Some((c0, m0, c));
                break;
            }
        }
        previous = Some((c, m));
    }
    let (mut lo, mut m_lo, mut hi) = bracket.ok_or(OracleError::OracleBracketFailure)?;
    loop {
        let mid = 0.5 * (lo + hi);
        let m = mismatch(mid);
        if m.abs() <= 1e-12 || mid == lo || mid == hi {
            return Ok(mid);
        }
        if (m < 0.0) == (m_lo < 0.0) {
            lo = mid;
            m_lo = m;
        } else {
            hi = mid;
        }
    }
}

/// Radius where u' vanishes: 0 for balls, r* for annuli whose flux term
/// changes sign, none otherwise.
pub fn critical_radius(profile: &RadialProfile) -> Option<f64> {
    if profile.is_ball() {
        return Some(0.0);
    }
    profile.r_star
}

/// RK4 end value for a given flux constant and step count (refinement studies).
pub fn shoot_end_value(profile: &RadialProfile, c: f64, steps: usize) -> f64 {
    let shoot = Shooting {
        n: profile.n,
        r_inner: profile.r_inner,
        r_outer: profile.r_outer,
        h: profile.h_source,
        g_inner: profile.samples[0].u,
    };
    shoot.end_value(c, steps)
}

#[cfg(test)]
mod tests {
    use super::*;

    const R_STAR_2: f64 = 1.4702652755740548;
    const R_STAR_3: f64 = 1.440597184353336;
    const C_2: f64 = 0.5404199951397128;
    const C_3: f64 = 0.49828341754602384;
    const BALL_CENTER: f64 = 0.26794919243112275;

    #[test]
    fn flat_ball() {
        let p = radial_ball(1.0, 2, 0.0).unwrap();
        assert!(p.samples.iter().all(|s| s.u == 0.0 && s.du == 0.0));
    }

    #[test]
    fn ball_center_value_matches_quadrature() {
        let p = radial_ball(1.0, 2, -1.0).unwrap();
        assert!((p.samples[0].u - BALL_CENTER).abs() < 1e-15);
        assert!((p.samples[0].u - 2.0 * (1.0 - 3f64.sqrt() / 2.0)).abs() < 1e-15);
        // Independent composite Gauss-Legendre quadrature of -u' over [0, 1].
        let nodes = [(-0.5773502691896257, 1.0), (0.5773502691896257, 1.0)];
        let m = 2000;
        let mut integral = 0.0;
        for k in 0..m {
            let (a, b) = (k as f64 / m as f64, (k + 1) as f64 / m as f64);
            for (x, w) in nodes {
                let r = 0.5 * (a + b) + 0.5 * (b - a) * x;
                let q: f64 = -r / 2.0;
                integral -= w * 0.5 * (b - a) * q / (1.0 - q * q).sqrt();
            }
        }
        assert!((integral - BALL_CENTER).abs() < 1e-12);
    }

    #[test]
    fn ball_slope_vanishes_at_center() {
        for (n, h) in [(2, -1.0), (3, -2.5), (5, 0.7)] {
            let p = radial_ball(1.0, n, h).unwrap();
            assert_eq!(p.samples[0].du, 0.0);
            assert_eq!(critical_radius(&p), Some(0.0));
            assert_eq!(p.samples.last().unwrap().u, 0.0);
        }
    }

    #[test]
    fn ball_graph_condition() {
        assert!(matches!(radial_ball(2.0, 2, -1.0), Err(OracleError::GraphConditionViolated(_))));
    }

    #[test]
    fn flat_annulus() {
        let p = radial_annulus(1.0, 2.0, 2, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(p.c, 0.0);
        assert!(p.samples.iter().all(|s| s.u == 0.0));
        assert_eq!(p.r_star, None);
    }

    #[test]
    fn annulus_golden_values() {
        let p2 = radial_annulus(1.0, 2.0, 2, -0.5, 0.0, 0.0).unwrap();
        assert!((p2.c - C_2).abs() < 1e-10);
        assert!((p2.r_star.unwrap() - R_STAR_2).abs() < 1e-10);
        assert!(p2.samples.last().unwrap().u.abs() <= 1e-12);
        let p3 = radial_annulus(1.0, 2.0, 3, -0.5, 0.0, 0.0).unwrap();
        assert!((p3.c - C_3).abs() < 1e-10);
        assert!((p3.r_star.unwrap() - R_STAR_3).abs() < 1e-10);
    }

    #[test]
    fn critical_radius_formulas_agree() {
        let p = radial_annulus(1.0, 2.0, 2, -0.5, 0.0, 0.0).unwrap();
        let r = critical_radius(&p).unwrap();
        assert!((r - (-2.0 * p.c / -0.5f64).sqrt()).abs() < 1e-10);
        assert!(p.flux(r).abs() < 1e-12);
        // The sampled slope changes sign exactly once, next to r*.
        let changes: Vec<_> = p.samples.windows(2).filter(|w| w[0].du * w[1].du < 0.0).collect();
        assert_eq!(changes.len(), 1);
        assert!(changes[0][0].r <= r && r <= changes[0][1].r);
    }

    #[test]
    fn monotone_annulus_has_no_critical_radius() {
        // Boundary data with a large jump forces a monotone profile.
        let p = radial_annulus(1.0, 2.0, 2, -0.1, 0.0, 0.5).unwrap();
        assert!(p.flux(1.0) * p.flux(2.0) > 0.0);
        assert_eq!(critical_radius(&p), None);
        assert!((p.samples.last().unwrap().u - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn bracket_failure_for_steep_data() {
        assert_eq!(
            radial_annulus(1.0, 2.0, 2, -0.5, 0.0, 50.0),
            Err(OracleError::OracleBracketFailure)
        );
    }

    #[test]
    fn first_integral_holds_at_samples() {
        for p in [
            radial_ball(1.0, 3, -1.0).unwrap(),
            radial_annulus(1.0, 2.0, 3, -0.5, 0.0, 0.0).unwrap(),
            radial_annulus(0.5, 1.5, 4, 0.4, 0.1, -0.1).unwrap(),
        ] {
            for s in &p.samples {
                assert!(p.first_integral_residual(s) <= 1e-12, "{s:?}");
            }
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        let p = radial_annulus(1.0, 2.0, 2, -0.5, 0.0, 0.0).unwrap();
        let exact = shoot_end_value(&p, p.c, 16 * RK4_STEPS);
        let e1 = (shoot_end_value(&p, p.c, 32) - exact).abs();
        let e2 = (shoot_end_value(&p, p.c, 64) - exact).abs();
        assert!(e1 / e2 >= 8.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn hermite_eval_matches_samples() {
        let p = radial_annulus(1.0, 2.0, 3, -0.5, 0.0, 0.0).unwrap();
        for s in p.samples.iter().step_by(97) {
            let (u, du) = p.eval(s.r);
            assert!((u - s.u).abs() < 1e-13 && (du - s.du).abs() < 1e-13);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]
            #[test]
            fn sign_flip_symmetry(h in 0.05f64..0.6, n in 2usize..4) {
                let a = radial_annulus(1.0, 2.0, n, -h, 0.0, 0.0).unwrap();
                let b = radial_annulus(1.0, 2.0, n, h, 0.0, 0.0).unwrap();
                prop_assert!((a.c + b.c).abs() < 1e-10);
                prop_assert!((a.r_star.unwrap() - b.r_star.unwrap()).abs() < 1e-10);
                for (sa, sb) in a.samples.iter().zip(&b.samples).step_by(64) {
                    prop_assert!((sa.u + sb.u).abs() < 1e-10);
                }
            }

            #[test]
            fn ball_first_integral(h in -1.9f64..1.9, n in 2usize..6) {
                let p = radial_ball(1.0, n, h).unwrap();
                for s in p.samples.iter().step_by(37) {
                    prop_assert!(p.first_integral_residual(s) <= 1e-12);
                }
            }
        }
    }
}
