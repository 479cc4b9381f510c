//! Verification suites. Each suite solves its scenario, writes the usual
//! artifacts and a `report.json`; tolerances are in units of h.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use mclab_core::critical::{radial_shortcut_agrees, Classification, TAU_DEG};
use mclab_core::domain::DomainSpec;
use mclab_core::geometry::{hausdorff, Vec2};
use mclab_core::nodal_flow::boundary_identity;
use mclab_core::pipeline::Solved;
use serde::Serialize;
use serde_json::{json, Value};

use crate::artifacts::{nodal_file_name, OutDir};
use crate::commands::{
    critical_step, det_ratio, flow_run, nodal_step, oracle_profile, solve_step, write_oracle, CriticalRun,
};
use crate::config::Scenario;
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SuiteId {
    T31,
    L33,
    R34,
    T42,
    T43,
    T44,
    C45,
}

impl SuiteId {
    pub const ALL: [SuiteId; 7] = [
        SuiteId::T31,
        SuiteId::L33,
        SuiteId::R34,
        SuiteId::T42,
        SuiteId::T43,
        SuiteId::T44,
        SuiteId::C45,
    ];

    pub fn parse(s: &str) -> Option<SuiteId> {
        SuiteId::ALL.into_iter().find(|id| id.as_str() == s)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SuiteId::T31 => "T3.1",
            SuiteId::L33 => "L3.3",
            SuiteId::R34 => "R3.4",
            SuiteId::T42 => "T4.2",
            SuiteId::T43 => "T4.3",
            SuiteId::T44 => "T4.4",
            SuiteId::C45 => "C4.5",
        }
    }

    fn accepts(self, d: &DomainSpec) -> Result<(), &'static str> {
        let ok = match (self, d) {
            (SuiteId::T31, d) => d.dim() == 2 && d.is_convex(),
            (SuiteId::T42, d) => d.dim() >= 3 && d.is_convex(),
            (SuiteId::L33, DomainSpec::ConcentricAnnulus { n, .. }) => *n == 2,
            (SuiteId::T43, DomainSpec::ConcentricAnnulus { n, .. }) => *n >= 3,
            (SuiteId::R34, DomainSpec::ConcentricAnnulus { .. }) => true,
            (SuiteId::C45, DomainSpec::EccentricAnnulus { n, .. }) => *n == 2,
            (SuiteId::T44, DomainSpec::EccentricAnnulus { n, .. }) => *n >= 3,
            _ => false,
        };
        if ok {
            return Ok(());
        }
        Err(match self {
            SuiteId::T31 => "a convex planar domain (ball with n = 2 or ellipse)",
            SuiteId::T42 => "a convex domain of revolution (n >= 3)",
            SuiteId::L33 => "a concentric annulus with n = 2",
            SuiteId::T43 => "a concentric annulus with n >= 3",
            SuiteId::R34 => "a concentric annulus",
            SuiteId::C45 => "an eccentric annulus with n = 2",
            SuiteId::T44 => "an eccentric annulus with n >= 3",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: Value,
    pub tolerance: Value,
    /// Artifact(s) holding the measured values.
    pub artifact: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub suite: String,
    pub h: f64,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn failed(&self) -> Vec<String> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect()
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Default)]
struct Checks(Vec<Check>);

impl Checks {
    fn add(&mut self, name: &str, passed: bool, measured: Value, tolerance: Value, artifact: &str) {
        self.0.push(Check {
            name: name.into(),
            passed,
            measured,
            tolerance,
            artifact: artifact.into(),
        });
    }
}

pub fn run_suite(id: SuiteId, scenario: &Scenario, out: &OutDir) -> Result<VerifyReport, CliError> {
    id.accepts(&scenario.domain).map_err(|need| CliError::Config {
        message: format!("suite {} needs {need}", id.as_str()),
        key: Some("domain".into()),
    })?;
    let s = solve_step(scenario, out)?;
    let c = critical_step(&s, out)?;
    let mut checks = Checks::default();
    match id {
        SuiteId::T31 | SuiteId::T42 => convex(id, scenario, &s, &c, out, &mut checks)?,
        SuiteId::L33 | SuiteId::T43 => annulus(id, scenario, &s, &c, out, &mut checks)?,
        SuiteId::R34 => structure(&s, &c, out, &mut checks)?,
        SuiteId::T44 | SuiteId::C45 => eccentric(id, scenario, &c, out, &mut checks)?,
    }
    let checks = checks.0;
    let report = VerifyReport {
        suite: id.as_str().into(),
        h: s.h(),
        passed: checks.iter().all(|c| c.passed),
        checks,
    };
    out.write_json("report.json", &report)?;
    Ok(report)
}

/// Same scenario at h/2, artifacts under `refined/`.
fn refined(scenario: &Scenario, out: &OutDir) -> Result<(Solved, CriticalRun, OutDir), CliError> {
    let mut sc = scenario.clone();
    sc.solver.h *= 0.5;
    let sub = out.sub("refined")?;
    sub.write_json("scenario.json", &sc)?;
    let s = solve_step(&sc, &sub)?;
    let c = critical_step(&s, &sub)?;
    Ok((s, c, sub))
}

fn class_counts(c: &CriticalRun) -> Value {
    let count = |k: Classification| c.detection.points.iter().filter(|p| p.classification == k).count();
    json!({
        "maximum": count(Classification::Maximum),
        "minimum": count(Classification::Minimum),
        "saddle": count(Classification::Saddle),
        "degenerate": count(Classification::Degenerate),
        "curves": c.detection.curves.len(),
    })
}

fn convex(
    id: SuiteId,
    scenario: &Scenario,
    s: &Solved,
    c: &CriticalRun,
    out: &OutDir,
    checks: &mut Checks,
) -> Result<(), CliError> {
    let h = s.h();
    let pts = &c.detection.points;
    checks.add(
        "critical.single_point",
        pts.len() == 1 && c.detection.curves.is_empty(),
        json!({"points": pts.len(), "curves": c.detection.curves.len()}),
        json!({"points": 1, "curves": 0}),
        "critical.json",
    );
    let p = pts.first();
    checks.add(
        "critical.maximum",
        p.is_some_and(|p| p.classification == Classification::Maximum && p.morse_index == Some(2)),
        json!({"type": p.map(|p| p.classification), "index": p.and_then(|p| p.morse_index)}),
        json!({"type": "Maximum", "index": 2}),
        "critical.json",
    );
    let ratio = p.map(|p| det_ratio(&p.hessian));
    checks.add(
        "critical.nondegenerate",
        ratio.is_some_and(|r| r > TAU_DEG),
        json!(ratio),
        json!({"det_ratio_above": TAU_DEG}),
        "critical.json",
    );

    let (rs, rc, rout) = refined(scenario, out)?;
    let shift = match (pts.as_slice(), rc.detection.points.as_slice()) {
        ([a], [b]) if a.classification == b.classification => Some(a.location.distance(b.location)),
        _ => None,
    };
    checks.add(
        "critical.refinement_shift",
        shift.is_some_and(|d| d <= 2.0 * h),
        json!({"shift": shift, "refined_points": rc.detection.points.len()}),
        json!({"max_shift": 2.0 * h}),
        "critical.json, refined/critical.json",
    );

    let n = nodal_step(s, c, &scenario.directions(), out)?;
    let branches: usize = n.sets.iter().map(|x| x.branch_points.len()).sum();
    checks.add(
        "nodal.no_branch_points",
        branches == 0,
        json!({"directions": n.sets.len(), "branch_points": branches}),
        json!(0),
        "branches.json",
    );
    let loops: usize = n.enclosure.iter().map(|e| e.loops_inside).sum();
    checks.add("nodal.no_enclosure", loops == 0, json!(loops), json!(0), "branches.json");
    let k_dist = n.k_distance.iter().flatten().copied().fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.max(d))));
    checks.add(
        "nodal.critical_point_on_nodal_sets",
        k_dist.is_some_and(|d| d <= 2.0 * h),
        json!(k_dist),
        json!(2.0 * h),
        "branches.json",
    );

    match id {
        SuiteId::T42 => {
            let sw = c.sweep.as_ref();
            let counts = sw.map(|w| (w.axis_points.len(), w.circles.len(), w.surfaces.len()));
            checks.add(
                "sweep.single_axis_point",
                counts == Some((1, 0, 0)),
                json!(counts.map(|(a, ci, su)| json!({"axis_points": a, "circles": ci, "surfaces": su}))),
                json!({"axis_points": 1, "circles": 0, "surfaces": 0}),
                "critical.json",
            );
        }
        _ => {
            let theta = scenario.directions()[0];
            let seeds = scenario
                .flow
                .as_ref()
                .and_then(|f| f.seeds.as_ref())
                .map(|v| v.iter().map(|p| Vec2::new(p[0], p[1])).collect::<Vec<_>>());
            let quarter = flow_run(s, c, theta, FRAC_PI_2, seeds.clone())?;
            out.write_json("flow.json", &quarter.to_json())?;
            let failed = quarter.hamiltonian.iter().filter(|r| r.is_err()).count();
            checks.add(
                "flow.hamiltonian_conservation",
                failed == 0 && quarter.max_hamiltonian <= 1e-8,
                json!({"max_abs_u_theta": quarter.max_hamiltonian, "failed_traces": failed}),
                json!(1e-8),
                "flow.json",
            );
            let v = &quarter.verdict;
            checks.add(
                "flow.quarter_turn_landing",
                v.landed && v.abandoned == 0,
                json!({"max_landing_distance": v.max_landing_distance, "abandoned": v.abandoned}),
                json!(4.0 * h),
                "flow.json",
            );
            let half = flow_run(s, c, theta, PI, seeds)?;
            out.write_json("flow_half.json", &half.to_json())?;
            checks.add(
                "flow.half_turn_exchanges_ends",
                half.exchanged == Some(true),
                json!(half.exchanged),
                json!(true),
                "flow_half.json",
            );
            let bi = boundary_identity(&rs.hessian);
            rout.write_json("boundary_identity.json", &json!({"h": rs.h(), "boundary_identity": bi}))?;
            checks.add(
                "flow.boundary_identity_refined",
                bi.samples > 0 && bi.max_relative_gap <= 0.1,
                json!({"h": rs.h(), "max_relative_gap": bi.max_relative_gap, "mean_relative_gap": bi.mean_relative_gap}),
                json!(0.1),
                "refined/boundary_identity.json",
            );
        }
    }
    Ok(())
}

fn annulus(
    id: SuiteId,
    scenario: &Scenario,
    s: &Solved,
    c: &CriticalRun,
    out: &OutDir,
    checks: &mut Checks,
) -> Result<(), CliError> {
    let h = s.h();
    let profile = oracle_profile(scenario)?;
    write_oracle(&profile, out)?;
    let curves = &c.detection.curves;
    checks.add(
        "critical.single_closed_curve",
        curves.len() == 1 && curves[0].closed && c.detection.points.is_empty(),
        json!({"curves": curves.len(), "closed": curves.first().map(|k| k.closed), "points": c.detection.points.len()}),
        json!({"curves": 1, "closed": true, "points": 0}),
        "critical.json",
    );
    let fit = curves.first().and_then(|k| k.fitted_circle);
    let gap = fit.zip(profile.r_star).map(|(f, r)| (f.radius - r).abs());
    checks.add(
        "curve.radius_matches_oracle",
        gap.is_some_and(|g| g <= 2.0 * h),
        json!({"radius": fit.map(|f| f.radius), "r_star": profile.r_star, "gap": gap}),
        json!(2.0 * h),
        "critical.json, oracle.json",
    );
    checks.add(
        "curve.radial_deviation",
        fit.is_some_and(|f| f.max_radial_deviation <= 2.0 * h),
        json!(fit.map(|f| f.max_radial_deviation)),
        json!(2.0 * h),
        "critical.json",
    );
    checks.add(
        "curve.radial_shortcut_agrees",
        radial_shortcut_agrees(curves, profile.r_star, h),
        json!({"center": fit.map(|f| f.center), "radius": fit.map(|f| f.radius), "r_star": profile.r_star}),
        json!({"center_and_radius_within": 2.0 * h}),
        "critical.json, oracle.json",
    );
    if id == SuiteId::T43 {
        let sw = c.sweep.as_ref();
        let spheres = sw.map_or(0, |w| w.surfaces.iter().filter(|f| f.sphere.is_some()).count());
        let counts = sw.map(|w| (w.axis_points.len(), w.circles.len(), w.surfaces.len()));
        checks.add(
            "sweep.one_sphere",
            counts == Some((0, 0, 1)) && spheres == 1,
            json!({"axis_points": counts.map(|c| c.0), "circles": counts.map(|c| c.1), "surfaces": counts.map(|c| c.2), "spheres": spheres}),
            json!({"axis_points": 0, "circles": 0, "surfaces": 1, "spheres": 1}),
            "critical.json",
        );
    }
    Ok(())
}

pub const STRUCTURE_ANGLES: [f64; 4] = [0.0, FRAC_PI_4, FRAC_PI_2, 3.0 * FRAC_PI_4];

fn structure(s: &Solved, c: &CriticalRun, out: &OutDir, checks: &mut Checks) -> Result<(), CliError> {
    let h = s.h();
    let n = nodal_step(s, c, &STRUCTURE_ANGLES, out)?;
    for (i, st) in n.structure.iter().enumerate() {
        let (passed, measured) = match st {
            Some(Ok(r)) => (true, json!(r)),
            Some(Err(e)) => (false, json!({"error": e.to_string()})),
            None => (false, Value::Null),
        };
        checks.add(
            &format!("structure.direction_{i}"),
            passed,
            measured,
            json!({"curve_distance": 2.0 * h, "branch_offset": 2.0 * h, "arm_radius": 4.0 * h}),
            "branches.json",
        );
    }
    let rays: Vec<Vec<usize>> = n
        .sets
        .iter()
        .map(|x| x.branch_points.iter().map(|b| b.ray_count).collect())
        .collect();
    checks.add(
        "branch_points.four_rays",
        rays.iter().all(|r| r.len() == 2 && r.iter().all(|&k| k == 4)),
        json!(rays),
        json!({"per_direction": 2, "ray_count": 4}),
        "branches.json",
    );
    let loops: usize = n.enclosure.iter().map(|e| e.loops_inside).sum();
    checks.add("nodal.no_enclosure", loops == 0, json!(loops), json!(0), "branches.json");
    let base = &n.sets[0];
    for i in 1..n.sets.len() {
        let rotated = base.rotated(STRUCTURE_ANGLES[i]);
        let hd = hausdorff(&n.sets[i].polylines(), &rotated.polylines());
        let bgap = rotated
            .branch_points
            .iter()
            .map(|b| {
                n.sets[i]
                    .branch_points
                    .iter()
                    .map(|q| q.location.distance(b.location))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max);
        let same_count = rotated.branch_points.len() == n.sets[i].branch_points.len();
        checks.add(
            &format!("equivariance.direction_{i}"),
            hd <= 2.0 * h && bgap <= 2.0 * h && same_count,
            json!({"hausdorff": hd, "branch_gap": bgap, "same_branch_count": same_count}),
            json!(2.0 * h),
            &format!("{}, {}, branches.json", nodal_file_name(0), nodal_file_name(i)),
        );
    }
    Ok(())
}

fn eccentric(id: SuiteId, scenario: &Scenario, c: &CriticalRun, out: &OutDir, checks: &mut Checks) -> Result<(), CliError> {
    let pts = &c.detection.points;
    checks.add(
        "critical.no_curve",
        c.detection.curves.is_empty(),
        json!(c.detection.curves.len()),
        json!(0),
        "critical.json",
    );
    let degenerate = pts.iter().filter(|p| p.classification == Classification::Degenerate).count();
    checks.add(
        "critical.isolated_nondegenerate",
        !pts.is_empty() && degenerate == 0,
        json!({"points": pts.len(), "degenerate": degenerate}),
        json!({"min_points": 1, "degenerate": 0}),
        "critical.json",
    );
    checks.add(
        "critical.index_sum",
        c.index_sum == Some(0),
        json!(c.index_sum),
        json!({"euler_characteristic": 0}),
        "critical.json",
    );
    let sweep_counts = |c: &CriticalRun| c.sweep.as_ref().map(|w| (w.axis_points.len(), w.circles.len(), w.surfaces.len()));
    if id == SuiteId::T44 {
        let counts = sweep_counts(c);
        checks.add(
            "sweep.no_surfaces",
            counts.is_some_and(|k| k.2 == 0),
            json!(counts.map(|k| k.2)),
            json!(0),
            "critical.json",
        );
        checks.add(
            "sweep.axis_points_and_circles_only",
            counts.is_some_and(|(a, ci, _)| a + 2 * ci == pts.len()),
            json!(counts.map(|(a, ci, _)| json!({"axis_points": a, "circles": ci, "meridian_points": pts.len()}))),
            json!("axis_points + 2 circles = meridian points"),
            "critical.json",
        );
    }
    let (_, rc, _) = refined(scenario, out)?;
    let (coarse, fine) = (class_counts(c), class_counts(&rc));
    let (sc, sf) = (sweep_counts(c), sweep_counts(&rc));
    checks.add(
        "refinement.counts_stable",
        coarse == fine && sc.map(|k| (k.0, k.1)) == sf.map(|k| (k.0, k.1)),
        json!({
            "h": coarse,
            "h_half": fine,
            "sweep_h": sc.map(|k| json!({"axis_points": k.0, "circles": k.1})),
            "sweep_h_half": sf.map(|k| json!({"axis_points": k.0, "circles": k.1})),
        }),
        json!("equal"),
        "critical.json, refined/critical.json",
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        for id in SuiteId::ALL {
            assert_eq!(SuiteId::parse(id.as_str()), Some(id));
        }
        assert_eq!(SuiteId::parse("T9.9"), None);
    }

    #[test]
    fn suites_check_their_domain() {
        let ball = DomainSpec::Ball { radius: 1.0, n: 2 };
        assert!(SuiteId::T31.accepts(&ball).is_ok());
        assert!(SuiteId::T42.accepts(&ball).is_err());
        assert!(SuiteId::L33.accepts(&ball).is_err());
        let ecc = DomainSpec::EccentricAnnulus { inner: 0.5, offset: 0.3, outer: 2.0, n: 3 };
        assert!(SuiteId::T44.accepts(&ecc).is_ok());
        assert!(SuiteId::C45.accepts(&ecc).is_err());
    }
}
