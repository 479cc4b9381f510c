//! The `mclab` commands and the analysis steps they share with the suites.

use std::f64::consts::PI;
use std::path::PathBuf;

use clap::ValueEnum;
use mclab_core::critical::{
    detect_critical_set, index_sum, sweep_to_3d, CriticalError, CriticalSet3D, Detection, TAU_DEG,
};
use mclab_core::domain::DomainSpec;
use mclab_core::fields::{directional_derivative, BlendedModel};
use mclab_core::geometry::Vec2;
use mclab_core::nodal_flow::{
    annulus_branch_structure, boundary_identity, check_no_enclosure, ends_exchanged, field_x, flow_rotate,
    flow_verdict, gradient_angle, nodal_set, polyline_parameter, trace_hamiltonian, BoundaryIdentity,
    EnclosureReport, FlowTrace, FlowVerdict, NodalError, NodalSet, StructureReport,
};
use mclab_core::pipeline::{solve_domain, Solved};
use mclab_core::radial_oracle::{radial_annulus, radial_ball, RadialProfile};
use mclab_core::solver::SourceSpec;
use serde_json::{json, Value};

use crate::artifacts::{nodal_csv, nodal_file_name, profile_csv, solution_csv, OutDir};
use crate::config::Scenario;
use crate::suites::{run_suite, SuiteId};
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Solve,
    Critical,
    Nodal,
    Flow,
    Oracle,
    Verify,
    Figure,
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub command: Command,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub suite: Option<String>,
    pub h: Option<f64>,
    pub fig: Option<String>,
}

/// Runs one command; returns a one-line summary for stdout.
pub fn run(opts: &RunOptions) -> Result<String, CliError> {
    let out = OutDir::create(&opts.out)?;
    if opts.command == Command::Figure {
        let fig = opts.fig.as_deref().ok_or_else(|| CliError::Usage {
            message: "figure needs --fig <fig1..fig5>".into(),
            key: Some("fig".into()),
        })?;
        let file = crate::svg::export_figure(out.root(), fig)?;
        return Ok(format!("wrote {}", file.display()));
    }
    let path = opts.config.as_ref().ok_or_else(|| CliError::Usage {
        message: "--config is required".into(),
        key: Some("config".into()),
    })?;
    let mut scenario = Scenario::load(path)?;
    if let Some(h) = opts.h {
        if !(h.is_finite() && h > 0.0) {
            return Err(CliError::Usage {
                message: format!("--h must be positive, got {h}"),
                key: Some("h".into()),
            });
        }
        scenario.solver.h = h;
    }
    if let Some(s) = &opts.suite {
        scenario.suite = Some(s.clone());
    }
    scenario.validate()?;
    out.write_json("scenario.json", &scenario)?;

    match opts.command {
        Command::Solve => {
            let s = solve_step(&scenario, &out)?;
            Ok(format!(
                "solve: {} vertices, {} Newton steps, residual {:.3e}, degenerate {}",
                s.solution.mesh.n_vertices(),
                s.report.iterations,
                s.report.residual_norm,
                s.report.degenerate
            ))
        }
        Command::Critical => {
            let s = solve_step(&scenario, &out)?;
            let c = critical_step(&s, &out)?;
            Ok(format!(
                "critical: {} points, {} curves",
                c.detection.points.len(),
                c.detection.curves.len()
            ))
        }
        Command::Nodal => {
            let s = solve_step(&scenario, &out)?;
            if s.report.degenerate {
                return Err(NodalError::DegenerateField.into());
            }
            let c = critical_step(&s, &out)?;
            let n = nodal_step(&s, &c, &scenario.directions(), &out)?;
            let branches: usize = n.sets.iter().map(|x| x.branch_points.len()).sum();
            Ok(format!("nodal: {} directions, {branches} branch points", n.sets.len()))
        }
        Command::Flow => {
            let s = solve_step(&scenario, &out)?;
            let c = critical_step(&s, &out)?;
            let cfg = scenario.flow.clone().unwrap_or_default();
            let theta = scenario.directions()[0];
            let seeds = cfg.seeds.map(|v| v.iter().map(|p| Vec2::new(p[0], p[1])).collect());
            let f = flow_run(&s, &c, theta, cfg.t, seeds)?;
            out.write_json("flow.json", &f.to_json())?;
            Ok(format!(
                "flow: {} seeds, max |u_θ| on traces {:.3e}, landing {:.3e}",
                f.seeds.len(),
                f.max_hamiltonian,
                f.verdict.max_landing_distance
            ))
        }
        Command::Oracle => {
            let p = oracle_profile(&scenario)?;
            write_oracle(&p, &out)?;
            Ok(format!("oracle: c = {}, r_star = {:?}", p.c, p.r_star))
        }
        Command::Verify => {
            let id = scenario.suite.as_deref().ok_or_else(|| CliError::Usage {
                message: "verify needs --suite or a suite key in the config".into(),
                key: Some("suite".into()),
            })?;
            let id = SuiteId::parse(id).ok_or_else(|| CliError::Usage {
                message: format!("unknown suite {id:?}"),
                key: Some("suite".into()),
            })?;
            let started = std::time::Instant::now();
            let report = run_suite(id, &scenario, &out)?;
            out.write_json("runtime.json", &json!({ "seconds": started.elapsed().as_secs_f64() }))?;
            let failed = report.failed();
            if failed.is_empty() {
                Ok(format!("verify {}: PASS ({} checks)", id.as_str(), report.checks.len()))
            } else {
                Err(CliError::CheckFailed {
                    suite: id.as_str().into(),
                    failed,
                })
            }
        }
        Command::Figure => unreachable!(),
    }
}

pub fn solve_scenario(s: &Scenario) -> Result<Solved, CliError> {
    Ok(solve_domain(&s.domain, s.source, s.solver.h, s.solver.tol, s.solver.max_iter)?)
}

/// Closed-form or shooting profile for balls and concentric annuli with constant source.
pub fn oracle_profile(s: &Scenario) -> Result<RadialProfile, CliError> {
    let SourceSpec::Constant { h } = s.source else {
        return Err(CliError::Config {
            message: "the radial oracle needs a constant source".into(),
            key: Some("source".into()),
        });
    };
    match s.domain {
        DomainSpec::Ball { radius, n } => Ok(radial_ball(radius, n, h)?),
        DomainSpec::ConcentricAnnulus { inner, outer, n } => Ok(radial_annulus(inner, outer, n, h, 0.0, 0.0)?),
        _ => Err(CliError::Config {
            message: "the radial oracle needs a ball or a concentric annulus".into(),
            key: Some("domain".into()),
        }),
    }
}

pub fn write_oracle(p: &RadialProfile, out: &OutDir) -> Result<(), CliError> {
    out.write_text("profile.csv", &profile_csv(p))?;
    out.write_json(
        "oracle.json",
        &json!({
            "n": p.n,
            "R_I": p.r_inner,
            "R_E": p.r_outer,
            "H": p.h_source,
            "c": p.c,
            "r_star": p.r_star,
            "samples": p.samples.len(),
        }),
    )
}

/// Max nodal error of the computational solution against the radial profile.
pub fn oracle_error(s: &Solved, p: &RadialProfile) -> f64 {
    let mesh = &s.solution.mesh;
    mesh.vertices
        .iter()
        .zip(&s.solution.values)
        .map(|(v, u)| (u - p.eval(v.norm()).0).abs())
        .fold(0.0, f64::max)
}

pub fn solve_step(scenario: &Scenario, out: &OutDir) -> Result<Solved, CliError> {
    let s = solve_scenario(scenario)?;
    write_solve(scenario, &s, out)?;
    Ok(s)
}

pub fn write_solve(scenario: &Scenario, s: &Solved, out: &OutDir) -> Result<(), CliError> {
    out.write_text("solution.csv", &solution_csv(&s.solution))?;
    let mut dump = Vec::new();
    s.solution.mesh.write_dump(&mut dump)?;
    out.write_text("mesh.txt", &String::from_utf8_lossy(&dump))?;
    let oracle = oracle_profile(scenario).ok().map(|p| {
        json!({
            "max_error": oracle_error(s, &p),
            "c": p.c,
            "r_star": p.r_star,
        })
    });
    out.write_json(
        "solve.json",
        &json!({
            "domain": s.domain,
            "source": s.source,
            "h": s.h(),
            "weight_exponent": s.weight_exponent,
            "meridian": s.is_meridian(),
            "mesh_quality": s.solution.mesh.quality(),
            "report": s.report,
            "max_u": s.solution.values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            "min_u": s.solution.values.iter().copied().fold(f64::INFINITY, f64::min),
            "oracle": oracle,
        }),
    )
}

pub struct CriticalRun {
    pub detection: Detection,
    pub index_sum: Option<i32>,
    pub sweep: Option<CriticalSet3D>,
}

impl CriticalRun {
    pub fn locations(&self) -> Vec<Vec2> {
        self.detection.points.iter().map(|p| p.location).collect()
    }
}

pub fn critical_run(s: &Solved) -> Result<CriticalRun, CliError> {
    if s.report.degenerate {
        return Err(CriticalError::DegenerateField.into());
    }
    let detection = detect_critical_set(&s.planar, &s.gradient, &s.hessian)?;
    let index_sum = index_sum(&detection.points).ok();
    let sweep = s
        .is_meridian()
        .then(|| sweep_to_3d(&detection.points, &detection.curves, s.h()));
    Ok(CriticalRun {
        detection,
        index_sum,
        sweep,
    })
}

pub fn critical_json(s: &Solved, c: &CriticalRun) -> Value {
    let points: Vec<Value> = c
        .detection
        .points
        .iter()
        .map(|p| {
            let scale = p.hessian.norm();
            json!({
                "x": p.location.x,
                "y": p.location.y,
                "grad_residual": p.gradient_residual,
                "hessian": p.hessian,
                "det_ratio": p.hessian.det() / (scale * scale),
                "type": p.classification,
                "index": p.morse_index,
            })
        })
        .collect();
    let curves: Vec<Value> = c
        .detection
        .curves
        .iter()
        .map(|k| {
            json!({
                "closed": k.closed,
                "circle_fit": k.fitted_circle,
                "points": k.points.iter().map(|p| [p.x, p.y]).collect::<Vec<_>>(),
            })
        })
        .collect();
    let sweep = c.sweep.as_ref().map(|w| {
        json!({
            "axis_points": w.axis_points,
            "circles": w.circles,
            "surfaces": w.surfaces.iter().map(|f| json!({
                "closed": f.closed,
                "sphere": f.sphere.map(|(c, r)| json!({"center": c, "radius": r})),
                "meridian_points": f.meridian.len(),
            })).collect::<Vec<_>>(),
        })
    });
    let region = &s.planar.mesh.region;
    json!({
        "h": s.h(),
        "tau_deg": TAU_DEG,
        "candidates": c.detection.candidates,
        "points": points,
        "curves": curves,
        "index_sum": c.index_sum,
        "euler_characteristic": if region.is_simply_connected() { 1 } else { 0 },
        "sweep": sweep,
    })
}

pub fn critical_step(s: &Solved, out: &OutDir) -> Result<CriticalRun, CliError> {
    let c = critical_run(s)?;
    out.write_json("critical.json", &critical_json(s, &c))?;
    Ok(c)
}

pub struct NodalRun {
    pub angles: Vec<f64>,
    pub sets: Vec<NodalSet>,
    pub enclosure: Vec<EnclosureReport>,
    /// Max distance from the critical points to N_θ.
    pub k_distance: Vec<Option<f64>>,
    pub structure: Vec<Option<Result<StructureReport, NodalError>>>,
}

pub fn nodal_for(s: &Solved, angle: f64) -> Result<NodalSet, CliError> {
    if s.report.degenerate {
        return Err(NodalError::DegenerateField.into());
    }
    let theta = Vec2::from_angle(angle);
    let u_theta = directional_derivative(&s.hessian.fit_gradient(), theta);
    Ok(nodal_set(&u_theta, theta)?)
}

pub fn nodal_run(s: &Solved, c: &CriticalRun, angles: &[f64]) -> Result<NodalRun, CliError> {
    let region = &s.planar.mesh.region;
    let k = c.locations();
    let mut run = NodalRun {
        angles: angles.to_vec(),
        sets: Vec::new(),
        enclosure: Vec::new(),
        k_distance: Vec::new(),
        structure: Vec::new(),
    };
    for &a in angles {
        let set = nodal_for(s, a)?;
        run.enclosure.push(check_no_enclosure(&set, region));
        run.k_distance
            .push((!k.is_empty()).then(|| k.iter().map(|&p| set.distance(p)).fold(0.0, f64::max)));
        run.structure.push(
            s.domain
                .is_concentric_annulus()
                .then(|| annulus_branch_structure(&set, c.detection.curves.first(), region, s.h())),
        );
        run.sets.push(set);
    }
    Ok(run)
}

pub fn branches_json(s: &Solved, n: &NodalRun) -> Value {
    let dirs: Vec<Value> = (0..n.sets.len())
        .map(|i| {
            let set = &n.sets[i];
            let structure = match &n.structure[i] {
                None => Value::Null,
                Some(Ok(r)) => json!({ "passed": true, "report": r }),
                Some(Err(e)) => json!({ "passed": false, "error": e.to_string() }),
            };
            json!({
                "index": i,
                "angle": n.angles[i],
                "theta": set.theta,
                "file": nodal_file_name(i),
                "components": set.components.len(),
                "closed_components": set.components.iter().filter(|c| c.closed).count(),
                "boundary_endpoints": set.boundary_endpoints.iter()
                    .map(|(p, l)| json!({"x": p.x, "y": p.y, "label": l})).collect::<Vec<_>>(),
                "tau_branch": set.tau_branch,
                "branch_points": set.branch_points.iter().map(|b| json!({
                    "x": b.location.x,
                    "y": b.location.y,
                    "ray_count": b.ray_count,
                    "hessian": b.hessian,
                })).collect::<Vec<_>>(),
                "enclosure": n.enclosure[i],
                "k_distance": n.k_distance[i],
                "structure": structure,
            })
        })
        .collect();
    json!({ "h": s.h(), "directions": dirs })
}

pub fn nodal_step(s: &Solved, c: &CriticalRun, angles: &[f64], out: &OutDir) -> Result<NodalRun, CliError> {
    let n = nodal_run(s, c, angles)?;
    for (i, set) in n.sets.iter().enumerate() {
        out.write_text(&nodal_file_name(i), &nodal_csv(set))?;
    }
    out.write_json("branches.json", &branches_json(s, &n))?;
    Ok(n)
}

pub struct FlowRun {
    pub theta_angle: f64,
    pub t: f64,
    pub seeds: Vec<Vec2>,
    pub hamiltonian: Vec<Result<FlowTrace, NodalError>>,
    pub max_hamiltonian: f64,
    pub rotation: Vec<Result<FlowTrace, NodalError>>,
    pub verdict: FlowVerdict,
    /// λ(end) − λ(start) − t, wrapped to (−π, π].
    pub angle_advance_error: Vec<Option<f64>>,
    /// Seeds' images reversed their order along N_θ (only evaluated for t ≡ π).
    pub exchanged: Option<bool>,
    pub min_x_norm: f64,
    pub min_x_times_grad: f64,
    pub boundary: BoundaryIdentity,
}

fn point_at(line: &[Vec2], s: f64) -> Vec2 {
    let mut acc = 0.0;
    for w in line.windows(2) {
        let len = w[0].distance(w[1]);
        if acc + len >= s && len > 0.0 {
            return w[0] + (w[1] - w[0]) * ((s - acc) / len);
        }
        acc += len;
    }
    *line.last().unwrap()
}

/// Two seeds on the component of N_θ through the anchor (or on the longest
/// component), each halfway from the anchor to the nearer end.
pub fn auto_seeds(set: &NodalSet, anchor: Option<Vec2>) -> Vec<Vec2> {
    let lines = set.polylines();
    let length = |l: &Vec<Vec2>| l.windows(2).map(|w| w[0].distance(w[1])).sum::<f64>();
    let best = match anchor {
        Some(a) => lines.iter().min_by(|x, y| {
            let dx = mclab_core::geometry::point_polyline_distance(a, x);
            let dy = mclab_core::geometry::point_polyline_distance(a, y);
            dx.total_cmp(&dy)
        }),
        None => lines.iter().max_by(|x, y| length(x).total_cmp(&length(y))),
    };
    let Some(line) = best.filter(|l| l.len() >= 2) else {
        return Vec::new();
    };
    let total = length(line);
    let s = anchor.map_or(0.5 * total, |a| polyline_parameter(line, a));
    let d = 0.5 * s.min(total - s);
    vec![point_at(line, s - d), point_at(line, s + d)]
}

pub fn flow_run(
    s: &Solved,
    c: &CriticalRun,
    theta_angle: f64,
    t: f64,
    seeds: Option<Vec<Vec2>>,
) -> Result<FlowRun, CliError> {
    let h = s.h();
    let theta = Vec2::from_angle(theta_angle);
    let base = nodal_for(s, theta_angle)?;
    let target = nodal_for(s, theta_angle + t)?;
    let k = c.locations();
    let seeds = seeds.unwrap_or_else(|| auto_seeds(&base, k.first().copied()));
    if seeds.is_empty() {
        return Err(CliError::Analysis {
            kind: "NoSeeds".into(),
            message: "N_θ has no component to seed the flow on".into(),
        });
    }
    let model = BlendedModel::new(&s.hessian);
    let max_len = 4.0 * s.planar.mesh.region.diameter();
    let mut hamiltonian = Vec::new();
    for &p in &seeds {
        for step in [0.5 * h, -0.5 * h] {
            hamiltonian.push(trace_hamiltonian(&model, theta, p, step, max_len, base.trace_threshold()));
        }
    }
    let max_hamiltonian = hamiltonian
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .map(|tr| tr.max_hamiltonian)
        .fold(0.0, f64::max);
    let rotation = flow_rotate(&model, theta, t, &seeds);
    let verdict = flow_verdict(&rotation, &target, 4.0 * h);
    let angle_advance_error = rotation
        .iter()
        .map(|r| {
            let tr = r.as_ref().ok()?;
            let d = gradient_angle(&model, tr.end())? - gradient_angle(&model, tr.start)?;
            Some((d - t + PI).rem_euclid(2.0 * PI) - PI)
        })
        .collect();
    let half_turn = ((t.abs() - PI).abs()) < 1e-9;
    let exchanged = match (half_turn, seeds.len(), rotation.as_slice()) {
        (true, 2, [Ok(a), Ok(b)]) => {
            let lines = base.polylines();
            let line = lines
                .iter()
                .min_by(|x, y| {
                    let dx = mclab_core::geometry::point_polyline_distance(seeds[0], x);
                    let dy = mclab_core::geometry::point_polyline_distance(seeds[0], y);
                    dx.total_cmp(&dy)
                })
                .unwrap();
            Some(ends_exchanged(line, [seeds[0], seeds[1]], [a.end(), b.end()]))
        }
        (true, ..) => Some(false),
        _ => None,
    };
    let x = field_x(&s.gradient, &s.hessian, &k)?;
    Ok(FlowRun {
        theta_angle,
        t,
        seeds,
        hamiltonian,
        max_hamiltonian,
        rotation,
        verdict,
        angle_advance_error,
        exchanged,
        min_x_norm: x.min_norm,
        min_x_times_grad: x.min_norm_times_grad,
        boundary: boundary_identity(&s.hessian),
    })
}

fn trace_json(r: &Result<FlowTrace, NodalError>) -> Value {
    match r {
        Ok(tr) => json!({
            "start": tr.start,
            "end": tr.end(),
            "halt": tr.halt,
            "max_hamiltonian": tr.max_hamiltonian,
            "points": tr.points.iter().map(|p| [p.x, p.y]).collect::<Vec<_>>(),
        }),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

impl FlowRun {
    pub fn to_json(&self) -> Value {
        json!({
            "theta_angle": self.theta_angle,
            "t": self.t,
            "seeds": self.seeds,
            "hamiltonian": {
                "max_abs_u_theta": self.max_hamiltonian,
                "failed": self.hamiltonian.iter().filter(|r| r.is_err()).count(),
                "traces": self.hamiltonian.iter().map(trace_json).collect::<Vec<_>>(),
            },
            "rotation": {
                "verdict": self.verdict,
                "angle_advance_error": self.angle_advance_error,
                "ends_exchanged": self.exchanged,
                "traces": self.rotation.iter().map(trace_json).collect::<Vec<_>>(),
            },
            "field_x": {
                "min_norm": self.min_x_norm,
                "min_norm_times_grad": self.min_x_times_grad,
            },
            "boundary_identity": self.boundary,
        })
    }
}

/// Classification helper for reports: relative determinant of a Hessian.
pub fn det_ratio(h: &mclab_core::geometry::Sym2) -> f64 {
    let s = h.norm();
    h.det() / (s * s)
}
