//! SVG figures rendered from the artifacts in an output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mclab_core::domain::BoundaryLabel;
use mclab_core::geometry::{winding_number, Vec2};
use serde_json::Value;

use crate::artifacts::{nodal_file_name, parse_nodal_csv};
use crate::config::Scenario;
use crate::CliError;

pub const FIGURES: [&str; 5] = ["fig1", "fig2", "fig3", "fig4", "fig5"];

fn required(fig: &str) -> Vec<String> {
    let mut r = vec!["scenario.json".to_string(), "critical.json".to_string()];
    if fig == "fig1" {
        r.push("branches.json".into());
        r.push(nodal_file_name(0));
    }
    r
}

fn read(dir: &Path, name: &str) -> Result<String, CliError> {
    fs::read_to_string(dir.join(name)).map_err(|e| CliError::Io {
        message: format!("cannot read {name}: {e}"),
    })
}

fn read_json(dir: &Path, name: &str) -> Result<Value, CliError> {
    serde_json::from_str(&read(dir, name)?).map_err(|e| CliError::Io {
        message: format!("{name}: {e}"),
    })
}

/// Writes `<dir>/<fig>.svg` from the artifacts already in `dir`.
pub fn export_figure(dir: &Path, fig: &str) -> Result<PathBuf, CliError> {
    if !FIGURES.contains(&fig) {
        return Err(CliError::Usage {
            message: format!("unknown figure {fig:?}; expected one of {}", FIGURES.join(", ")),
            key: Some("fig".into()),
        });
    }
    let missing: Vec<String> = required(fig).into_iter().filter(|f| !dir.join(f).is_file()).collect();
    if !missing.is_empty() {
        return Err(CliError::MissingArtifacts {
            figure: fig.into(),
            missing,
        });
    }
    let scenario = Scenario::parse(&read(dir, "scenario.json")?)?;
    let critical = read_json(dir, "critical.json")?;
    let nodal = if fig == "fig1" {
        let lines = parse_nodal_csv(&read(dir, &nodal_file_name(0))?).map_err(|m| CliError::Io { message: m })?;
        Some((lines, read_json(dir, "branches.json")?))
    } else {
        None
    };
    let svg = render(fig, &scenario, &critical, nodal.as_ref())?;
    let path = dir.join(format!("{fig}.svg"));
    fs::write(&path, svg)?;
    Ok(path)
}

struct Canvas {
    lo: Vec2,
    scale: f64,
    height: f64,
    body: String,
}

const WIDTH: f64 = 720.0;

impl Canvas {
    fn map(&self, p: Vec2) -> (f64, f64) {
        ((p.x - self.lo.x) * self.scale, self.height - (p.y - self.lo.y) * self.scale)
    }

    fn polyline(&mut self, pts: &[Vec2], closed: bool, style: &str) {
        if pts.len() < 2 {
            return;
        }
        let coords: Vec<String> = pts
            .iter()
            .map(|&p| {
                let (x, y) = self.map(p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let tag = if closed { "polygon" } else { "polyline" };
        writeln!(self.body, r#"<{tag} points="{}" fill="none" {style}/>"#, coords.join(" ")).unwrap();
    }

    fn text(&mut self, p: Vec2, size: f64, s: &str) {
        let (x, y) = self.map(p);
        writeln!(self.body, r#"<text x="{x:.2}" y="{y:.2}" font-size="{size}" font-family="sans-serif">{s}</text>"#).unwrap();
    }

    fn marker(&mut self, p: Vec2, kind: &str) {
        let (x, y) = self.map(p);
        let s = match kind {
            "Maximum" => format!(r#"<circle cx="{x:.2}" cy="{y:.2}" r="5" fill="crimson"/>"#),
            "Minimum" => format!(r#"<circle cx="{x:.2}" cy="{y:.2}" r="5" fill="white" stroke="crimson" stroke-width="2"/>"#),
            "Saddle" => format!(
                r#"<path d="M{:.2},{:.2}L{:.2},{:.2}M{:.2},{:.2}L{:.2},{:.2}" stroke="crimson" stroke-width="2.5"/>"#,
                x - 5.0,
                y - 5.0,
                x + 5.0,
                y + 5.0,
                x - 5.0,
                y + 5.0,
                x + 5.0,
                y - 5.0
            ),
            "branch" => format!(r#"<rect x="{:.2}" y="{:.2}" width="9" height="9" fill="seagreen"/>"#, x - 4.5, y - 4.5),
            "end" => format!(r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="royalblue"/>"#),
            _ => format!(r#"<rect x="{:.2}" y="{:.2}" width="9" height="9" fill="orange"/>"#, x - 4.5, y - 4.5),
        };
        writeln!(self.body, "{s}").unwrap();
    }
}

fn vec_of(v: &Value) -> Option<Vec2> {
    match v {
        Value::Array(a) if a.len() == 2 => Some(Vec2::new(a[0].as_f64()?, a[1].as_f64()?)),
        Value::Object(_) => Some(Vec2::new(v["x"].as_f64()?, v["y"].as_f64()?)),
        _ => None,
    }
}

fn curves_of(critical: &Value) -> Vec<(Vec<Vec2>, bool)> {
    critical["curves"]
        .as_array()
        .map(|cs| {
            cs.iter()
                .map(|c| {
                    let pts = c["points"].as_array().map(|a| a.iter().filter_map(vec_of).collect()).unwrap_or_default();
                    (pts, c["closed"].as_bool().unwrap_or(false))
                })
                .collect()
        })
        .unwrap_or_default()
}

fn points_of(critical: &Value) -> Vec<(Vec2, String)> {
    critical["points"]
        .as_array()
        .map(|ps| {
            ps.iter()
                .filter_map(|p| Some((vec_of(p)?, p["type"].as_str().unwrap_or("Degenerate").to_string())))
                .collect()
        })
        .unwrap_or_default()
}

fn render(
    fig: &str,
    scenario: &Scenario,
    critical: &Value,
    nodal: Option<&(Vec<Vec<Vec2>>, Value)>,
) -> Result<String, CliError> {
    let to_cfg = |e: mclab_core::domain::DomainError| CliError::Config {
        message: e.to_string(),
        key: Some("domain".into()),
    };
    let (region, _) = scenario.domain.computational_region().map_err(to_cfg)?;
    let meridian = region.half || scenario.domain.dim() > 2;
    let region = if region.half { region.mirrored() } else { region };
    let h = scenario.solver.h;
    let (lo, hi) = region.bounding_box();
    let pad = 0.08 * (hi.x - lo.x).max(hi.y - lo.y);
    let lo = lo - Vec2::new(pad, pad);
    let hi = hi + Vec2::new(pad, 2.5 * pad);
    let scale = WIDTH / (hi.x - lo.x);
    let height = (hi.y - lo.y) * scale;
    let mut cv = Canvas {
        lo,
        scale,
        height,
        body: String::new(),
    };

    for comp in region.boundary_components(h.min(0.02)).map_err(to_cfg)? {
        cv.polyline(&comp.points, comp.closed, r#"stroke="black" stroke-width="2""#);
        let top = comp.points.iter().copied().fold(comp.points[0], |a, b| if b.y > a.y { b } else { a });
        let name = match comp.label {
            BoundaryLabel::Outer => "γ_E",
            BoundaryLabel::Inner => "γ_I",
            BoundaryLabel::Axis => "axis",
        };
        cv.text(top + Vec2::new(0.02, 0.03), 14.0, name);
    }
    if meridian {
        cv.polyline(
            &[Vec2::new(lo.x, 0.0), Vec2::new(hi.x, 0.0)],
            false,
            r#"stroke="gray" stroke-width="1.5" stroke-dasharray="8,5""#,
        );
        cv.text(Vec2::new(hi.x - 0.2 * (hi.x - lo.x), 0.02 * (hi.y - lo.y)), 13.0, "x_n (sweep axis)");
    }

    let curves = curves_of(critical);
    for (pts, closed) in &curves {
        cv.polyline(pts, *closed, r#"stroke="crimson" stroke-width="2.5""#);
    }
    let points = points_of(critical);
    for (p, kind) in &points {
        cv.marker(*p, kind);
    }

    let title = match fig {
        "fig1" => {
            let (lines, branches) = nodal.expect("fig1 loads nodal artifacts");
            for l in lines {
                cv.polyline(l, false, r#"stroke="royalblue" stroke-width="1.8""#);
            }
            let d0 = &branches["directions"][0];
            for b in d0["branch_points"].as_array().into_iter().flatten() {
                if let Some(p) = vec_of(b) {
                    cv.marker(p, "branch");
                }
            }
            for e in d0["boundary_endpoints"].as_array().into_iter().flatten() {
                if let Some(p) = vec_of(e) {
                    cv.marker(p, "end");
                }
            }
            format!(
                "N_θ for θ = ({:.3}, {:.3}): {} branch points",
                d0["theta"]["x"].as_f64().unwrap_or(f64::NAN),
                d0["theta"]["y"].as_f64().unwrap_or(f64::NAN),
                d0["branch_points"].as_array().map_or(0, |a| a.len())
            )
        }
        "fig2" => format!("critical set K (meridian section): {} closed curves", curves.iter().filter(|c| c.1).count()),
        "fig3" | "fig4" => {
            let hole = region.hole.map(|c| c.center());
            let enclosing = |pts: &Vec<Vec2>| hole.is_some_and(|c| winding_number(pts, c) != 0);
            let (case1, case2) = curves.iter().filter(|c| c.1).fold((0, 0), |(a, b), (pts, _)| {
                if enclosing(pts) {
                    (a, b + 1)
                } else {
                    (a + 1, b)
                }
            });
            if fig == "fig3" {
                format!("case 1, closed critical curve bounding a subdomain: {case1} found; {} isolated points", points.len())
            } else {
                format!("case 2, closed critical curve around γ_I: {case2} found; {} isolated points", points.len())
            }
        }
        _ => {
            for (p, _) in &points {
                if p.y.abs() > 2.0 * h && p.y > 0.0 {
                    cv.polyline(
                        &[*p, Vec2::new(p.x, -p.y)],
                        false,
                        r#"stroke="darkorange" stroke-width="1.5" stroke-dasharray="4,3""#,
                    );
                    cv.text(*p + Vec2::new(0.03, 0.03), 12.0, "swept circle");
                } else if p.y.abs() <= 2.0 * h {
                    cv.text(*p + Vec2::new(0.03, 0.05), 12.0, "axis point");
                }
            }
            let axis = points.iter().filter(|(p, _)| p.y.abs() <= 2.0 * h).count();
            let circles = points.iter().filter(|(p, _)| p.y > 2.0 * h).count();
            format!("critical set K: {axis} axis points, {circles} swept circles")
        }
    };
    cv.text(Vec2::new(lo.x + 0.3 * pad, hi.y - 0.8 * pad), 16.0, &format!("{fig}: {title}"));

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0}" height="{height:.0}" viewBox="0 0 {WIDTH:.0} {height:.0}">"#
    )
    .unwrap();
    writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    svg.push_str(&cv.body);
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_dir_reports_missing_artifacts() {
        let dir = std::env::temp_dir().join(format!("mclab-svg-empty-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        match export_figure(&dir, "fig1") {
            Err(CliError::MissingArtifacts { missing, .. }) => assert_eq!(missing.len(), 4),
            other => panic!("{other:?}"),
        }
        assert!(matches!(export_figure(&dir, "fig9"), Err(CliError::Usage { .. })));
        fs::remove_dir_all(&dir).unwrap();
    }
}
