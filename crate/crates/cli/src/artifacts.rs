//! Output directory handling and the CSV formats.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mclab_core::geometry::Vec2;
use mclab_core::nodal_flow::NodalSet;
use mclab_core::radial_oracle::RadialProfile;
use mclab_core::solver::ScalarField;
use serde::Serialize;

use crate::CliError;

#[derive(Clone, Debug)]
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<OutDir, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::Io {
            message: format!("cannot create {}: {e}", root.display()),
        })?;
        Ok(OutDir { root: root.to_path_buf() })
    }

    pub fn sub(&self, name: &str) -> Result<OutDir, CliError> {
        OutDir::create(&self.root.join(name))
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<(), CliError> {
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| CliError::Io {
            message: format!("cannot write {}: {e}", p.display()),
        })
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io { message: e.to_string() })?;
        text.push('\n');
        self.write_text(name, &text)
    }
}

pub fn nodal_file_name(k: usize) -> String {
    format!("nodal_{k:02}.csv")
}

/// `component,index,x,y`; closed components repeat their first point at the end.
pub fn nodal_csv(nodal: &NodalSet) -> String {
    let mut s = String::from("component,index,x,y\n");
    for (c, line) in nodal.polylines().iter().enumerate() {
        for (i, p) in line.iter().enumerate() {
            writeln!(s, "{c},{i},{},{}", p.x, p.y).unwrap();
        }
    }
    s
}

pub fn parse_nodal_csv(text: &str) -> Result<Vec<Vec<Vec2>>, String> {
    let mut lines: Vec<Vec<Vec2>> = Vec::new();
    for (no, row) in text.lines().enumerate().skip(1) {
        if row.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = row.split(',').collect();
        let bad = || format!("line {}: malformed row {row:?}", no + 1);
        if f.len() != 4 {
            return Err(bad());
        }
        let c: usize = f[0].parse().map_err(|_| bad())?;
        let x: f64 = f[2].parse().map_err(|_| bad())?;
        let y: f64 = f[3].parse().map_err(|_| bad())?;
        while lines.len() <= c {
            lines.push(Vec::new());
        }
        lines[c].push(Vec2::new(x, y));
    }
    Ok(lines)
}

/// `vertex,x,y,u` on the computational mesh.
pub fn solution_csv(field: &ScalarField) -> String {
    let mut s = String::from("vertex,x,y,u\n");
    for (i, (p, u)) in field.mesh.vertices.iter().zip(&field.values).enumerate() {
        writeln!(s, "{i},{},{},{u}", p.x, p.y).unwrap();
    }
    s
}

/// `r,u,du` profile samples.
pub fn profile_csv(profile: &RadialProfile) -> String {
    let mut s = String::from("r,u,du\n");
    for p in &profile.samples {
        writeln!(s, "{},{},{}", p.r, p.u, p.du).unwrap();
    }
    s
}
