//! Scenario configuration (JSON, unknown keys rejected).

use std::f64::consts::PI;
use std::path::Path;

use mclab_core::domain::DomainSpec;
use mclab_core::solver::SourceSpec;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub h: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    50
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    /// Rotation parameter t.
    #[serde(default = "default_flow_t")]
    pub t: f64,
    /// Seeds on N_θ for θ = first direction; chosen automatically when absent.
    #[serde(default)]
    pub seeds: Option<Vec<[f64; 2]>>,
}

fn default_flow_t() -> f64 {
    PI / 2.0
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            t: default_flow_t(),
            seeds: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub domain: DomainSpec,
    pub source: SourceSpec,
    pub solver: SolverConfig,
    /// Direction angles in radians; default 8 equally spaced in [0, π).
    #[serde(default)]
    pub directions: Option<Vec<f64>>,
    #[serde(default)]
    pub flow: Option<FlowConfig>,
    #[serde(default)]
    pub suite: Option<String>,
}

pub fn default_directions() -> Vec<f64> {
    (0..8).map(|k| PI * k as f64 / 8.0).collect()
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let msg = inner.to_string();
            // Tagged blocks (domain, source) stop the path at the block, so the
            // field named in the message is appended when it is not already there.
            let key = match backtick_name(&msg) {
                Some(name) if msg.starts_with("unknown field") || msg.starts_with("missing field") => {
                    if path == "." || path.is_empty() {
                        name
                    } else if path.rsplit('.').next() == Some(name.as_str()) {
                        path
                    } else {
                        format!("{path}.{name}")
                    }
                }
                _ => path,
            };
            CliError::Config {
                message: msg,
                key: Some(key),
            }
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Scenario, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage {
            message: format!("cannot read config {}: {e}", path.display()),
            key: None,
        })?;
        Scenario::parse(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |key: &str, message: String| CliError::Config {
            message,
            key: Some(key.to_string()),
        };
        self.domain.validate().map_err(|e| bad("domain", e.to_string()))?;
        self.source.validate().map_err(|e| bad("source", e.to_string()))?;
        if !(self.solver.h.is_finite() && self.solver.h > 0.0) {
            return Err(bad("solver.h", format!("h must be positive, got {}", self.solver.h)));
        }
        if !(self.solver.tol.is_finite() && self.solver.tol > 0.0) {
            return Err(bad("solver.tol", format!("tol must be positive, got {}", self.solver.tol)));
        }
        if self.solver.max_iter == 0 {
            return Err(bad("solver.max_iter", "max_iter must be at least 1".into()));
        }
        if let Some(d) = &self.directions {
            if d.is_empty() || d.iter().any(|a| !a.is_finite()) {
                return Err(bad("directions", "directions must be a nonempty list of finite angles".into()));
            }
        }
        if let Some(f) = &self.flow {
            if !f.t.is_finite() {
                return Err(bad("flow.t", "t must be finite".into()));
            }
        }
        if let Some(s) = &self.suite {
            crate::suites::SuiteId::parse(s).ok_or_else(|| bad("suite", format!("unknown suite {s:?}")))?;
        }
        Ok(())
    }

    pub fn directions(&self) -> Vec<f64> {
        self.directions.clone().unwrap_or_else(default_directions)
    }
}

fn backtick_name(msg: &str) -> Option<String> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(msg[start..start + len].to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BALL: &str = r#"{
        "domain": {"kind": "ball", "R": 1.0, "n": 2},
        "source": {"kind": "constant", "H": -1.0},
        "solver": {"h": 0.05}
    }"#;

    fn key_of(text: &str) -> String {
        match Scenario::parse(text).unwrap_err() {
            CliError::Config { key, .. } => key.unwrap(),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn parses_with_defaults() {
        let s = Scenario::parse(BALL).unwrap();
        assert_eq!(s.solver.tol, 1e-10);
        assert_eq!(s.directions().len(), 8);
        assert!(s.suite.is_none());
    }

    #[test]
    fn unknown_key_is_named() {
        let text = BALL.replace(r#""h": 0.05"#, r#""h": 0.05, "smoothing": 3"#);
        assert_eq!(key_of(&text), "solver.smoothing");
        let text = BALL.replace(r#""n": 2"#, r#""n": 2, "radius": 1"#);
        assert_eq!(key_of(&text), "domain.radius");
    }

    #[test]
    fn bad_values_are_named() {
        assert_eq!(key_of(&BALL.replace("0.05", "-0.05")), "solver.h");
        // type errors inside a tagged block are reported at the block
        assert_eq!(key_of(&BALL.replace(r#""R": 1.0"#, r#""R": "one""#)), "domain");
        assert_eq!(key_of(&BALL.replace(r#""R": 1.0"#, r#""R": -1.0"#)), "domain");
        assert_eq!(key_of(&BALL.replace(r#""solver": {"h": 0.05}"#, r#""solver": {}"#)), "solver.h");
        assert_eq!(key_of(&BALL.replace("}\n    }", "},\n \"suite\": \"X9\"\n    }")), "suite");
    }
}
