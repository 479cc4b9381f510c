//! `mclab` command implementations: scenario configs, analysis runs,
//! verification suites and artifact/figure emission.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod suites;
pub mod svg;

use mclab_core::critical::CriticalError;
use mclab_core::mesh::MeshError;
use mclab_core::nodal_flow::NodalError;
use mclab_core::pipeline::PipelineError;
use mclab_core::radial_oracle::OracleError;
use mclab_core::solver::SolverError;
use serde_json::json;
use thiserror::Error;

pub use commands::{run, Command, RunOptions};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {message}")]
    Usage { message: String, key: Option<String> },
    #[error("config: {message}")]
    Config { message: String, key: Option<String> },
    #[error("solver did not converge: {message}")]
    NonConvergence { message: String },
    #[error("{kind}: {message}")]
    Analysis { kind: String, message: String },
    #[error("suite {suite} failed: {}", failed.join(", "))]
    CheckFailed { suite: String, failed: Vec<String> },
    #[error("missing artifacts for {figure}: {}", missing.join(", "))]
    MissingArtifacts { figure: String, missing: Vec<String> },
    #[error("i/o: {message}")]
    Io { message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::CheckFailed { .. } | CliError::Analysis { .. } => 1,
            CliError::Usage { .. } | CliError::Config { .. } | CliError::MissingArtifacts { .. } | CliError::Io { .. } => 2,
            CliError::NonConvergence { .. } => 3,
        }
    }

    pub fn kind(&self) -> &str {
        match self {
            CliError::Usage { .. } => "Usage",
            CliError::Config { .. } => "Config",
            CliError::NonConvergence { .. } => "NonConvergence",
            CliError::Analysis { kind, .. } => kind,
            CliError::CheckFailed { .. } => "CheckFailed",
            CliError::MissingArtifacts { .. } => "MissingArtifacts",
            CliError::Io { .. } => "Io",
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let key = match self {
            CliError::Usage { key, .. } | CliError::Config { key, .. } => key.clone(),
            _ => None,
        };
        let mut v = json!({
            "error": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
            "key": key,
        });
        if let CliError::MissingArtifacts { missing, .. } = self {
            v["missing"] = json!(missing);
        }
        if let CliError::CheckFailed { failed, .. } = self {
            v["failed_checks"] = json!(failed);
        }
        v
    }

    fn analysis(kind: &str, message: impl ToString) -> CliError {
        CliError::Analysis {
            kind: kind.to_string(),
            message: message.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io { message: e.to_string() }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let config = |key: &str, message: String| CliError::Config {
            message,
            key: Some(key.to_string()),
        };
        match e {
            PipelineError::Domain(d) => config("domain", d.to_string()),
            PipelineError::Mesh(m @ MeshError::InvalidSize { .. }) => config("solver.h", m.to_string()),
            PipelineError::Mesh(m) => CliError::analysis("MeshQualityFailure", m),
            PipelineError::Solver(s) => s.into(),
            PipelineError::Field(f) => CliError::analysis("PatchRankFailure", f),
        }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::NonConvergence { .. } | SolverError::LinearSolveFailure(_) => {
                CliError::NonConvergence { message: e.to_string() }
            }
            SolverError::InvalidInput(m) => CliError::Config {
                message: m,
                key: Some("source".into()),
            },
            SolverError::DegenerateField => CliError::analysis("DegenerateField", e),
        }
    }
}

impl From<CriticalError> for CliError {
    fn from(e: CriticalError) -> Self {
        match e {
            CriticalError::DegenerateField => CliError::analysis("DegenerateField", e),
            CriticalError::DegeneratePresent { .. } => CliError::analysis("DegeneratePresent", e),
        }
    }
}

impl From<NodalError> for CliError {
    fn from(e: NodalError) -> Self {
        let kind = match &e {
            NodalError::DegenerateField => "DegenerateField",
            NodalError::StartNotOnNodal { .. } => "StartNotOnNodal",
            NodalError::FlowExitedDomain { .. } => "FlowExitedDomain",
            NodalError::StructureMismatch { .. } => "StructureMismatch",
            NodalError::NoCriticalCurve => "NoCriticalCurve",
            NodalError::Field(_) => "PatchRankFailure",
        };
        CliError::analysis(kind, e)
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::InvalidInput(m) => CliError::Config {
                message: m,
                key: Some("domain".into()),
            },
            other => CliError::analysis("OracleFailure", other),
        }
    }
}
