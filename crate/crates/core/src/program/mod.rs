//! Priority programs and their execution.
//!
//! Builtins run in-process. External programs (for example generated
//! Python) run through [`sandbox::ExternalRunner`], one subprocess per graph
//! pair.

pub mod builtin;
pub mod sandbox;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::graph::Graph;
use crate::matrix::WeightMatrix;

pub use builtin::{Builtin, DegreeNeighborParams};
pub use sandbox::{ExternalRunner, RunnerError, SandboxConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProgramId(pub u64);

impl fmt::Display for ProgramId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// How an external source is turned into a runnable script.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryPoint {
    /// The source speaks the wire protocol itself.
    Script,
    /// The source defines `priority(graph1, graph2, weights)`; a Python
    /// driver handling the wire protocol is wrapped around it.
    #[default]
    PythonPriority,
}

pub fn default_python_command() -> Vec<String> {
    vec!["python3".into(), "-I".into(), sandbox::SOURCE_PLACEHOLDER.into()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProgramKind {
    Builtin {
        builtin: Builtin,
    },
    External {
        source: String,
        #[serde(default)]
        entry: EntryPoint,
        #[serde(default = "default_python_command")]
        command: Vec<String>,
    },
}

impl ProgramKind {
    pub fn python(source: impl Into<String>) -> Self {
        ProgramKind::External {
            source: source.into(),
            entry: EntryPoint::PythonPriority,
            command: default_python_command(),
        }
    }

    pub fn script(source: impl Into<String>, command: Vec<String>) -> Self {
        ProgramKind::External {
            source: source.into(),
            entry: EntryPoint::Script,
            command,
        }
    }

    /// Human-readable source: the program text, or a builtin's Python
    /// rendering.
    pub fn source(&self) -> String {
        match self {
            ProgramKind::Builtin { builtin } => builtin.python_source(),
            ProgramKind::External { source, .. } => source.clone(),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ProgramKind::Builtin { builtin } => format!("builtin:{}", builtin.short_name()),
            ProgramKind::External { entry, .. } => match entry {
                EntryPoint::Script => "external:script".into(),
                EntryPoint::PythonPriority => "external:python".into(),
            },
        }
    }
}

impl From<Builtin> for ProgramKind {
    fn from(builtin: Builtin) -> Self {
        ProgramKind::Builtin { builtin }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorityProgram {
    pub id: ProgramId,
    #[serde(flatten)]
    pub kind: ProgramKind,
    /// Character count of the source; builtins use their rendering.
    pub length: usize,
    /// Iteration at which the program entered the search.
    #[serde(default)]
    pub created_at: usize,
}

impl PriorityProgram {
    pub fn new(id: ProgramId, kind: ProgramKind, created_at: usize) -> Self {
        let length = kind.source().chars().count().max(1);
        Self {
            id,
            kind,
            length,
            created_at,
        }
    }

    pub fn zero(id: ProgramId) -> Self {
        Self::new(id, Builtin::Zero.into(), 0)
    }
}

/// Result of running one program on one graph pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ExecOutcome {
    Ok(WeightMatrix),
    Timeout,
    Crash {
        code: Option<i32>,
        signal: Option<i32>,
    },
    Malformed(String),
}

impl ExecOutcome {
    pub fn is_ok(&self) -> bool {
        matches!(self, ExecOutcome::Ok(_))
    }

    pub fn into_matrix(self) -> Option<WeightMatrix> {
        match self {
            ExecOutcome::Ok(w) => Some(w),
            _ => None,
        }
    }

    pub fn summary(&self) -> String {
        match self {
            ExecOutcome::Ok(w) => format!("ok ({}x{})", w.rows(), w.cols()),
            ExecOutcome::Timeout => "timeout".into(),
            ExecOutcome::Crash { code, signal } => match (code, signal) {
                (Some(c), _) => format!("crash (exit {c})"),
                (None, Some(s)) => format!("crash (signal {s})"),
                _ => "crash".into(),
            },
            ExecOutcome::Malformed(r) => format!("malformed: {r}"),
        }
    }
}

/// Script actually executed for an external program.
pub fn runnable_script(source: &str, entry: EntryPoint) -> String {
    match entry {
        EntryPoint::Script => source.to_string(),
        EntryPoint::PythonPriority => format!(
            "import json\nimport sys\n\n{source}\n\n\
def _main():\n  request = json.load(sys.stdin)\n  weights = priority(request[\"adj1\"], request[\"adj2\"], request[\"w0\"])\n  sys.stdout.write(json.dumps({{\"weights\": [[float(x) for x in row] for row in weights]}}))\n\n\
if __name__ == \"__main__\":\n  _main()\n"
        ),
    }
}

/// Runs `program` on one padded pair. Builtins ignore `runner`. Only a
/// runner infrastructure failure is an `Err`; misbehaving programs yield a
/// non-ok [`ExecOutcome`].
pub fn evaluate_program(
    program: &PriorityProgram,
    g1: &Graph,
    g2: &Graph,
    w0: &WeightMatrix,
    runner: &ExternalRunner,
) -> Result<ExecOutcome, RunnerError> {
    match &program.kind {
        ProgramKind::Builtin { builtin } => {
            let w = builtin.weights(g1, g2, w0);
            if let Err(e) = w.check_shape(w0.rows(), w0.cols()).and_then(|_| w.check_finite()) {
                return Ok(ExecOutcome::Malformed(e.to_string()));
            }
            Ok(ExecOutcome::Ok(w))
        }
        ProgramKind::External {
            source,
            entry,
            command,
        } => {
            let adj1 = g1.adjacency_matrix();
            let adj2 = g2.adjacency_matrix();
            let request = sandbox::WireRequest {
                adj1: &adj1,
                adj2: &adj2,
                w0,
            };
            let script = runnable_script(source, *entry);
            Ok(runner.run_script(&script, command, &request)?.outcome)
        }
    }
}
