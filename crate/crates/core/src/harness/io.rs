//! Graph and pair file formats.
//!
//! A graph is `{"nodes": [{"id": .., "label": ..}], "edges": [[u, v]]}` with
//! ids that are integers or strings; edges refer to ids, and nodes are
//! numbered densely in listing order. A pairs file holds one
//! `{"g1": graph, "g2": graph, "true_ged": n?}` record per line.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::graph::{GedValue, Graph};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeId {
    Int(u64),
    Str(String),
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Int(i) => write!(f, "{i}"),
            NodeId::Str(s) => write!(f, "{s:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeRecord {
    pub id: NodeId,
    #[serde(default)]
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFile {
    pub nodes: Vec<NodeRecord>,
    #[serde(default)]
    pub edges: Vec<[NodeId; 2]>,
}

impl GraphFile {
    /// Builds the graph, numbering nodes by position.
    pub fn to_graph(&self) -> Result<Graph, HarnessError> {
        let mut index = HashMap::with_capacity(self.nodes.len());
        for (k, node) in self.nodes.iter().enumerate() {
            if index.insert(&node.id, k).is_some() {
                return Err(HarnessError::Data(format!("duplicate node id {}", node.id)));
            }
        }
        let lookup = |id: &NodeId| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| HarnessError::Data(format!("edge references unknown node {id}")))
        };
        let edges = self
            .edges
            .iter()
            .map(|[u, v]| Ok((lookup(u)?, lookup(v)?)))
            .collect::<Result<Vec<_>, HarnessError>>()?;
        Ok(Graph::new(self.nodes.iter().map(|n| n.label.clone()), &edges)?)
    }

    /// Document for `graph` with ids `0..n`. Dummy padding is not
    /// representable and is dropped.
    pub fn from_graph(graph: &Graph) -> Self {
        let real: Vec<usize> = (0..graph.len()).filter(|&v| !graph.label(v).is_dummy()).collect();
        Self {
            nodes: real
                .iter()
                .map(|&v| NodeRecord {
                    id: NodeId::Int(v as u64),
                    label: graph.label(v).to_string(),
                })
                .collect(),
            edges: graph
                .edges()
                .iter()
                .filter(|(u, v)| !graph.label(*u).is_dummy() && !graph.label(*v).is_dummy())
                .map(|&(u, v)| [NodeId::Int(u as u64), NodeId::Int(v as u64)])
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairRecord {
    pub g1: GraphFile,
    pub g2: GraphFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_ged: Option<GedValue>,
}

/// A pair ready for computation.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphPair {
    pub g1: Graph,
    pub g2: Graph,
    pub true_ged: Option<GedValue>,
}

impl PairRecord {
    pub fn to_pair(&self) -> Result<GraphPair, HarnessError> {
        Ok(GraphPair {
            g1: self.g1.to_graph()?,
            g2: self.g2.to_graph()?,
            true_ged: self.true_ged,
        })
    }

    pub fn from_pair(pair: &GraphPair) -> Self {
        Self {
            g1: GraphFile::from_graph(&pair.g1),
            g2: GraphFile::from_graph(&pair.g2),
            true_ged: pair.true_ged,
        }
    }
}

/// Parses JSON-lines text; blank lines are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<PairRecord>, HarnessError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, line)| {
            let record: PairRecord =
                serde_json::from_str(line).map_err(|e| HarnessError::Data(format!("line {}: {e}", k + 1)))?;
            record
                .to_pair()
                .map_err(|e| HarnessError::Data(format!("line {}: {e}", k + 1)))?;
            Ok(record)
        })
        .collect()
}

pub fn read_pairs(path: &Path) -> Result<Vec<PairRecord>, HarnessError> {
    let file = fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut text = String::new();
    for line in BufReader::new(file).lines() {
        text.push_str(&line.map_err(|e| HarnessError::io(path, e))?);
        text.push('\n');
    }
    parse_pairs(&text).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))
}

/// Reads and builds every pair in a file.
pub fn load_pairs(path: &Path) -> Result<Vec<GraphPair>, HarnessError> {
    read_pairs(path)?.iter().map(PairRecord::to_pair).collect()
}

pub fn format_pairs(records: &[PairRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn write_pairs(path: &Path, records: &[PairRecord]) -> Result<(), HarnessError> {
    let mut f = fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    f.write_all(format_pairs(records).as_bytes())
        .map_err(|e| HarnessError::io(path, e))
}
