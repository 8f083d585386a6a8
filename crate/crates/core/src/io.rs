//! File formats: JSON state vectors and protocol scripts.
//!
//! Complex numbers are `[re, im]` pairs; amplitudes are listed in flat-index
//! order and matrices row-major. Floats go through serde_json's shortest
//! round-trip formatting, so a written file reloads to bit-identical values.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::locc::{
    BranchTarget, HaltVerdict, InstrumentElement, LocalInstrument, LoccProgram, ProgramNode,
};
use crate::qstate::{Party, PureState, RegisterLayout};

/// Band inside which a read state's norm is silently renormalized.
pub const NORM_READ_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PartyFile {
    name: String,
    dims: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StateFile {
    parties: Vec<PartyFile>,
    amplitudes: Vec<[f64; 2]>,
}

/// Canonical JSON serialization of a state.
pub fn write_state(state: &PureState) -> String {
    let file = StateFile {
        parties: state
            .layout()
            .parties()
            .iter()
            .map(|p| PartyFile {
                name: p.name.clone(),
                dims: p.dims.clone(),
            })
            .collect(),
        amplitudes: state.amplitudes().iter().map(|z| [z.re, z.im]).collect(),
    };
    serde_json::to_string(&file).expect("state serialization cannot fail")
}

/// Parses a state file, rejecting norms outside `1 ± NORM_READ_TOL` and
/// renormalizing anything inside the band.
pub fn read_state(text: &str) -> Result<PureState> {
    let file: StateFile =
        serde_json::from_str(text).map_err(|e| Error::Malformed(format!("state file: {e}")))?;
    let layout = RegisterLayout::new(
        file.parties
            .into_iter()
            .map(|p| Party {
                name: p.name,
                dims: p.dims,
            })
            .collect(),
    )?;
    if file.amplitudes.len() != layout.total_dim() {
        return Err(Error::InvalidState(format!(
            "{} amplitudes for a dimension-{} register",
            file.amplitudes.len(),
            layout.total_dim()
        )));
    }
    let mut amps: Vec<Complex64> = file
        .amplitudes
        .iter()
        .map(|&[re, im]| Complex64::new(re, im))
        .collect();
    let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !norm.is_finite() || (norm - 1.0).abs() > NORM_READ_TOL {
        return Err(Error::InvalidState(format!(
            "norm {norm:.9} outside 1±{NORM_READ_TOL:.0e}"
        )));
    }
    if (norm - 1.0).abs() > crate::qstate::NORM_TOL {
        for z in &mut amps {
            *z /= norm;
        }
    }
    PureState::new(layout, amps)
}

pub fn save_state(state: &PureState, path: &Path) -> Result<()> {
    std::fs::write(path, write_state(state) + "\n")?;
    Ok(())
}

pub fn load_state(path: &Path) -> Result<PureState> {
    read_state(&std::fs::read_to_string(path)?)
}

/// Hex SHA-256 of the canonical serialization; stable across formatting and
/// file-layout differences of the on-disk source.
pub fn state_digest(state: &PureState) -> String {
    let mut hasher = Sha256::new();
    hasher.update(write_state(state).as_bytes());
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum BranchSpec {
    /// `"node3"` points at the script's fourth node.
    Node(String),
    Halt { halt: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ElementFile {
    label: String,
    /// Row-major complex matrix.
    matrix: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NodeFile {
    party: String,
    elements: Vec<ElementFile>,
    branches: BTreeMap<String, BranchSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum ScriptFile {
    Wrapped {
        #[serde(default)]
        cats: u64,
        nodes: Vec<NodeFile>,
    },
    Bare(Vec<NodeFile>),
}

/// A parsed protocol script, not yet bound to a register layout.
#[derive(Debug, Clone)]
pub struct ProtocolScript {
    /// Pre-shared cat states the program expects (zero for plain scripts).
    pub cats: u64,
    nodes: Vec<NodeFile>,
}

impl ProtocolScript {
    pub fn parse(text: &str) -> Result<Self> {
        let file: ScriptFile = serde_json::from_str(text)
            .map_err(|e| Error::Malformed(format!("protocol file: {e}")))?;
        let (cats, nodes) = match file {
            ScriptFile::Wrapped { cats, nodes } => (cats, nodes),
            ScriptFile::Bare(nodes) => (0, nodes),
        };
        Ok(ProtocolScript { cats, nodes })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Binds party names and node references against a concrete layout.
    pub fn resolve(&self, layout: &RegisterLayout) -> Result<LoccProgram> {
        let count = self.nodes.len();
        let nodes = self
            .nodes
            .iter()
            .enumerate()
            .map(|(idx, node)| {
                let at = layout
                    .party_ids()
                    .find(|&p| layout.parties()[p.0].name == node.party)
                    .ok_or_else(|| {
                        Error::InvalidProgram(format!("node {idx}: unknown party {}", node.party))
                    })?;
                let elements = node
                    .elements
                    .iter()
                    .map(|e| {
                        let rows = e.matrix.len();
                        let cols = e.matrix.first().map_or(0, Vec::len);
                        if rows == 0 || e.matrix.iter().any(|r| r.len() != cols) {
                            return Err(Error::Malformed(format!(
                                "node {idx}: ragged or empty matrix for {}",
                                e.label
                            )));
                        }
                        let matrix = DMatrix::from_fn(rows, cols, |r, c| {
                            let [re, im] = e.matrix[r][c];
                            Complex64::new(re, im)
                        });
                        Ok(InstrumentElement {
                            label: e.label.clone(),
                            matrix,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let branches = node
                    .branches
                    .iter()
                    .map(|(label, spec)| {
                        let target = match spec {
                            BranchSpec::Node(name) => {
                                let n = name
                                    .strip_prefix("node")
                                    .and_then(|s| s.parse::<usize>().ok())
                                    .filter(|&n| n < count)
                                    .ok_or_else(|| {
                                        Error::InvalidProgram(format!(
                                            "node {idx}: branch {label} targets unknown {name}"
                                        ))
                                    })?;
                                BranchTarget::Node(n)
                            }
                            BranchSpec::Halt { halt } => match halt.as_str() {
                                "success" => BranchTarget::Halt(HaltVerdict::Success),
                                "failure" => BranchTarget::Halt(HaltVerdict::Failure),
                                other => {
                                    return Err(Error::InvalidProgram(format!(
                                        "node {idx}: unknown halt verdict {other}"
                                    )))
                                }
                            },
                        };
                        Ok((label.clone(), target))
                    })
                    .collect::<Result<BTreeMap<_, _>>>()?;
                Ok(ProgramNode {
                    instrument: LocalInstrument::new(at, elements),
                    branches,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LoccProgram { nodes })
    }
}

/// Serializes a program back to script JSON, naming parties via `layout`.
pub fn write_program(prog: &LoccProgram, layout: &RegisterLayout, cats: u64) -> Result<String> {
    let nodes = prog
        .nodes
        .iter()
        .map(|node| {
            let party = layout.party(node.instrument.at)?.name.clone();
            let elements = node
                .instrument
                .elements
                .iter()
                .map(|e| ElementFile {
                    label: e.label.clone(),
                    matrix: (0..e.matrix.nrows())
                        .map(|r| (0..e.matrix.ncols()).map(|c| [e.matrix[(r, c)].re, e.matrix[(r, c)].im]).collect())
                        .collect(),
                })
                .collect();
            let branches = node
                .branches
                .iter()
                .map(|(label, target)| {
                    let spec = match target {
                        BranchTarget::Node(n) => BranchSpec::Node(format!("node{n}")),
                        BranchTarget::Halt(HaltVerdict::Success) => BranchSpec::Halt {
                            halt: "success".into(),
                        },
                        BranchTarget::Halt(HaltVerdict::Failure) => BranchSpec::Halt {
                            halt: "failure".into(),
                        },
                    };
                    (label.clone(), spec)
                })
                .collect();
            Ok(NodeFile {
                party,
                elements,
                branches,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let file = ScriptFile::Wrapped { cats, nodes };
    serde_json::to_string(&file).map_err(|e| Error::Malformed(format!("serialize: {e}")))
}

pub fn save_program(
    prog: &LoccProgram,
    layout: &RegisterLayout,
    cats: u64,
    path: &Path,
) -> Result<()> {
    std::fs::write(path, write_program(prog, layout, cats)? + "\n")?;
    Ok(())
}
