//! Entanglement manipulation protocols built from local instruments.
//!
//! Everything here compiles down to a [`LoccProgram`] and is validated by
//! running it through the same executor the rest of the library uses; no
//! protocol gets to assert its result without the simulator checking it.

mod assist;
mod cat;
mod gamble;
mod pair_epr;
mod rewrite;
mod some_epr;
mod teleport;

pub use assist::{
    assisted_entangle, AssistedOutcome, HelperMeasurement, MeasuredOutcome, BASIS_SEARCH_SEED,
    RANDOM_BASES,
};
pub use cat::{cat_to_epr, eprs_to_cat, synthesize_from_eprs, CatSynthesis, Synthesis};
pub use gamble::{bipartite_gamble, gamble_success_probability, GambleAnalysis};
pub use pair_epr::{epr_between_pair, StagedDistillation};
pub use rewrite::{
    loccq_to_locc_rewrite, rewrite_layout, CatBudgetProgram, RewriteOutcome, RewriteReport,
};
pub use some_epr::gamble_some_epr;
pub use teleport::{teleport, TeleportOutcome};

use std::collections::{BTreeMap, VecDeque};

use crate::decomp::{schmidt, Cut};
use crate::error::{Error, Result};
use crate::locc::{BranchTarget, LoccProgram, ProgramNode, ProtocolTrace, ResourceLedger};
use crate::qstate::{PartyId, PureState};

/// Residual entanglement below this entropy does not count as entangled when
/// deciding protocol viability.
pub const ENTANGLEMENT_TOL: f64 = 1e-6;
/// Strict fidelity slack for states that should be exact up to rounding.
pub const STRICT_FID_TOL: f64 = 1e-9;

/// Result of a protocol that tries to leave one maximally entangled pair.
#[derive(Debug, Clone)]
pub struct DistillationOutcome {
    /// Parties sharing the pair, in the layout of `success_state`.
    pub pair: (PartyId, PartyId),
    pub pair_names: (String, String),
    pub success_probability: f64,
    /// Full register state of the first success branch.
    pub success_state: PureState,
    pub program: LoccProgram,
    pub trace: ProtocolTrace,
    pub ledger: ResourceLedger,
}

/// Accumulates program nodes in construction order, then re-roots the graph
/// so the requested entry becomes node 0 and unreachable nodes are pruned.
#[derive(Debug, Default)]
pub(crate) struct ProgramBuilder {
    nodes: Vec<ProgramNode>,
}

impl ProgramBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, node: ProgramNode) -> usize {
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    pub fn finish(self, entry: usize) -> LoccProgram {
        let mut mapped = vec![usize::MAX; self.nodes.len()];
        let mut order = Vec::new();
        let mut queue = VecDeque::new();
        mapped[entry] = 0;
        order.push(entry);
        queue.push_back(entry);
        while let Some(n) = queue.pop_front() {
            for target in self.nodes[n].branches.values() {
                if let BranchTarget::Node(t) = target {
                    if mapped[*t] == usize::MAX {
                        mapped[*t] = order.len();
                        order.push(*t);
                        queue.push_back(*t);
                    }
                }
            }
        }
        let nodes = order
            .iter()
            .map(|&old| {
                let node = &self.nodes[old];
                let branches: BTreeMap<String, BranchTarget> = node
                    .branches
                    .iter()
                    .map(|(label, target)| {
                        let target = match target {
                            BranchTarget::Node(t) => BranchTarget::Node(mapped[*t]),
                            halt => *halt,
                        };
                        (label.clone(), target)
                    })
                    .collect();
                ProgramNode {
                    instrument: node.instrument.clone(),
                    branches,
                }
            })
            .collect();
        LoccProgram { nodes }
    }
}

/// Lower bound on the fidelity of the reduced state on `pair` to the nearest
/// maximally entangled two-term state: the top eigenvector's weight times its
/// best overlap `(a₁+a₂)²/2` over its two largest Schmidt coefficients.
pub fn epr_pair_fidelity(state: &PureState, pair: (PartyId, PartyId)) -> Result<f64> {
    if pair.0 == pair.1 {
        return Err(Error::InvalidSubset("pair parties must differ".into()));
    }
    // A two-party register *is* the pair; reducing would trace out nothing.
    let (weight, psi) = if state.layout().party_count() == 2 {
        (1.0, state.clone())
    } else {
        let rho = state.partial_trace(&[pair.0, pair.1])?;
        let (weight, vec) = rho.top_eigenpair();
        let norm = vec.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Ok(0.0);
        }
        let psi = PureState::new(
            rho.layout().clone(),
            vec.into_iter().map(|z| z / norm).collect(),
        )?;
        (weight, psi)
    };
    let sd = schmidt(&psi, Cut::new(2, &[PartyId(0)])?)?;
    let a1 = sd.coefficients.first().copied().unwrap_or(0.0);
    let a2 = sd.coefficients.get(1).copied().unwrap_or(0.0);
    Ok((weight * (a1 + a2) * (a1 + a2) / 2.0).clamp(0.0, 1.0))
}

fn trace_first_success(trace: &ProtocolTrace) -> Result<&crate::locc::BranchRecord> {
    trace
        .success_branches()
        .next()
        .ok_or(Error::NotEntangled)
}

fn party_names_of(state: &PureState, pair: (PartyId, PartyId)) -> (String, String) {
    (
        state.layout().parties()[pair.0 .0].name.clone(),
        state.layout().parties()[pair.1 .0].name.clone(),
    )
}
