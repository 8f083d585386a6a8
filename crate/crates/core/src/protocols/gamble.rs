//! All-or-nothing conversion of partial bipartite entanglement into one
//! maximally entangled pair.
//!
//! The protocol projects onto the two largest Schmidt terms, then applies a
//! two-outcome filter that either equalizes the surviving coefficients or
//! fails. Success leaves an exactly maximally entangled state across the cut.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::decomp::{schmidt, Cut, SCHMIDT_TOL};
use crate::error::{Error, Result};
use crate::locc::{
    run_program, BranchTarget, HaltVerdict, InstrumentElement, LocalInstrument, ProgramNode,
    ResourceLedger,
};
use crate::qstate::{PartyId, PureState};
use serde::Serialize;

use super::{party_names_of, trace_first_success, DistillationOutcome, ProgramBuilder};

/// Closed-form description of the gamble on a given coefficient list.
#[derive(Debug, Clone, Serialize)]
pub struct GambleAnalysis {
    /// The two largest coefficients `(a₁, a₂)`, descending.
    pub coefficients: (f64, f64),
    /// Probability `a₁² + a₂²` of surviving the two-term projection.
    pub projection_probability: f64,
    /// Filter amplitudes `(c, d) = (a₁, a₂)/√p` after the projection.
    pub filter: (f64, f64),
    /// Overall success probability `2a₁²a₂²/(a₁²+a₂²)`.
    pub success_probability: f64,
}

/// Analyzes the gamble for a Schmidt coefficient list. Needs at least two
/// coefficients above the rank cutoff.
pub fn gamble_success_probability(coefficients: &[f64]) -> Result<GambleAnalysis> {
    let mut coeffs: Vec<f64> = coefficients
        .iter()
        .copied()
        .filter(|&a| a > SCHMIDT_TOL)
        .collect();
    coeffs.sort_by(|a, b| b.total_cmp(a));
    if coeffs.len() < 2 {
        return Err(Error::NotEntangled);
    }
    let (a1, a2) = (coeffs[0], coeffs[1]);
    let p = a1 * a1 + a2 * a2;
    let root_p = p.sqrt();
    let (c, d) = (a1 / root_p, a2 / root_p);
    Ok(GambleAnalysis {
        coefficients: (a1, a2),
        projection_probability: p,
        filter: (c, d),
        success_probability: 2.0 * a1 * a1 * a2 * a2 / p,
    })
}

fn outer(vs: &[&[Complex64]]) -> DMatrix<Complex64> {
    let d = vs[0].len();
    let mut m = DMatrix::zeros(d, d);
    for v in vs {
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] += v[i] * v[j].conj();
            }
        }
    }
    m
}

fn identity(d: usize) -> DMatrix<Complex64> {
    DMatrix::from_diagonal_element(d, d, Complex64::ONE)
}

/// Emits the gamble's nodes into `builder` and returns the entry node and
/// the analysis. One side of `cut` must be a single party to host the
/// projection and filter.
pub(crate) fn build_gamble_nodes(
    builder: &mut ProgramBuilder,
    state: &PureState,
    cut: Cut,
) -> Result<(usize, GambleAnalysis)> {
    let sd = schmidt(state, cut)?;
    if sd.rank() < 2 {
        return Err(Error::NotEntangled);
    }
    let analysis = gamble_success_probability(&sd.coefficients)?;
    let x = cut.x_side();
    let comp = cut.complement();
    let (host, host_vecs, partner, partner_vecs): (PartyId, _, Option<PartyId>, _) =
        if x.len() == 1 {
            (x[0], &sd.left, (comp.len() == 1).then(|| comp[0]), &sd.right)
        } else if comp.len() == 1 {
            (comp[0], &sd.right, None, &sd.left)
        } else {
            return Err(Error::InvalidSubset(format!(
                "gamble needs a single-party side on cut {}",
                cut.label(state.layout())
            )));
        };

    let (c, d) = analysis.filter;
    let u1 = host_vecs[0].as_slice();
    let u2 = host_vecs[1].as_slice();
    let dim = u1.len();
    let p_host = outer(&[u1, u2]);
    // Filter equalizing (c, d): amplitude d on the u₁ term, c on the u₂ term.
    let a1 = outer(&[u1]) * Complex64::from(d) + outer(&[u2]) * Complex64::from(c);
    // Completion: √(1-d²) and √(1-c²) on the kept terms, identity outside.
    let a2 = outer(&[u1]) * Complex64::from((1.0 - d * d).sqrt())
        + outer(&[u2]) * Complex64::from((1.0 - c * c).sqrt())
        + (identity(dim) - &p_host);

    let filter_node = builder.add(ProgramNode {
        instrument: LocalInstrument::new(
            host,
            vec![
                InstrumentElement { label: "equalize".into(), matrix: a1 },
                InstrumentElement { label: "spill".into(), matrix: a2 },
            ],
        ),
        branches: BTreeMap::from([
            ("equalize".into(), BranchTarget::Halt(HaltVerdict::Success)),
            ("spill".into(), BranchTarget::Halt(HaltVerdict::Failure)),
        ]),
    });

    // When the far side is also a single party it projects too, mirroring the
    // two-sided protocol; on the kept branch that projection is deterministic.
    let after_projection = if let Some(q) = partner {
        let v1 = partner_vecs[0].as_slice();
        let v2 = partner_vecs[1].as_slice();
        let p_far = outer(&[v1, v2]);
        let qdim = v1.len();
        builder.add(ProgramNode {
            instrument: LocalInstrument::new(
                q,
                vec![
                    InstrumentElement { label: "keep".into(), matrix: p_far.clone() },
                    InstrumentElement { label: "discard".into(), matrix: identity(qdim) - &p_far },
                ],
            ),
            branches: BTreeMap::from([
                ("keep".into(), BranchTarget::Node(filter_node)),
                ("discard".into(), BranchTarget::Halt(HaltVerdict::Failure)),
            ]),
        })
    } else {
        filter_node
    };

    let entry = builder.add(ProgramNode {
        instrument: LocalInstrument::new(
            host,
            vec![
                InstrumentElement { label: "keep".into(), matrix: p_host.clone() },
                InstrumentElement { label: "discard".into(), matrix: identity(dim) - &p_host },
            ],
        ),
        branches: BTreeMap::from([
            ("keep".into(), BranchTarget::Node(after_projection)),
            ("discard".into(), BranchTarget::Halt(HaltVerdict::Failure)),
        ]),
    });
    Ok((entry, analysis))
}

/// Runs the gamble across `cut` on a single copy of `state`.
///
/// The returned pair names the lowest-indexed party of each side of the cut;
/// the distilled entanglement lives across the cut itself.
pub fn bipartite_gamble(state: &PureState, cut: Cut) -> Result<DistillationOutcome> {
    let mut builder = ProgramBuilder::new();
    let (entry, analysis) = build_gamble_nodes(&mut builder, state, cut)?;
    let program = builder.finish(entry);
    let trace = run_program(&program, state)?;
    let success_state = trace_first_success(&trace)?.state.clone();
    let pair = (cut.x_side()[0], cut.complement()[0]);
    let mut ledger = ResourceLedger::new();
    ledger.copies_consumed = 1;
    ledger.cbits_sent = trace.cbits_sent;
    ledger.set_yield(1, trace.total_success_probability);
    debug_assert!(
        (trace.total_success_probability - analysis.success_probability).abs() < 1e-9,
        "enumerated probability disagrees with the closed form"
    );
    Ok(DistillationOutcome {
        pair,
        pair_names: party_names_of(state, pair),
        success_probability: trace.total_success_probability,
        success_state,
        program,
        trace,
        ledger,
    })
}
