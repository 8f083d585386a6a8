//! Conversions between cat states and EPR pairs, and synthesis of arbitrary
//! distributed states from banked pairs.
//!
//! A cat over `m` qubit parties turns into an EPR pair between any two of
//! them deterministically: the others measure in the X basis and one target
//! applies a conditional phase flip. The reverse direction prepares the cat
//! at a hub and teleports one share to each spoke, spending `m-1` pairs.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::generate::cat_on_layout;
use crate::locc::{
    run_program, BranchTarget, HaltVerdict, InstrumentElement, LocalInstrument, LoccProgram,
    ProgramNode, ResourceLedger,
};
use crate::qstate::{PartyId, PureState, RegisterLayout, PURITY_TOL};

use super::teleport::{teleport, TeleportOutcome};
use super::{party_names_of, trace_first_success, DistillationOutcome, ProgramBuilder, STRICT_FID_TOL};

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn x_basis_projectors() -> (DMatrix<Complex64>, DMatrix<Complex64>) {
    let plus = DMatrix::from_row_slice(2, 2, &[c(0.5), c(0.5), c(0.5), c(0.5)]);
    let minus = DMatrix::from_row_slice(2, 2, &[c(0.5), c(-0.5), c(-0.5), c(0.5)]);
    (plus, minus)
}

/// Converts a cat state into an EPR pair between `p1` and `p2`. Succeeds on
/// every branch; the other parties measure out and `p1` fixes the sign.
pub fn cat_to_epr(cat: &PureState, p1: PartyId, p2: PartyId) -> Result<DistillationOutcome> {
    let layout = cat.layout();
    layout.party(p1)?;
    layout.party(p2)?;
    if p1 == p2 {
        return Err(Error::InvalidSubset("pair parties must differ".into()));
    }
    for p in layout.parties() {
        if p.dims != [2] {
            return Err(Error::NotACatState(format!(
                "party {} does not hold exactly one qubit",
                p.name
            )));
        }
    }
    let ideal = cat_on_layout(layout)?;
    let fid = cat.fidelity(&ideal)?;
    if fid < 1.0 - STRICT_FID_TOL {
        return Err(Error::NotACatState(format!(
            "fidelity {fid:.12} to the uniform two-branch state"
        )));
    }
    let measured: Vec<PartyId> = layout
        .party_ids()
        .filter(|&p| p != p1 && p != p2)
        .collect();

    let program = if measured.is_empty() {
        LoccProgram::default()
    } else {
        let mut builder = ProgramBuilder::new();
        let z = DMatrix::from_row_slice(2, 2, &[c(1.), c(0.), c(0.), c(-1.)]);
        let fix = builder.add(ProgramNode {
            instrument: LocalInstrument::new(
                p1,
                vec![InstrumentElement { label: "z".into(), matrix: z }],
            ),
            branches: BTreeMap::from([(
                "z".to_string(),
                BranchTarget::Halt(HaltVerdict::Success),
            )]),
        });
        let (plus, minus) = x_basis_projectors();
        // One node per (position, parity): a compact directed acyclic graph
        // instead of a tree.
        let mut next: [BranchTarget; 2] = [
            BranchTarget::Halt(HaltVerdict::Success),
            BranchTarget::Node(fix),
        ];
        let mut entry = fix;
        for &party in measured.iter().rev() {
            let mut nodes = [0usize; 2];
            for parity in 0..2usize {
                nodes[parity] = builder.add(ProgramNode {
                    instrument: LocalInstrument::new(
                        party,
                        vec![
                            InstrumentElement { label: "+".into(), matrix: plus.clone() },
                            InstrumentElement { label: "-".into(), matrix: minus.clone() },
                        ],
                    ),
                    branches: BTreeMap::from([
                        ("+".to_string(), next[parity]),
                        ("-".to_string(), next[parity ^ 1]),
                    ]),
                });
            }
            entry = nodes[0];
            next = [BranchTarget::Node(nodes[0]), BranchTarget::Node(nodes[1])];
        }
        builder.finish(entry)
    };

    let trace = run_program(&program, cat)?;
    let success_state = trace_first_success(&trace)?.state.clone();
    let pair = (p1, p2);
    let pair_names = party_names_of(cat, pair);
    let mut ledger = ResourceLedger::new();
    ledger.cats_consumed = 1;
    ledger.cbits_sent = trace.cbits_sent;
    ledger.register_epr(&pair_names.0, &pair_names.1, 1);
    ledger.set_yield(1, trace.total_success_probability);
    Ok(DistillationOutcome {
        pair,
        pair_names,
        success_probability: trace.total_success_probability,
        success_state,
        program,
        trace,
        ledger,
    })
}

/// A cat state assembled at a hub and distributed by teleportation.
#[derive(Debug, Clone)]
pub struct CatSynthesis {
    pub state: PureState,
    pub teleports: Vec<TeleportOutcome>,
}

/// Builds the cat state over `template` by preparing all of it at `hub` and
/// teleporting one share to each spoke, spending one banked pair and two
/// classical bits per spoke.
pub fn eprs_to_cat(
    template: &RegisterLayout,
    hub: PartyId,
    spokes: &[PartyId],
    ledger: &mut ResourceLedger,
) -> Result<CatSynthesis> {
    let m = template.party_count();
    template.party(hub)?;
    for p in template.parties() {
        if p.dims != [2] {
            return Err(Error::UnsupportedDimension(
                p.dims.iter().product::<usize>().max(1),
            ));
        }
    }
    let mut covered = vec![false; m];
    covered[hub.0] = true;
    for &s in spokes {
        template.party(s)?;
        if covered[s.0] {
            return Err(Error::InvalidSubset(format!(
                "party {} listed twice",
                template.parties()[s.0].name
            )));
        }
        covered[s.0] = true;
    }
    if covered.iter().any(|&v| !v) {
        return Err(Error::InvalidSubset(
            "hub and spokes must cover every party".into(),
        ));
    }

    // Start with the whole cat at the hub: its own share first, then one
    // share per spoke in the given order.
    let parties = template
        .parties()
        .iter()
        .enumerate()
        .map(|(i, p)| crate::qstate::Party {
            name: p.name.clone(),
            dims: if i == hub.0 { vec![2; m] } else { Vec::new() },
        })
        .collect();
    let start_layout = RegisterLayout::new(parties)?;
    let d = 1usize << m;
    let mut amps = vec![Complex64::ZERO; d];
    let r = Complex64::from(0.5f64.sqrt());
    amps[0] = r;
    amps[d - 1] = r;
    let mut state = PureState::new(start_layout, amps)?;

    let mut teleports = Vec::with_capacity(spokes.len());
    for &spoke in spokes {
        // After each teleport the next share shifts into local slot 1.
        let out = teleport(&state, hub, spoke, 1, ledger)?;
        state = out.state.clone();
        teleports.push(out);
    }
    debug_assert_eq!(state.layout(), template);
    Ok(CatSynthesis { state, teleports })
}

/// A state assembled at one site and distributed by teleportation.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub state: PureState,
    pub teleports: Vec<TeleportOutcome>,
    /// Banked pairs spent; zero for fully product targets.
    pub epr_spent: u64,
}

/// Prepares `target` using only banked EPR pairs and classical messages: the
/// whole state is assembled at `site` and every remote qubit teleported out.
/// Fully product targets cost nothing. Remote parties must hold only qubits.
pub fn synthesize_from_eprs(
    target: &PureState,
    site: PartyId,
    ledger: &mut ResourceLedger,
) -> Result<Synthesis> {
    let layout = target.layout();
    let m = layout.party_count();
    layout.party(site)?;

    if fully_product(target)? {
        return Ok(Synthesis {
            state: target.clone(),
            teleports: Vec::new(),
            epr_spent: 0,
        });
    }
    for (i, p) in layout.parties().iter().enumerate() {
        if i != site.0 && p.dims.iter().any(|&d| d != 2) {
            return Err(Error::UnsupportedDimension(
                *p.dims.iter().find(|&&d| d != 2).unwrap(),
            ));
        }
    }

    // The site prepares the target locally; simulated as a relabeling.
    let site_own = layout.parties()[site.0].dims.len();
    let mut assembled = target.clone();
    for i in 0..m {
        if i == site.0 {
            continue;
        }
        for _ in 0..layout.parties()[i].dims.len() {
            assembled = assembled.move_qudit(PartyId(i), 0, site)?;
        }
    }

    let mut teleports = Vec::new();
    let mut spent = 0u64;
    let mut state = assembled;
    for i in 0..m {
        if i == site.0 {
            continue;
        }
        for _ in 0..layout.parties()[i].dims.len() {
            // Remote shares queue up right after the site's own qudits.
            let out = teleport(&state, site, PartyId(i), site_own, ledger)?;
            state = out.state.clone();
            teleports.push(out);
            spent += 1;
        }
    }
    debug_assert_eq!(state.layout(), layout);
    Ok(Synthesis {
        state,
        teleports,
        epr_spent: spent,
    })
}

/// True when every single-party reduction of `state` is pure, i.e. the state
/// carries no entanglement at all.
pub(crate) fn fully_product(state: &PureState) -> Result<bool> {
    let m = state.layout().party_count();
    if m < 2 {
        return Ok(true);
    }
    for p in state.layout().party_ids() {
        if state.layout().party_dim(p) == 1 {
            continue;
        }
        let rho = state.partial_trace(&[p])?;
        if rho.purity() < 1.0 - PURITY_TOL {
            return Ok(false);
        }
    }
    Ok(true)
}
