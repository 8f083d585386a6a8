//! Qubit teleportation as an explicit program: Bell measurement at the
//! sender, two classical symbols, Pauli correction at the receiver.
//!
//! The moved qubit ends up appended to the receiver's qudit list. Every
//! branch of the enumerated program is checked against the pure relabeling
//! of the input, so a sign error in the corrections cannot slip through.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::locc::{
    run_program, BranchTarget, HaltVerdict, InstrumentElement, LocalInstrument, ProgramNode,
    ProtocolTrace, ResourceLedger,
};
use crate::qstate::{embed_on_slots, PartyId, PureState, RegisterLayout};

/// A completed teleport: the relocated state and the evidence.
#[derive(Debug, Clone)]
pub struct TeleportOutcome {
    /// State with the qubit moved to the receiver (appended to its dims).
    pub state: PureState,
    pub trace: ProtocolTrace,
    /// Smallest fidelity of any branch's corrected state to the relabeled
    /// input; ideally one up to rounding.
    pub min_branch_fidelity: f64,
}

fn unique_name(layout: &RegisterLayout, base: &str) -> String {
    let mut name = base.to_string();
    while layout.index_of(&name).is_some() {
        name.push('~');
    }
    name
}

fn drop_empty_party(state: &PureState, name: &str) -> Result<PureState> {
    let id = state
        .layout()
        .index_of(name)
        .ok_or_else(|| Error::InvalidSubset(format!("no party named {name}")))?;
    if !state.layout().parties()[id.0].dims.is_empty() {
        return Err(Error::InvalidSubset(format!("party {name} still holds qudits")));
    }
    let parties = state
        .layout()
        .parties()
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != id.0)
        .map(|(_, p)| p.clone())
        .collect();
    PureState::new(RegisterLayout::new(parties)?, state.amplitudes().to_vec())
}

/// Appends one half of a fresh EPR pair to the sender and one to the
/// receiver.
fn attach_epr(state: &PureState, sender: PartyId, receiver: PartyId) -> Result<PureState> {
    let tmp_s = unique_name(state.layout(), "~wire_s");
    let tmp_r = unique_name(state.layout(), "~wire_r");
    let epr_layout =
        RegisterLayout::from_pairs(vec![(tmp_s.clone(), vec![2]), (tmp_r.clone(), vec![2])])?;
    let r = Complex64::from(0.5f64.sqrt());
    let epr = PureState::new(
        epr_layout,
        vec![r, Complex64::ZERO, Complex64::ZERO, r],
    )?;
    let ext = state.tensor(&epr)?;
    let ts = ext.layout().index_of(&tmp_s).unwrap();
    let ext = ext.move_qudit(ts, 0, sender)?;
    let tr = ext.layout().index_of(&tmp_r).unwrap();
    let ext = ext.move_qudit(tr, 0, receiver)?;
    let ext = drop_empty_party(&ext, &tmp_s)?;
    drop_empty_party(&ext, &tmp_r)
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn pauli(z_power: usize, x_power: usize) -> DMatrix<Complex64> {
    let x = DMatrix::from_row_slice(2, 2, &[c(0.), c(1.), c(1.), c(0.)]);
    let z = DMatrix::from_row_slice(2, 2, &[c(1.), c(0.), c(0.), c(-1.)]);
    let mut m = DMatrix::from_diagonal_element(2, 2, Complex64::ONE);
    if x_power % 2 == 1 {
        m = x * m;
    }
    if z_power % 2 == 1 {
        m = z * m;
    }
    m
}

fn qubit_projector(digit: usize) -> DMatrix<Complex64> {
    let mut m = DMatrix::zeros(2, 2);
    m[(digit, digit)] = Complex64::ONE;
    m
}

/// Teleports qudit `qudit` of `sender` (which must be a qubit) to
/// `receiver`, spending one banked EPR pair between them and two classical
/// bits.
pub fn teleport(
    state: &PureState,
    sender: PartyId,
    receiver: PartyId,
    qudit: usize,
    ledger: &mut ResourceLedger,
) -> Result<TeleportOutcome> {
    let layout = state.layout();
    let sender_party = layout.party(sender)?.clone();
    let receiver_party = layout.party(receiver)?.clone();
    if sender == receiver {
        return Err(Error::InvalidSubset(
            "sender and receiver must differ".into(),
        ));
    }
    let d = *sender_party.dims.get(qudit).ok_or_else(|| {
        Error::InvalidSubset(format!(
            "party {} has no qudit {qudit}",
            sender_party.name
        ))
    })?;
    if d != 2 {
        return Err(Error::UnsupportedDimension(d));
    }
    if ledger
        .epr_available
        .get(&if sender_party.name <= receiver_party.name {
            (sender_party.name.clone(), receiver_party.name.clone())
        } else {
            (receiver_party.name.clone(), sender_party.name.clone())
        })
        .copied()
        .unwrap_or(0)
        == 0
    {
        return Err(Error::NoEprAvailable(
            sender_party.name.clone(),
            receiver_party.name.clone(),
        ));
    }

    let ext = attach_epr(state, sender, receiver)?;
    let s_dims = &ext.layout().parties()[sender.0].dims;
    let q_slot = qudit;
    let es_slot = s_dims.len() - 1;
    let er_slot = ext.layout().parties()[receiver.0].dims.len() - 1;

    // Bell-basis rotation: entangle the payload with the sender's half, then
    // rotate the payload into the X basis.
    let cnot = DMatrix::from_row_slice(
        4,
        4,
        &[
            c(1.), c(0.), c(0.), c(0.),
            c(0.), c(1.), c(0.), c(0.),
            c(0.), c(0.), c(0.), c(1.),
            c(0.), c(0.), c(1.), c(0.),
        ],
    );
    let h = DMatrix::from_row_slice(2, 2, &[c(1.), c(1.), c(1.), c(-1.)])
        * Complex64::from(0.5f64.sqrt());
    let rotate = embed_on_slots(s_dims, &[q_slot], &h)?
        * embed_on_slots(s_dims, &[q_slot, es_slot], &cnot)?;

    let mut builder = super::ProgramBuilder::new();
    let mut es_nodes = [0usize; 2];
    let r_dims = &ext.layout().parties()[receiver.0].dims;
    for a in 0..2usize {
        let mut branches = BTreeMap::new();
        for b_out in 0..2 {
            let target = if a == 0 && b_out == 0 {
                BranchTarget::Halt(HaltVerdict::Success)
            } else {
                let fix = builder.add(ProgramNode {
                    instrument: LocalInstrument::new(
                        receiver,
                        vec![InstrumentElement {
                            label: "fix".into(),
                            matrix: embed_on_slots(r_dims, &[er_slot], &pauli(a, b_out))?,
                        }],
                    ),
                    branches: BTreeMap::from([(
                        "fix".to_string(),
                        BranchTarget::Halt(HaltVerdict::Success),
                    )]),
                });
                BranchTarget::Node(fix)
            };
            branches.insert(b_out.to_string(), target);
        }
        es_nodes[a] = builder.add(ProgramNode {
            instrument: LocalInstrument::new(
                sender,
                vec![
                    InstrumentElement {
                        label: "0".into(),
                        matrix: embed_on_slots(s_dims, &[es_slot], &qubit_projector(0))?,
                    },
                    InstrumentElement {
                        label: "1".into(),
                        matrix: embed_on_slots(s_dims, &[es_slot], &qubit_projector(1))?,
                    },
                ],
            ),
            branches,
        });
    }
    let meas_q = builder.add(ProgramNode {
        instrument: LocalInstrument::new(
            sender,
            vec![
                InstrumentElement {
                    label: "0".into(),
                    matrix: embed_on_slots(s_dims, &[q_slot], &qubit_projector(0))?,
                },
                InstrumentElement {
                    label: "1".into(),
                    matrix: embed_on_slots(s_dims, &[q_slot], &qubit_projector(1))?,
                },
            ],
        ),
        branches: BTreeMap::from([
            ("0".to_string(), BranchTarget::Node(es_nodes[0])),
            ("1".to_string(), BranchTarget::Node(es_nodes[1])),
        ]),
    });
    let entry = builder.add(ProgramNode {
        instrument: LocalInstrument::new(
            sender,
            vec![InstrumentElement { label: "u".into(), matrix: rotate }],
        ),
        branches: BTreeMap::from([("u".to_string(), BranchTarget::Node(meas_q))]),
    });
    let program = builder.finish(entry);
    let trace = run_program(&program, &ext)?;

    let expected = state.move_qudit(sender, qudit, receiver)?;
    let mut min_fid = 1.0f64;
    let mut final_state: Option<PureState> = None;
    for branch in &trace.branches {
        debug_assert_eq!(branch.verdict, HaltVerdict::Success);
        let a: usize = branch.path[1].parse().expect("outcome label");
        let b: usize = branch.path[2].parse().expect("outcome label");
        let reduced = branch
            .state
            .collapse_slot(sender, q_slot, a)?
            .collapse_slot(sender, es_slot - 1, b)?;
        let fid = reduced.fidelity(&expected)?;
        min_fid = min_fid.min(fid);
        if final_state.is_none() {
            final_state = Some(reduced);
        }
    }
    let state_out = final_state.ok_or(Error::NotEntangled)?;

    ledger
        .consume_epr(&sender_party.name, &receiver_party.name)
        .expect("availability checked above");
    ledger.cbits_sent += 2;
    Ok(TeleportOutcome {
        state: state_out,
        trace,
        min_branch_fidelity: min_fid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{haar_state, qubit_layout};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn teleport_moves_a_random_qubit_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let layout = qubit_layout(3).unwrap();
        let s = haar_state(&layout, &mut rng);
        let mut ledger = ResourceLedger::new();
        ledger.register_epr("A", "C", 1);
        let out = teleport(&s, PartyId(0), PartyId(2), 0, &mut ledger).unwrap();
        assert!(out.min_branch_fidelity > 1.0 - 1e-9);
        assert_eq!(out.trace.branches.len(), 4);
        for b in &out.trace.branches {
            assert_abs_diff_eq!(b.probability, 0.25, epsilon = 1e-9);
        }
        assert_eq!(out.trace.cbits_sent, 2);
        assert_eq!(ledger.cbits_sent, 2);
        assert_eq!(ledger.epr_consumed_total(), 1);
        assert_eq!(ledger.epr_available_total(), 0);
        // Layout: A lost its qubit, C gained one at the end.
        assert!(out.state.layout().parties()[0].dims.is_empty());
        assert_eq!(out.state.layout().parties()[2].dims, vec![2, 2]);
    }

    #[test]
    fn teleport_without_banked_pair_fails() {
        let layout = qubit_layout(2).unwrap();
        let s = PureState::computational(layout, 0).unwrap();
        let mut ledger = ResourceLedger::new();
        assert!(matches!(
            teleport(&s, PartyId(0), PartyId(1), 0, &mut ledger),
            Err(Error::NoEprAvailable(_, _))
        ));
    }

    #[test]
    fn non_qubit_payloads_are_rejected() {
        let layout =
            RegisterLayout::from_pairs(vec![("A", vec![3]), ("B", vec![2])]).unwrap();
        let s = PureState::computational(layout, 0).unwrap();
        let mut ledger = ResourceLedger::new();
        ledger.register_epr("A", "B", 1);
        assert!(matches!(
            teleport(&s, PartyId(0), PartyId(1), 0, &mut ledger),
            Err(Error::UnsupportedDimension(3))
        ));
    }

    #[test]
    fn entanglement_survives_teleportation() {
        // Teleport one half of a Bell pair to a third party; the pair should
        // now connect A and C.
        let mut ledger = ResourceLedger::new();
        ledger.register_epr("B", "C", 1);
        let r = Complex64::from(0.5f64.sqrt());
        let bell = PureState::new(
            qubit_layout(2).unwrap(),
            vec![r, Complex64::ZERO, Complex64::ZERO, r],
        )
        .unwrap();
        let empty =
            RegisterLayout::from_pairs(vec![("C", Vec::<usize>::new())]).unwrap();
        let s = bell
            .tensor(&PureState::computational(empty, 0).unwrap())
            .unwrap();
        let out = teleport(&s, PartyId(1), PartyId(2), 0, &mut ledger).unwrap();
        assert!(out.min_branch_fidelity > 1.0 - 1e-9);
        let fid = crate::protocols::epr_pair_fidelity(&out.state, (PartyId(0), PartyId(2)))
            .unwrap();
        assert!(fid > 1.0 - 1e-9);
    }
}
