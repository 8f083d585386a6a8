//! Distilling one maximally entangled pair between *some* pair of parties
//! from a single copy of any entangled multipartite state.
//!
//! Recursion on the set of still-active parties. A helper party that is
//! entangled with the rest either already shares a pure two-party factor
//! with the target (gamble directly), or the target is decoupled (drop it),
//! or the helper measures so that some outcome leaves the target entangled
//! and the recursion continues without the helper. All contingent branches
//! are compiled into one program up front, so the whole protocol runs on a
//! single copy.

use std::collections::BTreeMap;

use crate::decomp::{entropy_across_cut, eoa_zero_check, Cut, EoaAssessment};
use crate::error::{Error, Result};
use crate::locc::{run_program, BranchTarget, HaltVerdict, ProgramNode, ResourceLedger};
use crate::qstate::{PartyId, PureState};

use super::assist::helper_basis_search;
use super::gamble::build_gamble_nodes;
use super::{party_names_of, trace_first_success, DistillationOutcome, ProgramBuilder, ENTANGLEMENT_TOL};

fn build_some_epr(
    builder: &mut ProgramBuilder,
    state: &PureState,
    active: &[PartyId],
) -> Result<(usize, (PartyId, PartyId))> {
    let m_total = state.layout().party_count();
    if active.len() == 2 {
        let cut = Cut::new(m_total, &[active[0]])?;
        let (entry, _) = build_gamble_nodes(builder, state, cut)?;
        return Ok((entry, (active[0], active[1])));
    }
    // Helper: first active party entangled with everything else.
    let mut helper = None;
    for &p in active {
        let cut = Cut::new(m_total, &[p])?;
        if entropy_across_cut(state, cut)? > ENTANGLEMENT_TOL {
            helper = Some(p);
            break;
        }
    }
    let helper = helper.ok_or(Error::NotEntangled)?;
    let b = *active.iter().find(|&&p| p != helper).expect("at least two active");
    match eoa_zero_check(state, helper, b)? {
        EoaAssessment::ZeroCaseCPure => {
            // The helper and the target form a pure entangled factor; gamble
            // across the helper's cut lands the pair on (helper, b).
            let cut = Cut::new(m_total, &[helper])?;
            let (entry, _) = build_gamble_nodes(builder, state, cut)?;
            Ok((entry, (helper, b)))
        }
        EoaAssessment::ZeroCaseBPure => {
            // The target is in a pure product factor; retire it.
            let next: Vec<PartyId> = active.iter().copied().filter(|&p| p != b).collect();
            build_some_epr(builder, state, &next)
        }
        EoaAssessment::Nonzero => {
            let hm = helper_basis_search(state, helper, b)?;
            let next: Vec<PartyId> = active.iter().copied().filter(|&p| p != helper).collect();
            // The protocol commits to the pair reached by the first viable
            // outcome; other outcomes continue only if they reach the same
            // pair, otherwise they halt as failures.
            let mut chosen: Option<(PartyId, PartyId)> = None;
            let mut branches = BTreeMap::new();
            for outcome in &hm.outcomes {
                let target = if outcome.entangled {
                    let (sub_entry, sub_pair) =
                        build_some_epr(builder, &outcome.residual, &next)?;
                    match chosen {
                        None => {
                            chosen = Some(sub_pair);
                            BranchTarget::Node(sub_entry)
                        }
                        Some(p) if p == sub_pair => BranchTarget::Node(sub_entry),
                        Some(_) => BranchTarget::Halt(HaltVerdict::Failure),
                    }
                } else {
                    BranchTarget::Halt(HaltVerdict::Failure)
                };
                branches.insert(outcome.label.clone(), target);
            }
            let entry = builder.add(ProgramNode {
                instrument: hm.instrument.clone(),
                branches,
            });
            let chosen = chosen.expect("search guarantees a viable outcome");
            Ok((entry, chosen))
        }
    }
}

/// Distills one maximally entangled pair between some pair of parties from a
/// single copy. Which pair is decided by the protocol; the caller learns it
/// from the outcome.
pub fn gamble_some_epr(state: &PureState) -> Result<DistillationOutcome> {
    let m = state.layout().party_count();
    if m < 2 {
        return Err(Error::InvalidSubset(
            "distillation needs at least two parties".into(),
        ));
    }
    let active: Vec<PartyId> = state.layout().party_ids().collect();
    let mut builder = ProgramBuilder::new();
    let (entry, pair) = build_some_epr(&mut builder, state, &active)?;
    let program = builder.finish(entry);
    let trace = run_program(&program, state)?;
    let success_state = trace_first_success(&trace)?.state.clone();
    let mut ledger = ResourceLedger::new();
    ledger.copies_consumed = 1;
    ledger.cbits_sent = trace.cbits_sent;
    ledger.set_yield(1, trace.total_success_probability);
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{ghz_state, haar_state, paired_state, qubit_layout, w_state};
    use crate::protocols::epr_pair_fidelity;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ghz_yields_at_least_half() {
        let out = gamble_some_epr(&ghz_state(3).unwrap()).unwrap();
        // X-measuring one party leaves an EPR pair; the gamble on it wins
        // with probability 1/2 per branch.
        assert!(out.success_probability >= 0.5 - 1e-9);
        assert_eq!(out.ledger.copies_consumed, 1);
        for b in out.trace.success_branches() {
            assert!(epr_pair_fidelity(&b.state, out.pair).unwrap() > 1.0 - 1e-9);
        }
    }

    #[test]
    fn bipartite_input_reduces_to_the_plain_gamble() {
        let out = gamble_some_epr(&paired_state(&[0.8, 0.6]).unwrap()).unwrap();
        assert_abs_diff_eq!(out.success_probability, 0.4608, epsilon = 1e-10);
        assert_eq!(out.pair, (PartyId(0), PartyId(1)));
    }

    #[test]
    fn w_state_distills_some_pair() {
        let out = gamble_some_epr(&w_state(3).unwrap()).unwrap();
        assert!(out.success_probability > 0.0);
        for b in out.trace.success_branches() {
            assert!(epr_pair_fidelity(&b.state, out.pair).unwrap() > 1.0 - 1e-9);
        }
    }

    #[test]
    fn product_states_are_rejected() {
        let layout = qubit_layout(3).unwrap();
        let s = PureState::computational(layout, 0).unwrap();
        assert!(matches!(gamble_some_epr(&s), Err(Error::NotEntangled)));
    }

    #[test]
    fn entangled_with_spectator_still_works() {
        // Bell pair on (A,B) with C decoupled: the BPure branch retires C.
        let r = num_complex::Complex64::from(0.5f64.sqrt());
        let bell = PureState::new(
            qubit_layout(2).unwrap(),
            vec![r, num_complex::Complex64::ZERO, num_complex::Complex64::ZERO, r],
        )
        .unwrap();
        let single =
            crate::qstate::RegisterLayout::from_pairs(vec![("C", vec![2])]).unwrap();
        let s = bell
            .tensor(&PureState::computational(single, 0).unwrap())
            .unwrap();
        let out = gamble_some_epr(&s).unwrap();
        assert_eq!(out.pair, (PartyId(0), PartyId(1)));
        assert_abs_diff_eq!(out.success_probability, 0.5, epsilon = 1e-9);
    }

    #[test]
    fn random_states_always_end_with_true_pairs_on_success() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for m in [3usize, 4] {
            let layout = qubit_layout(m).unwrap();
            for _ in 0..3 {
                let s = haar_state(&layout, &mut rng);
                let out = gamble_some_epr(&s).unwrap();
                assert!(out.success_probability > 0.0);
                for b in out.trace.success_branches() {
                    assert!(
                        epr_pair_fidelity(&b.state, out.pair).unwrap() > 1.0 - 1e-6,
                        "success branch does not hold an EPR pair"
                    );
                }
            }
        }
    }
}
