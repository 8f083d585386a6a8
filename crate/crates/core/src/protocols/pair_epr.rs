//! Distilling a maximally entangled pair between two *chosen* parties of an
//! irreducible state, by repeated single-copy distillation and merging.
//!
//! Each stage draws a fresh source copy (with all previous merges applied to
//! its register), distills a pair between some two locales, and either stops
//! when that pair connects the requested parties' locales or merges the two
//! locales into one and tries again. Merging is bookkept as EPR consumption:
//! the ledger is charged the qubit-equivalents needed to co-locate the
//! merged share.

use crate::decomp::find_factorizable_cut;
use crate::error::{Error, Result};
use crate::locc::{merge_parties, ResourceLedger};
use crate::qstate::{PartyId, PureState};

use super::some_epr::gamble_some_epr;
use super::DistillationOutcome;

/// A multi-stage distillation ending with a pair between the requested
/// parties' (possibly merged) locales.
#[derive(Debug, Clone)]
pub struct StagedDistillation {
    /// Per-stage single-copy outcomes, in order.
    pub stages: Vec<DistillationOutcome>,
    /// Locales holding the final pair, in the final merged layout.
    pub pair: (PartyId, PartyId),
    /// The originally requested party names.
    pub pair_names: (String, String),
    /// Product of the stage success probabilities.
    pub success_probability: f64,
    /// Full register state of the final stage's first success branch.
    pub success_state: PureState,
    pub ledger: ResourceLedger,
}

/// Distills an EPR pair between `p1` and `p2`, consuming at most
/// `max_copies` source copies. The source must be irreducible.
pub fn epr_between_pair(
    source: &PureState,
    p1: PartyId,
    p2: PartyId,
    max_copies: u64,
) -> Result<StagedDistillation> {
    let layout = source.layout();
    let m = layout.party_count();
    layout.party(p1)?;
    layout.party(p2)?;
    if p1 == p2 {
        return Err(Error::InvalidSubset("requested parties must differ".into()));
    }
    if m < 2 {
        return Err(Error::InvalidSubset("need at least two parties".into()));
    }
    if let Some(cut) = find_factorizable_cut(source)? {
        return Err(Error::NotIrreducible(cut.label(layout)));
    }
    let pair_names = (
        layout.parties()[p1.0].name.clone(),
        layout.parties()[p2.0].name.clone(),
    );
    // cur[i] = current locale index of original party i.
    let mut cur: Vec<usize> = (0..m).collect();
    let mut template = source.clone();
    let mut stages: Vec<DistillationOutcome> = Vec::new();
    let mut ledger = ResourceLedger::new();
    let mut probability = 1.0f64;
    loop {
        if stages.len() as u64 >= max_copies {
            return Err(Error::CopyBudgetExceeded {
                needed: stages.len() as u64 + 1,
                allowed: max_copies,
            });
        }
        let out = gamble_some_epr(&template)?;
        probability *= out.success_probability;
        ledger.copies_consumed += 1;
        ledger.cbits_sent += out.trace.cbits_sent;
        let (qa, qb) = out.pair;
        let want = (cur[p1.0], cur[p2.0]);
        if (qa.0, qb.0) == want || (qb.0, qa.0) == want {
            ledger.register_epr(&pair_names.0, &pair_names.1, 1);
            ledger.set_yield(1, probability);
            let success_state = out.success_state.clone();
            let pair = (PartyId(cur[p1.0]), PartyId(cur[p2.0]));
            stages.push(out);
            return Ok(StagedDistillation {
                stages,
                pair,
                pair_names,
                success_probability: probability,
                success_state,
                ledger,
            });
        }
        // Not the requested pair: co-locate the two locales and try again on
        // a fresh copy laid out with the accumulated merges.
        template = merge_parties(&template, qa, qb, &mut ledger)?;
        let composite = if qa.0 < qb.0 { qa.0 } else { qa.0 - 1 };
        for locale in cur.iter_mut() {
            let old = *locale;
            *locale = if old == qa.0 || old == qb.0 {
                composite
            } else if old > qb.0 {
                old - 1
            } else {
                old
            };
        }
        stages.push(out);
    }
}
