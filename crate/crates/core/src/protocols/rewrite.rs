//! Rewriting programs that consume pre-shared cat states into plain
//! protocols that first build those cats out of extra source copies.
//!
//! A cat-budget program runs on `k` cat states plus `n` copies of a source.
//! For an irreducible source the cats are not a free gift: each one can be
//! distilled from finitely many extra copies by pairwise distillation into
//! the hub followed by teleported redistribution. The rewrite reports the
//! extra-copy count `Δ`, which depends only on the source and `k`, never on
//! `n`, and verifies branch-by-branch that the rewritten run matches the
//! original.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::decomp::find_factorizable_cut;
use crate::error::{Error, Result};
use crate::generate::cat_on_layout;
use crate::locc::{run_program, HaltVerdict, LoccProgram, ResourceLedger};
use crate::qstate::{Party, PartyId, PureState, RegisterLayout};

use super::cat::eprs_to_cat;
use super::pair_epr::epr_between_pair;
use super::STRICT_FID_TOL;

/// A protocol together with the number of pre-shared cat states it expects.
///
/// The program acts on the combined register: each party holds its `k` cat
/// shares first, then its qudits from each of the `n` source copies.
#[derive(Debug, Clone)]
pub struct CatBudgetProgram {
    pub program: LoccProgram,
    pub cat_budget: u64,
}

/// Accounting and verification evidence for one rewrite.
#[derive(Debug, Clone, Serialize)]
pub struct RewriteReport {
    /// Source copies the program itself runs on.
    pub copies: u64,
    pub cat_budget: u64,
    /// Extra source copies consumed to synthesize the cats.
    pub extra_copies: u64,
    /// Whether cats were taken directly as source copies (cat-like source).
    pub used_cat_shortcut: bool,
    /// Worst fidelity of a synthesized cat to the ideal cat.
    pub cat_fidelity_min: f64,
    /// Worst fidelity between matching success branches of the original and
    /// rewritten runs.
    pub branch_fidelity_min: f64,
    pub original_success_probability: f64,
    pub rewritten_success_probability: f64,
    /// Probability that all cat syntheses succeed (the rewrite is contingent
    /// on the distillation stages winning their gambles).
    pub distillation_success_probability: f64,
    pub ledger: ResourceLedger,
}

/// The rewritten protocol: the same program, now fed synthesized cats, plus
/// the synthesis provenance.
#[derive(Debug, Clone)]
pub struct RewriteOutcome {
    pub program: LoccProgram,
    pub cat_states: Vec<PureState>,
    pub report: RewriteReport,
}

/// Combined register for `cats` cat states and `copies` source copies: each
/// party holds its cat shares first, then its qudits from each copy. Scripts
/// meant for [`loccq_to_locc_rewrite`] must be resolved against this layout.
pub fn rewrite_layout(source: &RegisterLayout, cats: usize, copies: usize) -> Result<RegisterLayout> {
    let parties = source
        .parties()
        .iter()
        .map(|p| {
            let mut dims = vec![2usize; cats];
            for _ in 0..copies {
                dims.extend(p.dims.iter().copied());
            }
            Party { name: p.name.clone(), dims }
        })
        .collect();
    RegisterLayout::new(parties)
}

/// Builds the combined input state: per party, cat shares in budget order,
/// then that party's share of each source copy.
fn build_combined(
    source: &PureState,
    cats: &[PureState],
    copies: usize,
) -> Result<PureState> {
    let layout = rewrite_layout(source.layout(), cats.len(), copies)?;
    let m = layout.party_count();
    let slot_dims = layout.slot_dims();
    let strides = crate::qstate::strides_of(&slot_dims);
    let src_dims: Vec<&[usize]> = source
        .layout()
        .parties()
        .iter()
        .map(|p| p.dims.as_slice())
        .collect();
    let offsets: Vec<usize> = (0..m).map(|i| layout.slot_offset(PartyId(i))).collect();
    let digit = |idx: usize, slot: usize| (idx / strides[slot]) % slot_dims[slot];

    let d = layout.total_dim();
    let mut amps = vec![num_complex::Complex64::ONE; d];
    for (idx, amp) in amps.iter_mut().enumerate() {
        for (j, cat) in cats.iter().enumerate() {
            let mut cat_idx = 0usize;
            for party in 0..m {
                cat_idx = cat_idx * 2 + digit(idx, offsets[party] + j);
            }
            *amp *= cat.amplitudes()[cat_idx];
            if *amp == num_complex::Complex64::ZERO {
                break;
            }
        }
        if *amp == num_complex::Complex64::ZERO {
            continue;
        }
        for t in 0..copies {
            let mut src_idx = 0usize;
            for party in 0..m {
                let base = offsets[party] + cats.len() + t * src_dims[party].len();
                for (s, &ds) in src_dims[party].iter().enumerate() {
                    src_idx = src_idx * ds + digit(idx, base + s);
                }
            }
            *amp *= source.amplitudes()[src_idx];
        }
    }
    PureState::new(layout, amps)
}

/// Rewrites a cat-budget program over an irreducible source into a plain
/// protocol run, synthesizing the cats from `Δ` extra source copies and
/// verifying the substitution branch by branch on `copies` input copies.
pub fn loccq_to_locc_rewrite(
    prog: &CatBudgetProgram,
    source: &PureState,
    copies: u64,
) -> Result<RewriteOutcome> {
    if copies == 0 {
        return Err(Error::Malformed("need at least one source copy".into()));
    }
    let layout = source.layout();
    let m = layout.party_count();
    if m < 2 {
        return Err(Error::InvalidSubset("need at least two parties".into()));
    }
    if let Some(cut) = find_factorizable_cut(source)? {
        return Err(Error::NotIrreducible(cut.label(layout)));
    }
    let k = prog.cat_budget as usize;
    let cat_template = RegisterLayout::from_pairs(
        layout
            .parties()
            .iter()
            .map(|p| (p.name.clone(), vec![2usize]))
            .collect(),
    )?;
    let ideal_cat = cat_on_layout(&cat_template)?;

    let mut ledger = ResourceLedger::new();
    let mut synth_cats: Vec<PureState> = Vec::with_capacity(k);
    let mut extra_copies = 0u64;
    let mut cat_fidelity_min = 1.0f64;
    let mut distillation_success = 1.0f64;

    let source_is_cat = layout.parties().iter().all(|p| p.dims == [2])
        && source.fidelity(&ideal_cat).unwrap_or(0.0) >= 1.0 - STRICT_FID_TOL;
    let used_cat_shortcut = k > 0 && source_is_cat;

    if used_cat_shortcut {
        // Each extra copy of a cat-like source is already a cat.
        let fid = source.fidelity(&ideal_cat)?;
        for _ in 0..k {
            synth_cats.push(source.clone());
            cat_fidelity_min = cat_fidelity_min.min(fid);
        }
        extra_copies = prog.cat_budget;
        ledger.copies_consumed += prog.cat_budget;
    } else {
        for _ in 0..k {
            // One EPR pair from the hub to every spoke, then redistribute.
            let hub = PartyId(0);
            let budget = (m as u64).saturating_sub(1).max(1);
            for spoke in 1..m {
                let staged = epr_between_pair(source, hub, PartyId(spoke), budget)?;
                extra_copies += staged.ledger.copies_consumed;
                distillation_success *= staged.success_probability;
                ledger.absorb(&staged.ledger);
            }
            let spokes: Vec<PartyId> = (1..m).map(PartyId).collect();
            let synth = eprs_to_cat(&cat_template, hub, &spokes, &mut ledger)?;
            let fid = synth.state.fidelity(&ideal_cat)?;
            cat_fidelity_min = cat_fidelity_min.min(fid);
            synth_cats.push(synth.state);
        }
    }
    ledger.cats_consumed += prog.cat_budget;
    ledger.copies_consumed += copies;

    let ideal_cats = vec![ideal_cat; k];
    let original_input = build_combined(source, &ideal_cats, copies as usize)?;
    let rewritten_input = build_combined(source, &synth_cats, copies as usize)?;
    let original_trace = run_program(&prog.program, &original_input)?;
    let rewritten_trace = run_program(&prog.program, &rewritten_input)?;

    let by_path: BTreeMap<String, &PureState> = rewritten_trace
        .branches
        .iter()
        .map(|b| (b.path.join("/"), &b.state))
        .collect();
    let mut branch_fidelity_min = 1.0f64;
    for branch in &original_trace.branches {
        if branch.verdict != HaltVerdict::Success {
            continue;
        }
        let fid = match by_path.get(&branch.path.join("/")) {
            Some(state) => branch.state.fidelity(state)?,
            None => 0.0,
        };
        branch_fidelity_min = branch_fidelity_min.min(fid);
    }

    ledger.cbits_sent += rewritten_trace.cbits_sent;
    ledger.set_yield(1, rewritten_trace.total_success_probability);
    let report = RewriteReport {
        copies,
        cat_budget: prog.cat_budget,
        extra_copies,
        used_cat_shortcut,
        cat_fidelity_min,
        branch_fidelity_min,
        original_success_probability: original_trace.total_success_probability,
        rewritten_success_probability: rewritten_trace.total_success_probability,
        distillation_success_probability: distillation_success,
        ledger,
    };
    Ok(RewriteOutcome {
        program: prog.program.clone(),
        cat_states: synth_cats,
        report,
    })
}
