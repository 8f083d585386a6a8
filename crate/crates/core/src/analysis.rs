//! Statistical yield estimation and property audits over protocol runs.
//!
//! The audits turn two structural facts about local protocols into checkable
//! finite-size assertions: the expected entanglement entropy across any cut
//! never increases under a local instrument, and a state that factorizes
//! across a cut stays factorized across that cut on every branch.

use serde::Serialize;

use crate::decomp::{entropy_across_cut, enumerate_cuts, is_factorizable, Cut};
use crate::error::{Error, Result};
use crate::locc::{
    run_program, sample_program, validate_program, BranchTarget, LoccProgram,
    DEFAULT_BRANCH_GUARD, OUTCOME_DROP_TOL,
};
use crate::qstate::PureState;

/// Slack for the per-step expected-entropy and residual-entropy assertions.
pub const AUDIT_TOL: f64 = 1e-7;

/// Fewest Monte Carlo trials for which the normal interval is reported.
pub const MIN_TRIALS: u64 = 100;

/// Success-probability estimate with a 95% normal-approximation interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YieldEstimate {
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub trials: u64,
    pub seed: u64,
}

/// Estimates a program's success probability by seeded sampling.
pub fn monte_carlo_yield(
    prog: &LoccProgram,
    state: &PureState,
    trials: u64,
    seed: u64,
) -> Result<YieldEstimate> {
    if trials < MIN_TRIALS {
        return Err(Error::TooFewTrials {
            got: trials,
            min: MIN_TRIALS,
        });
    }
    let report = sample_program(prog, state, seed, trials)?;
    let p = report.success_rate;
    let half = 1.96 * (p * (1.0 - p) / trials as f64).sqrt();
    Ok(YieldEstimate {
        point: p,
        ci_low: (p - half).clamp(0.0, 1.0),
        ci_high: (p + half).clamp(0.0, 1.0),
        trials,
        seed,
    })
}

/// One audited check: a step (or final branch) examined across one cut.
#[derive(Debug, Clone, Serialize)]
pub struct AuditRow {
    /// Outcome labels leading to the checked point.
    pub path: Vec<String>,
    /// Label of the examined cut.
    pub cut: String,
    /// Acting party for step checks; absent for final-branch checks.
    pub party: Option<String>,
    pub pre_entropy: f64,
    /// Expected post-step entropy, or the branch's final entropy.
    pub post_entropy: f64,
    pub violation: f64,
}

/// Full audit table; `pass` iff no violation exceeds the tolerance.
#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub tolerance: f64,
    pub rows: Vec<AuditRow>,
    pub max_violation: f64,
    pub pass: bool,
}

impl AuditReport {
    fn from_rows(rows: Vec<AuditRow>, tolerance: f64) -> Self {
        let max_violation = rows.iter().map(|r| r.violation).fold(0.0, f64::max);
        AuditReport {
            tolerance,
            rows,
            max_violation,
            pass: max_violation <= tolerance,
        }
    }
}

/// Checks that every instrument application leaves the expected entanglement
/// entropy non-increasing across every canonical cut, along every enumerated
/// path of the program.
pub fn monotone_audit(prog: &LoccProgram, state: &PureState) -> Result<AuditReport> {
    validate_program(state.layout(), prog)?;
    let cuts = enumerate_cuts(state.layout().party_count());
    let mut rows = Vec::new();
    if prog.is_empty() || cuts.is_empty() {
        return Ok(AuditReport::from_rows(rows, AUDIT_TOL));
    }
    let mut applications: u64 = 0;
    let mut stack: Vec<(usize, PureState, Vec<String>)> = vec![(0, state.clone(), Vec::new())];
    while let Some((node_idx, cur, path)) = stack.pop() {
        applications += 1;
        if applications > DEFAULT_BRANCH_GUARD {
            return Err(Error::BranchExplosion {
                branches: applications,
                guard: DEFAULT_BRANCH_GUARD,
            });
        }
        let node = &prog.nodes[node_idx];
        let party_name = state.layout().parties()[node.instrument.at.0].name.clone();
        // Outcomes of this instrument, with conditional weights.
        let mut posts = Vec::with_capacity(node.instrument.elements.len());
        for e in &node.instrument.elements {
            let (post, w) = cur.apply_local(node.instrument.at, &e.matrix)?;
            if w <= OUTCOME_DROP_TOL {
                continue;
            }
            posts.push((e.label.clone(), post, w));
        }
        for cut in &cuts {
            let pre = entropy_across_cut(&cur, *cut)?;
            let mut expected = 0.0;
            for (_, post, w) in &posts {
                expected += w * entropy_across_cut(post, *cut)?;
            }
            rows.push(AuditRow {
                path: path.clone(),
                cut: cut.label(state.layout()),
                party: Some(party_name.clone()),
                pre_entropy: pre,
                post_entropy: expected,
                violation: (expected - pre).max(0.0),
            });
        }
        for (label, post, _) in posts {
            if let BranchTarget::Node(n) = node.branches[&label] {
                let mut next_path = path.clone();
                next_path.push(label);
                stack.push((n, post, next_path));
            }
        }
    }
    Ok(AuditReport::from_rows(rows, AUDIT_TOL))
}

/// Checks that a state factorizable across `cut` stays unentangled across it
/// on every final branch of the program.
pub fn factorizability_audit(
    prog: &LoccProgram,
    state: &PureState,
    cut: &Cut,
) -> Result<AuditReport> {
    if !is_factorizable(state, *cut)? {
        return Err(Error::NotFactorizable(cut.label(state.layout())));
    }
    let pre = entropy_across_cut(state, *cut)?;
    let trace = run_program(prog, state)?;
    let rows = trace
        .branches
        .iter()
        .map(|branch| {
            let post = entropy_across_cut(&branch.state, *cut)?;
            Ok(AuditRow {
                path: branch.path.clone(),
                cut: cut.label(state.layout()),
                party: None,
                pre_entropy: pre,
                post_entropy: post,
                violation: post.max(0.0),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AuditReport::from_rows(rows, AUDIT_TOL))
}
