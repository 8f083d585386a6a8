//! Local instruments, classically-coordinated programs, and executors.
//!
//! A program is a finite acyclic graph of nodes; each node applies one
//! party-local instrument and routes every outcome label either to another
//! node or to a halt verdict. Execution either enumerates all branches
//! exactly or samples trajectories with a counter-based generator so results
//! are reproducible and order-independent under parallelism.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::qstate::{PartyId, PureState, RegisterLayout};

/// Instrument elements must satisfy `Σ K†K = I` to within this deviation.
pub const COMPLETENESS_TOL: f64 = 1e-9;
/// Outcomes with conditional probability at or below this are dropped and
/// reported as lost mass instead of being followed.
pub const OUTCOME_DROP_TOL: f64 = 1e-12;
/// Exact enumeration refuses to follow more than this many branches.
pub const DEFAULT_BRANCH_GUARD: u64 = 1 << 16;

/// One Kraus operator of an instrument, with its classical outcome label.
#[derive(Debug, Clone)]
pub struct InstrumentElement {
    pub label: String,
    pub matrix: DMatrix<Complex64>,
}

/// A measurement (or unitary, as the one-element case) on a single party.
#[derive(Debug, Clone)]
pub struct LocalInstrument {
    pub at: PartyId,
    pub elements: Vec<InstrumentElement>,
}

impl LocalInstrument {
    pub fn new(at: PartyId, elements: Vec<InstrumentElement>) -> Self {
        LocalInstrument { at, elements }
    }

    /// Largest entrywise deviation of `Σ K†K` from the identity.
    pub fn completeness_deviation(&self) -> f64 {
        let d = match self.elements.first() {
            Some(e) => e.matrix.nrows(),
            None => return f64::INFINITY,
        };
        let mut acc: DMatrix<Complex64> = DMatrix::zeros(d, d);
        for e in &self.elements {
            acc += e.matrix.adjoint() * &e.matrix;
        }
        let mut dev = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                let expect = if i == j { Complex64::ONE } else { Complex64::ZERO };
                dev = dev.max((acc[(i, j)] - expect).norm());
            }
        }
        dev
    }
}

/// Validates shapes, label uniqueness, and completeness against a layout.
pub fn validate_instrument(layout: &RegisterLayout, inst: &LocalInstrument) -> Result<()> {
    let party = layout.party(inst.at)?;
    let d = layout.party_dim(inst.at);
    if inst.elements.is_empty() {
        return Err(Error::InvalidProgram(format!(
            "instrument at {} has no elements",
            party.name
        )));
    }
    for e in &inst.elements {
        if e.label.is_empty() {
            return Err(Error::InvalidProgram(format!(
                "instrument at {} has an empty outcome label",
                party.name
            )));
        }
        if e.matrix.nrows() != d || e.matrix.ncols() != d {
            return Err(Error::LayoutMismatch(format!(
                "element {} at {} is {}x{}, expected {d}x{d}",
                e.label,
                party.name,
                e.matrix.nrows(),
                e.matrix.ncols()
            )));
        }
    }
    for i in 1..inst.elements.len() {
        if inst.elements[..i]
            .iter()
            .any(|e| e.label == inst.elements[i].label)
        {
            return Err(Error::InvalidProgram(format!(
                "duplicate outcome label {} at {}",
                inst.elements[i].label, party.name
            )));
        }
    }
    let dev = inst.completeness_deviation();
    if dev > COMPLETENESS_TOL {
        return Err(Error::IncompleteInstrument {
            party: party.name.clone(),
            deviation: dev,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum HaltVerdict {
    Success,
    Failure,
}

/// Where an outcome label routes control.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchTarget {
    Node(usize),
    Halt(HaltVerdict),
}

#[derive(Debug, Clone)]
pub struct ProgramNode {
    pub instrument: LocalInstrument,
    pub branches: BTreeMap<String, BranchTarget>,
}

/// A finite acyclic protocol. Node 0 is the entry; the empty program is the
/// trivial protocol that succeeds without touching the state.
#[derive(Debug, Clone, Default)]
pub struct LoccProgram {
    pub nodes: Vec<ProgramNode>,
}

impl LoccProgram {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Structural validation: instruments well formed, outcome labels and branch
/// keys in exact bijection, targets in range, graph acyclic.
pub fn validate_program(layout: &RegisterLayout, prog: &LoccProgram) -> Result<()> {
    for (idx, node) in prog.nodes.iter().enumerate() {
        validate_instrument(layout, &node.instrument)?;
        for e in &node.instrument.elements {
            if !node.branches.contains_key(&e.label) {
                return Err(Error::InvalidProgram(format!(
                    "node {idx}: outcome {} has no branch",
                    e.label
                )));
            }
        }
        for (label, target) in &node.branches {
            if !node.instrument.elements.iter().any(|e| &e.label == label) {
                return Err(Error::InvalidProgram(format!(
                    "node {idx}: branch {label} matches no outcome"
                )));
            }
            if let BranchTarget::Node(n) = target {
                if *n >= prog.nodes.len() {
                    return Err(Error::InvalidProgram(format!(
                        "node {idx}: branch {label} targets missing node {n}"
                    )));
                }
            }
        }
    }
    // Three-color depth-first search over every node catches cycles even in
    // parts unreachable from the entry.
    let n = prog.nodes.len();
    let mut color = vec![0u8; n];
    for start in 0..n {
        if color[start] != 0 {
            continue;
        }
        let mut stack = vec![(start, 0usize)];
        color[start] = 1;
        while let Some(&mut (node, ref mut edge)) = stack.last_mut() {
            let targets: Vec<usize> = prog.nodes[node]
                .branches
                .values()
                .filter_map(|t| match t {
                    BranchTarget::Node(x) => Some(*x),
                    BranchTarget::Halt(_) => None,
                })
                .collect();
            if *edge < targets.len() {
                let next = targets[*edge];
                *edge += 1;
                match color[next] {
                    0 => {
                        color[next] = 1;
                        stack.push((next, 0));
                    }
                    1 => {
                        return Err(Error::InvalidProgram(format!(
                            "cycle through node {next}"
                        )));
                    }
                    _ => {}
                }
            } else {
                color[node] = 2;
                stack.pop();
            }
        }
    }
    Ok(())
}

/// One fully-resolved execution branch of a program.
#[derive(Debug, Clone)]
pub struct BranchRecord {
    pub path: Vec<String>,
    pub probability: f64,
    pub state: PureState,
    pub verdict: HaltVerdict,
    /// Classical symbols broadcast along this branch; single-element
    /// instruments are deterministic and broadcast nothing.
    pub symbols_sent: u64,
}

/// Exhaustive enumeration of a program's execution tree.
#[derive(Debug, Clone)]
pub struct ProtocolTrace {
    pub branches: Vec<BranchRecord>,
    pub total_success_probability: f64,
    pub dropped_probability: f64,
    /// Worst-case classical communication over all branches.
    pub cbits_sent: u64,
}

impl ProtocolTrace {
    pub fn success_branches(&self) -> impl Iterator<Item = &BranchRecord> {
        self.branches
            .iter()
            .filter(|b| b.verdict == HaltVerdict::Success)
    }
}

/// Enumerates every branch of `prog` on `state` exactly.
pub fn run_program(prog: &LoccProgram, state: &PureState) -> Result<ProtocolTrace> {
    validate_program(state.layout(), prog)?;
    if prog.is_empty() {
        return Ok(ProtocolTrace {
            branches: vec![BranchRecord {
                path: Vec::new(),
                probability: 1.0,
                state: state.clone(),
                verdict: HaltVerdict::Success,
                symbols_sent: 0,
            }],
            total_success_probability: 1.0,
            dropped_probability: 0.0,
            cbits_sent: 0,
        });
    }
    let guard = DEFAULT_BRANCH_GUARD;
    let mut branches = Vec::new();
    let mut dropped = 0.0f64;
    let mut applications: u64 = 0;
    let mut stack: Vec<(usize, PureState, f64, Vec<String>, u64)> =
        vec![(0, state.clone(), 1.0, Vec::new(), 0)];
    while let Some((node_idx, cur, prob, path, symbols)) = stack.pop() {
        applications += 1;
        if applications > guard || branches.len() as u64 > guard {
            return Err(Error::BranchExplosion {
                branches: applications.max(branches.len() as u64),
                guard,
            });
        }
        let node = &prog.nodes[node_idx];
        let informative = node.instrument.elements.len() >= 2;
        let symbols = symbols + u64::from(informative);
        for e in &node.instrument.elements {
            let (post, w) = cur.apply_local(node.instrument.at, &e.matrix)?;
            let p = prob * w;
            if w <= OUTCOME_DROP_TOL {
                dropped += p;
                continue;
            }
            let mut next_path = path.clone();
            next_path.push(e.label.clone());
            match node.branches[&e.label] {
                BranchTarget::Halt(verdict) => branches.push(BranchRecord {
                    path: next_path,
                    probability: p,
                    state: post,
                    verdict,
                    symbols_sent: symbols,
                }),
                BranchTarget::Node(n) => stack.push((n, post, p, next_path, symbols)),
            }
        }
    }
    let total_success_probability = branches
        .iter()
        .filter(|b| b.verdict == HaltVerdict::Success)
        .map(|b| b.probability)
        .sum();
    let cbits_sent = branches.iter().map(|b| b.symbols_sent).max().unwrap_or(0);
    Ok(ProtocolTrace {
        branches,
        total_success_probability,
        dropped_probability: dropped,
        cbits_sent,
    })
}

/// Histogram summary of sampled trajectories.
#[derive(Debug, Clone, Serialize)]
pub struct SampleReport {
    pub trials: u64,
    pub seed: u64,
    pub successes: u64,
    pub success_rate: f64,
    /// Counts keyed by the `/`-joined outcome path.
    pub histogram: BTreeMap<String, u64>,
}

/// Samples `trials` independent trajectories. Each trial uses its own
/// counter-indexed stream of one seeded generator, so the result does not
/// depend on thread scheduling.
pub fn sample_program(
    prog: &LoccProgram,
    state: &PureState,
    seed: u64,
    trials: u64,
) -> Result<SampleReport> {
    validate_program(state.layout(), prog)?;
    if trials == 0 {
        return Err(Error::TooFewTrials { got: 0, min: 1 });
    }
    if prog.is_empty() {
        let mut histogram = BTreeMap::new();
        histogram.insert(String::new(), trials);
        return Ok(SampleReport {
            trials,
            seed,
            successes: trials,
            success_rate: 1.0,
            histogram,
        });
    }
    let (successes, histogram) = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial);
            walk_once(prog, state, &mut rng)
        })
        .fold(
            || (0u64, BTreeMap::<String, u64>::new()),
            |(mut succ, mut hist), (ok, path)| {
                succ += u64::from(ok);
                *hist.entry(path).or_insert(0) += 1;
                (succ, hist)
            },
        )
        .reduce(
            || (0u64, BTreeMap::new()),
            |(sa, mut ha), (sb, hb)| {
                for (k, v) in hb {
                    *ha.entry(k).or_insert(0) += v;
                }
                (sa + sb, ha)
            },
        );
    Ok(SampleReport {
        trials,
        seed,
        successes,
        success_rate: successes as f64 / trials as f64,
        histogram,
    })
}

fn walk_once(prog: &LoccProgram, state: &PureState, rng: &mut ChaCha8Rng) -> (bool, String) {
    let mut cur = state.clone();
    let mut node_idx = 0usize;
    let mut path: Vec<&str> = Vec::new();
    loop {
        let node = &prog.nodes[node_idx];
        let mut kept: Vec<(usize, f64, PureState)> = Vec::new();
        for (k, e) in node.instrument.elements.iter().enumerate() {
            let (post, w) = cur
                .apply_local(node.instrument.at, &e.matrix)
                .expect("validated program");
            if w > OUTCOME_DROP_TOL {
                kept.push((k, w, post));
            }
        }
        if kept.is_empty() {
            // All mass fell below the drop cutoff; count the trial as failed.
            path.push("!dropped");
            return (false, path.join("/"));
        }
        let u: f64 = rng.random();
        let mut cum = 0.0;
        let mut chosen = kept.len() - 1;
        for (i, (_, w, _)) in kept.iter().enumerate() {
            cum += w;
            if u < cum {
                chosen = i;
                break;
            }
        }
        let (k, _, post) = kept.swap_remove(chosen);
        let label = &node.instrument.elements[k].label;
        path.push(label);
        cur = post;
        match node.branches[label] {
            BranchTarget::Halt(v) => {
                return (v == HaltVerdict::Success, path.join("/"));
            }
            BranchTarget::Node(n) => node_idx = n,
        }
    }
}

/// Fuses party `b` into party `a` and charges the ledger the EPR pairs that
/// justify treating them as one locale: one pair per qubit-equivalent of
/// `b`'s share (`ceil(log2 d)` per qudit).
pub fn merge_parties(
    state: &PureState,
    a: PartyId,
    b: PartyId,
    ledger: &mut ResourceLedger,
) -> Result<PureState> {
    let name_a = state.layout().party(a)?.name.clone();
    let name_b = state.layout().party(b)?.name.clone();
    let fused = state.fuse_parties(a, b)?;
    let pairs: u64 = state.layout().parties()[b.0]
        .dims
        .iter()
        .map(|&d| (usize::BITS - (d - 1).leading_zeros()) as u64)
        .sum();
    ledger.charge_merge(&name_a, &name_b, pairs);
    Ok(fused)
}

fn pair_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

fn ser_pairs<S: Serializer>(
    map: &BTreeMap<(String, String), u64>,
    ser: S,
) -> std::result::Result<S::Ok, S::Error> {
    #[derive(Serialize)]
    struct Entry<'a> {
        parties: [&'a str; 2],
        count: u64,
    }
    let mut seq = ser.serialize_seq(Some(map.len()))?;
    for ((a, b), &count) in map {
        seq.serialize_element(&Entry {
            parties: [a, b],
            count,
        })?;
    }
    seq.end()
}

/// Running account of the resources a protocol consumes and produces.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ResourceLedger {
    pub copies_consumed: u64,
    /// Shared pairs banked and not yet spent, keyed by party pair.
    #[serde(serialize_with = "ser_pairs")]
    pub epr_available: BTreeMap<(String, String), u64>,
    /// Pairs spent, including those charged to justify party merges.
    #[serde(serialize_with = "ser_pairs")]
    pub epr_consumed: BTreeMap<(String, String), u64>,
    pub cats_consumed: u64,
    pub cbits_sent: u64,
    pub yield_per_copy: f64,
}

impl ResourceLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_epr(&mut self, a: &str, b: &str, count: u64) {
        if count > 0 {
            *self.epr_available.entry(pair_key(a, b)).or_insert(0) += count;
        }
    }

    /// Spends one banked pair between `a` and `b`.
    pub fn consume_epr(&mut self, a: &str, b: &str) -> Result<()> {
        let key = pair_key(a, b);
        match self.epr_available.get_mut(&key) {
            Some(n) if *n > 0 => {
                *n -= 1;
                if *n == 0 {
                    self.epr_available.remove(&key);
                }
                *self.epr_consumed.entry(key).or_insert(0) += 1;
                Ok(())
            }
            _ => Err(Error::NoEprAvailable(key.0, key.1)),
        }
    }

    /// Books pairs spent to justify a merge, without requiring them to have
    /// been banked first.
    pub fn charge_merge(&mut self, a: &str, b: &str, pairs: u64) {
        if pairs > 0 {
            *self.epr_consumed.entry(pair_key(a, b)).or_insert(0) += pairs;
        }
    }

    pub fn epr_consumed_total(&self) -> u64 {
        self.epr_consumed.values().sum()
    }

    pub fn epr_available_total(&self) -> u64 {
        self.epr_available.values().sum()
    }

    /// `targets × success / copies`, or just `success` when no source copies
    /// were drawn (pure conversions).
    pub fn set_yield(&mut self, targets: u64, success: f64) {
        self.yield_per_copy = if self.copies_consumed == 0 {
            success
        } else {
            targets as f64 * success / self.copies_consumed as f64
        };
    }

    /// Folds another ledger's counts into this one. The yield is left for the
    /// caller to recompute.
    pub fn absorb(&mut self, other: &ResourceLedger) {
        self.copies_consumed += other.copies_consumed;
        self.cats_consumed += other.cats_consumed;
        self.cbits_sent += other.cbits_sent;
        for ((a, b), n) in &other.epr_available {
            *self.epr_available.entry((a.clone(), b.clone())).or_insert(0) += n;
        }
        for ((a, b), n) in &other.epr_consumed {
            *self.epr_consumed.entry((a.clone(), b.clone())).or_insert(0) += n;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn two_qubits() -> RegisterLayout {
        RegisterLayout::from_pairs(vec![("A", vec![2]), ("B", vec![2])]).unwrap()
    }

    fn z_measurement(at: PartyId) -> LocalInstrument {
        LocalInstrument::new(
            at,
            vec![
                InstrumentElement {
                    label: "0".into(),
                    matrix: DMatrix::from_row_slice(2, 2, &[c(1.), c(0.), c(0.), c(0.)]),
                },
                InstrumentElement {
                    label: "1".into(),
                    matrix: DMatrix::from_row_slice(2, 2, &[c(0.), c(0.), c(0.), c(1.)]),
                },
            ],
        )
    }

    fn bell() -> PureState {
        let r = 0.5f64.sqrt();
        PureState::new(two_qubits(), vec![c(r), c(0.), c(0.), c(r)]).unwrap()
    }

    #[test]
    fn incomplete_instruments_are_rejected() {
        let layout = two_qubits();
        let lonely = LocalInstrument::new(
            PartyId(0),
            vec![InstrumentElement {
                label: "0".into(),
                matrix: DMatrix::from_row_slice(2, 2, &[c(1.), c(0.), c(0.), c(0.)]),
            }],
        );
        match validate_instrument(&layout, &lonely) {
            Err(Error::IncompleteInstrument { deviation, .. }) => {
                assert_abs_diff_eq!(deviation, 1.0, epsilon = 1e-12)
            }
            other => panic!("expected IncompleteInstrument, got {other:?}"),
        }
        assert!(validate_instrument(&layout, &z_measurement(PartyId(0))).is_ok());
    }

    #[test]
    fn empty_program_is_trivial_success() {
        let trace = run_program(&LoccProgram::default(), &bell()).unwrap();
        assert_eq!(trace.branches.len(), 1);
        assert_abs_diff_eq!(trace.total_success_probability, 1.0, epsilon = 1e-15);
        assert_eq!(trace.cbits_sent, 0);
    }

    #[test]
    fn measurement_on_bell_splits_evenly() {
        let mut branches = BTreeMap::new();
        branches.insert("0".into(), BranchTarget::Halt(HaltVerdict::Success));
        branches.insert("1".into(), BranchTarget::Halt(HaltVerdict::Failure));
        let prog = LoccProgram {
            nodes: vec![ProgramNode {
                instrument: z_measurement(PartyId(0)),
                branches,
            }],
        };
        let trace = run_program(&prog, &bell()).unwrap();
        assert_eq!(trace.branches.len(), 2);
        let total: f64 = trace.branches.iter().map(|b| b.probability).sum();
        assert_abs_diff_eq!(total + trace.dropped_probability, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(trace.total_success_probability, 0.5, epsilon = 1e-12);
        assert_eq!(trace.cbits_sent, 1);
        // Post state of the "0" branch is |00>.
        let b0 = trace.branches.iter().find(|b| b.path == ["0"]).unwrap();
        assert_abs_diff_eq!(b0.state.amplitudes()[0].re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn cycles_are_rejected() {
        let mut branches = BTreeMap::new();
        branches.insert("0".into(), BranchTarget::Node(0));
        branches.insert("1".into(), BranchTarget::Halt(HaltVerdict::Failure));
        let prog = LoccProgram {
            nodes: vec![ProgramNode {
                instrument: z_measurement(PartyId(0)),
                branches,
            }],
        };
        assert!(matches!(
            run_program(&prog, &bell()),
            Err(Error::InvalidProgram(_))
        ));
    }

    #[test]
    fn branch_coverage_must_be_exact() {
        let mut missing = BTreeMap::new();
        missing.insert("0".into(), BranchTarget::Halt(HaltVerdict::Success));
        let prog = LoccProgram {
            nodes: vec![ProgramNode {
                instrument: z_measurement(PartyId(0)),
                branches: missing,
            }],
        };
        assert!(run_program(&prog, &bell()).is_err());
    }

    #[test]
    fn sampling_tracks_exact_probabilities() {
        let mut branches = BTreeMap::new();
        branches.insert("0".into(), BranchTarget::Halt(HaltVerdict::Success));
        branches.insert("1".into(), BranchTarget::Halt(HaltVerdict::Failure));
        let prog = LoccProgram {
            nodes: vec![ProgramNode {
                instrument: z_measurement(PartyId(0)),
                branches,
            }],
        };
        let s = PureState::new(two_qubits(), vec![c(0.6), c(0.), c(0.), c(0.8)]).unwrap();
        let trials = 200_000u64;
        let rep = sample_program(&prog, &s, 7, trials).unwrap();
        assert_eq!(rep.histogram.values().sum::<u64>(), trials);
        // p(success) = 0.36; allow five sigma.
        let sigma = (0.36f64 * 0.64 / trials as f64).sqrt();
        assert!((rep.success_rate - 0.36).abs() < 5.0 * sigma);
        // Same seed, same answer.
        let rep2 = sample_program(&prog, &s, 7, trials).unwrap();
        assert_eq!(rep.successes, rep2.successes);
        assert_eq!(rep.histogram, rep2.histogram);
    }

    #[test]
    fn merge_charges_qubit_equivalents() {
        let layout =
            RegisterLayout::from_pairs(vec![("A", vec![2]), ("B", vec![2, 3]), ("C", vec![2])])
                .unwrap();
        let s = PureState::computational(layout, 0).unwrap();
        let mut ledger = ResourceLedger::new();
        let fused = merge_parties(&s, PartyId(0), PartyId(1), &mut ledger).unwrap();
        assert_eq!(fused.layout().party_count(), 2);
        // One qubit (1 pair) plus one qutrit (2 pairs).
        assert_eq!(
            ledger.epr_consumed[&("A".to_string(), "B".to_string())],
            3
        );
    }

    #[test]
    fn ledger_tracks_availability() {
        let mut ledger = ResourceLedger::new();
        ledger.register_epr("B", "A", 2);
        assert!(ledger.consume_epr("A", "B").is_ok());
        assert!(ledger.consume_epr("A", "B").is_ok());
        assert!(matches!(
            ledger.consume_epr("A", "B"),
            Err(Error::NoEprAvailable(_, _))
        ));
        assert_eq!(ledger.epr_consumed_total(), 2);
    }

    #[test]
    fn yield_defaults_to_success_without_copies() {
        let mut ledger = ResourceLedger::new();
        ledger.set_yield(1, 0.25);
        assert_abs_diff_eq!(ledger.yield_per_copy, 0.25, epsilon = 1e-15);
        ledger.copies_consumed = 4;
        ledger.set_yield(1, 0.5);
        assert_abs_diff_eq!(ledger.yield_per_copy, 0.125, epsilon = 1e-15);
    }
}
