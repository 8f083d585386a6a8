//! Command-line front end: load state and protocol files, run distillation
//! and conversion protocols or audits, and emit machine-readable reports.
//!
//! Exit codes: 0 success, 2 malformed input, 3 precondition failure,
//! 4 resource guard tripped. JSON reports are byte-identical for identical
//! invocations; `--format csv` exports the tabular part of each report.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use locclab_core::analysis::{factorizability_audit, monotone_audit, monte_carlo_yield};
use locclab_core::decomp::{schmidt, Cut};
use locclab_core::error::Error;
use locclab_core::generate::{
    cat_on_layout, epr_state, ghz_state, party_names, random_factorizable, random_irreducible,
    w_state,
};
use locclab_core::io::{load_state, state_digest, write_state, ProtocolScript};
use locclab_core::locc::{run_program, sample_program, HaltVerdict, ResourceLedger};
use locclab_core::protocols::{
    bipartite_gamble, cat_to_epr, epr_between_pair, epr_pair_fidelity, eprs_to_cat,
    gamble_some_epr, gamble_success_probability, loccq_to_locc_rewrite, rewrite_layout,
    synthesize_from_eprs, CatBudgetProgram, GambleAnalysis,
};
use locclab_core::qstate::{Party, PartyId, PureState, RegisterLayout};
use locclab_core::analysis::{AuditReport, YieldEstimate};

/// Interpretation notes attached to reports, fixed strings so identical runs
/// stay byte-identical.
const NOTE_FILTER: &str = "filter coefficients are the two leading Schmidt coefficients divided \
     by the square root of the projection probability; this normalization reproduces the stated \
     total success probability";
const NOTE_YIELD: &str = "yield_per_copy is target pairs times enumerated success probability \
     divided by source copies consumed; for pure conversions with no copies drawn it equals the \
     success probability";
const NOTE_BASIS: &str = "helper measurement bases are searched over a fixed schedule; an \
     exhausted search is a diagnostic, not a proof that assisted entanglement is zero";
const NOTE_BANK: &str = "the pair bank is preloaded with exactly the pairs this conversion may \
     spend; consumption is recorded in the ledger";
const NOTE_MERGE: &str = "co-locating two locales is charged to the ledger as consumed pairs at \
     one pair per qubit-equivalent of the moved register";

#[derive(Parser)]
#[command(
    name = "locclab",
    version,
    about = "LOCC protocol simulator and entanglement accounting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Ghz,
    W,
    Epr,
    RandomIrreducible,
    RandomFactorizable,
}

#[derive(Subcommand)]
enum Command {
    /// Gamble a bipartite state on the two leading Schmidt terms
    Gamble {
        #[arg(long)]
        state: PathBuf,
        /// Cut as comma-separated party names on one side; default first party
        #[arg(long)]
        cut: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Distill one maximally entangled pair between some two parties
    SomeEpr {
        #[arg(long)]
        state: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Distill a pair between two chosen parties, merging as needed
    PairEpr {
        #[arg(long)]
        state: PathBuf,
        /// Target parties as "P1,P2"
        #[arg(long)]
        pair: String,
        /// Source-copy budget
        #[arg(long, default_value_t = 8)]
        copies: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Convert a cat state into an EPR pair between two members
    Cat2epr {
        #[arg(long)]
        state: PathBuf,
        /// Receiving parties as "P1,P2"
        #[arg(long)]
        pair: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Build a cat state from banked pairs between a hub and each spoke
    Epr2cat {
        /// Party names, comma separated
        #[arg(long)]
        parties: String,
        /// Preparing party; default the first listed
        #[arg(long)]
        hub: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Prepare an arbitrary target state from banked pairs
    Synthesize {
        #[arg(long)]
        state: PathBuf,
        /// Party that assembles the state locally
        #[arg(long)]
        site: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Replace a program's cat budget with cats built from extra copies
    LoccqRewrite {
        #[arg(long)]
        state: PathBuf,
        /// Script whose `cats` field is the cat budget
        #[arg(long)]
        protocol: PathBuf,
        /// Source copies the program itself runs on
        #[arg(long, default_value_t = 1)]
        copies: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Audit a program for entropy monotonicity or factorizability preservation
    Audit {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        protocol: PathBuf,
        /// With a cut: assert the cut stays unentangled on every branch
        #[arg(long)]
        cut: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Sample program trajectories and compare with exact enumeration
    Sample {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        protocol: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Write a state file for a named family
    Generate {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long, default_value_t = 3)]
        parties: usize,
        /// Local dimension for the random families
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// A report's JSON plus its tabular projection for CSV export.
struct Output {
    json: String,
    table: Vec<Vec<String>>,
}

fn main() {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {}: {err}", error_name(&err));
            std::process::exit(exit_code(&err));
        }
    }
}

fn error_name(err: &Error) -> &'static str {
    match err {
        Error::DimensionLimit { .. } => "DimensionLimit",
        Error::InvalidSubset(_) => "InvalidSubset",
        Error::LayoutMismatch(_) => "LayoutMismatch",
        Error::IncompleteInstrument { .. } => "IncompleteInstrument",
        Error::BranchExplosion { .. } => "BranchExplosion",
        Error::NotEntangled => "NotEntangled",
        Error::NotIrreducible(_) => "NotIrreducible",
        Error::CopyBudgetExceeded { .. } => "CopyBudgetExceeded",
        Error::NoEprAvailable(_, _) => "NoEprAvailable",
        Error::UnsupportedDimension(_) => "UnsupportedDimension",
        Error::NotACatState(_) => "NotACatState",
        Error::NotFactorizable(_) => "NotFactorizable",
        Error::BasisSearchExhausted(_) => "BasisSearchExhausted",
        Error::InvalidState(_) => "InvalidState",
        Error::InvalidProgram(_) => "InvalidProgram",
        Error::Malformed(_) => "Malformed",
        Error::Io(_) => "Io",
        Error::TooFewTrials { .. } => "TooFewTrials",
    }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Malformed(_)
        | Error::InvalidState(_)
        | Error::InvalidProgram(_)
        | Error::IncompleteInstrument { .. }
        | Error::LayoutMismatch(_)
        | Error::TooFewTrials { .. }
        | Error::Io(_) => 2,
        Error::NotEntangled
        | Error::NotIrreducible(_)
        | Error::NotACatState(_)
        | Error::NotFactorizable(_)
        | Error::NoEprAvailable(_, _)
        | Error::UnsupportedDimension(_)
        | Error::InvalidSubset(_)
        | Error::BasisSearchExhausted(_) => 3,
        Error::DimensionLimit { .. } | Error::BranchExplosion { .. }
        | Error::CopyBudgetExceeded { .. } => 4,
    }
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Gamble { state, cut, seed, trials, out, format } => {
            let s = load_state(&state)?;
            let output = cmd_gamble(&s, cut.as_deref(), seed, trials)?;
            emit(&output, format, out.as_deref())
        }
        Command::SomeEpr { state, seed, trials, out, format } => {
            let s = load_state(&state)?;
            let output = cmd_some_epr(&s, seed, trials)?;
            emit(&output, format, out.as_deref())
        }
        Command::PairEpr { state, pair, copies, out, format } => {
            let s = load_state(&state)?;
            let output = cmd_pair_epr(&s, &pair, copies)?;
            emit(&output, format, out.as_deref())
        }
        Command::Cat2epr { state, pair, out, format } => {
            let s = load_state(&state)?;
            let output = cmd_cat2epr(&s, &pair)?;
            emit(&output, format, out.as_deref())
        }
        Command::Epr2cat { parties, hub, out, format } => {
            let output = cmd_epr2cat(&parties, hub.as_deref())?;
            emit(&output, format, out.as_deref())
        }
        Command::Synthesize { state, site, out, format } => {
            let s = load_state(&state)?;
            let output = cmd_synthesize(&s, &site)?;
            emit(&output, format, out.as_deref())
        }
        Command::LoccqRewrite { state, protocol, copies, out, format } => {
            let s = load_state(&state)?;
            let script = ProtocolScript::load(&protocol)?;
            let output = cmd_rewrite(&s, &script, copies)?;
            emit(&output, format, out.as_deref())
        }
        Command::Audit { state, protocol, cut, out, format } => {
            let s = load_state(&state)?;
            let script = ProtocolScript::load(&protocol)?;
            let output = cmd_audit(&s, &script, cut.as_deref())?;
            emit(&output, format, out.as_deref())
        }
        Command::Sample { state, protocol, seed, trials, out, format } => {
            let s = load_state(&state)?;
            let script = ProtocolScript::load(&protocol)?;
            let output = cmd_sample(&s, &script, seed, trials)?;
            emit(&output, format, out.as_deref())
        }
        Command::Generate { kind, parties, dim, seed, out } => {
            let text = cmd_generate(kind, parties, dim, seed)?;
            write_text(&text, out.as_deref())
        }
    }
}

fn emit(output: &Output, format: Format, out: Option<&Path>) -> Result<(), Error> {
    match format {
        Format::Json => write_text(&output.json, out),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in &output.table {
                w.write_record(row).map_err(|e| Error::Malformed(format!("csv: {e}")))?;
            }
            let bytes = w
                .into_inner()
                .map_err(|e| Error::Malformed(format!("csv: {e}")))?;
            let text = String::from_utf8(bytes).expect("csv output is utf-8");
            write_text(text.trim_end_matches('\n'), out)
        }
    }
}

fn write_text(text: &str, out: Option<&Path>) -> Result<(), Error> {
    match out {
        Some(path) => std::fs::write(path, format!("{text}\n"))?,
        None => {
            let stdout = std::io::stdout();
            writeln!(stdout.lock(), "{text}")?;
        }
    }
    Ok(())
}

fn to_json<T: Serialize>(report: &T) -> String {
    serde_json::to_string_pretty(report).expect("report serialization cannot fail")
}

fn find_party(layout: &RegisterLayout, name: &str) -> Result<PartyId, Error> {
    layout
        .party_ids()
        .find(|&p| layout.parties()[p.0].name == name)
        .ok_or_else(|| Error::InvalidSubset(format!("no party named {name}")))
}

fn parse_pair(layout: &RegisterLayout, text: &str) -> Result<(PartyId, PartyId), Error> {
    let names: Vec<&str> = text.split(',').map(str::trim).collect();
    if names.len() != 2 {
        return Err(Error::InvalidSubset(format!(
            "expected two comma-separated party names, got {text:?}"
        )));
    }
    Ok((find_party(layout, names[0])?, find_party(layout, names[1])?))
}

fn parse_cut(layout: &RegisterLayout, text: &str) -> Result<Cut, Error> {
    let members = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|name| find_party(layout, name))
        .collect::<Result<Vec<_>, _>>()?;
    Cut::new(layout.party_count(), &members)
}

#[derive(Serialize)]
struct BranchRow {
    path: String,
    probability: f64,
    verdict: String,
}

fn branch_rows(trace: &locclab_core::locc::ProtocolTrace) -> Vec<BranchRow> {
    trace
        .branches
        .iter()
        .map(|b| BranchRow {
            path: b.path.join("/"),
            probability: b.probability,
            verdict: match b.verdict {
                HaltVerdict::Success => "success".into(),
                HaltVerdict::Failure => "failure".into(),
            },
        })
        .collect()
}

fn branch_table(rows: &[BranchRow]) -> Vec<Vec<String>> {
    let mut table = vec![vec!["path".into(), "probability".into(), "verdict".into()]];
    for r in rows {
        table.push(vec![r.path.clone(), format!("{:.17e}", r.probability), r.verdict.clone()]);
    }
    table
}

fn ledger_table(ledger: &ResourceLedger) -> Vec<Vec<String>> {
    let mut table = vec![vec!["resource".into(), "count".into()]];
    table.push(vec!["copies_consumed".into(), ledger.copies_consumed.to_string()]);
    table.push(vec!["epr_available".into(), ledger.epr_available_total().to_string()]);
    table.push(vec!["epr_consumed".into(), ledger.epr_consumed_total().to_string()]);
    table.push(vec!["cats_consumed".into(), ledger.cats_consumed.to_string()]);
    table.push(vec!["cbits_sent".into(), ledger.cbits_sent.to_string()]);
    table.push(vec!["yield_per_copy".into(), format!("{:.17e}", ledger.yield_per_copy)]);
    table
}

#[derive(Serialize)]
struct GambleReport {
    command: &'static str,
    state_digest: String,
    cut: String,
    pair: (String, String),
    analysis: GambleAnalysis,
    exact_success_probability: f64,
    sampled: YieldEstimate,
    branches: Vec<BranchRow>,
    ledger: ResourceLedger,
    notes: Vec<&'static str>,
}

fn cmd_gamble(
    state: &PureState,
    cut_text: Option<&str>,
    seed: u64,
    trials: u64,
) -> Result<Output, Error> {
    let cut = match cut_text {
        Some(text) => parse_cut(state.layout(), text)?,
        None => Cut::new(state.layout().party_count(), &[PartyId(0)])?,
    };
    let outcome = bipartite_gamble(state, cut)?;
    let analysis = gamble_success_probability(&schmidt(state, cut)?.coefficients)?;
    let sampled = monte_carlo_yield(&outcome.program, state, trials, seed)?;
    let branches = branch_rows(&outcome.trace);
    let report = GambleReport {
        command: "gamble",
        state_digest: state_digest(state),
        cut: cut.label(state.layout()),
        pair: outcome.pair_names.clone(),
        analysis,
        exact_success_probability: outcome.success_probability,
        sampled,
        branches,
        ledger: outcome.ledger.clone(),
        notes: vec![NOTE_FILTER, NOTE_YIELD],
    };
    Ok(Output {
        json: to_json(&report),
        table: branch_table(&report.branches),
    })
}

#[derive(Serialize)]
struct SomeEprReport {
    command: &'static str,
    state_digest: String,
    pair: (String, String),
    exact_success_probability: f64,
    min_success_fidelity: f64,
    sampled: YieldEstimate,
    branches: Vec<BranchRow>,
    ledger: ResourceLedger,
    notes: Vec<&'static str>,
}

fn cmd_some_epr(state: &PureState, seed: u64, trials: u64) -> Result<Output, Error> {
    let outcome = gamble_some_epr(state)?;
    let sampled = monte_carlo_yield(&outcome.program, state, trials, seed)?;
    let mut min_fid = 1.0f64;
    for b in outcome.trace.success_branches() {
        min_fid = min_fid.min(epr_pair_fidelity(&b.state, outcome.pair)?);
    }
    let report = SomeEprReport {
        command: "some-epr",
        state_digest: state_digest(state),
        pair: outcome.pair_names.clone(),
        exact_success_probability: outcome.success_probability,
        min_success_fidelity: min_fid,
        sampled,
        branches: branch_rows(&outcome.trace),
        ledger: outcome.ledger.clone(),
        notes: vec![NOTE_BASIS, NOTE_YIELD],
    };
    Ok(Output {
        json: to_json(&report),
        table: branch_table(&report.branches),
    })
}

#[derive(Serialize)]
struct StageRow {
    stage: usize,
    pair: (String, String),
    success_probability: f64,
}

#[derive(Serialize)]
struct PairEprReport {
    command: &'static str,
    state_digest: String,
    pair: (String, String),
    success_probability: f64,
    final_pair_fidelity: f64,
    copy_budget: u64,
    stages: Vec<StageRow>,
    ledger: ResourceLedger,
    notes: Vec<&'static str>,
}

fn cmd_pair_epr(state: &PureState, pair_text: &str, copies: u64) -> Result<Output, Error> {
    let (p1, p2) = parse_pair(state.layout(), pair_text)?;
    let staged = epr_between_pair(state, p1, p2, copies)?;
    let fid = epr_pair_fidelity(&staged.success_state, staged.pair)?;
    let stages = staged
        .stages
        .iter()
        .enumerate()
        .map(|(i, s)| StageRow {
            stage: i,
            pair: s.pair_names.clone(),
            success_probability: s.success_probability,
        })
        .collect::<Vec<_>>();
    let report = PairEprReport {
        command: "pair-epr",
        state_digest: state_digest(state),
        pair: staged.pair_names.clone(),
        success_probability: staged.success_probability,
        final_pair_fidelity: fid,
        copy_budget: copies,
        stages,
        ledger: staged.ledger.clone(),
        notes: vec![NOTE_MERGE, NOTE_YIELD],
    };
    let mut table = vec![vec!["stage".into(), "pair".into(), "success_probability".into()]];
    for s in &report.stages {
        table.push(vec![
            s.stage.to_string(),
            format!("{},{}", s.pair.0, s.pair.1),
            format!("{:.17e}", s.success_probability),
        ]);
    }
    Ok(Output { json: to_json(&report), table })
}

#[derive(Serialize)]
struct Cat2EprReport {
    command: &'static str,
    state_digest: String,
    pair: (String, String),
    success_probability: f64,
    min_branch_fidelity: f64,
    branches: Vec<BranchRow>,
    ledger: ResourceLedger,
    notes: Vec<&'static str>,
}

fn cmd_cat2epr(state: &PureState, pair_text: &str) -> Result<Output, Error> {
    let (p1, p2) = parse_pair(state.layout(), pair_text)?;
    let outcome = cat_to_epr(state, p1, p2)?;
    let mut min_fid = 1.0f64;
    for b in outcome.trace.success_branches() {
        min_fid = min_fid.min(epr_pair_fidelity(&b.state, outcome.pair)?);
    }
    let report = Cat2EprReport {
        command: "cat2epr",
        state_digest: state_digest(state),
        pair: outcome.pair_names.clone(),
        success_probability: outcome.success_probability,
        min_branch_fidelity: min_fid,
        branches: branch_rows(&outcome.trace),
        ledger: outcome.ledger.clone(),
        notes: vec![NOTE_YIELD],
    };
    Ok(Output {
        json: to_json(&report),
        table: branch_table(&report.branches),
    })
}

#[derive(Serialize)]
struct Epr2CatReport {
    command: &'static str,
    parties: Vec<String>,
    hub: String,
    cat_fidelity: f64,
    result_digest: String,
    ledger: ResourceLedger,
    notes: Vec<&'static str>,
}

fn cmd_epr2cat(parties_text: &str, hub_name: Option<&str>) -> Result<Output, Error> {
    let names: Vec<String> = parties_text
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    let template = RegisterLayout::new(
        names
            .iter()
            .map(|n| Party { name: n.clone(), dims: vec![2] })
            .collect(),
    )?;
    let hub = match hub_name {
        Some(name) => find_party(&template, name)?,
        None => PartyId(0),
    };
    let spokes: Vec<PartyId> = template.party_ids().filter(|&p| p != hub).collect();
    let mut ledger = ResourceLedger::new();
    for &s in &spokes {
        ledger.register_epr(&names[hub.0], &names[s.0], 1);
    }
    let synthesis = eprs_to_cat(&template, hub, &spokes, &mut ledger)?;
    ledger.set_yield(1, 1.0);
    let ideal = cat_on_layout(&template)?;
    let report = Epr2CatReport {
        command: "epr2cat",
        parties: names.clone(),
        hub: names[hub.0].clone(),
        cat_fidelity: synthesis.state.fidelity(&ideal)?,
        result_digest: state_digest(&synthesis.state),
        ledger: ledger.clone(),
        notes: vec![NOTE_BANK, NOTE_YIELD],
    };
    Ok(Output {
        json: to_json(&report),
        table: ledger_table(&report.ledger),
    })
}

#[derive(Serialize)]
struct SynthesizeReport {
    command: &'static str,
    state_digest: String,
    site: String,
    epr_spent: u64,
    result_fidelity: f64,
    ledger: ResourceLedger,
    notes: Vec<&'static str>,
}

fn cmd_synthesize(state: &PureState, site_name: &str) -> Result<Output, Error> {
    let site = find_party(state.layout(), site_name)?;
    let mut ledger = ResourceLedger::new();
    for p in state.layout().party_ids() {
        if p != site {
            ledger.register_epr(
                &state.layout().parties()[site.0].name,
                &state.layout().parties()[p.0].name,
                state.layout().parties()[p.0].dims.len() as u64,
            );
        }
    }
    let synthesis = synthesize_from_eprs(state, site, &mut ledger)?;
    ledger.set_yield(1, 1.0);
    let report = SynthesizeReport {
        command: "synthesize",
        state_digest: state_digest(state),
        site: site_name.to_string(),
        epr_spent: synthesis.epr_spent,
        result_fidelity: synthesis.state.fidelity(state)?,
        ledger: ledger.clone(),
        notes: vec![NOTE_BANK, NOTE_YIELD],
    };
    Ok(Output {
        json: to_json(&report),
        table: ledger_table(&report.ledger),
    })
}

#[derive(Serialize)]
struct RewriteCliReport {
    command: &'static str,
    state_digest: String,
    report: locclab_core::protocols::RewriteReport,
    notes: Vec<&'static str>,
}

fn cmd_rewrite(state: &PureState, script: &ProtocolScript, copies: u64) -> Result<Output, Error> {
    let layout = rewrite_layout(state.layout(), script.cats as usize, copies as usize)?;
    let program = script.resolve(&layout)?;
    let prog = CatBudgetProgram {
        program,
        cat_budget: script.cats,
    };
    let outcome = loccq_to_locc_rewrite(&prog, state, copies)?;
    let report = RewriteCliReport {
        command: "loccq-rewrite",
        state_digest: state_digest(state),
        report: outcome.report.clone(),
        notes: vec![NOTE_YIELD],
    };
    let r = &outcome.report;
    let table = vec![
        vec!["field".to_string(), "value".to_string()],
        vec!["copies".into(), r.copies.to_string()],
        vec!["cat_budget".into(), r.cat_budget.to_string()],
        vec!["extra_copies".into(), r.extra_copies.to_string()],
        vec!["used_cat_shortcut".into(), r.used_cat_shortcut.to_string()],
        vec!["cat_fidelity_min".into(), format!("{:.17e}", r.cat_fidelity_min)],
        vec!["branch_fidelity_min".into(), format!("{:.17e}", r.branch_fidelity_min)],
        vec![
            "original_success_probability".into(),
            format!("{:.17e}", r.original_success_probability),
        ],
        vec![
            "rewritten_success_probability".into(),
            format!("{:.17e}", r.rewritten_success_probability),
        ],
        vec![
            "distillation_success_probability".into(),
            format!("{:.17e}", r.distillation_success_probability),
        ],
    ];
    Ok(Output { json: to_json(&report), table })
}

#[derive(Serialize)]
struct AuditCliReport {
    command: &'static str,
    state_digest: String,
    mode: &'static str,
    cut: Option<String>,
    report: AuditReport,
    notes: Vec<&'static str>,
}

fn cmd_audit(
    state: &PureState,
    script: &ProtocolScript,
    cut_text: Option<&str>,
) -> Result<Output, Error> {
    let program = script.resolve(state.layout())?;
    let (mode, cut_label, report) = match cut_text {
        Some(text) => {
            let cut = parse_cut(state.layout(), text)?;
            let report = factorizability_audit(&program, state, &cut)?;
            ("factorizability", Some(cut.label(state.layout())), report)
        }
        None => ("monotone", None, monotone_audit(&program, state)?),
    };
    let cli_report = AuditCliReport {
        command: "audit",
        state_digest: state_digest(state),
        mode,
        cut: cut_label,
        report,
        notes: Vec::new(),
    };
    let mut table = vec![vec![
        "path".to_string(),
        "cut".to_string(),
        "party".to_string(),
        "pre_entropy".to_string(),
        "post_entropy".to_string(),
        "violation".to_string(),
    ]];
    for row in &cli_report.report.rows {
        table.push(vec![
            row.path.join("/"),
            row.cut.clone(),
            row.party.clone().unwrap_or_default(),
            format!("{:.17e}", row.pre_entropy),
            format!("{:.17e}", row.post_entropy),
            format!("{:.17e}", row.violation),
        ]);
    }
    Ok(Output { json: to_json(&cli_report), table })
}

#[derive(Serialize)]
struct SampleCliReport {
    command: &'static str,
    state_digest: String,
    sampled: YieldEstimate,
    exact_success_probability: Option<f64>,
    histogram: std::collections::BTreeMap<String, u64>,
    notes: Vec<&'static str>,
}

fn cmd_sample(
    state: &PureState,
    script: &ProtocolScript,
    seed: u64,
    trials: u64,
) -> Result<Output, Error> {
    let program = script.resolve(state.layout())?;
    let sampled = monte_carlo_yield(&program, state, trials, seed)?;
    let histogram = sample_program(&program, state, seed, trials)?.histogram;
    // The exact side is optional: enumeration may trip the branch guard on
    // programs that sample fine.
    let exact = match run_program(&program, state) {
        Ok(trace) => Some(trace.total_success_probability),
        Err(Error::BranchExplosion { .. }) => None,
        Err(e) => return Err(e),
    };
    let report = SampleCliReport {
        command: "sample",
        state_digest: state_digest(state),
        sampled,
        exact_success_probability: exact,
        histogram,
        notes: Vec::new(),
    };
    let mut table = vec![vec!["path".to_string(), "count".to_string()]];
    for (path, count) in &report.histogram {
        table.push(vec![path.clone(), count.to_string()]);
    }
    Ok(Output { json: to_json(&report), table })
}

fn cmd_generate(kind: Kind, parties: usize, dim: usize, seed: u64) -> Result<String, Error> {
    use rand::SeedableRng;
    if parties < 2 {
        return Err(Error::InvalidSubset("need at least two parties".into()));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let layout = RegisterLayout::new(
        party_names(parties)
            .into_iter()
            .map(|name| Party { name, dims: vec![dim] })
            .collect(),
    )?;
    let state = match kind {
        Kind::Ghz => ghz_state(parties)?,
        Kind::W => w_state(parties)?,
        Kind::Epr => epr_state(),
        Kind::RandomIrreducible => random_irreducible(&layout, &mut rng)?,
        Kind::RandomFactorizable => random_factorizable(&layout, &mut rng)?.0,
    };
    Ok(write_state(&state))
}
