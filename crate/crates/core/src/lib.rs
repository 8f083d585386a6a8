//! Simulation and analysis of multipartite pure-state transformations under
//! local operations and classical communication, with explicit accounting of
//! auxiliary entanglement.

pub mod analysis;
pub mod decomp;
pub mod error;
pub mod generate;
pub mod io;
pub mod locc;
pub mod protocols;
pub mod qstate;

pub use analysis::{
    factorizability_audit, monotone_audit, monte_carlo_yield, AuditReport, AuditRow, YieldEstimate,
};
pub use decomp::{
    entropy_across_cut, enumerate_cuts, eoa_zero_check, is_factorizable, is_irreducible, schmidt,
    Cut, EoaAssessment, SchmidtDecomposition,
};
pub use error::{Error, Result};
pub use io::{
    load_state, read_state, save_program, save_state, state_digest, write_program, write_state,
    ProtocolScript,
};
pub use locc::{
    merge_parties, run_program, sample_program, validate_instrument, validate_program,
    BranchRecord, BranchTarget, HaltVerdict, InstrumentElement, LocalInstrument, LoccProgram,
    ProgramNode, ProtocolTrace, ResourceLedger, SampleReport,
};
pub use protocols::{
    assisted_entangle, bipartite_gamble, cat_to_epr, epr_between_pair, epr_pair_fidelity,
    eprs_to_cat, gamble_some_epr, gamble_success_probability, loccq_to_locc_rewrite,
    synthesize_from_eprs, teleport, AssistedOutcome, CatBudgetProgram, CatSynthesis,
    DistillationOutcome, GambleAnalysis, RewriteOutcome, RewriteReport, StagedDistillation,
    Synthesis, TeleportOutcome,
};
pub use qstate::{
    dim_guard, set_dim_guard, DensityMatrix, Party, PartyId, PureState, RegisterLayout,
};
