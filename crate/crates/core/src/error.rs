use thiserror::Error;

/// Everything that can go wrong across the library.
///
/// The variants split into three rough groups: malformed input (bad files,
/// bad programs, mismatched layouts), precondition failures (a protocol was
/// asked to run on a state that does not satisfy its hypothesis), and
/// resource limits (dimension or branch guards, copy budgets).
#[derive(Debug, Error)]
pub enum Error {
    /// The requested register would exceed the amplitude-count guard.
    #[error("state would need {required} amplitudes, over the limit of {guard} (raise LOCCLAB_DIM_GUARD to override)")]
    DimensionLimit { required: u128, guard: u64 },

    /// A party subset was empty, improper, out of range, or otherwise unusable.
    #[error("invalid party subset: {0}")]
    InvalidSubset(String),

    /// Two objects that must share a register layout do not.
    #[error("register layout mismatch: {0}")]
    LayoutMismatch(String),

    /// An instrument's elements do not sum to the identity.
    #[error("instrument at party {party} is not trace preserving (completeness deviation {deviation:.3e})")]
    IncompleteInstrument { party: String, deviation: f64 },

    /// Exact enumeration of a program produced too many branches.
    #[error("branch enumeration reached {branches} branches, over the limit of {guard}")]
    BranchExplosion { branches: u64, guard: u64 },

    /// The state carries no entanglement across the relevant cut.
    #[error("state is not entangled across the required cut")]
    NotEntangled,

    /// The state factorizes across at least one cut.
    #[error("state is not irreducible: factorizable across {0}")]
    NotIrreducible(String),

    /// A staged distillation needed more source copies than allowed.
    #[error("distillation needed {needed} copies but only {allowed} were allowed")]
    CopyBudgetExceeded { needed: u64, allowed: u64 },

    /// The ledger holds no shared pair between the two parties.
    #[error("no EPR pair available between {0} and {1}")]
    NoEprAvailable(String, String),

    /// An operation that only supports qubits met a larger qudit.
    #[error("operation supports qubits only, found local dimension {0}")]
    UnsupportedDimension(usize),

    /// The input does not look like a cat state.
    #[error("not a cat state: {0}")]
    NotACatState(String),

    /// A factorizability audit was requested across a cut where the state
    /// does not factorize to begin with.
    #[error("state is not factorizable across {0}")]
    NotFactorizable(String),

    /// No measurement basis in the search schedule produced an entangled residual.
    #[error("helper basis search exhausted after {0} bases without an entangled residual")]
    BasisSearchExhausted(usize),

    /// A state file or in-memory state failed validation.
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// A protocol program failed structural validation.
    #[error("invalid program: {0}")]
    InvalidProgram(String),

    /// Input that could not be parsed at all.
    #[error("malformed input: {0}")]
    Malformed(String),

    /// Filesystem failure while reading or writing an artifact.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Too few Monte Carlo trials for a meaningful interval.
    #[error("{got} trials requested, at least {min} required")]
    TooFewTrials { got: u64, min: u64 },
}

pub type Result<T> = std::result::Result<T, Error>;
