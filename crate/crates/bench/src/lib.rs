//! Shared state and program builders for the benchmark suite.

use locclab_core::generate::{haar_state, qubit_layout, random_program};
use locclab_core::locc::LoccProgram;
use locclab_core::qstate::PureState;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Haar-random state on `parties` qubit registers, fixed by the seed.
pub fn qubit_state(parties: usize, seed: u64) -> PureState {
    let layout = qubit_layout(parties).expect("qubit layouts fit the guard");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    haar_state(&layout, &mut rng)
}

/// A random measurement program of the given depth with a matching input.
pub fn measurement_case(parties: usize, depth: usize, seed: u64) -> (LoccProgram, PureState) {
    let layout = qubit_layout(parties).expect("qubit layouts fit the guard");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prog = random_program(&layout, depth, &mut rng).expect("qubit programs are buildable");
    let state = haar_state(&layout, &mut rng);
    (prog, state)
}
