//! Constructors for reference states, random states, and random programs.
//!
//! The random generators all take a caller-supplied generator so suites can
//! pin seeds; nothing here touches global randomness.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::decomp::{is_irreducible, schmidt, Cut};
use crate::error::{Error, Result};
use crate::locc::{
    BranchTarget, HaltVerdict, InstrumentElement, LocalInstrument, LoccProgram, ProgramNode,
};
use crate::qstate::{GroupIndexer, PartyId, PureState, RegisterLayout};

/// Default party names: single letters, then `P26`, `P27`, ...
pub fn party_names(m: usize) -> Vec<String> {
    (0..m)
        .map(|i| {
            if i < 26 {
                char::from(b'A' + i as u8).to_string()
            } else {
                format!("P{i}")
            }
        })
        .collect()
}

/// `m` single-qubit parties with default names.
pub fn qubit_layout(m: usize) -> Result<RegisterLayout> {
    RegisterLayout::from_pairs(party_names(m).into_iter().map(|n| (n, vec![2])).collect())
}

/// `(|0…0⟩ + |1…1⟩)/√2` on an all-qubit layout.
pub fn cat_on_layout(layout: &RegisterLayout) -> Result<PureState> {
    for p in layout.parties() {
        if p.dims != [2] {
            return Err(Error::UnsupportedDimension(layout.party_dim(
                layout.index_of(&p.name).unwrap(),
            )));
        }
    }
    let d = layout.total_dim();
    let mut amps = vec![Complex64::ZERO; d];
    let r = Complex64::from(0.5f64.sqrt());
    amps[0] = r;
    amps[d - 1] = r;
    PureState::new(layout.clone(), amps)
}

/// `m`-party cat state on default names.
pub fn ghz_state(m: usize) -> Result<PureState> {
    cat_on_layout(&qubit_layout(m)?)
}

/// Two-party cat state, the shared pair every ledger counts in.
pub fn epr_state() -> PureState {
    ghz_state(2).expect("two qubits fit any guard")
}

/// Single-excitation superposition `(|10…0⟩ + |01…0⟩ + … )/√m`.
pub fn w_state(m: usize) -> Result<PureState> {
    let layout = qubit_layout(m)?;
    let mut amps = vec![Complex64::ZERO; 1 << m];
    let r = Complex64::from((1.0 / m as f64).sqrt());
    for i in 0..m {
        amps[1 << (m - 1 - i)] = r;
    }
    PureState::new(layout, amps)
}

/// `Σ_i coeffs[i] |ii⟩` on two parties of matching qudit dimension.
pub fn paired_state(coeffs: &[f64]) -> Result<PureState> {
    let k = coeffs.len();
    if k < 1 {
        return Err(Error::InvalidState("no coefficients".into()));
    }
    let layout = RegisterLayout::from_pairs(vec![("A", vec![k.max(2)]), ("B", vec![k.max(2)])])?;
    let d = k.max(2);
    let mut amps = vec![Complex64::ZERO; d * d];
    for (i, &a) in coeffs.iter().enumerate() {
        amps[i * d + i] = Complex64::from(a);
    }
    PureState::new(layout, amps)
}

/// Haar-random pure state via normalized Gaussian amplitudes.
pub fn haar_state<R: Rng>(layout: &RegisterLayout, rng: &mut R) -> PureState {
    let d = layout.total_dim();
    let amps: Vec<Complex64> = (0..d)
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    PureState::new(
        layout.clone(),
        amps.into_iter().map(|z| z / norm).collect(),
    )
    .expect("normalized by construction")
}

/// Haar-random unitary: QR of a Ginibre matrix with the phase convention
/// fixed by the diagonal of R.
pub fn haar_unitary<R: Rng>(d: usize, rng: &mut R) -> DMatrix<Complex64> {
    let g = DMatrix::from_fn(d, d, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        let rd = r[(j, j)];
        if rd.norm() > 0.0 {
            let phase = rd / rd.norm();
            for i in 0..d {
                q[(i, j)] *= phase;
            }
        }
    }
    q
}

/// Random state that is entangled across every cut. Rejection sampled, but
/// Haar states are irreducible almost surely.
pub fn random_irreducible<R: Rng>(layout: &RegisterLayout, rng: &mut R) -> Result<PureState> {
    for _ in 0..64 {
        let s = haar_state(layout, rng);
        if is_irreducible(&s)? {
            return Ok(s);
        }
    }
    Err(Error::InvalidState(
        "could not draw an irreducible state in 64 attempts".into(),
    ))
}

/// Random state that factorizes across a randomly chosen cut, and that cut.
pub fn random_factorizable<R: Rng>(
    layout: &RegisterLayout,
    rng: &mut R,
) -> Result<(PureState, Cut)> {
    let m = layout.party_count();
    if m < 2 {
        return Err(Error::InvalidSubset("need at least two parties".into()));
    }
    let full = (1u64 << m) - 1;
    let mask = rng.random_range(1..full);
    let members: Vec<PartyId> = (0..m).map(PartyId).filter(|p| mask & (1 << p.0) != 0).collect();
    let cut = Cut::new(m, &members)?;
    let x = cut.x_side();
    let comp = cut.complement();
    let sub = |ids: &[PartyId]| {
        RegisterLayout::new(ids.iter().map(|&p| layout.parties()[p.0].clone()).collect())
    };
    let left = haar_state(&sub(&x)?, rng);
    let right = haar_state(&sub(&comp)?, rng);
    let xi = GroupIndexer::new(layout, &x);
    let ci = GroupIndexer::new(layout, &comp);
    let amps: Vec<Complex64> = (0..layout.total_dim())
        .map(|i| left.amplitudes()[xi.extract(i)] * right.amplitudes()[ci.extract(i)])
        .collect();
    Ok((PureState::new(layout.clone(), amps)?, cut))
}

/// Random bipartite state with Schmidt rank at least two.
pub fn random_entangled_pair<R: Rng>(dim: usize, rng: &mut R) -> Result<PureState> {
    let layout = RegisterLayout::from_pairs(vec![("A", vec![dim]), ("B", vec![dim])])?;
    let cut = Cut::new(2, &[PartyId(0)])?;
    for _ in 0..64 {
        let s = haar_state(&layout, rng);
        if schmidt(&s, cut)?.rank() >= 2 {
            return Ok(s);
        }
    }
    Err(Error::InvalidState(
        "could not draw an entangled pair in 64 attempts".into(),
    ))
}

/// Random complete instrument with `elements` outcomes: vertical blocks of a
/// random isometry, so `Σ K†K = I` holds by construction.
pub fn random_instrument<R: Rng>(
    layout: &RegisterLayout,
    at: PartyId,
    elements: usize,
    rng: &mut R,
) -> Result<LocalInstrument> {
    let d = layout.party_dim(at);
    layout.party(at)?;
    if elements == 0 {
        return Err(Error::InvalidProgram("instrument needs elements".into()));
    }
    let tall = DMatrix::from_fn(elements * d, d, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let q = tall.qr().q();
    let elems = (0..elements)
        .map(|k| InstrumentElement {
            label: format!("e{k}"),
            matrix: q.rows(k * d, d).into_owned(),
        })
        .collect();
    Ok(LocalInstrument::new(at, elems))
}

/// Random acyclic program of at most `depth` chained nodes with two-outcome
/// instruments; some outcomes halt early.
pub fn random_program<R: Rng>(
    layout: &RegisterLayout,
    depth: usize,
    rng: &mut R,
) -> Result<LoccProgram> {
    let m = layout.party_count();
    let depth = depth.max(1);
    let mut nodes = Vec::with_capacity(depth);
    for i in 0..depth {
        let at = PartyId(rng.random_range(0..m));
        let instrument = random_instrument(layout, at, 2, rng)?;
        let mut branches = BTreeMap::new();
        for e in &instrument.elements {
            let target = if i + 1 == depth || rng.random_bool(0.2) {
                let verdict = if rng.random_bool(0.5) {
                    HaltVerdict::Success
                } else {
                    HaltVerdict::Failure
                };
                BranchTarget::Halt(verdict)
            } else {
                BranchTarget::Node(i + 1)
            };
            branches.insert(e.label.clone(), target);
        }
        nodes.push(ProgramNode { instrument, branches });
    }
    // A mid-chain node may end up unreachable if every earlier outcome
    // halted; that is still a valid program.
    Ok(LoccProgram { nodes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::entropy_across_cut;
    use crate::locc::{run_program, validate_instrument, validate_program};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ghz_has_unit_entropy_on_every_cut() {
        let g = ghz_state(4).unwrap();
        for cut in crate::decomp::enumerate_cuts(4) {
            assert_abs_diff_eq!(entropy_across_cut(&g, cut).unwrap(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn w_state_is_normalized_and_symmetric() {
        let w = w_state(3).unwrap();
        assert_abs_diff_eq!(w.norm(), 1.0, epsilon = 1e-12);
        let h1 = entropy_across_cut(&w, Cut::new(3, &[PartyId(0)]).unwrap()).unwrap();
        let h2 = entropy_across_cut(&w, Cut::new(3, &[PartyId(1)]).unwrap()).unwrap();
        assert_abs_diff_eq!(h1, h2, epsilon = 1e-10);
    }

    #[test]
    fn paired_state_reproduces_coefficients() {
        let s = paired_state(&[0.5f64.sqrt(), 0.3f64.sqrt(), 0.2f64.sqrt()]).unwrap();
        let sd = schmidt(&s, Cut::new(2, &[PartyId(0)]).unwrap()).unwrap();
        assert_eq!(sd.rank(), 3);
        assert_abs_diff_eq!(sd.coefficients[0], 0.5f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn haar_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = haar_unitary(4, &mut rng);
        let id = &u * u.adjoint();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(id[(i, j)].re, expect, epsilon = 1e-12);
                assert_abs_diff_eq!(id[(i, j)].im, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn random_factorizable_states_factorize_where_claimed() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let layout = qubit_layout(4).unwrap();
        for _ in 0..5 {
            let (s, cut) = random_factorizable(&layout, &mut rng).unwrap();
            assert!(crate::decomp::is_factorizable(&s, cut).unwrap());
        }
    }

    #[test]
    fn random_irreducible_states_pass_the_classifier() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let layout = qubit_layout(3).unwrap();
        let s = random_irreducible(&layout, &mut rng).unwrap();
        assert!(is_irreducible(&s).unwrap());
    }

    #[test]
    fn random_instruments_are_complete() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let layout = qubit_layout(2).unwrap();
        for k in 1..=4 {
            let inst = random_instrument(&layout, PartyId(0), k, &mut rng).unwrap();
            assert!(validate_instrument(&layout, &inst).is_ok());
        }
    }

    #[test]
    fn random_programs_validate_and_run() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let layout = qubit_layout(3).unwrap();
        for _ in 0..10 {
            let prog = random_program(&layout, 5, &mut rng).unwrap();
            validate_program(&layout, &prog).unwrap();
            let s = haar_state(&layout, &mut rng);
            let trace = run_program(&prog, &s).unwrap();
            let total: f64 =
                trace.branches.iter().map(|b| b.probability).sum::<f64>() + trace.dropped_probability;
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
        }
    }
}
