//! Helper measurements that concentrate entanglement on a chosen party.
//!
//! When the assistance dichotomy says a helper can leave party `b` entangled
//! with the rest, some local basis measurement of the helper does so. The
//! search tries the computational basis, the Fourier basis, then a fixed
//! schedule of seeded Haar-random bases.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::decomp::{entropy_across_cut, eoa_zero_check, Cut, EoaAssessment};
use crate::error::{Error, Result};
use crate::locc::{InstrumentElement, LocalInstrument, OUTCOME_DROP_TOL};
use crate::generate::haar_unitary;
use crate::qstate::{PartyId, PureState};

use super::ENTANGLEMENT_TOL;

/// Seed of the random-basis schedule; fixed so searches are reproducible.
pub const BASIS_SEARCH_SEED: u64 = 0x5eed_ba5e;
/// Random bases tried after the computational and Fourier bases.
pub const RANDOM_BASES: usize = 32;

/// One outcome of the helper's measurement.
#[derive(Debug, Clone)]
pub struct MeasuredOutcome {
    pub label: String,
    pub probability: f64,
    /// Post-measurement state on the full register; the helper is collapsed.
    pub residual: PureState,
    /// Whether the residual is entangled across the target's singleton cut.
    pub entangled: bool,
}

/// A helper basis measurement together with its classified outcomes.
#[derive(Debug, Clone)]
pub struct HelperMeasurement {
    pub instrument: LocalInstrument,
    pub outcomes: Vec<MeasuredOutcome>,
    /// Total probability of outcomes that leave the target entangled.
    pub entangled_probability: f64,
}

/// Result of asking a helper to entangle `b` with the rest.
#[derive(Debug, Clone)]
pub enum AssistedOutcome {
    /// Assisted entanglement is structurally zero; no measurement helps.
    ZeroEoa(EoaAssessment),
    /// A measurement that works, with all its outcomes.
    Measured(HelperMeasurement),
}

fn fourier_basis(d: usize) -> DMatrix<Complex64> {
    let scale = 1.0 / (d as f64).sqrt();
    DMatrix::from_fn(d, d, |j, k| {
        Complex64::from_polar(scale, 2.0 * std::f64::consts::PI * (j * k) as f64 / d as f64)
    })
}

fn projective_instrument(at: PartyId, basis: &DMatrix<Complex64>) -> LocalInstrument {
    let d = basis.nrows();
    let elements = (0..d)
        .map(|k| {
            let col = basis.column(k);
            let mut m = DMatrix::zeros(d, d);
            for i in 0..d {
                for j in 0..d {
                    m[(i, j)] = col[i] * col[j].conj();
                }
            }
            InstrumentElement { label: format!("m{k}"), matrix: m }
        })
        .collect();
    LocalInstrument::new(at, elements)
}

fn classify(
    state: &PureState,
    inst: &LocalInstrument,
    b: PartyId,
) -> Result<Option<HelperMeasurement>> {
    let cut = Cut::new(state.layout().party_count(), &[b])?;
    let mut outcomes = Vec::new();
    let mut entangled_probability = 0.0;
    let mut any = false;
    for e in &inst.elements {
        let (post, w) = state.apply_local(inst.at, &e.matrix)?;
        if w <= OUTCOME_DROP_TOL {
            continue;
        }
        let entangled = entropy_across_cut(&post, cut)? > ENTANGLEMENT_TOL;
        if entangled {
            any = true;
            entangled_probability += w;
        }
        outcomes.push(MeasuredOutcome {
            label: e.label.clone(),
            probability: w,
            residual: post,
            entangled,
        });
    }
    if any {
        Ok(Some(HelperMeasurement {
            instrument: inst.clone(),
            outcomes,
            entangled_probability,
        }))
    } else {
        Ok(None)
    }
}

/// Searches the basis schedule for a helper measurement leaving `b`
/// entangled with the rest of the register.
pub(crate) fn helper_basis_search(
    state: &PureState,
    helper: PartyId,
    b: PartyId,
) -> Result<HelperMeasurement> {
    let d = state.layout().party_dim(helper);
    let computational = DMatrix::from_diagonal_element(d, d, Complex64::ONE);
    if let Some(hm) = classify(state, &projective_instrument(helper, &computational), b)? {
        return Ok(hm);
    }
    if let Some(hm) = classify(state, &projective_instrument(helper, &fourier_basis(d)), b)? {
        return Ok(hm);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(BASIS_SEARCH_SEED);
    for _ in 0..RANDOM_BASES {
        let basis = haar_unitary(d, &mut rng);
        if let Some(hm) = classify(state, &projective_instrument(helper, &basis), b)? {
            return Ok(hm);
        }
    }
    Err(Error::BasisSearchExhausted(2 + RANDOM_BASES))
}

/// Decides whether `helper` can leave `b` entangled with the rest and, if
/// so, returns a measurement that does.
pub fn assisted_entangle(
    state: &PureState,
    helper: PartyId,
    b: PartyId,
) -> Result<AssistedOutcome> {
    match eoa_zero_check(state, helper, b)? {
        EoaAssessment::Nonzero => Ok(AssistedOutcome::Measured(helper_basis_search(
            state, helper, b,
        )?)),
        zero => Ok(AssistedOutcome::ZeroEoa(zero)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{ghz_state, qubit_layout, w_state};
    use crate::qstate::RegisterLayout;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;

    #[test]
    fn ghz_helper_measurement_found_in_first_bases() {
        // Measuring the first GHZ party in the X basis leaves an EPR pair.
        let g = ghz_state(3).unwrap();
        match assisted_entangle(&g, PartyId(0), PartyId(1)).unwrap() {
            AssistedOutcome::Measured(hm) => {
                assert_abs_diff_eq!(hm.entangled_probability, 1.0, epsilon = 1e-9);
                assert!(hm.outcomes.iter().all(|o| o.entangled));
                for o in &hm.outcomes {
                    assert_abs_diff_eq!(o.probability, 0.5, epsilon = 1e-9);
                }
            }
            other => panic!("expected a measurement, got {other:?}"),
        }
    }

    #[test]
    fn w_state_helper_keeps_some_entangled_mass() {
        let w = w_state(3).unwrap();
        match assisted_entangle(&w, PartyId(0), PartyId(1)).unwrap() {
            AssistedOutcome::Measured(hm) => {
                assert!(hm.entangled_probability > 0.5);
            }
            other => panic!("expected a measurement, got {other:?}"),
        }
    }

    #[test]
    fn decoupled_target_reports_zero_case() {
        let layout = RegisterLayout::from_pairs(vec![("C", vec![2])]).unwrap();
        let r = Complex64::from(0.5f64.sqrt());
        let bell = PureState::new(
            qubit_layout(2).unwrap(),
            vec![r, Complex64::ZERO, Complex64::ZERO, r],
        )
        .unwrap();
        let s = bell
            .tensor(&PureState::computational(layout, 0).unwrap())
            .unwrap();
        match assisted_entangle(&s, PartyId(0), PartyId(2)).unwrap() {
            AssistedOutcome::ZeroEoa(EoaAssessment::ZeroCaseBPure) => {}
            other => panic!("expected BPure, got {other:?}"),
        }
    }

    #[test]
    fn fourier_basis_is_unitary() {
        for d in 2..5 {
            let f = fourier_basis(d);
            let id = &f * f.adjoint();
            for i in 0..d {
                for j in 0..d {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(id[(i, j)].re, expect, epsilon = 1e-12);
                    assert_abs_diff_eq!(id[(i, j)].im, 0.0, epsilon = 1e-12);
                }
            }
        }
    }
}
