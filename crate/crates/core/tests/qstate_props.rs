//! Register indexing and reduction properties, checked against brute-force
//! digit-arithmetic oracles that share no code with the implementation.

use locclab_core::qstate::{Party, PartyId, PureState, RegisterLayout};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

fn layout_of(dims: &[usize]) -> RegisterLayout {
    RegisterLayout::new(
        dims.iter()
            .enumerate()
            .map(|(i, &d)| Party {
                name: format!("P{i}"),
                dims: vec![d],
            })
            .collect(),
    )
    .unwrap()
}

fn normalized(re: Vec<f64>, im: Vec<f64>) -> Option<Vec<Complex64>> {
    let amps: Vec<Complex64> = re
        .into_iter()
        .zip(im)
        .map(|(r, i)| Complex64::new(r, i))
        .collect();
    let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    (norm > 1e-3).then(|| amps.iter().map(|z| z / norm).collect())
}

/// Random 2- or 3-party state with one qudit (dim 2 or 3) per party.
fn small_state() -> impl Strategy<Value = PureState> {
    proptest::collection::vec(2usize..=3, 2..=3)
        .prop_flat_map(|dims| {
            let d: usize = dims.iter().product();
            (
                Just(dims),
                proptest::collection::vec(-1.0..1.0f64, d),
                proptest::collection::vec(-1.0..1.0f64, d),
            )
        })
        .prop_filter_map("norm too small", |(dims, re, im)| {
            normalized(re, im).map(|amps| PureState::new(layout_of(&dims), amps).unwrap())
        })
}

/// Oracle digit extraction: party `p`'s digit of flat index `idx`, computed
/// from the dims alone.
fn digit(dims: &[usize], p: usize, idx: usize) -> usize {
    let stride: usize = dims[p + 1..].iter().product();
    (idx / stride) % dims[p]
}

proptest! {
    #[test]
    fn single_party_reduction_matches_brute_force(s in small_state()) {
        let dims: Vec<usize> = s.layout().parties().iter().map(|p| p.dims[0]).collect();
        for p in 0..dims.len() {
            let rho = s.partial_trace(&[PartyId(p)]).unwrap();
            let mut oracle = DMatrix::<Complex64>::zeros(dims[p], dims[p]);
            for x in 0..s.dim() {
                for y in 0..s.dim() {
                    let rest_match = (0..dims.len())
                        .filter(|&q| q != p)
                        .all(|q| digit(&dims, q, x) == digit(&dims, q, y));
                    if rest_match {
                        oracle[(digit(&dims, p, x), digit(&dims, p, y))] +=
                            s.amplitudes()[x] * s.amplitudes()[y].conj();
                    }
                }
            }
            let diff = (rho.matrix() - &oracle).norm();
            prop_assert!(diff < 1e-10, "party {p}: reduction off by {diff}");
        }
    }

    #[test]
    fn tensor_amplitudes_are_products(a in small_state(), b in small_state()) {
        // Rename the second factor so the combined layout stays valid.
        let renamed = RegisterLayout::new(
            b.layout()
                .parties()
                .iter()
                .map(|p| Party { name: format!("Q{}", p.name), dims: p.dims.clone() })
                .collect(),
        )
        .unwrap();
        let b = PureState::new(renamed, b.amplitudes().to_vec()).unwrap();
        let t = a.tensor(&b).unwrap();
        for i in 0..a.dim() {
            for j in 0..b.dim() {
                let expect = a.amplitudes()[i] * b.amplitudes()[j];
                let got = t.amplitudes()[i * b.dim() + j];
                prop_assert!((got - expect).norm() < 1e-12);
            }
        }
        // Reducing away the second factor recovers the first as a pure state.
        let keep: Vec<PartyId> = (0..a.layout().party_count()).map(PartyId).collect();
        let rho = t.partial_trace(&keep).unwrap();
        let diff = (rho.matrix() - a.to_density().matrix()).norm();
        prop_assert!(diff < 1e-10);
    }

    #[test]
    fn local_application_matches_embedded_operator(
        s in small_state(),
        entries in proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 9),
    ) {
        let dims: Vec<usize> = s.layout().parties().iter().map(|p| p.dims[0]).collect();
        for p in 0..dims.len() {
            let d = dims[p];
            let op = DMatrix::from_fn(d, d, |r, c| {
                let (re, im) = entries[r * d + c];
                Complex64::new(re, im)
            });
            let (post, w) = s.apply_local(PartyId(p), &op).unwrap();
            // Oracle: apply the operator digit-wise to the raw vector.
            let mut raw = vec![Complex64::ZERO; s.dim()];
            for (x, amp) in s.amplitudes().iter().enumerate() {
                let dx = digit(&dims, p, x);
                let stride: usize = dims[p + 1..].iter().product();
                for r in 0..d {
                    let target = x - dx * stride + r * stride;
                    raw[target] += op[(r, dx)] * amp;
                }
            }
            let norm2: f64 = raw.iter().map(|z| z.norm_sqr()).sum();
            prop_assert!((w - norm2).abs() < 1e-10);
            if norm2 > 1e-9 {
                let scale = norm2.sqrt();
                for (got, want) in post.amplitudes().iter().zip(&raw) {
                    prop_assert!((got - want / scale).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn fusing_preserves_overlaps(a in small_state()) {
        // Pair the state with a deterministic partner on the same layout.
        let mut amps: Vec<Complex64> = a.amplitudes().to_vec();
        amps.rotate_right(1);
        let b = PureState::new(a.layout().clone(), amps).unwrap();
        let before = a.overlap(&b).unwrap();
        let fa = a.fuse_parties(PartyId(0), PartyId(1)).unwrap();
        let fb = b.fuse_parties(PartyId(0), PartyId(1)).unwrap();
        let after = fa.overlap(&fb).unwrap();
        prop_assert!((before - after).norm() < 1e-12);
    }

    #[test]
    fn moving_a_qudit_preserves_overlaps(a in small_state()) {
        let mut amps: Vec<Complex64> = a.amplitudes().to_vec();
        amps.reverse();
        let b = PureState::new(a.layout().clone(), amps).unwrap();
        let last = PartyId(a.layout().party_count() - 1);
        let before = a.overlap(&b).unwrap();
        let ma = a.move_qudit(PartyId(0), 0, last).unwrap();
        let mb = b.move_qudit(PartyId(0), 0, last).unwrap();
        prop_assert!((before - ma.overlap(&mb).unwrap()).norm() < 1e-12);
    }

    #[test]
    fn group_indexer_round_trips(s in small_state()) {
        use locclab_core::qstate::GroupIndexer;
        let m = s.layout().party_count();
        let members: Vec<PartyId> = (0..m).step_by(2).map(PartyId).collect();
        let gi = GroupIndexer::new(s.layout(), &members);
        for g in 0..gi.dim() {
            prop_assert_eq!(gi.extract(gi.embed(g)), g);
        }
    }
}
