//! Cuts, Schmidt decompositions, and entanglement classifiers.
//!
//! A cut splits the parties of a register into two complementary groups.
//! Cuts are stored canonically: the explicit side never contains the
//! highest-indexed party, so a bipartition and its complement compare equal.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::qstate::{GroupIndexer, PartyId, PureState, RegisterLayout};

/// Schmidt coefficients at or below this are treated as zero rank.
pub const SCHMIDT_TOL: f64 = 1e-10;
/// A state factorizes across a cut when the top coefficient reaches
/// `1 - FACTORIZABLE_TOL`.
pub const FACTORIZABLE_TOL: f64 = 1e-9;
/// Coefficients closer than this are ordered by their left vectors instead.
const TIE_TOL: f64 = 1e-12;
/// Frobenius slack for the product test in the assistance-zero check.
const PRODUCT_TOL: f64 = 1e-8;

/// Canonical bipartition of a register's parties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cut {
    mask: u64,
    party_count: usize,
}

impl Cut {
    /// Builds the cut separating `members` from the rest, canonicalizing to
    /// the side that excludes the highest-indexed party.
    pub fn new(party_count: usize, members: &[PartyId]) -> Result<Self> {
        if party_count < 2 {
            return Err(Error::InvalidSubset(
                "cuts need at least two parties".into(),
            ));
        }
        if party_count > 63 {
            return Err(Error::InvalidSubset("too many parties for a cut mask".into()));
        }
        let mut mask: u64 = 0;
        for &p in members {
            if p.0 >= party_count {
                return Err(Error::InvalidSubset(format!(
                    "party index {} out of range",
                    p.0
                )));
            }
            mask |= 1 << p.0;
        }
        let full = (1u64 << party_count) - 1;
        if mask == 0 || mask == full {
            return Err(Error::InvalidSubset(
                "cut sides must both be non-empty".into(),
            ));
        }
        if mask & (1 << (party_count - 1)) != 0 {
            mask = full & !mask;
        }
        Ok(Cut { mask, party_count })
    }

    pub fn party_count(&self) -> usize {
        self.party_count
    }

    /// True when `p` lies on the explicit (canonical) side.
    pub fn contains(&self, p: PartyId) -> bool {
        p.0 < self.party_count && self.mask & (1 << p.0) != 0
    }

    /// Parties on the canonical side, ascending.
    pub fn x_side(&self) -> Vec<PartyId> {
        (0..self.party_count)
            .map(PartyId)
            .filter(|&p| self.contains(p))
            .collect()
    }

    /// Parties on the complementary side, ascending.
    pub fn complement(&self) -> Vec<PartyId> {
        (0..self.party_count)
            .map(PartyId)
            .filter(|&p| !self.contains(p))
            .collect()
    }

    /// Display label like `A,B|C`.
    pub fn label(&self, layout: &RegisterLayout) -> String {
        let side = |ps: Vec<PartyId>| {
            ps.iter()
                .map(|&p| layout.parties()[p.0].name.clone())
                .collect::<Vec<_>>()
                .join(",")
        };
        format!("{}|{}", side(self.x_side()), side(self.complement()))
    }

    /// Names of the canonical side, sorted, for report serialization.
    pub fn sorted_names(&self, layout: &RegisterLayout) -> Vec<String> {
        let mut names: Vec<String> = self
            .x_side()
            .iter()
            .map(|&p| layout.parties()[p.0].name.clone())
            .collect();
        names.sort();
        names
    }
}

/// All canonical cuts of an `m`-party register, ascending by mask. Empty for
/// fewer than two parties; `2^(m-1) - 1` cuts otherwise.
pub fn enumerate_cuts(party_count: usize) -> Vec<Cut> {
    if party_count < 2 || party_count > 63 {
        return Vec::new();
    }
    (1..(1u64 << (party_count - 1)))
        .map(|mask| Cut { mask, party_count })
        .collect()
}

/// Schmidt decomposition of a pure state across a cut.
///
/// `left` vectors live on the canonical side's combined space, `right` on the
/// complement's; `state[x,c] = Σ_i coefficients[i] · left[i][x] · right[i][c]`.
#[derive(Debug, Clone)]
pub struct SchmidtDecomposition {
    pub cut: Cut,
    pub coefficients: Vec<f64>,
    pub left: Vec<Vec<Complex64>>,
    pub right: Vec<Vec<Complex64>>,
}

impl SchmidtDecomposition {
    pub fn rank(&self) -> usize {
        self.coefficients.len()
    }

    /// Entanglement entropy in bits across the cut.
    pub fn entropy(&self) -> f64 {
        self.coefficients
            .iter()
            .map(|&a| {
                let p = a * a;
                if p > 0.0 {
                    -p * p.log2()
                } else {
                    0.0
                }
            })
            .sum()
    }

    /// Rebuilds the state vector from the decomposition.
    pub fn reconstruct(&self, layout: &RegisterLayout) -> Result<PureState> {
        let xi = GroupIndexer::new(layout, &self.cut.x_side());
        let ci = GroupIndexer::new(layout, &self.cut.complement());
        let mut amps = vec![Complex64::ZERO; layout.total_dim()];
        for i in 0..self.rank() {
            let a = Complex64::from(self.coefficients[i]);
            for (x, l) in self.left[i].iter().enumerate() {
                if l.norm_sqr() < 1e-30 {
                    continue;
                }
                let xoff = xi.embed(x);
                for (c, r) in self.right[i].iter().enumerate() {
                    amps[xoff + ci.embed(c)] += a * l * r;
                }
            }
        }
        PureState::new(layout.clone(), amps)
    }
}

fn leading_index(v: &[Complex64]) -> usize {
    v.iter()
        .position(|z| z.norm() > 1e-8)
        .unwrap_or(0)
}

/// Schmidt decomposition across `cut`, coefficients sorted descending,
/// coefficients at or below [`SCHMIDT_TOL`] dropped, phases fixed so each
/// left vector's leading component is real positive.
pub fn schmidt(state: &PureState, cut: Cut) -> Result<SchmidtDecomposition> {
    let layout = state.layout();
    if cut.party_count() != layout.party_count() {
        return Err(Error::LayoutMismatch(format!(
            "cut over {} parties applied to a register of {}",
            cut.party_count(),
            layout.party_count()
        )));
    }
    let xi = GroupIndexer::new(layout, &cut.x_side());
    let ci = GroupIndexer::new(layout, &cut.complement());
    let mut m = DMatrix::zeros(xi.dim(), ci.dim());
    for (i, &a) in state.amplitudes().iter().enumerate() {
        m[(xi.extract(i), ci.extract(i))] = a;
    }
    // Factored through the Hermitian eigenproblem of the Gram matrix rather
    // than a direct SVD: the complex SVD can misreport singular values on
    // nearly rank-deficient inputs once vectors are requested, while the
    // symmetric eigensolver stays accurate there.
    let gram = m.adjoint() * &m;
    let eig = gram.symmetric_eigen();
    let mut triples: Vec<(f64, Vec<Complex64>, Vec<Complex64>)> = Vec::new();
    for r in 0..eig.eigenvectors.ncols() {
        let v = eig.eigenvectors.column(r);
        // The image norm, not sqrt(eigenvalue): near the noise floor the
        // eigenvalue loses half its digits, while this keeps the left vector
        // exactly unit length.
        let image = &m * v;
        let sv = image.norm();
        if sv <= SCHMIDT_TOL {
            continue;
        }
        let left: Vec<Complex64> = (image * Complex64::from(1.0 / sv))
            .iter()
            .copied()
            .collect();
        let right: Vec<Complex64> = v.iter().map(|z| z.conj()).collect();
        triples.push((sv, left, right));
    }
    triples.sort_by(|a, b| {
        if (a.0 - b.0).abs() <= TIE_TOL {
            leading_index(&a.1).cmp(&leading_index(&b.1))
        } else {
            b.0.total_cmp(&a.0)
        }
    });
    let mut coefficients = Vec::with_capacity(triples.len());
    let mut left = Vec::with_capacity(triples.len());
    let mut right = Vec::with_capacity(triples.len());
    for (sv, mut l, mut r) in triples {
        let lead = l[leading_index(&l)];
        let phase = lead / lead.norm();
        let w = phase.conj();
        for z in &mut l {
            *z *= w;
        }
        // Left gets w, right gets its conjugate, so products are unchanged.
        for z in &mut r {
            *z *= w.conj();
        }
        coefficients.push(sv);
        left.push(l);
        right.push(r);
    }
    if coefficients.is_empty() {
        return Err(Error::InvalidState(
            "state has no Schmidt weight above the rank cutoff".into(),
        ));
    }
    Ok(SchmidtDecomposition { cut, coefficients, left, right })
}

/// Entanglement entropy in bits across `cut`.
pub fn entropy_across_cut(state: &PureState, cut: Cut) -> Result<f64> {
    Ok(schmidt(state, cut)?.entropy())
}

/// True when the state is a product across `cut` (top Schmidt coefficient at
/// least `1 - FACTORIZABLE_TOL`).
pub fn is_factorizable(state: &PureState, cut: Cut) -> Result<bool> {
    let sd = schmidt(state, cut)?;
    Ok(sd.coefficients[0] >= 1.0 - FACTORIZABLE_TOL)
}

/// First canonical cut across which the state factorizes, if any.
pub fn find_factorizable_cut(state: &PureState) -> Result<Option<Cut>> {
    let m = state.layout().party_count();
    if m < 2 {
        return Err(Error::InvalidSubset(
            "irreducibility needs at least two parties".into(),
        ));
    }
    for cut in enumerate_cuts(m) {
        if is_factorizable(state, cut)? {
            return Ok(Some(cut));
        }
    }
    Ok(None)
}

/// True when the state is entangled across every cut.
pub fn is_irreducible(state: &PureState) -> Result<bool> {
    Ok(find_factorizable_cut(state)?.is_none())
}

/// Outcome of the assistance-zero dichotomy for a helper party.
///
/// With the register split into the helper, a distinguished party `b`, and
/// the rest `c`, the reduced state on `(b, c)` either already factorizes with
/// one factor pure, or the helper can measure so as to leave `b` entangled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EoaAssessment {
    /// `ρ_bc = ρ_b ⊗ |φ⟩⟨φ|_c`: the rest is pure and decoupled.
    ZeroCaseCPure,
    /// `ρ_bc = |φ⟩⟨φ|_b ⊗ ρ_c`: party `b` is pure and decoupled.
    ZeroCaseBPure,
    /// Neither factor is pure; helper measurement can leave `b` entangled.
    Nonzero,
}

/// Classifies whether assisted entanglement between `b` and the rest via
/// `helper` is structurally zero.
pub fn eoa_zero_check(state: &PureState, helper: PartyId, b: PartyId) -> Result<EoaAssessment> {
    let layout = state.layout();
    let m = layout.party_count();
    if m < 3 {
        return Err(Error::InvalidSubset(
            "assistance check needs at least three parties".into(),
        ));
    }
    layout.party(helper)?;
    layout.party(b)?;
    if helper == b {
        return Err(Error::InvalidSubset(
            "helper and target party must differ".into(),
        ));
    }
    let rest: Vec<PartyId> = layout.party_ids().filter(|&p| p != helper).collect();
    let rho_bc = state.partial_trace(&rest)?;
    let b_red = PartyId(rest.iter().position(|&p| p == b).unwrap());
    let c_red: Vec<PartyId> = (0..rest.len())
        .map(PartyId)
        .filter(|&p| p != b_red)
        .collect();
    let rho_b = rho_bc.partial_trace(&[b_red])?;
    let rho_c = rho_bc.partial_trace(&c_red)?;

    // Direct product test, respecting the interleaved party order of bc.
    let bi = GroupIndexer::new(rho_bc.layout(), &[b_red]);
    let ci = GroupIndexer::new(rho_bc.layout(), &c_red);
    let mut frob = 0.0f64;
    let d = rho_bc.dim();
    for r in 0..d {
        for c in 0..d {
            let prod = rho_b.matrix()[(bi.extract(r), bi.extract(c))]
                * rho_c.matrix()[(ci.extract(r), ci.extract(c))];
            frob += (rho_bc.matrix()[(r, c)] - prod).norm_sqr();
        }
    }
    let product_ok = frob.sqrt() <= PRODUCT_TOL;

    if product_ok && rho_c.is_pure() {
        Ok(EoaAssessment::ZeroCaseCPure)
    } else if product_ok && rho_b.is_pure() {
        Ok(EoaAssessment::ZeroCaseBPure)
    } else {
        Ok(EoaAssessment::Nonzero)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn qubits(n: usize) -> RegisterLayout {
        let names = ["A", "B", "C", "D", "E"];
        RegisterLayout::from_pairs(
            (0..n).map(|i| (names[i], vec![2usize])).collect::<Vec<_>>(),
        )
        .unwrap()
    }

    fn bell() -> PureState {
        let r = 0.5f64.sqrt();
        PureState::new(qubits(2), vec![c(r), c(0.0), c(0.0), c(r)]).unwrap()
    }

    fn ghz(n: usize) -> PureState {
        let mut amps = vec![c(0.0); 1 << n];
        let r = 0.5f64.sqrt();
        amps[0] = c(r);
        amps[(1 << n) - 1] = c(r);
        PureState::new(qubits(n), amps).unwrap()
    }

    #[test]
    fn cut_canonicalization_identifies_complements() {
        let a = Cut::new(3, &[PartyId(0)]).unwrap();
        let b = Cut::new(3, &[PartyId(1), PartyId(2)]).unwrap();
        assert_eq!(a, b);
        assert!(a.contains(PartyId(0)));
        assert!(!a.contains(PartyId(2)));
        assert!(Cut::new(3, &[]).is_err());
        assert!(Cut::new(3, &[PartyId(0), PartyId(1), PartyId(2)]).is_err());
    }

    #[test]
    fn cut_count_matches_formula() {
        assert_eq!(enumerate_cuts(2).len(), 1);
        assert_eq!(enumerate_cuts(3).len(), 3);
        assert_eq!(enumerate_cuts(5).len(), 15);
        assert!(enumerate_cuts(1).is_empty());
    }

    #[test]
    fn bell_pair_schmidt() {
        let sd = schmidt(&bell(), Cut::new(2, &[PartyId(0)]).unwrap()).unwrap();
        assert_eq!(sd.rank(), 2);
        assert_abs_diff_eq!(sd.coefficients[0], 0.5f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(sd.coefficients[1], 0.5f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(sd.entropy(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn schmidt_reconstruction_round_trips() {
        let amps = vec![c(0.6), c(0.0), c(0.0), c(0.8)];
        let s = PureState::new(qubits(2), amps).unwrap();
        let sd = schmidt(&s, Cut::new(2, &[PartyId(0)]).unwrap()).unwrap();
        let back = sd.reconstruct(s.layout()).unwrap();
        assert_abs_diff_eq!(s.fidelity(&back).unwrap(), 1.0, epsilon = 1e-12);
        // Phase convention: leading components of left vectors real positive.
        for l in &sd.left {
            let lead = l[super::leading_index(l)];
            assert!(lead.re > 0.0 && lead.im.abs() < 1e-12);
        }
    }

    #[test]
    fn entropy_equal_on_both_sides_of_a_cut() {
        let s = ghz(3);
        let from_a = entropy_across_cut(&s, Cut::new(3, &[PartyId(0)]).unwrap()).unwrap();
        let from_bc =
            entropy_across_cut(&s, Cut::new(3, &[PartyId(1), PartyId(2)]).unwrap()).unwrap();
        assert_abs_diff_eq!(from_a, from_bc, epsilon = 1e-12);
        assert_abs_diff_eq!(from_a, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn product_states_factorize() {
        let s = PureState::computational(qubits(2), 2).unwrap();
        let cut = Cut::new(2, &[PartyId(0)]).unwrap();
        assert!(is_factorizable(&s, cut).unwrap());
        assert!(!is_factorizable(&bell(), cut).unwrap());
    }

    #[test]
    fn ghz_is_irreducible_and_products_are_not() {
        assert!(is_irreducible(&ghz(3)).unwrap());
        let product = PureState::computational(qubits(3), 0).unwrap();
        assert!(!is_irreducible(&product).unwrap());
        let found = find_factorizable_cut(&product).unwrap();
        assert!(found.is_some());
    }

    #[test]
    fn bell_times_pure_factorizes_only_across_the_right_cuts() {
        // (|00>+|11>)/√2 on (A,B), |0> on C.
        let single = RegisterLayout::from_pairs(vec![("C", vec![2])]).unwrap();
        let s = bell()
            .tensor(&PureState::computational(single, 0).unwrap())
            .unwrap();
        let ab_c = Cut::new(3, &[PartyId(2)]).unwrap();
        let a_bc = Cut::new(3, &[PartyId(0)]).unwrap();
        assert!(is_factorizable(&s, ab_c).unwrap());
        assert!(!is_factorizable(&s, a_bc).unwrap());
        assert!(!is_irreducible(&s).unwrap());
    }

    #[test]
    fn eoa_dichotomy_cases() {
        // Bell(A,B) ⊗ |0>_C, helper A, b=B: the rest C is pure -> CPure.
        let single = RegisterLayout::from_pairs(vec![("C", vec![2])]).unwrap();
        let s = bell()
            .tensor(&PureState::computational(single, 0).unwrap())
            .unwrap();
        assert_eq!(
            eoa_zero_check(&s, PartyId(0), PartyId(1)).unwrap(),
            EoaAssessment::ZeroCaseCPure
        );
        // Same state, b=C: the target party is pure -> BPure.
        assert_eq!(
            eoa_zero_check(&s, PartyId(0), PartyId(2)).unwrap(),
            EoaAssessment::ZeroCaseBPure
        );
        // GHZ: helper measurement can create entanglement -> Nonzero.
        assert_eq!(
            eoa_zero_check(&ghz(3), PartyId(0), PartyId(1)).unwrap(),
            EoaAssessment::Nonzero
        );
    }

    #[test]
    fn eoa_check_requires_three_parties() {
        assert!(eoa_zero_check(&bell(), PartyId(0), PartyId(1)).is_err());
    }

    #[test]
    fn w_state_singleton_entropy() {
        let r = (1.0f64 / 3.0).sqrt();
        let mut amps = vec![c(0.0); 8];
        amps[0b001] = c(r);
        amps[0b010] = c(r);
        amps[0b100] = c(r);
        let w = PureState::new(qubits(3), amps).unwrap();
        let h = entropy_across_cut(&w, Cut::new(3, &[PartyId(0)]).unwrap()).unwrap();
        // Reduced spectrum {2/3, 1/3}: entropy log2(3) - 2/3.
        assert_abs_diff_eq!(h, 3f64.log2() - 2.0 / 3.0, epsilon = 1e-12);
    }
}
