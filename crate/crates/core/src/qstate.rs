//! Registers, pure states, and density matrices.
//!
//! A register is an ordered list of named parties, each holding an ordered
//! list of qudits. Flat amplitude indexing is party-major with the first
//! party most significant, and qudit-major inside each party. All other
//! modules build on the indexing helpers here rather than rolling their own
//! digit arithmetic.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// States must stay normalized to within this tolerance.
pub const NORM_TOL: f64 = 1e-9;
/// Hermiticity / trace / eigenvalue slack accepted when validating density
/// matrices assembled from floating-point arithmetic.
pub const DENSITY_TOL: f64 = 1e-8;
/// A reduced state with purity at least `1 - PURITY_TOL` counts as pure.
pub const PURITY_TOL: f64 = 1e-9;

/// Default cap on the number of amplitudes a register may address.
pub const DEFAULT_DIM_GUARD: u64 = 1 << 20;

static DIM_GUARD: AtomicU64 = AtomicU64::new(0);

/// Current amplitude-count guard. Initialized from `LOCCLAB_DIM_GUARD` on
/// first use, falling back to [`DEFAULT_DIM_GUARD`].
pub fn dim_guard() -> u64 {
    let v = DIM_GUARD.load(Ordering::Relaxed);
    if v != 0 {
        return v;
    }
    let v = std::env::var("LOCCLAB_DIM_GUARD")
        .ok()
        .and_then(|s| s.trim().parse::<u64>().ok())
        .filter(|&g| g > 0)
        .unwrap_or(DEFAULT_DIM_GUARD);
    DIM_GUARD.store(v, Ordering::Relaxed);
    v
}

/// Override the amplitude-count guard for the whole process.
pub fn set_dim_guard(guard: u64) {
    DIM_GUARD.store(guard.max(1), Ordering::Relaxed);
}

/// Index of a party within a [`RegisterLayout`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PartyId(pub usize);

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One named party and the dimensions of the qudits it holds.
///
/// An empty `dims` list is a party that currently holds nothing (local
/// dimension one); teleport receivers start out this way.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Party {
    pub name: String,
    pub dims: Vec<usize>,
}

/// Ordered collection of parties defining the flat indexing of a state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterLayout {
    parties: Vec<Party>,
}

impl RegisterLayout {
    pub fn new(parties: Vec<Party>) -> Result<Self> {
        if parties.is_empty() {
            return Err(Error::InvalidSubset("layout needs at least one party".into()));
        }
        for p in &parties {
            if p.name.is_empty() {
                return Err(Error::Malformed("party name must be non-empty".into()));
            }
            if let Some(&d) = p.dims.iter().find(|&&d| d < 2) {
                return Err(Error::Malformed(format!(
                    "party {} lists a qudit of dimension {d}, minimum is 2",
                    p.name
                )));
            }
        }
        for i in 1..parties.len() {
            if parties[..i].iter().any(|q| q.name == parties[i].name) {
                return Err(Error::Malformed(format!(
                    "duplicate party name {}",
                    parties[i].name
                )));
            }
        }
        let layout = RegisterLayout { parties };
        layout.check_guard()?;
        Ok(layout)
    }

    /// Convenience constructor from `(name, dims)` pairs.
    pub fn from_pairs<S: Into<String>>(pairs: Vec<(S, Vec<usize>)>) -> Result<Self> {
        Self::new(
            pairs
                .into_iter()
                .map(|(name, dims)| Party { name: name.into(), dims })
                .collect(),
        )
    }

    fn check_guard(&self) -> Result<()> {
        let guard = dim_guard();
        let mut total: u128 = 1;
        for p in &self.parties {
            for &d in &p.dims {
                total = total.saturating_mul(d as u128);
                if total > guard as u128 {
                    return Err(Error::DimensionLimit { required: total, guard });
                }
            }
        }
        Ok(())
    }

    pub fn party_count(&self) -> usize {
        self.parties.len()
    }

    pub fn parties(&self) -> &[Party] {
        &self.parties
    }

    pub fn party(&self, id: PartyId) -> Result<&Party> {
        self.parties
            .get(id.0)
            .ok_or_else(|| Error::InvalidSubset(format!("party index {} out of range", id.0)))
    }

    pub fn party_ids(&self) -> impl Iterator<Item = PartyId> + '_ {
        (0..self.parties.len()).map(PartyId)
    }

    pub fn index_of(&self, name: &str) -> Option<PartyId> {
        self.parties.iter().position(|p| p.name == name).map(PartyId)
    }

    /// Local dimension of one party (1 for an empty party).
    pub fn party_dim(&self, id: PartyId) -> usize {
        self.parties[id.0].dims.iter().product()
    }

    /// Total amplitude count of the register.
    pub fn total_dim(&self) -> usize {
        self.parties.iter().flat_map(|p| p.dims.iter()).product()
    }

    /// Product of the local dimensions of all parties after `id`; the weight
    /// of party `id`'s digit in the flat index.
    pub fn party_stride(&self, id: PartyId) -> usize {
        self.parties[id.0 + 1..]
            .iter()
            .flat_map(|p| p.dims.iter())
            .product()
    }

    /// Qudit dimensions in slot order (party-major, qudit-major inside).
    pub fn slot_dims(&self) -> Vec<usize> {
        self.parties.iter().flat_map(|p| p.dims.iter().copied()).collect()
    }

    /// Slot index of the first qudit of party `id`.
    pub fn slot_offset(&self, id: PartyId) -> usize {
        self.parties[..id.0].iter().map(|p| p.dims.len()).sum()
    }

    pub fn names(&self) -> Vec<String> {
        self.parties.iter().map(|p| p.name.clone()).collect()
    }

    pub fn describe(&self) -> String {
        self.parties
            .iter()
            .map(|p| {
                let dims: Vec<String> = p.dims.iter().map(|d| d.to_string()).collect();
                format!("{}[{}]", p.name, dims.join(","))
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Maps flat register indices to the combined digit of a party subset.
///
/// The combined digit orders the subset's parties ascending by index, first
/// party most significant, matching the flat convention restricted to the
/// subset.
#[derive(Debug, Clone)]
pub struct GroupIndexer {
    strides_in_state: Vec<usize>,
    dims: Vec<usize>,
    group_strides: Vec<usize>,
    dim: usize,
}

impl GroupIndexer {
    /// `members` must be sorted ascending and in range.
    pub fn new(layout: &RegisterLayout, members: &[PartyId]) -> Self {
        let dims: Vec<usize> = members.iter().map(|&p| layout.party_dim(p)).collect();
        let strides_in_state = members.iter().map(|&p| layout.party_stride(p)).collect();
        let mut group_strides = vec![1usize; dims.len()];
        for i in (0..dims.len().saturating_sub(1)).rev() {
            group_strides[i] = group_strides[i + 1] * dims[i + 1];
        }
        let dim = dims.iter().product();
        GroupIndexer { strides_in_state, dims, group_strides, dim }
    }

    /// Combined dimension of the subset.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Combined digit of the subset inside flat index `idx`.
    pub fn extract(&self, idx: usize) -> usize {
        let mut out = 0;
        for k in 0..self.dims.len() {
            let digit = (idx / self.strides_in_state[k]) % self.dims[k];
            out += digit * self.group_strides[k];
        }
        out
    }

    /// Contribution to the flat index of setting the subset's combined digit
    /// to `group_idx` (all other parties at digit zero).
    pub fn embed(&self, group_idx: usize) -> usize {
        let mut out = 0;
        for k in 0..self.dims.len() {
            let digit = (group_idx / self.group_strides[k]) % self.dims[k];
            out += digit * self.strides_in_state[k];
        }
        out
    }
}

/// Normalized pure state over a register.
#[derive(Debug, Clone)]
pub struct PureState {
    layout: RegisterLayout,
    amps: Vec<Complex64>,
}

impl PureState {
    /// Validates length and normalization (within [`NORM_TOL`]), then snaps
    /// the norm to exactly one.
    pub fn new(layout: RegisterLayout, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != layout.total_dim() {
            return Err(Error::InvalidState(format!(
                "{} amplitudes supplied for a register of dimension {}",
                amps.len(),
                layout.total_dim()
            )));
        }
        if amps.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidState("non-finite amplitude".into()));
        }
        let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidState(format!(
                "norm {norm:.12} deviates from 1 by more than {NORM_TOL:.0e}"
            )));
        }
        let mut s = PureState { layout, amps };
        s.renormalize();
        Ok(s)
    }

    /// Computational basis state `|flat⟩`.
    pub fn computational(layout: RegisterLayout, flat: usize) -> Result<Self> {
        let d = layout.total_dim();
        if flat >= d {
            return Err(Error::InvalidState(format!(
                "basis index {flat} out of range for dimension {d}"
            )));
        }
        let mut amps = vec![Complex64::ZERO; d];
        amps[flat] = Complex64::ONE;
        Ok(PureState { layout, amps })
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub(crate) fn renormalize(&mut self) {
        let n = self.norm();
        // Skipping near-unit norms keeps normalization idempotent at the bit
        // level, so serialization round trips reload identical amplitudes.
        if n > 0.0 && (n - 1.0).abs() > 1e-14 {
            for z in &mut self.amps {
                *z /= n;
            }
        }
    }

    /// Inner product `⟨self|other⟩`.
    pub fn overlap(&self, other: &PureState) -> Result<Complex64> {
        if self.layout != other.layout {
            return Err(Error::LayoutMismatch(format!(
                "{} vs {}",
                self.layout.describe(),
                other.layout.describe()
            )));
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// `|⟨self|other⟩|²`, the squared-overlap fidelity for pure states.
    pub fn fidelity(&self, other: &PureState) -> Result<f64> {
        Ok(self.overlap(other)?.norm_sqr())
    }

    /// Tensor product; `self`'s parties come first and stay most significant.
    pub fn tensor(&self, other: &PureState) -> Result<PureState> {
        let mut parties = self.layout.parties.clone();
        parties.extend(other.layout.parties.iter().cloned());
        let layout = RegisterLayout::new(parties)?;
        let mut amps = Vec::with_capacity(self.amps.len() * other.amps.len());
        for a in &self.amps {
            for b in &other.amps {
                amps.push(a * b);
            }
        }
        Ok(PureState { layout, amps })
    }

    pub fn to_density(&self) -> DensityMatrix {
        let d = self.dim();
        let mut mat = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                mat[(i, j)] = self.amps[i] * self.amps[j].conj();
            }
        }
        DensityMatrix { layout: self.layout.clone(), mat }
    }

    /// Validates `keep` as a nonempty proper subset and returns it sorted.
    fn checked_subset(&self, keep: &[PartyId]) -> Result<Vec<PartyId>> {
        let m = self.layout.party_count();
        let mut keep: Vec<PartyId> = keep.to_vec();
        keep.sort();
        keep.dedup();
        if keep.len() != keep.iter().filter(|p| p.0 < m).count() {
            return Err(Error::InvalidSubset("party index out of range".into()));
        }
        if keep.is_empty() {
            return Err(Error::InvalidSubset("empty subset".into()));
        }
        if keep.len() == m {
            return Err(Error::InvalidSubset(
                "subset must be proper; tracing out nothing is not a reduction".into(),
            ));
        }
        Ok(keep)
    }

    /// Reduced density matrix on `keep` (any order, duplicates ignored); the
    /// reduced layout lists the kept parties in their original order.
    pub fn partial_trace(&self, keep: &[PartyId]) -> Result<DensityMatrix> {
        let keep = self.checked_subset(keep)?;
        let drop: Vec<PartyId> = self
            .layout
            .party_ids()
            .filter(|p| !keep.contains(p))
            .collect();
        let ki = GroupIndexer::new(&self.layout, &keep);
        let di = GroupIndexer::new(&self.layout, &drop);
        let mut buckets: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); di.dim()];
        for (i, &a) in self.amps.iter().enumerate() {
            if a != Complex64::ZERO {
                buckets[di.extract(i)].push((ki.extract(i), a));
            }
        }
        let mut mat = DMatrix::zeros(ki.dim(), ki.dim());
        for bucket in &buckets {
            for &(r, za) in bucket {
                for &(c, zb) in bucket {
                    mat[(r, c)] += za * zb.conj();
                }
            }
        }
        let parties = keep.iter().map(|&p| self.layout.parties[p.0].clone()).collect();
        Ok(DensityMatrix {
            layout: RegisterLayout { parties },
            mat,
        })
    }

    /// Applies `op` to party `at` and renormalizes. Returns the post state
    /// and the probability weight `‖op|ψ⟩‖²`. The post state is the zero-fill
    /// state when the weight vanishes; callers treat such outcomes as dropped.
    pub fn apply_local(&self, at: PartyId, op: &DMatrix<Complex64>) -> Result<(PureState, f64)> {
        let d = self
            .layout
            .parties
            .get(at.0)
            .map(|_| self.layout.party_dim(at))
            .ok_or_else(|| Error::InvalidSubset(format!("party index {} out of range", at.0)))?;
        if op.nrows() != d || op.ncols() != d {
            return Err(Error::LayoutMismatch(format!(
                "operator is {}x{} but party {} has local dimension {d}",
                op.nrows(),
                op.ncols(),
                self.layout.parties[at.0].name
            )));
        }
        let stride = self.layout.party_stride(at);
        let block = d * stride;
        let outer = self.amps.len() / block;
        let mut out = vec![Complex64::ZERO; self.amps.len()];
        let mut gathered = vec![Complex64::ZERO; d];
        for o in 0..outer {
            let base_o = o * block;
            for s in 0..stride {
                let base = base_o + s;
                for (j, g) in gathered.iter_mut().enumerate() {
                    *g = self.amps[base + j * stride];
                }
                for r in 0..d {
                    let mut acc = Complex64::ZERO;
                    for (j, g) in gathered.iter().enumerate() {
                        acc += op[(r, j)] * g;
                    }
                    out[base + r * stride] = acc;
                }
            }
        }
        let weight: f64 = out.iter().map(|z| z.norm_sqr()).sum();
        let mut post = PureState { layout: self.layout.clone(), amps: out };
        if weight > 0.0 {
            post.renormalize();
        }
        Ok((post, weight))
    }

    /// Rearranges qudits into `new_layout`. `slot_map[new_slot] = old_slot`
    /// must be a dimension-preserving bijection.
    pub fn relayout(&self, new_layout: RegisterLayout, slot_map: &[usize]) -> Result<PureState> {
        let old_dims = self.layout.slot_dims();
        let new_dims = new_layout.slot_dims();
        if slot_map.len() != new_dims.len() || old_dims.len() != new_dims.len() {
            return Err(Error::LayoutMismatch("slot map has wrong length".into()));
        }
        let mut seen = vec![false; old_dims.len()];
        for (ns, &os) in slot_map.iter().enumerate() {
            if os >= old_dims.len() || seen[os] {
                return Err(Error::LayoutMismatch("slot map is not a bijection".into()));
            }
            seen[os] = true;
            if old_dims[os] != new_dims[ns] {
                return Err(Error::LayoutMismatch(format!(
                    "slot {ns} has dimension {} but maps from a slot of dimension {}",
                    new_dims[ns], old_dims[os]
                )));
            }
        }
        let old_strides = strides_of(&old_dims);
        let new_strides = strides_of(&new_dims);
        let mut amps = vec![Complex64::ZERO; self.amps.len()];
        for (n, slot) in amps.iter_mut().enumerate() {
            let mut o = 0;
            for (ns, &os) in slot_map.iter().enumerate() {
                let digit = (n / new_strides[ns]) % new_dims[ns];
                o += digit * old_strides[os];
            }
            *slot = self.amps[o];
        }
        Ok(PureState { layout: new_layout, amps })
    }

    /// Fuses party `b` into party `a`: the composite sits at `a`'s position
    /// with name `"a+b"` and dims `a ++ b`; `b` disappears and later parties
    /// shift down.
    pub fn fuse_parties(&self, a: PartyId, b: PartyId) -> Result<PureState> {
        if a == b {
            return Err(Error::InvalidSubset("cannot fuse a party with itself".into()));
        }
        self.layout.party(a)?;
        self.layout.party(b)?;
        let mut parties = Vec::new();
        for (i, p) in self.layout.parties.iter().enumerate() {
            if i == a.0 {
                let mut dims = p.dims.clone();
                dims.extend(self.layout.parties[b.0].dims.iter().copied());
                parties.push(Party {
                    name: format!("{}+{}", p.name, self.layout.parties[b.0].name),
                    dims,
                });
            } else if i != b.0 {
                parties.push(p.clone());
            }
        }
        let new_layout = RegisterLayout::new(parties)?;
        // New slot order: parties before/after unchanged, a's slots then b's.
        let mut slot_map = Vec::new();
        for (i, p) in self.layout.parties.iter().enumerate() {
            if i == b.0 {
                continue;
            }
            let off = self.layout.slot_offset(PartyId(i));
            slot_map.extend(off..off + p.dims.len());
            if i == a.0 {
                let boff = self.layout.slot_offset(b);
                slot_map.extend(boff..boff + self.layout.parties[b.0].dims.len());
            }
        }
        self.relayout(new_layout, &slot_map)
    }

    /// Moves qudit `slot_idx` of `from` to the end of `to`'s qudit list.
    pub fn move_qudit(&self, from: PartyId, slot_idx: usize, to: PartyId) -> Result<PureState> {
        if from == to {
            return Err(Error::InvalidSubset("source and destination party coincide".into()));
        }
        let from_party = self.layout.party(from)?.clone();
        self.layout.party(to)?;
        if slot_idx >= from_party.dims.len() {
            return Err(Error::InvalidSubset(format!(
                "party {} has no qudit {slot_idx}",
                from_party.name
            )));
        }
        let moved_old_slot = self.layout.slot_offset(from) + slot_idx;
        let mut parties = self.layout.parties.clone();
        let d = parties[from.0].dims.remove(slot_idx);
        parties[to.0].dims.push(d);
        let new_layout = RegisterLayout::new(parties)?;
        let mut slot_map = Vec::new();
        for (i, p) in self.layout.parties.iter().enumerate() {
            let off = self.layout.slot_offset(PartyId(i));
            for s in 0..p.dims.len() {
                let old_slot = off + s;
                if old_slot != moved_old_slot {
                    slot_map.push(old_slot);
                }
            }
            if i == to.0 {
                slot_map.push(moved_old_slot);
            }
        }
        self.relayout(new_layout, &slot_map)
    }

    /// Removes qudit `slot_idx` of `party`, asserting the state is supported
    /// entirely on digit `digit` there (as after a projective measurement).
    pub fn collapse_slot(&self, party: PartyId, slot_idx: usize, digit: usize) -> Result<PureState> {
        let p = self.layout.party(party)?.clone();
        if slot_idx >= p.dims.len() {
            return Err(Error::InvalidSubset(format!(
                "party {} has no qudit {slot_idx}",
                p.name
            )));
        }
        let slot = self.layout.slot_offset(party) + slot_idx;
        let dims = self.layout.slot_dims();
        let strides = strides_of(&dims);
        let mut parties = self.layout.parties.clone();
        parties[party.0].dims.remove(slot_idx);
        let new_layout = RegisterLayout::new(parties)?;
        let mut amps = vec![Complex64::ZERO; new_layout.total_dim()];
        let mut stray = 0.0f64;
        for (i, &a) in self.amps.iter().enumerate() {
            let dg = (i / strides[slot]) % dims[slot];
            if dg != digit {
                stray += a.norm_sqr();
                continue;
            }
            // Collapse the flat index by deleting the slot's digit.
            let high = i / (strides[slot] * dims[slot]);
            let low = i % strides[slot];
            amps[high * strides[slot] + low] = a;
        }
        if stray > 1e-9 {
            return Err(Error::InvalidState(format!(
                "collapse expected support on digit {digit} only, found stray weight {stray:.3e}"
            )));
        }
        let mut s = PureState { layout: new_layout, amps };
        s.renormalize();
        Ok(s)
    }
}

/// Expands an operator acting on a subset of a party's qudits to the party's
/// full local space. `slots` are positions into `dims`; `op` is indexed by
/// the listed slots' digits, first listed most significant.
pub fn embed_on_slots(dims: &[usize], slots: &[usize], op: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let mut seen = vec![false; dims.len()];
    let mut sub_dim = 1usize;
    for &s in slots {
        if s >= dims.len() || seen[s] {
            return Err(Error::InvalidSubset(format!("bad slot {s} in embedding")));
        }
        seen[s] = true;
        sub_dim *= dims[s];
    }
    if op.nrows() != sub_dim || op.ncols() != sub_dim {
        return Err(Error::LayoutMismatch(format!(
            "operator is {}x{} but the selected slots span dimension {sub_dim}",
            op.nrows(),
            op.ncols()
        )));
    }
    let strides = strides_of(dims);
    let d: usize = dims.iter().product();
    let sub_index = |l: usize| {
        let mut idx = 0;
        for &s in slots {
            idx = idx * dims[s] + (l / strides[s]) % dims[s];
        }
        idx
    };
    let rest_index = |l: usize| {
        let mut idx = 0;
        for (s, &ds) in dims.iter().enumerate() {
            if !seen[s] {
                idx = idx * ds + (l / strides[s]) % ds;
            }
        }
        idx
    };
    let mut out = DMatrix::zeros(d, d);
    for row in 0..d {
        for col in 0..d {
            if rest_index(row) == rest_index(col) {
                out[(row, col)] = op[(sub_index(row), sub_index(col))];
            }
        }
    }
    Ok(out)
}

/// Strides for a dim list, last slot fastest.
pub(crate) fn strides_of(dims: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    strides
}

/// Validated density matrix over a register.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    layout: RegisterLayout,
    mat: DMatrix<Complex64>,
}

impl DensityMatrix {
    pub fn new(layout: RegisterLayout, mat: DMatrix<Complex64>) -> Result<Self> {
        let d = layout.total_dim();
        if mat.nrows() != d || mat.ncols() != d {
            return Err(Error::InvalidState(format!(
                "matrix is {}x{} but the register has dimension {d}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let mut herm_dev = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                herm_dev = herm_dev.max((mat[(i, j)] - mat[(j, i)].conj()).norm());
            }
        }
        if herm_dev > DENSITY_TOL {
            return Err(Error::InvalidState(format!(
                "matrix deviates from Hermitian by {herm_dev:.3e}"
            )));
        }
        let trace: Complex64 = (0..d).map(|i| mat[(i, i)]).sum();
        if (trace.re - 1.0).abs() > DENSITY_TOL || trace.im.abs() > DENSITY_TOL {
            return Err(Error::InvalidState(format!(
                "trace {:.12}{:+.3e}i deviates from 1",
                trace.re, trace.im
            )));
        }
        let dm = DensityMatrix { layout, mat };
        let min = dm.raw_eigenvalues().into_iter().fold(f64::INFINITY, f64::min);
        if min < -DENSITY_TOL {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {min:.3e}"
            )));
        }
        Ok(dm)
    }

    pub(crate) fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    fn raw_eigenvalues(&self) -> Vec<f64> {
        self.mat
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect()
    }

    /// Eigenvalues clamped to `[0, 1]`, sorted descending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self
            .raw_eigenvalues()
            .into_iter()
            .map(|v| v.clamp(0.0, 1.0))
            .collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    /// Largest eigenvalue and its eigenvector.
    pub fn top_eigenpair(&self) -> (f64, Vec<Complex64>) {
        let eig = self.mat.clone().symmetric_eigen();
        let mut best = 0;
        for i in 1..eig.eigenvalues.len() {
            if eig.eigenvalues[i] > eig.eigenvalues[best] {
                best = i;
            }
        }
        let v = eig.eigenvectors.column(best).iter().copied().collect();
        (eig.eigenvalues[best].clamp(0.0, 1.0), v)
    }

    /// `tr ρ²`.
    pub fn purity(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                acc += (self.mat[(i, j)] * self.mat[(j, i)]).re;
            }
        }
        acc
    }

    pub fn is_pure(&self) -> bool {
        self.purity() >= 1.0 - PURITY_TOL
    }

    /// Von Neumann entropy in bits.
    pub fn entropy(&self) -> f64 {
        self.eigenvalues()
            .iter()
            .filter(|&&l| l > 0.0)
            .map(|&l| -l * l.log2())
            .sum()
    }

    /// Reduced density matrix on `keep`, same conventions as
    /// [`PureState::partial_trace`].
    pub fn partial_trace(&self, keep: &[PartyId]) -> Result<DensityMatrix> {
        let m = self.layout.party_count();
        let mut keep: Vec<PartyId> = keep.to_vec();
        keep.sort();
        keep.dedup();
        if keep.iter().any(|p| p.0 >= m) {
            return Err(Error::InvalidSubset("party index out of range".into()));
        }
        if keep.is_empty() || keep.len() == m {
            return Err(Error::InvalidSubset(
                "subset must be a nonempty proper subset".into(),
            ));
        }
        let drop: Vec<PartyId> = self.layout.party_ids().filter(|p| !keep.contains(p)).collect();
        let ki = GroupIndexer::new(&self.layout, &keep);
        let di = GroupIndexer::new(&self.layout, &drop);
        let mut mat = DMatrix::zeros(ki.dim(), ki.dim());
        for a in 0..ki.dim() {
            for b in 0..ki.dim() {
                let mut acc = Complex64::ZERO;
                for e in 0..di.dim() {
                    acc += self.mat[(ki.embed(a) + di.embed(e), ki.embed(b) + di.embed(e))];
                }
                mat[(a, b)] = acc;
            }
        }
        let parties = keep.iter().map(|&p| self.layout.parties[p.0].clone()).collect();
        Ok(DensityMatrix {
            layout: RegisterLayout { parties },
            mat,
        })
    }

    fn sqrt_psd(&self) -> DMatrix<Complex64> {
        let eig = self.mat.clone().symmetric_eigen();
        let d = self.dim();
        let mut out = DMatrix::zeros(d, d);
        for k in 0..d {
            let l = eig.eigenvalues[k].max(0.0).sqrt();
            if l == 0.0 {
                continue;
            }
            let v = eig.eigenvectors.column(k);
            for i in 0..d {
                for j in 0..d {
                    out[(i, j)] += Complex64::from(l) * v[i] * v[j].conj();
                }
            }
        }
        out
    }

    /// Uhlmann fidelity in the squared convention:
    /// `F(ρ,σ) = (tr √(√ρ σ √ρ))²`, which reduces to `|⟨ψ|φ⟩|²` for pure
    /// states.
    pub fn fidelity(&self, other: &DensityMatrix) -> Result<f64> {
        if self.layout != other.layout {
            return Err(Error::LayoutMismatch(format!(
                "{} vs {}",
                self.layout.describe(),
                other.layout.describe()
            )));
        }
        let a = self.sqrt_psd();
        let inner = &a * &other.mat * &a;
        // inner is PSD up to numerics; its eigenvalues' square roots sum to √F.
        let eig = inner.symmetric_eigen();
        let root_sum: f64 = eig
            .eigenvalues
            .iter()
            .map(|&l| l.max(0.0).sqrt())
            .sum();
        Ok((root_sum * root_sum).clamp(0.0, 1.0 + 1e-9).min(1.0))
    }
}
