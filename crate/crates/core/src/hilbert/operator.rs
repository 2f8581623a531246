//! Sparse operators tagged with their Hilbert space.

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;

use super::{DickeSpace, FockSpace, FullAtomSpace, Space};
use crate::error::{Error, Result};

/// Complex sparse matrix on a declared Hilbert space.
///
/// Entries are kept sorted by (row, col) with duplicates merged and exact
/// zeros dropped, so equality of the entry lists is equality of operators.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    space: Space,
    dim: usize,
    entries: Vec<(u32, u32, Complex64)>,
}

impl SparseOperator {
    pub fn from_triplets(
        space: Space,
        triplets: impl IntoIterator<Item = (u32, u32, Complex64)>,
    ) -> Result<Self> {
        let dim = space.dim();
        let mut entries: Vec<(u32, u32, Complex64)> = Vec::new();
        for (r, c, v) in triplets {
            if r as usize >= dim || c as usize >= dim {
                return Err(Error::InvalidParameter(format!(
                    "entry ({r}, {c}) outside {dim}x{dim} operator on {space}"
                )));
            }
            entries.push((r, c, v));
        }
        Ok(Self::from_unsorted(space, dim, entries))
    }

    fn from_unsorted(space: Space, dim: usize, mut entries: Vec<(u32, u32, Complex64)>) -> Self {
        entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(u32, u32, Complex64)> = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        merged.retain(|&(_, _, v)| v.re != 0.0 || v.im != 0.0);
        Self { space, dim, entries: merged }
    }

    pub fn identity(space: Space) -> Self {
        let dim = space.dim();
        let one = Complex64::new(1.0, 0.0);
        let entries = (0..dim as u32).map(|i| (i, i, one)).collect();
        Self { space, dim, entries }
    }

    pub fn zero(space: Space) -> Self {
        let dim = space.dim();
        Self { space, dim, entries: Vec::new() }
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        self.entries.iter().map(|&(r, c, v)| (r as usize, c as usize, v))
    }

    /// Conjugate transpose. Exact: entries are swapped and conjugated.
    pub fn adjoint(&self) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|&(r, c, v)| (c, r, v.conj()))
            .collect();
        Self::from_unsorted(self.space.clone(), self.dim, entries)
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|&(r, c, v)| (r, c, factor * v))
            .collect();
        Self::from_unsorted(self.space.clone(), self.dim, entries)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_space(other)?;
        let mut entries = self.entries.clone();
        entries.extend_from_slice(&other.entries);
        Ok(Self::from_unsorted(self.space.clone(), self.dim, entries))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scaled(Complex64::new(-1.0, 0.0)))
    }

    /// Sparse-sparse product `self * other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.check_same_space(other)?;
        // bucket rhs entries by row
        let mut row_start = vec![0usize; self.dim + 1];
        for &(r, _, _) in &other.entries {
            row_start[r as usize + 1] += 1;
        }
        for i in 0..self.dim {
            row_start[i + 1] += row_start[i];
        }
        let mut out: Vec<(u32, u32, Complex64)> = Vec::new();
        for &(r, k, v) in &self.entries {
            let (lo, hi) = (row_start[k as usize], row_start[k as usize + 1]);
            for &(_, c, w) in &other.entries[lo..hi] {
                out.push((r, c, v * w));
            }
        }
        Ok(Self::from_unsorted(self.space.clone(), self.dim, out))
    }

    /// Commutator `[self, other]`.
    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.matmul(other)?.sub(&other.matmul(self)?)
    }

    pub fn to_dense(&self) -> Array2<Complex64> {
        let mut m = Array2::zeros((self.dim, self.dim));
        for &(r, c, v) in &self.entries {
            m[(r as usize, c as usize)] += v;
        }
        m
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.entries.iter().fold(0.0_f64, |m, &(_, _, v)| m.max(v.norm()))
    }

    /// `out += coeff * self * x` where `x` and `out` are row-major
    /// `self.dim x ncols` matrices stored flat.
    pub fn apply_left_slice(
        &self,
        x: &[Complex64],
        ncols: usize,
        coeff: Complex64,
        out: &mut [Complex64],
    ) {
        debug_assert_eq!(x.len(), self.dim * ncols);
        debug_assert_eq!(out.len(), self.dim * ncols);
        for &(r, k, v) in &self.entries {
            let cv = coeff * v;
            let x_row = &x[k as usize * ncols..(k as usize + 1) * ncols];
            let o_row = &mut out[r as usize * ncols..(r as usize + 1) * ncols];
            for (o, &xv) in o_row.iter_mut().zip(x_row) {
                *o += cv * xv;
            }
        }
    }

    /// `out += coeff * x * self` where `x` and `out` are row-major
    /// `nrows x self.dim` matrices stored flat.
    pub fn apply_right_slice(
        &self,
        x: &[Complex64],
        nrows: usize,
        coeff: Complex64,
        out: &mut [Complex64],
    ) {
        let p = self.dim;
        debug_assert_eq!(x.len(), nrows * p);
        debug_assert_eq!(out.len(), nrows * p);
        for &(k, c, v) in &self.entries {
            let cv = coeff * v;
            for i in 0..nrows {
                out[i * p + c as usize] += cv * x[i * p + k as usize];
            }
        }
    }

    /// `out += coeff * self * x` for dense `x` in standard layout.
    pub fn apply_left_acc(
        &self,
        x: &ArrayView2<Complex64>,
        coeff: Complex64,
        out: &mut Array2<Complex64>,
    ) {
        let p = x.ncols();
        let xs = x.as_slice().expect("apply_left_acc: x must be standard layout");
        let os = out.as_slice_mut().expect("apply_left_acc: out must be standard layout");
        self.apply_left_slice(xs, p, coeff, os);
    }

    /// `out += coeff * x * self` for dense `x` in standard layout.
    pub fn apply_right_acc(
        &self,
        x: &ArrayView2<Complex64>,
        coeff: Complex64,
        out: &mut Array2<Complex64>,
    ) {
        let n = x.nrows();
        let xs = x.as_slice().expect("apply_right_acc: x must be standard layout");
        let os = out.as_slice_mut().expect("apply_right_acc: out must be standard layout");
        self.apply_right_slice(xs, n, coeff, os);
    }

    /// `tr(self * rho)` without materializing the product.
    pub fn expectation_view(&self, rho: &ArrayView2<Complex64>) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &(r, c, v) in &self.entries {
            acc += v * rho[(c as usize, r as usize)];
        }
        acc
    }

    /// `tr(self * rho)` for a flat row-major `dim x dim` state.
    pub fn expectation_slice(&self, rho: &[Complex64]) -> Complex64 {
        debug_assert_eq!(rho.len(), self.dim * self.dim);
        let mut acc = Complex64::new(0.0, 0.0);
        for &(r, c, v) in &self.entries {
            acc += v * rho[c as usize * self.dim + r as usize];
        }
        acc
    }

    pub(crate) fn check_same_space(&self, other: &Self) -> Result<()> {
        if self.space != other.space {
            return Err(Error::SpaceMismatch(format!(
                "{} vs {}",
                self.space, other.space
            )));
        }
        Ok(())
    }
}

/// Collective spin ladder operators on a [`DickeSpace`].
pub struct DickeOperators {
    pub j_minus: SparseOperator,
    pub j_plus: SparseOperator,
    pub j_z: SparseOperator,
}

/// J-|J,m> = sqrt(J(J+1) - m(m-1)) |J,m-1>, J+ = adjoint(J-), J_z diagonal
/// with entries m.
pub fn dicke_operators(space: &DickeSpace) -> DickeOperators {
    let tag = Space::Dicke(*space);
    let two_j = space.two_j() as i64;
    let mut lowering = Vec::new();
    let mut zs = Vec::new();
    for idx in 0..space.dim() {
        let two_m = space.two_m_at(idx);
        zs.push((idx as u32, idx as u32, Complex64::new(two_m as f64 / 2.0, 0.0)));
        if idx > 0 {
            // J(J+1) - m(m-1) in exact quarter-integer arithmetic
            let num = two_j * (two_j + 2) - two_m * (two_m - 2);
            let coeff = (num as f64 / 4.0).sqrt();
            lowering.push((idx as u32 - 1, idx as u32, Complex64::new(coeff, 0.0)));
        }
    }
    let j_minus = SparseOperator::from_triplets(tag.clone(), lowering).unwrap();
    let j_plus = j_minus.adjoint();
    let j_z = SparseOperator::from_triplets(tag, zs).unwrap();
    DickeOperators { j_minus, j_plus, j_z }
}

/// Cavity-field mode operators on a [`FockSpace`].
pub struct FockOperators {
    pub a: SparseOperator,
    pub a_dagger: SparseOperator,
    pub number: SparseOperator,
}

/// a|n> = sqrt(n)|n-1> up to the truncation; a_dagger = adjoint(a);
/// number = a_dagger * a.
///
/// Truncation artifact (documented): `[a, a_dagger]` equals the identity
/// except for the (n_max, n_max) diagonal entry, which is -n_max.
pub fn fock_operators(space: &FockSpace) -> FockOperators {
    let tag = Space::Fock(*space);
    let mut lowering = Vec::new();
    let mut num = Vec::new();
    for n in 1..=space.n_max() {
        lowering.push((n - 1, n, Complex64::new((n as f64).sqrt(), 0.0)));
    }
    for n in 0..=space.n_max() {
        num.push((n, n, Complex64::new(n as f64, 0.0)));
    }
    let a = SparseOperator::from_triplets(tag.clone(), lowering).unwrap();
    let a_dagger = a.adjoint();
    let number = SparseOperator::from_triplets(tag, num).unwrap();
    FockOperators { a, a_dagger, number }
}

/// Per-atom ladder operators on a [`FullAtomSpace`].
pub struct AtomOperators {
    pub sigma_minus: SparseOperator,
    pub sigma_plus: SparseOperator,
}

/// sigma^-_i = |g>_i<e|_i acting on atom `i`, identity elsewhere.
pub fn individual_atom_operators(space: &FullAtomSpace, i: u32) -> Result<AtomOperators> {
    if i >= space.n_atoms() {
        return Err(Error::AtomIndexOutOfRange { index: i, n_atoms: space.n_atoms() });
    }
    let tag = Space::FullAtom(*space);
    let bit = 1u32 << i;
    let mut lowering = Vec::new();
    for b in 0..space.dim() as u32 {
        if b & bit != 0 {
            lowering.push((b & !bit, b, Complex64::new(1.0, 0.0)));
        }
    }
    let sigma_minus = SparseOperator::from_triplets(tag, lowering).unwrap();
    let sigma_plus = sigma_minus.adjoint();
    Ok(AtomOperators { sigma_minus, sigma_plus })
}

/// Collective lowering sum_i sigma^-_i on the full 2^N space.
pub fn collective_lowering(space: &FullAtomSpace) -> SparseOperator {
    let mut acc = SparseOperator::zero(Space::FullAtom(*space));
    for i in 0..space.n_atoms() {
        let ops = individual_atom_operators(space, i).unwrap();
        acc = acc.add(&ops.sigma_minus).unwrap();
    }
    acc
}

/// Kronecker product with atoms ⊗ field factor ordering: the composite index
/// is `row_a * dim_b + row_b`.
pub fn tensor(a: &SparseOperator, b: &SparseOperator) -> SparseOperator {
    let space = Space::tensor(a.space().clone(), b.space().clone());
    let dim = space.dim();
    let db = b.dim() as u32;
    let mut entries = Vec::with_capacity(a.nnz() * b.nnz());
    for &(ra, ca, va) in &a.entries {
        for &(rb, cb, vb) in &b.entries {
            entries.push((ra * db + rb, ca * db + cb, va * vb));
        }
    }
    SparseOperator::from_unsorted(space, dim, entries)
}
