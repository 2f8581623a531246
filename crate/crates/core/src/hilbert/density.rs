//! Density matrices with construction-time physicality checks.

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use super::{DickeSpace, FullAtomSpace, Space};
use crate::error::{Error, Result};
use crate::linalg;

/// |trace - 1| allowed at construction.
pub const TRACE_TOL: f64 = 1e-9;
/// max |rho - rho^dagger| allowed at construction.
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Most negative eigenvalue allowed at construction.
pub const POSITIVITY_TOL: f64 = 1e-9;

/// Hermitian, unit-trace, positive-semidefinite state on a tagged space.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    space: Space,
    matrix: Array2<Complex64>,
}

impl DensityMatrix {
    /// Validates trace, Hermiticity, and positivity before accepting.
    pub fn new(space: Space, matrix: Array2<Complex64>) -> Result<Self> {
        let dim = space.dim();
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::SpaceMismatch(format!(
                "matrix is {}x{} but {space} has dim {dim}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let tr = linalg::trace(&matrix.view());
        if (tr - Complex64::new(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(Error::NotDensityMatrix(format!(
                "trace = {tr} deviates from 1 by more than {TRACE_TOL:.0e}"
            )));
        }
        let herm = linalg::hermiticity_defect(&matrix.view());
        if herm > HERMITICITY_TOL {
            return Err(Error::NotDensityMatrix(format!(
                "Hermiticity defect {herm:.3e} exceeds {HERMITICITY_TOL:.0e}"
            )));
        }
        let min_eig = linalg::min_eigenvalue_hermitian(&matrix.view());
        if min_eig < -POSITIVITY_TOL {
            return Err(Error::NotDensityMatrix(format!(
                "minimum eigenvalue {min_eig:.3e} below -{POSITIVITY_TOL:.0e}"
            )));
        }
        Ok(Self { space, matrix })
    }

    /// |psi><psi| for a normalized amplitude vector.
    pub fn from_pure(space: Space, amplitudes: &Array1<Complex64>) -> Result<Self> {
        let dim = space.dim();
        if amplitudes.len() != dim {
            return Err(Error::SpaceMismatch(format!(
                "amplitude vector has length {} but {space} has dim {dim}",
                amplitudes.len()
            )));
        }
        let mut m = Array2::zeros((dim, dim));
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] = amplitudes[i] * amplitudes[j].conj();
            }
        }
        Self::new(space, m)
    }

    /// Projector onto a single basis state.
    pub fn basis_state(space: Space, index: usize) -> Result<Self> {
        let dim = space.dim();
        if index >= dim {
            return Err(Error::InvalidParameter(format!(
                "basis index {index} outside dim {dim}"
            )));
        }
        let mut m = Array2::zeros((dim, dim));
        m[(index, index)] = Complex64::new(1.0, 0.0);
        Ok(Self { space, matrix: m })
    }

    /// |J, m><J, m| on a Dicke ladder, `two_m` = 2m.
    pub fn dicke_state(space: &DickeSpace, two_m: i64) -> Result<Self> {
        let idx = space.index_of_two_m(two_m)?;
        Self::basis_state(Space::Dicke(*space), idx)
    }

    /// Fully excited ladder state m = +J.
    pub fn dicke_excited(space: &DickeSpace) -> Self {
        Self::basis_state(Space::Dicke(*space), space.dim() - 1).unwrap()
    }

    /// Collective ground state m = -J.
    pub fn dicke_ground(space: &DickeSpace) -> Self {
        Self::basis_state(Space::Dicke(*space), 0).unwrap()
    }

    /// Product basis state of the full 2^N space; bit i of `bits` is atom i
    /// (1 = excited).
    pub fn full_atom_state(space: &FullAtomSpace, bits: u32) -> Result<Self> {
        Self::basis_state(Space::FullAtom(*space), bits as usize)
    }

    /// All atoms excited.
    pub fn full_atom_excited(space: &FullAtomSpace) -> Self {
        Self::basis_state(Space::FullAtom(*space), space.dim() - 1).unwrap()
    }

    /// Two-atom singlet (|eg> - |ge>)/sqrt(2), the unique N = 2 dark state.
    ///
    /// For larger even N the J = 0 subspace is degenerate, so no canonical
    /// dark state exists; callers must construct one explicitly.
    pub fn singlet_pair(space: &FullAtomSpace) -> Result<Self> {
        if space.n_atoms() != 2 {
            return Err(Error::InvalidParameter(format!(
                "the singlet dark state is only defined for n_atoms = 2 (got {})",
                space.n_atoms()
            )));
        }
        let inv = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let amps = ndarray::array![
            Complex64::new(0.0, 0.0),
            inv,          // |eg>: atom 0 excited
            -inv,         // |ge>: atom 1 excited
            Complex64::new(0.0, 0.0),
        ];
        Self::from_pure(Space::FullAtom(*space), &amps)
    }

    pub fn maximally_mixed(space: Space) -> Self {
        let dim = space.dim();
        let mut m = Array2::zeros((dim, dim));
        let p = Complex64::new(1.0 / dim as f64, 0.0);
        for i in 0..dim {
            m[(i, i)] = p;
        }
        Self { space, matrix: m }
    }

    /// rho_a ⊗ rho_b on the composite space.
    pub fn tensor_product(&self, other: &Self) -> Self {
        let space = Space::tensor(self.space.clone(), other.space.clone());
        let (da, db) = (self.dim(), other.dim());
        let mut m = Array2::zeros((da * db, da * db));
        for i in 0..da {
            for j in 0..da {
                let v = self.matrix[(i, j)];
                if v.re == 0.0 && v.im == 0.0 {
                    continue;
                }
                for k in 0..db {
                    for l in 0..db {
                        m[(i * db + k, j * db + l)] = v * other.matrix[(k, l)];
                    }
                }
            }
        }
        Self { space, matrix: m }
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn matrix(&self) -> &Array2<Complex64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> Complex64 {
        linalg::trace(&self.matrix.view())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue_hermitian(&self.matrix.view())
    }

    /// tr(op * rho).
    pub fn expectation(&self, op: &super::SparseOperator) -> Result<Complex64> {
        if op.space() != &self.space {
            return Err(Error::SpaceMismatch(format!(
                "operator on {} applied to state on {}",
                op.space(),
                self.space
            )));
        }
        Ok(op.expectation_view(&self.matrix.view()))
    }

    /// Trace out one factor of a composite state, keeping the subsystem whose
    /// tag equals `keep`. If both factors carry the same tag the left one is
    /// kept.
    pub fn partial_trace(&self, keep: &Space) -> Result<DensityMatrix> {
        let (left, right) = self.space.factors().ok_or_else(|| {
            Error::UnknownSubsystem(format!(
                "state on {} is not a composite; cannot trace",
                self.space
            ))
        })?;
        let (da, db) = (left.dim(), right.dim());
        if keep == left {
            let mut m = Array2::zeros((da, da));
            for i in 0..da {
                for j in 0..da {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for k in 0..db {
                        acc += self.matrix[(i * db + k, j * db + k)];
                    }
                    m[(i, j)] = acc;
                }
            }
            DensityMatrix::new(left.clone(), m)
        } else if keep == right {
            let mut m = Array2::zeros((db, db));
            for k in 0..db {
                for l in 0..db {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for i in 0..da {
                        acc += self.matrix[(i * db + k, i * db + l)];
                    }
                    m[(k, l)] = acc;
                }
            }
            DensityMatrix::new(right.clone(), m)
        } else {
            Err(Error::UnknownSubsystem(format!(
                "{keep} is neither factor of {}",
                self.space
            )))
        }
    }

    /// Isometric embedding of a maximal-ladder Dicke state into the
    /// permutation-symmetric subspace of the full 2^N space.
    pub fn symmetric_embed(&self, target: &FullAtomSpace) -> Result<DensityMatrix> {
        let dicke = match &self.space {
            Space::Dicke(d) if d.two_j() == d.n_atoms() => *d,
            Space::Dicke(_) => {
                return Err(Error::InvalidParameter(
                    "symmetric_embed requires the maximal ladder J = N/2".into(),
                ))
            }
            other => {
                return Err(Error::SpaceMismatch(format!(
                    "symmetric_embed expects a Dicke-space state, got {other}"
                )))
            }
        };
        let n = dicke.n_atoms();
        if n != target.n_atoms() {
            return Err(Error::SpaceMismatch(format!(
                "Dicke state has {} atoms but target has {}",
                n,
                target.n_atoms()
            )));
        }
        // |J, m> -> (1/sqrt(C(N,k))) sum over bitstrings with popcount k,
        // k = (2m + N)/2
        let dim_full = target.dim();
        let inv_sqrt: Vec<f64> = (0..=n)
            .map(|k| 1.0 / (binomial(n, k as usize) as f64).sqrt())
            .collect();
        let mut m = Array2::zeros((dim_full, dim_full));
        for b in 0..dim_full {
            let kb = (b as u32).count_ones() as usize;
            for bp in 0..dim_full {
                let kp = (bp as u32).count_ones() as usize;
                let v = self.matrix[(kb, kp)];
                if v.re != 0.0 || v.im != 0.0 {
                    m[(b, bp)] = v * inv_sqrt[kb] * inv_sqrt[kp];
                }
            }
        }
        DensityMatrix::new(Space::FullAtom(*target), m)
    }
}

fn binomial(n: u32, k: usize) -> u64 {
    let k = k.min(n as usize - k.min(n as usize));
    let mut acc = 1u64;
    for i in 0..k {
        acc = acc * (n as u64 - i as u64) / (i as u64 + 1);
    }
    acc
}
