//! Hilbert spaces and the operators and states living on them.
//!
//! Three elementary spaces are supported, plus binary tensor composites:
//!
//! - [`DickeSpace`]: one ladder of collective pseudo-spin states |J, m>,
//!   m = -J..J ascending. The default constructor picks the maximal
//!   (permutation-symmetric) ladder J = N/2 with dim = N + 1; other ladders
//!   J <= N/2 are available through [`DickeSpace::with_spin`].
//! - [`FockSpace`]: photon-number states |0..n_max>, n ascending.
//! - [`FullAtomSpace`]: all 2^N product states of N two-level atoms, used as
//!   a small-N oracle. Basis index bit i is atom i (atom 0 = least
//!   significant bit), |g> = 0, |e> = 1.
//!
//! Composites are ordered atoms ⊗ field; the composite index is
//! `i_atoms * dim_field + i_field`. All golden files and tests depend on
//! these orderings.
//!
//! Half-integer quantum numbers are stored as twice-the-value integers
//! (`two_j`, `two_m`) so they stay exact.

mod density;
mod operator;

pub use density::{
    DensityMatrix, HERMITICITY_TOL, POSITIVITY_TOL, TRACE_TOL,
};
pub use operator::{
    collective_lowering, dicke_operators, fock_operators, individual_atom_operators, tensor,
    AtomOperators, DickeOperators, FockOperators, SparseOperator,
};

use std::fmt;

use crate::error::{Error, Result};

/// Hard cap on the full 2^N oracle representation.
pub const FULL_ATOM_MAX_ATOMS: u32 = 12;

/// One collective pseudo-spin ladder for N two-level atoms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DickeSpace {
    n_atoms: u32,
    two_j: u32,
}

impl DickeSpace {
    /// The maximal (permutation-symmetric) ladder J = N/2, dim = N + 1.
    pub fn new(n_atoms: u32) -> Result<Self> {
        if n_atoms == 0 {
            return Err(Error::InvalidParameter("n_atoms must be >= 1".into()));
        }
        Ok(Self { n_atoms, two_j: n_atoms })
    }

    /// A ladder with user-chosen J <= N/2 (`two_j` = 2J). J must have the
    /// same parity as N/2, i.e. `two_j ≡ n_atoms (mod 2)`. `two_j = 0`
    /// gives the one-dimensional dark ladder of even N.
    pub fn with_spin(n_atoms: u32, two_j: u32) -> Result<Self> {
        if n_atoms == 0 {
            return Err(Error::InvalidParameter("n_atoms must be >= 1".into()));
        }
        if two_j > n_atoms || (two_j % 2) != (n_atoms % 2) {
            return Err(Error::InvalidParameter(format!(
                "two_j = {two_j} invalid for n_atoms = {n_atoms}: need two_j <= n_atoms with equal parity"
            )));
        }
        Ok(Self { n_atoms, two_j })
    }

    pub fn n_atoms(&self) -> u32 {
        self.n_atoms
    }

    /// 2J, exact.
    pub fn two_j(&self) -> u32 {
        self.two_j
    }

    pub fn j(&self) -> f64 {
        self.two_j as f64 / 2.0
    }

    pub fn dim(&self) -> usize {
        self.two_j as usize + 1
    }

    /// 2m at basis index `idx` (m ascending: idx 0 is m = -J).
    pub fn two_m_at(&self, idx: usize) -> i64 {
        -(self.two_j as i64) + 2 * idx as i64
    }

    pub fn index_of_two_m(&self, two_m: i64) -> Result<usize> {
        let two_j = self.two_j as i64;
        if two_m.abs() > two_j || (two_m - two_j) % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "two_m = {two_m} outside ladder with two_j = {two_j}"
            )));
        }
        Ok(((two_m + two_j) / 2) as usize)
    }
}

/// Truncated photon-number space, |0..n_max>.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FockSpace {
    n_max: u32,
}

impl FockSpace {
    pub fn new(n_max: u32) -> Self {
        Self { n_max }
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        self.n_max as usize + 1
    }
}

/// Full 2^N product space of N two-level atoms (small-N oracle).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FullAtomSpace {
    n_atoms: u32,
}

impl FullAtomSpace {
    pub fn new(n_atoms: u32) -> Result<Self> {
        if n_atoms == 0 {
            return Err(Error::InvalidParameter("n_atoms must be >= 1".into()));
        }
        if n_atoms > FULL_ATOM_MAX_ATOMS {
            return Err(Error::InvalidParameter(format!(
                "n_atoms = {n_atoms} exceeds the 2^N oracle cap of {FULL_ATOM_MAX_ATOMS}"
            )));
        }
        Ok(Self { n_atoms })
    }

    pub fn n_atoms(&self) -> u32 {
        self.n_atoms
    }

    pub fn dim(&self) -> usize {
        1usize << self.n_atoms
    }
}

/// Space tag carried by every operator and state.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Space {
    Dicke(DickeSpace),
    Fock(FockSpace),
    FullAtom(FullAtomSpace),
    /// Binary composite, by convention atoms ⊗ field.
    Tensor(Box<Space>, Box<Space>),
}

impl Space {
    pub fn dim(&self) -> usize {
        match self {
            Space::Dicke(s) => s.dim(),
            Space::Fock(s) => s.dim(),
            Space::FullAtom(s) => s.dim(),
            Space::Tensor(a, b) => a.dim() * b.dim(),
        }
    }

    pub fn tensor(left: Space, right: Space) -> Space {
        Space::Tensor(Box::new(left), Box::new(right))
    }

    /// The two factors of a composite space, if this is one.
    pub fn factors(&self) -> Option<(&Space, &Space)> {
        match self {
            Space::Tensor(a, b) => Some((a, b)),
            _ => None,
        }
    }
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Space::Dicke(s) => write!(f, "dicke(n={}, 2j={})", s.n_atoms, s.two_j),
            Space::Fock(s) => write!(f, "fock(n_max={})", s.n_max),
            Space::FullAtom(s) => write!(f, "atoms2n(n={})", s.n_atoms),
            Space::Tensor(a, b) => write!(f, "{a} ⊗ {b}"),
        }
    }
}
