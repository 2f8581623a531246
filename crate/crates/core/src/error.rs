//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Two operands live on different Hilbert spaces (or dimensions).
    #[error("space mismatch: {0}")]
    SpaceMismatch(String),

    /// A constructor or operation received an invalid argument.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Atom index outside `0..n_atoms`.
    #[error("atom index {index} out of range for {n_atoms} atoms")]
    AtomIndexOutOfRange { index: u32, n_atoms: u32 },

    /// `partial_trace` was asked to keep a subsystem that is not a factor of
    /// the composite space.
    #[error("unknown subsystem tag: {0}")]
    UnknownSubsystem(String),

    /// A matrix failed the density-matrix invariants.
    #[error("not a density matrix: {0}")]
    NotDensityMatrix(String),

    /// Individual-atom decay requested in the collective (Dicke)
    /// representation without the explicit collective-approximation flag.
    #[error(
        "gamma > 0 is not permutation-symmetric as a per-atom dissipator in the \
         Dicke representation; use the full representation or enable the \
         collective-gamma approximation flag"
    )]
    IndividualDecayInDicke,

    /// The adaptive integrator drove the step size below the resolution of
    /// the time variable.
    #[error("step size underflow at t = {t:.6e} (h = {h:.6e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    /// The observable's derivative with respect to x is numerically zero, so
    /// the error-propagation uncertainty is undefined.
    #[error(
        "insensitive observable: |d<A>/dx| = {derivative:.3e} below 1e-12; \
         the uncertainty is undefined at this operating point"
    )]
    InsensitiveObservable { derivative: f64 },

    /// A sweep constraint cannot be satisfied.
    #[error("infeasible constraint: {0}")]
    InfeasibleConstraint(String),

    /// Power-law fitting requires at least two strictly positive points.
    #[error("cannot fit power law: {0}")]
    FitError(String),
}
