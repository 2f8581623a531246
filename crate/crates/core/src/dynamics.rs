//! Dissipative Tavis-Cummings model assembly and master-equation evolution.
//!
//! The master equation is implemented in standard Lindblad form,
//!
//! ```text
//! d(rho)/dt = -i [H, rho] + sum_k r_k ( L_k rho L_k! - 1/2 {L_k! L_k, rho} )
//! ```
//!
//! with hbar = 1. The cavity-leakage channel enters as jump `a` with rate
//! `2 kappa` (so (2 kappa)^-1 is the photon lifetime) and per-atom
//! spontaneous emission as jumps `sigma_i^-` with rate `gamma`; both
//! correspondences are fixed once here by expanding the commutator form of
//! the dissipators, and are pinned by unit tests.

use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::{
    collective_lowering, dicke_operators, fock_operators, individual_atom_operators, tensor,
    DensityMatrix, DickeSpace, FockSpace, FullAtomSpace, SparseOperator, Space,
};
use crate::integrate::{integrate_adaptive, integrate_fixed_rk4, StepStats};
use crate::linalg;

/// Trace deviation beyond which a run is flagged.
pub const TRACE_WARN_TOL: f64 = 1e-9;
/// Top-Fock-level population beyond which truncation is flagged.
pub const LEAKAGE_WARN_TOL: f64 = 1e-6;
/// Imaginary residue beyond which a Hermitian-observable channel is flagged.
pub const IMAG_RESIDUE_WARN_TOL: f64 = 1e-8;
/// Largest state dimension accepted by the exact (superoperator-exponential)
/// method; the superoperator is dense with dim^4 entries.
pub const EXACT_METHOD_MAX_DIM: usize = 32;
/// At most this many record points get an eigenvalue sample.
const MIN_EIG_SAMPLES: usize = 25;

/// Physical rates of the model, in angular-frequency units (hbar = 1).
///
/// `kappa` is the field amplitude decay rate: the photon lifetime is
/// (2 kappa)^-1. `gamma` is the spontaneous emission rate of each atom.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PhysicalParameters {
    pub g: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub n_atoms: u32,
}

impl PhysicalParameters {
    pub fn validate(&self) -> Result<()> {
        if !(self.g >= 0.0) || !(self.kappa >= 0.0) || !(self.gamma >= 0.0) {
            return Err(Error::InvalidParameter(
                "g, kappa, gamma must be non-negative and finite".into(),
            ));
        }
        if self.n_atoms == 0 {
            return Err(Error::InvalidParameter("n_atoms must be >= 1".into()));
        }
        Ok(())
    }

    /// The collective coupling g sqrt(N).
    pub fn g_collective(&self) -> f64 {
        self.g * (self.n_atoms as f64).sqrt()
    }
}

/// Which atomic representation carries the dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    /// Collective maximal-J ladder, dim N + 1.
    Dicke,
    /// Full 2^N product space (small-N oracle).
    Full,
}

/// Hamiltonian plus a list of (jump operator, rate) pairs on one space.
#[derive(Clone, Debug)]
pub struct LindbladModel {
    hamiltonian: SparseOperator,
    jumps: Vec<(SparseOperator, f64)>,
    approximation_flags: Vec<String>,
}

impl LindbladModel {
    pub fn new(hamiltonian: SparseOperator, jumps: Vec<(SparseOperator, f64)>) -> Result<Self> {
        for (op, rate) in &jumps {
            op.check_same_space(&hamiltonian)?;
            if !(*rate >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "jump rate {rate} must be non-negative"
                )));
            }
        }
        Ok(Self { hamiltonian, jumps, approximation_flags: Vec::new() })
    }

    pub fn space(&self) -> &Space {
        self.hamiltonian.space()
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn hamiltonian(&self) -> &SparseOperator {
        &self.hamiltonian
    }

    pub fn jumps(&self) -> &[(SparseOperator, f64)] {
        &self.jumps
    }

    /// Markers for any physical approximation baked into the model.
    pub fn approximation_flags(&self) -> &[String] {
        &self.approximation_flags
    }

    pub fn push_approximation_flag(&mut self, flag: impl Into<String>) {
        self.approximation_flags.push(flag.into());
    }
}

/// Dissipative Tavis-Cummings model: H = g (J- ⊗ a! + J+ ⊗ a), cavity jump
/// `id ⊗ a` at rate 2 kappa, and (full representation only) per-atom jumps
/// `sigma_i^- ⊗ id` at rate gamma.
///
/// In the Dicke representation a nonzero gamma is rejected unless
/// `collective_gamma` is set, because per-atom decay is not
/// permutation-symmetric as a superoperator; the override maps it to
/// collective decay gamma D[J-] and marks the model approximate.
pub fn build_tavis_cummings(
    params: &PhysicalParameters,
    n_max: u32,
    representation: Representation,
    collective_gamma: bool,
) -> Result<LindbladModel> {
    match representation {
        Representation::Dicke => {
            let ladder = DickeSpace::new(params.n_atoms)?;
            build_tavis_cummings_on_ladder(params, n_max, &ladder, collective_gamma)
        }
        Representation::Full => build_tavis_cummings_full(params, n_max, collective_gamma),
    }
}

/// Tavis-Cummings restricted to one collective ladder (two_j <= n_atoms);
/// the multi-J escape hatch for states outside the maximal ladder, such as
/// the dark J = 0 ladder of even N.
pub fn build_tavis_cummings_on_ladder(
    params: &PhysicalParameters,
    n_max: u32,
    ladder: &DickeSpace,
    collective_gamma: bool,
) -> Result<LindbladModel> {
    params.validate()?;
    if ladder.n_atoms() != params.n_atoms {
        return Err(Error::SpaceMismatch(format!(
            "ladder is for {} atoms, parameters say {}",
            ladder.n_atoms(),
            params.n_atoms
        )));
    }
    if n_max < 1 {
        return Err(Error::InvalidParameter("n_max must be >= 1".into()));
    }
    let fock = FockSpace::new(n_max);
    let fops = fock_operators(&fock);
    let g = Complex64::new(params.g, 0.0);
    let ops = dicke_operators(ladder);
    let (lowering, raising, atom_space) = (ops.j_minus, ops.j_plus, Space::Dicke(*ladder));
    build_from_parts(
        params,
        Representation::Dicke,
        collective_gamma,
        fock,
        fops,
        g,
        lowering,
        raising,
        atom_space,
    )
}

fn build_tavis_cummings_full(
    params: &PhysicalParameters,
    n_max: u32,
    collective_gamma: bool,
) -> Result<LindbladModel> {
    params.validate()?;
    if n_max < 1 {
        return Err(Error::InvalidParameter("n_max must be >= 1".into()));
    }
    let fock = FockSpace::new(n_max);
    let fops = fock_operators(&fock);
    let g = Complex64::new(params.g, 0.0);
    let space = FullAtomSpace::new(params.n_atoms)?;
    let lowering = collective_lowering(&space);
    let raising = lowering.adjoint();
    build_from_parts(
        params,
        Representation::Full,
        collective_gamma,
        fock,
        fops,
        g,
        lowering,
        raising,
        Space::FullAtom(space),
    )
}

#[allow(clippy::too_many_arguments)]
fn build_from_parts(
    params: &PhysicalParameters,
    representation: Representation,
    collective_gamma: bool,
    fock: FockSpace,
    fops: crate::hilbert::FockOperators,
    g: Complex64,
    lowering: SparseOperator,
    raising: SparseOperator,
    atom_space: Space,
) -> Result<LindbladModel> {

    let h = tensor(&lowering, &fops.a_dagger)
        .add(&tensor(&raising, &fops.a))?
        .scaled(g);

    let id_atoms = SparseOperator::identity(atom_space.clone());
    let id_field = SparseOperator::identity(Space::Fock(fock));
    let mut jumps = Vec::new();
    if params.kappa > 0.0 {
        jumps.push((tensor(&id_atoms, &fops.a), 2.0 * params.kappa));
    }
    let mut flags = Vec::new();
    if params.gamma > 0.0 {
        match representation {
            Representation::Full => {
                let space = FullAtomSpace::new(params.n_atoms)?;
                for i in 0..params.n_atoms {
                    let ops = individual_atom_operators(&space, i)?;
                    jumps.push((tensor(&ops.sigma_minus, &id_field), params.gamma));
                }
            }
            Representation::Dicke => {
                if !collective_gamma {
                    return Err(Error::IndividualDecayInDicke);
                }
                jumps.push((tensor(&lowering, &id_field), params.gamma));
                flags.push(
                    "collective-gamma approximation: per-atom decay replaced by gamma D[J-]"
                        .to_string(),
                );
            }
        }
    }
    let mut model = LindbladModel::new(h, jumps)?;
    for f in flags {
        model.push_approximation_flag(f);
    }
    Ok(model)
}

/// A named operator on the model space, for expectation channels.
///
/// Names: `photon_number` (id ⊗ a!a), `j_z`, `jplus_jminus`, `excitation`
/// (j_z + N/2 + photon number). On the full 2^N space the collective spin
/// operators are the sums of the per-atom ones.
pub fn named_observable(space: &Space, name: &str) -> Result<SparseOperator> {
    let (atoms, field) = space.factors().ok_or_else(|| {
        Error::InvalidParameter(format!("named observables need an atoms ⊗ field space, got {space}"))
    })?;
    let fock = match field {
        Space::Fock(f) => *f,
        other => {
            return Err(Error::InvalidParameter(format!(
                "field factor must be a Fock space, got {other}"
            )))
        }
    };
    let fops = fock_operators(&fock);
    let id_atoms = SparseOperator::identity(atoms.clone());
    let id_field = SparseOperator::identity(field.clone());
    let (j_z, j_minus, n_atoms) = match atoms {
        Space::Dicke(d) => {
            let ops = dicke_operators(d);
            (ops.j_z, ops.j_minus, d.n_atoms())
        }
        Space::FullAtom(fa) => {
            let lowering = collective_lowering(fa);
            let mut z = SparseOperator::zero(atoms.clone());
            for i in 0..fa.n_atoms() {
                let ops = individual_atom_operators(fa, i)?;
                let proj = ops.sigma_plus.matmul(&ops.sigma_minus)?;
                z = z.add(&proj)?;
            }
            // sum_i (sigma+ sigma- - 1/2)
            let half_n = SparseOperator::identity(atoms.clone())
                .scaled(Complex64::new(fa.n_atoms() as f64 / 2.0, 0.0));
            (z.sub(&half_n)?, lowering, fa.n_atoms())
        }
        other => {
            return Err(Error::InvalidParameter(format!(
                "atoms factor must be a Dicke or full-atom space, got {other}"
            )))
        }
    };
    match name {
        "photon_number" => Ok(tensor(&id_atoms, &fops.number)),
        "j_z" => Ok(tensor(&j_z, &id_field)),
        "jplus_jminus" => {
            let jpjm = j_minus.adjoint().matmul(&j_minus)?;
            Ok(tensor(&jpjm, &id_field))
        }
        "excitation" => {
            let shifted = j_z.add(
                &SparseOperator::identity(atoms.clone())
                    .scaled(Complex64::new(n_atoms as f64 / 2.0, 0.0)),
            )?;
            tensor(&shifted, &id_field).add(&tensor(&id_atoms, &fops.number))
        }
        other => Err(Error::InvalidParameter(format!(
            "unknown observable name '{other}' (try photon_number, j_z, jplus_jminus, excitation)"
        ))),
    }
}

/// Integration method.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Fixed-step classic RK4 with step `max_step`.
    Rk4,
    /// Dormand-Prince 5(4) embedded pair with PI step control.
    Adaptive,
    /// Piecewise-exact propagation via the dense superoperator exponential.
    /// Only for time-independent models with dim <= [`EXACT_METHOD_MAX_DIM`];
    /// the method of choice in the stiff kappa >> g regime.
    Exact,
}

/// Integration window, method, tolerances and sample grid.
#[derive(Clone, Debug, Serialize)]
pub struct IntegratorConfig {
    pub t_final: f64,
    pub method: Method,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Upper bound on the internal step. Also bounds the cubic dense-output
    /// interpolation error of recorded samples, which scales as max_step^4.
    pub max_step: f64,
    pub record_grid: Vec<f64>,
}

impl IntegratorConfig {
    /// Adaptive integration to `t_final` with a uniform record grid of
    /// `n_points` samples (including both endpoints).
    pub fn uniform(t_final: f64, n_points: usize) -> Self {
        let n = n_points.max(1);
        let record_grid = if t_final == 0.0 || n == 1 {
            vec![0.0]
        } else {
            (0..n).map(|i| t_final * i as f64 / (n - 1) as f64).collect()
        };
        Self {
            t_final,
            method: Method::Adaptive,
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            max_step: f64::INFINITY,
            record_grid,
        }
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_tolerances(mut self, abs_tol: f64, rel_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_max_step(mut self, max_step: f64) -> Self {
        self.max_step = max_step;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_final >= 0.0) {
            return Err(Error::InvalidParameter("t_final must be >= 0".into()));
        }
        if !(self.abs_tol > 0.0) || !(self.rel_tol > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be > 0".into()));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::InvalidParameter("max_step must be > 0".into()));
        }
        if self.method == Method::Rk4 && !self.max_step.is_finite() {
            return Err(Error::InvalidParameter(
                "rk4 needs a finite max_step (it is the step size)".into(),
            ));
        }
        if self.record_grid.is_empty() {
            return Err(Error::InvalidParameter("record_grid must not be empty".into()));
        }
        let mut prev = 0.0;
        for (i, &t) in self.record_grid.iter().enumerate() {
            if !(t >= 0.0) || t > self.t_final * (1.0 + 1e-12) + 1e-300 {
                return Err(Error::InvalidParameter(format!(
                    "record_grid[{i}] = {t} outside [0, t_final = {}]",
                    self.t_final
                )));
            }
            if i > 0 && t < prev {
                return Err(Error::InvalidParameter("record_grid must be sorted".into()));
            }
            prev = t;
        }
        Ok(())
    }
}

/// One named expectation channel.
#[derive(Clone, Debug, Serialize)]
pub struct Channel {
    pub name: String,
    pub values: Vec<f64>,
}

/// Time-resolved expectations and physicality diagnostics of one evolution.
#[derive(Clone, Debug, Serialize)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub channels: Vec<Channel>,
    /// |tr rho - 1| at each sample.
    pub trace_deviation: Vec<f64>,
    /// max |rho - rho!| at each sample.
    pub hermiticity_defect: Vec<f64>,
    /// Smallest eigenvalue of rho, on a sparse subset of samples.
    pub min_eigenvalue: Vec<Option<f64>>,
    /// Population of the top Fock level, when the space has a field factor.
    pub truncation_leakage: Option<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl TimeSeries {
    /// CSV with header `t,<channels...>,trace_dev,herm_dev[,leak_top],min_eig`.
    /// Unsampled eigenvalue cells are empty. '.'-decimal, UTF-8, shortest
    /// round-trip float formatting.
    pub fn to_csv_string(&self) -> String {
        let mut header = String::from("t");
        for ch in &self.channels {
            header.push(',');
            header.push_str(&ch.name);
        }
        header.push_str(",trace_dev,herm_dev");
        if self.truncation_leakage.is_some() {
            header.push_str(",leak_top");
        }
        header.push_str(",min_eig");
        let mut out = header;
        out.push('\n');
        for (i, &t) in self.times.iter().enumerate() {
            out.push_str(&format!("{t}"));
            for ch in &self.channels {
                out.push_str(&format!(",{}", ch.values[i]));
            }
            out.push_str(&format!(
                ",{},{}",
                self.trace_deviation[i], self.hermiticity_defect[i]
            ));
            if let Some(leak) = &self.truncation_leakage {
                out.push_str(&format!(",{}", leak[i]));
            }
            match self.min_eigenvalue[i] {
                Some(e) => out.push_str(&format!(",{e}")),
                None => out.push(','),
            }
            out.push('\n');
        }
        out
    }
}

/// Precomputed plan for evaluating the Lindblad right-hand side on flat
/// row-major states.
pub(crate) struct RhsPlan {
    dim: usize,
    hamiltonian: SparseOperator,
    jumps: Vec<JumpPlan>,
}

struct JumpPlan {
    l: SparseOperator,
    l_dag: SparseOperator,
    ldl: SparseOperator,
    rate: f64,
}

impl RhsPlan {
    pub(crate) fn new(model: &LindbladModel) -> Self {
        let jumps = model
            .jumps
            .iter()
            .map(|(l, rate)| {
                let l_dag = l.adjoint();
                let ldl = l_dag.matmul(l).unwrap();
                JumpPlan { l: l.clone(), l_dag, ldl, rate: *rate }
            })
            .collect();
        Self { dim: model.dim(), hamiltonian: model.hamiltonian.clone(), jumps }
    }

    pub(crate) fn dim(&self) -> usize {
        self.dim
    }

    /// `out = -i[H, rho] + sum_k r_k (L rho L! - 1/2 {L!L, rho})`,
    /// `tmp` is scratch of the same size.
    pub(crate) fn apply(&self, rho: &[Complex64], out: &mut [Complex64], tmp: &mut [Complex64]) {
        let d = self.dim;
        out.fill(Complex64::new(0.0, 0.0));
        let minus_i = Complex64::new(0.0, -1.0);
        let plus_i = Complex64::new(0.0, 1.0);
        self.hamiltonian.apply_left_slice(rho, d, minus_i, out);
        self.hamiltonian.apply_right_slice(rho, d, plus_i, out);
        for jump in &self.jumps {
            let r = jump.rate;
            tmp.fill(Complex64::new(0.0, 0.0));
            jump.l.apply_left_slice(rho, d, Complex64::new(r, 0.0), tmp);
            jump.l_dag.apply_right_slice(tmp, d, Complex64::new(1.0, 0.0), out);
            jump.ldl.apply_left_slice(rho, d, Complex64::new(-0.5 * r, 0.0), out);
            jump.ldl.apply_right_slice(rho, d, Complex64::new(-0.5 * r, 0.0), out);
        }
    }
}

/// The Lindblad right-hand side d(rho)/dt for a single state.
///
/// The output is Hermitian whenever `rho` is (up to rounding).
pub fn lindblad_rhs(model: &LindbladModel, rho: &DensityMatrix) -> Result<Array2<Complex64>> {
    if rho.space() != model.space() {
        return Err(Error::SpaceMismatch(format!(
            "state on {} fed to model on {}",
            rho.space(),
            model.space()
        )));
    }
    let d = model.dim();
    let plan = RhsPlan::new(model);
    let rho_std = rho.matrix().as_standard_layout();
    let mut out = vec![Complex64::new(0.0, 0.0); d * d];
    let mut tmp = vec![Complex64::new(0.0, 0.0); d * d];
    plan.apply(rho_std.as_slice().unwrap(), &mut out, &mut tmp);
    Ok(Array2::from_shape_vec((d, d), out).unwrap())
}

/// tr(op rho). The imaginary part is a rounding residue when `op` is
/// Hermitian.
pub fn expectation(rho: &DensityMatrix, op: &SparseOperator) -> Result<Complex64> {
    rho.expectation(op)
}

/// Integrate the master equation and record expectation channels plus
/// physicality diagnostics on the configured grid.
pub fn evolve(
    model: &LindbladModel,
    rho0: &DensityMatrix,
    config: &IntegratorConfig,
    observables: &[(String, SparseOperator)],
) -> Result<TimeSeries> {
    config.validate()?;
    if rho0.space() != model.space() {
        return Err(Error::SpaceMismatch(format!(
            "initial state on {} but model on {}",
            rho0.space(),
            model.space()
        )));
    }
    for (name, op) in observables {
        if op.space() != model.space() {
            return Err(Error::SpaceMismatch(format!(
                "observable '{name}' on {} but model on {}",
                op.space(),
                model.space()
            )));
        }
    }
    let d = model.dim();
    let grid = &config.record_grid;
    let n_rec = grid.len();

    // which observables are Hermitian (single real channel) vs general
    // (re/im channel pair)
    struct ObsPlan {
        op: SparseOperator,
        hermitian: bool,
        name: String,
    }
    let obs: Vec<ObsPlan> = observables
        .iter()
        .map(|(name, op)| ObsPlan {
            hermitian: op.adjoint() == *op,
            op: op.clone(),
            name: name.clone(),
        })
        .collect();

    let top_fock_index = top_fock_offsets(model.space());
    let eig_stride = n_rec.div_ceil(MIN_EIG_SAMPLES).max(1);

    let mut channels: Vec<Vec<f64>> = Vec::new();
    for o in &obs {
        channels.push(Vec::with_capacity(n_rec));
        if !o.hermitian {
            channels.push(Vec::with_capacity(n_rec));
        }
    }
    let mut trace_dev = vec![0.0; n_rec];
    let mut herm_dev = vec![0.0; n_rec];
    let mut min_eig: Vec<Option<f64>> = vec![None; n_rec];
    let mut leakage: Vec<f64> = Vec::with_capacity(n_rec);
    let mut max_imag_residue = 0.0_f64;

    let plan = RhsPlan::new(model);
    let y0 = flatten(rho0.matrix());

    {
        let mut record = |gi: usize, _t: f64, y: &Array1<Complex64>| {
            let ys = y.as_slice().unwrap();
            let mut ci = 0;
            for o in &obs {
                let val = o.op.expectation_slice(ys);
                channels[ci].push(val.re);
                ci += 1;
                if o.hermitian {
                    max_imag_residue = max_imag_residue.max(val.im.abs());
                } else {
                    channels[ci].push(val.im);
                    ci += 1;
                }
            }
            let mut tr = Complex64::new(0.0, 0.0);
            for i in 0..d {
                tr += ys[i * d + i];
            }
            trace_dev[gi] = (tr - Complex64::new(1.0, 0.0)).norm();
            let mut herm = 0.0_f64;
            for i in 0..d {
                for j in i..d {
                    let defect = (ys[i * d + j] - ys[j * d + i].conj()).norm();
                    if defect > herm {
                        herm = defect;
                    }
                }
            }
            herm_dev[gi] = herm;
            if let Some(offsets) = &top_fock_index {
                let mut pop = 0.0;
                for &off in offsets {
                    pop += ys[off * d + off].re;
                }
                leakage.push(pop);
            }
            if gi % eig_stride == 0 || gi + 1 == n_rec {
                let view = ArrayView2::from_shape((d, d), ys).unwrap();
                min_eig[gi] = Some(linalg::min_eigenvalue_hermitian(&view));
            }
        };

        let mut scratch_out = vec![Complex64::new(0.0, 0.0); d * d];
        let mut scratch_tmp = vec![Complex64::new(0.0, 0.0); d * d];
        let mut rhs = |_t: f64, y: &ArrayView1<Complex64>, out: &mut Array1<Complex64>| {
            plan.apply(
                y.as_slice().unwrap(),
                scratch_out.as_mut_slice(),
                &mut scratch_tmp,
            );
            out.as_slice_mut().unwrap().copy_from_slice(&scratch_out);
        };

        let _stats: StepStats = match config.method {
            Method::Rk4 => {
                integrate_fixed_rk4(&mut rhs, &y0, 0.0, grid, config.max_step, &mut record)?
            }
            Method::Adaptive => integrate_adaptive(
                &mut rhs,
                &y0,
                0.0,
                grid,
                config.abs_tol,
                config.rel_tol,
                config.max_step,
                &mut record,
            )?,
            Method::Exact => exact_propagate(&plan, &y0, grid, &mut record)?,
        };
    }

    let mut warnings: Vec<String> = model.approximation_flags.clone();
    let max_trace_dev = trace_dev.iter().cloned().fold(0.0_f64, f64::max);
    if max_trace_dev > TRACE_WARN_TOL {
        warnings.push(format!(
            "trace deviation reached {max_trace_dev:.3e} (> {TRACE_WARN_TOL:.0e}); tighten tolerances"
        ));
    }
    if let Some(_offsets) = &top_fock_index {
        let max_leak = leakage.iter().cloned().fold(0.0_f64, f64::max);
        if max_leak > LEAKAGE_WARN_TOL {
            warnings.push(format!(
                "truncation leakage reached {max_leak:.3e} (> {LEAKAGE_WARN_TOL:.0e}); raise n_max"
            ));
        }
    }
    if max_imag_residue > IMAG_RESIDUE_WARN_TOL {
        warnings.push(format!(
            "imaginary residue {max_imag_residue:.3e} on a Hermitian observable"
        ));
    }

    let mut out_channels = Vec::new();
    let mut ci = 0;
    for o in &obs {
        if o.hermitian {
            out_channels.push(Channel { name: o.name.clone(), values: std::mem::take(&mut channels[ci]) });
            ci += 1;
        } else {
            out_channels.push(Channel {
                name: format!("{}.re", o.name),
                values: std::mem::take(&mut channels[ci]),
            });
            out_channels.push(Channel {
                name: format!("{}.im", o.name),
                values: std::mem::take(&mut channels[ci + 1]),
            });
            ci += 2;
        }
    }

    Ok(TimeSeries {
        times: grid.clone(),
        channels: out_channels,
        trace_deviation: trace_dev,
        hermiticity_defect: herm_dev,
        min_eigenvalue: min_eig,
        truncation_leakage: top_fock_index.map(|_| leakage),
        warnings,
    })
}

/// Diagonal offsets of the top Fock level, if the space has a field factor.
fn top_fock_offsets(space: &Space) -> Option<Vec<usize>> {
    match space {
        Space::Fock(f) => Some(vec![f.dim() - 1]),
        Space::Tensor(atoms, field) => match field.as_ref() {
            Space::Fock(f) => {
                let df = f.dim();
                Some((0..atoms.dim()).map(|i| i * df + df - 1).collect())
            }
            _ => None,
        },
        _ => None,
    }
}

fn flatten(m: &Array2<Complex64>) -> Array1<Complex64> {
    Array1::from_iter(m.iter().cloned())
}

/// Propagate a time-independent Lindblad model exactly on the record grid by
/// exponentiating the dense superoperator once per distinct grid spacing.
fn exact_propagate(
    plan: &RhsPlan,
    y0: &Array1<Complex64>,
    grid: &[f64],
    mut record: impl FnMut(usize, f64, &Array1<Complex64>),
) -> Result<StepStats> {
    let d = plan.dim();
    if d > EXACT_METHOD_MAX_DIM {
        return Err(Error::InvalidParameter(format!(
            "exact method needs dim <= {EXACT_METHOD_MAX_DIM} (got {d}); use the adaptive method"
        )));
    }
    let n = d * d;
    let superop = build_superoperator(plan);
    let mut stats = StepStats::default();
    let mut propagators: HashMap<u64, Array2<Complex64>> = HashMap::new();
    let mut y = y0.clone();
    let mut t = 0.0;
    for (gi, &tg) in grid.iter().enumerate() {
        let dt = tg - t;
        if dt < 0.0 {
            return Err(Error::InvalidParameter("record grid must be ascending".into()));
        }
        if dt > 0.0 {
            let p = propagators
                .entry(dt.to_bits())
                .or_insert_with(|| linalg::expm(&superop.mapv(|z| z * dt)));
            let mut y_new = Array1::<Complex64>::zeros(n);
            for i in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for j in 0..n {
                    acc += p[(i, j)] * y[j];
                }
                y_new[i] = acc;
            }
            y = y_new;
            t = tg;
            stats.steps += 1;
        }
        record(gi, tg, &y);
    }
    Ok(stats)
}

/// Dense superoperator M with vec(d rho/dt) = M vec(rho) in row-major vec
/// convention: vec(A rho B) = (A ⊗ B^T) vec(rho).
fn build_superoperator(plan: &RhsPlan) -> Array2<Complex64> {
    let d = plan.dim();
    let n = d * d;
    let mut m = Array2::<Complex64>::zeros((n, n));
    let minus_i = Complex64::new(0.0, -1.0);
    let plus_i = Complex64::new(0.0, 1.0);
    // -i (H ⊗ I - I ⊗ H^T)
    for (r, c, v) in plan.hamiltonian.entries() {
        for j in 0..d {
            m[(r * d + j, c * d + j)] += minus_i * v;
            m[(j * d + c, j * d + r)] += plus_i * v;
        }
    }
    for jump in &plan.jumps {
        let rate = Complex64::new(jump.rate, 0.0);
        let half = Complex64::new(0.5 * jump.rate, 0.0);
        // r (L ⊗ conj(L))
        for (rl, cl, vl) in jump.l.entries() {
            for (rm, cm, vm) in jump.l.entries() {
                m[(rl * d + rm, cl * d + cm)] += rate * vl * vm.conj();
            }
        }
        // -r/2 ((L!L) ⊗ I + I ⊗ (L!L)^T)
        for (r, c, v) in jump.ldl.entries() {
            for j in 0..d {
                m[(r * d + j, c * d + j)] -= half * v;
                m[(j * d + c, j * d + r)] -= half * v;
            }
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::DensityMatrix;

    fn params(g: f64, kappa: f64, gamma: f64, n: u32) -> PhysicalParameters {
        PhysicalParameters { g, kappa, gamma, n_atoms: n }
    }

    #[test]
    fn jaynes_cummings_matrix_elements() {
        // N = 1 reduces to Jaynes-Cummings: <e, n-1|H|g, n> = g sqrt(n)
        let g = 0.37;
        let model =
            build_tavis_cummings(&params(g, 0.0, 0.0, 1), 3, Representation::Dicke, false)
                .unwrap();
        let h = model.hamiltonian().to_dense();
        let df = 4;
        for n in 1..=3usize {
            let excited_row = df + (n - 1); // atom index 1 = m=+1/2
            let ground_col = n; // atom index 0 = m=-1/2
            let got = h[(excited_row, ground_col)];
            assert!(
                (got - Complex64::new(g * (n as f64).sqrt(), 0.0)).norm() < 1e-15,
                "n={n}: {got}"
            );
        }
    }

    #[test]
    fn cavity_dissipator_rate_convention() {
        // photon lifetime (2 kappa)^-1: d<n>/dt = -2 kappa <n>
        let kappa = 0.8;
        let model =
            build_tavis_cummings(&params(0.0, kappa, 0.0, 1), 4, Representation::Dicke, false)
                .unwrap();
        let dicke = DickeSpace::new(1).unwrap();
        let atom = DensityMatrix::dicke_ground(&dicke);
        let fock = FockSpace::new(4);
        let photon = DensityMatrix::basis_state(Space::Fock(fock), 1).unwrap();
        let rho = atom.tensor_product(&photon);
        let drho = lindblad_rhs(&model, &rho).unwrap();
        let number = named_observable(model.space(), "photon_number").unwrap();
        let dn = number.expectation_view(&drho.view());
        assert!((dn.re - (-2.0 * kappa)).abs() < 1e-12, "d<n>/dt = {dn}");
        assert!(dn.im.abs() < 1e-14);
    }

    #[test]
    fn gamma_in_dicke_requires_override() {
        let p = params(1.0, 1.0, 0.1, 2);
        assert!(matches!(
            build_tavis_cummings(&p, 2, Representation::Dicke, false),
            Err(Error::IndividualDecayInDicke)
        ));
        let model = build_tavis_cummings(&p, 2, Representation::Dicke, true).unwrap();
        assert_eq!(model.approximation_flags().len(), 1);
        // full representation takes gamma without any flag
        let model = build_tavis_cummings(&p, 2, Representation::Full, false).unwrap();
        assert!(model.approximation_flags().is_empty());
        assert_eq!(model.jumps().len(), 3); // cavity + 2 atoms
    }

    #[test]
    fn gamma_zero_dicke_accepted_any_n() {
        for n in [1u32, 2, 17, 120] {
            assert!(build_tavis_cummings(
                &params(1.0, 2.0, 0.0, n),
                1,
                Representation::Dicke,
                false
            )
            .is_ok());
        }
    }

    #[test]
    fn excitation_commutes_with_hamiltonian() {
        let model =
            build_tavis_cummings(&params(1.3, 0.0, 0.0, 2), 4, Representation::Dicke, false)
                .unwrap();
        let exc = named_observable(model.space(), "excitation").unwrap();
        let comm = exc.commutator(model.hamiltonian()).unwrap();
        assert!(comm.max_abs_entry() <= 1e-12, "{}", comm.max_abs_entry());
    }

    #[test]
    fn rhs_zero_for_trivial_model() {
        let space = Space::tensor(
            Space::Dicke(DickeSpace::new(2).unwrap()),
            Space::Fock(FockSpace::new(2)),
        );
        let model = LindbladModel::new(SparseOperator::zero(space.clone()), vec![]).unwrap();
        let rho = DensityMatrix::maximally_mixed(space);
        let drho = lindblad_rhs(&model, &rho).unwrap();
        assert_eq!(linalg::max_abs(&drho.view()), 0.0);
    }

    #[test]
    fn vacuum_is_steady_under_cavity_decay() {
        let model =
            build_tavis_cummings(&params(0.0, 1.0, 0.0, 1), 3, Representation::Dicke, false)
                .unwrap();
        let dicke = DickeSpace::new(1).unwrap();
        let vac = DensityMatrix::dicke_ground(&dicke)
            .tensor_product(&DensityMatrix::basis_state(Space::Fock(FockSpace::new(3)), 0).unwrap());
        let drho = lindblad_rhs(&model, &vac).unwrap();
        assert!(linalg::max_abs(&drho.view()) < 1e-15);
    }

    #[test]
    fn rhs_preserves_hermiticity() {
        let model =
            build_tavis_cummings(&params(0.9, 0.4, 0.2, 2), 3, Representation::Full, false)
                .unwrap();
        let rho = DensityMatrix::maximally_mixed(model.space().clone());
        let drho = lindblad_rhs(&model, &rho).unwrap();
        assert!(linalg::hermiticity_defect(&drho.view()) < 1e-14);
        // trace of the generator output is zero
        assert!(linalg::trace(&drho.view()).norm() < 1e-14);
    }

    /// Amplitude-damping closed form: a single excited atom with only
    /// spontaneous emission decays as rho_ee(t) = exp(-gamma t).
    #[test]
    fn single_atom_decay_oracle() {
        let gamma = 0.7;
        let model =
            build_tavis_cummings(&params(0.0, 0.0, gamma, 1), 1, Representation::Full, false)
                .unwrap();
        let full = FullAtomSpace::new(1).unwrap();
        let rho0 = DensityMatrix::full_atom_excited(&full)
            .tensor_product(&DensityMatrix::basis_state(Space::Fock(FockSpace::new(1)), 0).unwrap());
        let ts_points: Vec<f64> = [0.5, 1.0, 2.0].iter().map(|x| x / gamma).collect();
        let config = IntegratorConfig {
            t_final: ts_points[2],
            method: Method::Adaptive,
            abs_tol: 1e-12,
            rel_tol: 1e-12,
            max_step: 0.02 / gamma,
            record_grid: ts_points.clone(),
        };
        let exc = named_observable(model.space(), "excitation").unwrap();
        let out = evolve(&model, &rho0, &config, &[("excitation".into(), exc)]).unwrap();
        for (i, &t) in ts_points.iter().enumerate() {
            let want = (-gamma * t).exp();
            let got = out.channels[0].values[i];
            assert!((got - want).abs() < 1e-8, "t={t}: {got} vs {want}");
        }
    }

    #[test]
    fn t_final_zero_gives_single_sample() {
        let model =
            build_tavis_cummings(&params(1.0, 1.0, 0.0, 2), 2, Representation::Dicke, false)
                .unwrap();
        let dicke = DickeSpace::new(2).unwrap();
        let rho0 = DensityMatrix::dicke_excited(&dicke)
            .tensor_product(&DensityMatrix::basis_state(Space::Fock(FockSpace::new(2)), 0).unwrap());
        let config = IntegratorConfig::uniform(0.0, 1);
        let jpjm = named_observable(model.space(), "jplus_jminus").unwrap();
        let out = evolve(&model, &rho0, &config, &[("jplus_jminus".into(), jpjm)]).unwrap();
        assert_eq!(out.times.len(), 1);
        assert!((out.channels[0].values[0] - 2.0).abs() < 1e-12);
        assert_eq!(out.trace_deviation[0], 0.0);
    }

    #[test]
    fn expectation_basics() {
        let dicke = DickeSpace::new(3).unwrap();
        let rho = DensityMatrix::dicke_excited(&dicke);
        let id = SparseOperator::identity(Space::Dicke(dicke));
        assert!((expectation(&rho, &id).unwrap().re - 1.0).abs() < 1e-15);
        let ops = dicke_operators(&dicke);
        let jpjm = ops.j_plus.matmul(&ops.j_minus).unwrap();
        assert!((expectation(&rho, &jpjm).unwrap().re - 3.0).abs() < 1e-12);

        let fock = FockSpace::new(5);
        let n3 = DensityMatrix::basis_state(Space::Fock(fock), 3).unwrap();
        let num = fock_operators(&fock).number;
        assert!((expectation(&n3, &num).unwrap().re - 3.0).abs() < 1e-15);
    }

    #[test]
    fn exact_method_matches_adaptive() {
        let model =
            build_tavis_cummings(&params(1.0, 0.7, 0.0, 2), 3, Representation::Dicke, false)
                .unwrap();
        let dicke = DickeSpace::new(2).unwrap();
        let rho0 = DensityMatrix::dicke_excited(&dicke)
            .tensor_product(&DensityMatrix::basis_state(Space::Fock(FockSpace::new(3)), 0).unwrap());
        let photon = named_observable(model.space(), "photon_number").unwrap();
        let obs = vec![("photon_number".to_string(), photon)];
        let grid: Vec<f64> = (0..=40).map(|i| i as f64 * 0.1).collect();
        let base = IntegratorConfig {
            t_final: 4.0,
            method: Method::Adaptive,
            abs_tol: 1e-12,
            rel_tol: 1e-12,
            max_step: 0.01,
            record_grid: grid.clone(),
        };
        let adaptive = evolve(&model, &rho0, &base, &obs).unwrap();
        let exact = evolve(
            &model,
            &rho0,
            &base.clone().with_method(Method::Exact),
            &obs,
        )
        .unwrap();
        for i in 0..grid.len() {
            let d = (adaptive.channels[0].values[i] - exact.channels[0].values[i]).abs();
            assert!(d < 1e-9, "t={}: diff {d}", grid[i]);
        }
    }

    #[test]
    fn non_hermitian_observable_splits_into_re_im_channels() {
        let model =
            build_tavis_cummings(&params(1.0, 0.5, 0.0, 2), 2, Representation::Dicke, false)
                .unwrap();
        let dicke = DickeSpace::new(2).unwrap();
        let rho0 = DensityMatrix::dicke_excited(&dicke)
            .tensor_product(&DensityMatrix::basis_state(Space::Fock(FockSpace::new(2)), 0).unwrap());
        let ops = dicke_operators(&dicke);
        let jm = tensor(&ops.j_minus, &SparseOperator::identity(Space::Fock(FockSpace::new(2))));
        let config = IntegratorConfig::uniform(1.0, 5);
        let ts = evolve(&model, &rho0, &config, &[("j_minus".into(), jm)]).unwrap();
        assert_eq!(ts.channels.len(), 2);
        assert_eq!(ts.channels[0].name, "j_minus.re");
        assert_eq!(ts.channels[1].name, "j_minus.im");
    }

    #[test]
    fn unknown_observable_name_errors() {
        let model =
            build_tavis_cummings(&params(1.0, 1.0, 0.0, 1), 1, Representation::Dicke, false)
                .unwrap();
        assert!(named_observable(model.space(), "bogus").is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = IntegratorConfig::uniform(1.0, 10);
        assert!(c.validate().is_ok());
        c.record_grid.push(2.0); // beyond t_final
        assert!(c.validate().is_err());
        let c = IntegratorConfig::uniform(1.0, 10).with_method(Method::Rk4);
        assert!(c.validate().is_err()); // rk4 needs finite max_step
        let c = IntegratorConfig::uniform(1.0, 10)
            .with_method(Method::Rk4)
            .with_max_step(0.01);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn csv_layout() {
        let ts = TimeSeries {
            times: vec![0.0, 0.5],
            channels: vec![Channel { name: "photon_number".into(), values: vec![0.0, 0.25] }],
            trace_deviation: vec![0.0, 1e-12],
            hermiticity_defect: vec![0.0, 0.0],
            min_eigenvalue: vec![Some(0.0), None],
            truncation_leakage: Some(vec![0.0, 1e-9]),
            warnings: vec![],
        };
        let csv = ts.to_csv_string();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,photon_number,trace_dev,herm_dev,leak_top,min_eig"
        );
        assert_eq!(lines.next().unwrap(), "0,0,0,0,0,0");
        assert_eq!(lines.next().unwrap(), "0.5,0.25,0.000000000001,0,0.000000001,");
    }
}
