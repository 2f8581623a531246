//! Adiabatic elimination of the cavity field, superradiance-regime checks,
//! and photon-counting statistics of the leaked light.
//!
//! In the overdamped regime the cavity follows the atoms and can be
//! eliminated, leaving the collective atomic master equation
//!
//! ```text
//! d(rho)/dt = gamma_c ( J- rho J+ - 1/2 {J+ J-, rho} ),   gamma_c = 2 g^2 / kappa
//! ```
//!
//! Every photon leaking through the mirror corresponds to one action of the
//! collective jump, so the statistics of the cumulative count follow from the
//! factorial-moment hierarchy
//!
//! ```text
//! d(rho)/dt  = L rho
//! d(rho1)/dt = L rho1 + J rho         J X = gamma_c J- X J+
//! d(rho2)/dt = L rho2 + 2 J rho1
//! ```
//!
//! with mean = tr rho1, second factorial moment = tr rho2, and
//! var = mean + tr rho2 - mean^2. The N = 1 limit (exactly one photon,
//! vanishing long-time variance) pins the convention.

use num_complex::Complex64;
use serde::Serialize;

use crate::dynamics::{
    evolve, IntegratorConfig, LindbladModel, Method, PhysicalParameters, TimeSeries,
};
use crate::error::{Error, Result};
use crate::hilbert::{
    collective_lowering, dicke_operators, DensityMatrix, DickeSpace, SparseOperator, Space,
};
use crate::integrate::{integrate_adaptive, integrate_fixed_rk4};

/// Default acceptance threshold for the regime ratios.
pub const DEFAULT_REGIME_THRESHOLD: f64 = 0.1;

/// Collective atomic model left after eliminating the cavity.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ReducedModel {
    pub n_atoms: u32,
    /// gamma_c = 2 g^2 / kappa.
    pub collective_rate: f64,
    /// Per-atom spontaneous emission carried over from the full model. Must
    /// be zero unless the collective approximation flag is set.
    pub residual_gamma: f64,
    /// When set, `residual_gamma` is treated as collective decay
    /// gamma D[J-]; this is an approximation and is propagated into output
    /// warnings.
    pub gamma_collective_approx: bool,
}

/// Reduce the cavity model to the collective atomic decay channel.
pub fn adiabatic_eliminate(params: &PhysicalParameters) -> Result<ReducedModel> {
    params.validate()?;
    if params.kappa <= 0.0 {
        return Err(Error::InvalidParameter(
            "adiabatic elimination needs kappa > 0".into(),
        ));
    }
    if params.g <= 0.0 {
        return Err(Error::InvalidParameter(
            "adiabatic elimination needs g > 0 (collective rate would vanish)".into(),
        ));
    }
    Ok(ReducedModel {
        n_atoms: params.n_atoms,
        collective_rate: 2.0 * params.g * params.g / params.kappa,
        residual_gamma: params.gamma,
        gamma_collective_approx: false,
    })
}

impl ReducedModel {
    pub fn with_collective_gamma_approximation(mut self) -> Self {
        self.gamma_collective_approx = true;
        self
    }

    /// The maximal-J ladder this model acts on.
    pub fn space(&self) -> DickeSpace {
        DickeSpace::new(self.n_atoms).unwrap()
    }

    /// The Lindblad model on a given ladder of the same atom number.
    pub fn lindblad_model(&self, ladder: &DickeSpace) -> Result<LindbladModel> {
        if ladder.n_atoms() != self.n_atoms {
            return Err(Error::SpaceMismatch(format!(
                "ladder has {} atoms, model has {}",
                ladder.n_atoms(),
                self.n_atoms
            )));
        }
        self.check_residual()?;
        let ops = dicke_operators(ladder);
        let mut jumps = vec![(ops.j_minus.clone(), self.collective_rate)];
        let mut model = LindbladModel::new(
            SparseOperator::zero(Space::Dicke(*ladder)),
            {
                if self.residual_gamma > 0.0 {
                    jumps.push((ops.j_minus, self.residual_gamma));
                }
                jumps
            },
        )?;
        if self.residual_gamma > 0.0 {
            model.push_approximation_flag(
                "collective-gamma approximation: residual per-atom decay treated as gamma D[J-]",
            );
        }
        Ok(model)
    }

    fn check_residual(&self) -> Result<()> {
        if self.residual_gamma > 0.0 && !self.gamma_collective_approx {
            return Err(Error::IndividualDecayInDicke);
        }
        Ok(())
    }
}

/// Where the operating point sits relative to Gamma << g sqrt(N) << kappa.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RegimeReport {
    /// Gamma / (g sqrt(N)).
    pub ratio_low: f64,
    /// g sqrt(N) / kappa.
    pub ratio_high: f64,
    pub threshold: f64,
    /// true iff both ratios are <= threshold.
    pub pass: bool,
}

/// Check the superradiance validity window Gamma << g sqrt(N) << kappa,
/// with `<<` read as `ratio <= threshold`.
pub fn regime_check(params: &PhysicalParameters, threshold: f64) -> RegimeReport {
    let gn = params.g_collective();
    let ratio_low = if gn > 0.0 {
        params.gamma / gn
    } else if params.gamma == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    let ratio_high = if params.kappa > 0.0 { gn / params.kappa } else { f64::INFINITY };
    RegimeReport {
        ratio_low,
        ratio_high,
        threshold,
        pass: ratio_low <= threshold && ratio_high <= threshold,
    }
}

/// Instantaneous leaked-photon rate R = gamma_c <J+ J->.
///
/// Accepts states on a collective ladder or on the full 2^N space (where the
/// collective operators are the sums of per-atom ones).
pub fn emission_rate(model: &ReducedModel, rho: &DensityMatrix) -> Result<f64> {
    let jpjm = match rho.space() {
        Space::Dicke(d) => {
            if d.n_atoms() != model.n_atoms {
                return Err(Error::SpaceMismatch(format!(
                    "state ladder has {} atoms, model has {}",
                    d.n_atoms(),
                    model.n_atoms
                )));
            }
            let ops = dicke_operators(d);
            ops.j_plus.matmul(&ops.j_minus)?
        }
        Space::FullAtom(fa) => {
            if fa.n_atoms() != model.n_atoms {
                return Err(Error::SpaceMismatch(format!(
                    "state has {} atoms, model has {}",
                    fa.n_atoms(),
                    model.n_atoms
                )));
            }
            let lowering = collective_lowering(fa);
            lowering.adjoint().matmul(&lowering)?
        }
        other => {
            return Err(Error::SpaceMismatch(format!(
                "emission rate needs an atomic state, got {other}"
            )))
        }
    };
    Ok(model.collective_rate * rho.expectation(&jpjm)?.re)
}

/// Time-resolved mean and variance of the cumulative leaked-photon count.
#[derive(Clone, Debug, Serialize)]
pub struct CountingStatistics {
    pub times: Vec<f64>,
    pub mean_count: Vec<f64>,
    pub var_count: Vec<f64>,
    /// var/mean - 1; reported as 0 while the mean is numerically zero.
    pub mandel_q: Vec<f64>,
    pub warnings: Vec<String>,
}

impl CountingStatistics {
    /// CSV with header `t,mean_count,var_count,mandel_q`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("t,mean_count,var_count,mandel_q\n");
        for i in 0..self.times.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.times[i], self.mean_count[i], self.var_count[i], self.mandel_q[i]
            ));
        }
        out
    }
}

/// Evolve the counting-moment hierarchy {rho, rho1, rho2} and return the
/// mean, variance and Mandel Q of the cumulative leaked-photon count on the
/// record grid.
///
/// Only the collective cavity channel (rate gamma_c) is counted; a residual
/// gamma (with the approximation flag) adds unobserved loss.
pub fn counting_statistics(
    model: &ReducedModel,
    rho0: &DensityMatrix,
    config: &IntegratorConfig,
) -> Result<CountingStatistics> {
    config.validate()?;
    let ladder = match rho0.space() {
        Space::Dicke(d) => *d,
        other => {
            return Err(Error::SpaceMismatch(format!(
                "counting statistics needs a collective-ladder state, got {other}"
            )))
        }
    };
    let lindblad = model.lindblad_model(&ladder)?;
    let plan = crate::dynamics::RhsPlan::new(&lindblad);
    let ops = dicke_operators(&ladder);
    let j_minus = ops.j_minus;
    let j_plus = ops.j_plus;
    let gamma_c = Complex64::new(model.collective_rate, 0.0);

    let d = ladder.dim();
    let n = d * d;
    let mut y0 = ndarray::Array1::<Complex64>::zeros(3 * n);
    let rho_std = rho0.matrix().as_standard_layout();
    y0.as_slice_mut().unwrap()[..n].copy_from_slice(rho_std.as_slice().unwrap());

    let mut scratch = vec![Complex64::new(0.0, 0.0); n];
    let mut jump_buf = vec![Complex64::new(0.0, 0.0); n];
    let mut block_out = vec![Complex64::new(0.0, 0.0); n];
    let mut rhs = |_t: f64,
                   y: &ndarray::ArrayView1<Complex64>,
                   out: &mut ndarray::Array1<Complex64>| {
        let ys = y.as_slice().unwrap();
        let os = out.as_slice_mut().unwrap();
        for block in 0..3 {
            let src = &ys[block * n..(block + 1) * n];
            plan.apply(src, &mut block_out, &mut scratch);
            os[block * n..(block + 1) * n].copy_from_slice(&block_out);
        }
        // source terms: J rho into rho1, 2 J rho1 into rho2
        for (block, weight) in [(0usize, 1.0), (1usize, 2.0)] {
            let src = &ys[block * n..(block + 1) * n];
            jump_buf.fill(Complex64::new(0.0, 0.0));
            j_minus.apply_left_slice(src, d, gamma_c * weight, &mut jump_buf);
            let dst = &mut os[(block + 1) * n..(block + 2) * n];
            j_plus.apply_right_slice(&jump_buf, d, Complex64::new(1.0, 0.0), dst);
        }
    };

    let grid = &config.record_grid;
    let n_rec = grid.len();
    let mut mean = vec![0.0; n_rec];
    let mut fact2 = vec![0.0; n_rec];
    let mut record = |gi: usize, _t: f64, y: &ndarray::Array1<Complex64>| {
        let ys = y.as_slice().unwrap();
        let mut m = Complex64::new(0.0, 0.0);
        let mut f = Complex64::new(0.0, 0.0);
        for i in 0..d {
            m += ys[n + i * d + i];
            f += ys[2 * n + i * d + i];
        }
        mean[gi] = m.re;
        fact2[gi] = f.re;
    };

    match config.method {
        Method::Rk4 => {
            integrate_fixed_rk4(&mut rhs, &y0, 0.0, grid, config.max_step, &mut record)?;
        }
        Method::Adaptive => {
            integrate_adaptive(
                &mut rhs,
                &y0,
                0.0,
                grid,
                config.abs_tol,
                config.rel_tol,
                config.max_step,
                &mut record,
            )?;
        }
        Method::Exact => {
            return Err(Error::InvalidParameter(
                "the counting hierarchy supports rk4 and adaptive methods only".into(),
            ))
        }
    }

    let mut warnings: Vec<String> = Vec::new();
    if model.residual_gamma > 0.0 {
        warnings.push(
            "collective-gamma approximation: residual per-atom decay treated as gamma D[J-]"
                .to_string(),
        );
    }
    let mut var = vec![0.0; n_rec];
    let mut q = vec![0.0; n_rec];
    let mut worst_negative = 0.0_f64;
    for i in 0..n_rec {
        let v = fact2[i] + mean[i] - mean[i] * mean[i];
        var[i] = if v < 0.0 {
            worst_negative = worst_negative.min(v);
            if v >= -1e-10 {
                0.0
            } else {
                v
            }
        } else {
            v
        };
        q[i] = if mean[i] > 1e-12 { var[i] / mean[i] - 1.0 } else { 0.0 };
    }
    if worst_negative < -1e-10 {
        warnings.push(format!(
            "count variance dipped to {worst_negative:.3e}; tighten integrator tolerances"
        ));
    }
    Ok(CountingStatistics {
        times: grid.clone(),
        mean_count: mean,
        var_count: var,
        mandel_q: q,
        warnings,
    })
}

/// Evolve the plain reduced model and record channels (no counting).
pub fn evolve_reduced(
    model: &ReducedModel,
    rho0: &DensityMatrix,
    config: &IntegratorConfig,
    observables: &[(String, SparseOperator)],
) -> Result<TimeSeries> {
    let ladder = match rho0.space() {
        Space::Dicke(d) => *d,
        other => {
            return Err(Error::SpaceMismatch(format!(
                "reduced evolution needs a collective-ladder state, got {other}"
            )))
        }
    };
    let lindblad = model.lindblad_model(&ladder)?;
    evolve(&lindblad, rho0, config, observables)
}

/// Cumulative integral of a sampled channel. Uses composite Simpson segments
/// on uniform grids and falls back to the trapezoid rule on non-uniform ones.
pub fn cumulative_integral(times: &[f64], values: &[f64]) -> Vec<f64> {
    assert_eq!(times.len(), values.len());
    let n = times.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    let h0 = times[1] - times[0];
    let uniform = times
        .windows(2)
        .all(|w| ((w[1] - w[0]) - h0).abs() <= 1e-9 * h0.abs().max(1e-300));
    if uniform && n >= 3 {
        for i in 1..n {
            if i % 2 == 0 {
                // full Simpson pair ending at i
                out[i] = out[i - 2]
                    + h0 / 3.0 * (values[i - 2] + 4.0 * values[i - 1] + values[i]);
            } else if i + 1 < n {
                // half of the parabola through (i-1, i, i+1)
                out[i] = out[i - 1]
                    + h0 / 12.0 * (5.0 * values[i - 1] + 8.0 * values[i] - values[i + 1]);
            } else {
                // trailing odd interval: parabola through the last three
                out[i] = out[i - 1]
                    + h0 / 12.0 * (-values[i - 2] + 8.0 * values[i - 1] + 5.0 * values[i]);
            }
        }
    } else {
        for i in 1..n {
            out[i] = out[i - 1]
                + 0.5 * (times[i] - times[i - 1]) * (values[i] + values[i - 1]);
        }
    }
    out
}
