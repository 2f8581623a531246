//! Parameter-estimation uncertainty: error propagation through a measured
//! observable, the closed-form collective-enhancement limit, the standard
//! quantum limit, and scaling sweeps over the atom number.
//!
//! The single-observable error-propagation uncertainty is
//!
//! ```text
//! delta_x = sqrt(var A) / ( sqrt(M) |d<A>/dx| )
//! ```
//!
//! for M independent repetitions. The closed-form collective limit for the
//! coupling-time product x = g t is
//!
//! ```text
//! delta_x = sqrt(2) / ( sqrt(M) g t sqrt(N (N + 2)) )  ~  sqrt(2) / (sqrt(M) g t N)
//! ```
//!
//! while uncorrelated probes are bounded by the standard quantum limit
//! `sqrt(2) / (sqrt(M) kappa t sqrt(N))`. Because the overdamped validity
//! window requires g sqrt(N) <= kappa, pinning the margin g sqrt(N) = kappa/c
//! turns the apparent 1/N scaling into 1/sqrt(N); `scaling_sweep` makes that
//! degradation measurable.

use rayon::prelude::*;
use serde::Serialize;

use crate::coupling::XBinding;
use crate::dynamics::{IntegratorConfig, PhysicalParameters};
use crate::error::{Error, Result};
use crate::hilbert::DensityMatrix;
use crate::superradiance::{adiabatic_eliminate, counting_statistics, regime_check};

/// Mean and variance of the observable at one parameter value.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct StatisticsAtX {
    pub x: f64,
    pub mean_a: f64,
    pub var_a: f64,
}

/// Anything that can produce observable statistics as a function of x.
pub trait StatisticsSampler: Sync {
    fn sample(&self, x: f64) -> Result<StatisticsAtX>;
}

impl<F> StatisticsSampler for F
where
    F: Fn(f64) -> Result<StatisticsAtX> + Sync,
{
    fn sample(&self, x: f64) -> Result<StatisticsAtX> {
        self(x)
    }
}

/// Finite-difference settings for the derivative in the error propagation.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FdConfig {
    /// Base step; defaults to `1e-3 * max(|x0|, 1)`.
    pub step: Option<f64>,
    /// Richardson extrapolation levels on the central difference (0 = plain
    /// central difference). Photon-count samplers carry integration noise, so
    /// this stays configurable.
    pub richardson_levels: u32,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self { step: None, richardson_levels: 1 }
    }
}

/// Error-propagation output at one operating point.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EstimationResult {
    pub x0: f64,
    pub delta_x: f64,
    pub derivative: f64,
    pub repetitions: u64,
    pub step_used: f64,
    pub mean_a: f64,
    pub var_a: f64,
}

/// `delta_x = sqrt(var A) / (sqrt(M) |d<A>/dx|)`, with the derivative taken by
/// central finite differences plus Richardson extrapolation.
pub fn delta_x_from_statistics<S>(
    sampler: &S,
    x0: f64,
    repetitions: u64,
    fd: &FdConfig,
) -> Result<EstimationResult>
where
    S: StatisticsSampler + ?Sized,
{
    if repetitions == 0 {
        return Err(Error::InvalidParameter("repetitions must be >= 1".into()));
    }
    let step = match fd.step {
        Some(h) if h > 0.0 => h,
        Some(h) => {
            return Err(Error::InvalidParameter(format!(
                "finite-difference step must be positive, got {h}"
            )))
        }
        None => 1e-3 * x0.abs().max(1.0),
    };
    // Richardson table on central differences with halved steps
    let levels = fd.richardson_levels.min(4) as usize;
    let mut column = Vec::with_capacity(levels + 1);
    for k in 0..=levels {
        let h = step / (1u64 << k) as f64;
        let plus = sampler.sample(x0 + h)?;
        let minus = sampler.sample(x0 - h)?;
        column.push((plus.mean_a - minus.mean_a) / (2.0 * h));
    }
    for j in 1..=levels {
        let factor = (4u64.pow(j as u32)) as f64;
        for k in (j..=levels).rev() {
            column[k] = (factor * column[k] - column[k - 1]) / (factor - 1.0);
        }
    }
    let derivative = column[levels];
    if derivative.abs() < 1e-12 {
        return Err(Error::InsensitiveObservable { derivative });
    }
    let at_x0 = sampler.sample(x0)?;
    if at_x0.var_a < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "sampler returned negative variance {}",
            at_x0.var_a
        )));
    }
    let delta_x = at_x0.var_a.sqrt() / ((repetitions as f64).sqrt() * derivative.abs());
    Ok(EstimationResult {
        x0,
        delta_x,
        derivative,
        repetitions,
        step_used: step,
        mean_a: at_x0.mean_a,
        var_a: at_x0.var_a,
    })
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
    }
}

/// Closed-form collective-enhancement uncertainty
/// sqrt(2) / (sqrt(M) g t sqrt(N (N + 2))).
pub fn delta_x_closed_form(n_atoms: u32, g: f64, t: f64, repetitions: u64) -> Result<f64> {
    if n_atoms == 0 || repetitions == 0 {
        return Err(Error::InvalidParameter("n_atoms and repetitions must be >= 1".into()));
    }
    let g = positive("g", g)?;
    let t = positive("t", t)?;
    let n = n_atoms as f64;
    Ok(2.0_f64.sqrt() / ((repetitions as f64).sqrt() * g * t * (n * (n + 2.0)).sqrt()))
}

/// Large-N form sqrt(2) / (sqrt(M) g t N) of [`delta_x_closed_form`].
pub fn delta_x_closed_form_asymptotic(
    n_atoms: u32,
    g: f64,
    t: f64,
    repetitions: u64,
) -> Result<f64> {
    if n_atoms == 0 || repetitions == 0 {
        return Err(Error::InvalidParameter("n_atoms and repetitions must be >= 1".into()));
    }
    let g = positive("g", g)?;
    let t = positive("t", t)?;
    Ok(2.0_f64.sqrt() / ((repetitions as f64).sqrt() * g * t * n_atoms as f64))
}

/// Standard-quantum-limit bound sqrt(2) / (sqrt(M) kappa t sqrt(N)).
pub fn sql_bound(n_atoms: u32, kappa: f64, t: f64, repetitions: u64) -> Result<f64> {
    if n_atoms == 0 || repetitions == 0 {
        return Err(Error::InvalidParameter("n_atoms and repetitions must be >= 1".into()));
    }
    let kappa = positive("kappa", kappa)?;
    let t = positive("t", t)?;
    Ok(2.0_f64.sqrt() / ((repetitions as f64).sqrt() * kappa * t * (n_atoms as f64).sqrt()))
}

/// Which of the two expressions is larger at the operating point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DominantLimit {
    Heisenberg,
    Sql,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LimitComparison {
    pub heisenberg: f64,
    pub sql: f64,
    pub dominant: DominantLimit,
    /// true iff the closed-form collective value exceeds the SQL bound,
    /// i.e. the apparent 1/N formula is already worse than 1/sqrt(N).
    pub inequality_holds: bool,
    /// kappa / (g sqrt(N)), the overdamping margin.
    pub kappa_over_g_sqrt_n: f64,
}

/// Evaluate both limits and report which dominates.
pub fn compare_limits(params: &PhysicalParameters, t: f64, repetitions: u64) -> Result<LimitComparison> {
    params.validate()?;
    let heisenberg = delta_x_closed_form(params.n_atoms, params.g, t, repetitions)?;
    let sql = sql_bound(params.n_atoms, params.kappa, t, repetitions)?;
    let inequality_holds = heisenberg > sql;
    Ok(LimitComparison {
        heisenberg,
        sql,
        dominant: if inequality_holds { DominantLimit::Heisenberg } else { DominantLimit::Sql },
        inequality_holds,
        kappa_over_g_sqrt_n: params.kappa / params.g_collective(),
    })
}

/// How the coupling is chosen as N varies in a sweep.
#[derive(Clone, Copy, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SweepConstraint {
    /// Keep g fixed for all N (nominal 1/N scaling of the closed form).
    FixedG { g: f64 },
    /// Keep the overdamping margin fixed: g sqrt(N) = kappa / c with c > 1.
    FixedMargin { c: f64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepSpec {
    pub n_list: Vec<u32>,
    pub constraint: SweepConstraint,
    pub kappa: f64,
    pub t: f64,
    pub repetitions: u64,
    /// Also run the counting pipeline per row to get a numerical delta_x.
    pub simulate: bool,
    /// Simulation budget: rows with N above this keep `delta_x_numeric = None`.
    pub max_simulated_n: u32,
    pub regime_threshold: f64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_list.len() < 2 {
            return Err(Error::InfeasibleConstraint(
                "sweep needs at least two atom numbers to fit an exponent".into(),
            ));
        }
        if self.n_list.iter().any(|&n| n == 0) {
            return Err(Error::InvalidParameter("n_list entries must be >= 1".into()));
        }
        positive("kappa", self.kappa)?;
        positive("t", self.t)?;
        if self.repetitions == 0 {
            return Err(Error::InvalidParameter("repetitions must be >= 1".into()));
        }
        match self.constraint {
            SweepConstraint::FixedG { g } => {
                positive("g", g)?;
            }
            SweepConstraint::FixedMargin { c } => {
                if !(c > 1.0) {
                    return Err(Error::InfeasibleConstraint(format!(
                        "fixed_margin needs c > 1 (got {c}): g sqrt(N) must sit below kappa"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One sweep row; constraint violations flag the row instead of dropping it.
#[derive(Clone, Debug, Serialize)]
pub struct ScalingRow {
    pub n_atoms: u32,
    pub g: f64,
    pub kappa: f64,
    pub t: f64,
    pub repetitions: u64,
    pub delta_x_heisenberg: f64,
    pub delta_x_sql: f64,
    pub delta_x_numeric: Option<f64>,
    /// g sqrt(N) / kappa.
    pub regime_ratio_high: f64,
    pub flags: Vec<String>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub r_squared: f64,
}

/// Least squares on (log N, log value).
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    if points.len() < 2 {
        return Err(Error::FitError(format!(
            "need at least 2 points, got {}",
            points.len()
        )));
    }
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for &(n, v) in points {
        if !(n > 0.0) || !(v > 0.0) {
            return Err(Error::FitError(format!(
                "all points must be strictly positive, got ({n}, {v})"
            )));
        }
        xs.push(n.ln());
        ys.push(v.ln());
    }
    let m = xs.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / m;
    let y_mean = ys.iter().sum::<f64>() / m;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for i in 0..xs.len() {
        let dx = xs[i] - x_mean;
        let dy = ys[i] - y_mean;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::FitError("all abscissae coincide".into()));
    }
    let exponent = sxy / sxx;
    let intercept = y_mean - exponent * x_mean;
    let ss_res: f64 = (0..xs.len())
        .map(|i| {
            let r = ys[i] - (intercept + exponent * xs[i]);
            r * r
        })
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(PowerLawFit { exponent, prefactor: intercept.exp(), r_squared })
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepResult {
    pub rows: Vec<ScalingRow>,
    pub heisenberg_fit: PowerLawFit,
    pub sql_fit: PowerLawFit,
    pub numeric_fit: Option<PowerLawFit>,
}

impl SweepResult {
    /// Plot-ready CSV, one row per N.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(
            "n_atoms,g,kappa,t,m,delta_x_heisenberg,delta_x_sql,delta_x_numeric,regime_ratio_high,flags\n",
        );
        for r in &self.rows {
            let numeric = r
                .delta_x_numeric
                .map(|v| format!("{v}"))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.n_atoms,
                r.g,
                r.kappa,
                r.t,
                r.repetitions,
                r.delta_x_heisenberg,
                r.delta_x_sql,
                numeric,
                r.regime_ratio_high,
                r.flags.join(";")
            ));
        }
        out
    }
}

/// Sweep the closed-form and SQL uncertainties over N under the chosen
/// coupling constraint, optionally backing each row with the simulated
/// counting pipeline, and fit log-log exponents.
///
/// Rows are computed in parallel and emitted in ascending N order.
pub fn scaling_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let mut n_list = spec.n_list.clone();
    n_list.sort_unstable();
    n_list.dedup();

    let rows: Vec<ScalingRow> = n_list
        .par_iter()
        .map(|&n| -> Result<ScalingRow> {
            let g = match spec.constraint {
                SweepConstraint::FixedG { g } => g,
                SweepConstraint::FixedMargin { c } => spec.kappa / (c * (n as f64).sqrt()),
            };
            let heisenberg = delta_x_closed_form(n, g, spec.t, spec.repetitions)?;
            let sql = sql_bound(n, spec.kappa, spec.t, spec.repetitions)?;
            let params = PhysicalParameters { g, kappa: spec.kappa, gamma: 0.0, n_atoms: n };
            let regime = regime_check(&params, spec.regime_threshold);
            let mut flags = Vec::new();
            if params.g_collective() >= spec.kappa {
                flags.push("g_sqrt_n_exceeds_kappa".to_string());
            }
            if !regime.pass {
                flags.push("regime_ratio_above_threshold".to_string());
            }
            let mut numeric = None;
            if spec.simulate && n <= spec.max_simulated_n {
                let sampler = CountingUncertaintySampler::new(params, spec.t);
                match delta_x_from_statistics(
                    &sampler,
                    g * spec.t,
                    spec.repetitions,
                    &FdConfig::default(),
                ) {
                    Ok(est) => numeric = Some(est.delta_x),
                    Err(e) => flags.push(format!("numeric_failed: {e}")),
                }
            }
            Ok(ScalingRow {
                n_atoms: n,
                g,
                kappa: spec.kappa,
                t: spec.t,
                repetitions: spec.repetitions,
                delta_x_heisenberg: heisenberg,
                delta_x_sql: sql,
                delta_x_numeric: numeric,
                regime_ratio_high: regime.ratio_high,
                flags,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let heisenberg_fit = fit_power_law(
        &rows
            .iter()
            .map(|r| (r.n_atoms as f64, r.delta_x_heisenberg))
            .collect::<Vec<_>>(),
    )?;
    let sql_fit = fit_power_law(
        &rows
            .iter()
            .map(|r| (r.n_atoms as f64, r.delta_x_sql))
            .collect::<Vec<_>>(),
    )?;
    let numeric_points: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.delta_x_numeric.map(|v| (r.n_atoms as f64, v)))
        .collect();
    let numeric_fit = if numeric_points.len() >= 2 {
        Some(fit_power_law(&numeric_points)?)
    } else {
        None
    };
    Ok(SweepResult { rows, heisenberg_fit, sql_fit, numeric_fit })
}

/// Analytic self-test family: `<A>_x = x^2` with constant variance.
#[derive(Clone, Copy, Debug)]
pub struct QuadraticFamily {
    pub variance: f64,
}

impl Default for QuadraticFamily {
    fn default() -> Self {
        Self { variance: 1.0 }
    }
}

impl StatisticsSampler for QuadraticFamily {
    fn sample(&self, x: f64) -> Result<StatisticsAtX> {
        Ok(StatisticsAtX { x, mean_a: x * x, var_a: self.variance })
    }
}

/// Quadratic family with deterministic seeded multiplicative noise on the
/// mean; exercises the noise robustness of the estimation pipeline.
#[derive(Clone, Copy, Debug)]
pub struct NoisyQuadraticFamily {
    pub variance: f64,
    /// Relative noise amplitude.
    pub noise: f64,
    pub seed: u64,
}

impl StatisticsSampler for NoisyQuadraticFamily {
    fn sample(&self, x: f64) -> Result<StatisticsAtX> {
        let u = splitmix64(self.seed ^ x.to_bits());
        let xi = (u >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0;
        Ok(StatisticsAtX {
            x,
            mean_a: x * x * (1.0 + self.noise * xi),
            var_a: self.variance,
        })
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counting-pipeline sampler for the binding x = g t at fixed measurement
/// time: the cavity-length signal modulates g while t_ref stays fixed, so
/// sampling at x means running the reduced counting hierarchy with
/// g = x / t_ref and reading the final mean and variance.
#[derive(Clone, Copy, Debug)]
pub struct CountingUncertaintySampler {
    pub base: PhysicalParameters,
    pub t_ref: f64,
    /// Initial ladder projection 2m; `None` = fully excited.
    pub initial_two_m: Option<i64>,
    pub record_points: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl CountingUncertaintySampler {
    pub fn new(base: PhysicalParameters, t_ref: f64) -> Self {
        Self {
            base,
            t_ref,
            initial_two_m: None,
            record_points: 9,
            abs_tol: 1e-12,
            rel_tol: 1e-12,
        }
    }
}

impl StatisticsSampler for CountingUncertaintySampler {
    fn sample(&self, x: f64) -> Result<StatisticsAtX> {
        if !(x > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "coupling-time product x must be positive, got {x}"
            )));
        }
        let params = PhysicalParameters { g: x / self.t_ref, ..self.base };
        let reduced = adiabatic_eliminate(&params)?;
        let ladder = reduced.space();
        let rho0 = match self.initial_two_m {
            Some(two_m) => DensityMatrix::dicke_state(&ladder, two_m)?,
            None => DensityMatrix::dicke_excited(&ladder),
        };
        let config = IntegratorConfig::uniform(self.t_ref, self.record_points)
            .with_tolerances(self.abs_tol, self.rel_tol);
        let stats = counting_statistics(&reduced, &rho0, &config)?;
        Ok(StatisticsAtX {
            x,
            mean_a: *stats.mean_count.last().unwrap(),
            var_a: *stats.var_count.last().unwrap(),
        })
    }
}

/// Counting-pipeline sampler for the binding x = dL/L through the cavity
/// geometry: each x is mapped to physical parameters by the coupling module
/// before the counting hierarchy runs for the fixed measurement time.
#[derive(Clone, Debug)]
pub struct CavityLengthSampler {
    pub binding: XBinding,
    pub t_ref: f64,
    pub initial_two_m: Option<i64>,
    pub record_points: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl CavityLengthSampler {
    pub fn new(binding: XBinding, t_ref: f64) -> Self {
        Self {
            binding,
            t_ref,
            initial_two_m: None,
            record_points: 9,
            abs_tol: 1e-12,
            rel_tol: 1e-12,
        }
    }
}

impl StatisticsSampler for CavityLengthSampler {
    fn sample(&self, x: f64) -> Result<StatisticsAtX> {
        let params = self.binding.params_at(x)?;
        let reduced = adiabatic_eliminate(&params)?;
        let ladder = reduced.space();
        let rho0 = match self.initial_two_m {
            Some(two_m) => DensityMatrix::dicke_state(&ladder, two_m)?,
            None => DensityMatrix::dicke_excited(&ladder),
        };
        let config = IntegratorConfig::uniform(self.t_ref, self.record_points)
            .with_tolerances(self.abs_tol, self.rel_tol);
        let stats = counting_statistics(&reduced, &rho0, &config)?;
        Ok(StatisticsAtX {
            x,
            mean_a: *stats.mean_count.last().unwrap(),
            var_a: *stats.var_count.last().unwrap(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_family_reference_point() {
        let est =
            delta_x_from_statistics(&QuadraticFamily::default(), 1.0, 1, &FdConfig::default())
                .unwrap();
        assert!((est.delta_x - 0.5).abs() < 1e-10, "{}", est.delta_x);
        assert!((est.derivative - 2.0).abs() < 1e-10);
        assert!((est.step_used - 1e-3).abs() < 1e-18);
    }

    #[test]
    fn repetitions_scale_exactly_as_inverse_sqrt() {
        let fd = FdConfig::default();
        let one = delta_x_from_statistics(&QuadraticFamily::default(), 1.0, 1, &fd).unwrap();
        let four = delta_x_from_statistics(&QuadraticFamily::default(), 1.0, 4, &fd).unwrap();
        let hundred =
            delta_x_from_statistics(&QuadraticFamily::default(), 1.0, 100, &fd).unwrap();
        assert_eq!(four.delta_x, one.delta_x / 2.0);
        assert_eq!(hundred.delta_x, one.delta_x / 10.0);
    }

    #[test]
    fn affine_rescaling_leaves_delta_x_invariant() {
        // A -> a A + b scales the variance by a^2 and the derivative by a
        let (a, b) = (3.7, -2.2);
        let scaled = move |x: f64| -> Result<StatisticsAtX> {
            Ok(StatisticsAtX { x, mean_a: a * x * x + b, var_a: a * a * 1.0 })
        };
        let fd = FdConfig::default();
        let plain = delta_x_from_statistics(&QuadraticFamily::default(), 1.3, 2, &fd).unwrap();
        let rescaled = delta_x_from_statistics(&scaled, 1.3, 2, &fd).unwrap();
        assert!(
            (plain.delta_x - rescaled.delta_x).abs() < 1e-10,
            "{} vs {}",
            plain.delta_x,
            rescaled.delta_x
        );
    }

    #[test]
    fn richardson_derivative_reaches_1e8_on_transcendental_family() {
        let family = |x: f64| -> Result<StatisticsAtX> {
            Ok(StatisticsAtX { x, mean_a: x.sin() * x.exp(), var_a: 1.0 })
        };
        let x0 = 0.8;
        let est = delta_x_from_statistics(&family, x0, 1, &FdConfig::default()).unwrap();
        let analytic = x0.exp() * (x0.sin() + x0.cos());
        assert!(
            (est.derivative - analytic).abs() < 1e-8,
            "derivative {} vs {analytic}",
            est.derivative
        );
    }

    #[test]
    fn insensitive_observable_is_an_error() {
        let flat = |x: f64| -> Result<StatisticsAtX> {
            Ok(StatisticsAtX { x, mean_a: 42.0, var_a: 1.0 })
        };
        assert!(matches!(
            delta_x_from_statistics(&flat, 1.0, 1, &FdConfig::default()),
            Err(Error::InsensitiveObservable { .. })
        ));
    }

    #[test]
    fn closed_form_reference_values() {
        assert_eq!(delta_x_closed_form(2, 1.0, 1.0, 1).unwrap(), 0.5);
        // doubling t halves the value exactly
        let a = delta_x_closed_form(5, 0.7, 1.3, 3).unwrap();
        let b = delta_x_closed_form(5, 0.7, 2.6, 3).unwrap();
        assert_eq!(b, a / 2.0);
        // asymptotic form within 1% for N >= 100
        for n in [100u32, 1000] {
            let exact = delta_x_closed_form(n, 1.0, 1.0, 1).unwrap();
            let asym = delta_x_closed_form_asymptotic(n, 1.0, 1.0, 1).unwrap();
            assert!(((exact / asym) - 1.0).abs() < 0.01, "N={n}");
        }
        assert!(delta_x_closed_form(2, 0.0, 1.0, 1).is_err());
        assert!(delta_x_closed_form(2, 1.0, -1.0, 1).is_err());
    }

    #[test]
    fn closed_form_identity_over_random_draws() {
        let mut state = 0x12345678_u64;
        let mut next = || {
            state = splitmix64(state);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..1000 {
            let n = 1 + (next() * 300.0) as u32;
            let g = 0.01 + next() * 10.0;
            let t = 0.01 + next() * 10.0;
            let m = 1 + (next() * 1000.0) as u64;
            let dx = delta_x_closed_form(n, g, t, m).unwrap();
            let nn = n as f64;
            let identity = dx * (m as f64).sqrt() * g * t * (nn * (nn + 2.0)).sqrt();
            assert!(
                (identity - 2.0_f64.sqrt()).abs() <= 1e-12,
                "identity broke: {identity}"
            );
        }
    }

    #[test]
    fn sql_reference_values() {
        let v = sql_bound(4, 1.0, 1.0, 1).unwrap();
        assert_eq!(v, 2.0_f64.sqrt() / 2.0);
        // N^{-1/2}: quadrupling N halves the bound
        assert_eq!(sql_bound(16, 1.0, 1.0, 1).unwrap(), v / 2.0);
        // 1/(kappa t)
        assert_eq!(sql_bound(4, 2.0, 1.0, 1).unwrap(), v / 2.0);
        assert_eq!(sql_bound(4, 1.0, 5.0, 1).unwrap(), v / 5.0);
    }

    #[test]
    fn limit_comparison_examples() {
        let p = PhysicalParameters { g: 1.0, kappa: 100.0, gamma: 0.0, n_atoms: 4 };
        let c = compare_limits(&p, 1.0, 1).unwrap();
        assert!((c.kappa_over_g_sqrt_n - 50.0).abs() < 1e-12);
        assert!(c.inequality_holds);
        assert_eq!(c.dominant, DominantLimit::Heisenberg);

        let p = PhysicalParameters { g: 1.0, kappa: 1.0, gamma: 0.0, n_atoms: 100 };
        let c = compare_limits(&p, 1.0, 1).unwrap();
        assert!((c.kappa_over_g_sqrt_n - 0.1).abs() < 1e-12);
        assert!(!c.inequality_holds);
        assert_eq!(c.dominant, DominantLimit::Sql);
    }

    #[test]
    fn limit_comparison_boundary_ratio() {
        // at kappa = g sqrt(N) the two differ only by the sqrt(N(N+2)) vs N
        // correction: heisenberg/sql = N / sqrt(N(N+2))
        for n in [2u32, 7, 64] {
            let nn = n as f64;
            let p = PhysicalParameters { g: 1.0, kappa: nn.sqrt(), gamma: 0.0, n_atoms: n };
            let c = compare_limits(&p, 1.0, 1).unwrap();
            let want = nn / (nn * (nn + 2.0)).sqrt();
            assert!(
                ((c.heisenberg / c.sql) - want).abs() < 1e-12,
                "N={n}: {} vs {want}",
                c.heisenberg / c.sql
            );
            assert!(!c.inequality_holds);
        }
    }

    #[test]
    fn inequality_monotone_in_kappa_and_n() {
        // fixed g, N: once kappa crosses the threshold the inequality holds
        // for all larger kappa
        let mut prev = false;
        for k in 1..60 {
            let p = PhysicalParameters {
                g: 1.0,
                kappa: 0.2 * k as f64,
                gamma: 0.0,
                n_atoms: 9,
            };
            let holds = compare_limits(&p, 1.0, 1).unwrap().inequality_holds;
            assert!(holds >= prev, "flipped back at kappa = {}", p.kappa);
            prev = holds;
        }
        // fixed g, kappa: once N crosses the threshold the inequality fails
        // for all larger N
        let mut prev = true;
        for n in 1..200u32 {
            let p = PhysicalParameters { g: 1.0, kappa: 10.0, gamma: 0.0, n_atoms: n };
            let holds = compare_limits(&p, 1.0, 1).unwrap().inequality_holds;
            assert!(holds <= prev, "flipped back at N = {n}");
            prev = holds;
        }
    }

    #[test]
    fn power_law_fit_exact_and_noisy() {
        let points: Vec<(f64, f64)> = [8.0, 16.0, 32.0, 64.0]
            .iter()
            .map(|&n| (n, 3.0 / n))
            .collect();
        let fit = fit_power_law(&points).unwrap();
        assert!((fit.exponent + 1.0).abs() < 1e-12);
        assert!((fit.prefactor - 3.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);

        let points: Vec<(f64, f64)> = [8.0_f64, 16.0, 32.0, 64.0]
            .iter()
            .map(|&n| (n, 2.0 / n.sqrt()))
            .collect();
        let fit = fit_power_law(&points).unwrap();
        assert!((fit.exponent + 0.5).abs() < 1e-12);

        // +-1% multiplicative seeded noise on 1/N data
        let mut state = 99_u64;
        let mut next = || {
            state = splitmix64(state);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        let points: Vec<(f64, f64)> = (3..10)
            .map(|k| {
                let n = (1u64 << k) as f64;
                (n, (1.0 / n) * (1.0 + 0.01 * next()))
            })
            .collect();
        let fit = fit_power_law(&points).unwrap();
        assert!((fit.exponent + 1.0).abs() < 0.05, "{}", fit.exponent);
    }

    #[test]
    fn power_law_fit_rejects_bad_input() {
        assert!(matches!(fit_power_law(&[(1.0, 1.0)]), Err(Error::FitError(_))));
        assert!(fit_power_law(&[(1.0, 1.0), (2.0, -0.5)]).is_err());
        assert!(fit_power_law(&[(1.0, 1.0), (2.0, 0.0)]).is_err());
    }

    #[test]
    fn sweep_fixed_g_gives_heisenberg_scaling() {
        let spec = SweepSpec {
            n_list: vec![8, 16, 32, 64, 128],
            constraint: SweepConstraint::FixedG { g: 1.0 },
            kappa: 1000.0,
            t: 1.0,
            repetitions: 1,
            simulate: false,
            max_simulated_n: 0,
            regime_threshold: 0.1,
        };
        let result = scaling_sweep(&spec).unwrap();
        assert!(
            (result.heisenberg_fit.exponent + 1.0).abs() < 0.05,
            "{}",
            result.heisenberg_fit.exponent
        );
        assert!((result.sql_fit.exponent + 0.5).abs() < 1e-12);
    }

    #[test]
    fn sweep_fixed_margin_degrades_to_sql_scaling() {
        let spec = SweepSpec {
            n_list: vec![8, 16, 32, 64, 128],
            constraint: SweepConstraint::FixedMargin { c: 10.0 },
            kappa: 1.0,
            t: 1.0,
            repetitions: 1,
            simulate: false,
            max_simulated_n: 0,
            regime_threshold: 0.1,
        };
        let result = scaling_sweep(&spec).unwrap();
        assert!(
            (result.heisenberg_fit.exponent + 0.5).abs() < 0.05,
            "{}",
            result.heisenberg_fit.exponent
        );
        for row in &result.rows {
            // margin fixed at 10 > 1/threshold: regime satisfied, no flags
            assert!((row.regime_ratio_high - 0.1).abs() < 1e-12);
            assert!(row.flags.is_empty(), "{:?}", row.flags);
            assert!(row.delta_x_heisenberg > row.delta_x_sql);
        }
    }

    #[test]
    fn fixed_margin_ratio_approaches_c() {
        // delta_x_heisenberg / sql = c N / sqrt(N(N+2)) -> c
        let c = 10.0;
        let n = 10_000u32;
        let kappa = 3.0;
        let g = kappa / (c * (n as f64).sqrt());
        let h = delta_x_closed_form(n, g, 1.0, 1).unwrap();
        let s = sql_bound(n, kappa, 1.0, 1).unwrap();
        assert!(((h / s) / c - 1.0).abs() < 0.01, "{}", h / s);
    }

    #[test]
    fn sweep_flags_infeasible_rows_but_keeps_them() {
        let spec = SweepSpec {
            n_list: vec![4, 40000],
            constraint: SweepConstraint::FixedG { g: 1.0 },
            kappa: 100.0,
            t: 1.0,
            repetitions: 1,
            simulate: false,
            max_simulated_n: 0,
            regime_threshold: 0.1,
        };
        let result = scaling_sweep(&spec).unwrap();
        assert_eq!(result.rows.len(), 2);
        assert!(result.rows[0].flags.is_empty());
        assert!(result.rows[1]
            .flags
            .iter()
            .any(|f| f == "g_sqrt_n_exceeds_kappa"));
    }

    #[test]
    fn sweep_rejects_single_entry() {
        let spec = SweepSpec {
            n_list: vec![8],
            constraint: SweepConstraint::FixedG { g: 1.0 },
            kappa: 100.0,
            t: 1.0,
            repetitions: 1,
            simulate: false,
            max_simulated_n: 0,
            regime_threshold: 0.1,
        };
        assert!(matches!(scaling_sweep(&spec), Err(Error::InfeasibleConstraint(_))));
    }

    #[test]
    fn counting_sampler_produces_usable_statistics() {
        let n = 2u32;
        let g0 = 1.0;
        let kappa = 100.0 * g0 * (n as f64).sqrt();
        let params = PhysicalParameters { g: g0, kappa, gamma: 0.0, n_atoms: n };
        let gamma_c = 2.0 * g0 * g0 / kappa;
        let t_ref = 0.01 / (gamma_c * n as f64);
        let sampler = CountingUncertaintySampler::new(params, t_ref);
        let est =
            delta_x_from_statistics(&sampler, g0 * t_ref, 1, &FdConfig::default()).unwrap();
        assert!(est.delta_x.is_finite() && est.delta_x > 0.0);
        assert!(est.derivative > 0.0);
        assert!(est.mean_a > 0.0 && est.mean_a < 0.05);
    }
}
