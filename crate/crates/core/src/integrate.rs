//! ODE integrators over flat complex state vectors.
//!
//! The Lindblad right-hand sides in this crate are linear and autonomous, but
//! the integrators accept a general `rhs(t, y, out)` callback. Two steppers
//! are provided: classic fixed-step RK4 and the Dormand-Prince 5(4) embedded
//! pair with PI step-size control. Sample times are produced by cubic Hermite
//! interpolation inside accepted steps, so the record grid does not constrain
//! the step sequence.

use ndarray::{Array1, ArrayView1};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Counters reported by a completed integration.
#[derive(Clone, Copy, Debug, Default)]
pub struct StepStats {
    pub steps: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

/// Fixed-step classic RK4 from `t0` across `grid`, landing on every grid
/// node exactly (segments are subdivided uniformly with sub-steps <= `step`).
pub fn integrate_fixed_rk4<F>(
    mut rhs: F,
    y0: &Array1<Complex64>,
    t0: f64,
    grid: &[f64],
    step: f64,
    mut on_record: impl FnMut(usize, f64, &Array1<Complex64>),
) -> Result<StepStats>
where
    F: FnMut(f64, &ArrayView1<Complex64>, &mut Array1<Complex64>),
{
    if !(step > 0.0) {
        return Err(Error::InvalidParameter("rk4 step must be positive".into()));
    }
    let n = y0.len();
    let mut stats = StepStats::default();
    let mut y = y0.clone();
    let mut k1 = Array1::zeros(n);
    let mut k2 = Array1::zeros(n);
    let mut k3 = Array1::zeros(n);
    let mut k4 = Array1::zeros(n);
    let mut tmp = Array1::zeros(n);
    let mut t = t0;
    for (gi, &tg) in grid.iter().enumerate() {
        let span = tg - t;
        if span < 0.0 {
            return Err(Error::InvalidParameter(
                "record grid must be ascending and start at or after t0".into(),
            ));
        }
        if span > 0.0 {
            let n_sub = (span / step).ceil().max(1.0) as usize;
            let h = span / n_sub as f64;
            for _ in 0..n_sub {
                rhs(t, &y.view(), &mut k1);
                azip_set(&mut tmp, &y, &k1, 0.5 * h);
                rhs(t + 0.5 * h, &tmp.view(), &mut k2);
                azip_set(&mut tmp, &y, &k2, 0.5 * h);
                rhs(t + 0.5 * h, &tmp.view(), &mut k3);
                azip_set(&mut tmp, &y, &k3, h);
                rhs(t + h, &tmp.view(), &mut k4);
                for i in 0..n {
                    y[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
                t += h;
                stats.steps += 1;
                stats.rhs_evals += 4;
            }
            t = tg;
        }
        on_record(gi, tg, &y);
    }
    Ok(stats)
}

#[inline]
fn azip_set(
    out: &mut Array1<Complex64>,
    y: &Array1<Complex64>,
    k: &Array1<Complex64>,
    h: f64,
) {
    for i in 0..y.len() {
        out[i] = y[i] + h * k[i];
    }
}

// Dormand-Prince 5(4) tableau
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b - b_hat (error weights, includes the k7 term)
const E1: f64 = B1 - 5179.0 / 57600.0;
const E3: f64 = B3 - 7571.0 / 16695.0;
const E4: f64 = B4 - 393.0 / 640.0;
const E5: f64 = B5 + 92097.0 / 339200.0;
const E6: f64 = B6 - 187.0 / 2100.0;
const E7: f64 = -1.0 / 40.0;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - BETA * 0.75;
const FAC_SHRINK_MAX: f64 = 5.0; // at most /5 per rejection
const FAC_GROW_MAX: f64 = 0.1; // at most x10 per acceptance

/// Adaptive Dormand-Prince 5(4) with PI step control from `t0` to the last
/// grid point. Grid samples are produced by cubic Hermite interpolation on
/// the accepted steps.
pub fn integrate_adaptive<F>(
    mut rhs: F,
    y0: &Array1<Complex64>,
    t0: f64,
    grid: &[f64],
    abs_tol: f64,
    rel_tol: f64,
    max_step: f64,
    mut on_record: impl FnMut(usize, f64, &Array1<Complex64>),
) -> Result<StepStats>
where
    F: FnMut(f64, &ArrayView1<Complex64>, &mut Array1<Complex64>),
{
    if !(abs_tol > 0.0) || !(rel_tol > 0.0) {
        return Err(Error::InvalidParameter("tolerances must be positive".into()));
    }
    let t_end = match grid.last() {
        Some(&t) => t,
        None => return Ok(StepStats::default()),
    };
    let n = y0.len();
    let mut stats = StepStats::default();
    let mut t = t0;
    let mut y = y0.clone();
    let mut k = vec![Array1::<Complex64>::zeros(n); 7];
    let mut y_tmp = Array1::<Complex64>::zeros(n);
    let mut y_new = Array1::<Complex64>::zeros(n);

    let mut gi = 0;
    while gi < grid.len() && grid[gi] <= t {
        on_record(gi, grid[gi], &y);
        gi += 1;
    }
    if gi >= grid.len() {
        return Ok(stats);
    }

    rhs(t, &y.view(), &mut k[0]);
    stats.rhs_evals += 1;
    let mut h = initial_step(
        &mut rhs,
        &y,
        &k[0].clone(),
        t,
        t_end,
        abs_tol,
        rel_tol,
        max_step,
        &mut stats,
    );

    let mut facold = 1e-4_f64;
    let mut rejected_last = false;
    loop {
        if t >= t_end {
            break;
        }
        h = h.min(max_step).min(t_end - t);
        if h < 4.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(Error::StepSizeUnderflow { t, h });
        }
        // stages (k[0] holds f(t, y) from FSAL)
        stage(&mut y_tmp, &y, &[(h * A21, &k[0])]);
        rhs(t + C2 * h, &y_tmp.view(), &mut k[1]);
        stage(&mut y_tmp, &y, &[(h * A31, &k[0]), (h * A32, &k[1])]);
        rhs(t + C3 * h, &y_tmp.view(), &mut k[2]);
        stage(
            &mut y_tmp,
            &y,
            &[(h * A41, &k[0]), (h * A42, &k[1]), (h * A43, &k[2])],
        );
        rhs(t + C4 * h, &y_tmp.view(), &mut k[3]);
        stage(
            &mut y_tmp,
            &y,
            &[
                (h * A51, &k[0]),
                (h * A52, &k[1]),
                (h * A53, &k[2]),
                (h * A54, &k[3]),
            ],
        );
        rhs(t + C5 * h, &y_tmp.view(), &mut k[4]);
        stage(
            &mut y_tmp,
            &y,
            &[
                (h * A61, &k[0]),
                (h * A62, &k[1]),
                (h * A63, &k[2]),
                (h * A64, &k[3]),
                (h * A65, &k[4]),
            ],
        );
        rhs(t + h, &y_tmp.view(), &mut k[5]);
        stage(
            &mut y_new,
            &y,
            &[
                (h * B1, &k[0]),
                (h * B3, &k[2]),
                (h * B4, &k[3]),
                (h * B5, &k[4]),
                (h * B6, &k[5]),
            ],
        );
        rhs(t + h, &y_new.view(), &mut k[6]);
        stats.rhs_evals += 6;

        // scaled rms error
        let mut err_acc = 0.0_f64;
        for i in 0..n {
            let e = h
                * (E1 * k[0][i]
                    + E3 * k[2][i]
                    + E4 * k[3][i]
                    + E5 * k[4][i]
                    + E6 * k[5][i]
                    + E7 * k[6][i]);
            let sc = abs_tol + rel_tol * y[i].norm().max(y_new[i].norm());
            let q = e.norm() / sc;
            err_acc += q * q;
        }
        let err = (err_acc / n as f64).sqrt();

        if !err.is_finite() {
            stats.rejected += 1;
            rejected_last = true;
            h *= 0.25;
            continue;
        }
        let fac11 = err.powf(EXPO1);
        if err <= 1.0 {
            // accept
            let t_new = if (t + h - t_end).abs() <= 4.0 * f64::EPSILON * t_end.abs().max(1.0) {
                t_end
            } else {
                t + h
            };
            while gi < grid.len() && grid[gi] <= t_new {
                let theta = ((grid[gi] - t) / h).clamp(0.0, 1.0);
                hermite_into(&mut y_tmp, theta, h, &y, &k[0], &y_new, &k[6]);
                on_record(gi, grid[gi], &y_tmp);
                gi += 1;
            }
            t = t_new;
            std::mem::swap(&mut y, &mut y_new);
            k.swap(0, 6); // FSAL
            stats.steps += 1;
            let fac = (fac11 / facold.powf(BETA) / SAFETY)
                .clamp(FAC_GROW_MAX, FAC_SHRINK_MAX);
            facold = err.max(1e-4);
            let mut h_new = h / fac;
            if rejected_last {
                h_new = h_new.min(h);
            }
            rejected_last = false;
            h = h_new;
            if gi >= grid.len() {
                break;
            }
        } else {
            stats.rejected += 1;
            rejected_last = true;
            h /= (fac11 / SAFETY).min(FAC_SHRINK_MAX);
        }
    }
    Ok(stats)
}

#[inline]
fn stage(out: &mut Array1<Complex64>, y: &Array1<Complex64>, terms: &[(f64, &Array1<Complex64>)]) {
    out.assign(y);
    for &(w, kv) in terms {
        for i in 0..out.len() {
            out[i] += w * kv[i];
        }
    }
}

/// Cubic Hermite interpolation on one accepted step.
fn hermite_into(
    out: &mut Array1<Complex64>,
    theta: f64,
    h: f64,
    y0: &Array1<Complex64>,
    f0: &Array1<Complex64>,
    y1: &Array1<Complex64>,
    f1: &Array1<Complex64>,
) {
    let t2 = theta * theta;
    let t3 = t2 * theta;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + theta;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    for i in 0..out.len() {
        out[i] = h00 * y0[i] + (h10 * h) * f0[i] + h01 * y1[i] + (h11 * h) * f1[i];
    }
}

#[allow(clippy::too_many_arguments)]
fn initial_step<F>(
    rhs: &mut F,
    y0: &Array1<Complex64>,
    f0: &Array1<Complex64>,
    t0: f64,
    t_end: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_step: f64,
    stats: &mut StepStats,
) -> f64
where
    F: FnMut(f64, &ArrayView1<Complex64>, &mut Array1<Complex64>),
{
    let n = y0.len();
    let span = t_end - t0;
    let sc = |y: &Array1<Complex64>, i: usize| abs_tol + rel_tol * y[i].norm();
    let d0 = (y0.iter().enumerate().map(|(i, v)| (v.norm() / sc(y0, i)).powi(2)).sum::<f64>()
        / n as f64)
        .sqrt();
    let d1 = (f0.iter().enumerate().map(|(i, v)| (v.norm() / sc(y0, i)).powi(2)).sum::<f64>()
        / n as f64)
        .sqrt();
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(span).min(max_step);
    let mut y1 = Array1::<Complex64>::zeros(n);
    for i in 0..n {
        y1[i] = y0[i] + h0 * f0[i];
    }
    let mut f1 = Array1::<Complex64>::zeros(n);
    rhs(t0 + h0, &y1.view(), &mut f1);
    stats.rhs_evals += 1;
    let d2 = (f1
        .iter()
        .zip(f0.iter())
        .enumerate()
        .map(|(i, (a, b))| ((*a - *b).norm() / sc(y0, i)).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt()
        / h0;
    let d_max = d1.max(d2);
    let h1 = if d_max <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d_max).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span).min(max_step)
}
