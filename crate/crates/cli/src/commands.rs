//! Subcommand implementations.

use serde_json::json;
use srqm_core::coupling::{
    bind_x_to_model, coupling_sensitivity, coupling_strength, LengthPerturbation,
};
use srqm_core::dynamics::{
    build_tavis_cummings, build_tavis_cummings_on_ladder, evolve as evolve_model,
    named_observable, Channel, LindbladModel, PhysicalParameters, Representation,
};
use srqm_core::estimation::{
    delta_x_closed_form, delta_x_from_statistics, scaling_sweep, sql_bound, CavityLengthSampler,
    CountingUncertaintySampler, EstimationResult, FdConfig, NoisyQuadraticFamily,
    QuadraticFamily, SweepSpec,
};
use srqm_core::hilbert::{DensityMatrix, DickeSpace, FockSpace, FullAtomSpace, Space};
use srqm_core::superradiance::{
    adiabatic_eliminate, counting_statistics, cumulative_integral, regime_check,
};

use crate::config::{BindingSection, InitialState, NamedState, RepresentationChoice, RunConfig};
use crate::metadata;
use crate::output::OutputContext;
use crate::AppError;

fn vacuum(n_max: u32) -> DensityMatrix {
    DensityMatrix::basis_state(Space::Fock(FockSpace::new(n_max)), 0).unwrap()
}

/// Model plus matching initial state for the evolve command.
fn build_model_and_state(
    config: &RunConfig,
    params: &PhysicalParameters,
) -> Result<(LindbladModel, DensityMatrix), AppError> {
    let initial = config.require_initial_state()?;
    let n = params.n_atoms;
    let n_max = config.n_max;
    match config.representation {
        RepresentationChoice::Dicke => {
            let (ladder, atomic) = match initial {
                InitialState::Named(NamedState::Excited) => {
                    let ladder = DickeSpace::new(n)?;
                    (ladder, DensityMatrix::dicke_excited(&ladder))
                }
                InitialState::Named(NamedState::Ground) => {
                    let ladder = DickeSpace::new(n)?;
                    (ladder, DensityMatrix::dicke_ground(&ladder))
                }
                InitialState::Named(NamedState::Dark) => {
                    return Err(AppError::validation(
                        "initial_state \"dark\": the J = 0 states sit outside the maximal \
                         ladder; set representation = \"full\" (n_atoms = 2) or request a \
                         ladder state {\"two_j\": 0, \"two_m\": 0}",
                    ))
                }
                InitialState::Ladder { two_j, two_m } => {
                    let ladder = DickeSpace::with_spin(n, two_j)?;
                    (ladder, DensityMatrix::dicke_state(&ladder, two_m)?)
                }
            };
            let model = build_tavis_cummings_on_ladder(
                params,
                n_max,
                &ladder,
                config.collective_gamma,
            )?;
            Ok((model, atomic.tensor_product(&vacuum(n_max))))
        }
        RepresentationChoice::Full => {
            let full = FullAtomSpace::new(n)?;
            let atomic = match initial {
                InitialState::Named(NamedState::Excited) => {
                    DensityMatrix::full_atom_excited(&full)
                }
                InitialState::Named(NamedState::Ground) => {
                    DensityMatrix::full_atom_state(&full, 0)?
                }
                InitialState::Named(NamedState::Dark) => DensityMatrix::singlet_pair(&full)
                    .map_err(|e| {
                        AppError::validation(format!(
                            "{e}; for larger even N the J = 0 subspace is degenerate, so \
                             construct the state explicitly"
                        ))
                    })?,
                InitialState::Ladder { two_j, two_m } => {
                    if two_j != n {
                        return Err(AppError::validation(
                            "sub-maximal ladder states are only available in the dicke \
                             representation",
                        ));
                    }
                    let ladder = DickeSpace::new(n)?;
                    DensityMatrix::dicke_state(&ladder, two_m)?.symmetric_embed(&full)?
                }
            };
            let model =
                build_tavis_cummings(params, n_max, Representation::Full, config.collective_gamma)?;
            Ok((model, atomic.tensor_product(&vacuum(n_max))))
        }
    }
}

pub fn evolve(config: &RunConfig, ctx: &OutputContext) -> Result<(), AppError> {
    let params = config.require_model()?;
    let integ = config.require_integrator()?.to_core();
    let (model, rho0) = build_model_and_state(config, &params)?;
    let mut observables = Vec::new();
    for name in &config.observables {
        observables.push((name.clone(), named_observable(model.space(), name)?));
    }
    let mut ts = evolve_model(&model, &rho0, &integ, &observables)?;
    // derived cumulative leak channel: 2 kappa int <a!a> dt
    if params.kappa > 0.0 {
        if let Some(photon) = ts.channels.iter().find(|c| c.name == "photon_number") {
            let mut leaked = cumulative_integral(&ts.times, &photon.values);
            for v in leaked.iter_mut() {
                *v *= 2.0 * params.kappa;
            }
            ts.channels.push(Channel { name: "leaked_count".into(), values: leaked });
        }
    }
    let regime = regime_check(&params, config.regime_threshold);
    if !regime.pass {
        eprintln!(
            "warning: outside the superradiance validity window \
             (gamma/(g sqrt N) = {:.3e}, g sqrt N / kappa = {:.3e}, threshold {})",
            regime.ratio_low, regime.ratio_high, regime.threshold
        );
    }
    for w in &ts.warnings {
        eprintln!("warning: {w}");
    }
    let meta = metadata::build(config, ctx, Some(&regime), None, model.approximation_flags());
    let base = &config.output_basename;
    let mut written = Vec::new();
    if ctx.format.wants_csv() {
        written.push(ctx.write(&format!("{base}.csv"), &ts.to_csv_string())?);
    }
    if ctx.format.wants_json() {
        let doc = json!({ "timeseries": ts, "metadata": meta });
        written.push(ctx.write_json_value(&format!("{base}.json"), &doc)?);
    }
    written.push(ctx.write_json_value(&format!("{base}.meta.json"), &meta)?);
    println!(
        "evolve: {} samples, {}",
        ts.times.len(),
        written
            .iter()
            .map(|p| p.display().to_string())
            .collect::<Vec<_>>()
            .join(" ")
    );
    Ok(())
}

pub fn counting(config: &RunConfig, ctx: &OutputContext) -> Result<(), AppError> {
    let params = config.require_model()?;
    let integ = config.require_integrator()?.to_core();
    let initial = config.require_initial_state()?;
    let n = params.n_atoms;
    let rho0 = match initial {
        InitialState::Named(NamedState::Excited) => {
            DensityMatrix::dicke_excited(&DickeSpace::new(n)?)
        }
        InitialState::Named(NamedState::Ground) => {
            DensityMatrix::dicke_ground(&DickeSpace::new(n)?)
        }
        InitialState::Named(NamedState::Dark) => {
            let ladder = DickeSpace::with_spin(n, 0).map_err(|e| {
                AppError::validation(format!("initial_state \"dark\" needs even n_atoms: {e}"))
            })?;
            DensityMatrix::dicke_state(&ladder, 0)?
        }
        InitialState::Ladder { two_j, two_m } => {
            DensityMatrix::dicke_state(&DickeSpace::with_spin(n, two_j)?, two_m)?
        }
    };
    let mut reduced = adiabatic_eliminate(&params)?;
    if config.collective_gamma {
        reduced = reduced.with_collective_gamma_approximation();
    }
    let stats = counting_statistics(&reduced, &rho0, &integ)?;
    let regime = regime_check(&params, config.regime_threshold);
    if !regime.pass {
        eprintln!(
            "warning: outside the superradiance validity window; the reduced model is an \
             extrapolation here (g sqrt N / kappa = {:.3e})",
            regime.ratio_high
        );
    }
    for w in &stats.warnings {
        eprintln!("warning: {w}");
    }
    let flags: Vec<String> = stats.warnings.clone();
    let meta = metadata::build(config, ctx, Some(&regime), None, &flags);
    let base = &config.output_basename;
    let mut written = Vec::new();
    if ctx.format.wants_csv() {
        written.push(ctx.write(&format!("{base}.csv"), &stats.to_csv_string())?);
    }
    if ctx.format.wants_json() {
        let doc = json!({ "counting": stats, "metadata": meta });
        written.push(ctx.write_json_value(&format!("{base}.json"), &doc)?);
    }
    written.push(ctx.write_json_value(&format!("{base}.meta.json"), &meta)?);
    println!(
        "counting: mean(t_final) = {}, {}",
        stats.mean_count.last().unwrap(),
        written
            .iter()
            .map(|p| p.display().to_string())
            .collect::<Vec<_>>()
            .join(" ")
    );
    Ok(())
}

pub fn regime(config: &RunConfig, ctx: &OutputContext) -> Result<(), AppError> {
    let params = config.require_model()?;
    let report = regime_check(&params, config.regime_threshold);
    let meta = metadata::build(config, ctx, Some(&report), None, &[]);
    let doc = json!({ "regime": report, "metadata": meta });
    println!(
        "{}",
        serde_json::to_string_pretty(&doc).map_err(|e| AppError::io(e.to_string()))?
    );
    Ok(())
}

pub fn sweep(config: &RunConfig, ctx: &OutputContext) -> Result<(), AppError> {
    let section = config.require_sweep()?;
    let spec = SweepSpec {
        n_list: section.n_list.clone(),
        constraint: section.constraint.into(),
        kappa: section.kappa,
        t: section.t,
        repetitions: section.repetitions,
        simulate: section.simulate,
        max_simulated_n: section.max_simulated_n,
        regime_threshold: config.regime_threshold,
    };
    let result = scaling_sweep(&spec)?;
    let meta = metadata::build(config, ctx, None, None, &[]);
    let base = &config.output_basename;
    let mut written = Vec::new();
    if ctx.format.wants_csv() {
        written.push(ctx.write(&format!("{base}.csv"), &result.to_csv_string())?);
    }
    if ctx.format.wants_json() {
        let doc = json!({
            "rows": result.rows,
            "fitted_exponents": {
                "heisenberg": result.heisenberg_fit,
                "sql": result.sql_fit,
                "numeric": result.numeric_fit,
            },
            "metadata": meta,
        });
        written.push(ctx.write_json_value(&format!("{base}.json"), &doc)?);
    }
    written.push(ctx.write_json_value(&format!("{base}.meta.json"), &meta)?);
    println!(
        "sweep: heisenberg exponent {:.4}, sql exponent {:.4}{}; {}",
        result.heisenberg_fit.exponent,
        result.sql_fit.exponent,
        result
            .numeric_fit
            .map(|f| format!(", numeric exponent {:.4}", f.exponent))
            .unwrap_or_default(),
        written
            .iter()
            .map(|p| p.display().to_string())
            .collect::<Vec<_>>()
            .join(" ")
    );
    Ok(())
}

pub fn estimate(config: &RunConfig, ctx: &OutputContext) -> Result<(), AppError> {
    let section = config.require_estimate()?;
    let fd = FdConfig { step: section.fd_step, richardson_levels: section.richardson_levels };
    let mut regime_report = None;
    let mut unit_scale = None;
    let mut closed_form = None;
    let est: EstimationResult = match section.binding {
        BindingSection::Quadratic => {
            delta_x_from_statistics(&QuadraticFamily::default(), section.x0, section.repetitions, &fd)?
        }
        BindingSection::QuadraticNoisy { noise } => {
            let family = NoisyQuadraticFamily {
                variance: 1.0,
                noise,
                seed: ctx.seed.unwrap_or(0),
            };
            delta_x_from_statistics(&family, section.x0, section.repetitions, &fd)?
        }
        BindingSection::CouplingTime { t_ref } => {
            let params = config.require_model()?;
            if !(t_ref > 0.0) {
                return Err(AppError::validation("estimate.binding.t_ref must be positive"));
            }
            let g0 = section.x0 / t_ref;
            let at_x0 = PhysicalParameters { g: g0, ..params };
            regime_report = Some(regime_check(&at_x0, config.regime_threshold));
            let sampler = CountingUncertaintySampler::new(params, t_ref);
            let est = delta_x_from_statistics(&sampler, section.x0, section.repetitions, &fd)?;
            let heisenberg =
                delta_x_closed_form(params.n_atoms, g0, t_ref, section.repetitions)?;
            let sql = sql_bound(params.n_atoms, params.kappa, t_ref, section.repetitions)?;
            closed_form = Some(json!({
                "heisenberg": heisenberg,
                "sql": sql,
                "achieved_ratio": est.delta_x / heisenberg,
            }));
            est
        }
        BindingSection::CavityLength { t_ref } => {
            let params = config.require_model()?;
            let geom = config.require_geometry()?;
            if !(t_ref > 0.0) {
                return Err(AppError::validation("estimate.binding.t_ref must be positive"));
            }
            let mut pert = LengthPerturbation::new(0.0, geom)?;
            if let Some(p) = &config.perturbation {
                pert.z_comoving = p.z_comoving;
            }
            let binding = bind_x_to_model(&pert, &params)?;
            unit_scale = Some(binding.unit_record());
            regime_report = Some(regime_check(
                &binding.params_at(section.x0)?,
                config.regime_threshold,
            ));
            let sampler = CavityLengthSampler::new(binding, t_ref);
            delta_x_from_statistics(&sampler, section.x0, section.repetitions, &fd)?
        }
    };
    if let Some(r) = &regime_report {
        if !r.pass {
            eprintln!(
                "warning: operating point outside the superradiance validity window \
                 (g sqrt N / kappa = {:.3e})",
                r.ratio_high
            );
        }
    }
    let meta = metadata::build(config, ctx, regime_report.as_ref(), unit_scale.as_ref(), &[]);
    let doc = json!({ "estimate": est, "closed_form": closed_form, "metadata": meta });
    let base = &config.output_basename;
    let path = ctx.write_json_value(&format!("{base}.json"), &doc)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&doc).map_err(|e| AppError::io(e.to_string()))?
    );
    eprintln!("estimate: wrote {}", path.display());
    Ok(())
}

pub fn coupling(config: &RunConfig, ctx: &OutputContext) -> Result<(), AppError> {
    let geom = config.require_geometry()?;
    let x = config.perturbation.map(|p| p.x).unwrap_or(0.0);
    let mut pert = LengthPerturbation::new(x, geom)?;
    if let Some(p) = &config.perturbation {
        pert.z_comoving = p.z_comoving;
    }
    let g_reference = coupling_strength(&geom)?;
    let sens = coupling_sensitivity(&pert)?;
    let mut unit_scale = None;
    if let Some(model) = config.model {
        let params: PhysicalParameters = model.into();
        let reference = LengthPerturbation::new(0.0, geom)?;
        if let Ok(binding) = bind_x_to_model(&reference, &params) {
            unit_scale = Some(binding.unit_record());
        }
    }
    let meta = metadata::build(config, ctx, None, unit_scale.as_ref(), &[]);
    let doc = json!({
        "coupling": {
            "g_reference": g_reference,
            "wavenumber": geom.wavenumber(),
            "angular_frequency": geom.angular_frequency(),
            "mode_volume": geom.mode_volume(),
            "x": x,
            "g_at_x": sens.g_at_x,
            "dg_dl": sens.dg_dl,
            "dg_dx": sens.dg_dx,
        },
        "metadata": meta,
    });
    let base = &config.output_basename;
    let path = ctx.write_json_value(&format!("{base}.json"), &doc)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&doc).map_err(|e| AppError::io(e.to_string()))?
    );
    eprintln!("coupling: wrote {}", path.display());
    Ok(())
}
