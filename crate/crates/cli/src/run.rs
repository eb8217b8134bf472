//! Experiment orchestration: build the bath, propagate, derive
//! observables and overlays, write every artifact plus a manifest that
//! reproduces the run.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::warn;
use serde::Serialize;

use spinbath_core::analytic::{
    ensemble_mean_asymptote, ensemble_mean_bin_average, exponential_population,
    exponential_validity, linear_population, linear_validity, markov_qubit_population,
    zeno_population, zeno_validity, AnalyticParams,
};
use spinbath_core::exact::{
    diagonalize_model, eigenmode_propagate, integrate, ExecMode, Trajectory,
};
use spinbath_core::model::{golden_rule_rate, markov_rates, SpinBathInstance};
use spinbath_core::observables::{
    check_conservation, fit_exponential, frequency_bin, window_average, Window,
};

use crate::compare::{compare_tables, CompareSummary, TrajectoryTable};
use crate::config::{ExperimentConfig, MethodConfig, OverlayKind};
use crate::output::{
    write_binned_csv, write_markov_csv, write_modes_csv, write_overlay_freq_csv,
    write_overlay_time_csv, write_residuals_csv, write_trajectory_csv, write_windowed_csv,
    BinnedRow,
};

pub const TOOL_NAME: &str = "spinbath";

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub mode: String,
    pub seed: u64,
    /// Full configuration; feeding this manifest back as `--config`
    /// reproduces the run.
    pub config: ExperimentConfig,
    pub result: ManifestResult,
}

#[derive(Debug, Default, Serialize)]
pub struct ManifestResult {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub realized_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub realized_mean_sq_coupling: Option<f64>,
    /// Integrator step actually used, after any halvings.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub realized_step: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub conservation: Vec<ConservationEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method_comparison: Option<CompareSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
    pub breach: bool,
    pub files: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct ConservationEntry {
    pub method: String,
    pub max_norm_residual: f64,
    pub max_energy_residual: f64,
    pub norm_threshold: f64,
    pub energy_threshold: f64,
    pub norm_breach: bool,
    pub energy_breach: bool,
}

#[derive(Debug, Serialize)]
pub struct FitEntry {
    pub start: f64,
    pub end: f64,
    pub rate: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

pub struct RunOutcome {
    pub breach: bool,
    pub out_dir: PathBuf,
}

fn mode_name(exec: ExecMode) -> &'static str {
    match exec {
        ExecMode::Deterministic => "deterministic",
        ExecMode::Fast => "fast",
    }
}

fn write_manifest(out_dir: &Path, manifest: &Manifest) -> Result<()> {
    let path = out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest).context("manifest serialization")?;
    fs::write(&path, text + "\n").with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn prepare_out_dir(out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create output directory {}", out_dir.display()))
}

/// Full experiment: propagate per `run.method`, then derive window
/// averages, frequency bins, overlays, and the exponential fit.
///
/// Conservation residuals beyond the configured thresholds do not stop
/// the run: all files are still written and the manifest carries
/// `breach: true` so the caller can exit accordingly.
pub fn run_simulate(
    config: &ExperimentConfig,
    out_dir: &Path,
    exec: ExecMode,
    command: &str,
) -> Result<RunOutcome> {
    config.validate()?;
    let spec = config.to_spec()?;
    let instance = spinbath_core::model::build_instance(&spec)?;
    let params = analytic_params_if_available(&instance);

    let policy = config.to_step_policy(exec);
    let schedule = config.to_schedule();
    let t_final = config.run.t_final;

    // Propagate. Under `both`, the eigenmode route is evaluated on the
    // ODE's realized snapshot grid so rows align exactly.
    let method = config.run.method;
    let (primary, secondary) = match method {
        MethodConfig::Ode => {
            let traj = integrate(&instance, t_final, &policy, &schedule)?;
            (traj, None)
        }
        MethodConfig::Eigenmode => {
            let decomposition = diagonalize_model(&instance)?;
            let times = schedule.requested_times(t_final);
            let traj = eigenmode_propagate(&instance, &decomposition, &times)?;
            (traj, None)
        }
        MethodConfig::Both => {
            let ode = integrate(&instance, t_final, &policy, &schedule)?;
            let decomposition = diagonalize_model(&instance)?;
            let eig = eigenmode_propagate(&instance, &decomposition, ode.times())?;
            (ode, Some(eig))
        }
    };

    prepare_out_dir(out_dir)?;
    let mut files: Vec<String> = Vec::new();
    let mut warnings: Vec<String> = Vec::new();

    write_trajectory_csv(
        &out_dir.join("trajectory.csv"),
        &primary,
        &instance,
        config.output.format,
    )?;
    files.push("trajectory.csv".into());
    write_residuals_csv(&out_dir.join("residuals.csv"), &primary)?;
    files.push("residuals.csv".into());

    if let Some(eig) = &secondary {
        write_trajectory_csv(
            &out_dir.join("trajectory_eigenmode.csv"),
            eig,
            &instance,
            config.output.format,
        )?;
        files.push("trajectory_eigenmode.csv".into());
        write_residuals_csv(&out_dir.join("residuals_eigenmode.csv"), eig)?;
        files.push("residuals_eigenmode.csv".into());
    }

    // Window averages and per-bin means against the analytic bin average.
    let windows = config.averaging_windows()?;
    if !windows.is_empty() {
        let means = window_average(&primary, &windows)?;
        write_windowed_csv(
            &out_dir.join("windowed.csv"),
            &windows,
            &means,
            &primary,
            &instance,
        )?;
        files.push("windowed.csv".into());

        if primary.n_sites() > 1 && instance.freq_width > 0.0 {
            let rows = binned_rows(config, &instance, &windows, &means, params.as_ref())?;
            let mut borrowed: Vec<BinnedRow> = Vec::new();
            for (w, bins) in &rows {
                for (bin, analytic) in bins {
                    borrowed.push(BinnedRow {
                        window: *w,
                        bin,
                        analytic: *analytic,
                    });
                }
            }
            write_binned_csv(&out_dir.join("binned.csv"), &borrowed)?;
            files.push("binned.csv".into());
        }
    }

    // Overlays evaluated on the realized snapshot grid.
    if !config.overlays.kinds.is_empty() {
        let overlay_files = write_overlays(
            config,
            &instance,
            params.as_ref(),
            primary.times(),
            out_dir,
            &mut warnings,
        )?;
        files.extend(overlay_files);
    }

    let fit = match &config.fit {
        Some(f) => {
            let r = fit_exponential(&primary, f.start, f.end)?;
            Some(FitEntry {
                start: f.start,
                end: f.end,
                rate: r.rate,
                r_squared: r.r_squared,
                n_points: r.n_points,
            })
        }
        None => None,
    };

    // Conservation residuals against the configured thresholds.
    let mut conservation = Vec::new();
    let mut breach = false;
    for traj in std::iter::once(&primary).chain(secondary.as_ref()) {
        let entry = conservation_entry(config, traj, &instance);
        breach |= entry.norm_breach || entry.energy_breach;
        conservation.push(entry);
    }

    let method_comparison = match &secondary {
        Some(eig) => {
            let a = TrajectoryTable::from_trajectory(&primary);
            let b = TrajectoryTable::from_trajectory(eig);
            let summary = compare_tables(&a, &b, false)?;
            let text = serde_json::to_string_pretty(&summary)?;
            fs::write(out_dir.join("compare_methods.json"), text + "\n")?;
            files.push("compare_methods.json".into());
            Some(summary)
        }
        None => None,
    };

    for w in &warnings {
        warn!("{w}");
    }

    files.push("manifest.json".into());
    let manifest = Manifest {
        tool: TOOL_NAME.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        mode: mode_name(exec).into(),
        seed: instance.seed,
        config: config.clone(),
        result: ManifestResult {
            method: Some(method.as_str().into()),
            realized_rate: Some(golden_rule_rate(&instance)),
            realized_mean_sq_coupling: Some(instance.mean_sq_coupling()),
            realized_step: primary.provenance().step_size,
            conservation,
            fit,
            method_comparison,
            warnings,
            breach,
            files: files.clone(),
        },
    };
    write_manifest(out_dir, &manifest)?;

    Ok(RunOutcome {
        breach,
        out_dir: out_dir.to_path_buf(),
    })
}

fn analytic_params_if_available(instance: &SpinBathInstance) -> Option<AnalyticParams> {
    AnalyticParams::from_instance(instance).ok()
}

fn conservation_entry(
    config: &ExperimentConfig,
    traj: &Trajectory,
    instance: &SpinBathInstance,
) -> ConservationEntry {
    let report = check_conservation(traj, instance);
    let is_ode = traj.provenance().step_size.is_some();
    let norm_threshold = if is_ode {
        config.run.norm_tolerance
    } else {
        config.run.eigen_norm_tolerance
    };
    let energy_threshold = config.run.energy_tolerance;
    ConservationEntry {
        method: if is_ode { "ode" } else { "eigenmode" }.into(),
        max_norm_residual: report.max_norm_residual,
        max_energy_residual: report.max_energy_residual,
        norm_threshold,
        energy_threshold,
        norm_breach: report.max_norm_residual > norm_threshold,
        energy_breach: report.max_energy_residual > energy_threshold,
    }
}

type WindowBins = Vec<(
    usize,
    Vec<(spinbath_core::observables::FrequencyBin, Option<f64>)>,
)>;

fn binned_rows(
    config: &ExperimentConfig,
    instance: &SpinBathInstance,
    windows: &[Window],
    means: &[Vec<f64>],
    params: Option<&AnalyticParams>,
) -> Result<WindowBins> {
    let half = instance.freq_width / 2.0;
    let range = (
        instance.qubit_frequency - half,
        instance.qubit_frequency + half,
    );
    debug_assert_eq!(windows.len(), means.len());
    let mut out = Vec::new();
    for (w, row) in means.iter().enumerate() {
        let bins = frequency_bin(&row[1..], &instance.omegas, range, config.output.bins)?;
        let mut annotated = Vec::with_capacity(bins.len());
        for bin in bins {
            let analytic = match params {
                Some(p) if p.gamma_zero > 0.0 => {
                    Some(ensemble_mean_bin_average(bin.lo, bin.hi, p)?)
                }
                _ => None,
            };
            annotated.push((bin, analytic));
        }
        out.push((w, annotated));
    }
    Ok(out)
}

/// Evaluate the requested overlays, warn once per kind that strays
/// outside its validity domain, and write the time and frequency files.
fn write_overlays(
    config: &ExperimentConfig,
    instance: &SpinBathInstance,
    params: Option<&AnalyticParams>,
    times: &[f64],
    out_dir: &Path,
    warnings: &mut Vec<String>,
) -> Result<Vec<String>> {
    let mut files = Vec::new();
    let mut columns: Vec<(&'static str, Vec<f64>)> = Vec::new();

    let need_params = |kind: OverlayKind| -> Result<&AnalyticParams> {
        params.with_context(|| {
            format!(
                "the {} overlay needs a finite frequency window (freq_width > 0)",
                kind.as_str()
            )
        })
    };

    for &kind in &config.overlays.kinds {
        match kind {
            OverlayKind::Zeno => {
                let p = need_params(kind)?;
                push_domain_warning(
                    warnings,
                    kind,
                    times.iter().filter(|&&t| !zeno_validity(t, p)).count(),
                    times.len(),
                );
                columns.push((
                    "zeno",
                    times.iter().map(|&t| zeno_population(t, p)).collect(),
                ));
            }
            OverlayKind::Linear => {
                let p = need_params(kind)?;
                push_domain_warning(
                    warnings,
                    kind,
                    times.iter().filter(|&&t| !linear_validity(t, p)).count(),
                    times.len(),
                );
                columns.push((
                    "linear",
                    times.iter().map(|&t| linear_population(t, p)).collect(),
                ));
            }
            OverlayKind::Exponential => {
                let p = need_params(kind)?;
                push_domain_warning(
                    warnings,
                    kind,
                    times
                        .iter()
                        .filter(|&&t| !exponential_validity(t, p))
                        .count(),
                    times.len(),
                );
                columns.push((
                    "exponential",
                    times
                        .iter()
                        .map(|&t| exponential_population(t, p))
                        .collect(),
                ));
            }
            OverlayKind::Markov => {
                let beta = match &config.overlays.beta {
                    Some(b) => b.to_beta()?,
                    None => f64::INFINITY,
                };
                let rates =
                    markov_rates(golden_rule_rate(instance), beta, instance.qubit_frequency);
                let initial = config.overlays.markov_initial;
                columns.push((
                    "markov",
                    times
                        .iter()
                        .map(|&t| markov_qubit_population(t, &rates, initial))
                        .collect(),
                ));
            }
            OverlayKind::Lorentzian => {
                let p = need_params(kind)?;
                let (grid, values) = lorentzian_curve(config, instance, p)?;
                write_overlay_freq_csv(&out_dir.join("overlay_freq.csv"), &grid, &values)?;
                files.push("overlay_freq.csv".into());
            }
        }
    }

    if !columns.is_empty() {
        write_overlay_time_csv(&out_dir.join("overlay_time.csv"), times, &columns)?;
        files.push("overlay_time.csv".into());
    }
    Ok(files)
}

fn push_domain_warning(
    warnings: &mut Vec<String>,
    kind: OverlayKind,
    outside: usize,
    total: usize,
) {
    if outside > 0 {
        warnings.push(format!(
            "{} overlay evaluated outside its validity domain at {outside} of {total} times",
            kind.as_str()
        ));
    }
}

fn lorentzian_curve(
    config: &ExperimentConfig,
    instance: &SpinBathInstance,
    params: &AnalyticParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let half = instance.freq_width / 2.0;
    let lo = instance.qubit_frequency - half;
    let points = config.output.freq_points;
    let step = instance.freq_width / points as f64;
    let mut grid = Vec::with_capacity(points);
    let mut values = Vec::with_capacity(points);
    for i in 0..points {
        let omega = lo + (i as f64 + 0.5) * step;
        grid.push(omega);
        values.push(ensemble_mean_asymptote(omega, params)?);
    }
    Ok((grid, values))
}

/// Analytic curves only, no propagation: overlays evaluated on the
/// schedule's requested times.
pub fn run_analytic(
    config: &ExperimentConfig,
    out_dir: &Path,
    exec: ExecMode,
) -> Result<RunOutcome> {
    config.validate()?;
    let spec = config.to_spec()?;
    let instance = spinbath_core::model::build_instance(&spec)?;
    let params = analytic_params_if_available(&instance);
    let times = config.to_schedule().requested_times(config.run.t_final);

    prepare_out_dir(out_dir)?;
    let mut warnings = Vec::new();
    let mut files = write_overlays(
        config,
        &instance,
        params.as_ref(),
        &times,
        out_dir,
        &mut warnings,
    )?;
    for w in &warnings {
        warn!("{w}");
    }

    files.push("manifest.json".into());
    let manifest = Manifest {
        tool: TOOL_NAME.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: "analytic".into(),
        mode: mode_name(exec).into(),
        seed: instance.seed,
        config: config.clone(),
        result: ManifestResult {
            realized_rate: Some(golden_rule_rate(&instance)),
            realized_mean_sq_coupling: Some(instance.mean_sq_coupling()),
            warnings,
            files,
            ..Default::default()
        },
    };
    write_manifest(out_dir, &manifest)?;
    Ok(RunOutcome {
        breach: false,
        out_dir: out_dir.to_path_buf(),
    })
}

/// Closed Markovian reference dynamics on a linear grid.
pub fn run_markov(config: &ExperimentConfig, out_dir: &Path, exec: ExecMode) -> Result<RunOutcome> {
    config.validate()?;
    // The Markovian reference uses the requested golden-rule rate when
    // one is given; otherwise the realized rate of the built instance.
    let rate = match config.bath.target_rate {
        Some(r) => r,
        None => {
            let instance = spinbath_core::model::build_instance(&config.to_spec()?)?;
            golden_rule_rate(&instance)
        }
    };
    let beta = match &config.overlays.beta {
        Some(b) => b.to_beta()?,
        None => f64::INFINITY,
    };
    let rates = markov_rates(rate, beta, config.bath.qubit_frequency);
    let times = config.to_schedule().requested_times(config.run.t_final);
    let excited: Vec<f64> = times
        .iter()
        .map(|&t| markov_qubit_population(t, &rates, config.overlays.markov_initial))
        .collect();

    prepare_out_dir(out_dir)?;
    write_markov_csv(&out_dir.join("markov.csv"), &times, &excited)?;

    let manifest = Manifest {
        tool: TOOL_NAME.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: "markov".into(),
        mode: mode_name(exec).into(),
        seed: config.bath.seed,
        config: config.clone(),
        result: ManifestResult {
            realized_rate: Some(rate),
            files: vec!["markov.csv".into(), "manifest.json".into()],
            ..Default::default()
        },
    };
    write_manifest(out_dir, &manifest)?;
    Ok(RunOutcome {
        breach: false,
        out_dir: out_dir.to_path_buf(),
    })
}

/// Eigenmode table of the built instance.
pub fn run_modes(config: &ExperimentConfig, out_dir: &Path, exec: ExecMode) -> Result<RunOutcome> {
    config.validate()?;
    let instance = spinbath_core::model::build_instance(&config.to_spec()?)?;
    let decomposition = diagonalize_model(&instance)?;

    prepare_out_dir(out_dir)?;
    write_modes_csv(&out_dir.join("modes.csv"), &decomposition)?;

    let manifest = Manifest {
        tool: TOOL_NAME.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: "modes".into(),
        mode: mode_name(exec).into(),
        seed: instance.seed,
        config: config.clone(),
        result: ManifestResult {
            realized_rate: Some(golden_rule_rate(&instance)),
            realized_mean_sq_coupling: Some(instance.mean_sq_coupling()),
            files: vec!["modes.csv".into(), "manifest.json".into()],
            ..Default::default()
        },
    };
    write_manifest(out_dir, &manifest)?;
    Ok(RunOutcome {
        breach: false,
        out_dir: out_dir.to_path_buf(),
    })
}
