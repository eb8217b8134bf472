//! CSV writers. All floats go through `{}` (shortest round-trip), so a
//! deterministic run produces byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};

use spinbath_core::exact::{EigenmodeDecomposition, Scope, Trajectory};
use spinbath_core::model::SpinBathInstance;
use spinbath_core::observables::{FrequencyBin, Window};

use crate::config::FormatConfig;

/// Wide above this many spin columns would be unreadable; long takes over.
const WIDE_SPIN_LIMIT: usize = 100;

fn writer(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// Effective layout for a trajectory with `n_sites` population columns.
pub fn effective_format(format: FormatConfig, n_sites: usize) -> FormatConfig {
    match format {
        FormatConfig::Auto => {
            if n_sites > WIDE_SPIN_LIMIT + 1 {
                FormatConfig::Long
            } else {
                FormatConfig::Wide
            }
        }
        other => other,
    }
}

fn spin_index_width(n_spins: usize) -> usize {
    n_spins.to_string().len().max(4)
}

/// Site frequency for a population column: index 0 is the qubit.
fn site_omega(instance: &SpinBathInstance, index: usize) -> f64 {
    if index == 0 {
        instance.qubit_frequency
    } else {
        instance.omegas[index - 1]
    }
}

pub fn write_trajectory_csv(
    path: &Path,
    traj: &Trajectory,
    instance: &SpinBathInstance,
    format: FormatConfig,
) -> Result<()> {
    let mut w = writer(path)?;
    match effective_format(format, traj.n_sites()) {
        FormatConfig::Long => {
            writeln!(w, "t,index,omega,population")?;
            for i in 0..traj.n_snapshots() {
                let t = traj.times()[i];
                for (j, p) in traj.populations_at(i).iter().enumerate() {
                    writeln!(w, "{t},{j},{},{p}", site_omega(instance, j))?;
                }
            }
        }
        _ => {
            write!(w, "t,pop_qubit")?;
            let width = spin_index_width(instance.n_spins());
            for j in 1..traj.n_sites() {
                write!(w, ",pop_spin_{j:0width$}")?;
            }
            writeln!(w)?;
            for i in 0..traj.n_snapshots() {
                write!(w, "{}", traj.times()[i])?;
                for p in traj.populations_at(i) {
                    write!(w, ",{p}")?;
                }
                writeln!(w)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_residuals_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = writer(path)?;
    writeln!(w, "t,norm_residual,energy_residual")?;
    for i in 0..traj.n_snapshots() {
        writeln!(
            w,
            "{},{},{}",
            traj.times()[i],
            traj.norm_residuals()[i],
            traj.energy_residuals()[i]
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_windowed_csv(
    path: &Path,
    windows: &[Window],
    means: &[Vec<f64>],
    traj: &Trajectory,
    instance: &SpinBathInstance,
) -> Result<()> {
    if means.iter().any(|r| r.len() != traj.n_sites()) {
        bail!("window means do not match the trajectory layout");
    }
    let mut w = writer(path)?;
    writeln!(w, "window,start,end,index,omega,mean_population")?;
    for (wi, (win, row)) in windows.iter().zip(means).enumerate() {
        for (j, m) in row.iter().enumerate() {
            writeln!(
                w,
                "{wi},{},{},{j},{},{m}",
                win.start,
                win.end,
                site_omega(instance, j)
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

pub struct BinnedRow<'a> {
    pub window: usize,
    pub bin: &'a FrequencyBin,
    pub analytic: Option<f64>,
}

pub fn write_binned_csv(path: &Path, rows: &[BinnedRow]) -> Result<()> {
    let mut w = writer(path)?;
    writeln!(
        w,
        "window,bin_index,center,lo,hi,count,mean_population,analytic_bin_mean"
    )?;
    for (i, row) in rows.iter().enumerate() {
        let b = row.bin;
        write!(
            w,
            "{},{i},{},{},{},{},",
            row.window, b.center, b.lo, b.hi, b.count
        )?;
        if let Some(m) = b.mean {
            write!(w, "{m}")?;
        }
        write!(w, ",")?;
        match row.analytic {
            Some(a) => writeln!(w, "{a}")?,
            None => writeln!(w)?,
        }
    }
    w.flush()?;
    Ok(())
}

/// Time-domain overlays: one column per requested kind.
pub fn write_overlay_time_csv(
    path: &Path,
    times: &[f64],
    columns: &[(&'static str, Vec<f64>)],
) -> Result<()> {
    let mut w = writer(path)?;
    write!(w, "t")?;
    for (name, values) in columns {
        if values.len() != times.len() {
            bail!("overlay column {name} does not match the time grid");
        }
        write!(w, ",{name}")?;
    }
    writeln!(w)?;
    for (i, t) in times.iter().enumerate() {
        write!(w, "{t}")?;
        for (_, values) in columns {
            write!(w, ",{}", values[i])?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_overlay_freq_csv(path: &Path, grid: &[f64], values: &[f64]) -> Result<()> {
    let mut w = writer(path)?;
    writeln!(w, "omega,ensemble_mean")?;
    for (omega, v) in grid.iter().zip(values) {
        writeln!(w, "{omega},{v}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_modes_csv(path: &Path, decomposition: &EigenmodeDecomposition) -> Result<()> {
    let mut w = writer(path)?;
    writeln!(w, "index,frequency,qubit_weight")?;
    for (k, f) in decomposition.frequencies.iter().enumerate() {
        let weight = decomposition.modes[(k, 0)];
        writeln!(w, "{k},{f},{}", weight * weight)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_markov_csv(path: &Path, times: &[f64], excited: &[f64]) -> Result<()> {
    let mut w = writer(path)?;
    writeln!(w, "t,excited,ground")?;
    for (t, p) in times.iter().zip(excited) {
        writeln!(w, "{t},{p},{}", 1.0 - p)?;
    }
    w.flush()?;
    Ok(())
}

/// Column labels for a trajectory as written, used by the comparison
/// reader to describe what it aligned.
pub fn population_labels(traj: &Trajectory) -> Vec<String> {
    match traj.scope() {
        Scope::QubitOnly => vec!["pop_qubit".into()],
        Scope::Full => {
            let mut labels = vec!["pop_qubit".to_string()];
            let width = spin_index_width(traj.n_sites().saturating_sub(1));
            for j in 1..traj.n_sites() {
                labels.push(format!("pop_spin_{j:0width$}"));
            }
            labels
        }
    }
}
