//! Trajectory post-processing: conservation checks, time-window
//! averaging, frequency binning, and exponential-rate fitting.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::exact::{energy_expectation, Trajectory};
use crate::model::SpinBathInstance;

/// Half-open time interval (start, end] in 1/Ω units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub fn new(start: f64, end: f64) -> Result<Self, ObservablesError> {
        let w = Window { start, end };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), ObservablesError> {
        if !(self.start < self.end) || !self.start.is_finite() || !self.end.is_finite() {
            return Err(ObservablesError::InvalidWindow {
                start: self.start,
                end: self.end,
            });
        }
        Ok(())
    }

    pub fn contains(&self, t: f64) -> bool {
        t > self.start && t <= self.end
    }
}

/// A list of averaging windows; intervals may overlap.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WindowSpec {
    pub windows: Vec<Window>,
}

impl WindowSpec {
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self, ObservablesError> {
        let mut windows = Vec::with_capacity(pairs.len());
        for &(start, end) in pairs {
            windows.push(Window::new(start, end)?);
        }
        Ok(WindowSpec { windows })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum ObservablesError {
    #[error("window bounds must be finite with start < end (got {start}..{end})")]
    InvalidWindow { start: f64, end: f64 },
    #[error("window {index} ({start}, {end}] contains no snapshots")]
    EmptyWindow { index: usize, start: f64, end: f64 },
    #[error("at least one frequency bin is required")]
    InvalidBinCount,
    #[error("bin range must be finite with lo < hi")]
    InvalidBinRange,
    #[error(
        "population at t = {time} is not positive; the log-linear fit needs the \
         exponential segment, shrink the window"
    )]
    NonpositivePopulation { time: f64 },
    #[error("fit window holds {got} snapshots but needs at least {needed}")]
    TooFewPoints { needed: usize, got: usize },
}

/// Arithmetic mean of the snapshot populations falling in each window,
/// per site. Every window must catch at least one snapshot.
pub fn window_average(
    trajectory: &Trajectory,
    windows: &[Window],
) -> Result<Vec<Vec<f64>>, ObservablesError> {
    let n_sites = trajectory.n_sites();
    let mut out = Vec::with_capacity(windows.len());
    for (index, w) in windows.iter().enumerate() {
        w.validate()?;
        let mut acc = vec![0.0_f64; n_sites];
        let mut count = 0usize;
        for (i, &t) in trajectory.times().iter().enumerate() {
            if w.contains(t) {
                for (a, p) in acc.iter_mut().zip(trajectory.populations_at(i)) {
                    *a += p;
                }
                count += 1;
            }
        }
        if count == 0 {
            return Err(ObservablesError::EmptyWindow {
                index,
                start: w.start,
                end: w.end,
            });
        }
        let inv = 1.0 / count as f64;
        for a in &mut acc {
            *a *= inv;
        }
        out.push(acc);
    }
    Ok(out)
}

/// Worst-case conservation residuals over all snapshots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservationReport {
    /// max over snapshots of |Σ_j |C_j|² − 1|.
    pub max_norm_residual: f64,
    /// max over snapshots of |⟨ψ|H|ψ⟩ − Ω|: drift of the conserved
    /// total energy away from the initial state's ⟨H⟩ = Ω. (The bare sum
    /// Σ|C_j|²ħω_j differs from ħΩ by the physical interaction energy
    /// and is a statement about the asymptotic state, not a conserved
    /// quantity; see the asymptote sum checks in `analytic`.)
    pub max_energy_residual: f64,
}

/// Scan a trajectory's conservation residuals. Residuals recorded at
/// integration time are always present; when full Schrödinger amplitudes
/// were stored they are recomputed here from scratch and the worse of
/// the two is reported.
pub fn check_conservation(
    trajectory: &Trajectory,
    instance: &SpinBathInstance,
) -> ConservationReport {
    let mut max_norm = 0.0_f64;
    let mut max_energy = 0.0_f64;
    for (&n, &e) in trajectory
        .norm_residuals()
        .iter()
        .zip(trajectory.energy_residuals())
    {
        max_norm = max_norm.max(n);
        max_energy = max_energy.max(e);
    }
    let dim = instance.n_spins() + 1;
    if trajectory.n_sites() == dim {
        let e0 = instance.qubit_frequency;
        for i in 0..trajectory.n_snapshots() {
            if let Some(amps) = trajectory.amplitudes_at(i) {
                let norm: f64 = amps.iter().map(|c| c.norm_sqr()).sum();
                max_norm = max_norm.max((norm - 1.0).abs());
                max_energy = max_energy.max((energy_expectation(amps, instance) - e0).abs());
            }
        }
    }
    ConservationReport {
        max_norm_residual: max_norm,
        max_energy_residual: max_energy,
    }
}

/// One equal-width frequency bin with the member-spin statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyBin {
    pub center: f64,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// Sum of member populations.
    pub sum: f64,
    /// Mean population, absent when the bin holds no spins.
    pub mean: Option<f64>,
}

/// Histogram spin populations into `n_bins` equal-width frequency bins
/// over `range`. Spins outside the range are skipped; a frequency
/// exactly at the upper edge lands in the last bin. Empty bins record a
/// missing mean, never zero.
pub fn frequency_bin(
    mean_populations: &[f64],
    omegas: &[f64],
    range: (f64, f64),
    n_bins: usize,
) -> Result<Vec<FrequencyBin>, ObservablesError> {
    if n_bins == 0 {
        return Err(ObservablesError::InvalidBinCount);
    }
    let (lo, hi) = range;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(ObservablesError::InvalidBinRange);
    }
    debug_assert_eq!(mean_populations.len(), omegas.len());
    let width = (hi - lo) / n_bins as f64;
    let mut bins: Vec<FrequencyBin> = (0..n_bins)
        .map(|b| FrequencyBin {
            center: lo + (b as f64 + 0.5) * width,
            lo: lo + b as f64 * width,
            hi: lo + (b as f64 + 1.0) * width,
            count: 0,
            sum: 0.0,
            mean: None,
        })
        .collect();
    for (&w, &p) in omegas.iter().zip(mean_populations) {
        if w < lo || w > hi {
            continue;
        }
        let idx = (((w - lo) / width) as usize).min(n_bins - 1);
        bins[idx].count += 1;
        bins[idx].sum += p;
    }
    for b in &mut bins {
        if b.count > 0 {
            b.mean = Some(b.sum / b.count as f64);
        }
    }
    Ok(bins)
}

/// Log-linear least-squares fit of the qubit decay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialFit {
    /// Decay rate: minus the fitted slope of ln p₀ vs t.
    pub rate: f64,
    /// R² of the log-linear fit; near 1 only where the decay really is
    /// exponential.
    pub r_squared: f64,
    pub n_points: usize,
}

/// Ordinary least squares on ln p₀(t) over the closed interval
/// [start, end]. Populations must be strictly positive there.
pub fn fit_exponential(
    trajectory: &Trajectory,
    start: f64,
    end: f64,
) -> Result<ExponentialFit, ObservablesError> {
    if !(start < end) || !start.is_finite() || !end.is_finite() {
        return Err(ObservablesError::InvalidWindow { start, end });
    }
    let mut ts: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for (i, &t) in trajectory.times().iter().enumerate() {
        if t < start || t > end {
            continue;
        }
        let p = trajectory.qubit_population(i);
        if p <= 0.0 {
            return Err(ObservablesError::NonpositivePopulation { time: t });
        }
        ts.push(t);
        ys.push(p.ln());
    }
    let n = ts.len();
    if n < 2 {
        return Err(ObservablesError::TooFewPoints { needed: 2, got: n });
    }
    let inv_n = 1.0 / n as f64;
    let t_mean: f64 = ts.iter().sum::<f64>() * inv_n;
    let y_mean: f64 = ys.iter().sum::<f64>() * inv_n;
    let mut stt = 0.0;
    let mut sty = 0.0;
    for (&t, &y) in ts.iter().zip(&ys) {
        stt += (t - t_mean) * (t - t_mean);
        sty += (t - t_mean) * (y - y_mean);
    }
    if stt == 0.0 {
        // All snapshots at one time cannot happen (times strictly
        // increase), but guard the division anyway.
        return Err(ObservablesError::TooFewPoints { needed: 2, got: 1 });
    }
    let slope = sty / stt;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (&t, &y) in ts.iter().zip(&ys) {
        let fitted = y_mean + slope * (t - t_mean);
        ss_res += (y - fitted) * (y - fitted);
        ss_tot += (y - y_mean) * (y - y_mean);
    }
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok(ExponentialFit {
        rate: -slope,
        r_squared,
        n_points: n,
    })
}
