//! Closed-form and lowest-order results: the decay-rate integral χ(t),
//! the three qubit decay regimes, the qubit self-energy, transient and
//! asymptotic spin populations, and the Markovian two-level solution.
//!
//! All functions here are pure. Regime formulas are evaluated wherever
//! they are asked for, since plots that cross regime boundaries are the
//! whole point; the `*_validity` predicates report whether a time lies
//! inside a formula's derivation domain so callers can warn.

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::model::{golden_rule_rate, MarkovParams, SpinBathInstance};
use crate::special::{adaptive_simpson, one_minus_cos_over_w2, sine_integral};

use core::f64::consts::PI;

/// Coarse parameters of a bath: enough to evaluate every lowest-order
/// formula without the microscopic instance.
///
/// Consistency ties the fields together: Γ₀ = 2πν₀⟨γ²⟩ and Λ₀² = N⟨γ²⟩
/// imply Γ₀ Δω = 2π Λ₀².
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticParams {
    /// Qubit frequency Ω.
    pub qubit_frequency: f64,
    /// Golden-rule decay rate Γ₀ = 2πν₀⟨γ²⟩/ħ².
    pub gamma_zero: f64,
    /// Short-time curvature Λ₀² = N⟨γ²⟩/ħ².
    pub lambda_zero_sq: f64,
    /// Bath frequency window width Δω.
    pub freq_width: f64,
    /// Spectral density of states ν₀ = N/Δω.
    pub nu_zero: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum AnalyticError {
    #[error("a nonzero frequency width is required for continuum formulas")]
    WidthRequired,
    #[error("qubit frequency must be positive and finite")]
    NonPositiveFrequency,
    #[error("rates and densities must be finite and nonnegative")]
    NegativeRate,
    #[error("fields disagree: gamma_zero * freq_width must equal 2 pi lambda_zero_sq")]
    RateMismatch,
    #[error("self-energy sum hits the pole at spin {index} with epsilon = 0")]
    PoleWithoutRegularization { index: usize },
    #[error("ensemble mean is a delta function when the decay rate is zero")]
    ZeroRateEnsemble,
}

impl AnalyticParams {
    /// Coarse parameters realized by a concrete instance: Γ₀ from the
    /// realized couplings, Λ₀² = N⟨γ²⟩, ν₀ = N/Δω.
    pub fn from_instance(instance: &SpinBathInstance) -> Result<Self, AnalyticError> {
        if instance.freq_width <= 0.0 {
            return Err(AnalyticError::WidthRequired);
        }
        let n = instance.n_spins() as f64;
        let mean_sq = instance.mean_sq_coupling();
        let params = AnalyticParams {
            qubit_frequency: instance.qubit_frequency,
            gamma_zero: golden_rule_rate(instance),
            lambda_zero_sq: n * mean_sq,
            freq_width: instance.freq_width,
            nu_zero: n / instance.freq_width,
        };
        params.validate()?;
        Ok(params)
    }

    /// Parameters from design targets, with Λ₀² = Γ₀Δω/(2π) filled in.
    pub fn from_targets(
        qubit_frequency: f64,
        gamma_zero: f64,
        freq_width: f64,
        n_spins: usize,
    ) -> Result<Self, AnalyticError> {
        if freq_width <= 0.0 || !freq_width.is_finite() {
            return Err(AnalyticError::WidthRequired);
        }
        let params = AnalyticParams {
            qubit_frequency,
            gamma_zero,
            lambda_zero_sq: gamma_zero * freq_width / (2.0 * PI),
            freq_width,
            nu_zero: n_spins as f64 / freq_width,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), AnalyticError> {
        if !(self.qubit_frequency > 0.0) || !self.qubit_frequency.is_finite() {
            return Err(AnalyticError::NonPositiveFrequency);
        }
        if !(self.freq_width > 0.0) || !self.freq_width.is_finite() {
            return Err(AnalyticError::WidthRequired);
        }
        for v in [self.gamma_zero, self.lambda_zero_sq, self.nu_zero] {
            if !v.is_finite() || v < 0.0 {
                return Err(AnalyticError::NegativeRate);
            }
        }
        let lhs = self.gamma_zero * self.freq_width;
        let rhs = 2.0 * PI * self.lambda_zero_sq;
        if (lhs - rhs).abs() > 1e-10 * lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE) {
            return Err(AnalyticError::RateMismatch);
        }
        Ok(())
    }

    /// Mean squared coupling ⟨γ²⟩ = Γ₀/(2πν₀) implied by the fields.
    pub fn mean_sq_coupling(&self) -> f64 {
        if self.nu_zero == 0.0 {
            0.0
        } else {
            self.gamma_zero / (2.0 * PI * self.nu_zero)
        }
    }
}

/// Decay-rate integral χ(t) = ∫_{−a}^{a} dw (1−cos w)/w² with
/// a = Δωt/2, through the sine-integral closed form
/// 2[Si(a) − (1−cos a)/a]. Monotone from 0 to π.
pub fn chi(t: f64, freq_width: f64) -> f64 {
    debug_assert!(t >= 0.0 && freq_width >= 0.0);
    let a = 0.5 * freq_width * t;
    if a == 0.0 {
        return 0.0;
    }
    // (1−cos a)/a evaluated as a·(1−cos a)/a² to keep small a stable.
    2.0 * (sine_integral(a) - a * one_minus_cos_over_w2(a))
}

/// χ(t) by adaptive quadrature of the kernel itself: the independent
/// cross-check for [`chi`]. The even integrand is integrated over [0, a]
/// in 2π chunks so the oscillations never defeat the error estimate.
pub fn chi_quadrature(t: f64, freq_width: f64, tol: f64) -> f64 {
    debug_assert!(t >= 0.0 && freq_width >= 0.0 && tol > 0.0);
    let a = 0.5 * freq_width * t;
    if a == 0.0 {
        return 0.0;
    }
    let n_chunks = (a / (2.0 * PI)).ceil().max(1.0);
    let chunk_tol = tol / (2.0 * n_chunks);
    let mut lo = 0.0;
    let mut total = 0.0;
    while lo < a {
        let hi = (lo + 2.0 * PI).min(a);
        total += adaptive_simpson(&one_minus_cos_over_w2, lo, hi, chunk_tol);
        lo = hi;
    }
    2.0 * total
}

/// Quadratic short-time decay 1 − Λ₀²t², valid while Λ₀t ≲ 1.
pub fn zeno_population(t: f64, params: &AnalyticParams) -> f64 {
    1.0 - params.lambda_zero_sq * t * t
}

/// The quadratic formula's derivation domain: Λ₀t ≤ 1.
pub fn zeno_validity(t: f64, params: &AnalyticParams) -> bool {
    params.lambda_zero_sq * t * t <= 1.0
}

/// Intermediate-time linear decay 1 − Γ₀t.
pub fn linear_population(t: f64, params: &AnalyticParams) -> f64 {
    1.0 - params.gamma_zero * t
}

/// Linear domain: the rate integral has saturated (Δωt ≳ 1) but the
/// lost population is still small (Γ₀t ≤ 0.1, where the linear and
/// exponential forms agree to O((Γ₀t)²)).
pub fn linear_validity(t: f64, params: &AnalyticParams) -> bool {
    params.freq_width * t >= 1.0 && params.gamma_zero * t <= 0.1
}

/// Golden-rule exponential decay e^{−Γ₀t}.
pub fn exponential_population(t: f64, params: &AnalyticParams) -> f64 {
    (-params.gamma_zero * t).exp()
}

/// Exponential domain: past the bath correlation time, Δωt ≥ 1.
pub fn exponential_validity(t: f64, params: &AnalyticParams) -> bool {
    params.freq_width * t >= 1.0
}

/// Several level spacings: the default regularization ε = 10Δω/N for the
/// discrete self-energy sum.
pub fn default_epsilon(freq_width: f64, n_spins: usize) -> f64 {
    10.0 * freq_width / n_spins as f64
}

/// Discrete qubit self-energy Σ₀(ω + iε) = Σ_j γ_j² / (ω − ω_j + iε)
/// over the realized bath levels (ħ = 1).
///
/// ε = 0 is allowed away from the poles, where the sum is the exact
/// principal-value-free expression; hitting a level exactly with ε = 0
/// is an error.
pub fn self_energy_discrete(
    omega: f64,
    instance: &SpinBathInstance,
    epsilon: f64,
) -> Result<Complex64, AnalyticError> {
    let mut re = 0.0;
    let mut im = 0.0;
    for (j, (wj, gj)) in instance.omegas.iter().zip(&instance.gammas).enumerate() {
        let d = omega - wj;
        let denom = d * d + epsilon * epsilon;
        if denom == 0.0 {
            return Err(AnalyticError::PoleWithoutRegularization { index: j });
        }
        let g2 = gj * gj;
        re += g2 * d / denom;
        im -= g2 * epsilon / denom;
    }
    Ok(Complex64::new(re, im))
}

/// Continuum-limit self-energy near resonance:
/// (2/π)Γ₀(ω−Ω)/Δω − iΓ₀/2.
///
/// The imaginary part is exact for ω inside the bath window; the real
/// part is the leading term for |ω−Ω| ≪ Δω.
pub fn self_energy_continuum(omega: f64, params: &AnalyticParams) -> Complex64 {
    let re = (2.0 / PI) * params.gamma_zero * (omega - params.qubit_frequency) / params.freq_width;
    Complex64::new(re, -0.5 * params.gamma_zero)
}

/// Lowest-order spin population at finite time:
/// γ_j² [1 − 2e^{−Γ₀t/2}cos((Ω−ω_j)t) + e^{−Γ₀t}] / [Γ₀²/4 + (Ω−ω_j)²].
///
/// The doubly resonant point Γ₀ = 0, ω_j = Ω is the 0/0 limit of the
/// formula and evaluates to its limiting value γ_j²t².
pub fn spin_population_transient(
    omega_j: f64,
    gamma_j: f64,
    t: f64,
    params: &AnalyticParams,
) -> f64 {
    let g0 = params.gamma_zero;
    let delta = params.qubit_frequency - omega_j;
    let denom = 0.25 * g0 * g0 + delta * delta;
    if denom == 0.0 {
        return gamma_j * gamma_j * t * t;
    }
    let half_decay = (-0.5 * g0 * t).exp();
    let numer = 1.0 - 2.0 * half_decay * (delta * t).cos() + half_decay * half_decay;
    gamma_j * gamma_j * numer / denom
}

/// Asymptotic (t → ∞) spin population: the Lorentzian
/// γ_j² / [Γ₀²/4 + (Ω−ω_j)²], equal to
/// (4γ_j²/Ω²) / [(Γ₀/Ω)² + 4(1−ω_j/Ω)²].
pub fn lorentzian_asymptote(omega_j: f64, gamma_j: f64, params: &AnalyticParams) -> f64 {
    let delta = params.qubit_frequency - omega_j;
    gamma_j * gamma_j / (0.25 * params.gamma_zero * params.gamma_zero + delta * delta)
}

/// Coupling-ensemble mean of the asymptotic population at frequency
/// ω_j: ⟨γ²⟩ / [Γ₀²/4 + (Ω−ω_j)²] with ⟨γ²⟩ = Γ₀/(2πν₀).
///
/// Γ₀ = 0 collapses the Lorentzian to a delta function and is rejected.
pub fn ensemble_mean_asymptote(
    omega_j: f64,
    params: &AnalyticParams,
) -> Result<f64, AnalyticError> {
    if params.gamma_zero == 0.0 {
        return Err(AnalyticError::ZeroRateEnsemble);
    }
    let delta = params.qubit_frequency - omega_j;
    Ok(params.mean_sq_coupling() / (0.25 * params.gamma_zero * params.gamma_zero + delta * delta))
}

/// Exact average of [`ensemble_mean_asymptote`] over a frequency bin
/// [lo, hi], via the arctangent antiderivative. This is what a binned
/// histogram of asymptotic populations converges to.
pub fn ensemble_mean_bin_average(
    lo: f64,
    hi: f64,
    params: &AnalyticParams,
) -> Result<f64, AnalyticError> {
    debug_assert!(hi > lo);
    if params.gamma_zero == 0.0 {
        return Err(AnalyticError::ZeroRateEnsemble);
    }
    let g0 = params.gamma_zero;
    let om = params.qubit_frequency;
    // ∫ dω / [Γ₀²/4 + (Ω−ω)²] = (2/Γ₀) arctan(2(ω−Ω)/Γ₀)
    let anti = |w: f64| (2.0 / g0) * ((2.0 * (w - om) / g0).atan());
    Ok(params.mean_sq_coupling() * (anti(hi) - anti(lo)) / (hi - lo))
}

/// Closed Markovian solution for the excited-state population:
/// ρ_ee(t) = ρ_ee(∞) + [ρ_ee(0) − ρ_ee(∞)] e^{−(Γ↑+Γ↓)t} with
/// ρ_ee(∞) = Γ↑/(Γ↑+Γ↓). Both rates zero returns the constant initial
/// value. At T = 0 with ρ_ee(0) = 1 this is exactly e^{−Γ₀t}.
pub fn markov_qubit_population(t: f64, markov: &MarkovParams, initial_excited: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&initial_excited));
    let total = markov.gamma_up + markov.gamma_down;
    if total == 0.0 {
        return initial_excited;
    }
    let stationary = markov.gamma_up / total;
    stationary + (initial_excited - stationary) * (-total * t).exp()
}
