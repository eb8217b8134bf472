//! Bath realizations, golden-rule and Markovian rates, and the two-spin
//! ground-state check.
//!
//! Internal units: ħ = 1 and the qubit frequency Ω = 1 unless a caller
//! chooses otherwise, so couplings and rates are both expressed in units
//! of Ω.

use alloc::vec;
use alloc::vec::Vec;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::Matrix;

use core::f64::consts::PI;

/// Largest N for which the dense inter-spin coupling matrix is stored.
pub const KAPPA_DENSE_LIMIT: usize = 5000;

/// How the coupling strength of a bath specification is given: either the
/// decay rate the bath should realize, or the mean squared coupling
/// directly. The two are related by Γ₀ = 2π (N/Δω) ⟨γ²⟩.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CouplingStrength {
    /// Target golden-rule rate Γ₀; ⟨γ²⟩ = Γ₀ Δω / (2πN) follows.
    TargetRate(f64),
    /// Mean squared coupling ⟨γ²⟩.
    MeanSquare(f64),
}

/// Placement of the bath frequencies over the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    /// iid uniform over [Ω − Δω/2, Ω + Δω/2]; the default.
    Sampled,
    /// Deterministic midpoint grid, for convergence studies.
    Grid,
}

/// Distribution of the qubit–spin couplings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingMode {
    /// γ_j ≡ √⟨γ²⟩.
    Constant,
    /// γ_j ~ Uniform[0, γ_max] with γ_max = √(3⟨γ²⟩).
    Uniform,
}

/// Whether spins couple to each other as well as to the qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KappaMode {
    /// Star graph: spins talk only to the qubit.
    None,
    /// κ_{jk} (j < k) drawn iid from the same distribution as γ, then
    /// symmetrized; zero diagonal.
    MatchGamma,
}

/// Statistical description of a bath; `build_instance` turns it into a
/// concrete realization.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinBathSpec {
    /// Qubit level splitting Ω.
    pub qubit_frequency: f64,
    /// Number of bath spins N.
    pub n_spins: usize,
    /// Full width Δω of the uniform frequency window centered on Ω.
    pub freq_width: f64,
    pub strength: CouplingStrength,
    pub placement: Placement,
    pub coupling_mode: CouplingMode,
    pub kappa_mode: KappaMode,
    /// Seed of the deterministic generator; identical seeds give bitwise
    /// identical instances.
    pub rng_seed: u64,
}

impl SpinBathSpec {
    /// A star-graph bath with iid-uniform frequencies and couplings,
    /// strength given as a target rate. The common case.
    pub fn with_target_rate(n_spins: usize, freq_width: f64, rate: f64, seed: u64) -> Self {
        SpinBathSpec {
            qubit_frequency: 1.0,
            n_spins,
            freq_width,
            strength: CouplingStrength::TargetRate(rate),
            placement: Placement::Sampled,
            coupling_mode: CouplingMode::Uniform,
            kappa_mode: KappaMode::None,
            rng_seed: seed,
        }
    }

    /// Mean squared coupling ⟨γ²⟩ implied by the strength field.
    pub fn mean_sq_coupling(&self) -> Result<f64, ModelError> {
        match self.strength {
            CouplingStrength::MeanSquare(m2) => Ok(m2),
            CouplingStrength::TargetRate(rate) => {
                if rate == 0.0 {
                    Ok(0.0)
                } else if self.freq_width == 0.0 {
                    Err(ModelError::RateNeedsWidth)
                } else {
                    Ok(rate * self.freq_width / (2.0 * PI * self.n_spins as f64))
                }
            }
        }
    }

    /// Check the spec without building anything.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n_spins == 0 {
            return Err(ModelError::ZeroSpins);
        }
        if !(self.qubit_frequency > 0.0) {
            return Err(ModelError::NonPositiveFrequency);
        }
        if !(self.freq_width >= 0.0) {
            return Err(ModelError::NegativeWidth);
        }
        let (CouplingStrength::TargetRate(s) | CouplingStrength::MeanSquare(s)) = self.strength;
        if !(s >= 0.0) {
            return Err(ModelError::NegativeStrength);
        }
        if self.freq_width == 0.0 && self.n_spins > 1 && self.placement == Placement::Grid {
            return Err(ModelError::DegenerateGrid);
        }
        if self.kappa_mode == KappaMode::MatchGamma && self.n_spins > KAPPA_DENSE_LIMIT {
            return Err(ModelError::KappaTooLarge {
                n: self.n_spins,
                max: KAPPA_DENSE_LIMIT,
            });
        }
        Ok(())
    }
}

/// A concrete bath realization.
///
/// `freq_width` and `seed` are carried along so that rates, analytic
/// parameters, and provenance records can be derived from the instance
/// alone.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinBathInstance {
    /// Qubit level splitting Ω.
    pub qubit_frequency: f64,
    /// Spin frequencies ω_j, all inside [Ω − Δω/2, Ω + Δω/2].
    pub omegas: Vec<f64>,
    /// Qubit–spin couplings γ_j ≥ 0.
    pub gammas: Vec<f64>,
    /// Dense symmetric inter-spin couplings with zero diagonal, when the
    /// bath has them.
    pub kappas: Option<Matrix>,
    /// Width Δω of the window the frequencies were placed in.
    pub freq_width: f64,
    /// Seed the instance was built from.
    pub seed: u64,
}

impl SpinBathInstance {
    pub fn n_spins(&self) -> usize {
        self.omegas.len()
    }

    /// Realized mean squared coupling.
    pub fn mean_sq_coupling(&self) -> f64 {
        let n = self.gammas.len() as f64;
        self.gammas.iter().map(|g| g * g).sum::<f64>() / n
    }
}

/// Markovian reference rates for a qubit against an equilibrium bath.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkovParams {
    /// Inverse temperature β; may be infinite (T = 0).
    pub beta: f64,
    /// Relaxation rate Γ↓ = Γ₀ (1 − f(ħΩ)).
    pub gamma_down: f64,
    /// Excitation rate Γ↑ = Γ₀ f(ħΩ).
    pub gamma_up: f64,
    /// Zero-temperature (golden-rule) rate Γ₀.
    pub gamma_zero: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("bath needs at least one spin")]
    ZeroSpins,
    #[error("qubit frequency must be positive and finite")]
    NonPositiveFrequency,
    #[error("frequency width must be nonnegative and finite")]
    NegativeWidth,
    #[error("coupling strength must be nonnegative and finite")]
    NegativeStrength,
    #[error("a target rate needs a nonzero frequency width to invert the rate formula")]
    RateNeedsWidth,
    #[error("zero-width grid with more than one spin is degenerate (all spins resonant)")]
    DegenerateGrid,
    #[error("dense inter-spin coupling matrix at N = {n} exceeds the memory guard (max {max})")]
    KappaTooLarge { n: usize, max: usize },
}

/// Build a concrete realization from a statistical specification.
///
/// Sampling order is fixed (frequencies, then couplings, then inter-spin
/// couplings by ascending row) so a seed pins the instance bitwise. A zero
/// window skips frequency draws entirely and puts every spin at Ω.
pub fn build_instance(spec: &SpinBathSpec) -> Result<SpinBathInstance, ModelError> {
    spec.validate()?;
    let n = spec.n_spins;
    let omega = spec.qubit_frequency;
    let width = spec.freq_width;
    let mean_sq = spec.mean_sq_coupling()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);

    let omegas: Vec<f64> = match (spec.placement, width) {
        (_, 0.0) => vec![omega; n],
        (Placement::Sampled, _) => {
            let dist = Uniform::new(omega - 0.5 * width, omega + 0.5 * width)
                .expect("window bounds are finite and ordered");
            (0..n).map(|_| dist.sample(&mut rng)).collect()
        }
        (Placement::Grid, _) => {
            // Midpoint grid: bin j of N equal bins over the window.
            let lo = omega - 0.5 * width;
            (0..n)
                .map(|j| lo + (j as f64 + 0.5) * width / n as f64)
                .collect()
        }
    };

    let gamma_const = mean_sq.sqrt();
    let gamma_max = (3.0 * mean_sq).sqrt();
    let gamma_dist = if gamma_max > 0.0 {
        Some(Uniform::new(0.0, gamma_max).expect("upper bound is finite and positive"))
    } else {
        None
    };
    let gammas: Vec<f64> = match (spec.coupling_mode, &gamma_dist) {
        (CouplingMode::Constant, _) | (_, None) => vec![gamma_const; n],
        (CouplingMode::Uniform, Some(dist)) => (0..n).map(|_| dist.sample(&mut rng)).collect(),
    };

    let kappas = match spec.kappa_mode {
        KappaMode::None => None,
        KappaMode::MatchGamma => {
            let mut k = Matrix::zeros(n);
            for j in 0..n {
                for l in j + 1..n {
                    let v = match (spec.coupling_mode, &gamma_dist) {
                        (CouplingMode::Constant, _) | (_, None) => gamma_const,
                        (CouplingMode::Uniform, Some(dist)) => dist.sample(&mut rng),
                    };
                    k[(j, l)] = v;
                    k[(l, j)] = v;
                }
            }
            Some(k)
        }
    };

    Ok(SpinBathInstance {
        qubit_frequency: omega,
        omegas,
        gammas,
        kappas,
        freq_width: width,
        seed: spec.rng_seed,
    })
}

/// Golden-rule decay rate Γ₀ = 2π ν₀ ⟨γ²⟩ realized by an instance, with
/// ν₀ = N/Δω taken from the window the instance was built over.
///
/// A fully decoupled bath gives 0. A zero-width window with nonzero
/// couplings has no continuum limit; the rate diverges and is reported as
/// infinity.
pub fn golden_rule_rate(instance: &SpinBathInstance) -> f64 {
    let mean_sq = instance.mean_sq_coupling();
    if mean_sq == 0.0 {
        return 0.0;
    }
    if instance.freq_width == 0.0 {
        return f64::INFINITY;
    }
    let nu0 = instance.n_spins() as f64 / instance.freq_width;
    2.0 * PI * nu0 * mean_sq
}

/// Fermi–Dirac occupation 1/(1 + e^{βε}).
///
/// β may be infinite: the occupation is then a step, with the symmetric
/// value 1/2 kept at ε = 0.
pub fn fermi_dirac(energy: f64, beta: f64) -> f64 {
    if beta.is_infinite() && beta > 0.0 {
        return match energy.partial_cmp(&0.0) {
            Some(core::cmp::Ordering::Greater) => 0.0,
            Some(core::cmp::Ordering::Less) => 1.0,
            _ => 0.5,
        };
    }
    1.0 / (1.0 + (beta * energy).exp())
}

/// Transition rates of the Markovian reference model.
///
/// Γ↓ is computed as Γ₀/(1 + e^{−βΩ}) rather than Γ₀(1 − f), which keeps
/// the detailed-balance ratio Γ↓/Γ↑ = e^{βΩ} exact up to rounding of the
/// two quotients; at T = 0 the rates are exactly (Γ₀, 0).
pub fn markov_rates(gamma_zero: f64, beta: f64, qubit_frequency: f64) -> MarkovParams {
    let f_up = fermi_dirac(qubit_frequency, beta);
    let f_down = fermi_dirac(-qubit_frequency, beta);
    MarkovParams {
        beta,
        gamma_down: gamma_zero * f_down,
        gamma_up: gamma_zero * f_up,
        gamma_zero,
    }
}

/// Coupling scheme for the two-spin ground-state check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwoSpinMode {
    /// Excitation-conserving coupling only: |10⟩↔|01⟩.
    Rwa,
    /// Adds the counter-rotating |00⟩↔|11⟩ element.
    Full,
}

/// Ground state of two coupled spins.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoSpinGround {
    /// Lowest eigenvalue.
    pub energy: f64,
    /// Corresponding unit eigenvector in the basis {|00⟩, |10⟩, |01⟩, |11⟩}.
    pub vector: [f64; 4],
    /// The full 4×4 Hamiltonian matrix in that basis.
    pub matrix: Matrix,
}

/// Ground eigenpair of the two-spin Hamiltonian in the basis
/// {|00⟩, |10⟩, |01⟩, |11⟩}.
///
/// The matrix is block diagonal in both modes ({|00⟩, |11⟩} against
/// {|10⟩, |01⟩}), so the eigenpair comes from closed-form 2×2 solves. In
/// particular the RWA ground state at g² ≤ ω₁ω₂ is exactly (0, |00⟩), and
/// the full-coupling ground energy −2g²/(s + √(s² + 4g²)), s = ω₁ + ω₂, is
/// evaluated in the cancellation-free form.
pub fn two_spin_ground_state(omega1: f64, omega2: f64, g: f64, mode: TwoSpinMode) -> TwoSpinGround {
    let mut m = Matrix::zeros(4);
    m[(1, 1)] = omega1;
    m[(2, 2)] = omega2;
    m[(3, 3)] = omega1 + omega2;
    m[(1, 2)] = g;
    m[(2, 1)] = g;
    if mode == TwoSpinMode::Full {
        m[(0, 3)] = g;
        m[(3, 0)] = g;
    }

    // One-excitation block {|10⟩, |01⟩}: [[ω₁, g], [g, ω₂]].
    let mid = 0.5 * (omega1 + omega2);
    let delta = 0.5 * (omega1 - omega2);
    let r = delta.hypot(g);
    let one_exc_energy = mid - r;
    let (v10, v01) = if delta >= 0.0 {
        (g, -(delta + r))
    } else {
        (delta - r, g)
    };
    let norm = v10.hypot(v01);
    let (v10, v01) = if norm == 0.0 {
        (1.0, 0.0)
    } else {
        (v10 / norm, v01 / norm)
    };

    // Even block {|00⟩, |11⟩}: diag(0, s) in RWA, [[0, g], [g, s]] in full.
    let s = omega1 + omega2;
    let (even_energy, e00, e11) = match mode {
        TwoSpinMode::Rwa => (0.0, 1.0, 0.0),
        TwoSpinMode::Full => {
            if g == 0.0 {
                (0.0, 1.0, 0.0)
            } else {
                let half = 0.5 * s;
                let lam = -(g * g) / (half + half.hypot(g));
                let norm = g.hypot(lam);
                (lam, g / norm, lam / norm)
            }
        }
    };

    if even_energy <= one_exc_energy {
        TwoSpinGround {
            energy: even_energy,
            vector: [e00, 0.0, 0.0, e11],
            matrix: m,
        }
    } else {
        TwoSpinGround {
            energy: one_exc_energy,
            vector: [0.0, v10, v01, 0.0],
            matrix: m,
        }
    }
}
