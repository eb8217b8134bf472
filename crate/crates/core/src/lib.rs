#![cfg_attr(not(feature = "std"), no_std)]
// `!(a < b)` guards are deliberate: unlike `a >= b` they fail closed on NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Dynamics of a single qubit exchanging one excitation with a finite bath
//! of N two-level systems under the rotating-wave approximation.
//!
//! The crate covers three routes to the same physics and the glue between
//! them:
//!
//! - [`model`] builds concrete bath realizations (frequencies, couplings,
//!   optional inter-spin couplings) from statistical specifications and
//!   holds the Markovian reference rates.
//! - [`exact`] propagates the single-excitation amplitudes exactly, either
//!   by direct ODE integration in the interaction picture or by one dense
//!   eigensolve of the quadratic Hamiltonian followed by phase rotation of
//!   the eigenmodes.
//! - [`analytic`] collects every closed form: the short-time (Zeno) and
//!   golden-rule decay laws, the qubit self-energy, transient and asymptotic
//!   spin populations, and the Markovian master-equation solution.
//! - [`observables`] post-processes trajectories: conservation residuals,
//!   time-window averages, frequency binning, exponential-rate fits.
//!
//! Internal units set ħ = 1 and the qubit frequency Ω = 1: frequencies are
//! reported in units of Ω and times in units of 1/Ω.
//!
//! The crate is `no_std`-compatible (requires `alloc`); the `std` feature
//! (default) only widens error-trait integration and enables the `parallel`
//! feature to be meaningful.

extern crate alloc;

pub mod analytic;
pub mod exact;
pub mod linalg;
pub mod model;
pub mod observables;
pub mod special;
