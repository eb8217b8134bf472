//! Property tests of the structural invariants: sampled instances stay
//! inside their declared ranges, the integrator honors its norm
//! guarantee, the two propagation routes agree, and the processing
//! helpers commute the way averaging must.

use num_complex::Complex64;
use proptest::prelude::*;

use spinbath_core::analytic::{chi, chi_quadrature};
use spinbath_core::exact::{
    diagonalize_model, eigenmode_propagate, integrate, to_interaction_picture,
    to_schroedinger_picture, MethodTag, Picture, Provenance, Scope, SingleExcitationState,
    SnapshotSchedule, StepPolicy, Trajectory,
};
use spinbath_core::model::{
    build_instance, fermi_dirac, golden_rule_rate, markov_rates, CouplingMode, CouplingStrength,
    KappaMode, Placement, SpinBathSpec,
};
use spinbath_core::observables::{fit_exponential, frequency_bin, window_average, Window};

fn spec_strategy() -> impl Strategy<Value = SpinBathSpec> {
    (
        1usize..24,
        0.1f64..4.0,
        0.0f64..0.2,
        any::<u64>(),
        any::<bool>(),
        any::<bool>(),
    )
        .prop_map(|(n, width, rate, seed, grid, kappa)| SpinBathSpec {
            qubit_frequency: 1.0,
            n_spins: n,
            freq_width: width,
            strength: CouplingStrength::TargetRate(rate),
            placement: if grid {
                Placement::Grid
            } else {
                Placement::Sampled
            },
            coupling_mode: CouplingMode::Uniform,
            kappa_mode: if kappa {
                KappaMode::MatchGamma
            } else {
                KappaMode::None
            },
            rng_seed: seed,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn instances_respect_declared_ranges(spec in spec_strategy()) {
        let inst = build_instance(&spec).unwrap();
        let lo = spec.qubit_frequency - 0.5 * spec.freq_width;
        let hi = spec.qubit_frequency + 0.5 * spec.freq_width;
        for w in &inst.omegas {
            prop_assert!(*w >= lo && *w <= hi);
        }
        let m2 = spec.mean_sq_coupling().unwrap();
        let gamma_max = (3.0 * m2).sqrt();
        for g in &inst.gammas {
            prop_assert!(*g >= 0.0 && *g <= gamma_max + 1e-12);
        }
        if let Some(k) = &inst.kappas {
            for i in 0..inst.n_spins() {
                prop_assert_eq!(k[(i, i)], 0.0);
                for j in 0..i {
                    prop_assert_eq!(k[(i, j)], k[(j, i)]);
                }
            }
        }
        // Same seed reproduces the instance bitwise.
        let again = build_instance(&spec).unwrap();
        prop_assert_eq!(inst.omegas, again.omegas);
        prop_assert_eq!(inst.gammas, again.gammas);
    }

    #[test]
    fn constant_coupling_realizes_rate_exactly(
        n in 1usize..200,
        rate in 0.001f64..0.3,
        seed in any::<u64>(),
    ) {
        let spec = SpinBathSpec {
            qubit_frequency: 1.0,
            n_spins: n,
            freq_width: 2.0,
            strength: CouplingStrength::TargetRate(rate),
            placement: Placement::Sampled,
            coupling_mode: CouplingMode::Constant,
            kappa_mode: KappaMode::None,
            rng_seed: seed,
        };
        let inst = build_instance(&spec).unwrap();
        let realized = golden_rule_rate(&inst);
        prop_assert!((realized - rate).abs() <= 1e-11 * rate);
    }

    #[test]
    fn integrator_honors_norm_guarantee(
        spec in spec_strategy(),
        t_final in 1.0f64..30.0,
    ) {
        let inst = build_instance(&spec).unwrap();
        let policy = StepPolicy::default();
        let traj = integrate(&inst, t_final, &policy, &SnapshotSchedule::linear(8)).unwrap();
        for r in traj.norm_residuals() {
            prop_assert!(*r <= policy.norm_tolerance);
        }
        for i in 0..traj.n_snapshots() {
            for p in traj.populations_at(i) {
                prop_assert!(*p >= 0.0 && *p <= 1.0 + policy.norm_tolerance);
            }
        }
    }

    #[test]
    fn propagation_routes_agree(
        spec in spec_strategy(),
        t_final in 2.0f64..25.0,
    ) {
        let inst = build_instance(&spec).unwrap();
        let ode = integrate(
            &inst,
            t_final,
            &StepPolicy::default(),
            &SnapshotSchedule::linear(10),
        )
        .unwrap();
        let decomp = diagonalize_model(&inst).unwrap();
        let eig = eigenmode_propagate(&inst, &decomp, ode.times()).unwrap();
        for i in 0..ode.n_snapshots() {
            for (a, b) in ode.populations_at(i).iter().zip(eig.populations_at(i)) {
                prop_assert!((a - b).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn chi_is_monotone_and_bounded(
        t1 in 0.0f64..500.0,
        t2 in 0.0f64..500.0,
        width in 0.1f64..5.0,
    ) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let c_lo = chi(lo, width);
        let c_hi = chi(hi, width);
        prop_assert!(c_lo <= c_hi + 1e-12);
        prop_assert!(c_hi <= core::f64::consts::PI);
        prop_assert!(c_lo >= 0.0);
    }

    #[test]
    fn chi_routes_agree(a in 0.01f64..60.0) {
        let closed = chi(a, 2.0);
        let quad = chi_quadrature(a, 2.0, 1e-10);
        prop_assert!((closed - quad).abs() <= 1e-8);
    }

    #[test]
    fn window_average_commutes_with_concatenation(
        pops in proptest::collection::vec(0.0f64..1.0, 4..40),
        split_frac in 0.2f64..0.8,
    ) {
        let n = pops.len();
        let times: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let make = |ts: &[f64], ps: &[f64]| {
            Trajectory::from_parts(
                ts.to_vec(),
                1,
                Scope::QubitOnly,
                ps.to_vec(),
                None,
                vec![0.0; ts.len()],
                vec![0.0; ts.len()],
                Provenance { method: MethodTag::Synthetic, seed: 0, step_size: None },
            )
            .unwrap()
        };
        let split = ((n as f64 * split_frac) as usize).clamp(1, n - 1);
        let whole = make(&times, &pops);
        let first = make(&times[..split], &pops[..split]);
        let second = make(&times[split..], &pops[split..]);
        // One window spanning everything: mean of the whole equals the
        // count-weighted mean of the segment means.
        let w = Window::new(-0.5, n as f64).unwrap();
        let mean_whole = window_average(&whole, &[w]).unwrap()[0][0];
        let mean_a = window_average(&first, &[w]).unwrap()[0][0];
        let mean_b = window_average(&second, &[w]).unwrap()[0][0];
        let recombined =
            (mean_a * split as f64 + mean_b * (n - split) as f64) / n as f64;
        prop_assert!((mean_whole - recombined).abs() <= 1e-12);
    }

    #[test]
    fn binning_conserves_population(
        data in proptest::collection::vec((0.0f64..2.0, 0.0f64..1.0), 1..60),
        n_bins in 1usize..12,
    ) {
        let omegas: Vec<f64> = data.iter().map(|(w, _)| *w).collect();
        let pops: Vec<f64> = data.iter().map(|(_, p)| *p).collect();
        let bins = frequency_bin(&pops, &omegas, (0.0, 2.0), n_bins).unwrap();
        let total: f64 = pops.iter().sum();
        let binned: f64 = bins.iter().map(|b| b.sum).sum();
        let count: usize = bins.iter().map(|b| b.count).sum();
        prop_assert_eq!(count, pops.len());
        prop_assert!((binned - total).abs() <= 1e-12 * total.max(1.0));
    }

    #[test]
    fn fit_rate_is_scale_invariant(
        rate in 0.01f64..0.5,
        scale in 0.1f64..10.0,
    ) {
        let times: Vec<f64> = (0..40).map(|i| 1.0 + i as f64).collect();
        let pops: Vec<f64> = times.iter().map(|t| (-rate * t).exp()).collect();
        let scaled: Vec<f64> = pops.iter().map(|p| scale * p).collect();
        let make = |ps: Vec<f64>| {
            Trajectory::from_parts(
                times.clone(),
                1,
                Scope::QubitOnly,
                ps,
                None,
                vec![0.0; times.len()],
                vec![0.0; times.len()],
                Provenance { method: MethodTag::Synthetic, seed: 0, step_size: None },
            )
            .unwrap()
        };
        let f1 = fit_exponential(&make(pops), 0.0, 41.0).unwrap();
        let f2 = fit_exponential(&make(scaled), 0.0, 41.0).unwrap();
        prop_assert!((f1.rate - f2.rate).abs() <= 1e-9 * rate);
        prop_assert!((f1.rate - rate).abs() <= 1e-9 * rate);
    }

    #[test]
    fn detailed_balance_holds_for_any_temperature(
        beta in 0.01f64..20.0,
        g0 in 0.001f64..0.5,
    ) {
        let p = markov_rates(g0, beta, 1.0);
        prop_assert!((p.gamma_up + p.gamma_down - g0).abs() <= 1e-12 * g0);
        let ratio = p.gamma_up / p.gamma_down;
        prop_assert!((ratio - (-beta).exp()).abs() <= 1e-12 * ratio.max(1e-300));
    }

    #[test]
    fn fermi_function_symmetry(energy in -30.0f64..30.0, beta in 0.0f64..10.0) {
        let f = fermi_dirac(energy, beta);
        let g = fermi_dirac(-energy, beta);
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!((f + g - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn picture_round_trip_is_identity(
        parts in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3..10),
        t in 0.0f64..50.0,
    ) {
        let n = parts.len() - 1;
        let spec = SpinBathSpec::with_target_rate(n, 2.0, 0.05, 99);
        let inst = build_instance(&spec).unwrap();
        let amplitudes: Vec<Complex64> =
            parts.iter().map(|(re, im)| Complex64::new(*re, *im)).collect();
        let state = SingleExcitationState {
            amplitudes,
            time: t,
            picture: Picture::Interaction,
        };
        let back = to_interaction_picture(&to_schroedinger_picture(&state, &inst), &inst);
        for (a, b) in state.amplitudes.iter().zip(&back.amplitudes) {
            prop_assert!((a - b).norm() <= 1e-13);
        }
    }
}
