//! Cross-checks the tridiagonalization eigensolver against a cyclic
//! Jacobi rotation solver written independently here. The two share no
//! code beyond the matrix type, so agreement pins the eigenvalues.

// Index-form loops mirror the textbook rotation formulas on purpose.
#![allow(clippy::needless_range_loop)]

use spinbath_core::exact::hamiltonian_matrix;
use spinbath_core::linalg::{symmetric_eigen, Matrix};
use spinbath_core::model::{
    build_instance, CouplingMode, CouplingStrength, KappaMode, Placement, SpinBathSpec,
};

/// Eigenvalues by cyclic Jacobi sweeps, ascending.
fn jacobi_eigenvalues(a: &Matrix) -> Vec<f64> {
    let n = a.dim();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    let scale: f64 = m
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0_f64, |acc, x| acc.max(x.abs()))
        .max(f64::MIN_POSITIVE);
    for _sweep in 0..60 {
        let mut off = 0.0_f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[i][j] * m[i][j];
            }
        }
        if off.sqrt() <= 1e-15 * scale * n as f64 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p][q];
                if apq.abs() <= 1e-18 * scale {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = m[k][p];
                    let akq = m[k][q];
                    m[k][p] = c * akp - s * akq;
                    m[p][k] = m[k][p];
                    m[k][q] = s * akp + c * akq;
                    m[q][k] = m[k][q];
                }
                m[p][p] -= t * apq;
                m[q][q] += t * apq;
                m[p][q] = 0.0;
                m[q][p] = 0.0;
            }
        }
    }
    let mut values: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    values.sort_by(f64::total_cmp);
    values
}

fn assert_spectra_match(a: &Matrix, tag: &str) {
    let lib = symmetric_eigen(a).unwrap();
    let oracle = jacobi_eigenvalues(a);
    let scale = oracle.iter().fold(1.0_f64, |acc, x| acc.max(x.abs()));
    for (i, (l, o)) in lib.values.iter().zip(&oracle).enumerate() {
        assert!(
            (l - o).abs() <= 1e-11 * scale,
            "{tag}: eigenvalue {i} disagrees: {l} vs {o}"
        );
    }
}

/// Deterministic pseudo-random dense symmetric matrix.
fn dense_symmetric(n: usize, seed: u64) -> Matrix {
    let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let mut m = Matrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            let v = next();
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

#[test]
fn random_dense_spectra() {
    for (n, seed) in [(5usize, 1u64), (12, 2), (30, 3), (30, 4)] {
        assert_spectra_match(
            &dense_symmetric(n, seed),
            &format!("dense n={n} seed={seed}"),
        );
    }
}

#[test]
fn model_hamiltonian_spectra() {
    for (kappa, seed) in [(KappaMode::None, 21u64), (KappaMode::MatchGamma, 22)] {
        let spec = SpinBathSpec {
            qubit_frequency: 1.0,
            n_spins: 50,
            freq_width: 2.0,
            strength: CouplingStrength::TargetRate(0.05),
            placement: Placement::Sampled,
            coupling_mode: CouplingMode::Uniform,
            kappa_mode: kappa,
            rng_seed: seed,
        };
        let inst = build_instance(&spec).unwrap();
        let h = hamiltonian_matrix(&inst).unwrap();
        assert_spectra_match(&h, &format!("hamiltonian kappa={kappa:?}"));
    }
}

#[test]
fn clustered_spectrum_is_resolved() {
    // Nearly degenerate diagonal with weak couplings: the regime where a
    // shift strategy can lose eigenvalues.
    let n = 24;
    let mut m = Matrix::zeros(n);
    for i in 0..n {
        m[(i, i)] = 1.0 + 1e-9 * (i % 3) as f64;
    }
    for i in 0..n - 1 {
        m[(i, i + 1)] = 1e-7;
        m[(i + 1, i)] = 1e-7;
    }
    assert_spectra_match(&m, "clustered");
}
