//! Scalar special functions and quadrature used by the closed-form decay
//! laws.
//!
//! The sine integral drives the short-to-intermediate-time decay integral,
//! and the adaptive Simpson rule provides an independent quadrature route
//! against which the closed forms are cross-checked.

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use core::f64::consts::{FRAC_PI_2, PI};

/// Sine integral Si(x) = ∫₀ˣ sin(w)/w dw.
///
/// Power series up to |x| = 4, then Si(x) = π/2 + Im E₁(ix) with the
/// exponential integral evaluated by a modified Lentz continued fraction.
/// Both branches are accurate to a few ulp; the crossover keeps the series
/// short and the continued fraction fast.
pub fn sine_integral(x: f64) -> f64 {
    if x < 0.0 {
        return -sine_integral(-x);
    }
    if x == 0.0 {
        return 0.0;
    }
    if x <= 4.0 {
        si_series(x)
    } else {
        FRAC_PI_2 + e1_imag_axis(x).im
    }
}

/// Series Σ (−1)ᵏ x^{2k+1} / ((2k+1)(2k+1)!) for |x| ≤ 4.
fn si_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = x; // x^{2k+1}/(2k+1)! at k = 0
    let mut sum = x; // term / (2k+1) accumulated
    let mut k = 1u32;
    loop {
        let two_k = 2.0 * f64::from(k);
        term *= -x2 / (two_k * (two_k + 1.0));
        let contrib = term / (two_k + 1.0);
        sum += contrib;
        if contrib.abs() < f64::EPSILON * sum.abs() {
            return sum;
        }
        k += 1;
        debug_assert!(k < 60, "series failed to terminate");
    }
}

/// E₁(ix) for real x > 0 by the even continued fraction
/// E₁(z) = e^{−z} / (z + 1 − 1²/(z + 3 − 2²/(z + 5 − …)))
/// evaluated with the modified Lentz algorithm.
fn e1_imag_axis(x: f64) -> Complex64 {
    let z = Complex64::new(0.0, x);
    let tiny = Complex64::new(1e-300, 0.0);
    let mut b = z + 1.0;
    let mut c = Complex64::new(1e300, 0.0);
    let mut d = b.inv();
    let mut h = d;
    for i in 1..200u32 {
        let a = -f64::from(i) * f64::from(i);
        b += 2.0;
        d = (b + a * d).inv();
        if d.norm_sqr() == 0.0 {
            d = tiny.inv();
        }
        c = b + a / c;
        if c.norm_sqr() == 0.0 {
            c = tiny;
        }
        let delta = c * d;
        h *= delta;
        if (delta - 1.0).norm_sqr() < (f64::EPSILON * f64::EPSILON) {
            break;
        }
    }
    // e^{-ix} = (cos x, -sin x)
    let (s, cx) = x.sin_cos();
    Complex64::new(cx, -s) * h
}

/// (1 − cos w) / w², the decay-integral kernel, regular at w = 0.
pub fn one_minus_cos_over_w2(w: f64) -> f64 {
    let aw = w.abs();
    if aw < 1e-4 {
        // 1/2 − w²/24 + w⁴/720; truncation below 1e-18 at this threshold.
        let w2 = w * w;
        0.5 - w2 / 24.0 + w2 * w2 / 720.0
    } else {
        // half-angle form avoids cancellation: 1 − cos w = 2 sin²(w/2)
        let s = (0.5 * w).sin();
        2.0 * s * s / (w * w)
    }
}

/// Adaptive Simpson quadrature of `f` over [a, b] to absolute tolerance
/// `tol`.
///
/// Plain recursive bisection with the standard 1/15 Richardson error
/// estimate; depth is capped so pathological integrands terminate.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fb, fm, whole, tol, 40)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let err = left + right - whole;
    if depth == 0 || err.abs() <= 15.0 * tol {
        return left + right + err / 15.0;
    }
    let half_tol = 0.5 * tol;
    simpson_step(f, a, m, fa, fm, flm, left, half_tol, depth - 1)
        + simpson_step(f, m, b, fm, fb, frm, right, half_tol, depth - 1)
}

/// π, re-exported where the decay laws need the saturation value of the
/// dephasing integral.
pub const CHI_INFINITY: f64 = PI;
