//! Frozen reference values and closed-form identities.

use approx::assert_relative_eq;
use stylized_core::density::{c_q, g_q};
use stylized_core::mfdfa::{self, HurstProfile};
use stylized_core::series::moving_average_trend;
use stylized_core::{autocorr, special};

#[test]
fn detrend_golden_five_points() {
    let x = [1.0, 2.0, 4.0, 8.0, 16.0];
    let odd = moving_average_trend(&x, 3).unwrap();
    let expected_odd = [1.5, 7.0 / 3.0, 14.0 / 3.0, 28.0 / 3.0, 12.0];
    for (got, want) in odd.trend.iter().zip(expected_odd) {
        assert_relative_eq!(*got, want, max_relative = 1e-15);
    }
    let even = moving_average_trend(&x, 4).unwrap();
    let expected_even = [7.0 / 3.0, 3.75, 7.5, 28.0 / 3.0, 12.0];
    for (got, want) in even.trend.iter().zip(expected_even) {
        assert_relative_eq!(*got, want, max_relative = 1e-15);
    }
    // boundary prefactor for even windows: (t_w + 2t)/2 samples at t = 1
    assert_relative_eq!(even.trend[0], (1.0 + 2.0 + 4.0) / ((4.0 + 2.0) / 2.0));
}

// 40-digit reference values of the normalization constant
#[allow(clippy::excessive_precision)]
const C_Q: [(f64, f64); 6] = [
    (1.1, 1.842_573_858_196_283_1),
    (1.3, 2.008_766_660_695_641_1),
    (1.5, 2.221_441_469_079_183_1),
    (2.0, std::f64::consts::PI),
    (2.5, 5.948_954_850_804_351_1),
    (2.9, 28.561_040_467_845_109_8),
];

#[test]
fn normalization_constant_golden() {
    for (q, want) in C_Q {
        assert_relative_eq!(c_q(q).unwrap(), want, max_relative = 1e-12);
    }
    assert!((c_q(2.0_f64).unwrap() - std::f64::consts::PI).abs() < 1e-10);
}

/// `int f(x) dx` over the line via `x = tan(theta)` and composite Simpson.
fn integrate_on_line(f: impl Fn(f64) -> f64) -> f64 {
    let n = 400_000;
    let (a, b) = (-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2);
    let h = (b - a) / n as f64;
    let g = |t: f64| {
        let c = t.cos();
        if c.abs() < 1e-300 {
            0.0
        } else {
            f(t.tan()) / (c * c)
        }
    };
    let mut s = g(a) + g(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * g(a + h * i as f64);
    }
    s * h / 3.0
}

/// `int g_q` over the line: Simpson in `ln x` on `[1e-12, X]`, doubled, plus the
/// leading term of the power-law tail `(q-1)^-p x^-2p / C_q` beyond `X`.
fn q_gaussian_mass(q: f64) -> f64 {
    let (lo, hi) = (1e-12_f64.ln(), 1e6_f64.ln());
    let n = 400_000;
    let h = (hi - lo) / n as f64;
    let g = |s: f64| {
        let x = s.exp();
        g_q(x, q).unwrap() * x
    };
    let mut sum = g(lo) + g(hi);
    for i in 1..n {
        sum += if i % 2 == 1 { 4.0 } else { 2.0 } * g(lo + h * i as f64);
    }
    let core = sum * h / 3.0 + 1e-12 * g_q(0.0, q).unwrap();
    let p = 1.0 / (q - 1.0);
    let x = 1e6_f64;
    let tail = (q - 1.0).powf(-p) * x.powf(1.0 - 2.0 * p) / (2.0 * p - 1.0) / c_q(q).unwrap();
    2.0 * (core + tail)
}

#[test]
fn q_gaussian_is_normalized() {
    for q in [1.1, 1.5, 2.0, 2.5] {
        let total = q_gaussian_mass(q);
        assert!((total - 1.0).abs() < 1e-6, "q = {q}: {total}");
    }
}

#[test]
fn q_gaussian_variance() {
    let var = integrate_on_line(|x| x * x * g_q(x, 1.3).unwrap());
    assert_relative_eq!(var, 1.0 / (5.0 - 3.0 * 1.3), max_relative = 1e-6);
}

#[test]
fn ln_gamma_half_integers() {
    assert_relative_eq!(special::ln_gamma(0.5_f64), std::f64::consts::PI.sqrt().ln(), max_relative = 1e-14);
    assert_relative_eq!(special::ln_gamma(5.0_f64), 24.0_f64.ln(), max_relative = 1e-14);
}

#[test]
fn acf_slope_worked_numbers() {
    assert_relative_eq!(autocorr::hurst_from_acf_slope(-1.17_f64).unwrap(), 0.415, epsilon = 1e-12);
    assert_relative_eq!(autocorr::hurst_from_acf_slope(-1.07_f64).unwrap(), 0.465, epsilon = 1e-12);
}

fn linear_profile(a: f64, b: f64) -> HurstProfile<f64> {
    let orders = mfdfa::default_orders::<f64>();
    let h = orders.iter().map(|&w| a * w + b).collect();
    let n = orders.len();
    HurstProfile::new(orders, h, vec![0.0; n]).unwrap()
}

#[test]
fn legendre_linear_closed_form() {
    // gamma = b - 2 beta w^3; inverting with the cube root gives
    // f(gamma) = 1 - a w^2 - 3 beta w^4 with w = cbrt((b - gamma) / (2 beta))
    for (a, b) in [(0.0, 0.5), (-0.04, 0.55), (0.03, 0.6)] {
        for beta in [1.0, 0.1, 0.01, 0.001] {
            let s = mfdfa::legendre_spectrum(&linear_profile(a, b), beta).unwrap();
            for i in 1..s.gamma.len() - 1 {
                let w = ((b - s.gamma[i]) / (2.0 * beta)).cbrt();
                assert!((w - s.orders[i]).abs() < 1e-8);
                let f = 1.0 - a * w * w - 3.0 * beta * w.powi(4);
                assert!((s.f[i] - f).abs() < 1e-6 * (1.0 + f.abs()), "a {a} beta {beta} w {w}");
            }
        }
    }
}

#[test]
fn legendre_w_zero_maps_to_one() {
    for (a, b) in [(0.0, 0.5), (-0.047, 0.5), (0.02, 0.7)] {
        for beta in [1.0, 0.001] {
            let s = mfdfa::legendre_spectrum(&linear_profile(a, b), beta).unwrap();
            let i = s.orders.iter().position(|&w| w == 0.0).unwrap();
            assert_eq!(s.f[i], 1.0);
        }
    }
}

#[test]
fn legendre_f_bounded_for_non_decreasing_h() {
    for a in [0.0, 0.01, 0.05] {
        for beta in [1.0, 0.1, 0.01, 0.001] {
            let s = mfdfa::legendre_spectrum(&linear_profile(a, 0.5), beta).unwrap();
            assert!(s.f_max() <= 1.0 + 1e-6);
        }
    }
}

#[test]
fn two_slope_profile_has_two_peaks_at_small_beta() {
    let orders = mfdfa::default_orders::<f64>();
    let h = orders
        .iter()
        .map(|&w| if w < 0.0 { 0.5 - 0.047 * w } else { 0.5 - 0.041 * w })
        .collect();
    let hp = HurstProfile::new(orders, h, vec![0.0; 41]).unwrap();
    let sweep = mfdfa::beta_sweep(&hp, &[1.0, 0.1, 0.01, 0.001]).unwrap();
    assert_eq!(sweep.spectra[3].peaks.len(), 2);
    assert_eq!(sweep.verdict, mfdfa::Fractality::Multifractal);
    let test = mfdfa::multifractality_test(&hp, 0.01).unwrap();
    assert_eq!(test.verdict, mfdfa::Fractality::Multifractal);
    assert_relative_eq!(test.negative.slope, -0.047, epsilon = 1e-12);
    assert_relative_eq!(test.positive.slope, -0.041, epsilon = 1e-12);
}
