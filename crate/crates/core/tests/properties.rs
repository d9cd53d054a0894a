//! Structural invariants checked on generated inputs.

use proptest::prelude::*;
use stylized_core::diffusion::{self, PeakScalingCurve};
use stylized_core::series::{moving_average_trend, ReturnSeries};
use stylized_core::synth::{self, Seed};
use stylized_core::{autocorr, mfdfa};

fn ulp(x: f64) -> f64 {
    let a = x.abs();
    f64::from_bits(a.to_bits() + 1) - a
}

#[test]
fn detrend_reconstructs_a_million_samples() {
    let steps = synth::gaussian_white(1_000_000, 0.01_f64, Seed(6)).unwrap().values;
    let index: Vec<f64> = synth::cumulative(&steps, 100.0)[1..].to_vec();
    for window in [6, 1008, 25_201] {
        let d = moving_average_trend(&index, window).unwrap();
        for (i, &v) in index.iter().enumerate() {
            let back = d.trend[i] + d.residual[i];
            assert!((back - v).abs() <= ulp(v), "window {window} index {i}");
        }
    }
}

/// Standard DFA-1 written independently: explicit normal equations on
/// `x = 1..s`, then the root mean of the segment mean squares.
fn plain_dfa(returns: &[f64], s: usize) -> f64 {
    let mean = returns.iter().sum::<f64>() / returns.len() as f64;
    let mut y = Vec::with_capacity(returns.len());
    let mut acc = 0.0;
    for r in returns {
        acc += r - mean;
        y.push(acc);
    }
    let segments = y.len() / s;
    let mut total = 0.0;
    for v in 0..segments {
        let seg = &y[v * s..(v + 1) * s];
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for (i, &val) in seg.iter().enumerate() {
            let x = (i + 1) as f64;
            sx += x;
            sy += val;
            sxx += x * x;
            sxy += x * val;
        }
        let n = s as f64;
        let b = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let a = (sy - b * sx) / n;
        let ms: f64 = seg
            .iter()
            .enumerate()
            .map(|(i, &val)| {
                let r = val - a - b * (i + 1) as f64;
                r * r
            })
            .sum::<f64>()
            / n;
        total += ms;
    }
    (total / segments as f64).sqrt()
}

#[test]
fn order_two_matches_plain_dfa() {
    let x = synth::fgn(1 << 14, 0.6_f64, Seed(10)).unwrap().values;
    let scales = mfdfa::default_scales(x.len());
    let profile = mfdfa::profile(&x).unwrap();
    let m = mfdfa::fluctuation_matrix(&profile, &scales, &[2.0]).unwrap();
    let mine = mfdfa::generalized_hurst(&m, (16, x.len() / 4)).unwrap().h[0];

    let lx: Vec<f64> = scales.iter().map(|&s| (s as f64).ln()).collect();
    let ly: Vec<f64> = scales.iter().map(|&s| plain_dfa(&x, s).ln()).collect();
    for (j, &s) in scales.iter().enumerate() {
        assert!((m.values[0][j] / plain_dfa(&x, s) - 1.0).abs() < 1e-9, "scale {s}");
    }
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let slope = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>()
        / lx.iter().map(|a| (a - mx) * (a - mx)).sum::<f64>();
    assert!((mine - slope).abs() < 1e-9, "{mine} vs {slope}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn detrend_round_trip(values in prop::collection::vec(1.0f64..1e5, 2..300), w in 1usize..400) {
        let w = w.min(values.len());
        let d = moving_average_trend(&values, w).unwrap();
        // one rounding in the subtraction and one in the sum: bounded by the
        // spacing of the larger operand (equal to ulp(v) when trend ~ value)
        for (i, &v) in values.iter().enumerate() {
            let scale = v.abs().max(d.trend[i].abs());
            prop_assert!((d.trend[i] + d.residual[i] - v).abs() <= ulp(scale));
        }
    }

    #[test]
    fn acf_shift_scale_invariant(
        values in prop::collection::vec(-10.0f64..10.0, 40..200),
        a in prop_oneof![-50.0f64..-0.1, 0.1f64..50.0],
        b in -100.0f64..100.0,
    ) {
        let x = ReturnSeries::new(values.clone(), 1, false);
        let y = ReturnSeries::new(values.iter().map(|v| a * v + b).collect(), 1, false);
        if let (Ok(cx), Ok(cy)) = (autocorr::sample_acf(&x, 10), autocorr::sample_acf(&y, 10)) {
            prop_assert_eq!(cx.values[0], 1.0);
            for (p, q) in cx.values.iter().zip(&cy.values) {
                prop_assert!((p - q).abs() < 1e-9);
                prop_assert!(p.abs() <= 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn acf_hurst_round_trip(h in 0.001f64..0.999) {
        let back = autocorr::hurst_from_acf_slope(2.0 * h - 2.0).unwrap();
        prop_assert!((back - h).abs() <= 4.0 * f64::EPSILON);
    }

    #[test]
    fn moments_increase_with_order(seed in any::<u64>()) {
        let x = synth::gaussian_white(1024, 1.0_f64, Seed(seed)).unwrap().values;
        let p = mfdfa::profile(&x).unwrap();
        let orders = mfdfa::default_orders::<f64>();
        let m = mfdfa::fluctuation_matrix(&p, &[16, 64, 256], &orders).unwrap();
        for j in 0..3 {
            for i in 1..orders.len() {
                prop_assert!(m.values[i][j] >= m.values[i - 1][j] * (1.0 - 1e-12));
            }
        }
        prop_assert_eq!(*p.last().unwrap(), 0.0);
    }

    #[test]
    fn profile_tau_identity(hs in prop::collection::vec(0.0f64..1.5, 41)) {
        let hp = mfdfa::HurstProfile::new(mfdfa::default_orders(), hs, vec![0.0; 41]).unwrap();
        for i in 0..41 {
            prop_assert!((hp.tau[i] - (hp.orders[i] * hp.h[i] - 1.0)).abs() <= 1e-12);
        }
    }

    #[test]
    fn two_regime_is_scale_invariant(
        h1 in 0.2f64..0.8, h2 in 0.2f64..0.8, k in 4usize..9, c in 1e-3f64..1e3,
        noise in prop::collection::vec(-0.01f64..0.01, 12),
    ) {
        let lags: Vec<usize> = (1..=12).map(|i| 1 << i).collect();
        let peaks: Vec<f64> = lags.iter().enumerate().map(|(i, &l)| {
            let t = l as f64;
            let t0 = lags[k] as f64;
            let base = if i < k { t.powf(-h1) } else { t0.powf(-h1) * (t / t0).powf(-h2) };
            base * noise[i].exp()
        }).collect();
        let curve = PeakScalingCurve { lags: lags.clone(), peaks: peaks.clone(), msd: vec![1.0; 12], density_at_zero: vec![1.0; 12] };
        let scaled = PeakScalingCurve { peaks: peaks.iter().map(|p| p * c).collect(), ..curve.clone() };
        let (a, b) = (diffusion::fit_two_regime(&curve).unwrap(), diffusion::fit_two_regime(&scaled).unwrap());
        prop_assert_eq!(a.breakpoint, b.breakpoint);
        prop_assert!((a.h_short - b.h_short).abs() < 1e-9 && (a.h_long - b.h_long).abs() < 1e-9);
        prop_assert!((a.alpha_short * a.h_short - 1.0).abs() < 1e-12);
    }

    #[test]
    fn regime_agrees_with_hurst(h in 0.05f64..0.95) {
        let regime = diffusion::classify_regime(1.0 / h, 1e-9);
        if h < 0.5 - 1e-6 {
            prop_assert_eq!(regime, diffusion::DiffusionRegime::Subdiffusion);
        } else if h > 0.5 + 1e-6 {
            prop_assert_eq!(regime, diffusion::DiffusionRegime::Superdiffusion);
        }
    }
}
