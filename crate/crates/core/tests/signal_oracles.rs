//! Time-domain oracles for the closed-form signal quantities.

use std::f64::consts::PI;

use proptest::prelude::*;
use wptsim::channel::ChannelRealization;
use wptsim::signal::{
    effective_tones, papr, received_rf_power, synthesize, synthesize_transmit_waveform, waveform_moments,
    EffectiveTones, ToneGrid, WaveformWeights,
};
use wptsim::Complex64;

const FC: f64 = 2.4e9;
const BW: f64 = 10e6;

/// Samples y(t) = Σ |a_n| cos(2π f_n t + arg a_n) over one period 1/Δf.
fn dense_samples(a: &[Complex64], oversampling: f64) -> Vec<f64> {
    let n = a.len();
    let df = BW / n as f64;
    let freqs: Vec<f64> = (0..n).map(|k| FC + (k as f64 - (n as f64 - 1.0) / 2.0) * df).collect();
    let period = 1.0 / df;
    let samples = (oversampling * freqs[n - 1] * period).ceil() as usize;
    (0..samples)
        .map(|i| {
            let t = period * i as f64 / samples as f64;
            a.iter()
                .zip(&freqs)
                .map(|(a, f)| a.norm() * (2.0 * PI * f * t + a.arg()).cos())
                .sum()
        })
        .collect()
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = v.fold((0.0, 0), |(s, c), x| (s + x, c + 1));
    s / c as f64
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn amplitudes(max_n: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..=max_n)
        .prop_filter("non-zero", |v| v.iter().any(|(r, i)| r.abs() + i.abs() > 1e-3))
        .prop_map(|v| v.into_iter().map(|(r, i)| Complex64::new(r, i)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn moments_match_time_average(a in amplitudes(8)) {
        let tones = EffectiveTones::new(a.clone());
        let closed = waveform_moments(&tones);
        let y = dense_samples(&a, 16.0);
        let m2 = mean(y.iter().map(|y| y * y));
        let m4 = mean(y.iter().map(|y| y.powi(4)));
        prop_assert!(rel(closed.m2, m2) < 1e-6, "m2 {} vs {}", closed.m2, m2);
        prop_assert!(rel(closed.m4, m4) < 1e-6, "m4 {} vs {}", closed.m4, m4);
        prop_assert_eq!(received_rf_power(&tones), closed.m2);
    }

    #[test]
    fn moments_invariant_under_common_phase(a in amplitudes(8), phi in -PI..PI, c in 0.1f64..10.0) {
        let base = waveform_moments(&EffectiveTones::new(a.clone()));
        let rot = Complex64::from_polar(1.0, phi);
        let rotated = waveform_moments(&EffectiveTones::new(a.iter().map(|x| x * rot).collect()));
        prop_assert!(rel(rotated.m2, base.m2) < 1e-9);
        prop_assert!(rel(rotated.m4, base.m4) < 1e-9);
        let scaled = waveform_moments(&EffectiveTones::new(a.iter().map(|x| x * c).collect()));
        prop_assert!(rel(scaled.m2, c * c * base.m2) < 1e-12);
        prop_assert!(rel(scaled.m4, c.powi(4) * base.m4) < 1e-12);
    }

    #[test]
    fn papr_matches_dense_sampling(a in amplitudes(8)) {
        let grid = ToneGrid::new(a.len(), FC, BW).unwrap();
        let tones = EffectiveTones::new(a.clone());
        let y = dense_samples(&a, 32.0);
        let peak = y.iter().map(|y| y * y).fold(0.0, f64::max);
        let oracle = peak / mean(y.iter().map(|y| y * y));
        prop_assert!(rel(papr(&tones, &grid, 32).unwrap(), oracle) < 1e-6);
    }
}

#[test]
fn rf_power_equals_time_average_for_eight_tones() {
    let a: Vec<Complex64> = (0..8).map(|k| Complex64::from_polar(0.3 + 0.1 * k as f64, 0.7 * k as f64)).collect();
    let y = dense_samples(&a, 16.0);
    let p = received_rf_power(&EffectiveTones::new(a));
    assert!(rel(p, mean(y.iter().map(|y| y * y))) < 1e-6);
}

#[test]
fn single_tone_fourth_moment_identity() {
    for amp in [0.2, 1.0, 2f64.sqrt(), 7.0] {
        let m = waveform_moments(&EffectiveTones::new(vec![Complex64::from_polar(amp, 1.1)]));
        assert!((m.m4 - 1.5 * m.m2 * m.m2).abs() <= 1e-12 * m.m4);
    }
}

#[test]
fn papr_reference_cases() {
    let one = ToneGrid::new(1, FC, BW).unwrap();
    let p = papr(&EffectiveTones::new(vec![Complex64::new(1.0, 0.0)]), &one, 32).unwrap();
    assert!((p - 2.0).abs() < 0.02);
    let four = ToneGrid::new(4, FC, BW).unwrap();
    let p = papr(&EffectiveTones::new(vec![Complex64::new(1.0, 0.0); 4]), &four, 32).unwrap();
    assert!((p - 8.0).abs() < 0.16, "{p}");
}

#[test]
fn receive_synthesis_matches_transmit_sum_for_unit_channel() {
    let (m, n) = (3, 5);
    let grid = ToneGrid::new(n, FC, BW).unwrap();
    let raw: Vec<Complex64> = (0..m * n).map(|i| Complex64::new((i as f64).sin(), (1.3 * i as f64).cos())).collect();
    let w = WaveformWeights::on_power_sphere(m, n, raw, 1.7).unwrap();
    let unit = ChannelRealization::new(m, grid.clone(), vec![Complex64::new(1.0, 0.0); m * n], "unit").unwrap();
    let tones = effective_tones(&unit, &w).unwrap();
    let times: Vec<f64> = (0..500).map(|i| i as f64 * 3.7e-11).collect();
    let rx = synthesize(tones.amplitudes(), &grid, &times);
    let mut tx = vec![0.0; times.len()];
    for antenna in 0..m {
        for (acc, y) in tx.iter_mut().zip(synthesize_transmit_waveform(&w, &grid, antenna, &times).unwrap()) {
            *acc += y;
        }
    }
    for (a, b) in rx.iter().zip(&tx) {
        assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
    }
}

#[test]
fn effective_tones_match_direct_dot_product() {
    let grid = ToneGrid::new(2, FC, BW).unwrap();
    let h = vec![
        Complex64::new(0.3, -1.2),
        Complex64::new(-0.7, 0.4),
        Complex64::new(1.1, 0.9),
        Complex64::new(0.05, -0.6),
    ];
    let s = vec![
        Complex64::new(0.5, 0.2),
        Complex64::new(-0.1, 0.8),
        Complex64::new(0.4, -0.4),
        Complex64::new(0.3, 0.1),
    ];
    let ch = ChannelRealization::new(2, grid, h.clone(), "x").unwrap();
    let w = WaveformWeights::on_power_sphere(2, 2, s, 1.0).unwrap();
    let a = effective_tones(&ch, &w).unwrap();
    for tone in 0..2 {
        let mut direct = Complex64::new(0.0, 0.0);
        for antenna in 0..2 {
            direct += h[antenna * 2 + tone] * w.as_slice()[antenna * 2 + tone];
        }
        assert!((a.amplitudes()[tone] - direct).norm() < 1e-15);
    }
}

#[test]
fn tone_grid_spacing() {
    for n in [1, 2, 3, 8, 16] {
        let g = ToneGrid::new(n, FC, BW).unwrap();
        for pair in g.angular_frequencies().windows(2) {
            assert!(pair[1] > pair[0]);
            assert!(rel(pair[1] - pair[0], 2.0 * PI * BW / n as f64) < 1e-9);
        }
    }
}
