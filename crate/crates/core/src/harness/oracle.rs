//! Time-domain check of the closed-form waveform moments.
//!
//! The received signal y(t) = Re{Σ_n a_n e^{jω_n t}} is sampled directly
//! with `cos` over one fundamental period, and E[y²], E[y⁴] are compared
//! with the closed forms. Used by `wptsim oracle moments`.

use num_complex::Complex64;
use rand::Rng;

use crate::channel::{frequency_response, sample_taps, ChannelModelParams};
use crate::error::Result;
use crate::rng::{stream, Purpose, StreamId};
use crate::signal::{effective_tones, waveform_moments, ToneGrid, WaveformWeights};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleReport {
    pub cases: usize,
    pub max_rel_error_m2: f64,
    pub max_rel_error_m4: f64,
}

impl OracleReport {
    pub fn max_rel_error(&self) -> f64 {
        self.max_rel_error_m2.max(self.max_rel_error_m4)
    }
}

/// Time averages of y² and y⁴ with `oversampling` samples per cycle of
/// the highest tone.
pub fn sampled_moments(amplitudes: &[Complex64], grid: &ToneGrid, oversampling: usize) -> (f64, f64) {
    let period = grid.fundamental_period();
    let samples = grid.samples_per_period(oversampling);
    let omegas = grid.angular_frequencies();
    let (mut s2, mut s4) = (0.0, 0.0);
    for i in 0..samples {
        let t = period * i as f64 / samples as f64;
        let y: f64 = amplitudes
            .iter()
            .zip(omegas)
            .map(|(a, w)| a.norm() * (w * t + a.arg()).cos())
            .sum();
        let y2 = y * y;
        s2 += y2;
        s4 += y2 * y2;
    }
    (s2 / samples as f64, s4 / samples as f64)
}

/// Random cases with M ≤ 4 and N ≤ 8 on the 2.4 GHz / 10 MHz grid.
pub fn run_moment_oracle(seed: u64, cases: usize, oversampling: usize) -> Result<OracleReport> {
    let params = ChannelModelParams {
        pathloss_db: 0.0,
        ..Default::default()
    };
    let mut report = OracleReport {
        cases,
        max_rel_error_m2: 0.0,
        max_rel_error_m4: 0.0,
    };
    for case in 0..cases {
        let mut rng = stream(seed, StreamId::new(Purpose::Oracle, case as u32, 0));
        let m = rng.random_range(1..=4usize);
        let n = rng.random_range(1..=8usize);
        let power = rng.random_range(0.1..4.0);
        let grid = ToneGrid::new(n, 2.4e9, 10e6)?;
        let channel = frequency_response(&sample_taps(&params, m, &mut rng), &params, &grid);
        let raw: Vec<Complex64> = (0..m * n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let weights = WaveformWeights::on_power_sphere(m, n, raw, power)?;
        let tones = effective_tones(&channel, &weights)?;
        let closed = waveform_moments(&tones);
        let (m2, m4) = sampled_moments(tones.amplitudes(), &grid, oversampling);
        report.max_rel_error_m2 = report.max_rel_error_m2.max((closed.m2 - m2).abs() / m2);
        report.max_rel_error_m4 = report.max_rel_error_m4.max((closed.m4 - m4).abs() / m4);
    }
    Ok(report)
}
