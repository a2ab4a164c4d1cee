//! Tone grid, transmit weights and closed-form evaluation of the received
//! multi-sine waveform.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};

/// Relative slack allowed on the transmit power constraint.
pub const POWER_TOLERANCE: f64 = 1e-9;

/// Default oversampling of time-domain evaluations, relative to the
/// highest tone frequency.
pub const DEFAULT_OVERSAMPLING: usize = 32;

/// N tones centered on `center_frequency`, spaced by Δf = B/N.
#[derive(Clone, Debug, PartialEq)]
pub struct ToneGrid {
    n_tones: usize,
    center_frequency: f64,
    bandwidth: f64,
    angular_frequencies: Vec<f64>,
}

impl ToneGrid {
    pub fn new(n_tones: usize, center_frequency: f64, bandwidth: f64) -> Result<Self> {
        if n_tones == 0 {
            return Err(Error::Domain("tone grid needs at least one tone".into()));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::Domain(format!("bandwidth must be positive, got {bandwidth}")));
        }
        if !(center_frequency.is_finite() && center_frequency >= 0.0) {
            return Err(Error::Domain(format!(
                "center frequency must be finite and non-negative, got {center_frequency}"
            )));
        }
        let gap = bandwidth / n_tones as f64;
        let mid = (n_tones as f64 - 1.0) / 2.0;
        let angular_frequencies: Vec<f64> = (0..n_tones)
            .map(|n| 2.0 * PI * (center_frequency + (n as f64 - mid) * gap))
            .collect();
        if angular_frequencies[0] < 0.0 {
            return Err(Error::Domain("lowest tone frequency is negative".into()));
        }
        Ok(Self {
            n_tones,
            center_frequency,
            bandwidth,
            angular_frequencies,
        })
    }

    pub fn n_tones(&self) -> usize {
        self.n_tones
    }

    pub fn center_frequency(&self) -> f64 {
        self.center_frequency
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Δf = B/N in Hz.
    pub fn tone_gap(&self) -> f64 {
        self.bandwidth / self.n_tones as f64
    }

    /// ω_n in rad/s, strictly increasing.
    pub fn angular_frequencies(&self) -> &[f64] {
        &self.angular_frequencies
    }

    /// Period over which all time averages are taken: 1/Δf.
    pub fn fundamental_period(&self) -> f64 {
        1.0 / self.tone_gap()
    }

    pub fn highest_frequency(&self) -> f64 {
        self.angular_frequencies[self.n_tones - 1] / (2.0 * PI)
    }

    /// Number of uniform samples covering one fundamental period at
    /// `oversampling` times the highest tone frequency.
    pub fn samples_per_period(&self, oversampling: usize) -> usize {
        let cycles = self.highest_frequency() * self.fundamental_period();
        ((cycles * oversampling as f64).ceil() as usize).max(oversampling)
    }
}

/// Complex weights s_{m,n} for M antennas and N tones, stored antenna-major
/// (index `m * N + n`), plus the power budget P they were built for.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveformWeights {
    m_antennas: usize,
    n_tones: usize,
    weights: Vec<Complex64>,
    power_budget: f64,
}

impl WaveformWeights {
    /// Checks dimensions and (1/2)·‖s‖² ≤ P.
    pub fn new(
        m_antennas: usize,
        n_tones: usize,
        weights: Vec<Complex64>,
        power_budget: f64,
    ) -> Result<Self> {
        if m_antennas == 0 || n_tones == 0 {
            return Err(Error::Dimension("M and N must be positive".into()));
        }
        if weights.len() != m_antennas * n_tones {
            return Err(Error::Dimension(format!(
                "expected {} weights for M={m_antennas}, N={n_tones}, got {}",
                m_antennas * n_tones,
                weights.len()
            )));
        }
        if !(power_budget > 0.0 && power_budget.is_finite()) {
            return Err(Error::Domain(format!("power budget must be positive, got {power_budget}")));
        }
        if weights.iter().any(|w| !w.re.is_finite() || !w.im.is_finite()) {
            return Err(Error::Domain("weights must be finite".into()));
        }
        let w = Self {
            m_antennas,
            n_tones,
            weights,
            power_budget,
        };
        let p = w.transmit_power();
        if p > power_budget * (1.0 + POWER_TOLERANCE) {
            return Err(Error::Domain(format!(
                "transmit power {p} exceeds budget {power_budget}"
            )));
        }
        Ok(w)
    }

    /// Rescales `raw` onto the power sphere (1/2)·‖s‖² = P.
    pub fn on_power_sphere(
        m_antennas: usize,
        n_tones: usize,
        mut raw: Vec<Complex64>,
        power_budget: f64,
    ) -> Result<Self> {
        let norm_sqr: f64 = raw.iter().map(|w| w.norm_sqr()).sum();
        if !(norm_sqr > 0.0 && norm_sqr.is_finite()) {
            return Err(Error::Domain("cannot project a zero or non-finite vector onto the power sphere".into()));
        }
        let scale = (2.0 * power_budget / norm_sqr).sqrt();
        for w in &mut raw {
            *w *= scale;
        }
        Self::new(m_antennas, n_tones, raw, power_budget)
    }

    pub fn zeros(m_antennas: usize, n_tones: usize, power_budget: f64) -> Result<Self> {
        Self::new(
            m_antennas,
            n_tones,
            vec![Complex64::new(0.0, 0.0); m_antennas * n_tones],
            power_budget,
        )
    }

    pub fn m_antennas(&self) -> usize {
        self.m_antennas
    }

    pub fn n_tones(&self) -> usize {
        self.n_tones
    }

    pub fn power_budget(&self) -> f64 {
        self.power_budget
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.weights
    }

    pub fn get(&self, m: usize, n: usize) -> Complex64 {
        self.weights[m * self.n_tones + n]
    }

    /// Weights of antenna `m` across all tones.
    pub fn antenna(&self, m: usize) -> &[Complex64] {
        &self.weights[m * self.n_tones..(m + 1) * self.n_tones]
    }

    /// (1/2)·‖s‖².
    pub fn transmit_power(&self) -> f64 {
        0.5 * self.weights.iter().map(|w| w.norm_sqr()).sum::<f64>()
    }

    /// True when the constraint holds with equality within [`POWER_TOLERANCE`].
    pub fn is_on_power_sphere(&self) -> bool {
        ((self.transmit_power() - self.power_budget) / self.power_budget).abs() <= POWER_TOLERANCE
    }
}

/// Effective complex amplitude a_n = Σ_m h_{m,n}·s_{m,n} of each tone at
/// the receiver.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveTones {
    amplitudes: Vec<Complex64>,
}

impl EffectiveTones {
    pub fn new(amplitudes: Vec<Complex64>) -> Self {
        Self { amplitudes }
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.amplitudes.iter().all(|a| a.norm_sqr() == 0.0)
    }
}

/// Second and fourth time-averaged moments of the received waveform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments {
    pub m2: f64,
    pub m4: f64,
}

fn check_grid(n: usize, grid: &ToneGrid) -> Result<()> {
    if n != grid.n_tones() {
        return Err(Error::Dimension(format!(
            "{n} tones against a grid of {}",
            grid.n_tones()
        )));
    }
    Ok(())
}

/// x_m(t) = Re{ Σ_n s_{m,n}·e^{jω_n t} } for the antenna `antenna` (0-based).
pub fn synthesize_transmit_waveform(
    weights: &WaveformWeights,
    grid: &ToneGrid,
    antenna: usize,
    times: &[f64],
) -> Result<Vec<f64>> {
    check_grid(weights.n_tones(), grid)?;
    if antenna >= weights.m_antennas() {
        return Err(Error::Domain(format!(
            "antenna index {antenna} out of range for M={}",
            weights.m_antennas()
        )));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::Domain("time points must be finite".into()));
    }
    Ok(synthesize(weights.antenna(antenna), grid, times))
}

/// Re{ Σ_n a_n·e^{jω_n t} } at each time point.
pub fn synthesize(amplitudes: &[Complex64], grid: &ToneGrid, times: &[f64]) -> Vec<f64> {
    times
        .iter()
        .map(|&t| {
            amplitudes
                .iter()
                .zip(grid.angular_frequencies())
                .map(|(a, &w)| (a * Complex64::from_polar(1.0, w * t)).re)
                .sum()
        })
        .collect()
}

/// a_n = Σ_m h_{m,n}·s_{m,n}.
pub fn effective_tones(
    channel: &ChannelRealization,
    weights: &WaveformWeights,
) -> Result<EffectiveTones> {
    if channel.m_antennas() != weights.m_antennas() || channel.n_tones() != weights.n_tones() {
        return Err(Error::Dimension(format!(
            "channel is {}x{}, weights are {}x{}",
            channel.m_antennas(),
            channel.n_tones(),
            weights.m_antennas(),
            weights.n_tones()
        )));
    }
    Ok(effective_tones_raw(
        channel.gains(),
        weights.as_slice(),
        weights.m_antennas(),
        weights.n_tones(),
    ))
}

pub(crate) fn effective_tones_raw(
    gains: &[Complex64],
    weights: &[Complex64],
    m_antennas: usize,
    n_tones: usize,
) -> EffectiveTones {
    let mut amplitudes = vec![Complex64::new(0.0, 0.0); n_tones];
    for m in 0..m_antennas {
        let row = m * n_tones..(m + 1) * n_tones;
        for ((a, h), s) in amplitudes.iter_mut().zip(&gains[row.clone()]).zip(&weights[row]) {
            *a += h * s;
        }
    }
    EffectiveTones::new(amplitudes)
}

/// P_RF = (1/2)·Σ_n |a_n|².
pub fn received_rf_power(tones: &EffectiveTones) -> f64 {
    0.5 * tones.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>()
}

/// b_s = Σ_{n1+n2=s} a_{n1}·a_{n2}, for s = 0..2N-1.
pub(crate) fn self_convolution(a: &[Complex64]) -> Vec<Complex64> {
    let n = a.len();
    let mut b = vec![Complex64::new(0.0, 0.0); (2 * n).saturating_sub(1)];
    for (i, ai) in a.iter().enumerate() {
        for (j, aj) in a.iter().enumerate() {
            b[i + j] += ai * aj;
        }
    }
    b
}

/// Closed-form time averages of y(t)² and y(t)⁴.
///
/// m2 = (1/2)·Σ|a_n|² and m4 = (3/8)·Σ_{n1+n2=n3+n4} a_{n1}a_{n2}a*_{n3}a*_{n4}.
/// The quadruple sum is evaluated as (3/8)·Σ_s |b_s|² with b the
/// self-convolution of the amplitudes, which is the same sum grouped by
/// s = n1+n2 and is real by construction. Valid for uniformly spaced tones
/// whose carrier exceeds the bandwidth.
pub fn waveform_moments(tones: &EffectiveTones) -> Moments {
    let m2 = received_rf_power(tones);
    let m4 = 0.375
        * self_convolution(&tones.amplitudes)
            .iter()
            .map(|b| b.norm_sqr())
            .sum::<f64>();
    Moments { m2, m4 }
}

/// Peak-to-average power ratio of y(t) over one fundamental period,
/// sampled at `oversampling` times the highest tone frequency.
pub fn papr(tones: &EffectiveTones, grid: &ToneGrid, oversampling: usize) -> Result<f64> {
    check_grid(tones.len(), grid)?;
    if oversampling < 8 {
        return Err(Error::Domain(format!("oversampling must be at least 8, got {oversampling}")));
    }
    if tones.is_zero() {
        return Err(Error::UndefinedRatio("PAPR of a zero waveform"));
    }
    let samples = grid.samples_per_period(oversampling);
    let dt = grid.fundamental_period() / samples as f64;

    // Each tone's phasor is advanced by a fixed rotation per sample and
    // re-anchored exactly every 256 samples to bound accumulated error.
    let steps: Vec<Complex64> = grid
        .angular_frequencies()
        .iter()
        .map(|&w| Complex64::from_polar(1.0, w * dt))
        .collect();
    let mut phasors = tones.amplitudes.clone();
    let mut peak = 0.0f64;
    let mut total = 0.0f64;
    for k in 0..samples {
        if k % 256 == 0 {
            let t = k as f64 * dt;
            for ((p, a), &w) in phasors.iter_mut().zip(&tones.amplitudes).zip(grid.angular_frequencies()) {
                *p = a * Complex64::from_polar(1.0, w * t);
            }
        }
        let y: f64 = phasors.iter().map(|p| p.re).sum();
        let y2 = y * y;
        peak = peak.max(y2);
        total += y2;
        for (p, r) in phasors.iter_mut().zip(&steps) {
            *p *= r;
        }
    }
    let mean = total / samples as f64;
    Ok(peak / mean)
}
