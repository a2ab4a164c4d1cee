//! Transmit strategies: open-loop uniform power, scaled matched filter with
//! full CSI, and the receiver-side codeword choice for limited feedback.

use num_complex::Complex64;

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::signal::{ToneGrid, WaveformWeights};

pub const DEFAULT_BETA: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmfParams {
    pub beta: f64,
    pub power_budget: f64,
}

impl SmfParams {
    pub fn new(beta: f64, power_budget: f64) -> Result<Self> {
        if !(beta >= 1.0 && beta.is_finite()) {
            return Err(Error::Domain(format!("SMF exponent must be >= 1, got {beta}")));
        }
        if !(power_budget > 0.0 && power_budget.is_finite()) {
            return Err(Error::Domain(format!("power budget must be positive, got {power_budget}")));
        }
        Ok(Self { beta, power_budget })
    }
}

/// s_{m,n} = sqrt(2P/(M·N)) on every antenna and tone.
pub fn up_weights(m_antennas: usize, grid: &ToneGrid, power: f64) -> Result<WaveformWeights> {
    let n_tones = grid.n_tones();
    if m_antennas == 0 {
        return Err(Error::Domain("need at least one antenna".into()));
    }
    let amp = (2.0 * power / (m_antennas * n_tones) as f64).sqrt();
    WaveformWeights::new(
        m_antennas,
        n_tones,
        vec![Complex64::new(amp, 0.0); m_antennas * n_tones],
        power,
    )
}

/// s_n = c·‖h_n‖^β·h_nᴴ/‖h_n‖ with c = sqrt(2P / Σ_n ‖h_n‖^(2β)).
/// Tones with zero gain get zero weight.
pub fn smf_weights(channel: &ChannelRealization, params: &SmfParams) -> Result<WaveformWeights> {
    let m_antennas = channel.m_antennas();
    let n_tones = channel.n_tones();
    let norms: Vec<f64> = channel.tone_norms_sqr().into_iter().map(f64::sqrt).collect();
    let total: f64 = norms.iter().map(|&h| h.powf(2.0 * params.beta)).sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateChannel);
    }
    let c = (2.0 * params.power_budget / total).sqrt();
    let mut weights = vec![Complex64::new(0.0, 0.0); m_antennas * n_tones];
    for (n, &norm) in norms.iter().enumerate() {
        if norm == 0.0 {
            continue;
        }
        let scale = c * norm.powf(params.beta - 1.0);
        for m in 0..m_antennas {
            weights[m * n_tones + n] = channel.get(m, n).conj() * scale;
        }
    }
    WaveformWeights::new(m_antennas, n_tones, weights, params.power_budget)
}

/// 1-based index of the largest reading; ties go to the lowest index.
pub fn select_codeword<T: PartialOrd + Copy>(measurements: &[T]) -> Result<usize> {
    let (first, rest) = measurements
        .split_first()
        .ok_or_else(|| Error::Domain("no measurements to select from".into()))?;
    let mut best = (0, *first);
    for (i, &v) in rest.iter().enumerate() {
        if v > best.1 {
            best = (i + 1, v);
        }
    }
    Ok(best.0 + 1)
}

/// ⌈log₂ K⌉, with K = 1 needing no bits.
pub fn feedback_bits(k_codewords: usize) -> u32 {
    assert!(k_codewords >= 1, "codebook must hold at least one codeword");
    usize::BITS - (k_codewords - 1).leading_zeros()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{effective_tones, received_rf_power};

    fn grid(n: usize) -> ToneGrid {
        ToneGrid::new(n, 2.4e9, 10e6).unwrap()
    }

    fn channel(m: usize, n: usize, gains: Vec<Complex64>) -> ChannelRealization {
        ChannelRealization::new(m, grid(n), gains, "test").unwrap()
    }

    #[test]
    fn up_examples() {
        let w = up_weights(2, &grid(2), 1.0).unwrap();
        assert!(w.as_slice().iter().all(|s| (s.re - 0.5f64.sqrt()).abs() < 1e-15 && s.im == 0.0));
        let w = up_weights(1, &grid(1), 1.0).unwrap();
        assert!((w.get(0, 0).re - 2f64.sqrt()).abs() < 1e-15);
        for (m, n, p) in [(3, 5, 0.3), (4, 8, 2.0), (1, 7, 11.0)] {
            let w = up_weights(m, &grid(n), p).unwrap();
            assert!(w.is_on_power_sphere());
        }
    }

    #[test]
    fn smf_unit_and_phase() {
        let params = SmfParams::new(3.0, 1.0).unwrap();
        let w = smf_weights(&channel(1, 1, vec![Complex64::new(1.0, 0.0)]), &params).unwrap();
        assert!((w.get(0, 0) - Complex64::new(2f64.sqrt(), 0.0)).norm() < 1e-15);

        for theta in [0.3, -2.0, 3.1] {
            let ch = channel(1, 1, vec![Complex64::from_polar(1.0, theta)]);
            let w = smf_weights(&ch, &params).unwrap();
            assert!((w.get(0, 0) - Complex64::from_polar(2f64.sqrt(), -theta)).norm() < 1e-14);
            let a = effective_tones(&ch, &w).unwrap().amplitudes()[0];
            assert!((a.re - 2f64.sqrt()).abs() < 1e-14 && a.im.abs() < 1e-14);
        }
    }

    #[test]
    fn smf_mrt_against_grid_search() {
        // Exhaustive search over the relative gain split and phase of the
        // second antenna; MRT is the optimum.
        let h = [Complex64::new(0.4, -0.9), Complex64::new(-1.3, 0.2)];
        let ch = channel(2, 1, h.to_vec());
        let p = 1.5;
        for beta in [1.0, 2.0, 3.0] {
            let w = smf_weights(&ch, &SmfParams::new(beta, p).unwrap()).unwrap();
            let smf = received_rf_power(&effective_tones(&ch, &w).unwrap());
            let mut best = 0.0f64;
            for i in 0..=400 {
                let theta = std::f64::consts::FRAC_PI_2 * i as f64 / 400.0;
                for j in 0..720 {
                    let phi = 2.0 * std::f64::consts::PI * j as f64 / 720.0;
                    let s0 = Complex64::new((2.0 * p).sqrt() * theta.cos(), 0.0);
                    let s1 = Complex64::from_polar((2.0 * p).sqrt() * theta.sin(), phi);
                    let a = h[0] * s0 + h[1] * s1;
                    best = best.max(0.5 * a.norm_sqr());
                }
            }
            let norm_sqr = h[0].norm_sqr() + h[1].norm_sqr();
            assert!((smf - p * norm_sqr).abs() < 1e-12 * smf);
            assert!(smf >= best * (1.0 - 1e-12));
            assert!(best >= smf * (1.0 - 1e-4));
        }
    }

    #[test]
    fn smf_degenerate_channel() {
        let ch = channel(2, 3, vec![Complex64::new(0.0, 0.0); 6]);
        assert!(matches!(
            smf_weights(&ch, &SmfParams::new(3.0, 1.0).unwrap()),
            Err(Error::DegenerateChannel)
        ));
    }

    #[test]
    fn smf_skips_dead_tones() {
        let ch = channel(1, 2, vec![Complex64::new(0.0, 0.0), Complex64::new(0.5, 0.5)]);
        let w = smf_weights(&ch, &SmfParams::new(3.0, 1.0).unwrap()).unwrap();
        assert_eq!(w.get(0, 0), Complex64::new(0.0, 0.0));
        assert!(w.is_on_power_sphere());
    }

    #[test]
    fn smf_params_validation() {
        assert!(SmfParams::new(0.5, 1.0).is_err());
        assert!(SmfParams::new(3.0, 0.0).is_err());
    }

    #[test]
    fn select_examples() {
        assert_eq!(select_codeword(&[1.0, 3.0, 2.0]).unwrap(), 2);
        assert_eq!(select_codeword(&[2.0, 2.0]).unwrap(), 1);
        assert_eq!(select_codeword(&[0.0]).unwrap(), 1);
        assert_eq!(select_codeword(&[5u32, 9, 9, 1]).unwrap(), 2);
        assert!(matches!(select_codeword::<f64>(&[]), Err(Error::Domain(_))));
    }

    #[test]
    fn feedback_bit_counts() {
        let expected = [(1, 0), (2, 1), (3, 2), (4, 2), (8, 3), (16, 4), (32, 5), (33, 6), (64, 6)];
        for (k, b) in expected {
            assert_eq!(feedback_bits(k), b, "K={k}");
        }
    }
}
