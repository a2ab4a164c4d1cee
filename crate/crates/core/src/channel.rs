//! Frequency-selective multipath channels from a tapped delay line with
//! i.i.d. Rayleigh taps and an exponential power-delay profile.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, complex_gaussian, mix_seed, Purpose, StreamId};
use crate::signal::ToneGrid;

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelModelParams {
    pub n_taps: usize,
    /// Delay between successive taps, seconds.
    pub tap_spacing: f64,
    /// Per-tap power decay of the delay profile, in (0, 1].
    pub pdp_decay: f64,
    pub pathloss_db: f64,
    pub seed: u64,
}

impl Default for ChannelModelParams {
    fn default() -> Self {
        Self {
            n_taps: 8,
            tap_spacing: 100e-9,
            pdp_decay: 0.7,
            pathloss_db: 60.0,
            seed: 0,
        }
    }
}

impl ChannelModelParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_taps == 0 {
            return Err(Error::Config("channel needs at least one tap".into()));
        }
        if !(self.tap_spacing > 0.0 && self.tap_spacing.is_finite()) {
            return Err(Error::Config(format!("tap spacing must be positive, got {}", self.tap_spacing)));
        }
        if !(self.pdp_decay > 0.0 && self.pdp_decay <= 1.0) {
            return Err(Error::Config(format!("pdp decay must lie in (0, 1], got {}", self.pdp_decay)));
        }
        if !self.pathloss_db.is_finite() {
            return Err(Error::Config("pathloss must be finite".into()));
        }
        Ok(())
    }

    /// Linear power gain 10^(−pathloss/10), the sum of all tap variances.
    pub fn linear_gain(&self) -> f64 {
        10f64.powf(-self.pathloss_db / 10.0)
    }

    /// Variance of each tap, exponentially decaying and summing to
    /// [`linear_gain`](Self::linear_gain).
    pub fn tap_variances(&self) -> Vec<f64> {
        let raw: Vec<f64> = (0..self.n_taps).map(|l| self.pdp_decay.powi(l as i32)).collect();
        let total: f64 = raw.iter().sum();
        let gain = self.linear_gain();
        raw.into_iter().map(|v| v * gain / total).collect()
    }
}

/// M×L complex tap gains, antenna-major.
#[derive(Clone, Debug, PartialEq)]
pub struct TapMatrix {
    m_antennas: usize,
    n_taps: usize,
    taps: Vec<Complex64>,
}

impl TapMatrix {
    pub fn new(m_antennas: usize, n_taps: usize, taps: Vec<Complex64>) -> Result<Self> {
        if taps.len() != m_antennas * n_taps || m_antennas == 0 || n_taps == 0 {
            return Err(Error::Dimension(format!(
                "tap matrix {m_antennas}x{n_taps} with {} entries",
                taps.len()
            )));
        }
        Ok(Self {
            m_antennas,
            n_taps,
            taps,
        })
    }

    pub fn m_antennas(&self) -> usize {
        self.m_antennas
    }

    pub fn n_taps(&self) -> usize {
        self.n_taps
    }

    pub fn get(&self, m: usize, l: usize) -> Complex64 {
        self.taps[m * self.n_taps + l]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.taps
    }
}

/// Draws M×L independent taps. Antennas are drawn in order, so the first
/// M' rows of an M-antenna draw equal an M'-antenna draw from the same
/// stream.
pub fn sample_taps<R: Rng + ?Sized>(params: &ChannelModelParams, m_antennas: usize, rng: &mut R) -> TapMatrix {
    let variances = params.tap_variances();
    let mut taps = Vec::with_capacity(m_antennas * params.n_taps);
    for _ in 0..m_antennas {
        for &v in &variances {
            taps.push(complex_gaussian(rng, v));
        }
    }
    TapMatrix {
        m_antennas,
        n_taps: params.n_taps,
        taps,
    }
}

/// Per-tone gains h_{m,n} for one transmitter placement.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    m_antennas: usize,
    grid: ToneGrid,
    gains: Vec<Complex64>,
    location_label: String,
}

impl ChannelRealization {
    pub fn new(
        m_antennas: usize,
        grid: ToneGrid,
        gains: Vec<Complex64>,
        location_label: impl Into<String>,
    ) -> Result<Self> {
        if m_antennas == 0 || gains.len() != m_antennas * grid.n_tones() {
            return Err(Error::Dimension(format!(
                "{} gains for M={m_antennas}, N={}",
                gains.len(),
                grid.n_tones()
            )));
        }
        if gains.iter().any(|h| !h.re.is_finite() || !h.im.is_finite()) {
            return Err(Error::Domain("channel gains must be finite".into()));
        }
        Ok(Self {
            m_antennas,
            grid,
            gains,
            location_label: location_label.into(),
        })
    }

    pub fn m_antennas(&self) -> usize {
        self.m_antennas
    }

    pub fn n_tones(&self) -> usize {
        self.grid.n_tones()
    }

    pub fn grid(&self) -> &ToneGrid {
        &self.grid
    }

    pub fn location_label(&self) -> &str {
        &self.location_label
    }

    /// Gains antenna-major, index `m * N + n`.
    pub fn gains(&self) -> &[Complex64] {
        &self.gains
    }

    pub fn get(&self, m: usize, n: usize) -> Complex64 {
        self.gains[m * self.n_tones() + n]
    }

    /// h_n across antennas.
    pub fn tone_vector(&self, n: usize) -> Vec<Complex64> {
        (0..self.m_antennas).map(|m| self.get(m, n)).collect()
    }

    /// ‖h_n‖² for every tone.
    pub fn tone_norms_sqr(&self) -> Vec<f64> {
        (0..self.n_tones())
            .map(|n| (0..self.m_antennas).map(|m| self.get(m, n).norm_sqr()).sum())
            .collect()
    }

    /// Multiplies every gain by `factor`.
    pub fn scaled(&self, factor: Complex64) -> Self {
        Self {
            gains: self.gains.iter().map(|h| h * factor).collect(),
            ..self.clone()
        }
    }

    /// Text form: a header line
    /// `wptch v1 M N center_hz bandwidth_hz label`, then one line
    /// `m n real imag` per gain with 1-based indices, antenna-major.
    /// Floats are written in shortest round-trip form.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "wptch v1 {} {} {:e} {:e} {}",
            self.m_antennas,
            self.n_tones(),
            self.grid.center_frequency(),
            self.grid.bandwidth(),
            self.location_label
        );
        for m in 0..self.m_antennas {
            for n in 0..self.n_tones() {
                let h = self.get(m, n);
                let _ = writeln!(out, "{} {} {:e} {:e}", m + 1, n + 1, h.re, h.im);
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "empty channel file"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() < 6 || fields[0] != "wptch" {
            return Err(Error::parse(1, "expected header 'wptch v1 M N center_hz bandwidth_hz [label]'"));
        }
        if fields[1] != "v1" {
            return Err(Error::parse(1, format!("unsupported channel file version {}", fields[1])));
        }
        let m: usize = parse_field(1, fields[2], "M")?;
        let n: usize = parse_field(1, fields[3], "N")?;
        let fc: f64 = parse_field(1, fields[4], "center frequency")?;
        let bw: f64 = parse_field(1, fields[5], "bandwidth")?;
        let label = fields.get(6).copied().unwrap_or("").to_string();
        let grid = ToneGrid::new(n, fc, bw).map_err(|e| Error::parse(1, e.to_string()))?;

        let mut gains = Vec::with_capacity(m * n);
        for mi in 0..m {
            for ni in 0..n {
                let (line_no, line) = lines
                    .next()
                    .ok_or_else(|| Error::parse(2 + mi * n + ni, "unexpected end of file"))?;
                gains.push(parse_entry(line_no, line, mi, ni)?);
            }
        }
        if let Some((line_no, extra)) = lines.find(|(_, l)| !l.is_empty()) {
            return Err(Error::parse(line_no, format!("trailing content '{extra}'")));
        }
        ChannelRealization::new(m, grid, gains, label)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

pub(crate) fn parse_field<T: std::str::FromStr>(line: usize, s: &str, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::parse(line, format!("invalid {what} '{s}'")))
}

/// Parses `m n real imag` and checks the 1-based indices against the
/// expected position.
pub(crate) fn parse_entry(line_no: usize, line: &str, m: usize, n: usize) -> Result<Complex64> {
    let f: Vec<&str> = line.split_whitespace().collect();
    if f.len() != 4 {
        return Err(Error::parse(line_no, format!("expected 'm n real imag', got '{line}'")));
    }
    let mi: usize = parse_field(line_no, f[0], "antenna index")?;
    let ni: usize = parse_field(line_no, f[1], "tone index")?;
    if mi != m + 1 || ni != n + 1 {
        return Err(Error::parse(
            line_no,
            format!("expected entry ({}, {}), found ({mi}, {ni})", m + 1, n + 1),
        ));
    }
    let re: f64 = parse_field(line_no, f[2], "real part")?;
    let im: f64 = parse_field(line_no, f[3], "imaginary part")?;
    Ok(Complex64::new(re, im))
}

/// h_{m,n} = Σ_l taps[m,l]·e^{−jω_n·l·tap_spacing}.
pub fn frequency_response(taps: &TapMatrix, params: &ChannelModelParams, grid: &ToneGrid) -> ChannelRealization {
    let n_tones = grid.n_tones();
    let mut gains = Vec::with_capacity(taps.m_antennas * n_tones);
    for m in 0..taps.m_antennas {
        for &w in grid.angular_frequencies() {
            let h = (0..taps.n_taps)
                .map(|l| taps.get(m, l) * Complex64::from_polar(1.0, -w * l as f64 * params.tap_spacing))
                .sum();
            gains.push(h);
        }
    }
    ChannelRealization {
        m_antennas: taps.m_antennas,
        grid: grid.clone(),
        gains,
        location_label: String::new(),
    }
}

/// A transmitter placement: a label plus the channel parameters it draws from.
#[derive(Clone, Debug, PartialEq)]
pub struct Location {
    pub label: String,
    pub params: ChannelModelParams,
}

impl Location {
    /// Channel seen at this location on `frame`. The taps come from the
    /// stream (location seed, Taps, 0, frame), so every sweep point sees
    /// the same draw for a given location and frame.
    pub fn realize(&self, m_antennas: usize, grid: &ToneGrid, frame: u32) -> ChannelRealization {
        let mut rng = rng::stream(self.params.seed, StreamId::new(Purpose::Taps, 0, frame));
        let taps = sample_taps(&self.params, m_antennas, &mut rng);
        let mut ch = frequency_response(&taps, &self.params, grid);
        ch.location_label = self.label.clone();
        ch
    }
}

/// `count` locations labeled L1..Lcount. Pathlosses are drawn uniformly in
/// `pathloss_range_db` from the (base_seed, Locations) stream; location i
/// (1-based) gets seed `mix_seed(base_seed, i)`.
pub fn make_locations(
    count: usize,
    base_seed: u64,
    template: &ChannelModelParams,
    pathloss_range_db: (f64, f64),
) -> Result<Vec<Location>> {
    let (lo, hi) = pathloss_range_db;
    if count == 0 {
        return Err(Error::Domain("need at least one location".into()));
    }
    if !(lo <= hi) {
        return Err(Error::Domain(format!("pathloss range ({lo}, {hi}) is empty")));
    }
    let mut rng = rng::stream(base_seed, StreamId::new(Purpose::Locations, 0, 0));
    Ok((1..=count)
        .map(|i| {
            let u: f64 = rng.random();
            let pathloss_db = if lo == hi { lo } else { lo + (hi - lo) * u };
            Location {
                label: format!("L{i}"),
                params: ChannelModelParams {
                    pathloss_db,
                    seed: mix_seed(base_seed, i as u64),
                    ..template.clone()
                },
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn params(n_taps: usize, pathloss_db: f64) -> ChannelModelParams {
        ChannelModelParams {
            n_taps,
            pathloss_db,
            ..Default::default()
        }
    }

    #[test]
    fn unit_tap_variance() {
        let p = params(1, 0.0);
        let mut rng = stream(5, StreamId::new(Purpose::Oracle, 0, 0));
        let n = 100_000;
        let var: f64 = (0..n).map(|_| sample_taps(&p, 1, &mut rng).get(0, 0).norm_sqr()).sum::<f64>() / n as f64;
        assert!((0.98..=1.02).contains(&var), "{var}");
    }

    #[test]
    fn pathloss_scales_total_tap_power() {
        let p = params(4, 20.0);
        let mut rng = stream(6, StreamId::new(Purpose::Oracle, 0, 0));
        let n = 100_000;
        let total: f64 = (0..n)
            .map(|_| sample_taps(&p, 1, &mut rng).as_slice().iter().map(|t| t.norm_sqr()).sum::<f64>())
            .sum::<f64>()
            / n as f64;
        assert!((total / 0.01 - 1.0).abs() < 0.02, "{total}");
        assert!((p.tap_variances().iter().sum::<f64>() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn taps_are_deterministic() {
        let p = params(8, 60.0);
        let a = sample_taps(&p, 4, &mut stream(9, StreamId::new(Purpose::Taps, 1, 2)));
        let b = sample_taps(&p, 4, &mut stream(9, StreamId::new(Purpose::Taps, 1, 2)));
        assert_eq!(a, b);
        let two = sample_taps(&p, 2, &mut stream(9, StreamId::new(Purpose::Taps, 1, 2)));
        assert_eq!(&a.as_slice()[..16], two.as_slice());
    }

    #[test]
    fn single_tap_is_flat() {
        let g = ToneGrid::new(8, 2.4e9, 10e6).unwrap();
        let p = params(1, 0.0);
        let tap = Complex64::new(0.3, -0.8);
        let ch = frequency_response(&TapMatrix::new(1, 1, vec![tap]).unwrap(), &p, &g);
        assert!(ch.gains().iter().all(|&h| h == tap));
    }

    #[test]
    fn pure_delay_tap() {
        let g = ToneGrid::new(4, 2.4e9, 10e6).unwrap();
        let p = params(2, 0.0);
        let tap = Complex64::new(0.6, 0.8);
        let taps = TapMatrix::new(1, 2, vec![Complex64::new(0.0, 0.0), tap]).unwrap();
        let ch = frequency_response(&taps, &p, &g);
        for (n, &w) in g.angular_frequencies().iter().enumerate() {
            let h = ch.get(0, n);
            assert!((h.norm() - 1.0).abs() < 1e-12);
            let expected = tap * Complex64::from_polar(1.0, -w * p.tap_spacing);
            assert!((h - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn locations_labels_and_determinism() {
        let t = ChannelModelParams::default();
        let locs = make_locations(15, 7, &t, (55.0, 70.0)).unwrap();
        let labels: Vec<_> = locs.iter().map(|l| l.label.as_str()).collect();
        assert_eq!(labels.first(), Some(&"L1"));
        assert_eq!(labels.last(), Some(&"L15"));
        assert_eq!(labels.len(), 15);
        assert!(locs.iter().all(|l| (55.0..=70.0).contains(&l.params.pathloss_db)));
        assert_eq!(locs, make_locations(15, 7, &t, (55.0, 70.0)).unwrap());

        let one = make_locations(1, 3, &t, (62.5, 62.5)).unwrap();
        assert_eq!(one[0].params.pathloss_db, 62.5);
        assert!(make_locations(0, 3, &t, (1.0, 2.0)).is_err());
        assert!(make_locations(2, 3, &t, (3.0, 2.0)).is_err());
    }

    #[test]
    fn text_round_trip_and_errors() {
        let g = ToneGrid::new(4, 2.4e9, 10e6).unwrap();
        let loc = &make_locations(1, 11, &ChannelModelParams::default(), (60.0, 60.0)).unwrap()[0];
        let ch = loc.realize(2, &g, 0);
        let back = ChannelRealization::from_text(&ch.to_text()).unwrap();
        assert_eq!(back, ch);

        let text = ch.to_text();
        let truncated: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
        assert!(matches!(ChannelRealization::from_text(&truncated), Err(Error::Parse { line: 6, .. })));
        let bad = text.replacen("wptch v1", "wptch v9", 1);
        assert!(matches!(ChannelRealization::from_text(&bad), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn params_validation() {
        assert!(ChannelModelParams::default().validate().is_ok());
        assert!(params(0, 0.0).validate().is_err());
        assert!(ChannelModelParams { pdp_decay: 0.0, ..Default::default() }.validate().is_err());
        assert!(ChannelModelParams { pdp_decay: 1.5, ..Default::default() }.validate().is_err());
        assert!(ChannelModelParams { tap_spacing: 0.0, ..Default::default() }.validate().is_err());
    }
}
