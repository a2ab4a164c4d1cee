//! RF-to-dc conversion and the receiver's dc-voltage measurement path.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::signal::{papr, received_rf_power, waveform_moments, EffectiveTones, ToneGrid, DEFAULT_OVERSAMPLING};

/// Truncated diode expansion: z = k2·m2 + k4·m4 and P_DC = alpha·z².
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiodeMomentModel {
    pub k2: f64,
    pub k4: f64,
    pub alpha: f64,
}

impl Default for DiodeMomentModel {
    /// Placeholder coefficients, not fitted to any particular diode.
    fn default() -> Self {
        Self {
            k2: 0.17,
            k4: 19.1,
            alpha: 1.0,
        }
    }
}

impl DiodeMomentModel {
    pub fn new(k2: f64, k4: f64, alpha: f64) -> Result<Self> {
        let model = Self { k2, k4, alpha };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k2 > 0.0 && self.k4 >= 0.0 && self.alpha > 0.0)
            || !(self.k2.is_finite() && self.k4.is_finite() && self.alpha.is_finite())
        {
            return Err(Error::Config(format!(
                "moment model needs k2 > 0, k4 >= 0, alpha > 0 (got {}, {}, {})",
                self.k2, self.k4, self.alpha
            )));
        }
        Ok(())
    }

    /// The dc proxy z = k2·m2 + k4·m4.
    pub fn proxy(&self, tones: &EffectiveTones) -> f64 {
        let m = waveform_moments(tones);
        self.k2 * m.m2 + self.k4 * m.m4
    }
}

/// P_DC = alpha·(k2·m2 + k4·m4)².
pub fn dc_power_moment(model: &DiodeMomentModel, tones: &EffectiveTones) -> f64 {
    let z = model.proxy(tones);
    model.alpha * z * z
}

/// Measured efficiency η(P_RF in dBm, PAPR) on a rectangular grid.
#[derive(Clone, Debug, PartialEq)]
pub struct EfficiencyTableModel {
    powers_dbm: Vec<f64>,
    paprs: Vec<f64>,
    /// Row-major over (power, papr).
    eta: Vec<f64>,
    oversampling: usize,
}

/// Result of a table evaluation; `clamped` is set when the query fell
/// outside the grid on either axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TableEvaluation {
    pub p_dc: f64,
    pub efficiency: f64,
    pub clamped: bool,
}

impl EfficiencyTableModel {
    /// Builds the table from `(p_dbm, papr, eta)` rows in any order. The
    /// rows must cover every combination of the distinct power and PAPR
    /// values exactly once.
    pub fn from_rows(rows: &[(f64, f64, f64)]) -> Result<Self> {
        if rows.iter().any(|r| !(r.0.is_finite() && r.1.is_finite() && r.2.is_finite())) {
            return Err(Error::Config("efficiency table entries must be finite".into()));
        }
        let mut powers: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let mut paprs: Vec<f64> = rows.iter().map(|r| r.1).collect();
        powers.sort_by(f64::total_cmp);
        powers.dedup();
        paprs.sort_by(f64::total_cmp);
        paprs.dedup();
        if powers.len() < 2 || paprs.len() < 2 {
            return Err(Error::Config(format!(
                "efficiency table must be at least 2x2, got {}x{}",
                powers.len(),
                paprs.len()
            )));
        }
        if rows.len() != powers.len() * paprs.len() {
            return Err(Error::Config(format!(
                "efficiency table is not rectangular: {} rows for a {}x{} grid",
                rows.len(),
                powers.len(),
                paprs.len()
            )));
        }
        let mut eta = vec![f64::NAN; rows.len()];
        for &(p, r, e) in rows {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::Config(format!("efficiency {e} at ({p} dBm, papr {r}) outside [0, 1]")));
            }
            let i = powers.binary_search_by(|x| x.total_cmp(&p)).expect("power present");
            let j = paprs.binary_search_by(|x| x.total_cmp(&r)).expect("papr present");
            let slot = &mut eta[i * paprs.len() + j];
            if !slot.is_nan() {
                return Err(Error::Config(format!("duplicate grid point ({p} dBm, papr {r})")));
            }
            *slot = e;
        }
        Ok(Self {
            powers_dbm: powers,
            paprs,
            eta,
            oversampling: DEFAULT_OVERSAMPLING,
        })
    }

    /// Parses comma-separated text with header `p_dbm,papr,eta`.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| Error::parse(1, e.to_string()))?
            .clone();
        if header.iter().collect::<Vec<_>>() != ["p_dbm", "papr", "eta"] {
            return Err(Error::parse(1, "expected header 'p_dbm,papr,eta'"));
        }
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                Error::parse(line, e.to_string())
            })?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            if record.len() != 3 {
                return Err(Error::parse(line, "expected 3 fields"));
            }
            let field = |i: usize, what: &str| -> Result<f64> {
                record[i]
                    .parse()
                    .map_err(|_| Error::parse(line, format!("invalid {what} '{}'", &record[i])))
            };
            rows.push((field(0, "p_dbm")?, field(1, "papr")?, field(2, "eta")?));
        }
        Self::from_rows(&rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }

    pub fn with_oversampling(mut self, oversampling: usize) -> Result<Self> {
        if oversampling < 8 {
            return Err(Error::Config(format!("oversampling must be at least 8, got {oversampling}")));
        }
        self.oversampling = oversampling;
        Ok(self)
    }

    pub fn oversampling(&self) -> usize {
        self.oversampling
    }

    /// Bilinear interpolation of η, clamping each coordinate to the grid.
    pub fn efficiency(&self, p_dbm: f64, papr: f64) -> (f64, bool) {
        let (i, tx, cp) = bracket(&self.powers_dbm, p_dbm);
        let (j, ty, cr) = bracket(&self.paprs, papr);
        let cols = self.paprs.len();
        let e = |a: usize, b: usize| self.eta[a * cols + b];
        let lo = e(i, j) * (1.0 - ty) + e(i, j + 1) * ty;
        let hi = e(i + 1, j) * (1.0 - ty) + e(i + 1, j + 1) * ty;
        (lo * (1.0 - tx) + hi * tx, cp || cr)
    }
}

/// Lower cell index, fractional position within the cell, clamped flag.
fn bracket(axis: &[f64], x: f64) -> (usize, f64, bool) {
    let last = axis.len() - 1;
    if x.is_nan() || x < axis[0] {
        return (0, 0.0, true);
    }
    if x > axis[last] {
        return (last - 1, 1.0, true);
    }
    let i = match axis.binary_search_by(|a| a.total_cmp(&x)) {
        Ok(i) if i == last => return (last - 1, 1.0, false),
        Ok(i) => return (i, 0.0, false),
        Err(i) => i - 1,
    };
    (i, (x - axis[i]) / (axis[i + 1] - axis[i]), false)
}

pub fn watts_to_dbm(p: f64) -> f64 {
    10.0 * (p / 1e-3).log10()
}

/// P_DC = P_RF·η(P_RF in dBm, PAPR). A zero waveform yields zero dc power
/// and is reported as clamped.
pub fn dc_power_table(model: &EfficiencyTableModel, tones: &EffectiveTones, grid: &ToneGrid) -> Result<TableEvaluation> {
    let p_rf = received_rf_power(tones);
    if p_rf == 0.0 {
        let (efficiency, _) = model.efficiency(f64::NEG_INFINITY, model.paprs[0]);
        return Ok(TableEvaluation {
            p_dc: 0.0,
            efficiency,
            clamped: true,
        });
    }
    let ratio = papr(tones, grid, model.oversampling)?;
    let (efficiency, clamped) = model.efficiency(watts_to_dbm(p_rf), ratio);
    Ok(TableEvaluation {
        p_dc: p_rf * efficiency,
        efficiency,
        clamped,
    })
}

/// The rectifier nonlinearity used by the strategies and the protocol.
#[derive(Clone, Debug, PartialEq)]
pub enum RectifierModel {
    Moment(DiodeMomentModel),
    Table(EfficiencyTableModel),
}

impl Default for RectifierModel {
    fn default() -> Self {
        RectifierModel::Moment(DiodeMomentModel::default())
    }
}

impl RectifierModel {
    pub fn dc_power(&self, tones: &EffectiveTones, grid: &ToneGrid) -> Result<f64> {
        match self {
            RectifierModel::Moment(m) => Ok(dc_power_moment(m, tones)),
            RectifierModel::Table(t) => Ok(dc_power_table(t, tones, grid)?.p_dc),
        }
    }

    pub fn as_moment(&self) -> Option<&DiodeMomentModel> {
        match self {
            RectifierModel::Moment(m) => Some(m),
            RectifierModel::Table(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdcConfig {
    pub resolution_bits: u32,
    pub v_ref: f64,
    /// Standard deviation of additive Gaussian noise before quantization, volts.
    pub noise_sigma: f64,
    pub load_resistance: f64,
}

impl Default for AdcConfig {
    fn default() -> Self {
        Self {
            resolution_bits: 12,
            v_ref: 3.3,
            noise_sigma: 0.0,
            load_resistance: 5_000.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdcReading {
    pub code: u32,
    pub volts: f64,
}

impl AdcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=24).contains(&self.resolution_bits) {
            return Err(Error::Config(format!("ADC resolution must be 1..=24 bits, got {}", self.resolution_bits)));
        }
        if !(self.v_ref > 0.0 && self.load_resistance > 0.0 && self.noise_sigma >= 0.0) {
            return Err(Error::Config("ADC needs v_ref > 0, load_resistance > 0, noise_sigma >= 0".into()));
        }
        Ok(())
    }

    pub fn full_scale_code(&self) -> u32 {
        (1u32 << self.resolution_bits) - 1
    }

    /// Converts dc power to a load voltage, adds noise and quantizes.
    /// Rounding is half away from zero, so v_ref/2 at 12 bits maps to 2048.
    /// One standard normal is drawn per call even when `noise_sigma` is 0,
    /// so stream consumption does not depend on the noise level.
    pub fn measure<R: Rng + ?Sized>(&self, p_dc: f64, rng: &mut R) -> Result<AdcReading> {
        if p_dc.is_nan() || p_dc < 0.0 {
            return Err(Error::Domain(format!("dc power must be non-negative, got {p_dc}")));
        }
        let full = self.full_scale_code();
        let v = (p_dc * self.load_resistance).sqrt();
        let noise: f64 = rng.sample(StandardNormal);
        let v_noisy = v + self.noise_sigma * noise;
        let code = (v_noisy / self.v_ref * f64::from(full)).round().clamp(0.0, f64::from(full)) as u32;
        Ok(AdcReading {
            code,
            volts: f64::from(code) * self.v_ref / f64::from(full),
        })
    }
}

pub fn measure_dc<R: Rng + ?Sized>(adc: &AdcConfig, p_dc: f64, rng: &mut R) -> Result<AdcReading> {
    adc.measure(p_dc, rng)
}
