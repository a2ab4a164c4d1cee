//! Campaign configuration, read from a TOML file.
//!
//! Every section and key is optional except `seed`; omitted values take
//! the defaults below. Unknown keys are rejected.
//!
//! ```toml
//! seed = 1                     # required
//! threads = 4                  # optional worker count, results do not depend on it
//!
//! [sweep]
//! strategies = ["UP", "SMF", "LIMITED"]
//! antennas = [1, 2, 4]
//! tones = [1, 2, 4, 8]
//! codebook_sizes = [2, 4, 8, 16, 32, 64]   # powers of two
//!
//! [signal]
//! center_frequency_hz = 2.4e9
//! bandwidth_hz = 10e6
//! power_w = 2.0
//!
//! [channel]
//! n_taps = 8
//! tap_spacing_s = 100e-9
//! pdp_decay = 0.7
//! resample_per_frame = true    # false: frame 0's channel is reused
//!
//! [locations]
//! count = 15
//! pathloss_min_db = 55.0
//! pathloss_max_db = 70.0
//! frames = 4                   # frames per location
//!
//! [frame]
//! t_s = 0.010
//! t_frame = 2.0
//!
//! [rectifier]
//! model = "moment"             # or "table"
//! k2 = 0.17
//! k4 = 19.1
//! alpha = 1.0
//! table = "eff.csv"            # table model only, relative to the config file
//! oversampling = 32
//!
//! [adc]
//! enabled = false              # false: the receiver compares raw dc power
//! bits = 12
//! v_ref = 3.3
//! noise_sigma = 0.0
//! load_ohms = 5000.0
//!
//! [link]
//! delivery_probability = 1.0
//! latency_s = 0.0
//!
//! [smf]
//! beta = 3.0
//!
//! [codebook]
//! kind = "trained"             # "trained", "random" or "file"
//! training_channels = 1000
//! iters = 30
//! ascent_steps = 8
//! path = "book.txt"            # kind = "file" only
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::channel::ChannelModelParams;
use crate::error::{Error, Result};
use crate::rectenna::{AdcConfig, DiodeMomentModel, EfficiencyTableModel, RectifierModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Deserialize)]
pub enum Strategy {
    // Variant order is the CSV sort order (lexicographic by name).
    #[serde(rename = "LIMITED")]
    Limited,
    #[serde(rename = "SMF")]
    Smf,
    #[serde(rename = "UP")]
    Up,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Limited => "LIMITED",
            Strategy::Smf => "SMF",
            Strategy::Up => "UP",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "LIMITED" => Some(Strategy::Limited),
            "SMF" => Some(Strategy::Smf),
            "UP" => Some(Strategy::Up),
            _ => None,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub strategies: Vec<Strategy>,
    pub antennas: Vec<usize>,
    pub tones: Vec<usize>,
    pub codebook_sizes: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            strategies: vec![Strategy::Up, Strategy::Smf, Strategy::Limited],
            antennas: vec![1, 2, 4],
            tones: vec![1, 2, 4, 8],
            codebook_sizes: vec![2, 4, 8, 16, 32, 64],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignalConfig {
    pub center_frequency_hz: f64,
    pub bandwidth_hz: f64,
    pub power_w: f64,
}

impl Default for SignalConfig {
    fn default() -> Self {
        Self {
            center_frequency_hz: 2.4e9,
            bandwidth_hz: 10e6,
            power_w: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub n_taps: usize,
    pub tap_spacing_s: f64,
    pub pdp_decay: f64,
    pub resample_per_frame: bool,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        let p = ChannelModelParams::default();
        Self {
            n_taps: p.n_taps,
            tap_spacing_s: p.tap_spacing,
            pdp_decay: p.pdp_decay,
            resample_per_frame: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocationsConfig {
    pub count: usize,
    pub pathloss_min_db: f64,
    pub pathloss_max_db: f64,
    pub frames: u32,
}

impl Default for LocationsConfig {
    fn default() -> Self {
        Self {
            count: 15,
            pathloss_min_db: 55.0,
            pathloss_max_db: 70.0,
            frames: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrameSection {
    pub t_s: f64,
    pub t_frame: f64,
}

impl Default for FrameSection {
    fn default() -> Self {
        Self {
            t_s: 0.010,
            t_frame: 2.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RectifierKind {
    Moment,
    Table,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RectifierConfig {
    pub model: RectifierKind,
    pub k2: f64,
    pub k4: f64,
    pub alpha: f64,
    pub table: Option<PathBuf>,
    pub oversampling: usize,
}

impl Default for RectifierConfig {
    fn default() -> Self {
        let d = DiodeMomentModel::default();
        Self {
            model: RectifierKind::Moment,
            k2: d.k2,
            k4: d.k4,
            alpha: d.alpha,
            table: None,
            oversampling: crate::signal::DEFAULT_OVERSAMPLING,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdcSection {
    pub enabled: bool,
    pub bits: u32,
    pub v_ref: f64,
    pub noise_sigma: f64,
    pub load_ohms: f64,
}

impl Default for AdcSection {
    fn default() -> Self {
        let a = AdcConfig::default();
        Self {
            enabled: false,
            bits: a.resolution_bits,
            v_ref: a.v_ref,
            noise_sigma: a.noise_sigma,
            load_ohms: a.load_resistance,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkSection {
    pub delivery_probability: f64,
    pub latency_s: f64,
}

impl Default for LinkSection {
    fn default() -> Self {
        Self {
            delivery_probability: 1.0,
            latency_s: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmfSection {
    pub beta: f64,
}

impl Default for SmfSection {
    fn default() -> Self {
        Self { beta: 3.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodebookKind {
    Trained,
    Random,
    File,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodebookSection {
    pub kind: CodebookKind,
    pub training_channels: usize,
    pub iters: usize,
    pub ascent_steps: usize,
    pub path: Option<PathBuf>,
}

impl Default for CodebookSection {
    fn default() -> Self {
        Self {
            kind: CodebookKind::Trained,
            training_channels: 1000,
            iters: 30,
            ascent_steps: 8,
            path: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub seed: u64,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub signal: SignalConfig,
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default)]
    pub locations: LocationsConfig,
    #[serde(default)]
    pub frame: FrameSection,
    #[serde(default)]
    pub rectifier: RectifierConfig,
    #[serde(default)]
    pub adc: AdcSection,
    #[serde(default)]
    pub link: LinkSection,
    #[serde(default)]
    pub smf: SmfSection,
    #[serde(default)]
    pub codebook: CodebookSection,
}

impl CampaignConfig {
    /// All defaults with the given seed.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            threads: None,
            sweep: SweepConfig::default(),
            signal: SignalConfig::default(),
            channel: ChannelConfig::default(),
            locations: LocationsConfig::default(),
            frame: FrameSection::default(),
            rectifier: RectifierConfig::default(),
            adc: AdcSection::default(),
            link: LinkSection::default(),
            smf: SmfSection::default(),
            codebook: CodebookSection::default(),
        }
    }

    /// Parses TOML. Errors carry the line and column of the offending key.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: CampaignConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map_or(0, |span| text[..span.start.min(text.len())].matches('\n').count() + 1);
            Error::parse(line, e.message().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file; relative `table` and `path` entries resolve
    /// against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut config = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for p in [&mut config.rectifier.table, &mut config.codebook.path].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.sweep;
        if s.strategies.is_empty() || s.antennas.is_empty() || s.tones.is_empty() {
            return Err(Error::Config("sweep axes must not be empty".into()));
        }
        if s.strategies.contains(&Strategy::Limited) && s.codebook_sizes.is_empty() {
            return Err(Error::Config("LIMITED strategy needs at least one codebook size".into()));
        }
        if let Some(&k) = s.codebook_sizes.iter().find(|k| !k.is_power_of_two()) {
            return Err(Error::Config(format!("codebook size {k} is not a power of two")));
        }
        if s.antennas.contains(&0) || s.tones.contains(&0) {
            return Err(Error::Config("antenna and tone counts must be positive".into()));
        }
        if self.locations.count == 0 || self.locations.frames == 0 {
            return Err(Error::Config("need at least one location and one frame".into()));
        }
        if !(self.locations.pathloss_min_db <= self.locations.pathloss_max_db) {
            return Err(Error::Config("pathloss_min_db exceeds pathloss_max_db".into()));
        }
        if !(self.signal.power_w > 0.0) {
            return Err(Error::Config("power_w must be positive".into()));
        }
        if !(self.smf.beta >= 1.0) {
            return Err(Error::Config(format!("smf.beta must be >= 1, got {}", self.smf.beta)));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        self.channel_template().validate()?;
        for &k in &s.codebook_sizes {
            crate::protocol::FrameConfig::new(self.frame.t_s, self.frame.t_frame, k)?;
        }
        crate::protocol::LinkModel::new(self.link.delivery_probability, self.link.latency_s)?;
        if self.adc.enabled {
            self.adc_config().validate()?;
        }
        match self.rectifier.model {
            RectifierKind::Moment => self.moment_model().validate()?,
            RectifierKind::Table if self.rectifier.table.is_none() => {
                return Err(Error::Config("rectifier.model = \"table\" needs rectifier.table".into()))
            }
            RectifierKind::Table => {}
        }
        if s.strategies.contains(&Strategy::Limited) {
            match self.codebook.kind {
                CodebookKind::Trained => {
                    if self.rectifier.model != RectifierKind::Moment {
                        return Err(Error::Config("codebook training requires the moment rectifier model".into()));
                    }
                    let k_max = s.codebook_sizes.iter().copied().max().unwrap_or(1);
                    if self.codebook.training_channels < k_max || self.codebook.iters == 0 {
                        return Err(Error::Config(format!(
                            "training needs at least {k_max} channels and one iteration"
                        )));
                    }
                }
                CodebookKind::File if self.codebook.path.is_none() => {
                    return Err(Error::Config("codebook.kind = \"file\" needs codebook.path".into()))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn channel_template(&self) -> ChannelModelParams {
        ChannelModelParams {
            n_taps: self.channel.n_taps,
            tap_spacing: self.channel.tap_spacing_s,
            pdp_decay: self.channel.pdp_decay,
            pathloss_db: 0.5 * (self.locations.pathloss_min_db + self.locations.pathloss_max_db),
            seed: self.seed,
        }
    }

    pub fn moment_model(&self) -> DiodeMomentModel {
        DiodeMomentModel {
            k2: self.rectifier.k2,
            k4: self.rectifier.k4,
            alpha: self.rectifier.alpha,
        }
    }

    pub fn rectifier_model(&self) -> Result<RectifierModel> {
        Ok(match self.rectifier.model {
            RectifierKind::Moment => RectifierModel::Moment(DiodeMomentModel::new(
                self.rectifier.k2,
                self.rectifier.k4,
                self.rectifier.alpha,
            )?),
            RectifierKind::Table => {
                let path = self.rectifier.table.as_ref().expect("validated");
                RectifierModel::Table(EfficiencyTableModel::load(path)?.with_oversampling(self.rectifier.oversampling)?)
            }
        })
    }

    pub fn adc_config(&self) -> AdcConfig {
        AdcConfig {
            resolution_bits: self.adc.bits,
            v_ref: self.adc.v_ref,
            noise_sigma: self.adc.noise_sigma,
            load_resistance: self.adc.load_ohms,
        }
    }

    /// Sorted, de-duplicated sweep axes.
    pub fn strategies(&self) -> Vec<Strategy> {
        sorted(&self.sweep.strategies)
    }

    pub fn antennas(&self) -> Vec<usize> {
        sorted(&self.sweep.antennas)
    }

    pub fn tones(&self) -> Vec<usize> {
        sorted(&self.sweep.tones)
    }

    pub fn codebook_sizes(&self) -> Vec<usize> {
        sorted(&self.sweep.codebook_sizes)
    }
}

fn sorted<T: Ord + Copy>(v: &[T]) -> Vec<T> {
    v.iter().copied().collect::<BTreeSet<_>>().into_iter().collect()
}

/// Which pre-canned sweep to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Figure {
    /// Beamforming only: M ∈ {1, 2, 4}, one tone.
    Beamforming,
    /// Waveform only: one antenna, N ∈ {1, 2, 4, 8}.
    Waveform,
    /// Joint: M ∈ {1, 2, 4} × N ∈ {1, 2, 4, 8}.
    Joint,
}

/// Pre-canned campaign: all three strategies, K ∈ {2..64}, 15 locations
/// with pathloss uniform in [55, 70] dB.
pub fn figure_config(figure: Figure, seed: u64, frames: u32) -> CampaignConfig {
    let mut c = CampaignConfig::with_seed(seed);
    c.locations.frames = frames;
    let (antennas, tones) = match figure {
        Figure::Beamforming => (vec![1, 2, 4], vec![1]),
        Figure::Waveform => (vec![1], vec![1, 2, 4, 8]),
        Figure::Joint => (vec![1, 2, 4], vec![1, 2, 4, 8]),
    };
    c.sweep.antennas = antennas;
    c.sweep.tones = tones;
    c
}
