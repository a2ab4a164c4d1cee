//! Closed-loop frame simulation: codebook sweep with dc measurements,
//! limited feedback over a lossy link, then power transfer with the
//! selected codeword.
//!
//! Frame timeline (T = K·T_s + T_p):
//!
//! ```text
//! | cw 1 | cw 2 | ... | cw K |  feedback  |        WPT phase (T_p)        |
//! |<-T_s->                                 |<- latency ->|
//! ```
//!
//! Feedback is instantaneous unless the link has latency; until it
//! arrives the transmitter keeps using its fallback codeword.

use rand::Rng;

use crate::channel::{ChannelModelParams, ChannelRealization, Location};
use crate::codebook::Codebook;
use crate::error::{Error, Result};
use crate::rectenna::{AdcConfig, RectifierModel};
use crate::signal::{effective_tones, received_rf_power, ToneGrid, WaveformWeights};
use crate::strategies::{feedback_bits, select_codeword, up_weights};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameConfig {
    t_s: f64,
    t_frame: f64,
    k_codewords: usize,
}

impl FrameConfig {
    pub const DEFAULT_DWELL: f64 = 0.010;
    pub const DEFAULT_FRAME: f64 = 2.0;

    /// Requires t_s > 0, K ≥ 1 and K·t_s < t_frame.
    pub fn new(t_s: f64, t_frame: f64, k_codewords: usize) -> Result<Self> {
        if !(t_s > 0.0 && t_s.is_finite()) {
            return Err(Error::Config(format!("codeword dwell must be positive, got {t_s}")));
        }
        if k_codewords == 0 {
            return Err(Error::Config("codebook must hold at least one codeword".into()));
        }
        if !(k_codewords as f64 * t_s < t_frame) {
            return Err(Error::Config(format!(
                "training phase {k_codewords} x {t_s} s does not fit in a {t_frame} s frame"
            )));
        }
        Ok(Self {
            t_s,
            t_frame,
            k_codewords,
        })
    }

    pub fn with_defaults(k_codewords: usize) -> Result<Self> {
        Self::new(Self::DEFAULT_DWELL, Self::DEFAULT_FRAME, k_codewords)
    }

    pub fn t_s(&self) -> f64 {
        self.t_s
    }

    pub fn t_frame(&self) -> f64 {
        self.t_frame
    }

    pub fn k_codewords(&self) -> usize {
        self.k_codewords
    }

    pub fn training_duration(&self) -> f64 {
        self.k_codewords as f64 * self.t_s
    }

    /// T_p = T − K·T_s.
    pub fn t_p(&self) -> f64 {
        self.t_frame - self.training_duration()
    }

    /// K·T_s / T.
    pub fn training_overhead(&self) -> f64 {
        self.training_duration() / self.t_frame
    }
}

/// Feedback payload: (k* − 1) in binary, most significant bit first, in
/// exactly ⌈log₂K⌉ bits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeedbackMsg {
    pub frame_id: u64,
    pub index_bits: Vec<bool>,
}

pub fn encode_feedback(frame_id: u64, k_star: usize, k_codewords: usize) -> Result<FeedbackMsg> {
    if k_star == 0 || k_star > k_codewords {
        return Err(Error::Protocol(format!("codeword index {k_star} outside 1..={k_codewords}")));
    }
    let width = feedback_bits(k_codewords);
    let value = k_star - 1;
    let index_bits = (0..width).rev().map(|b| (value >> b) & 1 == 1).collect();
    Ok(FeedbackMsg { frame_id, index_bits })
}

pub fn decode_feedback(msg: &FeedbackMsg, k_codewords: usize) -> Result<usize> {
    let width = feedback_bits(k_codewords) as usize;
    if msg.index_bits.len() != width {
        return Err(Error::Protocol(format!(
            "feedback carries {} bits, expected {width} for K={k_codewords}",
            msg.index_bits.len()
        )));
    }
    let value = msg.index_bits.iter().fold(0usize, |acc, &b| (acc << 1) | usize::from(b));
    if value >= k_codewords {
        return Err(Error::Protocol(format!("decoded index {} exceeds K={k_codewords}", value + 1)));
    }
    Ok(value + 1)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkModel {
    pub delivery_probability: f64,
    /// Seconds from the end of training until the feedback takes effect.
    pub latency: f64,
}

impl Default for LinkModel {
    fn default() -> Self {
        Self::ideal()
    }
}

impl LinkModel {
    pub fn new(delivery_probability: f64, latency: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&delivery_probability) {
            return Err(Error::Config(format!(
                "delivery probability must lie in [0, 1], got {delivery_probability}"
            )));
        }
        if !(latency >= 0.0 && latency.is_finite()) {
            return Err(Error::Config(format!("latency must be non-negative, got {latency}")));
        }
        Ok(Self {
            delivery_probability,
            latency,
        })
    }

    pub fn ideal() -> Self {
        Self {
            delivery_probability: 1.0,
            latency: 0.0,
        }
    }

    /// One uniform draw decides delivery; probability 0 and 1 never
    /// disagree with their nominal outcome.
    fn deliver<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        let u: f64 = rng.random();
        u < self.delivery_probability
    }
}

/// How the receiver reads the dc output during training.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Measurement {
    /// The true dc power, in watts.
    Ideal,
    /// The quantized ADC voltage, in volts.
    Adc(AdcConfig),
}

/// Codeword in use during a WPT phase.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AppliedCodeword {
    /// 1-based codebook index.
    Index(usize),
    /// The uniform-power waveform, used before any feedback has arrived.
    Uniform,
}

impl AppliedCodeword {
    /// 1-based index, or 0 for the uniform-power fallback.
    pub fn as_index(self) -> usize {
        match self {
            AppliedCodeword::Index(k) => k,
            AppliedCodeword::Uniform => 0,
        }
    }
}

/// What the transmitter falls back to when feedback is lost: the previous
/// frame's applied codeword, or uniform power before the first frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FallbackState(pub AppliedCodeword);

impl Default for FallbackState {
    fn default() -> Self {
        FallbackState(AppliedCodeword::Uniform)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameReport {
    pub frame_id: u64,
    pub measurements: Vec<f64>,
    /// Receiver's choice k*, 1-based.
    pub selected_index: usize,
    pub applied: AppliedCodeword,
    pub feedback_delivered: bool,
    /// Average dc power over the WPT phase, watts.
    pub p_dc_wpt: f64,
    /// RF power of the applied codeword, watts.
    pub p_rf_wpt: f64,
    pub energy_training: f64,
    pub energy_wpt: f64,
    pub energy_total: f64,
}

fn codeword_for<'a>(codebook: &'a Codebook, uniform: &'a WaveformWeights, applied: AppliedCodeword) -> &'a WaveformWeights {
    match applied {
        AppliedCodeword::Index(k) => &codebook.entries()[k - 1],
        AppliedCodeword::Uniform => uniform,
    }
}

fn check_dims(codebook: &Codebook, channel: &ChannelRealization) -> Result<()> {
    if codebook.m_antennas() != channel.m_antennas() || codebook.n_tones() != channel.n_tones() {
        return Err(Error::Dimension(format!(
            "codebook is {}x{}, channel is {}x{}",
            codebook.m_antennas(),
            codebook.n_tones(),
            channel.m_antennas(),
            channel.n_tones()
        )));
    }
    Ok(())
}

fn true_dc(rect: &RectifierModel, channel: &ChannelRealization, w: &WaveformWeights) -> Result<f64> {
    rect.dc_power(&effective_tones(channel, w)?, channel.grid())
}

/// Sweeps the codebook on a constant channel and returns one reading per
/// codeword: quantized volts with an ADC, raw watts otherwise.
pub fn run_training<R: Rng + ?Sized>(
    codebook: &Codebook,
    channel: &ChannelRealization,
    rect: &RectifierModel,
    measurement: &Measurement,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_dims(codebook, channel)?;
    training_sweep(codebook, channel, rect, measurement, rng).map(|(readings, _)| readings)
}

/// Readings plus the true dc power of every codeword.
fn training_sweep<R: Rng + ?Sized>(
    codebook: &Codebook,
    channel: &ChannelRealization,
    rect: &RectifierModel,
    measurement: &Measurement,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut readings = Vec::with_capacity(codebook.k());
    let mut powers = Vec::with_capacity(codebook.k());
    for w in codebook.entries() {
        let p_dc = true_dc(rect, channel, w)?;
        readings.push(match measurement {
            Measurement::Ideal => p_dc,
            Measurement::Adc(adc) => adc.measure(p_dc, rng)?.volts,
        });
        powers.push(p_dc);
    }
    Ok((readings, powers))
}

/// Everything a frame needs besides the channel and the random stream.
#[derive(Clone, Copy, Debug)]
pub struct FrameSetup<'a> {
    pub config: &'a FrameConfig,
    pub codebook: &'a Codebook,
    pub rect: &'a RectifierModel,
    pub measurement: &'a Measurement,
    pub link: &'a LinkModel,
}

impl FrameSetup<'_> {
    fn validate(&self) -> Result<()> {
        if self.codebook.k() != self.config.k_codewords() {
            return Err(Error::Config(format!(
                "frame configured for K={}, codebook holds {}",
                self.config.k_codewords(),
                self.codebook.k()
            )));
        }
        if self.link.latency >= self.config.t_p() {
            return Err(Error::Config(format!(
                "feedback latency {} s must be shorter than the WPT phase {} s",
                self.link.latency,
                self.config.t_p()
            )));
        }
        if let Measurement::Adc(adc) = self.measurement {
            adc.validate()?;
        }
        Ok(())
    }
}

/// One frame. The stream is consumed as: ADC noise for codewords 1..K,
/// then one draw for feedback delivery.
pub fn run_frame<R: Rng + ?Sized>(
    frame_id: u64,
    setup: &FrameSetup<'_>,
    channel: &ChannelRealization,
    fallback: FallbackState,
    rng: &mut R,
) -> Result<FrameReport> {
    setup.validate()?;
    check_dims(setup.codebook, channel)?;
    let config = setup.config;
    let k = config.k_codewords();

    let (measurements, training_powers) = training_sweep(setup.codebook, channel, setup.rect, setup.measurement, rng)?;
    let selected_index = select_codeword(&measurements)?;
    let msg = encode_feedback(frame_id, selected_index, k)?;
    let feedback_delivered = setup.link.deliver(rng);
    let applied = if feedback_delivered {
        AppliedCodeword::Index(decode_feedback(&msg, k)?)
    } else {
        fallback.0
    };

    let uniform = up_weights(channel.m_antennas(), channel.grid(), setup.codebook.power_budget())?;
    let applied_w = codeword_for(setup.codebook, &uniform, applied);
    let p_applied = true_dc(setup.rect, channel, applied_w)?;
    let p_rf_wpt = received_rf_power(&effective_tones(channel, applied_w)?);

    let t_p = config.t_p();
    let latency = if feedback_delivered { setup.link.latency } else { 0.0 };
    let (energy_wpt, p_dc_wpt) = if latency > 0.0 {
        let p_before = true_dc(setup.rect, channel, codeword_for(setup.codebook, &uniform, fallback.0))?;
        let energy = p_before * latency + p_applied * (t_p - latency);
        (energy, energy / t_p)
    } else {
        (p_applied * t_p, p_applied)
    };
    let energy_training = training_powers.iter().sum::<f64>() * config.t_s();

    Ok(FrameReport {
        frame_id,
        measurements,
        selected_index,
        applied,
        feedback_delivered,
        p_dc_wpt,
        p_rf_wpt,
        energy_training,
        energy_wpt,
        energy_total: energy_training + energy_wpt,
    })
}

/// Where each frame's channel comes from.
#[derive(Clone, Debug)]
pub enum ChannelSource {
    /// The same realization every frame.
    Static(ChannelRealization),
    /// A fresh draw per frame from the location's channel distribution.
    Resampled {
        location: Location,
        m_antennas: usize,
        grid: ToneGrid,
    },
}

impl ChannelSource {
    pub fn resampled(label: &str, params: ChannelModelParams, m_antennas: usize, grid: ToneGrid) -> Self {
        ChannelSource::Resampled {
            location: Location {
                label: label.to_string(),
                params,
            },
            m_antennas,
            grid,
        }
    }

    pub fn channel(&self, frame: u32) -> ChannelRealization {
        match self {
            ChannelSource::Static(ch) => ch.clone(),
            ChannelSource::Resampled {
                location,
                m_antennas,
                grid,
            } => location.realize(*m_antennas, grid, frame),
        }
    }
}

/// Runs `n_frames` frames in order, threading the fallback state.
/// `frame_rng(i)` supplies the stream for frame i.
pub fn run_session<R, F>(
    setup: &FrameSetup<'_>,
    source: &ChannelSource,
    n_frames: u32,
    mut frame_rng: F,
) -> Result<Vec<FrameReport>>
where
    R: Rng,
    F: FnMut(u32) -> R,
{
    if n_frames == 0 {
        return Err(Error::Domain("session needs at least one frame".into()));
    }
    let mut fallback = FallbackState::default();
    let mut reports = Vec::with_capacity(n_frames as usize);
    for frame in 0..n_frames {
        let channel = source.channel(frame);
        let mut rng = frame_rng(frame);
        let report = run_frame(u64::from(frame), setup, &channel, fallback, &mut rng)?;
        fallback = FallbackState(report.applied);
        reports.push(report);
    }
    Ok(reports)
}
