//! Runs a configured sweep and produces the per-frame detail rows.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{CampaignConfig, CodebookKind, Strategy};
use super::report::{detail_csv, summarize, DetailRow};
use crate::channel::{frequency_response, make_locations, sample_taps, ChannelRealization, Location};
use crate::codebook::{gen_nested, train_nested, Codebook, LloydOptions};
use crate::error::{Error, Result};
use crate::protocol::{run_session, ChannelSource, FrameConfig, FrameSetup, LinkModel, Measurement};
use crate::rectenna::RectifierModel;
use crate::rng::{stream, Purpose, StreamId};
use crate::signal::{effective_tones, received_rf_power, ToneGrid};
use crate::strategies::{smf_weights, up_weights, SmfParams};

pub const DETAIL_FILE: &str = "detail.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Clone, Debug, PartialEq)]
pub struct CampaignOutput {
    pub detail: String,
    pub summary: String,
}

/// One (strategy, M, N, K, location) cell of the sweep.
#[derive(Clone, Copy, Debug)]
struct WorkItem {
    strategy: Strategy,
    m: usize,
    n: usize,
    k: usize,
    location: usize,
}

struct Context {
    config: CampaignConfig,
    locations: Vec<Location>,
    rect: RectifierModel,
    measurement: Measurement,
    link: LinkModel,
    /// Indexed like `config.antennas()` × `config.tones()`.
    codebooks: Vec<Option<Codebook>>,
}

impl Context {
    fn grid(&self, n: usize) -> ToneGrid {
        ToneGrid::new(n, self.config.signal.center_frequency_hz, self.config.signal.bandwidth_hz)
            .expect("grid validated at startup")
    }

    fn codebook(&self, m: usize, n: usize) -> &Codebook {
        let mi = self.config.antennas().iter().position(|&x| x == m).expect("sweep antenna");
        let ni = self.config.tones().iter().position(|&x| x == n).expect("sweep tone count");
        self.codebooks[mi * self.config.tones().len() + ni]
            .as_ref()
            .expect("codebook built for LIMITED sweeps")
    }
}

/// Training channels shared by every (M, N): channel i draws its taps from
/// stream (seed, Training, i, 0) at the midpoint pathloss.
pub fn training_channels(config: &CampaignConfig, m: usize, grid: &ToneGrid) -> Vec<ChannelRealization> {
    let params = config.channel_template();
    (0..config.codebook.training_channels)
        .map(|i| {
            let mut rng = stream(config.seed, StreamId::new(Purpose::Training, i as u32, 0));
            frequency_response(&sample_taps(&params, m, &mut rng), &params, grid)
        })
        .collect()
}

fn build_codebook(config: &CampaignConfig, m: usize, grid: &ToneGrid) -> Result<Codebook> {
    let k_max = config.codebook_sizes().last().copied().unwrap_or(1);
    let power = config.signal.power_w;
    let mut rng = stream(config.seed, StreamId::new(Purpose::Codebook, m as u32, grid.n_tones() as u32));
    match config.codebook.kind {
        CodebookKind::Trained => {
            let opts = LloydOptions {
                iters: config.codebook.iters,
                ascent_steps: config.codebook.ascent_steps,
                beta: config.smf.beta,
            };
            let training = training_channels(config, m, grid);
            train_nested(&training, k_max, &config.moment_model(), power, opts, &mut rng).map(|(cb, _)| cb)
        }
        CodebookKind::Random => gen_nested(m, grid, power, k_max, &mut rng),
        CodebookKind::File => {
            let path = config.codebook.path.as_ref().expect("validated");
            let cb = Codebook::load(path)?;
            if cb.m_antennas() != m || cb.n_tones() != grid.n_tones() {
                return Err(Error::Config(format!(
                    "codebook {} is {}x{}, sweep point needs {m}x{}",
                    path.display(),
                    cb.m_antennas(),
                    cb.n_tones(),
                    grid.n_tones()
                )));
            }
            if cb.k() < k_max || (!cb.nested() && config.codebook_sizes().iter().any(|&k| k != cb.k())) {
                return Err(Error::Config(format!(
                    "codebook {} (K={}, nested={}) cannot serve sizes {:?}",
                    path.display(),
                    cb.k(),
                    cb.nested(),
                    config.codebook_sizes()
                )));
            }
            Ok(cb)
        }
    }
}

fn build_context(config: &CampaignConfig) -> Result<Context> {
    config.validate()?;
    let locations = make_locations(
        config.locations.count,
        config.seed,
        &config.channel_template(),
        (config.locations.pathloss_min_db, config.locations.pathloss_max_db),
    )?;
    let rect = config.rectifier_model()?;
    let measurement = if config.adc.enabled {
        Measurement::Adc(config.adc_config())
    } else {
        Measurement::Ideal
    };
    let link = LinkModel::new(config.link.delivery_probability, config.link.latency_s)?;
    for &n in &config.tones() {
        ToneGrid::new(n, config.signal.center_frequency_hz, config.signal.bandwidth_hz)?;
    }

    let needs_codebooks = config.strategies().contains(&Strategy::Limited);
    let pairs: Vec<(usize, usize)> = config
        .antennas()
        .into_iter()
        .flat_map(|m| config.tones().into_iter().map(move |n| (m, n)))
        .collect();
    let codebooks = pairs
        .par_iter()
        .map(|&(m, n)| {
            if !needs_codebooks {
                return Ok(None);
            }
            let grid = ToneGrid::new(n, config.signal.center_frequency_hz, config.signal.bandwidth_hz)?;
            build_codebook(config, m, &grid).map(Some)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Context {
        config: config.clone(),
        locations,
        rect,
        measurement,
        link,
        codebooks,
    })
}

fn work_items(config: &CampaignConfig) -> Vec<WorkItem> {
    let mut items = Vec::new();
    for strategy in config.strategies() {
        for m in config.antennas() {
            for n in config.tones() {
                let ks = if strategy == Strategy::Limited {
                    config.codebook_sizes()
                } else {
                    vec![0]
                };
                for k in ks {
                    for location in 0..config.locations.count {
                        items.push(WorkItem {
                            strategy,
                            m,
                            n,
                            k,
                            location,
                        });
                    }
                }
            }
        }
    }
    items
}

fn run_item(ctx: &Context, item: WorkItem) -> Result<Vec<DetailRow>> {
    let config = &ctx.config;
    let location = &ctx.locations[item.location];
    let grid = ctx.grid(item.n);
    let source = if config.channel.resample_per_frame {
        ChannelSource::Resampled {
            location: location.clone(),
            m_antennas: item.m,
            grid: grid.clone(),
        }
    } else {
        ChannelSource::Static(location.realize(item.m, &grid, 0))
    };
    let row = |frame: u32| DetailRow {
        strategy: item.strategy,
        m: item.m,
        n: item.n,
        k: item.k,
        location: location.label.clone(),
        frame,
        p_dc: 0.0,
        p_rf: 0.0,
        selected_k: 0,
        applied_k: 0,
        feedback_ok: true,
        e_train: 0.0,
        e_wpt: 0.0,
    };

    match item.strategy {
        Strategy::Up | Strategy::Smf => {
            let power = config.signal.power_w;
            let smf = SmfParams::new(config.smf.beta, power)?;
            (0..config.locations.frames)
                .map(|frame| {
                    let channel = source.channel(frame);
                    let w = match item.strategy {
                        Strategy::Up => up_weights(item.m, &grid, power)?,
                        _ => smf_weights(&channel, &smf)?,
                    };
                    let tones = effective_tones(&channel, &w)?;
                    let p_dc = ctx.rect.dc_power(&tones, &grid)?;
                    Ok(DetailRow {
                        p_dc,
                        p_rf: received_rf_power(&tones),
                        e_wpt: p_dc * config.frame.t_frame,
                        ..row(frame)
                    })
                })
                .collect()
        }
        Strategy::Limited => {
            let codebook = ctx.codebook(item.m, item.n).prefix(item.k)?;
            let frame_config = FrameConfig::new(config.frame.t_s, config.frame.t_frame, item.k)?;
            let setup = FrameSetup {
                config: &frame_config,
                codebook: &codebook,
                rect: &ctx.rect,
                measurement: &ctx.measurement,
                link: &ctx.link,
            };
            let seed = location.params.seed;
            let reports = run_session(&setup, &source, config.locations.frames, |frame| {
                stream(seed, StreamId::new(Purpose::Link, 0, frame))
            })?;
            Ok(reports
                .into_iter()
                .zip(0u32..)
                .map(|(r, frame)| DetailRow {
                    p_dc: r.p_dc_wpt,
                    p_rf: r.p_rf_wpt,
                    selected_k: r.selected_index,
                    applied_k: r.applied.as_index(),
                    feedback_ok: r.feedback_delivered,
                    e_train: r.energy_training,
                    e_wpt: r.energy_wpt,
                    ..row(frame)
                })
                .collect())
        }
    }
}

/// Detail rows in output order. The result does not depend on the number
/// of worker threads.
pub fn run_detail(config: &CampaignConfig) -> Result<Vec<DetailRow>> {
    let work = || -> Result<Vec<DetailRow>> {
        let ctx = build_context(config)?;
        let chunks = work_items(config)
            .into_par_iter()
            .map(|item| run_item(&ctx, item))
            .collect::<Result<Vec<_>>>()?;
        Ok(chunks.into_iter().flatten().collect())
    };
    match config.threads {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {threads} worker threads: {e}")))?
            .install(work),
        None => work(),
    }
}

/// Runs the campaign and renders both CSV files in memory.
pub fn run_campaign(config: &CampaignConfig) -> Result<CampaignOutput> {
    let detail = detail_csv(&run_detail(config)?);
    let summary = summarize(&detail)?;
    Ok(CampaignOutput { detail, summary })
}

/// Makes sure `out_dir` exists and is writable before any work starts.
pub fn preflight_output(out_dir: &Path) -> Result<()> {
    if out_dir.exists() && !out_dir.is_dir() {
        return Err(Error::Config(format!("{} exists and is not a directory", out_dir.display())));
    }
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", out_dir.display())))?;
    let probe = out_dir.join(".wptsim-write-probe");
    std::fs::write(&probe, b"")
        .map_err(|e| Error::Config(format!("output directory {} is not writable: {e}", out_dir.display())))?;
    std::fs::remove_file(&probe)?;
    Ok(())
}

/// Runs the campaign and writes `detail.csv` and `summary.csv` into `out_dir`.
pub fn run_campaign_to_dir(config: &CampaignConfig, out_dir: &Path) -> Result<(PathBuf, PathBuf)> {
    preflight_output(out_dir)?;
    let output = run_campaign(config)?;
    let detail = out_dir.join(DETAIL_FILE);
    let summary = out_dir.join(SUMMARY_FILE);
    std::fs::write(&detail, output.detail)?;
    std::fs::write(&summary, output.summary)?;
    Ok((detail, summary))
}
