use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use wptsim::codebook::{gen_nested, gen_random, train_lloyd, train_nested, LloydOptions};
use wptsim::harness::campaign::training_channels;
use wptsim::harness::oracle::run_moment_oracle;
use wptsim::harness::{figure_config, run_campaign_to_dir, summarize, CampaignConfig, Figure};
use wptsim::rectenna::DiodeMomentModel;
use wptsim::rng::{stream, Purpose, StreamId};
use wptsim::signal::ToneGrid;
use wptsim::Result;

#[derive(Parser)]
#[command(name = "wptsim", version, about = "Closed-loop wireless power transfer simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a campaign from a TOML config and write detail.csv and summary.csv.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; overrides the config. Output does not depend on it.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Generate or train a codebook file.
    Codebook {
        #[command(subcommand)]
        action: CodebookAction,
    },
    /// Self-checks against independent reference computations.
    Oracle {
        #[command(subcommand)]
        check: OracleCheck,
    },
    /// Run a pre-canned sweep.
    Sweep {
        figure: FigureArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        frames: u32,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Rebuild summary.csv from a detail.csv.
    Summarize {
        #[arg(long)]
        detail: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(clap::Args)]
struct Shape {
    #[arg(long, default_value_t = 1)]
    antennas: usize,
    #[arg(long, default_value_t = 1)]
    tones: usize,
    /// Number of codewords.
    #[arg(long)]
    size: usize,
    #[arg(long, default_value_t = 2.0)]
    power: f64,
    #[arg(long, default_value_t = 2.4e9)]
    center_hz: f64,
    #[arg(long, default_value_t = 10e6)]
    bandwidth_hz: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Nested family (uniform power first, size a power of two).
    #[arg(long)]
    nested: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum CodebookAction {
    /// Random codewords on the power sphere.
    Gen {
        #[command(flatten)]
        shape: Shape,
    },
    /// Lloyd training on random channels.
    Train {
        #[command(flatten)]
        shape: Shape,
        #[arg(long, default_value_t = 1000)]
        training: usize,
        #[arg(long, default_value_t = 30)]
        iters: usize,
        #[arg(long, default_value_t = 60.0)]
        pathloss_db: f64,
    },
}

#[derive(Subcommand)]
enum OracleCheck {
    /// Compare closed-form moments with time-domain sampling.
    Moments {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        cases: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FigureArg {
    #[value(name = "figure-bf")]
    Bf,
    #[value(name = "figure-wf")]
    Wf,
    #[value(name = "figure-joint")]
    Joint,
}

const ORACLE_TOLERANCE: f64 = 1e-6;

fn codebook_command(action: CodebookAction) -> Result<()> {
    let (shape, training) = match action {
        CodebookAction::Gen { shape } => (shape, None),
        CodebookAction::Train {
            shape,
            training,
            iters,
            pathloss_db,
        } => (shape, Some((training, iters, pathloss_db))),
    };
    let grid = ToneGrid::new(shape.tones, shape.center_hz, shape.bandwidth_hz)?;
    let mut rng = stream(shape.seed, StreamId::new(Purpose::Codebook, shape.antennas as u32, shape.tones as u32));
    let codebook = match training {
        None if shape.nested => gen_nested(shape.antennas, &grid, shape.power, shape.size, &mut rng)?,
        None => gen_random(shape.antennas, &grid, shape.power, shape.size, &mut rng)?,
        Some((count, iters, pathloss_db)) => {
            let mut config = CampaignConfig::with_seed(shape.seed);
            config.codebook.training_channels = count;
            config.locations.pathloss_min_db = pathloss_db;
            config.locations.pathloss_max_db = pathloss_db;
            let channels = training_channels(&config, shape.antennas, &grid);
            let opts = LloydOptions {
                iters,
                ..LloydOptions::default()
            };
            let model = DiodeMomentModel::default();
            if shape.nested {
                train_nested(&channels, shape.size, &model, shape.power, opts, &mut rng)?.0
            } else {
                train_lloyd(&channels, shape.size, &model, shape.power, opts, &mut rng)?.0
            }
        }
    };
    codebook.save(&shape.out)?;
    eprintln!("wrote {} codewords to {}", codebook.k(), shape.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate { config, out, threads } => {
            let mut config = CampaignConfig::load(&config)?;
            if threads.is_some() {
                config.threads = threads;
                config.validate()?;
            }
            let (detail, summary) = run_campaign_to_dir(&config, &out)?;
            eprintln!("wrote {} and {}", detail.display(), summary.display());
        }
        Command::Codebook { action } => codebook_command(action)?,
        Command::Oracle {
            check: OracleCheck::Moments { seed, cases },
        } => {
            let report = run_moment_oracle(seed, cases, 32)?;
            println!(
                "cases={} max_rel_error={:e} (m2 {:e}, m4 {:e})",
                report.cases,
                report.max_rel_error(),
                report.max_rel_error_m2,
                report.max_rel_error_m4
            );
            if !(report.max_rel_error() < ORACLE_TOLERANCE) {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Sweep {
            figure,
            out,
            seed,
            frames,
            threads,
        } => {
            let figure = match figure {
                FigureArg::Bf => Figure::Beamforming,
                FigureArg::Wf => Figure::Waveform,
                FigureArg::Joint => Figure::Joint,
            };
            let mut config = figure_config(figure, seed, frames);
            config.threads = threads;
            config.validate()?;
            let (detail, summary) = run_campaign_to_dir(&config, &out)?;
            eprintln!("wrote {} and {}", detail.display(), summary.display());
        }
        Command::Summarize { detail, out } => {
            let text = std::fs::read_to_string(&detail)?;
            std::fs::write(&out, summarize(&text)?)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors.
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

