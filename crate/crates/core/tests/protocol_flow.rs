//! Frame-level protocol behavior over several frames.

use wptsim::channel::{ChannelModelParams, Location};
use wptsim::codebook::gen_nested;
use wptsim::protocol::{
    run_frame, run_session, AppliedCodeword, ChannelSource, FallbackState, FrameConfig, FrameSetup, LinkModel,
    Measurement,
};
use wptsim::rectenna::RectifierModel;
use wptsim::rng::{stream, Purpose, SimRng, StreamId};
use wptsim::signal::{effective_tones, ToneGrid};

fn rng(frame: u32) -> SimRng {
    stream(77, StreamId::new(Purpose::Link, 0, frame))
}

fn location() -> Location {
    Location {
        label: "L1".into(),
        params: ChannelModelParams {
            pathloss_db: 0.0,
            seed: 4,
            ..Default::default()
        },
    }
}

#[test]
fn scripted_loss_on_second_frame() {
    let grid = ToneGrid::new(4, 2.4e9, 10e6).unwrap();
    let cb = gen_nested(2, &grid, 1.0, 16, &mut rng(100)).unwrap();
    let config = FrameConfig::with_defaults(16).unwrap();
    let rect = RectifierModel::default();
    let (ideal, lossy) = (LinkModel::ideal(), LinkModel::new(0.0, 0.0).unwrap());
    let setup = |link| FrameSetup {
        config: &config,
        codebook: &cb,
        rect: &rect,
        measurement: &Measurement::Ideal,
        link,
    };
    let loc = location();
    let mut state = FallbackState::default();
    let mut applied = Vec::new();
    for (frame, link) in [&ideal, &lossy, &ideal].into_iter().enumerate() {
        let ch = loc.realize(2, &grid, frame as u32);
        let r = run_frame(frame as u64, &setup(link), &ch, state, &mut rng(frame as u32)).unwrap();
        assert_eq!(r.energy_total, r.energy_training + r.energy_wpt);
        state = FallbackState(r.applied);
        applied.push((r.selected_index, r.applied, r.feedback_delivered));
    }
    assert_eq!(applied[0].1, AppliedCodeword::Index(applied[0].0));
    assert_eq!(applied[1].1, applied[0].1);
    assert!(!applied[1].2);
    assert_eq!(applied[2].1, AppliedCodeword::Index(applied[2].0));
}

#[test]
fn ideal_link_applies_true_argmax() {
    let grid = ToneGrid::new(8, 2.4e9, 10e6).unwrap();
    let cb = gen_nested(4, &grid, 2.0, 32, &mut rng(200)).unwrap();
    let config = FrameConfig::with_defaults(32).unwrap();
    let rect = RectifierModel::default();
    let link = LinkModel::ideal();
    let setup = FrameSetup {
        config: &config,
        codebook: &cb,
        rect: &rect,
        measurement: &Measurement::Ideal,
        link: &link,
    };
    let loc = location();
    let source = ChannelSource::resampled(&loc.label, loc.params.clone(), 4, grid.clone());
    let reports = run_session(&setup, &source, 25, rng).unwrap();
    for (frame, r) in reports.iter().enumerate() {
        let ch = source.channel(frame as u32);
        let powers: Vec<f64> = cb
            .entries()
            .iter()
            .map(|w| rect.dc_power(&effective_tones(&ch, w).unwrap(), &grid).unwrap())
            .collect();
        let best = powers.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(r.p_dc_wpt, best);
        assert_eq!(r.applied, AppliedCodeword::Index(r.selected_index));
        assert_eq!(config.t_p(), config.t_frame() - 32.0 * config.t_s());
        // Training harvests less than the full frame at the best codeword.
        let session_avg = r.energy_total / config.t_frame();
        if powers.iter().any(|&p| p < best) {
            assert!(session_avg < r.p_dc_wpt);
        }
    }
}

#[test]
fn training_overhead_fraction() {
    let c = FrameConfig::with_defaults(64).unwrap();
    assert!((c.training_overhead() - 0.32).abs() < 1e-15);
    assert!(FrameConfig::new(0.010, 2.0, 200).is_err());
}

#[test]
fn latency_must_fit_in_wpt_phase() {
    let grid = ToneGrid::new(1, 2.4e9, 10e6).unwrap();
    let cb = gen_nested(1, &grid, 1.0, 8, &mut rng(300)).unwrap();
    let config = FrameConfig::with_defaults(8).unwrap();
    let rect = RectifierModel::default();
    let link = LinkModel::new(1.0, 1.95).unwrap();
    let setup = FrameSetup {
        config: &config,
        codebook: &cb,
        rect: &rect,
        measurement: &Measurement::Ideal,
        link: &link,
    };
    let ch = location().realize(1, &grid, 0);
    assert!(run_frame(0, &setup, &ch, FallbackState::default(), &mut rng(0)).is_err());
}
