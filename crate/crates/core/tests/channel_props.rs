//! Statistical and structural properties of the tapped-delay-line channel.

use wptsim::channel::{frequency_response, make_locations, sample_taps, ChannelModelParams, TapMatrix};
use wptsim::rng::{stream, Purpose, StreamId};
use wptsim::signal::ToneGrid;
use wptsim::Complex64;

fn grid(n: usize) -> ToneGrid {
    ToneGrid::new(n, 2.4e9, 10e6).unwrap()
}

#[test]
fn frequency_response_matches_direct_summation() {
    let params = ChannelModelParams {
        n_taps: 4,
        pathloss_db: 0.0,
        ..Default::default()
    };
    let g = grid(8);
    let taps = sample_taps(&params, 3, &mut stream(1, StreamId::new(Purpose::Taps, 0, 0)));
    let ch = frequency_response(&taps, &params, &g);
    let df = 10e6 / 8.0;
    for m in 0..3 {
        for n in 0..8 {
            let f = 2.4e9 + (n as f64 - 3.5) * df;
            let mut direct = Complex64::new(0.0, 0.0);
            for l in 0..4 {
                let tau = l as f64 * params.tap_spacing;
                direct += taps.get(m, l) * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * f * tau);
            }
            assert!((ch.get(m, n) - direct).norm() <= 1e-12 * direct.norm().max(1.0));
        }
    }
}

#[test]
fn pure_delay_tap() {
    let params = ChannelModelParams {
        n_taps: 2,
        pathloss_db: 0.0,
        ..Default::default()
    };
    let g = grid(4);
    let tap = Complex64::new(0.6, -0.8);
    let taps = TapMatrix::new(1, 2, vec![Complex64::new(0.0, 0.0), tap]).unwrap();
    let ch = frequency_response(&taps, &params, &g);
    for (n, w) in g.angular_frequencies().iter().enumerate() {
        let expected = tap * Complex64::from_polar(1.0, -w * params.tap_spacing);
        assert!((ch.get(0, n) - expected).norm() < 1e-12);
        assert!((ch.get(0, n).norm() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn single_tap_channel_is_flat() {
    let params = ChannelModelParams {
        n_taps: 1,
        pathloss_db: 10.0,
        ..Default::default()
    };
    let g = grid(8);
    let mut rng = stream(2, StreamId::new(Purpose::Taps, 0, 0));
    for _ in 0..20 {
        let ch = frequency_response(&sample_taps(&params, 2, &mut rng), &params, &g);
        for m in 0..2 {
            assert!((0..8).all(|n| ch.get(m, n) == ch.get(m, 0)));
        }
    }
}

#[test]
fn edge_tones_decorrelate() {
    let params = ChannelModelParams {
        pathloss_db: 0.0,
        ..Default::default()
    };
    assert!(params.tap_spacing >= 1.0 / 10e6);
    let g = grid(8);
    let mut rng = stream(3, StreamId::new(Purpose::Taps, 0, 0));
    let (mut cross, mut p1, mut pn) = (Complex64::new(0.0, 0.0), 0.0, 0.0);
    for _ in 0..10_000 {
        let ch = frequency_response(&sample_taps(&params, 1, &mut rng), &params, &g);
        let (a, b) = (ch.get(0, 0), ch.get(0, 7));
        cross += a * b.conj();
        p1 += a.norm_sqr();
        pn += b.norm_sqr();
    }
    let rho = cross.norm() / (p1 * pn).sqrt();
    assert!(rho < 0.5, "correlation {rho}");
}

#[test]
fn ensemble_power_matches_pathloss() {
    for (m, pathloss_db) in [(1, 0.0), (3, 60.0)] {
        let params = ChannelModelParams {
            pathloss_db,
            ..Default::default()
        };
        let g = grid(4);
        let mut rng = stream(4, StreamId::new(Purpose::Taps, m as u32, 0));
        let draws = 100_000;
        let mut total = 0.0;
        for _ in 0..draws {
            let ch = frequency_response(&sample_taps(&params, m, &mut rng), &params, &g);
            total += (0..m).map(|i| ch.get(i, 2).norm_sqr()).sum::<f64>();
        }
        let expected = m as f64 * 10f64.powf(-pathloss_db / 10.0);
        let ratio = total / draws as f64 / expected;
        assert!((ratio - 1.0).abs() < 0.02, "M={m}: ratio {ratio}");
    }
}

#[test]
fn antenna_draws_are_prefixes() {
    let params = ChannelModelParams::default();
    let four = sample_taps(&params, 4, &mut stream(5, StreamId::new(Purpose::Taps, 0, 0)));
    let two = sample_taps(&params, 2, &mut stream(5, StreamId::new(Purpose::Taps, 0, 0)));
    assert_eq!(&four.as_slice()[..two.as_slice().len()], two.as_slice());
}

#[test]
fn locations_are_reproducible_and_channels_shared_across_grids() {
    let template = ChannelModelParams::default();
    let a = make_locations(15, 9, &template, (55.0, 70.0)).unwrap();
    assert_eq!(a, make_locations(15, 9, &template, (55.0, 70.0)).unwrap());
    assert_eq!(a.last().unwrap().label, "L15");
    assert!(a.iter().all(|l| (55.0..=70.0).contains(&l.params.pathloss_db)));
    let ch1 = a[3].realize(2, &grid(1), 5);
    let ch1_again = a[3].realize(2, &grid(1), 5);
    assert_eq!(ch1, ch1_again);
    assert_ne!(ch1, a[3].realize(2, &grid(1), 6));
}
