use nanomotion::correlator::*;
use nanomotion::emitter::{stationary_g2, steady_state, EmitterParams};
use nanomotion::mechanics::OscillatorParams;
use nanomotion::optics::{mean_flux, Psf, PumpProfile};
use nanomotion::rng::member_seed;
use nanomotion::trajectory::{ensemble_member, simulate_coherent, DriveKind, Trajectory, TrajectoryGrid};

const W0: f64 = 380e-9;
const PUMP: f64 = 8.3e7;

fn broad() -> PumpProfile {
    PumpProfile::Broad { i0: 1.0 }
}

fn oscillator(theta: f64) -> OscillatorParams {
    OscillatorParams::from_frequency(190e3, 2.0, 2e-15, 300.0)
        .unwrap()
        .with_spread(theta * W0)
}

fn still(n: usize, dt: f64) -> Trajectory {
    Trajectory {
        positions: vec![0.0; n],
        dt,
        seed: 0,
        drive_kind: DriveKind::Thermal,
    }
}

fn ensemble(p: &OscillatorParams, dt: f64, n: usize, members: u64, seed: u64) -> Vec<Trajectory> {
    let grid = TrajectoryGrid::with_default_burn_in(p, dt, n).unwrap();
    (0..members).map(|i| ensemble_member(p, &grid, seed, i).unwrap()).collect()
}

#[test]
fn static_emitter_reproduces_stationary_g2() {
    let e = EmitterParams::default();
    let psf = Psf::gaussian(0.0, W0).unwrap();
    let cfg = CorrelatorConfig::new(1e-9, 200e-9, 0.0, 0.0, Normalization::AnalyticFlux { dx_th: 0.0 });
    let h = g2_weighted(&[still(2000, 1e-9)], &e, &broad(), &psf, &psf, &cfg).unwrap();
    let g = h.normalized().unwrap();
    let expected = stationary_g2(&e, PUMP, &g.tau).unwrap();
    for (a, b) in g.g2.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-3, "{a} {b}");
    }
    assert!(g.g2[0] < 1e-3);

    // Four samples per bin: bin value is the average over its lags.
    let cfg = CorrelatorConfig::new(4e-9, 200e-9, 0.0, 0.0, Normalization::AnalyticFlux { dx_th: 0.0 });
    let g = g2_weighted(&[still(2000, 1e-9)], &e, &broad(), &psf, &psf, &cfg)
        .unwrap()
        .normalized()
        .unwrap();
    let lags: Vec<f64> = (0..200).map(|k| k as f64 * 1e-9).collect();
    let s = stationary_g2(&e, PUMP, &lags).unwrap();
    for (b, v) in g.g2.iter().enumerate() {
        let avg = s[4 * b..4 * b + 4].iter().sum::<f64>() / 4.0;
        assert!((v - avg).abs() < 1e-9);
        assert!((g.tau[b] - (4.0 * b as f64 + 1.5) * 1e-9).abs() < 1e-18);
    }
}

#[test]
fn weighted_and_adiabatic_agree_under_broad_pump() {
    let e = EmitterParams::default();
    let p = oscillator(0.3);
    let ens = ensemble(&p, 10e-9, 4000, 40, 9);
    let x = 0.3 * W0;
    let (psf1, psf2) = (Psf::gaussian(0.0, W0).unwrap(), Psf::gaussian(x, W0).unwrap());
    let norm = Normalization::AnalyticFlux { dx_th: 0.3 * W0 };
    let cfg = CorrelatorConfig::new(10e-9, 5e-6, 0.0, x, norm);
    let w = g2_weighted(&ens, &e, &broad(), &psf1, &psf2, &cfg).unwrap().normalized().unwrap();
    let cfg_a = CorrelatorConfig {
        mode: Mode::Adiabatic,
        ..cfg
    };
    let sigma = |t: f64| stationary_g2(&e, PUMP, &[t]).unwrap()[0];
    let a = g2_adiabatic(&ens, &psf1, &psf2, sigma, &cfg_a).unwrap().normalized().unwrap();
    for b in 0..w.len() {
        let tol = 2.0 * (w.stderr[b].powi(2) + a.stderr[b].powi(2)).sqrt();
        assert!((w.g2[b] - a.g2[b]).abs() <= tol.max(1e-9), "bin {b}");
        assert!((w.g2[b] - a.g2[b]).abs() < 1e-6);
    }
}

#[test]
fn estimators_reject_wrong_mode_and_centres() {
    let e = EmitterParams::default();
    let psf = Psf::gaussian(0.0, W0).unwrap();
    let cfg = CorrelatorConfig {
        mode: Mode::Adiabatic,
        ..CorrelatorConfig::new(1e-8, 1e-7, 0.0, 0.0, Normalization::AnalyticFlux { dx_th: 0.0 })
    };
    assert!(g2_weighted(&[still(100, 1e-9)], &e, &broad(), &psf, &psf, &cfg).is_err());
    let cfg = CorrelatorConfig::new(1e-8, 1e-7, 1e-7, 0.0, Normalization::AnalyticFlux { dx_th: 0.0 });
    assert!(g2_weighted(&[still(100, 1e-9)], &e, &broad(), &psf, &psf, &cfg).is_err());
    assert!(matches!(
        g2_weighted(&[], &e, &broad(), &psf, &psf, &cfg),
        Err(nanomotion::Error::Empty(_))
    ));
}

#[test]
fn long_delay_bins_approach_one() {
    let e = EmitterParams::default();
    let theta = 0.5;
    let p = oscillator(theta);
    let ens = ensemble(&p, 10e-9, 6000, 300, 4);
    let psf = Psf::gaussian(0.0, W0).unwrap();
    let cfg = CorrelatorConfig::new(50e-9, 15e-6, 0.0, 0.0, Normalization::AnalyticFlux { dx_th: theta * W0 });
    let g = g2_weighted(&ens, &e, &broad(), &psf, &psf, &cfg).unwrap().normalized().unwrap();
    let tail = cfg.n_bins() * 4 / 5..cfg.n_bins();
    let n = tail.len() as f64;
    let mean = g.g2[tail.clone()].iter().sum::<f64>() / n;
    let se = g.stderr[tail.clone()].iter().sum::<f64>() / n;
    assert!((mean - 1.0).abs() < 3.0 * se, "{mean} ± {se}");
}

#[test]
fn tail_normalization_rejects_oscillatory_window() {
    let p = oscillator(0.5);
    let cfg = CorrelatorConfig::new(10e-9, 4e-6, 0.0, 0.0, Normalization::tail(p.gamma_m));
    assert!(matches!(cfg.validate(), Err(nanomotion::Error::UnsupportedRegime(_))));
    let cfg = CorrelatorConfig::new(50e-9, 20e-6, 0.0, 0.0, Normalization::tail(p.gamma_m));
    cfg.validate().unwrap();
}

#[test]
fn tail_normalized_curve_ends_at_one() {
    let e = EmitterParams::default();
    let p = oscillator(0.5);
    let ens = ensemble(&p, 10e-9, 6000, 50, 8);
    let psf = Psf::gaussian(0.0, W0).unwrap();
    let cfg = CorrelatorConfig::new(50e-9, 20e-6, 0.0, 0.0, Normalization::tail(p.gamma_m));
    let g = g2_weighted(&ens, &e, &broad(), &psf, &psf, &cfg).unwrap().normalized().unwrap();
    let tail = cfg.tail_bins();
    let mean = g.g2[tail.clone()].iter().sum::<f64>() / tail.len() as f64;
    assert!((mean - 1.0).abs() < 1e-12);
}

#[test]
fn coherent_motion_gives_periodic_correlation() {
    let omega = 2.0 * std::f64::consts::PI * 200e3;
    let dt = 5e-9;
    let period_samples = 1000; // 5 µs
    let grid = TrajectoryGrid::new(dt, 20 * period_samples, 0).unwrap();
    let t = simulate_coherent(0.5 * W0, omega, 0.3, &grid).unwrap();
    let psf = Psf::gaussian(0.0, W0).unwrap();
    let cfg = CorrelatorConfig {
        mode: Mode::Adiabatic,
        start_stride: 1,
        ..CorrelatorConfig::new(5e-9, 10e-6, 0.0, 0.0, Normalization::AnalyticFlux { dx_th: 0.0 })
    };
    let h = g2_adiabatic(&[t], &psf, &psf, |_| 1.0, &cfg).unwrap();
    let s = &h.weighted_sum;
    let n = h.n_starts as f64;
    for b in 0..period_samples {
        assert!((s[b] - s[b + period_samples]).abs() / n < 1e-3, "bin {b}");
    }
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let e = EmitterParams::default();
    let p = oscillator(0.5);
    let grid = TrajectoryGrid::with_default_burn_in(&p, 10e-9, 3000).unwrap();
    let psf = Psf::gaussian(0.0, W0).unwrap();
    let cfg = CorrelatorConfig::new(20e-9, 2e-6, 0.0, 0.0, Normalization::AnalyticFlux { dx_th: 0.5 * W0 });
    let corr = WeightedCorrelator::new(&e, &broad(), &psf, &psf, &cfg, 10e-9).unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| ensemble_histogram(24, |i| corr.accumulate(&ensemble_member(&p, &grid, 77, i as u64)?)).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(2));
    assert_eq!(one, run(8));
}

#[test]
fn contrast_inverts_as_stop_detector_moves_out() {
    let e = EmitterParams::default();
    let theta = 0.95;
    let p = oscillator(theta);
    let ens = ensemble(&p, 10e-9, 3000, 200, 21);
    let psf1 = Psf::gaussian(0.0, W0).unwrap();
    let lags: Vec<f64> = (0..40).map(|k| (k as f64 + 0.5) * 20e-9).collect();
    let sigma = stationary_g2(&e, PUMP, &lags).unwrap();
    let early = |x2: f64| {
        let psf2 = Psf::gaussian(x2, W0).unwrap();
        let cfg = CorrelatorConfig::new(20e-9, 0.8e-6, 0.0, x2, Normalization::AnalyticFlux { dx_th: theta * W0 });
        let g = g2_weighted(&ens, &e, &broad(), &psf1, &psf2, &cfg).unwrap().normalized().unwrap();
        // Initial motional contrast, past the antibunching dip.
        (5..g.len()).map(|b| g.g2[b] / sigma[b] - 1.0).sum::<f64>() / (g.len() - 5) as f64
    };
    let centre = early(0.0);
    let outside = early(1.5 * W0);
    assert!(centre > 0.0, "{centre}");
    assert!(outside < 0.0, "{outside}");
}

#[test]
fn start_weight_guard() {
    assert!(start_weights_adiabatic(0.95 * W0, W0, 8.3e7, 1.2e6));
    assert!(!start_weights_adiabatic(10.0 * W0, W0, 8.3e7, 1.2e6));
}

// --- photon streams --------------------------------------------------------

fn static_stream(duration: f64, efficiency: f64, dark: f64, seed: u64) -> PhotonStream {
    let t = still(2, duration / 2.0);
    let psf = Psf::gaussian(0.0, W0).unwrap();
    let det = DetectionParams {
        efficiency,
        dark_rate: dark,
    };
    sample_photon_stream(&t, &EmitterParams::default(), &broad(), &psf, &psf, &det, seed).unwrap()
}

#[test]
fn zero_efficiency_without_darks_is_empty() {
    let s = static_stream(1e-3, 0.0, 0.0, 1);
    assert!(s.clicks.is_empty());
}

#[test]
fn static_stream_rate_and_antibunching() {
    let e = EmitterParams::default();
    let (duration, eta) = (0.02, 0.5);
    let s = static_stream(duration, eta, 50.0, 3);
    assert!(s.clicks.windows(2).all(|w| w[0].time <= w[1].time));
    assert!(s.clicks.iter().all(|c| (0.0..=duration).contains(&c.time)));
    let expected = eta * e.gamma_rad * steady_state(&e, PUMP).unwrap().sigma_e / 2.0 * duration;
    for d in [1, 2] {
        let n = s.count(d) as f64;
        assert!((n - expected).abs() < 5.0 * expected.sqrt(), "{n} vs {expected}");
    }
    let cfg = CorrelatorConfig::new(0.5e-9, 10e-9, 0.0, 0.0, Normalization::AnalyticFlux { dx_th: 0.0 });
    let g = correlate_stream(&s, &cfg).unwrap().normalized().unwrap();
    assert!(g.g2[0] < 0.1, "{}", g.g2[0]);
    let cfg = CorrelatorConfig::new(2e-9, 300e-9, 0.0, 0.0, Normalization::AnalyticFlux { dx_th: 0.0 });
    let g = correlate_stream(&s, &cfg).unwrap().normalized().unwrap();
    // Agreement with the emitter's own correlation, bin by bin.
    let lags: Vec<f64> = (0..3000).map(|k| k as f64 * 0.1e-9).collect();
    let fine = stationary_g2(&e, PUMP, &lags).unwrap();
    let mut z2 = 0.0;
    for b in 0..g.len() {
        let avg = fine[20 * b..20 * b + 20].iter().sum::<f64>() / 20.0;
        z2 += ((g.g2[b] - avg) / g.stderr[b]).powi(2);
    }
    let chi = z2 / g.len() as f64;
    assert!(chi < 2.0, "reduced chi² {chi}");
}

#[test]
fn dark_count_channels_are_uncorrelated() {
    let s = static_stream(2.0, 0.0, 2e4, 5);
    let cfg = CorrelatorConfig::new(5e-6, 100e-6, 0.0, 0.0, Normalization::AnalyticFlux { dx_th: 0.0 });
    let g = correlate_stream(&s, &cfg).unwrap().normalized().unwrap();
    for b in 0..g.len() {
        assert!((g.g2[b] - 1.0).abs() < 4.0 * g.stderr[b], "bin {b}: {} ± {}", g.g2[b], g.stderr[b]);
    }
}

#[test]
fn split_stream_matches_whole_except_boundary() {
    let s = static_stream(0.01, 0.3, 0.0, 8);
    let half = s.duration / 2.0;
    let part = |lo: f64, hi: f64| PhotonStream {
        clicks: s
            .clicks
            .iter()
            .filter(|c| c.time >= lo && c.time < hi)
            .map(|c| Click {
                time: c.time - lo,
                detector: c.detector,
            })
            .collect(),
        duration: hi - lo,
        seed: s.seed,
    };
    let cfg = CorrelatorConfig::new(5e-9, 100e-9, 0.0, 0.0, Normalization::AnalyticFlux { dx_th: 0.0 });
    let whole = correlate_stream(&s, &cfg).unwrap();
    let split = merge(&correlate_stream(&part(0.0, half), &cfg).unwrap(), &correlate_stream(&part(half, s.duration), &cfg).unwrap()).unwrap();
    // Pairs lost at the cut: starts within tau_max before it.
    let starts: Vec<f64> = s
        .clicks
        .iter()
        .filter(|c| c.detector == 1 && ((half - cfg.tau_max..half).contains(&c.time) || c.time > s.duration - 2.0 * cfg.tau_max))
        .map(|c| c.time)
        .collect();
    let stops: Vec<f64> = s.clicks.iter().filter(|c| c.detector == 2).map(|c| c.time).collect();
    let bound: usize = starts
        .iter()
        .map(|&t| stops.iter().filter(|&&u| u >= t && u < t + cfg.tau_max).count())
        .sum();
    for b in 0..whole.n_bins() {
        assert!((whole.weighted_sum[b] - split.weighted_sum[b]).abs() <= bound as f64);
    }
    let total: f64 = whole.weighted_sum.iter().sum();
    assert!(bound as f64 <= 0.02 * total);
}

#[test]
fn thinning_sampler_matches_renewal_rate() {
    let e = EmitterParams::default();
    // A pump waist far beyond the motion behaves as broad illumination.
    let pump = PumpProfile::Gaussian {
        center: 0.0,
        waist: 1e3 * W0,
        i0: 1.0,
    };
    let dt = 5e-10;
    let t = still(4_000_000, dt);
    let psf = Psf::gaussian(0.0, W0).unwrap();
    let det = DetectionParams {
        efficiency: 0.5,
        dark_rate: 0.0,
    };
    let s = sample_photon_stream(&t, &e, &pump, &psf, &psf, &det, 12).unwrap();
    let expected = 0.5 * e.gamma_rad * steady_state(&e, PUMP).unwrap().sigma_e / 2.0 * t.duration();
    let n = s.count(1) as f64;
    assert!((n - expected).abs() < 5.0 * expected.sqrt(), "{n} vs {expected}");
    let cfg = CorrelatorConfig::new(0.5e-9, 10e-9, 0.0, 0.0, Normalization::AnalyticFlux { dx_th: 0.0 });
    let g = correlate_stream(&s, &cfg).unwrap().normalized().unwrap();
    assert!(g.g2[0] < 0.1, "{}", g.g2[0]);

    let coarse = still(10, 1e-8);
    assert!(matches!(
        sample_photon_stream(&coarse, &e, &pump, &psf, &psf, &det, 1),
        Err(nanomotion::Error::StepTooCoarse(_))
    ));
}

#[test]
fn gaussian_pump_weighted_path_matches_broad_limit() {
    let e = EmitterParams::default();
    let p = oscillator(0.3);
    let ens = ensemble(&p, 0.5e-9, 1200, 2, 6);
    let psf = Psf::gaussian(0.0, W0).unwrap();
    let cfg = CorrelatorConfig::new(1e-9, 20e-9, 0.0, 0.0, Normalization::AnalyticFlux { dx_th: 0.3 * W0 });
    let wide = PumpProfile::Gaussian {
        center: 0.0,
        waist: 1e4 * W0,
        i0: 1.0,
    };
    let a = g2_weighted(&ens, &e, &wide, &psf, &psf, &cfg).unwrap().normalized().unwrap();
    let b = g2_weighted(&ens, &e, &broad(), &psf, &psf, &cfg).unwrap().normalized().unwrap();
    for k in 0..a.len() {
        assert!((a.g2[k] - b.g2[k]).abs() < 1e-4, "bin {k}: {} {}", a.g2[k], b.g2[k]);
    }
}

#[test]
fn stream_mean_rate_follows_motion() {
    // Moving emitter: detected rate is efficiency·γ·σ̄e·Φ/2 with Φ the mean flux.
    let e = EmitterParams::default();
    let theta = 0.5;
    let p = oscillator(theta);
    let grid = TrajectoryGrid::with_default_burn_in(&p, 10e-9, 1_000_000).unwrap();
    let psf = Psf::gaussian(0.0, W0).unwrap();
    let det = DetectionParams {
        efficiency: 0.05,
        dark_rate: 0.0,
    };
    let mut n = 0usize;
    let mut duration = 0.0;
    for i in 0..4 {
        let t = ensemble_member(&p, &grid, 2, i).unwrap();
        let s = sample_photon_stream(&t, &e, &broad(), &psf, &psf, &det, member_seed(2, i)).unwrap();
        n += s.count(1);
        duration += s.duration;
    }
    let phi = mean_flux(&psf, theta * W0).unwrap();
    let expected = 0.05 * e.gamma_rad * steady_state(&e, PUMP).unwrap().sigma_e * phi / 2.0 * duration;
    // Motion makes the counts over-dispersed; allow a few percent.
    assert!((n as f64 / expected - 1.0).abs() < 0.03, "{n} vs {expected}");
}
