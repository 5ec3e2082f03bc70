//! Photon-level simulation: stochastic emission along a trajectory, a
//! two-detector click record, and the start-stop histogram of that record.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::{CorrelationHistogram, CorrelatorConfig, Source};
use crate::emitter::{self, EmitterParams};
use crate::optics::{psf_eval, Psf, PumpProfile};
use crate::rng::{substream, Purpose};
use crate::trajectory::Trajectory;
use crate::{Error, Result};

/// Time blocks used for the standard error of a stream histogram.
const STREAM_BLOCKS: usize = 16;
/// The survival table is extended until it drops below this value.
const SURVIVAL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Click {
    pub time: f64,
    /// 1 or 2.
    pub detector: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonStream {
    /// Sorted by time.
    pub clicks: Vec<Click>,
    pub duration: f64,
    pub seed: u64,
}

impl PhotonStream {
    pub fn count(&self, detector: u8) -> usize {
        self.clicks.iter().filter(|c| c.detector == detector).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionParams {
    /// Collection times detection efficiency per detector.
    pub efficiency: f64,
    /// Dark counts per second per detector.
    pub dark_rate: f64,
}

impl DetectionParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::invalid("efficiency must lie in [0, 1]"));
        }
        if !(self.dark_rate >= 0.0) || !self.dark_rate.is_finite() {
            return Err(Error::invalid("dark_rate must be >= 0"));
        }
        Ok(())
    }
}

/// Probability of no emission since the last one, on a uniform grid.
struct Survival {
    h: f64,
    values: Vec<f64>,
}

impl Survival {
    fn new(e: &EmitterParams, pump: f64) -> Result<Self> {
        let h = emitter::STEP_FRACTION / e.max_rate(pump);
        let mut s = emitter::EmitterState::GROUND.as_array();
        let mut values = vec![1.0];
        let cap = 50_000_000usize;
        while *values.last().expect("non-empty") > SURVIVAL_FLOOR {
            s = emitter::rk4_step_no_emission(e, s, [pump; 3], h);
            values.push(s[0] + s[1] + s[2]);
            if values.len() > cap {
                return Err(Error::UnsupportedRegime(
                    "no-emission survival decays too slowly to tabulate".into(),
                ));
            }
        }
        Ok(Self { h, values })
    }

    fn span(&self) -> f64 {
        self.h * (self.values.len() - 1) as f64
    }

    /// Waiting time with `S(t) = u`.
    fn invert(&self, u: f64) -> f64 {
        let v = &self.values;
        // First index with S <= u; S is non-increasing.
        let k = v.partition_point(|&s| s > u);
        if k == 0 {
            return 0.0;
        }
        if k >= v.len() {
            return self.span();
        }
        let (s0, s1) = (v[k - 1], v[k]);
        let f = if s0 > s1 { (s0 - u) / (s0 - s1) } else { 0.0 };
        self.h * ((k - 1) as f64 + f)
    }
}

fn detect(
    rng: &mut ChaCha8Rng,
    t: f64,
    traj: &Trajectory,
    psfs: [&Psf; 2],
    efficiency: f64,
    clicks: &mut Vec<Click>,
) -> Result<()> {
    let d = if rng.random::<bool>() { 0 } else { 1 };
    let x = traj.position_at(t);
    let p = (efficiency * psf_eval(psfs[d], x)?).clamp(0.0, 1.0);
    if rng.random::<f64>() < p {
        clicks.push(Click {
            time: t,
            detector: d as u8 + 1,
        });
    }
    Ok(())
}

/// Samples the click record of an emitter following `traj`.
///
/// Photons go to either detector with equal probability and are detected
/// with probability `efficiency·Π_d(ξ(t))`. Under broad illumination the
/// emission process is a renewal process and waiting times are drawn from
/// the tabulated no-emission survival; otherwise the conditional
/// populations are integrated along the trajectory and each substep emits
/// with probability `γ·ρe·h`.
pub fn sample_photon_stream(
    traj: &Trajectory,
    e: &EmitterParams,
    pump: &PumpProfile,
    psf1: &Psf,
    psf2: &Psf,
    detection: &DetectionParams,
    seed: u64,
) -> Result<PhotonStream> {
    e.validate()?;
    pump.validate()?;
    detection.validate()?;
    if traj.len() < 2 {
        return Err(Error::Empty("trajectory has fewer than two samples".into()));
    }
    let duration = traj.duration();
    let psfs = [psf1, psf2];
    let mut rng = substream(seed, Purpose::Photons, 0);
    let mut clicks = Vec::new();
    let rate_per = e.pump_rate_per_intensity;

    if pump.is_broad() {
        let survival = Survival::new(e, rate_per * pump.peak_intensity())?;
        let mut t = -survival.span();
        loop {
            let u: f64 = rng.random();
            t += survival.invert(u.max(f64::MIN_POSITIVE));
            if t >= duration {
                break;
            }
            if t >= 0.0 {
                detect(&mut rng, t, traj, psfs, detection.efficiency, &mut clicks)?;
            }
        }
    } else {
        let peak = rate_per * pump.peak_intensity();
        let dt = traj.dt;
        if dt * e.max_rate(peak) > emitter::MAX_DT_FRACTION {
            return Err(Error::StepTooCoarse(format!(
                "dt·max_rate = {:.3} exceeds {}",
                dt * e.max_rate(peak),
                emitter::MAX_DT_FRACTION
            )));
        }
        let n_sub = emitter::substeps(e.max_rate(peak), dt);
        let h = dt / n_sub as f64;
        let pumps: Vec<f64> = traj.positions.iter().map(|&x| rate_per * pump.intensity(x)).collect();
        let mut s = emitter::steady_state(e, pumps[0])?.as_array();
        for i in 0..traj.len() {
            let p0 = pumps[i];
            let p1 = *pumps.get(i + 1).unwrap_or(&p0);
            let lerp = |f: f64| p0 + f * (p1 - p0);
            for j in 0..n_sub {
                let t = traj.time(i) + j as f64 * h;
                let p_emit = e.gamma_rad * s[1] * h;
                let u: f64 = rng.random();
                if u < p_emit {
                    detect(&mut rng, t + (u / p_emit) * h, traj, psfs, detection.efficiency, &mut clicks)?;
                    s = emitter::EmitterState::GROUND.as_array();
                } else {
                    let f = |k: f64| lerp((j as f64 + k) / n_sub as f64);
                    s = emitter::rk4_step_no_emission(e, s, [f(0.0), f(0.5), f(1.0)], h);
                    let total = s[0] + s[1] + s[2];
                    if !(total > 0.0) {
                        return Err(Error::PopulationDrift { drift: 1.0, time: t });
                    }
                    s = [s[0] / total, s[1] / total, s[2] / total];
                }
            }
        }
    }

    if detection.dark_rate > 0.0 {
        for d in 0..2u8 {
            let mut r = substream(seed, Purpose::DarkCounts, d as u64);
            let n = Poisson::new(detection.dark_rate * duration)
                .map_err(|err| Error::invalid(format!("dark count rate: {err}")))?
                .sample(&mut r) as usize;
            clicks.extend((0..n).map(|_| Click {
                time: r.random::<f64>() * duration,
                detector: d + 1,
            }));
        }
    }
    clicks.sort_by(|a, b| a.time.total_cmp(&b.time));
    Ok(PhotonStream { clicks, duration, seed })
}

/// Start-stop histogram of detector-2 delays after each detector-1 click.
///
/// Starts later than `duration − tau_max` are discarded so that every start
/// sees the full delay range. The uncorrelated level of a block with `n₁`
/// starts is `n₁·N₂·τ_bin/T`. The record is split into 16 time blocks for
/// the standard error.
pub fn correlate_stream(stream: &PhotonStream, cfg: &CorrelatorConfig) -> Result<CorrelationHistogram> {
    cfg.validate()?;
    let t_total = stream.duration;
    if stream.clicks.is_empty() {
        return Err(Error::Empty("photon stream has no clicks".into()));
    }
    if cfg.tau_max > t_total / 10.0 {
        return Err(Error::invalid(format!(
            "tau_max = {:e} s exceeds a tenth of the record ({:e} s)",
            cfg.tau_max, t_total
        )));
    }
    let n_bins = cfg.n_bins();
    let span = n_bins as f64 * cfg.tau_bin;
    let t_last = t_total - cfg.tau_max;
    let stops: Vec<f64> = stream.clicks.iter().filter(|c| c.detector == 2).map(|c| c.time).collect();
    let n2 = stops.len() as f64;
    let rate2 = n2 / t_total;

    let mut sums = vec![vec![0.0; n_bins]; STREAM_BLOCKS];
    let mut counts = vec![0u64; STREAM_BLOCKS];
    let mut lo = 0usize;
    for c in stream.clicks.iter().filter(|c| c.detector == 1 && c.time <= t_last) {
        let b = ((c.time / t_last * STREAM_BLOCKS as f64) as usize).min(STREAM_BLOCKS - 1);
        counts[b] += 1;
        while lo < stops.len() && stops[lo] < c.time {
            lo += 1;
        }
        for &t2 in &stops[lo..] {
            let d = t2 - c.time;
            if d >= span {
                break;
            }
            let k = ((d / cfg.tau_bin) as usize).min(n_bins - 1);
            sums[b][k] += 1.0;
        }
    }
    let mut h = CorrelationHistogram::empty(*cfg, 0.5 * cfg.tau_bin, Source::Stream);
    for (s, &n1) in sums.iter().zip(&counts) {
        h.add_block(s, n1 as f64 * rate2 * cfg.tau_bin, n1);
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlator::Normalization;
    use crate::trajectory::DriveKind;

    fn still(n: usize, dt: f64) -> Trajectory {
        Trajectory {
            positions: vec![0.0; n],
            dt,
            seed: 0,
            drive_kind: DriveKind::Thermal,
        }
    }

    #[test]
    fn survival_inverse_is_monotone() {
        let e = EmitterParams::default();
        let s = Survival::new(&e, 8.3e7).unwrap();
        assert_eq!(s.invert(1.0), 0.0);
        let a = s.invert(0.9);
        let b = s.invert(0.5);
        let c = s.invert(1e-6);
        assert!(0.0 < a && a < b && b < c && c <= s.span());
    }

    #[test]
    fn mean_emission_rate_matches_steady_state() {
        // Renewal theory: the mean waiting time is 1/(γ·σ̄e).
        let e = EmitterParams::default();
        let pump = 8.3e7;
        let s = Survival::new(&e, pump).unwrap();
        let mean_wait: f64 = s.values.iter().sum::<f64>() * s.h - 0.5 * s.h;
        let rate = e.gamma_rad * emitter::steady_state(&e, pump).unwrap().sigma_e;
        assert!((mean_wait * rate - 1.0).abs() < 1e-4, "{}", mean_wait * rate);
    }

    #[test]
    fn dark_counts_only_are_uncorrelated() {
        let traj = still(1000, 1e-6);
        let psf = Psf::gaussian(0.0, 1.0).unwrap();
        let det = DetectionParams {
            efficiency: 0.0,
            dark_rate: 2e6,
        };
        let pump = PumpProfile::Broad { i0: 1.0 };
        let st = sample_photon_stream(&traj, &EmitterParams::default(), &pump, &psf, &psf, &det, 5).unwrap();
        let n = st.clicks.len() as f64;
        assert!((n - 4000.0).abs() < 5.0 * 4000f64.sqrt());
        let cfg = CorrelatorConfig::new(1e-6, 1e-4, 0.0, 0.0, Normalization::AnalyticFlux { dx_th: 0.0 });
        let g = correlate_stream(&st, &cfg).unwrap().normalized().unwrap();
        let mean = g.g2.iter().sum::<f64>() / g.len() as f64;
        assert!((mean - 1.0).abs() < 0.05, "{mean}");
    }

    #[test]
    fn stream_requires_long_record() {
        let st = PhotonStream {
            clicks: vec![Click { time: 0.1, detector: 1 }],
            duration: 1.0,
            seed: 0,
        };
        let cfg = CorrelatorConfig::new(0.01, 0.2, 0.0, 0.0, Normalization::AnalyticFlux { dx_th: 0.0 });
        assert!(correlate_stream(&st, &cfg).is_err());
        let empty = PhotonStream {
            clicks: vec![],
            duration: 1.0,
            seed: 0,
        };
        let cfg = CorrelatorConfig::new(0.001, 0.01, 0.0, 0.0, Normalization::AnalyticFlux { dx_th: 0.0 });
        assert!(matches!(correlate_stream(&empty, &cfg), Err(Error::Empty(_))));
    }
}
