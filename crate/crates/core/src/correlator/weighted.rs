//! Trajectory-based estimators: weighted start times with Bloch integration,
//! and the adiabatic factorised form.

use rustfft::{num_complex::Complex64, FftPlanner};

use super::{ensemble_histogram, CorrelationHistogram, CorrelatorConfig, Mode, Normalization, Source};
use crate::emitter::{self, EmitterParams};
use crate::optics::{gaussian_average, mean_flux, mean_flux_numeric, psf_eval, psf_values, Psf, PumpProfile};
use crate::trajectory::Trajectory;
use crate::{Error, Result};

/// Above this many multiply-adds per block the lag sums go through an FFT.
const DIRECT_LIMIT: usize = 1 << 22;

/// `c[k] = Σ_i a[i]·b[i+k]` for `k < n_lags`, where `a` is non-zero only at
/// `starts` and every `start + n_lags <= b.len()`.
fn lag_sums(starts: &[(usize, f64)], b: &[f64], n_lags: usize) -> Vec<f64> {
    if starts.len().saturating_mul(n_lags) <= DIRECT_LIMIT {
        let mut acc = vec![0.0; n_lags];
        for &(i, w) in starts {
            for (a, &v) in acc.iter_mut().zip(&b[i..i + n_lags]) {
                *a += w * v;
            }
        }
        return acc;
    }
    let size = (b.len() + n_lags).next_power_of_two();
    let mut fa = vec![Complex64::new(0.0, 0.0); size];
    for &(i, w) in starts {
        fa[i].re += w;
    }
    let mut fb: Vec<Complex64> = b
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(size);
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x = x.conj() * y;
    }
    planner.plan_fft_inverse(size).process(&mut fa);
    let scale = 1.0 / size as f64;
    fa[..n_lags].iter().map(|z| z.re * scale).collect()
}

/// Start indices of a record of `n` samples, split into `blocks` groups.
fn start_blocks(n: usize, n_lags: usize, stride: usize, blocks: usize) -> Result<Vec<Vec<usize>>> {
    if n < n_lags + 1 {
        return Err(Error::invalid(format!(
            "trajectory of {n} samples is shorter than tau_max ({n_lags} samples)"
        )));
    }
    let starts: Vec<usize> = (0..=n - n_lags).step_by(stride).collect();
    let per = starts.len().div_ceil(blocks);
    Ok(starts.chunks(per.max(1)).map(|c| c.to_vec()).collect())
}

fn check_centres(cfg: &CorrelatorConfig, psf1: &Psf, psf2: &Psf) -> Result<()> {
    let tol = 1e-12 * psf1.w0.max(psf2.w0);
    if (psf1.center - cfg.x1).abs() > tol || (psf2.center - cfg.x2).abs() > tol {
        return Err(Error::invalid("psf centres must equal the configured x1, x2"));
    }
    Ok(())
}

fn check_dt(expected: f64, t: &Trajectory) -> Result<()> {
    if (t.dt - expected).abs() > 1e-12 * expected {
        return Err(Error::invalid(format!(
            "trajectory dt {:e} differs from the correlator dt {expected:e}",
            t.dt
        )));
    }
    Ok(())
}

fn mean_profile_flux(psf: &Psf, dx: f64) -> Result<f64> {
    if psf.is_gaussian() {
        mean_flux(psf, dx)
    } else {
        mean_flux_numeric(psf, dx)
    }
}

/// Shared binning: lag sums weighted by `sigma_lag`, averaged over the
/// samples of each bin.
#[derive(Debug, Clone)]
struct Binning {
    cfg: CorrelatorConfig,
    dt: f64,
    per_bin: usize,
    n_bins: usize,
}

impl Binning {
    fn new(cfg: &CorrelatorConfig, dt: f64) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg: *cfg,
            dt,
            per_bin: cfg.samples_per_bin(dt)?,
            n_bins: cfg.n_bins(),
        })
    }

    fn n_lags(&self) -> usize {
        self.per_bin * self.n_bins
    }

    fn lag_offset(&self) -> f64 {
        0.5 * (self.per_bin as f64 - 1.0) * self.dt
    }

    fn bin(&self, per_lag: &[f64]) -> Vec<f64> {
        per_lag
            .chunks(self.per_bin)
            .map(|c| c.iter().sum::<f64>() / self.per_bin as f64)
            .collect()
    }

    fn empty(&self, source: Source) -> CorrelationHistogram {
        CorrelationHistogram::empty(self.cfg, self.lag_offset(), source)
    }

    /// Histogram for start weights `w` and stop factors `stop`, with a
    /// start-independent delay factor `sigma_lag`.
    fn factorized(
        &self,
        w: &[f64],
        stop: &[f64],
        sigma_lag: &[f64],
        norm_per_start: f64,
        source: Source,
    ) -> Result<CorrelationHistogram> {
        let n_lags = self.n_lags();
        let mut h = self.empty(source);
        for block in start_blocks(stop.len(), n_lags, self.cfg.start_stride, self.cfg.blocks_per_trajectory)? {
            let starts: Vec<(usize, f64)> = block.iter().map(|&i| (i, w[i])).collect();
            let sums = lag_sums(&starts, stop, n_lags);
            let per_lag: Vec<f64> = sums.iter().zip(sigma_lag).map(|(s, g)| s * g).collect();
            h.add_block(&self.bin(&per_lag), norm_per_start * block.len() as f64, block.len() as u64);
        }
        Ok(h)
    }
}

/// Weighted-start estimator with Bloch integration (SI scheme).
///
/// Each start time `t` is weighted by `σ̄e(ξ(t))·Π₁(ξ(t))`; each delay
/// contributes `σe(τ)·Π₂(ξ(t+τ))`, with `σe` integrated from the ground
/// state along the trajectory. Under broad illumination the Bloch solution
/// does not depend on position and is computed once.
#[derive(Debug, Clone)]
pub struct WeightedCorrelator {
    binning: Binning,
    emitter: EmitterParams,
    pump: PumpProfile,
    psf1: Psf,
    psf2: Psf,
    /// `σe(k·dt)` from the ground state, broad pump only.
    sigma_lag: Option<Vec<f64>>,
    norm_per_start: f64,
}

impl WeightedCorrelator {
    pub fn new(e: &EmitterParams, pump: &PumpProfile, psf1: &Psf, psf2: &Psf, cfg: &CorrelatorConfig, dt: f64) -> Result<Self> {
        e.validate()?;
        pump.validate()?;
        if cfg.mode != Mode::FullBloch {
            return Err(Error::invalid("weighted estimator requires mode = full_bloch"));
        }
        check_centres(cfg, psf1, psf2)?;
        let binning = Binning::new(cfg, dt)?;
        let rate = |x: f64| e.pump_rate_per_intensity * pump.intensity(x);
        let sbar = |x: f64| emitter::steady_state(e, rate(x)).map(|s| s.sigma_e).unwrap_or(0.0);
        let sigma_lag = if pump.is_broad() {
            let taus: Vec<f64> = (0..binning.n_lags()).map(|k| k as f64 * dt).collect();
            Some(emitter::excited_population(e, rate(0.0), &taus)?)
        } else {
            None
        };
        let norm_per_start = match cfg.normalization {
            Normalization::AnalyticFlux { dx_th } => {
                if pump.is_broad() {
                    let s = emitter::steady_state(e, rate(0.0))?.sigma_e;
                    s * s * mean_profile_flux(psf1, dx_th)? * mean_profile_flux(psf2, dx_th)?
                } else {
                    let f1 = gaussian_average(|x| sbar(x) * psf_eval(psf1, x).unwrap_or(0.0), dx_th)?;
                    let f2 = gaussian_average(|x| sbar(x) * psf_eval(psf2, x).unwrap_or(0.0), dx_th)?;
                    f1 * f2
                }
            }
            Normalization::TailAverage { .. } => 0.0,
        };
        Ok(Self {
            binning,
            emitter: *e,
            pump: *pump,
            psf1: psf1.clone(),
            psf2: psf2.clone(),
            sigma_lag,
            norm_per_start,
        })
    }

    /// Histogram of one trajectory.
    pub fn accumulate(&self, t: &Trajectory) -> Result<CorrelationHistogram> {
        check_dt(self.binning.dt, t)?;
        let pi1 = psf_values(&self.psf1, &t.positions)?;
        let pi2 = psf_values(&self.psf2, &t.positions)?;
        let e = &self.emitter;
        let rate_per = e.pump_rate_per_intensity;
        if let Some(sigma_lag) = &self.sigma_lag {
            let sbar = emitter::steady_state(e, rate_per * self.pump.intensity(0.0))?.sigma_e;
            let w: Vec<f64> = pi1.iter().map(|p| sbar * p).collect();
            return self
                .binning
                .factorized(&w, &pi2, sigma_lag, self.norm_per_start, Source::Weighted);
        }
        // Position-dependent pump: integrate from every start.
        let pumps: Vec<f64> = t.positions.iter().map(|&x| rate_per * self.pump.intensity(x)).collect();
        let peak = rate_per * self.pump.peak_intensity();
        let dt = self.binning.dt;
        let n_sub = emitter::substeps(e.max_rate(peak), dt);
        let h = dt / n_sub as f64;
        let n_lags = self.binning.n_lags();
        let mut hist = self.binning.empty(Source::Weighted);
        let blocks = start_blocks(t.len(), n_lags, self.binning.cfg.start_stride, self.binning.cfg.blocks_per_trajectory)?;
        for block in blocks {
            let mut per_lag = vec![0.0; n_lags];
            for &i in &block {
                let w = emitter::steady_state(e, pumps[i])?.sigma_e * pi1[i];
                if w == 0.0 {
                    continue;
                }
                let mut s = [1.0, 0.0, 0.0];
                for k in 0..n_lags {
                    per_lag[k] += w * s[1] * pi2[i + k];
                    if k + 1 == n_lags {
                        break;
                    }
                    let (p0, p1) = (pumps[i + k], pumps[i + k + 1]);
                    for j in 0..n_sub {
                        let f0 = j as f64 / n_sub as f64;
                        let f1 = (j as f64 + 0.5) / n_sub as f64;
                        let f2 = (j as f64 + 1.0) / n_sub as f64;
                        let lerp = |f: f64| p0 + f * (p1 - p0);
                        s = emitter::rk4_step(e, s, [lerp(f0), lerp(f1), lerp(f2)], h);
                    }
                }
                let drift = (s[0] + s[1] + s[2] - 1.0).abs();
                if drift > emitter::DRIFT_LIMIT {
                    return Err(Error::PopulationDrift {
                        drift,
                        time: t.time(i + n_lags),
                    });
                }
            }
            hist.add_block(&self.binning.bin(&per_lag), self.norm_per_start * block.len() as f64, block.len() as u64);
        }
        Ok(hist)
    }
}

/// Factorised estimator `σe(τ)·⟨Π₁(ξ(t))Π₂(ξ(t+τ))⟩` for broad illumination,
/// with `σe` normalised to one at long delays.
#[derive(Debug, Clone)]
pub struct AdiabaticCorrelator {
    binning: Binning,
    psf1: Psf,
    psf2: Psf,
    sigma_lag: Vec<f64>,
    norm_per_start: f64,
}

impl AdiabaticCorrelator {
    pub fn new<F: Fn(f64) -> f64>(psf1: &Psf, psf2: &Psf, sigma_e_of_tau: F, cfg: &CorrelatorConfig, dt: f64) -> Result<Self> {
        if cfg.mode != Mode::Adiabatic {
            return Err(Error::invalid("adiabatic estimator requires mode = adiabatic"));
        }
        check_centres(cfg, psf1, psf2)?;
        let binning = Binning::new(cfg, dt)?;
        let sigma_lag: Vec<f64> = (0..binning.n_lags()).map(|k| sigma_e_of_tau(k as f64 * dt)).collect();
        let norm_per_start = match cfg.normalization {
            Normalization::AnalyticFlux { dx_th } => mean_profile_flux(psf1, dx_th)? * mean_profile_flux(psf2, dx_th)?,
            Normalization::TailAverage { .. } => 0.0,
        };
        Ok(Self {
            binning,
            psf1: psf1.clone(),
            psf2: psf2.clone(),
            sigma_lag,
            norm_per_start,
        })
    }

    pub fn accumulate(&self, t: &Trajectory) -> Result<CorrelationHistogram> {
        check_dt(self.binning.dt, t)?;
        let pi1 = psf_values(&self.psf1, &t.positions)?;
        let pi2 = psf_values(&self.psf2, &t.positions)?;
        self.binning
            .factorized(&pi1, &pi2, &self.sigma_lag, self.norm_per_start, Source::Adiabatic)
    }
}

/// Weighted-start estimator over an ensemble, one block per member (or
/// `blocks_per_trajectory` blocks each).
pub fn g2_weighted(
    ensemble: &[Trajectory],
    e: &EmitterParams,
    pump: &PumpProfile,
    psf1: &Psf,
    psf2: &Psf,
    cfg: &CorrelatorConfig,
) -> Result<CorrelationHistogram> {
    let first = ensemble.first().ok_or_else(|| Error::Empty("empty ensemble".into()))?;
    let c = WeightedCorrelator::new(e, pump, psf1, psf2, cfg, first.dt)?;
    ensemble_histogram(ensemble.len(), |i| c.accumulate(&ensemble[i]))
}

/// Adiabatic estimator over an ensemble.
pub fn g2_adiabatic<F: Fn(f64) -> f64>(
    ensemble: &[Trajectory],
    psf1: &Psf,
    psf2: &Psf,
    sigma_e_of_tau: F,
    cfg: &CorrelatorConfig,
) -> Result<CorrelationHistogram> {
    let first = ensemble.first().ok_or_else(|| Error::Empty("empty ensemble".into()))?;
    let c = AdiabaticCorrelator::new(psf1, psf2, sigma_e_of_tau, cfg, first.dt)?;
    ensemble_histogram(ensemble.len(), |i| c.accumulate(&ensemble[i]))
}
