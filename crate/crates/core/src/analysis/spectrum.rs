use std::f64::consts::PI;

use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::correlator::G2Curve;
use crate::numeric::{levenberg_marquardt, LmOptions};
use crate::{Error, Result};

/// Zero padding applied on top of the next power of two.
const PAD_FACTOR: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Hann,
    Rectangular,
}

impl std::str::FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hann" => Ok(Window::Hann),
            "rect" | "rectangular" | "none" => Ok(Window::Rectangular),
            other => Err(Error::invalid(format!("unknown window '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Hz, from zero to the Nyquist frequency.
    pub freq: Vec<f64>,
    /// `|FT[w·(g²−1)]|·Δτ`.
    pub psd: Vec<f64>,
    pub window: Window,
    /// `Δτ·Σ (w·(g²−1))²` over the symmetric, tapered record.
    pub time_energy: f64,
}

impl Spectrum {
    pub fn df(&self) -> f64 {
        self.freq.get(1).copied().unwrap_or(0.0)
    }

    /// Two-sided `Σ psd²·Δf`; equals [`Spectrum::time_energy`].
    pub fn parseval_energy(&self) -> f64 {
        let n = self.psd.len();
        if n < 2 {
            return 0.0;
        }
        let inner: f64 = self.psd[1..n - 1].iter().map(|p| p * p).sum();
        (self.psd[0].powi(2) + 2.0 * inner + self.psd[n - 1].powi(2)) * self.df()
    }

    /// Highest local maximum above zero frequency, as `(index, freq)`.
    pub fn peak(&self) -> Option<(usize, f64)> {
        let p = &self.psd;
        (1..p.len().saturating_sub(1))
            .filter(|&k| p[k] > p[k - 1] && p[k] >= p[k + 1])
            .max_by(|&a, &b| p[a].total_cmp(&p[b]))
            .map(|k| (k, self.freq[k]))
    }

    /// Full width at half maximum around the peak at index `k` (Hz).
    pub fn fwhm(&self, k: usize) -> f64 {
        let half = 0.5 * self.psd[k];
        let mut lo = k;
        while lo > 0 && self.psd[lo] > half {
            lo -= 1;
        }
        let mut hi = k;
        while hi + 1 < self.psd.len() && self.psd[hi] > half {
            hi += 1;
        }
        (self.freq[hi] - self.freq[lo]).max(self.df())
    }
}

fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|k| (PI * k as f64 / (n - 1) as f64).sin().powi(2))
        .collect()
}

/// Spectrum of `g²(τ) − 1`.
///
/// Bins with `τ < mask_before` are replaced by the first unmasked value.
/// The record is mirrored to negative delays, tapered and zero padded.
pub fn spectrum_from_g2(curve: &G2Curve, window: Window, mask_before: f64) -> Result<Spectrum> {
    let n = curve.len();
    if n < 4 {
        return Err(Error::Empty("spectrum needs at least four bins".into()));
    }
    let dt = curve.tau[1] - curve.tau[0];
    if !(dt > 0.0) || curve.tau.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt) {
        return Err(Error::invalid("spectrum requires uniformly spaced bins"));
    }
    let first = curve
        .tau
        .iter()
        .position(|&t| t >= mask_before)
        .ok_or_else(|| Error::invalid("mask covers every bin"))?;
    let y: Vec<f64> = (0..n).map(|k| curve.g2[k.max(first)] - 1.0).collect();
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("g² contains non-finite values"));
    }
    let sym: Vec<f64> = y[1..].iter().rev().chain(y.iter()).copied().collect();
    let w = match window {
        Window::Hann => hann(sym.len()),
        Window::Rectangular => vec![1.0; sym.len()],
    };
    let tapered: Vec<f64> = sym.iter().zip(&w).map(|(a, b)| a * b).collect();
    let time_energy = tapered.iter().map(|v| v * v).sum::<f64>() * dt;

    let len = sym.len().next_power_of_two() * PAD_FACTOR;
    let mut buf: Vec<Complex64> = tapered
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(len)
        .collect();
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let half = len / 2;
    Ok(Spectrum {
        freq: (0..=half).map(|k| k as f64 / (len as f64 * dt)).collect(),
        psd: buf[..=half].iter().map(|z| z.norm() * dt).collect(),
        window,
        time_energy,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalSpectrumFit {
    pub omega_m: f64,
    pub gamma_m: f64,
    pub amplitude: f64,
    pub offset: f64,
    /// `sqrt(Ω² − Γ²/2)/2π`.
    pub peak_hz: f64,
    /// `Γ/2π`.
    pub width_hz: f64,
}

/// Fits `A/((Ω²−ω²)² + Γ²ω²) + B` to the spectrum between `f_lo` and `f_hi`.
pub fn fit_thermal_spectrum(spec: &Spectrum, f_lo: f64, f_hi: f64) -> Result<ThermalSpectrumFit> {
    let idx: Vec<usize> = (0..spec.freq.len())
        .filter(|&k| spec.freq[k] >= f_lo && spec.freq[k] <= f_hi)
        .collect();
    if idx.len() < 8 {
        return Err(Error::invalid("fewer than eight spectral bins in the fit band"));
    }
    let (k_peak, f_peak) = idx
        .iter()
        .copied()
        .filter(|&k| k > 0 && k + 1 < spec.psd.len())
        .filter(|&k| spec.psd[k] > spec.psd[k - 1] && spec.psd[k] >= spec.psd[k + 1])
        .max_by(|&a, &b| spec.psd[a].total_cmp(&spec.psd[b]))
        .map(|k| (k, spec.freq[k]))
        .ok_or_else(|| Error::NonConvergence("no spectral peak in the fit band".into()))?;
    let peak = spec.psd[k_peak];
    let w0 = 2.0 * PI * f_peak;
    let g0 = 2.0 * PI * spec.fwhm(k_peak);
    let a0 = peak * (g0 * w0).powi(2);
    let model = |p: &[f64], f: f64| {
        let w = 2.0 * PI * f;
        let (om, ga) = (p[0] * w0, p[1] * g0);
        p[2] * a0 / ((om * om - w * w).powi(2) + ga * ga * w * w) + p[3] * peak
    };
    let residual = |p: &[f64]| -> Vec<f64> { idx.iter().map(|&k| model(p, spec.freq[k]) - spec.psd[k]).collect() };
    let sol = levenberg_marquardt(residual, &[1.0, 1.0, 1.0, 0.0], &LmOptions::default())?;
    let omega_m = sol.params[0].abs() * w0;
    let gamma_m = sol.params[1].abs() * g0;
    if omega_m * omega_m <= 0.5 * gamma_m * gamma_m {
        return Err(Error::NonConvergence("fitted spectrum is overdamped".into()));
    }
    Ok(ThermalSpectrumFit {
        omega_m,
        gamma_m,
        amplitude: sol.params[2] * a0,
        offset: sol.params[3] * peak,
        peak_hz: (omega_m * omega_m - 0.5 * gamma_m * gamma_m).sqrt() / (2.0 * PI),
        width_hz: gamma_m / (2.0 * PI),
    })
}
