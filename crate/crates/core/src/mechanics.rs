//! Closed-form mechanics of a single oscillator mode.
//!
//! # Spectral convention
//!
//! Spectra are two-sided and indexed by angular frequency. The thermal
//! force spectrum is `S_F = 2 M Γ k_B T` and variances are recovered as
//! `(1/2π) ∫ S_x(Ω) dΩ` over the whole real line. With the viscous
//! susceptibility used here this gives exactly `k_B T / (M Ω_m²)`, the same
//! variance the Langevin simulator in [`crate::trajectory`] produces.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::numeric::{bisect, integrate};
use crate::{Error, Result, K_B};

/// A single mechanical mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatorParams {
    /// Natural angular frequency (rad/s).
    pub omega_m: f64,
    /// Energy damping rate (rad/s).
    pub gamma_m: f64,
    /// Effective mass (kg).
    pub m_eff: f64,
    /// Effective temperature (K).
    pub temperature_eff: f64,
}

impl OscillatorParams {
    pub fn new(omega_m: f64, gamma_m: f64, m_eff: f64, temperature_eff: f64) -> Result<Self> {
        let p = Self {
            omega_m,
            gamma_m,
            m_eff,
            temperature_eff,
        };
        p.validate()?;
        Ok(p)
    }

    /// Builds a mode from its frequency in Hz and quality factor.
    pub fn from_frequency(freq_hz: f64, quality: f64, m_eff: f64, temperature_eff: f64) -> Result<Self> {
        if !(quality > 0.0) {
            return Err(Error::invalid("quality factor must be positive"));
        }
        let omega = 2.0 * PI * freq_hz;
        Self::new(omega, omega / quality, m_eff, temperature_eff)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.omega_m, self.gamma_m, self.m_eff, self.temperature_eff]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("oscillator parameters must be finite"));
        }
        if !(self.omega_m > 0.0) {
            return Err(Error::invalid("omega_m must be > 0"));
        }
        if !(self.gamma_m > 0.0) {
            return Err(Error::invalid("gamma_m must be > 0"));
        }
        if !(self.m_eff > 0.0) {
            return Err(Error::invalid("m_eff must be > 0"));
        }
        if !(self.temperature_eff >= 0.0) {
            return Err(Error::invalid("temperature_eff must be >= 0"));
        }
        Ok(())
    }

    pub fn quality_factor(&self) -> f64 {
        self.omega_m / self.gamma_m
    }

    /// Same mode with the temperature set so that the rms spread equals `dx`.
    pub fn with_spread(&self, dx: f64) -> Self {
        Self {
            temperature_eff: temperature_for_spread(self, dx),
            ..*self
        }
    }

    /// Frequency of the damped oscillation in the autocorrelation,
    /// `sqrt(Ω_m² − Γ_m²/4)`.
    pub fn ringdown_frequency(&self) -> f64 {
        (self.omega_m * self.omega_m - 0.25 * self.gamma_m * self.gamma_m).sqrt()
    }

    /// Peak of the displacement spectrum, `sqrt(Ω_m² − Γ_m²/2)`.
    pub fn spectral_peak_frequency(&self) -> f64 {
        (self.omega_m * self.omega_m - 0.5 * self.gamma_m * self.gamma_m).sqrt()
    }
}

/// Rms thermal position spread `sqrt(k_B T / (M Ω_m²))`.
pub fn thermal_spread(p: &OscillatorParams) -> f64 {
    (K_B * p.temperature_eff / (p.m_eff * p.omega_m * p.omega_m)).sqrt()
}

/// Temperature giving an rms spread `dx`.
pub fn temperature_for_spread(p: &OscillatorParams, dx: f64) -> f64 {
    dx * dx * p.m_eff * p.omega_m * p.omega_m / K_B
}

/// Mechanical susceptibility χ(Ω) in m/N, viscous damping.
pub fn susceptibility(p: &OscillatorParams, omega: f64) -> Complex64 {
    let denom = Complex64::new(p.omega_m * p.omega_m - omega * omega, -p.gamma_m * omega);
    Complex64::new(1.0 / p.m_eff, 0.0) / denom
}

/// Two-sided thermal force spectrum `2 M Γ k_B T` (N²/Hz).
pub fn thermal_force_psd(p: &OscillatorParams) -> f64 {
    2.0 * p.m_eff * p.gamma_m * K_B * p.temperature_eff
}

/// Displacement spectrum `|χ|² S_F` (m²/Hz).
pub fn displacement_psd(p: &OscillatorParams, omega: f64) -> f64 {
    susceptibility(p, omega).norm_sqr() * thermal_force_psd(p)
}

/// `e^{−Γτ/2}(cos Ω₁τ + Γ/(2Ω₁) sin Ω₁τ)` with `Ω₁ = sqrt(Ω² − Γ²/4)`:
/// the autocorrelation of the mode normalised to one at zero delay.
/// Even in `tau`.
pub fn damped_cosine(omega_m: f64, gamma_m: f64, tau: f64) -> f64 {
    let t = tau.abs();
    let w1 = (omega_m * omega_m - 0.25 * gamma_m * gamma_m).sqrt();
    (-0.5 * gamma_m * t).exp() * ((w1 * t).cos() + gamma_m / (2.0 * w1) * (w1 * t).sin())
}

/// Stationary position autocorrelation `C_ξ(τ)` (m²).
pub fn position_autocorrelation(p: &OscillatorParams, tau: f64) -> Result<f64> {
    if p.omega_m * p.omega_m <= 0.5 * p.gamma_m * p.gamma_m {
        return Err(Error::UnsupportedRegime(format!(
            "omega_m² = {:e} <= gamma_m²/2 = {:e}",
            p.omega_m * p.omega_m,
            0.5 * p.gamma_m * p.gamma_m
        )));
    }
    let dx = thermal_spread(p);
    Ok(dx * dx * damped_cosine(p.omega_m, p.gamma_m, tau))
}

/// How the damping rate enters `sqrt(2 M Γ k_B T)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DampingUnits {
    /// Γ in rad/s.
    AngularFrequency,
    /// Γ/2π in Hz.
    Hertz,
}

/// Thermal force noise `sqrt(2 M Γ k_B T)` (N/√Hz).
pub fn thermal_force_sensitivity(p: &OscillatorParams, units: DampingUnits) -> f64 {
    let gamma = match units {
        DampingUnits::AngularFrequency => p.gamma_m,
        DampingUnits::Hertz => p.gamma_m / (2.0 * PI),
    };
    (2.0 * p.m_eff * gamma * K_B * p.temperature_eff).sqrt()
}

// --- Cantilever eigenmodes -------------------------------------------------

/// One flexural eigenmode of a clamped-free beam measured at its free end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeSolution {
    pub n: usize,
    /// Dimensionless root `k_n L` of `cos(kL) cosh(kL) = −1`.
    pub kl: f64,
    /// Coefficient of `sin − sinh` in the mode shape.
    pub a_n: f64,
    /// `M_eff / M` for a point-like readout at the tip.
    pub meff_ratio: f64,
}

/// Effective-mass ratios printed in the reference table for modes 1..=5.
/// Modes 3..5 disagree with the analytic 1/4 and are kept only for
/// comparison.
pub const TABULATED_MEFF_RATIO: [f64; 5] = [0.2500, 0.2500, 0.2433, 0.9547, 0.9646];

/// Mode shape `u(ξ)` at `ξ = k y`, written so that no cosh/sinh difference
/// is formed explicitly.
#[derive(Debug, Clone, Copy)]
struct ModeShape {
    /// `1 − σ` where σ = (cos kL + cosh kL)/(sin kL + sinh kL).
    one_minus_sigma: f64,
    sigma: f64,
}

impl ModeShape {
    fn new(kl: f64) -> Self {
        let (s, c) = kl.sin_cos();
        let sinh = kl.sinh();
        let one_minus_sigma = (s - c - (-kl).exp()) / (s + sinh);
        Self {
            one_minus_sigma,
            sigma: 1.0 - one_minus_sigma,
        }
    }

    fn eval(&self, xi: f64) -> f64 {
        let (s, c) = xi.sin_cos();
        // cosh ξ − σ sinh ξ = ½[(1−σ)e^ξ + (1+σ)e^−ξ]
        let hyper = 0.5 * (self.one_minus_sigma * xi.exp() + (1.0 + self.sigma) * (-xi).exp());
        c - self.sigma * s - hyper
    }
}

/// `cos x + sech x`: the characteristic equation divided by `cosh x`.
pub fn characteristic_scaled(x: f64) -> f64 {
    x.cos() + 1.0 / x.cosh()
}

/// First `n_max` clamped-free modes, `1 <= n_max <= 12`.
pub fn solve_beam_modes(n_max: usize) -> Result<Vec<ModeSolution>> {
    if !(1..=12).contains(&n_max) {
        return Err(Error::invalid(format!("n_max = {n_max} outside 1..=12")));
    }
    (1..=n_max)
        .map(|n| {
            // Root n sits in ((n−1)π, nπ): the scaled equation changes sign there.
            let lo = (n as f64 - 1.0) * PI;
            let hi = n as f64 * PI;
            let kl = bisect(characteristic_scaled, lo, hi, 0.0)?;
            let shape = ModeShape::new(kl);
            let tip = shape.eval(kl);
            let integral = integrate(
                |s| {
                    let u = shape.eval(s * kl) / tip;
                    u * u
                },
                0.0,
                1.0,
                1e-9,
                0.0,
            )?;
            Ok(ModeSolution {
                n,
                kl,
                a_n: -shape.sigma,
                meff_ratio: integral,
            })
        })
        .collect()
}

// --- Electrostatic actuation ----------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorParams {
    /// Electrostatic coefficient α (N/V²).
    pub alpha: f64,
    /// Static deflection coefficient κ (m/V²).
    pub kappa: f64,
    /// Offset voltage V₀ (V).
    pub v_offset: f64,
    /// White voltage-noise spectral density S_V (V²/Hz).
    pub s_v: f64,
}

impl ActuatorParams {
    pub fn new(alpha: f64, kappa: f64, v_offset: f64, s_v: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !(kappa >= 0.0) || !(s_v >= 0.0) || !v_offset.is_finite() {
            return Err(Error::invalid("alpha, kappa and s_v must be >= 0"));
        }
        Ok(Self {
            alpha,
            kappa,
            v_offset,
            s_v,
        })
    }
}

/// Static tip deflection `κ V²`.
pub fn static_deflection(a: &ActuatorParams, v: f64) -> f64 {
    a.kappa * v * v
}

/// Small-signal force `2 α V₀ δV` around the offset. Valid for `|δV| ≪ V₀`.
pub fn linearized_force(a: &ActuatorParams, dv: f64) -> f64 {
    2.0 * a.alpha * a.v_offset * dv
}

/// Mode temperature with the injected voltage noise; damping is unchanged.
pub fn effective_temperature(a: &ActuatorParams, p: &OscillatorParams, bath_t: f64) -> f64 {
    bath_t + 2.0 * a.alpha * a.alpha * a.v_offset * a.v_offset * a.s_v / (p.m_eff * K_B * p.gamma_m)
}
