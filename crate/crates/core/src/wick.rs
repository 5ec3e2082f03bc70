//! Gaussian-moment (Wick) expansion of the spatio-temporal correlation.
//!
//! For a stationary Gaussian position `ξ` with variance `Δx²` and
//! autocovariance `C(τ)`, the oscillator part of the correlation measured by
//! two Gaussian detectors at `x₁`, `x₂` is expanded as
//!
//! ```text
//! G_osc(τ) = Σ_j A_j · (−C(τ) / (w0²/2))^j
//! ```
//!
//! Geometry enters through `δ̃_i = x_i / (w0/√2)` and `θ = Δx/w0`. The
//! coefficients are evaluated from their double series; a Hermite closed
//! form and the exact bivariate-Gaussian integral serve as independent
//! references.

use serde::Serialize;

use crate::numeric::{bisect, CompensatedSum, LogFactorials};
use crate::{Error, Result};

/// Largest coefficient index accepted.
pub const MAX_ORDER: usize = 12;
/// Largest number of series terms accepted.
pub const MAX_TERMS: usize = 500;
/// Relative size of the last term at which a series is considered summed.
const TAIL_TOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Geometry {
    pub delta1_tilde: f64,
    pub delta2_tilde: f64,
    pub theta: f64,
}

impl Geometry {
    pub fn new(delta1_tilde: f64, delta2_tilde: f64, theta: f64) -> Result<Self> {
        if !(theta >= 0.0) || !delta1_tilde.is_finite() || !delta2_tilde.is_finite() || !theta.is_finite() {
            return Err(Error::invalid("theta must be >= 0 and offsets finite"));
        }
        Ok(Self {
            delta1_tilde,
            delta2_tilde,
            theta,
        })
    }

    /// Detectors at `±δ̃`.
    pub fn symmetric(delta_tilde: f64, theta: f64) -> Result<Self> {
        Self::new(delta_tilde, -delta_tilde, theta)
    }

    /// From physical detector centres, waist and rms spread.
    pub fn from_physical(x1: f64, x2: f64, w0: f64, dx_th: f64) -> Result<Self> {
        if !(w0 > 0.0) {
            return Err(Error::invalid("w0 must be > 0"));
        }
        let scale = w0 / std::f64::consts::SQRT_2;
        Self::new(x1 / scale, x2 / scale, dx_th / w0)
    }
}

/// A partial series sum and whether its tail fell below tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesValue {
    pub value: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpansionCoefficients {
    /// `A_0 ..= A_truncation`.
    pub a: Vec<f64>,
    pub truncation: usize,
    pub converged: bool,
    pub geometry: Geometry,
}

impl ExpansionCoefficients {
    /// Ratios `α_j/α_0 = (A_j/A_0)(2θ²)^j`, the coefficients of the
    /// expansion in powers of `−C/Δx²`.
    pub fn alpha_ratios(&self) -> Vec<f64> {
        let r = 2.0 * self.geometry.theta * self.geometry.theta;
        self.a
            .iter()
            .enumerate()
            .map(|(j, a)| a / self.a[0] * r.powi(j as i32))
            .collect()
    }
}

// --- Gaussian moments ------------------------------------------------------

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `⟨ξ^p ξ'^q⟩` for zero-mean jointly Gaussian `ξ, ξ'` with common variance
/// `var` and covariance `c`, by counting Wick pairings: `j` cross pairs and
/// the remaining `(p−j)/2`, `(q−j)/2` same-time pairs.
pub fn gaussian_moment(p: usize, q: usize, c: f64, var: f64) -> f64 {
    if (p + q) % 2 == 1 {
        return 0.0;
    }
    let half = (p + q) / 2;
    let pq = factorial(p) * factorial(q);
    let mut acc = CompensatedSum::new();
    let mut j = p % 2;
    while j <= p.min(q) {
        let same = half - j;
        let count = pq
            / (2f64.powi(same as i32) * factorial(j) * factorial((p - j) / 2) * factorial((q - j) / 2));
        acc.add(count * c.powi(j as i32) * var.powi(same as i32));
        j += 2;
    }
    acc.value()
}

/// Same moment by explicit enumeration of every perfect matching of the
/// `p + q` factors.
pub fn pairing_enumeration_oracle(p: usize, q: usize, c: f64, var: f64) -> Result<f64> {
    if p + q > 12 {
        return Err(Error::invalid(format!("p + q = {} exceeds 12", p + q)));
    }
    fn matchings(labels: &[bool], c: f64, var: f64) -> f64 {
        match labels.split_first() {
            None => 1.0,
            Some((&first, rest)) => (0..rest.len())
                .map(|k| {
                    let cov = if rest[k] == first { var } else { c };
                    let remaining: Vec<bool> = rest
                        .iter()
                        .enumerate()
                        .filter(|&(i, _)| i != k)
                        .map(|(_, &b)| b)
                        .collect();
                    cov * matchings(&remaining, c, var)
                })
                .sum(),
        }
    }
    if (p + q) % 2 == 1 {
        return Ok(0.0);
    }
    let labels: Vec<bool> = std::iter::repeat_n(false, p).chain(std::iter::repeat_n(true, q)).collect();
    Ok(matchings(&labels, c, var))
}

// --- Series evaluation -----------------------------------------------------

fn check_series_args(j: usize, n_terms: usize) -> Result<()> {
    if j > MAX_ORDER {
        return Err(Error::invalid(format!("order {j} exceeds {MAX_ORDER}")));
    }
    if n_terms == 0 || n_terms > MAX_TERMS {
        return Err(Error::invalid(format!("n_terms = {n_terms} outside 1..={MAX_TERMS}")));
    }
    Ok(())
}

/// `ln(δ^{2k})` with the convention `0^0 = 1`; `None` for an exact zero.
fn log_even_power(x: f64, k: usize) -> Option<f64> {
    if k == 0 {
        Some(0.0)
    } else if x == 0.0 {
        None
    } else {
        Some(2.0 * k as f64 * x.abs().ln())
    }
}

/// Per-detector factor of the series,
///
/// ```text
/// Σ_n (−1)^n (2n+2j+s)!/(n+j+s)! Σ_p δ^{2(n−p)} θ^{2p} / ((2n−2p+s)! p!)
/// ```
///
/// with `s = 0` for even and `s = 1` for odd coefficients (where the outer
/// factorial ratio becomes `(2n+2j+2)!/(n+j+1)!`). Inner sums have terms of
/// one sign and are combined in log space.
fn detector_factor(j: usize, odd: bool, delta: f64, theta: f64, n_terms: usize, lf: &LogFactorials) -> SeriesValue {
    let s = usize::from(odd);
    let mut sum = CompensatedSum::new();
    let mut prev_mag = f64::INFINITY;
    let mut max_mag = 0.0f64;
    let mut logs = Vec::with_capacity(n_terms);
    for n in 0..n_terms {
        let outer = lf.get(2 * n + 2 * j + 2 * s) - lf.get(n + j + s);
        logs.clear();
        for p in 0..=n {
            let (Some(ld), Some(lt)) = (log_even_power(delta, n - p), log_even_power(theta, p)) else {
                continue;
            };
            logs.push(ld + lt - lf.get(2 * (n - p) + s) - lf.get(p));
        }
        let term = if logs.is_empty() {
            0.0
        } else {
            let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let inner = m + logs.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
            let mag = (outer + inner).exp();
            if n % 2 == 0 {
                mag
            } else {
                -mag
            }
        };
        sum.add(term);
        let mag = term.abs();
        max_mag = max_mag.max(mag);
        // Relative to the largest term: cancellation already limits the
        // attainable accuracy to that scale, and the sum itself may be zero.
        let scale = sum.value().abs().max(max_mag);
        if n > 0 && mag <= prev_mag && mag <= TAIL_TOL * scale {
            return SeriesValue {
                value: sum.value(),
                converged: true,
            };
        }
        if mag == 0.0 && n > 0 && prev_mag == 0.0 {
            return SeriesValue {
                value: sum.value(),
                converged: true,
            };
        }
        prev_mag = mag;
    }
    SeriesValue {
        value: sum.value(),
        converged: false,
    }
}

fn log_factorials_for(j: usize, n_terms: usize) -> LogFactorials {
    LogFactorials::new(2 * (n_terms + j) + 4)
}

fn combine(j: usize, d1: f64, d2: f64, f1: SeriesValue, f2: SeriesValue) -> SeriesValue {
    let converged = f1.converged && f2.converged;
    let value = if j % 2 == 0 {
        f1.value * f2.value / factorial(j)
    } else {
        -d1 * d2 * f1.value * f2.value / factorial(j)
    };
    SeriesValue { value, converged }
}

/// `A_j` for arbitrary detector offsets.
pub fn aj_general(j: usize, geom: &Geometry, n_terms: usize) -> Result<SeriesValue> {
    check_series_args(j, n_terms)?;
    let lf = log_factorials_for(j, n_terms);
    let odd = j % 2 == 1;
    let f1 = detector_factor(j / 2, odd, geom.delta1_tilde, geom.theta, n_terms, &lf);
    let f2 = detector_factor(j / 2, odd, geom.delta2_tilde, geom.theta, n_terms, &lf);
    Ok(combine(j, geom.delta1_tilde, geom.delta2_tilde, f1, f2))
}

/// `A_j` for detectors at `±δ̃`: both factors coincide, so the coefficient
/// is a perfect square (times `δ̃²` for odd `j`).
pub fn aj_symmetric(j: usize, delta_tilde: f64, theta: f64, n_terms: usize) -> Result<SeriesValue> {
    check_series_args(j, n_terms)?;
    let lf = log_factorials_for(j, n_terms);
    let f = detector_factor(j / 2, j % 2 == 1, delta_tilde, theta, n_terms, &lf);
    let sq = f.value * f.value / factorial(j);
    Ok(SeriesValue {
        value: if j % 2 == 0 { sq } else { delta_tilde * delta_tilde * sq },
        converged: f.converged,
    })
}

/// Per-detector factor at `δ̃ = 0`, where only `p = n` survives:
/// `Σ_n (−1)^n (2n+2j)!/(n+j)! θ^{2n}/n!`.
fn centered_factor(j: usize, theta: f64, n_terms: usize, lf: &LogFactorials) -> SeriesValue {
    detector_factor(j, false, 0.0, theta, n_terms, lf)
}

/// `A_j` with both detectors on the rest position. Odd coefficients vanish.
pub fn aj_centered(j: usize, theta: f64, n_terms: usize) -> Result<SeriesValue> {
    check_series_args(j, n_terms)?;
    if j % 2 == 1 {
        return Ok(SeriesValue {
            value: 0.0,
            converged: true,
        });
    }
    let lf = log_factorials_for(j, n_terms);
    let f = centered_factor(j / 2, theta, n_terms, &lf);
    Ok(SeriesValue {
        value: f.value * f.value / factorial(j),
        converged: f.converged,
    })
}

/// `A_j` with one detector centred and the other at `δ̃`. Odd coefficients
/// vanish.
pub fn aj_diffusion(j: usize, delta_tilde: f64, theta: f64, n_terms: usize) -> Result<SeriesValue> {
    check_series_args(j, n_terms)?;
    if j % 2 == 1 {
        return Ok(SeriesValue {
            value: 0.0,
            converged: true,
        });
    }
    let lf = log_factorials_for(j, n_terms);
    let c = centered_factor(j / 2, theta, n_terms, &lf);
    let f = detector_factor(j / 2, false, delta_tilde, theta, n_terms, &lf);
    Ok(SeriesValue {
        value: c.value * f.value / factorial(j),
        converged: c.converged && f.converged,
    })
}

/// `A_0 ..= A_{j_max}` at `geom`.
pub fn expansion_coefficients(geom: &Geometry, j_max: usize, n_terms: usize) -> Result<ExpansionCoefficients> {
    let values = (0..=j_max)
        .map(|j| aj_general(j, geom, n_terms))
        .collect::<Result<Vec<_>>>()?;
    let converged = values.iter().all(|v| v.converged && v.value.is_finite()) && values[0].value > 0.0;
    Ok(ExpansionCoefficients {
        a: values.iter().map(|v| v.value).collect(),
        truncation: j_max,
        converged,
        geometry: *geom,
    })
}

/// Physicists' Hermite polynomial `H_n(x)`.
pub fn hermite(n: usize, x: f64) -> f64 {
    let (mut h0, mut h1) = (1.0, 2.0 * x);
    if n == 0 {
        return h0;
    }
    for k in 1..n {
        let h2 = 2.0 * x * h1 - 2.0 * k as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

/// `A_j` from the Mehler (Hermite) resummation:
/// `A_j = A_0 (−1)^j H_j(u₁) H_j(u₂) / (j! (1+4θ²)^j)`, `u_i = δ̃_i/√(1+4θ²)`,
/// `A_0 = exp(−(δ̃₁²+δ̃₂²)/(1+4θ²)) / (1+4θ²)`. Valid for every `θ`.
pub fn aj_closed_form(j: usize, geom: &Geometry) -> f64 {
    let b = 1.0 + 4.0 * geom.theta * geom.theta;
    let (d1, d2) = (geom.delta1_tilde, geom.delta2_tilde);
    let a0 = (-(d1 * d1 + d2 * d2) / b).exp() / b;
    let sb = b.sqrt();
    let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
    a0 * sign * hermite(j, d1 / sb) * hermite(j, d2 / sb) / (factorial(j) * b.powi(j as i32))
}

/// Symmetric detector offset at which `A_2` vanishes. `A_2` is the square of
/// a per-detector factor that changes sign at the optimum, so the bisection
/// runs on that factor.
pub fn optimal_separation(theta: f64) -> Result<f64> {
    if !(0.0..0.35).contains(&theta) {
        return Err(Error::invalid(format!("theta = {theta} outside [0, 0.35)")));
    }
    let lf = log_factorials_for(1, MAX_TERMS);
    bisect(
        |d| detector_factor(1, false, d, theta, MAX_TERMS, &lf).value,
        0.0,
        1.5,
        0.0,
    )
}

/// Series form of `g²`: `σe(τ)/A_0 Σ_j A_j (−C(τ)/(w0²/2))^j`.
pub fn g2_series(c_of_tau: &[f64], coeffs: &ExpansionCoefficients, sigma_e_of_tau: &[f64], w0: f64) -> Result<Vec<f64>> {
    if !coeffs.converged {
        return Err(Error::NonConvergence(format!(
            "expansion coefficients did not converge at theta = {}",
            coeffs.geometry.theta
        )));
    }
    if c_of_tau.len() != sigma_e_of_tau.len() {
        return Err(Error::invalid("C(τ) and σe(τ) lengths differ"));
    }
    let scale = 0.5 * w0 * w0;
    c_of_tau
        .iter()
        .zip(sigma_e_of_tau)
        .map(|(&c, &s)| {
            let x = -c / scale;
            if x.abs() >= 1.0 {
                return Err(Error::UnsupportedRegime(format!(
                    "|2C/w0²| = {} >= 1: truncated series unreliable",
                    x.abs()
                )));
            }
            let mut acc = CompensatedSum::new();
            let mut pow = 1.0;
            for a in &coeffs.a {
                acc.add(a * pow);
                pow *= x;
            }
            Ok(s * acc.value() / coeffs.a[0])
        })
        .collect()
}

/// Exact `⟨Π₁(ξ)Π₂(ξ')⟩` for `(ξ, ξ')` bivariate normal with variance
/// `Δx²` and correlation coefficient `c_norm`, in units where `w0 = 1`.
/// With `s = 1/4 + θ²`, `C = c_norm θ²`, `x_i = δ̃_i/√2`:
///
/// ```text
/// (1/4)/sqrt(s² − C²) · exp(−(s(x₁² + x₂²) − 2C x₁x₂) / (2(s² − C²)))
/// ```
pub fn g2_osc_exact(geom: &Geometry, c_norm: f64) -> f64 {
    let v = geom.theta * geom.theta;
    let c = c_norm * v;
    let s = 0.25 + v;
    let det = s * s - c * c;
    let x1 = geom.delta1_tilde / std::f64::consts::SQRT_2;
    let x2 = geom.delta2_tilde / std::f64::consts::SQRT_2;
    0.25 / det.sqrt() * (-(s * (x1 * x1 + x2 * x2) - 2.0 * c * x1 * x2) / (2.0 * det)).exp()
}

/// `g²_osc(0)/g²_osc(∞)`:
/// `(1+4θ²)/√(1+8θ²) · exp(−8θ²/((1+4θ²)(1+8θ²)) · (2θ²(δ̃₁−δ̃₂)² − δ̃₁δ̃₂))`.
pub fn initial_bunching_ratio(geom: &Geometry) -> f64 {
    let t2 = geom.theta * geom.theta;
    let a = 1.0 + 4.0 * t2;
    let b = 1.0 + 8.0 * t2;
    let (d1, d2) = (geom.delta1_tilde, geom.delta2_tilde);
    a / b.sqrt() * (-8.0 * t2 / (a * b) * (2.0 * t2 * (d1 - d2).powi(2) - d1 * d2)).exp()
}
