//! Post-processing of normalised correlations: expansion fits, spectra,
//! small-amplitude inversion and shot-noise sensitivity.

mod fit;
mod spectrum;

pub use fit::{fit_expansion, fit_expansion_jackknife, FitGeometry, FitOptions, FitResult, JackknifeFit, MAX_FIT_ORDER};
pub use spectrum::{fit_thermal_spectrum, spectrum_from_g2, Spectrum, ThermalSpectrumFit, Window};

use crate::{Error, Result};

/// Bins with `σe` below this value are masked by [`extract_cxi`].
pub const SIGMA_E_MASK: f64 = 0.1;

/// Shot-noise limited resolution of `C_ξ`, `w0²/(4Φ√τ_bin)` (m²/√Hz).
pub fn sensitivity(w0: f64, flux: f64, tau_bin: f64) -> Result<f64> {
    if !(w0 > 0.0 && flux > 0.0 && tau_bin > 0.0) {
        return Err(Error::invalid("w0, flux and tau_bin must be > 0"));
    }
    Ok(w0 * w0 / (4.0 * flux * tau_bin.sqrt()))
}

/// Small-amplitude inversion `C_ξ = (w0²/4)(1 − g²/σe)` for detectors at
/// the optimal symmetric offset. `sigma_e` is normalised to one at long
/// delays; bins with `σe < 0.1` come back as NaN.
pub fn extract_cxi(g2: &[f64], sigma_e: &[f64], w0: f64) -> Result<Vec<f64>> {
    if g2.len() != sigma_e.len() {
        return Err(Error::invalid("g² and σe lengths differ"));
    }
    if !(w0 > 0.0) {
        return Err(Error::invalid("w0 must be > 0"));
    }
    if sigma_e.iter().all(|&s| s < SIGMA_E_MASK) {
        return Err(Error::invalid("σe is below the mask threshold everywhere"));
    }
    Ok(g2
        .iter()
        .zip(sigma_e)
        .map(|(&g, &s)| if s < SIGMA_E_MASK { f64::NAN } else { 0.25 * w0 * w0 * (1.0 - g / s) })
        .collect())
}
