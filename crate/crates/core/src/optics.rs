//! Detection and illumination profiles, time-averaged fluxes and images.
//!
//! Fluxes are peak-normalised: a motionless emitter at the centre of a
//! detection profile gives a flux factor of one.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::numeric::integrate;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Profile {
    /// `exp(−2 (x − center)² / w0²)`.
    Gaussian,
    /// Linear interpolation of `values` at `offsets` from the centre.
    Tabulated { offsets: Vec<f64>, values: Vec<f64> },
}

/// Detection point-spread function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Psf {
    pub center: f64,
    pub w0: f64,
    pub profile: Profile,
}

impl Psf {
    pub fn gaussian(center: f64, w0: f64) -> Result<Self> {
        if !(w0 > 0.0) || !center.is_finite() {
            return Err(Error::invalid("psf waist must be > 0 and center finite"));
        }
        Ok(Self {
            center,
            w0,
            profile: Profile::Gaussian,
        })
    }

    pub fn tabulated(center: f64, w0: f64, offsets: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if !(w0 > 0.0) {
            return Err(Error::invalid("psf waist must be > 0"));
        }
        if offsets.len() < 2 || offsets.len() != values.len() {
            return Err(Error::invalid("tabulated psf needs >= 2 matching points"));
        }
        if offsets.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("tabulated offsets must be strictly increasing"));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("tabulated values must lie in [0, 1]"));
        }
        Ok(Self {
            center,
            w0,
            profile: Profile::Tabulated { offsets, values },
        })
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self.profile, Profile::Gaussian)
    }

    /// Same profile moved to `center`.
    pub fn recentered(&self, center: f64) -> Self {
        Self { center, ..self.clone() }
    }
}

/// Profile value at `x`.
pub fn psf_eval(psf: &Psf, x: f64) -> Result<f64> {
    let d = x - psf.center;
    match &psf.profile {
        Profile::Gaussian => Ok((-2.0 * d * d / (psf.w0 * psf.w0)).exp()),
        Profile::Tabulated { offsets, values } => {
            let lo = offsets[0];
            let hi = offsets[offsets.len() - 1];
            if !(d >= lo && d <= hi) {
                return Err(Error::OutOfDomain { value: d, lo, hi });
            }
            let i = offsets.partition_point(|&o| o <= d).clamp(1, offsets.len() - 1);
            let f = (d - offsets[i - 1]) / (offsets[i] - offsets[i - 1]);
            Ok(values[i - 1] + f * (values[i] - values[i - 1]))
        }
    }
}

/// Evaluates the profile at every position of a record.
pub fn psf_values(psf: &Psf, xs: &[f64]) -> Result<Vec<f64>> {
    match psf.profile {
        Profile::Gaussian => {
            let k = -2.0 / (psf.w0 * psf.w0);
            Ok(xs
                .iter()
                .map(|&x| {
                    let d = x - psf.center;
                    (k * d * d).exp()
                })
                .collect())
        }
        Profile::Tabulated { .. } => xs.iter().map(|&x| psf_eval(psf, x)).collect(),
    }
}

/// Pump intensity profile (normalised intensity units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PumpProfile {
    /// Uniform illumination.
    Broad { i0: f64 },
    /// Focused Gaussian beam.
    Gaussian { center: f64, waist: f64, i0: f64 },
}

impl PumpProfile {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PumpProfile::Broad { i0 } if i0 >= 0.0 => Ok(()),
            PumpProfile::Gaussian { waist, i0, center } if i0 >= 0.0 && waist > 0.0 && center.is_finite() => Ok(()),
            _ => Err(Error::invalid("pump intensity must be >= 0 and waist > 0")),
        }
    }

    pub fn intensity(&self, x: f64) -> f64 {
        match *self {
            PumpProfile::Broad { i0 } => i0,
            PumpProfile::Gaussian { center, waist, i0 } => {
                let d = x - center;
                i0 * (-2.0 * d * d / (waist * waist)).exp()
            }
        }
    }

    pub fn peak_intensity(&self) -> f64 {
        match *self {
            PumpProfile::Broad { i0 } | PumpProfile::Gaussian { i0, .. } => i0,
        }
    }

    pub fn is_broad(&self) -> bool {
        matches!(self, PumpProfile::Broad { .. })
    }
}

/// Time-averaged flux factor `∫ P(x) Π(x) dx` of a Gaussian profile for an
/// emitter with Gaussian position spread `dx_th` about the origin:
/// `exp(−2 c² / (w0² + 4 dx²)) / sqrt(1 + 4 dx²/w0²)`.
pub fn mean_flux(psf: &Psf, dx_th: f64) -> Result<f64> {
    if !psf.is_gaussian() {
        return Err(Error::invalid(
            "closed-form mean flux needs a Gaussian profile; use mean_flux_numeric",
        ));
    }
    if !(dx_th >= 0.0) {
        return Err(Error::invalid("dx_th must be >= 0"));
    }
    let w2 = psf.w0 * psf.w0;
    let s = w2 + 4.0 * dx_th * dx_th;
    Ok((-2.0 * psf.center * psf.center / s).exp() / (s / w2).sqrt())
}

/// `⟨f(ξ)⟩` for `ξ ~ N(0, dx²)` by adaptive quadrature over ±12 dx.
pub fn gaussian_average<F: Fn(f64) -> f64>(f: F, dx: f64) -> Result<f64> {
    if dx == 0.0 {
        return Ok(f(0.0));
    }
    let norm = 1.0 / (dx * (2.0 * PI).sqrt());
    integrate(
        |x| f(x) * norm * (-0.5 * x * x / (dx * dx)).exp(),
        -12.0 * dx,
        12.0 * dx,
        1e-10,
        1e-300,
    )
}

/// Mean flux for any profile by quadrature. Tabulated profiles are taken as
/// zero outside their table.
pub fn mean_flux_numeric(psf: &Psf, dx_th: f64) -> Result<f64> {
    gaussian_average(|x| psf_eval(psf, x).unwrap_or(0.0), dx_th)
}

/// Width (standard deviation) of the thermally broadened image,
/// `sqrt(w0²/4 + dx²)`.
pub fn thermal_image_width(w0: f64, dx_th: f64) -> f64 {
    (0.25 * w0 * w0 + dx_th * dx_th).sqrt()
}

/// Time-averaged image of an emitter oscillating as `x0 + A cos(Ωt)`:
/// `F(x) = (1/T) ∫ exp(−2 (x − x0 − A cos Ωt)² / w0²) dt`.
///
/// Trapezoid rule over one period, starting at 256 phase nodes and doubling
/// until successive estimates agree to 1e-12.
pub fn coherent_drive_image(x_grid: &[f64], x0: f64, amplitude: f64, w0: f64) -> Result<Vec<f64>> {
    if !(amplitude >= 0.0) || !(w0 > 0.0) {
        return Err(Error::invalid("amplitude must be >= 0 and w0 > 0"));
    }
    let k = -2.0 / (w0 * w0);
    let average = |x: f64, n: usize| -> f64 {
        (0..n)
            .map(|i| {
                let d = x - x0 - amplitude * (2.0 * PI * i as f64 / n as f64).cos();
                (k * d * d).exp()
            })
            .sum::<f64>()
            / n as f64
    };
    x_grid
        .iter()
        .map(|&x| {
            let mut n = 256;
            let mut prev = average(x, n);
            loop {
                n *= 2;
                let next = average(x, n);
                if (next - prev).abs() <= 1e-12 || n >= 1 << 16 {
                    return Ok(next);
                }
                prev = next;
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{levenberg_marquardt, LmOptions};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    const W0: f64 = 380e-9;

    #[test]
    fn gaussian_profile_values() {
        let p = Psf::gaussian(50e-9, W0).unwrap();
        assert_eq!(psf_eval(&p, 50e-9).unwrap(), 1.0);
        assert_relative_eq!(psf_eval(&p, 50e-9 + W0 / 2f64.sqrt()).unwrap(), (-1f64).exp(), max_relative = 1e-14);
        assert_eq!(psf_eval(&p, 50e-9 + 1e-7).unwrap(), psf_eval(&p, 50e-9 - 1e-7).unwrap());
        assert!(Psf::gaussian(0.0, 0.0).is_err());
    }

    #[test]
    fn tabulated_profile() {
        let p = Psf::tabulated(0.0, W0, vec![-1.0, 0.0, 1.0], vec![0.0, 1.0, 0.5]).unwrap();
        assert_eq!(psf_eval(&p, 0.0).unwrap(), 1.0);
        assert_eq!(psf_eval(&p, 0.5).unwrap(), 0.75);
        assert_eq!(psf_eval(&p, -0.25).unwrap(), 0.75);
        assert!(matches!(psf_eval(&p, 1.5), Err(Error::OutOfDomain { .. })));
        assert!(mean_flux(&p, 0.1).is_err());
        assert!(Psf::tabulated(0.0, W0, vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(Psf::tabulated(0.0, W0, vec![0.0, 1.0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn mean_flux_closed_form() {
        let p = Psf::gaussian(0.0, W0).unwrap();
        assert_eq!(mean_flux(&p, 0.0).unwrap(), 1.0);
        assert_relative_eq!(mean_flux(&p, W0 / 2.0).unwrap(), 0.5f64.sqrt(), max_relative = 1e-14);
        for (c, dx) in [(0.0, W0 / 2.0), (120e-9, 80e-9), (-300e-9, 400e-9), (200e-9, 0.0)] {
            let p = Psf::gaussian(c, W0).unwrap();
            let quad = mean_flux_numeric(&p, dx).unwrap();
            assert_relative_eq!(mean_flux(&p, dx).unwrap(), quad, max_relative = 1e-9);
        }
    }

    #[test]
    fn mean_flux_monte_carlo() {
        let dx = 150e-9;
        let p = Psf::gaussian(100e-9, W0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let normal = Normal::new(0.0, dx).unwrap();
        let n = 200_000;
        let samples: Vec<f64> = (0..n).map(|_| psf_eval(&p, normal.sample(&mut rng)).unwrap()).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let sd = (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((mean - mean_flux(&p, dx).unwrap()).abs() < 3.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn mean_flux_monotone() {
        let dxs: Vec<f64> = (0..50).map(|i| i as f64 * 20e-9).collect();
        let p = Psf::gaussian(0.0, W0).unwrap();
        for w in dxs.windows(2) {
            assert!(mean_flux(&p, w[1]).unwrap() < mean_flux(&p, w[0]).unwrap());
        }
        for i in 0..50 {
            let a = Psf::gaussian(i as f64 * 20e-9, W0).unwrap();
            let b = Psf::gaussian((i + 1) as f64 * 20e-9, W0).unwrap();
            assert!(mean_flux(&b, 100e-9).unwrap() < mean_flux(&a, 100e-9).unwrap());
        }
    }

    #[test]
    fn image_width() {
        assert_eq!(thermal_image_width(W0, 0.0), W0 / 2.0);
        assert_relative_eq!(thermal_image_width(W0, 1e-3), 1e-3, max_relative = 1e-7);
        // Scan the flux against detector position and fit a Gaussian.
        let dx = 170e-9;
        let xs: Vec<f64> = (-60..=60).map(|i| i as f64 * 15e-9).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|&c| mean_flux(&Psf::gaussian(c, W0).unwrap(), dx).unwrap())
            .collect();
        let sol = levenberg_marquardt(
            |p| {
                xs.iter()
                    .zip(&ys)
                    .map(|(x, y)| p[0] * (-0.5 * (x / (p[1] * 1e-7)).powi(2)).exp() - y)
                    .collect()
            },
            &[0.8, 2.0],
            &LmOptions::default(),
        )
        .unwrap();
        assert_relative_eq!(sol.params[1] * 1e-7, thermal_image_width(W0, dx), max_relative = 1e-6);
    }

    #[test]
    fn coherent_image_properties() {
        let xs: Vec<f64> = (-400..=400).map(|i| i as f64 * 4e-9).collect();
        let still = coherent_drive_image(&xs, 0.0, 0.0, W0).unwrap();
        for (x, v) in xs.iter().zip(&still) {
            assert_relative_eq!(*v, (-2.0 * x * x / (W0 * W0)).exp(), max_relative = 1e-12);
        }
        let amp = 2.0 * W0;
        let img = coherent_drive_image(&xs, 0.0, amp, W0).unwrap();
        let n = xs.len();
        for i in 0..n {
            assert!((img[i] - img[n - 1 - i]).abs() < 1e-12);
        }
        let right = (n / 2..n).max_by(|&a, &b| img[a].total_cmp(&img[b])).unwrap();
        assert!(img[n / 2] < img[right], "no central dip");
        // The arcsine turning-point peaks are pulled inwards by the finite
        // waist: at A = 2 w0 the maximum sits near 0.79 A.
        assert!((xs[right] / amp - 0.79).abs() < 0.01, "max at {}", xs[right]);
        let wide = 10.0 * W0;
        let xs: Vec<f64> = (0..=3000).map(|i| i as f64 * 2e-9 + 3e-6).collect();
        let img = coherent_drive_image(&xs, 0.0, wide, W0).unwrap();
        let right = (0..xs.len()).max_by(|&a, &b| img[a].total_cmp(&img[b])).unwrap();
        assert!((xs[right] - wide).abs() < 0.05 * wide);
    }

    #[test]
    fn coherent_image_preserves_area() {
        let area = |amp: f64| {
            integrate(
                |x| coherent_drive_image(&[x], 0.0, amp, W0).unwrap()[0],
                -8.0 * W0,
                8.0 * W0,
                1e-11,
                0.0,
            )
            .unwrap()
        };
        let base = W0 * (PI / 2.0).sqrt();
        for amp in [0.0, 0.3 * W0, 2.0 * W0] {
            assert_relative_eq!(area(amp), base, max_relative = 1e-8);
        }
    }
}
