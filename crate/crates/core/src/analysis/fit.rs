use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::spectrum::{spectrum_from_g2, Window};
use crate::correlator::{merge, CorrelationHistogram, G2Curve};
use crate::mechanics::damped_cosine;
use crate::numeric::{bisect, levenberg_marquardt, LmOptions, LmSolution};
use crate::wick::{aj_closed_form, Geometry};
use crate::{Error, Result};

/// Highest expansion order accepted by [`fit_expansion`].
pub const MAX_FIT_ORDER: usize = 4;

/// Detector offsets used to translate fitted ratios into a spread.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitGeometry {
    pub delta1_tilde: f64,
    pub delta2_tilde: f64,
    pub w0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub max_order: usize,
    /// Bins with `τ < tau_min` are excluded.
    pub tau_min: f64,
    /// Starting `(Ω, Γ)` in rad/s; estimated from the spectrum when absent.
    pub initial: Option<(f64, f64)>,
    pub geometry: Option<FitGeometry>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_order: MAX_FIT_ORDER,
            tau_min: 0.0,
            initial: None,
            geometry: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Coefficients `a_j` of `g² = σe Σ_j a_j (−c(τ))^j`, with `c` the
    /// normalised damped cosine.
    pub alpha: Vec<f64>,
    /// `a_j/a_0`.
    pub alpha_ratios: Vec<f64>,
    pub alpha_ratio_stderr: Vec<f64>,
    pub omega_fit: f64,
    pub gamma_fit: f64,
    /// Spread implied by the leading ratio and the detector geometry.
    pub dx_fit: Option<f64>,
    pub residual_rms: f64,
    /// Variances in the order `a_0.., Ω, Γ`.
    pub covariance_diag: Vec<f64>,
    pub n_points: usize,
    pub iterations: usize,
}

impl FitResult {
    pub fn stderr(&self, k: usize) -> f64 {
        self.covariance_diag[k].sqrt()
    }

    pub fn alpha_stderr(&self) -> Vec<f64> {
        (0..self.alpha.len()).map(|k| self.stderr(k)).collect()
    }
}

fn basis(tau: &[f64], sigma: &[f64], omega: f64, gamma: f64, order: usize) -> DMatrix<f64> {
    DMatrix::from_fn(tau.len(), order + 1, |i, j| {
        sigma[i] * (-damped_cosine(omega, gamma, tau[i])).powi(j as i32)
    })
}

/// Least-squares `a` at fixed dynamics and its residual sum of squares.
fn linear_coefficients(tau: &[f64], sigma: &[f64], g: &[f64], omega: f64, gamma: f64, order: usize) -> Option<(Vec<f64>, f64)> {
    let x = basis(tau, sigma, omega, gamma, order);
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let b = DVector::from_column_slice(g);
    let a = x.clone().svd(true, true).solve(&b, 1e-14).ok()?;
    let rss = (x * &a - b).norm_squared();
    Some((a.iter().copied().collect(), rss))
}

/// Dynamics guesses from the spectrum of `g²/σe`.
fn initial_guesses(tau: &[f64], ratio: &[f64]) -> Result<Vec<(f64, f64)>> {
    let curve = G2Curve {
        tau: tau.to_vec(),
        g2: ratio.to_vec(),
        stderr: vec![f64::NAN; tau.len()],
    };
    let spec = spectrum_from_g2(&curve, Window::Hann, 0.0)?;
    let (k, f) = spec
        .peak()
        .ok_or_else(|| Error::NonConvergence("no spectral peak to initialise the fit".into()))?;
    let w = 2.0 * std::f64::consts::PI * f;
    let g = 2.0 * std::f64::consts::PI * spec.fwhm(k);
    let mut out = Vec::new();
    for om in [w, 0.5 * w] {
        for scale in [0.5, 1.0, 2.0] {
            let ga = (g * scale).min(om);
            out.push((om, ga));
        }
    }
    Ok(out)
}

struct Polished {
    sol: LmSolution,
    order: usize,
    om0: f64,
    ga0: f64,
}

impl Polished {
    fn omega(&self) -> f64 {
        (self.sol.params[self.order + 1] * self.om0).abs()
    }

    fn gamma(&self) -> f64 {
        (self.sol.params[self.order + 2] * self.ga0).abs()
    }

    fn rss(&self) -> f64 {
        self.sol.residuals.iter().map(|r| r * r).sum()
    }
}

/// Levenberg-Marquardt at fixed order from `(om0, ga0)`, with the
/// coefficients started at their linear least-squares values.
fn polish(tau: &[f64], sig: &[f64], g: &[f64], order: usize, om0: f64, ga0: f64) -> Result<Polished> {
    let (mut start, _) = linear_coefficients(tau, sig, g, om0, ga0, order)
        .ok_or_else(|| Error::NonConvergence("non-finite model at the starting point".into()))?;
    start.extend([1.0, 1.0]);
    let residual = |p: &[f64]| -> Vec<f64> {
        let (om, ga) = (p[order + 1] * om0, p[order + 2] * ga0);
        tau.iter()
            .zip(sig)
            .zip(g)
            .map(|((&t, &s), &y)| {
                let x = -damped_cosine(om, ga, t);
                let mut acc = 0.0;
                let mut pow = 1.0;
                for a in &p[..=order] {
                    acc += a * pow;
                    pow *= x;
                }
                s * acc - y
            })
            .collect()
    };
    let sol = levenberg_marquardt(residual, &start, &LmOptions::default())?;
    Ok(Polished { sol, order, om0, ga0 })
}

/// Fits `g²(τ) = σe(τ) Σ_{j≤J} a_j (−c(τ))^j` with
/// `c = e^{−Γτ/2}(cos Ω₁τ + Γ/(2Ω₁) sin Ω₁τ)` over `(a_j, Ω, Γ)`.
///
/// `sigma_e` is the emitter factor at the bins of `curve`, normalised to one
/// at long delays. Weighting is uniform. The rms spread is not a free
/// parameter (it is degenerate with the `a_j`); with a geometry it is
/// inferred from the leading ratio afterwards.
pub fn fit_expansion(curve: &G2Curve, sigma_e: &[f64], opts: &FitOptions) -> Result<FitResult> {
    if opts.max_order > MAX_FIT_ORDER {
        return Err(Error::invalid(format!("max_order must be <= {MAX_FIT_ORDER}")));
    }
    if sigma_e.len() != curve.len() {
        return Err(Error::invalid("sigma_e and g² lengths differ"));
    }
    let keep: Vec<usize> = (0..curve.len())
        .filter(|&k| curve.tau[k] >= opts.tau_min && curve.g2[k].is_finite())
        .collect();
    let order = opts.max_order;
    let n_params = order + 3;
    if keep.len() < n_params + 1 {
        return Err(Error::invalid("too few unmasked bins for the fit"));
    }
    let tau: Vec<f64> = keep.iter().map(|&k| curve.tau[k]).collect();
    let sig: Vec<f64> = keep.iter().map(|&k| sigma_e[k]).collect();
    let g: Vec<f64> = keep.iter().map(|&k| curve.g2[k]).collect();

    let candidates = match opts.initial {
        Some(p) => vec![p],
        None => {
            let ratio: Vec<f64> = g.iter().zip(&sig).map(|(a, b)| a / b).collect();
            // The spectrum needs uniform bins; fall back to the full curve.
            let uniform = tau.windows(2).all(|w| ((w[1] - w[0]) - (tau[1] - tau[0])).abs() < 1e-6 * (tau[1] - tau[0]));
            if uniform {
                initial_guesses(&tau, &ratio)?
            } else {
                return Err(Error::invalid("initial dynamics required for non-uniform bins"));
            }
        }
    };
    // Every start is polished at low order, where the dynamics are well
    // determined; the best one is carried up through the higher orders.
    let k0 = order.min(2);
    let mut fit = candidates
        .iter()
        .filter_map(|&(om, ga)| polish(&tau, &sig, &g, k0, om, ga).ok())
        .min_by(|x, y| x.rss().total_cmp(&y.rss()))
        .ok_or_else(|| Error::NonConvergence("no admissible starting point".into()))?;
    for k in k0 + 1..=order {
        fit = polish(&tau, &sig, &g, k, fit.omega(), fit.gamma())?;
    }
    let Polished { sol, om0, ga0, .. } = fit;

    let n = tau.len() as f64;
    let rss: f64 = sol.residuals.iter().map(|r| r * r).sum();
    let s2 = rss / (n - n_params as f64);
    let cov = sol
        .normal_matrix
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::RankDeficient("normal matrix is singular".into()))?
        * s2;
    let mut scale = vec![1.0; n_params];
    scale[order + 1] = om0;
    scale[order + 2] = ga0;
    let covariance_diag: Vec<f64> = (0..n_params).map(|k| cov[(k, k)] * scale[k] * scale[k]).collect();

    let a: Vec<f64> = sol.params[..=order].to_vec();
    let alpha_ratios: Vec<f64> = a.iter().map(|x| x / a[0]).collect();
    let alpha_ratio_stderr: Vec<f64> = (0..=order)
        .map(|j| {
            if j == 0 {
                return 0.0;
            }
            // Delta method on a_j/a_0.
            let (d0, dj) = (-a[j] / (a[0] * a[0]), 1.0 / a[0]);
            (d0 * d0 * cov[(0, 0)] + 2.0 * d0 * dj * cov[(0, j)] + dj * dj * cov[(j, j)]).max(0.0).sqrt()
        })
        .collect();
    let dx_fit = opts
        .geometry
        .and_then(|geom| infer_spread(&geom, &alpha_ratios, &alpha_ratio_stderr));

    Ok(FitResult {
        omega_fit: (sol.params[order + 1] * om0).abs(),
        gamma_fit: (sol.params[order + 2] * ga0).abs(),
        alpha: a,
        alpha_ratios,
        alpha_ratio_stderr,
        dx_fit,
        residual_rms: (rss / n).sqrt(),
        covariance_diag,
        n_points: tau.len(),
        iterations: sol.iterations,
    })
}

/// Fit of a merged histogram with delete-one-group jackknife errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JackknifeFit {
    pub fit: FitResult,
    pub alpha_ratio_stderr: Vec<f64>,
    pub omega_stderr: f64,
    pub gamma_stderr: f64,
    pub n_groups: usize,
}

/// Fits the merge of `groups` and estimates errors from the spread of the
/// leave-one-out fits. Unlike the normal-equation errors of
/// [`fit_expansion`], this accounts for the correlation between bins of one
/// histogram. Groups must be statistically independent.
pub fn fit_expansion_jackknife(groups: &[CorrelationHistogram], sigma_e: &[f64], opts: &FitOptions) -> Result<JackknifeFit> {
    let n = groups.len();
    if n < 3 {
        return Err(Error::invalid("jackknife needs at least three groups"));
    }
    let merged = merge_all(groups.iter())?;
    let fit = fit_expansion(&merged.normalized()?, sigma_e, opts)?;
    let leave_out: Vec<FitResult> = (0..n)
        .map(|i| {
            let h = merge_all(groups.iter().enumerate().filter(|(k, _)| *k != i).map(|(_, g)| g))?;
            fit_expansion(&h.normalized()?, sigma_e, opts)
        })
        .collect::<Result<_>>()?;
    let spread = |f: &dyn Fn(&FitResult) -> f64| {
        let mean = leave_out.iter().map(f).sum::<f64>() / n as f64;
        let ss: f64 = leave_out.iter().map(|r| (f(r) - mean).powi(2)).sum();
        (ss * (n - 1) as f64 / n as f64).sqrt()
    };
    let alpha_ratio_stderr = (0..fit.alpha_ratios.len())
        .map(|j| spread(&|r: &FitResult| r.alpha_ratios[j]))
        .collect();
    Ok(JackknifeFit {
        alpha_ratio_stderr,
        omega_stderr: spread(&|r: &FitResult| r.omega_fit),
        gamma_stderr: spread(&|r: &FitResult| r.gamma_fit),
        fit,
        n_groups: n,
    })
}

fn merge_all<'a>(mut it: impl Iterator<Item = &'a CorrelationHistogram>) -> Result<CorrelationHistogram> {
    let first = it.next().ok_or_else(|| Error::Empty("no histograms".into()))?.clone();
    it.try_fold(first, |acc, h| merge(&acc, h))
}

/// Solves `(A_j/A_0)(θ)·(2θ²)^j = r_j` for `θ`, using whichever of `j = 1, 2`
/// is better determined.
fn infer_spread(geom: &FitGeometry, ratios: &[f64], stderr: &[f64]) -> Option<f64> {
    let centred = geom.delta1_tilde * geom.delta2_tilde == 0.0;
    let significance = |j: usize| {
        let s = ratios.get(j)?.abs() / stderr[j];
        Some(if s.is_finite() { s } else { f64::MAX })
    };
    let j = match (significance(1), significance(2)) {
        (Some(_), None) => 1,
        (Some(s1), Some(s2)) if !centred && s1 >= s2 => 1,
        (_, Some(_)) => 2,
        _ => return None,
    };
    let target = ratios[j];
    let f = |theta: f64| {
        let g = Geometry {
            delta1_tilde: geom.delta1_tilde,
            delta2_tilde: geom.delta2_tilde,
            theta,
        };
        aj_closed_form(j, &g) / aj_closed_form(0, &g) * (2.0 * theta * theta).powi(j as i32) - target
    };
    let (lo, hi) = (1e-4, 0.5);
    if f(lo).signum() == f(hi).signum() {
        return None;
    }
    bisect(f, lo, hi, 1e-10).ok().map(|theta| theta * geom.w0)
}
