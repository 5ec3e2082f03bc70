//! Monte-Carlo estimators of the spatio-temporal intensity correlation
//! `G²(τ, x₁, x₂)` and its normalised form `g²`.
//!
//! All estimators produce a [`CorrelationHistogram`]: per-bin sums, the
//! expected uncorrelated level used for normalisation, and block statistics
//! for standard errors. Histograms form a commutative monoid under
//! [`merge`], so ensembles can be split across workers and recombined in a
//! fixed order.

mod stream;
mod weighted;

pub use stream::{correlate_stream, sample_photon_stream, Click, DetectionParams, PhotonStream};
pub use weighted::{g2_adiabatic, g2_weighted, AdiabaticCorrelator, WeightedCorrelator};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Bloch integration along each trajectory from every start time.
    FullBloch,
    /// `σe(τ)` supplied once and multiplied onto the oscillator correlation.
    Adiabatic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Divide by the expected uncorrelated level: the product of mean fluxes
    /// for a Gaussian position distribution of rms `dx_th` (trajectory
    /// estimators) or the accidental rate `N₁N₂τ_bin/T` (photon streams).
    AnalyticFlux { dx_th: f64 },
    /// Divide by the mean of the bins in `[start_frac, end_frac]·τ_max`.
    /// The window must start after `5/gamma_m`.
    TailAverage { start_frac: f64, end_frac: f64, gamma_m: f64 },
}

impl Normalization {
    pub fn tail(gamma_m: f64) -> Self {
        Normalization::TailAverage {
            start_frac: 0.8,
            end_frac: 1.0,
            gamma_m,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorConfig {
    pub tau_bin: f64,
    pub tau_max: f64,
    /// Samples between successive start times.
    pub start_stride: usize,
    pub x1: f64,
    pub x2: f64,
    pub mode: Mode,
    pub normalization: Normalization,
    /// Contiguous groups of start times per trajectory, each a separate
    /// block for the standard-error estimate.
    pub blocks_per_trajectory: usize,
}

impl CorrelatorConfig {
    pub fn new(tau_bin: f64, tau_max: f64, x1: f64, x2: f64, normalization: Normalization) -> Self {
        Self {
            tau_bin,
            tau_max,
            start_stride: 4,
            x1,
            x2,
            mode: Mode::FullBloch,
            normalization,
            blocks_per_trajectory: 1,
        }
    }

    /// Number of delay bins.
    pub fn n_bins(&self) -> usize {
        let r = self.tau_max / self.tau_bin;
        let rounded = r.round();
        if (r - rounded).abs() <= 1e-9 * r {
            rounded as usize
        } else {
            r.floor() as usize
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_bin > 0.0) || !self.tau_bin.is_finite() {
            return Err(Error::invalid("tau_bin must be > 0"));
        }
        if !(self.tau_max >= 10.0 * self.tau_bin * (1.0 - 1e-12)) {
            return Err(Error::invalid("tau_max must be >= 10·tau_bin"));
        }
        if self.start_stride == 0 || self.blocks_per_trajectory == 0 {
            return Err(Error::invalid("start_stride and blocks_per_trajectory must be >= 1"));
        }
        if !self.x1.is_finite() || !self.x2.is_finite() {
            return Err(Error::invalid("detector centres must be finite"));
        }
        match self.normalization {
            Normalization::AnalyticFlux { dx_th } if !(dx_th >= 0.0) => Err(Error::invalid("dx_th must be >= 0")),
            Normalization::TailAverage {
                start_frac,
                end_frac,
                gamma_m,
            } => {
                if !(0.0 <= start_frac && start_frac < end_frac && end_frac <= 1.0) {
                    return Err(Error::invalid("tail window must satisfy 0 <= start < end <= 1"));
                }
                if !(gamma_m > 0.0) {
                    return Err(Error::invalid("tail normalisation needs gamma_m > 0"));
                }
                let start = start_frac * self.tau_max;
                if start < 5.0 / gamma_m {
                    return Err(Error::UnsupportedRegime(format!(
                        "tail window starts at {start:e} s, inside the oscillatory region (< 5/gamma_m = {:e} s)",
                        5.0 / gamma_m
                    )));
                }
                if self.tail_bins().is_empty() {
                    return Err(Error::invalid("tail window contains no bins"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Bin indices whose lower edge lies in the tail window.
    pub fn tail_bins(&self) -> std::ops::Range<usize> {
        match self.normalization {
            Normalization::TailAverage { start_frac, end_frac, .. } => {
                let n = self.n_bins();
                let lo = ((start_frac * n as f64).ceil() as usize).min(n);
                let hi = ((end_frac * n as f64).floor() as usize).min(n);
                lo..hi.max(lo)
            }
            Normalization::AnalyticFlux { .. } => 0..0,
        }
    }

    /// Samples per bin for a trajectory step `dt`; bins must hold a whole
    /// number of samples.
    pub fn samples_per_bin(&self, dt: f64) -> Result<usize> {
        let m = self.tau_bin / dt;
        let r = m.round();
        if r < 1.0 || (m - r).abs() > 1e-6 * r {
            return Err(Error::invalid(format!(
                "tau_bin = {:e} s must be a positive integer multiple of dt = {dt:e} s",
                self.tau_bin
            )));
        }
        Ok(r as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Weighted,
    Adiabatic,
    Stream,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramMeta {
    pub config: CorrelatorConfig,
    /// Representative delay of each bin relative to its lower edge.
    pub lag_offset: f64,
    pub source: Source,
}

/// Mergeable accumulator of delay-binned correlation sums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationHistogram {
    pub bin_edges: Vec<f64>,
    pub weighted_sum: Vec<f64>,
    /// Expected value of every bin in the absence of correlations.
    pub weight_norm: f64,
    pub n_starts: u64,
    pub n_blocks: u64,
    /// Σ_b S_b² per bin over blocks.
    pub sum_sq: Vec<f64>,
    /// Σ_b S_b W_b per bin over blocks.
    pub sum_cross: Vec<f64>,
    /// Σ_b W_b².
    pub norm_sq: f64,
    pub meta: HistogramMeta,
}

/// Normalised correlation with per-bin standard errors. `stderr` is NaN
/// when fewer than two blocks were accumulated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Curve {
    pub tau: Vec<f64>,
    pub g2: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl G2Curve {
    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }
}

impl CorrelationHistogram {
    /// Empty accumulator, the identity of [`merge`].
    pub fn empty(config: CorrelatorConfig, lag_offset: f64, source: Source) -> Self {
        let n = config.n_bins();
        Self {
            bin_edges: (0..=n).map(|b| b as f64 * config.tau_bin).collect(),
            weighted_sum: vec![0.0; n],
            weight_norm: 0.0,
            n_starts: 0,
            n_blocks: 0,
            sum_sq: vec![0.0; n],
            sum_cross: vec![0.0; n],
            norm_sq: 0.0,
            meta: HistogramMeta {
                config,
                lag_offset,
                source,
            },
        }
    }

    pub fn n_bins(&self) -> usize {
        self.weighted_sum.len()
    }

    /// Representative delay of each bin.
    pub fn lags(&self) -> Vec<f64> {
        self.bin_edges[..self.n_bins()]
            .iter()
            .map(|e| e + self.meta.lag_offset)
            .collect()
    }

    /// Adds one statistically independent block. `accidental` is the block's
    /// expected per-bin value without correlations; under tail
    /// normalisation it is replaced by the block's own tail mean.
    pub fn add_block(&mut self, sums: &[f64], accidental: f64, n_starts: u64) {
        debug_assert_eq!(sums.len(), self.n_bins());
        let tail = self.meta.config.tail_bins();
        let w = if tail.is_empty() {
            accidental
        } else {
            sums[tail.clone()].iter().sum::<f64>() / tail.len() as f64
        };
        for (b, &s) in sums.iter().enumerate() {
            self.weighted_sum[b] += s;
            self.sum_sq[b] += s * s;
            self.sum_cross[b] += s * w;
        }
        self.weight_norm += w;
        self.norm_sq += w * w;
        self.n_starts += n_starts;
        self.n_blocks += 1;
    }

    /// `g²` per bin with delta-method standard errors over blocks.
    pub fn normalized(&self) -> Result<G2Curve> {
        if !(self.weight_norm > 0.0) {
            return Err(Error::Empty("histogram has no normalisation weight".into()));
        }
        let n = self.n_blocks as f64;
        let w = self.weight_norm;
        let mut g2 = Vec::with_capacity(self.n_bins());
        let mut stderr = Vec::with_capacity(self.n_bins());
        for b in 0..self.n_bins() {
            let g = self.weighted_sum[b] / w;
            g2.push(g);
            if self.n_blocks < 2 {
                stderr.push(f64::NAN);
            } else {
                let ss = self.sum_sq[b] - 2.0 * g * self.sum_cross[b] + g * g * self.norm_sq;
                stderr.push((ss.max(0.0) * n / (n - 1.0)).sqrt() / w);
            }
        }
        Ok(G2Curve {
            tau: self.lags(),
            g2,
            stderr,
        })
    }
}

/// Elementwise sum of two histograms with identical binning and
/// configuration.
pub fn merge(h1: &CorrelationHistogram, h2: &CorrelationHistogram) -> Result<CorrelationHistogram> {
    if h1.bin_edges != h2.bin_edges {
        return Err(Error::ConfigMismatch("bin edges differ".into()));
    }
    if h1.meta != h2.meta {
        return Err(Error::ConfigMismatch("configuration metadata differs".into()));
    }
    let add = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + y).collect::<Vec<f64>>();
    Ok(CorrelationHistogram {
        bin_edges: h1.bin_edges.clone(),
        weighted_sum: add(&h1.weighted_sum, &h2.weighted_sum),
        weight_norm: h1.weight_norm + h2.weight_norm,
        n_starts: h1.n_starts + h2.n_starts,
        n_blocks: h1.n_blocks + h2.n_blocks,
        sum_sq: add(&h1.sum_sq, &h2.sum_sq),
        sum_cross: add(&h1.sum_cross, &h2.sum_cross),
        norm_sq: h1.norm_sq + h2.norm_sq,
        meta: h1.meta.clone(),
    })
}

/// Runs `member` for every index on the current rayon pool and merges the
/// results in index order, so the outcome does not depend on the number of
/// workers.
pub fn ensemble_histogram<F>(n_members: usize, member: F) -> Result<CorrelationHistogram>
where
    F: Fn(usize) -> Result<CorrelationHistogram> + Sync,
{
    if n_members == 0 {
        return Err(Error::Empty("ensemble has no members".into()));
    }
    let parts = (0..n_members)
        .into_par_iter()
        .map(&member)
        .collect::<Result<Vec<_>>>()?;
    let mut iter = parts.into_iter();
    let first = iter.next().expect("at least one member");
    iter.try_fold(first, |acc, h| merge(&acc, &h))
}

/// Whether weighting start times by the stationary `σ̄e` is justified:
/// `Δx_th/w0 < 0.1·Γ_rad/Ω_m`. Logs a warning when it is not.
pub fn start_weights_adiabatic(dx_th: f64, w0: f64, gamma_rad: f64, omega_m: f64) -> bool {
    let ok = dx_th / w0 < 0.1 * gamma_rad / omega_m;
    if !ok {
        log::warn!(
            "dx_th/w0 = {:.3} is not small against gamma_rad/omega_m = {:.3}; stationary start weights are approximate",
            dx_th / w0,
            gamma_rad / omega_m
        );
    }
    ok
}
