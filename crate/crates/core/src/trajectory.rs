//! Oscillator position records: exact-discretisation thermal trajectories,
//! coherent drives and autocorrelation estimators.

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::mechanics::OscillatorParams;
use crate::rng::{member_seed, substream, Purpose};
use crate::{Error, Result, K_B};

/// Sampling grid for a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryGrid {
    pub dt: f64,
    pub n_samples: usize,
    /// Steps simulated and discarded before the first recorded sample.
    pub burn_in: usize,
}

impl TrajectoryGrid {
    pub fn new(dt: f64, n_samples: usize, burn_in: usize) -> Result<Self> {
        let g = Self { dt, n_samples, burn_in };
        g.validate()?;
        Ok(g)
    }

    /// Grid with the default burn-in of `10/Γ_m`.
    pub fn with_default_burn_in(p: &OscillatorParams, dt: f64, n_samples: usize) -> Result<Self> {
        Self::new(dt, n_samples, default_burn_in(p, dt))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::invalid("dt must be > 0"));
        }
        if self.n_samples < 2 {
            return Err(Error::invalid("n_samples must be >= 2"));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.n_samples as f64
    }
}

/// Number of steps spanning `10/Γ_m`.
pub fn default_burn_in(p: &OscillatorParams, dt: f64) -> usize {
    (10.0 / (p.gamma_m * dt)).ceil() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriveKind {
    Thermal,
    Coherent,
}

/// Uniformly sampled positions `ξ(t_i)`, `t_i = i·dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub positions: Vec<f64>,
    pub dt: f64,
    pub seed: u64,
    pub drive_kind: DriveKind,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.positions.len() as f64
    }

    /// Linear interpolation of the position at time `t`, clamped to the record.
    pub fn position_at(&self, t: f64) -> f64 {
        let u = (t / self.dt).max(0.0);
        let i = u.floor() as usize;
        if i + 1 >= self.positions.len() {
            return *self.positions.last().unwrap_or(&0.0);
        }
        let f = u - i as f64;
        self.positions[i] + f * (self.positions[i + 1] - self.positions[i])
    }
}

/// One-step transition of the damped oscillator state `(x, v)`:
/// `s' = Φ s + L z` with `z` standard normal, exact for any step.
#[derive(Debug, Clone, Copy)]
pub struct ExactTransition {
    phi: [[f64; 2]; 2],
    chol: [[f64; 2]; 2],
    stationary_sd: [f64; 2],
}

impl ExactTransition {
    /// `var_x`, `var_v` are the stationary variances. `gamma` may be zero
    /// (energy-conserving rotation) but must satisfy `Ω² > Γ²/4`.
    pub fn new(omega: f64, gamma: f64, var_x: f64, var_v: f64, h: f64) -> Result<Self> {
        let disc = omega * omega - 0.25 * gamma * gamma;
        if !(disc > 0.0) {
            return Err(Error::UnsupportedRegime(format!(
                "not underdamped: Ω² − Γ²/4 = {disc:e}"
            )));
        }
        let w1 = disc.sqrt();
        let a = 0.5 * gamma;
        let decay = (-a * h).exp();
        let (s, c) = (w1 * h).sin_cos();
        let phi = [
            [decay * (c + a / w1 * s), decay * s / w1],
            [-decay * omega * omega * s / w1, decay * (c - a / w1 * s)],
        ];
        // Q = Σ − Φ Σ Φᵀ with Σ = diag(var_x, var_v).
        let q11 = var_x - (phi[0][0] * phi[0][0] * var_x + phi[0][1] * phi[0][1] * var_v);
        let q12 = -(phi[0][0] * phi[1][0] * var_x + phi[0][1] * phi[1][1] * var_v);
        let q22 = var_v - (phi[1][0] * phi[1][0] * var_x + phi[1][1] * phi[1][1] * var_v);
        let l11 = q11.max(0.0).sqrt();
        let l21 = if l11 > 0.0 { q12 / l11 } else { 0.0 };
        let l22 = (q22 - l21 * l21).max(0.0).sqrt();
        Ok(Self {
            phi,
            chol: [[l11, 0.0], [l21, l22]],
            stationary_sd: [var_x.sqrt(), var_v.sqrt()],
        })
    }

    /// Transition for the thermal state of `p`.
    pub fn thermal(p: &OscillatorParams, h: f64) -> Result<Self> {
        let var_v = K_B * p.temperature_eff / p.m_eff;
        let var_x = var_v / (p.omega_m * p.omega_m);
        Self::new(p.omega_m, p.gamma_m, var_x, var_v, h)
    }

    #[inline]
    pub fn propagate(&self, state: [f64; 2], z: [f64; 2]) -> [f64; 2] {
        let [x, v] = state;
        let p = &self.phi;
        let l = &self.chol;
        [
            p[0][0] * x + p[0][1] * v + l[0][0] * z[0],
            p[1][0] * x + p[1][1] * v + l[1][0] * z[0] + l[1][1] * z[1],
        ]
    }

    fn step<R: Rng>(&self, state: [f64; 2], rng: &mut R) -> [f64; 2] {
        let z = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
        self.propagate(state, z)
    }

    fn stationary_draw<R: Rng>(&self, rng: &mut R) -> [f64; 2] {
        let zx: f64 = rng.sample(StandardNormal);
        let zv: f64 = rng.sample(StandardNormal);
        [self.stationary_sd[0] * zx, self.stationary_sd[1] * zv]
    }
}

fn check_thermal(p: &OscillatorParams, grid: &TrajectoryGrid) -> Result<()> {
    p.validate()?;
    grid.validate()?;
    if grid.dt * p.omega_m >= 0.1 {
        return Err(Error::StepTooCoarse(format!(
            "dt·omega_m = {:.4} must be < 0.1",
            grid.dt * p.omega_m
        )));
    }
    Ok(())
}

/// Stationary Brownian trajectory of the mode `p`.
///
/// Starts from a draw of the stationary distribution and then discards
/// `grid.burn_in` steps.
pub fn simulate_thermal(p: &OscillatorParams, grid: &TrajectoryGrid, seed: u64) -> Result<Trajectory> {
    check_thermal(p, grid)?;
    let tr = ExactTransition::thermal(p, grid.dt)?;
    let mut rng = substream(seed, Purpose::Trajectory, 0);
    let mut state = tr.stationary_draw(&mut rng);
    for _ in 0..grid.burn_in {
        state = tr.step(state, &mut rng);
    }
    let mut positions = Vec::with_capacity(grid.n_samples);
    positions.push(state[0]);
    for _ in 1..grid.n_samples {
        state = tr.step(state, &mut rng);
        positions.push(state[0]);
    }
    Ok(Trajectory {
        positions,
        dt: grid.dt,
        seed,
        drive_kind: DriveKind::Thermal,
    })
}

/// Member `index` of the ensemble seeded by `master`.
pub fn ensemble_member(p: &OscillatorParams, grid: &TrajectoryGrid, master: u64, index: u64) -> Result<Trajectory> {
    simulate_thermal(p, grid, member_seed(master, index))
}

/// `amplitude·cos(omega·t_i + phase)`.
pub fn simulate_coherent(amplitude: f64, omega: f64, phase: f64, grid: &TrajectoryGrid) -> Result<Trajectory> {
    grid.validate()?;
    if !amplitude.is_finite() || !omega.is_finite() || !phase.is_finite() {
        return Err(Error::invalid("coherent drive parameters must be finite"));
    }
    let positions = (0..grid.n_samples)
        .map(|i| amplitude * (omega * i as f64 * grid.dt + phase).cos())
        .collect();
    Ok(Trajectory {
        positions,
        dt: grid.dt,
        seed: 0,
        drive_kind: DriveKind::Coherent,
    })
}

/// Biased (1/N) estimator of `⟨ξ(t)ξ(t+k·dt)⟩` for `k = 0..=max_lag`, taken
/// about the known zero mean. Computed by zero-padded FFT.
pub fn empirical_autocorrelation(t: &Trajectory, max_lag: usize) -> Result<Vec<f64>> {
    let n = t.positions.len();
    if max_lag >= n / 2 {
        return Err(Error::invalid(format!(
            "max_lag {max_lag} must be < n_samples/2 = {}",
            n / 2
        )));
    }
    let size = (n + max_lag + 1).next_power_of_two();
    let mut buf: Vec<Complex64> = t
        .positions
        .iter()
        .map(|&x| Complex64::new(x, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for z in buf.iter_mut() {
        *z = Complex64::new(z.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    let scale = 1.0 / (size as f64 * n as f64);
    Ok(buf[..=max_lag].iter().map(|z| z.re * scale).collect())
}
