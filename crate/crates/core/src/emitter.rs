//! Three-level emitter: ground `g`, excited `e` and a dark metastable
//! shelving state `m`, described by population rate equations
//!
//! ```text
//! dσg/dt = −P σg + γ σe + k_relax σm
//! dσe/dt =  P σg − (γ + k_isc) σe
//! dσm/dt =  k_isc σe − k_relax σm
//! ```
//!
//! integrated with fixed-step RK4.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Rate constants in 1/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmitterParams {
    pub gamma_rad: f64,
    pub k_isc: f64,
    pub k_relax: f64,
    /// Pump rate per unit of normalised intensity.
    pub pump_rate_per_intensity: f64,
}

impl Default for EmitterParams {
    fn default() -> Self {
        Self {
            gamma_rad: 8.3e7,
            k_isc: 8e6,
            k_relax: 3.3e6,
            pump_rate_per_intensity: 8.3e7,
        }
    }
}

impl EmitterParams {
    pub fn new(gamma_rad: f64, k_isc: f64, k_relax: f64, pump_rate_per_intensity: f64) -> Result<Self> {
        let e = Self {
            gamma_rad,
            k_isc,
            k_relax,
            pump_rate_per_intensity,
        };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_rad > 0.0) || !self.gamma_rad.is_finite() {
            return Err(Error::invalid("gamma_rad must be > 0"));
        }
        for (name, v) in [
            ("k_isc", self.k_isc),
            ("k_relax", self.k_relax),
            ("pump_rate_per_intensity", self.pump_rate_per_intensity),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be >= 0")));
            }
        }
        Ok(())
    }

    /// Bound on the fastest relaxation rate at the given pump: the magnitude
    /// of the generator trace, which dominates every eigenvalue.
    pub fn max_rate(&self, pump: f64) -> f64 {
        pump + self.gamma_rad + self.k_isc + self.k_relax
    }

    /// Rate generator `G` with `dσ/dt = G σ`, state order `(g, e, m)`.
    pub fn generator(&self, pump: f64) -> Matrix3<f64> {
        Matrix3::new(
            -pump,
            self.gamma_rad,
            self.k_relax,
            pump,
            -(self.gamma_rad + self.k_isc),
            0.0,
            0.0,
            self.k_isc,
            -self.k_relax,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmitterState {
    pub sigma_g: f64,
    pub sigma_e: f64,
    pub sigma_m: f64,
}

impl EmitterState {
    pub const GROUND: Self = Self {
        sigma_g: 1.0,
        sigma_e: 0.0,
        sigma_m: 0.0,
    };

    pub fn total(&self) -> f64 {
        self.sigma_g + self.sigma_e + self.sigma_m
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.sigma_g, self.sigma_e, self.sigma_m]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self {
            sigma_g: a[0],
            sigma_e: a[1],
            sigma_m: a[2],
        }
    }
}

/// Stationary populations at constant pump.
pub fn steady_state(e: &EmitterParams, pump: f64) -> Result<EmitterState> {
    if !(pump >= 0.0) || !pump.is_finite() {
        return Err(Error::invalid("pump must be >= 0"));
    }
    // Replace the first balance equation by the normalisation condition.
    let mut a = e.generator(pump);
    a[(0, 0)] = 1.0;
    a[(0, 1)] = 1.0;
    a[(0, 2)] = 1.0;
    let scale = a.abs().max();
    let lu = a.lu();
    let det = lu.determinant();
    if !(det.abs() > 1e-12 * scale.powi(2)) {
        return Err(Error::DegenerateGenerator(format!(
            "no unique stationary state at pump {pump:e}"
        )));
    }
    let x = lu
        .solve(&Vector3::new(1.0, 0.0, 0.0))
        .ok_or_else(|| Error::DegenerateGenerator("singular generator".into()))?;
    Ok(EmitterState::from_array([x[0], x[1], x[2]]))
}

#[inline]
fn derivative(e: &EmitterParams, pump: f64, s: [f64; 3]) -> [f64; 3] {
    let up = pump * s[0];
    let down = e.gamma_rad * s[1];
    let shelve = e.k_isc * s[1];
    let back = e.k_relax * s[2];
    [-up + down + back, up - down - shelve, shelve - back]
}

/// Evolution between emissions: the radiative return to the ground state
/// is the emission itself, so it is removed from the generator and the
/// total population decays at rate `γ σe`.
#[inline]
fn no_emission_derivative(e: &EmitterParams, pump: f64, s: [f64; 3]) -> [f64; 3] {
    let up = pump * s[0];
    let shelve = e.k_isc * s[1];
    let back = e.k_relax * s[2];
    [-up + back, up - (e.gamma_rad + e.k_isc) * s[1], shelve - back]
}

#[inline]
fn rk4<F: Fn(f64, [f64; 3]) -> [f64; 3]>(f: F, s: [f64; 3], pumps: [f64; 3], h: f64) -> [f64; 3] {
    let add = |a: [f64; 3], b: [f64; 3], c: f64| [a[0] + c * b[0], a[1] + c * b[1], a[2] + c * b[2]];
    let k1 = f(pumps[0], s);
    let k2 = f(pumps[1], add(s, k1, 0.5 * h));
    let k3 = f(pumps[1], add(s, k2, 0.5 * h));
    let k4 = f(pumps[2], add(s, k3, h));
    [
        s[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        s[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        s[2] + h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
    ]
}

/// One RK4 step of length `h`. `pumps` are the pump rates at the start,
/// midpoint and end of the step.
#[inline]
pub fn rk4_step(e: &EmitterParams, s: [f64; 3], pumps: [f64; 3], h: f64) -> [f64; 3] {
    rk4(|p, x| derivative(e, p, x), s, pumps, h)
}

/// RK4 step of the unnormalised populations conditioned on no emission.
#[inline]
pub fn rk4_step_no_emission(e: &EmitterParams, s: [f64; 3], pumps: [f64; 3], h: f64) -> [f64; 3] {
    rk4(|p, x| no_emission_derivative(e, p, x), s, pumps, h)
}

/// Largest RK4 step used internally, as a fraction of the fastest timescale.
pub const STEP_FRACTION: f64 = 0.02;
/// Coarsest sampling interval accepted, as a fraction of the fastest timescale.
pub const MAX_DT_FRACTION: f64 = 0.1;
/// Largest tolerated deviation of the population sum from one.
pub const DRIFT_LIMIT: f64 = 1e-6;

/// Number of RK4 substeps per sampling interval `dt`.
pub fn substeps(max_rate: f64, dt: f64) -> usize {
    ((dt * max_rate / STEP_FRACTION).ceil() as usize).max(1)
}

/// Populations sampled every `dt` over `[0, duration]`, starting from
/// `initial`. The pump may vary in time.
pub fn integrate<P: Fn(f64) -> f64>(
    e: &EmitterParams,
    initial: EmitterState,
    pump_of_t: P,
    duration: f64,
    dt: f64,
) -> Result<Vec<EmitterState>> {
    e.validate()?;
    if !(duration > 0.0) || !(dt > 0.0) {
        return Err(Error::invalid("duration and dt must be > 0"));
    }
    let n_out = (duration / dt * (1.0 + 1e-12)).floor() as usize;
    let mut s = initial.as_array();
    let mut out = Vec::with_capacity(n_out + 1);
    out.push(initial);
    for k in 0..n_out {
        let t0 = k as f64 * dt;
        let p0 = pump_of_t(t0);
        let p1 = pump_of_t(t0 + dt);
        if !(p0 >= 0.0 && p1 >= 0.0) {
            return Err(Error::invalid(format!("negative or NaN pump at t = {t0:e}")));
        }
        let max_rate = e.max_rate(p0.max(p1));
        if dt * max_rate > MAX_DT_FRACTION {
            return Err(Error::StepTooCoarse(format!(
                "dt = {dt:e} s exceeds {MAX_DT_FRACTION}/max rate = {:e} s",
                MAX_DT_FRACTION / max_rate
            )));
        }
        let n_sub = substeps(max_rate, dt);
        let h = dt / n_sub as f64;
        for j in 0..n_sub {
            let ta = t0 + j as f64 * h;
            s = rk4_step(e, s, [pump_of_t(ta), pump_of_t(ta + 0.5 * h), pump_of_t(ta + h)], h);
        }
        let drift = (s[0] + s[1] + s[2] - 1.0).abs();
        if drift > DRIFT_LIMIT {
            return Err(Error::PopulationDrift {
                drift,
                time: t0 + dt,
            });
        }
        out.push(EmitterState::from_array(s));
    }
    Ok(out)
}

/// `σe(k·dt)` after switching on `pump_of_t` with the emitter in its ground
/// state.
pub fn step_response<P: Fn(f64) -> f64>(e: &EmitterParams, pump_of_t: P, duration: f64, dt: f64) -> Result<Vec<f64>> {
    Ok(integrate(e, EmitterState::GROUND, pump_of_t, duration, dt)?
        .iter()
        .map(|s| s.sigma_e)
        .collect())
}

/// `σe(τ)` from the ground state at constant pump, at the ascending delays
/// `taus`.
pub fn excited_population(e: &EmitterParams, pump: f64, taus: &[f64]) -> Result<Vec<f64>> {
    e.validate()?;
    if !(pump >= 0.0) {
        return Err(Error::invalid("pump must be >= 0"));
    }
    let h_max = STEP_FRACTION / e.max_rate(pump);
    let mut s = EmitterState::GROUND.as_array();
    let mut t = 0.0;
    let mut out = Vec::with_capacity(taus.len());
    for &tau in taus {
        if !(tau >= t) {
            return Err(Error::invalid("delays must be ascending and >= 0"));
        }
        let span = tau - t;
        if span > 0.0 {
            let n = (span / h_max).ceil() as usize;
            let h = span / n as f64;
            for _ in 0..n {
                s = rk4_step(e, s, [pump; 3], h);
            }
        }
        let drift = (s[0] + s[1] + s[2] - 1.0).abs();
        if drift > DRIFT_LIMIT {
            return Err(Error::PopulationDrift { drift, time: tau });
        }
        t = tau;
        out.push(s[1]);
    }
    Ok(out)
}

/// Intensity autocorrelation of the static emitter,
/// `σe(τ | ground) / σe(∞)`.
pub fn stationary_g2(e: &EmitterParams, pump: f64, taus: &[f64]) -> Result<Vec<f64>> {
    if !(pump > 0.0) {
        return Err(Error::invalid("stationary g2 requires pump > 0"));
    }
    let ss = steady_state(e, pump)?.sigma_e;
    Ok(excited_population(e, pump, taus)?
        .into_iter()
        .map(|s| s / ss)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    /// Independent route: spectral decomposition of the generator. The
    /// non-zero eigenvalues are the roots of `λ² − tr(G) λ + M₂` where `M₂` is
    /// the sum of principal 2×2 minors; the excited population is
    /// `c₀ + c₁e^{λ₁t} + c₂e^{λ₂t}` with coefficients fixed by its value and
    /// first two derivatives at `t = 0`.
    fn spectral_sigma_e(e: &EmitterParams, pump: f64, x0: [f64; 3], t: f64) -> f64 {
        let g = e.generator(pump);
        let tr = g.trace();
        let m2 = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)] + g[(0, 0)] * g[(2, 2)] - g[(0, 2)] * g[(2, 0)]
            + g[(1, 1)] * g[(2, 2)] - g[(1, 2)] * g[(2, 1)];
        let disc = Complex64::new(tr * tr - 4.0 * m2, 0.0).sqrt();
        let l1 = (Complex64::new(tr, 0.0) + disc) / 2.0;
        let l2 = (Complex64::new(tr, 0.0) - disc) / 2.0;
        let x = Vector3::from(x0);
        let d0 = x[1];
        let d1 = (g * x)[1];
        let d2 = (g * g * x)[1];
        // Solve [1 1 1; 0 l1 l2; 0 l1² l2²] c = [d0 d1 d2].
        let det = l1 * l2 * l2 - l2 * l1 * l1;
        let c1 = (Complex64::new(d1, 0.0) * l2 * l2 - Complex64::new(d2, 0.0) * l2) / det;
        let c2 = (Complex64::new(d2, 0.0) * l1 - Complex64::new(d1, 0.0) * l1 * l1) / det;
        let c0 = Complex64::new(d0, 0.0) - c1 - c2;
        (c0 + c1 * (l1 * t).exp() + c2 * (l2 * t).exp()).re
    }

    #[test]
    fn steady_state_limits() {
        let e = EmitterParams::default();
        assert_eq!(steady_state(&e, 0.0).unwrap(), EmitterState::GROUND);
        let two = EmitterParams::new(8.3e7, 0.0, 3.3e6, 1.0).unwrap();
        let s = steady_state(&two, 8.3e7).unwrap();
        assert!((s.sigma_e - 0.5).abs() < 1e-12);
        let s = steady_state(&two, 1e12).unwrap();
        assert!((s.sigma_e - 1e12 / (1e12 + 8.3e7)).abs() < 1e-9);
    }

    #[test]
    fn steady_state_by_elimination() {
        let e = EmitterParams::new(5e7, 2e7, 1e6, 1.0).unwrap();
        let p = 3e7;
        // σe = P σg/(γ+k), σm = k σe / r, normalise.
        let se_over_sg = p / (e.gamma_rad + e.k_isc);
        let sm_over_sg = e.k_isc * se_over_sg / e.k_relax;
        let sg = 1.0 / (1.0 + se_over_sg + sm_over_sg);
        let s = steady_state(&e, p).unwrap();
        assert!((s.sigma_g - sg).abs() < 1e-12);
        assert!((s.sigma_e - se_over_sg * sg).abs() < 1e-12);
        assert!((s.sigma_m - sm_over_sg * sg).abs() < 1e-12);
    }

    #[test]
    fn degenerate_generator_detected() {
        let e = EmitterParams {
            gamma_rad: 1.0,
            k_isc: 0.0,
            k_relax: 0.0,
            pump_rate_per_intensity: 0.0,
        };
        // Ground and metastable both absorbing.
        let trapped = EmitterParams { k_isc: 1.0, ..e };
        assert!(matches!(steady_state(&trapped, 0.0), Err(Error::DegenerateGenerator(_))));
        let zero = EmitterParams { gamma_rad: 0.0, ..e };
        assert!(steady_state(&zero, 0.0).is_err());
    }

    #[test]
    fn zero_pump_stays_dark() {
        let e = EmitterParams::default();
        let r = step_response(&e, |_| 0.0, 1e-6, 1e-9).unwrap();
        assert!(r.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn two_level_relaxation() {
        let e = EmitterParams::new(8.3e7, 0.0, 3.3e6, 1.0).unwrap();
        let p = 4e7;
        let dt = 5e-10;
        let r = step_response(&e, |_| p, 2e-7, dt).unwrap();
        let s = p / (p + e.gamma_rad);
        for (k, v) in r.iter().enumerate() {
            let t = k as f64 * dt;
            assert!((v - s * (1.0 - (-(p + e.gamma_rad) * t).exp())).abs() < 1e-8);
        }
    }

    #[test]
    fn three_level_matches_spectral_solution() {
        let e = EmitterParams::default();
        let p = 8.3e7;
        let dt = 5e-10;
        let r = step_response(&e, |_| p, 3e-6, dt).unwrap();
        for (k, v) in r.iter().enumerate().step_by(7) {
            let t = k as f64 * dt;
            let exact = spectral_sigma_e(&e, p, [1.0, 0.0, 0.0], t);
            assert!((v - exact).abs() < 1e-8, "t={t:e}: {v} vs {exact}");
        }
        let ss = steady_state(&e, p).unwrap().sigma_e;
        assert!((r.last().unwrap() - ss).abs() < 1e-6);
    }

    #[test]
    fn coarse_dt_rejected() {
        let e = EmitterParams::default();
        assert!(matches!(
            step_response(&e, |_| 8.3e7, 1e-6, 2e-9),
            Err(Error::StepTooCoarse(_))
        ));
    }

    #[test]
    fn stationary_g2_shape() {
        let e = EmitterParams::default();
        let taus: Vec<f64> = (0..=4000).map(|k| k as f64 * 1e-9).collect();
        let g = stationary_g2(&e, 8.3e7, &taus).unwrap();
        assert_eq!(g[0], 0.0);
        assert!((g.last().unwrap() - 1.0).abs() < 1e-4);
        assert!(g.iter().cloned().fold(0.0, f64::max) > 1.0);
        let no_shelf = EmitterParams { k_isc: 0.0, ..e };
        let g = stationary_g2(&no_shelf, 8.3e7, &taus).unwrap();
        assert!(g.iter().all(|&v| v <= 1.0 + 1e-9));
    }

    #[test]
    fn linear_in_initial_state() {
        let e = EmitterParams::default();
        let pump = |t: f64| 6e7 * (1.0 + 0.5 * (2e7 * t).sin());
        let a = EmitterState::from_array([0.2, 0.5, 0.3]);
        let b = EmitterState::from_array([0.9, 0.0, 0.1]);
        let w = 0.35;
        let mix = EmitterState::from_array([
            w * a.sigma_g + (1.0 - w) * b.sigma_g,
            w * a.sigma_e + (1.0 - w) * b.sigma_e,
            w * a.sigma_m + (1.0 - w) * b.sigma_m,
        ]);
        let ra = integrate(&e, a, pump, 5e-7, 5e-10).unwrap();
        let rb = integrate(&e, b, pump, 5e-7, 5e-10).unwrap();
        let rm = integrate(&e, mix, pump, 5e-7, 5e-10).unwrap();
        for ((x, y), z) in ra.iter().zip(&rb).zip(&rm) {
            for i in 0..3 {
                let expect = w * x.as_array()[i] + (1.0 - w) * y.as_array()[i];
                assert!((z.as_array()[i] - expect).abs() < 1e-10);
            }
        }
    }
}
