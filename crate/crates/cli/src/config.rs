//! Scenario files: TOML sections with unit-suffixed values.
//!
//! ```toml
//! seed = 7
//! [oscillator]
//! frequency = "190 kHz"
//! quality = 2
//! ```
//!
//! Every key has a default; each default applied is logged at info level.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::Path;

use log::{info, warn};
use nanomotion::correlator::{start_weights_adiabatic, CorrelatorConfig, DetectionParams, Mode, Normalization};
use nanomotion::emitter::{steady_state, EmitterParams};
use nanomotion::mechanics::{temperature_for_spread, thermal_spread, OscillatorParams};
use nanomotion::optics::{mean_flux, Psf, PumpProfile};
use nanomotion::trajectory::{default_burn_in, TrajectoryGrid};
use nanomotion::analysis::Window;
use serde::Serialize;
use toml::{Table, Value};

use crate::error::CliError;
use crate::units::{parse_quantity, Dim};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Drive {
    Thermal,
    Coherent { amplitude: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Optics {
    pub w0: f64,
    pub x1: f64,
    pub x2: f64,
    pub pump: PumpProfile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Simulation {
    pub dt: f64,
    pub samples: usize,
    pub burn_in: usize,
    pub trajectories: usize,
    pub correlator: CorrelatorConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Detection {
    pub params: DetectionParams,
    pub duration: f64,
    pub segment: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Analysis {
    #[serde(serialize_with = "window_name")]
    pub window: Window,
    pub mask: f64,
    pub divide_sigma_e: bool,
    pub fit_order: usize,
    pub tau_min: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub j_max: usize,
    pub n_terms: usize,
}

fn window_name<S: serde::Serializer>(w: &Window, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(match w {
        Window::Hann => "hann",
        Window::Rectangular => "rect",
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImageGrid {
    pub span: f64,
    pub points: usize,
}

/// A fully validated run description, SI units throughout.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub seed: u64,
    pub oscillator: OscillatorParams,
    pub emitter: EmitterParams,
    /// Pump intensity in units of the emitter's per-intensity pump rate.
    pub intensity: f64,
    pub optics: Optics,
    pub drive: Drive,
    pub simulation: Simulation,
    pub detection: Detection,
    pub analysis: Analysis,
    pub n_modes: usize,
    pub image: ImageGrid,
    /// `Δx_th/w0`.
    pub theta: f64,
}

impl Scenario {
    pub fn dx_th(&self) -> f64 {
        match self.drive {
            Drive::Thermal => thermal_spread(&self.oscillator),
            Drive::Coherent { amplitude } => amplitude / 2f64.sqrt(),
        }
    }

    pub fn grid(&self) -> Result<TrajectoryGrid, CliError> {
        Ok(TrajectoryGrid::new(self.simulation.dt, self.simulation.samples, self.simulation.burn_in)?)
    }

    pub fn psfs(&self) -> Result<(Psf, Psf), CliError> {
        Ok((
            Psf::gaussian(self.optics.x1, self.optics.w0)?,
            Psf::gaussian(self.optics.x2, self.optics.w0)?,
        ))
    }

    /// The scenario as a config file with every key explicit (SI numbers).
    pub fn to_toml(&self) -> String {
        let o = &self.oscillator;
        let e = &self.emitter;
        let s = &self.simulation;
        let c = &s.correlator;
        let a = &self.analysis;
        let mut out = format!("seed = {}\n\n[oscillator]\n", self.seed);
        out += &format!("frequency = {:e}\n", o.omega_m / (2.0 * PI));
        out += &format!("quality = {:e}\n", o.quality_factor());
        out += &format!("mass = {:e}\n", o.m_eff);
        out += &format!("temperature = {:e}\n", o.temperature_eff);
        out += "\n[emitter]\n";
        out += &format!("gamma_rad = {:e}\nk_isc = {:e}\nk_relax = {:e}\n", e.gamma_rad, e.k_isc, e.k_relax);
        out += &format!("pump_rate = {:e}\nintensity = {:e}\n", e.pump_rate_per_intensity, self.intensity);
        out += "\n[optics]\n";
        out += &format!("w0 = {:e}\nx1 = {:e}\nx2 = {:e}\n", self.optics.w0, self.optics.x1, self.optics.x2);
        match self.optics.pump {
            PumpProfile::Broad { .. } => out += "pump = \"broad\"\n",
            PumpProfile::Gaussian { center, waist, .. } => {
                out += &format!("pump = \"gaussian\"\npump_center = {center:e}\npump_waist = {waist:e}\n")
            }
        }
        out += "\n[drive]\n";
        match self.drive {
            Drive::Thermal => out += "kind = \"thermal\"\n",
            Drive::Coherent { amplitude } => out += &format!("kind = \"coherent\"\namplitude = {amplitude:e}\n"),
        }
        out += "\n[simulation]\n";
        out += &format!("dt = {:e}\nsamples = {}\nburn_in = {}\ntrajectories = {}\n", s.dt, s.samples, s.burn_in, s.trajectories);
        out += &format!("tau_bin = {:e}\ntau_max = {:e}\nstart_stride = {}\nblocks = {}\n", c.tau_bin, c.tau_max, c.start_stride, c.blocks_per_trajectory);
        out += match c.mode {
            Mode::FullBloch => "mode = \"full_bloch\"\n",
            Mode::Adiabatic => "mode = \"adiabatic\"\n",
        };
        out += match c.normalization {
            Normalization::AnalyticFlux { .. } => "normalization = \"analytic\"\n",
            Normalization::TailAverage { .. } => "normalization = \"tail\"\n",
        };
        out += "\n[detection]\n";
        out += &format!(
            "efficiency = {:e}\ndark_rate = {:e}\nduration = {:e}\nsegment = {:e}\n",
            self.detection.params.efficiency, self.detection.params.dark_rate, self.detection.duration, self.detection.segment
        );
        out += "\n[analysis]\n";
        out += &format!("window = \"{}\"\nmask = {:e}\ndivide_sigma_e = {}\n", match a.window {
            Window::Hann => "hann",
            Window::Rectangular => "rect",
        }, a.mask, a.divide_sigma_e);
        out += &format!("fit_order = {}\ntau_min = {:e}\nf_min = {:e}\nf_max = {:e}\n", a.fit_order, a.tau_min, a.f_min, a.f_max);
        out += &format!("j_max = {}\nn_terms = {}\n", a.j_max, a.n_terms);
        out += &format!("\n[modes]\nn_max = {}\n", self.n_modes);
        out += &format!("\n[image]\nspan = {:e}\npoints = {}\n", self.image.span, self.image.points);
        out
    }
}

/// Key lookup over the parsed table, tracking consumed keys and locating
/// lines in the source for error messages.
struct Reader<'a> {
    source: &'a str,
    path: String,
    root: Table,
    used: BTreeSet<(String, String)>,
}

impl<'a> Reader<'a> {
    fn line_of(&self, section: &str, key: &str) -> usize {
        let mut current = String::new();
        for (n, line) in self.source.lines().enumerate() {
            let t = line.trim();
            if let Some(h) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
                current = h.trim().to_string();
                if key.is_empty() && current == section {
                    return n + 1;
                }
                continue;
            }
            if current == section && !key.is_empty() {
                if let Some(rest) = t.strip_prefix(key) {
                    if rest.trim_start().starts_with('=') {
                        return n + 1;
                    }
                }
            }
        }
        0
    }

    fn err(&self, section: &str, key: &str, msg: impl Into<String>) -> CliError {
        CliError::Parse {
            path: self.path.clone(),
            line: self.line_of(section, key),
            msg: format!("{}: {}", qualified(section, key), msg.into()),
        }
    }

    fn raw(&mut self, section: &str, key: &str) -> Option<Value> {
        let v = if section.is_empty() {
            self.root.get(key).cloned()
        } else {
            self.root.get(section).and_then(|s| s.as_table()).and_then(|t| t.get(key)).cloned()
        };
        if v.is_some() {
            self.used.insert((section.to_string(), key.to_string()));
        }
        v
    }

    fn quantity_opt(&mut self, section: &str, key: &str, dim: Dim) -> Result<Option<f64>, CliError> {
        match self.raw(section, key) {
            None => Ok(None),
            Some(Value::Integer(i)) => Ok(Some(i as f64)),
            Some(Value::Float(f)) => Ok(Some(f)),
            Some(Value::String(s)) => parse_quantity(&s, dim).map(Some).map_err(|m| self.err(section, key, m)),
            Some(other) => Err(self.err(section, key, format!("expected a quantity, found {}", other.type_str()))),
        }
    }

    fn quantity(&mut self, section: &str, key: &str, dim: Dim, default: f64) -> Result<f64, CliError> {
        Ok(self.quantity_opt(section, key, dim)?.unwrap_or_else(|| {
            info!("default {} = {} {}", qualified(section, key), crate::io::num(default), dim.si_unit());
            default
        }))
    }

    fn integer(&mut self, section: &str, key: &str, default: u64) -> Result<u64, CliError> {
        match self.raw(section, key) {
            None => {
                info!("default {} = {default}", qualified(section, key));
                Ok(default)
            }
            Some(Value::Integer(i)) if i >= 0 => Ok(i as u64),
            Some(other) => Err(self.err(section, key, format!("expected a non-negative integer, found {other}"))),
        }
    }

    fn text(&mut self, section: &str, key: &str, default: &str) -> Result<String, CliError> {
        match self.raw(section, key) {
            None => {
                info!("default {} = {default:?}", qualified(section, key));
                Ok(default.to_string())
            }
            Some(Value::String(s)) => Ok(s),
            Some(other) => Err(self.err(section, key, format!("expected a string, found {}", other.type_str()))),
        }
    }

    fn flag(&mut self, section: &str, key: &str, default: bool) -> Result<bool, CliError> {
        match self.raw(section, key) {
            None => {
                info!("default {} = {default}", qualified(section, key));
                Ok(default)
            }
            Some(Value::Boolean(b)) => Ok(b),
            Some(other) => Err(self.err(section, key, format!("expected true or false, found {}", other.type_str()))),
        }
    }

    fn reject_unknown(&self) -> Result<(), CliError> {
        for (k, v) in &self.root {
            match v.as_table() {
                Some(t) if SECTIONS.contains(&k.as_str()) => {
                    for key in t.keys() {
                        if !self.used.contains(&(k.clone(), key.clone())) {
                            return Err(self.err(k, key, "unknown key"));
                        }
                    }
                }
                Some(_) => return Err(self.err(k, "", "unknown section")),
                None if !self.used.contains(&(String::new(), k.clone())) => {
                    return Err(self.err("", k, "unknown top-level key"))
                }
                None => {}
            }
        }
        Ok(())
    }
}

const SECTIONS: [&str; 9] = [
    "oscillator",
    "emitter",
    "optics",
    "drive",
    "simulation",
    "detection",
    "analysis",
    "modes",
    "image",
];

fn qualified(section: &str, key: &str) -> String {
    match (section.is_empty(), key.is_empty()) {
        (true, _) => key.to_string(),
        (false, true) => format!("[{section}]"),
        (false, false) => format!("{section}.{key}"),
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_scenario(&text, &path.display().to_string())
}

/// Parses and validates scenario text. `origin` names the source in errors.
pub fn parse_scenario(text: &str, origin: &str) -> Result<Scenario, CliError> {
    let root: Table = toml::from_str(text).map_err(|e| CliError::Parse {
        path: origin.to_string(),
        line: e.span().map(|s| text[..s.start].matches('\n').count() + 1).unwrap_or(0),
        msg: e.message().to_string(),
    })?;
    let mut r = Reader {
        source: text,
        path: origin.to_string(),
        root,
        used: BTreeSet::new(),
    };
    let s = build(&mut r)?;
    r.reject_unknown()?;
    Ok(s)
}

fn build(r: &mut Reader) -> Result<Scenario, CliError> {
    let seed = r.integer("", "seed", 0)?;

    let freq = r.quantity("oscillator", "frequency", Dim::Frequency, 190e3)?;
    let quality = r.quantity("oscillator", "quality", Dim::Dimensionless, 2.0)?;
    let mass = r.quantity("oscillator", "mass", Dim::Mass, 2e-15)?;
    let spread = r.quantity_opt("oscillator", "spread", Dim::Length)?;
    let temperature = match spread {
        Some(_) => {
            if r.raw("oscillator", "temperature").is_some() {
                return Err(invalid("oscillator.spread and oscillator.temperature are mutually exclusive"));
            }
            300.0
        }
        None => r.quantity("oscillator", "temperature", Dim::Temperature, 300.0)?,
    };
    let mut oscillator = OscillatorParams::from_frequency(freq, quality, mass, temperature)?;
    if let Some(dx) = spread {
        if !(dx > 0.0) {
            return Err(invalid("oscillator.spread must be > 0"));
        }
        oscillator.temperature_eff = temperature_for_spread(&oscillator, dx);
    }

    let d = EmitterParams::default();
    let emitter = EmitterParams::new(
        r.quantity("emitter", "gamma_rad", Dim::Rate, d.gamma_rad)?,
        r.quantity("emitter", "k_isc", Dim::Rate, d.k_isc)?,
        r.quantity("emitter", "k_relax", Dim::Rate, d.k_relax)?,
        r.quantity("emitter", "pump_rate", Dim::Rate, d.pump_rate_per_intensity)?,
    )?;
    let intensity = r.quantity("emitter", "intensity", Dim::Dimensionless, 1.0)?;
    if !(intensity > 0.0) {
        return Err(invalid("emitter.intensity must be > 0"));
    }

    let w0 = r.quantity("optics", "w0", Dim::Length, 380e-9)?;
    if !(w0 > 0.0) {
        return Err(invalid("optics.w0 must be > 0"));
    }
    let x1 = r.quantity("optics", "x1", Dim::Length, 0.0)?;
    let x2 = r.quantity("optics", "x2", Dim::Length, 0.0)?;
    let pump = match r.text("optics", "pump", "broad")?.as_str() {
        "broad" => PumpProfile::Broad { i0: intensity },
        "gaussian" => PumpProfile::Gaussian {
            center: r.quantity("optics", "pump_center", Dim::Length, 0.0)?,
            waist: r.quantity("optics", "pump_waist", Dim::Length, 1e-6)?,
            i0: intensity,
        },
        other => return Err(r.err("optics", "pump", format!("expected \"broad\" or \"gaussian\", found {other:?}"))),
    };
    pump.validate()?;

    let drive = match r.text("drive", "kind", "thermal")?.as_str() {
        "thermal" => Drive::Thermal,
        "coherent" => {
            let amplitude = r.quantity("drive", "amplitude", Dim::Length, 100e-9)?;
            if !(amplitude > 0.0) {
                return Err(invalid("drive.amplitude must be > 0"));
            }
            Drive::Coherent { amplitude }
        }
        other => return Err(r.err("drive", "kind", format!("expected \"thermal\" or \"coherent\", found {other:?}"))),
    };

    let dt = r.quantity("simulation", "dt", Dim::Time, 10e-9)?;
    if !(dt > 0.0) {
        return Err(invalid("simulation.dt must be > 0"));
    }
    let wdt = dt * oscillator.omega_m;
    if !(wdt < 0.1) {
        return Err(invalid(format!(
            "simulation.dt: dt·omega_m = {wdt:.4} violates dt·omega_m < 0.1"
        )));
    }
    let samples = r.integer("simulation", "samples", 10_000)? as usize;
    let burn_in = r.integer("simulation", "burn_in", default_burn_in(&oscillator, dt) as u64)? as usize;
    let trajectories = r.integer("simulation", "trajectories", 1000)? as usize;
    if trajectories == 0 {
        return Err(invalid("simulation.trajectories must be >= 1"));
    }
    let tau_bin = r.quantity("simulation", "tau_bin", Dim::Time, 10e-9)?;
    let tau_max = r.quantity("simulation", "tau_max", Dim::Time, 1e-6)?;
    let start_stride = r.integer("simulation", "start_stride", 4)? as usize;
    let blocks = r.integer("simulation", "blocks", 1)? as usize;
    let mode = match r.text("simulation", "mode", "full_bloch")?.as_str() {
        "full_bloch" => Mode::FullBloch,
        "adiabatic" => Mode::Adiabatic,
        other => return Err(r.err("simulation", "mode", format!("expected \"full_bloch\" or \"adiabatic\", found {other:?}"))),
    };
    let theta_dx = match drive {
        Drive::Thermal => thermal_spread(&oscillator),
        Drive::Coherent { amplitude } => amplitude / 2f64.sqrt(),
    };
    let normalization = match r.text("simulation", "normalization", "analytic")?.as_str() {
        "analytic" => Normalization::AnalyticFlux { dx_th: theta_dx },
        "tail" => Normalization::tail(oscillator.gamma_m),
        other => return Err(r.err("simulation", "normalization", format!("expected \"analytic\" or \"tail\", found {other:?}"))),
    };
    let mut correlator = CorrelatorConfig::new(tau_bin, tau_max, x1, x2, normalization);
    correlator.start_stride = start_stride;
    correlator.blocks_per_trajectory = blocks;
    correlator.mode = mode;
    correlator.validate()?;
    correlator.samples_per_bin(dt)?;
    if tau_max >= dt * samples as f64 {
        return Err(invalid(format!(
            "simulation.tau_max = {tau_max:e} s must be shorter than the trajectory ({:e} s)",
            dt * samples as f64
        )));
    }
    let simulation = Simulation {
        dt,
        samples,
        burn_in,
        trajectories,
        correlator,
    };

    let theta = theta_dx / w0;
    info!("theta = dx/w0 = {theta:.6} (dx = {theta_dx:e} m)");
    if matches!(drive, Drive::Coherent { .. }) && matches!(normalization, Normalization::AnalyticFlux { .. }) {
        warn!("analytic normalisation treats the coherent drive as Gaussian with the same variance");
    }
    if mode == Mode::Adiabatic {
        start_weights_adiabatic(theta_dx, w0, emitter.gamma_rad, oscillator.omega_m);
    }

    let dark_rate = r.quantity("detection", "dark_rate", Dim::Rate, 0.0)?;
    let efficiency = match r.quantity_opt("detection", "flux", Dim::Rate)? {
        Some(flux) => {
            if r.raw("detection", "efficiency").is_some() {
                return Err(invalid("detection.flux and detection.efficiency are mutually exclusive"));
            }
            // Each click goes to one of the two channels with equal odds.
            let rho = steady_state(&emitter, intensity * emitter.pump_rate_per_intensity)?.sigma_e;
            let pi1 = mean_flux(&Psf::gaussian(x1, w0)?, theta_dx)?;
            let eta = 2.0 * flux / (emitter.gamma_rad * rho * pi1);
            info!("detection efficiency {eta:e} from flux {flux:e} /s per channel");
            eta
        }
        None => r.quantity("detection", "efficiency", Dim::Dimensionless, 0.01)?,
    };
    let params = DetectionParams { efficiency, dark_rate };
    params.validate()?;
    let duration = r.quantity("detection", "duration", Dim::Time, 10e-3)?;
    let segment = r.quantity("detection", "segment", Dim::Time, duration.min(10e-3))?;
    if !(duration > 0.0 && segment > 0.0) {
        return Err(invalid("detection.duration and detection.segment must be > 0"));
    }
    if segment / dt < 2.0 {
        return Err(invalid("detection.segment must span at least two time steps"));
    }
    let detection = Detection {
        params,
        duration,
        segment,
    };

    let window_name = r.text("analysis", "window", "hann")?;
    let window: Window = window_name
        .parse()
        .map_err(|_| r.err("analysis", "window", format!("expected \"hann\" or \"rect\", found {window_name:?}")))?;
    let analysis = Analysis {
        window,
        mask: r.quantity("analysis", "mask", Dim::Time, 50e-9)?,
        divide_sigma_e: r.flag("analysis", "divide_sigma_e", true)?,
        fit_order: r.integer("analysis", "fit_order", 4)? as usize,
        tau_min: r.quantity("analysis", "tau_min", Dim::Time, 50e-9)?,
        f_min: r.quantity("analysis", "f_min", Dim::Frequency, 20e3)?,
        f_max: r.quantity("analysis", "f_max", Dim::Frequency, 500e3)?,
        j_max: r.integer("analysis", "j_max", 4)? as usize,
        n_terms: r.integer("analysis", "n_terms", 200)? as usize,
    };
    if analysis.fit_order == 0 || analysis.fit_order > nanomotion::analysis::MAX_FIT_ORDER {
        return Err(invalid(format!(
            "analysis.fit_order must lie in 1..={}",
            nanomotion::analysis::MAX_FIT_ORDER
        )));
    }
    if !(analysis.f_min < analysis.f_max) {
        return Err(invalid("analysis.f_min must be below analysis.f_max"));
    }
    if analysis.j_max > nanomotion::wick::MAX_ORDER || analysis.n_terms == 0 || analysis.n_terms > nanomotion::wick::MAX_TERMS {
        return Err(invalid(format!(
            "analysis.j_max must be <= {} and analysis.n_terms in 1..={}",
            nanomotion::wick::MAX_ORDER,
            nanomotion::wick::MAX_TERMS
        )));
    }

    let n_modes = r.integer("modes", "n_max", 5)? as usize;
    if n_modes == 0 {
        return Err(invalid("modes.n_max must be >= 1"));
    }
    let image = ImageGrid {
        span: r.quantity("image", "span", Dim::Length, 4.0 * (w0 + theta_dx))?,
        points: r.integer("image", "points", 201)? as usize,
    };
    if !(image.span > 0.0) || image.points < 2 {
        return Err(invalid("image.span must be > 0 and image.points >= 2"));
    }

    Ok(Scenario {
        seed,
        oscillator,
        emitter,
        intensity,
        optics: Optics { w0, x1, x2, pump },
        drive,
        simulation,
        detection,
        analysis,
        n_modes,
        image,
        theta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_takes_defaults() {
        let s = parse_scenario("[oscillator]\nfrequency = \"190 kHz\"\n", "t").unwrap();
        assert!((s.oscillator.omega_m - 2.0 * PI * 190e3).abs() < 1e-6);
        assert_eq!(s.optics.w0, 380e-9);
        assert_eq!(s.simulation.trajectories, 1000);
    }

    #[test]
    fn spread_sets_theta() {
        let s = parse_scenario("[oscillator]\nspread = \"190 nm\"\n", "t").unwrap();
        assert!((s.theta - 0.5).abs() < 1e-12);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse_scenario("seed = 1\n[oscillator]\nquality = 2\nfrequency = \"190 kg\"\n", "t").unwrap_err();
        assert!(matches!(e, CliError::Parse { line: 4, .. }), "{e}");
        let e = parse_scenario("seed = 1\n\n[optics\n", "t").unwrap_err();
        assert!(matches!(e, CliError::Parse { line: 3, .. }), "{e}");
        let e = parse_scenario("[simulation]\ndt = \"1 ns\"\nbogus = 3\n", "t").unwrap_err();
        assert!(matches!(e, CliError::Parse { line: 3, .. }), "{e}");
    }

    #[test]
    fn coarse_dt_is_a_validation_error() {
        let e = parse_scenario("[simulation]\ndt = \"100 ns\"\n", "t").unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("dt·omega_m"));
    }

    #[test]
    fn resolved_scenario_round_trips() {
        let s = parse_scenario(
            "seed = 9\n[oscillator]\nspread = \"114 nm\"\n[optics]\nx1 = \"100 nm\"\npump = \"gaussian\"\npump_waist = \"2 um\"\n[detection]\nflux = \"95 kHz\"\ndark_rate = 50\n",
            "t",
        )
        .unwrap();
        let again = parse_scenario(&s.to_toml(), "t").unwrap();
        assert_eq!(s.seed, again.seed);
        assert_eq!(s.optics, again.optics);
        assert!((s.oscillator.omega_m / again.oscillator.omega_m - 1.0).abs() < 1e-14);
        assert!((s.theta / again.theta - 1.0).abs() < 1e-12);
        assert!((s.detection.params.efficiency / again.detection.params.efficiency - 1.0).abs() < 1e-14);
    }
}
