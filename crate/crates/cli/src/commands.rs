use std::f64::consts::{PI, SQRT_2};
use std::path::{Path, PathBuf};

use log::{info, warn};
use nanomotion::analysis::{fit_expansion, fit_thermal_spectrum, spectrum_from_g2, FitGeometry, FitOptions};
use nanomotion::correlator::{
    correlate_stream, ensemble_histogram, sample_photon_stream, AdiabaticCorrelator, Click, G2Curve, Mode, PhotonStream,
    WeightedCorrelator,
};
use nanomotion::emitter::stationary_g2;
use nanomotion::mechanics::{damped_cosine, solve_beam_modes, TABULATED_MEFF_RATIO};
use nanomotion::optics::{coherent_drive_image, mean_flux, Psf};
use nanomotion::rng::member_seed;
use nanomotion::trajectory::{ensemble_member, simulate_coherent, Trajectory, TrajectoryGrid};
use nanomotion::wick::{aj_general, expansion_coefficients, g2_series, Geometry};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use crate::config::{Drive, Scenario};
use crate::error::{io_err, CliError};
use crate::io::{key_values, num, read_clicks, read_g2, sig6, Csv};
use crate::Command;

/// Files written by a subcommand and headline numbers for the manifest.
#[derive(Default)]
pub struct Outcome {
    pub files: Vec<String>,
    pub summary: Map<String, Value>,
}

impl Outcome {
    fn write_csv(&mut self, out: &Path, name: &str, csv: &Csv) -> Result<(), CliError> {
        csv.write(&out.join(name))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn note(&mut self, key: &str, v: impl Into<Value>) {
        self.summary.insert(key.to_string(), v.into());
    }
}

pub fn run(cmd: &Command, s: &Scenario, out: &Path) -> Result<Outcome, CliError> {
    let mut o = Outcome::default();
    match cmd {
        Command::Modes { n_max } => modes(s, n_max.unwrap_or(s.n_modes), out, &mut o)?,
        Command::Image => image(s, out, &mut o)?,
        Command::EmitterG2 => emitter_g2(s, out, &mut o)?,
        Command::SimulateG2 { dump_trajectory } => simulate_g2(s, *dump_trajectory, out, &mut o)?,
        Command::AnalyticG2 => analytic_g2(s, out, &mut o)?,
        Command::AjTable => aj_table(s, out, &mut o)?,
        Command::PhotonStream => photon_stream(s, out, &mut o)?,
        Command::Correlate { input, duration } => correlate(s, input, *duration, out, &mut o)?,
        Command::Spectrum { input } => spectrum(s, input, out, &mut o)?,
        Command::Fit { input } => fit(s, input, out, &mut o)?,
    }
    Ok(o)
}

fn lag_grid(s: &Scenario) -> Vec<f64> {
    let c = &s.simulation.correlator;
    (0..=c.n_bins()).map(|k| k as f64 * c.tau_bin).collect()
}

/// Pump rate seen by the emitter at its rest position.
fn rest_pump(s: &Scenario) -> f64 {
    s.optics.pump.intensity(0.0) * s.emitter.pump_rate_per_intensity
}

fn modes(_s: &Scenario, n_max: usize, out: &Path, o: &mut Outcome) -> Result<(), CliError> {
    let modes = solve_beam_modes(n_max)?;
    let mut csv = Csv::new("n,kL,A_n,meff_ratio");
    let mut flagged = Vec::new();
    for m in &modes {
        csv.row([m.n.to_string(), sig6(m.kl), sig6(m.a_n), sig6(m.meff_ratio)]);
        if let Some(&tab) = TABULATED_MEFF_RATIO.get(m.n - 1) {
            if (m.meff_ratio - tab).abs() > 5e-5 {
                flagged.push(m.n);
                warn!("mode {}: meff_ratio {:.4} differs from the tabulated {tab:.4}", m.n, m.meff_ratio);
            }
        }
    }
    o.write_csv(out, "modes.csv", &csv)?;
    o.note("meff_ratio_table_disagreement", flagged);
    Ok(())
}

fn image(s: &Scenario, out: &Path, o: &mut Outcome) -> Result<(), CliError> {
    let n = s.image.points;
    let xs: Vec<f64> = (0..n)
        .map(|i| s.image.span * (i as f64 / (n - 1) as f64 - 0.5))
        .collect();
    let flux = match s.drive {
        Drive::Thermal => xs
            .iter()
            .map(|&x| mean_flux(&Psf::gaussian(x, s.optics.w0)?, s.dx_th()))
            .collect::<Result<Vec<_>, _>>()?,
        Drive::Coherent { amplitude } => coherent_drive_image(&xs, 0.0, amplitude, s.optics.w0)?,
    };
    let mut csv = Csv::new("x_m,flux");
    for (x, f) in xs.iter().zip(&flux) {
        csv.nums(&[*x, *f]);
    }
    o.write_csv(out, "image.csv", &csv)
}

fn emitter_g2(s: &Scenario, out: &Path, o: &mut Outcome) -> Result<(), CliError> {
    let taus = lag_grid(s);
    let g = stationary_g2(&s.emitter, rest_pump(s), &taus)?;
    let mut csv = Csv::new("tau_s,g2");
    for (t, v) in taus.iter().zip(&g) {
        csv.nums(&[*t, *v]);
    }
    o.note("g2_zero", g[0]);
    o.write_csv(out, "emitter_g2.csv", &csv)
}

/// Trajectory `index` of the scenario's ensemble on `grid`.
fn member(s: &Scenario, grid: &TrajectoryGrid, index: usize, count: usize) -> nanomotion::Result<Trajectory> {
    match s.drive {
        Drive::Thermal => ensemble_member(&s.oscillator, grid, s.seed, index as u64),
        // Phases stratified over one period.
        Drive::Coherent { amplitude } => simulate_coherent(amplitude, s.oscillator.omega_m, 2.0 * PI * index as f64 / count as f64, grid),
    }
}

fn curve_csv(g: &G2Curve) -> Csv {
    let mut csv = Csv::new("tau_s,g2,stderr");
    for k in 0..g.len() {
        csv.nums(&[g.tau[k], g.g2[k], g.stderr[k]]);
    }
    csv
}

fn simulate_g2(s: &Scenario, dump: bool, out: &Path, o: &mut Outcome) -> Result<(), CliError> {
    let grid = s.grid()?;
    let cfg = &s.simulation.correlator;
    let (psf1, psf2) = s.psfs()?;
    let n = s.simulation.trajectories;
    let dt = s.simulation.dt;
    let h = match cfg.mode {
        Mode::FullBloch => {
            let corr = WeightedCorrelator::new(&s.emitter, &s.optics.pump, &psf1, &psf2, cfg, dt)?;
            ensemble_histogram(n, |i| corr.accumulate(&member(s, &grid, i, n)?))?
        }
        Mode::Adiabatic => {
            let pump = rest_pump(s);
            let e = s.emitter;
            let sigma = move |t: f64| stationary_g2(&e, pump, &[t]).map(|v| v[0]).unwrap_or(f64::NAN);
            let corr = AdiabaticCorrelator::new(&psf1, &psf2, sigma, cfg, dt)?;
            ensemble_histogram(n, |i| corr.accumulate(&member(s, &grid, i, n)?))?
        }
    };
    let g = h.normalized()?;
    o.note("n_starts", h.n_starts);
    o.write_csv(out, "simulate_g2.csv", &curve_csv(&g))?;
    if dump {
        let t = member(s, &grid, 0, n)?;
        let mut csv = Csv::new("t_s,x_m");
        for (i, x) in t.positions.iter().enumerate() {
            csv.nums(&[t.time(i), *x]);
        }
        o.write_csv(out, "trajectory.csv", &csv)?;
    }
    Ok(())
}

fn geometry(s: &Scenario) -> Result<Geometry, CliError> {
    Ok(Geometry::from_physical(s.optics.x1, s.optics.x2, s.optics.w0, s.dx_th())?)
}

fn analytic_g2(s: &Scenario, out: &Path, o: &mut Outcome) -> Result<(), CliError> {
    let geom = geometry(s)?;
    let coeffs = expansion_coefficients(&geom, s.analysis.j_max, s.analysis.n_terms)?;
    let taus = lag_grid(s);
    let dx2 = s.dx_th().powi(2);
    let c: Vec<f64> = taus
        .iter()
        .map(|&t| dx2 * damped_cosine(s.oscillator.omega_m, s.oscillator.gamma_m, t))
        .collect();
    let sigma = stationary_g2(&s.emitter, rest_pump(s), &taus)?;
    let g = g2_series(&c, &coeffs, &sigma, s.optics.w0)?;
    let mut csv = Csv::new("tau_s,g2");
    for (t, v) in taus.iter().zip(&g) {
        csv.nums(&[*t, *v]);
    }
    o.note("theta", geom.theta);
    o.write_csv(out, "analytic_g2.csv", &csv)
}

fn aj_table(s: &Scenario, out: &Path, o: &mut Outcome) -> Result<(), CliError> {
    let geom = geometry(s)?;
    let mut csv = Csv::new("j,A_j,converged");
    let mut failed = Vec::new();
    for j in 0..=s.analysis.j_max {
        let v = aj_general(j, &geom, s.analysis.n_terms)?;
        if !v.converged {
            failed.push(j);
        }
        csv.row([j.to_string(), num(v.value), v.converged.to_string()]);
    }
    o.write_csv(out, "aj_table.csv", &csv)?;
    o.note("theta", geom.theta);
    if failed.is_empty() {
        Ok(())
    } else {
        Err(nanomotion::Error::NonConvergence(format!(
            "series for A_j with j in {failed:?} did not converge at theta = {}",
            geom.theta
        ))
        .into())
    }
}

fn photon_stream(s: &Scenario, out: &Path, o: &mut Outcome) -> Result<(), CliError> {
    let d = &s.detection;
    let dt = s.simulation.dt;
    let n_seg = (d.duration / d.segment).round().max(1.0) as usize;
    let seg_samples = (d.segment / dt).round() as usize;
    let seg_len = seg_samples as f64 * dt;
    let total = n_seg as f64 * seg_len;
    if (total - d.duration).abs() > 1e-9 * d.duration {
        info!("record length rounded to {n_seg} segments of {seg_len:e} s = {total:e} s");
    }
    let grid = TrajectoryGrid::new(dt, seg_samples, s.simulation.burn_in)?;
    let (psf1, psf2) = s.psfs()?;
    let segments = (0..n_seg)
        .into_par_iter()
        .map(|i| -> Result<Vec<Click>, CliError> {
            let traj = match s.drive {
                Drive::Thermal => ensemble_member(&s.oscillator, &grid, s.seed, i as u64)?,
                // Phase continuous across segments.
                Drive::Coherent { amplitude } => {
                    simulate_coherent(amplitude, s.oscillator.omega_m, s.oscillator.omega_m * i as f64 * seg_len, &grid)?
                }
            };
            let st = sample_photon_stream(
                &traj,
                &s.emitter,
                &s.optics.pump,
                &psf1,
                &psf2,
                &d.params,
                member_seed(s.seed, i as u64),
            )?;
            let offset = i as f64 * seg_len;
            Ok(st
                .clicks
                .into_iter()
                .map(|c| Click {
                    time: c.time + offset,
                    detector: c.detector,
                })
                .collect())
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut csv = Csv::new("t_s,detector");
    let (mut n1, mut n2) = (0usize, 0usize);
    for c in segments.iter().flatten() {
        csv.row([num(c.time), c.detector.to_string()]);
        if c.detector == 1 {
            n1 += 1;
        } else {
            n2 += 1;
        }
    }
    o.note("duration_s", total);
    o.note("counts_detector_1", n1);
    o.note("counts_detector_2", n2);
    o.note("clicks_per_period", (n1 + n2) as f64 / total * 2.0 * PI / s.oscillator.omega_m);
    o.write_csv(out, "photon_stream.csv", &csv)
}

fn correlate(s: &Scenario, input: &Path, duration: Option<f64>, out: &Path, o: &mut Outcome) -> Result<(), CliError> {
    let clicks = read_clicks(input)?;
    let duration = duration.unwrap_or(s.detection.duration);
    if let Some(last) = clicks.last() {
        if last.time > duration || clicks[0].time < 0.0 {
            return Err(CliError::Validation(format!(
                "clicks span [{:e}, {:e}] s, outside the record length {duration:e} s",
                clicks[0].time, last.time
            )));
        }
    }
    let stream = PhotonStream {
        clicks,
        duration,
        seed: s.seed,
    };
    let h = correlate_stream(&stream, &s.simulation.correlator)?;
    let g = h.normalized()?;
    o.note("counts_detector_1", stream.count(1));
    o.note("counts_detector_2", stream.count(2));
    o.write_csv(out, "correlate.csv", &curve_csv(&g))
}

/// Divides out the emitter's own correlation where requested.
fn motional_part(s: &Scenario, g: &G2Curve) -> Result<G2Curve, CliError> {
    if !s.analysis.divide_sigma_e {
        return Ok(g.clone());
    }
    let sigma = stationary_g2(&s.emitter, rest_pump(s), &g.tau)?;
    let mut c = g.clone();
    for k in 0..c.len() {
        let v = c.g2[k] / sigma[k];
        c.g2[k] = if v.is_finite() { v } else { 0.0 };
        c.stderr[k] /= sigma[k].abs();
    }
    Ok(c)
}

fn spectrum(s: &Scenario, input: &Path, out: &Path, o: &mut Outcome) -> Result<(), CliError> {
    let g = motional_part(s, &read_g2(input)?)?;
    let spec = spectrum_from_g2(&g, s.analysis.window, s.analysis.mask)?;
    let mut csv = Csv::new("freq_hz,psd");
    for (f, p) in spec.freq.iter().zip(&spec.psd) {
        csv.nums(&[*f, *p]);
    }
    o.write_csv(out, "spectrum.csv", &csv)?;
    match fit_thermal_spectrum(&spec, s.analysis.f_min, s.analysis.f_max) {
        Ok(fit) => {
            info!("spectral peak {:.1} Hz, width {:.1} Hz", fit.peak_hz, fit.width_hz);
            o.note("peak_hz", fit.peak_hz);
            o.note("width_hz", fit.width_hz);
        }
        Err(e) => warn!("thermal line fit failed: {e}"),
    }
    Ok(())
}

fn fit(s: &Scenario, input: &Path, out: &Path, o: &mut Outcome) -> Result<(), CliError> {
    let g = read_g2(input)?;
    let sigma = stationary_g2(&s.emitter, rest_pump(s), &g.tau)?;
    let w0 = s.optics.w0;
    let opts = FitOptions {
        max_order: s.analysis.fit_order,
        tau_min: s.analysis.tau_min,
        initial: None,
        geometry: Some(FitGeometry {
            delta1_tilde: s.optics.x1 * SQRT_2 / w0,
            delta2_tilde: s.optics.x2 * SQRT_2 / w0,
            w0,
        }),
    };
    let r = fit_expansion(&g, &sigma, &opts)?;
    let k_om = r.alpha.len();
    let mut kv: Vec<(String, String)> = vec![
        ("order".into(), (r.alpha.len() - 1).to_string()),
        ("omega_rad_s".into(), num(r.omega_fit)),
        ("omega_rad_s_stderr".into(), num(r.stderr(k_om))),
        ("gamma_rad_s".into(), num(r.gamma_fit)),
        ("gamma_rad_s_stderr".into(), num(r.stderr(k_om + 1))),
        ("frequency_hz".into(), num(r.omega_fit / (2.0 * PI))),
    ];
    for (j, a) in r.alpha.iter().enumerate() {
        kv.push((format!("alpha_{j}"), num(*a)));
        kv.push((format!("alpha_{j}_stderr"), num(r.stderr(j))));
    }
    for (j, a) in r.alpha_ratios.iter().enumerate().skip(1) {
        kv.push((format!("ratio_{j}"), num(*a)));
        kv.push((format!("ratio_{j}_stderr"), num(r.alpha_ratio_stderr[j])));
    }
    if let Some(dx) = r.dx_fit {
        kv.push(("dx_fit_m".into(), num(dx)));
        kv.push(("theta_fit".into(), num(dx / w0)));
    }
    kv.push(("residual_rms".into(), num(r.residual_rms)));
    kv.push(("n_points".into(), r.n_points.to_string()));
    kv.push(("iterations".into(), r.iterations.to_string()));
    let path = out.join("fit.txt");
    std::fs::write(&path, key_values(&kv)).map_err(io_err(&path))?;
    o.files.push("fit.txt".into());

    let mut csv = Csv::new("tau_s,g2,model,residual");
    for k in 0..g.len() {
        if g.tau[k] < s.analysis.tau_min {
            continue;
        }
        let c = -damped_cosine(r.omega_fit, r.gamma_fit, g.tau[k]);
        let model = sigma[k] * r.alpha.iter().rev().fold(0.0, |acc, a| acc * c + a);
        csv.nums(&[g.tau[k], g.g2[k], model, g.g2[k] - model]);
    }
    o.write_csv(out, "fit_residuals.csv", &csv)?;
    o.note("frequency_hz", r.omega_fit / (2.0 * PI));
    o.note("residual_rms", r.residual_rms);
    Ok(())
}

/// The `run.json` record: enough to repeat the run exactly.
pub struct Manifest {
    doc: Map<String, Value>,
}

impl Manifest {
    pub fn new(subcommand: &str, config: Option<PathBuf>, threads: usize) -> Self {
        let mut doc = Map::new();
        doc.insert("program".into(), json!("nanomotion"));
        doc.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
        doc.insert("subcommand".into(), json!(subcommand));
        doc.insert("arguments".into(), json!(std::env::args().skip(1).collect::<Vec<_>>()));
        doc.insert("config_path".into(), json!(config.map(|p| p.display().to_string())));
        doc.insert("threads".into(), json!(threads));
        Self { doc }
    }

    pub fn record_scenario(&mut self, s: &Scenario) {
        self.doc.insert("seed".into(), json!(s.seed));
        self.doc.insert("theta".into(), json!(s.theta));
        self.doc.insert("scenario".into(), serde_json::to_value(s).unwrap_or(Value::Null));
        self.doc.insert("scenario_toml".into(), json!(s.to_toml()));
    }

    pub fn finish(&mut self, result: Result<Outcome, CliError>, wall: f64, code: i32) {
        match result {
            Ok(o) => {
                self.doc.insert("outputs".into(), json!(o.files));
                self.doc.insert("summary".into(), Value::Object(o.summary));
            }
            Err(e) => {
                self.doc.insert("error".into(), json!(e.to_string()));
            }
        }
        self.doc.insert("exit_code".into(), json!(code));
        self.doc.insert("wall_time_s".into(), json!(wall));
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(&self.doc).map_err(|e| CliError::Runtime(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(io_err(path))
    }
}
