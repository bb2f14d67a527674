use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use dimer_otoc::analysis::{
    detect_kink, fit_exponent, fit_windows, summarize, theta_scan, write_scan_csv, KinkOptions,
    ScanOptions,
};
use dimer_otoc::hilbert::{
    coherent_state, squeeze_by_backward_evolution, DimerParams, StateVector,
};
use dimer_otoc::meanfield::{
    bifurcation_theta, find_fixed_points, is_unstable_regime, stability_exponent, EnergyGrid,
    FixedPointKind,
};
use dimer_otoc::phasespace::{effective_scale, husimi_frames, twa_otoc, GridSpec};
use dimer_otoc::propagate::{otoc, uniform_times, Backend, Propagator};
use dimer_otoc::separatrix::{
    classical_otoc, otoc_long_asymptote, otoc_short_asymptote, regime_schedule, separatrix_max_z,
    separatrix_polyline, TimeScales,
};
use serde_json::json;

use crate::config::RunConfig;
use crate::error::CliError;

/// Output files of one command, in creation order.
pub struct Outputs {
    dir: PathBuf,
    pub files: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: PathBuf) -> Result<Self, CliError> {
        std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        Ok(Self {
            dir,
            files: Vec::new(),
        })
    }

    fn create(&mut self, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
        let path = self.dir.join(name);
        let f = File::create(&path).map_err(|e| io_err(&path, e))?;
        self.files.push(path.clone());
        Ok((path, BufWriter::new(f)))
    }

    fn write(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    ) -> Result<(), CliError> {
        let (path, mut w) = self.create(name)?;
        f(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| io_err(&path, e))
    }

    fn json(&mut self, name: &str, value: &serde_json::Value) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).expect("JSON values serialize");
        self.write(name, |w| writeln!(w, "{text}"))
    }
}

fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Fixed-width scientific notation keeps reruns byte-identical.
fn num(x: f64) -> String {
    format!("{x:.12e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    StabilityScan,
    PhasePortrait,
    Otoc,
    Husimi,
    Scan,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::StabilityScan => "stability-scan",
            Command::PhasePortrait => "phase-portrait",
            Command::Otoc => "otoc",
            Command::Husimi => "husimi",
            Command::Scan => "scan",
        }
    }
}

pub fn run(cmd: Command, cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Outputs::new(cfg.out_dir())?;
    match cmd {
        Command::StabilityScan => stability_scan(cfg, &mut out)?,
        Command::PhasePortrait => phase_portrait(cfg, &mut out)?,
        Command::Otoc => otoc_cmd(cfg, &mut out)?,
        Command::Husimi => husimi_cmd(cfg, &mut out)?,
        Command::Scan => scan_cmd(cfg, &mut out)?,
    }
    let resolved = cfg.render(cmd.name());
    out.write("config.resolved.cfg", |w| w.write_all(resolved.as_bytes()))?;
    Ok(out.files)
}

fn stability_scan(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let (lo, hi) = (cfg.f64("theta_min")?, cfg.f64("theta_max")?);
    let m = cfg.usize("theta_points")?;
    if m < 2 || lo >= hi {
        return Err(CliError::Config(
            "stability scan needs theta_min < theta_max and theta_points ≥ 2".into(),
        ));
    }
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let theta = lo + (hi - lo) * i as f64 / (m - 1) as f64;
        let p = DimerParams::new(theta, cfg.usize_list("n_particles")?[0])?;
        rows.push((
            theta,
            p.gamma(),
            stability_exponent(&p),
            !is_unstable_regime(&p),
        ));
    }
    out.write("stability.csv", |w| {
        writeln!(w, "theta,gamma,lambda_s,stable")?;
        for (theta, gamma, l, stable) in &rows {
            writeln!(w, "{},{},{},{}", num(*theta), num(*gamma), num(*l), stable)?;
        }
        Ok(())
    })
}

fn phase_portrait(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let p = DimerParams::new(cfg.f64("theta")?, cfg.usize_list("n_particles")?[0])?;
    let grid = EnergyGrid::new(&p, cfg.usize("nz")?, cfg.usize("nphi")?)?;
    out.write("energy.csv", |w| grid.write_csv(w))?;

    let search = find_fixed_points(&p)?;
    out.write("fixed_points.csv", |w| {
        writeln!(w, "z,phi,kind,exponent")?;
        for fp in &search.fixed_points {
            let kind = match fp.kind {
                FixedPointKind::StableCenter => "center",
                FixedPointKind::Hyperbolic => "hyperbolic",
                FixedPointKind::Marginal => "marginal",
            };
            writeln!(
                w,
                "{},{},{kind},{}",
                num(fp.location.z),
                num(fp.location.phi),
                num(fp.exponent)
            )?;
        }
        Ok(())
    })?;

    if is_unstable_regime(&p) {
        let line = separatrix_polyline(&p, cfg.usize("separatrix_points")?)?;
        out.write("separatrix.csv", |w| {
            writeln!(w, "z,phi")?;
            for q in &line {
                writeln!(w, "{},{}", num(q.z), num(q.phi))?;
            }
            Ok(())
        })?;
        out.json(
            "separatrix.json",
            &json!({ "lambda_s": stability_exponent(&p), "max_z": separatrix_max_z(&p)? }),
        )?;
    }
    Ok(())
}

/// Time grid end: explicit `t_max` or `t_max_factor · τE`.
fn t_max(cfg: &RunConfig, ts: &TimeScales) -> Result<f64, CliError> {
    Ok(match cfg.opt_f64("t_max")? {
        Some(t) => t,
        None => cfg.f64("t_max_factor")? * ts.tau_e,
    })
}

/// Initial state: coherent at the hyperbolic point, optionally squeezed by
/// backward evolution. Returns the state and the backward time used.
fn initial_state(
    cfg: &RunConfig,
    p: &DimerParams,
    prop: &Propagator,
    ts: &TimeScales,
) -> Result<(StateVector, f64), CliError> {
    let (t0, frac) = (cfg.f64("t0")?, cfg.f64("t0_tau_e")?);
    if t0 > 0.0 || frac > 0.0 {
        return Err(CliError::Config(
            "squeezing times t0 and t0_tau_e must be ≤ 0".into(),
        ));
    }
    if t0 != 0.0 && frac != 0.0 {
        return Err(CliError::Config("set only one of t0 and t0_tau_e".into()));
    }
    let t0 = if frac != 0.0 { frac * ts.tau_e } else { t0 };
    let coherent = coherent_state(p, 0.0, 0.0)?;
    Ok((squeeze_by_backward_evolution(prop, &coherent, t0)?, t0))
}

fn propagator(cfg: &RunConfig, p: &DimerParams) -> Result<Propagator, CliError> {
    let backend = cfg.backend()?.unwrap_or(Backend::auto(p.n_particles()));
    Ok(Propagator::for_params(p, backend)?)
}

fn otoc_cmd(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let theta = cfg.f64("theta")?;
    let omega = cfg.f64("omega")?;
    let samples = cfg.usize("twa_samples")?;
    for n in cfg.usize_list("n_particles")? {
        let p = DimerParams::new(theta, n)?;
        let ts = TimeScales::new(&p, omega)?;
        let times = uniform_times(t_max(cfg, &ts)?, cfg.usize("points")?);
        let prop = propagator(cfg, &p)?;
        let (state, t0) = initial_state(cfg, &p, &prop, &ts)?;
        let series = otoc(&prop, &state, &times)?;
        let twa = if samples > 0 {
            Some(twa_otoc(&p, omega, &times, samples, cfg.u64("seed")?)?)
        } else {
            None
        };

        let mut lines = Vec::with_capacity(times.len());
        for (i, &t) in times.iter().enumerate() {
            let mut line = format!(
                "{},{},{},{},{},{}",
                num(t),
                num(series.values[i]),
                num(classical_otoc(&p, omega, t)?),
                num(otoc_short_asymptote(&p, t)?),
                num(otoc_long_asymptote(&p, ts.a, t)?),
                regime_schedule(&ts, t).label()
            );
            if let Some(tw) = &twa {
                let se = tw.stderr.as_ref().map_or(f64::NAN, |s| s[i]);
                line.push_str(&format!(",{},{}", num(tw.values[i]), num(se)));
            }
            lines.push(line);
        }
        out.write(&format!("otoc_N{n}.csv"), |w| {
            write!(w, "t,C,O,O_short,O_long,regime")?;
            if twa.is_some() {
                write!(w, ",twa,twa_stderr")?;
            }
            writeln!(w)?;
            for l in &lines {
                writeln!(w, "{l}")?;
            }
            Ok(())
        })?;

        let (w2, w1) = fit_windows(&ts, cfg.f64("shrink")?);
        let result = |r: Result<serde_json::Value, dimer_otoc::Error>| {
            r.unwrap_or_else(|e| json!({ "error": e.to_string() }))
        };
        let summary = json!({
            "time_scales": ts,
            "backend": prop.backend(),
            "t0": t0,
            "effective_a": effective_scale(&p, &state).ok(),
            "fit_2w": result(fit_exponent(&series, w2).map(|f| json!(f))),
            "fit_1w": result(fit_exponent(&series, w1).map(|f| json!(f))),
            "kink": result(detect_kink(&series, (ts.tau_s, ts.tau_e)).map(|k| json!(k))),
        });
        out.json(&format!("otoc_N{n}.json"), &summary)?;
    }
    Ok(())
}

fn husimi_cmd(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let ns = cfg.usize_list("n_particles")?;
    if ns.len() != 1 {
        return Err(CliError::Config(
            "husimi needs a single n_particles value".into(),
        ));
    }
    let format = cfg.string("format");
    let (csv, bin) = match format {
        "csv" => (true, false),
        "bin" => (false, true),
        "both" => (true, true),
        other => {
            return Err(CliError::Config(format!(
                "format = `{other}`; expected csv, bin or both"
            )))
        }
    };
    let frames = cfg.usize("frames")?;
    if frames == 0 {
        return Err(CliError::Config("frames must be positive".into()));
    }
    let p = DimerParams::new(cfg.f64("theta")?, ns[0])?;
    let ts = TimeScales::new(&p, cfg.f64("omega")?)?;
    let prop = propagator(cfg, &p)?;
    let (state, _) = initial_state(cfg, &p, &prop, &ts)?;
    let times = uniform_times(t_max(cfg, &ts)?, frames);
    let grid = GridSpec::full(cfg.usize("nz")?, cfg.usize("nphi")?);
    let result = husimi_frames(&prop, &state, &times, &grid)?;

    for (k, f) in result.iter().enumerate() {
        if csv {
            out.write(&format!("husimi_{k:03}.csv"), |w| f.write_csv(w))?;
        }
        if bin {
            out.write(&format!("husimi_{k:03}.bin"), |w| f.write_binary(w))?;
            let header = f.binary_header();
            out.write(&format!("husimi_{k:03}.json"), |w| writeln!(w, "{header}"))?;
        }
    }
    out.write("frames.csv", |w| {
        writeln!(w, "frame,t,integral,peak_z,peak_phi")?;
        for (k, f) in result.iter().enumerate() {
            let peak = f.argmax();
            writeln!(
                w,
                "{k},{},{},{},{}",
                num(f.time),
                num(f.integral()),
                num(peak.z),
                num(peak.phi)
            )?;
        }
        Ok(())
    })
}

fn scan_cmd(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let thetas = cfg.scan_thetas(bifurcation_theta())?;
    let ns = cfg.usize_list("n_particles")?;
    let opts = ScanOptions {
        omega: cfg.f64("omega")?,
        points: cfg.usize("points")?,
        t_max_factor: cfg.f64("t_max_factor")?,
        shrink: cfg.f64("shrink")?,
        max_tau_e: cfg.f64("max_tau_e")?,
        backend: cfg.backend()?,
        kink: KinkOptions::default(),
    };
    let rows = theta_scan(&thetas, &ns, &opts);
    out.write("scan.csv", |w| write_scan_csv(&rows, w))?;
    let summaries: Vec<_> = ns.iter().map(|&n| summarize(&rows, n)).collect();
    out.json(
        "scan_summary.json",
        &json!({ "summaries": summaries, "rows": rows }),
    )
}
