//! Exponent fits of `ln C(t)`, kink detection, and the `(Θ, N)` scan.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hilbert::{coherent_state, DimerParams};
use crate::meanfield::stability_exponent;
use crate::propagate::{otoc, uniform_times, Backend, OtocSeries, Propagator};
use crate::separatrix::TimeScales;
use crate::{Error, Result};

/// Values below this fraction of the series maximum are floored before
/// taking logarithms.
pub const LOG_FLOOR: f64 = 1e-12;
pub const MIN_FIT_POINTS: usize = 5;

/// Least-squares line through `(t, ln C)`. The slope `s` refers to
/// `C ~ e^{s t}`, so the two growth regimes have `s = 2λs` and `s = λs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub t_lo: f64,
    pub t_hi: f64,
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

fn log_points(series: &OtocSeries, (t_lo, t_hi): (f64, f64)) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(t_lo < t_hi) {
        return Err(Error::InvalidInput(format!(
            "empty window [{t_lo}, {t_hi}]"
        )));
    }
    let max = series.max_value();
    if !(max > 0.0) {
        return Err(Error::NonPositive);
    }
    let floor = LOG_FLOOR * max;
    let (mut ts, mut ys) = (Vec::new(), Vec::new());
    for (&t, &c) in series.times.iter().zip(&series.values) {
        if t >= t_lo && t <= t_hi {
            ts.push(t);
            ys.push(c.max(floor).ln());
        }
    }
    if ts.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientPoints {
            found: ts.len(),
            needed: MIN_FIT_POINTS,
        });
    }
    Ok((ts, ys))
}

/// Ordinary least squares of `ln C(t)` on `t` inside `[t_lo, t_hi]`.
pub fn fit_exponent(series: &OtocSeries, window: (f64, f64)) -> Result<FitResult> {
    let (ts, ys) = log_points(series, window)?;
    let n = ts.len() as f64;
    let tm = ts.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (t, y) in ts.iter().zip(&ys) {
        sxx += (t - tm) * (t - tm);
        sxy += (t - tm) * (y - ym);
        syy += (y - ym) * (y - ym);
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * tm;
    let sse = ys
        .iter()
        .zip(&ts)
        .map(|(y, t)| (y - intercept - slope * t).powi(2))
        .sum::<f64>();
    let stderr = (sse / (n - 2.0) / sxx).sqrt();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(FitResult {
        t_lo: window.0,
        t_hi: window.1,
        slope,
        intercept,
        stderr,
        r_squared,
        n_points: ts.len(),
    })
}

/// Outcome of [`detect_kink`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinkEstimate {
    /// Breakpoint and its bootstrap standard error, `None` when the slope
    /// change is not significant.
    pub kink: Option<(f64, f64)>,
    /// Best-fit breakpoint whether or not it is significant.
    pub breakpoint: f64,
    pub slope_before: f64,
    pub slope_after: f64,
    /// Bootstrap standard error of `slope_after - slope_before`.
    pub change_stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinkOptions {
    pub resamples: usize,
    pub seed: u64,
    /// A kink also needs `|Δslope| ≥ min_relative_change · |slope_before|`.
    pub min_relative_change: f64,
    /// Breakpoint candidates between consecutive samples.
    pub refine: usize,
}

impl Default for KinkOptions {
    fn default() -> Self {
        Self {
            resamples: 100,
            seed: 0x6b69_6e6b,
            min_relative_change: 0.25,
            refine: 4,
        }
    }
}

const MIN_SEGMENT_POINTS: usize = 3;
/// Fraction of the window excluded from breakpoint candidates at each end.
const BREAKPOINT_TRIM: f64 = 0.15;

struct HingeFit {
    tau: f64,
    coef: [f64; 3],
    sse: f64,
}

/// Least squares of `y = b0 + b1 t + b2 (t - τ)+` at fixed `τ`.
fn hinge_at(ts: &[f64], ys: &[f64], tau: f64) -> Option<HingeFit> {
    let mut ata = [[0.0; 3]; 3];
    let mut aty = [0.0; 3];
    for (&t, &y) in ts.iter().zip(ys) {
        let row = [1.0, t, (t - tau).max(0.0)];
        for i in 0..3 {
            aty[i] += row[i] * y;
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    let coef = solve3(ata, aty)?;
    let sse = ts
        .iter()
        .zip(ys)
        .map(|(&t, &y)| (y - coef[0] - coef[1] * t - coef[2] * (t - tau).max(0.0)).powi(2))
        .sum();
    Some(HingeFit { tau, coef, sse })
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv =
            (col..3).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..3 {
            let f = a[r][col] / a[col][col];
            let pivot_row = a[col];
            for (x, p) in a[r].iter_mut().zip(pivot_row).skip(col) {
                *x -= f * p;
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for r in (0..3).rev() {
        let s: f64 = (r + 1..3).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

fn best_hinge(ts: &[f64], ys: &[f64], refine: usize) -> Option<HingeFit> {
    let n = ts.len();
    let edge = ((BREAKPOINT_TRIM * n as f64).ceil() as usize).max(MIN_SEGMENT_POINTS);
    let mut best: Option<HingeFit> = None;
    for i in edge - 1..n - edge {
        for r in 0..refine.max(1) {
            let tau = ts[i] + (ts[i + 1] - ts[i]) * r as f64 / refine.max(1) as f64;
            if let Some(fit) = hinge_at(ts, ys, tau) {
                if best.as_ref().is_none_or(|b| fit.sse < b.sse) {
                    best = Some(fit);
                }
            }
        }
    }
    best
}

/// Continuous two-segment fit of `ln C(t)` inside `window`; the breakpoint
/// error comes from a moving-block bootstrap of the residuals.
pub fn detect_kink(series: &OtocSeries, window: (f64, f64)) -> Result<KinkEstimate> {
    detect_kink_with(series, window, &KinkOptions::default())
}

pub fn detect_kink_with(
    series: &OtocSeries,
    window: (f64, f64),
    opts: &KinkOptions,
) -> Result<KinkEstimate> {
    let (ts, ys) = log_points(series, window)?;
    if ts.len() < 2 * MIN_SEGMENT_POINTS + 1 {
        return Err(Error::InsufficientPoints {
            found: ts.len(),
            needed: 2 * MIN_SEGMENT_POINTS + 1,
        });
    }
    let fit = best_hinge(&ts, &ys, opts.refine).ok_or(Error::NonPositive)?;
    let fitted: Vec<f64> = ts
        .iter()
        .map(|&t| fit.coef[0] + fit.coef[1] * t + fit.coef[2] * (t - fit.tau).max(0.0))
        .collect();
    let resid: Vec<f64> = ys.iter().zip(&fitted).map(|(y, f)| y - f).collect();

    let n = ts.len();
    let block = ((n as f64).cbrt().ceil() as usize).clamp(2, n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let resampled: Vec<Vec<f64>> = (0..opts.resamples)
        .map(|_| {
            let mut y = Vec::with_capacity(n);
            while y.len() < n {
                let start = rng.random_range(0..=n - block);
                for r in &resid[start..start + block] {
                    if y.len() == n {
                        break;
                    }
                    y.push(fitted[y.len()] + r);
                }
            }
            y
        })
        .collect();
    let boot: Vec<(f64, f64)> = resampled
        .par_iter()
        .filter_map(|y| best_hinge(&ts, y, opts.refine).map(|f| (f.tau, f.coef[2])))
        .collect();
    let sd = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0).max(1.0)).sqrt()
    };
    let taus: Vec<f64> = boot.iter().map(|b| b.0).collect();
    let changes: Vec<f64> = boot.iter().map(|b| b.1).collect();
    let tau_err = if boot.len() > 1 { sd(&taus) } else { f64::NAN };
    let change_stderr = if boot.len() > 1 {
        sd(&changes)
    } else {
        f64::NAN
    };

    let change = fit.coef[2];
    let significant = change.abs() > 2.0 * change_stderr
        && change.abs() >= opts.min_relative_change * fit.coef[1].abs();
    Ok(KinkEstimate {
        kink: significant.then_some((fit.tau, tau_err)),
        breakpoint: fit.tau,
        slope_before: fit.coef[1],
        slope_after: fit.coef[1] + change,
        change_stderr,
    })
}

/// Fit windows `[τs, τL]` and `[τL, τE]`, each shrunk by `shrink/λs` at both
/// ends.
pub fn fit_windows(ts: &TimeScales, shrink: f64) -> ((f64, f64), (f64, f64)) {
    let d = shrink / ts.lambda_s;
    ((ts.tau_s + d, ts.tau_l - d), (ts.tau_l + d, ts.tau_e - d))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    pub omega: f64,
    /// Time points on `[0, t_max_factor τE]`.
    pub points: usize,
    pub t_max_factor: f64,
    /// Window shrink in units of `1/λs`.
    pub shrink: f64,
    /// Cells with `τE` beyond this are flagged instead of simulated.
    pub max_tau_e: f64,
    pub backend: Option<Backend>,
    pub kink: KinkOptions,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            omega: 1.0,
            points: 400,
            t_max_factor: 1.5,
            shrink: 0.5,
            max_tau_e: 60.0,
            backend: None,
            kink: KinkOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowStatus {
    Ok,
    /// `λs` so small that `τE` exceeds the configured limit.
    SlowRate,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub theta: f64,
    pub n_particles: usize,
    pub lambda_s: f64,
    pub scales: Option<TimeScales>,
    pub fit_2w: Option<FitResult>,
    pub fit_1w: Option<FitResult>,
    pub kink: Option<KinkEstimate>,
    pub status: RowStatus,
}

impl ScanRow {
    /// `slope_2w/(2λs) - 1`
    pub fn deviation_2w(&self) -> Option<f64> {
        self.fit_2w.map(|f| f.slope / (2.0 * self.lambda_s) - 1.0)
    }

    /// `slope_1w/λs - 1`
    pub fn deviation_1w(&self) -> Option<f64> {
        self.fit_1w.map(|f| f.slope / self.lambda_s - 1.0)
    }
}

/// Quantum OTOC of `coherent(0, 0)` for one `(Θ, N)` together with its time
/// scales.
pub fn coherent_otoc(params: &DimerParams, opts: &ScanOptions) -> Result<(TimeScales, OtocSeries)> {
    let scales = TimeScales::new(params, opts.omega)?;
    let backend = opts.backend.unwrap_or(Backend::auto(params.n_particles()));
    let prop = Propagator::for_params(params, backend)?;
    let state = coherent_state(params, 0.0, 0.0)?;
    let times = uniform_times(opts.t_max_factor * scales.tau_e, opts.points);
    let series = otoc(&prop, &state, &times)?.with_label("coherent(0,0)");
    Ok((scales, series))
}

fn scan_cell(theta: f64, n: usize, opts: &ScanOptions) -> ScanRow {
    let mut row = ScanRow {
        theta,
        n_particles: n,
        lambda_s: 0.0,
        scales: None,
        fit_2w: None,
        fit_1w: None,
        kink: None,
        status: RowStatus::Ok,
    };
    let params = match DimerParams::new(theta, n) {
        Ok(p) => p,
        Err(e) => {
            row.status = RowStatus::Failed(e.to_string());
            return row;
        }
    };
    row.lambda_s = stability_exponent(&params);
    let scales = match TimeScales::new(&params, opts.omega) {
        Ok(s) => s,
        Err(e) => {
            row.status = RowStatus::Failed(e.to_string());
            return row;
        }
    };
    row.scales = Some(scales);
    if scales.tau_e > opts.max_tau_e {
        row.status = RowStatus::SlowRate;
        return row;
    }
    let series = match coherent_otoc(&params, opts) {
        Ok((_, s)) => s,
        Err(e) => {
            row.status = RowStatus::Failed(e.to_string());
            return row;
        }
    };
    let (w2, w1) = fit_windows(&scales, opts.shrink);
    let mut problems = Vec::new();
    match fit_exponent(&series, w2) {
        Ok(f) => row.fit_2w = Some(f),
        Err(e) => problems.push(format!("2λs window: {e}")),
    }
    match fit_exponent(&series, w1) {
        Ok(f) => row.fit_1w = Some(f),
        Err(e) => problems.push(format!("λs window: {e}")),
    }
    match detect_kink_with(&series, (scales.tau_s, scales.tau_e), &opts.kink) {
        Ok(k) => row.kink = Some(k),
        Err(e) => problems.push(format!("kink: {e}")),
    }
    if !problems.is_empty() {
        row.status = RowStatus::Failed(problems.join("; "));
    }
    row
}

/// Runs every `(Θ, N)` cell; rows are ordered by `Θ`, then `N`, as given.
pub fn theta_scan(thetas: &[f64], n_list: &[usize], opts: &ScanOptions) -> Vec<ScanRow> {
    let cells: Vec<(f64, usize)> = thetas
        .iter()
        .flat_map(|&th| n_list.iter().map(move |&n| (th, n)))
        .collect();
    cells
        .par_iter()
        .map(|&(th, n)| scan_cell(th, n, opts))
        .collect()
}

/// CSV with header `theta,N,lambda_s,slope_2w,stderr_2w,slope_1w,stderr_1w,kink_t,kink_err`.
/// Missing values are written as `nan`.
pub fn write_scan_csv<W: Write>(rows: &[ScanRow], mut w: W) -> io::Result<()> {
    writeln!(
        w,
        "theta,N,lambda_s,slope_2w,stderr_2w,slope_1w,stderr_1w,kink_t,kink_err"
    )?;
    let num = |x: Option<f64>| match x {
        Some(v) if v.is_finite() => format!("{v:.10e}"),
        _ => "nan".to_string(),
    };
    for r in rows {
        let kink = r.kink.and_then(|k| k.kink);
        writeln!(
            w,
            "{:.10e},{},{},{},{},{},{},{},{}",
            r.theta,
            r.n_particles,
            num(Some(r.lambda_s)),
            num(r.fit_2w.map(|f| f.slope)),
            num(r.fit_2w.map(|f| f.stderr)),
            num(r.fit_1w.map(|f| f.slope)),
            num(r.fit_1w.map(|f| f.stderr)),
            num(kink.map(|k| k.0)),
            num(kink.map(|k| k.1)),
        )?;
    }
    Ok(())
}

/// Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len()) as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Scan statistics for one particle number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub n_particles: usize,
    pub rows: usize,
    pub correlation_2w: f64,
    pub correlation_1w: f64,
    pub mean_abs_deviation_2w: f64,
    pub mean_abs_deviation_1w: f64,
}

/// Correlation of fitted slopes with `2λs` and `λs`, and mean relative
/// deviations, over the complete rows for `n_particles`.
pub fn summarize(rows: &[ScanRow], n_particles: usize) -> ScanSummary {
    let good: Vec<&ScanRow> = rows
        .iter()
        .filter(|r| r.n_particles == n_particles && r.fit_2w.is_some() && r.fit_1w.is_some())
        .collect();
    let ls: Vec<f64> = good.iter().map(|r| r.lambda_s).collect();
    let s2: Vec<f64> = good.iter().map(|r| r.fit_2w.unwrap().slope).collect();
    let s1: Vec<f64> = good.iter().map(|r| r.fit_1w.unwrap().slope).collect();
    let mean_abs = |v: Vec<f64>| v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64;
    ScanSummary {
        n_particles,
        rows: good.len(),
        correlation_2w: pearson(&s2, &ls),
        correlation_1w: pearson(&s1, &ls),
        mean_abs_deviation_2w: mean_abs(good.iter().filter_map(|r| r.deviation_2w()).collect()),
        mean_abs_deviation_1w: mean_abs(good.iter().filter_map(|r| r.deviation_1w()).collect()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(f: impl Fn(f64) -> f64, t_max: f64, n: usize) -> OtocSeries {
        let times = uniform_times(t_max, n);
        let values = times.iter().map(|&t| f(t)).collect();
        OtocSeries::new(times, values).unwrap()
    }

    #[test]
    fn exact_exponential() {
        let s = series(|t| (1.94 * t).exp(), 5.0, 101);
        let f = fit_exponent(&s, (1.0, 4.0)).unwrap();
        assert!((f.slope - 1.94).abs() < 1e-12);
        assert!(f.stderr < 1e-10);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(f.n_points, 61);
    }

    #[test]
    fn piecewise_slopes() {
        let l = 0.97;
        let tau = 4.0;
        let s = series(
            |t| {
                if t < tau {
                    (2.0 * l * t).exp()
                } else {
                    (2.0 * l * tau + l * (t - tau)).exp()
                }
            },
            8.0,
            401,
        );
        assert!((fit_exponent(&s, (1.0, 3.9)).unwrap().slope - 2.0 * l).abs() < 1e-3);
        assert!((fit_exponent(&s, (4.1, 7.5)).unwrap().slope - l).abs() < 1e-3);
        let k = detect_kink(&s, (0.5, 7.5)).unwrap();
        let (t, _) = k.kink.expect("kink");
        assert!((t - tau).abs() < 0.1);
    }

    #[test]
    fn flooring_and_errors() {
        let s = series(|t| if t < 1.0 { 0.0 } else { t }, 2.0, 21);
        let f = fit_exponent(&s, (0.0, 2.0)).unwrap();
        assert!(f.slope.is_finite());
        assert!(matches!(
            fit_exponent(&s, (0.0, 0.25)),
            Err(Error::InsufficientPoints { found: 3, .. })
        ));
        let zero = series(|_| 0.0, 1.0, 10);
        assert!(matches!(
            fit_exponent(&zero, (0.0, 1.0)),
            Err(Error::NonPositive)
        ));
    }

    #[test]
    fn single_exponential_has_no_kink() {
        let s = series(|t| 3.0 * (1.3 * t).exp(), 6.0, 200);
        let k = detect_kink(&s, (0.5, 5.5)).unwrap();
        assert!(k.kink.is_none());
    }

    #[test]
    fn windows() {
        let p = DimerParams::new(1.35, 1000).unwrap();
        let ts = TimeScales::new(&p, 1.0).unwrap();
        let (a, b) = fit_windows(&ts, 0.5);
        assert!((a.0 - ts.tau_s - 0.5 / ts.lambda_s).abs() < 1e-12);
        assert!((b.1 - ts.tau_e + 0.5 / ts.lambda_s).abs() < 1e-12);
    }

    #[test]
    fn pearson_basics() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.5]) - 1.0).abs() < 0.01);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn slow_rate_cells_are_flagged() {
        let opts = ScanOptions::default();
        let rows = theta_scan(&[1.0, 1.2], &[8], &opts);
        assert!(matches!(rows[0].status, RowStatus::Failed(_)));
        let near = 2f64.atan() + 1e-9;
        let rows = theta_scan(&[near], &[1000], &opts);
        assert_eq!(rows[0].status, RowStatus::SlowRate);
        let mut buf = Vec::new();
        write_scan_csv(&rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .lines()
            .nth(1)
            .unwrap()
            .ends_with("nan,nan"));
    }
}
