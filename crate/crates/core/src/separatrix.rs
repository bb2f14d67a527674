//! Closed-form dynamics on the separatrix of the antihomogeneous point and
//! the classical OTOC `O(t)` of a Gaussian initial state.
//!
//! With `x_t = u sinh(λs t)` and `u = (sinΘ/λs)(n0/N - 2 cosΘ φ0/λs)` the
//! separatrix solution is `n_t = (N λs/sinΘ) x_t/(1 + x_t²)`. Averaging
//! `(∂n_t/∂φ0)²` over a Gaussian with `Var(u) = 2a²` gives
//!
//! ```text
//! O(t) = 2 cos²Θ N²/(√π a λs²) sinh(λs t) ∫ (1-x²)²/(1+x²)⁴ exp(-(x/w)²) dx,
//! w = 2a sinh(λs t).
//! ```

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::hilbert::DimerParams;
use crate::linalg::GaussLegendre;
use crate::meanfield::{require_unstable, PhasePoint};
use crate::propagate::OtocSeries;
use crate::{Error, Result};

/// Characteristic times of one `(Θ, N, ω)` configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeScales {
    pub theta: f64,
    pub n_particles: usize,
    pub lambda_s: f64,
    /// Squeezing parameter, absent when the scale `a` was given directly.
    pub omega: Option<f64>,
    pub a: f64,
    /// `1/λs`
    pub tau_s: f64,
    /// `-ln(a)/λs`
    pub tau_l: f64,
    /// `ln(N)/λs`
    pub tau_e: f64,
    /// `τL/τE`
    pub alpha: f64,
}

impl TimeScales {
    pub fn new(params: &DimerParams, omega: f64) -> Result<Self> {
        let a = scale_a(params, omega)?;
        let mut ts = Self::from_scale(params, a)?;
        ts.omega = Some(omega);
        Ok(ts)
    }

    /// Time scales for an explicit dimensionless width `a`, e.g. one measured
    /// from a squeezed state's second moments.
    pub fn from_scale(params: &DimerParams, a: f64) -> Result<Self> {
        let lambda_s = require_unstable(params)?;
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "scale a = {a} must be positive"
            )));
        }
        let tau_l = -a.ln() / lambda_s;
        let tau_e = params.n().ln() / lambda_s;
        Ok(Self {
            theta: params.theta(),
            n_particles: params.n_particles(),
            lambda_s,
            omega: None,
            a,
            tau_s: 1.0 / lambda_s,
            tau_l,
            tau_e,
            alpha: if tau_e > 0.0 {
                tau_l / tau_e
            } else {
                f64::INFINITY
            },
        })
    }

    /// `a` for which `α = 1`, i.e. `a = 1/N`.
    pub fn well_localized(params: &DimerParams) -> Result<Self> {
        Self::from_scale(params, 1.0 / params.n())
    }

    fn params(&self) -> DimerParams {
        DimerParams::new(self.theta, self.n_particles).expect("validated on construction")
    }
}

/// Dimensionless width of the initial Gaussian along the unstable direction,
/// `a = (sinΘ/λs) sqrt(ω² + 16 cos²Θ/λs²) / sqrt(8ωN)`.
pub fn scale_a(params: &DimerParams, omega: f64) -> Result<f64> {
    let l = require_unstable(params)?;
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "omega = {omega} must be positive"
        )));
    }
    let (s, c) = params.theta().sin_cos();
    Ok(s / l / (8.0 * omega * params.n()).sqrt() * (omega * omega + 16.0 * c * c / (l * l)).sqrt())
}

pub fn time_scales(params: &DimerParams, omega: f64) -> Result<TimeScales> {
    TimeScales::new(params, omega)
}

/// Largest `|z|` reached on the separatrix, `λs/sinΘ`.
pub fn separatrix_max_z(params: &DimerParams) -> Result<f64> {
    Ok(require_unstable(params)? / params.theta().sin())
}

/// Position on the separatrix a time `t_elapsed` after passing `z_start`
/// (on the outgoing branch when `t_elapsed` is past the turning point).
pub fn separatrix_z(params: &DimerParams, z_start: f64, t_elapsed: f64) -> Result<f64> {
    let l = require_unstable(params)?;
    let zmax = l / params.theta().sin();
    if z_start == 0.0 || !z_start.is_finite() {
        return Err(Error::InvalidInput(
            "separatrix start must be nonzero".into(),
        ));
    }
    if z_start.abs() > zmax * (1.0 + 1e-12) {
        return Err(Error::OffSeparatrix {
            z: z_start,
            max: zmax,
        });
    }
    let ratio = (zmax / z_start.abs()).max(1.0);
    let arg = ratio.acosh() - l * t_elapsed;
    Ok(z_start.signum() * zmax / arg.cosh())
}

/// Closed separatrix curve through `(0, 0)`: upper branch for increasing `z`,
/// then the lower branch back. `points` samples per branch, plus the
/// hyperbolic point itself when `points` is even.
pub fn separatrix_polyline(params: &DimerParams, points: usize) -> Result<Vec<PhasePoint>> {
    let zmax = separatrix_max_z(params)?;
    if points < 3 {
        return Err(Error::InvalidInput(
            "polyline needs at least 3 points per branch".into(),
        ));
    }
    let (s, c) = params.theta().sin_cos();
    let phi_of = |z: f64| {
        let cos_phi = (2.0 * c - 0.5 * s * z * z) / (2.0 * c * (1.0 - z * z).sqrt());
        cos_phi.clamp(-1.0, 1.0).acos()
    };
    // cosine spacing concentrates samples near the turning points
    let mut zs: Vec<f64> = (0..points)
        .map(|i| zmax * (PI * (i as f64 / (points - 1) as f64 - 0.5)).sin())
        .collect();
    if points.is_multiple_of(2) {
        zs.insert(points / 2, 0.0);
    }
    let mut line: Vec<PhasePoint> = zs.iter().map(|&z| PhasePoint::new(z, phi_of(z))).collect();
    line.extend(
        zs.iter()
            .rev()
            .skip(1)
            .map(|&z| PhasePoint::new(z, -phi_of(z))),
    );
    Ok(line)
}

/// Separatrix estimate of `n_t` for initial `(n0, φ0)`.
pub fn n_of_t(params: &DimerParams, n0: f64, phi0: f64, t: f64) -> Result<f64> {
    let l = require_unstable(params)?;
    let (s, c) = params.theta().sin_cos();
    let n = params.n();
    let x = s / l * (n0 / n - 2.0 * c * phi0 / l) * (l * t).sinh();
    Ok(n * l / s * x / (1.0 + x * x))
}

const PANEL_NODES: usize = 24;
const COARSE_NODES: usize = 12;
const UNIFORM_PANELS: usize = 16;
const QUAD_REL_TOL: f64 = 1e-10;

/// `∫ (1-x²)²/(1+x²)⁴ exp(-(x/w)²) dx` over the real line; `w = ∞` drops the
/// Gaussian. Computed as `2 ∫_0^{π/2} cos²2θ cos²θ exp(-(tanθ/w)²) dθ` by
/// composite Gauss-Legendre with panel breaks at `θ = arctan(k w)`.
pub fn gaussian_weighted_integral(w: f64) -> Result<f64> {
    if !(w > 0.0) {
        return if w == 0.0 {
            Ok(0.0)
        } else {
            Err(Error::InvalidInput(format!(
                "width {w} must be nonnegative"
            )))
        };
    }
    let g = |theta: f64| {
        let c = theta.cos();
        let c2 = (2.0 * theta).cos();
        let damp = if w.is_infinite() {
            1.0
        } else {
            (-(theta.tan() / w).powi(2)).exp()
        };
        c2 * c2 * c * c * damp
    };
    let top = if w.is_infinite() {
        FRAC_PI_2
    } else {
        (10.0 * w).atan().min(FRAC_PI_2)
    };
    let mut breaks: Vec<f64> = (0..=UNIFORM_PANELS)
        .map(|i| top * i as f64 / UNIFORM_PANELS as f64)
        .collect();
    if w.is_finite() {
        for k in [0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0] {
            let b = (k * w).atan();
            if b < top {
                breaks.push(b);
            }
        }
    }
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-15);

    let fine = GaussLegendre::new(PANEL_NODES);
    let coarse = GaussLegendre::new(COARSE_NODES);
    let value = 2.0 * fine.integrate_panels(&breaks, g);
    let check = 2.0 * coarse.integrate_panels(&breaks, g);
    if (value - check).abs() > QUAD_REL_TOL * value.abs().max(1e-300) {
        return Err(Error::Quadrature {
            estimate: (value - check).abs(),
            value,
        });
    }
    Ok(value)
}

/// The width-independent limit, `π/4`.
pub fn bare_integral() -> Result<f64> {
    gaussian_weighted_integral(f64::INFINITY)
}

/// Classical OTOC for the coherent-state family parametrized by `ω`.
pub fn classical_otoc(params: &DimerParams, omega: f64, t: f64) -> Result<f64> {
    classical_otoc_scaled(params, scale_a(params, omega)?, t)
}

/// Classical OTOC for an explicit width `a`.
pub fn classical_otoc_scaled(params: &DimerParams, a: f64, t: f64) -> Result<f64> {
    let l = require_unstable(params)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "time {t} must be finite and nonnegative"
        )));
    }
    if !(a > 0.0) {
        return Err(Error::InvalidInput(format!(
            "scale a = {a} must be positive"
        )));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let c = params.theta().cos();
    let n = params.n();
    let sh = (l * t).sinh();
    let integral = gaussian_weighted_integral(2.0 * a * sh)?;
    finite(
        2.0 * c * c * n * n / (PI.sqrt() * a * l * l) * sh * integral,
        "O(t)",
        t,
    )
}

fn finite(value: f64, what: &str, t: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Overflow(format!("{what} at t = {t}")))
    }
}

/// `4 cos²Θ N² sinh²(λs t)/λs²`, valid for `t ≪ τL`.
pub fn otoc_short_asymptote(params: &DimerParams, t: f64) -> Result<f64> {
    let l = require_unstable(params)?;
    let c = params.theta().cos();
    let n = params.n();
    finite(
        4.0 * c * c * n * n * (l * t).sinh().powi(2) / (l * l),
        "short asymptote",
        t,
    )
}

/// `cos²Θ √π N² e^{λs t}/(4 a λs²)`, valid for `t ≫ τL`.
pub fn otoc_long_asymptote(params: &DimerParams, a: f64, t: f64) -> Result<f64> {
    let l = require_unstable(params)?;
    let c = params.theta().cos();
    let n = params.n();
    finite(
        c * c * PI.sqrt() * n * n * (l * t).exp() / (4.0 * a * l * l),
        "long asymptote",
        t,
    )
}

/// Time at which the short and long asymptotes cross,
/// `4 sinh²(λs t) = √π e^{λs t}/(4a)`.
pub fn asymptote_crossing(ts: &TimeScales) -> f64 {
    let l = ts.lambda_s;
    let rhs_coef = PI.sqrt() / (4.0 * ts.a);
    let f = |t: f64| 4.0 * (l * t).sinh().powi(2) - rhs_coef * (l * t).exp();
    let (mut lo, mut hi) = (0.0, 1.0 / l);
    while f(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Polynomial,
    /// `C ~ e^{2 λs t}`
    DoubleRate,
    /// `C ~ e^{λs t}`
    SingleRate,
    PostEhrenfest,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::Polynomial => "polynomial",
            Regime::DoubleRate => "double-rate",
            Regime::SingleRate => "single-rate",
            Regime::PostEhrenfest => "post-ehrenfest",
        }
    }
}

/// Growth regime at time `t`: polynomial before `τs`, `2λs` up to `τL`,
/// `λs` up to `τE`. Windows with inverted endpoints are empty.
pub fn regime_schedule(ts: &TimeScales, t: f64) -> Regime {
    if t >= ts.tau_e {
        Regime::PostEhrenfest
    } else if t < ts.tau_s {
        Regime::Polynomial
    } else if t < ts.tau_l {
        Regime::DoubleRate
    } else {
        Regime::SingleRate
    }
}

/// `O(t)` on a time grid as an [`OtocSeries`].
pub fn classical_otoc_series(ts: &TimeScales, times: &[f64]) -> Result<OtocSeries> {
    let params = ts.params();
    let values = times
        .iter()
        .map(|&t| classical_otoc_scaled(&params, ts.a, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(OtocSeries::new(times.to_vec(), values)?
        .with_params(params)
        .with_label(format!("classical a={:.6e}", ts.a)))
}

/// CSV with header `t,O,O_short,O_long,regime`.
pub fn write_overlay_csv<W: Write>(ts: &TimeScales, times: &[f64], mut w: W) -> Result<()> {
    let params = ts.params();
    let io = |e: io::Error| Error::InvalidInput(format!("write failed: {e}"));
    writeln!(w, "t,O,O_short,O_long,regime").map_err(io)?;
    for &t in times {
        let o = classical_otoc_scaled(&params, ts.a, t)?;
        let short = otoc_short_asymptote(&params, t)?;
        let long = otoc_long_asymptote(&params, ts.a, t)?;
        writeln!(
            w,
            "{t:.10e},{o:.10e},{short:.10e},{long:.10e},{}",
            regime_schedule(ts, t).label()
        )
        .map_err(io)?;
    }
    Ok(())
}
