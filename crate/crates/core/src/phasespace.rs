//! Phase-space pictures of quantum states on the `(z, φ)` chart: Husimi
//! densities, Gaussian Wigner sampling and the truncated-Wigner estimate of
//! the classical OTOC.

use std::f64::consts::PI;
use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hilbert::{
    coherent_log_magnitudes, inner, ln_factorials, norm_sqr, DimerParams, StateVector,
};
use crate::meanfield::{monodromy, require_unstable, PhasePoint};
use crate::propagate::{OtocSeries, Propagator};
use crate::{Error, Result, C64};

/// Rectangular grid of cell centers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nz: usize,
    pub nphi: usize,
    pub z_range: (f64, f64),
    pub phi_range: (f64, f64),
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::full(201, 201)
    }
}

impl GridSpec {
    /// The whole chart `z ∈ (-1, 1)`, `φ ∈ [-π, π)`.
    pub fn full(nz: usize, nphi: usize) -> Self {
        Self {
            nz,
            nphi,
            z_range: (-1.0, 1.0),
            phi_range: (-PI, PI),
        }
    }

    fn validate(&self) -> Result<()> {
        let (z0, z1) = self.z_range;
        let (p0, p1) = self.phi_range;
        if self.nz == 0 || self.nphi == 0 {
            return Err(Error::InvalidInput(
                "grid must have at least one cell per axis".into(),
            ));
        }
        if !(z0 < z1 && z0 >= -1.0 && z1 <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "z range ({z0}, {z1}) must lie in [-1, 1]"
            )));
        }
        if !(p0 < p1 && p0.is_finite() && p1.is_finite()) {
            return Err(Error::InvalidInput(format!("bad phase range ({p0}, {p1})")));
        }
        Ok(())
    }

    fn centers(n: usize, (lo, hi): (f64, f64)) -> Vec<f64> {
        let h = (hi - lo) / n as f64;
        (0..n).map(|i| lo + (i as f64 + 0.5) * h).collect()
    }

    pub fn cell_area(&self) -> f64 {
        (self.z_range.1 - self.z_range.0) / self.nz as f64 * (self.phi_range.1 - self.phi_range.0)
            / self.nphi as f64
    }
}

/// First and second moments of a distribution on the `(z, φ)` chart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseMoments {
    pub mean_z: f64,
    pub mean_phi: f64,
    pub var_z: f64,
    pub var_phi: f64,
    pub cov_z_phi: f64,
}

/// Density sampled on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub z_values: Vec<f64>,
    pub phi_values: Vec<f64>,
    /// Row-major, one row per `z` value.
    pub density: Vec<f64>,
    pub time: f64,
}

impl PhaseGrid {
    pub fn at(&self, iz: usize, iphi: usize) -> f64 {
        self.density[iz * self.phi_values.len() + iphi]
    }

    fn cell_area(&self) -> f64 {
        let dz = spacing(&self.z_values);
        let dphi = spacing(&self.phi_values);
        dz * dphi
    }

    /// Riemann sum of the density.
    pub fn integral(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.cell_area()
    }

    /// Grid point of largest density.
    pub fn argmax(&self) -> PhasePoint {
        let (idx, _) =
            self.density
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &d)| {
                    if d > best.1 {
                        (i, d)
                    } else {
                        best
                    }
                });
        let nphi = self.phi_values.len();
        PhasePoint::new(self.z_values[idx / nphi], self.phi_values[idx % nphi])
    }

    /// Moments of the density, normalized by its grid integral. Phases are
    /// taken as given, so the grid should not cut through the distribution.
    pub fn moments(&self) -> PhaseMoments {
        let nphi = self.phi_values.len();
        let (mut w, mut mz, mut mp) = (0.0, 0.0, 0.0);
        for (i, &d) in self.density.iter().enumerate() {
            w += d;
            mz += d * self.z_values[i / nphi];
            mp += d * self.phi_values[i % nphi];
        }
        mz /= w;
        mp /= w;
        let (mut vz, mut vp, mut c) = (0.0, 0.0, 0.0);
        for (i, &d) in self.density.iter().enumerate() {
            let dz = self.z_values[i / nphi] - mz;
            let dp = self.phi_values[i % nphi] - mp;
            vz += d * dz * dz;
            vp += d * dp * dp;
            c += d * dz * dp;
        }
        PhaseMoments {
            mean_z: mz,
            mean_phi: mp,
            var_z: vz / w,
            var_phi: vp / w,
            cov_z_phi: c / w,
        }
    }

    /// CSV with header `z,phi,q`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "z,phi,q")?;
        let nphi = self.phi_values.len();
        for (i, d) in self.density.iter().enumerate() {
            writeln!(
                w,
                "{:.8e},{:.8e},{d:.10e}",
                self.z_values[i / nphi],
                self.phi_values[i % nphi]
            )?;
        }
        Ok(())
    }

    /// Raw density as little-endian `f64`, row-major.
    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        for d in &self.density {
            w.write_all(&d.to_le_bytes())?;
        }
        Ok(())
    }

    /// JSON header describing the layout of [`write_binary`](Self::write_binary).
    pub fn binary_header(&self) -> String {
        let first_last = |v: &[f64]| [v[0], v[v.len() - 1]];
        serde_json::json!({
            "nz": self.z_values.len(),
            "nphi": self.phi_values.len(),
            "z_centers": first_last(&self.z_values),
            "phi_centers": first_last(&self.phi_values),
            "time": self.time,
            "dtype": "f64-le",
            "layout": "row-major, z outer",
        })
        .to_string()
    }
}

fn spacing(v: &[f64]) -> f64 {
    if v.len() > 1 {
        (v[v.len() - 1] - v[0]) / (v.len() - 1) as f64
    } else {
        1.0
    }
}

/// Husimi density `|<ξ(z, φ)|ψ>|²` with normalized number-projected coherent
/// states. For a normalized state the chart integral is `4π/(N+1)`.
pub fn husimi(state: &StateVector, grid: &GridSpec) -> Result<PhaseGrid> {
    husimi_at(state, grid, 0.0)
}

fn husimi_at(state: &StateVector, grid: &GridSpec, time: f64) -> Result<PhaseGrid> {
    grid.validate()?;
    let n = state.n_particles();
    let ln_fact = ln_factorials(n);
    let z_values = GridSpec::centers(grid.nz, grid.z_range);
    let phi_values = GridSpec::centers(grid.nphi, grid.phi_range);
    let psi = &state.amplitudes;
    let rows: Vec<Vec<f64>> = z_values
        .par_iter()
        .map(|&z| {
            let weights: Vec<C64> = coherent_log_magnitudes(&ln_fact, z)
                .iter()
                .zip(psi)
                .map(|(&l, &p)| p * l.exp())
                .collect();
            phi_values
                .iter()
                .map(|&phi| {
                    // <ξ|ψ> = Σ_k |ξ_k| ψ_k q^{N-k}, q = exp(i(φ + π))
                    let q = C64::from_polar(1.0, phi + PI);
                    let mut acc = C64::new(0.0, 0.0);
                    for w in &weights {
                        acc = acc * q + w;
                    }
                    acc.norm_sqr()
                })
                .collect()
        })
        .collect();
    Ok(PhaseGrid {
        z_values,
        phi_values,
        density: rows.concat(),
        time,
    })
}

/// Husimi frames of `U(t)|state>` at each of the sorted `times`.
pub fn husimi_frames(
    prop: &Propagator,
    state: &StateVector,
    times: &[f64],
    grid: &GridSpec,
) -> Result<Vec<PhaseGrid>> {
    let mut frames = Vec::with_capacity(times.len());
    let mut current = state.clone();
    let mut t_prev = 0.0;
    for &t in times {
        current = prop.evolve_sliced(&current, t - t_prev)?;
        t_prev = t;
        frames.push(husimi_at(&current, grid, t)?);
    }
    Ok(frames)
}

/// Symmetrized moments of `Z = (n1 - n2)/N` and `Y = (a1†a2 - a2†a1)/(iN)`,
/// which equals `sqrt(1 - z²) sin φ` on coherent states. Near `(0, 0)` they
/// are the Wigner moments of `(z, φ)`.
pub fn state_moments(state: &StateVector) -> PhaseMoments {
    let n = state.n_particles() as f64;
    let psi = &state.amplitudes;
    let zpsi: Vec<C64> = psi
        .iter()
        .enumerate()
        .map(|(k, c)| c * ((2.0 * k as f64 - n) / n))
        .collect();
    let ypsi = apply_y(psi);
    let norm = norm_sqr(psi);
    let mz = inner(psi, &zpsi).re / norm;
    let my = inner(psi, &ypsi).re / norm;
    let vz = norm_sqr(&zpsi) / norm - mz * mz;
    let vy = norm_sqr(&ypsi) / norm - my * my;
    let c = inner(&zpsi, &ypsi).re / norm - mz * my;
    PhaseMoments {
        mean_z: mz,
        mean_phi: my,
        var_z: vz,
        var_phi: vy,
        cov_z_phi: c,
    }
}

/// `Y ψ` with `Y = (A - A†)/(iN)`, `A = a1† a2`, `A|k> = sqrt((k+1)(N-k)) |k+1>`.
fn apply_y(psi: &[C64]) -> Vec<C64> {
    let d = psi.len();
    let n = (d - 1) as f64;
    let mut out = vec![C64::new(0.0, 0.0); d];
    let minus_i_over_n = C64::new(0.0, -1.0 / n);
    for k in 0..d - 1 {
        let amp = (((k + 1) as f64) * (n - k as f64)).sqrt();
        // A: |k> -> |k+1>, A†: |k+1> -> |k>
        out[k + 1] += minus_i_over_n * amp * psi[k];
        out[k] -= minus_i_over_n * amp * psi[k + 1];
    }
    out
}

/// Width `a` along the unstable direction implied by a state's second
/// moments, `a = sqrt(Var(u)/2)` with `u = (sinΘ/λs)(z/2 - 2 cosΘ φ/λs)`.
pub fn effective_scale(params: &DimerParams, state: &StateVector) -> Result<f64> {
    let l = require_unstable(params)?;
    let (s, c) = params.theta().sin_cos();
    let m = state_moments(state);
    let cz = s / (2.0 * l);
    let cp = -2.0 * c * s / (l * l);
    let var_u = cz * cz * m.var_z + 2.0 * cz * cp * m.cov_z_phi + cp * cp * m.var_phi;
    if !(var_u > 0.0) {
        return Err(Error::NonPositive);
    }
    Ok((var_u / 2.0).sqrt())
}

/// Draws `(z, φ)` from the Gaussian Wigner function with `Var(n) = ωN/4`,
/// `Var(φ) = 1/(ωN)` centered at `(0, 0)`; `z = 2n/N`.
pub fn wigner_sample(
    params: &DimerParams,
    omega: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<PhasePoint>> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "omega = {omega} must be positive"
        )));
    }
    let n = params.n();
    let dn = Normal::new(0.0, (omega * n / 4.0).sqrt()).expect("positive width");
    let dphi = Normal::new(0.0, 1.0 / (omega * n).sqrt()).expect("positive width");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let nn = dn.sample(&mut rng);
            let phi = dphi.sample(&mut rng);
            PhasePoint::new(2.0 * nn / n, phi)
        })
        .collect())
}

/// Integration tolerance used per Monte-Carlo trajectory.
pub const TWA_TOL: f64 = 1e-10;
/// Largest tolerated fraction of aborted trajectories.
pub const TWA_MAX_FAILURE_FRACTION: f64 = 0.01;

/// Truncated-Wigner estimate of `<(∂n_t/∂φ0)²>` with per-time standard errors.
pub fn twa_otoc(
    params: &DimerParams,
    omega: f64,
    times: &[f64],
    count: usize,
    seed: u64,
) -> Result<OtocSeries> {
    twa_otoc_with_tol(params, omega, times, count, seed, TWA_TOL)
}

pub fn twa_otoc_with_tol(
    params: &DimerParams,
    omega: f64,
    times: &[f64],
    count: usize,
    seed: u64,
    tol: f64,
) -> Result<OtocSeries> {
    if count < 2 {
        return Err(Error::InvalidInput("need at least two samples".into()));
    }
    let samples = wigner_sample(params, omega, count, seed)?;
    let n_particles = params.n_particles();
    let traces: Vec<Option<Vec<f64>>> = samples
        .par_iter()
        .map(|&p0| {
            monodromy(params, p0, times, tol).ok().map(|frames| {
                frames
                    .iter()
                    .map(|f| f.dn_dphi0(n_particles).powi(2))
                    .collect()
            })
        })
        .collect();

    let failed = traces.iter().filter(|t| t.is_none()).count();
    if failed as f64 > TWA_MAX_FAILURE_FRACTION * count as f64 {
        return Err(Error::TooManyFailures {
            failed,
            total: count,
        });
    }
    // Welford accumulation in sample order keeps the result independent of
    // the thread schedule.
    let mut mean = vec![0.0; times.len()];
    let mut m2 = vec![0.0; times.len()];
    let mut k = 0.0;
    for trace in traces.iter().flatten() {
        k += 1.0;
        for ((m, s), &x) in mean.iter_mut().zip(m2.iter_mut()).zip(trace) {
            let delta = x - *m;
            *m += delta / k;
            *s += delta * (x - *m);
        }
    }
    let stderr = m2.iter().map(|s| (s / (k - 1.0) / k).sqrt()).collect();
    let mut series = OtocSeries::new(times.to_vec(), mean)?
        .with_params(*params)
        .with_label(format!("twa omega={omega} samples={count} failed={failed}"));
    series.stderr = Some(stderr);
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::coherent_state;

    #[test]
    fn coherent_state_moments() {
        for &n in &[50usize, 1000] {
            let params = DimerParams::new(1.35, n).unwrap();
            let s = coherent_state(&params, 0.0, 0.0).unwrap();
            let m = state_moments(&s);
            assert!(m.mean_z.abs() < 1e-12 && m.mean_phi.abs() < 1e-12);
            assert!((m.var_z * n as f64 - 1.0).abs() < 1e-10);
            assert!((m.var_phi * n as f64 - 1.0).abs() < 1e-10);
            assert!(m.cov_z_phi.abs() < 1e-12);
        }
    }

    #[test]
    fn y_expectation_tracks_phase() {
        let params = DimerParams::new(1.0, 400).unwrap();
        let (z, phi) = (0.3f64, 0.4f64);
        let m = state_moments(&coherent_state(&params, z, phi).unwrap());
        assert!((m.mean_z - z).abs() < 1e-12);
        assert!((m.mean_phi - (1.0 - z * z).sqrt() * phi.sin()).abs() < 1e-12);
    }

    #[test]
    fn effective_scale_of_coherent_state() {
        let params = DimerParams::new(1.35, 1000).unwrap();
        let s = coherent_state(&params, 0.0, 0.0).unwrap();
        let a = effective_scale(&params, &s).unwrap();
        let expected = crate::separatrix::scale_a(&params, 1.0).unwrap();
        assert!((a / expected - 1.0).abs() < 1e-9);
    }

    #[test]
    fn husimi_normalization_and_peak() {
        let params = DimerParams::new(1.35, 60).unwrap();
        let s = coherent_state(&params, 0.2, -0.5).unwrap();
        let g = husimi(&s, &GridSpec::full(161, 161)).unwrap();
        assert!(g.density.iter().all(|&d| d >= 0.0));
        let total = g.integral();
        assert!((total / (4.0 * PI / 61.0) - 1.0).abs() < 1e-3, "{total}");
        let peak = g.argmax();
        assert!((peak.z - 0.2).abs() <= 2.0 / 161.0);
        assert!((peak.phi + 0.5).abs() <= 2.0 * PI / 161.0);
    }

    #[test]
    fn husimi_of_basis_state_is_phase_independent() {
        let s = StateVector::basis(10, 3).unwrap();
        let g = husimi(&s, &GridSpec::full(5, 7)).unwrap();
        for iz in 0..5 {
            let row: Vec<f64> = (0..7).map(|ip| g.at(iz, ip)).collect();
            assert!(row
                .iter()
                .all(|v| (v - row[0]).abs() < 1e-14 * row[0].max(1e-300)));
        }
    }

    #[test]
    fn binary_export() {
        let s = StateVector::basis(4, 0).unwrap();
        let g = husimi(&s, &GridSpec::full(3, 2)).unwrap();
        let mut buf = Vec::new();
        g.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 6 * 8);
        let first = f64::from_le_bytes(buf[..8].try_into().unwrap());
        assert_eq!(first, g.density[0]);
        let header: serde_json::Value = serde_json::from_str(&g.binary_header()).unwrap();
        assert_eq!(header["nz"], 3);
        assert_eq!(header["nphi"], 2);
    }

    #[test]
    fn grid_validation() {
        let s = StateVector::basis(4, 0).unwrap();
        let mut spec = GridSpec::full(3, 3);
        spec.z_range = (-1.5, 1.0);
        assert!(husimi(&s, &spec).is_err());
        assert!(husimi(&s, &GridSpec::full(0, 3)).is_err());
    }

    #[test]
    fn sampling_is_seeded() {
        let params = DimerParams::new(1.35, 1000).unwrap();
        let a = wigner_sample(&params, 1.0, 100, 7).unwrap();
        let b = wigner_sample(&params, 1.0, 100, 7).unwrap();
        let c = wigner_sample(&params, 1.0, 100, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(wigner_sample(&params, -1.0, 1, 0).is_err());
    }

    #[test]
    fn twa_starts_at_zero() {
        let params = DimerParams::new(1.35, 1000).unwrap();
        let s = twa_otoc(&params, 1.0, &[0.0, 0.5], 50, 1).unwrap();
        assert_eq!(s.values[0], 0.0);
        assert_eq!(s.stderr.as_ref().unwrap()[0], 0.0);
        assert!(s.values[1] > 0.0);
    }

    #[test]
    fn twa_reports_failures() {
        // z spread ~ 1 at N = 2, so many samples leave the chart
        let params = DimerParams::new(1.35, 2).unwrap();
        match twa_otoc(&params, 1.0, &[0.0, 1.0], 200, 3) {
            Err(Error::TooManyFailures { failed, total }) => {
                assert_eq!(total, 200);
                assert!(failed > 2);
            }
            other => panic!("expected failure report, got {other:?}"),
        }
    }
}
