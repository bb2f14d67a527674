//! Mean-field limit of the dimer: the reduced `(z, φ)` dynamics, tangent
//! (monodromy) propagation, fixed points and their stability.
//!
//! Conventions: `z = (n1 - n2)/N`, `φ` the relative phase with the origin at
//! the antihomogeneous point, energy per particle
//!
//! ```text
//! h(z, φ) = 2 cosΘ sqrt(1 - z²) cos φ + sinΘ (z² + 1)/2
//! dz/dt   = -4 cosΘ sqrt(1 - z²) sin φ
//! dφ/dt   =  4 cosΘ z cos φ / sqrt(1 - z²) - 2 sinΘ z
//! ```

pub(crate) mod ode;

use std::f64::consts::PI;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::hilbert::DimerParams;
use crate::{Error, Result};

/// Orbits are aborted once `|z|` exceeds this.
pub const Z_LIMIT: f64 = 1.0 - 1e-10;

// Per-step error target relative to the user tolerance, so that the energy
// drift accumulated over a run stays within 10 tol.
const LOCAL_TOL_FACTOR: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub z: f64,
    pub phi: f64,
}

impl PhasePoint {
    pub const fn new(z: f64, phi: f64) -> Self {
        Self { z, phi }
    }

    /// The same point with `φ` reduced to `(-π, π]`.
    pub fn wrapped(self) -> Self {
        Self {
            z: self.z,
            phi: wrap_phase(self.phi),
        }
    }
}

pub fn wrap_phase(phi: f64) -> f64 {
    let mut p = phi.rem_euclid(2.0 * PI);
    if p > PI {
        p -= 2.0 * PI;
    }
    p
}

pub type Matrix2 = [[f64; 2]; 2];

pub fn det2(m: &Matrix2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

#[derive(Debug, Clone, Copy)]
struct Coupling {
    c: f64,
    s: f64,
}

impl Coupling {
    fn of(params: &DimerParams) -> Self {
        let th = params.theta();
        Self {
            c: th.cos(),
            s: th.sin(),
        }
    }

    fn rhs(self, z: f64, phi: f64) -> Result<[f64; 2]> {
        if !(z.abs() <= Z_LIMIT) {
            return Err(Error::Singularity { z });
        }
        let r = (1.0 - z * z).sqrt();
        let (sp, cp) = phi.sin_cos();
        Ok([
            -4.0 * self.c * r * sp,
            4.0 * self.c * z * cp / r - 2.0 * self.s * z,
        ])
    }

    fn jacobian(self, z: f64, phi: f64) -> Result<Matrix2> {
        if !(z.abs() <= Z_LIMIT) {
            return Err(Error::Singularity { z });
        }
        let r2 = 1.0 - z * z;
        let r = r2.sqrt();
        let (sp, cp) = phi.sin_cos();
        let c = self.c;
        Ok([
            [4.0 * c * z * sp / r, -4.0 * c * r * cp],
            [
                4.0 * c * cp / (r2 * r) - 2.0 * self.s,
                -4.0 * c * z * sp / r,
            ],
        ])
    }
}

/// Energy per particle `h(z, φ)`.
pub fn classical_energy(params: &DimerParams, p: PhasePoint) -> f64 {
    let Coupling { c, s } = Coupling::of(params);
    let r = (1.0 - p.z * p.z).max(0.0).sqrt();
    2.0 * c * r * p.phi.cos() + s * (p.z * p.z + 1.0) / 2.0
}

/// Right-hand side `(dz/dt, dφ/dt)`. Fails at the `|z| = 1` pole.
pub fn eom(params: &DimerParams, p: PhasePoint) -> Result<(f64, f64)> {
    let [dz, dphi] = Coupling::of(params).rhs(p.z, p.phi)?;
    Ok((dz, dphi))
}

/// Analytic Jacobian of [`eom`], rows `(dz/dt, dφ/dt)`, columns `(z, φ)`.
pub fn jacobian(params: &DimerParams, p: PhasePoint) -> Result<Matrix2> {
    Coupling::of(params).jacobian(p.z, p.phi)
}

/// Trajectory sampled on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<PhasePoint>,
    pub energies: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Largest `|h(t) - h(0)| / |h(0)|` along the trajectory.
    pub fn relative_energy_drift(&self) -> f64 {
        let Some(&h0) = self.energies.first() else {
            return 0.0;
        };
        let scale = h0.abs().max(f64::MIN_POSITIVE);
        self.energies
            .iter()
            .map(|h| (h - h0).abs() / scale)
            .fold(0.0, f64::max)
    }

    /// CSV with header `t,z,phi,h`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,z,phi,h")?;
        for ((t, p), h) in self.times.iter().zip(&self.points).zip(&self.energies) {
            writeln!(w, "{t:.10e},{:.12e},{:.12e},{h:.12e}", p.z, p.phi)?;
        }
        Ok(())
    }
}

/// Integrates the mean-field equations and samples the orbit at `times`
/// (sorted, starting at or after 0).
pub fn integrate_at(
    params: &DimerParams,
    p0: PhasePoint,
    times: &[f64],
    tol: f64,
) -> Result<Trajectory> {
    let cp = Coupling::of(params);
    cp.rhs(p0.z, p0.phi)?;
    let mut f = |y: &[f64; 2]| cp.rhs(y[0], y[1]);
    let states = ode::integrate(&mut f, [p0.z, p0.phi], times, tol * LOCAL_TOL_FACTOR, 2)?;
    let points: Vec<PhasePoint> = states.iter().map(|y| PhasePoint::new(y[0], y[1])).collect();
    let energies = points
        .iter()
        .map(|p| classical_energy(params, *p))
        .collect();
    Ok(Trajectory {
        times: times.to_vec(),
        points,
        energies,
    })
}

/// Integrates on `[0, t_final]` and returns `samples + 1` equally spaced points.
pub fn integrate(
    params: &DimerParams,
    p0: PhasePoint,
    t_final: f64,
    tol: f64,
    samples: usize,
) -> Result<Trajectory> {
    if !(t_final >= 0.0) || samples == 0 {
        return Err(Error::InvalidInput(
            "need t_final >= 0 and at least one sample".into(),
        ));
    }
    let times: Vec<f64> = (0..=samples)
        .map(|i| t_final * i as f64 / samples as f64)
        .collect();
    integrate_at(params, p0, &times, tol)
}

/// Stability matrix `M(t) = ∂(z_t, φ_t)/∂(z_0, φ_0)` along an orbit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TangentFrame {
    pub t: f64,
    pub point: PhasePoint,
    pub m: Matrix2,
}

impl TangentFrame {
    pub fn det(&self) -> f64 {
        det2(&self.m)
    }

    /// `∂n_t/∂φ_0 = (N/2) ∂z_t/∂φ_0`.
    pub fn dn_dphi0(&self, n_particles: usize) -> f64 {
        0.5 * n_particles as f64 * self.m[0][1]
    }
}

/// Co-integrates the variational equations `dM/dt = J(x(t)) M`, `M(0) = 1`.
pub fn monodromy(
    params: &DimerParams,
    p0: PhasePoint,
    times: &[f64],
    tol: f64,
) -> Result<Vec<TangentFrame>> {
    let cp = Coupling::of(params);
    cp.rhs(p0.z, p0.phi)?;
    let mut f = |y: &[f64; 6]| -> Result<[f64; 6]> {
        let [dz, dphi] = cp.rhs(y[0], y[1])?;
        let j = cp.jacobian(y[0], y[1])?;
        Ok([
            dz,
            dphi,
            j[0][0] * y[2] + j[0][1] * y[4],
            j[0][0] * y[3] + j[0][1] * y[5],
            j[1][0] * y[2] + j[1][1] * y[4],
            j[1][0] * y[3] + j[1][1] * y[5],
        ])
    };
    // tangent entries grow like e^{λt}; they are included in error control
    let states = ode::integrate(
        &mut f,
        [p0.z, p0.phi, 1.0, 0.0, 0.0, 1.0],
        times,
        tol * LOCAL_TOL_FACTOR,
        6,
    )?;
    Ok(times
        .iter()
        .zip(states)
        .map(|(&t, y)| TangentFrame {
            t,
            point: PhasePoint::new(y[0], y[1]),
            m: [[y[2], y[3]], [y[4], y[5]]],
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixedPointKind {
    StableCenter,
    Hyperbolic,
    /// Degenerate linearization, e.g. exactly at the bifurcation.
    Marginal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub location: PhasePoint,
    pub kind: FixedPointKind,
    /// Growth rate for hyperbolic points, oscillation frequency for centers.
    pub exponent: f64,
    pub jacobian: Matrix2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSearch {
    pub fixed_points: Vec<FixedPointReport>,
    /// Seeds for which Newton iteration did not converge.
    pub nonconverged: usize,
}

const DET_MARGINAL: f64 = 1e-12;

/// Classifies a stationary point by its Jacobian. The flow is
/// area-preserving, so the eigenvalues are `±sqrt(-det J)`.
pub fn classify(params: &DimerParams, p: PhasePoint) -> Result<FixedPointReport> {
    let j = jacobian(params, p)?;
    let d = det2(&j);
    let (kind, exponent) = if d < -DET_MARGINAL {
        (FixedPointKind::Hyperbolic, (-d).sqrt())
    } else if d > DET_MARGINAL {
        (FixedPointKind::StableCenter, d.sqrt())
    } else {
        (FixedPointKind::Marginal, 0.0)
    };
    Ok(FixedPointReport {
        location: p.wrapped(),
        kind,
        exponent,
        jacobian: j,
    })
}

const SEED_GRID: usize = 64;
const NEWTON_MAX_ITER: usize = 200;
const MERGE_DISTANCE: f64 = 1e-6;

/// All stationary points of the mean-field flow: the antihomogeneous point
/// `(0, 0)`, the homogeneous point `(0, π)`, and whatever Newton iteration
/// from a 64×64 seed grid finds in addition.
pub fn find_fixed_points(params: &DimerParams) -> Result<FixedPointSearch> {
    let cp = Coupling::of(params);
    let mut found = vec![PhasePoint::new(0.0, 0.0), PhasePoint::new(0.0, PI)];
    let mut nonconverged = 0;
    // Without hopping every point of z = 0 is stationary; Newton would only
    // wander along that line.
    if cp.c.abs() > 1e-12 {
        for iz in 0..SEED_GRID {
            let z = -1.0 + (iz as f64 + 0.5) * 2.0 / SEED_GRID as f64;
            for ip in 0..SEED_GRID {
                let phi = -PI + (ip as f64 + 0.5) * 2.0 * PI / SEED_GRID as f64;
                match newton(cp, PhasePoint::new(z, phi)) {
                    Some(p) => {
                        let p = p.wrapped();
                        if !found.iter().any(|q| phase_distance(*q, p) < MERGE_DISTANCE) {
                            found.push(p);
                        }
                    }
                    None => nonconverged += 1,
                }
            }
        }
    }
    let mut fixed_points = found
        .into_iter()
        .map(|p| classify(params, p))
        .collect::<Result<Vec<_>>>()?;
    fixed_points[2..].sort_by(|a, b| {
        (a.location.phi, a.location.z)
            .partial_cmp(&(b.location.phi, b.location.z))
            .unwrap()
    });
    Ok(FixedPointSearch {
        fixed_points,
        nonconverged,
    })
}

fn phase_distance(a: PhasePoint, b: PhasePoint) -> f64 {
    let dphi = wrap_phase(a.phi - b.phi);
    (a.z - b.z).hypot(dphi)
}

fn newton(cp: Coupling, mut p: PhasePoint) -> Option<PhasePoint> {
    for _ in 0..NEWTON_MAX_ITER {
        let f = cp.rhs(p.z, p.phi).ok()?;
        let j = cp.jacobian(p.z, p.phi).ok()?;
        let d = det2(&j);
        if d.abs() < 1e-300 {
            return None;
        }
        let dz = (j[1][1] * f[0] - j[0][1] * f[1]) / d;
        let dphi = (-j[1][0] * f[0] + j[0][0] * f[1]) / d;
        let mut lambda = 1.0;
        let mut next = PhasePoint::new(p.z - dz, p.phi - dphi);
        while next.z.abs() >= 1.0 - 1e-9 {
            lambda *= 0.5;
            if lambda < 1e-9 {
                return None;
            }
            next = PhasePoint::new(p.z - lambda * dz, p.phi - lambda * dphi);
        }
        let step = (lambda * dz).hypot(lambda * dphi);
        p = next;
        if step < 1e-12 {
            let f = cp.rhs(p.z, p.phi).ok()?;
            return (f[0].hypot(f[1]) < 1e-12).then_some(p);
        }
    }
    None
}

/// `arctan 2`, where the antihomogeneous point turns hyperbolic.
pub fn bifurcation_theta() -> f64 {
    2f64.atan()
}

/// `γ = tanΘ > 2`: the antihomogeneous point `(0, 0)` is hyperbolic.
pub fn is_unstable_regime(params: &DimerParams) -> bool {
    params.gamma() > 2.0
}

/// Stability exponent of the antihomogeneous point,
/// `λs = 4 cosΘ sqrt(γ/2 - 1)` for `γ > 2`, otherwise 0.
pub fn stability_exponent(params: &DimerParams) -> f64 {
    lambda_s_of_theta(params.theta())
}

pub(crate) fn lambda_s_of_theta(theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    // 16 c² (γ/2 - 1) = 8cs - 16c², free of the tan pole at π/2
    let arg = 8.0 * c * s - 16.0 * c * c;
    if c > 0.0 && s > 2.0 * c && arg > 0.0 {
        arg.sqrt()
    } else {
        0.0
    }
}

/// Like [`stability_exponent`] but rejects the stable regime.
pub fn require_unstable(params: &DimerParams) -> Result<f64> {
    let l = stability_exponent(params);
    if l > 0.0 {
        Ok(l)
    } else {
        Err(Error::StableRegime {
            gamma: params.gamma(),
        })
    }
}

/// Location and value of the maximum of `λs(Θ)` on `(arctan 2, π/2)`,
/// by golden-section search.
pub fn max_stability_exponent() -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (bifurcation_theta(), PI / 2.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (lambda_s_of_theta(x1), lambda_s_of_theta(x2));
    while b - a > 1e-12 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = lambda_s_of_theta(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = lambda_s_of_theta(x1);
        }
    }
    let t = 0.5 * (a + b);
    (t, lambda_s_of_theta(t))
}

/// Solution of the flow linearized at `(0, 0)`.
pub fn linearized_evolution(
    params: &DimerParams,
    z0: f64,
    phi0: f64,
    t: f64,
) -> Result<(f64, f64)> {
    let l = require_unstable(params)?;
    let c = params.theta().cos();
    let (sh, ch) = ((l * t).sinh(), (l * t).cosh());
    Ok((
        z0 * ch - 4.0 * c * phi0 / l * sh,
        phi0 * ch - l * z0 / (4.0 * c) * sh,
    ))
}

/// Energy per particle sampled on a regular grid, for contour plots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyGrid {
    pub z_values: Vec<f64>,
    pub phi_values: Vec<f64>,
    /// Row-major, one row per `z` value.
    pub energy: Vec<f64>,
}

impl EnergyGrid {
    pub fn new(params: &DimerParams, nz: usize, nphi: usize) -> Result<Self> {
        if nz < 2 || nphi < 2 {
            return Err(Error::InvalidInput(
                "energy grid needs at least 2×2 points".into(),
            ));
        }
        let z_values: Vec<f64> = (0..nz)
            .map(|i| -1.0 + 2.0 * i as f64 / (nz - 1) as f64)
            .collect();
        let phi_values: Vec<f64> = (0..nphi)
            .map(|i| -PI + 2.0 * PI * i as f64 / (nphi - 1) as f64)
            .collect();
        let energy = z_values
            .iter()
            .flat_map(|&z| {
                phi_values
                    .iter()
                    .map(move |&phi| classical_energy(params, PhasePoint::new(z, phi)))
            })
            .collect();
        Ok(Self {
            z_values,
            phi_values,
            energy,
        })
    }

    /// CSV with header `z,phi,h`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "z,phi,h")?;
        let nphi = self.phi_values.len();
        for (i, z) in self.z_values.iter().enumerate() {
            for (j, phi) in self.phi_values.iter().enumerate() {
                writeln!(w, "{z:.8e},{phi:.8e},{:.12e}", self.energy[i * nphi + j])?;
            }
        }
        Ok(())
    }
}
