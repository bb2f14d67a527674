//! Fixed-`N` Fock basis of the two-site Bose-Hubbard model.
//!
//! Basis state `k` holds `k` bosons on site 1 and `N - k` on site 2. The
//! Hamiltonian is
//!
//! ```text
//! H = -2J (a1† a2 + a2† a1) + (g/2) (a1†² a1² + a2†² a2²)
//! ```
//!
//! with `J = ε0 cos Θ` and `g = ε0 (2/N) sin Θ`, so that
//! `J² + (gN/2)² = ε0²`. Units: `ħ = ε0 = 1` unless chosen otherwise.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::linalg::SymTridiagonal;
use crate::propagate::Propagator;
use crate::{Error, Result, C64};

/// System definition: angle `Θ`, particle number `N` and energy scale `ε0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct DimerParams {
    theta: f64,
    n_particles: usize,
    epsilon0: f64,
}

#[derive(Deserialize)]
struct RawParams {
    theta: f64,
    n_particles: usize,
    #[serde(default = "one")]
    epsilon0: f64,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<RawParams> for DimerParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        DimerParams::with_energy_scale(raw.theta, raw.n_particles, raw.epsilon0)
    }
}

impl DimerParams {
    /// Parameters with `ε0 = 1`.
    pub fn new(theta: f64, n_particles: usize) -> Result<Self> {
        Self::with_energy_scale(theta, n_particles, 1.0)
    }

    pub fn with_energy_scale(theta: f64, n_particles: usize, epsilon0: f64) -> Result<Self> {
        if !theta.is_finite() || theta.abs() > FRAC_PI_2 + 1e-15 {
            return Err(Error::InvalidParams(format!(
                "theta = {theta} outside [-pi/2, pi/2]"
            )));
        }
        if n_particles == 0 {
            return Err(Error::InvalidParams("particle number must be >= 1".into()));
        }
        if !(epsilon0.is_finite() && epsilon0 > 0.0) {
            return Err(Error::InvalidParams(format!(
                "epsilon0 = {epsilon0} must be > 0"
            )));
        }
        Ok(Self {
            theta: theta.clamp(-FRAC_PI_2, FRAC_PI_2),
            n_particles,
            epsilon0,
        })
    }

    /// Same system with a different particle number.
    pub fn with_particles(&self, n_particles: usize) -> Result<Self> {
        Self::with_energy_scale(self.theta, n_particles, self.epsilon0)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    /// `N` as a float, for formulas.
    pub fn n(&self) -> f64 {
        self.n_particles as f64
    }

    pub fn epsilon0(&self) -> f64 {
        self.epsilon0
    }

    /// Hopping `J = ε0 cos Θ`.
    pub fn j_hop(&self) -> f64 {
        self.epsilon0 * self.theta.cos()
    }

    /// On-site interaction `g = ε0 (2/N) sin Θ`.
    pub fn g_int(&self) -> f64 {
        self.epsilon0 * 2.0 / self.n() * self.theta.sin()
    }

    /// Nonlinearity `γ = gN / 2J = tan Θ`.
    pub fn gamma(&self) -> f64 {
        self.theta.tan()
    }

    /// Hilbert-space dimension `N + 1`.
    pub fn dim(&self) -> usize {
        self.n_particles + 1
    }
}

/// Complex amplitudes over the Fock basis `k = 0..=N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub amplitudes: Vec<C64>,
}

impl StateVector {
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::InvalidInput(
                "state needs at least one amplitude".into(),
            ));
        }
        Ok(Self { amplitudes })
    }

    /// Fock state with `k` particles on site 1.
    pub fn basis(n_particles: usize, k: usize) -> Result<Self> {
        if k > n_particles {
            return Err(Error::InvalidInput(format!(
                "occupation {k} exceeds N = {n_particles}"
            )));
        }
        let mut amplitudes = vec![C64::new(0.0, 0.0); n_particles + 1];
        amplitudes[k] = C64::new(1.0, 0.0);
        Ok(Self { amplitudes })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn n_particles(&self) -> usize {
        self.amplitudes.len() - 1
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.amplitudes)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Rescales to unit norm. Fails on the zero vector.
    pub fn normalized(mut self) -> Result<Self> {
        let nrm = self.norm();
        if !(nrm > 0.0 && nrm.is_finite()) {
            return Err(Error::InvalidInput("cannot normalize a zero state".into()));
        }
        let inv = 1.0 / nrm;
        for c in self.amplitudes.iter_mut() {
            *c *= inv;
        }
        Ok(self)
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        inner(&self.amplitudes, &other.amplitudes)
    }

    /// `|<self|other>|` for normalized states.
    pub fn fidelity(&self, other: &StateVector) -> f64 {
        self.inner(other).norm()
    }

    /// `<n1>` and `Var(n1)` for a normalized state.
    pub fn occupation_moments(&self) -> (f64, f64) {
        let mut mean = 0.0;
        let mut second = 0.0;
        for (k, c) in self.amplitudes.iter().enumerate() {
            let p = c.norm_sqr();
            let kf = k as f64;
            mean += kf * p;
            second += kf * kf * p;
        }
        (mean, second - mean * mean)
    }

    /// Two-column CSV `re,im`, one row per basis state.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "re,im")?;
        for c in &self.amplitudes {
            writeln!(w, "{:.17e},{:.17e}", c.re, c.im)?;
        }
        Ok(())
    }
}

pub(crate) fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum()
}

pub(crate) fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Tridiagonal Hamiltonian in the Fock basis.
pub type TridiagonalHamiltonian = SymTridiagonal;

/// Diagonal `d_k = (g/2)[k(k-1) + (N-k)(N-k-1)]` and hopping
/// `e_k = -2J sqrt((k+1)(N-k))` between `k` and `k + 1`.
pub fn build_hamiltonian(params: &DimerParams) -> TridiagonalHamiltonian {
    let n = params.n_particles();
    let half_g = 0.5 * params.g_int();
    let j = params.j_hop();
    let diag = (0..=n)
        .map(|k| {
            let (k, m) = (k as f64, (n - k) as f64);
            half_g * (k * (k - 1.0) + m * (m - 1.0))
        })
        .collect();
    let offdiag = (0..n)
        .map(|k| -2.0 * j * (((k + 1) * (n - k)) as f64).sqrt())
        .collect();
    SymTridiagonal { diag, offdiag }
}

/// `ln k!` for `k = 0..=n`.
pub fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// `ln |c_k|` of the number-projected coherent state at `z`, unnormalized.
pub(crate) fn coherent_log_magnitudes(ln_fact: &[f64], z: f64) -> Vec<f64> {
    let n = ln_fact.len() - 1;
    let ln_p1 = 0.5 * (0.5 * (1.0 + z)).ln();
    let ln_p2 = 0.5 * (0.5 * (1.0 - z)).ln();
    (0..=n)
        .map(|k| {
            let ln_binom = ln_fact[n] - ln_fact[k] - ln_fact[n - k];
            0.5 * ln_binom + scaled_log(k, ln_p1) + scaled_log(n - k, ln_p2)
        })
        .collect()
}

/// `k * ln_p`, with `0 * ln 0 = 0`.
fn scaled_log(k: usize, ln_p: f64) -> f64 {
    if k == 0 {
        0.0
    } else {
        k as f64 * ln_p
    }
}

/// Number-projected coherent state `(ξ1 a1† + ξ2 a2†)^N |0>` centered at
/// `(z, φ)`, normalized.
///
/// `ξ1 = sqrt((1+z)/2)` is real and `ξ2 = sqrt((1-z)/2) exp(-i(φ + π))`, so the
/// antihomogeneous point `(0, 0)` corresponds to `ξ ∝ (1, -1)`.
pub fn coherent_state(params: &DimerParams, z: f64, phi: f64) -> Result<StateVector> {
    let ln_fact = ln_factorials(params.n_particles());
    coherent_state_with_table(&ln_fact, z, phi)
}

pub(crate) fn coherent_state_with_table(ln_fact: &[f64], z: f64, phi: f64) -> Result<StateVector> {
    if !(z.is_finite() && z.abs() <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "population imbalance z = {z} outside [-1, 1]"
        )));
    }
    if !phi.is_finite() {
        return Err(Error::InvalidInput("phase must be finite".into()));
    }
    let n = ln_fact.len() - 1;
    let logs = coherent_log_magnitudes(ln_fact, z);
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let rel_phase = -(phi + PI);
    let amplitudes = logs
        .iter()
        .enumerate()
        .map(|(k, &l)| C64::from_polar((l - top).exp(), (n - k) as f64 * rel_phase))
        .collect();
    StateVector { amplitudes }.normalized()
}

/// `n1 |state>`: amplitude `k` scaled by `k`. The result is not normalized.
pub fn number_operator_apply(state: &StateVector) -> StateVector {
    StateVector {
        amplitudes: apply_number(&state.amplitudes),
    }
}

pub(crate) fn apply_number(v: &[C64]) -> Vec<C64> {
    v.iter().enumerate().map(|(k, c)| c * k as f64).collect()
}

/// Squeezes `state` along the unstable direction by evolving it to a negative
/// time `t0`: returns `U(t0)|state>`.
pub fn squeeze_by_backward_evolution(
    propagator: &Propagator,
    state: &StateVector,
    t0: f64,
) -> Result<StateVector> {
    if t0 == 0.0 {
        return Ok(state.clone());
    }
    propagator.evolve_sliced(state, t0)
}
