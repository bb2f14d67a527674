//! Exact time evolution in the fixed-`N` sector and the quantum OTOC
//! `C(t) = || [n1(t), n1] |ψ> ||²`.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::hilbert::{build_hamiltonian, norm_sqr, DimerParams, StateVector};
use crate::linalg::bessel::{bessel_j_sequence, chebyshev_term_estimate};
use crate::linalg::{SymTridiagonal, TridiagonalEigen};
use crate::{Error, Result, C64};

/// Largest particle number for which [`Backend::auto`] picks the dense
/// eigendecomposition. Above it the `O(d³)` setup dominates every run.
pub const AUTO_EIGEN_MAX_N: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// Full eigendecomposition of the tridiagonal Hamiltonian.
    Eigen,
    /// Chebyshev expansion of `exp(-iHt)` with Gershgorin spectral bounds.
    Chebyshev,
}

impl Backend {
    pub fn auto(n_particles: usize) -> Self {
        if n_particles <= AUTO_EIGEN_MAX_N {
            Backend::Eigen
        } else {
            Backend::Chebyshev
        }
    }
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eigen" | "eigendecomposition" => Ok(Backend::Eigen),
            "chebyshev" => Ok(Backend::Chebyshev),
            other => Err(Error::InvalidInput(format!("unknown backend '{other}'"))),
        }
    }
}

/// Default accuracy of the Chebyshev expansion (coefficient cutoff).
pub const DEFAULT_CHEBYSHEV_TOL: f64 = 1e-14;
/// Default cap on the number of Chebyshev terms per evolution call.
pub const DEFAULT_CHEBYSHEV_MAX_TERMS: usize = 200_000;

#[derive(Debug, Clone)]
struct Chebyshev {
    lower: f64,
    upper: f64,
    center: f64,
    half_width: f64,
    tolerance: f64,
    max_terms: usize,
    // 2(H - center)/half_width, stored as diagonal and off-diagonal
    diag2: Vec<f64>,
    off2: Vec<f64>,
}

#[derive(Debug, Clone)]
enum Engine {
    Eigen(TridiagonalEigen),
    Chebyshev(Chebyshev),
}

/// Immutable propagator for one Hamiltonian. Safe to share between threads.
#[derive(Debug, Clone)]
pub struct Propagator {
    hamiltonian: SymTridiagonal,
    params: Option<DimerParams>,
    engine: Engine,
}

impl Propagator {
    pub fn new(hamiltonian: &SymTridiagonal, backend: Backend) -> Result<Self> {
        let engine = match backend {
            Backend::Eigen => Engine::Eigen(TridiagonalEigen::compute(hamiltonian)?),
            Backend::Chebyshev => Engine::Chebyshev(Chebyshev::new(
                hamiltonian,
                DEFAULT_CHEBYSHEV_TOL,
                DEFAULT_CHEBYSHEV_MAX_TERMS,
            )?),
        };
        Ok(Self {
            hamiltonian: hamiltonian.clone(),
            params: None,
            engine,
        })
    }

    /// Chebyshev propagator with explicit accuracy and term limit.
    pub fn chebyshev(
        hamiltonian: &SymTridiagonal,
        tolerance: f64,
        max_terms: usize,
    ) -> Result<Self> {
        Ok(Self {
            hamiltonian: hamiltonian.clone(),
            params: None,
            engine: Engine::Chebyshev(Chebyshev::new(hamiltonian, tolerance, max_terms)?),
        })
    }

    /// Builds the dimer Hamiltonian for `params` and remembers the parameters
    /// for the OTOC series it produces.
    pub fn for_params(params: &DimerParams, backend: Backend) -> Result<Self> {
        let mut prop = Self::new(&build_hamiltonian(params), backend)?;
        prop.params = Some(*params);
        Ok(prop)
    }

    pub fn backend(&self) -> Backend {
        match self.engine {
            Engine::Eigen(_) => Backend::Eigen,
            Engine::Chebyshev(_) => Backend::Chebyshev,
        }
    }

    pub fn params(&self) -> Option<&DimerParams> {
        self.params.as_ref()
    }

    pub fn hamiltonian(&self) -> &SymTridiagonal {
        &self.hamiltonian
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn eigen(&self) -> Option<&TridiagonalEigen> {
        match &self.engine {
            Engine::Eigen(e) => Some(e),
            Engine::Chebyshev(_) => None,
        }
    }

    /// Padded spectral bounds used by the Chebyshev backend; exact extreme
    /// eigenvalues for the eigendecomposition.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        match &self.engine {
            Engine::Eigen(e) => (e.values[0], *e.values.last().unwrap()),
            Engine::Chebyshev(c) => (c.lower, c.upper),
        }
    }

    /// `exp(-iHt)|state>`. Negative `t` is allowed.
    pub fn evolve(&self, state: &StateVector, t: f64) -> Result<StateVector> {
        self.check_dim(state)?;
        Ok(StateVector {
            amplitudes: self.evolve_raw(&state.amplitudes, t)?,
        })
    }

    /// Like [`evolve`](Self::evolve) but splits long Chebyshev evolutions into
    /// slices that fit the term limit.
    pub fn evolve_sliced(&self, state: &StateVector, t: f64) -> Result<StateVector> {
        self.check_dim(state)?;
        Ok(StateVector {
            amplitudes: self.evolve_sliced_raw(&state.amplitudes, t)?,
        })
    }

    fn check_dim(&self, state: &StateVector) -> Result<()> {
        if state.dim() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "state dimension {} does not match Hamiltonian dimension {}",
                state.dim(),
                self.dim()
            )));
        }
        Ok(())
    }

    pub(crate) fn evolve_raw(&self, psi: &[C64], t: f64) -> Result<Vec<C64>> {
        if !t.is_finite() {
            return Err(Error::InvalidInput(format!(
                "evolution time {t} is not finite"
            )));
        }
        if t == 0.0 {
            return Ok(psi.to_vec());
        }
        match &self.engine {
            Engine::Eigen(e) => Ok(eigen_evolve(e, psi, t)),
            Engine::Chebyshev(c) => c.evolve(psi, t),
        }
    }

    pub(crate) fn evolve_sliced_raw(&self, psi: &[C64], t: f64) -> Result<Vec<C64>> {
        match &self.engine {
            Engine::Chebyshev(c) => {
                let needed = c.terms_for(t);
                if needed <= c.max_terms {
                    return c.evolve(psi, t);
                }
                let mut slices = needed.div_ceil(c.max_terms).max(2);
                while c.terms_for(t / slices as f64) > c.max_terms {
                    slices += slices / 2 + 1;
                }
                let dt = t / slices as f64;
                let mut out = psi.to_vec();
                for _ in 0..slices {
                    out = c.evolve(&out, dt)?;
                }
                Ok(out)
            }
            Engine::Eigen(_) => self.evolve_raw(psi, t),
        }
    }
}

fn eigen_evolve(e: &TridiagonalEigen, psi: &[C64], t: f64) -> Vec<C64> {
    let n = e.dim();
    let v = &e.vectors;
    let mut coeff = vec![C64::new(0.0, 0.0); n];
    for (k, &p) in psi.iter().enumerate() {
        if p.re == 0.0 && p.im == 0.0 {
            continue;
        }
        let row = &v[k * n..(k + 1) * n];
        for (c, &vk) in coeff.iter_mut().zip(row) {
            *c += p * vk;
        }
    }
    for (c, &energy) in coeff.iter_mut().zip(&e.values) {
        *c *= C64::from_polar(1.0, -energy * t);
    }
    (0..n)
        .map(|k| {
            let row = &v[k * n..(k + 1) * n];
            let mut re = 0.0;
            let mut im = 0.0;
            for (c, &vk) in coeff.iter().zip(row) {
                re += c.re * vk;
                im += c.im * vk;
            }
            C64::new(re, im)
        })
        .collect()
}

impl Chebyshev {
    fn new(h: &SymTridiagonal, tolerance: f64, max_terms: usize) -> Result<Self> {
        if !(tolerance > 0.0 && tolerance < 1e-2) {
            return Err(Error::InvalidInput(format!(
                "Chebyshev tolerance {tolerance} out of range"
            )));
        }
        if max_terms < 16 {
            return Err(Error::InvalidInput(
                "Chebyshev term limit must be at least 16".into(),
            ));
        }
        let (lo, hi) = h.gershgorin_bounds();
        let pad = 0.01 * (hi - lo) + 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        let (lower, upper) = (lo - pad, hi + pad);
        let center = 0.5 * (upper + lower);
        let half_width = 0.5 * (upper - lower);
        let scale = 2.0 / half_width;
        Ok(Self {
            lower,
            upper,
            center,
            half_width,
            tolerance,
            max_terms,
            diag2: h.diag.iter().map(|d| (d - center) * scale).collect(),
            off2: h.offdiag.iter().map(|e| e * scale).collect(),
        })
    }

    fn terms_for(&self, t: f64) -> usize {
        chebyshev_term_estimate(self.half_width * t, self.tolerance)
    }

    fn evolve(&self, psi: &[C64], t: f64) -> Result<Vec<C64>> {
        let x = self.half_width * t;
        if self.terms_for(t) > self.max_terms {
            return Err(Error::ChebyshevOverflow {
                needed: self.terms_for(t),
                limit: self.max_terms,
            });
        }
        let bessel = bessel_j_sequence(x.abs(), self.tolerance * 1e-2);
        if bessel.len() > self.max_terms {
            return Err(Error::ChebyshevOverflow {
                needed: bessel.len(),
                limit: self.max_terms,
            });
        }
        // exp(-i x y) = J0(x) + 2 Σ (-i)^k J_k(x) T_k(y), with i^k for x < 0.
        // H is real, so real and imaginary parts follow separate real
        // recurrences; even terms carry real and odd terms imaginary weights.
        let sign = if x >= 0.0 { -1.0 } else { 1.0 };
        let n = psi.len();
        let mut prev = Split::from(psi);
        let mut even = Split::zeros(n);
        let mut odd = Split::zeros(n);
        even.axpy(bessel[0], &prev);
        if bessel.len() > 1 {
            let mut cur = Split::zeros(n);
            self.first_step(&prev.re, &mut cur.re);
            self.first_step(&prev.im, &mut cur.im);
            odd.axpy(sign * 2.0 * bessel[1], &cur);
            for (k, &jk) in bessel.iter().enumerate().skip(2) {
                // (∓i)^k = (-1)^{k/2} for even k, ∓(-1)^{(k-1)/2} i for odd k
                let w = 2.0 * jk * if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
                let (target, w) = if k % 2 == 0 {
                    (&mut even, w)
                } else {
                    (&mut odd, sign * w)
                };
                self.step(&cur, &mut prev, target, w);
                std::mem::swap(&mut prev, &mut cur);
            }
        }
        let g = C64::from_polar(1.0, -self.center * t);
        Ok((0..n)
            .map(|i| g * C64::new(even.re[i] - odd.im[i], even.im[i] + odd.re[i]))
            .collect())
    }

    /// `out = (H - center)/half_width x`
    fn first_step(&self, x: &[f64], out: &mut [f64]) {
        let n = x.len();
        let (d, e) = (&self.diag2, &self.off2);
        if n == 1 {
            out[0] = 0.5 * d[0] * x[0];
            return;
        }
        out[0] = 0.5 * (d[0] * x[0] + e[0] * x[1]);
        for i in 1..n - 1 {
            out[i] = 0.5 * (e[i - 1] * x[i - 1] + d[i] * x[i] + e[i] * x[i + 1]);
        }
        out[n - 1] = 0.5 * (e[n - 2] * x[n - 2] + d[n - 1] * x[n - 1]);
    }

    /// `prev <- 2 H~ cur - prev` and `acc += w * prev`, for both parts.
    fn step(&self, cur: &Split, prev: &mut Split, acc: &mut Split, w: f64) {
        let n = cur.re.len();
        let (d, e) = (&self.diag2, &self.off2);
        if n == 1 {
            for (c, p, a) in [
                (&cur.re, &mut prev.re, &mut acc.re),
                (&cur.im, &mut prev.im, &mut acc.im),
            ] {
                p[0] = d[0] * c[0] - p[0];
                a[0] += w * p[0];
            }
            return;
        }
        for (c, p, a) in [
            (&cur.re, &mut prev.re, &mut acc.re),
            (&cur.im, &mut prev.im, &mut acc.im),
        ] {
            let first = d[0] * c[0] + e[0] * c[1] - p[0];
            let last = e[n - 2] * c[n - 2] + d[n - 1] * c[n - 1] - p[n - 1];
            p[0] = first;
            a[0] += w * first;
            p[n - 1] = last;
            a[n - 1] += w * last;
        }
        let m = n - 2;
        let (el, er, dm) = (&e[..m], &e[1..m + 1], &d[1..m + 1]);
        let (rl, rm, rr) = (&cur.re[..m], &cur.re[1..m + 1], &cur.re[2..]);
        let (il, im, ir) = (&cur.im[..m], &cur.im[1..m + 1], &cur.im[2..]);
        let pr = &mut prev.re[1..m + 1];
        let pi = &mut prev.im[1..m + 1];
        let ar = &mut acc.re[1..m + 1];
        let ai = &mut acc.im[1..m + 1];
        for i in 0..m {
            let nr = el[i] * rl[i] + dm[i] * rm[i] + er[i] * rr[i] - pr[i];
            let ni = el[i] * il[i] + dm[i] * im[i] + er[i] * ir[i] - pi[i];
            pr[i] = nr;
            pi[i] = ni;
            ar[i] += w * nr;
            ai[i] += w * ni;
        }
    }
}

/// Complex vector stored as separate real and imaginary parts.
struct Split {
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Split {
    fn zeros(n: usize) -> Self {
        Self {
            re: vec![0.0; n],
            im: vec![0.0; n],
        }
    }

    fn from(v: &[C64]) -> Self {
        Self {
            re: v.iter().map(|c| c.re).collect(),
            im: v.iter().map(|c| c.im).collect(),
        }
    }

    fn axpy(&mut self, w: f64, x: &Split) {
        for (a, b) in self.re.iter_mut().zip(&x.re) {
            *a += w * b;
        }
        for (a, b) in self.im.iter_mut().zip(&x.im) {
            *a += w * b;
        }
    }
}

/// Site observable entering the commutator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// `n1`, the occupation of site 1.
    SiteOne,
    /// `n = (n1 - n2)/2 = n1 - N/2`.
    Imbalance,
}

impl Observable {
    fn apply(self, v: &[C64]) -> Vec<C64> {
        let offset = match self {
            Observable::SiteOne => 0.0,
            Observable::Imbalance => 0.5 * (v.len() - 1) as f64,
        };
        v.iter()
            .enumerate()
            .map(|(k, c)| c * (k as f64 - offset))
            .collect()
    }
}

/// Time series of an OTOC, quantum `C(t)` or classical `O(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OtocSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Monte-Carlo standard error per time, when the series is an estimate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr: Option<Vec<f64>>,
    pub params: Option<DimerParams>,
    pub state_label: String,
}

impl OtocSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::InvalidInput(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        Ok(Self {
            times,
            values,
            stderr: None,
            params: None,
            state_label: String::new(),
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.state_label = label.into();
        self
    }

    pub fn with_params(mut self, params: DimerParams) -> Self {
        self.params = Some(params);
        self
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// CSV with header `t,C`, or `t,C,stderr` for Monte-Carlo estimates.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        match &self.stderr {
            None => {
                writeln!(w, "t,C")?;
                for (t, c) in self.times.iter().zip(&self.values) {
                    writeln!(w, "{t:.10e},{c:.10e}")?;
                }
            }
            Some(se) => {
                writeln!(w, "t,C,stderr")?;
                for ((t, c), s) in self.times.iter().zip(&self.values).zip(se) {
                    writeln!(w, "{t:.10e},{c:.10e},{s:.10e}")?;
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("series serializes")
    }
}

/// Uniform grid of `points` times on `[0, t_max]`.
pub fn uniform_times(t_max: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..points)
            .map(|i| t_max * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

// Forward states are produced sequentially; the backward half of each time
// point then runs in parallel in chunks of this size.
const OTOC_CHUNK: usize = 32;

/// Quantum OTOC `|| [n1(t), n1] |ψ> ||²` on a sorted time grid.
pub fn otoc(prop: &Propagator, state: &StateVector, times: &[f64]) -> Result<OtocSeries> {
    otoc_with(prop, state, times, Observable::SiteOne)
}

/// OTOC for a chosen site observable. For a pure state `|ψ>` and observable
/// `n`:
///
/// ```text
/// a = U(t)ψ,  b = U(t) nψ,  c = U(-t) n b,  d = n U(-t) n a,
/// C(t) = || c - d ||²
/// ```
pub fn otoc_with(
    prop: &Propagator,
    state: &StateVector,
    times: &[f64],
    observable: Observable,
) -> Result<OtocSeries> {
    prop.check_dim(state)?;
    validate_times(times)?;

    let psi = &state.amplitudes;
    let mut a = psi.clone();
    let mut b = observable.apply(psi);
    let mut t_prev = 0.0;
    let mut values = Vec::with_capacity(times.len());

    for chunk in times.chunks(OTOC_CHUNK) {
        let mut forward = Vec::with_capacity(chunk.len());
        for &t in chunk {
            a = prop.evolve_sliced_raw(&a, t - t_prev)?;
            b = prop.evolve_sliced_raw(&b, t - t_prev)?;
            t_prev = t;
            forward.push((t, a.clone(), b.clone()));
        }
        let chunk_values: Result<Vec<f64>> = forward
            .par_iter()
            .map(|(t, a, b)| {
                let c = prop.evolve_sliced_raw(&observable.apply(b), -t)?;
                let d = observable.apply(&prop.evolve_sliced_raw(&observable.apply(a), -t)?);
                let diff: Vec<C64> = c.iter().zip(&d).map(|(x, y)| x - y).collect();
                Ok(norm_sqr(&diff).max(0.0))
            })
            .collect();
        values.extend(chunk_values?);
    }

    let mut series = OtocSeries::new(times.to_vec(), values)?;
    series.params = prop.params;
    series.state_label = "state".into();
    Ok(series)
}

fn validate_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidInput("empty time grid".into()));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput("non-finite time in grid".into()));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput(
            "time grid must be sorted ascending".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{coherent_state, DimerParams};

    #[test]
    fn eigenvalues_small_systems() {
        let p = Propagator::for_params(&DimerParams::new(0.0, 1).unwrap(), Backend::Eigen).unwrap();
        let ev = &p.eigen().unwrap().values;
        assert!((ev[0] + 2.0).abs() < 1e-14 && (ev[1] - 2.0).abs() < 1e-14);

        let p = Propagator::for_params(
            &DimerParams::new(std::f64::consts::FRAC_PI_2, 2).unwrap(),
            Backend::Eigen,
        )
        .unwrap();
        let ev = &p.eigen().unwrap().values;
        for (a, b) in ev.iter().zip([0.0, 1.0, 1.0]) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn chebyshev_bounds_bracket_spectrum() {
        for &(theta, n) in &[(0.0, 2usize), (1.35, 50), (-0.7, 31)] {
            let params = DimerParams::new(theta, n).unwrap();
            let cheb = Propagator::for_params(&params, Backend::Chebyshev).unwrap();
            let eig = Propagator::for_params(&params, Backend::Eigen).unwrap();
            let (lo, hi) = cheb.spectral_bounds();
            let (emin, emax) = eig.spectral_bounds();
            assert!(lo < emin && hi > emax);
        }
    }

    #[test]
    fn eigenvector_orthogonality() {
        let p =
            Propagator::for_params(&DimerParams::new(1.35, 120).unwrap(), Backend::Eigen).unwrap();
        assert!(p.eigen().unwrap().orthogonality_residual() < 1e-9);
    }

    #[test]
    fn zero_time_is_identity() {
        let params = DimerParams::new(1.2, 20).unwrap();
        let s = coherent_state(&params, 0.1, 0.4).unwrap();
        for backend in [Backend::Eigen, Backend::Chebyshev] {
            let p = Propagator::for_params(&params, backend).unwrap();
            assert_eq!(p.evolve(&s, 0.0).unwrap(), s);
        }
    }

    #[test]
    fn eigenstate_acquires_phase() {
        let params = DimerParams::new(0.8, 25).unwrap();
        let eig = Propagator::for_params(&params, Backend::Eigen).unwrap();
        let cheb = Propagator::for_params(&params, Backend::Chebyshev).unwrap();
        let e = eig.eigen().unwrap();
        let j = 7;
        let v =
            StateVector::new(e.vector(j).into_iter().map(|x| C64::new(x, 0.0)).collect()).unwrap();
        for p in [&eig, &cheb] {
            let out = p.evolve(&v, 3.3).unwrap();
            let overlap = v.inner(&out);
            assert!((overlap.norm() - 1.0).abs() < 1e-10);
            let expected = C64::from_polar(1.0, -e.values[j] * 3.3);
            assert!((overlap - expected).norm() < 1e-9);
        }
    }

    #[test]
    fn forward_backward_identity() {
        let params = DimerParams::new(1.35, 80).unwrap();
        let s = coherent_state(&params, 0.0, 0.0).unwrap();
        for backend in [Backend::Eigen, Backend::Chebyshev] {
            let p = Propagator::for_params(&params, backend).unwrap();
            let back = p.evolve(&p.evolve(&s, 2.7).unwrap(), -2.7).unwrap();
            assert!((back.fidelity(&s) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn backends_agree() {
        let params = DimerParams::new(1.27, 64).unwrap();
        let s = coherent_state(&params, 0.05, -0.1).unwrap();
        let a = Propagator::for_params(&params, Backend::Eigen)
            .unwrap()
            .evolve(&s, 4.0)
            .unwrap();
        let b = Propagator::for_params(&params, Backend::Chebyshev)
            .unwrap()
            .evolve(&s, 4.0)
            .unwrap();
        let err: f64 = a
            .amplitudes
            .iter()
            .zip(&b.amplitudes)
            .map(|(x, y)| (x - y).norm_sqr())
            .sum();
        assert!(err.sqrt() < 1e-10);
    }

    #[test]
    fn chebyshev_overflow_and_slicing() {
        let params = DimerParams::new(1.35, 40).unwrap();
        let h = build_hamiltonian(&params);
        let p = Propagator::chebyshev(&h, 1e-13, 64).unwrap();
        let s = coherent_state(&params, 0.0, 0.0).unwrap();
        match p.evolve(&s, 5.0) {
            Err(Error::ChebyshevOverflow { needed, limit }) => {
                assert!(needed > limit);
                assert_eq!(limit, 64);
            }
            other => panic!("expected overflow, got {other:?}"),
        }
        let sliced = p.evolve_sliced(&s, 5.0).unwrap();
        let exact = Propagator::new(&h, Backend::Eigen)
            .unwrap()
            .evolve(&s, 5.0)
            .unwrap();
        assert!((sliced.fidelity(&exact) - 1.0).abs() < 1e-10);
        assert!((sliced.inner(&exact) - C64::new(1.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn otoc_starts_at_zero() {
        let params = DimerParams::new(1.35, 30).unwrap();
        let p = Propagator::for_params(&params, Backend::Eigen).unwrap();
        let s = coherent_state(&params, 0.0, 0.0).unwrap();
        let series = otoc(&p, &s, &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(series.values[0], 0.0);
        assert!(series.values[1] > 0.0);
        assert_eq!(series.params, Some(params));
    }

    #[test]
    fn otoc_rejects_unsorted_times() {
        let params = DimerParams::new(1.35, 4).unwrap();
        let p = Propagator::for_params(&params, Backend::Eigen).unwrap();
        let s = coherent_state(&params, 0.0, 0.0).unwrap();
        assert!(otoc(&p, &s, &[0.0, 1.0, 0.5]).is_err());
        assert!(otoc(&p, &s, &[]).is_err());
    }

    #[test]
    fn csv_and_json() {
        let series = OtocSeries::new(vec![0.0, 1.0], vec![0.0, 2.5])
            .unwrap()
            .with_label("coherent(0,0)")
            .with_params(DimerParams::new(1.35, 10).unwrap());
        let mut buf = Vec::new();
        series.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,C\n"));
        assert_eq!(text.lines().count(), 3);
        let json = series.to_json();
        let back: OtocSeries = serde_json::from_str(&json).unwrap();
        assert_eq!(back, series);
        assert!(json.contains("\"theta\": 1.35"));
    }

    #[test]
    fn uniform_grid() {
        let g = uniform_times(2.0, 5);
        assert_eq!(g, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
    }
}
