//! Dense two-mode Fock-space reference shared by integration tests.

use dimer_otoc::hilbert::StateVector;
use nalgebra::{DMatrix, DVector};

/// Two-mode Fock space with occupations 0..=n per mode, index `n1 * (n+1) + n2`.
pub struct Fock {
    pub n: usize,
}

impl Fock {
    pub fn dim(&self) -> usize {
        (self.n + 1) * (self.n + 1)
    }

    pub fn idx(&self, n1: usize, n2: usize) -> usize {
        n1 * (self.n + 1) + n2
    }

    /// `a1† a2`
    pub fn hop(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        for n1 in 0..self.n {
            for n2 in 1..=self.n {
                let amp = ((n1 + 1) as f64 * n2 as f64).sqrt();
                m[(self.idx(n1 + 1, n2 - 1), self.idx(n1, n2))] = amp;
            }
        }
        m
    }

    pub fn number(&self, site: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim(), self.dim());
        for n1 in 0..=self.n {
            for n2 in 0..=self.n {
                m[(self.idx(n1, n2), self.idx(n1, n2))] = if site == 1 { n1 } else { n2 } as f64;
            }
        }
        m
    }

    pub fn hamiltonian(&self, theta: f64) -> DMatrix<f64> {
        let j = theta.cos();
        let g = 2.0 / self.n as f64 * theta.sin();
        let hop = self.hop();
        let id = DMatrix::<f64>::identity(self.dim(), self.dim());
        let mut h = -2.0 * j * (&hop + hop.transpose());
        for site in [1, 2] {
            let n = self.number(site);
            h += g / 2.0 * &n * (&n - &id);
        }
        h
    }

    pub fn embed(&self, state: &StateVector) -> DVector<nalgebra::Complex<f64>> {
        let mut v = DVector::zeros(self.dim());
        for (k, a) in state.amplitudes.iter().enumerate() {
            v[self.idx(k, self.n - k)] = nalgebra::Complex::new(a.re, a.im);
        }
        v
    }
}

pub fn dense_otoc(fock: &Fock, theta: f64, psi: &DVector<nalgebra::Complex<f64>>, t: f64) -> f64 {
    type Z = nalgebra::Complex<f64>;
    let h = fock.hamiltonian(theta);
    let eig = h.symmetric_eigen();
    let v = eig.eigenvectors.map(|x| Z::new(x, 0.0));
    let u = |t: f64| {
        let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| Z::from_polar(1.0, -e * t)));
        &v * phases * v.adjoint()
    };
    let n1 = fock.number(1).map(|x| Z::new(x, 0.0));
    let n1t = u(-t) * &n1 * u(t);
    let comm = &n1t * &n1 - &n1 * &n1t;
    (comm * psi).norm_squared()
}
