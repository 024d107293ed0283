//! Stroboscopic propagation for periodic driving.
//!
//! H(t) is T-periodic, so the propagators U_k = U(t0 + kT/K, t0) for one
//! period are built once and reused: u(t0 + pT + kT/K) = U_k U_K^p u(t0).
//! Each sample interval is covered by fourth-order commutator-free Magnus
//! steps
//!
//!   exp(−ih(a2 H1 + a1 H2)) exp(−ih(a1 H1 + a2 H2)),
//!
//! with H1, H2 at the Gauss points. H is real symmetric, so every factor comes
//! from one symmetric eigendecomposition and the scheme is unitary to
//! round-off regardless of the stiffness of the basis.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagator::{Propagator, DEFAULT_NORM_TOL};

pub const DEFAULT_SAMPLES_PER_PERIOD: usize = 64;
pub const DEFAULT_PERIOD_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_SUBSTEPS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FloquetConfig {
    pub samples_per_period: usize,
    /// Bound on the one-period propagator error, estimated by step doubling.
    pub tol: f64,
    /// Magnus steps per sample interval to start the doubling from.
    pub min_substeps: usize,
    pub max_substeps: usize,
    pub norm_tol: f64,
}

impl Default for FloquetConfig {
    fn default() -> Self {
        Self {
            samples_per_period: DEFAULT_SAMPLES_PER_PERIOD,
            tol: DEFAULT_PERIOD_TOL,
            min_substeps: 1,
            max_substeps: DEFAULT_MAX_SUBSTEPS,
            norm_tol: DEFAULT_NORM_TOL,
        }
    }
}

impl FloquetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_period == 0 {
            return Err(Error::InvalidParameter("samples_per_period must be positive".into()));
        }
        if !(self.tol > 0.0 && self.norm_tol > 0.0) {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        if self.min_substeps == 0 || self.min_substeps > self.max_substeps {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= min_substeps <= max_substeps, got {} and {}",
                self.min_substeps, self.max_substeps
            )));
        }
        Ok(())
    }
}

/// Complex matrix stored as separate real and imaginary parts so that all
/// products go through real matrix multiplication.
#[derive(Debug, Clone)]
struct Split {
    re: DMatrix<f64>,
    im: DMatrix<f64>,
}

impl Split {
    fn identity(d: usize) -> Self {
        Self { re: DMatrix::identity(d, d), im: DMatrix::zeros(d, d) }
    }

    /// self ← exp(−i dt H) self.
    fn apply_exp(&mut self, h: DMatrix<f64>, dt: f64) {
        let eig = SymmetricEigen::new(h);
        let v = &eig.eigenvectors;
        let mut yr = v.tr_mul(&self.re);
        let mut yi = v.tr_mul(&self.im);
        for (i, lam) in eig.eigenvalues.iter().enumerate() {
            let (s, c) = (lam * dt).sin_cos();
            let mut rr = yr.row_mut(i);
            let mut ri = yi.row_mut(i);
            for (x, y) in rr.iter_mut().zip(ri.iter_mut()) {
                let (a, b) = (*x, *y);
                *x = c * a + s * b;
                *y = c * b - s * a;
            }
        }
        self.re = v * yr;
        self.im = v * yi;
    }

    /// self · rhs.
    fn mul(&self, rhs: &Split) -> Split {
        Split {
            re: &self.re * &rhs.re - &self.im * &rhs.im,
            im: &self.re * &rhs.im + &self.im * &rhs.re,
        }
    }

    fn apply(&self, u: &[Complex64]) -> Vec<Complex64> {
        let x = DVector::from_iterator(u.len(), u.iter().map(|c| c.re));
        let y = DVector::from_iterator(u.len(), u.iter().map(|c| c.im));
        let re = &self.re * &x - &self.im * &y;
        let im = &self.im * &x + &self.re * &y;
        re.iter().zip(im.iter()).map(|(&a, &b)| Complex64::new(a, b)).collect()
    }

    /// Largest column-norm of the difference, a cheap operator-norm proxy.
    fn distance(&self, other: &Split) -> f64 {
        let dr = &self.re - &other.re;
        let di = &self.im - &other.im;
        (0..dr.ncols())
            .map(|j| (dr.column(j).norm_squared() + di.column(j).norm_squared()).sqrt())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloquetReport {
    pub substeps: usize,
    pub error_estimate: f64,
    pub max_norm_drift: f64,
}

/// Cached one-period propagators of a periodic real symmetric H(t).
#[derive(Debug, Clone)]
pub struct FloquetPropagator {
    dim: usize,
    period: f64,
    t0: f64,
    substeps: usize,
    error_estimate: f64,
    norm_tol: f64,
    /// U_k for k = 1..=K.
    samples: Vec<Split>,
}

impl FloquetPropagator {
    /// Builds U_1..U_K for a sector propagator starting at `t0`, doubling
    /// the Magnus steps per sample interval until two successive one-period
    /// propagators agree to `config.tol` in operator norm.
    pub fn build(prop: &Propagator, t0: f64, config: &FloquetConfig) -> Result<Self> {
        Self::build_with_probe(prop, t0, config, None)
    }

    /// As [`FloquetPropagator::build`], but the doubling test compares the
    /// images of `probe` only. The top of a large basis is rarely populated
    /// and converges slowly, so measuring on the state of interest is far
    /// cheaper than the operator norm.
    pub fn build_with_probe(prop: &Propagator, t0: f64, config: &FloquetConfig, probe: Option<&[Complex64]>) -> Result<Self> {
        let ham = |t: f64, out: &mut Vec<f64>| prop.hamiltonian(t, out);
        Self::build_periodic(prop.dim(), prop.driving.period(), t0, ham, config, probe)
    }

    /// Generic form: `hamiltonian(t, out)` writes the row-major real
    /// symmetric H(t) of period `period`.
    pub fn build_periodic<H>(
        dim: usize,
        period: f64,
        t0: f64,
        hamiltonian: H,
        config: &FloquetConfig,
        probe: Option<&[Complex64]>,
    ) -> Result<Self>
    where
        H: Fn(f64, &mut Vec<f64>) + Sync,
    {
        config.validate()?;
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::InvalidParameter(format!("period must be positive, got {period}")));
        }
        if let Some(v) = probe {
            if v.len() != dim {
                return Err(Error::BasisMismatch(format!("probe has {} entries, basis {dim}", v.len())));
            }
        }
        let distance = |a: &Split, b: &Split| match probe {
            Some(v) => {
                let scale = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
                a.apply(v).iter().zip(b.apply(v)).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt() / scale
            }
            None => a.distance(b),
        };
        let k_total = config.samples_per_period;
        let mut substeps = config.min_substeps;
        let mut coarse = one_period(&hamiltonian, dim, period, t0, k_total, substeps);
        let mut estimate = f64::NAN;
        while 2 * substeps <= config.max_substeps {
            substeps *= 2;
            let fine = one_period(&hamiltonian, dim, period, t0, k_total, substeps);
            estimate = distance(coarse.last().unwrap(), fine.last().unwrap());
            if estimate <= config.tol {
                return Ok(Self {
                    dim,
                    period,
                    t0,
                    substeps,
                    error_estimate: estimate,
                    norm_tol: config.norm_tol,
                    samples: fine,
                });
            }
            coarse = fine;
        }
        Err(Error::PeriodConvergence { substeps, estimate, tol: config.tol })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn error_estimate(&self) -> f64 {
        self.error_estimate
    }

    pub fn samples_per_period(&self) -> usize {
        self.samples.len()
    }

    pub fn sample_dt(&self) -> f64 {
        self.period / self.samples.len() as f64
    }

    /// Propagates `u0` (given at t0) over `periods` periods, calling `observe`
    /// at t0 and at every sample time.
    pub fn run(
        &self,
        u0: &[Complex64],
        periods: usize,
        mut observe: impl FnMut(f64, &[Complex64]) -> Result<()>,
    ) -> Result<FloquetReport> {
        if u0.len() != self.dim {
            return Err(Error::BasisMismatch(format!("state has {} entries, basis {}", u0.len(), self.dim)));
        }
        let norm = |u: &[Complex64]| u.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let norm0 = norm(u0);
        let period = self.period;
        let k_total = self.samples.len();
        let mut start = u0.to_vec();
        let mut max_drift = 0.0f64;
        observe(self.t0, &start)?;
        for p in 0..periods {
            let mut end = Vec::new();
            for (k, uk) in self.samples.iter().enumerate() {
                let t = self.t0 + p as f64 * period + (k + 1) as f64 * period / k_total as f64;
                let v = uk.apply(&start);
                let drift = (norm(&v) - norm0).abs();
                max_drift = max_drift.max(drift);
                if drift > self.norm_tol {
                    return Err(Error::NormDrift { t, drift, tol: self.norm_tol });
                }
                observe(t, &v)?;
                if k + 1 == k_total {
                    end = v;
                }
            }
            start = end;
        }
        Ok(FloquetReport { substeps: self.substeps, error_estimate: self.error_estimate, max_norm_drift: max_drift })
    }
}

/// Cumulative propagators U_1..U_K with `substeps` Magnus steps per interval.
fn one_period<H>(hamiltonian: &H, d: usize, period: f64, t0: f64, k_total: usize, substeps: usize) -> Vec<Split>
where
    H: Fn(f64, &mut Vec<f64>) + Sync,
{
    let dt = period / k_total as f64;
    let h = dt / substeps as f64;
    let r = 3f64.sqrt() / 6.0;
    let (a1, a2) = (0.25 + r, 0.25 - r);
    let intervals: Vec<Split> = (0..k_total)
        .into_par_iter()
        .map(|k| {
            let mut buf = Vec::with_capacity(d * d);
            let mut ham = |t: f64| {
                hamiltonian(t, &mut buf);
                DMatrix::from_row_slice(d, d, &buf)
            };
            let mut u = Split::identity(d);
            for s in 0..substeps {
                let tn = t0 + k as f64 * dt + s as f64 * h;
                let h1 = ham(tn + (0.5 - r) * h);
                let h2 = ham(tn + (0.5 + r) * h);
                u.apply_exp(&h1 * a1 + &h2 * a2, h);
                u.apply_exp(h1 * a2 + h2 * a1, h);
            }
            u
        })
        .collect();
    let mut out: Vec<Split> = Vec::with_capacity(k_total);
    for p in intervals {
        let next = match out.last() {
            Some(prev) => p.mul(prev),
            None => p,
        };
        out.push(next);
    }
    out
}
