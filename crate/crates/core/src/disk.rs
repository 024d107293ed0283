//! Polar quadrature grid on the unit disk: Gauss–Legendre in r, uniform in φ,
//! with FFT-based projection onto and synthesis from the circular basis.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::coupling::{basis_normalization, BasisIndex};
use crate::error::{Error, Result};
use crate::special::bessel::{bessel_j_orders, signed_order, BesselZeroTable};
use crate::special::quadrature::GaussLegendre;

pub const DEFAULT_RADIAL_NODES: usize = 96;
pub const DEFAULT_ANGULAR_NODES: usize = 256;

/// Fields of a basis expansion synthesized on the grid.
#[derive(Debug, Clone)]
pub struct GridFields {
    pub value: Vec<Complex64>,
    pub d_eta: Vec<Complex64>,
    pub d_xi: Vec<Complex64>,
    pub d_eta_eta: Vec<Complex64>,
    pub d_xi_xi: Vec<Complex64>,
}

pub struct DiskGrid {
    pub index: BasisIndex,
    pub radii: Vec<f64>,
    /// Gauss–Legendre weight times r (area element in r).
    pub radial_weights: Vec<f64>,
    pub n_phi: usize,
    /// [offset + 2][linear basis index][radial node] = N_{n,m} J_{m+offset}(k r).
    radial: Vec<Vec<Vec<f64>>>,
    wavenumbers: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for DiskGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiskGrid")
            .field("index", &self.index)
            .field("n_r", &self.radii.len())
            .field("n_phi", &self.n_phi)
            .finish()
    }
}

impl DiskGrid {
    pub fn new(index: BasisIndex, zeros: &BesselZeroTable, n_r: usize, n_phi: usize) -> Result<Self> {
        if n_phi < 2 * index.m_max + 6 {
            return Err(Error::InvalidParameter(format!(
                "{n_phi} angular nodes alias azimuthal numbers up to {}",
                index.m_max + 2
            )));
        }
        if zeros.count() < index.n_max || (zeros.max_order() as usize) < index.m_max {
            return Err(Error::BasisMismatch("zero table smaller than the basis".into()));
        }
        let (radii, w) = GaussLegendre::new(n_r).on_interval(0.0, 1.0);
        let radial_weights = radii.iter().zip(&w).map(|(r, w)| r * w).collect();
        let mut radial = vec![vec![vec![0.0; n_r]; index.len()]; 5];
        let mut wavenumbers = vec![0.0; index.len()];
        let mut buf = Vec::new();
        for i in 0..index.len() {
            let (n, m) = index.from_linear(i).unwrap();
            let k = zeros.get(m, n).unwrap();
            wavenumbers[i] = k;
            let norm = basis_normalization(k, m);
            for (j, r) in radii.iter().enumerate() {
                bessel_j_orders(m.unsigned_abs() as usize + 2, k * r, &mut buf);
                for (o, table) in radial.iter_mut().enumerate() {
                    table[i][j] = norm * signed_order(&buf, m + o as i32 - 2);
                }
            }
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            index,
            radii,
            radial_weights,
            n_phi,
            radial,
            wavenumbers,
            forward: planner.plan_fft_forward(n_phi),
            inverse: planner.plan_fft_inverse(n_phi),
        })
    }

    pub fn len(&self) -> usize {
        self.radii.len() * self.n_phi
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn phi(&self, l: usize) -> f64 {
        2.0 * PI * l as f64 / self.n_phi as f64
    }

    /// Scaled coordinates (η, ξ) = (r cos φ, r sin φ) of grid point (j, l),
    /// stored at j·n_phi + l.
    pub fn point(&self, j: usize, l: usize) -> (f64, f64) {
        let (s, c) = self.phi(l).sin_cos();
        (self.radii[j] * c, self.radii[j] * s)
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        (0..self.radii.len())
            .flat_map(|j| (0..self.n_phi).map(move |l| (j, l)))
            .map(|(j, l)| self.point(j, l))
            .collect()
    }

    /// Area weight of point j·n_phi + l.
    pub fn weight(&self, j: usize) -> f64 {
        self.radial_weights[j] * 2.0 * PI / self.n_phi as f64
    }

    /// ∫ conj(f) g over the disk.
    pub fn inner(&self, f: &[Complex64], g: &[Complex64]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..self.radii.len() {
            let row = j * self.n_phi..(j + 1) * self.n_phi;
            let s: Complex64 = f[row.clone()].iter().zip(&g[row]).map(|(a, b)| a.conj() * b).sum();
            acc += s * self.weight(j);
        }
        acc
    }

    fn angular_slot(&self, m: i32) -> usize {
        m.rem_euclid(self.n_phi as i32) as usize
    }

    /// Coefficients ⟨Φ_{n,m}|f⟩ for grid values of f.
    pub fn project(&self, values: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(values.len(), self.len());
        let mut out = vec![Complex64::new(0.0, 0.0); self.index.len()];
        let mut row = vec![Complex64::new(0.0, 0.0); self.n_phi];
        // ⟨Θ_m|·⟩ = √(2π)/n_phi · FFT.
        let scale = (2.0 * PI).sqrt() / self.n_phi as f64;
        for j in 0..self.radii.len() {
            row.copy_from_slice(&values[j * self.n_phi..(j + 1) * self.n_phi]);
            self.forward.process(&mut row);
            let w = self.radial_weights[j] * scale;
            for (i, slot) in out.iter_mut().enumerate() {
                let m = self.index.from_linear(i).unwrap().1;
                *slot += row[self.angular_slot(m)] * (w * self.radial[2][i][j]);
            }
        }
        out
    }

    fn synthesize_with(&self, coeffs: &[Complex64], offset: i32, factor: impl Fn(f64) -> f64) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.len()];
        let mut row = vec![Complex64::new(0.0, 0.0); self.n_phi];
        let scale = 1.0 / (2.0 * PI).sqrt();
        let table = &self.radial[(offset + 2) as usize];
        let factors: Vec<f64> = self.wavenumbers.iter().map(|k| factor(*k) * scale).collect();
        for j in 0..self.radii.len() {
            row.iter_mut().for_each(|x| *x = Complex64::new(0.0, 0.0));
            for (i, c) in coeffs.iter().enumerate() {
                if *c == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let m = self.index.from_linear(i).unwrap().1;
                row[self.angular_slot(m + offset)] += c * (factors[i] * table[i][j]);
            }
            self.inverse.process(&mut row);
            out[j * self.n_phi..(j + 1) * self.n_phi].copy_from_slice(&row);
        }
        out
    }

    /// Λ = Σ c_{n,m} Φ_{n,m} on the grid.
    pub fn synthesize(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        self.synthesize_with(coeffs, 0, |_| 1.0)
    }

    /// Λ and its first and second Cartesian derivatives, from
    /// ∂_z(J_m e^{imφ}) = (k/2) J_{m−1} e^{i(m−1)φ} and
    /// ∂_z̄(J_m e^{imφ}) = −(k/2) J_{m+1} e^{i(m+1)φ}.
    pub fn synthesize_fields(&self, coeffs: &[Complex64]) -> GridFields {
        let value = self.synthesize(coeffs);
        let dz = self.synthesize_with(coeffs, -1, |k| 0.5 * k);
        let dzb = self.synthesize_with(coeffs, 1, |k| -0.5 * k);
        let dzz = self.synthesize_with(coeffs, -2, |k| 0.25 * k * k);
        let dzbzb = self.synthesize_with(coeffs, 2, |k| 0.25 * k * k);
        let i = Complex64::new(0.0, 1.0);
        let n = value.len();
        let mut f = GridFields {
            d_eta: vec![Complex64::new(0.0, 0.0); n],
            d_xi: vec![Complex64::new(0.0, 0.0); n],
            d_eta_eta: vec![Complex64::new(0.0, 0.0); n],
            d_xi_xi: vec![Complex64::new(0.0, 0.0); n],
            value,
        };
        let lap = self.synthesize_with(coeffs, 0, |k| -0.25 * k * k);
        for p in 0..n {
            f.d_eta[p] = dz[p] + dzb[p];
            f.d_xi[p] = i * (dz[p] - dzb[p]);
            f.d_eta_eta[p] = dzz[p] + 2.0 * lap[p] + dzbzb[p];
            f.d_xi_xi[p] = -dzz[p] + 2.0 * lap[p] - dzbzb[p];
        }
        f
    }

    /// Direct evaluation of Σ c Φ at scaled polar coordinates.
    pub fn evaluate(&self, zeros: &BesselZeroTable, coeffs: &[Complex64], r: f64, phi: f64) -> Complex64 {
        let mut buf = Vec::new();
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, c) in coeffs.iter().enumerate() {
            if *c == Complex64::new(0.0, 0.0) {
                continue;
            }
            let (n, m) = self.index.from_linear(i).unwrap();
            let k = zeros.get(m, n).unwrap();
            bessel_j_orders(m.unsigned_abs() as usize, k * r, &mut buf);
            let radial = basis_normalization(k, m) * signed_order(&buf, m);
            acc += c * Complex64::from_polar(radial / (2.0 * PI).sqrt(), m as f64 * phi);
        }
        acc
    }
}
