//! Time evolution of the circular-basis coefficients under the transformed
//! Hamiltonian H(t) = g1 F1 + g2 F2 + g3 F35 + g4 F46.
//!
//! The breathing drive conserves both reflection parities, so propagation
//! runs in one symmetry sector: azimuthal numbers of one parity, combined as
//! (Φ_{n,m} ± Φ_{n,−m})/√2 with m ≥ 0. An optional wavenumber cutoff
//! k_{m,n} ≤ k_cut drops the stiff top of the spectrum.

use num_complex::Complex64;

use crate::coupling::{BasisIndex, CouplingTable, Tensor};
use crate::disk::DiskGrid;
use crate::driving::{DrivingLaw, GFunctions};
use crate::error::{Error, Result};
use crate::ode::{Dopri5, StepStats, Tolerances};
use crate::spectrum::{EllipticEigenstate, Symmetry};

pub const DEFAULT_NORM_TOL: f64 = 1e-6;
/// Weight of the initial state allowed outside the table. The wall-velocity
/// phase of a fast drive pushes N = M = 20 past 1e-6 from ω ≈ 14 on.
pub const DEFAULT_DISCARD_THRESHOLD: f64 = 1e-5;

/// Coefficients c_{n,m}(t) over the full table basis.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralState {
    pub t: f64,
    pub coeffs: Vec<Complex64>,
    pub index: BasisIndex,
}

impl SpectralState {
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Weight on azimuthal numbers of the given parity.
    pub fn parity_weight(&self, even_m: bool) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(i, _)| (self.index.from_linear(*i).unwrap().1 % 2 == 0) == even_m)
            .map(|(_, c)| c.norm_sqr())
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationConfig {
    pub tolerances: Tolerances,
    /// Duration of the run, starting from the initial state's time.
    pub t_end: f64,
    pub sample_dt: f64,
    pub norm_tol: f64,
    pub max_steps: usize,
}

impl PropagationConfig {
    pub fn new(t_end: f64, sample_dt: f64) -> Self {
        Self { tolerances: Tolerances::default(), t_end, sample_dt, norm_tol: DEFAULT_NORM_TOL, max_steps: usize::MAX }
    }

    pub fn validate(&self) -> Result<()> {
        self.tolerances.validate()?;
        if !(self.sample_dt > 0.0 && self.t_end.is_finite() && self.norm_tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need sample_dt > 0, finite t_end and norm_tol > 0 (got {}, {}, {})",
                self.sample_dt, self.t_end, self.norm_tol
            )));
        }
        Ok(())
    }

    /// Sample times relative to the start, the last one exactly at t_end.
    pub fn sample_offsets(&self) -> Vec<f64> {
        let count = (self.t_end.abs() / self.sample_dt - 1e-9).ceil().max(0.0) as usize;
        let sign = self.t_end.signum();
        let mut out: Vec<f64> = (0..=count).map(|j| sign * (j as f64 * self.sample_dt).min(self.t_end.abs())).collect();
        out.dedup();
        out
    }
}

/// Weights of (g1, g2, g3, g4) in the matrix element H_{(n,m),(n',m')}.
pub fn coupling_weights(table: &CouplingTable, n: usize, m: i32, n2: usize, m2: i32) -> [f64; 4] {
    let get = |t: Tensor| table.get(t, n, m, n2).unwrap_or(0.0);
    if m2.unsigned_abs() as usize > table.m_max {
        return [0.0; 4];
    }
    if m2 == m {
        [get(Tensor::F1), get(Tensor::F2), 0.0, 0.0]
    } else if m2 == m - 2 {
        [0.0, 0.0, get(Tensor::F3), get(Tensor::F4)]
    } else if m2 == m + 2 {
        [0.0, 0.0, get(Tensor::F5), get(Tensor::F6)]
    } else {
        [0.0; 4]
    }
}

fn combine(w: [f64; 4], g: &GFunctions) -> f64 {
    w[0] * g.g1 + w[1] * g.g2 + w[2] * g.g3 + w[3] * g.g4
}

/// Dense H(t) over the full table basis, row-major.
pub fn assemble_hamiltonian(table: &CouplingTable, g: &GFunctions) -> Vec<f64> {
    let idx = table.index();
    let dim = idx.len();
    let mut h = vec![0.0; dim * dim];
    for i in 0..dim {
        let (n, m) = idx.from_linear(i).unwrap();
        for m2 in [m - 2, m, m + 2] {
            for n2 in 1..=table.n_max {
                if let Some(j) = idx.linear(n2, m2) {
                    h[i * dim + j] = combine(coupling_weights(table, n, m, n2, m2), g);
                }
            }
        }
    }
    h
}

/// ċ = −i H(t) c over the full table basis.
pub fn rhs(t: f64, state: &SpectralState, table: &CouplingTable, driving: &DrivingLaw) -> Result<Vec<Complex64>> {
    if state.index != table.index() {
        return Err(Error::BasisMismatch(format!(
            "state basis {:?} differs from table basis {:?}",
            state.index,
            table.index()
        )));
    }
    let g = driving.g_functions(t);
    let idx = state.index;
    let mut out = vec![Complex64::new(0.0, 0.0); idx.len()];
    for (i, slot) in out.iter_mut().enumerate() {
        let (n, m) = idx.from_linear(i).unwrap();
        let mut acc = Complex64::new(0.0, 0.0);
        for m2 in [m - 2, m, m + 2] {
            for n2 in 1..=table.n_max {
                if let Some(j) = idx.linear(n2, m2) {
                    acc += state.coeffs[j] * combine(coupling_weights(table, n, m, n2, m2), &g);
                }
            }
        }
        *slot = Complex64::new(0.0, -1.0) * acc;
    }
    Ok(out)
}

/// Symmetry-adapted, optionally cut-off propagation basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationBasis {
    pub index: BasisIndex,
    /// `None` for a plain m-parity block holding both reflection sectors.
    pub symmetry: Option<Symmetry>,
    pub k_cut: Option<f64>,
    /// (n, m) of each reduced basis vector; m ≥ 0 for a symmetry sector.
    pub members: Vec<(usize, i32)>,
    /// Full-basis components (index, weight) of each member.
    components: Vec<Vec<(usize, f64)>>,
}

impl PropagationBasis {
    pub fn new(table: &CouplingTable, symmetry: Symmetry, k_cut: Option<f64>) -> Result<Self> {
        let index = table.index();
        // c_{n,−m} = π_y c_{n,m}; m parity even iff π_x = π_y.
        let sigma = symmetry.pi_y as f64;
        let start = match (symmetry.even_m(), symmetry.cosine_type()) {
            (true, true) => 0,
            (true, false) => 2,
            (false, _) => 1,
        };
        let mut members = Vec::new();
        let mut components = Vec::new();
        for m in (start..=table.m_max as i32).step_by(2) {
            for n in 1..=table.n_max {
                if k_cut.is_some_and(|kc| table.wavenumber(n, m) > kc) {
                    continue;
                }
                members.push((n, m));
                components.push(if m == 0 {
                    vec![(index.linear(n, 0).unwrap(), 1.0)]
                } else {
                    let w = std::f64::consts::FRAC_1_SQRT_2;
                    vec![(index.linear(n, m).unwrap(), w), (index.linear(n, -m).unwrap(), sigma * w)]
                });
            }
        }
        if members.is_empty() {
            return Err(Error::InvalidParameter(format!("cutoff {k_cut:?} leaves an empty basis")));
        }
        Ok(Self { index, symmetry: Some(symmetry), k_cut, members, components })
    }

    /// All (n, m) with m of the given parity, without the reflection
    /// reduction. Used to check that the sectors really decouple.
    pub fn parity_block(table: &CouplingTable, even_m: bool, k_cut: Option<f64>) -> Result<Self> {
        let index = table.index();
        let mut members = Vec::new();
        let mut components = Vec::new();
        let mm = table.m_max as i32;
        for m in (-mm..=mm).filter(|m| (m % 2 == 0) == even_m) {
            for n in 1..=table.n_max {
                if k_cut.is_some_and(|kc| table.wavenumber(n, m) > kc) {
                    continue;
                }
                members.push((n, m));
                components.push(vec![(index.linear(n, m).unwrap(), 1.0)]);
            }
        }
        if members.is_empty() {
            return Err(Error::InvalidParameter(format!("cutoff {k_cut:?} leaves an empty basis")));
        }
        Ok(Self { index, symmetry: None, k_cut, members, components })
    }

    pub fn dim(&self) -> usize {
        self.members.len()
    }

    /// Projection of full-basis coefficients onto the reduced basis.
    pub fn reduce(&self, full: &[Complex64]) -> Vec<Complex64> {
        self.components.iter().map(|comp| comp.iter().map(|&(i, w)| full[i] * w).sum()).collect()
    }

    pub fn expand(&self, reduced: &[Complex64]) -> Vec<Complex64> {
        let mut full = vec![Complex64::new(0.0, 0.0); self.index.len()];
        for (comp, u) in self.components.iter().zip(reduced) {
            for &(i, w) in comp {
                full[i] += u * w;
            }
        }
        full
    }

    /// Reduced matrix of a full-basis operator given by its elements.
    pub fn reduce_operator(&self, element: impl Fn(usize, usize) -> f64) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; d * d];
        for a in 0..d {
            for b in 0..d {
                let (ma, mb) = (self.members[a].1, self.members[b].1);
                if (ma - mb).abs() > 2 && (ma + mb > 2 || ma.min(mb) < 0) {
                    continue;
                }
                let mut acc = 0.0;
                for &(i, wi) in &self.components[a] {
                    for &(j, wj) in &self.components[b] {
                        acc += wi * wj * element(i, j);
                    }
                }
                out[a * d + b] = acc;
            }
        }
        out
    }
}

/// Propagator for one symmetry sector.
#[derive(Debug, Clone)]
pub struct Propagator {
    pub basis: PropagationBasis,
    pub driving: DrivingLaw,
    /// Reduced matrices multiplying g1..g4.
    mats: [Vec<f64>; 4],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationReport {
    pub stats: StepStats,
    pub max_norm_drift: f64,
}

impl Propagator {
    pub fn new(table: &CouplingTable, driving: &DrivingLaw, basis: PropagationBasis) -> Result<Self> {
        if basis.index != table.index() {
            return Err(Error::BasisMismatch("propagation basis built for another table".into()));
        }
        let idx = table.index();
        let mats = std::array::from_fn(|which| {
            basis.reduce_operator(|i, j| {
                let (n, m) = idx.from_linear(i).unwrap();
                let (n2, m2) = idx.from_linear(j).unwrap();
                coupling_weights(table, n, m, n2, m2)[which]
            })
        });
        Ok(Self { basis, driving: *driving, mats })
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Reduced H(t), row-major.
    pub fn hamiltonian(&self, t: f64, out: &mut Vec<f64>) {
        let g = self.driving.g_functions(t);
        let gs = [g.g1, g.g2, g.g3, g.g4];
        out.clear();
        out.extend(self.mats[0].iter().map(|x| x * gs[0]));
        for (mat, gk) in self.mats.iter().zip(gs).skip(1) {
            if gk != 0.0 {
                out.iter_mut().zip(mat).for_each(|(o, x)| *o += gk * x);
            }
        }
    }

    /// Largest |eigenvalue| bound of H(t) by Gershgorin, a rough stiffness
    /// indicator.
    pub fn spectral_radius_bound(&self, t: f64) -> f64 {
        let mut h = Vec::new();
        self.hamiltonian(t, &mut h);
        let d = self.dim();
        (0..d).map(|i| h[i * d..(i + 1) * d].iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// Runs from (t0, u0) for `config.t_end`, calling `observe` at every sample
    /// (including t0) with the reduced coefficients.
    pub fn run(
        &self,
        t0: f64,
        u0: &[Complex64],
        config: &PropagationConfig,
        mut observe: impl FnMut(f64, &[Complex64]) -> Result<()>,
    ) -> Result<PropagationReport> {
        config.validate()?;
        if u0.len() != self.dim() {
            return Err(Error::BasisMismatch(format!("state has {} entries, basis {}", u0.len(), self.dim())));
        }
        let d = self.dim();
        let mut h = Vec::with_capacity(d * d);
        let f = |t: f64, u: &[Complex64], du: &mut [Complex64]| {
            self.hamiltonian(t, &mut h);
            for (i, slot) in du.iter_mut().enumerate() {
                let row = &h[i * d..(i + 1) * d];
                let mut re = 0.0;
                let mut im = 0.0;
                for (x, c) in row.iter().zip(u) {
                    re += x * c.re;
                    im += x * c.im;
                }
                // −i (re + i im)
                *slot = Complex64::new(im, -re);
            }
        };
        let norm0 = norm(u0);
        let mut ode = Dopri5::new(f, t0, u0.to_vec(), config.tolerances)?;
        ode.max_steps = config.max_steps;
        let mut max_drift = 0.0f64;
        for offset in config.sample_offsets() {
            let t = t0 + offset;
            ode.advance_to(t)?;
            let drift = (norm(ode.y()) - norm0).abs();
            max_drift = max_drift.max(drift);
            if drift > config.norm_tol {
                return Err(Error::NormDrift { t, drift, tol: config.norm_tol });
            }
            observe(t, ode.y())?;
        }
        Ok(PropagationReport { stats: ode.stats, max_norm_drift: max_drift })
    }

    /// Convenience wrapper returning full-basis states at the sample times.
    pub fn propagate(&self, initial: &SpectralState, config: &PropagationConfig) -> Result<Vec<SpectralState>> {
        let u0 = self.basis.reduce(&initial.coeffs);
        let mut out = Vec::new();
        self.run(initial.t, &u0, config, |t, u| {
            out.push(SpectralState { t, coeffs: self.basis.expand(u), index: self.basis.index });
            Ok(())
        })?;
        Ok(out)
    }
}

fn norm(u: &[Complex64]) -> f64 {
    u.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Propagates in the sector of the initial state, full basis, no cutoff.
pub fn propagate(
    initial: &SpectralState,
    symmetry: Symmetry,
    driving: &DrivingLaw,
    table: &CouplingTable,
    config: &PropagationConfig,
) -> Result<Vec<SpectralState>> {
    let basis = PropagationBasis::new(table, symmetry, None)?;
    Propagator::new(table, driving, basis)?.propagate(initial, config)
}

/// ⟨Φ_{n,m}| √(ab) e^{−iθ} ψ(aη, bξ)⟩ with θ = (ȧaη² + ḃbξ²)/2 at time t:
/// the circular-basis image of a lab-frame state ψ of the ellipse (a(t), b(t)).
pub fn project_lab_state(eig: &EllipticEigenstate, driving: &DrivingLaw, t: f64, grid: &DiskGrid) -> Result<Vec<Complex64>> {
    let values = transformed_values(eig, driving, t, grid)?;
    Ok(grid.project(&values))
}

fn transformed_values(eig: &EllipticEigenstate, driving: &DrivingLaw, t: f64, grid: &DiskGrid) -> Result<Vec<Complex64>> {
    let (a, b) = (eig.geometry.a, eig.geometry.b);
    let expected = driving.geometry_at(t);
    if (a - expected.a).abs() > 1e-12 * a || (b - expected.b).abs() > 1e-12 * b {
        return Err(Error::InvalidParameter(format!(
            "eigenstate geometry ({a}, {b}) differs from the driven geometry ({}, {}) at t = {t}",
            expected.a, expected.b
        )));
    }
    let (alpha, beta) = (driving.a_dot(t) * a, driving.b_dot(t) * b);
    let scale = (a * b).sqrt();
    let mut values = Vec::with_capacity(grid.len());
    for j in 0..grid.radii.len() {
        for l in 0..grid.n_phi {
            let (eta, xi) = grid.point(j, l);
            let psi = eig.evaluate(a * eta, b * xi)?;
            let theta = 0.5 * (alpha * eta * eta + beta * xi * xi);
            values.push(Complex64::from_polar(scale * psi, -theta));
        }
    }
    Ok(values)
}

#[derive(Debug, Clone)]
pub struct PreparedState {
    /// Normalized coefficients over the full table basis.
    pub state: SpectralState,
    /// 1 − ‖c‖² of the raw projection onto the table basis.
    pub discarded_weight: f64,
    /// Raw weight outside the initial state's symmetry sector (quadrature noise).
    pub sector_leak: f64,
}

/// Initial coefficients c(0) from an equilibrium-frame eigenstate at t = 0.
pub fn prepare_initial_state(
    eig: &EllipticEigenstate,
    driving: &DrivingLaw,
    grid: &DiskGrid,
    threshold: f64,
) -> Result<PreparedState> {
    let full = project_lab_state(eig, driving, 0.0, grid)?;
    let total: f64 = full.iter().map(|c| c.norm_sqr()).sum();
    let discarded_weight = 1.0 - total;
    if discarded_weight > threshold {
        return Err(Error::TruncationWeight { weight: discarded_weight, threshold });
    }
    let sector = eig.symmetry;
    let idx = grid.index;
    // Keep only the sector: c_{n,−m} = π_y c_{n,m}, m of the sector parity.
    let mut coeffs = vec![Complex64::new(0.0, 0.0); idx.len()];
    let mut kept = 0.0;
    for (i, slot) in coeffs.iter_mut().enumerate() {
        let (n, m) = idx.from_linear(i).unwrap();
        if (m % 2 == 0) != sector.even_m() {
            continue;
        }
        let mirror = full[idx.linear(n, -m).unwrap()] * sector.pi_y as f64;
        let v = if m == 0 && !sector.cosine_type() { Complex64::new(0.0, 0.0) } else { 0.5 * (full[i] + mirror) };
        kept += v.norm_sqr();
        *slot = v;
    }
    let n = kept.sqrt();
    coeffs.iter_mut().for_each(|c| *c /= n);
    Ok(PreparedState {
        state: SpectralState { t: 0.0, coeffs, index: idx },
        discarded_weight,
        sector_leak: (total - kept).max(0.0),
    })
}
