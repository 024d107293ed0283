//! Lab-frame observables of a propagated state: wavefunction, energy,
//! instantaneous-eigenstate populations, extremal energies and the beating
//! period.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::coupling::{CouplingTable, DilationTable};
use crate::disk::DiskGrid;
use crate::driving::DrivingLaw;
use crate::error::{Error, Result};
use crate::propagator::{coupling_weights, project_lab_state, PropagationBasis, SpectralState};
use crate::spectrum::PhaseSpectrum;

pub const DEFAULT_PHASE_SAMPLES: usize = 64;
pub const MIN_SAMPLES_PER_PERIOD: f64 = 40.0;
const IMAGINARY_RESIDUE_TOL: f64 = 1e-9;

/// Ψ(x, y, t) = (ab)^{−1/2} exp(i(ȧx²/a + ḃy²/b)/2) Σ c Φ(r', φ') with
/// r' = √(x²/a² + y²/b²), φ' = atan2(y/b, x/a).
pub fn lab_wavefunction(
    state: &SpectralState,
    driving: &DrivingLaw,
    grid: &DiskGrid,
    table: &CouplingTable,
    points: &[(f64, f64)],
) -> Result<Vec<Complex64>> {
    let t = state.t;
    let (a, b) = (driving.a(t), driving.b(t));
    let (ad, bd) = (driving.a_dot(t), driving.b_dot(t));
    points
        .iter()
        .map(|&(x, y)| {
            let (eta, xi) = (x / a, y / b);
            let r = eta.hypot(xi);
            if r > 1.0 + 1e-12 {
                return Err(Error::OutsideDomain { x, y });
            }
            let phase = 0.5 * (ad * x * x / a + bd * y * y / b);
            let inner = grid.evaluate(&table.zeros, &state.coeffs, r.min(1.0), xi.atan2(eta));
            Ok(inner * Complex64::from_polar(1.0 / (a * b).sqrt(), phase))
        })
        .collect()
}

/// E(t) = ⟨Ψ|−½Δ|Ψ⟩ by quadrature on the scaled disk, with the quadratic
/// phase differentiated analytically.
pub fn energy_expectation(state: &SpectralState, driving: &DrivingLaw, grid: &DiskGrid) -> Result<f64> {
    if state.index != grid.index {
        return Err(Error::BasisMismatch("state and grid bases differ".into()));
    }
    let t = state.t;
    let (a, b) = (driving.a(t), driving.b(t));
    let (alpha, beta) = (a * driving.a_dot(t), b * driving.b_dot(t));
    let f = grid.synthesize_fields(&state.coeffs);
    let i = Complex64::new(0.0, 1.0);
    let mut acc = Complex64::new(0.0, 0.0);
    for j in 0..grid.radii.len() {
        let mut row = Complex64::new(0.0, 0.0);
        for l in 0..grid.n_phi {
            let p = j * grid.n_phi + l;
            let (eta, xi) = grid.point(j, l);
            let lam = f.value[p];
            let xx = f.d_eta_eta[p] + 2.0 * i * alpha * eta * f.d_eta[p] + i * alpha * lam - alpha * alpha * eta * eta * lam;
            let yy = f.d_xi_xi[p] + 2.0 * i * beta * xi * f.d_xi[p] + i * beta * lam - beta * beta * xi * xi * lam;
            row += lam.conj() * (xx / (a * a) + yy / (b * b));
        }
        acc += row * grid.weight(j);
    }
    let e = -0.5 * acc;
    if e.im.abs() > IMAGINARY_RESIDUE_TOL * e.re.abs().max(1.0) {
        return Err(Error::Quadrature { estimate: e.im });
    }
    Ok(e.re)
}

/// Matrix form of the lab energy on a propagation basis:
/// E = u†[g1 F1 + g3 F35 + (ȧ²+ḃ²) F2 + (ȧ²−ḃ²) F46 − i s D_r − i d D_a] u,
/// s = (ȧ/a + ḃ/b)/2, d = (ȧ/a − ḃ/b)/2.
#[derive(Debug, Clone)]
pub struct EnergyOperator {
    pub basis: PropagationBasis,
    driving: DrivingLaw,
    /// F1, F2, F35, F46, D_r, D_a on the reduced basis.
    mats: [Vec<f64>; 6],
}

impl EnergyOperator {
    pub fn new(table: &CouplingTable, dilation: &DilationTable, driving: &DrivingLaw, basis: PropagationBasis) -> Self {
        let idx = table.index();
        let mats = std::array::from_fn(|which| {
            basis.reduce_operator(|i, j| {
                let (n, m) = idx.from_linear(i).unwrap();
                let (n2, m2) = idx.from_linear(j).unwrap();
                match which {
                    0..=3 => coupling_weights(table, n, m, n2, m2)[which],
                    4 => dilation.element(true, n, m, n2, m2),
                    _ => dilation.element(false, n, m, n2, m2),
                }
            })
        });
        Self { basis, driving: *driving, mats }
    }

    pub fn energy(&self, t: f64, u: &[Complex64]) -> f64 {
        let d = &self.driving;
        let (a, b, ad, bd) = (d.a(t), d.b(t), d.a_dot(t), d.b_dot(t));
        let g = d.g_functions(t);
        let s = 0.5 * (ad / a + bd / b);
        let dd = 0.5 * (ad / a - bd / b);
        let weights = [g.g1, ad * ad + bd * bd, g.g3, ad * ad - bd * bd];
        let n = u.len();
        let mut real_part = 0.0;
        let mut anti = 0.0;
        for r in 0..n {
            for c in 0..n {
                let k = r * n + c;
                let sym: f64 = (0..4).map(|w| weights[w] * self.mats[w][k]).sum();
                let asym = s * self.mats[4][k] + dd * self.mats[5][k];
                let z = u[r].conj() * u[c];
                real_part += sym * z.re;
                // −i z A with A antisymmetric: real part is A·Im z.
                anti += asym * z.im;
            }
        }
        real_part + anti
    }
}

/// Overlap vectors of tracked instantaneous eigenstates, cached on a
/// uniform ζ grid and interpolated trigonometrically in between.
#[derive(Debug, Clone)]
pub struct PopulationProjector {
    pub labels: Vec<usize>,
    pub n_phase: usize,
    pub spectrum: PhaseSpectrum,
    driving: DrivingLaw,
    /// [label][k] reduced overlap vector at ζ_k = k/n_phase.
    vectors: Vec<Vec<Vec<Complex64>>>,
    /// [label][harmonic][component] Fourier coefficients of the vectors.
    harmonics: Vec<Vec<Vec<Complex64>>>,
}

impl PopulationProjector {
    pub fn build(
        driving: &DrivingLaw,
        labels: &[usize],
        n_phase: usize,
        grid: &DiskGrid,
        basis: &PropagationBasis,
    ) -> Result<Self> {
        if n_phase < 4 {
            return Err(Error::InvalidParameter("need at least 4 phase samples".into()));
        }
        let spectrum = PhaseSpectrum::build(driving, labels, n_phase)?;
        let vectors = labels
            .iter()
            .map(|&label| {
                (0..n_phase)
                    .into_par_iter()
                    .map(|k| {
                        let zeta = k as f64 / n_phase as f64;
                        let eig = spectrum.eigenstate_at(label, zeta)?;
                        let full = project_lab_state(&eig, driving, driving.time_at_phase(zeta), grid)?;
                        Ok(basis.reduce(&full))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n_phase);
        let harmonics = vectors
            .iter()
            .map(|per_phase| {
                let dim = per_phase[0].len();
                let mut out = vec![vec![Complex64::new(0.0, 0.0); dim]; n_phase];
                let mut buf = vec![Complex64::new(0.0, 0.0); n_phase];
                for c in 0..dim {
                    for (k, v) in per_phase.iter().enumerate() {
                        buf[k] = v[c];
                    }
                    fft.process(&mut buf);
                    for (h, x) in buf.iter().enumerate() {
                        out[h][c] = x / n_phase as f64;
                    }
                }
                out
            })
            .collect();
        Ok(Self { labels: labels.to_vec(), n_phase, spectrum, driving: *driving, vectors, harmonics })
    }

    fn slot(&self, label: usize) -> Result<usize> {
        self.labels.iter().position(|&l| l == label).ok_or(Error::UnknownLabel(label))
    }

    /// Overlap vector of `label` at time t.
    pub fn vector_at(&self, label: usize, t: f64) -> Result<Vec<Complex64>> {
        let s = self.slot(label)?;
        let zeta = self.driving.phase(t);
        let pos = zeta * self.n_phase as f64;
        let nearest = pos.round();
        if (pos - nearest).abs() < 1e-9 {
            return Ok(self.vectors[s][nearest as usize % self.n_phase].clone());
        }
        let n = self.n_phase;
        let dim = self.vectors[s][0].len();
        let mut out = vec![Complex64::new(0.0, 0.0); dim];
        for (h, coeffs) in self.harmonics[s].iter().enumerate() {
            // Symmetric frequency assignment; the Nyquist term is split.
            let freq = if 2 * h < n { h as f64 } else { h as f64 - n as f64 };
            let w = if 2 * h == n { 0.5 } else { 1.0 };
            let rot = Complex64::from_polar(w, 2.0 * PI * freq * zeta);
            let rot_mirror = Complex64::from_polar(w, -2.0 * PI * freq * zeta);
            for (o, c) in out.iter_mut().zip(coeffs) {
                *o += c * rot;
                if 2 * h == n {
                    *o += c * rot_mirror;
                }
            }
        }
        Ok(out)
    }

    /// p_i(t) = |⟨Ψ_i(t)|Ψ(t)⟩| for reduced coefficients u.
    pub fn population(&self, label: usize, t: f64, u: &[Complex64]) -> Result<f64> {
        let v = self.vector_at(label, t)?;
        Ok(v.iter().zip(u).map(|(a, b)| a.conj() * b).sum::<Complex64>().norm())
    }

    pub fn populations(&self, t: f64, u: &[Complex64]) -> Result<BTreeMap<usize, f64>> {
        self.labels.iter().map(|&l| Ok((l, self.population(l, t, u)?))).collect()
    }

    /// Σ_i E_i(ζ) p_i² and Σ_i p_i² over the projector's labels.
    pub fn spectral_energy(&self, t: f64, u: &[Complex64]) -> Result<(f64, f64)> {
        let zeta = self.driving.phase(t);
        let mut e = 0.0;
        let mut w = 0.0;
        for &label in &self.labels {
            let p2 = self.population(label, t, u)?.powi(2);
            e += self.spectrum.energy(label, zeta)? * p2;
            w += p2;
        }
        Ok((e, w))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub omega: f64,
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub populations: BTreeMap<usize, Vec<f64>>,
    pub e_max: f64,
    pub e_min: f64,
    pub t_b: Option<f64>,
}

impl ObservableSeries {
    pub fn new(omega: f64) -> Self {
        Self {
            omega,
            times: Vec::new(),
            energy: Vec::new(),
            populations: BTreeMap::new(),
            e_max: f64::NEG_INFINITY,
            e_min: f64::INFINITY,
            t_b: None,
        }
    }

    pub fn push(&mut self, t: f64, energy: f64, populations: &BTreeMap<usize, f64>) {
        self.times.push(t);
        self.energy.push(energy);
        self.e_max = self.e_max.max(energy);
        self.e_min = self.e_min.min(energy);
        for (&label, &p) in populations {
            self.populations.entry(label).or_default().push(p);
        }
    }

    pub fn samples_per_period(&self) -> f64 {
        if self.times.len() < 2 {
            return 0.0;
        }
        let span = self.times[self.times.len() - 1] - self.times[0];
        (self.times.len() - 1) as f64 / (span * self.omega / (2.0 * PI))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtremalEnergies {
    pub e_max: f64,
    pub e_min: f64,
    /// Set when the series is sampled more coarsely than 40 points per period.
    pub warning: Option<String>,
}

pub fn extremal_energies(series: &ObservableSeries) -> Result<ExtremalEnergies> {
    if series.energy.is_empty() {
        return Err(Error::InvalidParameter("empty energy series".into()));
    }
    let e_max = series.energy.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e_min = series.energy.iter().copied().fold(f64::INFINITY, f64::min);
    let spp = series.samples_per_period();
    let warning = (spp < MIN_SAMPLES_PER_PERIOD)
        .then(|| format!("only {spp:.1} samples per driving period; extremes may be underestimated"));
    Ok(ExtremalEnergies { e_max, e_min, warning })
}

/// Dominant slow period of p_i(t): the largest spectral peak below ω/4 of
/// the Hann-windowed, mean-free series, if it exceeds five times the median
/// spectral magnitude in that band.
pub fn beating_period(series: &ObservableSeries, label: usize) -> Result<Option<f64>> {
    let p = series.populations.get(&label).ok_or(Error::UnknownLabel(label))?;
    let n = p.len();
    if n < 16 {
        return Ok(None);
    }
    let dt = (series.times[n - 1] - series.times[0]) / (n - 1) as f64;
    let mean = p.iter().sum::<f64>() / n as f64;
    if p.iter().all(|x| (x - mean).abs() < 1e-12) {
        return Ok(None);
    }
    // Zero padding to 4n refines the frequency grid for the peak position.
    let len = (4 * n).next_power_of_two();
    let mut buf: Vec<Complex64> = (0..len)
        .map(|j| {
            if j < n {
                let w = 0.5 - 0.5 * (2.0 * PI * j as f64 / (n - 1) as f64).cos();
                Complex64::new((p[j] - mean) * w, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let df = 1.0 / (len as f64 * dt);
    let f_cut = series.omega / 4.0 / (2.0 * PI);
    // Skip the window's main lobe around zero frequency.
    let first = (2.0 * len as f64 / n as f64).ceil() as usize;
    let last = ((f_cut / df).floor() as usize).min(len / 2);
    if last <= first + 2 {
        return Ok(None);
    }
    let band: Vec<f64> = buf[first..=last].iter().map(|c| c.norm()).collect();
    let (peak_pos, peak) = band.iter().enumerate().fold((0, 0.0), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let mut sorted = band.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    if peak <= 5.0 * median || peak_pos == 0 || peak_pos + 1 == band.len() {
        return Ok(None);
    }
    // Parabolic refinement on the log magnitude.
    let (l, c, r) = (band[peak_pos - 1].ln(), band[peak_pos].ln(), band[peak_pos + 1].ln());
    let shift = 0.5 * (l - r) / (l - 2.0 * c + r);
    let f = (first as f64 + peak_pos as f64 + shift) * df;
    Ok((f > 0.0).then(|| 1.0 / f))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(omega: f64, beat: f64, periods: f64) -> ObservableSeries {
        let mut s = ObservableSeries::new(omega);
        let t_drive = 2.0 * PI / omega;
        let n = (periods * 64.0) as usize;
        for j in 0..=n {
            let t = j as f64 * t_drive / 64.0;
            let p = 0.9 + 0.05 * (2.0 * PI * t / beat).cos() + 0.01 * (omega * t).sin();
            let mut pops = BTreeMap::new();
            pops.insert(4, p);
            s.push(t, 10.0 + p, &pops);
        }
        s
    }

    #[test]
    fn beating_period_of_a_synthetic_signal() {
        let s = synthetic(5.0, 20.0, 200.0);
        let tb = beating_period(&s, 4).unwrap().unwrap();
        assert!((tb / 20.0 - 1.0).abs() < 0.02, "{tb}");
    }

    #[test]
    fn flat_series_has_no_beating() {
        let mut s = ObservableSeries::new(5.0);
        let mut pops = BTreeMap::new();
        pops.insert(1, 1.0);
        for j in 0..1000 {
            s.push(j as f64 * 0.02, 4.0, &pops);
        }
        assert_eq!(beating_period(&s, 1).unwrap(), None);
        assert!(beating_period(&s, 2).is_err());
    }

    #[test]
    fn extremes_and_sampling_warning() {
        let s = synthetic(5.0, 20.0, 10.0);
        let ex = extremal_energies(&s).unwrap();
        assert!(ex.warning.is_none());
        assert!(ex.e_max >= ex.e_min);
        let mut coarse = ObservableSeries::new(5.0);
        let pops = BTreeMap::new();
        for j in 0..20 {
            coarse.push(j as f64 * 0.2, 1.0, &pops);
        }
        assert!(extremal_energies(&coarse).unwrap().warning.is_some());
        assert!(extremal_energies(&ObservableSeries::new(1.0)).is_err());
    }
}
