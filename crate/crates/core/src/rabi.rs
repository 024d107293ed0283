//! Few-level Rabi-like model of the driven billiard.
//!
//! Levels carry their mean energy E_i and a sinusoidal shift ΔE_i(ζ) fitted
//! to the instantaneous spectrum; every pair is coupled by a·sin(ωt). The
//! model is integrated without the rotating-wave approximation.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::driving::DrivingLaw;
use crate::error::{Error, Result};
use crate::floquet::{FloquetConfig, FloquetPropagator};
use crate::observables::{beating_period, ObservableSeries, DEFAULT_PHASE_SAMPLES};
use crate::scan::{ScanMetadata, ScanResult, ScanRow, DEFAULT_BEAT_LIMIT, DEFAULT_MAX_DOUBLINGS, DEFAULT_PARTNER_THRESHOLD};
use crate::spectrum::{classify_symmetry, PhaseSpectrum};

pub const DEFAULT_LEVELS: [usize; 6] = [1, 4, 7, 10, 13, 18];
/// Fits whose RMS residual exceeds this fraction of the amplitude are
/// flagged.
pub const FIT_RESIDUAL_LIMIT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMode {
    /// Least-squares first harmonic; the offset is the ζ-average.
    #[default]
    LeastSquares,
    /// Amplitude and offset from the extremes of E_i(ζ).
    Extrema,
}

/// E_i(ζ) ≈ offset + amplitude·sin(2πζ + phase).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftFit {
    pub amplitude: f64,
    pub phase: f64,
    pub offset: f64,
    /// RMS misfit relative to the amplitude (0 when the amplitude vanishes).
    pub residual: f64,
}

impl ShiftFit {
    /// ΔE at driving phase ζ.
    pub fn shift(&self, zeta: f64) -> f64 {
        self.amplitude * (2.0 * PI * zeta + self.phase).sin()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSet {
    pub labels: Vec<usize>,
    /// Mean energies E_i.
    pub energies: Vec<f64>,
    pub fits: Vec<ShiftFit>,
    pub coupling_strength: f64,
    pub fit_mode: FitMode,
    pub warnings: Vec<String>,
}

impl LevelSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn with_coupling(mut self, coupling_strength: f64) -> Self {
        self.coupling_strength = coupling_strength;
        self
    }

    pub fn slot(&self, label: usize) -> Result<usize> {
        self.labels.iter().position(|&l| l == label).ok_or(Error::UnknownLabel(label))
    }

    /// Real symmetric H(t) = diag(E_i + ΔE_i) + a sin ωt (1 − δ_ij), the
    /// Schrödinger-picture form of the model, row-major.
    pub fn hamiltonian(&self, omega: f64, t: f64, out: &mut Vec<f64>) {
        let n = self.len();
        let zeta = (omega * t / (2.0 * PI)).rem_euclid(1.0);
        let v = self.coupling_strength * (omega * t).sin();
        out.clear();
        out.resize(n * n, v);
        for i in 0..n {
            out[i * n + i] = self.energies[i] + self.fits[i].shift(zeta);
        }
    }

    /// Σ_i |c_i|² (E_i + ΔE_i(t)).
    pub fn model_energy(&self, omega: f64, t: f64, c: &[Complex64]) -> f64 {
        let zeta = (omega * t / (2.0 * PI)).rem_euclid(1.0);
        c.iter()
            .enumerate()
            .map(|(i, ci)| ci.norm_sqr() * (self.energies[i] + self.fits[i].shift(zeta)))
            .sum()
    }
}

/// Sine fits of the instantaneous levels over one period.
pub fn fit_energy_shifts(driving: &DrivingLaw, labels: &[usize], mode: FitMode) -> Result<LevelSet> {
    if labels.is_empty() {
        return Err(Error::InvalidParameter("empty level set".into()));
    }
    let spectrum = PhaseSpectrum::build(driving, labels, DEFAULT_PHASE_SAMPLES)?;
    let sym = classify_symmetry(spectrum.levels[0].quantum.kind, spectrum.levels[0].quantum.l);
    for level in &spectrum.levels {
        let s = classify_symmetry(level.quantum.kind, level.quantum.l);
        if s != sym {
            return Err(Error::InvalidParameter(format!(
                "level {} has symmetry {s}, level {} has {sym}",
                level.label, spectrum.levels[0].label
            )));
        }
    }
    let mut energies = Vec::new();
    let mut fits = Vec::new();
    let mut warnings = Vec::new();
    for &label in labels {
        let level = spectrum.level(label)?;
        let series = level.energy_series();
        let (c1, s1) = series.first_harmonic();
        let phase = c1.atan2(s1);
        let (amplitude, offset) = match mode {
            FitMode::LeastSquares => (c1.hypot(s1), series.mean()),
            FitMode::Extrema => {
                let hi = level.energy.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lo = level.energy.iter().copied().fold(f64::INFINITY, f64::min);
                (0.5 * (hi - lo), 0.5 * (hi + lo))
            }
        };
        let n = level.energy.len();
        let rms = (level
            .energy
            .iter()
            .enumerate()
            .map(|(k, e)| {
                let zeta = k as f64 / n as f64;
                (e - offset - amplitude * (2.0 * PI * zeta + phase).sin()).powi(2)
            })
            .sum::<f64>()
            / n as f64)
            .sqrt();
        // A static level has nothing to fit; compare against round-off instead.
        let floor = 1e-9 * offset.abs().max(1.0);
        let residual = if amplitude > floor { rms / amplitude } else { 0.0 };
        if residual > FIT_RESIDUAL_LIMIT {
            warnings.push(format!("level {label}: sine fit residual {:.1}% of the amplitude", 100.0 * residual));
        }
        energies.push(offset);
        fits.push(ShiftFit { amplitude, phase, offset, residual });
    }
    Ok(LevelSet { labels: labels.to_vec(), energies, fits, coupling_strength: 0.0, fit_mode: mode, warnings })
}

/// Interaction-picture equations of the model:
/// ċ_i = −i [ Σ_{j≠i} c_j a sin(ωt) e^{i(E_i−E_j)t} + c_i ΔE_i(t) ].
pub fn rabi_rhs(t: f64, c: &[Complex64], levels: &LevelSet, omega: f64) -> Vec<Complex64> {
    let zeta = (omega * t / (2.0 * PI)).rem_euclid(1.0);
    let v = levels.coupling_strength * (omega * t).sin();
    let minus_i = Complex64::new(0.0, -1.0);
    (0..levels.len())
        .map(|i| {
            let mut acc = c[i] * levels.fits[i].shift(zeta);
            for j in 0..levels.len() {
                if j != i {
                    acc += c[j] * v * Complex64::from_polar(1.0, (levels.energies[i] - levels.energies[j]) * t);
                }
            }
            minus_i * acc
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RabiConfig {
    pub periods: usize,
    pub floquet: FloquetConfig,
    pub beat_limit: f64,
    pub max_doublings: u32,
    pub partner_threshold: f64,
}

impl Default for RabiConfig {
    fn default() -> Self {
        Self {
            periods: crate::dynamics::DEFAULT_HORIZON_PERIODS,
            floquet: FloquetConfig { tol: 1e-10, ..Default::default() },
            beat_limit: DEFAULT_BEAT_LIMIT,
            max_doublings: DEFAULT_MAX_DOUBLINGS,
            partner_threshold: DEFAULT_PARTNER_THRESHOLD,
        }
    }
}

fn model_propagator(levels: &LevelSet, omega: f64, config: &RabiConfig) -> Result<FloquetPropagator> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::InvalidParameter(format!("ω must be positive, got {omega}")));
    }
    let ham = |t: f64, out: &mut Vec<f64>| levels.hamiltonian(omega, t, out);
    FloquetPropagator::build_periodic(levels.len(), 2.0 * PI / omega, 0.0, ham, &config.floquet, None)
}

/// Model E(t) and populations |c_i| starting in `label`, over `periods`.
pub fn rabi_series(levels: &LevelSet, label: usize, omega: f64, periods: usize, config: &RabiConfig) -> Result<ObservableSeries> {
    let start = levels.slot(label)?;
    let prop = model_propagator(levels, omega, config)?;
    let mut c0 = vec![Complex64::new(0.0, 0.0); levels.len()];
    c0[start] = Complex64::new(1.0, 0.0);
    let mut series = ObservableSeries::new(omega);
    prop.run(&c0, periods, |t, c| {
        let pops: BTreeMap<usize, f64> = levels.labels.iter().zip(c).map(|(&l, ci)| (l, ci.norm())).collect();
        series.push(t, levels.model_energy(omega, t, c), &pops);
        Ok(())
    })?;
    series.t_b = beating_period(&series, label)?;
    Ok(series)
}

fn rabi_row(levels: &LevelSet, label: usize, omega: f64, config: &RabiConfig) -> Result<ScanRow> {
    let mut periods = config.periods;
    let mut doublings = 0;
    loop {
        let series = rabi_series(levels, label, omega, periods, config)?;
        let stretch = periods as f64 / config.periods as f64;
        let slow = series.t_b.is_some_and(|tb| tb > config.beat_limit * stretch * 2.0 * PI / omega);
        if slow && doublings < config.max_doublings {
            periods *= 2;
            doublings += 1;
            continue;
        }
        let mut partners: Vec<(usize, f64)> = series
            .populations
            .iter()
            .filter(|(&l, _)| l != label)
            .map(|(&l, p)| (l, p.iter().copied().fold(0.0, f64::max)))
            .filter(|&(_, p)| p > config.partner_threshold)
            .collect();
        partners.sort_by(|a, b| b.1.total_cmp(&a.1));
        return Ok(ScanRow {
            omega,
            e_max: series.e_max,
            e_min: series.e_min,
            partners,
            t_b: series.t_b,
            horizon_periods: periods,
        });
    }
}

/// Model analogue of the frequency scan; rows run in parallel and failures
/// are recorded per row.
pub fn rabi_scan(levels: &LevelSet, label: usize, omegas: &[f64], template: &DrivingLaw, config: &RabiConfig) -> Result<ScanResult> {
    levels.slot(label)?;
    if omegas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("frequency grid must be strictly increasing".into()));
    }
    let outcomes: Vec<(f64, Result<ScanRow>)> = omegas.par_iter().map(|&w| (w, rabi_row(levels, label, w, config))).collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (w, outcome) in outcomes {
        match outcome {
            Ok(row) => rows.push(row),
            Err(e) => failures.push((w, e.to_string())),
        }
    }
    let metadata = ScanMetadata {
        model: "rabi".into(),
        initial_label: label,
        a0: template.a0,
        b0: template.b0,
        amplitude: template.amplitude,
        horizon_periods: config.periods,
        n_max: None,
        m_max: None,
        k_cut: None,
        tolerance: config.floquet.tol,
        coupling_strength: Some(levels.coupling_strength),
        failures,
    };
    Ok(ScanResult { rows, metadata })
}

/// Coupling strength for which the model's beating period of `label` at
/// `omega` equals `target_t_b`: a log-spaced search in [lo, hi] for a sign
/// change, then bisection. When several brackets exist the weakest coupling
/// is returned.
pub fn calibrate_coupling(
    levels: &LevelSet,
    label: usize,
    omega: f64,
    target_t_b: f64,
    bounds: (f64, f64),
    config: &RabiConfig,
) -> Result<f64> {
    let (lo, hi) = bounds;
    if !(lo > 0.0 && hi > lo && target_t_b > 0.0) {
        return Err(Error::InvalidParameter(format!("bad calibration bounds ({lo}, {hi}) or target {target_t_b}")));
    }
    let mismatch = |a: f64| -> Result<Option<f64>> {
        let model = levels.clone().with_coupling(a);
        let series = rabi_series(&model, label, omega, config.periods, config)?;
        Ok(series.t_b.map(|tb| (tb / target_t_b).ln()))
    };
    let n = 33;
    let grid: Vec<f64> = (0..n).map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64)).collect();
    let values = grid.par_iter().map(|&a| mismatch(a)).collect::<Result<Vec<_>>>()?;
    for k in 0..n - 1 {
        let (Some(f0), Some(f1)) = (values[k], values[k + 1]) else { continue };
        if f0 == 0.0 {
            return Ok(grid[k]);
        }
        if f0.signum() == f1.signum() {
            continue;
        }
        let (mut a, mut b, mut fa) = (grid[k].ln(), grid[k + 1].ln(), f0);
        for _ in 0..40 {
            let m = 0.5 * (a + b);
            let Some(fm) = mismatch(m.exp())? else { break };
            if fm.signum() == fa.signum() {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
            if b - a < 1e-6 {
                break;
            }
        }
        return Ok((0.5 * (a + b)).exp());
    }
    Err(Error::InvalidParameter(format!(
        "no coupling in [{lo}, {hi}] reproduces T_b = {target_t_b} at ω = {omega}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::{Dopri5, Tolerances};

    fn two_level(gap: f64, a: f64) -> LevelSet {
        let flat = ShiftFit { amplitude: 0.0, phase: 0.0, offset: 0.0, residual: 0.0 };
        LevelSet {
            labels: vec![1, 2],
            energies: vec![0.0, gap],
            fits: vec![flat, flat],
            coupling_strength: a,
            fit_mode: FitMode::LeastSquares,
            warnings: vec![],
        }
    }

    #[test]
    fn frozen_without_coupling() {
        let levels = two_level(3.0, 0.0);
        let c = [Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)];
        assert!(rabi_rhs(1.3, &c, &levels, 2.0).iter().all(|d| d.norm() == 0.0));
    }

    #[test]
    fn resonant_two_level_flopping() {
        // a sin ωt at ω = gap: the co-rotating part couples with a/2, so the
        // population of the upper level is sin²(at/2) when ω ≫ a.
        let (gap, a) = (10.0, 0.05);
        let levels = two_level(gap, a);
        let omega = gap;
        let series = rabi_series(&levels, 1, omega, 150, &RabiConfig::default()).unwrap();
        let p2 = &series.populations[&2];
        let (k_max, _) = p2.iter().enumerate().fold((0, 0.0), |acc, (k, &p)| if p > acc.1 { (k, p) } else { acc });
        let transfer_time = series.times[k_max];
        let expected = PI / a;
        assert!(p2[k_max] > 0.99);
        assert!((transfer_time / expected - 1.0).abs() < 0.02, "{transfer_time} vs {expected}");
    }

    #[test]
    fn interaction_picture_agrees() {
        let flat = |amp: f64, ph: f64| ShiftFit { amplitude: amp, phase: ph, offset: 0.0, residual: 0.0 };
        let levels = LevelSet {
            labels: vec![1, 4, 7],
            energies: vec![4.0, 16.0, 26.3],
            fits: vec![flat(0.8, 0.1), flat(2.0, -0.4), flat(3.1, 0.3)],
            coupling_strength: 0.7,
            fit_mode: FitMode::LeastSquares,
            warnings: vec![],
        };
        let omega = 5.3;
        let series = rabi_series(&levels, 4, omega, 3, &RabiConfig::default()).unwrap();
        let mut c0 = vec![Complex64::new(0.0, 0.0); 3];
        c0[1] = Complex64::new(1.0, 0.0);
        let f = |t: f64, c: &[Complex64], dc: &mut [Complex64]| dc.copy_from_slice(&rabi_rhs(t, c, &levels, omega));
        let tol = Tolerances { rel: 1e-11, abs: 1e-13 };
        let mut ode = Dopri5::new(f, 0.0, c0, tol).unwrap();
        for (k, &t) in series.times.iter().enumerate().skip(1) {
            ode.advance_to(t).unwrap();
            for (slot, &l) in levels.labels.iter().enumerate() {
                let p = ode.y()[slot].norm();
                assert!((p - series.populations[&l][k]).abs() < 1e-7);
            }
            let e = levels.model_energy(omega, t, ode.y());
            assert!((e - series.energy[k]).abs() < 1e-6);
        }
    }

    #[test]
    fn norm_is_conserved_over_long_runs() {
        let flat = |amp: f64| ShiftFit { amplitude: amp, phase: 0.2, offset: 0.0, residual: 0.0 };
        let levels = LevelSet {
            labels: vec![1, 4, 7],
            energies: vec![4.0, 16.0, 26.3],
            fits: vec![flat(0.8), flat(2.0), flat(3.1)],
            coupling_strength: 1.5,
            fit_mode: FitMode::LeastSquares,
            warnings: vec![],
        };
        let series = rabi_series(&levels, 4, 6.0, 1000, &RabiConfig::default()).unwrap();
        let last = series.times.len() - 1;
        let norm2: f64 = series.populations.values().map(|p| p[last].powi(2)).sum();
        assert!((norm2.sqrt() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn global_shift_leaves_populations() {
        let mut levels = two_level(7.0, 0.4);
        let base = rabi_series(&levels, 1, 3.4, 20, &RabiConfig::default()).unwrap();
        levels.energies.iter_mut().for_each(|e| *e += 5.0);
        let shifted = rabi_series(&levels, 1, 3.4, 20, &RabiConfig::default()).unwrap();
        for (a, b) in base.populations[&2].iter().zip(&shifted.populations[&2]) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn static_levels_have_no_shift() {
        let driving = DrivingLaw::new(1.0, 0.51f64.sqrt(), 0.0, 5.0).unwrap();
        let levels = fit_energy_shifts(&driving, &[1, 4], FitMode::LeastSquares).unwrap();
        assert!(levels.fits.iter().all(|f| f.amplitude < 1e-10));
        assert!(levels.warnings.is_empty());
    }
}
