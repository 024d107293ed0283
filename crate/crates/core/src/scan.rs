//! Frequency scans of the extremal energies and resonance detection.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::driving::DrivingLaw;
use crate::dynamics::{Dynamics, DynamicsConfig, Workspace};
use crate::error::{Error, Result};
use crate::observables::{beating_period, ObservableSeries};

pub const DEFAULT_PARTNER_PHASES: usize = 16;
/// Horizons are doubled while the beating period exceeds this many periods.
pub const DEFAULT_BEAT_LIMIT: f64 = 60.0;
pub const DEFAULT_MAX_DOUBLINGS: u32 = 2;
pub const DEFAULT_PARTNER_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanConfig {
    pub dynamics: DynamicsConfig,
    /// Candidate partner states; `None` takes the same-sector labels ≤ 20.
    pub partner_labels: Option<Vec<usize>>,
    pub partner_phases: usize,
    /// Partners are reported when their maximal population exceeds this.
    pub partner_threshold: f64,
    pub beat_limit: f64,
    pub max_doublings: u32,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            dynamics: DynamicsConfig::default(),
            partner_labels: None,
            partner_phases: DEFAULT_PARTNER_PHASES,
            partner_threshold: DEFAULT_PARTNER_THRESHOLD,
            beat_limit: DEFAULT_BEAT_LIMIT,
            max_doublings: DEFAULT_MAX_DOUBLINGS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub omega: f64,
    pub e_max: f64,
    pub e_min: f64,
    /// (label, maximal population) of the partners above threshold, by
    /// decreasing population.
    pub partners: Vec<(usize, f64)>,
    pub t_b: Option<f64>,
    pub horizon_periods: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanMetadata {
    /// "full" for the propagated billiard, "rabi" for the level model.
    pub model: String,
    pub initial_label: usize,
    pub a0: f64,
    pub b0: f64,
    pub amplitude: f64,
    pub horizon_periods: usize,
    pub n_max: Option<usize>,
    pub m_max: Option<usize>,
    pub k_cut: Option<f64>,
    pub tolerance: f64,
    pub coupling_strength: Option<f64>,
    /// (ω, message) of rows that failed.
    pub failures: Vec<(f64, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub rows: Vec<ScanRow>,
    pub metadata: ScanMetadata,
}

impl ScanResult {
    pub fn omegas(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.omega).collect()
    }

    /// Adds rows, keeping ω strictly increasing; existing ω values win.
    pub fn merge(&mut self, other: ScanResult) {
        for row in other.rows {
            if !self.rows.iter().any(|r| (r.omega - row.omega).abs() < 1e-9) {
                self.rows.push(row);
            }
        }
        self.rows.sort_by(|a, b| a.omega.total_cmp(&b.omega));
        self.metadata.failures.extend(other.metadata.failures);
        self.metadata.failures.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
}

/// Uniform grid from `start` to `end` inclusive (up to rounding).
pub fn omega_grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && end >= start && start > 0.0) {
        return Err(Error::InvalidParameter(format!("bad grid [{start}, {end}] step {step}")));
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9).collect())
}

fn check_grid(omegas: &[f64]) -> Result<()> {
    if omegas.is_empty() {
        return Err(Error::InvalidParameter("empty frequency grid".into()));
    }
    if omegas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("frequency grid must be strictly increasing".into()));
    }
    if omegas.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::InvalidParameter("frequencies must be positive".into()));
    }
    Ok(())
}

/// One propagation and observable extraction per ω, rows in parallel.
/// Failures are recorded in the metadata and do not abort the scan.
pub fn scan(ws: &Workspace, template: &DrivingLaw, label: usize, omegas: &[f64], config: &ScanConfig) -> Result<ScanResult> {
    check_grid(omegas)?;
    ws.state(label)?;
    let partners = match &config.partner_labels {
        Some(list) => list.clone(),
        None => ws.sector_labels(label, 20)?,
    };
    let outcomes: Vec<(f64, Result<ScanRow>)> = omegas
        .par_iter()
        .map(|&omega| (omega, template.with_omega(omega).and_then(|d| scan_row(ws, &d, label, &partners, config))))
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (omega, outcome) in outcomes {
        match outcome {
            Ok(row) => rows.push(row),
            Err(e) => failures.push((omega, e.to_string())),
        }
    }
    let metadata = ScanMetadata {
        model: "full".into(),
        initial_label: label,
        a0: template.a0,
        b0: template.b0,
        amplitude: template.amplitude,
        horizon_periods: config.dynamics.periods,
        n_max: Some(ws.table.n_max),
        m_max: Some(ws.table.m_max),
        k_cut: config.dynamics.k_cut,
        tolerance: config.dynamics.floquet.tol,
        coupling_strength: None,
        failures,
    };
    Ok(ScanResult { rows, metadata })
}

/// A single scan row at the frequency of `driving`.
pub fn scan_row(ws: &Workspace, driving: &DrivingLaw, label: usize, partners: &[usize], config: &ScanConfig) -> Result<ScanRow> {
    let dynamics = Dynamics::prepare(ws, driving, label, &config.dynamics)?;
    let mut tracked = partners.to_vec();
    tracked.push(label);
    tracked.sort_unstable();
    tracked.dedup();
    let projector = dynamics.projector(ws, &tracked, config.partner_phases)?;
    let samples = dynamics.floquet.samples_per_period();
    let stride = if samples % config.partner_phases == 0 { samples / config.partner_phases } else { 1 };

    let mut periods = config.dynamics.periods;
    let mut doublings = 0;
    loop {
        let mut e_max = f64::NEG_INFINITY;
        let mut e_min = f64::INFINITY;
        let mut coarse = ObservableSeries::new(driving.omega);
        let mut peak_pop: BTreeMap<usize, f64> = BTreeMap::new();
        let mut i = 0usize;
        dynamics.run(periods, |t, u| {
            let e = dynamics.energy.energy(t, u);
            e_max = e_max.max(e);
            e_min = e_min.min(e);
            if i % stride == 0 {
                let pops = projector.populations(t, u)?;
                for (&l, &p) in &pops {
                    let slot = peak_pop.entry(l).or_insert(0.0);
                    *slot = slot.max(p);
                }
                coarse.push(t, e, &pops);
            }
            i += 1;
            Ok(())
        })?;
        let t_b = beating_period(&coarse, label)?;
        let period = driving.period();
        let stretch = periods as f64 / config.dynamics.periods as f64;
        let slow = t_b.is_some_and(|tb| tb > config.beat_limit * stretch * period);
        if slow && doublings < config.max_doublings {
            periods *= 2;
            doublings += 1;
            continue;
        }
        let mut partners: Vec<(usize, f64)> = peak_pop
            .into_iter()
            .filter(|&(l, p)| l != label && p > config.partner_threshold)
            .collect();
        partners.sort_by(|a, b| b.1.total_cmp(&a.1));
        return Ok(ScanRow { omega: driving.omega, e_max, e_min, partners, t_b, horizon_periods: periods });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extremum {
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub omega: f64,
    /// Full width at half prominence.
    pub width: f64,
    pub prominence: f64,
    /// Half-prominence crossings on either side.
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionConfig {
    /// Minimal prominence as a fraction of the band height.
    pub min_prominence: f64,
    /// Adiabatic E_max and E_min, i.e. E_i(ζ = 3/4) and E_i(ζ = 1/4) of the
    /// initial state. They set the band height and are taken as the level
    /// beyond the ends of the scanned range. Without them the band height is
    /// median(E_max) − median(E_min) of the scan and the ends are open.
    pub baseline: Option<(f64, f64)>,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self { min_prominence: 0.05, baseline: None }
    }
}

impl DetectionConfig {
    /// Baselines from the instantaneous spectrum of `label`.
    pub fn adiabatic(driving: &DrivingLaw, label: usize) -> Result<Self> {
        let spectrum = crate::spectrum::PhaseSpectrum::build(driving, &[label], crate::observables::DEFAULT_PHASE_SAMPLES)?;
        let hi = spectrum.energy(label, 0.75)?;
        let lo = spectrum.energy(label, 0.25)?;
        Ok(Self { baseline: Some((hi.max(lo), hi.min(lo))), ..Default::default() })
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Local extrema of E_max (peaks) or E_min (dips) with their prominence and
/// half-prominence width, sorted by ω. Fewer than five rows give no result.
pub fn detect_resonances(result: &ScanResult, which: Extremum, config: &DetectionConfig) -> Vec<Resonance> {
    if result.rows.len() < 5 {
        return Vec::new();
    }
    let x: Vec<f64> = result.rows.iter().map(|r| r.omega).collect();
    let y: Vec<f64> = match which {
        Extremum::Max => result.rows.iter().map(|r| r.e_max).collect(),
        Extremum::Min => result.rows.iter().map(|r| -r.e_min).collect(),
    };
    let (band, edge) = match config.baseline {
        Some((hi, lo)) => (hi - lo, Some(if which == Extremum::Max { hi } else { -lo })),
        None => {
            let mut hi: Vec<f64> = result.rows.iter().map(|r| r.e_max).collect();
            let mut lo: Vec<f64> = result.rows.iter().map(|r| r.e_min).collect();
            (median(&mut hi) - median(&mut lo), None)
        }
    };
    find_peaks(&x, &y, config.min_prominence * band.abs(), edge)
}

/// Peaks of y(x) with topographic prominence at least `min_prominence`.
/// With `edge` set, the curve is taken to continue at that level beyond both
/// ends, so a peak cut by the range still gets its full prominence.
pub fn find_peaks(x: &[f64], y: &[f64], min_prominence: f64, edge: Option<f64>) -> Vec<Resonance> {
    let n = y.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        // Plateaus count once, at their centre.
        let mut j = i;
        while j + 1 < n && y[j + 1] == y[i] {
            j += 1;
        }
        let left_lower = i == 0 || y[i - 1] < y[i];
        let right_lower = j + 1 == n || y[j + 1] < y[i];
        let interior = i > 0 && j + 1 < n;
        if left_lower && right_lower && interior {
            let peak = y[i];
            let mut l = i;
            let mut left_base = peak;
            while l > 0 && y[l - 1] <= peak {
                l -= 1;
                left_base = left_base.min(y[l]);
            }
            if l == 0 {
                if let Some(e) = edge {
                    left_base = left_base.min(e);
                }
            }
            let mut r = j;
            let mut right_base = peak;
            while r + 1 < n && y[r + 1] <= peak {
                r += 1;
                right_base = right_base.min(y[r]);
            }
            if r + 1 == n {
                if let Some(e) = edge {
                    right_base = right_base.min(e);
                }
            }
            let prominence = peak - left_base.max(right_base);
            if prominence >= min_prominence && prominence > 0.0 {
                let half = peak - 0.5 * prominence;
                let mut a = i;
                while a > 0 && y[a - 1] > half {
                    a -= 1;
                }
                let lower = if a == 0 { x[0] } else { crossing(x[a - 1], y[a - 1], x[a], y[a], half) };
                let mut b = j;
                while b + 1 < n && y[b + 1] > half {
                    b += 1;
                }
                let upper = if b + 1 == n { x[n - 1] } else { crossing(x[b], y[b], x[b + 1], y[b + 1], half) };
                let omega = 0.5 * (x[i] + x[j]);
                out.push(Resonance { omega, width: upper - lower, prominence, lower, upper });
            }
        }
        i = j + 1;
    }
    out
}

fn crossing(x0: f64, y0: f64, x1: f64, y1: f64, level: f64) -> f64 {
    if y1 == y0 {
        return 0.5 * (x0 + x1);
    }
    x0 + (level - y0) * (x1 - x0) / (y1 - y0)
}

/// Fine grids of `step` spanning ±`half_window` around each resonance,
/// excluding points already in `existing`.
pub fn refinement_grid(resonances: &[Resonance], existing: &[f64], step: f64, half_window: f64) -> Vec<f64> {
    let mut fine: Vec<f64> = Vec::new();
    for r in resonances {
        let n = (half_window / step).round() as i64;
        for k in -n..=n {
            let w = ((r.omega + k as f64 * step) * 1e9).round() / 1e9;
            if w > 0.0 && !existing.iter().chain(fine.iter()).any(|e| (e - w).abs() < 0.5 * step) {
                fine.push(w);
            }
        }
    }
    fine.sort_by(f64::total_cmp);
    fine
}

/// Positions |ΔE|/n, n = 1..=max_order, of the multi-photon lines of the
/// given mean level differences that fall inside [lo, hi], sorted.
pub fn photon_lines(differences: &[f64], max_order: u32, lo: f64, hi: f64) -> Vec<f64> {
    let mut lines: Vec<f64> = differences
        .iter()
        .flat_map(|d| (1..=max_order).map(move |n| d.abs() / n as f64))
        .filter(|w| (lo..=hi).contains(w))
        .collect();
    lines.sort_by(f64::total_cmp);
    lines
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    /// Step around detected resonances; the half window is the coarse step.
    pub step: f64,
    /// Extra centres, typically from [`photon_lines`]. Multi-photon lines can
    /// be narrower than the coarse step and are not seen by detection.
    pub lines: Vec<f64>,
    pub line_step: f64,
    pub line_half_window: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self { step: 0.01, lines: Vec::new(), line_step: 0.002, line_half_window: 0.016 }
    }
}

/// One refinement pass over an existing scan: the points around detected
/// resonances and the configured lines are computed by `run` and merged.
pub fn refine(
    mut result: ScanResult,
    detection: &DetectionConfig,
    config: &RefineConfig,
    run: impl FnOnce(&[f64]) -> Result<ScanResult>,
) -> Result<ScanResult> {
    let omegas = result.omegas();
    let coarse_step = omegas.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let mut found = detect_resonances(&result, Extremum::Max, detection);
    found.extend(detect_resonances(&result, Extremum::Min, detection));
    let mut fine = if coarse_step.is_finite() { refinement_grid(&found, &omegas, config.step, coarse_step) } else { Vec::new() };
    let (lo, hi) = match (omegas.first(), omegas.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => return Ok(result),
    };
    let seeds: Vec<Resonance> = config
        .lines
        .iter()
        .filter(|w| (lo..=hi).contains(*w))
        .map(|&omega| Resonance { omega, width: 0.0, prominence: 0.0, lower: omega, upper: omega })
        .collect();
    let taken: Vec<f64> = omegas.iter().chain(fine.iter()).copied().collect();
    fine.extend(refinement_grid(&seeds, &taken, config.line_step, config.line_half_window));
    fine.retain(|w| (lo..=hi).contains(w));
    fine.sort_by(f64::total_cmp);
    fine.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    if !fine.is_empty() {
        result.merge(run(&fine)?);
    }
    Ok(result)
}

/// Coarse scan followed by one refinement pass.
pub fn scan_refined(
    ws: &Workspace,
    template: &DrivingLaw,
    label: usize,
    omegas: &[f64],
    config: &ScanConfig,
    detection: &DetectionConfig,
    refinement: &RefineConfig,
) -> Result<ScanResult> {
    let coarse = scan(ws, template, label, omegas, config)?;
    refine(coarse, detection, refinement, |fine| scan(ws, template, label, fine, config))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(f: impl Fn(f64) -> (f64, f64)) -> ScanResult {
        let rows = omega_grid(1.0, 9.0, 0.05)
            .unwrap()
            .into_iter()
            .map(|w| {
                let (hi, lo) = f(w);
                ScanRow { omega: w, e_max: hi, e_min: lo, partners: vec![], t_b: None, horizon_periods: 200 }
            })
            .collect();
        ScanResult { rows, metadata: metadata() }
    }

    fn metadata() -> ScanMetadata {
        ScanMetadata {
            model: "test".into(),
            initial_label: 4,
            a0: 1.0,
            b0: 0.7,
            amplitude: 0.1,
            horizon_periods: 200,
            n_max: None,
            m_max: None,
            k_cut: None,
            tolerance: 0.0,
            coupling_strength: None,
            failures: vec![],
        }
    }

    fn lorentz(w: f64, w0: f64, gamma: f64, h: f64) -> f64 {
        h * gamma * gamma / ((w - w0).powi(2) + gamma * gamma)
    }

    #[test]
    fn recovers_a_lorentzian() {
        let r = table(|w| (20.0 + lorentz(w, 4.32, 0.2, 5.0), 13.0));
        let peaks = detect_resonances(&r, Extremum::Max, &DetectionConfig::default());
        assert_eq!(peaks.len(), 1);
        assert!((peaks[0].omega - 4.32).abs() <= 0.025 + 1e-9);
        // FWHM of a Lorentzian is 2γ.
        assert!((peaks[0].width - 0.4).abs() < 0.05, "{}", peaks[0].width);
        assert!((peaks[0].prominence - 5.0).abs() < 0.1);
        assert!(detect_resonances(&r, Extremum::Min, &DetectionConfig::default()).is_empty());
    }

    #[test]
    fn dips_are_found_in_e_min() {
        let r = table(|w| (20.0, 13.0 - lorentz(w, 6.0, 0.1, 4.0) - lorentz(w, 3.0, 0.3, 2.0)));
        let dips = detect_resonances(&r, Extremum::Min, &DetectionConfig::default());
        let centres: Vec<f64> = dips.iter().map(|d| d.omega).collect();
        assert_eq!(centres.len(), 2, "{centres:?}");
        assert!((centres[0] - 3.0).abs() < 0.03 && (centres[1] - 6.0).abs() < 0.03);
    }

    #[test]
    fn small_bumps_are_ignored() {
        let r = table(|w| (20.0 + 0.01 * (7.0 * w).sin() + lorentz(w, 5.0, 0.1, 3.0), 13.0));
        let peaks = detect_resonances(&r, Extremum::Max, &DetectionConfig::default());
        assert_eq!(peaks.len(), 1);
    }

    #[test]
    fn truncated_dip_uses_the_baseline() {
        let mut r = table(|w| (20.0, 13.0 - lorentz(w, 5.0, 1.0, 8.0)));
        r.rows.retain(|row| row.omega > 4.79 && row.omega < 5.31);
        let open = detect_resonances(&r, Extremum::Min, &DetectionConfig::default());
        assert!(open.iter().all(|d| d.prominence < 1.0));
        let config = DetectionConfig { baseline: Some((20.0, 13.0)), ..Default::default() };
        let dips = detect_resonances(&r, Extremum::Min, &config);
        assert_eq!(dips.len(), 1);
        assert!((dips[0].prominence - 8.0).abs() < 1e-9);
        assert!(dips[0].lower <= 4.8 + 1e-9 && dips[0].upper >= 5.3 - 1e-9);
    }

    #[test]
    fn photon_lines_in_range() {
        let lines = photon_lines(&[-12.0, 10.0], 4, 2.9, 6.0);
        assert_eq!(lines, vec![3.0, 10.0 / 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn refinement_visits_narrow_lines() {
        // A line far narrower than the coarse step, invisible on the grid.
        let line = |w: f64| (20.0 + lorentz(w, 4.013, 0.002, 10.0), 13.0);
        let coarse = table(line);
        let detection = DetectionConfig { baseline: Some((20.0, 13.0)), ..Default::default() };
        assert!(detect_resonances(&coarse, Extremum::Max, &detection).is_empty());
        let config = RefineConfig { lines: vec![4.01], ..Default::default() };
        let refined = refine(coarse, &detection, &config, |fine| {
            let rows = fine
                .iter()
                .map(|&w| ScanRow { omega: w, e_max: line(w).0, e_min: 13.0, partners: vec![], t_b: None, horizon_periods: 200 })
                .collect();
            Ok(ScanResult { rows, metadata: metadata() })
        })
        .unwrap();
        let peaks = detect_resonances(&refined, Extremum::Max, &detection);
        assert_eq!(peaks.len(), 1);
        assert!((peaks[0].omega - 4.013).abs() < 0.0015);
    }

    #[test]
    fn short_tables_yield_nothing() {
        let mut r = table(|w| (20.0 + lorentz(w, 5.0, 0.1, 3.0), 13.0));
        r.rows.truncate(4);
        assert!(detect_resonances(&r, Extremum::Max, &DetectionConfig::default()).is_empty());
    }

    #[test]
    fn refinement_grid_skips_existing_points() {
        let res = [Resonance { omega: 5.0, width: 0.1, prominence: 1.0, lower: 4.95, upper: 5.05 }];
        let fine = refinement_grid(&res, &[4.95, 5.0, 5.05], 0.01, 0.05);
        assert_eq!(fine.len(), 8);
        assert!(fine.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn merge_keeps_order() {
        let mut a = table(|_| (1.0, 0.0));
        let mut b = table(|_| (2.0, 0.0));
        b.rows.retain(|r| r.omega > 3.0 && r.omega < 3.2);
        for r in &mut b.rows {
            r.omega += 0.01;
        }
        let n = a.rows.len();
        a.merge(b);
        assert_eq!(a.rows.len(), n + 3);
        assert!(a.rows.windows(2).all(|w| w[1].omega > w[0].omega));
    }

    #[test]
    fn grid_validation() {
        assert!(omega_grid(2.0, 1.0, 0.1).is_err());
        assert_eq!(omega_grid(2.0, 17.0, 0.05).unwrap().len(), 301);
        assert!(check_grid(&[1.0, 1.0]).is_err());
    }
}
