//! Run configuration: JSON file, command-line overrides and validation.

use std::path::{Path, PathBuf};

use breathing_billiard::rabi::FitMode;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const CACHE_ENV: &str = "BILLIARD_CACHE_DIR";
const DEFAULT_CACHE: &str = ".billiard-cache";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct Geometry {
    pub a0: f64,
    pub b0: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self { a0: 1.0, b0: 0.51f64.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct OmegaGrid {
    pub start: f64,
    pub end: f64,
    pub step: f64,
}

impl Default for OmegaGrid {
    fn default() -> Self {
        Self { start: 1.0, end: 17.0, step: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct Driving {
    /// Relative amplitude c of the breathing mode.
    pub amplitude: f64,
    /// Frequency for `propagate`.
    pub omega: f64,
    /// Frequencies for `scan` and `rabi`.
    pub grid: OmegaGrid,
}

impl Default for Driving {
    fn default() -> Self {
        Self { amplitude: 0.1, omega: 5.0, grid: OmegaGrid::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct Basis {
    pub n_max: usize,
    pub m_max: usize,
    pub quad_order: usize,
    /// Wavenumber cutoff of the propagated basis; null keeps the whole table.
    pub k_cut: Option<f64>,
}

impl Default for Basis {
    fn default() -> Self {
        Self {
            n_max: 20,
            m_max: 20,
            quad_order: breathing_billiard::coupling::DEFAULT_QUAD_ORDER,
            k_cut: Some(breathing_billiard::dynamics::DEFAULT_K_CUT),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Error bound of the one-period propagator.
    pub period_tol: f64,
    pub samples_per_period: usize,
    pub norm_tol: f64,
    /// Weight the initial state may lose to the basis truncation.
    pub discard_threshold: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let f = breathing_billiard::floquet::FloquetConfig::default();
        Self {
            period_tol: f.tol,
            samples_per_period: f.samples_per_period,
            norm_tol: f.norm_tol,
            discard_threshold: breathing_billiard::propagator::DEFAULT_DISCARD_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct Refinement {
    pub enabled: bool,
    pub step: f64,
    /// Highest photon order n of the E_{i↔j}/n lines visited on the fine grid.
    pub max_order: u32,
    pub line_step: f64,
    pub line_half_window: f64,
    /// Minimal resonance prominence as a fraction of the adiabatic band.
    pub min_prominence: f64,
}

impl Default for Refinement {
    fn default() -> Self {
        Self { enabled: true, step: 0.01, max_order: 4, line_step: 0.002, line_half_window: 0.016, min_prominence: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum FitChoice {
    LeastSquares,
    Extrema,
}

impl From<FitChoice> for FitMode {
    fn from(c: FitChoice) -> Self {
        match c {
            FitChoice::LeastSquares => FitMode::LeastSquares,
            FitChoice::Extrema => FitMode::Extrema,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct Rabi {
    pub levels: Vec<usize>,
    /// Coupling strength a; null calibrates it against the full simulation.
    pub coupling: Option<f64>,
    pub fit_mode: FitChoice,
    pub calibration_omega: f64,
    pub calibration_bounds: (f64, f64),
    pub max_order: u32,
}

impl Default for Rabi {
    fn default() -> Self {
        Self {
            levels: breathing_billiard::rabi::DEFAULT_LEVELS.to_vec(),
            coupling: None,
            fit_mode: FitChoice::LeastSquares,
            calibration_omega: 5.0,
            calibration_bounds: (1e-3, 10.0),
            max_order: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: Geometry,
    pub driving: Driving,
    /// Initial equilibrium state, labelled by energy order from 1.
    pub state: usize,
    pub basis: Basis,
    pub tolerances: Tolerances,
    pub horizon_periods: usize,
    /// Energy ceiling of the `spectrum` table.
    pub spectrum_e_max: f64,
    /// Populations written by `propagate`; the initial state is always added.
    pub populations: Vec<usize>,
    pub refinement: Refinement,
    pub rabi: Rabi,
    pub output_dir: PathBuf,
    /// Coupling-table cache; falls back to $BILLIARD_CACHE_DIR.
    pub cache_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            geometry: Geometry::default(),
            driving: Driving::default(),
            state: 4,
            basis: Basis::default(),
            tolerances: Tolerances::default(),
            horizon_periods: breathing_billiard::dynamics::DEFAULT_HORIZON_PERIODS,
            spectrum_e_max: 50.0,
            populations: vec![1, 4, 7, 10, 13, 18],
            refinement: Refinement::default(),
            rabi: Rabi::default(),
            output_dir: PathBuf::from("out"),
            cache_dir: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn schema() -> String {
        let schema = schemars::schema_for!(RunConfig);
        serde_json::to_string_pretty(&schema).expect("schema serializes")
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir
            .clone()
            .or_else(|| std::env::var_os(CACHE_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let positive = |x: f64| x.is_finite() && x > 0.0;
        let g = &self.geometry;
        if !(positive(g.a0) && positive(g.b0) && g.a0 > g.b0) {
            return bad(format!("geometry needs a0 > b0 > 0, got a0 = {}, b0 = {}", g.a0, g.b0));
        }
        let d = &self.driving;
        if !(d.amplitude.is_finite() && d.amplitude >= 0.0 && d.amplitude < g.b0) {
            return bad(format!("amplitude must lie in [0, b0), got {}", d.amplitude));
        }
        if !positive(d.omega) {
            return bad(format!("omega must be positive, got {}", d.omega));
        }
        let grid = &d.grid;
        if !(positive(grid.start) && positive(grid.step) && grid.end >= grid.start) {
            return bad(format!("bad frequency grid [{}, {}] step {}", grid.start, grid.end, grid.step));
        }
        if self.state == 0 {
            return bad("state labels start at 1".into());
        }
        let b = &self.basis;
        if b.n_max == 0 || b.m_max < 2 || b.quad_order == 0 {
            return bad(format!("basis needs N ≥ 1, M ≥ 2, got N = {}, M = {}", b.n_max, b.m_max));
        }
        if b.k_cut.is_some_and(|k| !positive(k)) {
            return bad("k_cut must be positive".into());
        }
        let t = &self.tolerances;
        if !(positive(t.period_tol) && positive(t.norm_tol) && positive(t.discard_threshold)) || t.samples_per_period < 4 {
            return bad("tolerances must be positive and samples_per_period ≥ 4".into());
        }
        if self.horizon_periods == 0 {
            return bad("horizon_periods must be at least 1".into());
        }
        if !positive(self.spectrum_e_max) {
            return bad("spectrum_e_max must be positive".into());
        }
        if self.populations.contains(&0) || self.rabi.levels.contains(&0) {
            return bad("state labels start at 1".into());
        }
        let r = &self.refinement;
        if !(positive(r.step) && positive(r.line_step) && r.line_half_window >= 0.0 && r.min_prominence >= 0.0) {
            return bad("refinement steps must be positive".into());
        }
        let rabi = &self.rabi;
        if rabi.levels.len() < 2 || !rabi.levels.contains(&self.state) {
            return bad(format!("rabi levels {:?} must hold at least two states including {}", rabi.levels, self.state));
        }
        if rabi.coupling.is_some_and(|a| !(a.is_finite() && a >= 0.0)) {
            return bad("rabi coupling must be non-negative".into());
        }
        let (lo, hi) = rabi.calibration_bounds;
        if !(positive(lo) && hi > lo && positive(rabi.calibration_omega)) {
            return bad("bad rabi calibration settings".into());
        }
        Ok(())
    }
}
