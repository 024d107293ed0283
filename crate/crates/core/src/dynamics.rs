//! End-to-end runs: from an equilibrium eigenstate to E(t) and populations.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coupling::{CouplingTable, DilationTable};
use crate::disk::{DiskGrid, DEFAULT_ANGULAR_NODES, DEFAULT_RADIAL_NODES};
use crate::driving::DrivingLaw;
use crate::error::{Error, Result};
use crate::floquet::{FloquetConfig, FloquetPropagator, FloquetReport};
use crate::observables::{EnergyOperator, ObservableSeries, PopulationProjector, DEFAULT_PHASE_SAMPLES};
use crate::propagator::{prepare_initial_state, PropagationBasis, Propagator, DEFAULT_DISCARD_THRESHOLD};
use crate::spectrum::{solve_eigenstates, EllipseGeometry, EllipticEigenstate};

/// Wavenumber cutoff of the default propagation basis.
pub const DEFAULT_K_CUT: f64 = 35.0;
pub const DEFAULT_HORIZON_PERIODS: usize = 200;
/// Equilibrium states are solved up to this energy.
pub const DEFAULT_STATE_CEILING: f64 = 100.0;

/// Everything that depends only on the basis and the equilibrium ellipse.
#[derive(Debug)]
pub struct Workspace {
    pub table: CouplingTable,
    pub dilation: DilationTable,
    pub grid: DiskGrid,
    pub equilibrium: EllipseGeometry,
    /// Equilibrium eigenstates sorted by energy; label = position + 1.
    pub states: Vec<EllipticEigenstate>,
}

impl Workspace {
    pub fn new(table: CouplingTable, a0: f64, b0: f64) -> Result<Self> {
        Self::with_ceiling(table, a0, b0, DEFAULT_STATE_CEILING)
    }

    pub fn with_ceiling(table: CouplingTable, a0: f64, b0: f64, e_max: f64) -> Result<Self> {
        let equilibrium = EllipseGeometry::new(a0, b0)?;
        let states = solve_eigenstates(&equilibrium, e_max)?;
        let dilation = DilationTable::build(&table)?;
        let grid = DiskGrid::new(table.index(), &table.zeros, DEFAULT_RADIAL_NODES, DEFAULT_ANGULAR_NODES)?;
        Ok(Self { table, dilation, grid, equilibrium, states })
    }

    pub fn state(&self, label: usize) -> Result<&EllipticEigenstate> {
        label.checked_sub(1).and_then(|i| self.states.get(i)).ok_or(Error::UnknownLabel(label))
    }

    /// Labels sharing the symmetry of `label`, up to `max_label` inclusive.
    pub fn sector_labels(&self, label: usize, max_label: usize) -> Result<Vec<usize>> {
        let sym = self.state(label)?.symmetry;
        Ok(self
            .states
            .iter()
            .enumerate()
            .filter(|(i, s)| s.symmetry == sym && i + 1 <= max_label)
            .map(|(i, _)| i + 1)
            .collect())
    }

    fn check_driving(&self, driving: &DrivingLaw) -> Result<()> {
        let g = driving.equilibrium();
        if (g.a - self.equilibrium.a).abs() > 1e-12 || (g.b - self.equilibrium.b).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "driving equilibrium ({}, {}) differs from the workspace ({}, {})",
                g.a, g.b, self.equilibrium.a, self.equilibrium.b
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicsConfig {
    /// `None` propagates the whole sector of the table.
    pub k_cut: Option<f64>,
    pub periods: usize,
    pub floquet: FloquetConfig,
    pub discard_threshold: f64,
    /// Populations recorded at every sample; the initial label is added.
    pub population_labels: Vec<usize>,
    pub phase_samples: usize,
    /// Also record Σ E_i p_i² and Σ p_i² over the population labels.
    pub spectral_check: bool,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            k_cut: Some(DEFAULT_K_CUT),
            periods: DEFAULT_HORIZON_PERIODS,
            floquet: FloquetConfig::default(),
            discard_threshold: DEFAULT_DISCARD_THRESHOLD,
            population_labels: Vec::new(),
            phase_samples: DEFAULT_PHASE_SAMPLES,
            spectral_check: false,
        }
    }
}

/// A prepared run: initial coefficients, cached one-period propagators and
/// the energy operator of one symmetry sector.
#[derive(Debug, Clone)]
pub struct Dynamics {
    pub driving: DrivingLaw,
    pub initial_label: usize,
    pub basis: PropagationBasis,
    pub floquet: FloquetPropagator,
    pub energy: EnergyOperator,
    /// Reduced coefficients at t = 0, normalized.
    pub u0: Vec<Complex64>,
    /// Weight lost to the table basis and then to the cutoff.
    pub discarded_weight: f64,
    pub cutoff_weight: f64,
}

impl Dynamics {
    pub fn prepare(ws: &Workspace, driving: &DrivingLaw, label: usize, config: &DynamicsConfig) -> Result<Self> {
        ws.check_driving(driving)?;
        let eig = ws.state(label)?;
        let prepared = prepare_initial_state(eig, driving, &ws.grid, config.discard_threshold)?;
        let basis = PropagationBasis::new(&ws.table, eig.symmetry, config.k_cut)?;
        let mut u0 = basis.reduce(&prepared.state.coeffs);
        let kept: f64 = u0.iter().map(|c| c.norm_sqr()).sum();
        let cutoff_weight = 1.0 - kept;
        if cutoff_weight > config.discard_threshold {
            return Err(Error::TruncationWeight { weight: cutoff_weight, threshold: config.discard_threshold });
        }
        let scale = kept.sqrt();
        u0.iter_mut().for_each(|c| *c /= scale);
        let prop = Propagator::new(&ws.table, driving, basis.clone())?;
        let floquet = FloquetPropagator::build_with_probe(&prop, 0.0, &config.floquet, Some(&u0))?;
        let energy = EnergyOperator::new(&ws.table, &ws.dilation, driving, basis.clone());
        Ok(Self {
            driving: *driving,
            initial_label: label,
            basis,
            floquet,
            energy,
            u0,
            discarded_weight: prepared.discarded_weight,
            cutoff_weight,
        })
    }

    /// Population projector on this run's basis.
    pub fn projector(&self, ws: &Workspace, labels: &[usize], phase_samples: usize) -> Result<PopulationProjector> {
        PopulationProjector::build(&self.driving, labels, phase_samples, &ws.grid, &self.basis)
    }

    /// Runs `periods` periods, calling `observe(t, u)` at every sample.
    pub fn run(&self, periods: usize, observe: impl FnMut(f64, &[Complex64]) -> Result<()>) -> Result<FloquetReport> {
        self.floquet.run(&self.u0, periods, observe)
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub series: ObservableSeries,
    /// (Σ E_i p_i², Σ p_i²) at each sample when requested.
    pub spectral: Vec<(f64, f64)>,
    pub report: FloquetReport,
    pub basis_dim: usize,
    pub discarded_weight: f64,
    pub cutoff_weight: f64,
}

/// Propagates equilibrium state `label` under `driving` and records E(t) and
/// the requested populations.
pub fn simulate(ws: &Workspace, driving: &DrivingLaw, label: usize, config: &DynamicsConfig) -> Result<Trajectory> {
    let dynamics = Dynamics::prepare(ws, driving, label, config)?;
    let mut labels = config.population_labels.clone();
    if !labels.contains(&label) {
        labels.push(label);
    }
    labels.sort_unstable();
    labels.dedup();
    let projector = dynamics.projector(ws, &labels, config.phase_samples)?;
    let mut series = ObservableSeries::new(driving.omega);
    let mut spectral = Vec::new();
    let report = dynamics.run(config.periods, |t, u| {
        let pops: BTreeMap<usize, f64> = projector.populations(t, u)?;
        series.push(t, dynamics.energy.energy(t, u), &pops);
        if config.spectral_check {
            spectral.push(projector.spectral_energy(t, u)?);
        }
        Ok(())
    })?;
    series.t_b = crate::observables::beating_period(&series, label)?;
    Ok(Trajectory {
        series,
        spectral,
        report,
        basis_dim: dynamics.basis.dim(),
        discarded_weight: dynamics.discarded_weight,
        cutoff_weight: dynamics.cutoff_weight,
    })
}
