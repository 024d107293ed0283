//! The five subcommands.

use std::path::PathBuf;

use breathing_billiard::coupling::{build_tables, load_table_for, save_table, CouplingTable};
use breathing_billiard::dynamics::{simulate, DynamicsConfig, Workspace};
use breathing_billiard::floquet::FloquetConfig;
use breathing_billiard::rabi::{calibrate_coupling, fit_energy_shifts, rabi_scan, RabiConfig};
use breathing_billiard::scan::{
    detect_resonances, omega_grid, photon_lines, refine, scan, DetectionConfig, Extremum, RefineConfig, ScanConfig,
    ScanResult,
};
use breathing_billiard::spectrum::{solve_eigenstates, PhaseSpectrum};
use breathing_billiard::{DrivingLaw, EllipseGeometry};
use serde_json::json;

use crate::config::RunConfig;
use crate::output::{num, opt, plot, Output};
use crate::CliError;

const LEVEL_PHASES: usize = 64;

pub struct Context {
    pub config: RunConfig,
    pub emit_plot: bool,
}

impl Context {
    fn driving(&self, omega: f64) -> Result<DrivingLaw, CliError> {
        let g = &self.config.geometry;
        Ok(DrivingLaw::new(g.a0, g.b0, self.config.driving.amplitude, omega)?)
    }

    fn output(&self) -> Result<Output, CliError> {
        Output::new(&self.config.output_dir)
    }

    fn table_path(&self) -> PathBuf {
        let b = &self.config.basis;
        self.config.cache_dir().join(format!("coupling_N{}_M{}_Q{}.bin", b.n_max, b.m_max, b.quad_order))
    }

    /// Cached table, built and stored on first use.
    fn table(&self, force: bool) -> Result<(CouplingTable, PathBuf, bool), CliError> {
        let path = self.table_path();
        let b = &self.config.basis;
        if path.exists() && !force {
            return Ok((load_table_for(&path, b.n_max, b.m_max)?, path, false));
        }
        let table = build_tables(b.n_max, b.m_max, b.quad_order)?;
        save_table(&table, &path)?;
        Ok((table, path, true))
    }

    fn workspace(&self) -> Result<Workspace, CliError> {
        let (table, _, _) = self.table(false)?;
        let g = &self.config.geometry;
        Ok(Workspace::new(table, g.a0, g.b0)?)
    }

    fn dynamics_config(&self) -> DynamicsConfig {
        let c = &self.config;
        DynamicsConfig {
            k_cut: c.basis.k_cut,
            periods: c.horizon_periods,
            floquet: FloquetConfig {
                samples_per_period: c.tolerances.samples_per_period,
                tol: c.tolerances.period_tol,
                norm_tol: c.tolerances.norm_tol,
                ..Default::default()
            },
            discard_threshold: c.tolerances.discard_threshold,
            population_labels: c.populations.clone(),
            ..Default::default()
        }
    }

    fn grid(&self) -> Result<Vec<f64>, CliError> {
        let g = &self.config.driving.grid;
        Ok(omega_grid(g.start, g.end, g.step)?)
    }

    /// Mean differences E_{state↔j} for the other `labels`, with the extremes of
    /// the upper minus the lower level over a period.
    fn differences(&self, labels: &[usize]) -> Result<Vec<(usize, f64, f64, f64)>, CliError> {
        let state = self.config.state;
        let mut all: Vec<usize> = labels.to_vec();
        all.push(state);
        all.sort_unstable();
        all.dedup();
        let spectrum = PhaseSpectrum::build(&self.driving(1.0)?, &all, LEVEL_PHASES)?;
        let mut out = Vec::new();
        for &j in labels.iter().filter(|&&j| j != state) {
            let mean = spectrum.mean_energy_difference(state, j)?;
            let (upper, lower) = if j > state { (j, state) } else { (state, j) };
            let (hi, lo) = spectrum.difference_extremes(upper, lower)?;
            out.push((j, mean, hi, lo));
        }
        Ok(out)
    }

    fn refine_config(&self, max_order: u32, partners: &[usize]) -> Result<RefineConfig, CliError> {
        let r = &self.config.refinement;
        let g = &self.config.driving.grid;
        let lines = if r.enabled {
            let diffs: Vec<f64> = self.differences(partners)?.iter().map(|d| d.1).collect();
            photon_lines(&diffs, max_order, g.start, g.end)
        } else {
            Vec::new()
        };
        Ok(RefineConfig { step: r.step, lines, line_step: r.line_step, line_half_window: r.line_half_window })
    }

    fn detection(&self) -> Result<DetectionConfig, CliError> {
        let mut d = DetectionConfig::adiabatic(&self.driving(1.0)?, self.config.state)?;
        d.min_prominence = self.config.refinement.min_prominence;
        Ok(d)
    }
}

pub fn spectrum(ctx: &Context) -> Result<(), CliError> {
    let g = &ctx.config.geometry;
    let geom = EllipseGeometry::new(g.a0, g.b0)?;
    let states = solve_eigenstates(&geom, ctx.config.spectrum_e_max)?;
    let mut out = ctx.output()?;
    let header: Vec<String> =
        ["label", "energy", "q", "kind", "l", "r", "pi_x", "pi_y"].iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<String>> = states
        .iter()
        .enumerate()
        .map(|(i, s)| {
            vec![
                (i + 1).to_string(),
                num(s.energy),
                num(s.q),
                s.quantum.kind.to_string(),
                s.quantum.l.to_string(),
                s.quantum.r.to_string(),
                s.symmetry.pi_x.to_string(),
                s.symmetry.pi_y.to_string(),
            ]
        })
        .collect();
    out.csv("spectrum.csv", &header, &rows)?;

    let labels: Vec<usize> = (1..=states.len()).collect();
    let levels = PhaseSpectrum::build(&ctx.driving(1.0)?, &labels, LEVEL_PHASES)?;
    let mut header = vec!["zeta".to_string()];
    header.extend(labels.iter().map(|l| format!("E_{l}")));
    let rows: Vec<Vec<String>> = (0..=LEVEL_PHASES)
        .map(|k| {
            let zeta = k as f64 / LEVEL_PHASES as f64;
            let mut row = vec![num(zeta)];
            row.extend(levels.levels.iter().map(|l| num(l.energy[k % LEVEL_PHASES])));
            row
        })
        .collect();
    out.csv("levels.csv", &header, &rows)?;

    let diffs = ctx.differences(&ctx.config.rabi.levels)?;
    let header: Vec<String> = ["i", "j", "mean", "max", "min"].iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<String>> = diffs
        .iter()
        .map(|&(j, mean, hi, lo)| vec![ctx.config.state.to_string(), j.to_string(), num(mean), num(hi), num(lo)])
        .collect();
    out.csv("differences.csv", &header, &rows)?;
    if ctx.emit_plot {
        out.text("levels.gp", &plot::levels(&labels))?;
    }
    out.sidecar("spectrum", &ctx.config, json!({ "states": states.len() }))
}

pub fn tables(ctx: &Context, force: bool) -> Result<(), CliError> {
    let (table, path, built) = ctx.table(force)?;
    let mut out = ctx.output()?;
    out.sidecar(
        "tables",
        &ctx.config,
        json!({
            "path": path.display().to_string(),
            "built": built,
            "n_max": table.n_max,
            "m_max": table.m_max,
            "quad_order": table.quad_order,
            "checksum": table.checksum,
        }),
    )
}

pub fn propagate(ctx: &Context) -> Result<(), CliError> {
    let ws = ctx.workspace()?;
    let omega = ctx.config.driving.omega;
    let driving = ctx.driving(omega)?;
    let traj = simulate(&ws, &driving, ctx.config.state, &ctx.dynamics_config())?;
    let series = &traj.series;
    let period = driving.period();
    let mut out = ctx.output()?;
    let rows: Vec<Vec<String>> =
        series.times.iter().zip(&series.energy).map(|(t, e)| vec![num(t / period), num(*e)]).collect();
    out.csv("energy.csv", &["t_over_T".into(), "E".into()], &rows)?;
    let labels: Vec<usize> = series.populations.keys().copied().collect();
    let mut header = vec!["t_over_T".to_string()];
    header.extend(labels.iter().map(|l| format!("p_{l}")));
    let rows: Vec<Vec<String>> = (0..series.times.len())
        .map(|k| {
            let mut row = vec![num(series.times[k] / period)];
            row.extend(labels.iter().map(|l| num(series.populations[l][k])));
            row
        })
        .collect();
    out.csv("populations.csv", &header, &rows)?;
    if ctx.emit_plot {
        out.text("energy.gp", &plot::energy())?;
        out.text("populations.gp", &plot::populations(&labels))?;
    }
    out.sidecar(
        "propagate",
        &ctx.config,
        json!({
            "omega": omega,
            "e_max": series.e_max,
            "e_min": series.e_min,
            "t_b_periods": series.t_b.map(|tb| tb / period),
            "basis_dim": traj.basis_dim,
            "discarded_weight": traj.discarded_weight,
            "cutoff_weight": traj.cutoff_weight,
            "substeps": traj.report.substeps,
            "error_estimate": traj.report.error_estimate,
            "max_norm_drift": traj.report.max_norm_drift,
        }),
    )
}

fn write_scan(ctx: &Context, command: &str, result: &ScanResult) -> Result<(), CliError> {
    let mut out = ctx.output()?;
    let header: Vec<String> = ["omega", "e_max", "e_min", "t_b_periods", "horizon_periods", "model", "partners"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows: Vec<Vec<String>> = result
        .rows
        .iter()
        .map(|r| {
            let period = 2.0 * std::f64::consts::PI / r.omega;
            let partners: Vec<String> = r.partners.iter().map(|(l, p)| format!("{l}:{}", num(*p))).collect();
            vec![
                num(r.omega),
                num(r.e_max),
                num(r.e_min),
                opt(r.t_b.map(|tb| tb / period)),
                r.horizon_periods.to_string(),
                result.metadata.model.clone(),
                partners.join(";"),
            ]
        })
        .collect();
    out.csv("scan.csv", &header, &rows)?;
    let detection = ctx.detection()?;
    let found = |which| -> Vec<serde_json::Value> {
        detect_resonances(result, which, &detection)
            .iter()
            .map(|r| json!({"omega": r.omega, "width": r.width, "prominence": r.prominence, "lower": r.lower, "upper": r.upper}))
            .collect()
    };
    let resonances = json!({ "e_max_peaks": found(Extremum::Max), "e_min_dips": found(Extremum::Min) });
    if ctx.emit_plot {
        let title = if command == "rabi" { "Rabi-like model" } else { "full simulation" };
        out.text("scan.gp", &plot::scan(title))?;
    }
    out.sidecar(command, &ctx.config, json!({ "scan": result.metadata, "resonances": resonances }))
}

pub fn scan_cmd(ctx: &Context) -> Result<(), CliError> {
    let ws = ctx.workspace()?;
    let template = ctx.driving(ctx.config.driving.omega)?;
    let state = ctx.config.state;
    let config = ScanConfig { dynamics: ctx.dynamics_config(), ..Default::default() };
    let coarse = scan(&ws, &template, state, &ctx.grid()?, &config)?;
    let result = if ctx.config.refinement.enabled {
        let partners = ws.sector_labels(state, 20)?;
        let refinement = ctx.refine_config(ctx.config.refinement.max_order, &partners)?;
        refine(coarse, &ctx.detection()?, &refinement, |fine| scan(&ws, &template, state, fine, &config))?
    } else {
        coarse
    };
    write_scan(ctx, "scan", &result)
}

pub fn rabi(ctx: &Context) -> Result<(), CliError> {
    let c = &ctx.config;
    let template = ctx.driving(c.driving.omega)?;
    let levels = fit_energy_shifts(&template, &c.rabi.levels, c.rabi.fit_mode.into())?;
    for w in &levels.warnings {
        eprintln!("warning: {w}");
    }
    let rabi_config = RabiConfig {
        periods: c.horizon_periods,
        floquet: FloquetConfig { samples_per_period: c.tolerances.samples_per_period, ..RabiConfig::default().floquet },
        ..Default::default()
    };
    let coupling = match c.rabi.coupling {
        Some(a) => a,
        None => {
            let ws = ctx.workspace()?;
            let omega = c.rabi.calibration_omega;
            let driving = ctx.driving(omega)?;
            let traj = simulate(&ws, &driving, c.state, &ctx.dynamics_config())?;
            let target = traj.series.t_b.ok_or_else(|| {
                CliError::Numerical(format!("no beating period in the full simulation at ω = {omega}"))
            })?;
            calibrate_coupling(&levels, c.state, omega, target, c.rabi.calibration_bounds, &rabi_config)?
        }
    };
    eprintln!("coupling strength a = {coupling}");
    let model = levels.with_coupling(coupling);
    let coarse = rabi_scan(&model, c.state, &ctx.grid()?, &template, &rabi_config)?;
    let result = if c.refinement.enabled {
        let refinement = ctx.refine_config(c.rabi.max_order, &c.rabi.levels)?;
        refine(coarse, &ctx.detection()?, &refinement, |fine| rabi_scan(&model, c.state, fine, &template, &rabi_config))?
    } else {
        coarse
    };
    write_scan(ctx, "rabi", &result)
}
