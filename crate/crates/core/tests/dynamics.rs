use std::sync::OnceLock;

use nalgebra::DMatrix;
use num_complex::Complex64;

use breathing_billiard::coupling::build_tables;
use breathing_billiard::dynamics::{simulate, Dynamics, DynamicsConfig, Workspace};
use breathing_billiard::observables::{energy_expectation, lab_wavefunction};
use breathing_billiard::propagator::{assemble_hamiltonian, PropagationBasis, Propagator, SpectralState};
use breathing_billiard::DrivingLaw;

fn b0() -> f64 {
    0.51f64.sqrt()
}

fn workspace() -> &'static Workspace {
    static WS: OnceLock<Workspace> = OnceLock::new();
    WS.get_or_init(|| Workspace::new(build_tables(10, 10, 16).unwrap(), 1.0, b0()).unwrap())
}

fn config(periods: usize) -> DynamicsConfig {
    DynamicsConfig { k_cut: None, periods, discard_threshold: 1e-2, ..Default::default() }
}

#[test]
fn hamiltonian_is_symmetric_and_keeps_m_parity() {
    let ws = workspace();
    let driving = DrivingLaw::new(1.0, b0(), 0.1, 5.0).unwrap();
    let idx = ws.table.index();
    let d = idx.len();
    for t in [0.0, 0.3, 0.9] {
        let h = assemble_hamiltonian(&ws.table, &driving.g_functions(t));
        let scale = h.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for i in 0..d {
            let mi = idx.from_linear(i).unwrap().1;
            for j in 0..d {
                let mj = idx.from_linear(j).unwrap().1;
                assert!((h[i * d + j] - h[j * d + i]).abs() < 1e-12 * scale);
                if (mi - mj).rem_euclid(2) != 0 {
                    assert_eq!(h[i * d + j], 0.0);
                }
            }
        }
    }
}

#[test]
fn reflection_sectors_stay_decoupled() {
    let ws = workspace();
    let driving = DrivingLaw::new(1.0, b0(), 0.1, 12.0).unwrap();
    let dynamics = Dynamics::prepare(ws, &driving, 4, &config(1)).unwrap();
    let full = dynamics.basis.expand(&dynamics.u0);
    let block = PropagationBasis::parity_block(&ws.table, true, None).unwrap();
    let prop = Propagator::new(&ws.table, &driving, block.clone()).unwrap();
    let floquet = breathing_billiard::floquet::FloquetPropagator::build(&prop, 0.0, &Default::default()).unwrap();
    let idx = ws.table.index();
    let mut worst = 0.0f64;
    floquet
        .run(&block.reduce(&full), 10, |_, u| {
            let c = block.expand(u);
            // State 4 is even in m → −m and has no sine part.
            let mut leak = 0.0;
            for n in 1..=idx.n_max {
                for m in 1..=idx.m_max as i32 {
                    let (p, q) = (idx.linear(n, m).unwrap(), idx.linear(n, -m).unwrap());
                    leak += (0.5 * (c[p] - c[q])).norm_sqr();
                }
            }
            worst = worst.max(leak);
            Ok(())
        })
        .unwrap();
    assert!(worst < 1e-20, "{worst}");
}

#[test]
fn initial_state_is_the_equilibrium_eigenstate() {
    let ws = workspace();
    let driving = DrivingLaw::new(1.0, b0(), 0.1, 5.0).unwrap();
    let dynamics = Dynamics::prepare(ws, &driving, 4, &config(1)).unwrap();
    let projector = dynamics.projector(ws, &[1, 4, 7], 32).unwrap();
    let p = projector.populations(0.0, &dynamics.u0).unwrap();
    assert!(p[&4] > 1.0 - 1e-6, "{}", p[&4]);
    assert!(p[&1] < 1e-6 && p[&7] < 1e-6);
    // The lab state at t = 0 is the eigenstate itself; the energy operator
    // removes the phase that the moving frame attaches to it.
    let e0 = dynamics.energy.energy(0.0, &dynamics.u0);
    let eig = ws.state(4).unwrap().energy;
    assert!((e0 / eig - 1.0).abs() < 1e-3, "{e0} vs {eig}");
}

#[test]
fn matrix_and_quadrature_energies_agree() {
    let ws = workspace();
    let driving = DrivingLaw::new(1.0, b0(), 0.1, 5.0).unwrap();
    let dynamics = Dynamics::prepare(ws, &driving, 4, &config(3)).unwrap();
    let mut worst = 0.0f64;
    dynamics
        .run(3, |t, u| {
            let state = SpectralState { t, coeffs: dynamics.basis.expand(u), index: ws.table.index() };
            let quad = energy_expectation(&state, &driving, &ws.grid)?;
            let matrix = dynamics.energy.energy(t, u);
            worst = worst.max((quad / matrix - 1.0).abs());
            Ok(())
        })
        .unwrap();
    assert!(worst < 1e-8, "{worst}");
}

#[test]
fn lab_wavefunction_matches_the_eigenstate() {
    let ws = workspace();
    let driving = DrivingLaw::new(1.0, b0(), 0.1, 5.0).unwrap();
    let dynamics = Dynamics::prepare(ws, &driving, 4, &config(1)).unwrap();
    let state = SpectralState { t: 0.0, coeffs: dynamics.basis.expand(&dynamics.u0), index: ws.table.index() };
    let eig = ws.state(4).unwrap();
    let b = b0();
    let inside = [(0.0, 0.0), (0.3, 0.2), (-0.5, 0.1), (0.7, -0.3), (0.1, 0.6)];
    let psi = lab_wavefunction(&state, &driving, &ws.grid, &ws.table, &inside).unwrap();
    let peak = eig.evaluate(0.0, 0.0).unwrap().abs().max(1.0);
    for ((x, y), v) in inside.iter().zip(&psi) {
        let exact = eig.evaluate(*x, *y).unwrap();
        // The moving walls add a phase but leave |Ψ| unchanged.
        assert!((v.norm() - exact.abs()).abs() < 2e-2 * peak, "({x}, {y}): {} vs {exact}", v.norm());
    }
    let boundary: Vec<(f64, f64)> = (0..12).map(|k| {
        let phi = k as f64 * std::f64::consts::PI / 6.0 + 0.1;
        (phi.cos(), b * phi.sin())
    }).collect();
    for v in lab_wavefunction(&state, &driving, &ws.grid, &ws.table, &boundary).unwrap() {
        assert!(v.norm() < 1e-10);
    }
}

#[test]
fn frozen_walls_keep_energy_and_population() {
    let ws = workspace();
    let driving = DrivingLaw::new(1.0, b0(), 0.0, 5.0).unwrap();
    let cfg = DynamicsConfig { population_labels: vec![1, 4], ..config(5) };
    let traj = simulate(ws, &driving, 4, &cfg).unwrap();
    let e0 = traj.series.energy[0];
    assert!(traj.series.energy.iter().all(|e| (e - e0).abs() < 1e-9 * e0));
    assert!(traj.series.populations[&4].iter().all(|p| (p - 1.0).abs() < 1e-6));
    assert!(traj.series.t_b.is_none());
}

#[test]
fn static_hamiltonian_reproduces_the_low_spectrum() {
    let ws = workspace();
    let frozen = DrivingLaw::stationary(1.0, b0()).unwrap();
    let eig = ws.state(1).unwrap();
    let basis = PropagationBasis::new(&ws.table, eig.symmetry, None).unwrap();
    let prop = Propagator::new(&ws.table, &frozen, basis).unwrap();
    let d = prop.dim();
    let mut h = Vec::new();
    prop.hamiltonian(0.0, &mut h);
    let mut values = DMatrix::from_row_slice(d, d, &h).symmetric_eigen().eigenvalues.as_slice().to_vec();
    values.sort_by(f64::total_cmp);
    let expected: Vec<f64> = ws.sector_labels(1, 10).unwrap().iter().map(|&l| ws.state(l).unwrap().energy).collect();
    for (got, want) in values.iter().zip(&expected).take(3) {
        assert!((got / want - 1.0).abs() < 1e-2, "{got} vs {want}");
    }
}

#[test]
fn norm_is_conserved() {
    let ws = workspace();
    let driving = DrivingLaw::new(1.0, b0(), 0.1, 7.0).unwrap();
    let dynamics = Dynamics::prepare(ws, &driving, 1, &config(1)).unwrap();
    let mut worst = 0.0f64;
    dynamics
        .run(50, |_, u| {
            let n: f64 = u.iter().map(Complex64::norm_sqr).sum();
            worst = worst.max((n - 1.0).abs());
            Ok(())
        })
        .unwrap();
    assert!(worst < 1e-8, "{worst}");
}
