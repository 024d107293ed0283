use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;

use breathing_billiard::coupling::BasisIndex;
use breathing_billiard::floquet::{FloquetConfig, FloquetPropagator};
use breathing_billiard::rabi::{FitMode, LevelSet, ShiftFit};
use breathing_billiard::scan::find_peaks;
use breathing_billiard::special::bessel::{bessel_j, bessel_zeros};
use breathing_billiard::special::mathieu::{MathieuExpansion, MathieuKind};
use breathing_billiard::{DrivingLaw, EllipseGeometry};

fn levels(energies: Vec<f64>, amplitudes: Vec<f64>, coupling: f64) -> LevelSet {
    let fits = amplitudes
        .iter()
        .zip(&energies)
        .map(|(&amplitude, &offset)| ShiftFit { amplitude, phase: PI, offset, residual: 0.0 })
        .collect();
    LevelSet {
        labels: (1..=energies.len()).collect(),
        energies,
        fits,
        coupling_strength: coupling,
        fit_mode: FitMode::LeastSquares,
        warnings: Vec::new(),
    }
}

fn model_populations(set: &LevelSet, omega: f64, periods: usize) -> Vec<Vec<f64>> {
    let cfg = FloquetConfig { samples_per_period: 16, tol: 1e-10, max_substeps: 1024, ..Default::default() };
    let ham = |t: f64, out: &mut Vec<f64>| set.hamiltonian(omega, t, out);
    let prop = FloquetPropagator::build_periodic(set.len(), 2.0 * PI / omega, 0.0, ham, &cfg, None).unwrap();
    let mut c0 = vec![Complex64::new(0.0, 0.0); set.len()];
    c0[0] = Complex64::new(1.0, 0.0);
    let mut out = Vec::new();
    prop.run(&c0, periods, |_, c| {
        out.push(c.iter().map(|x| x.norm_sqr()).collect());
        Ok(())
    })
    .unwrap();
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn basis_index_round_trips(n_max in 1usize..30, m_max in 0usize..30, k in 0usize..10_000) {
        let idx = BasisIndex { n_max, m_max };
        let i = k % idx.len();
        let (n, m) = idx.from_linear(i).unwrap();
        prop_assert_eq!(idx.linear(n, m), Some(i));
    }

    #[test]
    fn bessel_zeros_are_roots_and_interlace(m in 0u32..25, count in 2usize..12) {
        let zeros = bessel_zeros(m, count);
        let next = bessel_zeros(m + 1, count);
        for (i, &z) in zeros.iter().enumerate() {
            prop_assert!(bessel_j(m, z).unwrap().abs() < 1e-12);
            // j_{m,n} < j_{m+1,n} < j_{m,n+1}
            prop_assert!(z < next[i]);
            if i + 1 < count {
                prop_assert!(next[i] < zeros[i + 1]);
            }
        }
    }

    #[test]
    fn angular_normalization_is_pi(odd in any::<bool>(), l in 0u32..8, q in 0.0f64..40.0) {
        let kind = if odd { MathieuKind::Odd } else { MathieuKind::Even };
        let l = if odd { l + 1 } else { l };
        let e = MathieuExpansion::new(kind, l, q).unwrap();
        let n = 512;
        let integral: f64 = (0..n).map(|k| e.angular(2.0 * PI * k as f64 / n as f64).powi(2)).sum::<f64>() * 2.0 * PI / n as f64;
        prop_assert!((integral - PI).abs() < 1e-10);
    }

    #[test]
    fn energy_and_q_are_inverse(b in 0.2f64..0.99, e in 0.5f64..200.0) {
        let g = EllipseGeometry::new(1.0, b).unwrap();
        prop_assert!((g.energy_from_q(g.q_from_energy(e)) / e - 1.0).abs() < 1e-12);
    }

    #[test]
    fn driving_is_periodic(c in 0.0f64..0.5, omega in 0.1f64..50.0, t in 0.0f64..100.0) {
        let d = DrivingLaw::new(1.0, 0.51f64.sqrt(), c, omega).unwrap();
        let (g, h) = (d.g_functions(t), d.g_functions(t + d.period()));
        for (x, y) in [(g.g1, h.g1), (g.g2, h.g2), (g.g3, h.g3), (g.g4, h.g4)] {
            prop_assert!((x - y).abs() < 1e-8 * x.abs().max(1.0));
        }
        prop_assert!((d.time_at_phase(d.phase(t)) - t.rem_euclid(d.period())).abs() < 1e-9);
    }

    #[test]
    fn peaks_ignore_offsets(centre in 2.0f64..8.0, width in 0.1f64..1.0, height in 1.0f64..20.0, offset in -50.0f64..50.0) {
        let x: Vec<f64> = (0..200).map(|i| 0.05 * i as f64).collect();
        let y: Vec<f64> = x.iter().map(|w| height * width * width / ((w - centre).powi(2) + width * width)).collect();
        let shifted: Vec<f64> = y.iter().map(|v| v + offset).collect();
        let a = find_peaks(&x, &y, 0.5, None);
        let b = find_peaks(&x, &shifted, 0.5, None);
        prop_assert_eq!(a.len(), 1);
        prop_assert_eq!(a.len(), b.len());
        prop_assert!((a[0].omega - b[0].omega).abs() < 1e-12);
        prop_assert!((a[0].prominence - b[0].prominence).abs() < 1e-9);
        prop_assert!((a[0].omega - centre).abs() <= 0.025 + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn model_conserves_norm(
        gaps in proptest::collection::vec(1.0f64..15.0, 2..5),
        amp in 0.0f64..3.0,
        coupling in 0.0f64..1.0,
        omega in 1.0f64..15.0,
    ) {
        let mut energies = vec![4.0];
        for g in &gaps {
            energies.push(energies.last().unwrap() + g);
        }
        let amplitudes = vec![amp; energies.len()];
        let set = levels(energies, amplitudes, coupling);
        for p in model_populations(&set, omega, 30) {
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn global_shift_keeps_model_populations(
        shift in -20.0f64..20.0,
        coupling in 0.05f64..0.5,
        omega in 2.0f64..12.0,
    ) {
        let base = levels(vec![4.0, 16.0, 26.5], vec![1.0, 3.5, 7.0], coupling);
        let moved = levels(vec![4.0 + shift, 16.0 + shift, 26.5 + shift], vec![1.0, 3.5, 7.0], coupling);
        let a = model_populations(&base, omega, 10);
        let b = model_populations(&moved, omega, 10);
        for (pa, pb) in a.iter().zip(&b) {
            for (x, y) in pa.iter().zip(pb) {
                prop_assert!((x - y).abs() < 1e-7);
            }
        }
    }
}
