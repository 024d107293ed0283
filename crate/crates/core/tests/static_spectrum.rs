use std::f64::consts::PI;

use breathing_billiard::special::bessel::BesselZeroTable;
use breathing_billiard::special::mathieu::MathieuKind;
use breathing_billiard::spectrum::{
    classify_symmetry, instantaneous_spectrum, solve_eigenstates, EllipseGeometry, PhaseSpectrum,
};
use breathing_billiard::DrivingLaw;

fn table_geometry() -> EllipseGeometry {
    EllipseGeometry::new(1.0, 0.51f64.sqrt()).unwrap()
}

/// (E, kind, l, r, π_y, π_x) for the fourteen lowest states.
const TABLE: [(f64, MathieuKind, u32, u32, i8, i8); 14] = [
    (4.267, MathieuKind::Even, 0, 1, 1, 1),
    (9.058, MathieuKind::Even, 1, 1, 1, -1),
    (12.577, MathieuKind::Odd, 1, 1, -1, 1),
    (15.993, MathieuKind::Even, 2, 1, 1, 1),
    (19.358, MathieuKind::Odd, 2, 1, -1, -1),
    (25.061, MathieuKind::Even, 3, 1, 1, -1),
    (25.895, MathieuKind::Even, 0, 2, 1, 1),
    (27.998, MathieuKind::Odd, 3, 1, -1, 1),
    (35.156, MathieuKind::Even, 1, 2, 1, -1),
    (36.178, MathieuKind::Even, 4, 1, 1, 1),
    (38.511, MathieuKind::Odd, 4, 1, -1, -1),
    (44.040, MathieuKind::Odd, 1, 2, -1, 1),
    (46.406, MathieuKind::Even, 2, 2, 1, 1),
    (49.199, MathieuKind::Even, 5, 1, 1, -1),
];

#[test]
fn reproduces_table_of_lowest_states() {
    let states = solve_eigenstates(&table_geometry(), 50.0).unwrap();
    assert_eq!(states.len(), 14);
    for (s, (e, kind, l, r, pi_y, pi_x)) in states.iter().zip(TABLE) {
        assert!((s.energy / e - 1.0).abs() < 1e-3, "{} vs {e}", s.energy);
        assert_eq!((s.quantum.kind, s.quantum.l, s.quantum.r), (kind, l, r));
        assert_eq!((s.symmetry.pi_y, s.symmetry.pi_x), (pi_y, pi_x));
        assert!(s.boundary_residual().unwrap() < 1e-10);
    }
}

#[test]
fn near_circle_limit_matches_bessel_zeros() {
    let geom = EllipseGeometry::new(1.0, 0.9999).unwrap();
    let states = solve_eigenstates(&geom, 10.0).unwrap();
    let k01 = BesselZeroTable::new(0, 1).get(0, 1).unwrap();
    assert!((states[0].energy / (0.5 * k01 * k01) - 1.0).abs() < 1e-3);
}

#[test]
fn quarter_energies_when_axes_double() {
    let small = solve_eigenstates(&table_geometry(), 30.0).unwrap();
    let big = solve_eigenstates(&EllipseGeometry::new(2.0, 2.0 * 0.51f64.sqrt()).unwrap(), 7.5).unwrap();
    assert_eq!(small.len(), big.len());
    for (s, b) in small.iter().zip(&big) {
        assert!((b.energy * 4.0 / s.energy - 1.0).abs() < 1e-10);
    }
}

#[test]
fn symmetry_classification() {
    let s = classify_symmetry(MathieuKind::Even, 0);
    assert_eq!((s.pi_x, s.pi_y), (1, 1));
    let s = classify_symmetry(MathieuKind::Odd, 2);
    assert_eq!((s.pi_x, s.pi_y), (-1, -1));
    let s = classify_symmetry(MathieuKind::Even, 3);
    assert_eq!((s.pi_x, s.pi_y), (-1, 1));
}

/// Cartesian midpoint-rule quadrature over the ellipse, independent of the
/// elliptic-coordinate normalization.
fn cartesian_overlap(
    a: &breathing_billiard::EllipticEigenstate,
    b: &breathing_billiard::EllipticEigenstate,
    geom: &EllipseGeometry,
) -> f64 {
    // Polar map of the unit disk (x = a ρ cos φ, y = b ρ sin φ) with
    // Gauss–Legendre in ρ and trapezoid in φ.
    let rule = breathing_billiard::special::quadrature::GaussLegendre::new(120);
    let (rs, ws) = rule.on_interval(0.0, 1.0);
    let nphi = 360;
    let mut s = 0.0;
    for (r, w) in rs.iter().zip(&ws) {
        for j in 0..nphi {
            let phi = 2.0 * PI * j as f64 / nphi as f64;
            let (x, y) = (geom.a * r * phi.cos(), geom.b * r * phi.sin());
            s += w * r * a.evaluate(x, y).unwrap() * b.evaluate(x, y).unwrap();
        }
    }
    s * geom.a * geom.b * 2.0 * PI / nphi as f64
}

#[test]
fn eigenstates_are_orthonormal_and_vanish_on_the_boundary() {
    let geom = table_geometry();
    let states = solve_eigenstates(&geom, 50.0).unwrap();
    for (i, a) in states.iter().enumerate() {
        for b in states.iter().skip(i) {
            let o = cartesian_overlap(a, b, &geom);
            let want = if a.label == b.label { 1.0 } else { 0.0 };
            assert!((o - want).abs() < 1e-7, "{} {}: {o}", a.quantum, b.quantum);
        }
        for k in 0..16 {
            let t = 2.0 * PI * k as f64 / 16.0 + 0.1;
            assert!(a.evaluate(geom.a * t.cos(), geom.b * t.sin()).unwrap().abs() < 1e-8);
        }
    }
}

#[test]
fn reflection_parities_hold_pointwise() {
    let geom = table_geometry();
    let states = solve_eigenstates(&geom, 30.0).unwrap();
    let (x, y) = (0.31, 0.22);
    for s in &states {
        let v = s.evaluate(x, y).unwrap();
        let px = s.evaluate(-x, y).unwrap();
        let py = s.evaluate(x, -y).unwrap();
        assert!((px - s.symmetry.pi_x as f64 * v).abs() < 1e-10);
        assert!((py - s.symmetry.pi_y as f64 * v).abs() < 1e-10);
    }
    assert!(states[0].evaluate(1.2, 0.0).is_err());
}

#[test]
fn static_instantaneous_spectrum_equals_equilibrium() {
    let d = DrivingLaw::new(1.0, 0.51f64.sqrt(), 0.0, 5.0).unwrap();
    let inst = instantaneous_spectrum(&d, 0.3, 30.0, None).unwrap();
    let eq = solve_eigenstates(&table_geometry(), 30.0).unwrap();
    for (a, b) in inst.iter().zip(&eq) {
        assert_eq!(a.label, b.label);
        assert!((a.energy - b.energy).abs() < 1e-12);
    }
}

#[test]
fn tracked_levels_follow_the_breathing_phase() {
    let d = DrivingLaw::new(1.0, 0.51f64.sqrt(), 0.1, 5.0).unwrap();
    let ps = PhaseSpectrum::build(&d, &[4, 6, 7], 64).unwrap();
    let e4 = ps.level(4).unwrap();
    assert!(e4.energy_at(0.25) < e4.energy_at(0.75));
    let diff: Vec<f64> = (0..64)
        .map(|j| ps.energy(6, j as f64 / 64.0).unwrap() - ps.energy(7, j as f64 / 64.0).unwrap())
        .collect();
    let crosses = diff.windows(2).any(|w| w[0].signum() != w[1].signum());
    assert!(crosses, "levels 6 and 7 should cross over one period");
}
