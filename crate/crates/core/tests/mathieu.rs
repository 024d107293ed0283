use num_complex::Complex64;

use breathing_billiard::special::mathieu::{mathieu_char_values, MathieuExpansion, MathieuKind};

const CASES: [(MathieuKind, u32, f64); 8] = [
    (MathieuKind::Even, 0, 0.5),
    (MathieuKind::Even, 1, 4.0),
    (MathieuKind::Even, 2, 12.0),
    (MathieuKind::Even, 5, 30.0),
    (MathieuKind::Odd, 1, 0.5),
    (MathieuKind::Odd, 2, 4.0),
    (MathieuKind::Odd, 3, 12.0),
    (MathieuKind::Odd, 6, 30.0),
];

fn sign_changes(f: impl Fn(f64) -> f64, a: f64, b: f64, samples: usize) -> usize {
    let mut count = 0;
    let mut prev = f(a + (b - a) * 0.5 / samples as f64);
    for i in 1..samples {
        let v = f(a + (b - a) * (i as f64 + 0.5) / samples as f64);
        if v.signum() != prev.signum() {
            count += 1;
        }
        prev = v;
    }
    count
}

#[test]
fn angular_functions_have_l_zeros_per_half_period() {
    for (kind, l, q) in CASES {
        let e = MathieuExpansion::new(kind, l, q).unwrap();
        let interior = sign_changes(|x| e.angular(x), 0.0, std::f64::consts::PI, 4000);
        // se_l vanishes at both ends, ce_l at neither.
        let expected = if kind == MathieuKind::Even { l } else { l - 1 } as usize;
        assert_eq!(interior, expected, "{kind}{l} q = {q}");
    }
}

#[test]
fn angular_functions_solve_the_mathieu_equation() {
    let h = 1e-3;
    for (kind, l, q) in CASES {
        let e = MathieuExpansion::new(kind, l, q).unwrap();
        let a = e.char_value;
        for x in [0.1, 0.7, 1.3, 2.2, 3.0] {
            let d2 = (e.angular(x + h) - 2.0 * e.angular(x) + e.angular(x - h)) / (h * h);
            let residual = d2 + (a - 2.0 * q * (2.0 * x).cos()) * e.angular(x);
            let scale = a.abs().max(2.0 * q) + 1.0;
            assert!(residual.abs() < 1e-5 * scale, "{kind}{l} q = {q} x = {x}: {residual}");
        }
    }
}

#[test]
fn radial_functions_solve_the_modified_equation() {
    let h = 1e-4;
    for (kind, l, q) in CASES {
        let e = MathieuExpansion::new(kind, l, q).unwrap();
        let a = e.char_value;
        for x in [0.2, 0.6, 1.0] {
            let r = |x: f64| e.radial(x).unwrap();
            let d2 = (r(x + h) - 2.0 * r(x) + r(x - h)) / (h * h);
            let residual = d2 - (a - 2.0 * q * (2.0 * x).cosh()) * r(x);
            let scale: f64 = (a.abs() + 2.0 * q * (2.0 * x).cosh()) * e.coeffs.iter().map(|c| c.abs()).sum::<f64>()
                * (e.wavenumber(e.coeffs.len() - 1) * x).cosh();
            assert!(residual.abs() < 1e-6 * scale, "{kind}{l} q = {q} ξ = {x}: {residual}");
        }
    }
}

#[test]
fn radial_is_angular_at_imaginary_argument() {
    for (kind, l, q) in CASES {
        let e = MathieuExpansion::new(kind, l, q).unwrap();
        for xi in [0.0, 0.3, 0.9] {
            let z = Complex64::new(0.0, xi);
            let angular: Complex64 = e
                .coeffs
                .iter()
                .enumerate()
                .map(|(j, c)| {
                    let k = e.wavenumber(j);
                    *c * if kind == MathieuKind::Even { (k * z).cos() } else { (k * z).sin() }
                })
                .sum();
            // ce(iξ) = Ce(ξ), se(iξ) = i Se(ξ).
            let expected = if kind == MathieuKind::Even { angular } else { angular / Complex64::i() };
            let r = e.radial(xi).unwrap();
            assert!(expected.im.abs() < 1e-10 * r.abs().max(1.0));
            assert!((expected.re - r).abs() < 1e-10 * r.abs().max(1.0), "{kind}{l} ξ = {xi}");
        }
    }
}

#[test]
fn characteristic_values_interlace() {
    // a_0 < b_1 < a_1 < b_2 < a_2 < … for q > 0.
    for q in [0.1, 2.0, 9.0, 25.0] {
        let values = mathieu_char_values(q, 6).unwrap();
        let labels: Vec<(MathieuKind, u32)> = values.iter().map(|v| (v.kind, v.order)).collect();
        let mut expected = vec![(MathieuKind::Even, 0)];
        for l in 1..=6 {
            expected.push((MathieuKind::Odd, l));
            expected.push((MathieuKind::Even, l));
        }
        assert_eq!(labels, expected, "q = {q}");
    }
}
