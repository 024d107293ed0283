//! Static spectrum of the elliptical billiard and its adiabatic dependence on
//! the driving phase.

use std::f64::consts::PI;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::driving::DrivingLaw;
use crate::error::{Error, Result};
use crate::special::mathieu::{MathieuExpansion, MathieuKind};
use crate::special::quadrature::GaussLegendre;
use crate::special::roots::brent;

const RADIAL_NODES: usize = 64;
const ANGULAR_NODES: usize = 256;
const MAX_SCAN_POINTS: usize = 1 << 16;

/// Ellipse with semi-axes a > b > 0, centred at the origin, major axis on x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseGeometry {
    pub a: f64,
    pub b: f64,
}

impl EllipseGeometry {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        let g = Self { a, b };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.b > 0.0 && self.a > self.b) {
            return Err(Error::InvalidParameter(format!(
                "ellipse needs a > b > 0, got a = {}, b = {}",
                self.a, self.b
            )));
        }
        Ok(())
    }

    /// Semi-focal distance f = √(a² − b²).
    pub fn focal_distance(&self) -> f64 {
        ((self.a - self.b) * (self.a + self.b)).sqrt()
    }

    /// Boundary coordinate ξ0 = artanh(b/a).
    pub fn xi0(&self) -> f64 {
        (self.b / self.a).atanh()
    }

    pub fn eccentricity(&self) -> f64 {
        self.focal_distance() / self.a
    }

    /// E = 2q / f² (ħ = μ = 1).
    pub fn energy_from_q(&self, q: f64) -> f64 {
        let f = self.focal_distance();
        2.0 * q / (f * f)
    }

    pub fn q_from_energy(&self, e: f64) -> f64 {
        let f = self.focal_distance();
        0.5 * e * f * f
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (x / self.a).powi(2) + (y / self.b).powi(2) <= 1.0 + 1e-12
    }

    /// Elliptic coordinates (ξ, η) of a Cartesian point, x = f cosh ξ cos η,
    /// y = f sinh ξ sin η.
    pub fn to_elliptic(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        if !self.contains(x, y) {
            return Err(Error::OutsideDomain { x, y });
        }
        let f = self.focal_distance();
        let rp = ((x + f).powi(2) + y * y).sqrt();
        let rm = ((x - f).powi(2) + y * y).sqrt();
        let ch = ((rp + rm) / (2.0 * f)).max(1.0);
        let c = ((rp - rm) / (2.0 * f)).clamp(-1.0, 1.0);
        let xi = ch.acosh().min(self.xi0());
        let mut eta = c.acos();
        if y < 0.0 {
            eta = 2.0 * PI - eta;
        }
        Ok((xi, eta))
    }
}

/// Reflection parities: π_x under x → −x, π_y under y → −y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Symmetry {
    pub pi_x: i8,
    pub pi_y: i8,
}

impl Symmetry {
    /// Whether the sector is spanned by even azimuthal numbers in the
    /// circular basis.
    pub fn even_m(&self) -> bool {
        self.pi_x == self.pi_y
    }

    /// Cosine (m ↔ −m symmetric) combination in the circular basis.
    pub fn cosine_type(&self) -> bool {
        self.pi_y == 1
    }
}

impl fmt::Display for Symmetry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = |v: i8| if v > 0 { '+' } else { '-' };
        write!(f, "(π_x {}, π_y {})", s(self.pi_x), s(self.pi_y))
    }
}

pub fn classify_symmetry(kind: MathieuKind, l: u32) -> Symmetry {
    match (kind, l % 2 == 0) {
        (MathieuKind::Even, true) => Symmetry { pi_x: 1, pi_y: 1 },
        (MathieuKind::Even, false) => Symmetry { pi_x: -1, pi_y: 1 },
        (MathieuKind::Odd, false) => Symmetry { pi_x: 1, pi_y: -1 },
        (MathieuKind::Odd, true) => Symmetry { pi_x: -1, pi_y: -1 },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QuantumNumbers {
    pub kind: MathieuKind,
    pub l: u32,
    pub r: u32,
}

impl fmt::Display for QuantumNumbers {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{},{}", self.kind, self.l, self.r)
    }
}

/// One normalized eigenstate of a static ellipse.
#[derive(Debug, Clone)]
pub struct EllipticEigenstate {
    pub quantum: QuantumNumbers,
    pub symmetry: Symmetry,
    pub q: f64,
    pub energy: f64,
    pub expansion: MathieuExpansion,
    /// Multiplier making R(ξ)Θ(η) unit-normalized over the ellipse.
    pub norm: f64,
    pub geometry: EllipseGeometry,
    /// Position in the energy-ordered equilibrium spectrum, 1-based.
    pub label: Option<usize>,
}

impl EllipticEigenstate {
    fn from_root(quantum: QuantumNumbers, geometry: EllipseGeometry, q: f64) -> Result<Self> {
        let expansion = MathieuExpansion::new(quantum.kind, quantum.l, q)?;
        let norm = 1.0 / ellipse_norm(&expansion, &geometry)?.sqrt();
        Ok(Self {
            quantum,
            symmetry: classify_symmetry(quantum.kind, quantum.l),
            q,
            energy: geometry.energy_from_q(q),
            expansion,
            norm,
            geometry,
            label: None,
        })
    }

    pub fn value_elliptic(&self, xi: f64, eta: f64) -> Result<f64> {
        Ok(self.norm * self.expansion.radial(xi)? * self.expansion.angular(eta))
    }

    /// Amplitude at a Cartesian point inside the ellipse.
    pub fn evaluate(&self, x: f64, y: f64) -> Result<f64> {
        let (xi, eta) = self.geometry.to_elliptic(x, y)?;
        self.value_elliptic(xi, eta)
    }

    /// |R(ξ0)| relative to the largest |R| on [0, ξ0].
    pub fn boundary_residual(&self) -> Result<f64> {
        let xi0 = self.geometry.xi0();
        let mut peak = 0.0f64;
        for i in 0..=400 {
            peak = peak.max(self.expansion.radial(xi0 * i as f64 / 400.0)?.abs());
        }
        Ok(self.expansion.radial(xi0)?.abs() / peak)
    }
}

/// ∫∫ R² Θ² dA over the ellipse in elliptic coordinates.
fn ellipse_norm(exp: &MathieuExpansion, geom: &EllipseGeometry) -> Result<f64> {
    let f = geom.focal_distance();
    let rule = GaussLegendre::new(RADIAL_NODES);
    let (xs, ws) = rule.on_interval(0.0, geom.xi0());
    let mut r_cosh = 0.0;
    let mut r_plain = 0.0;
    for (x, w) in xs.iter().zip(&ws) {
        let r2 = exp.radial(*x)?.powi(2);
        r_cosh += w * r2 * (2.0 * x).cosh();
        r_plain += w * r2;
    }
    let h = 2.0 * PI / ANGULAR_NODES as f64;
    let mut t_plain = 0.0;
    let mut t_cos = 0.0;
    for i in 0..ANGULAR_NODES {
        let eta = i as f64 * h;
        let t2 = exp.angular(eta).powi(2);
        t_plain += t2;
        t_cos += t2 * (2.0 * eta).cos();
    }
    Ok(0.5 * f * f * h * (r_cosh * t_plain - r_plain * t_cos))
}

fn boundary_function(kind: MathieuKind, l: u32, xi0: f64, q: f64) -> Result<f64> {
    MathieuExpansion::new(kind, l, q)?.radial(xi0)
}

/// Roots q ∈ (0, q_max] of the boundary function of one (kind, l) family,
/// ascending. The scan runs on a grid uniform in √q and is refined until the
/// number of sign changes is stable.
pub fn family_roots(kind: MathieuKind, l: u32, geom: &EllipseGeometry, q_max: f64) -> Result<Vec<f64>> {
    let xi0 = geom.xi0();
    let s_max = q_max.sqrt();
    // Roots are roughly equally spaced in √q, about f·π/(2√2 a) apart.
    let spacing = geom.focal_distance() * PI / (2.0 * 2f64.sqrt() * geom.a);
    let mut n = (32 + (4.0 * s_max / spacing) as usize).min(MAX_SCAN_POINTS);
    let brackets = |n: usize| -> Result<Vec<(f64, f64, f64, f64)>> {
        let values: Vec<(f64, f64)> = (0..=n)
            .into_par_iter()
            .map(|i| {
                let q = (s_max * i as f64 / n as f64).powi(2);
                boundary_function(kind, l, xi0, q).map(|v| (q, v))
            })
            .collect::<Result<_>>()?;
        Ok(values
            .windows(2)
            .filter(|w| w[0].1 != 0.0 && w[0].1.signum() != w[1].1.signum())
            .map(|w| (w[0].0, w[1].0, w[0].1, w[1].1))
            .collect())
    };
    let mut coarse = brackets(n)?;
    loop {
        if 2 * n > MAX_SCAN_POINTS {
            return Err(Error::RootBracket { kind, l, q_lo: 0.0, q_hi: q_max });
        }
        n *= 2;
        let fine = brackets(n)?;
        if fine.len() == coarse.len() {
            coarse = fine;
            break;
        }
        coarse = fine;
    }
    coarse
        .into_iter()
        .map(|(lo, hi, flo, fhi)| {
            brent(
                |q| boundary_function(kind, l, xi0, q).unwrap_or(f64::NAN),
                lo,
                hi,
                flo,
                fhi,
                1e-15 * hi,
                200,
            )
            .filter(|q| q.is_finite())
            .ok_or(Error::RootBracket { kind, l, q_lo: lo, q_hi: hi })
        })
        .collect()
}

/// All eigenstates with E ≤ e_max, sorted by energy and labelled 1, 2, ….
pub fn solve_eigenstates(geom: &EllipseGeometry, e_max: f64) -> Result<Vec<EllipticEigenstate>> {
    geom.validate()?;
    if !(e_max > 0.0) {
        return Err(Error::InvalidParameter(format!("e_max must be positive, got {e_max}")));
    }
    let q_max = geom.q_from_energy(e_max);
    let mut states = Vec::new();
    for kind in [MathieuKind::Even, MathieuKind::Odd] {
        let mut l = if kind == MathieuKind::Even { 0 } else { 1 };
        let mut empty = 0;
        while empty < 2 {
            let roots = family_roots(kind, l, geom, q_max)?;
            if roots.is_empty() {
                empty += 1;
            } else {
                empty = 0;
            }
            for (i, q) in roots.into_iter().enumerate() {
                let quantum = QuantumNumbers { kind, l, r: i as u32 + 1 };
                states.push(EllipticEigenstate::from_root(quantum, *geom, q)?);
            }
            l += 1;
        }
    }
    if states.is_empty() {
        return Err(Error::InvalidParameter(format!("no eigenstates below e_max = {e_max}")));
    }
    states.sort_by(|a, b| a.energy.total_cmp(&b.energy).then(a.quantum.cmp(&b.quantum)));
    for (i, s) in states.iter_mut().enumerate() {
        s.label = Some(i + 1);
    }
    Ok(states)
}

/// Finds the r-th root of the (kind, l) family near `q_guess` and checks its
/// radial node count; falls back to a full family scan if tracking lands on a
/// neighbouring root.
pub fn track_root(quantum: QuantumNumbers, geom: &EllipseGeometry, q_guess: f64) -> Result<f64> {
    let QuantumNumbers { kind, l, r } = quantum;
    let xi0 = geom.xi0();
    let f = |q: f64| boundary_function(kind, l, xi0, q);
    let check = |q: f64| -> Result<bool> {
        let exp = MathieuExpansion::new(kind, l, q)?;
        Ok(exp.radial_sign_changes(xi0, 64 * r as usize + 128)? == r as usize - 1)
    };
    if q_guess > 0.0 {
        let f0 = f(q_guess)?;
        let mut delta = 1e-3 * q_guess;
        for _ in 0..12 {
            let lo = (q_guess - delta).max(0.0);
            let hi = q_guess + delta;
            let (flo, fhi) = (f(lo)?, f(hi)?);
            let bracket = if flo.signum() != f0.signum() {
                Some((lo, q_guess, flo, f0))
            } else if fhi.signum() != f0.signum() {
                Some((q_guess, hi, f0, fhi))
            } else {
                None
            };
            if let Some((a, b, fa, fb)) = bracket {
                let root = brent(|q| f(q).unwrap_or(f64::NAN), a, b, fa, fb, 1e-15 * b, 200);
                if let Some(q) = root.filter(|q| q.is_finite()) {
                    if check(q)? {
                        return Ok(q);
                    }
                }
                break;
            }
            delta *= 2.0;
        }
    }
    let ceiling = (2.0 * q_guess).max(geom.q_from_energy(50.0));
    let mut q_max = ceiling;
    for _ in 0..8 {
        let roots = family_roots(kind, l, geom, q_max)?;
        if let Some(q) = roots.get(r as usize - 1) {
            return Ok(*q);
        }
        q_max *= 2.0;
    }
    Err(Error::RootBracket { kind, l, q_lo: 0.0, q_hi: q_max })
}

/// Eigenstate with given quantum numbers at a geometry, seeded by a guess.
pub fn eigenstate_near(quantum: QuantumNumbers, geom: &EllipseGeometry, q_guess: f64) -> Result<EllipticEigenstate> {
    geom.validate()?;
    let q = track_root(quantum, geom, q_guess)?;
    EllipticEigenstate::from_root(quantum, *geom, q)
}

/// Equilibrium eigenstates carrying the requested labels, in request order.
pub fn states_for_labels(geom: &EllipseGeometry, labels: &[usize]) -> Result<Vec<EllipticEigenstate>> {
    let top = labels.iter().copied().max().unwrap_or(1);
    let mut e_max = 20.0 / (geom.a * geom.a);
    loop {
        let states = solve_eigenstates(geom, e_max)?;
        if states.len() > top {
            return labels
                .iter()
                .map(|&lab| {
                    if lab == 0 {
                        Err(Error::UnknownLabel(lab))
                    } else {
                        Ok(states[lab - 1].clone())
                    }
                })
                .collect();
        }
        e_max *= 1.5;
    }
}

/// Spectrum at driving phase ζ with equilibrium labels attached by quantum
/// numbers, optionally restricted to one symmetry sector.
pub fn instantaneous_spectrum(
    driving: &DrivingLaw,
    zeta: f64,
    e_max: f64,
    filter: Option<Symmetry>,
) -> Result<Vec<EllipticEigenstate>> {
    let geom = driving.geometry_at_phase(zeta);
    let mut states = solve_eigenstates(&geom, e_max)?;
    let eq = driving.equilibrium();
    let ratio = (eq.a / (driving.a0 - driving.amplitude)).powi(2).max(1.0);
    let reference = solve_eigenstates(&eq, 1.25 * e_max * ratio + 5.0)?;
    for s in states.iter_mut() {
        s.label = reference.iter().find(|r| r.quantum == s.quantum).and_then(|r| r.label);
    }
    if let Some(sym) = filter {
        states.retain(|s| s.symmetry == sym);
    }
    Ok(states)
}

/// Periodic trigonometric interpolation of samples on ζ_j = j/n.
#[derive(Debug, Clone)]
pub struct PeriodicSeries {
    cos: Vec<f64>,
    sin: Vec<f64>,
    mean: f64,
    nyquist: f64,
}

impl PeriodicSeries {
    pub fn new(samples: &[f64]) -> Self {
        let n = samples.len();
        let half = n / 2;
        let mut cos = vec![0.0; half + 1];
        let mut sin = vec![0.0; half + 1];
        for k in 1..=half {
            let mut c = 0.0;
            let mut s = 0.0;
            for (j, v) in samples.iter().enumerate() {
                let arg = 2.0 * PI * (k * j) as f64 / n as f64;
                c += v * arg.cos();
                s += v * arg.sin();
            }
            cos[k] = 2.0 * c / n as f64;
            sin[k] = 2.0 * s / n as f64;
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let mut nyquist = 0.0;
        if n % 2 == 0 && n > 0 {
            nyquist = cos[half] / 2.0;
            cos[half] = 0.0;
            sin[half] = 0.0;
        }
        Self { cos, sin, mean, nyquist }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// First harmonic as (cos, sin) coefficients.
    pub fn first_harmonic(&self) -> (f64, f64) {
        (self.cos.get(1).copied().unwrap_or(0.0), self.sin.get(1).copied().unwrap_or(0.0))
    }

    pub fn eval(&self, zeta: f64) -> f64 {
        let mut v = self.mean;
        let half = self.cos.len() - 1;
        for k in 1..=half {
            let arg = 2.0 * PI * k as f64 * zeta;
            v += self.cos[k] * arg.cos() + self.sin[k] * arg.sin();
        }
        v + self.nyquist * (2.0 * PI * half as f64 * zeta).cos()
    }
}

/// One level followed over a driving period by its quantum numbers.
#[derive(Debug, Clone)]
pub struct TrackedLevel {
    pub label: usize,
    pub quantum: QuantumNumbers,
    pub q: Vec<f64>,
    pub energy: Vec<f64>,
    q_series: PeriodicSeries,
    energy_series: PeriodicSeries,
}

impl TrackedLevel {
    pub fn energy_at(&self, zeta: f64) -> f64 {
        self.energy_series.eval(zeta)
    }

    pub fn q_at(&self, zeta: f64) -> f64 {
        self.q_series.eval(zeta)
    }

    pub fn energy_series(&self) -> &PeriodicSeries {
        &self.energy_series
    }
}

/// Instantaneous energies of selected levels on a uniform ζ grid.
#[derive(Debug, Clone)]
pub struct PhaseSpectrum {
    pub driving: DrivingLaw,
    pub n_phase: usize,
    pub levels: Vec<TrackedLevel>,
}

impl PhaseSpectrum {
    pub fn build(driving: &DrivingLaw, labels: &[usize], n_phase: usize) -> Result<Self> {
        let eq_states = states_for_labels(&driving.equilibrium(), labels)?;
        let levels = labels
            .par_iter()
            .zip(eq_states.par_iter())
            .map(|(&label, state)| track_level(driving, label, state.quantum, state.q, n_phase))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { driving: *driving, n_phase, levels })
    }

    pub fn level(&self, label: usize) -> Result<&TrackedLevel> {
        self.levels
            .iter()
            .find(|l| l.label == label)
            .ok_or(Error::UnknownLabel(label))
    }

    pub fn energy(&self, label: usize, zeta: f64) -> Result<f64> {
        Ok(self.level(label)?.energy_at(zeta))
    }

    /// Normalized eigenstate of a tracked level at phase ζ.
    pub fn eigenstate_at(&self, label: usize, zeta: f64) -> Result<EllipticEigenstate> {
        let level = self.level(label)?;
        let geom = self.driving.geometry_at_phase(zeta);
        let mut state = eigenstate_near(level.quantum, &geom, level.q_at(zeta))?;
        state.label = Some(label);
        Ok(state)
    }

    /// ∫₀¹ |E_i − E_j| dζ by the periodic trapezoid rule on the grid.
    pub fn mean_energy_difference(&self, i: usize, j: usize) -> Result<f64> {
        let (a, b) = (self.level(i)?, self.level(j)?);
        Ok(a.energy
            .iter()
            .zip(&b.energy)
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            / self.n_phase as f64)
    }

    /// Extremes over ζ of E_i(ζ) − E_j(ζ), from dense interpolation.
    pub fn difference_extremes(&self, i: usize, j: usize) -> Result<(f64, f64)> {
        let (a, b) = (self.level(i)?, self.level(j)?);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for k in 0..4096 {
            let z = k as f64 / 4096.0;
            let d = a.energy_at(z) - b.energy_at(z);
            lo = lo.min(d);
            hi = hi.max(d);
        }
        Ok((hi, lo))
    }
}

fn track_level(
    driving: &DrivingLaw,
    label: usize,
    quantum: QuantumNumbers,
    base: f64,
    n: usize,
) -> Result<TrackedLevel> {
    let mut q = vec![0.0; n];
    // Walk forward in ζ from the equilibrium root, extrapolating linearly.
    let mut prev = base;
    let mut prev2 = base;
    for (j, slot) in q.iter_mut().enumerate() {
        let geom = driving.geometry_at_phase(j as f64 / n as f64);
        let guess = if j < 2 { prev } else { (2.0 * prev - prev2).max(0.5 * prev) };
        let root = if j == 0 { base } else { track_root(quantum, &geom, guess)? };
        prev2 = prev;
        prev = root;
        *slot = root;
    }
    let energy: Vec<f64> = q
        .iter()
        .enumerate()
        .map(|(j, q)| driving.geometry_at_phase(j as f64 / n as f64).energy_from_q(*q))
        .collect();
    Ok(TrackedLevel {
        label,
        quantum,
        q_series: PeriodicSeries::new(&q),
        energy_series: PeriodicSeries::new(&energy),
        q,
        energy,
    })
}

/// ∫₀¹ |E_i(ζ) − E_j(ζ)| dζ, the phase grid doubled from 32 until the value
/// changes by less than 1e−4.
pub fn mean_energy_difference(driving: &DrivingLaw, i: usize, j: usize) -> Result<f64> {
    if i == j {
        return Err(Error::InvalidParameter("mean energy difference needs i != j".into()));
    }
    let mut n = 32;
    let mut value = PhaseSpectrum::build(driving, &[i, j], n)?.mean_energy_difference(i, j)?;
    loop {
        n *= 2;
        let next = PhaseSpectrum::build(driving, &[i, j], n)?.mean_energy_difference(i, j)?;
        if (next - value).abs() < 1e-4 || n >= 4096 {
            return Ok(next);
        }
        value = next;
    }
}
