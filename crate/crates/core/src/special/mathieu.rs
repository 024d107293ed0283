//! Mathieu characteristic values and functions from truncated Fourier series.
//!
//! Conventions: y'' + (λ − 2q cos 2η) y = 0. Angular functions are normalized
//! to ∫₀^{2π} Θ² dη = π, with ce_l(0, q) > 0 and se_l'(0, q) > 0 so that the
//! functions vary continuously with q.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::tridiag::SymTridiagonal;

pub const DEFAULT_TRUNCATION: usize = 64;
const MAX_TRUNCATION: usize = 4096;
/// Largest k·ξ allowed in cosh/sinh kernels of the radial functions.
pub const COSH_OVERFLOW_BOUND: f64 = 700.0;
const TAIL_TOLERANCE: f64 = 1e-12;
const CHAR_VALUE_TOLERANCE: f64 = 1e-10;

/// Even (ce / Ce) or odd (se / Se) Mathieu function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MathieuKind {
    #[serde(rename = "e")]
    Even,
    #[serde(rename = "o")]
    Odd,
}

impl fmt::Display for MathieuKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MathieuKind::Even => write!(f, "ce"),
            MathieuKind::Odd => write!(f, "se"),
        }
    }
}

fn validate(kind: MathieuKind, order: u32, q: f64) -> Result<()> {
    if !q.is_finite() || q < 0.0 {
        return Err(Error::Domain(format!("Mathieu parameter q must be finite and >= 0, got {q}")));
    }
    if kind == MathieuKind::Odd && order == 0 {
        return Err(Error::InvalidParameter("se functions start at order 1".into()));
    }
    Ok(())
}

/// Fourier wavenumber of the j-th coefficient for functions of this class.
fn first_wavenumber(kind: MathieuKind, order: u32) -> u32 {
    match (kind, order % 2) {
        (MathieuKind::Even, 0) => 0,
        (MathieuKind::Odd, 0) => 2,
        _ => 1,
    }
}

/// Position of the order within its parity block's ascending spectrum.
fn block_position(kind: MathieuKind, order: u32) -> usize {
    match (kind, order % 2) {
        (MathieuKind::Odd, 0) => (order / 2 - 1) as usize,
        (_, 0) => (order / 2) as usize,
        _ => ((order - 1) / 2) as usize,
    }
}

/// Symmetric tridiagonal matrix of the Fourier recurrence for one parity
/// class. For the ce/even class the first unknown is scaled by √2.
fn block_matrix(kind: MathieuKind, odd_order: bool, q: f64, size: usize) -> SymTridiagonal {
    let first = first_wavenumber(kind, if odd_order { 1 } else { 2 }) as f64;
    let mut diag: Vec<f64> = (0..size)
        .map(|j| {
            let k = first + 2.0 * j as f64;
            k * k
        })
        .collect();
    let mut off = vec![q; size - 1];
    match (kind, odd_order) {
        (MathieuKind::Even, false) => {
            if size > 1 {
                off[0] = std::f64::consts::SQRT_2 * q;
            }
        }
        (MathieuKind::Even, true) => diag[0] += q,
        (MathieuKind::Odd, true) => diag[0] -= q,
        (MathieuKind::Odd, false) => {}
    }
    SymTridiagonal::new(diag, off)
}

fn block_size_for(position: usize, size: usize) -> usize {
    size.max(position + 16)
}

/// Characteristic value α_l(q) (Even) or β_l(q) (Odd), truncation doubled
/// until stable.
pub fn characteristic_value(kind: MathieuKind, order: u32, q: f64) -> Result<f64> {
    validate(kind, order, q)?;
    let position = block_position(kind, order);
    let mut size = block_size_for(position, DEFAULT_TRUNCATION);
    let mut value = block_matrix(kind, order % 2 == 1, q, size).eigenvalue(position);
    while size < MAX_TRUNCATION {
        size *= 2;
        let next = block_matrix(kind, order % 2 == 1, q, size).eigenvalue(position);
        let converged = (next - value).abs() <= CHAR_VALUE_TOLERANCE * next.abs().max(1.0);
        value = next;
        if converged {
            return Ok(value);
        }
    }
    Err(Error::Truncation { kind, order, q, size })
}

/// One characteristic value with its labels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharValue {
    pub kind: MathieuKind,
    pub order: u32,
    pub value: f64,
}

/// α_0..=α_max, β_1..=β_max in ascending order.
pub fn mathieu_char_values(q: f64, max_order: u32) -> Result<Vec<CharValue>> {
    if max_order < 1 {
        return Err(Error::InvalidParameter("max_order must be >= 1".into()));
    }
    validate(MathieuKind::Even, 0, q)?;
    let mut out = Vec::with_capacity(2 * max_order as usize + 1);
    for (kind, start) in [(MathieuKind::Even, 0u32), (MathieuKind::Odd, 1)] {
        for odd_order in [false, true] {
            let orders: Vec<u32> = (start..=max_order)
                .filter(|l| (l % 2 == 1) == odd_order)
                .collect();
            let Some(&highest) = orders.last() else { continue };
            let top = block_position(kind, highest);
            let mut size = block_size_for(top, DEFAULT_TRUNCATION);
            let values = |size: usize| {
                let t = block_matrix(kind, odd_order, q, size);
                orders
                    .iter()
                    .map(|&l| t.eigenvalue(block_position(kind, l)))
                    .collect::<Vec<_>>()
            };
            let mut current = values(size);
            loop {
                if size >= MAX_TRUNCATION {
                    return Err(Error::Truncation { kind, order: highest, q, size });
                }
                size *= 2;
                let next = values(size);
                let stable = current
                    .iter()
                    .zip(&next)
                    .all(|(a, b)| (a - b).abs() <= CHAR_VALUE_TOLERANCE * b.abs().max(1.0));
                current = next;
                if stable {
                    break;
                }
            }
            out.extend(
                orders
                    .iter()
                    .zip(current)
                    .map(|(&order, value)| CharValue { kind, order, value }),
            );
        }
    }
    out.sort_by(|a, b| a.value.total_cmp(&b.value));
    Ok(out)
}

/// Fourier expansion of one Mathieu function, shared by the angular
/// (cos/sin) and radial (cosh/sinh) forms.
#[derive(Debug, Clone, PartialEq)]
pub struct MathieuExpansion {
    pub kind: MathieuKind,
    pub order: u32,
    pub q: f64,
    pub char_value: f64,
    /// Coefficient of wavenumber `first + 2j` at index j.
    pub coeffs: Vec<f64>,
    pub truncation: usize,
}

impl MathieuExpansion {
    pub fn new(kind: MathieuKind, order: u32, q: f64) -> Result<Self> {
        Self::with_truncation(kind, order, q, DEFAULT_TRUNCATION)
    }

    /// Builds the expansion starting from truncation `size`, doubling until
    /// the last retained coefficient is negligible.
    pub fn with_truncation(kind: MathieuKind, order: u32, q: f64, size: usize) -> Result<Self> {
        validate(kind, order, q)?;
        let position = block_position(kind, order);
        let mut size = block_size_for(position, size.max(2));
        loop {
            if let Some(exp) = Self::build(kind, order, q, position, size) {
                return Ok(exp);
            }
            size *= 2;
            if size > MAX_TRUNCATION {
                return Err(Error::Truncation { kind, order, q, size });
            }
        }
    }

    fn build(kind: MathieuKind, order: u32, q: f64, position: usize, size: usize) -> Option<Self> {
        let odd_order = order % 2 == 1;
        let scaled_first = kind == MathieuKind::Even && !odd_order;
        let first = first_wavenumber(kind, order) as f64;
        let wave = |j: usize| first + 2.0 * j as f64;

        let (lambda, mut v) = if q == 0.0 {
            let mut v = vec![0.0; size];
            v[position] = 1.0;
            (wave(position) * wave(position), v)
        } else {
            let t = block_matrix(kind, odd_order, q, size);
            let lambda = t.eigenvalue(position);
            (lambda, t.eigenvector(lambda))
        };

        if q != 0.0 {
            // Tail coefficients from the minimal solution of the three-term
            // recurrence, which keeps tiny coefficients relatively accurate.
            let split = (position + 1..size)
                .find(|&j| wave(j) * wave(j) - lambda > 2.0 * q && (!scaled_first || j >= 1));
            if let Some(split) = split {
                if split + 1 < size {
                    let mut ratios = vec![0.0; size];
                    let mut r = 0.0;
                    for j in (split + 1..size).rev() {
                        r = -q / (wave(j) * wave(j) - lambda + q * r);
                        ratios[j] = r;
                    }
                    for j in split + 1..size {
                        v[j] = v[j - 1] * ratios[j];
                    }
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in v.iter_mut() {
                *x /= norm;
            }
        }

        let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if v[size - 1].abs() > TAIL_TOLERANCE * max {
            return None;
        }

        let mut coeffs = v;
        if scaled_first {
            coeffs[0] /= std::f64::consts::SQRT_2;
        }
        let orientation: f64 = match kind {
            MathieuKind::Even => coeffs.iter().sum(),
            MathieuKind::Odd => coeffs.iter().enumerate().map(|(j, c)| wave(j) * c).sum(),
        };
        if orientation < 0.0 {
            for c in coeffs.iter_mut() {
                *c = -*c;
            }
        }
        let last = coeffs.iter().rposition(|c| *c != 0.0).unwrap_or(0);
        coeffs.truncate(last + 1);
        Some(Self { kind, order, q, char_value: lambda, coeffs, truncation: size })
    }

    /// Fourier wavenumber of coefficient j.
    pub fn wavenumber(&self, j: usize) -> f64 {
        first_wavenumber(self.kind, self.order) as f64 + 2.0 * j as f64
    }

    fn terms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(j, c)| (self.wavenumber(j), *c))
    }

    /// Σ c_j T(k_j x), where T(kx) obeys T((k+2)x) = 2 D T(kx) − T((k−2)x)
    /// with D = cos 2x or cosh 2x; `first` and `second` are T(k_0 x) and
    /// T((k_0+2) x).
    fn recurrence_sum(&self, double: f64, first: f64, second: f64) -> f64 {
        let mut prev = first;
        let mut cur = second;
        let mut acc = self.coeffs[0] * first;
        if let Some(c) = self.coeffs.get(1) {
            acc += c * second;
        }
        for c in self.coeffs.iter().skip(2) {
            let next = 2.0 * double * cur - prev;
            prev = cur;
            cur = next;
            acc += c * cur;
        }
        acc
    }

    /// Θ_l(η): ce or se.
    pub fn angular(&self, eta: f64) -> f64 {
        let k0 = self.wavenumber(0);
        let d = (2.0 * eta).cos();
        match self.kind {
            MathieuKind::Even => self.recurrence_sum(d, (k0 * eta).cos(), ((k0 + 2.0) * eta).cos()),
            MathieuKind::Odd => self.recurrence_sum(d, (k0 * eta).sin(), ((k0 + 2.0) * eta).sin()),
        }
    }

    pub fn angular_derivative(&self, eta: f64) -> f64 {
        match self.kind {
            MathieuKind::Even => self.terms().map(|(k, c)| -c * k * (k * eta).sin()).sum(),
            MathieuKind::Odd => self.terms().map(|(k, c)| c * k * (k * eta).cos()).sum(),
        }
    }

    fn check_overflow(&self, xi: f64) -> Result<()> {
        if let Some((k, _)) = self.terms().last() {
            if k * xi > COSH_OVERFLOW_BOUND {
                return Err(Error::Overflow { value: k * xi, bound: COSH_OVERFLOW_BOUND });
            }
        }
        Ok(())
    }

    /// R_l(ξ): Ce or Se, obtained from the angular series by η = iξ.
    pub fn radial(&self, xi: f64) -> Result<f64> {
        if xi < 0.0 {
            return Err(Error::Domain(format!("radial coordinate must be >= 0, got {xi}")));
        }
        self.check_overflow(xi)?;
        let k0 = self.wavenumber(0);
        let d = (2.0 * xi).cosh();
        Ok(match self.kind {
            MathieuKind::Even => self.recurrence_sum(d, (k0 * xi).cosh(), ((k0 + 2.0) * xi).cosh()),
            MathieuKind::Odd => self.recurrence_sum(d, (k0 * xi).sinh(), ((k0 + 2.0) * xi).sinh()),
        })
    }

    pub fn radial_derivative(&self, xi: f64) -> Result<f64> {
        self.check_overflow(xi)?;
        Ok(match self.kind {
            MathieuKind::Even => self.terms().map(|(k, c)| c * k * (k * xi).sinh()).sum(),
            MathieuKind::Odd => self.terms().map(|(k, c)| c * k * (k * xi).cosh()).sum(),
        })
    }

    /// Number of sign changes of R_l on the open interval (0, xi_max),
    /// sampled at `samples` interior points.
    pub fn radial_sign_changes(&self, xi_max: f64, samples: usize) -> Result<usize> {
        let mut count = 0;
        let mut prev = 0.0f64;
        for i in 1..samples {
            let v = self.radial(xi_max * i as f64 / samples as f64)?;
            if v != 0.0 {
                if prev != 0.0 && v.signum() != prev.signum() {
                    count += 1;
                }
                prev = v;
            }
        }
        Ok(count)
    }
}
