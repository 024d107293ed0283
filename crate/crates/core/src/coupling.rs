//! Time-independent coupling tensors of the transformed Hamiltonian in the
//! circular-billiard basis Φ_{n,m} = √2 J_m(k_{m,n} r) / J_{m+1}(k_{m,n}) ·
//! e^{imφ}/√(2π).
//!
//! The instantaneous Hamiltonian is
//!   H_{(n,m),(n',m)}   = g1 f1 + g2 f2,
//!   H_{(n,m),(n',m-2)} = g3 f3 + g4 f4,
//!   H_{(n,m),(n',m+2)} = g3 f5 + g4 f6,
//! with every tensor built from integrals
//!   I(q, p, s) = ∫₀¹ J_m(k_{m,n} r) J_{m+q}(k_{m+p,n'} r) r^s dr.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::special::bessel::{bessel_j_orders, bessel_zeros, signed_order, BesselZeroTable};
use crate::special::quadrature::composite_grid;

pub const DEFAULT_QUAD_ORDER: usize = 16;
const FILE_MAGIC: &[u8; 8] = b"BBCOUPLE";
const HEADER_MAGIC: &str = "breathing-billiard/coupling-table";
pub const FORMAT_VERSION: u32 = 1;

/// Linear index over (n, m), m-major and n-minor:
/// i = (m + M)·N + (n − 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisIndex {
    pub n_max: usize,
    pub m_max: usize,
}

impl BasisIndex {
    pub fn len(&self) -> usize {
        (2 * self.m_max + 1) * self.n_max
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn linear(&self, n: usize, m: i32) -> Option<usize> {
        if n == 0 || n > self.n_max || m.unsigned_abs() as usize > self.m_max {
            return None;
        }
        Some((m + self.m_max as i32) as usize * self.n_max + n - 1)
    }

    pub fn from_linear(&self, i: usize) -> Option<(usize, i32)> {
        if i >= self.len() {
            return None;
        }
        Some((i % self.n_max + 1, (i / self.n_max) as i32 - self.m_max as i32))
    }
}

/// Reading of the fifteenth auxiliary integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum L15Reading {
    /// I(3, 2, 0): order m+3 at the zeros of order m+2.
    Consistent,
    /// I(3, 3, 0) exactly as typeset; kept for audit, breaks Hermiticity.
    AsPrinted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tensor {
    F1,
    F2,
    F3,
    F4,
    F5,
    F6,
}

/// (order offset q, zero offset p, power s) of L¹..L¹⁸.
fn l_spec(l15: L15Reading) -> [(i32, i32, i32); 18] {
    [
        (-2, 0, 1),
        (0, 0, 1),
        (2, 0, 1),
        (0, 2, 1),
        (2, 2, 1),
        (4, 2, 1),
        (-4, -2, 1),
        (-2, -2, 1),
        (0, -2, 1),
        (-1, 0, 0),
        (1, 0, 0),
        (-3, -2, 0),
        (-1, -2, 0),
        (1, 2, 0),
        match l15 {
            L15Reading::Consistent => (3, 2, 0),
            L15Reading::AsPrinted => (3, 3, 0),
        },
        (0, 0, 3),
        (2, 2, 3),
        (-2, -2, 3),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableOptions {
    pub quad_order: usize,
    pub l15: L15Reading,
    pub keep_audit: bool,
}

impl Default for TableOptions {
    fn default() -> Self {
        Self { quad_order: DEFAULT_QUAD_ORDER, l15: L15Reading::Consistent, keep_audit: false }
    }
}

/// L¹..L¹⁸ for one (n, m, n'); entries whose partner order lies outside the
/// basis are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditEntry {
    pub n: usize,
    pub m: i32,
    pub n2: usize,
    pub l: [Option<f64>; 18],
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingTable {
    pub n_max: usize,
    pub m_max: usize,
    pub quad_order: usize,
    pub l15: L15Reading,
    pub zeros: BesselZeroTable,
    f1: Vec<f64>,
    f2: Vec<f64>,
    f3: Vec<f64>,
    f4: Vec<f64>,
    f5: Vec<f64>,
    f6: Vec<f64>,
    pub checksum: String,
    pub audit: Option<Vec<AuditEntry>>,
}

impl CouplingTable {
    pub fn index(&self) -> BasisIndex {
        BasisIndex { n_max: self.n_max, m_max: self.m_max }
    }

    /// Range of m for which a tensor is defined.
    fn m_range(&self, which: Tensor) -> (i32, i32) {
        let mm = self.m_max as i32;
        match which {
            Tensor::F1 | Tensor::F2 => (-mm, mm),
            Tensor::F3 | Tensor::F4 => (-mm + 2, mm),
            Tensor::F5 | Tensor::F6 => (-mm, mm - 2),
        }
    }

    fn data(&self, which: Tensor) -> &[f64] {
        match which {
            Tensor::F1 => &self.f1,
            Tensor::F2 => &self.f2,
            Tensor::F3 => &self.f3,
            Tensor::F4 => &self.f4,
            Tensor::F5 => &self.f5,
            Tensor::F6 => &self.f6,
        }
    }

    /// N×N block (row n, column n') of a tensor at azimuthal number m, or
    /// `None` where the m∓2 partner lies outside the basis.
    pub fn block(&self, which: Tensor, m: i32) -> Option<&[f64]> {
        let (lo, hi) = self.m_range(which);
        if m < lo || m > hi {
            return None;
        }
        let nn = self.n_max * self.n_max;
        let start = (m - lo) as usize * nn;
        Some(&self.data(which)[start..start + nn])
    }

    pub fn get(&self, which: Tensor, n: usize, m: i32, n2: usize) -> Option<f64> {
        if n == 0 || n2 == 0 || n > self.n_max || n2 > self.n_max {
            return None;
        }
        self.block(which, m).map(|b| b[(n - 1) * self.n_max + n2 - 1])
    }

    /// k_{m,n} for the table's zeros.
    pub fn wavenumber(&self, n: usize, m: i32) -> f64 {
        self.zeros.get(m, n).expect("index inside the table")
    }

    fn all_tensors(&self) -> [&[f64]; 6] {
        [&self.f1, &self.f2, &self.f3, &self.f4, &self.f5, &self.f6]
    }
}

/// √2 / J_{m+1}(k_{m,n}) with the signed-order convention.
pub fn basis_normalization(k: f64, m: i32) -> f64 {
    let mut buf = Vec::new();
    bessel_j_orders(m.unsigned_abs() as usize + 1, k, &mut buf);
    std::f64::consts::SQRT_2 / signed_order(&buf, m + 1)
}

fn integrate_fixed(m: i32, q: i32, s: i32, k1: f64, k2: f64, panels: usize) -> f64 {
    let (x, w) = composite_grid(0.0, 1.0, panels, DEFAULT_QUAD_ORDER);
    let mut b1 = Vec::new();
    let mut b2 = Vec::new();
    x.iter()
        .zip(&w)
        .map(|(r, w)| {
            bessel_j_orders(m.unsigned_abs() as usize, k1 * r, &mut b1);
            bessel_j_orders((m + q).unsigned_abs() as usize, k2 * r, &mut b2);
            w * signed_order(&b1, m) * signed_order(&b2, m + q) * r.powi(s)
        })
        .sum()
}

/// I(q, p, s) = ∫₀¹ J_m(k_{m,n} r) J_{m+q}(k_{m+p,n'} r) r^s dr, by composite
/// Gauss–Legendre with the panel count doubled until two estimates agree to
/// 1e−13.
pub fn bessel_product_integral(n: usize, m: i32, n2: usize, q: i32, p: i32, s: i32) -> Result<f64> {
    if n == 0 || n2 == 0 {
        return Err(Error::InvalidParameter("radial indices start at 1".into()));
    }
    if s < 0 {
        return Err(Error::InvalidParameter(format!("power must be >= 0, got {s}")));
    }
    let k1 = bessel_zeros(m.unsigned_abs(), n)[n - 1];
    let k2 = bessel_zeros((m + p).unsigned_abs(), n2)[n2 - 1];
    let mut panels = ((k1 + k2) / std::f64::consts::PI).ceil() as usize + 2;
    let mut value = integrate_fixed(m, q, s, k1, k2, panels);
    let mut estimate = f64::INFINITY;
    for _ in 0..8 {
        panels *= 2;
        let next = integrate_fixed(m, q, s, k1, k2, panels);
        estimate = (next - value).abs();
        value = next;
        if estimate < 1e-13 {
            return Ok(value);
        }
    }
    Err(Error::Quadrature { estimate })
}

/// Bessel values J_μ(k_{ν,n} r_j), μ = 0..=ν+2, on the shared radial grid.
struct BesselGrid {
    /// [ν][n−1] → flattened [μ][j]
    values: Vec<Vec<Vec<f64>>>,
    points: usize,
}

impl BesselGrid {
    fn new(zeros: &BesselZeroTable, n_max: usize, radii: &[f64]) -> Self {
        let max_family = zeros.max_order() as usize;
        let values = (0..=max_family)
            .into_par_iter()
            .map(|nu| {
                let top = nu + 2;
                (1..=n_max)
                    .map(|n| {
                        let k = zeros.get(nu as i32, n).expect("zero in table");
                        let mut flat = vec![0.0; (top + 1) * radii.len()];
                        let mut buf = Vec::new();
                        for (j, r) in radii.iter().enumerate() {
                            bessel_j_orders(top, k * r, &mut buf);
                            for mu in 0..=top {
                                flat[mu * radii.len() + j] = buf[mu];
                            }
                        }
                        flat
                    })
                    .collect()
            })
            .collect();
        Self { values, points: radii.len() }
    }

    /// J_order(k_{family,n} r) as a slice over the grid, with its sign from the
    /// negative-order reflection.
    fn column(&self, family: i32, n: usize, order: i32) -> (f64, &[f64]) {
        let mu = order.unsigned_abs() as usize;
        let flat = &self.values[family.unsigned_abs() as usize][n - 1];
        let sign = if order < 0 && mu % 2 == 1 { -1.0 } else { 1.0 };
        (sign, &flat[mu * self.points..(mu + 1) * self.points])
    }
}

/// Composite Gauss–Legendre grid on [0, 1] with cached Bessel columns.
struct RadialGrid {
    bessel: BesselGrid,
    /// Quadrature weight times r^s, s = 0..=3.
    powers: Vec<[f64; 4]>,
}

impl RadialGrid {
    fn new(zeros: &BesselZeroTable, n_max: usize, quad_order: usize) -> Self {
        let k_top = zeros.get(zeros.max_order() as i32, n_max).expect("zero in table");
        // One panel per half wavelength of the fastest product oscillation.
        let panels = (2.0 * k_top / std::f64::consts::PI).ceil() as usize + 4;
        let (radii, weights) = composite_grid(0.0, 1.0, panels, quad_order);
        let bessel = BesselGrid::new(zeros, n_max, &radii);
        let powers = radii.iter().zip(&weights).map(|(r, w)| [*w, w * r, w * r * r, w * r * r * r]).collect();
        Self { bessel, powers }
    }

    /// ∫₀¹ J_{o1}(k_{f1,n1} r) J_{o2}(k_{f2,n2} r) r^s dr.
    #[allow(clippy::too_many_arguments)]
    fn product(&self, f1: i32, n1: usize, o1: i32, f2: i32, n2: usize, o2: i32, s: usize) -> f64 {
        let (s1, a) = self.bessel.column(f1, n1, o1);
        let (s2, b) = self.bessel.column(f2, n2, o2);
        let mut acc = 0.0;
        for j in 0..a.len() {
            acc += a[j] * b[j] * self.powers[j][s];
        }
        s1 * s2 * acc
    }
}

fn build_with_grid(n_max: usize, m_max: usize, options: TableOptions) -> Result<CouplingTable> {
    let zeros = BesselZeroTable::new(m_max as u32 + 3, n_max);
    let grid = RadialGrid::new(&zeros, n_max, options.quad_order);
    let spec = l_spec(options.l15);
    let mm = m_max as i32;

    let integral = |m: i32, n: usize, n2: usize, idx: usize| -> f64 {
        let (q, p, s) = spec[idx];
        grid.product(m, n, m, m + p, n2, m + q, s as usize)
    };

    let per_m: Vec<(i32, Vec<[Option<f64>; 6]>, Vec<AuditEntry>)> = (-mm..=mm)
        .into_par_iter()
        .map(|m| {
            let mut cells = Vec::with_capacity(n_max * n_max);
            let mut audit = Vec::new();
            let has_lower = m - 2 >= -mm;
            let has_upper = m + 2 <= mm;
            for n in 1..=n_max {
                let k = zeros.get(m, n).unwrap();
                let jm1 = j_at(m + 1, k);
                for n2 in 1..=n_max {
                    let mut l = [None; 18];
                    for idx in [0, 1, 2, 9, 10, 15] {
                        l[idx] = Some(integral(m, n, n2, idx));
                    }
                    if has_lower {
                        for idx in [6, 7, 8, 11, 12, 17] {
                            l[idx] = Some(integral(m, n, n2, idx));
                        }
                    }
                    if has_upper {
                        for idx in [3, 4, 5, 13, 14, 16] {
                            l[idx] = Some(integral(m, n, n2, idx));
                        }
                    }
                    let v = |i: usize| l[i - 1].unwrap_or(f64::NAN);
                    let mf = m as f64;
                    let mut out = [None; 6];

                    let kp = zeros.get(m, n2).unwrap();
                    let den = jm1 * j_at(m + 1, kp);
                    out[0] = Some(
                        (kp * kp * (v(1) - 2.0 * v(2) + v(3))
                            - 2.0 * kp * (mf - 1.0) * v(10)
                            - 2.0 * kp * (mf + 1.0) * v(11))
                            / (8.0 * den),
                    );
                    out[1] = Some(v(16) / (2.0 * den));

                    if has_lower {
                        let kl = zeros.get(m - 2, n2).unwrap();
                        let den = jm1 * j_at(m - 1, kl);
                        out[2] = Some(
                            -(kl * kl * (v(7) - 2.0 * v(8) + v(9)) + 6.0 * kl * (mf - 1.0) * v(13)
                                - 2.0 * kl * (mf - 3.0) * v(12))
                                / (16.0 * den),
                        );
                        out[3] = Some(v(18) / (4.0 * den));
                    }
                    if has_upper {
                        let ku = zeros.get(m + 2, n2).unwrap();
                        let den = jm1 * j_at(m + 3, ku);
                        out[4] = Some(
                            -(ku * ku * (v(4) - 2.0 * v(5) + v(6)) + 6.0 * ku * (mf + 1.0) * v(14)
                                - 2.0 * ku * (mf + 3.0) * v(15))
                                / (16.0 * den),
                        );
                        out[5] = Some(v(17) / (4.0 * den));
                    }
                    cells.push(out);
                    if options.keep_audit {
                        audit.push(AuditEntry { n, m, n2, l });
                    }
                }
            }
            (m, cells, audit)
        })
        .collect();

    let mut tensors: [Vec<f64>; 6] = Default::default();
    let mut audit = Vec::new();
    for (m, cells, entries) in per_m {
        for (t, tensor) in tensors.iter_mut().enumerate() {
            let defined = match t {
                0 | 1 => true,
                2 | 3 => m - 2 >= -mm,
                _ => m + 2 <= mm,
            };
            if defined {
                tensor.extend(cells.iter().map(|c| c[t].expect("defined entry")));
            }
        }
        audit.extend(entries);
    }
    for t in &tensors {
        if let Some(bad) = t.iter().find(|v| !v.is_finite()) {
            return Err(Error::Quadrature { estimate: *bad });
        }
    }
    let [f1, f2, f3, f4, f5, f6] = tensors;
    let mut table = CouplingTable {
        n_max,
        m_max,
        quad_order: options.quad_order,
        l15: options.l15,
        zeros,
        f1,
        f2,
        f3,
        f4,
        f5,
        f6,
        checksum: String::new(),
        audit: options.keep_audit.then_some(audit),
    };
    table.checksum = hex_digest(&payload_bytes(&table));
    Ok(table)
}

fn j_at(order: i32, x: f64) -> f64 {
    let mut buf = Vec::new();
    bessel_j_orders(order.unsigned_abs() as usize, x, &mut buf);
    signed_order(&buf, order)
}

/// Builds all six tensors for radial indices 1..=N and m ∈ [−M, M].
pub fn build_tables(n_max: usize, m_max: usize, quad_order: usize) -> Result<CouplingTable> {
    build_tables_with(n_max, m_max, TableOptions { quad_order, ..TableOptions::default() })
}

pub fn build_tables_with(n_max: usize, m_max: usize, options: TableOptions) -> Result<CouplingTable> {
    if n_max < 1 || m_max < 1 {
        return Err(Error::InvalidParameter(format!(
            "table needs N >= 1 and M >= 1, got N = {n_max}, M = {m_max}"
        )));
    }
    if options.quad_order < 4 {
        return Err(Error::InvalidParameter("quadrature order must be at least 4".into()));
    }
    build_with_grid(n_max, m_max, options)
}

/// Matrices of the dilation generators in the circular basis, needed for the
/// lab-frame energy: r∂_r + 1 (m-diagonal) and z̄∂_z + z∂_z̄ (m ↔ m±2). Both
/// operators are anti-Hermitian, so the stored real matrices are
/// antisymmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct DilationTable {
    pub n_max: usize,
    pub m_max: usize,
    /// Per m ∈ [−M, M]: ⟨Φ_{n,m}|(r∂_r + 1)|Φ_{n',m}⟩.
    radial: Vec<f64>,
    /// Per m ∈ [−M+2, M]: ⟨Φ_{n,m−2}|z̄∂_z|Φ_{n',m}⟩.
    lower: Vec<f64>,
    /// Per m ∈ [−M, M−2]: ⟨Φ_{n,m+2}|z∂_z̄|Φ_{n',m}⟩.
    upper: Vec<f64>,
}

impl DilationTable {
    pub fn build(table: &CouplingTable) -> Result<Self> {
        let (n_max, m_max) = (table.n_max, table.m_max);
        let zeros = &table.zeros;
        let grid = RadialGrid::new(zeros, n_max, table.quad_order);
        let mm = m_max as i32;
        let norm = |n: usize, m: i32| basis_normalization(zeros.get(m, n).unwrap(), m);
        let blocks: Vec<[Vec<f64>; 3]> = (-mm..=mm)
            .into_par_iter()
            .map(|m| {
                let mut radial = Vec::with_capacity(n_max * n_max);
                let mut lower = Vec::new();
                let mut upper = Vec::new();
                for n in 1..=n_max {
                    for n2 in 1..=n_max {
                        let k2 = zeros.get(m, n2).unwrap();
                        let d = 0.5 * k2 * (grid.product(m, n, m, m, n2, m - 1, 2) - grid.product(m, n, m, m, n2, m + 1, 2))
                            + grid.product(m, n, m, m, n2, m, 1);
                        radial.push(norm(n, m) * norm(n2, m) * d);
                        if m - 2 >= -mm {
                            let v = grid.product(m - 2, n, m - 2, m, n2, m - 1, 2);
                            lower.push(norm(n, m - 2) * norm(n2, m) * 0.5 * k2 * v);
                        }
                        if m + 2 <= mm {
                            let v = grid.product(m + 2, n, m + 2, m, n2, m + 1, 2);
                            upper.push(-norm(n, m + 2) * norm(n2, m) * 0.5 * k2 * v);
                        }
                    }
                }
                [radial, lower, upper]
            })
            .collect();
        let mut out = Self { n_max, m_max, radial: Vec::new(), lower: Vec::new(), upper: Vec::new() };
        for [r, l, u] in blocks {
            out.radial.extend(r);
            out.lower.extend(l);
            out.upper.extend(u);
        }
        if out.radial.iter().chain(&out.lower).chain(&out.upper).any(|v| !v.is_finite()) {
            return Err(Error::Quadrature { estimate: f64::NAN });
        }
        Ok(out)
    }

    /// Element ⟨Φ_{n,m}|D|Φ_{n',m'}⟩ of (r∂_r + 1) for `radial = true`,
    /// otherwise of z̄∂_z + z∂_z̄.
    pub fn element(&self, radial: bool, n: usize, m: i32, n2: usize, m2: i32) -> f64 {
        let (nm, mm) = (self.n_max, self.m_max as i32);
        if n == 0 || n2 == 0 || n > nm || n2 > nm || m.abs() > mm || m2.abs() > mm {
            return 0.0;
        }
        let cell = (n - 1) * nm + n2 - 1;
        let nn = nm * nm;
        if radial {
            return if m == m2 { self.radial[(m + mm) as usize * nn + cell] } else { 0.0 };
        }
        if m == m2 - 2 {
            self.lower[(m2 - (-mm + 2)) as usize * nn + cell]
        } else if m == m2 + 2 {
            self.upper[(m2 + mm) as usize * nn + cell]
        } else {
            0.0
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    magic: String,
    version: u32,
    n_max: usize,
    m_max: usize,
    quad_order: usize,
    l15: L15Reading,
    checksum: String,
    zero_count: usize,
    tensor_lengths: [usize; 6],
}

fn payload_bytes(table: &CouplingTable) -> Vec<u8> {
    let mut bytes = Vec::new();
    for m in 0..=table.zeros.max_order() as i32 {
        for n in 1..=table.zeros.count() {
            bytes.extend_from_slice(&table.zeros.get(m, n).unwrap().to_le_bytes());
        }
    }
    for t in table.all_tensors() {
        for v in t {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    bytes
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes the table as magic, header length (u32 LE), JSON header and a
/// little-endian f64 payload.
pub fn save_table(table: &CouplingTable, path: &Path) -> Result<()> {
    let payload = payload_bytes(table);
    let header = Header {
        magic: HEADER_MAGIC.into(),
        version: FORMAT_VERSION,
        n_max: table.n_max,
        m_max: table.m_max,
        quad_order: table.quad_order,
        l15: table.l15,
        checksum: hex_digest(&payload),
        zero_count: (table.zeros.max_order() as usize + 1) * table.zeros.count(),
        tensor_lengths: table.all_tensors().map(<[f64]>::len),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Header(e.to_string()))?;
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut file = fs::File::create(path)?;
    file.write_all(FILE_MAGIC)?;
    file.write_all(&(json.len() as u32).to_le_bytes())?;
    file.write_all(&json)?;
    file.write_all(&payload)?;
    file.flush()?;
    Ok(())
}

pub fn load_table(path: &Path) -> Result<CouplingTable> {
    let bytes = fs::read(path)?;
    let truncated = |detail: &str| Error::Truncated { path: path.to_path_buf(), detail: detail.into() };
    if bytes.len() < 12 {
        return Err(truncated("file shorter than the fixed preamble"));
    }
    if &bytes[..8] != FILE_MAGIC {
        return Err(Error::Header("not a coupling-table file (bad magic)".into()));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if bytes.len() < 12 + header_len {
        return Err(truncated("header cut short"));
    }
    let header: Header =
        serde_json::from_slice(&bytes[12..12 + header_len]).map_err(|e| Error::Header(e.to_string()))?;
    if header.magic != HEADER_MAGIC {
        return Err(Error::Header(format!("unexpected header magic {:?}", header.magic)));
    }
    if header.version != FORMAT_VERSION {
        return Err(Error::Version { found: header.version, expected: FORMAT_VERSION });
    }
    let n = header.n_max;
    let mm = header.m_max;
    let nn = n * n;
    let expected_lengths = [
        (2 * mm + 1) * nn,
        (2 * mm + 1) * nn,
        (2 * mm - 1) * nn,
        (2 * mm - 1) * nn,
        (2 * mm - 1) * nn,
        (2 * mm - 1) * nn,
    ];
    if header.tensor_lengths != expected_lengths || header.zero_count != (mm + 4) * n {
        return Err(Error::Header("tensor sizes inconsistent with N and M".into()));
    }
    let payload = &bytes[12 + header_len..];
    let values = header.zero_count + expected_lengths.iter().sum::<usize>();
    if payload.len() != 8 * values {
        return Err(truncated(&format!("payload has {} bytes, expected {}", payload.len(), 8 * values)));
    }
    let found = hex_digest(payload);
    if found != header.checksum {
        return Err(Error::Checksum { path: path.to_path_buf(), expected: header.checksum, found });
    }
    let mut floats = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let zero_rows: Vec<Vec<f64>> = (0..mm + 4).map(|_| floats.by_ref().take(n).collect()).collect();
    let zeros = BesselZeroTable::from_rows(zero_rows);
    let mut take = |len: usize| -> Vec<f64> { floats.by_ref().take(len).collect() };
    let f1 = take(expected_lengths[0]);
    let f2 = take(expected_lengths[1]);
    let f3 = take(expected_lengths[2]);
    let f4 = take(expected_lengths[3]);
    let f5 = take(expected_lengths[4]);
    let f6 = take(expected_lengths[5]);
    Ok(CouplingTable {
        n_max: n,
        m_max: mm,
        quad_order: header.quad_order,
        l15: header.l15,
        zeros,
        f1,
        f2,
        f3,
        f4,
        f5,
        f6,
        checksum: found,
        audit: None,
    })
}

/// Loads a cached table and checks that it covers the requested basis.
pub fn load_table_for(path: &Path, n_max: usize, m_max: usize) -> Result<CouplingTable> {
    let table = load_table(path)?;
    if table.n_max < n_max || table.m_max < m_max {
        return Err(Error::InsufficientBasis {
            have_n: table.n_max,
            have_m: table.m_max,
            want_n: n_max,
            want_m: m_max,
        });
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composite Simpson rule with a fine fixed step, independent of the
    /// Gauss–Legendre machinery.
    fn simpson_oracle(n: usize, m: i32, n2: usize, q: i32, p: i32, s: i32) -> f64 {
        let k1 = bessel_zeros(m.unsigned_abs(), n)[n - 1];
        let k2 = bessel_zeros((m + p).unsigned_abs(), n2)[n2 - 1];
        let f = |r: f64| j_at(m, k1 * r) * j_at(m + q, k2 * r) * r.powi(s);
        let steps = 20_000;
        let h = 1.0 / steps as f64;
        let mut acc = f(0.0) + f(1.0);
        for i in 1..steps {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn basis_index_round_trip() {
        let idx = BasisIndex { n_max: 3, m_max: 2 };
        assert_eq!(idx.len(), 15);
        for i in 0..idx.len() {
            let (n, m) = idx.from_linear(i).unwrap();
            assert_eq!(idx.linear(n, m), Some(i));
        }
        assert_eq!(idx.linear(1, -2), Some(0));
        assert_eq!(idx.linear(4, 0), None);
        assert_eq!(idx.linear(1, 3), None);
    }

    #[test]
    fn normalization_integral() {
        for (n, m) in [(1usize, 0i32), (3, 2), (2, -3), (5, 7)] {
            let k = bessel_zeros(m.unsigned_abs(), n)[n - 1];
            let want = 0.5 * j_at(m + 1, k).powi(2);
            let got = bessel_product_integral(n, m, n, 0, 0, 1).unwrap();
            assert!((got - want).abs() < 1e-13, "{n} {m}: {got} vs {want}");
        }
    }

    #[test]
    fn zeros_of_one_order_are_orthogonal() {
        assert!(bessel_product_integral(1, 2, 3, 0, 0, 1).unwrap().abs() < 1e-13);
        assert!(bessel_product_integral(4, -1, 2, 0, 0, 1).unwrap().abs() < 1e-13);
    }

    #[test]
    fn product_integral_matches_simpson() {
        for (n, m, n2, q, p, s) in [(1, 0, 1, 2, 2, 3), (2, 1, 3, -1, 0, 0), (3, -2, 1, 3, 2, 0)] {
            let got = bessel_product_integral(n, m, n2, q, p, s).unwrap();
            let want = simpson_oracle(n, m, n2, q, p, s);
            assert!((got - want).abs() < 1e-11, "{got} vs {want}");
        }
    }

    #[test]
    fn diagonal_kinetic_tensor() {
        let t = build_tables(4, 3, DEFAULT_QUAD_ORDER).unwrap();
        for m in -3..=3 {
            for n in 1..=4 {
                for n2 in 1..=4 {
                    let k = t.wavenumber(n, m);
                    let want = if n == n2 { -0.25 * k * k } else { 0.0 };
                    let got = t.get(Tensor::F1, n, m, n2).unwrap();
                    assert!((got - want).abs() < 1e-10 * k * k, "f1({n},{m},{n2}) = {got}");
                }
            }
        }
    }

    #[test]
    fn second_moment_tensor_matches_direct_integral() {
        let t = build_tables(3, 2, DEFAULT_QUAD_ORDER).unwrap();
        let (n, m, n2) = (2, -1, 3);
        let direct = bessel_product_integral(n, m, n2, 0, 0, 3).unwrap()
            * basis_normalization(t.wavenumber(n, m), m)
            * basis_normalization(t.wavenumber(n2, m), m)
            / 4.0;
        assert!((t.get(Tensor::F2, n, m, n2).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn partners_outside_the_basis_are_absent() {
        let t = build_tables(2, 2, DEFAULT_QUAD_ORDER).unwrap();
        assert!(t.get(Tensor::F3, 1, -1, 1).is_none());
        assert!(t.get(Tensor::F3, 1, 0, 1).is_some());
        assert!(t.get(Tensor::F5, 1, 1, 1).is_none());
        assert!(t.get(Tensor::F6, 1, 0, 2).is_some());
        assert!(t.get(Tensor::F1, 3, 0, 1).is_none());
    }

    #[test]
    fn smallest_table_builds() {
        let t = build_tables(1, 1, DEFAULT_QUAD_ORDER).unwrap();
        assert!(t.block(Tensor::F3, 0).is_none());
        assert!(t.block(Tensor::F3, 1).is_some());
        assert!(t.all_tensors().iter().all(|v| v.iter().all(|x| x.is_finite())));
        assert!(build_tables(0, 1, DEFAULT_QUAD_ORDER).is_err());
    }

    #[test]
    fn off_diagonal_tensors_are_mutual_transposes() {
        let t = build_tables(5, 4, DEFAULT_QUAD_ORDER).unwrap();
        for m in -4..=2 {
            for n in 1..=5 {
                for n2 in 1..=5 {
                    let up5 = t.get(Tensor::F5, n, m, n2).unwrap();
                    let down3 = t.get(Tensor::F3, n2, m + 2, n).unwrap();
                    assert!((up5 - down3).abs() < 1e-10 * (1.0 + up5.abs()), "{m} {n} {n2}");
                    let up6 = t.get(Tensor::F6, n, m, n2).unwrap();
                    let down4 = t.get(Tensor::F4, n2, m + 2, n).unwrap();
                    assert!((up6 - down4).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn printed_fifteenth_integral_breaks_symmetry() {
        let options = TableOptions { l15: L15Reading::AsPrinted, ..TableOptions::default() };
        let t = build_tables_with(3, 2, options).unwrap();
        let worst = (1..=3)
            .flat_map(|n| (1..=3).map(move |n2| (n, n2)))
            .map(|(n, n2)| {
                (t.get(Tensor::F5, n, 0, n2).unwrap() - t.get(Tensor::F3, n2, 2, n).unwrap()).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst > 1e-3, "as-printed reading unexpectedly symmetric: {worst}");
    }

    #[test]
    fn quadrature_order_is_converged() {
        let a = build_tables(4, 3, 16).unwrap();
        let b = build_tables(4, 3, 32).unwrap();
        for (x, y) in a.all_tensors().iter().zip(b.all_tensors()) {
            for (u, v) in x.iter().zip(y) {
                assert!((u - v).abs() < 1e-10, "{u} vs {v}");
            }
        }
    }

    #[test]
    fn build_is_deterministic() {
        let a = build_tables(3, 3, DEFAULT_QUAD_ORDER).unwrap();
        let b = build_tables(3, 3, DEFAULT_QUAD_ORDER).unwrap();
        assert_eq!(a.checksum, b.checksum);
    }

    #[test]
    fn audit_keeps_the_raw_integrals() {
        let options = TableOptions { keep_audit: true, ..TableOptions::default() };
        let t = build_tables_with(2, 2, options).unwrap();
        let audit = t.audit.as_ref().unwrap();
        assert_eq!(audit.len(), 5 * 4);
        let e = audit.iter().find(|e| (e.n, e.m, e.n2) == (1, 1, 2)).unwrap();
        let direct = bessel_product_integral(1, 1, 2, -1, 0, 0).unwrap();
        assert!((e.l[9].unwrap() - direct).abs() < 1e-12);
        assert!(e.l[3].is_none());
    }

    #[test]
    fn dilation_generators_are_antisymmetric() {
        let t = build_tables(5, 4, DEFAULT_QUAD_ORDER).unwrap();
        let d = DilationTable::build(&t).unwrap();
        for m in -4..=4 {
            for m2 in [m - 2, m, m + 2] {
                for n in 1..=5 {
                    for n2 in 1..=5 {
                        for radial in [true, false] {
                            let a = d.element(radial, n, m, n2, m2);
                            let b = d.element(radial, n2, m2, n, m);
                            assert!((a + b).abs() < 1e-9 * (1.0 + a.abs()), "{radial} {n} {m} {n2} {m2}: {a} {b}");
                        }
                    }
                }
            }
        }
        assert_eq!(d.element(true, 1, 0, 1, 2), 0.0);
        assert!(d.element(true, 1, 0, 2, 0).abs() > 0.1);
    }

    #[test]
    fn save_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        let t = build_tables(3, 2, DEFAULT_QUAD_ORDER).unwrap();
        save_table(&t, &path).unwrap();
        let back = load_table(&path).unwrap();
        assert_eq!(back.checksum, t.checksum);
        assert_eq!(back.all_tensors(), t.all_tensors());
        assert_eq!(back.zeros, t.zeros);
        assert!(matches!(load_table_for(&path, 4, 2), Err(Error::InsufficientBasis { .. })));
        assert!(load_table_for(&path, 2, 1).is_ok());
    }

    #[test]
    fn damaged_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        save_table(&build_tables(2, 1, DEFAULT_QUAD_ORDER).unwrap(), &path).unwrap();
        let good = fs::read(&path).unwrap();

        let mut flipped = good.clone();
        let last = flipped.len() - 3;
        flipped[last] ^= 0x40;
        fs::write(&path, &flipped).unwrap();
        assert!(matches!(load_table(&path), Err(Error::Checksum { .. })));

        fs::write(&path, &good[..good.len() - 8]).unwrap();
        assert!(matches!(load_table(&path), Err(Error::Truncated { .. })));

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        fs::write(&path, &bad_magic).unwrap();
        assert!(matches!(load_table(&path), Err(Error::Header(_))));

        let header_len = u32::from_le_bytes(good[8..12].try_into().unwrap()) as usize;
        let header = std::str::from_utf8(&good[12..12 + header_len]).unwrap();
        let mut versioned = good[..12].to_vec();
        versioned.extend_from_slice(header.replace("\"version\":1", "\"version\":9").as_bytes());
        versioned.extend_from_slice(&good[12 + header_len..]);
        fs::write(&path, &versioned).unwrap();
        assert!(matches!(load_table(&path), Err(Error::Version { found: 9, .. })));
    }
}
