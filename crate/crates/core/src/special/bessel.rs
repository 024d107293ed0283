//! Bessel functions of the first kind, integer order, and their positive zeros.

use crate::error::{Error, Result};
use crate::special::roots::brent;

const RESCALE_THRESHOLD: f64 = 1e250;
const RESCALE_FACTOR: f64 = 1e-250;
const SMALL_ARGUMENT: f64 = 1e-4;

/// J_m(x) for integer m ≥ 0 and x ≥ 0.
pub fn bessel_j(m: u32, x: f64) -> Result<f64> {
    if !x.is_finite() || x < 0.0 {
        return Err(Error::Domain(format!("bessel_j needs a finite x >= 0, got {x}")));
    }
    let mut out = Vec::new();
    bessel_j_orders(m as usize, x, &mut out);
    Ok(out[m as usize])
}

/// Fills `out` with J_0(x) ..= J_max_order(x), x ≥ 0.
///
/// Miller's backward recurrence normalized by J_0 + 2ΣJ_2k = 1; a three-term
/// power series is used below `SMALL_ARGUMENT`.
pub fn bessel_j_orders(max_order: usize, x: f64, out: &mut Vec<f64>) {
    out.clear();
    out.resize(max_order + 1, 0.0);
    if x == 0.0 {
        out[0] = 1.0;
        return;
    }
    if x < SMALL_ARGUMENT {
        let h = 0.5 * x;
        let h2 = h * h;
        let mut lead = 1.0;
        for (m, v) in out.iter_mut().enumerate() {
            if m > 0 {
                lead *= h / m as f64;
            }
            if lead == 0.0 {
                break;
            }
            let m1 = m as f64 + 1.0;
            *v = lead * (1.0 - h2 / m1 + h2 * h2 / (2.0 * m1 * (m1 + 1.0)));
        }
        return;
    }

    let top = (max_order as f64).max(x);
    let mut start = top as usize + 20 + (12.0 * x.cbrt()) as usize;
    if start % 2 == 1 {
        start += 1;
    }
    let mut next = 0.0; // f_{k+1}
    let mut cur = 1e-30; // f_k
    let mut sum = 0.0;
    for k in (1..=start).rev() {
        let prev = 2.0 * k as f64 / x * cur - next;
        next = cur;
        cur = prev;
        let order = k - 1;
        if order <= max_order {
            out[order] = cur;
        }
        if order == 0 {
            sum += cur;
        } else if order % 2 == 0 {
            sum += 2.0 * cur;
        }
        if cur.abs() > RESCALE_THRESHOLD {
            cur *= RESCALE_FACTOR;
            next *= RESCALE_FACTOR;
            sum *= RESCALE_FACTOR;
            for v in out.iter_mut().skip(order) {
                *v *= RESCALE_FACTOR;
            }
        }
    }
    let scale = 1.0 / sum;
    for v in out.iter_mut() {
        *v *= scale;
    }
}

/// J_order(x) for a signed order, read from a table of non-negative orders
/// via J_{-m} = (-1)^m J_m.
#[inline]
pub fn signed_order(values: &[f64], order: i32) -> f64 {
    let m = order.unsigned_abs() as usize;
    if order < 0 && m % 2 == 1 {
        -values[m]
    } else {
        values[m]
    }
}

fn j_and_next(m: usize, x: f64, buf: &mut Vec<f64>) -> (f64, f64) {
    bessel_j_orders(m + 1, x, buf);
    (buf[m], buf[m + 1])
}

/// The first `count` positive zeros of J_m.
pub fn bessel_zeros(m: u32, count: usize) -> Vec<f64> {
    let m_us = m as usize;
    let mut buf = Vec::new();
    let mut zeros = Vec::with_capacity(count);
    // Consecutive zeros are more than 2 apart, so unit steps never skip one.
    let mut x = m as f64 + 0.5;
    let mut fx = j_and_next(m_us, x, &mut buf).0;
    while zeros.len() < count {
        let x1 = x + 1.0;
        let f1 = j_and_next(m_us, x1, &mut buf).0;
        if f1 == 0.0 {
            zeros.push(x1);
        } else if fx.signum() != f1.signum() && fx != 0.0 {
            let mut inner = Vec::new();
            let root = brent(
                |t| j_and_next(m_us, t, &mut inner).0,
                x,
                x1,
                fx,
                f1,
                1e-15,
                200,
            )
            .unwrap_or(0.5 * (x + x1));
            zeros.push(polish_zero(m_us, root, &mut buf));
        }
        x = x1;
        fx = f1;
    }
    zeros
}

/// Newton polish using J_m' = (m/x) J_m − J_{m+1}.
fn polish_zero(m: usize, mut x: f64, buf: &mut Vec<f64>) -> f64 {
    for _ in 0..3 {
        let (j, jn) = j_and_next(m, x, buf);
        let d = m as f64 / x * j - jn;
        if d == 0.0 {
            break;
        }
        let step = j / d;
        x -= step;
        if step.abs() < 1e-16 * x {
            break;
        }
    }
    x
}

/// The n-th positive zero k_{m,n} of J_m (n ≥ 1).
pub fn bessel_zero(m: u32, n: u32) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("Bessel zero index starts at 1".into()));
    }
    Ok(*bessel_zeros(m, n as usize).last().expect("count >= 1"))
}

/// Cached zeros k_{m,n}, 0 ≤ m ≤ max_order, 1 ≤ n ≤ count.
#[derive(Debug, Clone, PartialEq)]
pub struct BesselZeroTable {
    zeros: Vec<Vec<f64>>,
}

impl BesselZeroTable {
    pub fn new(max_order: u32, count: usize) -> Self {
        let zeros = (0..=max_order).map(|m| bessel_zeros(m, count)).collect();
        Self { zeros }
    }

    /// Table from precomputed rows, row m holding k_{m,1..}.
    pub fn from_rows(zeros: Vec<Vec<f64>>) -> Self {
        Self { zeros }
    }

    pub fn max_order(&self) -> u32 {
        (self.zeros.len() - 1) as u32
    }

    pub fn count(&self) -> usize {
        self.zeros.first().map_or(0, Vec::len)
    }

    /// k_{|m|,n}; negative orders share the zeros of the positive order.
    pub fn get(&self, m: i32, n: usize) -> Option<f64> {
        if n == 0 {
            return None;
        }
        self.zeros
            .get(m.unsigned_abs() as usize)
            .and_then(|row| row.get(n - 1))
            .copied()
    }
}
