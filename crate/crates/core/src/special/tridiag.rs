//! Symmetric tridiagonal eigenvalues by Sturm-sequence bisection and
//! eigenvectors by inverse iteration.

#[derive(Debug, Clone)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    /// off[i] couples rows i and i + 1.
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert_eq!(off.len() + 1, diag.len(), "off-diagonal length mismatch");
        Self { diag, off }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Number of eigenvalues strictly below `x`.
    pub fn count_below(&self, x: f64) -> usize {
        let mut count = 0;
        let mut d = 1.0;
        for i in 0..self.diag.len() {
            let coupling = if i == 0 { 0.0 } else { self.off[i - 1] * self.off[i - 1] };
            d = self.diag[i] - x - if i == 0 { 0.0 } else { coupling / d };
            if d == 0.0 {
                d = -f64::EPSILON * (self.diag[i].abs() + x.abs()).max(f64::MIN_POSITIVE);
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.diag.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 }
                + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// The `index`-th smallest eigenvalue (0-based).
    pub fn eigenvalue(&self, index: usize) -> f64 {
        assert!(index < self.len(), "eigenvalue index out of range");
        let (mut lo, mut hi) = self.gershgorin();
        let pad = 1e-12 * (lo.abs() + hi.abs()) + 1e-300;
        lo -= pad;
        hi += pad;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > index {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 2.0 * f64::EPSILON * lo.abs().max(hi.abs()) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// Unit eigenvector for an eigenvalue estimate `lambda` (two sweeps of
    /// inverse iteration with partial pivoting).
    pub fn eigenvector(&self, lambda: f64) -> Vec<f64> {
        let n = self.len();
        let scale = self.diag.iter().fold(1.0f64, |m, d| m.max(d.abs()));
        let mut x = vec![1.0; n];
        for _ in 0..3 {
            x = self.shifted_solve(lambda, &x, scale);
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in x.iter_mut() {
                *v /= norm;
            }
        }
        x
    }

    /// Solves (T − λI) y = rhs by Gaussian elimination with partial pivoting;
    /// zero pivots are replaced by a tiny multiple of the matrix scale.
    fn shifted_solve(&self, lambda: f64, rhs: &[f64], scale: f64) -> Vec<f64> {
        let n = self.len();
        let tiny = f64::EPSILON * scale;
        let guard = |v: f64| if v.abs() < tiny { tiny.copysign(v) } else { v };
        let mut d: Vec<f64> = self.diag.iter().map(|v| v - lambda).collect();
        let mut du = self.off.clone();
        let dl = &self.off;
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut b = rhs.to_vec();
        for i in 0..n.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                d[i] = guard(d[i]);
                let fact = dl[i] / d[i];
                d[i + 1] -= fact * du[i];
                b[i + 1] -= fact * b[i];
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                let temp = d[i + 1];
                d[i + 1] = du[i] - fact * temp;
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du[i + 1];
                }
                du[i] = temp;
                let bi = b[i];
                b[i] = b[i + 1];
                b[i + 1] = bi - fact * b[i + 1];
            }
        }
        d[n - 1] = guard(d[n - 1]);
        let mut y = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = b[i];
            if i + 1 < n {
                s -= du[i] * y[i + 1];
            }
            if i + 2 < n {
                s -= du2[i] * y[i + 2];
            }
            y[i] = s / d[i];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(n: usize) -> SymTridiagonal {
        let diag = (0..n).map(|i| ((i * 7 % 5) as f64) - 1.5 + i as f64 * 0.3).collect();
        let off = (0..n - 1).map(|i| 0.4 + 0.1 * ((i * 3 % 4) as f64)).collect();
        SymTridiagonal::new(diag, off)
    }

    #[test]
    fn eigenpairs_satisfy_definition() {
        let t = sample(17);
        let mut prev = f64::NEG_INFINITY;
        for k in 0..17 {
            let lambda = t.eigenvalue(k);
            assert!(lambda > prev);
            prev = lambda;
            let v = t.eigenvector(lambda);
            for i in 0..17 {
                let mut r = (t.diag[i] - lambda) * v[i];
                if i > 0 {
                    r += t.off[i - 1] * v[i - 1];
                }
                if i < 16 {
                    r += t.off[i] * v[i + 1];
                }
                assert!(r.abs() < 1e-12, "residual {r} for eigenvalue {k}");
            }
        }
    }

    #[test]
    fn sturm_count_matches_trace_bounds() {
        let t = sample(9);
        assert_eq!(t.count_below(-1e3), 0);
        assert_eq!(t.count_below(1e3), 9);
        let sum: f64 = (0..9).map(|k| t.eigenvalue(k)).sum();
        let trace: f64 = t.diag.iter().sum();
        assert!((sum - trace).abs() < 1e-12);
    }

    #[test]
    fn single_element_matrix() {
        let t = SymTridiagonal::new(vec![2.5], vec![]);
        assert!((t.eigenvalue(0) - 2.5).abs() < 1e-15);
        assert_eq!(t.eigenvector(2.5), vec![1.0]);
    }
}
