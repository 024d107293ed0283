//! Dormand–Prince 5(4) integrator for complex linear systems, with PI step
//! control and steps clipped to land exactly on requested sample times.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rel: 1e-9, abs: 1e-11 }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel > 0.0 && self.abs > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerances must be positive, got rel = {}, abs = {}",
                self.rel, self.abs
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Difference between the fifth- and fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
const BETA: f64 = 0.04;

/// Integrator state. `f(t, y, dy)` writes dy/dt.
pub struct Dopri5<F> {
    f: F,
    tol: Tolerances,
    t: f64,
    y: Vec<Complex64>,
    h: f64,
    k: [Vec<Complex64>; 7],
    stage: Vec<Complex64>,
    err_prev: f64,
    fsal_valid: bool,
    pub stats: StepStats,
    pub max_steps: usize,
}

impl<F> Dopri5<F>
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
{
    pub fn new(f: F, t0: f64, y0: Vec<Complex64>, tol: Tolerances) -> Result<Self> {
        tol.validate()?;
        let n = y0.len();
        let zero = || vec![Complex64::new(0.0, 0.0); n];
        Ok(Self {
            f,
            tol,
            t: t0,
            y: y0,
            h: 0.0,
            k: [zero(), zero(), zero(), zero(), zero(), zero(), zero()],
            stage: zero(),
            err_prev: 1e-4,
            fsal_valid: false,
            stats: StepStats::default(),
            max_steps: usize::MAX,
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[Complex64] {
        &self.y
    }

    fn eval(&mut self, t: f64, which: usize) {
        let (f, stage, k) = (&mut self.f, &self.stage, &mut self.k);
        f(t, stage, &mut k[which]);
        self.stats.evaluations += 1;
    }

    fn combine(&mut self, h: f64, coeffs: &[(usize, f64)]) {
        for i in 0..self.y.len() {
            let mut acc = self.y[i];
            for &(j, c) in coeffs {
                acc += self.k[j][i] * (h * c);
            }
            self.stage[i] = acc;
        }
    }

    fn scale(&self, i: usize, y_new: Complex64) -> f64 {
        self.tol.abs + self.tol.rel * self.y[i].norm().max(y_new.norm())
    }

    /// Hairer's starting-step heuristic.
    fn initial_step(&mut self, direction: f64, span: f64) -> f64 {
        self.stage.copy_from_slice(&self.y);
        self.eval(self.t, 0);
        let n = self.y.len().max(1) as f64;
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..self.y.len() {
            let sc = self.tol.abs + self.tol.rel * self.y[i].norm();
            d0 += (self.y[i].norm() / sc).powi(2);
            d1 += (self.k[0][i].norm() / sc).powi(2);
        }
        let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(span);
        for i in 0..self.y.len() {
            self.stage[i] = self.y[i] + self.k[0][i] * (direction * h0);
        }
        self.eval(self.t + direction * h0, 1);
        let mut d2 = 0.0;
        for i in 0..self.y.len() {
            let sc = self.tol.abs + self.tol.rel * self.y[i].norm();
            d2 += ((self.k[1][i] - self.k[0][i]).norm() / sc).powi(2);
        }
        let d2 = (d2 / n).sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
        self.fsal_valid = true;
        (100.0 * h0).min(h1).min(span)
    }

    /// Advances to exactly `t_target` (either direction).
    pub fn advance_to(&mut self, t_target: f64) -> Result<()> {
        let span = t_target - self.t;
        if span == 0.0 {
            return Ok(());
        }
        let direction = span.signum();
        if !self.fsal_valid || self.h == 0.0 || self.h.signum() != direction {
            self.h = direction * self.initial_step(direction, span.abs());
        }
        loop {
            let remaining = t_target - self.t;
            if remaining * direction <= 0.0 {
                return Ok(());
            }
            let last = self.h.abs() >= remaining.abs();
            let h = if last { remaining } else { self.h };
            let floor = 1e-14 * self.t.abs().max(1.0);
            if h.abs() < floor && !last {
                return Err(Error::StepUnderflow { t: self.t, h: h.abs() });
            }
            if self.stats.accepted + self.stats.rejected >= self.max_steps {
                return Err(Error::StepLimit { t: self.t, limit: self.max_steps });
            }
            let err = self.try_step(h);
            if !err.is_finite() {
                self.h = h * MIN_FACTOR;
                self.stats.rejected += 1;
                continue;
            }
            if err <= 1.0 {
                let factor = if err == 0.0 {
                    MAX_FACTOR
                } else {
                    (SAFETY * err.powf(-0.2 + 0.75 * BETA) * self.err_prev.powf(BETA)).clamp(MIN_FACTOR, MAX_FACTOR)
                };
                self.err_prev = err.max(1e-4);
                self.t = if last { t_target } else { self.t + h };
                std::mem::swap(&mut self.y, &mut self.stage);
                self.k.swap(0, 6);
                self.stats.accepted += 1;
                // A clipped final step says nothing about the natural size.
                if !last {
                    self.h = h * factor;
                }
            } else {
                let factor = (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, 1.0);
                self.h = h * factor;
                self.stats.rejected += 1;
                if self.h.abs() < floor {
                    return Err(Error::StepUnderflow { t: self.t, h: self.h.abs() });
                }
            }
        }
    }

    /// One trial step; on return `stage` holds the fifth-order solution and
    /// k[6] its derivative. Returns the scaled RMS error.
    fn try_step(&mut self, h: f64) -> f64 {
        let t = self.t;
        self.combine(h, &[(0, A21)]);
        self.eval(t + C2 * h, 1);
        self.combine(h, &[(0, A31), (1, A32)]);
        self.eval(t + C3 * h, 2);
        self.combine(h, &[(0, A41), (1, A42), (2, A43)]);
        self.eval(t + C4 * h, 3);
        self.combine(h, &[(0, A51), (1, A52), (2, A53), (3, A54)]);
        self.eval(t + C5 * h, 4);
        self.combine(h, &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)]);
        self.eval(t + h, 5);
        self.combine(h, &[(0, B1), (2, B3), (3, B4), (4, B5), (5, B6)]);
        self.eval(t + h, 6);
        let mut sum = 0.0;
        for i in 0..self.y.len() {
            let e = (self.k[0][i] * E1
                + self.k[2][i] * E3
                + self.k[3][i] * E4
                + self.k[4][i] * E5
                + self.k[5][i] * E6
                + self.k[6][i] * E7)
                * h;
            sum += (e.norm() / self.scale(i, self.stage[i])).powi(2);
        }
        (sum / self.y.len().max(1) as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn rotation_is_exact_to_tolerance() {
        let omega = 3.0;
        let f = |_t: f64, y: &[Complex64], dy: &mut [Complex64]| dy[0] = c(0.0, -omega) * y[0];
        let mut ode = Dopri5::new(f, 0.0, vec![c(1.0, 0.0)], Tolerances::default()).unwrap();
        for j in 1..=20 {
            let t = 0.5 * j as f64;
            ode.advance_to(t).unwrap();
            let want = c(0.0, -omega * t).exp();
            assert!((ode.y()[0] - want).norm() < 1e-8);
        }
    }

    #[test]
    fn time_dependent_scalar() {
        // y' = i cos(t) y  →  y = exp(i sin t)
        let f = |t: f64, y: &[Complex64], dy: &mut [Complex64]| dy[0] = c(0.0, t.cos()) * y[0];
        let mut ode = Dopri5::new(f, 0.0, vec![c(1.0, 0.0)], Tolerances::default()).unwrap();
        ode.advance_to(7.3).unwrap();
        assert!((ode.y()[0] - c(0.0, 7.3f64.sin()).exp()).norm() < 1e-8);
        ode.advance_to(0.0).unwrap();
        assert!((ode.y()[0] - c(1.0, 0.0)).norm() < 1e-8);
    }

    #[test]
    fn tighter_tolerance_is_more_accurate() {
        let run = |rel: f64| {
            let f = |t: f64, y: &[Complex64], dy: &mut [Complex64]| {
                dy[0] = c(0.0, -1.0) * (y[1] * (2.0 * t).sin() + y[0]);
                dy[1] = c(0.0, -1.0) * (y[0] * (2.0 * t).sin() - y[1]);
            };
            let tol = Tolerances { rel, abs: rel * 1e-2 };
            let mut ode = Dopri5::new(f, 0.0, vec![c(1.0, 0.0), c(0.0, 0.0)], tol).unwrap();
            ode.advance_to(10.0).unwrap();
            (ode.y()[1], ode.stats)
        };
        let (reference, _) = run(1e-13);
        let (loose, s_loose) = run(1e-6);
        let (tight, s_tight) = run(1e-9);
        assert!((tight - reference).norm() < (loose - reference).norm());
        assert!(s_tight.accepted > s_loose.accepted);
    }

    #[test]
    fn step_limit_is_reported() {
        let f = |_t: f64, y: &[Complex64], dy: &mut [Complex64]| dy[0] = c(0.0, -50.0) * y[0];
        let mut ode = Dopri5::new(f, 0.0, vec![c(1.0, 0.0)], Tolerances::default()).unwrap();
        ode.max_steps = 10;
        assert!(matches!(ode.advance_to(100.0), Err(Error::StepLimit { .. })));
    }

    #[test]
    fn invalid_tolerances() {
        let f = |_t: f64, _y: &[Complex64], _dy: &mut [Complex64]| {};
        assert!(Dopri5::new(f, 0.0, vec![], Tolerances { rel: 0.0, abs: 1e-9 }).is_err());
    }
}
