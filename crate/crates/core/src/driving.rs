//! Breathing-mode driving law of the ellipse semi-axes.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectrum::EllipseGeometry;

/// a(t) = a0 + c sin ωt, b(t) = b0 + c sin ωt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrivingLaw {
    pub a0: f64,
    pub b0: f64,
    pub amplitude: f64,
    pub omega: f64,
}

/// Coefficient functions of the transformed Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GFunctions {
    pub g1: f64,
    pub g2: f64,
    pub g3: f64,
    pub g4: f64,
}

impl DrivingLaw {
    pub fn new(a0: f64, b0: f64, amplitude: f64, omega: f64) -> Result<Self> {
        if !(a0.is_finite() && b0.is_finite() && amplitude.is_finite() && omega.is_finite()) {
            return Err(Error::InvalidParameter("driving parameters must be finite".into()));
        }
        // a0 = b0 (the circle) is accepted: the propagator handles it, only the
        // elliptic-coordinate spectrum needs a0 > b0.
        if !(b0 > 0.0 && a0 >= b0) {
            return Err(Error::InvalidParameter(format!("need a0 >= b0 > 0, got a0 = {a0}, b0 = {b0}")));
        }
        if !(amplitude >= 0.0 && amplitude < b0) {
            return Err(Error::InvalidParameter(format!(
                "need 0 <= c < b0, got c = {amplitude}, b0 = {b0}"
            )));
        }
        if omega <= 0.0 {
            return Err(Error::InvalidParameter(format!("need ω > 0, got {omega}")));
        }
        Ok(Self { a0, b0, amplitude, omega })
    }

    /// Frozen geometry (c = 0) at the equilibrium axes.
    pub fn stationary(a0: f64, b0: f64) -> Result<Self> {
        Self::new(a0, b0, 0.0, 1.0)
    }

    pub fn with_omega(&self, omega: f64) -> Result<Self> {
        Self::new(self.a0, self.b0, self.amplitude, omega)
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega
    }

    /// ζ = (t mod T) / T.
    pub fn phase(&self, t: f64) -> f64 {
        (t / self.period()).rem_euclid(1.0)
    }

    pub fn time_at_phase(&self, zeta: f64) -> f64 {
        zeta * self.period()
    }

    fn s(&self, t: f64) -> f64 {
        self.amplitude * (self.omega * t).sin()
    }

    pub fn a(&self, t: f64) -> f64 {
        self.a0 + self.s(t)
    }

    pub fn b(&self, t: f64) -> f64 {
        self.b0 + self.s(t)
    }

    /// ȧ = ḃ for the breathing mode.
    pub fn a_dot(&self, t: f64) -> f64 {
        self.amplitude * self.omega * (self.omega * t).cos()
    }

    pub fn b_dot(&self, t: f64) -> f64 {
        self.a_dot(t)
    }

    pub fn a_ddot(&self, t: f64) -> f64 {
        -self.amplitude * self.omega * self.omega * (self.omega * t).sin()
    }

    pub fn b_ddot(&self, t: f64) -> f64 {
        self.a_ddot(t)
    }

    pub fn geometry_at(&self, t: f64) -> EllipseGeometry {
        EllipseGeometry { a: self.a(t), b: self.b(t) }
    }

    pub fn geometry_at_phase(&self, zeta: f64) -> EllipseGeometry {
        let s = self.amplitude * (2.0 * PI * zeta).sin();
        EllipseGeometry { a: self.a0 + s, b: self.b0 + s }
    }

    pub fn equilibrium(&self) -> EllipseGeometry {
        EllipseGeometry { a: self.a0, b: self.b0 }
    }

    pub fn g_functions(&self, t: f64) -> GFunctions {
        let (a, b) = (self.a(t), self.b(t));
        let (add, bdd) = (self.a_ddot(t), self.b_ddot(t));
        let (ia2, ib2) = (1.0 / (a * a), 1.0 / (b * b));
        GFunctions {
            g1: -ia2 - ib2,
            g2: a * add + b * bdd,
            g3: ia2 - ib2,
            g4: a * add - b * bdd,
        }
    }
}
