use std::path::PathBuf;

use thiserror::Error;

use crate::special::mathieu::MathieuKind;

/// Errors produced by the numerical library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Fourier truncation did not converge for {kind} order {order} at q = {q} (K = {size})")]
    Truncation {
        kind: MathieuKind,
        order: u32,
        q: f64,
        size: usize,
    },

    #[error("root bracketing failed for {kind} l = {l} in q ∈ [{q_lo}, {q_hi}]")]
    RootBracket {
        kind: MathieuKind,
        l: u32,
        q_lo: f64,
        q_hi: f64,
    },

    #[error("state label {0} not found in the equilibrium spectrum")]
    UnknownLabel(usize),

    #[error("overflow evaluating radial Mathieu function: k·ξ = {value} exceeds {bound}")]
    Overflow { value: f64, bound: f64 },

    #[error("point ({x}, {y}) lies outside the ellipse")]
    OutsideDomain { x: f64, y: f64 },

    #[error("quadrature did not converge (worst panel estimate {estimate:e})")]
    Quadrature { estimate: f64 },

    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    #[error("insufficient basis: table has N = {have_n}, M = {have_m}, requested N = {want_n}, M = {want_m}")]
    InsufficientBasis {
        have_n: usize,
        have_m: usize,
        want_n: usize,
        want_m: usize,
    },

    #[error("checksum mismatch in {path}: header {expected}, content {found}")]
    Checksum {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("unsupported table version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("truncated table file {path}: {detail}")]
    Truncated { path: PathBuf, detail: String },

    #[error("malformed table header: {0}")]
    Header(String),

    #[error("discarded weight {weight:e} exceeds threshold {threshold:e}; increase the basis size")]
    TruncationWeight { weight: f64, threshold: f64 },

    #[error("norm drift {drift:e} at t = {t} exceeds tolerance {tol:e}")]
    NormDrift { t: f64, drift: f64, tol: f64 },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("step limit of {limit} reached at t = {t}")]
    StepLimit { t: f64, limit: usize },

    #[error("one-period propagator not converged with {substeps} substeps per sample (estimate {estimate:e}, tolerance {tol:e})")]
    PeriodConvergence { substeps: usize, estimate: f64, tol: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
