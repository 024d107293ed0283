//! Quantum dynamics in a periodically breathing elliptical billiard.
//!
//! The static problem is solved in elliptic coordinates with Mathieu
//! functions; the driven problem is mapped onto the unit disk and expanded in
//! circular-billiard eigenfunctions, whose coefficients obey a linear system
//! of ODEs with time-independent coupling tensors.

pub mod disk;
pub mod driving;
pub mod dynamics;
pub mod coupling;
pub mod error;
pub mod floquet;
pub mod observables;
pub mod ode;
pub mod propagator;
pub mod rabi;
pub mod scan;
pub mod special;
pub mod spectrum;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use driving::DrivingLaw;
pub use error::{Error, Result};
pub use spectrum::{EllipseGeometry, EllipticEigenstate, QuantumNumbers, Symmetry};
