//! Numerical laboratory for bifurcation currents of holomorphic families.
//!
//! The crate is organised bottom-up:
//!
//! * [`family`] — map families, orbits, critical and periodic points;
//! * [`potential`] — Green functions of lifts and Lyapunov exponents;
//! * [`hyperbolic`] — continuation of repelling orbits, inverse branches,
//!   chain linearization and Cantor hyperbolic sets;
//! * [`misiurewicz`] — the activity map and certified Misiurewicz parameters;
//! * [`bifgrid`] — parameter scans, discrete `dd^c` and Monge–Ampère
//!   densities, and dimension estimators.

pub mod bifgrid;
pub mod family;
pub mod hyperbolic;
pub mod misiurewicz;
pub mod potential;
pub mod roots;
pub mod series;

pub use family::{FamilyError, Map, MapFamily, Param};
pub use num_complex::Complex64;
