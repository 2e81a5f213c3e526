//! Numerical laboratory for the resistive MHD limit of the two-species
//! Vlasov–Maxwell–Boltzmann system.
//!
//! The crate is organised bottom-up:
//!
//! * [`velocity`] – Hermite velocity basis, moments and micro/macro projections;
//! * [`collision`] – linearised collision operators (relaxation model and hard spheres);
//! * [`transport`] – viscosity, heat conductivity and electrical conductivity;
//! * [`grid`] – periodic Fourier grid and spectral field calculus;
//! * [`kinetic`] – the kinetic fluctuation solver with its diagnostics;
//! * [`mhd`] – the reference incompressible resistive MHD solver;
//! * [`harness`] – Knudsen-number sweeps comparing the two;
//! * [`io`] – diagnostics CSV and binary snapshots.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod collision;
pub mod error;
pub mod grid;
pub mod harness;
pub mod io;
pub mod kinetic;
pub mod mhd;
pub mod quadrature;
pub mod transport;
pub mod velocity;

pub use error::{Error, Result};
