//! Exact diagonalization of the two-sector bosonic memory model together with
//! the thermalization, eigenstate-thermalization and fluctuation-correlation
//! diagnostics built on top of its spectrum.
//!
//! The crate is organised bottom-up:
//!
//! * [`fock`] enumerates the conserved-charge sector and ranks its states.
//! * [`model`] derives the couplings from the system size and assembles the
//!   sparse Hamiltonian.
//! * [`spectrum`] runs the dense symmetric eigensolver and its sanity checks.
//! * [`diagnostics`], [`levelstats`] and [`indeptests`] turn a spectrum into
//!   scalar diagnostics, spacing statistics and independence tests.
//! * [`fitting`] fits the per-size diagnostics to the scaling families.
//! * [`pipeline`] orchestrates a full study, caches spectra and writes data files.

// Pulls in the system OpenBLAS that backs the `blas`/`lapack` bindings.
extern crate openblas_src;

pub mod diagnostics;
pub mod error;
pub mod fitting;
pub mod fock;
pub mod indeptests;
pub mod levelstats;
pub mod model;
mod numeric;
pub mod pipeline;
pub mod spectrum;

pub use error::{Error, Result};
