//! Matrix-free Lippmann-Schwinger solver for periodic homogenization.
//!
//! The corrector problem `-div[A(p + grad w)] = 0` on the unit cell is
//! rewritten for the polarization `tau = (A - A0)(p + grad w)` relative to a
//! constant reference medium `A0`, discretized with voxel-wise constant
//! polarizations and solved with FFT-based operator applications. The
//! homogenized coefficient follows from `A* p = A0 p + mean(tau)`.

pub mod cli;
pub mod elasticity;
pub mod error;
pub mod fft;
pub mod green;
pub mod grid;
pub mod linalg;
pub mod microstructure;
pub mod operator;
pub mod solvers;
pub mod study;

pub use error::{Error, Result};
