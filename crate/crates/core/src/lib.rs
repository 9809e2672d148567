//! Semiclassical propagation of Hagedorn wavepackets with a posteriori
//! error control.
//!
//! The solver represents `ψ(t)` as a finite combination of Hagedorn
//! functions `φ_j[a, η, A, B](x)` attached to a classical trajectory, and
//! advances the coefficients with a Galerkin projection of the anharmonic
//! part of the potential. Every run can carry a computable error
//! certificate `E(t)`, and an independent split-step Fourier solver is
//! available to measure the actual error in one and two dimensions.

pub mod error;
pub mod experiment;
pub mod flow;
pub mod galerkin;
pub mod grid;
pub mod ladder;
pub mod multiindex;
pub mod potential;
pub mod reference;
pub mod stats;
pub mod truncation;
pub mod verify;
pub mod wavepacket;

pub use error::{Error, Result};
