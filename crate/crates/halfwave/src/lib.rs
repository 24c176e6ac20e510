//! FFT-based toolbox for the half-wave group on a periodic 2D grid:
//! Littlewood-Paley and parabolic sector decompositions, sector-adapted
//! Besov norms, propagator experiments (growth, local smoothing,
//! decoupling, embeddings), and a pseudo-spectral solver for the cubic and
//! quintic nonlinear wave equation with Picard iterates and conservation
//! monitors.

pub mod error;
pub mod fft;

pub mod cutoffs;
pub mod datagen;
pub mod decomposition;
pub mod exponents;
pub mod nlw;
pub mod norms;
pub mod propagator;
pub mod wavepacket;
pub mod window;
pub mod grid;

pub use error::{Error, Result};
pub use grid::{create_grid, Field, GridSpec, Lp, Representation};
