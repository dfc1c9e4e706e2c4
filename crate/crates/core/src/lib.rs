//! Numerical laboratory for the parabolic Anderson model (PAM)
//!
//!   du/dt = (Δ + ξ) u,   u(0, ·) = 1_{0},
//!
//! on a d-dimensional lattice torus, where Δ is the pure neighbour-sum
//! Laplacian ((Δf)(z) = Σ_{y~z} f(y), no -2d diagonal) and ξ is an i.i.d.
//! Weibull field with tail P(ξ > x) = exp(-x^γ).
//!
//! The crate provides the building blocks of the localisation analysis —
//! punctured Hamiltonians, local principal eigenvalues, penalisation
//! functionals, the penalised spectrum, ageing times — together with three
//! independent solvers for the Cauchy problem (spectral, adaptive ODE,
//! Feynman–Kac Monte Carlo) and a seeded experiment harness that turns the
//! asymptotic limit statements into finite-size statistical checks.

pub mod error;
pub mod experiments;
pub mod geometry;
pub mod localisation;
pub mod operators;
pub mod paths;
pub mod potential;
pub mod quad;
pub mod rng;
pub mod scales;
pub mod solver;
pub mod stats;

pub use error::{CoreError, Result};
pub use geometry::{Site, TorusGeometry};
pub use operators::{HamiltonianVariant, SparseSymOp, SpectralData};
pub use potential::{LevelSet, PotentialField, Separation};
pub use scales::{ScaleParams, ScaleSet};
pub use solver::{SolutionSnapshot, SolveMethod};
