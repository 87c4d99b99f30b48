//! Bound states of free Hamiltonians perturbed by singular (Dirac-delta)
//! interactions, computed through the principal matrix Φ(E) that enters
//! Krein's resolvent formula.
//!
//! The crate covers point interactions in ℝ¹/ℝ²/ℝ³ and on the hyperbolic
//! manifolds ℍ²/ℍ³, two relativistic point models, and delta interactions
//! supported by curves in ℝ²/ℝ³. On top of the model catalog it provides a
//! spectral solver (eigenvalue flows of Φ, bound-state roots, wavefunctions),
//! the perturbative tunneling-splitting machinery, and independent exact /
//! brute-force oracles used by the acceptance tests.

pub mod cli;
pub mod exact;
pub mod geometry;
pub mod linalg;
pub mod models;
pub mod perturbation;
pub mod quad;
pub mod spectra;
pub mod specfun;
