//! Numerical toolkit for resonances of open chaotic systems.
//!
//! The pipeline goes from classical Hamiltonian dynamics to complex spectra:
//!
//! 1. [`phase_flow`] — symplectic integration of the flow and its tangent map,
//!    escape times, trapped-set sampling, hyperbolicity diagnostics.
//! 2. [`poincare`] — Poincaré sections, crossing detection, return maps with
//!    symplectic chart-level Jacobians, energy-deformed sections.
//! 3. [`quantum_maps`] — finite-dimensional open quantum maps: the open baker
//!    family, Bogomolny transfer matrices built from generating functions,
//!    energy-phase dressing, spectral projectors and Egorov diagnostics.
//! 4. [`grushin`] — bordered (Grushin) linear algebra, the determinant
//!    `zeta(z) = det(I - M(z))`, trace/winding consistency, and resonance
//!    localisation by the argument principle plus Newton refinement.
//! 5. [`scaling1d`] — direct 1D resonance computation by exterior complex
//!    scaling, used as an independent cross-check.
//! 6. [`io`] — CSV/binary artifact formats and reproducible run manifests.

pub mod grushin;
pub mod io;
pub mod linalg;
pub mod phase_flow;
pub mod poincare;
pub mod quantum_maps;
pub mod scaling1d;

pub use num_complex::Complex64;
