//! Multiscale finite elements for the Poisson problem in perforated domains.
//!
//! Perforations are handled by penalization everywhere: the reference solve,
//! the local basis problems and the coarse Galerkin systems all use the same
//! fine-grid operator `∫∇u·∇v + κ∫_B u v`.

pub mod coarse;
pub mod error;
pub mod fine;
pub mod geometry;
pub mod space;

pub use coarse::{baseline_solve, compute_errors, element_system, msfem_solve, CoarseSolution};
pub use error::{MsfemError, Result};
pub use fine::{reference_solve, FineSolution, SolveOptions, Source};
pub use geometry::{build_perforations, CoarseMesh, EdgeId, PerforationKind, PerforationSet, PerforationSpec, Rect};
pub use space::{build_baseline_space, build_cr_space, CoarseDof, LocalBasis, Method, MsFEMSpace};
