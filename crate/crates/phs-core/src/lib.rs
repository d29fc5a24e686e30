//! Structure-preserving discretization and control toolkit for 1D
//! boundary-damped anisotropic port-Hamiltonian systems.
//!
//! The crate covers the full pipeline:
//!
//! * [`model`] — continuous system descriptions (parameter profiles, presets,
//!   meshes, nodal samples);
//! * [`assembly`] — the mixed finite-element (MFEM) discretization in co-energy
//!   variables and a standard Galerkin FEM comparator;
//! * [`numerics`] — dense eigen/Lyapunov/tridiagonal kernels shared by the
//!   higher layers;
//! * [`stability`] — continuous and discrete exponential-stability
//!   certificates and spectral-abscissa sweeps over the mesh size;
//! * [`lqr`] — infinite-horizon LQ design (Newton–Kleinman Riccati solves) and
//!   gain-profile convergence studies;
//! * [`simulate`] — energy-conserving implicit-midpoint time integration with
//!   energy and multiplier-functional traces;
//! * [`oracle`] — an independent verification suite that checks every
//!   load-bearing algebraic identity against quadrature or brute-force
//!   evaluation.
//!
//! All matrices are dense (`nalgebra::DMatrix<f64>`); the intended mesh range
//! is `N <= ~1000`, i.e. state dimensions up to a few thousand.

pub mod assembly;
pub mod error;
pub mod lqr;
pub mod model;
pub mod numerics;
pub mod oracle;
pub mod quad;
pub mod simulate;
pub mod stability;

pub use error::Error;
pub use model::{Mesh, ParamProfile, SampledParams, SystemSpec};
pub use assembly::{DiscreteModel, FemModel};
pub use numerics::Spectrum;
pub use stability::{StabilityCertificate, SweepResult};
pub use lqr::{GainSweep, LqrDesign};
pub use simulate::Trajectory;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
