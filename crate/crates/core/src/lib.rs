//! Finite-volume solver for the nonlinear collision-induced breakage equation
//! on a truncated volume domain `]0, R]`.
//!
//! Particles of volume `rho` collide with particles of volume `sigma` at a
//! rate set by a symmetric collision kernel `K(rho, sigma)`; each collision
//! fragments the first particle according to a breakage distribution
//! `b(eps, rho, sigma)` that may be singular as the fragment volume
//! `eps -> 0`. The number density `c(t, eps)` evolves by
//!
//! ```text
//! dc/dt (eps) =  ∫∫_{rho > eps} K(rho, sigma) b(eps, rho, sigma) c(rho) c(sigma) drho dsigma
//!              - c(eps) ∫ K(eps, rho) c(rho) drho
//! ```
//!
//! The discretisation averages `c` over mesh cells, applies the midpoint rule
//! to the collision integrals and closed-form antiderivatives to the singular
//! fragment integrals, and corrects the discrete death term with a weight so
//! that the first moment (total volume) is conserved exactly. Time stepping
//! is explicit Euler under a stability bound that also guarantees
//! non-negativity of the solution.
//!
//! Modules:
//! - [`mesh`]: volume grids (uniform, geometric, custom).
//! - [`kernels`]: collision-kernel family and singular power-law breakage
//!   families with closed-form partial integrals.
//! - [`scheme`]: precomputed tables, birth/death rates, the explicit Euler
//!   step, the stability bound and the simulation driver.
//! - [`diagnostics`]: moments, weighted norms and the a-priori growth bounds.
//! - [`verify`]: independent oracles (moment ODEs, dense quadrature of the
//!   continuous right-hand side), the weak-form residual and nested-mesh
//!   self-convergence studies.

pub mod diagnostics;
pub mod kernels;
pub mod mesh;
pub mod quadrature;
pub mod scheme;
pub mod verify;

pub use diagnostics::{bound_p, bound_pstar, bound_pstar_log, moment, weighted_norm, NormParams};
pub use kernels::{BreakageFamily, BreakageKernel, CollisionKernel, KernelEval, MomentBoundCheck};
pub use mesh::Mesh;
pub use scheme::{
    simulate, stable_dt, Accumulation, InitialCondition, Problem, SchemeTables, SimOptions,
    SnapshotSpec, State, Trajectory,
};
pub use verify::{
    m0_oracle_constant, m0_oracle_product, rhs_quadrature_oracle, self_convergence, weak_residual,
    ConvergencePair, TestFunction, TestFunctionFamily,
};
