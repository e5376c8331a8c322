//! Moments, weighted norms and the a-priori growth bounds of the discrete
//! solution.

use crate::kernels::{BreakageKernel, CollisionKernel};
use crate::mesh::Mesh;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NormError {
    #[error("moment exponent r must be at least 1, got {0}")]
    RBelowOne(f64),
    #[error("singular-weight exponent p must be non-negative, got {0}")]
    NegativeP(f64),
}

/// Parameters `(r, p)` of the weighted norm
/// `sum_i (eps_i^r + eps_i^(-2p)) c_i width_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormParams {
    pub r: f64,
    pub p: f64,
}

impl NormParams {
    pub fn new(r: f64, p: f64) -> Result<Self, NormError> {
        if !r.is_finite() || r < 1.0 {
            return Err(NormError::RBelowOne(r));
        }
        if !p.is_finite() || p < 0.0 {
            return Err(NormError::NegativeP(p));
        }
        Ok(Self { r, p })
    }
}

impl Default for NormParams {
    fn default() -> Self {
        Self { r: 1.0, p: 0.0 }
    }
}

#[inline]
fn midpoint_power(eps: f64, order: f64) -> f64 {
    if order == 0.0 {
        1.0
    } else if order == 1.0 {
        eps
    } else if order == 2.0 {
        eps * eps
    } else {
        eps.powf(order)
    }
}

/// Discrete moment `sum_i eps_i^order c_i width_i`. Real non-negative orders
/// are allowed; order 0 counts particles and order 1 is the total volume.
pub fn moment(mesh: &Mesh, c: &[f64], order: f64) -> f64 {
    assert_eq!(c.len(), mesh.cells(), "state length must match the mesh");
    let mut sum = 0.0;
    for (i, &ci) in c.iter().enumerate() {
        sum += midpoint_power(mesh.midpoint(i), order) * ci * mesh.width(i);
    }
    sum
}

/// Weighted norm `sum_i (eps_i^r + eps_i^(-2p)) c_i width_i`, evaluated as
/// the sum of the two moment sums so that `(r=1, p=0)` reproduces
/// `moment(1) + moment(0)` term for term.
///
/// Midpoint weights keep every term finite: the first midpoint is positive,
/// so the singular weight `eps^(-2p)` is never evaluated at zero.
pub fn weighted_norm(mesh: &Mesh, c: &[f64], params: &NormParams) -> f64 {
    moment(mesh, c, params.r) + moment(mesh, c, -2.0 * params.p)
}

/// Growth bound on the particle count,
/// `P(t) = ||c_in||_S exp(2 alpha N M1_in t)`.
pub fn bound_p(
    t: f64,
    collision: &CollisionKernel,
    breakage: &BreakageKernel,
    norm_s_cin: f64,
    m1_in: f64,
) -> f64 {
    let n = breakage.multiplicity();
    norm_s_cin * (2.0 * collision.alpha() * n * m1_in * t).exp()
}

/// Natural log of the weighted-norm growth bound
/// `P*(t) = ||c_in||_S exp(2 R alpha max(N, Q) P(T) t)`.
///
/// The bound grows doubly exponentially in practice, so the log form is the
/// robust representation; [`bound_pstar`] exponentiates it and may overflow
/// to infinity.
#[allow(clippy::too_many_arguments)]
pub fn bound_pstar_log(
    t: f64,
    collision: &CollisionKernel,
    breakage: &BreakageKernel,
    norm_s_cin: f64,
    m1_in: f64,
    r: f64,
    horizon: f64,
    q: f64,
) -> f64 {
    let lambda_max = breakage.multiplicity().max(q);
    let p_horizon = bound_p(horizon, collision, breakage, norm_s_cin, m1_in);
    norm_s_cin.ln() + 2.0 * r * collision.alpha() * lambda_max * p_horizon * t
}

/// Linear-space value of the weighted-norm bound; see [`bound_pstar_log`].
#[allow(clippy::too_many_arguments)]
pub fn bound_pstar(
    t: f64,
    collision: &CollisionKernel,
    breakage: &BreakageKernel,
    norm_s_cin: f64,
    m1_in: f64,
    r: f64,
    horizon: f64,
    q: f64,
) -> f64 {
    bound_pstar_log(t, collision, breakage, norm_s_cin, m1_in, r, horizon, q).exp()
}
