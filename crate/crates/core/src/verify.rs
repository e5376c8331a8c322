//! Independent verification machinery: closed-form moment oracles, a dense
//! quadrature evaluation of the continuous right-hand side, the weak-form
//! residual of the discrete solution and nested-mesh self-convergence.
//!
//! Nothing here feeds back into the scheme; these are the measuring sticks
//! the solver is held against.

use crate::diagnostics::moment;
use crate::kernels::{BreakageKernel, CollisionKernel};
use crate::mesh::{Mesh, MeshError};
use crate::scheme::{
    interaction_sums, simulate, stable_dt, InitialCondition, Problem, SchemeError, SchemeTables,
    SimOptions, SnapshotSpec, Trajectory,
};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("oracle contract violated: {0}")]
    Contract(String),
    #[error("closed-form particle count blows up at t = {blow_up}, requested t = {t}")]
    BlowUp { t: f64, blow_up: f64 },
    #[error("weak residual needs a trajectory recorded at every time level")]
    SnapshotGaps,
    #[error("mesh ladder entry {fine} is not a nested refinement of {coarse}")]
    NonNested { coarse: usize, fine: usize },
    #[error("dense factor must be at least 4, got {0}")]
    DenseFactorTooSmall(usize),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Kernel(#[from] crate::kernels::KernelError),
}

/// Built-in test-function shapes for the weak form; both vanish at zero
/// volume so the singular breakage integrals stay finite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestFunctionFamily {
    /// `psi(eps) = eps^2`.
    VolumeSquared,
    /// `psi(eps) = eps (R - eps)`, vanishing at both domain ends.
    EdgeWeighted,
}

/// Separable test function `phi(t, eps) = scale * (1 - t/t_cut)_+^2 psi(eps)`.
///
/// The quadratic time ramp vanishes for `t >= t_cut` and its derivative is
/// available in closed form, so the weak-form residual carries no numerical
/// differentiation error. Vanishing polynomially at `eps = 0` relaxes
/// "compactly supported" while keeping every weak-form integral finite for
/// the shipped weight exponents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestFunction {
    family: TestFunctionFamily,
    t_cut: f64,
    r: f64,
    scale: f64,
}

impl TestFunction {
    pub fn volume_squared(t_cut: f64) -> Result<Self, VerifyError> {
        if !t_cut.is_finite() || t_cut <= 0.0 {
            return Err(VerifyError::Contract(format!(
                "test-function support cutoff must be positive, got {t_cut}"
            )));
        }
        Ok(Self {
            family: TestFunctionFamily::VolumeSquared,
            t_cut,
            r: 0.0,
            scale: 1.0,
        })
    }

    pub fn edge_weighted(t_cut: f64, r: f64) -> Result<Self, VerifyError> {
        if !t_cut.is_finite() || t_cut <= 0.0 {
            return Err(VerifyError::Contract(format!(
                "test-function support cutoff must be positive, got {t_cut}"
            )));
        }
        if !r.is_finite() || r <= 0.0 {
            return Err(VerifyError::Contract(format!(
                "edge-weighted test function needs a positive domain end, got {r}"
            )));
        }
        Ok(Self {
            family: TestFunctionFamily::EdgeWeighted,
            t_cut,
            r,
            scale: 1.0,
        })
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn family(&self) -> TestFunctionFamily {
        self.family
    }

    pub fn t_cut(&self) -> f64 {
        self.t_cut
    }

    fn shape(&self, eps: f64) -> f64 {
        match self.family {
            TestFunctionFamily::VolumeSquared => eps * eps,
            TestFunctionFamily::EdgeWeighted => eps * (self.r - eps),
        }
    }

    fn ramp(&self, t: f64) -> f64 {
        (1.0 - t / self.t_cut).max(0.0)
    }

    pub fn phi(&self, t: f64, eps: f64) -> f64 {
        let w = self.ramp(t);
        self.scale * w * w * self.shape(eps)
    }

    /// Exact time derivative `d phi / dt`.
    pub fn dphi_dt(&self, t: f64, eps: f64) -> f64 {
        let w = self.ramp(t);
        self.scale * (-2.0 / self.t_cut) * w * self.shape(eps)
    }
}

/// Expected particle count under the product kernel `K = 2 alpha eps rho`
/// with binary conserving breakage: the count grows linearly,
/// `M0(t) = M0(0) + 2 alpha M1(0)^2 t`, because the collision integral
/// reduces to the (conserved) first moment squared.
pub fn m0_oracle_product(
    t: f64,
    m0_in: f64,
    m1_in: f64,
    collision: &CollisionKernel,
    breakage: &BreakageKernel,
) -> Result<f64, VerifyError> {
    if collision.zeta() != 1.0 || collision.eta() != 1.0 {
        return Err(VerifyError::Contract(format!(
            "product-kernel count oracle needs zeta = eta = 1, got zeta={}, eta={}",
            collision.zeta(),
            collision.eta()
        )));
    }
    if !breakage.conserves_volume() || breakage.exponent() != 0.0 {
        return Err(VerifyError::Contract(
            "product-kernel count oracle needs binary conserving breakage (exponent 0)".into(),
        ));
    }
    Ok(m0_in + 2.0 * collision.alpha() * m1_in * m1_in * t)
}

/// Expected particle count under the constant kernel `K = k0` with binary
/// conserving breakage: `M0' = k0 M0^2`, so
/// `M0(t) = M0(0) / (1 - k0 M0(0) t)` up to the blow-up time
/// `1 / (k0 M0(0))`.
pub fn m0_oracle_constant(
    t: f64,
    m0_in: f64,
    collision: &CollisionKernel,
    breakage: &BreakageKernel,
) -> Result<f64, VerifyError> {
    if collision.zeta() != 0.0 || collision.eta() != 0.0 {
        return Err(VerifyError::Contract(format!(
            "constant-kernel count oracle needs zeta = eta = 0, got zeta={}, eta={}",
            collision.zeta(),
            collision.eta()
        )));
    }
    if !breakage.conserves_volume() || breakage.exponent() != 0.0 {
        return Err(VerifyError::Contract(
            "constant-kernel count oracle needs binary conserving breakage (exponent 0)".into(),
        ));
    }
    let k0 = 2.0 * collision.alpha();
    if k0 == 0.0 || m0_in == 0.0 {
        return Ok(m0_in);
    }
    let blow_up = 1.0 / (k0 * m0_in);
    if t >= blow_up {
        return Err(VerifyError::BlowUp { t, blow_up });
    }
    Ok(m0_in / (1.0 - k0 * m0_in * t))
}

/// Continuous right-hand side of the breakage equation evaluated on the
/// piecewise-constant state by composite midpoint quadrature on a mesh
/// refined `dense_factor` times, with closed-form antiderivatives for the
/// innermost (fragment) integral. Returns cell-averaged net rates on the
/// original mesh.
///
/// This is the ground-truth side of the scheme-consistency comparison: as
/// the mesh refines, the scheme's birth minus death converges to these
/// rates. On coarse meshes they differ; notably a single-cell scheme is
/// stationary while the continuous operator is not.
pub fn rhs_quadrature_oracle(
    mesh: &Mesh,
    collision: &CollisionKernel,
    breakage: &BreakageKernel,
    c: &[f64],
    dense_factor: usize,
) -> Result<Vec<f64>, VerifyError> {
    if dense_factor < 4 {
        return Err(VerifyError::DenseFactorTooSmall(dense_factor));
    }
    if c.len() != mesh.cells() {
        return Err(VerifyError::Contract(format!(
            "state has {} cells but the mesh has {}",
            c.len(),
            mesh.cells()
        )));
    }
    let fine = mesh.refine(dense_factor)?;
    let nf = fine.cells();
    let coarse_of = |q: usize| q / dense_factor;
    let cw: Vec<f64> = (0..nf).map(|q| c[coarse_of(q)] * fine.width(q)).collect();
    // Partner integral at every fine node.
    let mut g = vec![0.0; nf];
    for (q, gq) in g.iter_mut().enumerate() {
        let mut s = 0.0;
        for (p, cwp) in cw.iter().enumerate() {
            s += collision.eval_unchecked(fine.midpoint(q), fine.midpoint(p)) * cwp;
        }
        *gq = s;
    }
    let n = mesh.cells();
    let mut birth = vec![0.0; n];
    for q in 0..nf {
        let rho = fine.midpoint(q);
        let weight = cw[q] * g[q];
        for (i, birth_i) in birth.iter_mut().enumerate() {
            let lo = mesh.lower(i);
            if rho <= lo {
                break;
            }
            let hi = mesh.upper(i).min(rho);
            *birth_i += weight * breakage.partial_integral(lo, hi, rho)?;
        }
    }
    let mut rates = vec![0.0; n];
    for (i, rate) in rates.iter_mut().enumerate() {
        let mut death = 0.0;
        for q in i * dense_factor..(i + 1) * dense_factor {
            death += cw[q] * g[q];
        }
        *rate = (birth[i] - death) / mesh.width(i);
    }
    Ok(rates)
}

/// Weak-form residual of a discrete trajectory against a test function:
///
/// ```text
/// residual = ∫∫ c dphi/dt + ∫ c_in phi(0, .) + birth-weighted phi - death-weighted phi
/// ```
///
/// with the volume integrals replaced by midpoint sums, the time integrals by
/// left-endpoint sums over the recorded levels, and the time derivative of
/// `phi` exact. The death term is the plain collision sum without the
/// mass-conservation weight, mirroring the continuous weak form, so a
/// vanishing residual also certifies that the weight tends to one under
/// refinement. The residual tends to zero as mesh and step refine together.
pub fn weak_residual(
    problem: &Problem<'_>,
    traj: &Trajectory,
    phi: &TestFunction,
) -> Result<f64, VerifyError> {
    if !traj.every_step || traj.states.len() != traj.steps as usize + 1 {
        return Err(VerifyError::SnapshotGaps);
    }
    let mesh = problem.mesh;
    let tables = problem.tables;
    let n = mesh.cells();
    let dt = traj.dt;
    let mut t_time = 0.0;
    let mut t_birth = 0.0;
    let mut t_death = 0.0;
    for state in &traj.states[..traj.steps as usize] {
        if state.c.len() != n {
            return Err(VerifyError::Contract(
                "trajectory state does not match the mesh".into(),
            ));
        }
        let t = state.time;
        let g = interaction_sums(tables, mesh, state);
        let cw: Vec<f64> = (0..n).map(|j| state.c[j] * mesh.width(j)).collect();
        let mut time_term = 0.0;
        let mut birth_term = 0.0;
        let mut death_term = 0.0;
        for i in 0..n {
            let eps = mesh.midpoint(i);
            time_term += phi.dphi_dt(t, eps) * cw[i];
            let phi_i = phi.phi(t, eps);
            let mut fragments = 0.0;
            for j in i..n {
                fragments += tables.fragments(i, j) * cw[j] * g[j];
            }
            birth_term += phi_i * fragments;
            death_term += phi_i * cw[i] * g[i];
        }
        t_time += dt * time_term;
        t_birth += dt * birth_term;
        t_death += dt * death_term;
    }
    let initial = &traj.states[0];
    let mut t_init = 0.0;
    for i in 0..n {
        t_init += phi.phi(0.0, mesh.midpoint(i)) * initial.c[i] * mesh.width(i);
    }
    Ok(t_time + t_init + t_birth - t_death)
}

/// One rung of a nested-mesh self-convergence study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergencePair {
    pub coarse_cells: usize,
    pub fine_cells: usize,
    /// L1 distance at the final time between the coarse solution and the
    /// fine solution mass-averaged onto the coarse mesh.
    pub l1_distance: f64,
    /// `log2(d_prev / d_this)` between consecutive rungs; absent on the
    /// first rung. Reported, not asserted: convergence is proven, a rate is
    /// not.
    pub eoc: Option<f64>,
}

/// Run the same problem on a ladder of nested refinements of `base` and
/// measure successive final-time L1 distances.
///
/// Ladder entries must be non-decreasing multiples of the base cell count,
/// each dividing the next (cells only ever split). All runs share one time
/// step: the smallest stability bound across the ladder, rounded so an
/// integer number of steps lands on the horizon. Fine-to-coarse comparison
/// averages cell masses, which avoids interpolation artifacts in the rate.
pub fn self_convergence(
    base: &Mesh,
    collision: &CollisionKernel,
    breakage: &BreakageKernel,
    initial: &InitialCondition,
    options: &SimOptions,
    ladder: &[usize],
    acknowledge_nonconserving: bool,
) -> Result<Vec<ConvergencePair>, VerifyError> {
    if ladder.len() < 2 {
        return Err(VerifyError::Contract(
            "a convergence ladder needs at least two cell counts".into(),
        ));
    }
    for (k, &cells) in ladder.iter().enumerate() {
        if cells == 0 || !cells.is_multiple_of(base.cells()) {
            return Err(VerifyError::NonNested {
                coarse: base.cells(),
                fine: cells,
            });
        }
        if k > 0 && (cells < ladder[k - 1] || !cells.is_multiple_of(ladder[k - 1])) {
            return Err(VerifyError::NonNested {
                coarse: ladder[k - 1],
                fine: cells,
            });
        }
    }
    let meshes: Vec<Mesh> = ladder
        .iter()
        .map(|&cells| base.refine(cells / base.cells()))
        .collect::<Result<_, _>>()?;
    // One shared step: the smallest stability bound over the ladder.
    let mut dt_min = f64::INFINITY;
    for mesh in &meshes {
        let c0 = initial.project(mesh)?;
        let sdt = stable_dt(
            collision,
            breakage,
            mesh.r(),
            options.horizon,
            crate::diagnostics::weighted_norm(mesh, &c0, &options.norm),
            moment(mesh, &c0, 1.0),
            options.theta,
        )?;
        dt_min = dt_min.min(sdt);
    }
    let shared_dt = if options.horizon > 0.0 {
        let target = if dt_min.is_finite() {
            dt_min.min(options.horizon)
        } else {
            options.horizon
        };
        let n = (options.horizon / target).ceil().max(1.0);
        Some(options.horizon / n)
    } else {
        None
    };

    let finals: Vec<Result<Vec<f64>, VerifyError>> = meshes
        .par_iter()
        .map(|mesh| {
            let tables = SchemeTables::build(mesh, collision, breakage)?;
            let problem = Problem::new(mesh, collision, breakage, &tables);
            let c0 = initial.project(mesh)?;
            let run_options = SimOptions {
                dt_override: shared_dt,
                force_dt: false,
                snapshots: SnapshotSpec::Count(2),
                ..options.clone()
            };
            let traj = simulate(&problem, &c0, &run_options, acknowledge_nonconserving)?;
            Ok(traj.last().c.clone())
        })
        .collect();
    let finals: Vec<Vec<f64>> = finals.into_iter().collect::<Result<_, _>>()?;

    let mut pairs = Vec::with_capacity(ladder.len() - 1);
    let mut prev_distance: Option<f64> = None;
    for k in 0..ladder.len() - 1 {
        let (coarse_mesh, fine_mesh) = (&meshes[k], &meshes[k + 1]);
        let ratio = fine_mesh.cells() / coarse_mesh.cells();
        let mut distance = 0.0;
        for i in 0..coarse_mesh.cells() {
            let mut mass = 0.0;
            for (q, fine_c) in finals[k + 1]
                .iter()
                .enumerate()
                .take((i + 1) * ratio)
                .skip(i * ratio)
            {
                mass += fine_c * fine_mesh.width(q);
            }
            let averaged = mass / coarse_mesh.width(i);
            distance += (finals[k][i] - averaged).abs() * coarse_mesh.width(i);
        }
        let eoc = prev_distance.and_then(|d_prev| {
            (distance > 0.0 && d_prev > 0.0).then(|| (d_prev / distance).log2())
        });
        pairs.push(ConvergencePair {
            coarse_cells: coarse_mesh.cells(),
            fine_cells: fine_mesh.cells(),
            l1_distance: distance,
            eoc,
        });
        prev_distance = Some(distance);
    }
    Ok(pairs)
}
