//! The fully discrete, mass-conserving finite-volume scheme.
//!
//! Per cell `i` the update reads
//!
//! ```text
//! c_i' = c_i + dt * (birth_i - death_i)
//! birth_i = (1/w_i) sum_{j>=i} g_j c_j w_j B[i][j]
//! death_i = c_i L_i g_i
//! g_j     = sum_l K[j][l] c_l w_l
//! ```
//!
//! where `B[i][j]` integrates the breakage distribution over the part of
//! cell `i` reachable from a parent at the midpoint of cell `j` (capped at
//! the parent midpoint on the diagonal), and `L_i` rescales the death term so
//! the discrete first moment is conserved exactly: weighting the births of
//! cells `1..=j` by their midpoints reproduces `eps_j L_j` by construction.
//!
//! All sums run over ascending indices, so identical inputs give bit-identical
//! trajectories. An optional Neumaier-compensated accumulation exists for
//! conditioning studies; the plain ascending sum stays the default so that
//! published numbers are reproducible.

use crate::diagnostics::{bound_p, moment, weighted_norm, NormParams};
use crate::kernels::{BreakageKernel, CollisionKernel, KernelError};
use crate::mesh::Mesh;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemeError {
    #[error("table entry for cell pair ({row}, {col}) is not finite")]
    NonFiniteTable { row: usize, col: usize },
    #[error("state has {got} cells but the mesh has {expected}")]
    StateSize { expected: usize, got: usize },
    #[error("time step must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("safety constant theta must lie in (0, 1), got {0}")]
    InvalidTheta(f64),
    #[error("requested dt {requested} exceeds the stability bound {stable}; pass the force flag to override")]
    StabilityViolation { requested: f64, stable: f64 },
    #[error("concentration in cell {cell} became negative ({value}) at time level {time_level}")]
    Negativity {
        cell: usize,
        time_level: u64,
        value: f64,
    },
    #[error("concentration in cell {cell} is not finite at time level {time_level}")]
    NonFinite { cell: usize, time_level: u64 },
    #[error("runtime assertion `{kind}` failed at time level {time_level}: {detail}")]
    AssertionFailed {
        kind: AssertionKind,
        time_level: u64,
        detail: String,
    },
    #[error("driving a simulation with a non-conserving breakage family requires an explicit acknowledgement")]
    NonConservingNotAcknowledged,
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssertionKind {
    MassConservation,
    NumberBound,
}

impl std::fmt::Display for AssertionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AssertionKind::MassConservation => write!(f, "mass_conservation"),
            AssertionKind::NumberBound => write!(f, "number_bound"),
        }
    }
}

/// Per-cell concentrations at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub c: Vec<f64>,
    pub time: f64,
    pub step: u64,
}

impl State {
    pub fn initial(c: Vec<f64>) -> Self {
        Self {
            c,
            time: 0.0,
            step: 0,
        }
    }
}

/// Precomputed kernel tables: collision values `collision`, partial breakage
/// integrals `fragments` (upper triangular; fragments never exceed the parent
/// midpoint) and the mass-conservation weights `death_weight`.
///
/// Every entry costs O(1) via the closed-form antiderivatives, so the build
/// is O(I^2) and each Euler step is O(I^2).
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeTables {
    cells: usize,
    collision: Vec<f64>,
    fragments: Vec<f64>,
    death_weight: Vec<f64>,
}

impl SchemeTables {
    pub fn build(
        mesh: &Mesh,
        collision: &CollisionKernel,
        breakage: &BreakageKernel,
    ) -> Result<Self, SchemeError> {
        let n = mesh.cells();
        let mut rates = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let v = collision.table_value(mesh, i, j);
                if !v.is_finite() {
                    return Err(SchemeError::NonFiniteTable { row: i, col: j });
                }
                rates[i * n + j] = v;
            }
        }
        let mut fragments = vec![0.0; n * n];
        for j in 0..n {
            let rho = mesh.midpoint(j);
            for i in 0..=j {
                let lo = mesh.lower(i);
                let hi = if i == j { rho } else { mesh.upper(i) };
                let v = breakage.partial_integral(lo, hi, rho)?;
                if !v.is_finite() {
                    return Err(SchemeError::NonFiniteTable { row: i, col: j });
                }
                fragments[i * n + j] = v;
            }
        }
        let mut death_weight = vec![0.0; n];
        for i in 0..n {
            let mut s = 0.0;
            for l in 0..=i {
                s += mesh.midpoint(l) * fragments[l * n + i];
            }
            let v = s / mesh.midpoint(i);
            if !v.is_finite() {
                return Err(SchemeError::NonFiniteTable { row: i, col: i });
            }
            death_weight[i] = v;
        }
        Ok(Self {
            cells: n,
            collision: rates,
            fragments,
            death_weight,
        })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    /// Collision value for the cell pair `(i, j)` under the kernel's
    /// evaluation mode.
    pub fn collision(&self, i: usize, j: usize) -> f64 {
        self.collision[i * self.cells + j]
    }

    /// Integral of the breakage distribution over the part of cell `i` fed by
    /// a parent in cell `j`; zero for `j < i`.
    pub fn fragments(&self, i: usize, j: usize) -> f64 {
        self.fragments[i * self.cells + j]
    }

    /// Mass-conservation weight of the death term for cell `i`. Exceeds 1 in
    /// general; it is a conservation weight, not a probability.
    pub fn death_weight(&self, i: usize) -> f64 {
        self.death_weight[i]
    }

    pub fn death_weights(&self) -> &[f64] {
        &self.death_weight
    }
}

/// Borrowed bundle of everything the rate evaluations need.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub mesh: &'a Mesh,
    pub collision: &'a CollisionKernel,
    pub breakage: &'a BreakageKernel,
    pub tables: &'a SchemeTables,
}

impl<'a> Problem<'a> {
    pub fn new(
        mesh: &'a Mesh,
        collision: &'a CollisionKernel,
        breakage: &'a BreakageKernel,
        tables: &'a SchemeTables,
    ) -> Self {
        Self {
            mesh,
            collision,
            breakage,
            tables,
        }
    }
}

fn check_state(mesh: &Mesh, state: &State) -> Result<(), SchemeError> {
    if state.c.len() != mesh.cells() {
        return Err(SchemeError::StateSize {
            expected: mesh.cells(),
            got: state.c.len(),
        });
    }
    Ok(())
}

/// How per-cell sums accumulate. Plain ascending addition is the default and
/// defines the published numbers; Neumaier compensation is available for
/// conditioning studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Accumulation {
    #[default]
    Plain,
    Compensated,
}

struct Acc {
    sum: f64,
    comp: f64,
    compensated: bool,
}

impl Acc {
    fn new(accumulation: Accumulation) -> Self {
        Self {
            sum: 0.0,
            comp: 0.0,
            compensated: accumulation == Accumulation::Compensated,
        }
    }

    #[inline]
    fn add(&mut self, v: f64) {
        if self.compensated {
            let t = self.sum + v;
            self.comp += if self.sum.abs() >= v.abs() {
                (self.sum - t) + v
            } else {
                (v - t) + self.sum
            };
            self.sum = t;
        } else {
            self.sum += v;
        }
    }

    fn value(&self) -> f64 {
        if self.compensated {
            self.sum + self.comp
        } else {
            self.sum
        }
    }
}

/// Collision interaction sums `g_i = sum_j K[i][j] c_j w_j`, the shared
/// kernel moment of both birth and death terms.
pub fn interaction_sums(tables: &SchemeTables, mesh: &Mesh, state: &State) -> Vec<f64> {
    interaction_sums_acc(tables, mesh, state, Accumulation::Plain)
}

fn interaction_sums_acc(
    tables: &SchemeTables,
    mesh: &Mesh,
    state: &State,
    accumulation: Accumulation,
) -> Vec<f64> {
    let n = tables.cells();
    let cw: Vec<f64> = (0..n).map(|j| state.c[j] * mesh.width(j)).collect();
    let mut g = vec![0.0; n];
    for (i, gi) in g.iter_mut().enumerate() {
        let row = &tables.collision[i * n..(i + 1) * n];
        let mut s = Acc::new(accumulation);
        for (kij, cwj) in row.iter().zip(cw.iter()) {
            s.add(kij * cwj);
        }
        *gi = s.value();
    }
    g
}

fn birth_rates_with(
    tables: &SchemeTables,
    mesh: &Mesh,
    state: &State,
    g: &[f64],
    accumulation: Accumulation,
) -> Vec<f64> {
    let n = tables.cells();
    let cwg: Vec<f64> = (0..n).map(|j| state.c[j] * mesh.width(j) * g[j]).collect();
    let mut rates = vec![0.0; n];
    for (i, rate) in rates.iter_mut().enumerate() {
        let row = &tables.fragments[i * n..(i + 1) * n];
        let mut s = Acc::new(accumulation);
        for (bij, cwgj) in row[i..].iter().zip(cwg[i..].iter()) {
            s.add(bij * cwgj);
        }
        *rate = s.value() / mesh.width(i);
    }
    rates
}

fn death_rates_with(tables: &SchemeTables, state: &State, g: &[f64]) -> Vec<f64> {
    (0..tables.cells())
        .map(|i| state.c[i] * tables.death_weight(i) * g[i])
        .collect()
}

/// Birth rate of cell `i`: fragments produced into cell `i` by collisions of
/// all parent cells `j >= i` with all partners.
pub fn birth_rate(i: usize, state: &State, tables: &SchemeTables, mesh: &Mesh) -> f64 {
    let g = interaction_sums(tables, mesh, state);
    let mut s = 0.0;
    for (j, gj) in g.iter().enumerate().skip(i) {
        s += tables.fragments(i, j) * state.c[j] * mesh.width(j) * gj;
    }
    s / mesh.width(i)
}

/// Death rate of cell `i`, carrying the mass-conservation weight.
pub fn death_rate(i: usize, state: &State, tables: &SchemeTables, mesh: &Mesh) -> f64 {
    let g = interaction_sums(tables, mesh, state);
    state.c[i] * tables.death_weight(i) * g[i]
}

/// All birth rates at once (one shared interaction-sum pass).
pub fn birth_rates(state: &State, tables: &SchemeTables, mesh: &Mesh) -> Vec<f64> {
    let g = interaction_sums(tables, mesh, state);
    birth_rates_with(tables, mesh, state, &g, Accumulation::Plain)
}

/// All death rates at once.
pub fn death_rates(state: &State, tables: &SchemeTables, mesh: &Mesh) -> Vec<f64> {
    let g = interaction_sums(tables, mesh, state);
    death_rates_with(tables, state, &g)
}

/// Death rates through the separable fast path: for the power-family kernel
/// the interaction sum factors through two weighted moments
/// `S_m = sum_l eps_l^m c_l w_l`, giving an O(I) evaluation. Uses midpoint
/// kernel values regardless of the table evaluation mode.
pub fn death_rates_separable(
    state: &State,
    tables: &SchemeTables,
    mesh: &Mesh,
    collision: &CollisionKernel,
) -> Vec<f64> {
    let n = tables.cells();
    let (zeta, eta, alpha) = (collision.zeta(), collision.eta(), collision.alpha());
    let mut s_zeta = 0.0;
    let mut s_eta = 0.0;
    for j in 0..n {
        let cw = state.c[j] * mesh.width(j);
        s_zeta += mesh.midpoint(j).powf(zeta) * cw;
        s_eta += mesh.midpoint(j).powf(eta) * cw;
    }
    (0..n)
        .map(|i| {
            let eps = mesh.midpoint(i);
            let g = alpha * (eps.powf(zeta) * s_eta + eps.powf(eta) * s_zeta);
            state.c[i] * tables.death_weight(i) * g
        })
        .collect()
}

/// What to do when an Euler update produces a negative concentration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NegativityPolicy {
    /// Fail with the offending cell and time level.
    #[default]
    Error,
    /// Clamp negatives no larger in magnitude than `1e-14 * max(c)` to zero;
    /// larger violations still fail.
    ClampTiny,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StepOptions {
    pub negativity: NegativityPolicy,
    pub accumulation: Accumulation,
}

/// One explicit Euler step `c' = c + dt (birth - death)`.
///
/// For the conserving breakage family the discrete first moment is unchanged
/// in real arithmetic. Non-finite results always fail; negative results
/// follow the configured policy.
pub fn step(
    state: &State,
    dt: f64,
    tables: &SchemeTables,
    mesh: &Mesh,
    options: &StepOptions,
) -> Result<State, SchemeError> {
    check_state(mesh, state)?;
    if !dt.is_finite() || dt <= 0.0 {
        return Err(SchemeError::NonPositiveDt(dt));
    }
    let g = interaction_sums_acc(tables, mesh, state, options.accumulation);
    let birth = birth_rates_with(tables, mesh, state, &g, options.accumulation);
    let death = death_rates_with(tables, state, &g);
    let level = state.step + 1;
    let clamp_floor = match options.negativity {
        NegativityPolicy::ClampTiny => -1e-14 * state.c.iter().cloned().fold(0.0f64, f64::max),
        NegativityPolicy::Error => 0.0,
    };
    let mut c = Vec::with_capacity(state.c.len());
    for i in 0..state.c.len() {
        let mut v = state.c[i] + dt * (birth[i] - death[i]);
        if !v.is_finite() {
            return Err(SchemeError::NonFinite {
                cell: i,
                time_level: level,
            });
        }
        if v < 0.0 {
            match options.negativity {
                NegativityPolicy::ClampTiny if v >= clamp_floor => v = 0.0,
                _ => {
                    return Err(SchemeError::Negativity {
                        cell: i,
                        time_level: level,
                        value: v,
                    })
                }
            }
        }
        c.push(v);
    }
    Ok(State {
        c,
        time: state.time + dt,
        step: level,
    })
}

/// Largest stable explicit Euler step `theta / C(R, T)` with
/// `C(R, T) = 2 alpha N ||c_in||_S exp(2 alpha N M1_in T) (R + M1_in)`.
///
/// Steps below the bound keep the solution non-negative and under the
/// particle-count bound up to the horizon `T`. Returns infinity when the
/// collision rate vanishes (`alpha = 0`): the system is then inert and any
/// step is stable.
pub fn stable_dt(
    collision: &CollisionKernel,
    breakage: &BreakageKernel,
    r: f64,
    horizon: f64,
    norm_s_cin: f64,
    m1_in: f64,
    theta: f64,
) -> Result<f64, SchemeError> {
    if theta.is_nan() || theta <= 0.0 || theta >= 1.0 {
        return Err(SchemeError::InvalidTheta(theta));
    }
    let n = breakage.multiplicity();
    let alpha = collision.alpha();
    let c = 2.0 * alpha * n * norm_s_cin * (2.0 * alpha * n * m1_in * horizon).exp() * (r + m1_in);
    if c <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(theta / c)
}

/// Exact cell-average projections of the supported initial data.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    /// `c_in(eps) = value` on the whole domain.
    Constant(f64),
    /// `c_in(eps) = amplitude * exp(-decay * eps)`.
    Exponential { amplitude: f64, decay: f64 },
    /// Explicit cell averages. Projects onto refinements whose cell count is
    /// a multiple of the stored length by replicating values.
    PerCell(Vec<f64>),
}

impl InitialCondition {
    pub fn project(&self, mesh: &Mesh) -> Result<Vec<f64>, SchemeError> {
        match self {
            InitialCondition::Constant(v) => Ok(vec![*v; mesh.cells()]),
            InitialCondition::Exponential { amplitude, decay } => {
                if *decay == 0.0 {
                    return Ok(vec![*amplitude; mesh.cells()]);
                }
                Ok((0..mesh.cells())
                    .map(|i| {
                        let (lo, hi) = (mesh.lower(i), mesh.upper(i));
                        amplitude * ((-decay * lo).exp() - (-decay * hi).exp())
                            / (decay * mesh.width(i))
                    })
                    .collect())
            }
            InitialCondition::PerCell(values) => {
                let n = mesh.cells();
                if values.is_empty() || !n.is_multiple_of(values.len()) {
                    return Err(SchemeError::StateSize {
                        expected: n,
                        got: values.len(),
                    });
                }
                let k = n / values.len();
                Ok((0..n).map(|i| values[i / k]).collect())
            }
        }
    }
}

/// Which states a simulation records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotSpec {
    /// `count` evenly spaced snapshots including the initial and final state.
    Count(usize),
    /// Every time level, as required by the weak-form residual.
    EveryStep,
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    /// Time horizon `T >= 0`.
    pub horizon: f64,
    /// Safety constant of the stability bound.
    pub theta: f64,
    /// Fixed step overriding the stability bound. Used verbatim: the run
    /// covers `ceil(T / dt)` steps of exactly this size and may pass the
    /// horizon on the last step.
    pub dt_override: Option<f64>,
    /// Accept an override above the stability bound.
    pub force_dt: bool,
    pub snapshots: SnapshotSpec,
    /// Run the post-step checks (non-negativity, mass conservation, particle
    /// count bound).
    pub assertions: bool,
    /// With assertions disabled, clamp ulp-level negatives instead of
    /// failing.
    pub clamp_tiny_negative: bool,
    /// Norm parameters for `||c_in||_S` in the stability bound.
    pub norm: NormParams,
    /// Summation mode of the per-step accumulations.
    pub accumulation: Accumulation,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            theta: 0.9,
            dt_override: None,
            force_dt: false,
            snapshots: SnapshotSpec::Count(11),
            assertions: true,
            clamp_tiny_negative: false,
            norm: NormParams::default(),
            accumulation: Accumulation::Plain,
        }
    }
}

/// Recorded simulation output.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub dt: f64,
    pub steps: u64,
    pub stable_dt: f64,
    pub every_step: bool,
    pub horizon: f64,
}

impl Trajectory {
    pub fn initial(&self) -> &State {
        &self.states[0]
    }

    pub fn last(&self) -> &State {
        self.states.last().unwrap()
    }
}

/// Advance the initial data to the horizon with a fixed step and record
/// snapshots.
///
/// Without an override the step is the stability bound rounded down so that
/// an integer number of steps lands exactly on the horizon. Assertions check
/// non-negativity, first-moment conservation (when the breakage family
/// conserves volume) and the particle-count bound after every step. A
/// non-conserving family must be acknowledged explicitly.
pub fn simulate(
    problem: &Problem<'_>,
    initial: &[f64],
    options: &SimOptions,
    acknowledge_nonconserving: bool,
) -> Result<Trajectory, SchemeError> {
    let mesh = problem.mesh;
    if initial.len() != mesh.cells() {
        return Err(SchemeError::StateSize {
            expected: mesh.cells(),
            got: initial.len(),
        });
    }
    if !problem.breakage.conserves_volume() && !acknowledge_nonconserving {
        return Err(SchemeError::NonConservingNotAcknowledged);
    }
    let m1_in = moment(mesh, initial, 1.0);
    let norm_in = weighted_norm(mesh, initial, &options.norm);
    let sdt = stable_dt(
        problem.collision,
        problem.breakage,
        mesh.r(),
        options.horizon,
        norm_in,
        m1_in,
        options.theta,
    )?;

    let horizon = options.horizon;
    let (dt, n_steps) = match options.dt_override {
        Some(requested) => {
            if !requested.is_finite() || requested <= 0.0 {
                return Err(SchemeError::NonPositiveDt(requested));
            }
            if requested > sdt && !options.force_dt {
                return Err(SchemeError::StabilityViolation {
                    requested,
                    stable: sdt,
                });
            }
            if horizon <= 0.0 {
                (requested, 0u64)
            } else {
                (requested, (horizon / requested).ceil().max(1.0) as u64)
            }
        }
        None => {
            if horizon <= 0.0 {
                (0.0, 0u64)
            } else {
                let target = if sdt.is_finite() {
                    sdt.min(horizon)
                } else {
                    horizon
                };
                let n = (horizon / target).ceil().max(1.0);
                (horizon / n, n as u64)
            }
        }
    };

    let record_levels: Vec<u64> = match options.snapshots {
        SnapshotSpec::EveryStep => (0..=n_steps).collect(),
        SnapshotSpec::Count(count) => {
            let count = count.max(1) as u64;
            let mut levels: Vec<u64> = (0..count)
                .map(|k| {
                    if count == 1 {
                        0
                    } else {
                        (k * n_steps + (count - 1) / 2) / (count - 1)
                    }
                })
                .collect();
            levels.push(0);
            levels.push(n_steps);
            levels.sort_unstable();
            levels.dedup();
            levels
        }
    };

    let step_options = StepOptions {
        negativity: if !options.assertions && options.clamp_tiny_negative {
            NegativityPolicy::ClampTiny
        } else {
            NegativityPolicy::Error
        },
        accumulation: options.accumulation,
    };

    let mut states = Vec::with_capacity(record_levels.len());
    let mut current = State::initial(initial.to_vec());
    if options.assertions {
        check_invariants(problem, &current, m1_in, norm_in)?;
    }
    let mut record_iter = record_levels.iter().peekable();
    if record_iter.peek() == Some(&&0) {
        states.push(current.clone());
        record_iter.next();
    }
    for level in 1..=n_steps {
        current = step(&current, dt, problem.tables, mesh, &step_options)?;
        // Times as level * dt rather than accumulation, so recorded times are
        // reproducible and free of summation drift.
        current.time = level as f64 * dt;
        if options.assertions {
            check_invariants(problem, &current, m1_in, norm_in)?;
        }
        if record_iter.peek() == Some(&&level) {
            states.push(current.clone());
            record_iter.next();
        }
    }
    Ok(Trajectory {
        states,
        dt,
        steps: n_steps,
        stable_dt: sdt,
        every_step: matches!(options.snapshots, SnapshotSpec::EveryStep),
        horizon,
    })
}

fn check_invariants(
    problem: &Problem<'_>,
    state: &State,
    m1_in: f64,
    norm_in: f64,
) -> Result<(), SchemeError> {
    let mesh = problem.mesh;
    if problem.breakage.conserves_volume() && m1_in > 0.0 {
        let m1 = moment(mesh, &state.c, 1.0);
        let drift = (m1 - m1_in).abs() / m1_in;
        if drift > 1e-10 {
            return Err(SchemeError::AssertionFailed {
                kind: AssertionKind::MassConservation,
                time_level: state.step,
                detail: format!("relative first-moment drift {drift:.3e} exceeds 1e-10"),
            });
        }
    }
    let m0 = moment(mesh, &state.c, 0.0);
    let bound = bound_p(
        state.time,
        problem.collision,
        problem.breakage,
        norm_in,
        m1_in,
    );
    if m0 > bound * (1.0 + 1e-12) + 1e-30 {
        return Err(SchemeError::AssertionFailed {
            kind: AssertionKind::NumberBound,
            time_level: state.step,
            detail: format!("particle count {m0:.6e} exceeds the bound {bound:.6e}"),
        });
    }
    Ok(())
}
