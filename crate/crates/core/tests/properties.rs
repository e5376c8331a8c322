//! Property tests for the scheme's structural invariants: exact volume
//! conservation, non-negativity under the stability bound, determinism,
//! fast-path equivalence and the closed-form integral identities.

use breakfvm::quadrature::adaptive_simpson;
use breakfvm::scheme::{self, StepOptions};
use breakfvm::*;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn ulps_between(a: f64, b: f64) -> u64 {
    if a == b {
        return 0;
    }
    if a.signum() != b.signum() {
        return u64::MAX;
    }
    let (x, y) = (a.abs().to_bits() as i64, b.abs().to_bits() as i64);
    (x - y).unsigned_abs()
}

/// Kernel exponents restricted to `zeta + eta >= 1` on domains inside
/// `]0, 1]`: there the power pair is dominated by `alpha (eps + rho)`, the
/// estimate the stability bound rests on. Smaller exponent sums escape that
/// domination and the particle count can blow up in finite time, taking the
/// bound's guarantees with it.
fn sound_kernel(seed: &mut StdRng) -> CollisionKernel {
    let eta: f64 = seed.gen_range(0.55..1.0);
    let zeta = seed.gen_range((1.0 - eta).max(1e-6)..eta);
    let alpha = seed.gen_range(0.25..1.5);
    CollisionKernel::new(alpha, zeta, eta).unwrap()
}

fn random_mesh(seed: &mut StdRng, max_cells: usize) -> Mesh {
    let cells = seed.gen_range(2..=max_cells);
    let r = seed.gen_range(0.5..1.0);
    if seed.gen_bool(0.5) {
        Mesh::uniform(r, cells).unwrap()
    } else {
        Mesh::geometric(r, cells, seed.gen_range(1.02..1.3)).unwrap()
    }
}

/// Consistent pair (dt, coverage horizon): the bound's horizon must cover
/// the full 100-step run it certifies.
fn sweep_dt(k: &CollisionKernel, b: &BreakageKernel, mesh: &Mesh, c0: &[f64], steps: u64) -> f64 {
    let norm = weighted_norm(mesh, c0, &NormParams::default());
    let m1 = moment(mesh, c0, 1.0);
    let dt1 = stable_dt(k, b, mesh.r(), 1.0, norm, m1, 0.9).unwrap();
    let cover = (steps as f64 * dt1).max(1.0);
    stable_dt(k, b, mesh.r(), cover, norm, m1, 0.9).unwrap()
}

#[test]
fn conservation_and_positivity_over_randomized_configs() {
    let mut rng = StdRng::seed_from_u64(0x5eed);
    for _ in 0..25 {
        let mesh = random_mesh(&mut rng, 128);
        let k = sound_kernel(&mut rng);
        let b = BreakageKernel::power_conserving(-rng.gen_range(0.0..0.95)).unwrap();
        let tables = SchemeTables::build(&mesh, &k, &b).unwrap();
        let c0: Vec<f64> = (0..mesh.cells()).map(|_| rng.gen_range(0.2..2.0)).collect();
        let dt = sweep_dt(&k, &b, &mesh, &c0, 100);
        let m1_0 = moment(&mesh, &c0, 1.0);
        let mut state = State::initial(c0);
        for _ in 0..100 {
            state = scheme::step(&state, dt, &tables, &mesh, &StepOptions::default())
                .expect("stable step must stay non-negative");
        }
        let drift = (moment(&mesh, &state.c, 1.0) - m1_0).abs() / m1_0;
        assert!(drift <= 1e-12, "volume drift {drift:.3e} exceeds 1e-12");
        assert!(state.c.iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn particle_count_bound_holds_along_trajectories() {
    let mut rng = StdRng::seed_from_u64(0xb0bb);
    for _ in 0..10 {
        let mesh = random_mesh(&mut rng, 48);
        let k = sound_kernel(&mut rng);
        let b = BreakageKernel::power_conserving(-rng.gen_range(0.0..0.8)).unwrap();
        let tables = SchemeTables::build(&mesh, &k, &b).unwrap();
        let problem = Problem::new(&mesh, &k, &b, &tables);
        let c0: Vec<f64> = (0..mesh.cells()).map(|_| rng.gen_range(0.2..1.5)).collect();
        let options = SimOptions {
            horizon: 0.5,
            snapshots: SnapshotSpec::Count(6),
            ..SimOptions::default()
        };
        let norm = weighted_norm(&mesh, &c0, &NormParams::default());
        let m1 = moment(&mesh, &c0, 1.0);
        // simulate itself asserts the bound after every step; re-check the
        // recorded snapshots independently here.
        let traj = simulate(&problem, &c0, &options, false).unwrap();
        for s in &traj.states {
            let m0 = moment(&mesh, &s.c, 0.0);
            let p = bound_p(s.time, &k, &b, norm, m1);
            assert!(m0 <= p * (1.0 + 1e-12), "M0 {m0} above bound {p}");
        }
    }
}

#[test]
fn trajectories_are_bit_deterministic() {
    let mesh = Mesh::geometric(1.0, 40, 1.07).unwrap();
    let k = CollisionKernel::new(0.8, 0.4, 0.9).unwrap();
    let b = BreakageKernel::power_conserving(-0.4).unwrap();
    let tables = SchemeTables::build(&mesh, &k, &b).unwrap();
    let problem = Problem::new(&mesh, &k, &b, &tables);
    let c0 = InitialCondition::Exponential {
        amplitude: 1.0,
        decay: 1.5,
    }
    .project(&mesh)
    .unwrap();
    let options = SimOptions {
        horizon: 0.4,
        snapshots: SnapshotSpec::EveryStep,
        ..SimOptions::default()
    };
    let a = simulate(&problem, &c0, &options, false).unwrap();
    let b2 = simulate(&problem, &c0, &options, false).unwrap();
    assert_eq!(a.states.len(), b2.states.len());
    for (x, y) in a.states.iter().zip(b2.states.iter()) {
        for (u, v) in x.c.iter().zip(y.c.iter()) {
            assert_eq!(u.to_bits(), v.to_bits());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn collision_kernel_symmetric_bitwise(
        seed in any::<u64>(),
    ) {
        let mut rng = StdRng::seed_from_u64(seed);
        let k = sound_kernel(&mut rng);
        for _ in 0..160 {
            let eps = rng.gen_range(1e-6..1.0f64);
            let rho = rng.gen_range(1e-6..1.0f64);
            let a = k.eval(eps, rho).unwrap();
            let b = k.eval(rho, eps).unwrap();
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn collision_kernel_dominated_by_linear_pair(
        seed in any::<u64>(),
    ) {
        let mut rng = StdRng::seed_from_u64(seed);
        let k = sound_kernel(&mut rng);
        for _ in 0..100 {
            let eps = rng.gen_range(1e-9..1.0f64);
            let rho = rng.gen_range(1e-9..1.0f64);
            let v = k.eval(eps, rho).unwrap();
            prop_assert!(v <= k.alpha() * (eps + rho) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn partial_integrals_are_additive(
        nu in -0.95f64..0.0,
        rho in 0.01f64..10.0,
        points in proptest::array::uniform3(0.0f64..1.0),
    ) {
        let b = BreakageKernel::power_conserving(nu).unwrap();
        let mut cuts = [points[0] * rho, points[1] * rho, points[2] * rho];
        cuts.sort_by(f64::total_cmp);
        let [a, m, c] = cuts;
        let left = b.partial_integral(a, m, rho).unwrap();
        let right = b.partial_integral(m, c, rho).unwrap();
        let whole = b.partial_integral(a, c, rho).unwrap();
        let split = left + right;
        prop_assert!(
            ulps_between(split, whole) <= 4,
            "additivity violated: {} vs {} ({} ulp)",
            split, whole, ulps_between(split, whole)
        );
    }

    #[test]
    fn partial_integrals_match_quadrature_away_from_zero(
        nu in -0.95f64..0.0,
        rho in 0.1f64..5.0,
        lo_frac in 0.05f64..0.5,
        hi_frac in 0.55f64..1.0,
    ) {
        let b = BreakageKernel::power_conserving(nu).unwrap();
        let (a, c) = (lo_frac * rho, hi_frac * rho);
        let closed = b.partial_integral(a, c, rho).unwrap();
        let numeric = adaptive_simpson(&|x| b.eval(x, rho), a, c, 1e-13 * closed.abs());
        prop_assert!(
            (closed - numeric).abs() <= 1e-10 * closed.abs(),
            "closed {} vs quadrature {}", closed, numeric
        );
    }

    #[test]
    fn mass_weighted_identity_over_exponent_grid(
        rho in 1e-3f64..10.0,
    ) {
        for nu in [-0.9, -0.5, -0.1, 0.0] {
            let b = BreakageKernel::power_conserving(nu).unwrap();
            let v = b.mass_weighted_integral(0.0, rho, rho).unwrap() / rho;
            prop_assert!((v - 1.0).abs() <= 1e-13);
        }
    }

    #[test]
    fn weighted_norm_splits_into_moment_sum(
        seed in any::<u64>(),
    ) {
        let mut rng = StdRng::seed_from_u64(seed);
        let mesh = random_mesh(&mut rng, 64);
        let c: Vec<f64> = (0..mesh.cells()).map(|_| rng.gen_range(0.0..2.0)).collect();
        let params = NormParams::new(1.0, 0.0).unwrap();
        let norm = weighted_norm(&mesh, &c, &params);
        let split = moment(&mesh, &c, 0.0) + moment(&mesh, &c, 1.0);
        prop_assert!(ulps_between(norm, split) <= 2);
    }

    #[test]
    fn single_cell_step_is_identity(
        nu in -0.9f64..0.0,
        dt in 1e-4f64..100.0,
        c0 in 0.1f64..10.0,
    ) {
        let mesh = Mesh::uniform(1.0, 1).unwrap();
        let k = CollisionKernel::new(1.0, 0.7, 0.9).unwrap();
        let b = BreakageKernel::power_conserving(nu).unwrap();
        let tables = SchemeTables::build(&mesh, &k, &b).unwrap();
        let state = State::initial(vec![c0]);
        let next = scheme::step(&state, dt, &tables, &mesh, &StepOptions::default()).unwrap();
        prop_assert!((next.c[0] - c0).abs() <= 1e-12 * c0);
    }
}

#[test]
fn symmetry_holds_for_ten_thousand_pairs() {
    let k = CollisionKernel::new(1.3, 0.35, 0.8).unwrap();
    let mut rng = StdRng::seed_from_u64(99);
    for _ in 0..10_000 {
        let eps = rng.gen_range(1e-9..1.0f64);
        let rho = rng.gen_range(1e-9..1.0f64);
        assert_eq!(
            k.eval(eps, rho).unwrap().to_bits(),
            k.eval(rho, eps).unwrap().to_bits()
        );
    }
}

#[test]
fn death_fast_path_matches_tabulated_within_8_ulp() {
    let mut rng = StdRng::seed_from_u64(0xfa57);
    for _ in 0..300 {
        let mesh = random_mesh(&mut rng, 64);
        let k = sound_kernel(&mut rng);
        let b = BreakageKernel::power_conserving(-rng.gen_range(0.0..0.9)).unwrap();
        let tables = SchemeTables::build(&mesh, &k, &b).unwrap();
        let c: Vec<f64> = (0..mesh.cells()).map(|_| rng.gen_range(0.0..2.0)).collect();
        let state = State::initial(c);
        let tabulated = scheme::death_rates(&state, &tables, &mesh);
        let fast = scheme::death_rates_separable(&state, &tables, &mesh, &k);
        for i in 0..mesh.cells() {
            assert!(
                ulps_between(tabulated[i], fast[i]) <= 8,
                "cell {}: {} vs {} ({} ulp)",
                i,
                tabulated[i],
                fast[i],
                ulps_between(tabulated[i], fast[i])
            );
        }
    }
}

#[test]
fn moments_are_linear_in_the_state() {
    let mut rng = StdRng::seed_from_u64(0x11ea);
    for _ in 0..300 {
        let mesh = random_mesh(&mut rng, 48);
        let scale = rng.gen_range(0.1..10.0);
        let order = rng.gen_range(0.0..3.0);
        let c1: Vec<f64> = (0..mesh.cells()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let c2: Vec<f64> = (0..mesh.cells()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let combined: Vec<f64> = c1
            .iter()
            .zip(c2.iter())
            .map(|(a, b)| scale * a + b)
            .collect();
        let lhs = moment(&mesh, &combined, order);
        let rhs = scale * moment(&mesh, &c1, order) + moment(&mesh, &c2, order);
        let tol = 4.0 * f64::EPSILON * lhs.abs().max(rhs.abs());
        assert!(
            (lhs - rhs).abs() <= tol.max(4.0 * f64::MIN_POSITIVE),
            "linearity violated: {lhs} vs {rhs}"
        );
    }
}
