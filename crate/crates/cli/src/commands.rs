//! The five run drivers: simulate, stable-dt, study, verify, weak-residual.

use crate::config::RunConfig;
use crate::output::{
    build_manifest, moments_csv, out_path, report_text, snapshots_csv, study_csv, write_manifest,
    write_text, DerivedInfo, ReportLine,
};
use crate::CliError;
use breakfvm::{
    bound_p, bound_pstar_log, m0_oracle_constant, m0_oracle_product, moment, self_convergence,
    simulate, stable_dt, weak_residual, weighted_norm, BreakageKernel, CollisionKernel,
    InitialCondition, Mesh, Problem, SchemeTables, SimOptions, SnapshotSpec, TestFunction,
    Trajectory,
};
use std::path::{Path, PathBuf};

/// Everything lowered from one configuration file.
pub struct Lowered {
    pub config: RunConfig,
    pub mesh: Mesh,
    pub collision: CollisionKernel,
    pub breakage: BreakageKernel,
    pub initial: InitialCondition,
    pub out_dir: PathBuf,
}

pub fn lower(
    config: RunConfig,
    config_dir: &Path,
    out_override: Option<&Path>,
) -> Result<Lowered, CliError> {
    let mesh = config.build_mesh()?;
    let collision = config.build_collision()?;
    let breakage = config.build_breakage()?;
    let initial = config.build_initial(config_dir)?;
    let out_dir = out_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(&config.output.directory));
    Ok(Lowered {
        config,
        mesh,
        collision,
        breakage,
        initial,
        out_dir,
    })
}

struct Prepared {
    c0: Vec<f64>,
    m0_in: f64,
    m1_in: f64,
    norm_in: f64,
    stability_constant: f64,
    stable: f64,
}

fn prepare(low: &Lowered, options: &SimOptions) -> Result<Prepared, CliError> {
    let c0 = low.initial.project(&low.mesh)?;
    if c0.len() != low.mesh.cells() {
        return Err(CliError::Config(format!(
            "initial data has {} cells but the mesh has {}",
            c0.len(),
            low.mesh.cells()
        )));
    }
    let m0_in = moment(&low.mesh, &c0, 0.0);
    let m1_in = moment(&low.mesh, &c0, 1.0);
    let norm_in = weighted_norm(&low.mesh, &c0, &options.norm);
    let stable = stable_dt(
        &low.collision,
        &low.breakage,
        low.mesh.r(),
        options.horizon,
        norm_in,
        m1_in,
        options.theta,
    )?;
    let stability_constant = if stable.is_finite() {
        options.theta / stable
    } else {
        0.0
    };
    Ok(Prepared {
        c0,
        m0_in,
        m1_in,
        norm_in,
        stability_constant,
        stable,
    })
}

fn run_simulation(
    low: &Lowered,
    options: &SimOptions,
) -> Result<(Prepared, SchemeTables, Trajectory), CliError> {
    let prep = prepare(low, options)?;
    let tables = SchemeTables::build(&low.mesh, &low.collision, &low.breakage)?;
    let problem = Problem::new(&low.mesh, &low.collision, &low.breakage, &tables);
    let traj = simulate(
        &problem,
        &prep.c0,
        options,
        low.config.breakage.allow_nonconserving,
    )?;
    Ok((prep, tables, traj))
}

fn q_constant(low: &Lowered) -> Result<f64, CliError> {
    Ok(low
        .breakage
        .singular_moment_constant(1.0, 2.0 * low.config.norm.p)
        .map_err(|e| CliError::Config(format!("hypothesis check: {e}")))?
        .q)
}

pub fn cmd_simulate(low: &Lowered, options: &SimOptions) -> Result<(), CliError> {
    let (prep, _tables, traj) = run_simulation(low, options)?;
    let q = q_constant(low)?;
    let manifest = build_manifest(
        &low.config,
        &low.collision,
        &low.breakage,
        DerivedInfo {
            stability_constant: prep.stability_constant,
            stable_dt: prep.stable.is_finite().then_some(prep.stable),
            dt: Some(traj.dt),
            steps: Some(traj.steps),
            m0_in: prep.m0_in,
            m1_in: prep.m1_in,
            norm_s_cin: prep.norm_in,
        },
    )?;
    let prefix = &low.config.output.prefix;
    write_manifest(&out_path(&low.out_dir, prefix, "manifest.json"), &manifest)?;
    write_text(
        &out_path(&low.out_dir, prefix, "snapshots.csv"),
        &snapshots_csv(&low.mesh, &traj),
    )?;
    write_text(
        &out_path(&low.out_dir, prefix, "moments.csv"),
        &moments_csv(
            &low.mesh,
            &traj,
            &low.collision,
            &low.breakage,
            &options.norm,
            prep.norm_in,
            prep.m1_in,
            q,
        ),
    )?;
    let last = traj.last();
    println!(
        "simulated {} steps of dt = {:.6e} to t = {:.6}",
        traj.steps, traj.dt, last.time
    );
    println!(
        "M0 = {:.9}, M1 = {:.9} (initial {:.9})",
        moment(&low.mesh, &last.c, 0.0),
        moment(&low.mesh, &last.c, 1.0),
        prep.m1_in
    );
    println!("outputs in {}", low.out_dir.display());
    Ok(())
}

pub fn cmd_stable_dt(low: &Lowered, options: &SimOptions) -> Result<(), CliError> {
    let prep = prepare(low, options)?;
    let manifest = build_manifest(
        &low.config,
        &low.collision,
        &low.breakage,
        DerivedInfo {
            stability_constant: prep.stability_constant,
            stable_dt: prep.stable.is_finite().then_some(prep.stable),
            dt: None,
            steps: None,
            m0_in: prep.m0_in,
            m1_in: prep.m1_in,
            norm_s_cin: prep.norm_in,
        },
    )?;
    write_manifest(
        &out_path(&low.out_dir, &low.config.output.prefix, "manifest.json"),
        &manifest,
    )?;
    println!("C(R,T) = {:.4}", prep.stability_constant);
    println!("stable_dt = {:.6}", prep.stable);
    Ok(())
}

pub fn cmd_study(low: &Lowered, options: &SimOptions, i_list: &[usize]) -> Result<(), CliError> {
    let prep = prepare(low, options)?;
    let pairs = self_convergence(
        &low.mesh,
        &low.collision,
        &low.breakage,
        &low.initial,
        options,
        i_list,
        low.config.breakage.allow_nonconserving,
    )?;
    let manifest = build_manifest(
        &low.config,
        &low.collision,
        &low.breakage,
        DerivedInfo {
            stability_constant: prep.stability_constant,
            stable_dt: prep.stable.is_finite().then_some(prep.stable),
            dt: None,
            steps: None,
            m0_in: prep.m0_in,
            m1_in: prep.m1_in,
            norm_s_cin: prep.norm_in,
        },
    )?;
    let prefix = &low.config.output.prefix;
    write_manifest(&out_path(&low.out_dir, prefix, "manifest.json"), &manifest)?;
    write_text(
        &out_path(&low.out_dir, prefix, "study.csv"),
        &study_csv(&pairs),
    )?;
    for pair in &pairs {
        match pair.eoc {
            Some(eoc) => println!(
                "I = {:>5} -> {:>5}: l1 = {:.6e}, eoc = {:.3}",
                pair.coarse_cells, pair.fine_cells, pair.l1_distance, eoc
            ),
            None => println!(
                "I = {:>5} -> {:>5}: l1 = {:.6e}",
                pair.coarse_cells, pair.fine_cells, pair.l1_distance
            ),
        }
    }
    Ok(())
}

pub fn cmd_verify(low: &Lowered, options: &SimOptions) -> Result<(), CliError> {
    let (prep, _tables, traj) = run_simulation(low, options)?;
    let q = q_constant(low)?;
    let mut lines = Vec::new();

    let min_c = traj
        .states
        .iter()
        .flat_map(|s| s.c.iter().cloned())
        .fold(f64::INFINITY, f64::min);
    lines.push(ReportLine::check(
        min_c >= 0.0,
        "non_negativity",
        format!("minimum concentration over all snapshots: {min_c:.3e}"),
    ));

    if low.breakage.conserves_volume() && prep.m1_in > 0.0 {
        let drift = traj
            .states
            .iter()
            .map(|s| (moment(&low.mesh, &s.c, 1.0) - prep.m1_in).abs() / prep.m1_in)
            .fold(0.0f64, f64::max);
        lines.push(ReportLine::check(
            drift <= 1e-12,
            "volume_conservation",
            format!("max relative first-moment drift {drift:.3e} (tolerance 1e-12)"),
        ));
    } else {
        lines.push(ReportLine::skip(
            "volume_conservation",
            "breakage family does not conserve volume".into(),
        ));
    }

    let mut count_ok = true;
    let mut worst_ratio = 0.0f64;
    for s in &traj.states {
        let m0 = moment(&low.mesh, &s.c, 0.0);
        let p = bound_p(
            s.time,
            &low.collision,
            &low.breakage,
            prep.norm_in,
            prep.m1_in,
        );
        worst_ratio = worst_ratio.max(m0 / p);
        count_ok &= m0 <= p * (1.0 + 1e-12);
    }
    lines.push(ReportLine::check(
        count_ok,
        "particle_count_bound",
        format!("max M0 / bound ratio {worst_ratio:.6}"),
    ));

    let mut norm_ok = true;
    let mut worst_gap = f64::NEG_INFINITY;
    for s in &traj.states {
        let norm = weighted_norm(&low.mesh, &s.c, &options.norm);
        let bound_log = bound_pstar_log(
            s.time,
            &low.collision,
            &low.breakage,
            prep.norm_in,
            prep.m1_in,
            options.norm.r,
            traj.horizon,
            q,
        );
        let log_norm = if norm > 0.0 {
            norm.ln()
        } else {
            f64::NEG_INFINITY
        };
        worst_gap = worst_gap.max(log_norm - bound_log);
        norm_ok &= log_norm <= bound_log + 1e-12;
    }
    lines.push(ReportLine::check(
        norm_ok,
        "weighted_norm_bound_log",
        format!("max log(norm) - log(bound) = {worst_gap:.6}"),
    ));

    let m0_final = moment(&low.mesh, &traj.last().c, 0.0);
    let product_config = low.collision.zeta() == 1.0
        && low.collision.eta() == 1.0
        && low.breakage.conserves_volume()
        && low.breakage.exponent() == 0.0;
    let constant_config = low.collision.zeta() == 0.0
        && low.collision.eta() == 0.0
        && low.breakage.conserves_volume()
        && low.breakage.exponent() == 0.0;
    if product_config {
        let oracle = m0_oracle_product(
            traj.last().time,
            prep.m0_in,
            prep.m1_in,
            &low.collision,
            &low.breakage,
        )?;
        let err = (m0_final - oracle).abs();
        lines.push(ReportLine::check(
            err <= 0.05 * oracle,
            "count_oracle_product_kernel",
            format!("|M0(T) - {oracle:.6}| = {err:.3e} (tolerance 5%)"),
        ));
    } else if constant_config {
        match m0_oracle_constant(traj.last().time, prep.m0_in, &low.collision, &low.breakage) {
            Ok(oracle) => {
                let err = (m0_final - oracle).abs();
                lines.push(ReportLine::check(
                    err <= 0.05 * oracle,
                    "count_oracle_constant_kernel",
                    format!("|M0(T) - {oracle:.6}| = {err:.3e} (tolerance 5%)"),
                ));
            }
            Err(e) => lines.push(ReportLine::skip(
                "count_oracle_constant_kernel",
                format!("{e}"),
            )),
        }
    } else {
        lines.push(ReportLine::skip(
            "count_oracle",
            "no closed-form count oracle for this kernel configuration".into(),
        ));
    }

    lines.push(ReportLine::info(
        "kernel_exponents",
        format!(
            "zeta = {}, eta = {}, strictly positive: {}",
            low.collision.zeta(),
            low.collision.eta(),
            low.collision.strict_exponents()
        ),
    ));
    lines.push(ReportLine::info(
        "singular_moment_bound",
        format!(
            "Q = {q:.6} at tau = 1, upsilon_p = {}",
            2.0 * low.config.norm.p
        ),
    ));
    lines.push(ReportLine::info(
        "time_step",
        format!(
            "stable_dt = {:.6e}, dt = {:.6e}, steps = {}",
            prep.stable, traj.dt, traj.steps
        ),
    ));

    let text = report_text("verification report", &lines);
    print!("{text}");
    let prefix = &low.config.output.prefix;
    write_text(&out_path(&low.out_dir, prefix, "report.txt"), &text)?;
    let manifest = build_manifest(
        &low.config,
        &low.collision,
        &low.breakage,
        DerivedInfo {
            stability_constant: prep.stability_constant,
            stable_dt: prep.stable.is_finite().then_some(prep.stable),
            dt: Some(traj.dt),
            steps: Some(traj.steps),
            m0_in: prep.m0_in,
            m1_in: prep.m1_in,
            norm_s_cin: prep.norm_in,
        },
    )?;
    write_manifest(&out_path(&low.out_dir, prefix, "manifest.json"), &manifest)?;

    if lines
        .iter()
        .any(|l| l.status == crate::output::ReportStatus::Fail)
    {
        return Err(CliError::Assertion(
            "verification report has failures".into(),
        ));
    }
    Ok(())
}

pub fn cmd_weak_residual(
    low: &Lowered,
    options: &SimOptions,
    phi_id: &str,
    i_list: Option<&[usize]>,
    t_cut: Option<f64>,
) -> Result<(), CliError> {
    let horizon = options.horizon;
    if horizon <= 0.0 {
        return Err(CliError::Config(
            "time.T: the weak residual needs a positive horizon".into(),
        ));
    }
    let t_cut = t_cut.unwrap_or(0.9 * horizon);
    if t_cut.is_nan() || t_cut <= 0.0 || t_cut >= horizon {
        return Err(CliError::Config(format!(
            "t_cut must lie in (0, T), got {t_cut}"
        )));
    }
    let base_cells = low.mesh.cells();
    let ladder: Vec<usize> = match i_list {
        Some(list) if !list.is_empty() => list.to_vec(),
        _ => vec![base_cells],
    };
    let prep = prepare(low, options)?;
    if prep.stable.is_nan() || prep.stable <= 0.0 {
        return Err(CliError::Config(
            "stability bound is zero; cannot pick a base step".into(),
        ));
    }
    let base_steps = if prep.stable.is_finite() {
        (horizon / prep.stable.min(horizon)).ceil().max(1.0) as u64
    } else {
        1
    };

    let mut lines = Vec::new();
    let mut residuals: Vec<f64> = Vec::new();
    for &cells in &ladder {
        if cells == 0 || cells % base_cells != 0 {
            return Err(CliError::Config(format!(
                "i_list entry {cells} is not a multiple of the configured mesh ({base_cells} cells)"
            )));
        }
        let factor = cells / base_cells;
        let mesh = low
            .mesh
            .refine(factor)
            .map_err(|e| CliError::Config(format!("mesh refinement: {e}")))?;
        // Step refined proportionally with the mesh.
        let steps = base_steps * factor as u64;
        let dt = horizon / steps as f64;
        let tables = SchemeTables::build(&mesh, &low.collision, &low.breakage)?;
        let problem = Problem::new(&mesh, &low.collision, &low.breakage, &tables);
        let c0 = low.initial.project(&mesh)?;
        let run_options = SimOptions {
            dt_override: Some(dt),
            force_dt: options.force_dt,
            snapshots: SnapshotSpec::EveryStep,
            ..options.clone()
        };
        let traj = simulate(
            &problem,
            &c0,
            &run_options,
            low.config.breakage.allow_nonconserving,
        )?;
        let phi = build_test_function(phi_id, t_cut, mesh.r())?;
        let residual = weak_residual(&problem, &traj, &phi)?;
        residuals.push(residual.abs());
        let detail = format!("I = {cells}, dt = {dt:.6e}: residual = {residual:.6e}");
        println!("{detail}");
        lines.push(ReportLine::info("weak_residual", detail));
    }
    if ladder.len() > 1 {
        let decreasing = residuals.windows(2).all(|w| w[1] < w[0]);
        lines.push(ReportLine::check(
            decreasing,
            "weak_residual_decay",
            format!("|residual| along the ladder: {residuals:?}"),
        ));
    }
    let text = report_text(&format!("weak-form residual (phi = {phi_id})"), &lines);
    let prefix = &low.config.output.prefix;
    write_text(&out_path(&low.out_dir, prefix, "report.txt"), &text)?;
    let manifest = build_manifest(
        &low.config,
        &low.collision,
        &low.breakage,
        DerivedInfo {
            stability_constant: prep.stability_constant,
            stable_dt: prep.stable.is_finite().then_some(prep.stable),
            dt: None,
            steps: None,
            m0_in: prep.m0_in,
            m1_in: prep.m1_in,
            norm_s_cin: prep.norm_in,
        },
    )?;
    write_manifest(&out_path(&low.out_dir, prefix, "manifest.json"), &manifest)?;
    if lines
        .iter()
        .any(|l| l.status == crate::output::ReportStatus::Fail)
    {
        return Err(CliError::Assertion("weak residual did not decay".into()));
    }
    Ok(())
}

pub fn build_test_function(id: &str, t_cut: f64, r: f64) -> Result<TestFunction, CliError> {
    match id {
        "eps2" => TestFunction::volume_squared(t_cut)
            .map_err(|e| CliError::Config(format!("test function: {e}"))),
        "eps-edge" => TestFunction::edge_weighted(t_cut, r)
            .map_err(|e| CliError::Config(format!("test function: {e}"))),
        other => Err(CliError::Config(format!(
            "unknown test function id {other:?}; use \"eps2\" or \"eps-edge\""
        ))),
    }
}

/// Map solver errors onto the exit-code classes.
impl From<breakfvm::scheme::SchemeError> for CliError {
    fn from(e: breakfvm::scheme::SchemeError) -> Self {
        use breakfvm::scheme::SchemeError::*;
        match e {
            StabilityViolation { .. } => CliError::Stability(e.to_string()),
            Negativity { .. } | NonFinite { .. } | AssertionFailed { .. } => {
                CliError::Assertion(e.to_string())
            }
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<breakfvm::verify::VerifyError> for CliError {
    fn from(e: breakfvm::verify::VerifyError) -> Self {
        match e {
            breakfvm::verify::VerifyError::Scheme(inner) => inner.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}
