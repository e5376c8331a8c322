//! Run outputs: manifest, CSV files and the verification report.
//!
//! Float columns are written with 17 significant digits, enough to round-trip
//! an f64 exactly, so identical configurations produce byte-identical files.

use crate::config::RunConfig;
use crate::CliError;
use breakfvm::verify::ConvergencePair;
use breakfvm::{
    bound_p, bound_pstar_log, moment, weighted_norm, BreakageKernel, CollisionKernel, Mesh,
    NormParams, Trajectory,
};
use serde::Serialize;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Output file path `<directory>/<prefix><name>` (prefix joined with `_`).
pub fn out_path(dir: &Path, prefix: &str, name: &str) -> PathBuf {
    if prefix.is_empty() {
        dir.join(name)
    } else {
        dir.join(format!("{prefix}_{name}"))
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::Config(format!("cannot create {parent:?}: {e}")))?;
    }
    fs::write(path, text).map_err(|e| CliError::Config(format!("cannot write {path:?}: {e}")))
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: ToolInfo,
    pub config: RunConfig,
    pub derived: DerivedInfo,
    pub hypotheses: HypothesisFlags,
}

#[derive(Debug, Serialize)]
pub struct ToolInfo {
    pub name: &'static str,
    pub version: &'static str,
}

#[derive(Debug, Serialize)]
pub struct DerivedInfo {
    pub stability_constant: f64,
    /// Absent for an inert system (vanishing collision rate): any step is
    /// stable.
    pub stable_dt: Option<f64>,
    pub dt: Option<f64>,
    pub steps: Option<u64>,
    pub m0_in: f64,
    pub m1_in: f64,
    pub norm_s_cin: f64,
}

/// Self-description of the run against the kernel hypotheses: whether the
/// collision exponents are strictly positive, whether the breakage family
/// conserves volume, and the singular-moment-bound constant at `tau = 1`,
/// `upsilon_p = 2p`.
#[derive(Debug, Serialize)]
pub struct HypothesisFlags {
    pub collision_exponents_strictly_positive: bool,
    pub breakage_conserves_volume: bool,
    pub fragment_multiplicity: f64,
    pub singular_moment_bound: SingularMomentBound,
}

#[derive(Debug, Serialize)]
pub struct SingularMomentBound {
    pub tau: f64,
    pub upsilon_p: f64,
    pub q: f64,
    pub holds: bool,
}

pub fn build_manifest(
    config: &RunConfig,
    collision: &CollisionKernel,
    breakage: &BreakageKernel,
    derived: DerivedInfo,
) -> Result<Manifest, CliError> {
    let norm = config.norm_params();
    let bound_check = breakage
        .singular_moment_constant(1.0, 2.0 * norm.p)
        .map_err(|e| CliError::Config(format!("hypothesis check: {e}")))?;
    Ok(Manifest {
        tool: ToolInfo {
            name: "breakfvm",
            version: env!("CARGO_PKG_VERSION"),
        },
        config: config.clone(),
        derived,
        hypotheses: HypothesisFlags {
            collision_exponents_strictly_positive: collision.strict_exponents(),
            breakage_conserves_volume: breakage.conserves_volume(),
            fragment_multiplicity: breakage.multiplicity(),
            singular_moment_bound: SingularMomentBound {
                tau: 1.0,
                upsilon_p: 2.0 * norm.p,
                q: bound_check.q,
                holds: bound_check.holds,
            },
        },
    })
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(manifest)
        .map_err(|e| CliError::Config(format!("manifest: {e}")))?;
    text.push('\n');
    write_text(path, &text)
}

/// `snapshots.csv`: time, cell_index, midpoint, width, concentration.
pub fn snapshots_csv(mesh: &Mesh, traj: &Trajectory) -> String {
    let mut text = String::from("time,cell_index,midpoint,width,concentration\n");
    for state in &traj.states {
        for i in 0..mesh.cells() {
            let _ = writeln!(
                text,
                "{},{},{},{},{}",
                fmt_float(state.time),
                i,
                fmt_float(mesh.midpoint(i)),
                fmt_float(mesh.width(i)),
                fmt_float(state.c[i]),
            );
        }
    }
    text
}

/// `moments.csv`: time, M0, M1, M2, weighted_norm, bound_P, bound_Pstar_log.
#[allow(clippy::too_many_arguments)]
pub fn moments_csv(
    mesh: &Mesh,
    traj: &Trajectory,
    collision: &CollisionKernel,
    breakage: &BreakageKernel,
    norm: &NormParams,
    norm_s_cin: f64,
    m1_in: f64,
    q: f64,
) -> String {
    let mut text = String::from("time,M0,M1,M2,weighted_norm,bound_P,bound_Pstar_log\n");
    for state in &traj.states {
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{}",
            fmt_float(state.time),
            fmt_float(moment(mesh, &state.c, 0.0)),
            fmt_float(moment(mesh, &state.c, 1.0)),
            fmt_float(moment(mesh, &state.c, 2.0)),
            fmt_float(weighted_norm(mesh, &state.c, norm)),
            fmt_float(bound_p(state.time, collision, breakage, norm_s_cin, m1_in)),
            fmt_float(bound_pstar_log(
                state.time,
                collision,
                breakage,
                norm_s_cin,
                m1_in,
                norm.r,
                traj.horizon,
                q,
            )),
        );
    }
    text
}

/// `study.csv`: I_coarse, I_fine, l1_distance, eoc (blank on the first rung).
pub fn study_csv(pairs: &[ConvergencePair]) -> String {
    let mut text = String::from("I_coarse,I_fine,l1_distance,eoc\n");
    for pair in pairs {
        let eoc = pair.eoc.map(fmt_float).unwrap_or_default();
        let _ = writeln!(
            text,
            "{},{},{},{}",
            pair.coarse_cells,
            pair.fine_cells,
            fmt_float(pair.l1_distance),
            eoc,
        );
    }
    text
}

/// One `PASS`/`FAIL`/`INFO` line of `report.txt`.
pub struct ReportLine {
    pub status: ReportStatus,
    pub check: String,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportStatus {
    Pass,
    Fail,
    Info,
    Skip,
}

impl ReportLine {
    pub fn pass(check: &str, detail: String) -> Self {
        Self {
            status: ReportStatus::Pass,
            check: check.into(),
            detail,
        }
    }

    pub fn fail(check: &str, detail: String) -> Self {
        Self {
            status: ReportStatus::Fail,
            check: check.into(),
            detail,
        }
    }

    pub fn info(check: &str, detail: String) -> Self {
        Self {
            status: ReportStatus::Info,
            check: check.into(),
            detail,
        }
    }

    pub fn skip(check: &str, detail: String) -> Self {
        Self {
            status: ReportStatus::Skip,
            check: check.into(),
            detail,
        }
    }

    pub fn check(ok: bool, check: &str, detail: String) -> Self {
        if ok {
            Self::pass(check, detail)
        } else {
            Self::fail(check, detail)
        }
    }
}

pub fn report_text(title: &str, lines: &[ReportLine]) -> String {
    let mut text = format!("{title}\n");
    for line in lines {
        let tag = match line.status {
            ReportStatus::Pass => "PASS",
            ReportStatus::Fail => "FAIL",
            ReportStatus::Info => "INFO",
            ReportStatus::Skip => "SKIP",
        };
        let _ = writeln!(text, "{tag} {}: {}", line.check, line.detail);
    }
    text
}
