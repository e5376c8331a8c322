//! JSON run configuration: parsing, defaulting, validation and lowering into
//! solver types.
//!
//! Parsing is strict by default: unknown keys are rejected so that a run
//! manifest pins its configuration exactly. A lax mode prunes unknown keys
//! for exploration.

use crate::CliError;
use breakfvm::{
    BreakageKernel, CollisionKernel, InitialCondition, KernelEval, Mesh, NormParams, SimOptions,
    SnapshotSpec,
};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mesh: MeshConfig,
    pub kernel: KernelConfig,
    pub breakage: BreakageConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub norm: NormConfig,
    #[serde(default)]
    pub assertions: AssertionConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    #[serde(rename = "type")]
    pub kind: MeshKind,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(rename = "I", default, skip_serializing_if = "Option::is_none")]
    pub cells: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeshKind {
    Uniform,
    Geometric,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub alpha: f64,
    pub zeta: f64,
    pub eta: f64,
    #[serde(default)]
    pub eval_mode: EvalModeConfig,
    #[serde(default)]
    pub allow_zeta_zero: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EvalModeConfig {
    #[default]
    Midpoint,
    CellAverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BreakageConfig {
    #[serde(default = "default_family")]
    pub family: BreakageFamilyConfig,
    pub exponent: f64,
    #[serde(default)]
    pub allow_nonconserving: bool,
}

fn default_family() -> BreakageFamilyConfig {
    BreakageFamilyConfig::PowerConserving
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakageFamilyConfig {
    PowerConserving,
    PowerPaper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(rename = "type")]
    pub kind: InitialKind,
    #[serde(default)]
    pub params: InitialParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Constant,
    Exponential,
    CustomCsv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct InitialParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            kind: InitialKind::Constant,
            params: InitialParams {
                value: Some(1.0),
                ..InitialParams::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_override: Option<f64>,
    #[serde(default = "default_snapshot_count")]
    pub snapshot_count: usize,
}

fn default_theta() -> f64 {
    0.9
}

fn default_snapshot_count() -> usize {
    11
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormConfig {
    #[serde(default = "default_norm_r")]
    pub r: f64,
    #[serde(default)]
    pub p: f64,
}

fn default_norm_r() -> f64 {
    1.0
}

impl Default for NormConfig {
    fn default() -> Self {
        Self { r: 1.0, p: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssertionConfig {
    #[serde(default = "default_true")]
    pub enabled: bool,
    #[serde(default)]
    pub clamp_tiny_negative: bool,
}

fn default_true() -> bool {
    true
}

impl Default for AssertionConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            clamp_tiny_negative: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub directory: String,
    #[serde(default)]
    pub prefix: String,
}

fn default_out_dir() -> String {
    "out".to_string()
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: default_out_dir(),
            prefix: String::new(),
        }
    }
}

/// Parse a configuration document. In strict mode unknown keys are errors;
/// in lax mode they are pruned before parsing.
pub fn parse_config(text: &str, strict: bool) -> Result<RunConfig, CliError> {
    let config: RunConfig = if strict {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config parse: {e}")))?
    } else {
        let mut value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("config parse: {e}")))?;
        prune_unknown(&mut value);
        serde_json::from_value(value).map_err(|e| CliError::Config(format!("config parse: {e}")))?
    };
    config.validate()?;
    Ok(config)
}

/// Serialize a resolved configuration; `parse_config(emit(c), true)` returns
/// an identical value.
pub fn emit_config(config: &RunConfig) -> String {
    let mut text = serde_json::to_string_pretty(config).expect("config serializes");
    text.push('\n');
    text
}

fn prune_unknown(value: &mut serde_json::Value) {
    const SECTIONS: &[(&str, &[&str])] = &[
        ("mesh", &["type", "R", "I", "ratio", "edges"]),
        (
            "kernel",
            &["alpha", "zeta", "eta", "eval_mode", "allow_zeta_zero"],
        ),
        ("breakage", &["family", "exponent", "allow_nonconserving"]),
        ("initial", &["type", "params"]),
        ("time", &["T", "theta", "dt_override", "snapshot_count"]),
        ("norm", &["r", "p"]),
        ("assertions", &["enabled", "clamp_tiny_negative"]),
        ("output", &["directory", "prefix"]),
    ];
    let Some(top) = value.as_object_mut() else {
        return;
    };
    let known_top: Vec<&str> = SECTIONS.iter().map(|(k, _)| *k).collect();
    top.retain(|k, _| known_top.contains(&k.as_str()));
    for (section, keys) in SECTIONS {
        if let Some(obj) = top.get_mut(*section).and_then(|v| v.as_object_mut()) {
            obj.retain(|k, _| keys.contains(&k.as_str()));
            if *section == "initial" {
                if let Some(params) = obj.get_mut("params").and_then(|v| v.as_object_mut()) {
                    params.retain(|k, _| {
                        ["value", "amplitude", "decay", "path"].contains(&k.as_str())
                    });
                }
            }
        }
    }
}

impl RunConfig {
    fn validate(&self) -> Result<(), CliError> {
        let cfg = |key: &str, msg: String| Err(CliError::Config(format!("{key}: {msg}")));
        match self.mesh.kind {
            MeshKind::Uniform | MeshKind::Geometric => {
                let r = self.mesh.r.ok_or_else(|| {
                    CliError::Config("mesh.R: required for uniform and geometric meshes".into())
                })?;
                if !r.is_finite() || r <= 0.0 {
                    return cfg("mesh.R", format!("must be positive and finite, got {r}"));
                }
                let cells = self.mesh.cells.ok_or_else(|| {
                    CliError::Config("mesh.I: required for uniform and geometric meshes".into())
                })?;
                if cells == 0 {
                    return cfg("mesh.I", "must be at least 1".into());
                }
                if self.mesh.kind == MeshKind::Geometric {
                    let ratio = self.mesh.ratio.ok_or_else(|| {
                        CliError::Config("mesh.ratio: required for geometric meshes".into())
                    })?;
                    if !ratio.is_finite() || ratio <= 0.0 {
                        return cfg("mesh.ratio", format!("must be positive, got {ratio}"));
                    }
                } else if self.mesh.ratio.is_some() {
                    return cfg("mesh.ratio", "only valid for geometric meshes".into());
                }
                if self.mesh.edges.is_some() {
                    return cfg("mesh.edges", "only valid for custom meshes".into());
                }
            }
            MeshKind::Custom => {
                if self.mesh.edges.is_none() {
                    return cfg("mesh.edges", "required for custom meshes".into());
                }
                if self.mesh.r.is_some() || self.mesh.cells.is_some() || self.mesh.ratio.is_some() {
                    return cfg("mesh", "custom meshes take only the edges array".into());
                }
            }
        }
        let k = &self.kernel;
        if !k.alpha.is_finite() || k.alpha < 0.0 {
            return cfg(
                "kernel.alpha",
                format!("must be non-negative, got {}", k.alpha),
            );
        }
        if !(k.zeta >= 0.0 && k.zeta <= k.eta && k.eta <= 1.0) {
            return cfg(
                "kernel.zeta/eta",
                format!(
                    "exponents must satisfy 0 <= zeta <= eta <= 1, got zeta={}, eta={}",
                    k.zeta, k.eta
                ),
            );
        }
        if k.zeta == 0.0 && !k.allow_zeta_zero {
            return cfg(
                "kernel.zeta",
                "the kernel family requires zeta > 0; set kernel.allow_zeta_zero to use the \
                 constant-kernel extension"
                    .into(),
            );
        }
        let b = &self.breakage;
        if !b.exponent.is_finite() || b.exponent <= -1.0 || b.exponent > 0.0 {
            return cfg(
                "breakage.exponent",
                format!("must lie in ]-1, 0], got {}", b.exponent),
            );
        }
        if b.family == BreakageFamilyConfig::PowerPaper && !b.allow_nonconserving {
            return cfg(
                "breakage.family",
                "power_paper does not satisfy the volume conservation identity \
                 (integral of eps*b over fragments equals the parent volume); set \
                 breakage.allow_nonconserving to run it anyway"
                    .into(),
            );
        }
        match self.initial.kind {
            InitialKind::Constant => {
                let v = self.initial.params.value.unwrap_or(1.0);
                if !v.is_finite() || v < 0.0 {
                    return cfg(
                        "initial.params.value",
                        format!("must be non-negative, got {v}"),
                    );
                }
            }
            InitialKind::Exponential => {
                let a = self.initial.params.amplitude.ok_or_else(|| {
                    CliError::Config(
                        "initial.params.amplitude: required for exponential data".into(),
                    )
                })?;
                if !a.is_finite() || a < 0.0 {
                    return cfg(
                        "initial.params.amplitude",
                        format!("must be non-negative, got {a}"),
                    );
                }
                let d = self.initial.params.decay.unwrap_or(0.0);
                if !d.is_finite() {
                    return cfg("initial.params.decay", format!("must be finite, got {d}"));
                }
            }
            InitialKind::CustomCsv => {
                if self.initial.params.path.is_none() {
                    return cfg("initial.params.path", "required for custom_csv data".into());
                }
            }
        }
        let t = &self.time;
        if !t.horizon.is_finite() || t.horizon < 0.0 {
            return cfg(
                "time.T",
                format!("must be non-negative and finite, got {}", t.horizon),
            );
        }
        if t.theta.is_nan() || t.theta <= 0.0 || t.theta >= 1.0 {
            return cfg("time.theta", format!("must lie in (0, 1), got {}", t.theta));
        }
        if let Some(dt) = t.dt_override {
            if !dt.is_finite() || dt <= 0.0 {
                return cfg("time.dt_override", format!("must be positive, got {dt}"));
            }
        }
        if t.snapshot_count == 0 {
            return cfg("time.snapshot_count", "must be at least 1".into());
        }
        if self.norm.r.is_nan() || self.norm.r < 1.0 {
            return cfg("norm.r", format!("must be at least 1, got {}", self.norm.r));
        }
        if self.norm.p.is_nan() || self.norm.p < 0.0 {
            return cfg(
                "norm.p",
                format!("must be non-negative, got {}", self.norm.p),
            );
        }
        Ok(())
    }

    pub fn build_mesh(&self) -> Result<Mesh, CliError> {
        let mesh = match self.mesh.kind {
            MeshKind::Uniform => Mesh::uniform(self.mesh.r.unwrap(), self.mesh.cells.unwrap()),
            MeshKind::Geometric => Mesh::geometric(
                self.mesh.r.unwrap(),
                self.mesh.cells.unwrap(),
                self.mesh.ratio.unwrap(),
            ),
            MeshKind::Custom => Mesh::from_edges(self.mesh.edges.clone().unwrap()),
        };
        mesh.map_err(|e| CliError::Config(format!("mesh: {e}")))
    }

    pub fn build_collision(&self) -> Result<CollisionKernel, CliError> {
        let k = &self.kernel;
        let kernel = if k.zeta == 0.0 {
            CollisionKernel::extended(k.alpha, k.zeta, k.eta)
        } else {
            CollisionKernel::new(k.alpha, k.zeta, k.eta)
        }
        .map_err(|e| CliError::Config(format!("kernel: {e}")))?;
        Ok(kernel.with_eval(match k.eval_mode {
            EvalModeConfig::Midpoint => KernelEval::Midpoint,
            EvalModeConfig::CellAverage => KernelEval::CellAverage,
        }))
    }

    pub fn build_breakage(&self) -> Result<BreakageKernel, CliError> {
        match self.breakage.family {
            BreakageFamilyConfig::PowerConserving => {
                BreakageKernel::power_conserving(self.breakage.exponent)
            }
            BreakageFamilyConfig::PowerPaper => BreakageKernel::power_paper(self.breakage.exponent),
        }
        .map_err(|e| CliError::Config(format!("breakage: {e}")))
    }

    pub fn build_initial(&self, config_dir: &Path) -> Result<InitialCondition, CliError> {
        match self.initial.kind {
            InitialKind::Constant => Ok(InitialCondition::Constant(
                self.initial.params.value.unwrap_or(1.0),
            )),
            InitialKind::Exponential => Ok(InitialCondition::Exponential {
                amplitude: self.initial.params.amplitude.unwrap(),
                decay: self.initial.params.decay.unwrap_or(0.0),
            }),
            InitialKind::CustomCsv => {
                let raw_path = self.initial.params.path.as_ref().unwrap();
                let path = config_dir.join(raw_path);
                let text = std::fs::read_to_string(&path).map_err(|e| {
                    CliError::Config(format!("initial.params.path: cannot read {path:?}: {e}"))
                })?;
                let values = parse_initial_csv(&text)?;
                Ok(InitialCondition::PerCell(values))
            }
        }
    }

    pub fn norm_params(&self) -> NormParams {
        NormParams {
            r: self.norm.r,
            p: self.norm.p,
        }
    }

    pub fn sim_options(&self, force_dt: bool, no_assert: bool) -> SimOptions {
        SimOptions {
            horizon: self.time.horizon,
            theta: self.time.theta,
            dt_override: self.time.dt_override,
            force_dt,
            snapshots: SnapshotSpec::Count(self.time.snapshot_count),
            assertions: self.assertions.enabled && !no_assert,
            clamp_tiny_negative: self.assertions.clamp_tiny_negative,
            norm: self.norm_params(),
            accumulation: breakfvm::Accumulation::Plain,
        }
    }
}

/// Initial-data CSV: header `cell_index,concentration`, one row per cell in
/// ascending cell order.
fn parse_initial_csv(text: &str) -> Result<Vec<f64>, CliError> {
    let mut values = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (line_no == 0 && line.starts_with("cell_index")) {
            continue;
        }
        let mut fields = line.split(',');
        let idx: usize = fields
            .next()
            .and_then(|f| f.trim().parse().ok())
            .ok_or_else(|| {
                CliError::Config(format!("initial csv line {}: bad cell index", line_no + 1))
            })?;
        let value: f64 = fields
            .next()
            .and_then(|f| f.trim().parse().ok())
            .ok_or_else(|| {
                CliError::Config(format!(
                    "initial csv line {}: bad concentration",
                    line_no + 1
                ))
            })?;
        if idx != values.len() {
            return Err(CliError::Config(format!(
                "initial csv line {}: expected cell index {}, got {idx}",
                line_no + 1,
                values.len()
            )));
        }
        if !value.is_finite() || value < 0.0 {
            return Err(CliError::Config(format!(
                "initial csv line {}: concentration must be non-negative, got {value}",
                line_no + 1
            )));
        }
        values.push(value);
    }
    if values.is_empty() {
        return Err(CliError::Config("initial csv: no data rows".into()));
    }
    Ok(values)
}
