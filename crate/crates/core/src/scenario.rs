//! Scenario configs, task dispatch and atomic run directories.
//!
//! A scenario is one JSON document:
//!
//! ```json
//! {"task": "classify", "system": "example2",
//!  "profile": {"shape": "bump", "amplitudes": [0, 1]},
//!  "seed": 0, "params": {}}
//! ```
//!
//! `system` is a fixture name or an inline system document. Every problem
//! with the document is collected and reported at once, before any compute.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use nalgebra::DVector;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::diagnostics::{
    all_strings, fit_power_decay, fit_sqrt_exponential, fit_sqrt_exponential_log, linear_fit, region_volume,
    sphere_cap_measure, weight_growth_check, FitResult, VolumeEstimate, WeightGrowthReport, DEFAULT_T_MIN,
};
use crate::fdtd::{
    evolve, initial_bump, write_snapshot, EvolveOptions, Fdtd, GridSpec, MultiplierWeight, RhsMode, Strip,
    Transform, WeightedSchedule, DEFAULT_CFL, DEFAULT_DELTA,
};
use crate::geoptics::{
    ansatz_residual, comparison_ode_check, default_frequency, null_vector, transport_solve, ComparisonOde,
    ComparisonOptions, ComparisonReport, RayBundle, ResidualReport,
};
use crate::mode::{goursat_solve, nirenberg_blowup_scan, BlowupEntry, BoundaryData, Frequency, GoursatGrid, ModeOptions};
use crate::nullform::{SemilinearSystem, SystemDoc};
use crate::profiles::{ProfileSpec, WaveProfile};
use crate::renormalize::{
    check_condition_two, growth_rate_estimate, linearized_coefficients, solve_renormalizer, ConditionTwoWitness,
    GrowthOptions, GrowthRateEstimate, LinearizedCoefficients, Renormalizer, C64,
};
use crate::{Error, Result};

/// Overrides the default output root; the only environment input.
pub const OUT_ROOT_ENV: &str = "NULLWAVE_OUT_ROOT";
pub const DEFAULT_OUT_ROOT: &str = "nullwave-runs";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
const DEFAULT_RENORM_H: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Classify,
    Mode,
    Fdtd,
    Geoptics,
    Geometry,
    Blowup,
}

impl Task {
    pub const ALL: [Task; 6] = [Task::Classify, Task::Mode, Task::Fdtd, Task::Geoptics, Task::Geometry, Task::Blowup];

    pub fn name(self) -> &'static str {
        match self {
            Task::Classify => "classify",
            Task::Mode => "mode",
            Task::Fdtd => "fdtd",
            Task::Geoptics => "geoptics",
            Task::Geometry => "geometry",
            Task::Blowup => "blowup",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Validation(vec![format!("unknown task {s:?}")]))
    }
}

/// A built-in fixture by name, or an inline system document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemRef {
    Fixture(String),
    Inline(SystemDoc),
}

impl SystemRef {
    pub fn resolve(&self) -> Result<SemilinearSystem> {
        match self {
            SystemRef::Fixture(name) => SemilinearSystem::fixture(name),
            SystemRef::Inline(doc) => SemilinearSystem::from_doc(doc),
        }
    }
}

/// Where the transverse coefficients `B_y`, `B_z` of a mode-type task come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CoefficientSource {
    /// Renormalized linearization of the system about the profile.
    #[default]
    Linearized,
    /// Scalar `B_y = f_i'` from one profile component, `B_z = 0`.
    ProfileSlope { component: usize },
}

impl CoefficientSource {
    fn check(&self, ctx: &Ctx, errs: &mut Vec<String>) {
        if let CoefficientSource::ProfileSlope { component } = *self {
            if component >= ctx.profile_n {
                errs.push(format!(
                    "params.coefficients.component = {component} but the profile has {} components",
                    ctx.profile_n
                ));
            }
        }
    }

    fn scalar(&self, ctx: &Ctx) -> bool {
        matches!(self, CoefficientSource::ProfileSlope { .. }) || ctx.system_n == 1
    }

    /// The coefficients, with the renormalizer when one was built.
    pub fn build(
        &self,
        system: &SemilinearSystem,
        profile: &WaveProfile,
        h: f64,
    ) -> Result<(LinearizedCoefficients, Option<Renormalizer>)> {
        match *self {
            CoefficientSource::Linearized => {
                let ren = solve_renormalizer(system, profile, h)?;
                let coeffs = linearized_coefficients(&ren, &system.coupling_tensors(), profile);
                Ok((coeffs, Some(ren)))
            }
            CoefficientSource::ProfileSlope { component } => {
                Ok((LinearizedCoefficients::scalar(h, |u| profile.component(component, u, 1)), None))
            }
        }
    }
}

/// What validation can see besides the parameters themselves.
struct Ctx {
    system_n: usize,
    profile_n: usize,
}

fn check_positive(errs: &mut Vec<String>, name: &str, v: f64) {
    if !(v.is_finite() && v > 0.0) {
        errs.push(format!("params.{name} = {v} must be positive and finite"));
    }
}

fn check_renorm_h(errs: &mut Vec<String>, h: f64) {
    if !(h > 0.0 && h <= 0.1) {
        errs.push(format!("params.renorm_h = {h} outside (0, 0.1]"));
    }
}

fn check_grid(errs: &mut Vec<String>, u_min: f64, h_u: f64, v_max: f64, h_v: f64) {
    if let Err(e) = GoursatGrid::new(u_min, h_u, v_max, h_v) {
        errs.push(format!("params: {e}"));
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyParams {
    pub n_theta: usize,
    pub u_stride: usize,
    pub renorm_h: f64,
}

impl Default for ClassifyParams {
    fn default() -> Self {
        ClassifyParams {
            n_theta: 180,
            u_stride: 1,
            renorm_h: DEFAULT_RENORM_H,
        }
    }
}

impl ClassifyParams {
    fn check(&self, _: &Ctx, errs: &mut Vec<String>) {
        if self.n_theta == 0 {
            errs.push("params.n_theta must be at least 1".into());
        }
        if self.u_stride == 0 {
            errs.push("params.u_stride must be at least 1".into());
        }
        check_renorm_h(errs, self.renorm_h);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModeParams {
    pub xi_y: f64,
    pub xi_z: f64,
    pub u_min: f64,
    pub h_u: f64,
    pub v_max: f64,
    pub h_v: f64,
    pub sample_stride_u: usize,
    pub sample_stride_v: usize,
    pub t_stride: usize,
    pub fit_t_min: f64,
    pub renorm_h: f64,
    pub coefficients: CoefficientSource,
}

impl Default for ModeParams {
    fn default() -> Self {
        ModeParams {
            xi_y: 5.0,
            xi_z: 0.0,
            u_min: -1.0,
            h_u: 2.5e-3,
            v_max: 50.0,
            h_v: 2.5e-3,
            sample_stride_u: 0,
            sample_stride_v: 0,
            t_stride: 1,
            fit_t_min: DEFAULT_T_MIN,
            renorm_h: DEFAULT_RENORM_H,
            coefficients: CoefficientSource::Linearized,
        }
    }
}

impl ModeParams {
    fn check(&self, ctx: &Ctx, errs: &mut Vec<String>) {
        if !(self.xi_y.is_finite() && self.xi_z.is_finite()) {
            errs.push("params.xi_y and params.xi_z must be finite".into());
        }
        check_grid(errs, self.u_min, self.h_u, self.v_max, self.h_v);
        if self.t_stride == 0 {
            errs.push("params.t_stride must be at least 1".into());
        }
        if (self.sample_stride_u == 0) != (self.sample_stride_v == 0) {
            errs.push("params.sample_stride_u and params.sample_stride_v must both be zero or both positive".into());
        }
        check_renorm_h(errs, self.renorm_h);
        self.coefficients.check(ctx, errs);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FdtdParams {
    pub half_width: f64,
    pub h: f64,
    pub cfl: f64,
    pub t_max: f64,
    pub strip: Option<Strip>,
    pub mode: RhsMode,
    pub epsilon: f64,
    /// Components carrying the initial bump; all when absent.
    pub components: Option<Vec<usize>>,
    pub output_every: f64,
    pub delta: f64,
    pub weighted: Option<WeightedSchedule>,
    /// Record the energy of `γ = A(t − x)ψ`.
    pub transform: bool,
    /// Record the `g`-weighted multiplier energy.
    pub multiplier: bool,
    pub snapshot: bool,
    pub fit_t_min: f64,
    pub renorm_h: f64,
}

impl Default for FdtdParams {
    fn default() -> Self {
        FdtdParams {
            half_width: 24.0,
            h: 0.5,
            cfl: DEFAULT_CFL,
            t_max: 20.0,
            strip: None,
            mode: RhsMode::Nonlinear,
            epsilon: 1e-2,
            components: None,
            output_every: 0.5,
            delta: DEFAULT_DELTA,
            weighted: None,
            transform: true,
            multiplier: false,
            snapshot: true,
            fit_t_min: DEFAULT_T_MIN,
            renorm_h: DEFAULT_RENORM_H,
        }
    }
}

impl FdtdParams {
    pub fn grid(&self) -> GridSpec {
        GridSpec {
            half_width: self.half_width,
            h: self.h,
            cfl: self.cfl,
            t_max: self.t_max,
            strip: self.strip,
        }
    }

    fn components_or_all(&self, n: usize) -> Vec<usize> {
        self.components.clone().unwrap_or_else(|| (0..n).collect())
    }

    fn check(&self, ctx: &Ctx, errs: &mut Vec<String>) {
        match self.grid().validate() {
            Ok(()) => {}
            Err(Error::Validation(list)) => errs.extend(list.into_iter().map(|m| format!("params: {m}"))),
            Err(e) => errs.push(format!("params: {e}")),
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            errs.push(format!("params.epsilon = {} must be non-negative", self.epsilon));
        }
        for &c in self.components.iter().flatten() {
            if c >= ctx.system_n {
                errs.push(format!("params.components: {c} is not a component of an N = {} system", ctx.system_n));
            }
        }
        check_positive(errs, "output_every", self.output_every);
        check_positive(errs, "delta", self.delta);
        if let Some(w) = self.weighted {
            if w.order > 2 {
                errs.push(format!("params.weighted.order = {} exceeds 2", w.order));
            }
            check_positive(errs, "weighted.every", w.every);
        }
        if !self.fit_t_min.is_finite() {
            errs.push("params.fit_t_min must be finite".into());
        }
        check_renorm_h(errs, self.renorm_h);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeopticsParams {
    pub u1: f64,
    pub u2: f64,
    pub t_final: f64,
    pub steps: usize,
    pub rays_per_axis: usize,
    /// Ray spacing; the bundle default when absent.
    pub spacing: Option<f64>,
    pub order: usize,
    /// Frequency `μ`; the default for `t_final` when absent.
    pub mu: Option<f64>,
    pub comparison: bool,
    pub comparison_steps: usize,
    pub renorm_h: f64,
    pub coefficients: CoefficientSource,
}

impl Default for GeopticsParams {
    fn default() -> Self {
        GeopticsParams {
            u1: -1.0,
            u2: 1.0,
            t_final: 1e3,
            steps: 2000,
            rays_per_axis: 5,
            spacing: None,
            order: 1,
            mu: None,
            comparison: true,
            comparison_steps: ComparisonOptions::default().steps,
            renorm_h: DEFAULT_RENORM_H,
            coefficients: CoefficientSource::Linearized,
        }
    }
}

impl GeopticsParams {
    fn check(&self, ctx: &Ctx, errs: &mut Vec<String>) {
        match null_vector(self.u1, self.u2, self.t_final) {
            Ok(dir) => {
                let spacing = self.spacing.unwrap_or_else(|| RayBundle::default_spacing(&dir));
                if let Err(e) = RayBundle::new(dir, self.steps, self.rays_per_axis, spacing) {
                    errs.push(format!("params: {e}"));
                }
            }
            Err(e) => errs.push(format!("params: {e}")),
        }
        if self.rays_per_axis < 2 * self.order + 3 {
            errs.push(format!(
                "params.order = {} needs rays_per_axis >= {}",
                self.order,
                2 * self.order + 3
            ));
        }
        if let Some(mu) = self.mu {
            check_positive(errs, "mu", mu);
        }
        if self.comparison {
            if self.t_final < 1e3 {
                errs.push(format!("params.comparison needs t_final >= 1e3, got {}", self.t_final));
            }
            let samples = ComparisonOptions::default().samples;
            if self.comparison_steps == 0 || self.comparison_steps % samples != 0 {
                errs.push(format!("params.comparison_steps must be a positive multiple of {samples}"));
            }
        }
        check_renorm_h(errs, self.renorm_h);
        self.coefficients.check(ctx, errs);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryParams {
    /// Times for the interaction-region volume.
    pub ts: Vec<f64>,
    pub samples: usize,
    /// Times for `t·σ(S(t) ∩ S_t)`.
    pub cap_ts: Vec<f64>,
    /// Times for the weighted-field growth of the profile.
    pub weight_ts: Vec<f64>,
    pub weight_orders: Vec<usize>,
    /// Profile component fed to the weight check; first active when absent.
    pub weight_component: Option<usize>,
}

impl Default for GeometryParams {
    fn default() -> Self {
        GeometryParams {
            ts: vec![4.0, 16.0, 64.0, 256.0],
            samples: 1_000_000,
            cap_ts: Vec::new(),
            weight_ts: Vec::new(),
            weight_orders: vec![1, 2],
            weight_component: None,
        }
    }
}

impl GeometryParams {
    fn check(&self, ctx: &Ctx, errs: &mut Vec<String>) {
        if self.ts.iter().any(|t| !(*t >= 1.0 && t.is_finite())) {
            errs.push("params.ts entries must be finite and at least 1".into());
        }
        if !self.ts.is_empty() && self.samples < 100_000 {
            errs.push(format!("params.samples = {} is below 1e5", self.samples));
        }
        if self.cap_ts.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            errs.push("params.cap_ts entries must be positive".into());
        }
        if !self.weight_ts.is_empty() {
            if self.weight_ts.len() < 3 {
                errs.push("params.weight_ts needs at least 3 times".into());
            }
            if self.weight_ts.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
                errs.push("params.weight_ts entries must be non-negative".into());
            }
            if self.weight_orders.is_empty() || self.weight_orders.iter().any(|k| !(1..=2).contains(k)) {
                errs.push("params.weight_orders entries must be 1 or 2".into());
            }
        }
        if let Some(c) = self.weight_component {
            if c >= ctx.profile_n {
                errs.push(format!("params.weight_component = {c} is not a profile component"));
            }
        }
        if self.ts.is_empty() && self.cap_ts.is_empty() && self.weight_ts.is_empty() {
            errs.push("params: nothing to compute (ts, cap_ts and weight_ts are all empty)".into());
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlowupParams {
    pub xi_y: f64,
    pub xi_z: f64,
    /// Strictly decreasing.
    pub deltas: Vec<f64>,
    pub u_min: f64,
    pub h_u: f64,
    pub v_max: f64,
    pub h_v: f64,
    pub t_stride: usize,
    pub renorm_h: f64,
    pub coefficients: CoefficientSource,
}

impl Default for BlowupParams {
    fn default() -> Self {
        BlowupParams {
            xi_y: 20.0,
            xi_z: 0.0,
            deltas: vec![1e-2, 1e-3, 1e-4],
            u_min: -1.0,
            h_u: 2.5e-3,
            v_max: 200.0,
            h_v: 2.5e-3,
            t_stride: 1,
            renorm_h: DEFAULT_RENORM_H,
            coefficients: CoefficientSource::Linearized,
        }
    }
}

impl BlowupParams {
    fn check(&self, ctx: &Ctx, errs: &mut Vec<String>) {
        if !(self.xi_y.is_finite() && self.xi_z.is_finite()) {
            errs.push("params.xi_y and params.xi_z must be finite".into());
        }
        if self.deltas.len() < 2 {
            errs.push("params.deltas needs at least two values".into());
        }
        if self.deltas.iter().any(|d| !(d.is_finite() && *d > 0.0 && *d < 1.0)) {
            errs.push("params.deltas entries must lie in (0, 1)".into());
        }
        if self.deltas.windows(2).any(|w| w[1] >= w[0]) {
            errs.push("params.deltas must be strictly decreasing".into());
        }
        check_grid(errs, self.u_min, self.h_u, self.v_max, self.h_v);
        if self.t_stride == 0 {
            errs.push("params.t_stride must be at least 1".into());
        }
        check_renorm_h(errs, self.renorm_h);
        self.coefficients.check(ctx, errs);
        if !self.coefficients.scalar(ctx) {
            errs.push(format!(
                "blow-up needs scalar coefficients: the system has N = {}; use coefficients {{\"kind\": \"profile-slope\"}}",
                ctx.system_n
            ));
        }
    }
}

/// Task parameters with every default filled in.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum TaskParams {
    Classify(ClassifyParams),
    Mode(ModeParams),
    Fdtd(FdtdParams),
    Geoptics(GeopticsParams),
    Geometry(GeometryParams),
    Blowup(BlowupParams),
}

fn parse_params<T: DeserializeOwned>(v: &Value, errs: &mut Vec<String>) -> Option<T> {
    serde_json::from_value(v.clone()).map_err(|e| errs.push(format!("params: {e}"))).ok()
}

impl TaskParams {
    fn parse(task: Task, v: &Value, errs: &mut Vec<String>) -> Option<Self> {
        Some(match task {
            Task::Classify => TaskParams::Classify(parse_params(v, errs)?),
            Task::Mode => TaskParams::Mode(parse_params(v, errs)?),
            Task::Fdtd => TaskParams::Fdtd(parse_params(v, errs)?),
            Task::Geoptics => TaskParams::Geoptics(parse_params(v, errs)?),
            Task::Geometry => TaskParams::Geometry(parse_params(v, errs)?),
            Task::Blowup => TaskParams::Blowup(parse_params(v, errs)?),
        })
    }

    fn check(&self, ctx: &Ctx, errs: &mut Vec<String>) {
        match self {
            TaskParams::Classify(p) => p.check(ctx, errs),
            TaskParams::Mode(p) => p.check(ctx, errs),
            TaskParams::Fdtd(p) => p.check(ctx, errs),
            TaskParams::Geoptics(p) => p.check(ctx, errs),
            TaskParams::Geometry(p) => p.check(ctx, errs),
            TaskParams::Blowup(p) => p.check(ctx, errs),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default)]
    task: Option<Value>,
    system: Value,
    profile: Value,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    params: Option<Value>,
    #[serde(default)]
    output_dir: Option<PathBuf>,
}

/// A validated scenario with its system and profile built.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub task: Task,
    pub system_ref: SystemRef,
    pub profile_spec: ProfileSpec,
    pub seed: u64,
    pub params: TaskParams,
    pub output_dir: Option<PathBuf>,
    system: SemilinearSystem,
    profile: WaveProfile,
}

impl Scenario {
    pub fn load(path: &Path, task: Option<Task>) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Validation(vec![format!("cannot read {}: {e}", path.display())]))?;
        Self::from_json(&text, task)
    }

    /// Parses and validates. `task`, when given, must agree with the
    /// document's task or stands in for a missing one.
    pub fn from_json(text: &str, task: Option<Task>) -> Result<Self> {
        let raw: RawScenario =
            serde_json::from_str(text).map_err(|e| Error::Validation(vec![format!("config: {e}")]))?;
        let mut errs = Vec::new();

        let doc_task = match &raw.task {
            None => None,
            Some(v) => match serde_json::from_value::<Task>(v.clone()) {
                Ok(t) => Some(t),
                Err(_) => {
                    errs.push(format!("task: {v} is not one of classify, mode, fdtd, geoptics, geometry, blowup"));
                    None
                }
            },
        };
        let task = match (doc_task, task) {
            (Some(a), Some(b)) if a != b => {
                errs.push(format!("task: config says {a:?} but {b:?} was requested"));
                None
            }
            (a, b) => a.or(b),
        };
        if task.is_none() && raw.task.is_none() {
            errs.push("task: missing".into());
        }

        let system_ref = serde_json::from_value::<SystemRef>(raw.system.clone())
            .map_err(|e| errs.push(format!("system: {e}")))
            .ok();
        let system = system_ref
            .as_ref()
            .and_then(|r| r.resolve().map_err(|e| errs.push(format!("system: {e}"))).ok());
        let profile_spec = serde_json::from_value::<ProfileSpec>(raw.profile.clone())
            .map_err(|e| errs.push(format!("profile: {e}")))
            .ok();
        let profile = profile_spec
            .as_ref()
            .and_then(|s| WaveProfile::from_spec(s).map_err(|e| errs.push(format!("profile: {e}"))).ok());
        if let (Some(sys), Some(prof)) = (&system, &profile) {
            if sys.n() != prof.n() {
                errs.push(format!(
                    "profile: {} amplitudes for an N = {} system",
                    prof.n(),
                    sys.n()
                ));
            }
        }
        let params_value = raw.params.unwrap_or_else(|| Value::Object(Default::default()));
        let params = task.and_then(|t| TaskParams::parse(t, &params_value, &mut errs));
        if let (Some(p), Some(sys), Some(prof)) = (&params, &system, &profile) {
            let ctx = Ctx {
                system_n: sys.n(),
                profile_n: prof.n(),
            };
            p.check(&ctx, &mut errs);
        }

        match (task, system_ref, profile_spec, params, system, profile) {
            (Some(task), Some(system_ref), Some(profile_spec), Some(params), Some(system), Some(profile))
                if errs.is_empty() =>
            {
                Ok(Scenario {
                    task,
                    system_ref,
                    profile_spec,
                    seed: raw.seed,
                    params,
                    output_dir: raw.output_dir,
                    system,
                    profile,
                })
            }
            _ => Err(Error::Validation(errs)),
        }
    }

    pub fn system(&self) -> &SemilinearSystem {
        &self.system
    }

    pub fn profile(&self) -> &WaveProfile {
        &self.profile
    }

    /// Everything that determines the payloads, defaults filled in, keys sorted.
    pub fn canonical(&self) -> Value {
        serde_json::json!({
            "task": self.task,
            "system": self.system_ref,
            "profile": self.profile_spec,
            "seed": self.seed,
            "params": self.params,
        })
    }

    /// Hex SHA-256 of the canonical form. The output directory is not part of it.
    pub fn config_hash(&self) -> String {
        let bytes = serde_json::to_vec(&self.canonical()).expect("values serialize");
        hex(&Sha256::digest(&bytes))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionTwoStatus {
    Satisfied,
    NotFound,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Prediction {
    Stable,
    Unstable,
    Undetermined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witnesses {
    /// `(i, j, ℓ)` triples breaking Condition 1.
    pub condition1: Vec<[usize; 3]>,
    pub condition2: Option<ConditionTwoWitness>,
    pub growth: GrowthRateEstimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub system: String,
    pub active: Vec<usize>,
    pub condition1: bool,
    pub condition2: ConditionTwoStatus,
    #[serde(rename = "K")]
    pub k: f64,
    pub predicted: Prediction,
    pub witnesses: Witnesses,
}

/// Condition 1, the renormalized coefficients, Condition 2 and the growth
/// rate estimate. Condition 1 alone predicts stability; its failure with
/// Condition 2 and a positive rate predicts instability.
pub fn classify(system: &SemilinearSystem, profile: &WaveProfile, params: &ClassifyParams) -> Result<Verdict> {
    if system.n() != profile.n() {
        return Err(Error::InvalidProfile(format!(
            "{} components for an N = {} system",
            profile.n(),
            system.n()
        )));
    }
    let active = profile.active();
    let c1 = system.check_condition_one(&active);
    let ren = solve_renormalizer(system, profile, params.renorm_h)?;
    let coeffs = linearized_coefficients(&ren, &system.coupling_tensors(), profile);
    let c2 = check_condition_two(&coeffs, params.n_theta, params.u_stride)?;
    let growth = growth_rate_estimate(&coeffs, GrowthOptions::default())?;
    let condition2 = if c2.satisfied {
        ConditionTwoStatus::Satisfied
    } else {
        ConditionTwoStatus::NotFound
    };
    let predicted = if c1.holds {
        Prediction::Stable
    } else if c2.satisfied && growth.positive && growth.k > 0.0 {
        Prediction::Unstable
    } else {
        Prediction::Undetermined
    };
    Ok(Verdict {
        system: system.label.clone(),
        active,
        condition1: c1.holds,
        condition2,
        k: growth.k,
        predicted,
        witnesses: Witnesses {
            condition1: c1.violations.iter().map(|&(i, j, l)| [i, j, l]).collect(),
            condition2: c2.witness,
            growth,
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputKind {
    Csv,
    Json,
    Bin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub name: String,
    pub kind: OutputKind,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub task: Task,
    pub config_hash: String,
    pub config: Value,
    pub seed: u64,
    pub started_unix_ns: u64,
    pub wall_time_s: f64,
    pub run_dir: PathBuf,
    pub outputs: Vec<OutputFile>,
}

/// Files of a run in progress, all inside one directory.
struct Outputs {
    dir: PathBuf,
    files: Vec<OutputFile>,
}

impl Outputs {
    fn write(&mut self, name: &str, kind: OutputKind, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.files.push(OutputFile {
            name: name.into(),
            kind,
            bytes: bytes.len() as u64,
            sha256: hex(&Sha256::digest(bytes)),
        });
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_vec_pretty(value)?;
        text.push(b'\n');
        self.write(name, OutputKind::Json, &text)
    }

    fn csv(&mut self, name: &str, text: &str) -> Result<()> {
        self.write(name, OutputKind::Csv, text.as_bytes())
    }

    /// Records a file some other writer already put in the directory.
    fn record(&mut self, path: &Path, kind: OutputKind) -> Result<()> {
        let bytes = fs::read(path)?;
        self.files.push(OutputFile {
            name: path.file_name().expect("file path").to_string_lossy().into_owned(),
            kind,
            bytes: bytes.len() as u64,
            sha256: hex(&Sha256::digest(&bytes)),
        });
        Ok(())
    }
}

/// A failed run: the error, and the diagnostics file for numerical failures.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct RunFailure {
    pub error: Error,
    pub diagnostics: Option<PathBuf>,
}

impl RunFailure {
    pub fn is_validation(&self) -> bool {
        self.error.is_validation()
    }
}

impl From<Error> for RunFailure {
    fn from(error: Error) -> Self {
        RunFailure {
            error,
            diagnostics: None,
        }
    }
}

/// `--out`, else the config's `output_dir`, else the environment override,
/// else `./nullwave-runs`.
pub fn output_root(cli: Option<&Path>, scenario: &Scenario) -> PathBuf {
    cli.map(Path::to_path_buf)
        .or_else(|| scenario.output_dir.clone())
        .or_else(|| std::env::var_os(OUT_ROOT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_ROOT))
}

fn unix_ns() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_nanos() as u64).unwrap_or(0)
}

/// Builds the run in a hidden sibling directory and renames it into place,
/// so a run directory either holds every output and the manifest or does
/// not exist.
fn atomic_dir<F>(root: &Path, name: &str, fill: F) -> Result<PathBuf>
where
    F: FnOnce(&Path) -> Result<()>,
{
    fs::create_dir_all(root)?;
    let tmp = root.join(format!(".{name}.partial"));
    fs::create_dir(&tmp)?;
    let done = fill(&tmp).and_then(|()| {
        let dest = root.join(name);
        fs::rename(&tmp, &dest)?;
        Ok(dest)
    });
    if done.is_err() {
        let _ = fs::remove_dir_all(&tmp);
    }
    done
}

#[derive(Serialize)]
struct FailureDiagnostics<'a> {
    tool_version: &'a str,
    task: Task,
    config_hash: &'a str,
    error: String,
    blowup_time: Option<f64>,
}

/// Runs the scenario into `<root>/<task>-<hash12>-<ns>/` and returns its
/// manifest. A numerical failure leaves only `<task>-<hash12>-<ns>-failed/diagnostics.json`.
pub fn run_scenario(scenario: &Scenario, out: Option<&Path>) -> std::result::Result<RunManifest, RunFailure> {
    let root = output_root(out, scenario);
    let hash = scenario.config_hash();
    let started_unix_ns = unix_ns();
    let name = format!("{}-{}-{}", scenario.task, &hash[..12], started_unix_ns);
    let clock = Instant::now();
    let mut manifest = RunManifest {
        tool: "nullwave".into(),
        tool_version: TOOL_VERSION.into(),
        task: scenario.task,
        config_hash: hash.clone(),
        config: scenario.canonical(),
        seed: scenario.seed,
        started_unix_ns,
        wall_time_s: 0.0,
        run_dir: root.join(&name),
        outputs: Vec::new(),
    };
    let result = atomic_dir(&root, &name, |dir| {
        let mut outputs = Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        };
        dispatch(scenario, &mut outputs)?;
        manifest.outputs = outputs.files;
        manifest.wall_time_s = clock.elapsed().as_secs_f64();
        let mut text = serde_json::to_vec_pretty(&manifest)?;
        text.push(b'\n');
        fs::write(dir.join("manifest.json"), text)?;
        Ok(())
    });
    match result {
        Ok(_) => Ok(manifest),
        Err(error) if error.is_validation() => Err(error.into()),
        Err(error) => {
            let diag = FailureDiagnostics {
                tool_version: TOOL_VERSION,
                task: scenario.task,
                config_hash: &hash,
                error: error.to_string(),
                blowup_time: match error {
                    Error::NumericalBlowup { t } => Some(t),
                    _ => None,
                },
            };
            let diagnostics = atomic_dir(&root, &format!("{name}-failed"), |dir| {
                fs::write(dir.join("diagnostics.json"), serde_json::to_vec_pretty(&diag)?)?;
                Ok(())
            })
            .ok()
            .map(|d| d.join("diagnostics.json"));
            Err(RunFailure { error, diagnostics })
        }
    }
}

fn dispatch(scenario: &Scenario, out: &mut Outputs) -> Result<()> {
    let (sys, prof) = (scenario.system(), scenario.profile());
    match &scenario.params {
        TaskParams::Classify(p) => out.json("verdict.json", &classify(sys, prof, p)?),
        TaskParams::Mode(p) => run_mode(sys, prof, p, out),
        TaskParams::Fdtd(p) => run_fdtd(sys, prof, p, out),
        TaskParams::Geoptics(p) => run_geoptics(sys, prof, p, scenario.seed, out),
        TaskParams::Geometry(p) => run_geometry(prof, p, scenario.seed, out),
        TaskParams::Blowup(p) => run_blowup(sys, prof, p, out),
    }
}

/// A fit that may legitimately be impossible (too few points, a zero sample).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOutcome {
    pub fit: Option<FitResult>,
    pub error: Option<String>,
}

impl From<Result<FitResult>> for FitOutcome {
    fn from(r: Result<FitResult>) -> Self {
        match r {
            Ok(fit) => FitOutcome {
                fit: Some(fit),
                error: None,
            },
            Err(e) => FitOutcome {
                fit: None,
                error: Some(e.to_string()),
            },
        }
    }
}

/// Growth rates the theory predicts for a set of coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePrediction {
    pub k_estimate: GrowthRateEstimate,
    /// `|f_i|_{1/2}/√2` when `B_y = f_i'`.
    pub k_holder: Option<f64>,
}

fn predicted_rate(coeffs: &LinearizedCoefficients, profile: &WaveProfile, src: CoefficientSource) -> Result<RatePrediction> {
    Ok(RatePrediction {
        k_estimate: growth_rate_estimate(coeffs, GrowthOptions::default())?,
        k_holder: match src {
            CoefficientSource::ProfileSlope { component } => {
                Some(profile.holder_half_seminorm(component).value / std::f64::consts::SQRT_2)
            }
            CoefficientSource::Linearized => None,
        },
    })
}

#[derive(Serialize)]
struct ModeReport {
    xi: Frequency,
    wavelength: f64,
    sup_fit: FitOutcome,
    prediction: RatePrediction,
}

fn run_mode(sys: &SemilinearSystem, prof: &WaveProfile, p: &ModeParams, out: &mut Outputs) -> Result<()> {
    let (coeffs, _) = p.coefficients.build(sys, prof, p.renorm_h)?;
    let grid = GoursatGrid::new(p.u_min, p.h_u, p.v_max, p.h_v)?;
    let xi = Frequency::new(p.xi_y, p.xi_z);
    let opts = ModeOptions {
        sample_stride_u: p.sample_stride_u,
        sample_stride_v: p.sample_stride_v,
        keep_last_row: false,
        t_stride: p.t_stride,
        ..ModeOptions::default()
    };
    let mode = goursat_solve(&coeffs, xi, &BoundaryData::ones(coeffs_n(&coeffs)), &grid, &opts)?;
    out.csv("mode_sup.csv", &mode.sup_csv())?;
    if !mode.samples.is_empty() {
        out.csv("mode_samples.csv", &mode.samples_csv())?;
    }
    out.json(
        "fit.json",
        &ModeReport {
            xi,
            wavelength: mode.wavelength,
            sup_fit: fit_sqrt_exponential_log(&mode.sup_profile, p.fit_t_min).into(),
            prediction: predicted_rate(&coeffs, prof, p.coefficients)?,
        },
    )
}

fn coeffs_n(coeffs: &LinearizedCoefficients) -> usize {
    crate::renormalize::TransverseCoefficients::n(coeffs)
}

#[derive(Serialize)]
struct FdtdSummary {
    grid: GridSpec,
    dims: [usize; 3],
    steps: usize,
    dt: f64,
    mode: RhsMode,
    epsilon: f64,
    components: Vec<usize>,
    sup_dpsi_power_fit: FitOutcome,
    gamma_energy_sqrt_exp_fit: Option<FitOutcome>,
    /// Largest relative increase per unit time between consecutive samples.
    multiplier_max_rise: Option<f64>,
    final_sup_psi: f64,
    final_sup_dpsi: f64,
}

/// `max (y_{k+1} − y_k)/(y_k·Δt)` over consecutive samples with `y_k > 0`.
pub fn max_relative_rise(series: &[(f64, f64)]) -> f64 {
    series
        .windows(2)
        .filter(|w| w[0].1 > 0.0 && w[1].0 > w[0].0)
        .map(|w| (w[1].1 - w[0].1) / (w[0].1 * (w[1].0 - w[0].0)))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn run_fdtd(sys: &SemilinearSystem, prof: &WaveProfile, p: &FdtdParams, out: &mut Outputs) -> Result<()> {
    let spec = p.grid();
    let fdtd = Fdtd::new(spec, sys, prof, p.mode)?;
    let components = p.components_or_all(sys.n());
    let initial = initial_bump(&spec, p.epsilon, sys.n(), &components)?;
    let needs_ren = p.transform || p.multiplier;
    let (coeffs, ren) = if needs_ren {
        CoefficientSource::Linearized.build(sys, prof, p.renorm_h)?
    } else {
        (LinearizedCoefficients::scalar(p.renorm_h, |_| 0.0), None)
    };
    let couplings = sys.coupling_tensors();
    let transform = match (&ren, p.transform) {
        (Some(r), true) => Some(Transform {
            renormalizer: r,
            couplings: &couplings,
        }),
        _ => None,
    };
    let weight = p.multiplier.then(|| MultiplierWeight::new(&coeffs, p.renorm_h));
    let opts = EvolveOptions {
        output_every: p.output_every,
        delta: p.delta,
        weighted: p.weighted,
    };
    let (ledger, state) = evolve(&fdtd, initial, &opts, transform.as_ref(), weight.as_ref())?;
    out.csv("ledger.csv", &ledger.to_csv())?;
    if p.snapshot {
        let (bin, json) = write_snapshot(&spec, &state, &out.dir.clone(), "final")?;
        out.record(&bin, OutputKind::Bin)?;
        out.record(&json, OutputKind::Json)?;
    }
    let last = ledger.rows.last().expect("ledger has the initial row");
    let summary = FdtdSummary {
        grid: spec,
        dims: spec.dims(),
        steps: spec.steps(),
        dt: spec.dt(),
        mode: p.mode,
        epsilon: p.epsilon,
        components,
        sup_dpsi_power_fit: fit_power_decay(&ledger.series(|r| r.sup_dpsi), p.fit_t_min).into(),
        gamma_energy_sqrt_exp_fit: transform.is_some().then(|| {
            fit_sqrt_exponential(&ledger.series(|r| r.gamma_energy.unwrap_or(0.0)), p.fit_t_min).into()
        }),
        multiplier_max_rise: weight
            .is_some()
            .then(|| max_relative_rise(&ledger.series(|r| r.multiplier_energy.unwrap_or(0.0)))),
        final_sup_psi: last.sup_psi,
        final_sup_dpsi: last.sup_dpsi,
    };
    out.json("summary.json", &summary)
}

#[derive(Serialize)]
struct GeopticsReport {
    mu: f64,
    residual: ResidualReport,
    comparison: Option<ComparisonReport>,
}

fn run_geoptics(sys: &SemilinearSystem, prof: &WaveProfile, p: &GeopticsParams, seed: u64, out: &mut Outputs) -> Result<()> {
    let (coeffs, _) = p.coefficients.build(sys, prof, p.renorm_h)?;
    let n = coeffs_n(&coeffs);
    let dir = null_vector(p.u1, p.u2, p.t_final)?;
    let spacing = p.spacing.unwrap_or_else(|| RayBundle::default_spacing(&dir));
    let bundle = RayBundle::new(dir, p.steps, p.rays_per_axis, spacing)?;
    let unit = C64::new(1.0 / (n as f64).sqrt(), 0.0);
    let sol = transport_solve(&coeffs, &bundle, p.order, |_| DVector::from_element(n, unit))?;
    out.csv("ray_center.csv", &sol.ray_csv(bundle.center_ray()))?;
    let mu = p.mu.unwrap_or_else(|| default_frequency(p.t_final));
    let comparison = if p.comparison {
        let ode = ComparisonOde {
            coeffs: &coeffs,
            direction: dir,
        };
        let opts = ComparisonOptions {
            steps: p.comparison_steps,
            seed,
            ..ComparisonOptions::default()
        };
        Some(comparison_ode_check(&ode, opts)?)
    } else {
        None
    };
    out.json(
        "geoptics.json",
        &GeopticsReport {
            mu,
            residual: ansatz_residual(&sol, mu),
            comparison,
        },
    )
}

#[derive(Serialize)]
struct VolumeRow {
    #[serde(flatten)]
    estimate: VolumeEstimate,
    bound: f64,
    within_bound: bool,
}

#[derive(Serialize)]
struct CapRow {
    t: f64,
    r: f64,
    measure: f64,
    t_measure: f64,
}

#[derive(Serialize)]
struct GeometryReport {
    volumes: Vec<VolumeRow>,
    caps: Vec<CapRow>,
    /// `max/min` of `t·σ` over the cap times.
    cap_ratio: Option<f64>,
    weight_component: usize,
    weight_growth: Vec<WeightGrowthReport>,
}

fn run_geometry(prof: &WaveProfile, p: &GeometryParams, seed: u64, out: &mut Outputs) -> Result<()> {
    let volumes = p
        .ts
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let estimate = region_volume(t, p.samples, seed.wrapping_add(k as u64))?;
            Ok(VolumeRow {
                bound: 100.0 * t,
                within_bound: estimate.estimate <= 100.0 * t,
                estimate,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let caps = p
        .cap_ts
        .iter()
        .map(|&t| {
            let measure = sphere_cap_measure(t, t)?;
            Ok(CapRow {
                t,
                r: t,
                measure,
                t_measure: t * measure,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let cap_ratio = (!caps.is_empty()).then(|| {
        let (lo, hi) = caps
            .iter()
            .fold((f64::INFINITY, 0.0_f64), |(lo, hi), c| (lo.min(c.t_measure), hi.max(c.t_measure)));
        hi / lo
    });
    let component = p.weight_component.unwrap_or_else(|| prof.active().first().copied().unwrap_or(0));
    let weight_growth = if p.weight_ts.is_empty() {
        Vec::new()
    } else {
        p.weight_orders
            .iter()
            .map(|&k| weight_growth_check(|u| prof.component(component, u, 0), &all_strings(k), &p.weight_ts))
            .collect::<Result<Vec<_>>>()?
    };
    out.json(
        "geometry.json",
        &GeometryReport {
            volumes,
            caps,
            cap_ratio,
            weight_component: component,
            weight_growth,
        },
    )
}

/// `√T_blow` against `−log δ`; the slope should approach `1/K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowupFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

/// Least squares over the entries that blew up within the grid.
pub fn blowup_fit(entries: &[BlowupEntry]) -> Option<BlowupFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = entries
        .iter()
        .filter_map(|e| e.t_blow.map(|t| (-e.delta.ln(), t.sqrt())))
        .unzip();
    (xs.len() >= 2).then(|| {
        let (slope, intercept, r2) = linear_fit(&xs, &ys);
        BlowupFit {
            slope,
            intercept,
            r2,
            points: xs.len(),
        }
    })
}

#[derive(Serialize)]
struct BlowupReport {
    xi: Frequency,
    fit: Option<BlowupFit>,
    prediction: RatePrediction,
    predicted_slope: f64,
}

fn run_blowup(sys: &SemilinearSystem, prof: &WaveProfile, p: &BlowupParams, out: &mut Outputs) -> Result<()> {
    let (coeffs, _) = p.coefficients.build(sys, prof, p.renorm_h)?;
    let grid = GoursatGrid::new(p.u_min, p.h_u, p.v_max, p.h_v)?;
    let xi = Frequency::new(p.xi_y, p.xi_z);
    let opts = ModeOptions {
        t_stride: p.t_stride,
        ..ModeOptions::default()
    };
    let scan = nirenberg_blowup_scan(&coeffs, xi, &p.deltas, &grid, &opts)?;
    let mut csv = String::from("delta,t_blow\n");
    for e in &scan.entries {
        match e.t_blow {
            Some(t) => csv.push_str(&format!("{:.17e},{t:.17e}\n", e.delta)),
            None => csv.push_str(&format!("{:.17e},\n", e.delta)),
        }
    }
    out.csv("blowup.csv", &csv)?;
    let prediction = predicted_rate(&coeffs, prof, p.coefficients)?;
    let k = prediction.k_holder.unwrap_or(prediction.k_estimate.k);
    out.json(
        "fit.json",
        &BlowupReport {
            xi,
            fit: blowup_fit(&scan.entries),
            predicted_slope: 1.0 / k,
            prediction,
        },
    )
}
