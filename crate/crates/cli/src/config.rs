//! Experiment configuration: a TOML schema with fail-closed parsing,
//! dotted-path overrides, and conversion into the core types.
//!
//! A run manifest embeds the full config under its `config` key, so a
//! manifest JSON file is itself accepted wherever a config is expected;
//! re-running from a manifest reproduces the run.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use spinbath_core::exact::{
    ExecMode, ScheduleKind, Scope, SnapshotSchedule, StepPolicy, DENSE_EIGEN_LIMIT,
};
use spinbath_core::model::{
    CouplingMode, CouplingStrength, KappaMode, Placement, SpinBathSpec, KAPPA_DENSE_LIMIT,
};
use spinbath_core::observables::{Window, WindowSpec};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub bath: BathConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub snapshots: SnapshotConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub windows: Vec<WindowConfig>,
    #[serde(default)]
    pub overlays: OverlayConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathConfig {
    pub n_spins: usize,
    #[serde(default = "one")]
    pub qubit_frequency: f64,
    pub freq_width: f64,
    /// Golden-rule decay target Γ₀; couplings are sized to realize it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_rate: Option<f64>,
    /// Mean squared coupling ⟨γ²⟩, the alternative to `target_rate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_sq_coupling: Option<f64>,
    #[serde(default)]
    pub placement: PlacementConfig,
    #[serde(default)]
    pub coupling: CouplingConfig,
    #[serde(default)]
    pub kappa: KappaConfig,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlacementConfig {
    #[default]
    Sampled,
    Grid,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingConfig {
    #[default]
    Uniform,
    Constant,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KappaConfig {
    #[default]
    None,
    MatchGamma,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub method: MethodConfig,
    #[serde(default = "hundred")]
    pub t_final: f64,
    #[serde(default = "default_step")]
    pub time_step: f64,
    /// ODE norm-drift guarantee; the step is halved until it holds.
    #[serde(default = "default_norm_tol")]
    pub norm_tolerance: f64,
    /// Flagging threshold for the eigenmode route's norm residual.
    #[serde(default = "default_eigen_norm_tol")]
    pub eigen_norm_tolerance: f64,
    /// Flagging threshold for the total-energy residual (either route).
    #[serde(default = "default_energy_tol")]
    pub energy_tolerance: f64,
    #[serde(default = "default_halvings")]
    pub max_halvings: u32,
    #[serde(default)]
    pub trajectory_scope: ScopeConfig,
    #[serde(default)]
    pub store_amplitudes: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            method: MethodConfig::default(),
            t_final: hundred(),
            time_step: default_step(),
            norm_tolerance: default_norm_tol(),
            eigen_norm_tolerance: default_eigen_norm_tol(),
            energy_tolerance: default_energy_tol(),
            max_halvings: default_halvings(),
            trajectory_scope: ScopeConfig::default(),
            store_amplitudes: false,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodConfig {
    #[default]
    Ode,
    Eigenmode,
    Both,
}

impl MethodConfig {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodConfig::Ode => "ode",
            MethodConfig::Eigenmode => "eigenmode",
            MethodConfig::Both => "both",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScopeConfig {
    #[default]
    Full,
    Qubit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotConfig {
    #[serde(default)]
    pub kind: ScheduleKindConfig,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "default_per_window")]
    pub per_window: usize,
    #[serde(default = "default_coarse")]
    pub coarse: usize,
    #[serde(default = "default_t_min")]
    pub t_min: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub times: Vec<f64>,
}

impl Default for SnapshotConfig {
    fn default() -> Self {
        SnapshotConfig {
            kind: ScheduleKindConfig::default(),
            count: default_count(),
            per_window: default_per_window(),
            coarse: default_coarse(),
            t_min: default_t_min(),
            times: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKindConfig {
    #[default]
    Linear,
    Log,
    Windowed,
    Explicit,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverlayConfig {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub kinds: Vec<OverlayKind>,
    /// Inverse temperature for the Markov overlay: a number or "inf".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<BetaConfig>,
    #[serde(default = "one")]
    pub markov_initial: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OverlayKind {
    Zeno,
    Linear,
    Exponential,
    Lorentzian,
    Markov,
}

impl OverlayKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OverlayKind::Zeno => "zeno",
            OverlayKind::Linear => "linear",
            OverlayKind::Exponential => "exponential",
            OverlayKind::Lorentzian => "lorentzian",
            OverlayKind::Markov => "markov",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaConfig {
    Value(f64),
    Keyword(String),
}

impl BetaConfig {
    pub fn to_beta(&self) -> Result<f64> {
        match self {
            BetaConfig::Value(v) => {
                if *v < 0.0 || v.is_nan() {
                    bail!("beta must be nonnegative, got {v}");
                }
                Ok(*v)
            }
            BetaConfig::Keyword(s) => match s.as_str() {
                "inf" | "infinity" => Ok(f64::INFINITY),
                other => bail!("beta must be a number or \"inf\", got {other:?}"),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default)]
    pub format: FormatConfig,
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Points in the frequency-overlay curve.
    #[serde(default = "default_freq_points")]
    pub freq_points: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: default_dir(),
            format: FormatConfig::default(),
            bins: default_bins(),
            freq_points: default_freq_points(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormatConfig {
    /// Long format above 100 spins, wide otherwise.
    #[default]
    Auto,
    Wide,
    Long,
}

fn one() -> f64 {
    1.0
}
fn hundred() -> f64 {
    100.0
}
fn default_step() -> f64 {
    0.02
}
fn default_norm_tol() -> f64 {
    1e-6
}
fn default_eigen_norm_tol() -> f64 {
    1e-10
}
fn default_energy_tol() -> f64 {
    1e-6
}
fn default_halvings() -> u32 {
    6
}
fn default_count() -> usize {
    200
}
fn default_per_window() -> usize {
    150
}
fn default_coarse() -> usize {
    100
}
fn default_t_min() -> f64 {
    0.01
}
fn default_dir() -> String {
    "out".into()
}
fn default_bins() -> usize {
    50
}
fn default_freq_points() -> usize {
    400
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let b = &self.bath;
        match (b.target_rate, b.mean_sq_coupling) {
            (Some(_), Some(_)) => {
                bail!("bath: set exactly one of target_rate and mean_sq_coupling, not both")
            }
            (None, None) => {
                bail!("bath: one of target_rate or mean_sq_coupling is required")
            }
            _ => {}
        }
        if self.run.t_final <= 0.0 || !self.run.t_final.is_finite() {
            bail!("run.t_final must be positive and finite");
        }
        if self.run.time_step <= 0.0 || !self.run.time_step.is_finite() {
            bail!("run.time_step must be positive and finite");
        }
        for (name, v) in [
            ("run.norm_tolerance", self.run.norm_tolerance),
            ("run.eigen_norm_tolerance", self.run.eigen_norm_tolerance),
            ("run.energy_tolerance", self.run.energy_tolerance),
        ] {
            if v <= 0.0 || !v.is_finite() {
                bail!("{name} must be positive and finite");
            }
        }
        if self.run.method != MethodConfig::Ode && b.n_spins > DENSE_EIGEN_LIMIT {
            bail!(
                "run.method = {} needs the dense eigensolve, which is limited to {} spins \
                 (got {})",
                self.run.method.as_str(),
                DENSE_EIGEN_LIMIT,
                b.n_spins
            );
        }
        if b.kappa == KappaConfig::MatchGamma && b.n_spins > KAPPA_DENSE_LIMIT {
            bail!(
                "bath.kappa = \"match-gamma\" stores a dense N x N matrix, limited to {} spins \
                 (got {})",
                KAPPA_DENSE_LIMIT,
                b.n_spins
            );
        }
        for (i, w) in self.windows.iter().enumerate() {
            if !(w.start < w.end) || !w.start.is_finite() || !w.end.is_finite() {
                bail!(
                    "windows[{i}]: start must be less than end (got {}..{})",
                    w.start,
                    w.end
                );
            }
        }
        if self.snapshots.kind == ScheduleKindConfig::Windowed && self.windows.is_empty() {
            bail!("snapshots.kind = \"windowed\" needs at least one [[windows] ] entry");
        }
        if self.snapshots.kind == ScheduleKindConfig::Explicit && self.snapshots.times.is_empty() {
            bail!("snapshots.kind = \"explicit\" needs a nonempty snapshots.times list");
        }
        if self.snapshots.kind == ScheduleKindConfig::Log
            && (self.snapshots.t_min <= 0.0 || self.snapshots.t_min >= self.run.t_final)
        {
            bail!("snapshots.t_min must lie strictly between 0 and run.t_final");
        }
        if let Some(f) = &self.fit {
            if !(f.start < f.end) {
                bail!("fit.start must be less than fit.end");
            }
        }
        if self.output.bins == 0 {
            bail!("output.bins must be at least 1");
        }
        if self.output.freq_points == 0 {
            bail!("output.freq_points must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.overlays.markov_initial) {
            bail!("overlays.markov_initial must lie in [0, 1]");
        }
        if let Some(beta) = &self.overlays.beta {
            beta.to_beta()?;
        }
        self.to_spec()?.validate().map_err(anyhow::Error::from)?;
        Ok(())
    }

    pub fn to_spec(&self) -> Result<SpinBathSpec> {
        let b = &self.bath;
        let strength = match (b.target_rate, b.mean_sq_coupling) {
            (Some(rate), None) => CouplingStrength::TargetRate(rate),
            (None, Some(m2)) => CouplingStrength::MeanSquare(m2),
            _ => bail!("bath: exactly one of target_rate or mean_sq_coupling is required"),
        };
        Ok(SpinBathSpec {
            qubit_frequency: b.qubit_frequency,
            n_spins: b.n_spins,
            freq_width: b.freq_width,
            strength,
            placement: match b.placement {
                PlacementConfig::Sampled => Placement::Sampled,
                PlacementConfig::Grid => Placement::Grid,
            },
            coupling_mode: match b.coupling {
                CouplingConfig::Uniform => CouplingMode::Uniform,
                CouplingConfig::Constant => CouplingMode::Constant,
            },
            kappa_mode: match b.kappa {
                KappaConfig::None => KappaMode::None,
                KappaConfig::MatchGamma => KappaMode::MatchGamma,
            },
            rng_seed: b.seed,
        })
    }

    pub fn to_step_policy(&self, exec: ExecMode) -> StepPolicy {
        StepPolicy {
            initial_step: self.run.time_step,
            norm_tolerance: self.run.norm_tolerance,
            max_halvings: self.run.max_halvings,
            exec,
        }
    }

    pub fn to_schedule(&self) -> SnapshotSchedule {
        let kind = match self.snapshots.kind {
            ScheduleKindConfig::Linear => ScheduleKind::Linear {
                count: self.snapshots.count,
            },
            ScheduleKindConfig::Log => ScheduleKind::Log {
                count: self.snapshots.count,
                t_min: self.snapshots.t_min,
            },
            ScheduleKindConfig::Windowed => ScheduleKind::Windowed {
                windows: self.windows.iter().map(|w| (w.start, w.end)).collect(),
                per_window: self.snapshots.per_window,
                coarse: self.snapshots.coarse,
            },
            ScheduleKindConfig::Explicit => ScheduleKind::Explicit {
                times: self.snapshots.times.clone(),
            },
        };
        SnapshotSchedule {
            kind,
            scope: match self.run.trajectory_scope {
                ScopeConfig::Full => Scope::Full,
                ScopeConfig::Qubit => Scope::QubitOnly,
            },
            store_amplitudes: self.run.store_amplitudes,
        }
    }

    pub fn to_window_spec(&self) -> Result<WindowSpec> {
        let pairs: Vec<(f64, f64)> = self.windows.iter().map(|w| (w.start, w.end)).collect();
        WindowSpec::from_pairs(&pairs).map_err(anyhow::Error::from)
    }

    pub fn averaging_windows(&self) -> Result<Vec<Window>> {
        Ok(self.to_window_spec()?.windows)
    }
}

/// Parse a config from `path`: TOML, or a run-manifest JSON whose
/// embedded `config` object is extracted. Dotted-path `--set` overrides
/// are applied before deserialization, so unknown keys still fail closed.
pub fn load_config(path: &Path, sets: &[String]) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let value = if text.trim_start().starts_with('{') {
        let json: serde_json::Value = serde_json::from_str(&text)
            .with_context(|| format!("{} is not valid JSON", path.display()))?;
        let json = match json.get("config") {
            Some(inner) => inner.clone(),
            None => json,
        };
        toml::Value::try_from(json).context("manifest config does not map onto the schema")?
    } else {
        text.parse::<toml::Value>()
            .with_context(|| format!("{} is not valid TOML", path.display()))?
    };
    finish_config(value, sets)
}

/// Parse a config from embedded TOML text (presets).
pub fn load_config_text(text: &str, sets: &[String]) -> Result<ExperimentConfig> {
    let value = text
        .parse::<toml::Value>()
        .context("preset TOML is invalid")?;
    finish_config(value, sets)
}

fn finish_config(mut value: toml::Value, sets: &[String]) -> Result<ExperimentConfig> {
    for s in sets {
        apply_set(&mut value, s).with_context(|| format!("bad --set {s:?}"))?;
    }
    let config: ExperimentConfig = value
        .try_into()
        .context("config does not match the schema")?;
    Ok(config)
}

/// Apply one `key.path=value` override. The value is parsed as TOML
/// (numbers, booleans, strings, arrays); bare words become strings.
fn apply_set(root: &mut toml::Value, spec: &str) -> Result<()> {
    let (path, raw) = spec.split_once('=').context("expected KEY.PATH=VALUE")?;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.is_empty() || keys.iter().any(|k| k.is_empty()) {
        bail!("empty key segment in {path:?}");
    }
    let parsed: toml::Value = match format!("v = {raw}").parse::<toml::Value>() {
        Ok(toml::Value::Table(t)) => t.get("v").cloned().unwrap(),
        _ => toml::Value::String(raw.to_string()),
    };
    let mut node = root;
    for key in &keys[..keys.len() - 1] {
        let table = node
            .as_table_mut()
            .with_context(|| format!("{key} is not a table"))?;
        node = table
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::map::Map::new()));
    }
    let table = node
        .as_table_mut()
        .with_context(|| format!("{path} does not end inside a table"))?;
    table.insert(keys[keys.len() - 1].to_string(), parsed);
    Ok(())
}
