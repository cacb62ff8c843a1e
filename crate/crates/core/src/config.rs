//! Experiment configuration: TOML with dotted keys, strict schema, field-path errors.
//!
//! ```toml
//! mesh.n_div = 8
//! time.T = 0.5
//! time.tau = 1e-3
//! model.m0_preset = "relaxation"
//! pod.eps_sq.v = 1e-5
//! online.variant = "OG-3x"
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rom::{InitialProjection, RomOptions, UpdateBase, Variant};
use crate::setup::{FieldPreset, InitialPreset, NoisePreset, Problem};
use crate::sparse_grid::DEFAULT_INDEX_CAP;
use crate::tps::TpsConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub n_div: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(rename = "T")]
    pub final_time: f64,
    pub tau: f64,
    /// Online step; the offline `tau` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_online: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub alpha: f64,
    pub m0_preset: InitialPreset,
    pub g_preset: NoisePreset,
    pub hext_preset: FieldPreset,
    pub normalize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamConfig {
    pub s: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub n_snapshots: usize,
    pub n_test: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpsSq {
    pub m: f64,
    pub v: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct PodConfig {
    pub eps_sq: EpsSq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OnlineConfig {
    pub variant: Variant,
    /// Velocity budget `J` of a single online run; from `pod.eps_sq.v` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    /// Budgets swept by the variant comparison.
    pub dims: Vec<usize>,
    pub initial_projection: InitialProjection,
    pub update_base: UpdateBase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgConfig {
    pub threshold: f64,
    pub degree: usize,
    pub cap: usize,
    /// Thresholds swept by the convergence study (decreasing).
    pub thresholds: Vec<f64>,
    /// Reduced basis tolerances compared by the convergence study.
    pub rb_eps_sq: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    /// Online steps of the τ study.
    pub tau_online: Vec<f64>,
    /// Step of the high-fidelity reference for the τ study.
    pub tau_reference: f64,
    /// Velocity budget of the τ study (OG-3x).
    pub tau_budget: usize,
    pub n_div: Vec<usize>,
    pub n_div_reference: usize,
    /// Test samples of the h study.
    pub h_samples: usize,
    /// Inf-sup evaluated every `infsup_stride` steps.
    pub infsup_stride: usize,
    pub enabled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    /// Parameter dimensions of the robustness study.
    pub s_list: Vec<usize>,
    /// Runs of the switching ensemble.
    pub switching_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct ExperimentConfig {
    pub mesh: MeshConfig,
    pub time: TimeConfig,
    pub model: ModelConfig,
    pub param: ParamConfig,
    pub sampling: SamplingConfig,
    pub pod: PodConfig,
    pub online: OnlineConfig,
    pub sg: SgConfig,
    pub refine: RefineConfig,
    pub study: StudyConfig,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig { n_div: 8 }
    }
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig { final_time: 0.5, tau: 1e-3, tau_online: None }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            alpha: 1.4,
            m0_preset: InitialPreset::Relaxation,
            g_preset: NoisePreset::Relaxation,
            hext_preset: FieldPreset::Zero,
            normalize: true,
        }
    }
}

impl Default for ParamConfig {
    fn default() -> Self {
        ParamConfig { s: 1 }
    }
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig { n_snapshots: 32, n_test: 10, seed: 1 }
    }
}

impl Default for EpsSq {
    fn default() -> Self {
        EpsSq { m: 1e-5, v: 1e-5, lambda: 1e-5 }
    }
}


impl Default for OnlineConfig {
    fn default() -> Self {
        OnlineConfig {
            variant: Variant::Og3x,
            budget: None,
            dims: vec![5, 10, 15, 20, 25, 30],
            initial_projection: InitialProjection::default(),
            update_base: UpdateBase::default(),
        }
    }
}

impl Default for SgConfig {
    fn default() -> Self {
        SgConfig {
            threshold: 1e-3,
            degree: 1,
            cap: DEFAULT_INDEX_CAP,
            thresholds: vec![0.3, 1e-1, 3e-2, 1e-2, 3e-3, 1e-3],
            rb_eps_sq: vec![1e-1, 1e-6],
        }
    }
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            tau_online: vec![1e-2, 5e-3, 2.5e-3],
            tau_reference: 5e-4,
            tau_budget: 30,
            n_div: vec![4, 8, 16],
            n_div_reference: 32,
            h_samples: 2,
            infsup_stride: 25,
            enabled: true,
        }
    }
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig { s_list: vec![1, 10, 100], switching_runs: 16 }
    }
}


fn config_err(path: &str, message: impl Into<String>) -> Error {
    Error::Config { path: path.into(), message: message.into() }
}

impl ExperimentConfig {
    /// Desk-scale defaults of a named experiment.
    pub fn preset(name: &str) -> Result<Self> {
        let mut c = ExperimentConfig::default();
        match name {
            "relax-1d" => {}
            "relax-nd" => {
                c.refine.enabled = false;
            }
            "sg-conv" => {
                c.time.final_time = 0.2;
                c.param.s = 16;
                c.refine.enabled = false;
            }
            "switching" => {
                c.time.final_time = 1.0;
                c.model.m0_preset = InitialPreset::Switching;
                c.model.g_preset = NoisePreset::Switching;
                c.model.hext_preset = FieldPreset::MinusEz;
                c.param.s = 100;
                c.sampling.n_snapshots = 16;
                c.sampling.n_test = 1;
                c.pod.eps_sq = EpsSq { m: 1e-6, v: 1e-6, lambda: 1e-6 };
                c.online.variant = Variant::SsOg1x;
                c.refine.enabled = false;
            }
            other => return Err(config_err("experiment", format!("unknown experiment `{other}`"))),
        }
        Ok(c)
    }

    /// Parses a TOML document on top of `base`, then applies `key=value` overrides.
    pub fn parse_with(base: &ExperimentConfig, text: &str, overrides: &[String]) -> Result<Self> {
        let mut table = match toml::Value::try_from(base) {
            Ok(toml::Value::Table(t)) => t,
            _ => return Err(config_err("", "cannot serialize the base configuration")),
        };
        let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| config_err("", e.message().to_string()))?;
        merge(&mut table, doc);
        for o in overrides {
            let (key, value) =
                o.split_once('=').ok_or_else(|| config_err(o, "override must have the form key=value"))?;
            set_path(&mut table, key.trim(), parse_scalar(value.trim()))?;
        }
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let path = e.path().to_string();
            config_err(&path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with(&ExperimentConfig::default(), text, &[])
    }

    pub fn load(path: &Path, base: &ExperimentConfig, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_with(base, &text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |path: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(config_err(path, format!("must be positive, got {v}")))
            }
        };
        let unit = |path: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(config_err(path, format!("must lie in (0, 1), got {v}")))
            }
        };
        let nonzero = |path: &str, v: usize| {
            if v > 0 {
                Ok(())
            } else {
                Err(config_err(path, "must be at least 1"))
            }
        };
        nonzero("mesh.n_div", self.mesh.n_div)?;
        pos("time.T", self.time.final_time)?;
        pos("time.tau", self.time.tau)?;
        self.tps_config().map_err(|e| config_err("time.tau", e.to_string()))?;
        if let Some(t) = self.time.tau_online {
            pos("time.tau_online", t)?;
            self.online_tps_config().map_err(|e| config_err("time.tau_online", e.to_string()))?;
        }
        pos("model.alpha", self.model.alpha)?;
        nonzero("param.s", self.param.s)?;
        nonzero("sampling.n_snapshots", self.sampling.n_snapshots)?;
        nonzero("sampling.n_test", self.sampling.n_test)?;
        unit("pod.eps_sq.m", self.pod.eps_sq.m)?;
        unit("pod.eps_sq.v", self.pod.eps_sq.v)?;
        unit("pod.eps_sq.lambda", self.pod.eps_sq.lambda)?;
        if let Some(b) = self.online.budget {
            nonzero("online.budget", b)?;
        }
        for (i, &d) in self.online.dims.iter().enumerate() {
            nonzero(&format!("online.dims[{i}]"), d)?;
        }
        pos("sg.threshold", self.sg.threshold)?;
        nonzero("sg.degree", self.sg.degree)?;
        nonzero("sg.cap", self.sg.cap)?;
        for (i, &t) in self.sg.thresholds.iter().enumerate() {
            pos(&format!("sg.thresholds[{i}]"), t)?;
        }
        for (i, &t) in self.sg.rb_eps_sq.iter().enumerate() {
            unit(&format!("sg.rb_eps_sq[{i}]"), t)?;
        }
        for (i, &t) in self.refine.tau_online.iter().enumerate() {
            pos(&format!("refine.tau_online[{i}]"), t)?;
        }
        pos("refine.tau_reference", self.refine.tau_reference)?;
        nonzero("refine.tau_budget", self.refine.tau_budget)?;
        for (i, &n) in self.refine.n_div.iter().enumerate() {
            nonzero(&format!("refine.n_div[{i}]"), n)?;
            if !self.refine.n_div_reference.is_multiple_of(n) {
                return Err(config_err(
                    &format!("refine.n_div[{i}]"),
                    format!("{n} does not divide refine.n_div_reference = {}", self.refine.n_div_reference),
                ));
            }
        }
        nonzero("refine.h_samples", self.refine.h_samples)?;
        nonzero("refine.infsup_stride", self.refine.infsup_stride)?;
        for (i, &s) in self.study.s_list.iter().enumerate() {
            nonzero(&format!("study.s_list[{i}]"), s)?;
        }
        nonzero("study.switching_runs", self.study.switching_runs)?;
        Ok(())
    }

    pub fn tps_config(&self) -> Result<TpsConfig> {
        let mut c = TpsConfig::new(self.model.alpha, self.time.final_time, self.time.tau);
        c.normalize = self.model.normalize;
        c.n_steps()?;
        Ok(c)
    }

    pub fn online_tps_config(&self) -> Result<TpsConfig> {
        let mut c = self.tps_config()?;
        c.tau = self.time.tau_online.unwrap_or(self.time.tau);
        c.n_steps()?;
        Ok(c)
    }

    pub fn rom_options(&self) -> RomOptions {
        RomOptions { initial_projection: self.online.initial_projection, update_base: self.online.update_base }
    }

    pub fn problem(&self) -> Result<Problem> {
        self.problem_on(self.mesh.n_div)
    }

    pub fn problem_on(&self, n_div: usize) -> Result<Problem> {
        Problem::new(n_div, self.model.m0_preset, self.model.g_preset, self.model.hext_preset)
    }
}

fn merge(base: &mut toml::Table, doc: toml::Table) {
    for (k, v) in doc {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(d)) => merge(b, d),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn parse_scalar(text: &str) -> toml::Value {
    format!("v = {text}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(text.to_string()))
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(config_err(key, "empty key segment"));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => return Err(config_err(key, format!("`{p}` is not a section"))),
        };
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_keys_and_overrides() {
        let c = ExperimentConfig::parse_with(
            &ExperimentConfig::default(),
            "mesh.n_div = 4\ntime.T = 0.1\npod.eps_sq.v = 1e-3\nonline.variant = \"SS-OG-1x\"\n",
            &["sampling.seed=7".into(), "model.hext_preset=minus_ez".into()],
        )
        .unwrap();
        assert_eq!(c.mesh.n_div, 4);
        assert_eq!(c.time.final_time, 0.1);
        assert_eq!(c.pod.eps_sq.v, 1e-3);
        assert_eq!(c.pod.eps_sq.m, 1e-5);
        assert_eq!(c.online.variant, Variant::SsOg1x);
        assert_eq!(c.sampling.seed, 7);
        assert_eq!(c.model.hext_preset, FieldPreset::MinusEz);
        assert_eq!(ExperimentConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn errors_carry_field_paths() {
        let path_of = |text: &str| match ExperimentConfig::parse(text) {
            Err(Error::Config { path, .. }) => path,
            other => panic!("expected a config error, got {other:?}"),
        };
        assert_eq!(path_of("mesh.n_div = 0"), "mesh.n_div");
        assert_eq!(path_of("mesh.bogus = 1"), "mesh.bogus");
        assert_eq!(path_of("model.m0_preset = \"vortex\""), "model.m0_preset");
        assert_eq!(path_of("pod.eps_sq.lambda = 2.0"), "pod.eps_sq.lambda");
        assert_eq!(path_of("time.tau = 0.3"), "time.tau");
        assert_eq!(path_of("online.dims = [5, 0]"), "online.dims[1]");
    }
}
