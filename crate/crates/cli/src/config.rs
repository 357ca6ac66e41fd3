//! Experiment configuration: one JSON document with a section per command.
//! Every field has a default, so `{}` is a valid configuration.

use std::collections::BTreeMap;
use std::path::Path;

use kamreduce_core::approxfn::ApproximationFunction;
use kamreduce_core::hamrep::Weights;
use kamreduce_core::kamloop::{ScheduleParams, StepOptions};
use kamreduce_core::models::{ModelKind, Potential};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// 2π(√5 − 1)/2.
pub fn golden_omega() -> f64 {
    std::f64::consts::PI * (5f64.sqrt() - 1.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Write wall-clock columns; off by default so outputs are reproducible.
    pub timing: bool,
    pub model: ModelConfig,
    pub approximation: ApproximationFunction,
    pub schedule: ScheduleConfig,
    pub frequency: FrequencyConfig,
    pub measure: MeasureConfig,
    pub verify: VerifyConfig,
    pub selftest: SelftestConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            timing: false,
            model: ModelConfig::default(),
            approximation: ApproximationFunction::Power { alpha: 0.5 },
            schedule: ScheduleConfig::default(),
            frequency: FrequencyConfig::default(),
            measure: MeasureConfig::default(),
            verify: VerifyConfig::default(),
            selftest: SelftestConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub m: f64,
    pub epsilon: f64,
    pub omega: Vec<f64>,
    pub potential: PotentialConfig,
    pub J: usize,
    pub K_cap: usize,
    pub a: f64,
    pub p: f64,
    pub r: f64,
    pub s: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::HalfWave,
            m: 0.0,
            epsilon: 1e-3,
            omega: vec![golden_omega()],
            potential: PotentialConfig::default(),
            J: 32,
            K_cap: 8,
            a: 0.025,
            p: 1.0,
            r: 1.0,
            s: 1.0,
        }
    }
}

impl ModelConfig {
    pub fn weights(&self) -> Weights {
        Weights { r: self.r, s: self.s, a: self.a, p: self.p }
    }

    pub fn potential(&self, seed: u64) -> Result<Potential, CliError> {
        let pc = &self.potential;
        let n = self.omega.len();
        Ok(match pc.preset.as_str() {
            "zero" => Potential::zero(n),
            "single-cosine" => Potential::single_cosine(n, pc.c, self.a, self.p, self.r),
            "single-mode" => Potential::single_mode(n, pc.l, pc.c),
            "geometric" => Potential::geometric(n, pc.c, self.a, self.p, self.r, pc.j_v),
            "random" => Potential::random_analytic(n, pc.c, self.a, self.p, self.r, pc.j_v, pc.k_v, pc.seed.unwrap_or(seed)),
            other => return Err(CliError::Config(format!("unknown potential preset {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialConfig {
    /// zero, single-cosine, single-mode, geometric or random.
    pub preset: String,
    pub c: f64,
    /// Spatial index for single-mode.
    pub l: usize,
    /// Spatial support for geometric and random.
    pub j_v: usize,
    /// θ-Fourier support for random.
    pub k_v: usize,
    /// Seed for random; the run seed when absent.
    pub seed: Option<u64>,
}

impl Default for PotentialConfig {
    fn default() -> Self {
        PotentialConfig { preset: "single-cosine".into(), c: 1.0, l: 1, j_v: 8, k_v: 2, seed: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub gamma0: f64,
    /// 2a when absent.
    pub rho0: Option<f64>,
    pub sigma_total: f64,
    pub kappa: f64,
    pub c_star: f64,
    /// K_cap when absent.
    pub k0: Option<usize>,
    pub nu_max: usize,
    pub stop_tol: f64,
    /// Flow smallness threshold as a multiple of σ_ν.
    pub flow_factor: f64,
    /// Angle grid per dimension; 4K_cap + 1 when absent.
    pub grid: Option<usize>,
    pub quad_tol: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            gamma0: 0.1,
            rho0: None,
            sigma_total: 0.3,
            kappa: 4.0 / 3.0,
            c_star: 2.0,
            k0: None,
            nu_max: 8,
            stop_tol: 1e-12,
            flow_factor: 0.25,
            grid: None,
            quad_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct FrequencyConfig {
    pub omega_list: Vec<Vec<f64>>,
    pub gamma: f64,
    pub K: usize,
    pub J: usize,
    pub A2_override: Option<f64>,
}

impl Default for FrequencyConfig {
    fn default() -> Self {
        FrequencyConfig { omega_list: vec![vec![golden_omega()]], gamma: 0.01, K: 10, J: 10, A2_override: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct MeasureConfig {
    pub gamma_list: Vec<f64>,
    pub grid: usize,
    pub K: usize,
    pub J: usize,
    pub A2_override: Option<f64>,
    /// Δ for the sweep; the top-level approximation when absent.
    pub approximation: Option<ApproximationFunction>,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        MeasureConfig {
            gamma_list: vec![1e-1, 3e-2, 1e-2, 3e-3, 1e-3],
            grid: 100_000,
            K: 4,
            J: 32,
            A2_override: None,
            approximation: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub t_end: f64,
    /// RK4 step as a fraction of 0.1/(J + max|Ω|).
    pub dt_factor: f64,
    pub samples: usize,
    /// Bound on the sup relative error between direct and reduced runs.
    pub tolerance: f64,
    /// Stability bound is 1 + stability_factor·ε.
    pub stability_factor: f64,
    /// Load the reducing transformation from a reduce run instead of
    /// recomputing it.
    pub chain_file: Option<String>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { t_end: 100.0, dt_factor: 0.25, samples: 200, tolerance: 1e-4, stability_factor: 100.0, chain_file: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelftestConfig {
    pub instances: usize,
    pub tolerance_scale: f64,
    /// Per-check tolerance replacing the built-in one.
    pub tolerances: BTreeMap<String, f64>,
    /// Restrict the run to these checks.
    pub only: Vec<String>,
}

impl Default for SelftestConfig {
    fn default() -> Self {
        SelftestConfig { instances: 100, tolerance_scale: 1.0, tolerances: BTreeMap::new(), only: Vec::new() }
    }
}

fn positive(name: &str, x: f64) -> Result<(), CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be positive and finite, got {x}")))
    }
}

impl ExperimentConfig {
    /// Parses a config file. A run manifest is accepted too: its `config`
    /// member is used.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| CliError::Config(format!("config parse error: {e}")))?;
        let value = match value.get("config") {
            Some(c) if value.get("command").is_some() => c.clone(),
            _ => value,
        };
        serde_json::from_value(value).map_err(|e| CliError::Config(format!("config parse error: {e}")))
    }

    pub fn validate_model(&self) -> Result<(), CliError> {
        let m = &self.model;
        if m.omega.is_empty() {
            return Err(CliError::Config("model.omega must be non-empty".into()));
        }
        if m.omega.iter().any(|w| !w.is_finite()) {
            return Err(CliError::Config("model.omega must be finite".into()));
        }
        positive("model.epsilon", m.epsilon)?;
        positive("model.r", m.r)?;
        positive("model.s", m.s)?;
        if !(m.a >= 0.0 && m.p >= 0.0 && m.m >= 0.0) {
            return Err(CliError::Config("model.a, model.p and model.m must be non-negative".into()));
        }
        if m.J < 2 {
            return Err(CliError::Config("model.J must be at least 2".into()));
        }
        if m.K_cap == 0 {
            return Err(CliError::Config("model.K_cap must be positive".into()));
        }
        let s = &self.schedule;
        positive("schedule.gamma0", s.gamma0)?;
        positive("schedule.sigma_total", s.sigma_total)?;
        positive("schedule.c_star", s.c_star)?;
        positive("schedule.flow_factor", s.flow_factor)?;
        positive("schedule.quad_tol", s.quad_tol)?;
        if !(s.kappa > 1.0) {
            return Err(CliError::Config("schedule.kappa must exceed 1".into()));
        }
        if !(s.stop_tol >= 0.0) {
            return Err(CliError::Config("schedule.stop_tol must be non-negative".into()));
        }
        if let Some(r) = s.rho0 {
            positive("schedule.rho0", r)?;
        } else if m.a == 0.0 {
            return Err(CliError::Config("schedule.rho0 is required when model.a = 0".into()));
        }
        if let Some(g) = s.grid {
            if g % 2 == 0 || g < 2 * m.K_cap + 1 {
                return Err(CliError::Config(format!("schedule.grid must be odd and at least 2K_cap + 1, got {g}")));
            }
        }
        Ok(())
    }

    pub fn schedule_params(&self) -> ScheduleParams {
        let m = &self.model;
        let s = &self.schedule;
        ScheduleParams {
            gamma0: s.gamma0,
            rho0: s.rho0.unwrap_or(2.0 * m.a),
            r0: m.r,
            s0: m.s,
            sigma_total: s.sigma_total,
            kappa: s.kappa,
            c_star: s.c_star,
            eps0: m.epsilon,
            af: self.approximation.clone(),
            nu_max: s.nu_max,
            k0: s.k0.unwrap_or(m.K_cap),
            k_cap: m.K_cap,
        }
    }

    pub fn step_options(&self) -> StepOptions {
        let mut o = StepOptions::for_capacity(self.model.K_cap);
        if let Some(g) = self.schedule.grid {
            o.grid = g;
        }
        o.quad_tol = self.schedule.quad_tol;
        o.flow_factor = self.schedule.flow_factor;
        o
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// docs/config-defaults.json is generated from the defaults; set
    /// KAMREDUCE_BLESS=1 to regenerate it.
    #[test]
    fn reference_page_matches_defaults() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/config-defaults.json");
        let text = serde_json::to_string_pretty(&ExperimentConfig::default()).unwrap() + "\n";
        if std::env::var_os("KAMREDUCE_BLESS").is_some() {
            std::fs::create_dir_all(std::path::Path::new(path).parent().unwrap()).unwrap();
            std::fs::write(path, &text).unwrap();
        }
        assert_eq!(std::fs::read_to_string(path).unwrap(), text);
    }

    #[test]
    fn empty_document_uses_defaults() {
        let c = ExperimentConfig::parse("{}").unwrap();
        assert_eq!(c.model.J, 32);
        assert_eq!(c.approximation, ApproximationFunction::Power { alpha: 0.5 });
        c.validate_model().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(ExperimentConfig::parse(r#"{"modle": {}}"#), Err(CliError::Config(_))));
    }

    #[test]
    fn manifest_config_is_unwrapped() {
        let c = ExperimentConfig::parse(r#"{"command": "reduce", "config": {"seed": 7}}"#).unwrap();
        assert_eq!(c.seed, 7);
    }
}
