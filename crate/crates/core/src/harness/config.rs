use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::Hyperparams;
use crate::dp::DpGrid;
use crate::error::{Error, Result};
use crate::reward::RewardConfig;
use crate::shield::SafetyConfig;
use crate::sim::{SimConfig, TrafficMode};

/// Settings of the mixed-traffic flow experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    pub episode_len: usize,
    pub entry_period_s: f64,
    pub sigma: f64,
    /// Desired speed of manual vehicles (m/s).
    pub manual_desired_v: f64,
    pub penetrations: Vec<f64>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            episode_len: 120,
            entry_period_s: 2.0,
            sigma: 0.5,
            manual_desired_v: 16.0,
            penetrations: vec![0.0, 0.05, 0.10, 0.20],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n_scenarios: usize,
    pub out_dir: PathBuf,
    pub shield: bool,
    /// Entry periods (s) evaluated by `eval`, `dp-compare` and `plot-data`.
    pub densities: Vec<f64>,
    /// Band around the desired speed counted as "at desired speed" (m/s).
    pub desired_tolerance: f64,
    /// Scenarios per setting whose full trajectories are logged.
    pub trajectory_scenarios: usize,
    /// Compresses the exploration schedule into this many training steps.
    pub desk_budget: Option<u64>,
    pub sim: SimConfig,
    pub reward: RewardConfig,
    pub agent: Hyperparams,
    pub safety: SafetyConfig,
    pub dp: DpGrid,
    pub flow: FlowConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            n_scenarios: 100,
            out_dir: PathBuf::from("out"),
            shield: false,
            densities: vec![8.0, 4.0, 2.0, 1.0],
            desired_tolerance: 0.5,
            trajectory_scenarios: 3,
            desk_budget: None,
            sim: SimConfig::default(),
            reward: RewardConfig::default(),
            agent: Hyperparams::default(),
            safety: SafetyConfig::default(),
            dp: DpGrid::default(),
            flow: FlowConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Hyperparameters after applying the desk-scale budget, if any.
    pub fn hyperparams(&self) -> Hyperparams {
        match self.desk_budget {
            Some(budget) => {
                let desk = Hyperparams::desk_scale(budget);
                Hyperparams { lambda: desk.lambda, max_steps: desk.max_steps, ..self.agent }
            }
            None => self.agent,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_scenarios == 0 {
            return Err(Error::Config("n_scenarios must be at least 1".into()));
        }
        if self.densities.is_empty() || self.densities.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::Config("densities must be a non-empty list of positive entry periods".into()));
        }
        if !(self.desired_tolerance >= 0.0) {
            return Err(Error::Config("desired_tolerance must be non-negative".into()));
        }
        if self.desk_budget == Some(0) {
            return Err(Error::Config("desk_budget must be positive".into()));
        }
        if self.safety.d_max <= 0.0 || self.safety.min_gap < 0.0 || self.safety.collision_gap < 0.0 {
            return Err(Error::Config("safety.d_max must be positive and the safety gaps non-negative".into()));
        }
        if self.dp.horizon == 0 {
            return Err(Error::Config("dp.horizon must be at least 1".into()));
        }
        let f = &self.flow;
        if f.episode_len == 0 || !(f.entry_period_s > 0.0) || !(0.0..=1.0).contains(&f.sigma) {
            return Err(Error::Config("flow.episode_len, flow.entry_period_s and flow.sigma are out of range".into()));
        }
        if f.penetrations.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("flow.penetrations must lie in [0, 1]".into()));
        }
        self.sim.validate()?;
        self.reward.validate()?;
        self.hyperparams().validate()?;
        Ok(())
    }

    /// Simulator settings for one evaluation density.
    pub fn sim_at(&self, entry_period_s: f64) -> SimConfig {
        SimConfig { entry_period_s, ..self.sim.clone() }
    }

    /// Simulator settings of the traffic-flow experiment.
    pub fn flow_sim(&self) -> SimConfig {
        let mut kinds = self.sim.kind_mix.clone();
        for k in &mut kinds {
            k.desired_speed = self.flow.manual_desired_v;
        }
        SimConfig {
            mode: TrafficMode::CarFollowing,
            sigma: self.flow.sigma,
            episode_len: self.flow.episode_len,
            entry_period_s: self.flow.entry_period_s,
            kind_mix: kinds,
            ..self.sim.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = ExperimentConfig::from_toml("seed = 9\n[sim]\nentry_period_s = 4.0\n").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.sim.entry_period_s, 4.0);
        assert_eq!(cfg.reward, RewardConfig::default());
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = ExperimentConfig::from_toml("[reward]\nw9 = 1.0\n").unwrap_err().to_string();
        assert!(err.contains("w9"), "{err}");
        let err = ExperimentConfig::from_toml("sede = 1\n").unwrap_err().to_string();
        assert!(err.contains("sede"), "{err}");
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(ExperimentConfig::from_toml("n_scenarios = 0\n").is_err());
        assert!(ExperimentConfig::from_toml("[sim]\nsigma = 2.0\n").is_err());
        assert!(ExperimentConfig::from_toml("[flow]\npenetrations = [1.5]\n").is_err());
    }

    #[test]
    fn desk_budget_sets_schedule() {
        let cfg = ExperimentConfig { desk_budget: Some(1000), ..ExperimentConfig::default() };
        let hp = cfg.hyperparams();
        assert_eq!(hp.max_steps, 1000);
        assert!(crate::agent::epsilon_converged(1000, &hp));
    }
}
