//! Experiment configuration: one JSON file describes a full run. Every
//! field has a default, so `{}` is a valid config; unknown keys are
//! rejected to catch typos.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::EnvSchedule;
use crate::learn::bo::BoConfig;
use crate::learn::rl::RlConfig;
use crate::learn::LearnerKind;
use crate::sim::SimConfig;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inheritance {
    /// Offspring inherit the mutated pre-learning genotype.
    Darwinian,
    /// Offspring inherit the parent's learned parameters.
    Lamarckian,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every stream in a run derives from it.
    pub seed: u64,
    /// Independent repetitions, each with a derived seed.
    pub runs: usize,
    pub generations: usize,
    pub population_size: usize,
    pub offspring_count: usize,
    pub tournament_size: usize,
    /// Std of the Gaussian brain-genotype mutation.
    pub sigma_mut: f64,
    pub inheritance: Inheritance,
    pub learner: LearnerKind,
    pub schedule: EnvSchedule,
    /// Control steps per episode / objective evaluation.
    pub episode_steps: u32,
    pub bo: BoConfig,
    pub rl: RlConfig,
    pub sim: SimConfig,
    /// Store every RL episode's actor snapshot in the log instead of only
    /// the best episode's.
    pub log_all_snapshots: bool,
}

impl Default for ExperimentConfig {
    fn default() -> ExperimentConfig {
        ExperimentConfig {
            seed: 1,
            runs: 1,
            generations: 100,
            population_size: 100,
            offspring_count: 100,
            tournament_size: 4,
            sigma_mut: 0.1,
            inheritance: Inheritance::Lamarckian,
            learner: LearnerKind::Bo,
            schedule: EnvSchedule::Rugged { c: 0.2 },
            episode_steps: crate::sim::EPISODE_STEPS,
            bo: BoConfig::default(),
            rl: RlConfig::default(),
            sim: SimConfig::default(),
            log_all_snapshots: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

#[derive(Debug, Error)]
pub enum ConfigLoadError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] ConfigError),
}

fn require(ok: bool, field: &'static str, reason: &str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::Invalid {
            field,
            reason: reason.to_string(),
        })
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigLoadError> {
        let text = fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        require(self.runs >= 1, "runs", "must be at least 1")?;
        require(self.generations >= 1, "generations", "must be at least 1")?;
        require(
            self.population_size >= 1,
            "population_size",
            "must be at least 1",
        )?;
        require(
            self.offspring_count >= 1,
            "offspring_count",
            "must be at least 1",
        )?;
        require(
            self.tournament_size >= 1,
            "tournament_size",
            "must be at least 1",
        )?;
        require(
            self.sigma_mut.is_finite() && self.sigma_mut >= 0.0,
            "sigma_mut",
            "must be finite and non-negative",
        )?;
        require(self.episode_steps >= 1, "episode_steps", "must be at least 1")?;

        require(self.bo.budget >= 1, "bo.budget", "must be at least 1")?;
        require(
            self.bo.kappa.is_finite() && self.bo.kappa >= 0.0,
            "bo.kappa",
            "must be finite and non-negative",
        )?;
        require(self.bo.restarts >= 1, "bo.restarts", "must be at least 1")?;

        require(self.rl.episodes >= 1, "rl.episodes", "must be at least 1")?;
        require(
            self.rl.update_every >= 1,
            "rl.update_every",
            "must be at least 1",
        )?;
        require(self.rl.batch_size >= 1, "rl.batch_size", "must be at least 1")?;
        require(
            self.rl.replay_capacity >= self.rl.batch_size,
            "rl.replay_capacity",
            "must hold at least one batch",
        )?;
        require(
            (0.0..=1.0).contains(&self.rl.gamma),
            "rl.gamma",
            "must lie in [0, 1]",
        )?;
        require(
            (0.0..=1.0).contains(&self.rl.tau),
            "rl.tau",
            "must lie in [0, 1]",
        )?;
        require(
            self.rl.actor_lr.is_finite() && self.rl.actor_lr > 0.0,
            "rl.actor_lr",
            "must be finite and positive",
        )?;
        require(
            self.rl.critic_lr.is_finite() && self.rl.critic_lr > 0.0,
            "rl.critic_lr",
            "must be finite and positive",
        )?;
        require(
            self.rl.noise_std.is_finite() && self.rl.noise_std >= 0.0,
            "rl.noise_std",
            "must be finite and non-negative",
        )?;

        if let EnvSchedule::Rugged { c } = self.schedule {
            require(
                (0.0..=1.0).contains(&c),
                "schedule.c",
                "change fraction must lie in [0, 1]",
            )?;
        }

        require(
            self.sim.dt.is_finite() && self.sim.dt > 0.0,
            "sim.dt",
            "must be finite and positive",
        )?;
        require(self.sim.substeps >= 1, "sim.substeps", "must be at least 1")?;
        require(
            self.sim.voxel_size.is_finite() && self.sim.voxel_size > 0.0,
            "sim.voxel_size",
            "must be finite and positive",
        )?;
        require(
            self.sim.voxel_mass.is_finite() && self.sim.voxel_mass > 0.0,
            "sim.voxel_mass",
            "must be finite and positive",
        )?;
        require(
            self.sim.stiffness_soft.is_finite() && self.sim.stiffness_soft > 0.0,
            "sim.stiffness_soft",
            "must be finite and positive",
        )?;
        require(
            self.sim.stiffness_rigid.is_finite() && self.sim.stiffness_rigid > 0.0,
            "sim.stiffness_rigid",
            "must be finite and positive",
        )?;
        require(
            self.sim.gravity.is_finite() && self.sim.gravity >= 0.0,
            "sim.gravity",
            "must be finite and non-negative",
        )?;
        require(
            self.sim.friction.is_finite() && self.sim.friction >= 0.0,
            "sim.friction",
            "must be finite and non-negative",
        )?;
        require(
            self.sim.damping.is_finite() && self.sim.damping >= 0.0,
            "sim.damping",
            "must be finite and non-negative",
        )?;
        require(
            self.sim.velocity_damping.is_finite() && self.sim.velocity_damping >= 0.0,
            "sim.velocity_damping",
            "must be finite and non-negative",
        )?;
        Ok(())
    }
}
