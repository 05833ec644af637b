//! Controller-driven locomotion episodes.
//!
//! At each control step the controller instances at all actuator voxels read
//! their local observations and produce the action vector for the step.
//! Fitness is the goal-signed x displacement of the center of mass over the
//! whole episode; the per-step reward stream telescopes to the same total.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{assemble_observation, ControllerError, ControllerParams};
use crate::env::EnvInstance;
use crate::morphology::MorphGenome;

use super::{Sim, SimConfig, SimError};

/// Default episode length in control steps.
pub const EPISODE_STEPS: u32 = 500;

#[derive(Debug, Error, PartialEq)]
pub enum EpisodeError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
}

#[derive(Clone, Debug)]
pub struct EpisodeResult {
    /// goal_sign * (com_x at the end - com_x at the start).
    pub fitness: f64,
    /// Center-of-mass x at every step boundary; steps + 1 entries.
    pub com_x: Vec<f64>,
    /// Goal-signed per-step displacement; sums to fitness up to rounding.
    pub rewards: Vec<f64>,
}

impl EpisodeResult {
    pub fn summary(&self, include_com: bool) -> TrajectorySummary {
        TrajectorySummary {
            fitness: self.fitness,
            com_x: include_com.then(|| self.com_x.clone()),
        }
    }
}

/// JSON-serializable episode record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub fitness: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub com_x: Option<Vec<f64>>,
}

/// Runs one episode of `steps` control steps. The controller's own sensor
/// mode decides whether it reads the goal direction; the environment only
/// supplies the sign, so a sensorless controller produces an identical
/// trajectory under both goals.
pub fn run_episode(
    genome: &MorphGenome,
    params: &ControllerParams,
    env: &EnvInstance,
    steps: u32,
    config: &SimConfig,
) -> Result<EpisodeResult, EpisodeError> {
    let mut sim = Sim::new(genome, env, config)?;
    let actuators: Vec<(usize, usize)> = genome.actuators().map(|(r, c, _)| (r, c)).collect();
    let goal = env.goal_sign;

    let mut com_x = Vec::with_capacity(steps as usize + 1);
    let mut rewards = Vec::with_capacity(steps as usize);
    com_x.push(sim.com_x());

    let mut actions = vec![0.0; actuators.len()];
    for k in 0..steps {
        let obs = sim.observe();
        for (slot, &(r, c)) in actuators.iter().enumerate() {
            let input = assemble_observation(&obs, r, c, k, goal, params.sensor());
            actions[slot] = params.forward(&input)?;
        }
        sim.step(&actions)?;
        let com = sim.com_x();
        rewards.push(goal * (com - com_x[k as usize]));
        com_x.push(com);
    }

    let fitness = goal * (com_x[steps as usize] - com_x[0]);
    Ok(EpisodeResult {
        fitness,
        com_x,
        rewards,
    })
}
