//! Batch execution and the log-consuming tools behind the CLI: the
//! fixed-robot goal-direction analysis and trajectory replay.

use std::io;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::controller::{param_count, ControllerParams, SensorMode};
use crate::env::{EnvInstance, EnvSchedule};
use crate::evo::{env_at_generation, run_experiment, ExpError};
use crate::learn::PARAM_BOUND;
use crate::morphology::MorphGenome;
use crate::rng::{derive_seed, stream};
use crate::runlog::{read_evals, read_robots, LogError};
use crate::sim::{run_episode, EpisodeError};

/// Stream tags used by the tools, disjoint from the experiment's own tags
/// by living under per-tool roots.
const TAG_RUN: u64 = 10;
const TAG_FIXED_MORPH: u64 = 11;
const TAG_FIXED_PARAMS: u64 = 12;

/// Execute `cfg.runs` independent runs into `out/run_NNN`, each with a
/// seed derived from the master seed. Returns the run directories.
pub fn run_batch(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, ExpError> {
    cfg.validate()?;
    let mut dirs = Vec::with_capacity(cfg.runs);
    for r in 0..cfg.runs {
        let run_seed = derive_seed(cfg.seed, &[TAG_RUN, r as u64]);
        let dir = out.join(format!("run_{r:03}"));
        log::info!("run {r}: seed {run_seed} -> {}", dir.display());
        run_experiment(cfg, run_seed, Some(&dir), false)?;
        dirs.push(dir);
    }
    Ok(dirs)
}

/// One fixed (morphology, parameters) pair evaluated under both goals.
#[derive(Clone, Debug, Serialize)]
pub struct FixedPair {
    pub pair: u32,
    pub morph: String,
    pub f_left: f64,
    pub f_right: f64,
}

/// Evaluate `n_morphs` random morphologies x `n_params` random parameter
/// vectors on flat ground under both goal directions. Rows are sorted by
/// decreasing leftward fitness; without a direction sensor the two
/// fitnesses are exact negations of each other.
pub fn fixed_robot(
    cfg: &ExperimentConfig,
    n_morphs: usize,
    n_params: usize,
    seed: u64,
) -> Result<Vec<FixedPair>, EpisodeError> {
    let sensor = match cfg.schedule {
        EnvSchedule::Bidirectional { sensor } => sensor,
        _ => SensorMode::None,
    };
    let d = param_count(sensor);
    let env = |goal_sign: f64| EnvInstance {
        terrain: None,
        goal_sign,
        sensor,
    };

    let mut rows = Vec::with_capacity(n_morphs * n_params);
    for m in 0..n_morphs {
        let mut morph_rng = stream(seed, &[TAG_FIXED_MORPH, m as u64]);
        let morph = MorphGenome::random_init(&mut morph_rng);
        for p in 0..n_params {
            let mut theta_rng = stream(seed, &[TAG_FIXED_PARAMS, m as u64, p as u64]);
            let theta: Vec<f64> = (0..d)
                .map(|_| theta_rng.gen_range(-PARAM_BOUND..=PARAM_BOUND))
                .collect();
            let params = ControllerParams::new(sensor, theta)?;
            let f_left =
                run_episode(&morph, &params, &env(-1.0), cfg.episode_steps, &cfg.sim)?.fitness;
            let f_right =
                run_episode(&morph, &params, &env(1.0), cfg.episode_steps, &cfg.sim)?.fitness;
            rows.push(FixedPair {
                pair: (m * n_params + p) as u32,
                morph: morph.to_string(),
                f_left,
                f_right,
            });
        }
    }
    rows.sort_by(|a, b| b.f_left.partial_cmp(&a.f_left).unwrap().then(a.pair.cmp(&b.pair)));
    Ok(rows)
}

pub fn write_fixed_robot_csv<W: io::Write>(rows: &[FixedPair], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["pair", "morph", "f_left", "f_right"])?;
    for r in rows {
        w.write_record([
            r.pair.to_string(),
            r.morph.clone(),
            r.f_left.to_string(),
            r.f_right.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("cannot read run config: {0}")]
    Config(#[from] crate::config::ConfigLoadError),
    #[error("no record for robot {robot} eval {index}")]
    RecordNotFound { robot: u64, index: usize },
    #[error("record for robot {robot} eval {index} stores no parameter vector")]
    MissingTheta { robot: u64, index: usize },
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
    #[error(transparent)]
    Episode(#[from] EpisodeError),
    #[error("malformed morphology in log: {0}")]
    Morph(#[from] crate::morphology::MorphError),
}

/// A re-simulated evaluation. For BO records the replayed fitness equals
/// the stored one exactly; for RL snapshots it can differ because
/// within-episode updates changed the behavior after the snapshot, which
/// is why both values are reported.
#[derive(Clone, Debug, Serialize)]
pub struct Replayed {
    pub robot: u64,
    pub index: usize,
    pub stored_f: f64,
    pub replayed_f: f64,
    pub com_x: Vec<f64>,
}

/// Re-simulate one recorded evaluation from a run directory. The
/// environment is reconstructed by replaying the schedule up to the
/// robot's generation with the run's own seed.
pub fn replay(run_dir: &Path, robot: u64, index: usize) -> Result<Replayed, ReplayError> {
    let cfg = ExperimentConfig::load(&run_dir.join("config.json"))?;
    let robots = read_robots(run_dir)?;
    let info = robots
        .iter()
        .find(|r| r.id == robot)
        .ok_or(ReplayError::RecordNotFound { robot, index })?;
    let record = read_evals(run_dir)?
        .into_iter()
        .find(|e| e.robot == robot && e.index == index)
        .ok_or(ReplayError::RecordNotFound { robot, index })?;
    let theta = record
        .theta
        .ok_or(ReplayError::MissingTheta { robot, index })?;

    let morph: MorphGenome = info.morph.parse()?;
    let env = env_at_generation(&cfg, cfg.seed, info.generation)?;
    let params = ControllerParams::new(env.sensor, theta).map_err(EpisodeError::from)?;
    let result = run_episode(&morph, &params, &env, cfg.episode_steps, &cfg.sim)?;
    Ok(Replayed {
        robot,
        index,
        stored_f: record.f,
        replayed_f: result.fitness,
        com_x: result.com_x,
    })
}
