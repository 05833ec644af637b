//! The outer evolutionary loop: tournament selection, reproduction under
//! Darwinian or Lamarckian inheritance, parallel lifetime learning, and
//! full generational replacement in an environment that may change between
//! generations.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, Inheritance};
use crate::controller::{param_count, ControllerParams};
use crate::env::{env_for_generation, EnvError, EnvInstance};
use crate::learn::bo::run_bo_learning;
use crate::learn::rl::run_rl_learning;
use crate::learn::{LearnerKind, LearnerRecord, PARAM_BOUND};
use crate::morphology::MorphGenome;
use crate::rng::stream;
use crate::runlog::{generation_stats, GenStats, LogError, RunLog};
use crate::sim::run_episode;

/// Stream tags. Every random decision in a run draws from a stream derived
/// from (master seed, tag, indices), so evaluation order and thread
/// scheduling cannot change any outcome.
const TAG_ENV: u64 = 1;
const TAG_INIT: u64 = 2;
const TAG_REPRO: u64 = 3;
const TAG_EVAL: u64 = 4;
/// Multiplier giving each generation its own id block.
const ID_BLOCK: u64 = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct Individual {
    pub id: u64,
    pub parent: Option<u64>,
    pub generation: u32,
    pub morph: MorphGenome,
    /// Germ-line controller parameters. Under Lamarckian inheritance this
    /// is bookkeeping only; learning results drive reproduction.
    pub genotype: Vec<f64>,
    pub record: LearnerRecord,
    pub fitness: f64,
    /// Fitness of the inherited/seed controller before any learning.
    pub before_fitness: f64,
}

/// Reproduction output: everything an evaluation needs, no learning done
/// yet.
#[derive(Clone, Debug)]
struct Offspring {
    id: u64,
    parent: Option<u64>,
    morph: MorphGenome,
    genotype: Vec<f64>,
    /// BO seed vectors with their inheritance flags, or the RL initial
    /// actor.
    seeds: SeedSpec,
}

#[derive(Clone, Debug)]
enum SeedSpec {
    Bo {
        fixed: Vec<(Vec<f64>, bool)>,
        /// Random box samples drawn at evaluation time to reach the
        /// configured seed count.
        n_random: usize,
    },
    Rl {
        actor: Vec<f64>,
        inherited: bool,
    },
}

#[derive(Debug, Error)]
pub enum ExpError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Log(#[from] LogError),
}

/// Draw `k` tournament entrants with replacement; highest fitness wins,
/// ties go to the lower id.
pub fn tournament_select<'a>(
    population: &'a [Individual],
    k: usize,
    rng: &mut impl Rng,
) -> &'a Individual {
    let mut best = &population[rng.gen_range(0..population.len())];
    for _ in 1..k {
        let contender = &population[rng.gen_range(0..population.len())];
        if contender.fitness > best.fitness
            || (contender.fitness == best.fitness && contender.id < best.id)
        {
            best = contender;
        }
    }
    best
}

/// Additive Gaussian perturbation, one independent draw per coordinate,
/// no clipping.
pub fn mutate_brain_genotype(parent: &[f64], sigma: f64, rng: &mut impl Rng) -> Vec<f64> {
    parent
        .iter()
        .map(|v| {
            let noise: f64 = rng.sample(StandardNormal);
            v + sigma * noise
        })
        .collect()
}

fn random_genotype(d: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..d)
        .map(|_| rng.gen_range(-PARAM_BOUND..=PARAM_BOUND))
        .collect()
}

fn reproduce(
    parent: &Individual,
    id: u64,
    cfg: &ExperimentConfig,
    rng: &mut impl Rng,
) -> Offspring {
    let morph = parent.morph.mutate(rng);
    let genotype = mutate_brain_genotype(&parent.genotype, cfg.sigma_mut, rng);
    let seeds = match (cfg.learner, cfg.inheritance) {
        (LearnerKind::Bo, Inheritance::Darwinian) => SeedSpec::Bo {
            fixed: vec![(genotype.clone(), true)],
            n_random: cfg.bo.n_seed_random,
        },
        (LearnerKind::Bo, Inheritance::Lamarckian) => {
            let bequest: Vec<(Vec<f64>, bool)> = parent
                .record
                .top_n(cfg.bo.n_seeds())
                .into_iter()
                .map(|e| (e.theta.clone(), true))
                .collect();
            let n_random = cfg.bo.n_seeds() - bequest.len();
            SeedSpec::Bo {
                fixed: bequest,
                n_random,
            }
        }
        (LearnerKind::Rl, Inheritance::Darwinian) => SeedSpec::Rl {
            actor: genotype.clone(),
            inherited: true,
        },
        (LearnerKind::Rl, Inheritance::Lamarckian) => SeedSpec::Rl {
            actor: parent
                .record
                .best()
                .map(|e| e.theta.clone())
                .unwrap_or_else(|| genotype.clone()),
            inherited: true,
        },
    };
    Offspring {
        id,
        parent: Some(parent.id),
        morph,
        genotype,
        seeds,
    }
}

fn fresh_individual(id: u64, d: usize, cfg: &ExperimentConfig, rng: &mut impl Rng) -> Offspring {
    let morph = MorphGenome::random_init(rng);
    let genotype = random_genotype(d, rng);
    let seeds = match cfg.learner {
        LearnerKind::Bo => SeedSpec::Bo {
            fixed: vec![(genotype.clone(), false)],
            n_random: cfg.bo.n_seed_random,
        },
        LearnerKind::Rl => SeedSpec::Rl {
            actor: genotype.clone(),
            inherited: false,
        },
    };
    Offspring {
        id,
        parent: None,
        morph,
        genotype,
        seeds,
    }
}

/// Lifetime evaluation: run the configured learner and measure the
/// before-learning fitness. Everything random comes from `rng`, the
/// individual's private stream.
fn evaluate(
    off: Offspring,
    generation: u32,
    env: &EnvInstance,
    cfg: &ExperimentConfig,
    mut rng: ChaCha8Rng,
) -> Individual {
    let sensor = env.sensor;
    let d = param_count(sensor);

    let (record, before_fitness) = match off.seeds {
        SeedSpec::Bo { fixed, n_random } => {
            let mut seeds = fixed;
            for _ in 0..n_random {
                seeds.push((random_genotype(d, &mut rng), false));
            }
            let objective = |theta: &[f64]| {
                let params = ControllerParams::new(sensor, theta.to_vec())?;
                Ok::<f64, crate::sim::EpisodeError>(
                    run_episode(&off.morph, &params, env, cfg.episode_steps, &cfg.sim)?.fitness,
                )
            };
            let record = run_bo_learning(objective, &seeds, &cfg.bo, &mut rng);
            let n_seeds = seeds.len().min(cfg.bo.budget);
            let before = record.best_of_first(n_seeds);
            (record, before)
        }
        SeedSpec::Rl { actor, inherited } => {
            let before = ControllerParams::new(sensor, actor.clone())
                .map_err(crate::sim::EpisodeError::from)
                .and_then(|params| {
                    Ok(run_episode(&off.morph, &params, env, cfg.episode_steps, &cfg.sim)?.fitness)
                })
                .unwrap_or(f64::NEG_INFINITY);
            let record = match ControllerParams::new(sensor, actor) {
                Ok(params) => run_rl_learning(
                    &off.morph,
                    env,
                    &params,
                    &cfg.rl,
                    &cfg.sim,
                    cfg.episode_steps,
                    inherited,
                    &mut rng,
                ),
                Err(e) => {
                    log::warn!("actor construction failed: {e}");
                    let mut rec = LearnerRecord::new(LearnerKind::Rl);
                    rec.aborted = true;
                    rec
                }
            };
            (record, before)
        }
    };

    Individual {
        id: off.id,
        parent: off.parent,
        generation,
        morph: off.morph,
        genotype: off.genotype,
        fitness: record.fitness(),
        before_fitness,
        record,
    }
}

/// Environment sequence up to and including generation `g`. Rugged
/// terrains thread through every intermediate generation, so replaying the
/// sequence is the only way to reconstruct a later instance.
pub fn env_at_generation(
    cfg: &ExperimentConfig,
    seed: u64,
    g: u32,
) -> Result<EnvInstance, EnvError> {
    let mut env = None;
    for gen in 0..=g {
        let mut rng = stream(seed, &[TAG_ENV, gen as u64]);
        env = Some(env_for_generation(
            &cfg.schedule,
            gen,
            env.as_ref(),
            &mut rng,
        )?);
    }
    Ok(env.unwrap())
}

pub struct Experiment<'a> {
    cfg: &'a ExperimentConfig,
    seed: u64,
    generation: u32,
    env: Option<EnvInstance>,
    population: Vec<Individual>,
}

impl<'a> Experiment<'a> {
    pub fn new(cfg: &'a ExperimentConfig, seed: u64) -> Result<Experiment<'a>, ExpError> {
        cfg.validate()?;
        Ok(Experiment {
            cfg,
            seed,
            generation: 0,
            env: None,
            population: Vec::new(),
        })
    }

    pub fn population(&self) -> &[Individual] {
        &self.population
    }

    pub fn env(&self) -> Option<&EnvInstance> {
        self.env.as_ref()
    }

    pub fn generation(&self) -> u32 {
        self.generation
    }

    /// Advance one generation: build the environment, produce the cohort
    /// (fresh at g = 0, offspring later), evaluate it in parallel, and
    /// replace the population.
    pub fn step(&mut self) -> Result<&[Individual], ExpError> {
        let g = self.generation;
        let cfg = self.cfg;
        let mut env_rng = stream(self.seed, &[TAG_ENV, g as u64]);
        let env = env_for_generation(&cfg.schedule, g, self.env.as_ref(), &mut env_rng)?;
        let d = param_count(env.sensor);

        let cohort: Vec<Offspring> = if g == 0 {
            (0..cfg.population_size)
                .map(|i| {
                    let mut rng = stream(self.seed, &[TAG_INIT, i as u64]);
                    fresh_individual(i as u64, d, cfg, &mut rng)
                })
                .collect()
        } else {
            let mut rng = stream(self.seed, &[TAG_REPRO, g as u64]);
            (0..cfg.offspring_count)
                .map(|i| {
                    let parent = tournament_select(&self.population, cfg.tournament_size, &mut rng);
                    reproduce(parent, g as u64 * ID_BLOCK + i as u64, cfg, &mut rng)
                })
                .collect()
        };

        // Each offspring owns a pre-derived stream; rayon's collect keeps
        // index order, so scheduling cannot reorder results.
        self.population = cohort
            .into_par_iter()
            .enumerate()
            .map(|(i, off)| {
                let rng = stream(self.seed, &[TAG_EVAL, g as u64, i as u64]);
                evaluate(off, g, &env, cfg, rng)
            })
            .collect();
        self.env = Some(env);
        self.generation += 1;
        Ok(&self.population)
    }
}

pub struct RunOutcome {
    pub stats: Vec<GenStats>,
    /// Full populations, kept only on request; large runs stream to the
    /// log instead.
    pub populations: Option<Vec<Vec<Individual>>>,
}

/// Drive a whole run: `generations` steps, statistics per generation,
/// optionally logged to a directory.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    seed: u64,
    log_dir: Option<&Path>,
    keep_populations: bool,
) -> Result<RunOutcome, ExpError> {
    let mut log = match log_dir {
        Some(dir) => Some(RunLog::create(dir, cfg, seed)?),
        None => None,
    };
    let mut exp = Experiment::new(cfg, seed)?;
    let mut stats = Vec::with_capacity(cfg.generations);
    let mut populations = keep_populations.then(Vec::new);
    for g in 0..cfg.generations {
        let pop = exp.step()?;
        let s = generation_stats(g as u32, pop);
        if let Some(log) = log.as_mut() {
            log.record_generation(&s, pop)?;
        }
        stats.push(s);
        if let Some(ps) = populations.as_mut() {
            ps.push(pop.to_vec());
        }
    }
    if let Some(log) = log {
        log.finish()?;
    }
    Ok(RunOutcome { stats, populations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::SensorMode;
    use crate::env::EnvSchedule;
    use crate::learn::EvalEntry;
    use rand::SeedableRng;

    fn dummy(id: u64, fitness: f64) -> Individual {
        Individual {
            id,
            parent: None,
            generation: 0,
            morph: "HV...SSS.................".parse().unwrap(),
            genotype: vec![0.0],
            record: LearnerRecord::new(LearnerKind::Bo),
            fitness,
            before_fitness: 0.0,
        }
    }

    fn desk_cfg() -> ExperimentConfig {
        let mut cfg = ExperimentConfig {
            population_size: 4,
            offspring_count: 4,
            generations: 2,
            episode_steps: 20,
            schedule: EnvSchedule::StaticFlat,
            ..ExperimentConfig::default()
        };
        cfg.bo.budget = 4;
        cfg.bo.n_seed_random = 2;
        cfg.bo.restarts = 2;
        cfg
    }

    #[test]
    fn tournament_of_one_returns_it() {
        let pop = vec![dummy(0, 1.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(tournament_select(&pop, 4, &mut rng).id, 0);
    }

    #[test]
    fn tournament_prefers_higher_fitness() {
        let pop: Vec<Individual> = (0..4).map(|i| dummy(i, i as f64)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // With k = 50 draws, index 3 is in the sample with overwhelming
        // probability.
        for _ in 0..20 {
            assert_eq!(tournament_select(&pop, 50, &mut rng).id, 3);
        }
    }

    #[test]
    fn tournament_ties_break_to_lower_id() {
        // Sampling is with replacement, so a small tournament can miss
        // id 0 entirely; k = 50 over 3 ids makes every id present.
        let pop: Vec<Individual> = (0..3).map(|i| dummy(i, 7.0)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            assert_eq!(tournament_select(&pop, 50, &mut rng).id, 0);
        }
    }

    #[test]
    fn zero_sigma_mutation_is_identity() {
        let parent: Vec<f64> = (0..50).map(|i| i as f64 * 0.01).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert_eq!(mutate_brain_genotype(&parent, 0.0, &mut rng), parent);
    }

    #[test]
    fn mutation_std_is_calibrated() {
        let parent = vec![0.0; 100_000];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let child = mutate_brain_genotype(&parent, 0.1, &mut rng);
        let var: f64 = child.iter().map(|v| v * v).sum::<f64>() / child.len() as f64;
        let std = var.sqrt();
        assert!((0.099..=0.101).contains(&std), "std = {std}");
    }

    #[test]
    fn lamarckian_bo_seeds_are_the_parents_best() {
        let mut parent = dummy(3, 9.0);
        parent.record.entries = (0..6)
            .map(|i| EvalEntry {
                index: i,
                theta: vec![i as f64],
                f: [1.0, 5.0, 2.0, 5.0, 0.0, 4.0][i],
                inherited: false,
            })
            .collect();
        let mut cfg = desk_cfg();
        cfg.inheritance = Inheritance::Lamarckian;
        cfg.bo.n_seed_random = 2; // 3 seeds total
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let off = reproduce(&parent, 100, &cfg, &mut rng);
        match off.seeds {
            SeedSpec::Bo { fixed, n_random } => {
                let got: Vec<f64> = fixed.iter().map(|(t, _)| t[0]).collect();
                assert_eq!(got, vec![1.0, 3.0, 5.0]); // f = 5, 5 (tie: earlier first), 4
                assert!(fixed.iter().all(|(_, inh)| *inh));
                assert_eq!(n_random, 0);
            }
            SeedSpec::Rl { .. } => panic!("expected BO seeds"),
        }
        assert_eq!(off.parent, Some(3));
    }

    #[test]
    fn darwinian_bo_seeds_the_mutated_genotype() {
        let parent = dummy(1, 0.0);
        let mut cfg = desk_cfg();
        cfg.inheritance = Inheritance::Darwinian;
        cfg.sigma_mut = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let off = reproduce(&parent, 10, &cfg, &mut rng);
        match off.seeds {
            SeedSpec::Bo { fixed, n_random } => {
                assert_eq!(fixed.len(), 1);
                assert_eq!(fixed[0].0, parent.genotype); // sigma 0: exact copy
                assert!(fixed[0].1);
                assert_eq!(n_random, cfg.bo.n_seed_random);
            }
            SeedSpec::Rl { .. } => panic!("expected BO seeds"),
        }
    }

    #[test]
    fn first_generation_is_fresh_and_sized() {
        let cfg = desk_cfg();
        let mut exp = Experiment::new(&cfg, 11).unwrap();
        let pop = exp.step().unwrap();
        assert_eq!(pop.len(), 4);
        assert!(pop.iter().all(|ind| ind.parent.is_none()));
        assert!(pop.iter().all(|ind| ind.generation == 0));
        assert!(pop.iter().all(|ind| !ind.record.aborted));
        // Fresh individuals never carry inherited evaluations.
        assert!(pop
            .iter()
            .flat_map(|ind| &ind.record.entries)
            .all(|e| !e.inherited));
    }

    #[test]
    fn replacement_swaps_out_every_id() {
        let cfg = desk_cfg();
        let mut exp = Experiment::new(&cfg, 12).unwrap();
        let first: Vec<u64> = exp.step().unwrap().iter().map(|i| i.id).collect();
        let second: Vec<u64> = exp.step().unwrap().iter().map(|i| i.id).collect();
        assert!(first.iter().all(|id| !second.contains(id)));
        assert!(exp.population().iter().all(|i| i.parent.is_some()));
    }

    #[test]
    fn fitness_equals_best_record_entry() {
        let cfg = desk_cfg();
        let mut exp = Experiment::new(&cfg, 13).unwrap();
        exp.step().unwrap();
        exp.step().unwrap();
        for ind in exp.population() {
            assert_eq!(ind.fitness, ind.record.fitness());
            assert_eq!(ind.record.entries.len(), cfg.bo.budget);
        }
    }

    #[test]
    fn bidirectional_goal_alternates_by_generation() {
        let mut cfg = desk_cfg();
        cfg.schedule = EnvSchedule::Bidirectional {
            sensor: SensorMode::None,
        };
        let mut exp = Experiment::new(&cfg, 14).unwrap();
        exp.step().unwrap();
        assert_eq!(exp.env().unwrap().goal_sign, 1.0);
        exp.step().unwrap();
        assert_eq!(exp.env().unwrap().goal_sign, -1.0);
    }

    #[test]
    fn experiment_steps_are_deterministic() {
        let cfg = desk_cfg();
        let run = || {
            let mut exp = Experiment::new(&cfg, 15).unwrap();
            exp.step().unwrap();
            exp.step().unwrap();
            exp.population().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn run_experiment_reports_every_generation() {
        let cfg = desk_cfg();
        let out = run_experiment(&cfg, 20, None, true).unwrap();
        assert_eq!(out.stats.len(), cfg.generations);
        let pops = out.populations.unwrap();
        assert_eq!(pops.len(), cfg.generations);
        assert!(pops.iter().all(|p| p.len() == 4));
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("r0");
        run_experiment(&cfg, 20, Some(&dir), false).unwrap();
        for file in ["config.json", "generations.csv", "evals.jsonl", "lineage.csv", "robots.jsonl"] {
            assert!(dir.join(file).exists(), "{file}");
        }
    }

    #[test]
    fn env_at_generation_matches_the_experiment_thread() {
        let mut cfg = desk_cfg();
        cfg.schedule = EnvSchedule::Rugged { c: 0.3 };
        let mut exp = Experiment::new(&cfg, 16).unwrap();
        exp.step().unwrap();
        exp.step().unwrap();
        let replayed = env_at_generation(&cfg, 16, 1).unwrap();
        assert_eq!(exp.env(), Some(&replayed));
    }
}
