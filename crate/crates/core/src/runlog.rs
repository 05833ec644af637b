//! Run log directory: resolved config, per-generation population
//! statistics, per-evaluation records, and lineage. Everything is written
//! deterministically so identical runs produce identical bytes.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::percentile;
use crate::config::ExperimentConfig;
use crate::evo::Individual;
use crate::learn::LearnerKind;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("log io: {0}")]
    Io(#[from] std::io::Error),
    #[error("log serialization: {0}")]
    Json(#[from] serde_json::Error),
    #[error("log csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Population fitness statistics of one generation, one row of
/// `generations.csv`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenStats {
    pub generation: u32,
    pub mean: f64,
    pub q25: f64,
    pub q75: f64,
    pub max: f64,
    pub min: f64,
    pub before_mean: f64,
}

pub fn generation_stats(generation: u32, pop: &[Individual]) -> GenStats {
    assert!(!pop.is_empty());
    let fs: Vec<f64> = pop.iter().map(|i| i.fitness).collect();
    let n = fs.len() as f64;
    GenStats {
        generation,
        mean: fs.iter().sum::<f64>() / n,
        q25: percentile(&fs, 25.0),
        q75: percentile(&fs, 75.0),
        max: fs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        min: fs.iter().cloned().fold(f64::INFINITY, f64::min),
        before_mean: pop.iter().map(|i| i.before_fitness).sum::<f64>() / n,
    }
}

/// One line of `evals.jsonl`. Theta is omitted for evaluations whose
/// vector is not stored (non-best RL episodes by default).
#[derive(Serialize)]
struct EvalLine<'a> {
    robot: u64,
    index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    theta: Option<&'a [f64]>,
    f: f64,
    inherited: bool,
}

#[derive(Clone, Debug, Deserialize)]
pub struct EvalRecord {
    pub robot: u64,
    pub index: usize,
    #[serde(default)]
    pub theta: Option<Vec<f64>>,
    pub f: f64,
    pub inherited: bool,
}

/// One line of `robots.jsonl`.
#[derive(Serialize)]
struct RobotLine<'a> {
    id: u64,
    parent: Option<u64>,
    generation: u32,
    morph: &'a str,
    fitness: f64,
    before_fitness: f64,
    aborted: bool,
}

#[derive(Clone, Debug, Deserialize)]
pub struct RobotRecord {
    pub id: u64,
    pub parent: Option<u64>,
    pub generation: u32,
    pub morph: String,
    pub fitness: f64,
    pub before_fitness: f64,
    pub aborted: bool,
}

pub struct RunLog {
    dir: PathBuf,
    generations: csv::Writer<File>,
    lineage: csv::Writer<File>,
    evals: BufWriter<File>,
    robots: BufWriter<File>,
    log_all_snapshots: bool,
}

impl RunLog {
    /// Create the directory and all log files, echoing the resolved config
    /// (with the seed this run actually uses) into `config.json`.
    pub fn create(dir: &Path, cfg: &ExperimentConfig, seed: u64) -> Result<RunLog, LogError> {
        fs::create_dir_all(dir)?;
        let mut resolved = cfg.clone();
        resolved.seed = seed;
        resolved.runs = 1;
        let mut config_json = serde_json::to_string_pretty(&resolved)?;
        config_json.push('\n');
        fs::write(dir.join("config.json"), config_json)?;

        let mut generations = csv::Writer::from_path(dir.join("generations.csv"))?;
        generations.write_record(crate::analysis::GENERATIONS_HEADER)?;
        let mut lineage = csv::Writer::from_path(dir.join("lineage.csv"))?;
        lineage.write_record(["id", "parent", "generation"])?;

        Ok(RunLog {
            dir: dir.to_path_buf(),
            generations,
            lineage,
            evals: BufWriter::new(File::create(dir.join("evals.jsonl"))?),
            robots: BufWriter::new(File::create(dir.join("robots.jsonl"))?),
            log_all_snapshots: cfg.log_all_snapshots,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn record_generation(
        &mut self,
        stats: &GenStats,
        pop: &[Individual],
    ) -> Result<(), LogError> {
        self.generations.write_record([
            stats.generation.to_string(),
            stats.mean.to_string(),
            stats.q25.to_string(),
            stats.q75.to_string(),
            stats.max.to_string(),
            stats.min.to_string(),
            stats.before_mean.to_string(),
        ])?;

        for ind in pop {
            self.lineage.write_record([
                ind.id.to_string(),
                ind.parent.map(|p| p.to_string()).unwrap_or_default(),
                ind.generation.to_string(),
            ])?;

            let morph = ind.morph.to_string();
            serde_json::to_writer(
                &mut self.robots,
                &RobotLine {
                    id: ind.id,
                    parent: ind.parent,
                    generation: ind.generation,
                    morph: &morph,
                    fitness: ind.fitness,
                    before_fitness: ind.before_fitness,
                    aborted: ind.record.aborted,
                },
            )?;
            self.robots.write_all(b"\n")?;

            let best_index = ind.record.best().map(|e| e.index);
            for e in &ind.record.entries {
                let store_theta = match ind.record.kind {
                    LearnerKind::Bo => true,
                    LearnerKind::Rl => self.log_all_snapshots || Some(e.index) == best_index,
                };
                serde_json::to_writer(
                    &mut self.evals,
                    &EvalLine {
                        robot: ind.id,
                        index: e.index,
                        theta: store_theta.then_some(e.theta.as_slice()),
                        f: e.f,
                        inherited: e.inherited,
                    },
                )?;
                self.evals.write_all(b"\n")?;
            }
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf, LogError> {
        self.generations.flush()?;
        self.lineage.flush()?;
        self.evals.flush()?;
        self.robots.flush()?;
        Ok(self.dir)
    }
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, LogError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

pub fn read_evals(dir: &Path) -> Result<Vec<EvalRecord>, LogError> {
    read_jsonl(&dir.join("evals.jsonl"))
}

pub fn read_robots(dir: &Path) -> Result<Vec<RobotRecord>, LogError> {
    read_jsonl(&dir.join("robots.jsonl"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::{EvalEntry, LearnerRecord};
    use crate::morphology::MorphGenome;

    fn individual(id: u64, kind: LearnerKind, fs: &[f64]) -> Individual {
        let mut record = LearnerRecord::new(kind);
        record.entries = fs
            .iter()
            .enumerate()
            .map(|(i, f)| EvalEntry {
                index: i,
                theta: vec![i as f64, *f],
                f: *f,
                inherited: i == 0,
            })
            .collect();
        Individual {
            id,
            parent: (id > 10).then(|| id - 10),
            generation: 1,
            morph: "HV...SSS.................".parse::<MorphGenome>().unwrap(),
            genotype: vec![0.0],
            fitness: record.fitness(),
            before_fitness: fs[0],
            record,
        }
    }

    #[test]
    fn stats_summarize_the_population() {
        let pop: Vec<Individual> = [1.0, 2.0, 3.0, 4.0]
            .iter()
            .enumerate()
            .map(|(i, f)| individual(i as u64, LearnerKind::Bo, &[*f]))
            .collect();
        let s = generation_stats(0, &pop);
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.q25, 1.75);
        assert_eq!(s.q75, 3.25);
        assert_eq!(s.max, 4.0);
        assert_eq!(s.min, 1.0);
        assert_eq!(s.before_mean, 2.5);
    }

    #[test]
    fn log_round_trips_and_hides_non_best_rl_thetas() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("run_000");
        let cfg = ExperimentConfig::default();
        let mut log = RunLog::create(&dir, &cfg, 99).unwrap();

        let pop = vec![
            individual(20, LearnerKind::Bo, &[0.5, 0.9]),
            individual(21, LearnerKind::Rl, &[0.1, 0.8, 0.3]),
        ];
        log.record_generation(&generation_stats(1, &pop), &pop).unwrap();
        log.finish().unwrap();

        let resolved: ExperimentConfig =
            serde_json::from_str(&fs::read_to_string(dir.join("config.json")).unwrap()).unwrap();
        assert_eq!(resolved.seed, 99);

        let evals = read_evals(&dir).unwrap();
        assert_eq!(evals.len(), 5);
        let bo: Vec<&EvalRecord> = evals.iter().filter(|e| e.robot == 20).collect();
        assert!(bo.iter().all(|e| e.theta.is_some()));
        let rl: Vec<&EvalRecord> = evals.iter().filter(|e| e.robot == 21).collect();
        // Best RL episode is index 1; only it keeps its snapshot.
        assert!(rl[0].theta.is_none());
        assert!(rl[1].theta.is_some());
        assert!(rl[2].theta.is_none());

        let robots = read_robots(&dir).unwrap();
        assert_eq!(robots.len(), 2);
        assert_eq!(robots[1].parent, Some(11));
        assert_eq!(robots[1].morph.len(), 25);

        let gens = fs::read_to_string(dir.join("generations.csv")).unwrap();
        assert!(gens.starts_with("generation,mean,q25,q75,max,min,before_mean\n"));
        assert_eq!(gens.lines().count(), 2);
    }

    #[test]
    fn log_all_snapshots_keeps_every_rl_theta() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            log_all_snapshots: true,
            ..ExperimentConfig::default()
        };
        let mut log = RunLog::create(tmp.path(), &cfg, 1).unwrap();
        let pop = vec![individual(5, LearnerKind::Rl, &[0.1, 0.2])];
        log.record_generation(&generation_stats(0, &pop), &pop).unwrap();
        log.finish().unwrap();
        assert!(read_evals(tmp.path())
            .unwrap()
            .iter()
            .all(|e| e.theta.is_some()));
    }
}
