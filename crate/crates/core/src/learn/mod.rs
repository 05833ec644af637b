//! Lifetime learning: the two inner loops that tune a robot's controller
//! within one generation, and the record type their results share.

pub mod bo;
pub mod gp;
pub mod lbfgsb;
pub mod nets;
pub mod rl;

use serde::{Deserialize, Serialize};

/// Box bounds of the controller parameter space searched by Bayesian
/// optimization and sampled for initial genotypes.
pub const PARAM_BOUND: f64 = 1.0;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Bo,
    Rl,
}

/// One evaluated controller: the parameter vector tried and the fitness it
/// earned. For Bayesian optimization this is one objective evaluation; for
/// reinforcement learning it is one episode, with `theta` the actor at the
/// episode's start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub index: usize,
    pub theta: Vec<f64>,
    pub f: f64,
    /// Whether `theta` came from the parent (seed re-evaluations under
    /// Lamarckian inheritance, the genotype seed under Darwinian).
    pub inherited: bool,
}

/// Complete log of one individual's learning: every evaluation in order.
/// This is the substrate of Lamarckian inheritance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerRecord {
    pub kind: LearnerKind,
    pub entries: Vec<EvalEntry>,
    /// Set when a numerical failure aborted learning; fitness becomes -inf.
    pub aborted: bool,
}

impl LearnerRecord {
    pub fn new(kind: LearnerKind) -> LearnerRecord {
        LearnerRecord {
            kind,
            entries: Vec::new(),
            aborted: false,
        }
    }

    /// Best entry by fitness; ties resolve to the earliest evaluation.
    pub fn best(&self) -> Option<&EvalEntry> {
        self.entries
            .iter()
            .reduce(|best, e| if e.f > best.f { e } else { best })
    }

    /// The individual's fitness: its best evaluation, -inf when learning
    /// aborted or never evaluated.
    pub fn fitness(&self) -> f64 {
        if self.aborted {
            return f64::NEG_INFINITY;
        }
        self.best().map_or(f64::NEG_INFINITY, |e| e.f)
    }

    /// The `n` best entries in descending fitness order; ties keep the
    /// earlier evaluation first. This is the Lamarckian bequest.
    pub fn top_n(&self, n: usize) -> Vec<&EvalEntry> {
        let mut sorted: Vec<&EvalEntry> = self.entries.iter().collect();
        sorted.sort_by(|a, b| b.f.partial_cmp(&a.f).unwrap().then(a.index.cmp(&b.index)));
        sorted.truncate(n);
        sorted
    }

    /// Best fitness among the first `n` entries (the seed evaluations),
    /// used as the before-learning fitness of BO individuals.
    pub fn best_of_first(&self, n: usize) -> f64 {
        self.entries
            .iter()
            .take(n)
            .map(|e| e.f)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}
