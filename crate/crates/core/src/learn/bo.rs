//! The Bayesian-optimization learning loop: seed evaluations, then
//! surrogate-guided acquisition until the evaluation budget is spent.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gp::{ucb_with_grad, Gp, Matern52};
use super::{lbfgsb, EvalEntry, LearnerKind, LearnerRecord, PARAM_BOUND};

/// Quasi-Newton settings for the acquisition ascent.
const QN_MEMORY: usize = 10;
const QN_MAX_ITERS: usize = 200;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoConfig {
    /// Total objective evaluations, seed evaluations included.
    pub budget: usize,
    /// UCB exploration weight.
    pub kappa: f64,
    /// Random seed vectors drawn alongside the genotype seed. Total seed
    /// count is this plus one.
    pub n_seed_random: usize,
    /// Acquisition ascent start points: the best training input plus
    /// `restarts - 1` uniform box samples.
    pub restarts: usize,
}

impl Default for BoConfig {
    fn default() -> BoConfig {
        BoConfig {
            budget: 50,
            kappa: 3.0,
            n_seed_random: 7,
            restarts: 8,
        }
    }
}

impl BoConfig {
    pub fn n_seeds(&self) -> usize {
        self.n_seed_random + 1
    }
}

/// Maximize the UCB acquisition over the search box. Each ascent result is
/// at least as good as its start point, so the returned proposal is never
/// worse than the incumbent best input.
pub fn propose_next(gp: &Gp, cfg: &BoConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let d = gp.dim();
    let mut best_val = f64::NEG_INFINITY;
    let mut best_x = gp.best_input().to_vec();
    for restart in 0..cfg.restarts.max(1) {
        let start = if restart == 0 {
            gp.best_input().to_vec()
        } else {
            (0..d)
                .map(|_| rng.gen_range(-PARAM_BOUND..=PARAM_BOUND))
                .collect()
        };
        let r = lbfgsb::maximize(
            |x| ucb_with_grad(gp, x, cfg.kappa),
            &start,
            -PARAM_BOUND,
            PARAM_BOUND,
            QN_MEMORY,
            QN_MAX_ITERS,
        );
        if r.value > best_val {
            best_val = r.value;
            best_x = r.x;
        }
    }
    best_x
}

/// Run the full BO loop. `seeds` are evaluated first, in order, each paired
/// with its inheritance flag; acquisition fills the rest of the budget.
/// Any evaluation error or surrogate failure aborts the record.
pub fn run_bo_learning<F, E>(
    mut evaluate: F,
    seeds: &[(Vec<f64>, bool)],
    cfg: &BoConfig,
    rng: &mut ChaCha8Rng,
) -> LearnerRecord
where
    F: FnMut(&[f64]) -> Result<f64, E>,
    E: std::fmt::Display,
{
    let mut rec = LearnerRecord::new(LearnerKind::Bo);

    for (theta, inherited) in seeds.iter().take(cfg.budget) {
        match evaluate(theta) {
            Ok(f) => rec.entries.push(EvalEntry {
                index: rec.entries.len(),
                theta: theta.clone(),
                f,
                inherited: *inherited,
            }),
            Err(e) => {
                log::warn!("seed evaluation failed: {e}");
                rec.aborted = true;
                return rec;
            }
        }
    }

    while rec.entries.len() < cfg.budget {
        let xs: Vec<Vec<f64>> = rec.entries.iter().map(|e| e.theta.clone()).collect();
        let ys: Vec<f64> = rec.entries.iter().map(|e| e.f).collect();
        let gp = match Gp::fit(&xs, &ys, Matern52::default()) {
            Ok(gp) => gp,
            Err(e) => {
                log::warn!("surrogate fit failed: {e}");
                rec.aborted = true;
                return rec;
            }
        };
        let theta = propose_next(&gp, cfg, rng);
        match evaluate(&theta) {
            Ok(f) => rec.entries.push(EvalEntry {
                index: rec.entries.len(),
                theta,
                f,
                inherited: false,
            }),
            Err(e) => {
                log::warn!("acquisition evaluation failed: {e}");
                rec.aborted = true;
                return rec;
            }
        }
    }
    rec
}
